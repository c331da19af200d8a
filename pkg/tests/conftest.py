"""Shared fixtures for the RLCk MOR test suite."""
import os
import tempfile

# before the Logger singleton is created anywhere
os.environ.setdefault("RLCK_MOR_LOG_DIR", tempfile.mkdtemp(prefix="rlck_mor_logs_"))

from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from services.generator_service import GeneratorService
from services.mna_service import DescriptorSystem, MnaService
from services.netlist_service import NetlistService


DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "netlists"

SCALAR_NETLIST = """* unit RC: H(s) = 1 / (s + 1)
R1 a 0 1
C1 a 0 1
P1 port a
.end
"""


def assemble(text: str) -> DescriptorSystem:
    return MnaService().assemble_mna(NetlistService().parse_netlist(text))


def kron_lyapunov(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Brute-force ``A X + X A^T = -W`` through the Kronecker form."""
    k = a.shape[0]
    eye = np.eye(k)
    operator = np.kron(eye, a) + np.kron(a, eye)
    x = np.linalg.solve(operator, -w.reshape(-1, order='F'))
    return x.reshape((k, k), order='F')


def random_stable_matrix(rng: np.random.Generator, k: int) -> np.ndarray:
    a = rng.standard_normal((k, k))
    shift = np.max(np.linalg.eigvals(a).real) + rng.uniform(0.1, 1.0)
    return a - shift * np.eye(k)


def matrix_system(G, C, B, L) -> DescriptorSystem:
    """Descriptor system straight from matrices (n = N, m = 0)."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    G = sp.csc_matrix(np.atleast_2d(np.asarray(G, dtype=float)))
    return DescriptorSystem(
        G=G, C=sp.csc_matrix(np.atleast_2d(np.asarray(C, dtype=float))), B=B, L=L,
        n=G.shape[0], m=0,
        port_names=[f"P{j + 1}" for j in range(B.shape[1])],
        output_names=[f"P{i + 1}" for i in range(L.shape[0])],
    )


@pytest.fixture
def scalar_system() -> DescriptorSystem:
    return assemble(SCALAR_NETLIST)


@pytest.fixture
def scalar_netlist_path(tmp_path) -> Path:
    path = tmp_path / "scalar.sp"
    path.write_text(SCALAR_NETLIST)
    return path


@pytest.fixture
def tank_system() -> DescriptorSystem:
    return assemble((DATA_DIR / "rlc_tank.sp").read_text())


@pytest.fixture
def coupled_pair_system() -> DescriptorSystem:
    return assemble((DATA_DIR / "coupled_pair.sp").read_text())


@pytest.fixture
def generated_system():
    """Builder: ``generated_system(kind, size, ports=1, seed=0)``."""
    generator = GeneratorService()

    def build(kind: str, size: int, ports: int = 1, seed: int = 0, density: float = 0.3) -> DescriptorSystem:
        return assemble(generator.generate(kind, size, ports=ports, seed=seed, density=density))

    return build


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
