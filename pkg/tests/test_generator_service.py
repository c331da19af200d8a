"""Tests for the synthetic benchmark generators."""
import numpy as np
import pytest

from conftest import assemble
from core.errors import ValidationError
from services.generator_service import GeneratorService


@pytest.fixture
def generator():
    return GeneratorService()


def test_ladder_dimensions(generator):
    system = assemble(generator.ladder(3, ports=1))
    assert system.N == 7
    assert (system.n, system.m) == (4, 3)
    assert system.port_names == ["P1"]


def test_mesh_dimensions(generator):
    for size in (2, 3, 5):
        system = assemble(generator.mesh(size, ports=4))
        assert system.N == 2 * size * size - size
        assert system.p == 4


def test_coupled_lines_dimensions(generator):
    system = assemble(generator.coupled_lines(3, 4, density=1.0))
    assert system.N == 3 * (1 + 3 * 4)
    assert system.p == 3


def test_same_seed_same_bytes(generator):
    for kind in ("ladder", "mesh", "coupled_lines"):
        a = generator.generate(kind, 4, ports=2, seed=11)
        b = generator.generate(kind, 4, ports=2, seed=11)
        assert a == b
        assert a != generator.generate(kind, 4, ports=2, seed=12)


def test_coupling_stays_positive_definite(generator):
    text = generator.coupled_lines(4, 10, density=0.3, seed=2)
    couplings = [float(line.split()[3]) for line in text.splitlines() if line.startswith("K")]
    assert couplings
    assert all(0 < k < 1 for k in couplings)
    system = assemble(text)
    M = system.C.toarray()[system.n:, system.n:]
    assert np.min(np.linalg.eigvalsh(M)) > 0


def test_zero_density_has_no_couplings(generator):
    text = generator.coupled_lines(3, 5, density=0.0)
    assert not any(line.startswith("K") for line in text.splitlines())


def test_every_node_has_shunt_capacitance(generator):
    system = assemble(generator.mesh(3, ports=2, seed=4))
    C = system.C.toarray()[:system.n, :system.n]
    assert np.all(np.diag(C) > 0)


def test_generated_systems_are_stable(generator):
    system = assemble(generator.ladder(6, ports=2, seed=3))
    G, C = system.G.toarray(), system.C.toarray()
    poles = np.linalg.eigvals(np.linalg.solve(C, G))
    assert np.max(poles.real) < 0


@pytest.mark.parametrize("call", [
    lambda g: g.ladder(0),
    lambda g: g.ladder(2, ports=5),
    lambda g: g.mesh(3, ports=5),
    lambda g: g.mesh(1, ports=2),
    lambda g: g.coupled_lines(0, 3),
    lambda g: g.coupled_lines(2, 3, density=1.5),
    lambda g: g.generate("star", 3),
])
def test_invalid_requests(generator, call):
    with pytest.raises(ValidationError):
        call(generator)
