"""Modified nodal analysis service for RLCk MOR.

Assembles the descriptor system ``C x' = G x + B u, y = L x`` with
``x = [v; i]`` (node voltages, inductive branch currents)::

    G = -[[Gn, E], [-E^T, 0]]     C = [[Cn, 0], [0, M]]
    B = [[B1], [0]]               L = [L1, 0]
"""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from core.errors import NumericalError, SingularMatrixError, ValidationError
from core.logger import Logger
from services.netlist_service import GROUND, Netlist, NetlistService
from utils.linalg import factorize
from utils.matrix_market import (check_finite, read_manifest, read_mtx,
                                 write_manifest, write_mtx)


@dataclass
class DescriptorSystem:
    """MNA matrices plus the naming needed to read them back."""
    G: sp.csc_matrix
    C: sp.csc_matrix
    B: np.ndarray
    L: np.ndarray
    n: int
    m: int
    port_names: List[str] = field(default_factory=list)
    output_names: List[str] = field(default_factory=list)
    node_names: List[str] = field(default_factory=list)
    branch_names: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.n + self.m

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.L.shape[0]

    def has_state_names(self) -> bool:
        return len(self.node_names) == self.n and len(self.branch_names) == self.m

    def state_names(self) -> List[str]:
        """Row labels: ``v(node)`` for node rows, ``i(branch)`` for inductor rows."""
        return [f"v({name})" for name in self.node_names] + [f"i({name})" for name in self.branch_names]


def _canonical_csc(rows: List[int], cols: List[int], vals: List[float], size: Tuple[int, int]) -> sp.csc_matrix:
    """Sum duplicate triplets in a fixed order so stamping is order independent."""
    if not vals:
        return sp.csc_matrix(size)
    order = np.lexsort((np.asarray(vals), np.asarray(cols), np.asarray(rows)))
    r = np.asarray(rows)[order]
    c = np.asarray(cols)[order]
    v = np.asarray(vals, dtype=float)[order]
    matrix = sp.coo_matrix((v, (r, c)), shape=size).tocsc()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return matrix


class MnaService:
    """Service building and conditioning descriptor systems."""

    def __init__(self):
        self.logger = Logger()

    def assemble_mna(self, netlist: Netlist) -> DescriptorSystem:
        """
        Stamp the MNA descriptor system of a validated netlist.

        Raises:
            ValidationError: netlist without ports
            NumericalError: inductance matrix M not positive definite
        """
        netlist.validate()
        ports = netlist.ports
        if not ports:
            raise ValidationError("netlist has no ports")

        node_index: Dict[str, int] = {name: i for i, name in enumerate(netlist.node_names)}
        inductors = netlist.inductors
        branch_index: Dict[str, int] = {l.branch_id.lower(): k for k, l in enumerate(inductors)}
        n = len(node_index)
        m = len(inductors)
        size = (n + m, n + m)

        g_rows, g_cols, g_vals = [], [], []
        c_rows, c_cols, c_vals = [], [], []

        def stamp_two_terminal(rows, cols, vals, a: str, b: str, value: float):
            ia = node_index.get(a)
            ib = node_index.get(b)
            for i, j, sign in ((ia, ia, 1.0), (ib, ib, 1.0), (ia, ib, -1.0), (ib, ia, -1.0)):
                if i is not None and j is not None:
                    rows.append(i)
                    cols.append(j)
                    vals.append(sign * value)

        # G holds -Gn in the node block
        for r in netlist.resistors:
            stamp_two_terminal(g_rows, g_cols, g_vals, r.node_a, r.node_b, -1.0 / r.ohms)
        for c in netlist.capacitors:
            stamp_two_terminal(c_rows, c_cols, c_vals, c.node_a, c.node_b, c.farads)

        for k, l in enumerate(inductors):
            col = n + k
            # G = -[[., E], [-E^T, .]]: E(a, k) = +1, E(b, k) = -1
            for node, sign in ((l.node_a, 1.0), (l.node_b, -1.0)):
                i = node_index.get(node)
                if i is None:
                    continue
                g_rows.extend([i, col])
                g_cols.extend([col, i])
                g_vals.extend([-sign, sign])
            c_rows.append(col)
            c_cols.append(col)
            c_vals.append(l.henries)

        for coupling in netlist.couplings:
            ki = branch_index[coupling.branch_i.lower()]
            kj = branch_index[coupling.branch_j.lower()]
            mutual = coupling.k * np.sqrt(inductors[ki].henries * inductors[kj].henries)
            c_rows.extend([n + ki, n + kj])
            c_cols.extend([n + kj, n + ki])
            c_vals.extend([mutual, mutual])

        G = _canonical_csc(g_rows, g_cols, g_vals, size)
        C = _canonical_csc(c_rows, c_cols, c_vals, size)

        if m:
            M = C[n:, n:].toarray()
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError as e:
                raise NumericalError("inductance matrix M is not positive definite "
                                     "(check mutual coupling coefficients)") from e

        inputs = [port for port in ports if port.direction in ("in", "inout")]
        outputs = [port for port in ports if port.direction in ("out", "inout")]
        if not inputs or not outputs:
            raise ValidationError("netlist needs at least one input and one output port")
        B = np.zeros((n + m, len(inputs)))
        for j, port in enumerate(inputs):
            B[node_index[port.node], j] = 1.0
        L = np.zeros((len(outputs), n + m))
        for i, port in enumerate(outputs):
            L[i, node_index[port.node]] = 1.0

        warnings = self.find_floating_nodes(netlist)
        for warning in warnings:
            self.logger.warning(warning)

        self.logger.info(f"Assembled MNA system: n={n}, m={m}, N={n + m}, p={B.shape[1]}, q={L.shape[0]}")
        return DescriptorSystem(
            G=G, C=C, B=B, L=L, n=n, m=m,
            port_names=[port.name for port in inputs],
            output_names=[port.name for port in outputs],
            node_names=list(netlist.node_names),
            branch_names=[l.branch_id for l in inductors],
            warnings=warnings,
        )

    @staticmethod
    def find_floating_nodes(netlist: Netlist) -> List[str]:
        """Nodes with no path of any element to ground, as warning strings."""
        parent = {name: name for name in netlist.node_names}
        parent[GROUND] = GROUND

        def find(x: str) -> str:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for element in netlist.resistors + netlist.capacitors + netlist.inductors:
            ra, rb = find(element.node_a), find(element.node_b)
            if ra != rb:
                parent[ra] = rb

        ground_root = find(GROUND)
        return [f"floating node {name!r}: no path to ground"
                for name in netlist.node_names if find(name) != ground_root]

    def regularize(self, system: DescriptorSystem, c_min: float = 1e-18) -> DescriptorSystem:
        """
        Add ``c_min`` to each zero row of Cn so that C becomes nonsingular.

        Raises:
            ValidationError: c_min < 0
            SingularMatrixError: C still singular afterwards
        """
        if c_min < 0:
            raise ValidationError(f"c_min must be >= 0, got {c_min}")
        n = system.n
        C = system.C.tocsc()
        row_abs = np.asarray(abs(C).sum(axis=1)).ravel()[:n]
        empty_rows = [int(i) for i in np.flatnonzero(row_abs == 0)]

        if empty_rows and c_min > 0:
            patch = sp.csc_matrix(
                (np.full(len(empty_rows), c_min), (empty_rows, empty_rows)), shape=C.shape
            )
            C = (C + patch).tocsc()
            C.sort_indices()
            names = [system.node_names[i] for i in empty_rows] if system.node_names else empty_rows
            self.logger.warning(f"Regularized {len(empty_rows)} capacitance-free node(s) with {c_min:g} F: {names}")
            result = replace(system, C=C)
        else:
            result = system

        try:
            factorize(result.C, "C")
        except SingularMatrixError as e:
            raise SingularMatrixError(f"C is singular after regularization with c_min={c_min:g}: {e}",
                                      operator="C") from e
        return result

    def load_system(self, path: str, c_min: Optional[float] = None) -> DescriptorSystem:
        """
        Load a model from a netlist file or a Matrix Market bundle directory.

        Args:
            path: netlist file or bundle directory
            c_min: regularization capacitance; ``None`` skips regularization
        """
        source = Path(path).expanduser()
        if not source.exists():
            raise ValidationError(f"input not found: {source}")
        if source.is_dir():
            system = self.read_matrix_bundle(str(source))
            self.logger.info(f"Loaded matrix bundle {source}: N={system.N}, p={system.p}, q={system.q}")
        else:
            netlist = NetlistService().read_netlist(str(source))
            system = self.assemble_mna(netlist)
        if c_min is not None:
            system = self.regularize(system, c_min)
        return system

    def read_matrix_bundle(self, bundle_dir: str) -> DescriptorSystem:
        """
        Read G/C/B/L Matrix Market files plus ``manifest.yaml``.

        The manifest gives ``n``, ``m`` and ``port_names`` (optionally
        ``output_names``, ``node_names``, ``branch_names``).
        """
        manifest = read_manifest(bundle_dir)
        try:
            n = int(manifest["n"])
            m = int(manifest.get("m", 0))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"manifest in {bundle_dir} needs integer n and m") from e

        folder = Path(bundle_dir)
        G = read_mtx(str(folder / "G.mtx"))
        C = read_mtx(str(folder / "C.mtx"))
        B = read_mtx(str(folder / "B.mtx"), dense=True)
        L = read_mtx(str(folder / "L.mtx"), dense=True)
        for name, matrix in (("G", G), ("C", C), ("B", B), ("L", L)):
            check_finite(name, matrix)

        N = n + m
        if G.shape != (N, N) or C.shape != (N, N):
            raise ValidationError(f"G {G.shape} and C {C.shape} must be {N}x{N} (n={n}, m={m})")
        if B.shape[0] != N or L.shape[1] != N:
            raise ValidationError(f"B {B.shape} must have {N} rows and L {L.shape} {N} columns")

        port_names = [str(name) for name in manifest.get("port_names") or []]
        if not port_names:
            port_names = [f"P{j + 1}" for j in range(B.shape[1])]
        if len(port_names) != B.shape[1]:
            raise ValidationError(f"manifest lists {len(port_names)} ports but B has {B.shape[1]} columns")
        output_names = [str(name) for name in manifest.get("output_names") or []]
        if not output_names:
            output_names = port_names if L.shape[0] == B.shape[1] else [f"Y{i + 1}" for i in range(L.shape[0])]
        if len(output_names) != L.shape[0]:
            raise ValidationError(f"manifest lists {len(output_names)} outputs but L has {L.shape[0]} rows")

        return DescriptorSystem(
            G=G, C=C, B=B, L=L, n=n, m=m,
            port_names=port_names,
            output_names=output_names,
            node_names=[str(x) for x in manifest.get("node_names") or []],
            branch_names=[str(x) for x in manifest.get("branch_names") or []],
        )

    def write_matrix_bundle(self, system: DescriptorSystem, bundle_dir: str) -> Path:
        """Write a descriptor system as a Matrix Market bundle."""
        folder = Path(bundle_dir).expanduser()
        folder.mkdir(parents=True, exist_ok=True)
        write_mtx(str(folder / "G.mtx"), system.G)
        write_mtx(str(folder / "C.mtx"), system.C)
        write_mtx(str(folder / "B.mtx"), system.B)
        write_mtx(str(folder / "L.mtx"), system.L)
        write_manifest(str(folder), {
            "n": system.n,
            "m": system.m,
            "port_names": list(system.port_names),
            "output_names": list(system.output_names),
            "node_names": list(system.node_names),
            "branch_names": list(system.branch_names),
            "state_names": system.state_names() if system.has_state_names() else [],
        })
        self.logger.info(f"Wrote matrix bundle: {folder}")
        return folder
