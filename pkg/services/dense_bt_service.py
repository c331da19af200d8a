"""Dense balanced truncation service for RLCk MOR.

Reference square-root balanced truncation: dense Gramians by Bartels-Stewart,
Hankel singular values from the SVD of ``ZQ^T ZP``, truncation with the
a-priori bound ``2 * sum(sigma_{r+1:})``. Serves both as a reducer for small
models and as the oracle the low-rank method is checked against.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from core.errors import RankError, StabilityError, ValidationError
from core.logger import Logger
from services.mna_service import DescriptorSystem
from utils.linalg import factorize, solve_lyapunov_dense, svd
from utils.matrix_market import read_manifest, read_mtx, write_manifest, write_mtx


RANK_TOL = 1e-12
STABILITY_TOL = 1e-12
DENSE_ORDER_CEILING = 2000


@dataclass
class GramianPair:
    P: np.ndarray
    Q: np.ndarray


@dataclass
class HsvSpectrum:
    """Hankel singular values, descending."""
    sigmas: np.ndarray

    def __len__(self) -> int:
        return len(self.sigmas)

    def numerical_rank(self) -> int:
        if not len(self.sigmas) or self.sigmas[0] <= 0:
            return 0
        return int(np.count_nonzero(self.sigmas > RANK_TOL * self.sigmas[0]))


@dataclass(frozen=True)
class OrderRequest:
    """Either a fixed ROM order or a relative HSV-tail target."""
    kind: str
    value: float

    @classmethod
    def fixed_r(cls, r: int) -> "OrderRequest":
        return cls("fixed_r", int(r))

    @classmethod
    def target_error(cls, epsilon: float) -> "OrderRequest":
        return cls("target_error", float(epsilon))


@dataclass
class Rom:
    """Reduced quadruple ``(G~, C~, B~, L~)`` with its error certificate."""
    G: np.ndarray
    C: np.ndarray
    B: np.ndarray
    L: np.ndarray
    retained_hsvs: np.ndarray
    apriori_bound: float
    provenance: str = "dense"
    iterations: int = 0
    hsvs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    port_names: List[str] = field(default_factory=list)
    output_names: List[str] = field(default_factory=list)

    @property
    def r(self) -> int:
        return self.G.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.L.shape[0]

    def as_descriptor(self) -> DescriptorSystem:
        """View the ROM as an r-state descriptor system (n = r, m = 0)."""
        return DescriptorSystem(
            G=sp.csc_matrix(self.G), C=sp.csc_matrix(self.C),
            B=np.array(self.B), L=np.array(self.L), n=self.r, m=0,
            port_names=list(self.port_names), output_names=list(self.output_names),
        )


def gramian_factor(gramian: np.ndarray) -> np.ndarray:
    """Square root ``Z = U sqrt(Sigma)`` of a symmetric PSD Gramian via its SVD."""
    result = svd(gramian)
    keep = result.sigma > 0
    return result.u[:, keep] * np.sqrt(result.sigma[keep])


def tail_bounds(hsv: HsvSpectrum) -> np.ndarray:
    """``2 * sum_{i>r} sigma_i`` for r = 0 .. len(hsv)."""
    sigmas = np.asarray(hsv.sigmas, dtype=float)
    tails = np.concatenate([np.cumsum(sigmas[::-1])[::-1], [0.0]])
    return 2.0 * tails


class DenseBtService:
    """Service for dense (reference) balanced truncation."""

    def __init__(self, max_order: int = DENSE_ORDER_CEILING):
        self.logger = Logger()
        self.max_order = max_order

    def system_operators(self, system: DescriptorSystem) -> Tuple[np.ndarray, np.ndarray]:
        """Dense ``A = C^-1 G`` and ``B_C = C^-1 B``."""
        c_factor = factorize(system.C, "C")
        G = system.G.toarray() if sp.issparse(system.G) else np.asarray(system.G)
        return c_factor.solve(G), c_factor.solve(system.B)

    def check_stability(self, a: np.ndarray):
        """Raise StabilityError unless every eigenvalue has Re < -1e-12 ||A||."""
        eigenvalues = sla.eigvals(a)
        threshold = -STABILITY_TOL * np.linalg.norm(a, 2)
        offending = eigenvalues[eigenvalues.real >= threshold]
        if offending.size:
            shown = ", ".join(f"{z:.4g}" for z in offending[:10])
            raise StabilityError(
                f"system is not asymptotically stable: {offending.size} eigenvalue(s) of C^-1 G "
                f"with real part >= {threshold:.3e}: {shown}",
                eigenvalues=offending,
            )

    def solve_gramians_dense(self, system: DescriptorSystem) -> GramianPair:
        """
        Controllability and observability Gramians of ``(C^-1 G, C^-1 B, L)``.

        Raises:
            ValidationError: N above the dense ceiling
            SingularMatrixError: C singular
            StabilityError: C^-1 G not asymptotically stable
        """
        if system.N > self.max_order:
            raise ValidationError(
                f"N={system.N} exceeds the dense path ceiling of {self.max_order}; use method=eksm"
            )
        a, b_c = self.system_operators(system)
        self.check_stability(a)
        P = solve_lyapunov_dense(a, b_c @ b_c.T)
        Q = solve_lyapunov_dense(a.T, system.L.T @ system.L)
        self.logger.info(f"Solved dense Gramians for N={system.N}")
        return GramianPair(P=P, Q=Q)

    def hankel_singular_values(self, gramians: GramianPair) -> HsvSpectrum:
        """HSVs by the square-root method: singular values of ``ZQ^T ZP``."""
        zp = gramian_factor(gramians.P)
        zq = gramian_factor(gramians.Q)
        return self.hsv_from_factors(zp, zq)

    @staticmethod
    def hsv_from_factors(zp: np.ndarray, zq: np.ndarray) -> HsvSpectrum:
        """Singular values of ``ZQ^T ZP`` above the numerical rank threshold."""
        if zp.shape[1] == 0 or zq.shape[1] == 0:
            return HsvSpectrum(np.zeros(0))
        sigmas = svd(zq.T @ zp).sigma
        if not sigmas.size or sigmas[0] <= 0:
            return HsvSpectrum(np.zeros(0))
        return HsvSpectrum(sigmas[sigmas > RANK_TOL * sigmas[0]])

    @staticmethod
    def choose_order(hsv: HsvSpectrum, request: OrderRequest) -> int:
        """
        ROM order for a fixed size or a relative HSV-tail target.

        ``target_error`` picks the smallest r with tail/total <= epsilon.
        """
        if len(hsv) == 0:
            raise ValidationError("empty HSV spectrum")
        if request.kind == "fixed_r":
            if request.value < 1:
                raise ValidationError(f"ROM order must be >= 1, got {request.value}")
            return int(min(request.value, len(hsv)))
        if request.kind != "target_error":
            raise ValidationError(f"unknown order request {request.kind!r}")
        if request.value <= 0:
            raise ValidationError(f"target_error must be > 0, got {request.value}")

        sigmas = np.asarray(hsv.sigmas, dtype=float)
        total = float(np.sum(sigmas))
        if total <= 0:
            return 1
        tails = tail_bounds(hsv)[1:] / 2.0
        for r, tail in enumerate(tails, start=1):
            if tail / total <= request.value:
                return r
        return len(sigmas)

    def balance_truncate(self, system: DescriptorSystem, zp: np.ndarray, zq: np.ndarray,
                         r: int, provenance: str = "dense", iterations: int = 0) -> Rom:
        """
        Square-root balancing and truncation to order r.

        ``T = S^-1/2 U^T ZQ^T`` and ``T^-1 = ZP V S^-1/2``; the Gramians belong
        to ``C^-1 G`` so the ROM is ``(T C^-1 G T^-1, I, T C^-1 B, L T^-1)``.

        Raises:
            RankError: r above the numerical rank of ``ZQ^T ZP``
        """
        result = svd(zq.T @ zp)
        hsv = HsvSpectrum(result.sigma)
        rank = hsv.numerical_rank()
        if r < 1:
            raise ValidationError(f"ROM order must be >= 1, got {r}")
        if r > rank:
            raise RankError(
                f"requested order r={r} exceeds numerical rank {rank} of ZQ^T ZP; use r <= {rank}",
                max_order=rank,
            )

        scale = 1.0 / np.sqrt(result.sigma[:r])
        T = (result.u[:, :r] * scale).T @ zq.T
        T_inv = zp @ (result.v[:, :r] * scale)

        c_factor = factorize(system.C, "C")
        left = c_factor.solve(T.T, transpose=True).T
        G_r = left @ (system.G @ T_inv)
        B_r = left @ system.B
        L_r = system.L @ T_inv
        C_r = T @ T_inv

        identity_error = np.linalg.norm(C_r - np.eye(r))
        if identity_error > 1e-8:
            self.logger.warning(f"T T^-1 deviates from I_{r} by {identity_error:.2e}")

        tails = tail_bounds(hsv)
        rom = Rom(
            G=np.asarray(G_r), C=C_r, B=np.asarray(B_r), L=np.asarray(L_r),
            retained_hsvs=result.sigma[:r].copy(),
            apriori_bound=float(tails[r]),
            provenance=provenance,
            iterations=iterations,
            hsvs=result.sigma.copy(),
            port_names=list(system.port_names),
            output_names=list(system.output_names),
        )
        self.logger.debug(f"Balanced truncation to r={r}, a-priori bound {rom.apriori_bound:.3e}")
        return rom

    def reduce_dense(self, system: DescriptorSystem, request: OrderRequest) -> Rom:
        """Algorithm-1 style reduction end to end."""
        gramians = self.solve_gramians_dense(system)
        zp = gramian_factor(gramians.P)
        zq = gramian_factor(gramians.Q)
        hsv = self.hsv_from_factors(zp, zq)
        r = self.choose_order(hsv, request)
        if request.kind == "target_error":
            r = max(1, min(r, hsv.numerical_rank()))
        rom = self.balance_truncate(system, zp, zq, r, provenance="dense")
        self.logger.info(f"Dense BT: N={system.N} -> r={rom.r}, bound={rom.apriori_bound:.3e}")
        return rom

    def rom_gramians(self, rom: Rom) -> GramianPair:
        """Gramians of a ROM, recomputed with the dense path."""
        return self.solve_gramians_dense(rom.as_descriptor())

    def write_rom_bundle(self, rom: Rom, bundle_dir: str) -> Path:
        """Export a ROM as Matrix Market files plus manifest."""
        folder = Path(bundle_dir).expanduser()
        folder.mkdir(parents=True, exist_ok=True)
        for name, matrix in (("G", rom.G), ("C", rom.C), ("B", rom.B), ("L", rom.L)):
            write_mtx(str(folder / f"{name}.mtx"), matrix)
        write_manifest(str(folder), {
            "kind": "rom",
            "n": rom.r,
            "m": 0,
            "r": rom.r,
            "p": rom.p,
            "q": rom.q,
            "retained_hsvs": [float(x) for x in rom.retained_hsvs],
            "apriori_bound": float(rom.apriori_bound),
            "provenance": rom.provenance,
            "iterations": int(rom.iterations),
            "port_names": list(rom.port_names),
            "output_names": list(rom.output_names),
        })
        self.logger.info(f"Wrote ROM bundle (r={rom.r}): {folder}")
        return folder

    def read_rom_bundle(self, bundle_dir: str) -> Rom:
        """Read a ROM bundle written by ``write_rom_bundle``."""
        manifest = read_manifest(bundle_dir)
        if manifest.get("kind") != "rom":
            raise ValidationError(f"{bundle_dir} is not a ROM bundle")
        folder = Path(bundle_dir)
        matrices = {name: read_mtx(str(folder / f"{name}.mtx"), dense=True) for name in ("G", "C", "B", "L")}
        retained = np.asarray(manifest.get("retained_hsvs") or [], dtype=float)
        return Rom(
            G=matrices["G"], C=matrices["C"], B=matrices["B"], L=matrices["L"],
            retained_hsvs=retained,
            apriori_bound=float(manifest.get("apriori_bound", 0.0)),
            provenance=str(manifest.get("provenance", "dense")),
            iterations=int(manifest.get("iterations", 0)),
            hsvs=retained,
            port_names=[str(x) for x in manifest.get("port_names") or []],
            output_names=[str(x) for x in manifest.get("output_names") or []],
        )
