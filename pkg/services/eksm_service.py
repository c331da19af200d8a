"""Extended Krylov subspace (EKSM) balanced truncation service for RLCk MOR.

Both Gramians of ``A = C^-1 G`` are approximated by Galerkin projection onto
extended Krylov subspaces ``span{b, A b, A^-1 b, A^2 b, A^-2 b, ...}``. The
two subspaces grow in lockstep; after every pass a probe ROM is balanced from
the current low-rank factors and its transfer function, sampled on the
frequency grid, decides convergence.

Only linear solves with C and G are used; ``A`` itself is never formed.
"""
import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from core.errors import EmptyBasisError, NumericalError, StabilityError, ValidationError
from core.logger import Logger
from core.settings import RunConfig, get_thread_count
from services.dense_bt_service import DenseBtService, OrderRequest, Rom
from services.frequency_service import FrequencyGrid, FrequencyService
from services.mna_service import DescriptorSystem
from utils.linalg import Factorization, factorize, orth, orth_against, solve_lyapunov_dense


CONTROLLABILITY = "controllability"
OBSERVABILITY = "observability"
REQUIRED_STREAK = 3
FACTOR_TOL = 1e-12
INDEFINITE_TOL = 1e-8
STABILITY_MARGIN = 1e-12
STOP_REASONS = ("three_below_tol", "maxiter", "basis_cap", "stagnation")


@dataclass
class SideOperators:
    """Action of ``A_side``, its inverse and the right-hand side of one Lyapunov equation."""
    side: str
    apply: Callable[[np.ndarray], np.ndarray]
    apply_inv: Callable[[np.ndarray], np.ndarray]
    rhs: np.ndarray


@dataclass
class EksState:
    """Orthonormal extended Krylov basis of one side plus its newest blocks."""
    operators: SideOperators
    K: np.ndarray
    forward: np.ndarray
    inverse: np.ndarray
    j: int = 1
    applied: Optional[np.ndarray] = None
    stagnant: bool = False

    @property
    def side(self) -> str:
        return self.operators.side

    @property
    def width(self) -> int:
        return self.K.shape[1]


@dataclass
class LowRankFactor:
    """``Z`` with ``Z Z^T`` approximating one Gramian."""
    Z: np.ndarray
    side: str

    @property
    def rank(self) -> int:
        return self.Z.shape[1]


@dataclass
class TraceRecord:
    j: int
    basis_p: int
    basis_q: int
    criterion: float
    probe_r: int


@dataclass
class PassResult:
    """One pass: its ROM, criterion and the factors it was balanced from."""
    rom: Rom
    criterion: float
    factor_p: LowRankFactor
    factor_q: LowRankFactor
    j: int
    stable: bool = True


@dataclass
class ConvergenceTrace:
    """Per-pass history of an EKSM run."""
    tol: float
    records: List[TraceRecord] = field(default_factory=list)
    stop_reason: Optional[str] = None

    def record(self, j: int, basis_p: int, basis_q: int, criterion: float, probe_r: int):
        if self.records and j <= self.records[-1].j:
            raise ValidationError(f"trace records must increase in j, got {j} after {self.records[-1].j}")
        if criterion < 0:
            raise ValidationError(f"criterion must be >= 0, got {criterion}")
        self.records.append(TraceRecord(j, basis_p, basis_q, float(criterion), probe_r))

    def below_tol_streak(self, tol: Optional[float] = None) -> int:
        """Number of trailing records with criterion strictly below tol."""
        tol = self.tol if tol is None else tol
        streak = 0
        for rec in reversed(self.records):
            if not rec.criterion < tol:
                break
            streak += 1
        return streak

    def converged(self) -> bool:
        return self.below_tol_streak() >= REQUIRED_STREAK

    @property
    def iterations(self) -> int:
        return self.records[-1].j if self.records else 0

    @property
    def peak_basis_p(self) -> int:
        return max((rec.basis_p for rec in self.records), default=0)

    @property
    def peak_basis_q(self) -> int:
        return max((rec.basis_q for rec in self.records), default=0)


@dataclass
class EksmConfig:
    """
    Parameters of one EKSM reduction; tol = 0 forces a maxiter run.

    ``f_max = None`` asks for twice the dominant resonance of the model,
    filled in when a reduction starts.
    """
    tol: float = 1e-2
    target_error: float = 1e-2
    f_min: float = 1e8
    f_max: Optional[float] = None
    points: int = 20
    spacing: str = "linear"
    maxiter: int = 50
    basis_cap: int = 2000

    def validate(self) -> "EksmConfig":
        if self.tol < 0:
            raise ValidationError(f"tol must be >= 0, got {self.tol}")
        if self.target_error <= 0:
            raise ValidationError(f"target_error must be > 0, got {self.target_error}")
        if self.maxiter < 1:
            raise ValidationError(f"maxiter must be >= 1, got {self.maxiter}")
        if self.basis_cap < 1:
            raise ValidationError(f"basis_cap must be >= 1, got {self.basis_cap}")
        if not self.f_min > 0:
            raise ValidationError(f"f_min must be > 0, got {self.f_min}")
        if self.f_max is not None:
            self.grid()
        return self

    def grid(self) -> FrequencyGrid:
        if self.f_max is None:
            raise ValidationError("f_max is automatic and has not been resolved against a model yet")
        return FrequencyGrid(self.f_min, self.f_max, self.points, self.spacing)

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "EksmConfig":
        return cls(tol=config.tol, target_error=config.target_error,
                   f_min=config.f_min, f_max=None if config.f_max_auto else config.f_max,
                   points=config.points, spacing=config.spacing, maxiter=config.maxiter,
                   basis_cap=config.basis_cap)


def convergence_criterion(current: np.ndarray, previous: Optional[np.ndarray]) -> float:
    """
    ``max_i ||H_j(s_i) - H_{j-1}(s_i)||_2 / ||H_j(s_i)||_2``.

    Returns +inf without a previous sample set.
    """
    if previous is None:
        return float("inf")
    worst = 0.0
    for now, before in zip(current, previous):
        diff = np.linalg.norm(now - before, 2)
        if diff == 0.0:
            continue
        scale = np.linalg.norm(now, 2)
        worst = max(worst, diff / scale if scale > 0 else float("inf"))
    return float(worst)


def write_trace_csv(trace: ConvergenceTrace) -> str:
    """CSV with columns ``j, basis_p, basis_q, criterion, probe_r``."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["j", "basis_p", "basis_q", "criterion", "probe_r"])
    for rec in trace.records:
        writer.writerow([rec.j, rec.basis_p, rec.basis_q, format(rec.criterion, '.17g'), rec.probe_r])
    return buffer.getvalue()


class EksmService:
    """Service for low-rank Gramians and balanced truncation by EKSM."""

    def __init__(self):
        self.logger = Logger()
        self.bt = DenseBtService()
        self.frequency = FrequencyService()

    def side_operators(self, system: DescriptorSystem, c_factor: Factorization,
                       g_factor: Factorization, side: str) -> SideOperators:
        """
        Operators of one side as linear solves.

        Controllability uses ``A = C^-1 G`` with rhs ``C^-1 B``; observability
        uses ``A^T = G^T C^-T`` with rhs ``L^T``.
        """
        G, C = system.G, system.C
        if side == CONTROLLABILITY:
            return SideOperators(
                side=side,
                apply=lambda X: c_factor.solve(G @ X),
                apply_inv=lambda X: g_factor.solve(C @ X),
                rhs=c_factor.solve(np.asarray(system.B, dtype=float)),
            )
        if side == OBSERVABILITY:
            return SideOperators(
                side=side,
                apply=lambda X: G.T @ c_factor.solve(X, transpose=True),
                apply_inv=lambda X: C.T @ g_factor.solve(X, transpose=True),
                rhs=np.asarray(system.L, dtype=float).T.copy(),
            )
        raise ValidationError(f"unknown Gramian side {side!r}")

    def eks_init(self, operators: SideOperators) -> EksState:
        """
        Orthonormal basis of ``[b, A^-1 b]``.

        Raises:
            EmptyBasisError: the right-hand side is zero
        """
        forward = orth(operators.rhs)
        inverse = orth_against(operators.apply_inv(operators.rhs), forward)
        K = np.hstack([forward, inverse])
        self.logger.debug(f"EKS init ({operators.side}): width {K.shape[1]}")
        return EksState(operators=operators, K=K, forward=forward, inverse=inverse, j=1,
                        applied=np.zeros((K.shape[0], 0)))

    def eks_expand(self, state: EksState, cap: Optional[int] = None) -> EksState:
        """
        Append ``A`` applied to the newest forward columns and ``A^-1`` applied
        to the newest inverse columns, orthonormalized against the basis.

        At most ``cap - width`` columns are added. When both newest blocks
        deflate away, the whole basis is mapped once more; only if that adds
        nothing either is the subspace invariant and the state stagnant.
        """
        size = state.K.shape[0]
        if state.width >= size:
            state.stagnant = True
        limit = size if cap is None else min(cap, size)
        room = limit - state.width
        if state.stagnant or room <= 0:
            state.j += 1
            return state

        ops = state.operators
        forward, inverse = self._next_blocks(ops, state.K, state.forward, state.inverse, room)
        if forward.shape[1] + inverse.shape[1] == 0:
            forward, inverse = self._next_blocks(ops, state.K, state.K, state.K, room)

        added = forward.shape[1] + inverse.shape[1]
        state.stagnant = added == 0
        state.K = np.hstack([state.K, forward, inverse])
        state.forward = forward
        state.inverse = inverse
        state.j += 1
        self.logger.debug(f"EKS expand ({ops.side}) j={state.j}: +{added} -> width {state.width}")
        return state

    @staticmethod
    def _next_blocks(ops: SideOperators, K: np.ndarray, forward: np.ndarray, inverse: np.ndarray,
                     room: int) -> Tuple[np.ndarray, np.ndarray]:
        size = K.shape[0]
        new_forward = np.zeros((size, 0))
        if forward.shape[1]:
            new_forward = orth_against(ops.apply(forward), K)[:, :room]
        new_inverse = np.zeros((size, 0))
        if inverse.shape[1] and room > new_forward.shape[1]:
            new_inverse = orth_against(ops.apply_inv(inverse), np.hstack([K, new_forward]))
            new_inverse = new_inverse[:, :room - new_forward.shape[1]]
        return new_forward, new_inverse

    def project_and_solve(self, state: EksState) -> np.ndarray:
        """
        Solve the projected Lyapunov equation ``A_k X + X A_k^T = -R R^T`` with
        ``A_k = K^T A K`` and ``R = K^T b``.
        """
        if state.width == 0:
            raise EmptyBasisError(f"{state.side} basis is empty")
        done = state.applied.shape[1] if state.applied is not None else 0
        if done < state.width:
            fresh = state.operators.apply(state.K[:, done:])
            state.applied = fresh if not done else np.hstack([state.applied, fresh])
        projected = state.K.T @ state.applied
        R = state.K.T @ state.operators.rhs
        return solve_lyapunov_dense(projected, R @ R.T)

    def low_rank_factor(self, state: EksState, X: np.ndarray) -> LowRankFactor:
        """
        Back-projection ``Z = K U Sigma^1/2`` of the small solution X.

        Negative eigenvalues of X are dropped. On a full-width basis an
        indefinite X means the model itself is unstable.

        Raises:
            StabilityError: X indefinite with K spanning the whole state space
        """
        values, vectors = sla.eigh(0.5 * (X + X.T))
        order = np.argsort(values)[::-1]
        values = values[order]
        vectors = vectors[:, order]
        magnitude = float(np.max(np.abs(values))) if values.size else 0.0
        if values.size and values[-1] < -INDEFINITE_TOL * magnitude:
            if state.width >= state.K.shape[0]:
                raise StabilityError(
                    f"{state.side} Gramian is indefinite on the full state space; "
                    f"the model is not asymptotically stable (eigenvalue {values[-1]:.3e})")
            self.logger.warning(f"projected {state.side} Gramian is indefinite at width {state.width}; "
                                f"dropping {int(np.sum(values < 0))} negative direction(s)")
        top = values[0] if values.size else 0.0
        keep = values > FACTOR_TOL * top if top > 0 else np.zeros(values.shape, dtype=bool)
        Z = state.K @ (vectors[:, keep] * np.sqrt(values[keep]))
        return LowRankFactor(Z=Z, side=state.side)

    def probe_rom(self, factor_p: LowRankFactor, factor_q: LowRankFactor, system: DescriptorSystem,
                  grid: FrequencyGrid, target_error: float, previous: Optional[np.ndarray] = None,
                  iterations: int = 0) -> Tuple[Rom, float, np.ndarray]:
        """
        Balance the current factors, sample the probe ROM and compare with the
        previous pass.

        Returns:
            (probe ROM, criterion, sampled transfer function)
        """
        hsv = self.bt.hsv_from_factors(factor_p.Z, factor_q.Z)
        rank = hsv.numerical_rank()
        if rank == 0:
            raise NumericalError("low-rank Gramian factors have no common numerical rank")
        r = self.bt.choose_order(hsv, OrderRequest.target_error(target_error))
        r = max(1, min(r, rank))
        rom = self.bt.balance_truncate(system, factor_p.Z, factor_q.Z, r,
                                       provenance="eksm", iterations=iterations)
        samples = self.frequency.evaluate_tf(rom, grid).samples
        return rom, convergence_criterion(samples, previous), samples

    def _solve_sides(self, states: List[EksState]) -> List[LowRankFactor]:
        def work(state: EksState) -> LowRankFactor:
            return self.low_rank_factor(state, self.project_and_solve(state))

        if get_thread_count() > 1:
            with ThreadPoolExecutor(max_workers=2) as pool:
                return list(pool.map(work, states))
        return [work(state) for state in states]

    def _run(self, system: DescriptorSystem, config: EksmConfig
             ) -> Tuple[LowRankFactor, LowRankFactor, Rom, ConvergenceTrace]:
        config.validate()
        if config.f_max is None:
            config.f_max = self.frequency.auto_f_max(system, config.f_min)
        grid = config.grid()
        cap = min(config.basis_cap, system.N)

        c_factor = factorize(system.C, "C")
        g_factor = factorize(system.G, "G")
        states = [self.eks_init(self.side_operators(system, c_factor, g_factor, side))
                  for side in (CONTROLLABILITY, OBSERVABILITY)]
        for state in states:
            if state.width > cap:
                state.K = state.K[:, :cap]
                state.inverse = state.inverse[:, :max(0, cap - state.forward.shape[1])]
                state.forward = state.forward[:, :cap]

        trace = ConvergenceTrace(tol=config.tol)
        previous = None
        last: Optional[PassResult] = None
        best: Optional[PassResult] = None
        for j in range(1, config.maxiter + 1):
            if j > 1:
                widths = [state.width for state in states]
                for state in states:
                    self.eks_expand(state, cap)
                if all(state.width == w for state, w in zip(states, widths)):
                    trace.record(j, states[0].width, states[1].width, 0.0, last.rom.r)
                    trace.stop_reason = "stagnation" if all(s.stagnant for s in states) else "basis_cap"
                    break

            factor_p, factor_q = self._solve_sides(states)
            rom, criterion, previous = self.probe_rom(factor_p, factor_q, system, grid,
                                                      config.target_error, previous, iterations=j)
            last = PassResult(rom, criterion, factor_p, factor_q, j, stable=not self.unstable_poles(rom).size)
            if last.stable and (best is None or criterion <= best.criterion):
                best = last
            trace.record(j, states[0].width, states[1].width, criterion, rom.r)
            self.logger.debug(f"EKSM j={j}: widths ({states[0].width}, {states[1].width}), "
                              f"criterion {criterion:.3e}, probe r={rom.r}"
                              f"{'' if last.stable else ' (unstable)'}")
            if trace.converged():
                trace.stop_reason = "three_below_tol"
                break
        else:
            trace.stop_reason = "maxiter"

        chosen = self._select_result(system, trace, last, best)
        chosen.rom.iterations = trace.iterations
        self.logger.info(f"EKSM stopped ({trace.stop_reason}) after {trace.iterations} pass(es): "
                         f"basis widths ({states[0].width}, {states[1].width}), r={chosen.rom.r}")
        if trace.stop_reason == "maxiter":
            self.logger.warning(f"EKSM did not meet tol={config.tol:g} within maxiter={config.maxiter}")
        return chosen.factor_p, chosen.factor_q, chosen.rom, trace

    def _select_result(self, system: DescriptorSystem, trace: ConvergenceTrace,
                       last: PassResult, best: Optional[PassResult]) -> PassResult:
        """
        The newest ROM if it is stable and the run did not stop at maxiter,
        else the stable one with the lowest criterion.

        Raises:
            StabilityError: no stable ROM and the model itself is unstable
            NumericalError: no stable ROM for a model not shown unstable
        """
        if trace.stop_reason != "maxiter" and last.stable:
            return last
        if best is not None:
            if best is not last:
                self.logger.warning(f"using the stable ROM of pass {best.j} "
                                    f"(criterion {best.criterion:.3e}, r={best.rom.r})")
            return best
        if system.N <= self.bt.max_order:
            a, _ = self.bt.system_operators(system)
            self.bt.check_stability(a)
        raise NumericalError(f"EKSM found no stable reduced model in {trace.iterations} pass(es); "
                             f"raise maxiter or basis_cap")

    def eksm_gramian_factors(self, system: DescriptorSystem, config: EksmConfig
                             ) -> Tuple[np.ndarray, np.ndarray, ConvergenceTrace]:
        """Low-rank factors ``ZP``, ``ZQ`` with ``P ~ ZP ZP^T`` and ``Q ~ ZQ ZQ^T``."""
        factor_p, factor_q, _, trace = self._run(system, config)
        return factor_p.Z, factor_q.Z, trace

    @staticmethod
    def unstable_poles(rom: Rom) -> np.ndarray:
        """Finite poles of the ROM pencil with Re >= 0 (relative to the largest pole)."""
        poles = sla.eigvals(rom.G, rom.C)
        poles = poles[np.isfinite(poles)]
        scale = max(1.0, float(np.max(np.abs(poles)))) if poles.size else 1.0
        return poles[poles.real >= -STABILITY_MARGIN * scale]

    def reduce_eksm(self, system: DescriptorSystem, config: EksmConfig) -> Tuple[Rom, ConvergenceTrace]:
        """
        Reduce ``system`` by EKSM low-rank balanced truncation.

        Non-convergence is reported through ``trace.stop_reason`` and never
        returns an unstable ROM; an unstable model raises StabilityError.
        """
        _, _, rom, trace = self._run(system, config)
        self.logger.info(f"EKSM BT: N={system.N} -> r={rom.r}, bound={rom.apriori_bound:.3e}")
        return rom, trace
