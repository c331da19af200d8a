"""Frequency-domain analysis service for RLCk MOR."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from core.branding import Branding
from core.errors import SingularMatrixError, ValidationError
from core.logger import Logger
from core.settings import get_thread_count
from services.dense_bt_service import Rom
from services.mna_service import DescriptorSystem
from utils.linalg import factorize
from utils import touchstone


KINDS = ("impedance_H", "scattering_S")
AUTO_DECADES = 4
AUTO_POINTS = 161
FALLBACK_RATIO = 100.0


@dataclass(frozen=True)
class FrequencyGrid:
    """``l`` frequencies in [f_min, f_max], endpoints included."""
    f_min: float
    f_max: float
    l: int = 20
    spacing: str = "linear"

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ValidationError(f"need 0 < f_min < f_max, got {self.f_min}, {self.f_max}")
        if self.l < 2:
            raise ValidationError(f"need at least 2 frequency points, got {self.l}")
        if self.spacing not in ("linear", "log"):
            raise ValidationError(f"spacing must be 'linear' or 'log', got {self.spacing!r}")

    @property
    def points(self) -> np.ndarray:
        if self.spacing == "log":
            pts = np.geomspace(self.f_min, self.f_max, self.l)
        else:
            pts = np.linspace(self.f_min, self.f_max, self.l)
        pts[0] = self.f_min
        pts[-1] = self.f_max
        return pts


@dataclass
class FrequencySweep:
    """Complex q x p samples at each grid frequency."""
    frequencies: np.ndarray
    samples: np.ndarray
    kind: str = "impedance_H"
    z0: Optional[float] = None
    grid: Optional[FrequencyGrid] = None

    @property
    def shape(self):
        return self.samples.shape[1:]


@dataclass
class SweepComparison:
    """Per-frequency relative errors and the worst single-entry deviation."""
    frequencies: np.ndarray
    relative_errors: np.ndarray
    max_relative_error: float
    worst_entry_deviation: float
    worst_entry: tuple = field(default_factory=tuple)


Model = Union[DescriptorSystem, Rom]


def make_grid(f_min: float, f_max: float, l: int = 20, spacing: str = "linear") -> FrequencyGrid:
    return FrequencyGrid(f_min, f_max, l, spacing)


class FrequencyService:
    """Service for transfer-function evaluation, error metrics and export."""

    def __init__(self):
        self.logger = Logger()

    def evaluate_tf(self, model: Model, grid: FrequencyGrid) -> FrequencySweep:
        """Sample ``H(j 2 pi f) = L (j 2 pi f C - G)^-1 B`` on the grid."""
        sweep = self.evaluate_at(model, grid.points)
        sweep.grid = grid
        return sweep

    def evaluate_at(self, model: Model, frequencies: Sequence[float]) -> FrequencySweep:
        """
        Transfer function at arbitrary (possibly negative) frequencies in Hz.

        Raises:
            SingularMatrixError: the pencil is singular at one of the frequencies
        """
        freqs = np.asarray(frequencies, dtype=float)
        G, C, B, L = model.G, model.C, model.B, model.L
        if sp.issparse(G) or sp.issparse(C):
            G = sp.csc_matrix(G)
            C = sp.csc_matrix(C)
        B = np.asarray(B)
        L = np.asarray(L)

        def sample(f: float) -> np.ndarray:
            s = 2j * np.pi * f
            pencil = s * C - G
            if sp.issparse(pencil):
                pencil = sp.csc_matrix(pencil)
            try:
                lu = factorize(pencil, "sC - G")
            except SingularMatrixError as e:
                raise SingularMatrixError(f"pencil sC - G is singular at f = {f:.6g} Hz",
                                          operator="sC - G", frequency=f) from e
            return L @ lu.solve(B.astype(complex))

        threads = get_thread_count()
        if threads > 1 and len(freqs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                samples = list(pool.map(sample, freqs))
        else:
            samples = [sample(f) for f in freqs]

        q, p = L.shape[0], B.shape[1]
        data = np.asarray(samples, dtype=complex).reshape(len(freqs), q, p)
        return FrequencySweep(frequencies=freqs, samples=data, kind="impedance_H")

    @staticmethod
    def _check_compatible(a: FrequencySweep, b: FrequencySweep):
        if a.frequencies.shape != b.frequencies.shape or not np.allclose(
                a.frequencies, b.frequencies, rtol=1e-12, atol=0.0):
            raise ValidationError("sweeps are sampled on different frequency grids")
        if a.samples.shape != b.samples.shape:
            raise ValidationError(f"sweep shapes differ: {a.samples.shape} vs {b.samples.shape}")

    def pointwise_relative_errors(self, a: FrequencySweep, b: FrequencySweep) -> np.ndarray:
        """``||a_i - b_i||_2 / ||a_i||_2`` per point (inf where a_i = 0)."""
        self._check_compatible(a, b)
        errors = np.empty(len(a.frequencies))
        for i, (x, y) in enumerate(zip(a.samples, b.samples)):
            ref = np.linalg.norm(x, 2)
            diff = np.linalg.norm(x - y, 2)
            errors[i] = diff / ref if ref > 0 else np.inf
        return errors

    def max_relative_error(self, a: FrequencySweep, b: FrequencySweep) -> float:
        """Maximum over the grid of the spectral-norm relative error of b against a."""
        return float(np.max(self.pointwise_relative_errors(a, b)))

    def worst_entry(self, a: FrequencySweep, b: FrequencySweep) -> Tuple[float, Tuple[float, int, int]]:
        """Largest ``|a_ij - b_ij|`` over the grid with its (f, i, j), 1-based."""
        self._check_compatible(a, b)
        deviation = np.abs(a.samples - b.samples)
        k, i, j = np.unravel_index(int(np.argmax(deviation)), deviation.shape)
        return float(deviation[k, i, j]), (float(a.frequencies[k]), int(i) + 1, int(j) + 1)

    def compare_sweeps(self, a: FrequencySweep, b: FrequencySweep) -> SweepComparison:
        errors = self.pointwise_relative_errors(a, b)
        deviation, entry = self.worst_entry(a, b)
        return SweepComparison(
            frequencies=a.frequencies.copy(),
            relative_errors=errors,
            max_relative_error=float(np.max(errors)),
            worst_entry_deviation=deviation,
            worst_entry=entry,
        )

    def h_to_s(self, sweep: FrequencySweep, z0: float = 50.0) -> FrequencySweep:
        """
        Impedance to scattering parameters, ``S = (Z - z0 I)(Z + z0 I)^-1``.

        Raises:
            ValidationError: wrong kind, non-square H or z0 <= 0
            SingularMatrixError: ``Z + z0 I`` singular at some frequency
        """
        if sweep.kind != "impedance_H":
            raise ValidationError(f"h_to_s needs an impedance sweep, got {sweep.kind}")
        q, p = sweep.shape
        if q != p:
            raise ValidationError(f"S-parameters need q = p, got {q}x{p}")
        if z0 <= 0:
            raise ValidationError(f"z0 must be > 0, got {z0}")

        identity = np.eye(p)
        out = np.empty_like(sweep.samples)
        for k, (f, z) in enumerate(zip(sweep.frequencies, sweep.samples)):
            denominator = z + z0 * identity
            if not np.linalg.cond(denominator) <= 1e14:
                raise SingularMatrixError(f"Z + z0 I is singular at f = {f:.6g} Hz",
                                          operator="Z + z0 I", frequency=float(f))
            out[k] = np.linalg.solve(denominator.T, (z - z0 * identity).T).T
        return FrequencySweep(frequencies=sweep.frequencies.copy(), samples=out,
                              kind="scattering_S", z0=z0, grid=sweep.grid)

    def export_sweep(self, sweep: FrequencySweep, fmt: str) -> bytes:
        """Serialize a sweep as ``csv`` or ``touchstone`` (S only)."""
        if fmt == "csv":
            prefix = "S" if sweep.kind == "scattering_S" else "H"
            text = touchstone.write_sweep_csv(sweep.frequencies, sweep.samples, prefix)
        elif fmt == "touchstone":
            if sweep.kind != "scattering_S":
                raise ValidationError("touchstone export needs an S-parameter sweep; convert with h_to_s")
            q, p = sweep.shape
            if q != p:
                raise ValidationError(f"touchstone needs q = p, got {q}x{p}")
            text = touchstone.write_touchstone(sweep.frequencies, sweep.samples, sweep.z0 or 50.0,
                                               comments=[Branding.get_banner()])
        elif fmt == "plot":
            text = touchstone.write_plot_csv(sweep.frequencies, sweep.samples)
        else:
            raise ValidationError(f"unknown sweep format {fmt!r}")
        return text.encode('utf-8')

    def read_sweep(self, data: bytes, fmt: str, ports: Optional[int] = None) -> FrequencySweep:
        """Parse ``export_sweep`` output back into a sweep."""
        text = data.decode('utf-8')
        if fmt == "csv":
            freqs, samples, prefix = touchstone.read_sweep_csv(text)
            kind = "scattering_S" if prefix == "S" else "impedance_H"
            return FrequencySweep(frequencies=freqs, samples=samples, kind=kind)
        if fmt == "touchstone":
            if not ports:
                raise ValidationError("reading touchstone needs the port count")
            freqs, samples, z0 = touchstone.read_touchstone(text, ports)
            return FrequencySweep(frequencies=freqs, samples=samples, kind="scattering_S", z0=z0)
        raise ValidationError(f"unknown sweep format {fmt!r}")

    @staticmethod
    def touchstone_suffix(sweep: FrequencySweep) -> str:
        return f".s{sweep.shape[0]}p"

    @staticmethod
    def _first_peak(magnitude: np.ndarray) -> int:
        """Index of the first interior local maximum, else of the global one."""
        rising = magnitude[1:-1] > magnitude[:-2]
        falling = magnitude[1:-1] >= magnitude[2:]
        interior = np.flatnonzero(rising & falling) + 1
        return int(interior[0]) if interior.size else int(np.argmax(magnitude))

    def resonance_frequencies(self, sweep: FrequencySweep) -> List[float]:
        """Grid frequency of the first |H| peak per diagonal entry."""
        q, p = sweep.shape
        return [float(sweep.frequencies[self._first_peak(np.abs(sweep.samples[:, i, i]))])
                for i in range(min(q, p))]

    def dominant_resonance(self, sweep: FrequencySweep) -> Optional[float]:
        """
        Lowest resonance seen at any port.

        An entry whose magnitude only falls contributes its -3 dB corner
        instead. An entry still rising at the end of the sweep, or never
        dropping by 3 dB, contributes nothing; ``None`` if no entry does.
        """
        q, p = sweep.shape
        last = len(sweep.frequencies) - 1
        candidates = []
        for i in range(min(q, p)):
            magnitude = np.abs(sweep.samples[:, i, i])
            k = self._first_peak(magnitude)
            if k == 0:
                below = np.flatnonzero(magnitude < magnitude[0] / np.sqrt(2.0))
                if not below.size:
                    continue
                k = int(below[0])
            elif k == last:
                continue
            candidates.append(float(sweep.frequencies[k]))
        return min(candidates) if candidates else None

    def auto_f_max(self, model: Model, f_min: float) -> float:
        """
        Twice the dominant resonance of ``model``, located on a coarse
        logarithmic sweep spanning ``AUTO_DECADES`` decades above ``f_min``.

        Falls back to ``FALLBACK_RATIO * f_min`` when the response shows
        neither a peak nor a roll-off in that span.
        """
        if not f_min > 0:
            raise ValidationError(f"fmin must be > 0, got {f_min}")
        grid = FrequencyGrid(f_min, f_min * 10.0 ** AUTO_DECADES, AUTO_POINTS, "log")
        resonance = self.dominant_resonance(self.evaluate_tf(model, grid))
        if resonance is None:
            f_max = FALLBACK_RATIO * f_min
            self.logger.warning(f"no resonance above {f_min:.4g} Hz; using fmax = {f_max:.4g} Hz")
        else:
            f_max = 2.0 * resonance
            self.logger.info(f"Dominant resonance {resonance:.4g} Hz; fmax = {f_max:.4g} Hz")
        return f_max
