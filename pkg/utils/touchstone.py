"""Touchstone v1 and CSV codecs for frequency sweeps.

Samples are complex arrays of shape (points, q, p). Touchstone data uses the
RI (real/imaginary) format; 2-port files use the column-major order
S11 S21 S12 S22, larger files write one matrix row per line, wrapped after
four complex pairs. Reading goes through scikit-rf.
"""
import csv
import io
import tempfile
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import skrf as rf

from core.errors import ValidationError


PAIRS_PER_LINE = 4


def _fmt(x: float) -> str:
    return format(float(x), '.17g')


def write_touchstone(frequencies: np.ndarray, samples: np.ndarray, z0: float,
                     comments: Sequence[str] = ()) -> str:
    """Touchstone v1 text (``# Hz S RI R <z0>``)."""
    samples = np.asarray(samples)
    if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
        raise ValidationError(f"touchstone needs square samples, got shape {samples.shape}")
    ports = samples.shape[1]
    lines = [f"! {c}" for c in comments]
    lines.append(f"# Hz S RI R {z0:g}")

    for f, s in zip(frequencies, samples):
        if ports == 1:
            lines.append(" ".join([_fmt(f), _fmt(s[0, 0].real), _fmt(s[0, 0].imag)]))
        elif ports == 2:
            values = [s[0, 0], s[1, 0], s[0, 1], s[1, 1]]
            lines.append(" ".join([_fmt(f)] + [f"{_fmt(v.real)} {_fmt(v.imag)}" for v in values]))
        else:
            for i in range(ports):
                for start in range(0, ports, PAIRS_PER_LINE):
                    chunk = s[i, start:start + PAIRS_PER_LINE]
                    pairs = [f"{_fmt(v.real)} {_fmt(v.imag)}" for v in chunk]
                    if i == 0 and start == 0:
                        lines.append(" ".join([_fmt(f)] + pairs))
                    else:
                        lines.append(" " + " ".join(pairs))
    return "\n".join(lines) + "\n"


def read_touchstone(text: str, ports: int) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Parse Touchstone v1 data for ``ports`` ports with scikit-rf.

    scikit-rf takes the port count from the ``.sNp`` extension, so the text
    is staged in a temporary file of that name.

    Returns:
        (frequencies in Hz, samples (points, ports, ports), z0)
    """
    with tempfile.TemporaryDirectory() as folder:
        path = Path(folder) / f"sweep.s{ports}p"
        path.write_text(text, encoding='utf-8')
        try:
            network = rf.Network(str(path))
        except Exception as e:
            raise ValidationError(f"unreadable touchstone data: {e}") from e
    samples = np.asarray(network.s, dtype=complex)
    if samples.shape[1:] != (ports, ports):
        raise ValidationError(f"expected {ports}-port data, got shape {samples.shape}")
    return np.asarray(network.f, dtype=float), samples, float(np.real(network.z0[0, 0]))


def csv_header(q: int, p: int, prefix: str) -> List[str]:
    header = ["f_hz"]
    for i in range(q):
        for j in range(p):
            header += [f"re_{prefix}{i + 1}_{j + 1}", f"im_{prefix}{i + 1}_{j + 1}"]
    return header


def write_sweep_csv(frequencies: np.ndarray, samples: np.ndarray, prefix: str = "H") -> str:
    """Wide CSV: frequency then Re/Im for each (i, j) entry, row-major."""
    samples = np.asarray(samples)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(csv_header(samples.shape[1], samples.shape[2], prefix))
    for f, s in zip(frequencies, samples):
        row = [_fmt(f)]
        for v in s.ravel():
            row += [_fmt(v.real), _fmt(v.imag)]
        writer.writerow(row)
    return buffer.getvalue()


def read_sweep_csv(text: str) -> Tuple[np.ndarray, np.ndarray, str]:
    """Parse ``write_sweep_csv`` output back to (frequencies, samples, prefix)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "f_hz":
        raise ValidationError("sweep CSV must start with an f_hz header")
    header = rows[0]
    last = header[-1]
    try:
        prefix_and_index = last[3:]
        prefix = prefix_and_index.rstrip("0123456789_")
        q, p = (int(x) for x in prefix_and_index[len(prefix):].split("_"))
    except ValueError as e:
        raise ValidationError(f"cannot infer matrix shape from CSV header {last!r}") from e
    if len(header) != 1 + 2 * q * p:
        raise ValidationError("sweep CSV header width does not match its entry names")

    data = np.asarray([[float(x) for x in row] for row in rows[1:] if row], dtype=float)
    if data.size == 0:
        return np.zeros(0), np.zeros((0, q, p), dtype=complex), prefix
    values = data[:, 1::2] + 1j * data[:, 2::2]
    return data[:, 0], values.reshape(-1, q, p), prefix


def write_plot_csv(frequencies: np.ndarray, samples: np.ndarray) -> str:
    """Long format ``f_hz, i, j, magnitude_db, phase_deg`` for external plotting."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["f_hz", "i", "j", "magnitude_db", "phase_deg"])
    with np.errstate(divide='ignore'):
        for f, s in zip(frequencies, np.asarray(samples)):
            magnitude = 20.0 * np.log10(np.abs(s))
            phase = np.degrees(np.angle(s))
            for i in range(s.shape[0]):
                for j in range(s.shape[1]):
                    writer.writerow([_fmt(f), i + 1, j + 1, _fmt(magnitude[i, j]), _fmt(phase[i, j])])
    return buffer.getvalue()
