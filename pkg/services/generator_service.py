"""Synthetic benchmark netlists for RLCk MOR.

Every generated circuit is passive and strictly stable: each node has a
capacitor and a shunt resistor to ground, and inductors only ever form trees
(no inductor-only loops). Element values are drawn uniformly from the ranges
below with ``numpy.random.default_rng(seed)``, so a seed fixes the file
byte for byte.
"""
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.branding import Branding
from core.errors import ValidationError
from core.logger import Logger


SERIES_R_RANGE = (1.0, 10.0)         # ohm
SHUNT_R_RANGE = (20.0, 200.0)        # ohm
CAPACITANCE_RANGE = (0.1e-12, 1.0e-12)  # farad
INDUCTANCE_RANGE = (0.1e-9, 1.0e-9)  # henry
# neighbouring-line couplings only; |k| < 0.5 keeps M positive definite
COUPLING_RANGE = (0.05, 0.45)

KINDS = ("ladder", "mesh", "coupled_lines")


def _fmt(value: float) -> str:
    return format(value, '.6e')


class _NetlistWriter:
    """Accumulates netlist lines with per-type element numbering."""

    def __init__(self, rng: np.random.Generator, title: str):
        self.rng = rng
        self.lines: List[str] = [f"* {title}", f"* generated by {Branding.APP_ID} {Branding.APP_VERSION}"]
        self.counters: Dict[str, int] = {}

    def _name(self, prefix: str) -> str:
        self.counters[prefix] = self.counters.get(prefix, 0) + 1
        return f"{prefix}{self.counters[prefix]}"

    def _draw(self, bounds: Tuple[float, float]) -> float:
        return float(self.rng.uniform(*bounds))

    def resistor(self, a: str, b: str, bounds=SERIES_R_RANGE) -> str:
        name = self._name("R")
        self.lines.append(f"{name} {a} {b} {_fmt(self._draw(bounds))}")
        return name

    def capacitor(self, a: str, b: str = "0") -> str:
        name = self._name("C")
        self.lines.append(f"{name} {a} {b} {_fmt(self._draw(CAPACITANCE_RANGE))}")
        return name

    def inductor(self, a: str, b: str) -> str:
        name = self._name("L")
        self.lines.append(f"{name} {a} {b} {_fmt(self._draw(INDUCTANCE_RANGE))}")
        return name

    def coupling(self, branch_i: str, branch_j: str) -> str:
        name = self._name("K")
        self.lines.append(f"{name} {branch_i} {branch_j} {_fmt(self._draw(COUPLING_RANGE))}")
        return name

    def shunt(self, node: str):
        """Capacitor and leakage resistor from node to ground."""
        self.capacitor(node)
        self.resistor(node, "0", SHUNT_R_RANGE)

    def port(self, node: str):
        self.lines.append(f"{self._name('P')} port {node}")

    def text(self) -> str:
        return "\n".join(self.lines + [".end"]) + "\n"


def _spread(count: int, nodes: List[str]) -> List[str]:
    """``count`` distinct nodes spaced evenly along ``nodes``."""
    if count > len(nodes):
        raise ValidationError(f"cannot place {count} ports on {len(nodes)} nodes")
    picks = np.linspace(0, len(nodes) - 1, count).round().astype(int) if count > 1 else [0]
    return [nodes[int(i)] for i in picks]


class GeneratorService:
    """Service for deterministic RLCk benchmark netlists."""

    def __init__(self):
        self.logger = Logger()

    @staticmethod
    def _check_size(**sizes: int):
        for key, value in sizes.items():
            if int(value) != value or value < 1:
                raise ValidationError(f"{key} must be an integer >= 1, got {value}")

    def ladder(self, sections: int, ports: int = 1, seed: int = 0) -> str:
        """
        LC ladder with shunt losses: ``sections`` series inductors between
        ``sections + 1`` nodes, so N = 2 * sections + 1.
        """
        self._check_size(sections=sections, ports=ports)
        writer = _NetlistWriter(np.random.default_rng(seed), f"RLC ladder, {sections} section(s), seed {seed}")
        nodes = ["in"] + [f"n{k}" for k in range(1, sections + 1)]
        writer.shunt(nodes[0])
        for prev, node in zip(nodes, nodes[1:]):
            writer.inductor(prev, node)
            writer.shunt(node)
        for node in _spread(ports, nodes):
            writer.port(node)
        return writer.text()

    def mesh(self, size: int, ports: int = 4, seed: int = 0) -> str:
        """
        ``size`` x ``size`` grid: inductors along rows, resistors along
        columns, shunt RC at every node, ports on the corners.
        """
        self._check_size(size=size, ports=ports)
        corners = sorted({(0, 0), (0, size - 1), (size - 1, 0), (size - 1, size - 1)})
        if ports > len(corners):
            raise ValidationError(f"a {size}x{size} mesh has only {len(corners)} corner port(s)")
        writer = _NetlistWriter(np.random.default_rng(seed), f"RLC mesh {size}x{size}, seed {seed}")

        def node(row: int, col: int) -> str:
            return f"m{row}_{col}"

        for row in range(size):
            for col in range(size):
                writer.shunt(node(row, col))
                if col:
                    writer.inductor(node(row, col - 1), node(row, col))
                if row:
                    writer.resistor(node(row - 1, col), node(row, col))
        for row, col in corners[:ports]:
            writer.port(node(row, col))
        return writer.text()

    def coupled_lines(self, lines: int, segments: int, density: float = 0.3, seed: int = 0) -> str:
        """
        ``lines`` parallel RLC lines of ``segments`` series R-L segments each,
        one port at the near end of every line. Inductors of neighbouring
        lines in the same segment are magnetically coupled with probability
        ``density``.
        """
        self._check_size(lines=lines, segments=segments)
        if not 0.0 <= density <= 1.0:
            raise ValidationError(f"coupling density must lie in [0, 1], got {density}")
        rng = np.random.default_rng(seed)
        writer = _NetlistWriter(rng, f"{lines} coupled RLC line(s), {segments} segment(s), "
                                     f"density {density:g}, seed {seed}")
        inductors: List[List[Optional[str]]] = []
        for line in range(lines):
            names = []
            head = f"l{line}_0"
            writer.shunt(head)
            for seg in range(1, segments + 1):
                mid = f"l{line}_{seg}a"
                tail = f"l{line}_{seg}"
                writer.resistor(head, mid)
                writer.shunt(mid)
                names.append(writer.inductor(mid, tail))
                writer.shunt(tail)
                head = tail
            inductors.append(names)

        for seg in range(segments):
            for line in range(lines - 1):
                if rng.uniform() < density:
                    writer.coupling(inductors[line][seg], inductors[line + 1][seg])
        for line in range(lines):
            writer.port(f"l{line}_0")
        return writer.text()

    def generate(self, kind: str, size: int, ports: int = 1, seed: int = 0,
                 density: float = 0.3) -> str:
        """
        Dispatch by kind; ``size`` is sections (ladder), grid side (mesh) or
        segments per line (coupled_lines, with ``ports`` lines).
        """
        if kind == "ladder":
            text = self.ladder(size, ports, seed)
        elif kind == "mesh":
            text = self.mesh(size, ports, seed)
        elif kind == "coupled_lines":
            text = self.coupled_lines(ports, size, density, seed)
        else:
            raise ValidationError(f"unknown generator kind {kind!r}; expected one of {KINDS}")
        self.logger.info(f"Generated {kind} netlist (size={size}, ports={ports}, seed={seed})")
        return text
