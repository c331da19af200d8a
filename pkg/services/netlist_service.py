"""Netlist parsing service for RLCk MOR.

Line-oriented grammar (first token case-insensitive)::

    * comment
    R<id> nodeA nodeB value
    C<id> nodeA nodeB value
    L<id> nodeA nodeB value
    K<id> L<id1> L<id2> k
    P<id> port node [in|out|inout]
    .end

Values accept SPICE scale factors (T, G, Meg, K, mil, m, u, n, p, f) with an
optional trailing unit word. Node "0" is ground.
"""
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

from core.errors import NetlistSyntaxError, ValidationError
from core.logger import Logger


GROUND = "0"
PORT_DIRECTIONS = ("in", "out", "inout")

SCALE_FACTORS = {
    "t": 1e12,
    "g": 1e9,
    "meg": 1e6,
    "k": 1e3,
    "mil": 25.4e-6,
    "m": 1e-3,
    "u": 1e-6,
    "n": 1e-9,
    "p": 1e-12,
    "f": 1e-15,
}

_VALUE_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:e[+-]?\d+)?)(meg|mil|[tgkmunpf])?([a-z]*)$"
)


@dataclass(frozen=True)
class Resistor:
    name: str
    node_a: str
    node_b: str
    ohms: float


@dataclass(frozen=True)
class Capacitor:
    name: str
    node_a: str
    node_b: str
    farads: float


@dataclass(frozen=True)
class Inductor:
    branch_id: str
    node_a: str
    node_b: str
    henries: float

    @property
    def name(self) -> str:
        return self.branch_id


@dataclass(frozen=True)
class MutualCoupling:
    name: str
    branch_i: str
    branch_j: str
    k: float


@dataclass(frozen=True)
class Port:
    name: str
    node: str
    direction: str = "inout"


Element = Union[Resistor, Capacitor, Inductor, MutualCoupling, Port]


@dataclass
class Netlist:
    """Parsed circuit: elements plus ordered non-ground node names."""
    elements: List[Element] = field(default_factory=list)
    node_names: List[str] = field(default_factory=list)

    def of_type(self, kind) -> list:
        return [e for e in self.elements if isinstance(e, kind)]

    @property
    def resistors(self) -> List[Resistor]:
        return self.of_type(Resistor)

    @property
    def capacitors(self) -> List[Capacitor]:
        return self.of_type(Capacitor)

    @property
    def inductors(self) -> List[Inductor]:
        return self.of_type(Inductor)

    @property
    def couplings(self) -> List[MutualCoupling]:
        return self.of_type(MutualCoupling)

    @property
    def ports(self) -> List[Port]:
        return self.of_type(Port)

    def validate(self):
        """Check the Netlist invariants; raises ValidationError."""
        branches = {l.branch_id.lower() for l in self.inductors}
        nodes = set(self.node_names) | {GROUND}
        for element in self.elements:
            if isinstance(element, Resistor) and element.ohms <= 0:
                raise ValidationError(f"{element.name}: nonpositive value {element.ohms}")
            if isinstance(element, Capacitor) and element.farads <= 0:
                raise ValidationError(f"{element.name}: nonpositive value {element.farads}")
            if isinstance(element, Inductor) and element.henries <= 0:
                raise ValidationError(f"{element.name}: nonpositive value {element.henries}")
            if isinstance(element, MutualCoupling):
                if abs(element.k) >= 1:
                    raise ValidationError(f"{element.name}: |k| must be < 1, got {element.k}")
                for ref in (element.branch_i, element.branch_j):
                    if ref.lower() not in branches:
                        raise ValidationError(f"{element.name}: reference to undeclared inductor {ref}")
            if isinstance(element, Port) and element.node not in nodes - {GROUND}:
                raise ValidationError(f"{element.name}: port node {element.node!r} is not a circuit node")


def parse_value(token: str) -> float:
    """Convert a SPICE number (``1e-12``, ``1p``, ``2.2kOhm``) to float."""
    match = _VALUE_RE.match(token.strip().lower())
    if not match:
        raise ValueError(f"cannot parse value {token!r}")
    number, scale, _unit = match.groups()
    value = float(number)
    if scale:
        value *= SCALE_FACTORS[scale]
    return value


class NetlistService:
    """Service for reading RLCk netlists."""

    def __init__(self):
        self.logger = Logger()

    def parse_netlist(self, text: str) -> Netlist:
        """
        Parse netlist text into a validated Netlist.

        Raises:
            NetlistSyntaxError: malformed line, duplicate name, bad value,
                undeclared inductor reference or |k| >= 1
        """
        elements: List[Element] = []
        node_names: List[str] = []
        seen_nodes = set()
        seen_names: Dict[str, int] = {}
        inductor_lines: Dict[str, int] = {}
        coupling_lines: List[tuple] = []

        def add_node(node: str):
            if node != GROUND and node not in seen_nodes:
                seen_nodes.add(node)
                node_names.append(node)

        for line_number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith('*'):
                continue
            tokens = line.split()
            head = tokens[0].lower()
            if head == ".end":
                break
            if head.startswith('.'):
                raise NetlistSyntaxError(f"unsupported directive {tokens[0]!r}", line_number)

            name = tokens[0]
            key = name.lower()
            if key in seen_names:
                raise NetlistSyntaxError(
                    f"duplicate element name {name!r} (first defined on line {seen_names[key]})",
                    line_number,
                )
            seen_names[key] = line_number
            kind = head[0]

            if kind in ('r', 'c', 'l'):
                if len(tokens) != 4:
                    raise NetlistSyntaxError(f"expected '{name} nodeA nodeB value'", line_number)
                node_a, node_b = tokens[1], tokens[2]
                value = self._value(tokens[3], line_number)
                if value <= 0:
                    raise NetlistSyntaxError(f"nonpositive value for {name}: {value}", line_number)
                if node_a == node_b:
                    raise NetlistSyntaxError(f"{name} connects node {node_a!r} to itself", line_number)
                add_node(node_a)
                add_node(node_b)
                if kind == 'r':
                    elements.append(Resistor(name, node_a, node_b, value))
                elif kind == 'c':
                    elements.append(Capacitor(name, node_a, node_b, value))
                else:
                    elements.append(Inductor(name, node_a, node_b, value))
                    inductor_lines[key] = line_number
            elif kind == 'k':
                if len(tokens) != 4:
                    raise NetlistSyntaxError(f"expected '{name} Lid1 Lid2 k'", line_number)
                k = self._value(tokens[3], line_number)
                if abs(k) >= 1:
                    raise NetlistSyntaxError(f"coupling {name} needs |k| < 1, got {k}", line_number)
                if tokens[1].lower() == tokens[2].lower():
                    raise NetlistSyntaxError(f"coupling {name} couples {tokens[1]} to itself", line_number)
                elements.append(MutualCoupling(name, tokens[1], tokens[2], k))
                coupling_lines.append((tokens[1], tokens[2], line_number))
            elif kind == 'p':
                if len(tokens) not in (3, 4) or tokens[1].lower() != "port":
                    raise NetlistSyntaxError(f"expected '{name} port node [in|out|inout]'", line_number)
                direction = tokens[3].lower() if len(tokens) == 4 else "inout"
                if direction not in PORT_DIRECTIONS:
                    raise NetlistSyntaxError(f"unknown port direction {tokens[3]!r}", line_number)
                if tokens[2] == GROUND:
                    raise NetlistSyntaxError(f"port {name} cannot sit on ground", line_number)
                add_node(tokens[2])
                elements.append(Port(name, tokens[2], direction))
            else:
                raise NetlistSyntaxError(f"unknown element type {tokens[0]!r}", line_number)

        # couplings may precede the inductors they reference
        for branch_i, branch_j, line_number in coupling_lines:
            for ref in (branch_i, branch_j):
                if ref.lower() not in inductor_lines:
                    raise NetlistSyntaxError(f"reference to undeclared inductor {ref!r}", line_number)

        netlist = Netlist(elements=elements, node_names=node_names)
        netlist.validate()
        self.logger.debug(
            f"Parsed netlist: {len(node_names)} nodes, {len(netlist.inductors)} inductors, "
            f"{len(netlist.couplings)} couplings, {len(netlist.ports)} ports"
        )
        return netlist

    def read_netlist(self, path: str) -> Netlist:
        """
        Parse a netlist file.

        Raises:
            NetlistSyntaxError: the file is not UTF-8 text, or a line is malformed
        """
        with open(path, 'rb') as f:
            data = f.read()
        try:
            text = data.decode('utf-8')
        except UnicodeDecodeError as e:
            raise NetlistSyntaxError(f"not UTF-8 text: byte 0x{data[e.start]:02x} at offset {e.start}",
                                     data[:e.start].count(b"\n") + 1) from e
        return self.parse_netlist(text)

    @staticmethod
    def _value(token: str, line_number: Optional[int]) -> float:
        try:
            return parse_value(token)
        except ValueError as e:
            raise NetlistSyntaxError(str(e), line_number) from e
