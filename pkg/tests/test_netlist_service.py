"""Tests for the netlist parser."""
import pytest

from core.errors import NetlistSyntaxError, ValidationError
from services.netlist_service import (Capacitor, Inductor, MutualCoupling, NetlistService,
                                      Port, Resistor, parse_value)


@pytest.fixture
def service():
    return NetlistService()


@pytest.mark.parametrize("token,expected", [
    ("1e-12", 1e-12),
    ("1p", 1e-12),
    ("1pF", 1e-12),
    ("2.2k", 2200.0),
    ("2.2kOhm", 2200.0),
    ("1meg", 1e6),
    ("1MEG", 1e6),
    ("0.5nH", 0.5e-9),
    ("3u", 3e-6),
    ("10", 10.0),
    (".5", 0.5),
    ("4f", 4e-15),
])
def test_parse_value(token, expected):
    assert parse_value(token) == pytest.approx(expected, rel=1e-15)


def test_parse_value_rejects_garbage():
    with pytest.raises(ValueError):
        parse_value("abc")


def test_elements_and_node_order(service):
    netlist = service.parse_netlist("""* header comment
R1 a b 10
C1 b 0 1p
L1 b c 1n
L2 c 0 2n
K1 L1 L2 0.5
P1 port a
P2 port c out
.end
R9 ignored after end 1
""")
    assert netlist.node_names == ["a", "b", "c"]
    assert netlist.resistors == [Resistor("R1", "a", "b", 10.0)]
    assert netlist.capacitors == [Capacitor("C1", "b", "0", 1e-12)]
    assert [l.branch_id for l in netlist.inductors] == ["L1", "L2"]
    assert isinstance(netlist.inductors[0], Inductor)
    assert netlist.couplings == [MutualCoupling("K1", "L1", "L2", 0.5)]
    assert netlist.ports == [Port("P1", "a", "inout"), Port("P2", "c", "out")]


def test_coupling_may_precede_inductors(service):
    netlist = service.parse_netlist("K1 La Lb 0.2\nLa x 0 1n\nLb y 0 1n\nC1 x 0 1p\nC2 y 0 1p\nP1 port x\n")
    assert len(netlist.couplings) == 1


def test_case_insensitive_element_letters(service):
    netlist = service.parse_netlist("r1 a 0 1k\nc1 a 0 1p\np1 port a\n")
    assert len(netlist.resistors) == 1
    assert len(netlist.ports) == 1


@pytest.mark.parametrize("text,line", [
    ("R1 a 0 1\nR1 b 0 1\n", 2),
    ("R1 a 0 0\n", 1),
    ("C1 a 0 -1p\n", 1),
    ("R1 a a 10\n", 1),
    ("R1 a 0\n", 1),
    ("X1 a 0 1\n", 1),
    ("R1 a 0 1\n.tran 1n 10n\n", 2),
    ("L1 a 0 1n\nL2 b 0 1n\nK1 L1 L2 1.0\n", 3),
    ("L1 a 0 1n\nK1 L1 L9 0.1\n", 2),
    ("L1 a 0 1n\nK1 L1 L1 0.1\n", 2),
    ("R1 a 0 1\nP1 port 0\n", 2),
    ("R1 a 0 1\nP1 port a sideways\n", 2),
    ("R1 a 0 1\nP1 a\n", 2),
    ("R1 a 0 1x2\n", 1),
])
def test_syntax_errors_carry_line_numbers(service, text, line):
    with pytest.raises(NetlistSyntaxError) as info:
        service.parse_netlist(text)
    assert info.value.line_number == line
    assert str(info.value).startswith(f"line {line}:")


def test_syntax_error_is_validation_error(service):
    with pytest.raises(ValidationError):
        service.parse_netlist("Q1 a b c\n")


def test_read_netlist(service, tmp_path):
    path = tmp_path / "tiny.sp"
    path.write_text("R1 a 0 50\nC1 a 0 1p\nP1 port a\n")
    netlist = service.read_netlist(str(path))
    assert netlist.node_names == ["a"]


def test_non_utf8_file_is_a_syntax_error(service, tmp_path):
    path = tmp_path / "binary.sp"
    path.write_bytes(b"R1 a 0 50\nC1 a 0 \xff\xfe\n")
    with pytest.raises(NetlistSyntaxError) as info:
        service.read_netlist(str(path))
    assert info.value.line_number == 2
    assert "0xff" in str(info.value)
