"""Tests for transfer-function evaluation, error metrics and sweep export."""
import numpy as np
import pytest

from conftest import matrix_system
from core.errors import SingularMatrixError, ValidationError
from services.dense_bt_service import DenseBtService, OrderRequest
from services.frequency_service import FrequencyGrid, FrequencyService, FrequencySweep, make_grid


@pytest.fixture
def service():
    return FrequencyService()


def sweep_of(values, kind="impedance_H", z0=None):
    samples = np.asarray(values, dtype=complex)
    if samples.ndim == 1:
        samples = samples.reshape(-1, 1, 1)
    freqs = np.linspace(1e9, 2e9, samples.shape[0])
    return FrequencySweep(frequencies=freqs, samples=samples, kind=kind, z0=z0)


class TestGrid:
    def test_linear_endpoints(self):
        points = make_grid(1e8, 1e10).points
        assert len(points) == 20
        assert points[0] == 1e8 and points[-1] == 1e10
        assert np.all(np.diff(points) > 0)

    def test_log_spacing(self):
        points = FrequencyGrid(1e6, 1e9, 4, "log").points
        assert points == pytest.approx([1e6, 1e7, 1e8, 1e9])
        assert points[0] == 1e6 and points[-1] == 1e9

    @pytest.mark.parametrize("args", [(0.0, 1.0, 5), (2.0, 1.0, 5), (1.0, 2.0, 1), (1.0, 2.0, 5, "cubic")])
    def test_invalid(self, args):
        with pytest.raises(ValidationError):
            FrequencyGrid(*args)


class TestEvaluate:
    def test_scalar_closed_form(self, service, scalar_system):
        grid = FrequencyGrid(0.01, 1.0, 7)
        sweep = service.evaluate_tf(scalar_system, grid)
        omega = 2 * np.pi * grid.points
        assert sweep.samples.shape == (7, 1, 1)
        assert sweep.samples[:, 0, 0] == pytest.approx(1.0 / (1j * omega + 1.0), rel=1e-12)
        assert sweep.grid == grid

    def test_unreduced_rom_matches_model(self, service, coupled_pair_system):
        bt = DenseBtService()
        rank = bt.hankel_singular_values(bt.solve_gramians_dense(coupled_pair_system)).numerical_rank()
        rom = bt.reduce_dense(coupled_pair_system, OrderRequest.fixed_r(rank))
        grid = FrequencyGrid(1e8, 1e10, 20)
        assert service.max_relative_error(service.evaluate_tf(coupled_pair_system, grid),
                                          service.evaluate_tf(rom, grid)) <= 1e-8

    def test_tank_resonance(self, service, tank_system):
        grid = FrequencyGrid(1e8, 1e10, 200)
        sweep = service.evaluate_tf(tank_system, grid)
        f_res = 1.0 / (2 * np.pi * np.sqrt(1e-9 * 1e-12))
        peak = service.resonance_frequencies(sweep)[0]
        step = grid.points[1] - grid.points[0]
        assert abs(peak - f_res) <= step

    def test_dominant_resonance_first_peak(self, service):
        sweep = sweep_of([1.0, 2.0, 5.0, 3.0, 4.0, 1.0])
        assert service.dominant_resonance(sweep) == sweep.frequencies[2]

    def test_dominant_resonance_corner(self, service):
        sweep = sweep_of([1.0, 0.9, 0.8, 0.7, 0.5])
        assert service.dominant_resonance(sweep) == sweep.frequencies[3]

    def test_dominant_resonance_lowest_port_wins(self, service):
        samples = np.zeros((5, 2, 2), dtype=complex)
        samples[:, 0, 0] = [1.0, 2.0, 3.0, 4.0, 1.0]
        samples[:, 1, 1] = [1.0, 3.0, 1.0, 1.0, 1.0]
        assert service.dominant_resonance(sweep_of(samples)) == pytest.approx(1.25e9)

    @pytest.mark.parametrize("values", [[1.0, 2.0, 3.0, 4.0], [1.0, 0.95, 0.9, 0.85]])
    def test_dominant_resonance_none(self, service, values):
        assert service.dominant_resonance(sweep_of(values)) is None

    def test_auto_f_max_tank(self, service, tank_system):
        f_res = 1.0 / (2 * np.pi * np.sqrt(1e-9 * 1e-12))
        f_max = service.auto_f_max(tank_system, 1e8)
        assert f_max / (2 * f_res) == pytest.approx(1.0, abs=0.07)

    def test_auto_f_max_scalar_corner(self, service, scalar_system):
        assert service.auto_f_max(scalar_system, 0.01) / (2 / (2 * np.pi)) == pytest.approx(1.0, abs=0.07)

    def test_auto_f_max_fallback(self, service, scalar_system, monkeypatch):
        monkeypatch.setattr(service, "dominant_resonance", lambda sweep: None)
        assert service.auto_f_max(scalar_system, 1e6) == 1e8
        with pytest.raises(ValidationError):
            service.auto_f_max(scalar_system, 0.0)


    def test_reciprocity(self, service, coupled_pair_system):
        sweep = service.evaluate_tf(coupled_pair_system, FrequencyGrid(1e8, 1e10, 20))
        for h in sweep.samples:
            assert np.linalg.norm(h - h.T) <= 1e-10 * np.linalg.norm(h)

    def test_conjugate_symmetry(self, service, coupled_pair_system):
        f = np.array([3e8, 2.5e9])
        positive = service.evaluate_at(coupled_pair_system, f).samples
        negative = service.evaluate_at(coupled_pair_system, -f).samples
        assert negative == pytest.approx(np.conj(positive), rel=1e-10)

    def test_singular_pencil_names_frequency(self, service):
        # lossless LC: poles at +-j, i.e. f = 1 / (2 pi)
        system = matrix_system([[0.0, -1.0], [1.0, 0.0]], np.eye(2), [[1.0], [0.0]], [[1.0, 0.0]])
        f = 1.0 / (2 * np.pi)
        with pytest.raises(SingularMatrixError) as info:
            service.evaluate_at(system, [0.1, f])
        assert info.value.frequency == pytest.approx(f)

    def test_thread_count_does_not_change_results(self, service, coupled_pair_system, monkeypatch):
        grid = FrequencyGrid(1e8, 1e10, 16)
        serial = service.evaluate_tf(coupled_pair_system, grid).samples
        monkeypatch.setenv("RLCK_MOR_THREADS", "4")
        threaded = service.evaluate_tf(coupled_pair_system, grid).samples
        assert np.array_equal(serial, threaded)


class TestErrorMetric:
    def test_identical(self, service):
        a = sweep_of([1.0, 2.0j, 3.0])
        assert service.max_relative_error(a, a) == 0.0

    def test_scaled(self, service):
        a = sweep_of([1.0 + 1.0j, 2.0, -3.0j])
        b = sweep_of(1.01 * a.samples)
        assert service.max_relative_error(a, b) == pytest.approx(0.01, abs=1e-12)

    def test_zero_reference_is_infinite(self, service):
        a = sweep_of([0.0, 1.0])
        b = sweep_of([1.0, 1.0])
        assert service.max_relative_error(a, b) == float("inf")

    def test_grid_mismatch(self, service):
        a = sweep_of([1.0, 2.0])
        b = sweep_of([1.0, 2.0])
        b.frequencies = b.frequencies * 2
        with pytest.raises(ValidationError):
            service.max_relative_error(a, b)

    def test_compare_sweeps_locates_worst_entry(self, service):
        a = sweep_of(np.ones((3, 2, 2)))
        b_samples = np.ones((3, 2, 2), dtype=complex)
        b_samples[1, 0, 1] = 1.5
        comparison = service.compare_sweeps(a, sweep_of(b_samples))
        assert comparison.worst_entry_deviation == pytest.approx(0.5)
        assert comparison.worst_entry == (a.frequencies[1], 1, 2)
        assert comparison.relative_errors[0] == 0.0
        assert comparison.max_relative_error > 0


class TestScattering:
    def test_matched_open_short(self, service):
        z0 = 50.0
        sweep = sweep_of([z0, 1e12 * z0, 0.0])
        s = service.h_to_s(sweep, z0)
        assert s.kind == "scattering_S"
        assert s.samples[0, 0, 0] == pytest.approx(0.0, abs=1e-15)
        assert s.samples[1, 0, 0] == pytest.approx(1.0, abs=1e-10)
        assert s.samples[2, 0, 0] == pytest.approx(-1.0)

    def test_requires_square_impedance(self, service):
        with pytest.raises(ValidationError):
            service.h_to_s(sweep_of(np.ones((2, 1, 2))), 50.0)
        with pytest.raises(ValidationError):
            service.h_to_s(sweep_of([1.0], kind="scattering_S"), 50.0)
        with pytest.raises(ValidationError):
            service.h_to_s(sweep_of([1.0]), 0.0)

    def test_singular_denominator(self, service):
        with pytest.raises(SingularMatrixError):
            service.h_to_s(sweep_of([-50.0]), 50.0)

    def test_passive_fixture_is_contractive(self, service, coupled_pair_system):
        sweep = service.evaluate_tf(coupled_pair_system, FrequencyGrid(1e8, 1e10, 20))
        s = service.h_to_s(sweep, 50.0)
        for matrix in s.samples:
            assert np.linalg.norm(matrix, 2) <= 1 + 1e-6


class TestExport:
    def test_touchstone_one_port_line_count(self, service):
        s = service.h_to_s(sweep_of([10.0, 20.0]), 50.0)
        text = service.export_sweep(s, "touchstone").decode()
        data = [l for l in text.splitlines() if l and not l.startswith(("!", "#"))]
        assert "# Hz S RI R 50" in text.splitlines()
        assert len(data) == 2

    def test_touchstone_needs_scattering(self, service):
        with pytest.raises(ValidationError):
            service.export_sweep(sweep_of([1.0]), "touchstone")

    def test_unknown_format(self, service):
        with pytest.raises(ValidationError):
            service.export_sweep(sweep_of([1.0]), "xlsx")

    def test_csv_and_touchstone_reparse(self, service, coupled_pair_system):
        sweep = service.evaluate_tf(coupled_pair_system, FrequencyGrid(1e8, 1e10, 5))
        again = service.read_sweep(service.export_sweep(sweep, "csv"), "csv")
        assert again.kind == "impedance_H"
        assert np.max(np.abs(again.samples - sweep.samples)) <= 1e-12 * np.max(np.abs(sweep.samples))
        s = service.h_to_s(sweep, 50.0)
        parsed = service.read_sweep(service.export_sweep(s, "touchstone"), "touchstone", ports=2)
        assert parsed.z0 == 50.0
        assert np.max(np.abs(parsed.samples - s.samples)) <= 1e-12
        assert parsed.frequencies == pytest.approx(s.frequencies, rel=1e-15)

    def test_plot_csv(self, service):
        text = service.export_sweep(sweep_of([10.0, -1.0j]), "plot").decode()
        rows = text.splitlines()
        assert rows[0] == "f_hz,i,j,magnitude_db,phase_deg"
        assert rows[1].split(",")[1:] == ["1", "1", "20", "0"]
        assert float(rows[2].split(",")[4]) == pytest.approx(-90.0)

    def test_touchstone_suffix(self, service):
        assert service.touchstone_suffix(sweep_of(np.ones((1, 3, 3)))) == ".s3p"
