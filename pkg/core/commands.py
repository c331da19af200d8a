"""Command handlers for RLCk MOR.

Each ``cmd_*`` method runs one batch command against a validated RunConfig,
writes its artifacts atomically into ``config.out_dir`` and returns the
summary mapping. ``CommandRunner.run`` is the only place where errors turn
into exit codes.
"""
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from core.branding import Branding
from core.errors import MorError, NumericalError, ValidationError
from core.logger import Logger
from core.settings import RunConfig
from services.dense_bt_service import DenseBtService, OrderRequest, Rom, tail_bounds
from services.eksm_service import EksmConfig, EksmService, write_trace_csv
from services.frequency_service import FrequencyGrid, FrequencyService
from services.generator_service import GeneratorService
from services.mna_service import DescriptorSystem, MnaService
from utils.file_utils import write_atomic, write_json
from utils.path_utils import ROM_BUNDLE, classify_model_path, output_file


Model = Union[DescriptorSystem, Rom]

EXIT_OK = 0
EXIT_VALIDATION = ValidationError.exit_code
EXIT_NUMERICAL = NumericalError.exit_code


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return format(value, '.17g')
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def format_summary(summary: Dict[str, Any]) -> str:
    """``key=value`` lines in sorted key order."""
    return "".join(f"{key}={_fmt(summary[key])}\n" for key in sorted(summary))


class CommandRunner:
    """Runs batch commands and maps failures to exit codes."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.logger = Logger()
        self.mna = MnaService()
        self.dense = DenseBtService()
        self.eksm = EksmService()
        self.frequency = FrequencyService()
        self.generator = GeneratorService()

    def run(self, command: Callable[..., Dict[str, Any]], *args, **kwargs) -> int:
        """
        Execute a handler and return its exit code.

        Returns:
            0 on success, 2 on validation errors, 3 on numerical failures
        """
        try:
            command(*args, **kwargs)
            return EXIT_OK
        except MorError as e:
            self.logger.error(str(e))
            print(f"error: {e}", file=sys.stderr)
            return e.exit_code
        except np.linalg.LinAlgError as e:
            self.logger.error(f"linear algebra failure: {e}")
            print(f"error: linear algebra failure: {e}", file=sys.stderr)
            return EXIT_NUMERICAL
        except OSError as e:
            self.logger.error(f"I/O failure: {e}")
            print(f"error: {e}", file=sys.stderr)
            return EXIT_VALIDATION

    # ---- helpers ----

    def grid(self, model: Model) -> FrequencyGrid:
        """The run grid; an automatic f_max is fixed from ``model`` on first use."""
        if self.config.f_max_auto:
            self.config.f_max = self.frequency.auto_f_max(model, self.config.f_min)
            self.config.f_max_auto = False
        return FrequencyGrid(self.config.f_min, self.config.f_max, self.config.points, self.config.spacing)

    def load_model(self, path: str) -> Model:
        """Netlist, matrix bundle or ROM bundle."""
        if classify_model_path(path) == ROM_BUNDLE:
            return self.dense.read_rom_bundle(path)
        c_min = self.config.c_min if self.config.regularize else None
        return self.mna.load_system(path, c_min=c_min)

    def write_summary(self, summary: Dict[str, Any]):
        write_atomic(output_file(self.config.out_dir, "summary.txt"), format_summary(summary))
        write_json(output_file(self.config.out_dir, "summary.json"), summary)

    def _timed(self, started: float, summary: Dict[str, Any]):
        if self.config.record_timing:
            summary["wall_time_s"] = round(time.perf_counter() - started, 6)

    def _print(self, summary: Dict[str, Any]):
        print(format_summary(summary), end="")

    # ---- commands ----

    def cmd_reduce(self, input_path: str) -> Dict[str, Any]:
        """Reduce a model; writes ``rom/``, ``trace.csv`` (eksm) and the summary."""
        started = time.perf_counter()
        system = self.load_model(input_path)
        if isinstance(system, Rom):
            system = system.as_descriptor()
        grid = self.grid(system)
        summary: Dict[str, Any] = {
            "command": "reduce",
            "input": input_path,
            "method": self.config.method,
            "N": system.N, "n": system.n, "m": system.m, "p": system.p, "q": system.q,
            "tol": self.config.tol, "target_error": self.config.target_error,
            "f_min": grid.f_min, "f_max": grid.f_max,
        }

        if self.config.method == "dense":
            rom = self.dense.reduce_dense(system, OrderRequest.target_error(self.config.target_error))
            summary.update({"iterations": 0, "stop_reason": "dense",
                            "peak_basis_p": system.N, "peak_basis_q": system.N})
        else:
            rom, trace = self.eksm.reduce_eksm(system, EksmConfig.from_run_config(self.config))
            write_atomic(output_file(self.config.out_dir, "trace.csv"), write_trace_csv(trace))
            summary.update({"iterations": trace.iterations, "stop_reason": trace.stop_reason,
                            "peak_basis_p": trace.peak_basis_p, "peak_basis_q": trace.peak_basis_q})

        self.dense.write_rom_bundle(rom, output_file(self.config.out_dir, "rom"))
        error = self.frequency.max_relative_error(self.frequency.evaluate_tf(system, grid),
                                                  self.frequency.evaluate_tf(rom, grid))
        summary.update({
            "r": rom.r,
            "apriori_bound": rom.apriori_bound,
            "max_relative_error": error,
            "compression": system.N / rom.r,
        })
        self._timed(started, summary)
        self.write_summary(summary)
        self._print(summary)
        self.logger.info(f"reduce: N={system.N} -> r={rom.r} ({summary['stop_reason']})")
        return summary

    def cmd_compare(self, path_a: str, path_b: str) -> Dict[str, Any]:
        """
        Compare two models on the grid; prints the per-frequency table and
        writes it to ``comparison.csv`` next to the summary.

        Square models are also compared as S-parameters at ``z0``.
        """
        started = time.perf_counter()
        model_a = self.load_model(path_a)
        model_b = self.load_model(path_b)
        if (model_a.p, model_a.q) != (model_b.p, model_b.q):
            raise ValidationError(f"port mismatch: {path_a} has p={model_a.p}, q={model_a.q}; "
                                  f"{path_b} has p={model_b.p}, q={model_b.q}")
        grid = self.grid(model_a)
        sweep_a = self.frequency.evaluate_tf(model_a, grid)
        sweep_b = self.frequency.evaluate_tf(model_b, grid)
        comparison = self.frequency.compare_sweeps(sweep_a, sweep_b)

        worst_f, worst_i, worst_j = comparison.worst_entry
        summary: Dict[str, Any] = {
            "command": "compare",
            "model_a": path_a,
            "model_b": path_b,
            "points": grid.l,
            "f_min": grid.f_min,
            "f_max": grid.f_max,
            "max_relative_error": comparison.max_relative_error,
            "worst_entry_deviation": comparison.worst_entry_deviation,
            "worst_entry_f_hz": worst_f,
            "worst_entry_i": worst_i,
            "worst_entry_j": worst_j,
        }

        columns = [comparison.frequencies, comparison.relative_errors]
        header = "f_hz,relative_error"
        if model_a.p == model_a.q:
            s_a = self.frequency.h_to_s(sweep_a, self.config.z0)
            s_b = self.frequency.h_to_s(sweep_b, self.config.z0)
            s_deviation, (s_f, s_i, s_j) = self.frequency.worst_entry(s_a, s_b)
            columns.append(np.max(np.abs(s_a.samples - s_b.samples), axis=(1, 2)))
            header += ",s_deviation"
            summary.update({
                "z0": self.config.z0,
                "worst_s_entry_deviation": s_deviation,
                "worst_s_entry_f_hz": s_f,
                "worst_s_entry_i": s_i,
                "worst_s_entry_j": s_j,
            })
        table = "\n".join([header] + [",".join(_fmt(float(value)) for value in row)
                                      for row in zip(*columns)]) + "\n"
        write_atomic(output_file(self.config.out_dir, "comparison.csv"), table)

        if isinstance(model_b, Rom):
            floor = min(float(np.linalg.norm(h, 2)) for h in sweep_a.samples)
            summary["apriori_bound"] = model_b.apriori_bound
            # relative-error ceiling implied by the a-priori bound
            summary["bound_slack"] = model_b.apriori_bound / floor if floor > 0 else float("inf")
        self._timed(started, summary)
        self.write_summary(summary)
        print(table, end="")
        self._print(summary)
        return summary

    def cmd_hsv(self, input_path: str) -> Dict[str, Any]:
        """Hankel singular values and truncation bounds; writes ``hsv.csv``."""
        started = time.perf_counter()
        system = self.load_model(input_path)
        if isinstance(system, Rom):
            system = system.as_descriptor()
        if self.config.method == "dense":
            hsv = self.dense.hankel_singular_values(self.dense.solve_gramians_dense(system))
        else:
            zp, zq, _ = self.eksm.eksm_gramian_factors(system, EksmConfig.from_run_config(self.config))
            hsv = self.dense.hsv_from_factors(zp, zq)
        if len(hsv) == 0:
            raise NumericalError("model has no nonzero Hankel singular values")

        bounds = tail_bounds(hsv)
        lines = ["r,sigma,tail_bound"]
        lines += [f"{i},{_fmt(float(sigma))},{_fmt(float(bounds[i]))}"
                  for i, sigma in enumerate(hsv.sigmas, start=1)]
        write_atomic(output_file(self.config.out_dir, "hsv.csv"), "\n".join(lines) + "\n")

        summary: Dict[str, Any] = {
            "command": "hsv",
            "input": input_path,
            "method": self.config.method,
            "N": system.N,
            "count": len(hsv),
            "numerical_rank": hsv.numerical_rank(),
            "sigma_max": float(hsv.sigmas[0]),
            "total": float(np.sum(hsv.sigmas)),
        }
        self._timed(started, summary)
        self.write_summary(summary)
        self._print(summary)
        return summary

    def cmd_gen(self, kind: str, size: int, ports: int = 1, density: float = 0.3,
                output: Optional[str] = None) -> Dict[str, Any]:
        """Write a generated benchmark netlist."""
        text = self.generator.generate(kind, size, ports=ports, seed=self.config.seed, density=density)
        target = output or output_file(self.config.out_dir, f"{kind}_{size}_p{ports}_s{self.config.seed}.sp")
        write_atomic(target, text)
        netlist_path = str(Path(target))
        print(netlist_path)
        return {"command": "gen", "kind": kind, "size": size, "ports": ports,
                "seed": self.config.seed, "output": netlist_path}

    def cmd_sweep(self, input_path: str, formats: Optional[List[str]] = None) -> Dict[str, Any]:
        """
        Evaluate a model on the grid; writes ``sweep.csv`` (H), ``sweep_plot.csv``
        and, for square models, ``sweep.s<p>p`` (S at z0).
        """
        started = time.perf_counter()
        formats = formats or ["csv", "plot", "touchstone"]
        model = self.load_model(input_path)
        sweep = self.frequency.evaluate_tf(model, self.grid(model))
        written = []
        if "csv" in formats:
            written.append(write_atomic(output_file(self.config.out_dir, "sweep.csv"),
                                        self.frequency.export_sweep(sweep, "csv")))
        if "plot" in formats:
            written.append(write_atomic(output_file(self.config.out_dir, "sweep_plot.csv"),
                                        self.frequency.export_sweep(sweep, "plot")))
        if "touchstone" in formats:
            if model.p != model.q:
                self.logger.warning(f"skipping Touchstone export: model is {model.q}x{model.p}")
            else:
                s_params = self.frequency.h_to_s(sweep, self.config.z0)
                name = "sweep" + self.frequency.touchstone_suffix(s_params)
                written.append(write_atomic(output_file(self.config.out_dir, name),
                                            self.frequency.export_sweep(s_params, "touchstone")))

        summary: Dict[str, Any] = {
            "command": "sweep",
            "input": input_path,
            "points": len(sweep.frequencies),
            "p": model.p,
            "q": model.q,
            "z0": self.config.z0,
            "files": [p.name for p in written],
            "generator": Branding.get_banner(),
        }
        self._timed(started, summary)
        self.write_summary(summary)
        self._print(summary)
        return summary
