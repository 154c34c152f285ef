"""Benchmark experiments, reports and their configuration."""

from .analysis import (dof_for_error, fit_slope, kreiss_oliger_constant, local_slopes,
                       max_presaturation_rate, presaturation_count)
from .config import ExperimentSpec, build_spec, load_config, normalize
from .experiments import (dim_comparison, run_converge, run_cost, run_energy, run_experiment,
                          run_fit, run_scale, run_timing, simulate)
from .report import COLUMNS, BenchReport, emit_report, read_csv_report, read_json_report
