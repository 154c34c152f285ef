"""Experiment drivers behind the ``ndgkit`` subcommands.

Each driver takes an ``ExperimentSpec`` and returns a ``BenchReport``.  Rows
run sequentially.  Every timed loop is preceded by one untimed step, and only
the stepping loop itself is timed.  A failing run becomes a row with status
``failed`` instead of aborting the sweep.
"""

import logging
import math


from .._accel import backend_name
from .._version import __version__
from ..errors import DecompositionError, NDGError
from ..grid import Mesh, dump_field, init_euler_subsonic, init_multisine, l2_error
from ..models import EquationModel
from ..partition import _factorizations, decompose, run_partitioned
from ..solver import SolverConfig, advance
from .analysis import (dof_for_error, fit_slope, kreiss_oliger_constant,
                       max_presaturation_rate)
from .report import FAILED, BenchReport, make_metadata

log = logging.getLogger(__name__)


def make_model(spec, equation, dim):
    if equation == "advection":
        return EquationModel.advection(tuple(spec.velocity[:dim]), dim)
    return EquationModel.euler(dim, spec.sound_speed)


def initial_state(spec, mesh, model):
    if model.kind == "advection":
        return init_multisine(mesh, model, spec.nk, amplitudes=spec.amplitudes, seed=spec.seed)
    return init_euler_subsonic(mesh, model, seed=spec.seed)


def _new_report(spec):
    backend = spec.backend or backend_name()
    return BenchReport(spec.experiment, metadata=make_metadata(spec.as_dict(), __version__, backend))


def _row_params(spec, equation, mesh, model, workers, mode, rk=None):
    return dict(
        mode=mode, equation=equation, dim=mesh.spatial_dim, order=mesh.order,
        rk=rk or spec.rk, cells="x".join(str(n) for n in mesh.n_cells), nk=spec.nk,
        seed=spec.seed, cfl=spec.cfl, t_end=spec.t_end, workers=workers,
        transport=spec.transport if workers > 1 else "serial",
        backend=spec.backend or backend_name(), dof=mesh.dof(model.n_var),
    )


def execute(spec, mesh, model, u0, workers=1, steps=None, rk=None, decomposition=None):
    """One warm-up step, then the timed run.  Returns ``(field, stats)``."""
    cfg = SolverConfig(mesh, model, rk=rk or spec.rk, cfl=spec.cfl, end_time=spec.t_end,
                       backend=spec.backend)
    if workers == 1 and decomposition is None:
        advance(cfg, u0, steps=1)
        return advance(cfg, u0, steps=steps)
    decomp = decomposition or decompose(mesh, workers)
    run_partitioned(cfg, workers, u0, transport=spec.transport, steps=1, decomposition=decomp)
    res = run_partitioned(cfg, workers, u0, transport=spec.transport, steps=steps,
                          decomposition=decomp)
    return res.field, res.stats


def _timing_values(stats, dof, workers):
    wall = stats.wall_time
    return dict(steps=stats.steps, dt_min=stats.dt_min, dt_max=stats.dt_max, wall_time=wall,
                time_per_dof=wall / dof, time_per_worker_dof=wall * workers / dof)


def _fail(report, params, exc):
    log.warning("run %s failed: %s", params.get("cells"), exc)
    return report.add(**params, status=FAILED, note=f"{type(exc).__name__}: {exc}")


# --------------------------------------------------------------------------
# error sweeps


def _error_sweep(spec, report, rk=None):
    """Run every (order, cells) pair to ``t_end``; returns ``{order: [(cells, dof, err)]}``."""
    equation = spec.equation[0]
    model = make_model(spec, equation, spec.dim)
    table = {}
    for order in spec.orders:
        table[order] = []
        prev = None
        for n in spec.cells:
            mesh = Mesh(spec.dim, (n,) * spec.dim, order)
            params = _row_params(spec, equation, mesh, model, 1, "run", rk)
            try:
                u0 = initial_state(spec, mesh, model)
                u, stats = execute(spec, mesh, model, u0, rk=rk)
                err = l2_error(mesh, u, u0)
            except NDGError as exc:
                _fail(report, params, exc)
                prev = None
                continue
            slope = None
            if prev is not None and err > 0 and prev[1] > 0:
                slope = -math.log(err / prev[1]) / math.log(n / prev[0])
            report.add(**params, **_timing_values(stats, params["dof"], 1), l2_error=err,
                       slope=slope)
            table[order].append((n, params["dof"], err))
            prev = (n, err)
    return table


def _slope_rows(spec, report, table, rk=None):
    model = make_model(spec, spec.equation[0], spec.dim)
    for order, pts in table.items():
        if not pts:
            continue
        cells = [p[0] for p in pts]
        errs = [p[2] for p in pts]
        slope = fit_slope(cells, errs)
        peak = max_presaturation_rate(cells, errs)
        mesh = Mesh(spec.dim, (cells[-1],) * spec.dim, order)
        params = _row_params(spec, spec.equation[0], mesh, model, 1, "slope", rk)
        params["cells"] = ",".join(str(c) for c in cells)
        params["dof"] = None
        report.add(**params, slope=None if math.isnan(slope) else slope,
                   note=None if math.isnan(peak) else f"max local rate {peak:.4f}")


def run_converge(spec):
    report = _new_report(spec)
    table = _error_sweep(spec, report)
    _slope_rows(spec, report, table)
    return report


def run_cost(spec):
    """Error against dof and wall time for every (order, cells) pair."""
    report = _new_report(spec)
    _error_sweep(spec, report)
    return report


def run_fit(spec):
    report = _new_report(spec)
    table = _error_sweep(spec, report)
    model = make_model(spec, spec.equation[0], spec.dim)
    for order, pts in table.items():
        dofs = [p[1] for p in pts]
        errs = [p[2] for p in pts]
        mesh = Mesh(spec.dim, (1,) * spec.dim, order)
        for target in spec.targets:
            params = _row_params(spec, spec.equation[0], mesh, model, 1, "fit")
            params.update(cells=None, dof=None, target_error=target, reference_c=spec.reference_c)
            dof = dof_for_error(dofs, errs, target) if pts else None
            if dof is None:
                report.add(**params, status="unreachable",
                           note="target outside the measured pre-saturation error range")
                continue
            report.add(**params, fitted_dof=dof, fit_c=kreiss_oliger_constant(dof, target, order))
    return report


def kreiss_oliger_summary(report):
    """``{order: [c, ...]}`` over the reachable fit rows."""
    out = {}
    for row in report.select(mode="fit", status="ok"):
        out.setdefault(row["order"], []).append(row["fit_c"])
    return out


# --------------------------------------------------------------------------
# fixed-step timing


def _timed_row(spec, report, equation, mesh, workers, mode, decomposition=None, **extra):
    model = make_model(spec, equation, mesh.spatial_dim)
    params = _row_params(spec, equation, mesh, model, workers, mode)
    try:
        u0 = initial_state(spec, mesh, model)
        _, stats = execute(spec, mesh, model, u0, workers=workers, steps=spec.steps,
                           decomposition=decomposition)
    except DecompositionError as exc:
        return report.add(**params, status="skipped", note=str(exc))
    except NDGError as exc:
        return _fail(report, params, exc)
    return report.add(**params, **_timing_values(stats, params["dof"], workers), **extra)


def run_timing(spec):
    report = _new_report(spec)
    for equation in spec.equation:
        for order in spec.orders:
            for n in spec.cells:
                mesh = Mesh(spec.dim, (n,) * spec.dim, order)
                for p in spec.workers:
                    _timed_row(spec, report, equation, mesh, p, "timing")
    return report


def weak_grid(cells_per_worker, workers, dim):
    """Global cell counts giving every one of ``workers`` blocks ``cells_per_worker`` cells per axis."""
    # every layout has the same block surface here, so prefer the most balanced one
    best = min(_factorizations(workers, dim), key=lambda c: (max(c) - min(c), c))
    return tuple(cells_per_worker * p for p in best)


def matched_cells(target_dof, order, dim, n_var):
    """Cells per axis whose dof is closest to ``target_dof``."""
    per_cell = order**dim * n_var
    guess = max(1, round((target_dof / per_cell) ** (1.0 / dim)))
    cands = [m for m in (guess - 1, guess, guess + 1) if m >= 1]
    return min(cands, key=lambda m: abs(m**dim * per_cell - target_dof))


def _speedups(rows, key):
    base = {}
    for r in rows:
        if r["status"] == "ok" and r["workers"] == 1:
            base[r[key]] = r["wall_time"]
    return base


def run_scale(spec):
    report = _new_report(spec)
    equation = spec.equation[0]
    order = spec.orders[0]

    strong = []
    for n in spec.cells:
        mesh = Mesh(spec.dim, (n,) * spec.dim, order)
        for p in spec.workers:
            row = _timed_row(spec, report, equation, mesh, p, "strong")
            if row is not None:
                strong.append(row)
    base = _speedups(strong, "cells")
    for r in strong:
        if r["status"] == "ok" and r["cells"] in base:
            r["speedup"] = base[r["cells"]] / r["wall_time"]
            r["efficiency"] = r["speedup"] / r["workers"]

    for n in spec.weak_cells:
        weak = []
        for p in spec.workers:
            mesh = Mesh(spec.dim, weak_grid(n, p, spec.dim), order)
            decomp = decompose(mesh, p)
            if any(b.shape != (n,) * spec.dim for b in decomp.blocks):
                report.add(mode="weak", workers=p, status="skipped",
                           note="no decomposition with equal per-worker blocks")
                continue
            row = _timed_row(spec, report, equation, mesh, p, "weak", decomposition=decomp)
            if row is not None:
                weak.append(row)
        ref = [r for r in weak if r["status"] == "ok" and r["workers"] == 1]
        for r in weak:
            if ref and r["status"] == "ok":
                # efficiency at fixed work per worker: ideal keeps wall time constant
                r["efficiency"] = ref[0]["wall_time"] / r["wall_time"]

    if spec.compare_dims and spec.dim in (2, 3):
        dim_comparison(spec, report, spec.cells[0], order)
    return report


def dim_comparison(spec, report, cells_2d, order, equations=None):
    """Serial 2D and 3D runs of each equation at (nearly) matched dof."""
    for equation in equations or spec.equation:
        m2 = make_model(spec, equation, 2)
        mesh2 = Mesh(2, (cells_2d,) * 2, order)
        m3 = make_model(spec, equation, 3)
        n3 = matched_cells(mesh2.dof(m2.n_var), order, 3, m3.n_var)
        mesh3 = Mesh(3, (n3,) * 3, order)
        for mesh in (mesh2, mesh3):
            _timed_row(spec, report, equation, mesh, 1, "dims")
    return report


# --------------------------------------------------------------------------
# energy


def _energy_rows(spec, report, params, timing, extra=None):
    if not spec.power_watts:
        return report.add(**params, **timing, **(extra or {}))
    for device, watts in spec.power_watts.items():
        energy = watts * timing["wall_time"]
        report.add(**params, **timing, **(extra or {}), device=device, power_watts=watts,
                   energy=energy, energy_per_dof=energy / params["dof"])


def run_energy(spec):
    """TDP energy estimates for fixed-step runs and for whole runs to ``t_end``."""
    report = _new_report(spec)
    if not spec.power_watts:
        report.add(mode="warning", status="warning",
                   note="no power rating configured; energy columns omitted")
    equation = spec.equation[0]
    for order in spec.orders:
        for n in spec.cells:
            mesh = Mesh(spec.dim, (n,) * spec.dim, order)
            model = make_model(spec, equation, spec.dim)
            u0 = initial_state(spec, mesh, model)
            for mode, steps in (("steps", spec.steps), ("simulation", None)):
                params = _row_params(spec, equation, mesh, model, spec.workers[0], mode)
                try:
                    _, stats = execute(spec, mesh, model, u0, workers=spec.workers[0], steps=steps)
                except NDGError as exc:
                    _fail(report, params, exc)
                    continue
                _energy_rows(spec, report, params,
                             _timing_values(stats, params["dof"], spec.workers[0]))
    return report


# --------------------------------------------------------------------------
# single run


def simulate(spec, steps=None):
    """One run of the first configured case; optionally dumps the final field."""
    report = _new_report(spec)
    equation = spec.equation[0]
    mesh = Mesh(spec.dim, (spec.cells[0],) * spec.dim, spec.orders[0])
    model = make_model(spec, equation, spec.dim)
    workers = spec.workers[0]
    params = _row_params(spec, equation, mesh, model, workers, "simulate")
    try:
        u0 = initial_state(spec, mesh, model)
        u, stats = execute(spec, mesh, model, u0, workers=workers, steps=steps)
    except NDGError as exc:
        _fail(report, params, exc)
        return report, None
    note = None
    if spec.dump:
        dump_field(spec.dump, u, mesh, model.n_var)
        note = f"field written to {spec.dump}"
    report.add(**params, **_timing_values(stats, params["dof"], workers),
               l2_error=l2_error(mesh, u, u0), note=note)
    return report, u


RUNNERS = {
    "converge": run_converge,
    "cost": run_cost,
    "fit": run_fit,
    "timing": run_timing,
    "scale": run_scale,
    "energy": run_energy,
}


def run_experiment(spec, steps=None):
    if spec.experiment == "simulate":
        return simulate(spec, steps=steps)[0]
    return RUNNERS[spec.experiment](spec)
