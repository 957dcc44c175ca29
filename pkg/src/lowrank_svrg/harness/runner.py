"""Experiment runners producing byte-reproducible CSV tables.

Every trial is an independent task: its data seed is ``base_seed + trial``
and its solver seed is derived from that. Results are gathered in trial
order before anything is written, so running trials in parallel never
changes the output bytes.
"""

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from lowrank_svrg.datagen import gen_ground_truth, gen_problem
from lowrank_svrg.errors import DivergenceError
from lowrank_svrg.solvers import gd_solve, init_solve, svrg_solve

__all__ = [
    "CONVERGENCE_HEADER",
    "PHASE_HEADER",
    "STAT_ERROR_HEADER",
    "GRID_HEADER",
    "AllTrialsDiverged",
    "TrialResult",
    "effective_passes",
    "metrics",
    "rescaled_unit",
    "run_trial",
    "run_convergence",
    "run_phase",
    "run_stat_error",
    "run_grid",
    "run_experiment",
]

log = logging.getLogger(__name__)

CONVERGENCE_HEADER = [
    "experiment", "model", "solver", "trial", "stage",
    "effective_passes", "rel_sq_err", "mse", "objective",
]
PHASE_HEADER = [
    "experiment", "model", "solver", "rescaled_n", "n_samples",
    "trials", "successes", "success_rate",
]
STAT_ERROR_HEADER = ["experiment", "model", "solver", "n_samples", "mean_err", "std_err", "trials"]
GRID_HEADER = [
    "experiment", "model", "solver", "n_components", "m", "step_coef",
    "trials", "reached", "mean_passes", "mean_final_rel_sq_err", "best",
]
SOLVER_TAG = 0x94D049BB133111EB


class AllTrialsDiverged(RuntimeError):
    pass


@dataclass
class TrialResult:
    trial: int
    rel_sq_err: float
    mse: float
    success: bool
    trace: object = None
    diverged: bool = False


def effective_passes(s, m, b, N):
    """Data passes after ``s`` SVRG stages of ``m`` inner steps on batches of ``b``."""
    return s * (1.0 + m * b / N)


def metrics(Xhat, gt):
    """Return ``(relative squared error, mean squared error)`` of ``Xhat``."""
    Xhat = np.asarray(Xhat, dtype=np.float64)
    if Xhat.shape != gt.Xstar.shape:
        raise ValueError(f"estimate has shape {Xhat.shape}, truth is {gt.Xstar.shape}")
    err = float(np.sum((Xhat - gt.Xstar) ** 2))
    return err / gt.fro_norm_sq, err / Xhat.size


def rescaled_unit(spec):
    """Sample count of one rescaled unit: ``r d'`` (sensing) or ``r d' log d'``."""
    g = spec.gen
    d = max(g["d1"], g["d2"])
    unit = g["r"] * d
    return unit if spec.model == "sensing" else unit * math.log(d)


def round_samples(N, n):
    """Nearest positive multiple of the component count ``n``."""
    return max(n, n * int(round(N / n)))


def _alpha(spec, gt):
    rule = spec.rule
    if rule == "none" or spec.model == "sensing":
        return None
    if rule == "inf_norm":
        return gt.inf_norm
    return max(gt.inf_norm, gt.factor_row_bound)


def _solver_seed(data_seed):
    return (data_seed ^ SOLVER_TAG) & ((1 << 64) - 1)


def run_trial(spec, trial, N=None, solvers=None):
    """Generate one dataset, initialize, and run the selected solvers.

    Returns ``{solver: TrialResult}``. A diverging solver yields a result with
    ``diverged=True`` and infinite errors rather than raising.
    """
    seed = spec.base_seed + trial
    N = round_samples(N if N is not None else spec.gen.get("N", spec.n_components), spec.n_components)
    gspec = spec.gen_spec(seed, N)
    gt = gen_ground_truth(gspec)
    P = gen_problem(gt, gspec, alpha=_alpha(spec, gt))
    out = {}
    try:
        Z0 = init_solve(P, gspec.r, spec.init)
    except DivergenceError as exc:
        log.warning("trial %d: initialization failed: %s", trial, exc)
        Z0 = None
    for name in solvers or spec.solvers:
        try:
            if Z0 is None or not np.all(np.isfinite(Z0.stacked())):
                raise DivergenceError("initialization produced a non-finite iterate")
            if name == "svrg":
                cfg = replace(spec.svrg, seed=_solver_seed(seed))
                Z, trace = svrg_solve(P, Z0, cfg, oracle=gt)
            else:
                Z, trace = gd_solve(P, Z0, spec.gd, oracle=gt)
        except (DivergenceError, FloatingPointError, ValueError) as exc:
            log.warning("trial %d, %s diverged: %s", trial, name, exc)
            out[name] = TrialResult(trial, math.inf, math.inf, False, None, True)
            continue
        rel, mse = metrics(Z.product(), gt)
        out[name] = TrialResult(trial, rel, mse, math.sqrt(rel) < spec.success_threshold, trace)
    return out


def _task(args):
    spec, trial, N = args
    with np.errstate(over="ignore", invalid="ignore"):
        return run_trial(spec, trial, N)


def _gather(spec, N=None):
    tasks = [(spec, t, N) for t in range(spec.trials)]
    if spec.jobs > 1:
        with ProcessPoolExecutor(spec.jobs) as pool:
            return list(pool.map(_task, tasks))
    return [_task(t) for t in tasks]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def _to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _check_any_finished(results_per_point):
    if all(r.diverged for results in results_per_point for res in results for r in res.values()):
        raise AllTrialsDiverged("every trial diverged")


def run_convergence(spec):
    """Error-versus-passes curves: one row per trace point, then per-stage means.

    Mean rows (``trial == "mean"``) average the non-diverged trials and are
    omitted for a single-trial experiment.
    """
    results = _gather(spec)
    _check_any_finished([results])
    rows = []
    for solver in spec.solvers:
        finished = [res[solver] for res in results if not res[solver].diverged]
        for res in results:
            tr = res[solver]
            if tr.diverged:
                continue
            for p in tr.trace:
                rows.append([spec.name, spec.model, solver, tr.trial, p.stage,
                             p.effective_passes, p.rel_sq_err, p.mse, p.objective])
        # A single trial is its own mean.
        if not finished or spec.trials == 1:
            continue
        # Trials share S and m, so trace points align stage by stage.
        for k in range(min(len(r.trace) for r in finished)):
            pts = [r.trace[k] for r in finished]
            rows.append([
                spec.name, spec.model, solver, "mean", pts[0].stage, pts[0].effective_passes,
                float(np.mean([p.rel_sq_err for p in pts])),
                float(np.mean([p.mse for p in pts])),
                float(np.mean([p.objective for p in pts])),
            ])
    return _to_csv(CONVERGENCE_HEADER, rows)


def run_phase(spec):
    """Empirical exact-recovery rate over a rescaled sample-size grid."""
    unit = rescaled_unit(spec)
    per_point = []
    for k in spec.sweep:
        N = round_samples(k * unit, spec.n_components)
        per_point.append((k, N, _gather(spec, N)))
    _check_any_finished([r for _, _, r in per_point])
    rows = []
    for solver in spec.solvers:
        for k, N, results in per_point:
            succ = sum(res[solver].success for res in results)
            rows.append([spec.name, spec.model, solver, float(k), N, spec.trials, succ,
                         succ / spec.trials])
    return _to_csv(PHASE_HEADER, rows)


def _std(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def run_stat_error(spec):
    """Mean and sample standard deviation of the final error for each ``N``.

    The error is the relative squared error, except for completion where it
    is the mean squared error. Diverged trials are left out of both.
    """
    per_point = []
    for N in spec.sweep:
        N = round_samples(N, spec.n_components)
        per_point.append((N, _gather(spec, N)))
    _check_any_finished([r for _, r in per_point])
    rows = []
    for solver in spec.solvers:
        for N, results in per_point:
            done = [res[solver] for res in results if not res[solver].diverged]
            errs = [r.mse if spec.model == "completion" else r.rel_sq_err for r in done]
            mean = float(np.mean(errs)) if errs else math.inf
            rows.append([spec.name, spec.model, solver, N, mean, _std(errs), len(errs)])
    return _to_csv(STAT_ERROR_HEADER, rows)


def _passes_to(trace, target):
    for p in trace:
        if p.rel_sq_err <= target:
            return p.effective_passes
    return math.inf


def grid_cells(spec):
    """Yield ``(solver, n_components, m, step_coef, spec_for_cell)`` for the sweep."""
    g = spec.grid
    N = spec.gen.get("N", spec.n_components)
    if "svrg" in spec.solvers:
        for n in g.n_components:
            if n > N:
                continue
            for mf in g.m_factor:
                m = max(1, int(round(mf * n)))
                S = max(1, int(g.max_passes // (1.0 + m / n)))
                for c in g.svrg_step_coef:
                    cfg = replace(spec.svrg, step_coef=c, m=m, S=S, eta=None)
                    yield "svrg", n, m, c, spec.replace(n_components=n, svrg=cfg, solver="svrg")
    if "gd" in spec.solvers:
        for c in g.gd_step_coef:
            cfg = replace(spec.gd, step_coef=c, T=int(g.max_passes), eta=None)
            yield "gd", spec.n_components, "", c, spec.replace(gd=cfg, solver="gd")


def run_grid(spec):
    """Tune step coefficient, component count and inner length on ``gen.N``.

    Each cell is scored by the mean number of effective passes its trials need
    to reach ``grid.target`` relative squared error (infinite if any trial
    misses), ties broken by mean final error. ``best`` flags the winning cell
    of each solver.
    """
    target = spec.grid.target
    scored = []
    for solver, n, m, c, cell in grid_cells(spec):
        results = _gather(cell)
        runs = [res[solver] for res in results]
        passes = [math.inf if r.diverged else _passes_to(r.trace, target) for r in runs]
        reached = sum(math.isfinite(p) for p in passes)
        mean_passes = float(np.mean(passes)) if reached == len(passes) else math.inf
        final = float(np.mean([r.rel_sq_err for r in runs]))
        scored.append([spec.name, spec.model, solver, n, m, c, spec.trials, reached,
                       mean_passes, final])
    for solver in spec.solvers:
        mine = [row for row in scored if row[2] == solver]
        if not mine:
            continue
        best = min(mine, key=lambda row: (row[8], row[9] if math.isfinite(row[9]) else math.inf))
        for row in mine:
            row.append(1 if row is best else 0)
    return _to_csv(GRID_HEADER, scored)


def best_cells(grid_csv):
    """Map each solver to its winning grid row (as a dict of strings)."""
    out = {}
    for row in csv.DictReader(io.StringIO(grid_csv)):
        if row["best"] == "1":
            out[row["solver"]] = row
    return out


RUNNERS = {
    "convergence": run_convergence,
    "phase": run_phase,
    "stat_error": run_stat_error,
    "grid": run_grid,
}


def run_experiment(spec):
    return RUNNERS[spec.kind](spec)
