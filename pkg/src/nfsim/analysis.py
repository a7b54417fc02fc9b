"""Monte-Carlo convergence experiments and their statistics.

Experiment runners simulate replicated jump paths against deterministic
reference solutions and assemble ExperimentReports: per-n error means with
standard errors, fitted log-log rates versus the maximum cell diameter, the
martingale CLT statistics, and the quantitative bounds used as invariants
(component mean bound, martingale second-moment bound).

Error norms, the master-equation oracle and the moment ODE systems live in
fields/oracle/moments and are re-exported here for a single analysis
surface.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sstats

from ._parallel import run_replicates
from .errors import InvalidArgumentError
from .fields import (NormSpec, Trajectory, cell_integrals,
                     cosine_coefficient_matrix, dual_sobolev_error,
                     dual_sobolev_norm, l2_error, l2_norm, restrict_values)
from .jump import (JumpPath, martingale_path, quadratic_characteristic,
                   replicate_rng, rescale_martingale, simulate_path,
                   simulate_path_bounded)
from .model import MacroModel, MicroModel, discrete_initial_condition
from .moments import MomentODEState, moment_odes_langevin, moment_odes_markov
from .oracle import TruncatedLaw, master_equation_oracle
from .solver import (FieldProblem, SolverConfig, solve_bounded_limit,
                     solve_wilson_cowan)
from .spde import CovarianceForm

__all__ = [
    "ExperimentReport",
    "FitResult",
    "fit_rate",
    "lln_experiment",
    "infinite_time_experiment",
    "clt_experiment",
    "oracle_check",
    "component_mean_check",
    "martingale_bound_check",
    "l2_error",
    "dual_sobolev_error",
    "NormSpec",
    "master_equation_oracle",
    "moment_odes_markov",
    "moment_odes_langevin",
]


# ---------------------------------------------------------------------------
# reports

@dataclass
class ExperimentReport:
    """Plain data: ladder rows, fitted rate, test statistics, pass/fail flags."""

    kind: str
    rows: list = field(default_factory=list)
    slope: float | None = None
    slope_ci: tuple | None = None
    stats: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        cols = list(self.rows[0].keys())
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True)
class FitResult:
    slope: float
    ci_low: float
    ci_high: float
    intercept: float


def fit_rate(delta_plus, errors, n_boot: int = 500, seed: int = 0) -> FitResult:
    """Least-squares slope of log(error) against log(delta_plus), with a
    residual-bootstrap 95% confidence interval."""
    x = np.log(np.asarray(delta_plus, dtype=float))
    y = np.asarray(errors, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise InvalidArgumentError("rate fit needs >= 3 ladder points")
    if np.any(y <= 0) or np.unique(x).size < 3:
        raise InvalidArgumentError("rate fit needs positive errors and a non-degenerate ladder")
    y = np.log(y)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rng = np.random.default_rng(seed)
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        yb = A @ coef + rng.choice(resid, size=resid.size, replace=True)
        slopes[b] = np.linalg.lstsq(A, yb, rcond=None)[0][0]
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return FitResult(float(coef[0]), float(lo), float(hi), float(coef[1]))


# ---------------------------------------------------------------------------
# path-versus-reference errors

def _path_sup_error(path: JumpPath, ref: Trajectory, grid: np.ndarray,
                    coeff: np.ndarray | None, weights: np.ndarray | None) -> float:
    """sup over the jump skeleton plus the grid of ||nu^n_t - nu(t)||.

    Exact in the piecewise-constant path (both one-sided limits at every
    jump are evaluated); the smooth reference contributes an O(grid spacing)
    bias, as documented.
    """
    ts = np.unique(np.concatenate([[0.0, path.T], path.times, grid]))
    fr = path.fractions()
    right = fr[np.searchsorted(path.times, ts, side="right")]
    left = fr[np.searchsorted(path.times, ts, side="left")]
    refs = ref.at_many(ts)
    sup = 0.0
    for diff in (right - refs, left - refs):
        if coeff is None:
            err2 = (diff ** 2) @ path.model.partition.measures
        else:
            c = diff @ coeff.T
            err2 = (c ** 2) @ weights
        sup = max(sup, float(np.sqrt(err2.max())))
    return sup


def _norm_machinery(norm: NormSpec, micro: MicroModel):
    if norm.alpha == 0.0:
        return None, None
    coeff = cosine_coefficient_matrix(micro.partition, norm.modes)
    a, b = micro.partition.domain.bounds[0]
    k = np.arange(norm.modes + 1)
    weights = (1.0 + (math.pi * k / (b - a)) ** 2) ** (-norm.alpha)
    return coeff, weights


def _lln_replicate(payload, r: int) -> float:
    micro, theta0, T, seed, bounded, ref, grid, coeff, weights = payload
    sim = simulate_path_bounded if bounded else simulate_path
    path = sim(micro, theta0, T, replicate_rng(seed, r))
    return _path_sup_error(path, ref, grid, coeff, weights)


def _reference_trajectory(macro: MacroModel, micros, nu0, T: float,
                          bounded: bool, solver_cfg: SolverConfig | None) -> Trajectory:
    ns = [m.partition.n_cells for m in micros]
    m_grid = int(np.lcm.reduce(ns))
    while m_grid < max(4 * max(ns), 256):
        m_grid *= 2
    cfg = solver_cfg or SolverConfig(m=m_grid)
    if cfg.m != m_grid:
        cfg = SolverConfig(m=m_grid, dt=cfg.dt, scheme=cfg.scheme,
                           quad_order=cfg.quad_order, store_every=cfg.store_every)
    solve = solve_bounded_limit if bounded else solve_wilson_cowan
    return solve(nu0, macro, T, cfg)


def lln_experiment(macro: MacroModel, micros, nu0, T: float, replicates: int,
                   norm: NormSpec, seed: int, bounded: bool = False,
                   solver_cfg: SolverConfig | None = None, workers=None,
                   grid_points: int = 256) -> ExperimentReport:
    """Monte-Carlo estimate of E sup_t ||nu^n_t - nu(t)|| down a model ladder.

    nu0 is the continuum initial condition (callable or scalar); each micro
    model starts from its argmin-matched count vector. The report rows carry
    (n, delta_plus, ell_minus, err_mean, err_se) and the fitted rate against
    delta_plus.
    """
    reference = _reference_trajectory(macro, micros, nu0, T, bounded, solver_cfg)
    grid = np.linspace(0.0, T, grid_points)
    report = ExperimentReport(
        kind="lln-bounded" if bounded else "lln",
        meta={"T": T, "replicates": replicates, "alpha": norm.alpha,
              "seed": seed, "bounded": bounded})
    for micro in micros:
        theta0 = discrete_initial_condition(nu0, micro.partition, micro.l)
        ref_n = reference.restrict(micro.partition)
        coeff, weights = _norm_machinery(norm, micro)
        payload = (micro, theta0, T, seed, bounded, ref_n, grid, coeff, weights)
        errs = np.asarray(run_replicates(
            functools.partial(_lln_replicate, payload), replicates, workers))
        report.rows.append({
            "n": micro.partition.n_cells,
            "delta_plus": micro.partition.delta_plus,
            "ell_minus": micro.ell_minus,
            "err_mean": float(errs.mean()),
            "err_se": float(errs.std(ddof=1) / math.sqrt(replicates)),
        })
    means = [row["err_mean"] for row in report.rows]
    ses = [row["err_se"] for row in report.rows]
    report.flags["monotone_decreasing_2se"] = all(
        means[i] - means[i + 1] > 2.0 * math.hypot(ses[i], ses[i + 1])
        for i in range(len(means) - 1))
    if len(means) >= 3 and all(m > 0 for m in means):
        fit = fit_rate([row["delta_plus"] for row in report.rows], means, seed=seed)
        report.slope = fit.slope
        report.slope_ci = (fit.ci_low, fit.ci_high)
    return report


def _checkpoint_replicate(payload, r: int):
    micro, theta0, T, seed, checkpoints, ref, coeff, weights, track_means = payload
    path = simulate_path(micro, theta0, T, replicate_rng(seed, r))
    fr = path.frac_at(checkpoints)
    diff = fr - ref.at_many(checkpoints)
    if coeff is None:
        errs = np.sqrt((diff ** 2) @ micro.partition.measures)
    else:
        c = diff @ coeff.T
        errs = np.sqrt((c ** 2) @ weights)
    if track_means:
        return errs, path.theta_at(checkpoints)
    return errs, None


def infinite_time_experiment(macro: MacroModel, micro: MicroModel, nu0,
                             T_long: float, checkpoints, replicates: int,
                             norm: NormSpec, seed: int,
                             solver_cfg: SolverConfig | None = None,
                             workers=None) -> ExperimentReport:
    """E ||nu^n_t - nu(t)||_{H^-alpha} at checkpoints over a long horizon.

    The no-growth flag compares the late-window supremum against the early
    window plus two standard errors. Requires an input bounded in time with
    bounded spatial gradient (theorem hypotheses).
    """
    if not (micro.current.bounded_in_time and micro.current.spatially_differentiable):
        raise InvalidArgumentError(
            "infinite-time experiment needs a bounded, spatially differentiable input")
    checkpoints = np.asarray(checkpoints, dtype=float)
    cfg = solver_cfg or SolverConfig(m=max(4 * micro.partition.n_cells, 256),
                                     dt=min(T_long / 2048, 1e-2))
    reference = solve_wilson_cowan(nu0, macro, T_long, cfg).restrict(micro.partition)
    coeff, weights = _norm_machinery(norm, micro)
    theta0 = discrete_initial_condition(nu0, micro.partition, micro.l)
    payload = (micro, theta0, T_long, seed, checkpoints, reference, coeff,
               weights, False)
    errs = np.stack([e for e, _ in run_replicates(
        functools.partial(_checkpoint_replicate, payload), replicates, workers)])
    mean = errs.mean(axis=0)
    se = errs.std(axis=0, ddof=1) / math.sqrt(replicates)
    half = checkpoints.size // 2
    early = float(mean[:half].max())
    late_idx = half + int(np.argmax(mean[half:]))
    late = float(mean[late_idx])
    flag = late <= early + 2.0 * float(se[late_idx])
    report = ExperimentReport(
        kind="infinite-time",
        rows=[{"t": float(t), "err_mean": float(m), "err_se": float(s)}
              for t, m, s in zip(checkpoints, mean, se)],
        stats={"early_window_sup": early, "late_window_sup": late},
        flags={"no_growth": flag},
        meta={"T_long": T_long, "replicates": replicates, "alpha": norm.alpha,
              "seed": seed, "n": micro.partition.n_cells})
    return report


def component_mean_check(micro: MicroModel, theta0, T: float, checkpoints,
                         replicates: int, seed: int, workers=None) -> dict:
    """Empirical mean of Theta_k at checkpoints against l(k)(1 + ||f||_0).

    Returns the worst margin (bound + 3 SE - mean), non-negative iff the
    bound holds everywhere.
    """
    checkpoints = np.asarray(checkpoints, dtype=float)
    dummy_ref = Trajectory(np.array([0.0, T]),
                           np.zeros((2, micro.n_pops)), micro.partition)
    payload = (micro, np.asarray(theta0, int), T, seed, checkpoints, dummy_ref,
               None, None, True)
    thetas = np.stack([th for _, th in run_replicates(
        functools.partial(_checkpoint_replicate, payload), replicates, workers)])
    mean = thetas.mean(axis=0)                       # (n_cp, P)
    se = thetas.std(axis=0, ddof=1) / math.sqrt(replicates)
    bound = micro.l * (1.0 + micro.gain.sup_norm)
    margin = bound[None, :] + 3.0 * se - mean
    return {"bound": bound.tolist(), "worst_margin": float(margin.min()),
            "holds": bool(margin.min() >= 0.0)}


def _qc_replicate(payload, r: int) -> float:
    micro, theta0, T, seed = payload
    path = simulate_path(micro, theta0, T, replicate_rng(seed, r))
    return quadratic_characteristic(path)


def martingale_bound_check(micro: MicroModel, theta0, T: float,
                           replicates: int, seed: int, slack: float = 0.05,
                           workers=None) -> dict:
    """Empirical mean of the L^2 quadratic characteristic against the bound
    (T / tau)(1 + 2 ||f||_0) |D| / ell_minus, with multiplicative slack."""
    payload = (micro, np.asarray(theta0, int), T, seed)
    qcs = np.asarray(run_replicates(
        functools.partial(_qc_replicate, payload), replicates, workers))
    bound = (T / micro.tau) * (1.0 + 2.0 * micro.gain.sup_norm) \
        * micro.partition.domain.measure / micro.ell_minus
    mean = float(qcs.mean())
    return {"mean": mean, "se": float(qcs.std(ddof=1) / math.sqrt(replicates)),
            "bound": bound, "holds": mean <= bound * (1.0 + slack)}


# ---------------------------------------------------------------------------
# martingale CLT experiment

def _clt_replicate(payload, r: int) -> np.ndarray:
    micro, theta0, T, seed, cell_ints = payload
    path = simulate_path(micro, theta0, T, replicate_rng(seed, r))
    mp = rescale_martingale(martingale_path(path, eval_times=[T / 2, T]), micro)
    return mp.values @ cell_ints.T                   # (2, n_phis)


def clt_experiment(macro: MacroModel, micro: MicroModel, nu0, T: float,
                   test_functions, replicates: int, seed: int,
                   solver_cfg: SolverConfig | None = None,
                   workers=None) -> ExperimentReport:
    """Distribution of <phi, sqrt(rho_n) M^n_T> against the limit covariance.

    For each test function: variance ratio empirical / <C(T) phi, phi>,
    empirical mean with SE, excess kurtosis, and the correlation of the
    martingale increments over [0, T/2] and [T/2, T].
    """
    balance = (micro.partition.v_minus / micro.partition.v_plus) \
        * (micro.ell_minus / micro.ell_plus)
    cfg = solver_cfg or SolverConfig(m=max(4 * micro.partition.n_cells, 256))
    reference = solve_wilson_cowan(nu0, macro, T, cfg)
    problem = FieldProblem.from_macro(macro, cfg.m, cfg.quad_order)
    form = CovarianceForm(reference, problem)
    phis = list(test_functions)
    cov_limit = [form.evaluate(phi, phi, T) for phi in phis]
    cell_ints = np.stack([
        cell_integrals(phi, micro.partition) if callable(phi)
        else np.asarray(phi, float) * micro.partition.measures
        for phi in phis])

    theta0 = discrete_initial_condition(nu0, micro.partition, micro.l)
    payload = (micro, theta0, T, seed, cell_ints)
    samples = np.stack(run_replicates(
        functools.partial(_clt_replicate, payload), replicates, workers))
    mid, end = samples[:, 0, :], samples[:, 1, :]

    report = ExperimentReport(
        kind="clt",
        meta={"T": T, "replicates": replicates, "seed": seed,
              "n": micro.partition.n_cells, "balance": balance})
    R = replicates
    for i, cphi in enumerate(cov_limit):
        x = end[:, i]
        var = float(x.var(ddof=1))
        kurt = float(sstats.kurtosis(x, fisher=True, bias=False))
        inc1, inc2 = mid[:, i], end[:, i] - mid[:, i]
        corr = float(np.corrcoef(inc1, inc2)[0, 1])
        entry = {
            "cov_limit": float(cphi),
            "var_empirical": var,
            "variance_ratio": var / cphi if cphi > 0 else math.nan,
            "var_ratio_se": math.sqrt(max(sstats.kurtosis(x, fisher=True, bias=False) + 2.0, 0.5) / R),
            "mean": float(x.mean()),
            "mean_se": float(x.std(ddof=1) / math.sqrt(R)),
            "excess_kurtosis": kurt,
            "increment_corr": corr,
        }
        report.stats[f"phi_{i}"] = entry
    report.flags["balance_condition"] = abs(balance - 1.0) < 1e-12
    return report


# ---------------------------------------------------------------------------
# oracle cross-validation

def _endpoint_replicate(payload, r: int) -> np.ndarray:
    micro, theta0, T, seed, bounded = payload
    sim = simulate_path_bounded if bounded else simulate_path
    return sim(micro, theta0, T, replicate_rng(seed, r)).theta_at(T)


def oracle_check(micro: MicroModel, theta0, T: float, replicates: int,
                 theta_max, seed: int, bounded: bool = False,
                 workers=None) -> dict:
    """Total-variation distance between simulated endpoint marginals and the
    uniformization oracle on the truncated joint state space."""
    law = master_equation_oracle(micro, theta0, T, theta_max, bounded=bounded)
    payload = (micro, np.asarray(theta0, int), T, seed, bounded)
    ends = np.stack(run_replicates(
        functools.partial(_endpoint_replicate, payload), replicates, workers))
    counts = np.zeros(law.shape, dtype=np.int64)
    inside = np.all(ends <= law.caps, axis=1)
    np.add.at(counts, tuple(ends[inside].T), 1)
    tv = law.tv_distance(counts, n_total=replicates)
    return {"tv": tv, "tail": law.tail, "n_states": int(np.prod(law.shape)),
            "replicates": replicates}
