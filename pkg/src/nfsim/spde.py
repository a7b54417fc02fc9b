"""Diffusion approximations: the linear-noise and Langevin stochastic field
equations, and the limiting covariance quadratic form <C(t) phi, psi>.

Both SPDEs share the drift (-V + F(V, t))/tau of the deterministic limit; the
noise is eps * sqrt(g) dW with the diffusion field

    g(t, x) = (nu(t, x) + f(int w(x,y) nu(t,y) dy + I(t,x))) / tau

evaluated along the deterministic reference trajectory (linear noise) or at
the current state (Langevin, multiplicative). The driving cylindrical Wiener
process is projected on the cells of the model partition: increments are
independent N(0, dt / |D_k|) per cell, which keeps the covariance exact on
piecewise-constant test functions.

Only the spatially discretized systems are treated here: finite-dimensional
SDEs with Lipschitz drift and (clamped) diffusion. Nothing is claimed about
the continuum SPDEs, whose well-posedness is open; states may dip below zero,
so g is clamped at 0 before the square root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .fields import Field, Trajectory
from .jump import replicate_rng
from .solver import FieldProblem

__all__ = [
    "NoiseSpec",
    "CovarianceForm",
    "diffusion_coefficient",
    "covariance_form",
    "simulate_linear_noise",
    "simulate_langevin",
    "spde_endpoint_samples",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Noise amplitude eps (eps = sqrt(v_plus / ell_minus) matches the jump
    model) and the noise representation tag."""

    epsilon: float
    representation: str = "per-cell cylindrical"
    seed: int | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidArgumentError("epsilon must be >= 0")
        if self.representation != "per-cell cylindrical":
            raise InvalidArgumentError("only the per-cell cylindrical representation is implemented")


def diffusion_coefficient(nu, t: float, problem: FieldProblem) -> Field:
    """g(t, .) = (nu + f(K nu + I(t, .))) / tau on the problem grid."""
    values = nu.values if isinstance(nu, Field) else np.asarray(nu, dtype=float)
    if np.any(values < -1e-10):
        raise NumericError("state escaped the admissible set (nu < -1e-10)")
    g = (values + problem.nemytzkii(values, t)) / problem.tau
    return Field(problem.partition, g)


class CovarianceForm:
    """<C(t) phi, psi> = int_0^t int_D phi g(s, x) psi dx ds along a
    reference trajectory; symmetric, non-decreasing in t for phi = psi."""

    def __init__(self, reference: Trajectory, problem: FieldProblem):
        if reference.partition.n_cells != problem.partition.n_cells:
            raise InvalidArgumentError("reference trajectory does not match the problem grid")
        self.reference = reference
        self.problem = problem
        # g along all stored times, (nt, P)
        self._g = np.stack([
            (reference.values[i]
             + problem.nemytzkii(reference.values[i], float(reference.times[i])))
            / problem.tau
            for i in range(reference.times.size)
        ])

    def evaluate(self, phi, psi, t: float) -> float:
        if t < 0 or t > self.reference.t_end + 1e-12:
            raise InvalidArgumentError("t outside the reference trajectory")
        pv = _cell_values(phi, self.problem)
        sv = _cell_values(psi, self.problem)
        ts = self.reference.times
        keep = ts <= t + 1e-15
        ts_t = np.append(ts[keep], t) if ts[keep][-1] < t - 1e-15 else ts[keep]
        gt = self._g[keep]
        if ts_t.size > gt.shape[0]:
            gt = np.vstack([gt, _interp_rows(ts, self._g, t)])
        space = gt @ (pv * sv * self.problem.partition.measures)
        return float(np.trapezoid(space, ts_t))


def _interp_rows(ts: np.ndarray, vals: np.ndarray, t: float) -> np.ndarray:
    i = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2)
    w = (t - ts[i]) / (ts[i + 1] - ts[i])
    return (1 - w) * vals[i] + w * vals[i + 1]


def _cell_values(phi, problem: FieldProblem) -> np.ndarray:
    """Cell values of a test function (callable on (N, d) points, Field, or
    vector)."""
    if isinstance(phi, Field):
        if phi.partition.n_cells != problem.partition.n_cells:
            raise InvalidArgumentError("test function lives on a different grid")
        return phi.values
    if callable(phi):
        return np.asarray(phi(problem.partition.centers), dtype=float)
    v = np.asarray(phi, dtype=float)
    if v.shape != (problem.partition.n_cells,):
        raise InvalidArgumentError("test function does not match the grid")
    return v


def covariance_form(phi, psi, t: float, reference: Trajectory,
                    problem: FieldProblem) -> float:
    """One-shot evaluation of <C(t) phi, psi>."""
    return CovarianceForm(reference, problem).evaluate(phi, psi, t)


# ---------------------------------------------------------------------------
# Euler-Maruyama integrators

def _em_run(problem: FieldProblem, v0: np.ndarray, eps: float, T: float, dt: float,
            rng: np.random.Generator, g_of, drift: bool, store_every: int):
    """Shared Euler-Maruyama loop; g_of(step, v, t) supplies the diffusion field."""
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / n_steps
    sqrt_dt_meas = np.sqrt(dt / problem.partition.measures)
    tau = problem.tau
    v = v0.copy()
    times, stored = [0.0], [v.copy()]
    for step in range(n_steps):
        t = step * dt
        if eps > 0:
            g = np.maximum(g_of(step, v, t), 0.0)
            noise = eps * np.sqrt(g) * rng.standard_normal(v.size) * sqrt_dt_meas
        else:
            noise = 0.0
        if drift:
            v = v + dt / tau * (-v + problem.nemytzkii(v, t)) + noise
        else:
            v = v + noise
        if (step + 1) % store_every == 0 or step + 1 == n_steps:
            if not np.all(np.isfinite(v)):
                raise NumericError(f"SPDE state non-finite at t = {t + dt:.6g}")
            times.append((step + 1) * dt)
            stored.append(v.copy())
    return Trajectory(np.asarray(times), np.asarray(stored), problem.partition)


def _reference_g(reference: Trajectory, problem: FieldProblem, T: float,
                 dt: float) -> np.ndarray:
    """Diffusion field frozen along the reference, tabulated per step."""
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / n_steps
    ts = np.arange(n_steps) * dt
    nus = reference.at_many(ts)
    return np.stack([
        (nus[i] + problem.nemytzkii(nus[i], float(ts[i]))) / problem.tau
        for i in range(n_steps)
    ])


def simulate_linear_noise(nu0, problem: FieldProblem, reference: Trajectory,
                          noise: NoiseSpec, T: float, dt: float, seed,
                          store_every: int = 1, drift: bool = True) -> Trajectory:
    """Euler-Maruyama path of the additive-noise (linear noise) equation.

    The diffusion coefficient is frozen along the reference trajectory.
    drift=False integrates the bare stochastic term (test mode for the Ito
    isometry checks).
    """
    from .solver import _initial_values
    v0 = _initial_values(nu0, problem)
    if reference.partition.n_cells != problem.partition.n_cells:
        raise InvalidArgumentError("reference trajectory does not match the problem grid")
    if reference.t_end < T - 1e-12:
        raise InvalidArgumentError("reference trajectory does not cover [0, T]")
    gtab = _reference_g(reference, problem, T, dt)
    rng = _spde_rng(noise, seed)
    return _em_run(problem, v0, noise.epsilon, T, dt, rng,
                   lambda step, v, t: gtab[step], drift, store_every)


def simulate_langevin(nu0, problem: FieldProblem, noise: NoiseSpec, T: float,
                      dt: float, seed, store_every: int = 1) -> Trajectory:
    """Euler-Maruyama path of the multiplicative-noise (Langevin) equation:
    the diffusion coefficient is evaluated at the current state and clamped
    at zero before the square root."""
    from .solver import _initial_values
    v0 = _initial_values(nu0, problem)
    rng = _spde_rng(noise, seed)
    g_of = lambda step, v, t: (v + problem.nemytzkii(v, t)) / problem.tau
    return _em_run(problem, v0, noise.epsilon, T, dt, rng, g_of, True, store_every)


def _spde_rng(noise: NoiseSpec, seed) -> np.random.Generator:
    if seed is None:
        seed = noise.seed if noise.seed is not None else 0
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spde_endpoint_samples(variant: str, nu0, problem: FieldProblem,
                          noise: NoiseSpec, T: float, dt: float, seed: int,
                          n_replicates: int, cell_ints: np.ndarray,
                          reference: Trajectory | None = None,
                          drift: bool = True, batch: int = 256,
                          eval_times=None) -> np.ndarray:
    """Monte-Carlo samples of <phi_i, V_t> at the requested times.

    Returns an array (n_replicates, n_times, n_phis) for the cell-integral
    matrix cell_ints of shape (n_phis, P). Replicate r draws its increments
    from the stream keyed by (seed, r), so results do not depend on the batch
    size or the worker layout.
    """
    from .solver import _initial_values
    if variant not in ("linear-noise", "langevin"):
        raise InvalidArgumentError(f"unknown SPDE variant {variant!r}")
    v0 = _initial_values(nu0, problem)
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / n_steps
    eval_times = [T] if eval_times is None else list(eval_times)
    eval_steps = [int(round(te / dt)) for te in eval_times]
    for te, se in zip(eval_times, eval_steps):
        if abs(se * dt - te) > 1e-9:
            raise InvalidArgumentError("eval times must align with the step grid")
    cell_ints = np.atleast_2d(np.asarray(cell_ints, dtype=float))
    P = problem.partition.n_cells
    tau = problem.tau
    sqrt_dt_meas = np.sqrt(dt / problem.partition.measures)
    gtab = None
    if variant == "linear-noise":
        if reference is None:
            raise InvalidArgumentError("linear-noise sampling needs a reference trajectory")
        gtab = _reference_g(reference, problem, T, dt)
    static_input = not problem.current.time_dependent
    ib0 = problem.input_values(0.0) if static_input else None

    out = np.empty((n_replicates, len(eval_steps), cell_ints.shape[0]))
    for start in range(0, n_replicates, batch):
        stop = min(start + batch, n_replicates)
        B = stop - start
        xi = np.empty((B, n_steps, P))
        for i, r in enumerate(range(start, stop)):
            xi[i] = replicate_rng(seed, r).standard_normal((n_steps, P))
        v = np.tile(v0, (B, 1))
        snap = {}
        if 0 in eval_steps:
            snap[0] = v.copy()
        for step in range(n_steps):
            t = step * dt
            ib = ib0 if static_input else problem.input_values(t)
            if noise.epsilon > 0:
                if variant == "linear-noise":
                    g = np.maximum(gtab[step], 0.0)[None, :]
                else:
                    g = np.maximum((v + problem.gain(v @ problem.kmat.T + ib)) / tau, 0.0)
                dW = xi[:, step, :] * sqrt_dt_meas
                nz = noise.epsilon * np.sqrt(g) * dW
            else:
                nz = 0.0
            if drift:
                F = problem.gain(v @ problem.kmat.T + ib)
                v = v + dt / tau * (-v + F) + nz
            else:
                v = v + nz
            if step + 1 in eval_steps:
                snap[step + 1] = v.copy()
        for j, se in enumerate(eval_steps):
            out[start:stop, j, :] = snap[se] @ cell_ints.T
    if not np.all(np.isfinite(out)):
        raise NumericError("SPDE sampling produced non-finite values")
    return out
