"""Exact simulation of the finite neural-population jump processes.

Each population k holds a count theta_k. Deactivations fire at rate
theta_k / tau; activations at rate l(k) fbar_k(theta, t) / tau with
fbar_k(theta, t) = f(sum_j Wbar[k][j] theta_j / l(j) + Ibar_k(t)). The
process is sampled exactly: deactivation clocks are exponential (rates
constant between jumps), activations are thinned against the constant
envelope l(k) ||f||_0 / tau, which is valid because f is bounded. The
bounded-state variant replaces the activation rate by
(l(k) - theta_k) fbar_k / tau and keeps 0 <= theta_k <= l(k).

Also provided: the piecewise-constant field embedding nu = theta_k/l(k) on
cell k, the compensator (the predictable drift integral), martingale
extraction, the CLT rescaling, and the predictable quadratic characteristic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import (EnvelopeUnavailableError, InvalidArgumentError,
                     NoTransitionError)
from .fields import Field, Trajectory
from .model import MicroModel

__all__ = [
    "JumpPath",
    "MartingalePath",
    "TransitionDistribution",
    "activation_rates",
    "total_rate",
    "transition_distribution",
    "simulate_path",
    "simulate_path_bounded",
    "embed",
    "compensator",
    "martingale_path",
    "rescale_martingale",
    "quadratic_characteristic",
]


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(int(seed))


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    """Stream for replicate r, independent of scheduling: (seed, r) keyed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(r),)))


# ---------------------------------------------------------------------------
# rates

def activation_rates(model: MicroModel, theta, t: float) -> np.ndarray:
    """Per-population activation rates l(k) fbar_k(theta, t) / tau."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise InvalidArgumentError("negative counts")
    z = model.Wbar @ (theta / model.l) + model.ibar(t)
    return model.l * model.gain(z) / model.tau


def total_rate(model: MicroModel, theta, t: float) -> float:
    """Total instantaneous jump rate (sum of deaths and activations)."""
    theta = np.asarray(theta, dtype=float)
    return float(theta.sum() / model.tau + activation_rates(model, theta, t).sum())


@dataclass(frozen=True)
class TransitionDistribution:
    """Post-jump distribution: down[k] = P(theta - e_k), up[k] = P(theta + e_k)."""

    down: np.ndarray
    up: np.ndarray

    @property
    def total(self) -> float:
        return float(self.down.sum() + self.up.sum())


def transition_distribution(model: MicroModel, theta, t: float) -> TransitionDistribution:
    theta = np.asarray(theta, dtype=float)
    act = activation_rates(model, theta, t)
    lam = theta.sum() / model.tau + act.sum()
    if lam <= 0:
        raise NoTransitionError("total rate is zero; state is frozen")
    return TransitionDistribution(down=theta / model.tau / lam, up=act / lam)


# ---------------------------------------------------------------------------
# paths

class JumpPath:
    """Piecewise-constant trajectory of the count process on [0, T].

    Events are (time, population, direction); jump times increase strictly.
    """

    def __init__(self, model: MicroModel, theta0, T: float,
                 times, pops, dirs, bounded: bool = False):
        self.model = model
        self.theta0 = np.asarray(theta0, dtype=np.int64).copy()
        self.T = float(T)
        self.times = np.asarray(times, dtype=float)
        self.pops = np.asarray(pops, dtype=np.int64)
        self.dirs = np.asarray(dirs, dtype=np.int64)
        self.bounded = bounded
        self._thetas = None
        if self.times.size:
            if self.times[0] <= 0 or self.times[-1] > self.T:
                raise InvalidArgumentError("jump times must lie in (0, T]")
            if np.any(np.diff(self.times) <= 0):
                raise InvalidArgumentError("jump times must increase strictly")
        thetas = self.states()
        if thetas.min() < 0:
            raise InvalidArgumentError("path visits a negative count")
        if bounded and np.any(thetas > model.l):
            raise InvalidArgumentError("bounded path exceeds a population size")

    @property
    def n_events(self) -> int:
        return self.times.size

    def states(self) -> np.ndarray:
        """States after 0, 1, ..., E events; shape (E + 1, P)."""
        if self._thetas is None:
            E, P = self.times.size, self.model.n_pops
            inc = np.zeros((E + 1, P), dtype=np.int64)
            if E:
                np.add.at(inc[1:], (np.arange(E), self.pops), self.dirs)
            self._thetas = self.theta0 + np.cumsum(inc, axis=0)
        return self._thetas

    def fractions(self) -> np.ndarray:
        """states() scaled to activity fractions theta_k / l(k)."""
        return self.states() / self.model.l

    def _segment_index(self, ts: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.times, ts, side="right")

    def theta_at(self, t) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if ts.min() < 0 or ts.max() > self.T + 1e-12:
            raise InvalidArgumentError("time outside [0, T]")
        out = self.states()[self._segment_index(ts)]
        return out[0] if np.ndim(t) == 0 else out

    def frac_at(self, t) -> np.ndarray:
        return self.theta_at(t) / self.model.l

    def field_at(self, t: float) -> Field:
        return Field(self.model.partition, self.frac_at(float(t)))


def _simulate(model: MicroModel, theta0, T: float, seed, bounded: bool) -> JumpPath:
    if not model.current.bounded_in_time:
        raise EnvelopeUnavailableError(
            "input current not declared bounded on [0, T]; no thinning envelope")
    rng = _as_rng(seed)
    theta0 = np.asarray(theta0, dtype=np.int64)
    if theta0.shape != (model.n_pops,) or np.any(theta0 < 0):
        raise InvalidArgumentError("theta0 must be a non-negative count vector")
    if bounded and np.any(theta0 > model.l):
        raise InvalidArgumentError("theta0 exceeds population sizes")

    tau = model.tau
    l = model.l.astype(float)
    sup = model.gain.sup_norm
    Wbar = model.Wbar
    static_input = model.current.time_dependent is False
    ib0 = model.ibar(0.0) if static_input else None

    theta = theta0.astype(np.int64).copy()
    frac = theta / l
    total = float(theta.sum())
    if not bounded:
        env = l * sup / tau                      # constant activation envelope
        env_cum = np.cumsum(env)
        Benv = float(env_cum[-1]) if env_cum.size else 0.0

    times, pops, dirs = [], [], []
    t = 0.0
    while True:
        if bounded:
            slack = l - theta
            Benv = float(slack.sum()) * sup / tau
        lam_bar = total / tau + Benv
        if lam_bar <= 0.0:
            break                                # frozen; time runs out to T
        t += rng.standard_exponential() / lam_bar
        if t >= T:
            break
        u = rng.random() * lam_bar
        if u < total / tau:
            # exact deactivation; pick k proportional to theta_k
            k = int(np.searchsorted(np.cumsum(theta), u * tau, side="right"))
            theta[k] -= 1
            frac[k] = theta[k] / l[k]
            total -= 1.0
            times.append(t); pops.append(k); dirs.append(-1)
        else:
            # activation candidate; thin against the envelope
            v = u - total / tau
            if bounded:
                k = int(np.searchsorted(np.cumsum(slack) * sup / tau, v, side="right"))
            else:
                k = int(np.searchsorted(env_cum, v, side="right"))
            ib_k = ib0[k] if static_input else model.ibar_k(t, k)
            fk = float(model.gain(Wbar[k] @ frac + ib_k))
            if rng.random() * sup < fk:
                theta[k] += 1
                frac[k] = theta[k] / l[k]
                total += 1.0
                times.append(t); pops.append(k); dirs.append(+1)
    return JumpPath(model, theta0, T, np.asarray(times), np.asarray(pops, dtype=np.int64),
                    np.asarray(dirs, dtype=np.int64), bounded=bounded)


def simulate_path(model: MicroModel, theta0, T: float, seed) -> JumpPath:
    """Statistically exact sample of the (unbounded) jump process on [0, T].

    Deterministic given (seed, model, theta0, T).
    """
    return _simulate(model, theta0, T, seed, bounded=False)


def simulate_path_bounded(model: MicroModel, theta0, T: float, seed) -> JumpPath:
    """Bounded-state variant: activation rate (l(k) - theta_k) fbar_k / tau."""
    return _simulate(model, theta0, T, seed, bounded=True)


def embed(theta, model: MicroModel) -> Field:
    """Coordinate function: piecewise-constant field theta_k / l(k) on cell k."""
    theta = np.asarray(theta, dtype=float)
    return Field(model.partition, theta / model.l)


# ---------------------------------------------------------------------------
# compensator / martingale machinery

def _fbar_matrix(path: JumpPath, ts: np.ndarray, states_idx: np.ndarray) -> np.ndarray:
    """fbar_{k}(theta(s), s) for rows of (time, state-index) pairs."""
    model = path.model
    fr = path.fractions()[states_idx]
    z = fr @ model.Wbar.T
    if model.current.time_dependent:
        z = z + np.stack([model.ibar(t) for t in ts])
    else:
        z = z + model.ibar(0.0)
    return model.gain(z)


def _drift_rate(path: JumpPath, bounded: bool, ts, states_idx) -> np.ndarray:
    """Integrand of the compensator: (-nu + Fbar)/tau rows, shape (n, P)."""
    model = path.model
    fr = path.fractions()[states_idx]
    fb = _fbar_matrix(path, ts, states_idx)
    if bounded:
        fb = (1.0 - fr) * fb
    return (-fr + fb) / model.tau


def _qv_rate(path: JumpPath, ts, states_idx, sq_weights: np.ndarray) -> np.ndarray:
    """Integrand of the predictable quadratic characteristic, shape (n,)."""
    model = path.model
    th = path.states()[states_idx].astype(float)
    fb = _fbar_matrix(path, ts, states_idx)
    if path.bounded:
        act = (model.l - th) * fb
    else:
        act = model.l * fb
    per_jump = (th + act) / (model.tau * model.l.astype(float) ** 2)
    return per_jump @ sq_weights


def _integrate_skeleton(path: JumpPath, rate_fn, knots: np.ndarray,
                        quad_order: int) -> np.ndarray:
    """Integrate a state/time rate over [0, T] between the given knots.

    The integrand is constant in theta between jumps; time dependence enters
    only through the input current and is handled with Gauss-Legendre of the
    given order per interval. Returns cumulative values at the knots.
    """
    a, b = knots[:-1], knots[1:]
    # knots contain every jump time, so the midpoint identifies the segment
    seg = path._segment_index(0.5 * (a + b))
    if path.model.current.time_dependent:
        gx, gw = leggauss(quad_order)
        incs = 0.0
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        for x, w in zip(gx, gw):
            ts = mid + half * x
            incs = incs + w * np.asarray(rate_fn(ts, seg))
        incs = incs * half.reshape(half.shape + (1,) * (np.ndim(incs) - 1))
    else:
        vals = np.asarray(rate_fn(0.5 * (a + b), seg))
        incs = vals * (b - a).reshape((b - a).shape + (1,) * (np.ndim(vals) - 1))
    out_shape = (knots.size,) + np.shape(incs)[1:]
    out = np.zeros(out_shape)
    np.cumsum(incs, axis=0, out=out[1:])
    return out


def _knots(path: JumpPath, eval_times) -> np.ndarray:
    pieces = [np.array([0.0, path.T]), path.times]
    if eval_times is not None:
        et = np.asarray(eval_times, dtype=float)
        if et.size and (et.min() < 0 or et.max() > path.T + 1e-12):
            raise InvalidArgumentError("eval times outside [0, T]")
        pieces.append(np.clip(et, 0.0, path.T))
    return np.unique(np.concatenate(pieces))


def compensator(path: JumpPath, eval_times=None, quad_order: int = 4) -> Trajectory:
    """Predictable drift integral int_0^t (-nu_s + Fbar(nu_s, s))/tau ds.

    Evaluated exactly on the jump skeleton (plus requested times); the
    integrand is constant between jumps up to the time dependence of the
    input, covered by per-interval Gauss quadrature.
    """
    knots = _knots(path, eval_times)
    vals = _integrate_skeleton(
        path, lambda ts, seg: _drift_rate(path, path.bounded, ts, seg),
        knots, quad_order)
    return Trajectory(knots, vals, path.model.partition)


@dataclass(frozen=True)
class MartingalePath:
    """Field values of the martingale part at the evaluation times.

    M_t = nu_t - nu_0 - compensator(t); M_0 = 0; jump heights are exactly
    +-(1/l(k)) on cell k scaled by `rescale`.
    """

    times: np.ndarray
    values: np.ndarray
    partition: object
    rescale: float = 1.0

    def pair_with(self, cell_ints: np.ndarray) -> np.ndarray:
        """<phi, M_t> for phi given by its cell integrals; shape (n_times,)."""
        return self.values @ np.asarray(cell_ints, dtype=float)


def martingale_path(path: JumpPath, eval_times=None, quad_order: int = 4) -> MartingalePath:
    comp = compensator(path, eval_times, quad_order)
    # right-continuous state at each knot
    fr = path.fractions()[path._segment_index(comp.times)]
    nu0 = path.theta0 / path.model.l
    values = fr - nu0 - comp.values
    if eval_times is not None:
        keep_t = np.asarray(eval_times, dtype=float)
        idx = np.searchsorted(comp.times, np.clip(keep_t, 0, path.T))
        values = values[idx]
        times = comp.times[idx]
    else:
        times = comp.times
    return MartingalePath(times, values, path.model.partition, 1.0)


def rescale_martingale(mp: MartingalePath, model: MicroModel) -> MartingalePath:
    """Multiply by sqrt(ell_minus / v_plus), recording the factor."""
    factor = np.sqrt(model.ell_minus / model.partition.v_plus)
    return replace(mp, values=mp.values * factor, rescale=mp.rescale * factor)


def quadratic_characteristic(path: JumpPath, upto: float | None = None,
                             sq_weights: np.ndarray | None = None,
                             quad_order: int = 4) -> float:
    """Predictable quadratic characteristic int_0^t lambda * E[jump size^2] ds.

    With the default weights |D_k| this is the L^2 characteristic
    int_0^t sum_k (theta_k + l_k fbar_k) |D_k| / (tau l_k^2) ds; custom
    squared pairings a_k^2 (e.g. cell integrals of a test function) give the
    characteristic of <phi, M>.
    """
    T = path.T if upto is None else float(upto)
    if not 0 <= T <= path.T + 1e-12:
        raise InvalidArgumentError("upto outside [0, T]")
    if sq_weights is None:
        sq_weights = path.model.partition.measures
    knots = _knots(path, [T])
    knots = knots[knots <= T + 1e-15]
    vals = _integrate_skeleton(
        path, lambda ts, seg: _qv_rate(path, ts, seg, np.asarray(sq_weights, float)),
        knots, quad_order)
    return float(vals[-1])
