"""Exact marginal laws of small jump models via uniformization.

The master equation is solved on a truncated box 0 <= theta_k <= cap_k by
Poissonization of the sub-stochastic matrix B = I + Q/Lambda: the law at T
is sum_m pois(m; Lambda T) p0 B^m. Transitions leaving the box are dropped
from the off-diagonals but kept in the exit rates, so probability mass
leaks to an implicit absorbing state; the returned vector sums to 1 - tail
and the tail is reported. An a-priori tail bound from the dominating
Poisson processes (rates l(k)(1 + ||f||_0)/tau) is checked first.

The bounded-state variant needs no truncation (cap_k = l(k), conservative
generator, zero tail).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from .errors import (CapacityError, InvalidArgumentError, TruncationError)
from .model import MicroModel

__all__ = ["TruncatedLaw", "master_equation_oracle", "truncation_tail_bound"]

_MAX_STATES = 2_000_000


@dataclass
class TruncatedLaw:
    """Joint law over the truncated box at time T."""

    caps: np.ndarray                 # per-population truncation (inclusive)
    probs: np.ndarray                # flat joint probabilities, C-order over the box
    tail: float                      # mass absorbed outside the box
    T: float

    @property
    def shape(self) -> tuple:
        return tuple(self.caps + 1)

    def joint(self) -> np.ndarray:
        return self.probs.reshape(self.shape)

    def marginal(self, k: int) -> np.ndarray:
        axes = tuple(i for i in range(self.caps.size) if i != k)
        return self.joint().sum(axis=axes)

    def tv_distance(self, counts: np.ndarray, n_total: int | None = None) -> float:
        """Total-variation distance to an empirical joint histogram.

        counts: integer array over the same box; replicates that left the box
        are n_total - counts.sum() and are booked against the oracle tail.
        """
        counts = np.asarray(counts, dtype=float)
        n = float(counts.sum() if n_total is None else n_total)
        emp_in = counts.ravel() / n if n else counts.ravel()
        overflow = 1.0 - emp_in.sum()
        return 0.5 * (np.abs(emp_in - self.probs).sum() + abs(overflow - self.tail))


def truncation_tail_bound(model: MicroModel, theta0, T: float, caps) -> float:
    """Union bound on ever leaving the box, from Poisson domination of the
    upward increments."""
    theta0 = np.asarray(theta0, dtype=int)
    caps = np.asarray(caps, dtype=int)
    rates = model.l * (1.0 + model.gain.sup_norm) / model.tau * T
    room = caps - theta0
    if np.any(room < 0):
        return 1.0
    return float(np.sum(poisson.sf(room, rates)))


def _build_generator(model: MicroModel, caps: np.ndarray, bounded: bool):
    """Sparse truncated generator Q (row form: Q[s, s'] rate s -> s')."""
    shape = tuple(caps + 1)
    n = int(np.prod(shape))
    if n > _MAX_STATES:
        raise CapacityError(f"truncated state space has {n} states (> {_MAX_STATES})")
    P = model.n_pops
    thetas = np.stack(np.unravel_index(np.arange(n), shape), axis=1)  # (n, P)
    ib = model.ibar(0.0)
    z = (thetas / model.l) @ model.Wbar.T + ib
    fb = model.gain(z)                                  # (n, P)
    if bounded:
        birth = (model.l - thetas) * fb / model.tau
    else:
        birth = model.l * fb / model.tau
    death = thetas / model.tau

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    strides = np.array([int(np.prod(shape[k + 1:])) for k in range(P)])
    idx = np.arange(n)
    for k in range(P):
        up_ok = thetas[:, k] < caps[k]
        r = birth[:, k]
        diag -= r                                        # exits, kept even if capped
        rows.append(idx[up_ok]); cols.append(idx[up_ok] + strides[k])
        vals.append(r[up_ok])
        down_ok = thetas[:, k] > 0
        rd = death[:, k]
        diag -= rd
        rows.append(idx[down_ok]); cols.append(idx[down_ok] - strides[k])
        vals.append(rd[down_ok])
    rows.append(idx); cols.append(idx); vals.append(diag)
    Q = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    return Q, diag


def master_equation_oracle(model: MicroModel, theta0, T: float,
                           theta_max, bounded: bool = False,
                           tail_tol: float = 1e-8,
                           series_tol: float = 1e-12) -> TruncatedLaw:
    """Marginal law at time T of the truncated master equation.

    theta_max: scalar or per-population truncation cap. Requires a
    time-independent input (the generator must be homogeneous).
    """
    if model.current.time_dependent:
        raise InvalidArgumentError("oracle requires a time-independent input")
    theta0 = np.asarray(theta0, dtype=int)
    if theta0.shape != (model.n_pops,) or np.any(theta0 < 0):
        raise InvalidArgumentError("theta0 must be a non-negative count vector")
    if bounded:
        caps = model.l.astype(int).copy()
        if np.any(theta0 > caps):
            raise InvalidArgumentError("theta0 exceeds population sizes")
    else:
        caps = np.full(model.n_pops, int(theta_max)) if np.ndim(theta_max) == 0 \
            else np.asarray(theta_max, dtype=int)
        bound = truncation_tail_bound(model, theta0, T, caps)
        if bound > tail_tol:
            raise TruncationError(
                f"a-priori tail bound {bound:.3g} exceeds {tail_tol:.3g}; raise theta_max")
    shape = tuple(caps + 1)
    n = int(np.prod(shape))

    p = np.zeros(n)
    p[int(np.ravel_multi_index(tuple(theta0), shape))] = 1.0
    if T == 0:
        return TruncatedLaw(caps, p, 0.0, 0.0)

    Q, diag = _build_generator(model, caps, bounded)
    lam = float(-diag.min())
    if lam <= 0:                                        # absorbing everywhere
        return TruncatedLaw(caps, p, 0.0, float(T))
    B = sparse.identity(n, format="csr") + Q / lam

    mu = lam * T
    m_hi = int(poisson.isf(series_tol, mu)) + 1
    weights = poisson.pmf(np.arange(m_hi + 1), mu)
    out = weights[0] * p
    v = p
    for m in range(1, m_hi + 1):
        v = B.T @ v                                     # p0 B^m, row vector convention
        out = out + weights[m] * v
    tail = float(max(0.0, 1.0 - out.sum()))
    return TruncatedLaw(caps, out, tail, float(T))
