"""Moment ODE systems for the jump process and for the diffusion
approximations, closed by linearizing the activation rate around the mean.

For an affine gain the linearization is exact and the systems close: the
mean of either diffusion approximation then solves the deterministic limit
equation, and the linear-noise and Langevin second-moment equations
coincide. For any other gain the closure is a first-order (mean-field)
approximation and results carry approximate=True; constructing them without
allow_closure raises.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClosureRequiredError, InvalidArgumentError
from .fields import Trajectory
from .model import MicroModel
from .solver import FieldProblem

__all__ = [
    "MomentODEState",
    "moment_odes_markov",
    "moment_odes_langevin",
]


@dataclass
class MomentODEState:
    """Trajectories of means and projected second moments.

    mean_fraction rows are E[Theta_k]/l(k) (jump process) or E[V_k] (SPDE);
    second_moments[:, i] is E <phi_i, .>^2 for the i-th test function.
    """

    times: np.ndarray
    mean_fraction: np.ndarray       # (nt, P)
    second_moments: np.ndarray      # (nt, n_phis)
    approximate: bool
    variant: str = "markov"

    def mean_trajectory(self, partition) -> Trajectory:
        return Trajectory(self.times, self.mean_fraction, partition)

    def check_variance_nonnegative(self, cell_ints: np.ndarray,
                                   tol: float = 1e-9) -> bool:
        """Second moments dominate squared mean projections within tol."""
        proj = self.mean_fraction @ np.atleast_2d(cell_ints).T
        return bool(np.all(self.second_moments >= proj ** 2 - tol))


def _require_closure(gain, allow_closure: bool) -> bool:
    if gain.is_affine:
        return False
    if not allow_closure:
        raise ClosureRequiredError(
            "gain is not affine; moment equations need the mean-field closure "
            "(pass allow_closure=True / --allow-closure)")
    return True


def _rk4(rhs, y0, T: float, n_steps: int):
    """Fixed-step RK4 on a flat state vector; returns (times, states)."""
    dt = T / n_steps
    y = np.asarray(y0, dtype=float).copy()
    out = np.empty((n_steps + 1, y.size))
    out[0] = y
    for i in range(n_steps):
        t = i * dt
        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return np.linspace(0.0, T, n_steps + 1), out


def moment_odes_markov(model: MicroModel, theta0_mean, T: float, test_functions,
                       cov0: np.ndarray | None = None, n_steps: int = 2048,
                       allow_closure: bool = False) -> MomentODEState:
    """Mean and second-moment ODEs of the count process.

    Evolves m = E[Theta] and S = E[Theta Theta^T]:

        dm/dt = b(m, t) - m / tau
        dS/dt = m b^T + b m^T + C B^T + B C - 2 S / tau + diag(b + m / tau)

    with b_k = l(k) f(z_k(m, t)) / tau, B its Jacobian at the mean and
    C = S - m m^T. test_functions are callables, Fields, or cell-value
    vectors; reported second moments are E <phi, nu^n_t>^2.
    """
    approx = _require_closure(model.gain, allow_closure)
    P = model.n_pops
    m0 = np.asarray(theta0_mean, dtype=float)
    if m0.shape != (P,):
        raise InvalidArgumentError("theta0 mean does not match the model")
    if np.any(m0 > model.l + 1e-9):
        raise InvalidArgumentError("mean initial counts must satisfy E[Theta_0] <= l")
    S0 = np.outer(m0, m0) + (0.0 if cov0 is None else np.asarray(cov0, dtype=float))
    tau, l, W = model.tau, model.l.astype(float), model.Wbar

    def rhs(t, y):
        m = y[:P]
        S = y[P:].reshape(P, P)
        z = W @ (m / l) + model.ibar(t)
        b = l * model.gain(z) / tau
        B = (l * model.gain.derivative(z) / tau)[:, None] * (W / l[None, :])
        C = S - np.outer(m, m)
        dm = b - m / tau
        dS = (np.outer(m, b) + np.outer(b, m) + C @ B.T + B @ C
              - 2.0 * S / tau + np.diag(b + m / tau))
        return np.concatenate([dm, dS.ravel()])

    times, ys = _rk4(rhs, np.concatenate([m0, S0.ravel()]), T, n_steps)
    means = ys[:, :P] / l
    a = _cell_integral_matrix(test_functions, model.partition)
    al = a / l[None, :]                      # <phi, nu> = sum a_k theta_k / l_k
    Ss = ys[:, P:].reshape(-1, P, P)
    second = np.einsum("ip,tpq,iq->ti", al, Ss, al)
    return MomentODEState(times, means, second, approx, "markov")


def moment_odes_langevin(problem: FieldProblem, nu0, T: float, test_functions,
                         epsilon: float, variant: str = "langevin",
                         cov0: np.ndarray | None = None, n_steps: int = 2048,
                         allow_closure: bool = False,
                         reference: Trajectory | None = None) -> MomentODEState:
    """Mean and projected second-moment ODEs of the diffusion approximations.

    The noise contribution of the Langevin variant uses E g(V_t) under the
    closure; the linear-noise variant evaluates g along the reference (the
    deterministic limit), which for an affine gain equals the mean, making
    the two systems identical. An explicit reference trajectory is required
    for the linear-noise variant with a non-affine gain.
    """
    if variant not in ("langevin", "linear-noise"):
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    approx = _require_closure(problem.gain, allow_closure)
    if variant == "linear-noise" and approx and reference is None:
        raise InvalidArgumentError(
            "linear-noise moments with a non-affine gain need a reference trajectory")
    from .solver import _initial_values
    P = problem.partition.n_cells
    v0 = _initial_values(nu0, problem)
    S0 = np.outer(v0, v0) + (0.0 if cov0 is None else np.asarray(cov0, dtype=float))
    tau, K = problem.tau, problem.kmat
    meas = problem.partition.measures

    def rhs(t, y):
        m = y[:P]
        S = y[P:].reshape(P, P)
        z = K @ m + problem.input_values(t)
        F = problem.gain(z)
        A = problem.gain.derivative(z)[:, None] * K
        C = S - np.outer(m, m)
        dm = (-m + F) / tau
        if variant == "linear-noise" and reference is not None:
            nu_ref = reference.at(min(t, reference.t_end))
            g = (nu_ref + problem.nemytzkii(nu_ref, t)) / tau
        else:
            g = (m + F) / tau              # reference == mean (affine case)
        dS = ((-2.0 * S + np.outer(F, m) + np.outer(m, F) + A @ C + C @ A.T) / tau
              + epsilon ** 2 * np.diag(np.maximum(g, 0.0) / meas))
        return np.concatenate([dm, dS.ravel()])

    times, ys = _rk4(rhs, np.concatenate([v0, S0.ravel()]), T, n_steps)
    means = ys[:, :P]
    a = _cell_integral_matrix(test_functions, problem.partition)
    Ss = ys[:, P:].reshape(-1, P, P)
    second = np.einsum("ip,tpq,iq->ti", a, Ss, a)
    return MomentODEState(times, means, second, approx, variant)


def _cell_integral_matrix(test_functions, partition) -> np.ndarray:
    """Cell integrals of each test function, shape (n_phis, P)."""
    from .fields import Field, cell_integrals
    rows = []
    for phi in test_functions:
        if isinstance(phi, Field):
            rows.append(phi.values * partition.measures)
        elif callable(phi):
            rows.append(cell_integrals(phi, partition))
        else:
            v = np.asarray(phi, dtype=float)
            if v.shape != (partition.n_cells,):
                raise InvalidArgumentError("test function does not match the partition")
            rows.append(v * partition.measures)
    return np.asarray(rows)
