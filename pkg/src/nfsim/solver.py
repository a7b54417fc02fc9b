"""Deterministic solvers for the neural-field limit equations.

All three right-hand sides share the structure tau nu' = -nu + N(nu, t):

  wilson-cowan   N = f(int w(x,y) nu(y) dy + I(t,x))
  amari          N = int w(x,y) f(nu(y)) dy + I(t,x)
  bounded-limit  N = (1 - nu) f(int w(x,y) nu(y) dy + I(t,x))

Spatial discretization collocates on the cells of a uniform grid (or on a
micro model's partition, reusing its discrete weights); the kernel integral
becomes a precomputed matrix-vector product. Time stepping defaults to an
exponential integrator (ETD2RK: the linear decay is integrated exactly, the
nonlinearity by a second-order two-stage rule, which matches the variation
of constants representation of the solution); classical RK4 is available
for cross-checks. Both are second order or better in dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .fields import Field, Trajectory, cell_integrals
from .model import (Domain, GainFunction, InputCurrent, Kernel, MacroModel,
                    MicroModel, Partition, build_uniform_partition,
                    cell_quadrature)

__all__ = [
    "SolverConfig",
    "FieldProblem",
    "solve_wilson_cowan",
    "solve_amari",
    "solve_bounded_limit",
    "nemytzkii_apply",
]


@dataclass(frozen=True)
class SolverConfig:
    """Grid resolution, step size, scheme and kernel quadrature order."""

    m: int = 512
    dt: float | None = None          # None -> T / 2048
    scheme: str = "exponential"      # or "rk4"
    quad_order: int = 1              # per-cell Gauss-Legendre for the kernel matrix
    store_every: int = 1

    def __post_init__(self):
        if self.m < 2:
            raise InvalidArgumentError("grid resolution m must be >= 2")
        if self.dt is not None and self.dt <= 0:
            raise InvalidArgumentError("dt must be > 0")
        if self.scheme not in ("exponential", "rk4"):
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}")
        if self.store_every < 1 or self.quad_order < 1:
            raise InvalidArgumentError("store_every and quad_order must be >= 1")


class FieldProblem:
    """Spatially discretized model data shared by the solvers, the SPDE
    integrators and the moment equations.

    kmat maps cell values to the kernel integral int w(x_k, y) nu(y) dy
    evaluated per cell; input_values(t) supplies per-cell inputs.
    """

    def __init__(self, partition: Partition, kmat: np.ndarray, gain: GainFunction,
                 current: InputCurrent, tau: float, input_values=None):
        self.partition = partition
        self.kmat = np.asarray(kmat, dtype=float)
        self.gain = gain
        self.current = current
        self.tau = float(tau)
        P = partition.n_cells
        if self.kmat.shape != (P, P):
            raise InvalidArgumentError("kernel matrix does not match the grid")
        self._input_values = input_values
        self._static_input = None
        if not current.time_dependent:
            self._static_input = self.input_values(0.0)

    def input_values(self, t: float) -> np.ndarray:
        if self._static_input is not None:
            return self._static_input
        if self._input_values is not None:
            return self._input_values(t)
        x = self.partition.centers
        return np.asarray(self.current(t, x), dtype=float)

    def nemytzkii(self, values: np.ndarray, t: float) -> np.ndarray:
        """F(g, t) = f(K g + I(t, .)) on the grid."""
        return self.gain(self.kmat @ values + self.input_values(t))

    @classmethod
    def from_macro(cls, macro: MacroModel, m: int, quad_order: int = 1) -> "FieldProblem":
        if macro.domain.dim > 2:
            raise InvalidArgumentError("field solvers support d <= 2")
        part = build_uniform_partition(macro.domain, m)
        centers = part.centers
        if quad_order == 1:
            kmat = macro.kernel.pairwise(centers, centers) * part.measures[None, :]
        else:
            nodes, weights = cell_quadrature(part, quad_order)
            vals = macro.kernel.pairwise(centers, nodes.reshape(-1, part.dim))
            kmat = (vals.reshape(part.n_cells, part.n_cells, -1)
                    * weights[None, :, :]).sum(axis=2)
        return cls(part, kmat, macro.gain, macro.current, macro.tau)

    @classmethod
    def from_micro(cls, micro: MicroModel) -> "FieldProblem":
        """Reuse the micro model's discrete weights and cell-averaged input."""
        return cls(micro.partition, micro.Wbar, micro.gain, micro.current,
                   micro.tau, input_values=micro.ibar)


def _as_problem(model, cfg: SolverConfig) -> FieldProblem:
    if isinstance(model, FieldProblem):
        return model
    if isinstance(model, MicroModel):
        return FieldProblem.from_micro(model)
    if isinstance(model, MacroModel):
        return FieldProblem.from_macro(model, cfg.m, cfg.quad_order)
    raise InvalidArgumentError("expected MacroModel, MicroModel or FieldProblem")


def _initial_values(nu0, problem: FieldProblem) -> np.ndarray:
    if isinstance(nu0, Field):
        if nu0.partition.n_cells != problem.partition.n_cells:
            raise InvalidArgumentError("initial field does not match the solver grid")
        return nu0.values.copy()
    if callable(nu0):
        x = problem.partition.centers
        return np.asarray(nu0(x), dtype=float).reshape(problem.partition.n_cells)
    arr = np.asarray(nu0, dtype=float)
    if arr.ndim == 0:
        return np.full(problem.partition.n_cells, float(arr))
    if arr.shape != (problem.partition.n_cells,):
        raise InvalidArgumentError("initial values do not match the solver grid")
    return arr.copy()


def _nonlinearity(variant: str):
    if variant == "wilson-cowan":
        return lambda p, v, t: p.nemytzkii(v, t)
    if variant == "amari":
        return lambda p, v, t: p.kmat @ p.gain(v) + p.input_values(t)
    if variant == "bounded-limit":
        return lambda p, v, t: (1.0 - v) * p.nemytzkii(v, t)
    raise InvalidArgumentError(f"unknown variant {variant!r}")


def _solve(variant: str, nu0, model, T: float, cfg: SolverConfig) -> Trajectory:
    problem = _as_problem(model, cfg)
    N = _nonlinearity(variant)
    v = _initial_values(nu0, problem)
    tau = problem.tau
    dt = cfg.dt if cfg.dt is not None else T / 2048
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / n_steps

    times = [0.0]
    stored = [v.copy()]
    if cfg.scheme == "exponential":
        a = dt / tau
        decay = math.exp(-a)
        phi1 = 1.0 - decay
        phi2 = 1.0 - phi1 / a
        c1, c2 = phi1 - phi2, phi2
    t = 0.0
    for step in range(1, n_steps + 1):
        if cfg.scheme == "exponential":
            n1 = N(problem, v, t)
            pred = decay * v + phi1 * n1
            n2 = N(problem, pred, t + dt)
            v = decay * v + c1 * n1 + c2 * n2
        else:
            k1 = (-v + N(problem, v, t)) / tau
            k2 = (-(v + 0.5 * dt * k1) + N(problem, v + 0.5 * dt * k1, t + 0.5 * dt)) / tau
            k3 = (-(v + 0.5 * dt * k2) + N(problem, v + 0.5 * dt * k2, t + 0.5 * dt)) / tau
            k4 = (-(v + dt * k3) + N(problem, v + dt * k3, t + dt)) / tau
            v = v + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        t = step * dt
        if step % cfg.store_every == 0 or step == n_steps:
            if not np.all(np.isfinite(v)):
                raise NumericError(f"solver produced non-finite values at t = {t:.6g}")
            times.append(t)
            stored.append(v.copy())
    return Trajectory(np.asarray(times), np.asarray(stored), problem.partition)


def solve_wilson_cowan(nu0, model, T: float, cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """Trajectory of tau nu' = -nu + f(int w nu dy + I) from nu0 on [0, T]."""
    return _solve("wilson-cowan", nu0, model, T, cfg)


def solve_amari(nu0, model, T: float, cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """Trajectory of tau nu' = -nu + int w f(nu) dy + I."""
    return _solve("amari", nu0, model, T, cfg)


def solve_bounded_limit(nu0, model, T: float, cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """Trajectory of tau nu' = -nu + (1 - nu) f(int w nu dy + I)."""
    return _solve("bounded-limit", nu0, model, T, cfg)


def nemytzkii_apply(g, t: float, model, cfg: SolverConfig = SolverConfig()) -> Field:
    """F(g, t)(x) = f(int w(x, y) g(y) dy + I(t, x)) on the grid of g."""
    if isinstance(g, Field):
        if isinstance(model, FieldProblem):
            problem = model
        elif isinstance(model, MicroModel):
            problem = FieldProblem.from_micro(model)
        elif isinstance(model, MacroModel):
            problem = FieldProblem.from_macro(
                model, int(round(g.partition.n_cells ** (1 / g.partition.dim))),
                cfg.quad_order)
        else:
            raise InvalidArgumentError("expected MacroModel, MicroModel or FieldProblem")
        if problem.partition.n_cells != g.partition.n_cells:
            raise InvalidArgumentError("field does not match the model grid")
        return Field(problem.partition, problem.nemytzkii(g.values, t))
    problem = _as_problem(model, cfg)
    return Field(problem.partition, problem.nemytzkii(np.asarray(g, float), t))
