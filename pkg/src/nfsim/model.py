"""Model ingredients: domains, partitions, gains, kernels, inputs and their
discretization into the finite jump-process models.

The continuum data (tau, gain f, kernel w, input I on a domain D) is held in
a MacroModel. A MicroModel is its discretization onto a partition of D into
P cells, each carrying a population of l(k) neurons: discrete weights
Wbar[k][j] (cell-averaged double integrals of w), cell-averaged inputs
Ibar_k(t) and a count vector theta.

All types are immutable after construction and safe to share read-only
across worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InvalidArgumentError, NumericError

__all__ = [
    "Domain",
    "Partition",
    "GainFunction",
    "Kernel",
    "InputCurrent",
    "MacroModel",
    "MicroModel",
    "build_uniform_partition",
    "discretize_weights",
    "discretize_input",
    "discrete_initial_condition",
    "build_micro_model",
    "cell_quadrature",
]


# ---------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in R^d. Default is the unit interval [0, 1]."""

    bounds: tuple = ((0.0, 1.0),)

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", b)
        if not b:
            raise InvalidArgumentError("domain needs at least one dimension")
        for lo, hi in b:
            if not (hi > lo) or not np.isfinite([lo, hi]).all():
                raise InvalidArgumentError(f"degenerate domain bounds ({lo}, {hi})")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def measure(self) -> float:
        out = 1.0
        for lo, hi in self.bounds:
            out *= hi - lo
        return out

    @classmethod
    def unit_interval(cls) -> "Domain":
        return cls(((0.0, 1.0),))

    @classmethod
    def unit_square(cls) -> "Domain":
        return cls(((0.0, 1.0), (0.0, 1.0)))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Partition:
    """Collection of pairwise-disjoint axis-aligned boxes covering a domain.

    Carries the per-cell Lebesgue measures and diameters and the derived
    quantities v_minus/v_plus (extreme cell measures) and delta_plus
    (maximum cell diameter).
    """

    domain: Domain
    lo: np.ndarray  # (P, d) lower corners
    hi: np.ndarray  # (P, d) upper corners

    def __post_init__(self):
        lo = np.atleast_2d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_2d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.shape[1] != self.domain.dim:
            raise InvalidArgumentError("partition corner arrays do not match the domain")
        if np.any(hi <= lo):
            raise InvalidArgumentError("empty partition cell")
        dlo = np.array([b[0] for b in self.domain.bounds])
        dhi = np.array([b[1] for b in self.domain.bounds])
        if np.any(lo < dlo - 1e-12) or np.any(hi > dhi + 1e-12):
            raise InvalidArgumentError("partition cell outside the domain")
        object.__setattr__(self, "lo", _readonly(lo))
        object.__setattr__(self, "hi", _readonly(hi))

    @property
    def n_cells(self) -> int:
        return self.lo.shape[0]

    @property
    def dim(self) -> int:
        return self.lo.shape[1]

    @property
    def measures(self) -> np.ndarray:
        return np.prod(self.hi - self.lo, axis=1)

    @property
    def diameters(self) -> np.ndarray:
        return np.sqrt(np.sum((self.hi - self.lo) ** 2, axis=1))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def v_minus(self) -> float:
        return float(self.measures.min())

    @property
    def v_plus(self) -> float:
        return float(self.measures.max())

    @property
    def delta_plus(self) -> float:
        return float(self.diameters.max())


def build_uniform_partition(domain: Domain, n: int) -> Partition:
    """Tile the domain with n^d congruent boxes (n per axis).

    For [0,1] and n cells, cell k is [(k-1)/n, k/n); measures and diameters
    are exact.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    axes = []
    for lo, hi in domain.bounds:
        edges = np.linspace(lo, hi, n + 1)
        axes.append((edges[:-1], edges[1:]))
    los = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    his = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    lo = np.stack([g.ravel() for g in los], axis=1)
    hi = np.stack([g.ravel() for g in his], axis=1)
    return Partition(domain, lo, hi)


def cell_quadrature(partition: Partition, order: int):
    """Tensor Gauss-Legendre nodes/weights for every cell.

    Returns (nodes, weights) with nodes of shape (P, order^d, d) and weights
    of shape (P, order^d); weights sum to the cell measure.
    """
    if order < 1:
        raise InvalidArgumentError("quadrature order must be >= 1")
    x, w = leggauss(order)  # on [-1, 1]
    d = partition.dim
    grids = np.meshgrid(*([x] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)  # (order^d, d)
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    half = 0.5 * (partition.hi - partition.lo)  # (P, d)
    mid = partition.centers
    nodes = mid[:, None, :] + half[:, None, :] * pts[None, :, :]
    weights = wts[None, :] * np.prod(half, axis=1)[:, None]
    return nodes, weights


# ---------------------------------------------------------------------------
# gain functions

_GAIN_KINDS = ("logistic", "tanh", "constant", "affine", "table", "custom")


@dataclass(frozen=True)
class GainFunction:
    """Non-negative, bounded, Lipschitz gain f with declared sup norm and
    Lipschitz constant.

    Use the classmethod constructors; parameters are kept so instances
    pickle cleanly into worker processes.
    """

    kind: str
    params: tuple = ()
    sup_norm: float = 1.0
    lipschitz: float = 1.0
    fn: Callable | None = None          # kind == "custom" only
    dfn: Callable | None = None

    def __post_init__(self):
        if self.kind not in _GAIN_KINDS:
            raise InvalidArgumentError(f"unknown gain kind {self.kind!r}")
        if self.sup_norm < 0 or self.lipschitz < 0:
            raise InvalidArgumentError("sup_norm and lipschitz must be >= 0")
        if self.kind in ("table", "custom"):
            self._verify_by_sampling()

    # -- constructors

    @classmethod
    def logistic(cls, beta1: float, beta2: float = 0.0) -> "GainFunction":
        """f(z) = 1 / (1 + exp(-(beta1 z + beta2))); sup 1, L = beta1/4."""
        if beta1 <= 0:
            raise InvalidArgumentError("logistic gain needs beta1 > 0")
        return cls("logistic", (float(beta1), float(beta2)), 1.0, beta1 / 4.0)

    @classmethod
    def tanh_gain(cls, beta1: float, beta2: float = 0.0) -> "GainFunction":
        """f(z) = (tanh(beta1 z + beta2) + 1)/2; sup 1, L = beta1/2."""
        if beta1 <= 0:
            raise InvalidArgumentError("tanh gain needs beta1 > 0")
        return cls("tanh", (float(beta1), float(beta2)), 1.0, beta1 / 2.0)

    @classmethod
    def constant(cls, value: float) -> "GainFunction":
        if value < 0:
            raise InvalidArgumentError("gain must be non-negative")
        return cls("constant", (float(value),), float(value), 0.0)

    @classmethod
    def affine(cls, slope: float, intercept: float,
               lo: float = 0.0, hi: float = 1.0) -> "GainFunction":
        """f(z) = slope * clip(z, lo, hi) + intercept.

        The clip keeps f bounded; configs meant for exact moment equations
        must keep arguments inside [lo, hi].
        """
        if hi <= lo:
            raise InvalidArgumentError("affine gain needs hi > lo")
        vals = (slope * lo + intercept, slope * hi + intercept)
        if min(vals) < 0:
            raise InvalidArgumentError("affine gain takes negative values on its range")
        return cls("affine", (float(slope), float(intercept), float(lo), float(hi)),
                   max(vals), abs(float(slope)))

    @classmethod
    def from_table(cls, z: Sequence[float], values: Sequence[float],
                   sup_norm: float, lipschitz: float) -> "GainFunction":
        """Linear interpolation through (z, values), constant outside.

        The declared sup_norm/lipschitz are verified by dense sampling at
        construction rather than trusted.
        """
        z = tuple(float(v) for v in z)
        values = tuple(float(v) for v in values)
        if len(z) != len(values) or len(z) < 2:
            raise InvalidArgumentError("table gain needs matching z/values, length >= 2")
        if any(b <= a for a, b in zip(z[:-1], z[1:])):
            raise InvalidArgumentError("table abscissae must be strictly increasing")
        return cls("table", (z, values), float(sup_norm), float(lipschitz))

    @classmethod
    def custom(cls, fn: Callable, sup_norm: float, lipschitz: float,
               dfn: Callable | None = None) -> "GainFunction":
        return cls("custom", (), float(sup_norm), float(lipschitz), fn=fn, dfn=dfn)

    # -- evaluation

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "logistic":
            b1, b2 = self.params
            return 1.0 / (1.0 + np.exp(-(b1 * z + b2)))
        if k == "tanh":
            b1, b2 = self.params
            return 0.5 * (np.tanh(b1 * z + b2) + 1.0)
        if k == "constant":
            return np.full_like(z, self.params[0])
        if k == "affine":
            a, b, lo, hi = self.params
            return a * np.clip(z, lo, hi) + b
        if k == "table":
            zs, vs = self.params
            return np.interp(z, zs, vs)
        return np.asarray(self.fn(z), dtype=float)

    def derivative(self, z):
        """df/dz, analytic where the kind allows, finite differences else."""
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "logistic":
            b1, _ = self.params
            fz = self(z)
            return b1 * fz * (1.0 - fz)
        if k == "tanh":
            b1, b2 = self.params
            return 0.5 * b1 * (1.0 - np.tanh(b1 * z + b2) ** 2)
        if k == "constant":
            return np.zeros_like(z)
        if k == "affine":
            a, _, lo, hi = self.params
            return np.where((z >= lo) & (z <= hi), a, 0.0)
        if self.dfn is not None:
            return np.asarray(self.dfn(z), dtype=float)
        h = 1e-6
        return (self(z + h) - self(z - h)) / (2 * h)

    @property
    def is_affine(self) -> bool:
        """Exactly affine on its working range (moment equations close)."""
        return self.kind in ("constant", "affine")

    def _verify_by_sampling(self, n: int = 4097, span: float = 50.0):
        z = np.linspace(-span, span, n)
        fz = self(z)
        if np.any(fz < -1e-12):
            raise InvalidArgumentError("gain is negative on the sample grid")
        if np.any(fz > self.sup_norm + 1e-9):
            raise InvalidArgumentError("gain exceeds its declared sup norm")
        dz = z[1] - z[0]
        if np.any(np.abs(np.diff(fz)) > self.lipschitz * dz + 1e-9):
            raise InvalidArgumentError("gain violates its declared Lipschitz constant")


# ---------------------------------------------------------------------------
# connectivity kernels

_KERNEL_KINDS = ("constant", "gaussian", "mexican_hat", "custom")


@dataclass(frozen=True)
class Kernel:
    """Connectivity weight w(x, y) on D x D.

    `pairwise(X, Y)` evaluates the (N, M) matrix for point lists X (N, d),
    Y (M, d); `__call__(x, y)` broadcasts elementwise over coordinate arrays
    (one dimension) or (..., d) point arrays. Custom evaluators receive, in
    one dimension, broadcastable coordinate arrays; in d >= 2, (..., d)
    point arrays.
    """

    kind: str
    params: tuple = ()
    fn: Callable | None = None
    grad_x_bound: float | None = None   # optional sup of |grad_x w|, diagnostics

    def __post_init__(self):
        if self.kind not in _KERNEL_KINDS:
            raise InvalidArgumentError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "Kernel":
        return cls("constant", (float(value),), grad_x_bound=0.0)

    @classmethod
    def gaussian(cls, amplitude: float = 1.0, length: float = 1.0) -> "Kernel":
        """w(x, y) = amplitude * exp(-|x-y|^2 / (2 length^2))."""
        if length <= 0:
            raise InvalidArgumentError("gaussian kernel needs length > 0")
        a, s = float(amplitude), float(length)
        return cls("gaussian", (a, s), grad_x_bound=abs(a) * math.exp(-0.5) / s)

    @classmethod
    def mexican_hat(cls, a1: float, s1: float, a2: float, s2: float) -> "Kernel":
        """Difference of Gaussians a1 G(s1) - a2 G(s2)."""
        if s1 <= 0 or s2 <= 0:
            raise InvalidArgumentError("mexican_hat needs positive widths")
        g = math.exp(-0.5)
        bound = abs(a1) * g / s1 + abs(a2) * g / s2
        return cls("mexican_hat", (float(a1), float(s1), float(a2), float(s2)),
                   grad_x_bound=bound)

    @classmethod
    def custom(cls, fn: Callable, grad_x_bound: float | None = None) -> "Kernel":
        return cls("custom", (), fn=fn, grad_x_bound=grad_x_bound)

    def pairwise(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Matrix w(X[i], Y[j]) for point lists X (N, d), Y (M, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        d = X.shape[1]
        if self.kind == "custom":
            if d == 1:
                out = self.fn(X[:, 0][:, None], Y[:, 0][None, :])
            else:
                out = self.fn(X[:, None, :], Y[None, :, :])
            out = np.asarray(out, dtype=float)
        else:
            r2 = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=-1)
            out = self._from_sqdist(r2)
        if out.shape != (X.shape[0], Y.shape[0]):
            raise InvalidArgumentError("kernel evaluator returned a wrong shape")
        return out

    def __call__(self, x, y):
        if self.kind == "custom":
            return np.asarray(self.fn(x, y), dtype=float)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim >= 2 or y.ndim >= 2:
            r2 = ((x - y) ** 2).sum(axis=-1)
        else:
            r2 = (x - y) ** 2
        return self._from_sqdist(r2)

    def _from_sqdist(self, r2: np.ndarray) -> np.ndarray:
        k = self.kind
        if k == "constant":
            return np.full_like(np.asarray(r2, dtype=float), self.params[0])
        if k == "gaussian":
            a, s = self.params
            return a * np.exp(-r2 / (2 * s * s))
        a1, s1, a2, s2 = self.params
        return a1 * np.exp(-r2 / (2 * s1 * s1)) - a2 * np.exp(-r2 / (2 * s2 * s2))

    def l2_norm(self, domain: Domain, order: int = 16) -> float:
        """Quadrature estimate of ||w||_{L^2(D x D)}; also a finiteness check."""
        part = build_uniform_partition(domain, 1)
        nodes, weights = cell_quadrature(part, order)
        pts, wts = nodes[0], weights[0]
        vals = self.pairwise(pts, pts)
        if not np.all(np.isfinite(vals)):
            raise NumericError("kernel evaluates to non-finite values")
        return float(np.sqrt(np.sum(wts[:, None] * wts[None, :] * vals ** 2)))


# ---------------------------------------------------------------------------
# input currents

_INPUT_KINDS = ("zero", "constant", "linear", "sine", "custom")


@dataclass(frozen=True)
class InputCurrent:
    """External drive I(t, x) with declared boundedness/differentiability flags.

    fn-style evaluation: `current(t, x)` with scalar t and x of shape (N, d)
    or (N,) in one dimension, returning shape (N,).
    """

    kind: str
    params: tuple = ()
    fn: Callable | None = None
    bounded_in_time: bool = True
    bound: float | None = None
    spatially_differentiable: bool = True
    time_dependent: bool = False

    def __post_init__(self):
        if self.kind not in _INPUT_KINDS:
            raise InvalidArgumentError(f"unknown input kind {self.kind!r}")

    @classmethod
    def zero(cls) -> "InputCurrent":
        return cls("zero", bound=0.0)

    @classmethod
    def constant(cls, value: float) -> "InputCurrent":
        return cls("constant", (float(value),), bound=abs(float(value)))

    @classmethod
    def linear(cls, slope: float, intercept: float = 0.0) -> "InputCurrent":
        """I(t, x) = slope * x + intercept (first coordinate in d > 1)."""
        return cls("linear", (float(slope), float(intercept)))

    @classmethod
    def sine(cls, amplitude: float = 1.0, space_freq: int = 1,
             time_freq: float = 0.0) -> "InputCurrent":
        """I(t, x) = amplitude * sin(pi space_freq x) * cos(2 pi time_freq t)."""
        return cls("sine", (float(amplitude), int(space_freq), float(time_freq)),
                   bound=abs(float(amplitude)),
                   time_dependent=(time_freq != 0.0))

    @classmethod
    def custom(cls, fn: Callable, bounded_in_time: bool = True,
               bound: float | None = None, spatially_differentiable: bool = True,
               time_dependent: bool = True) -> "InputCurrent":
        return cls("custom", (), fn=fn, bounded_in_time=bounded_in_time,
                   bound=bound, spatially_differentiable=spatially_differentiable,
                   time_dependent=time_dependent)

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        x0 = x[..., 0] if x.ndim >= 2 else x
        k = self.kind
        if k == "zero":
            return np.zeros_like(x0)
        if k == "constant":
            return np.full_like(x0, self.params[0])
        if k == "linear":
            a, b = self.params
            return a * x0 + b
        if k == "sine":
            a, q, om = self.params
            return a * math.cos(2 * math.pi * om * t) * np.sin(math.pi * q * x0)
        return np.asarray(self.fn(t, x), dtype=float)


# ---------------------------------------------------------------------------
# discretization operations

def discretize_weights(kernel: Kernel, partition: Partition,
                       quad_order: int = 8) -> np.ndarray:
    """Discrete weights Wbar[k][j] = (1/|D_k|) int_{D_k} int_{D_j} w(x,y) dy dx.

    Tensor Gauss-Legendre of the given order per cell; deterministic for
    fixed inputs.
    """
    if quad_order < 1:
        raise InvalidArgumentError("quadrature order must be >= 1")
    nodes, weights = cell_quadrature(partition, quad_order)
    P, Q, d = nodes.shape
    X = nodes.reshape(P * Q, d)
    vals = kernel.pairwise(X, X)  # (P*Q, P*Q)
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise NumericError(
            f"kernel non-finite between cells {bad[0] // Q} and {bad[1] // Q}")
    W = weights.reshape(P * Q)
    integ = (W[:, None] * vals * W[None, :]).reshape(P, Q, P, Q).sum(axis=(1, 3))
    return integ / partition.measures[:, None]


def discretize_input(current: InputCurrent, partition: Partition, t: float,
                     quad_order: int = 8) -> np.ndarray:
    """Cell averages Ibar[k] = (1/|D_k|) int_{D_k} I(t, x) dx."""
    if t < 0:
        raise InvalidArgumentError("t must be >= 0")
    nodes, weights = cell_quadrature(partition, quad_order)
    vals = current(t, nodes.reshape(-1, partition.dim)).reshape(nodes.shape[:2])
    if not np.all(np.isfinite(vals)):
        raise NumericError("input current evaluates to non-finite values")
    return (weights * vals).sum(axis=1) / partition.measures


def cell_averages(fn: Callable, partition: Partition, quad_order: int = 8) -> np.ndarray:
    """Cell averages of a spatial function given as fn(x) on (N, d) points."""
    nodes, weights = cell_quadrature(partition, quad_order)
    vals = np.asarray(fn(nodes.reshape(-1, partition.dim)), dtype=float)
    vals = vals.reshape(nodes.shape[:2])
    return (weights * vals).sum(axis=1) / partition.measures


def discrete_initial_condition(nu0, partition: Partition,
                               l: np.ndarray, quad_order: int = 8) -> np.ndarray:
    """Counts theta0[k] minimizing |i/l(k) - cell average of nu0| over
    i in {0, ..., l(k)}; ties resolve to the smaller i.

    nu0 may be a callable on (N, d) points, a scalar, or a vector of cell
    averages.
    """
    l = np.asarray(l, dtype=int)
    if np.any(l < 1):
        raise InvalidArgumentError("population sizes must be >= 1")
    if callable(nu0):
        avg = cell_averages(nu0, partition, quad_order)
    else:
        nu0 = np.asarray(nu0, dtype=float)
        avg = np.full(partition.n_cells, float(nu0)) if nu0.ndim == 0 else nu0
    if avg.shape != (partition.n_cells,):
        raise InvalidArgumentError("nu0 cell averages do not match the partition")
    theta0 = np.empty(partition.n_cells, dtype=int)
    for k in range(partition.n_cells):
        cand = np.arange(l[k] + 1)
        theta0[k] = cand[np.argmin(np.abs(cand / l[k] - avg[k]))]
    return theta0


# ---------------------------------------------------------------------------
# model containers

@dataclass(frozen=True)
class MacroModel:
    """Continuum Wilson-Cowan data: tau, gain f, kernel w, input I on D."""

    domain: Domain
    tau: float
    gain: GainFunction
    kernel: Kernel
    current: InputCurrent

    def __post_init__(self):
        if self.tau <= 0:
            raise InvalidArgumentError("tau must be > 0")


@dataclass(frozen=True)
class MicroModel:
    """Finite jump-process model on a partition.

    Fields follow the discrete-model construction: population sizes l(k),
    weights Wbar (P x P), per-cell input averages through `current`, gain f
    and time constant tau. epsilon**2 == 1/rho.
    """

    tau: float
    partition: Partition
    l: np.ndarray
    Wbar: np.ndarray
    gain: GainFunction
    current: InputCurrent
    input_quad_order: int = 8

    def __post_init__(self):
        l = np.asarray(self.l, dtype=int)
        if np.any(l < 1):
            raise InvalidArgumentError("population sizes must be >= 1")
        W = np.asarray(self.Wbar, dtype=float)
        P = self.partition.n_cells
        if l.shape != (P,) or W.shape != (P, P):
            raise InvalidArgumentError("l / Wbar dimensions do not match the partition")
        if self.tau <= 0:
            raise InvalidArgumentError("tau must be > 0")
        object.__setattr__(self, "l", _readonly(l))
        object.__setattr__(self, "Wbar", _readonly(W))
        # cached quadrature for Ibar(t); zero-input shortcut worth keeping
        nodes, weights = cell_quadrature(self.partition, self.input_quad_order)
        object.__setattr__(self, "_in_nodes", _readonly(nodes.reshape(-1, self.partition.dim)))
        object.__setattr__(self, "_in_weights", _readonly(weights / self.partition.measures[:, None]))
        object.__setattr__(self, "_in_shape", nodes.shape[:2])
        object.__setattr__(self, "_ibar0", None)
        if not self.current.time_dependent:
            object.__setattr__(self, "_ibar0", _readonly(self.ibar(0.0)))

    @property
    def n_pops(self) -> int:
        return self.partition.n_cells

    @property
    def ell_minus(self) -> int:
        return int(self.l.min())

    @property
    def ell_plus(self) -> int:
        return int(self.l.max())

    @property
    def rho(self) -> float:
        return self.ell_minus / self.partition.v_plus

    @property
    def epsilon(self) -> float:
        return math.sqrt(self.partition.v_plus / self.ell_minus)

    def ibar(self, t: float) -> np.ndarray:
        """Cell-averaged input vector Ibar(t)."""
        if self._ibar0 is not None:
            return self._ibar0
        vals = self.current(t, self._in_nodes).reshape(self._in_shape)
        return (self._in_weights * vals).sum(axis=1)

    def ibar_k(self, t: float, k: int) -> float:
        """Single component of Ibar(t) (hot path of the thinning loop)."""
        if self._ibar0 is not None:
            return float(self._ibar0[k])
        q = self._in_shape[1]
        nodes = self._in_nodes[k * q:(k + 1) * q]
        return float(self._in_weights[k] @ self.current(t, nodes))


def build_micro_model(macro: MacroModel, n: int, l, quad_order: int = 8) -> MicroModel:
    """Uniform-partition micro model with n cells per axis; l is a scalar
    (uniform populations) or a length-P vector."""
    part = build_uniform_partition(macro.domain, n)
    Wbar = discretize_weights(macro.kernel, part, quad_order)
    lv = np.full(part.n_cells, int(l)) if np.ndim(l) == 0 else np.asarray(l, dtype=int)
    return MicroModel(macro.tau, part, lv, Wbar, macro.gain, macro.current,
                      input_quad_order=quad_order)
