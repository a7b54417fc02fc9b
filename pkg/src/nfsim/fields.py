"""Spatial fields on partitions, trajectories, and the error norms used by
the convergence experiments (exact L^2 of piecewise-constant differences and
a spectral dual-Sobolev surrogate).

The H^{-alpha} norm is realized through Neumann (cosine) spectral weights on
an interval: an equivalent-norm surrogate adequate for convergence trends,
not a bit-exact dual Sobolev norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .model import Partition, build_uniform_partition, cell_quadrature

__all__ = [
    "Field",
    "Trajectory",
    "NormSpec",
    "l2_error",
    "l2_norm",
    "dual_sobolev_error",
    "dual_sobolev_norm",
    "cosine_coefficient_matrix",
    "cell_integrals",
    "restrict_values",
]


@dataclass(frozen=True)
class Field:
    """Piecewise-constant (or nodal) real field over a partition's cells."""

    partition: Partition
    values: np.ndarray
    kind: str = "piecewise-constant"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.partition.n_cells,):
            raise InvalidArgumentError("field values do not match the partition")
        if not np.all(np.isfinite(v)):
            raise NumericError("field contains non-finite values")
        if self.kind not in ("piecewise-constant", "nodal"):
            raise InvalidArgumentError(f"unknown field kind {self.kind!r}")
        object.__setattr__(self, "values", v)

    def l2_norm(self) -> float:
        return l2_norm(self.values, self.partition)

    def __add__(self, other: "Field") -> "Field":
        _check_same_partition(self.partition, other.partition)
        return replace(self, values=self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_partition(self.partition, other.partition)
        return replace(self, values=self.values - other.values)


class Trajectory:
    """Time-indexed field values on a fixed partition.

    Values between stored times are linearly interpolated; outside [t0, t1]
    evaluation is an error.
    """

    def __init__(self, times, values, partition: Partition):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.partition = partition
        if self.values.shape != (self.times.size, partition.n_cells):
            raise InvalidArgumentError("trajectory values shaped inconsistently")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidArgumentError("trajectory times must increase strictly")

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> np.ndarray:
        return self.at_many(np.asarray([t]))[0]

    def at_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if ts.min() < self.times[0] - 1e-12 or ts.max() > self.times[-1] + 1e-12:
            raise InvalidArgumentError("evaluation time outside the trajectory")
        ts = np.clip(ts, self.times[0], self.times[-1])
        idx = np.clip(np.searchsorted(self.times, ts, side="right") - 1,
                      0, self.times.size - 2)
        t0, t1 = self.times[idx], self.times[idx + 1]
        w = (ts - t0) / (t1 - t0)
        return (1 - w)[:, None] * self.values[idx] + w[:, None] * self.values[idx + 1]

    def field(self, t: float) -> Field:
        return Field(self.partition, self.at(t))

    def restrict(self, coarse: Partition) -> "Trajectory":
        vals = restrict_values(self.values, self.partition, coarse)
        return Trajectory(self.times, vals, coarse)


def _check_same_partition(a: Partition, b: Partition):
    if a is b:
        return
    if a.lo.shape != b.lo.shape or not (np.allclose(a.lo, b.lo) and np.allclose(a.hi, b.hi)):
        raise InvalidArgumentError("fields live on different partitions")


def _uniform_1d_edges(part: Partition) -> np.ndarray:
    """Edges of a sorted, contiguous, uniform 1-d partition (else raises)."""
    if part.dim != 1:
        raise InvalidArgumentError("operation requires a 1-d partition")
    lo = part.lo[:, 0]
    hi = part.hi[:, 0]
    order = np.argsort(lo)
    if not np.allclose(lo[order][1:], hi[order][:-1]):
        raise InvalidArgumentError("partition cells are not contiguous")
    h = hi - lo
    if not np.allclose(h, h[0]):
        raise InvalidArgumentError("partition is not uniform")
    if not np.array_equal(order, np.arange(part.n_cells)):
        raise InvalidArgumentError("partition cells are not sorted")
    return np.append(lo, hi[-1])


def restrict_values(values: np.ndarray, fine: Partition, coarse: Partition) -> np.ndarray:
    """Exact cell-averaging of piecewise-constant values from a finer uniform
    1-d partition onto a coarser nested one. Leading axes are preserved."""
    if fine.n_cells == coarse.n_cells:
        _check_same_partition(fine, coarse)
        return np.asarray(values, dtype=float)
    _uniform_1d_edges(fine)
    _uniform_1d_edges(coarse)
    m, P = fine.n_cells, coarse.n_cells
    if m % P != 0:
        raise InvalidArgumentError("fine partition is not a refinement of the coarse one")
    mult = m // P
    v = np.asarray(values, dtype=float)
    return v.reshape(v.shape[:-1] + (P, mult)).mean(axis=-1)


def l2_norm(values: np.ndarray, partition: Partition) -> float:
    """Exact L^2 norm of a piecewise-constant field."""
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(np.sum(v * v * partition.measures)))


def l2_error(a, b) -> float:
    """Exact L^2 norm of the difference of two piecewise-constant fields.

    Fields on nested uniform 1-d grids are cell-averaged finer-onto-coarser
    first; incompatible grids raise invalid-argument.
    """
    pa, va = _as_field(a)
    pb, vb = _as_field(b)
    if pa.n_cells == pb.n_cells:
        _check_same_partition(pa, pb)
        return l2_norm(va - vb, pa)
    if pa.n_cells > pb.n_cells:
        return l2_norm(restrict_values(va, pa, pb) - vb, pb)
    return l2_norm(va - restrict_values(vb, pb, pa), pa)


def _as_field(f):
    if isinstance(f, Field):
        return f.partition, f.values
    if isinstance(f, tuple) and len(f) == 2:
        part, vals = f
        return part, np.asarray(vals, dtype=float)
    raise InvalidArgumentError("expected a Field or a (partition, values) pair")


# ---------------------------------------------------------------------------
# dual Sobolev (H^{-alpha}) surrogate via cosine modes

@dataclass(frozen=True)
class NormSpec:
    """alpha >= 0 selects H^{-alpha} (0 = L^2); modes is the cosine-series
    truncation; d enters only through the derived exponent q."""

    alpha: float = 0.0
    modes: int = 512
    d: int = 1

    def __post_init__(self):
        if self.alpha < 0 or self.modes < 1 or self.d < 1:
            raise InvalidArgumentError("need alpha >= 0, modes >= 1, d >= 1")

    @property
    def q(self) -> float:
        """Kernel-integrability exponent of the weakened-norm corollary.

        The borderline alpha = d/2 case has exponent '1-'; it is stored as
        1 - 1e-3.
        """
        if self.alpha < self.d / 2:
            return 2 * self.d / (self.d + 2 * self.alpha)
        if self.alpha == self.d / 2:
            return 1.0 - 1e-3
        return 1.0


def cosine_coefficient_matrix(partition: Partition, modes: int) -> np.ndarray:
    """Exact integrals of the orthonormal Neumann cosine basis over each cell.

    Row k holds int_{cell j} e_k(x) dx for e_0 = 1/sqrt(L),
    e_k = sqrt(2/L) cos(pi k (x - a)/L) on the interval [a, a + L].
    """
    edges = _uniform_1d_edges(partition)
    a, b = partition.domain.bounds[0]
    L = b - a
    lo, hi = edges[:-1], edges[1:]
    E = np.empty((modes + 1, partition.n_cells))
    E[0] = (hi - lo) / math.sqrt(L)
    k = np.arange(1, modes + 1)[:, None]
    s = math.pi * k / L
    E[1:] = math.sqrt(2.0 / L) * (np.sin(s * (hi - a)) - np.sin(s * (lo - a))) / s
    return E


def _mode_weights(spec: NormSpec, L: float, modes: int) -> np.ndarray:
    k = np.arange(modes + 1)
    return (1.0 + (math.pi * k / L) ** 2) ** (-spec.alpha)


def dual_sobolev_norm(values: np.ndarray, partition: Partition, spec: NormSpec,
                      coeff_matrix: np.ndarray | None = None) -> float:
    """Spectral H^{-alpha} surrogate of a piecewise-constant 1-d field."""
    if partition.dim != 1:
        raise InvalidArgumentError("dual Sobolev norm supports d = 1 only")
    if coeff_matrix is None:
        coeff_matrix = cosine_coefficient_matrix(partition, spec.modes)
    c = coeff_matrix @ np.asarray(values, dtype=float)
    a, b = partition.domain.bounds[0]
    w = _mode_weights(spec, b - a, coeff_matrix.shape[0] - 1)
    return float(np.sqrt(np.sum(w * c * c)))


def dual_sobolev_error(a, b, spec: NormSpec) -> float:
    """H^{-alpha} surrogate distance between two piecewise-constant fields."""
    pa, va = _as_field(a)
    pb, vb = _as_field(b)
    if pa.dim != 1 or pb.dim != 1:
        raise InvalidArgumentError("dual Sobolev norm supports d = 1 only")
    if pa.n_cells == pb.n_cells:
        _check_same_partition(pa, pb)
        part, diff = pa, va - vb
    elif pa.n_cells > pb.n_cells:
        part, diff = pb, restrict_values(va, pa, pb) - vb
    else:
        part, diff = pa, va - restrict_values(vb, pb, pa)
    return dual_sobolev_norm(diff, part, spec)


def cell_integrals(fn, partition: Partition, quad_order: int = 8) -> np.ndarray:
    """int_{D_k} phi(x) dx for a callable phi on (N, d) point arrays."""
    nodes, weights = cell_quadrature(partition, quad_order)
    vals = np.asarray(fn(nodes.reshape(-1, partition.dim)), dtype=float)
    return (weights * vals.reshape(nodes.shape[:2])).sum(axis=1)


def uniform_grid_partition(domain, m: int) -> Partition:
    """Fine uniform grid used as the solver's collocation partition."""
    return build_uniform_partition(domain, m)
