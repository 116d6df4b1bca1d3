"""Exact closed-form integration of continuous piecewise-affine flows.

Within a cell the flow has the analytic solution
psi(x, t) = x e^{t a} + (e^{t a} - 1) b / a, evaluated here in the
cancellation-free form x + t * e1(t a) * v(x).  A trajectory is the
composition of per-cell solutions; the time spent before reaching the exit
boundary x_c of the current cell is

    t_hit = (1/a) log((a x_c + b) / (a x + b)) = l1(z) * (x_c - x) / v(x),
    z = a (x_c - x) / v(x),

which reduces exactly to (x_c - x) / b as a -> 0.  Trajectories that leave
the domain are clamped at the border; the per-point traversal record is kept
for the gradient pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._stable import e1, l1
from .basis import AffineField
from .errors import InternalError, OutOfDomainError
from .tessellation import Tessellation

#: slopes at or below this magnitude are indistinguishable from zero for the
#: branchy scalar helpers; the kernel-based paths are stable for any slope.
SLOPE_EPS = 1e-10


@dataclass(frozen=True)
class TraversalTrace:
    """Per-point record of one closed-form integration.

    cells are 1-based and ordered as visited; entries[i] is the point at
    which cell cells[i] was entered, hit_times[i] the time spent there for
    all but the last cell.  t_final is the residual time in the last cell
    and x_final its entry point.  clamped marks trajectories stopped at the
    domain border.
    """

    cells: np.ndarray
    entries: np.ndarray
    hit_times: np.ndarray
    x_final: float
    t_final: float
    t_total: float
    clamped: bool = False

    @property
    def m(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True)
class WarpResult:
    """Batched warp values plus traversal records, aligned with the input points."""

    phi: np.ndarray
    points: np.ndarray = field(repr=False)
    t: float
    n_cells: int
    # padded per-point traversal arrays (0-based cells internally)
    hit_cells: np.ndarray = field(repr=False)
    hit_entries: np.ndarray = field(repr=False)
    hit_times: np.ndarray = field(repr=False)
    n_hits: np.ndarray = field(repr=False)
    final_cell: np.ndarray = field(repr=False)
    final_x: np.ndarray = field(repr=False)
    final_t: np.ndarray = field(repr=False)
    clamped: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.phi.shape[0]

    def trace(self, i: int) -> TraversalTrace:
        """Materialize the traversal record of point i (1-based cell ids)."""
        k = int(self.n_hits[i])
        if self.clamped[i]:
            # every visited cell was exited; the residual time is frozen at the border
            cells = self.hit_cells[i, :k] + 1
            entries = self.hit_entries[i, :k]
            hit_times = self.hit_times[i, :k]
        else:
            cells = np.concatenate([self.hit_cells[i, :k], [self.final_cell[i]]]) + 1
            entries = np.concatenate([self.hit_entries[i, :k], [self.final_x[i]]])
            hit_times = self.hit_times[i, :k]
        return TraversalTrace(
            cells=cells.astype(np.int64),
            entries=entries.astype(np.float64),
            hit_times=hit_times.astype(np.float64),
            x_final=float(self.final_x[i]),
            t_final=float(self.final_t[i]),
            t_total=float(self.t),
            clamped=bool(self.clamped[i]),
        )


def velocity_at(fld: AffineField, tess: Tessellation, x) -> np.ndarray | float:
    """Velocity a_c x + b_c of the cell containing x (min rule on vertices)."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(tess.domain.contains(arr)):
        raise OutOfDomainError("velocity query outside the domain")
    c = tess.locate(arr)
    v = fld.a[c] * arr + fld.b[c]
    return float(v) if np.isscalar(x) or arr.ndim == 0 else v


def hitting_time(a: float, b: float, x: float, x_c: float) -> float:
    """Time for the within-cell flow from x to reach the boundary x_c.

    Returns +inf for stationary points and for boundaries shielded by a zero
    of the velocity.  Evaluated as l1(z) (x_c - x) / v(x), which equals the
    log-of-ratio formula for any nonzero slope and its (x_c - x) / b limit
    at slope zero.
    """
    v = a * x + b
    if v == 0.0:
        return float("inf")
    vc = a * x_c + b
    if vc * v <= 0.0:
        return float("inf")
    z = a * (x_c - x) / v
    return float(l1(np.asarray(z)) * (x_c - x) / v)


def integrate_grid(
    tess: Tessellation, fld: AffineField, points: Sequence[float], t: float = 1.0
) -> WarpResult:
    """Exact flow of all points for time t, with traversal traces.

    Per-point results are independent of batch composition: integrating a
    single point yields bitwise the same value as integrating it within any
    batch.
    """
    if fld.n_cells != tess.n_cells:
        raise ValueError("field/tessellation cell count mismatch")
    if t < 0:
        raise ValueError("integration time must be nonnegative")
    pts = np.atleast_1d(np.asarray(points, dtype=np.float64))
    if pts.ndim != 1:
        raise ValueError("points must be one-dimensional")
    inside = tess.domain.contains(pts)
    if not np.all(inside):
        bad = int(np.nonzero(~inside)[0][0])
        raise OutOfDomainError(f"point index {bad} (x={pts[bad]}) outside the domain")

    n = pts.shape[0]
    n_cells = tess.n_cells
    verts = tess.vertices
    max_m = n_cells + 1

    x = pts.copy()
    c = tess.locate(pts)
    t_rem = np.full(n, float(t))
    phi = np.empty(n)

    hit_cells = np.full((n, max_m), -1, dtype=np.int64)
    hit_entries = np.zeros((n, max_m))
    hit_times = np.zeros((n, max_m))
    n_hits = np.zeros(n, dtype=np.int64)
    final_cell = np.zeros(n, dtype=np.int64)
    final_x = np.zeros(n)
    final_t = np.zeros(n)
    clamped = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    visit_bound = np.maximum(c + 1, n_cells - c)

    iterations = 0
    while np.any(active):
        iterations += 1
        if iterations > n_cells + 2:
            raise InternalError("cell traversal exceeded its visit bound")
        idx = np.nonzero(active)[0]
        xc = x[idx]
        cc = c[idx]
        tr = t_rem[idx]
        a = fld.a[cc]
        b = fld.b[cc]
        v = a * xc + b
        up = v >= 0
        xb = np.where(up, verts[cc + 1], verts[cc])
        vb = a * xb + b

        t_hit = np.full(idx.shape, np.inf)
        reach = (v != 0) & (vb * v > 0)
        if np.any(reach):
            z = a[reach] * (xb[reach] - xc[reach]) / v[reach]
            t_hit[reach] = l1(z) * (xb[reach] - xc[reach]) / v[reach]

        hits = t_hit <= tr

        done = ~hits
        di = idx[done]
        final_cell[di] = cc[done]
        final_x[di] = xc[done]
        final_t[di] = tr[done]
        with np.errstate(invalid="ignore"):
            phi[di] = xc[done] + tr[done] * e1(tr[done] * a[done]) * v[done]
        active[di] = False

        hi = idx[hits]
        if hi.size:
            k = n_hits[hi]
            if np.any(k + 1 > visit_bound[hi]):
                raise InternalError("cell traversal exceeded its visit bound")
            hit_cells[hi, k] = cc[hits]
            hit_entries[hi, k] = xc[hits]
            hit_times[hi, k] = t_hit[hits]
            n_hits[hi] = k + 1
            t_rem[hi] = tr[hits] - t_hit[hits]
            x[hi] = xb[hits]
            step = np.where(up[hits], 1, -1)
            nc = cc[hits] + step
            out = (nc < 0) | (nc >= n_cells)
            oi = hi[out]
            phi[oi] = x[oi]
            clamped[oi] = True
            final_cell[oi] = cc[hits][out]
            final_x[oi] = x[oi]
            final_t[oi] = t_rem[oi]
            active[oi] = False
            ii = hi[~out]
            c[ii] = nc[~out]

    return WarpResult(
        phi=phi,
        points=pts,
        t=float(t),
        n_cells=n_cells,
        hit_cells=hit_cells,
        hit_entries=hit_entries,
        hit_times=hit_times,
        n_hits=n_hits,
        final_cell=final_cell,
        final_x=final_x,
        final_t=final_t,
        clamped=clamped,
    )


def integrate(
    tess: Tessellation, fld: AffineField, x: float, t: float = 1.0
) -> tuple[float, TraversalTrace]:
    """Exact flow of a single point; same code path as integrate_grid."""
    result = integrate_grid(tess, fld, np.asarray([x], dtype=np.float64), t)
    return float(result.phi[0]), result.trace(0)


def scaling_squaring(
    tess: Tessellation,
    fld: AffineField,
    grid: Sequence[float],
    t: float = 1.0,
    n_squarings: int = 0,
) -> np.ndarray:
    """Approximate the time-t warp by exact integration at t / 2^N followed
    by N grid self-compositions through the piecewise-linear sampler."""
    from .sampler import self_compose

    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("scaling_squaring needs a nonempty grid")
    if n_squarings < 0:
        raise ValueError("n_squarings must be >= 0")
    phi = integrate_grid(tess, fld, grid, t / (2.0**n_squarings)).phi
    for _ in range(n_squarings):
        phi, _ = self_compose(phi, grid)
    return phi
