"""Differentiable piecewise-linear interpolation of discretized signals.

Queries between knots blend the two surrounding values with hat weights;
queries outside the knot range clamp to the boundary value.  A query exactly
on a knot takes the right-hand segment (the last knot keeps its left
segment), so derivatives are single-valued everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SampledFunction:
    """Function known at strictly increasing inputs x with values y."""

    x: np.ndarray
    y: np.ndarray
    uniform: bool = field(init=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] < 2:
            raise ValueError("need at least two knots")
        if y.shape[0] != x.shape[0]:
            raise ValueError("x and y length mismatch")
        if not np.all(np.diff(x) > 0):
            raise ValueError("knot inputs must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        steps = np.diff(x)
        object.__setattr__(self, "uniform", bool(np.allclose(steps, steps[0], rtol=1e-12)))

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _segments(x_knots: np.ndarray, uniform: bool, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Segment indices and local coordinates for (already clipped) queries.

    Uniform knots use direct index arithmetic with a one-ulp correction;
    irregular knots fall back to binary search.  Knot queries land at local
    coordinate exactly 0 (or 1 at the last knot).
    """
    n = x_knots.shape[0]
    if uniform:
        h = (x_knots[-1] - x_knots[0]) / (n - 1)
        idx = np.clip(((xq - x_knots[0]) / h).astype(np.int64), 0, n - 2)
        idx = np.where((xq >= x_knots[np.minimum(idx + 1, n - 1)]) & (idx < n - 2), idx + 1, idx)
        idx = np.where(xq < x_knots[idx], idx - 1, idx)
        idx = np.clip(idx, 0, n - 2)
    else:
        idx = np.clip(np.searchsorted(x_knots, xq, side="right") - 1, 0, n - 2)
    t = (xq - x_knots[idx]) / (x_knots[idx + 1] - x_knots[idx])
    return idx, t


def interp(f: SampledFunction, xq) -> np.ndarray | float:
    """Piecewise-linear value at xq; exact on knots, clamped outside the range."""
    q = np.atleast_1d(np.asarray(xq, dtype=np.float64))
    qc = np.clip(q, f.x[0], f.x[-1])
    idx, t = _segments(f.x, f.uniform, qc)
    vals = f.y[idx] * (1.0 - t) + f.y[idx + 1] * t
    return float(vals[0]) if np.isscalar(xq) or np.asarray(xq).ndim == 0 else vals


@dataclass(frozen=True)
class InterpGradient:
    """Sparse derivative triple of one interpolation query.

    y_indices/y_weights give d(value)/d(knot values); slope is
    d(value)/d(query); x_indices/x_weights give d(value)/d(knot inputs).
    Each sparse row has at most two nonzeros.
    """

    y_indices: np.ndarray
    y_weights: np.ndarray
    slope: float
    x_indices: np.ndarray
    x_weights: np.ndarray


def interp_grad(f: SampledFunction, xq: float) -> InterpGradient:
    """Derivatives of interp(f, xq) w.r.t. knot values, query point and knot inputs."""
    q = float(xq)
    if q < f.x[0] or q > f.x[-1]:
        # clamped region: value saturates at the boundary knot
        j = 0 if q < f.x[0] else f.n - 1
        return InterpGradient(
            y_indices=np.asarray([j]),
            y_weights=np.asarray([1.0]),
            slope=0.0,
            x_indices=np.asarray([j]),
            x_weights=np.asarray([0.0]),
        )
    idx, t = _segments(f.x, f.uniform, np.asarray([q]))
    i = int(idx[0])
    t = float(t[0])
    w = f.x[i + 1] - f.x[i]
    dy = f.y[i + 1] - f.y[i]
    slope = dy / w
    return InterpGradient(
        y_indices=np.asarray([i, i + 1]),
        y_weights=np.asarray([1.0 - t, t]),
        slope=float(slope),
        x_indices=np.asarray([i, i + 1]),
        x_weights=np.asarray([-dy * (1.0 - t) / w, -dy * t / w]),
    )


def warp_signal(signal: SampledFunction, warp) -> SampledFunction:
    """Compose a sampled signal with a warp given on the signal's own grid.

    warp may be a WarpResult or a plain array of warped positions phi(x_j);
    the output keeps the input grid with values interp(signal, phi(x_j)).
    """
    phi = np.asarray(getattr(warp, "phi", warp), dtype=np.float64)
    if phi.shape != signal.x.shape:
        raise ValueError(
            f"warp grid length {phi.shape} does not match signal length {signal.x.shape}"
        )
    return SampledFunction(x=signal.x, y=interp(signal, phi))


@dataclass(frozen=True)
class SelfComposeJacobian:
    """Sparse chain-rule operator of one grid self-composition.

    Row k of the composed grid depends on the warp values as hat weights at
    the interpolation segment plus the segment slope acting on entry k
    itself (the query is a warp value).  apply() pushes a downstream
    Jacobian through this dependence.
    """

    idx: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    slope: np.ndarray

    def apply(self, jac: np.ndarray) -> np.ndarray:
        return (
            self.w0[:, None] * jac[self.idx]
            + self.w1[:, None] * jac[self.idx + 1]
            + self.slope[:, None] * jac
        )

    def as_matrix(self) -> np.ndarray:
        n = self.idx.shape[0]
        M = np.zeros((n, n))
        rows = np.arange(n)
        np.add.at(M, (rows, self.idx), self.w0)
        np.add.at(M, (rows, self.idx + 1), self.w1)
        np.add.at(M, (rows, rows), self.slope)
        return M


def self_compose(warp_grid: np.ndarray, x_grid: np.ndarray) -> tuple[np.ndarray, SelfComposeJacobian]:
    """One squaring step: interpolate the warp at its own values.

    Returns the composed grid and the sparse Jacobian of the composition
    w.r.t. the warp values.  The warp grid must be monotone.
    """
    u = np.asarray(warp_grid, dtype=np.float64)
    xg = np.asarray(x_grid, dtype=np.float64)
    if u.shape != xg.shape or u.ndim != 1:
        raise ValueError("warp grid and x grid must be 1D arrays of equal length")
    if np.any(np.diff(u) < 0):
        raise ValueError("self-composition requires a monotone warp grid")
    f = SampledFunction(x=xg, y=u)
    inside = (u >= xg[0]) & (u <= xg[-1])
    q = np.clip(u, xg[0], xg[-1])
    idx, t = _segments(xg, f.uniform, q)
    composed = u[idx] * (1.0 - t) + u[idx + 1] * t
    seg_w = xg[idx + 1] - xg[idx]
    slope = (u[idx + 1] - u[idx]) / seg_w
    w0 = np.where(inside, 1.0 - t, np.where(u < xg[0], 1.0, 0.0))
    w1 = np.where(inside, t, np.where(u < xg[0], 0.0, 1.0))
    slope = np.where(inside, slope, 0.0)
    return composed, SelfComposeJacobian(idx=idx, w0=w0, w1=w1, slope=slope)
