"""Continuity-constrained velocity-field space: constraint matrix, null-space
bases, the parameter-to-coefficient map, and the Gaussian smoothness prior.

A velocity field is affine on each cell, v(x) = a_c x + b_c.  Stacking the
per-cell coefficients row-major into vec(A) = [a_1, b_1, ..., a_N, b_N], the
field is continuous across cells iff L @ vec(A) = 0, where L has one row per
shared vertex x_j with the pattern [x_j, 1, -x_j, -1] in the two adjacent
cell blocks.  Optionally two extra rows pin v to zero at the domain borders.
Any basis B of null(L) parametrizes the continuous fields as vec(A) = B @ theta.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .errors import InternalError, NumericError
from .tessellation import Tessellation, build_tessellation, Domain

NULL_SPACE_METHODS = ("svd", "qr", "rref", "sparse")

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class AffineField:
    """Per-cell slope/intercept pairs of a piecewise-affine velocity field."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("a and b must be 1D arrays of equal length")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_cells(self) -> int:
        return self.a.shape[0]

    @property
    def vec(self) -> np.ndarray:
        """Row-major flattening [a_1, b_1, ..., a_N, b_N]."""
        out = np.empty(2 * self.n_cells)
        out[0::2] = self.a
        out[1::2] = self.b
        return out

    @staticmethod
    def from_vec(vec: np.ndarray) -> "AffineField":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size % 2 != 0:
            raise ValueError("vec must be 1D with even length")
        return AffineField(a=vec[0::2], b=vec[1::2])

    def continuity_residual(self, tess: Tessellation) -> float:
        """Largest jump of v across shared vertices (0 for a continuous field)."""
        if self.n_cells != tess.n_cells:
            raise ValueError("field/tessellation cell count mismatch")
        if tess.n_cells == 1:
            return 0.0
        xj = tess.vertices[1:-1]
        left = self.a[:-1] * xj + self.b[:-1]
        right = self.a[1:] * xj + self.b[1:]
        return float(np.max(np.abs(left - right)))


def constraint_matrix(tess: Tessellation, zero_boundary: bool = False) -> np.ndarray:
    """Dense continuity-constraint matrix L with shape (rows, 2 * n_cells).

    One row per shared vertex; two extra rows pin v(x_min) = v(x_max) = 0
    when zero_boundary is set.
    """
    n = tess.n_cells
    n_shared = tess.n_shared_vertices
    rows = n_shared + (2 if zero_boundary else 0)
    L = np.zeros((rows, 2 * n))
    for j in range(n_shared):
        xj = tess.vertices[j + 1]
        L[j, 2 * j : 2 * j + 4] = (xj, 1.0, -xj, -1.0)
    if zero_boundary:
        L[n_shared, 0] = tess.domain.x_min
        L[n_shared, 1] = 1.0
        L[n_shared + 1, 2 * n - 2] = tess.domain.x_max
        L[n_shared + 1, 2 * n - 1] = 1.0
    return L


@dataclass(frozen=True)
class CpaBasis:
    """Null-space basis of the continuity constraints.

    Columns of matrix (shape 2*n_cells x d) span the continuous fields;
    coefficients theta of length d synthesize a field via vec(A) = matrix @ theta.
    """

    tess: Tessellation
    matrix: np.ndarray = field(repr=False)
    method: str
    zero_boundary: bool

    def __post_init__(self):
        B = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", B)
        if B.ndim != 2 or B.shape[0] != 2 * self.tess.n_cells:
            raise ValueError("basis matrix has wrong shape")

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    @property
    def orthonormal(self) -> bool:
        return self.method in ("svd", "qr")

    def slope_columns(self) -> np.ndarray:
        """Rows of matrix holding slope entries, per cell: shape (n_cells, d)."""
        return self.matrix[0::2, :]

    def intercept_columns(self) -> np.ndarray:
        return self.matrix[1::2, :]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_cells": self.tess.n_cells,
                "x_min": self.tess.domain.x_min,
                "x_max": self.tess.domain.x_max,
                "zero_boundary": self.zero_boundary,
                "method": self.method,
                "d": self.d,
                "matrix": self.matrix.flatten().tolist(),
            }
        )

    @staticmethod
    def from_json(text: str) -> "CpaBasis":
        obj = json.loads(text)
        tess = build_tessellation(
            Domain(obj.get("x_min", 0.0), obj.get("x_max", 1.0)), obj["n_cells"]
        )
        B = np.asarray(obj["matrix"], dtype=np.float64).reshape(2 * obj["n_cells"], obj["d"])
        return CpaBasis(
            tess=tess, matrix=B, method=obj["method"], zero_boundary=obj["zero_boundary"]
        )


def _null_space_svd(L: np.ndarray, n_cols: int) -> np.ndarray:
    if L.shape[0] == 0:
        return np.eye(n_cols)
    u, s, vt = np.linalg.svd(L, full_matrices=True)
    tol = _RANK_TOL * max(L.shape) * (s[0] if s.size else 1.0)
    rank = int(np.sum(s > tol))
    return vt[rank:].T.copy()


def _null_space_qr(L: np.ndarray, n_cols: int) -> np.ndarray:
    if L.shape[0] == 0:
        return np.eye(n_cols)
    q, r = np.linalg.qr(L.T, mode="complete")
    diag = np.abs(np.diag(r[: min(L.shape), : min(L.shape)]))
    tol = _RANK_TOL * max(L.shape) * (diag.max() if diag.size else 1.0)
    rank = int(np.sum(diag > tol))
    return q[:, rank:].copy()


def _null_space_rref(L: np.ndarray, n_cols: int) -> np.ndarray:
    """Null-space basis from a Gauss-Jordan reduction with partial pivoting.

    Free columns become unit coordinates; pivot coordinates are read off the
    reduced rows, so each basis column carries at most rank + 1 nonzeros.
    """
    if L.shape[0] == 0:
        return np.eye(n_cols)
    R = L.astype(np.float64).copy()
    m, n = R.shape
    scale = np.max(np.abs(R))
    tol = _RANK_TOL * max(m, n) * (scale if scale > 0 else 1.0)
    pivots = []
    row = 0
    for col in range(n):
        if row >= m:
            break
        p = row + int(np.argmax(np.abs(R[row:, col])))
        if abs(R[p, col]) <= tol:
            continue
        R[[row, p]] = R[[p, row]]
        R[row] = R[row] / R[row, col]
        mask = np.arange(m) != row
        R[mask] -= np.outer(R[mask, col], R[row])
        pivots.append(col)
        row += 1
    free = [c for c in range(n) if c not in pivots]
    B = np.zeros((n, len(free)))
    for k, fc in enumerate(free):
        B[fc, k] = 1.0
        for r, pc in enumerate(pivots):
            B[pc, k] = -R[r, fc]
    return B


def _null_space_sparse(tess: Tessellation, zero_boundary: bool) -> np.ndarray:
    """Closed-form hat-function basis: one column per free vertex.

    The column for vertex x_k raises the field linearly from 0 at x_{k-1} to
    the cell width at x_k and back to 0 at x_{k+1}; slopes are exactly +/-1
    and intercepts are vertex coordinates, so continuity and (under the
    zero-boundary option) the border conditions hold bitwise.
    """
    n = tess.n_cells
    v = tess.vertices
    vertex_ids = range(1, n) if zero_boundary else range(0, n + 1)
    cols = []
    for k in vertex_ids:
        col = np.zeros(2 * n)
        if k > 0:
            # rising cell k-1: slope +1, zero at its lower vertex
            col[2 * (k - 1)] = 1.0
            col[2 * (k - 1) + 1] = -v[k - 1]
        if k < n:
            # falling cell k: slope -1, zero at its upper vertex
            col[2 * k] = -1.0
            col[2 * k + 1] = v[k + 1]
        cols.append(col)
    return np.column_stack(cols) if cols else np.zeros((2 * n, 0))


def null_space_basis(
    tess: Tessellation, method: str = "sparse", zero_boundary: bool = False
) -> CpaBasis:
    """Basis of the continuous-field space by one of four constructions.

    svd and qr produce orthonormal columns from dense factorizations; rref
    and sparse are closed-form.  All four span the same space.
    """
    method = method.lower()
    if method not in NULL_SPACE_METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {NULL_SPACE_METHODS}")
    n_cols = 2 * tess.n_cells
    L = constraint_matrix(tess, zero_boundary)
    if method == "svd":
        B = _null_space_svd(L, n_cols)
    elif method == "qr":
        B = _null_space_qr(L, n_cols)
    elif method == "rref":
        B = _null_space_rref(L, n_cols)
    else:
        B = _null_space_sparse(tess, zero_boundary)
    expected = tess.n_cells + (-1 if zero_boundary else 1)
    expected = max(expected, 0)
    if B.shape[1] != expected:
        raise InternalError(
            f"null space dimension {B.shape[1]} != expected {expected} (malformed constraints?)"
        )
    return CpaBasis(tess=tess, matrix=B, method=method, zero_boundary=zero_boundary)


def theta_to_field(basis: CpaBasis, theta: np.ndarray) -> AffineField:
    """Synthesize per-cell coefficients: vec(A) = B @ theta."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (basis.d,):
        raise ValueError(f"theta has length {theta.size}, basis dimension is {basis.d}")
    return AffineField.from_vec(basis.matrix @ theta)


def field_to_theta(basis: CpaBasis, fld: AffineField) -> np.ndarray:
    """Coefficients of the CPA projection of a (possibly discontinuous) field.

    Orthonormal bases project by transposition; otherwise a least-squares
    solve against the basis columns is used.
    """
    vec = fld.vec
    if vec.shape[0] != basis.matrix.shape[0]:
        raise ValueError("field/basis size mismatch")
    if basis.orthonormal:
        return basis.matrix.T @ vec
    theta, *_ = np.linalg.lstsq(basis.matrix, vec, rcond=None)
    return theta


@dataclass(frozen=True)
class PriorCovariance:
    """Zero-mean Gaussian prior on theta with covariance sigma.

    sigma = B^T Sigma_cell B where Sigma_cell applies a squared-exponential
    kernel over cell-center distances, independently to the slope block and
    the intercept block.  lambda_sigma scales the overall standard deviation,
    lambda_smooth is the kernel length-scale.
    """

    basis: CpaBasis
    lambda_sigma: float
    lambda_smooth: float
    sigma: np.ndarray = field(repr=False)

    _JITTERS = (1e-12, 1e-10, 1e-8)

    @cached_property
    def chol_lower(self) -> np.ndarray:
        """Lower Cholesky factor of sigma + jitter, escalating jitter as needed."""
        for jitter in self._JITTERS:
            try:
                return cholesky(self.sigma + jitter * np.eye(self.d), lower=True)
            except np.linalg.LinAlgError:
                continue
        raise NumericError("prior covariance is not positive definite after jitter escalation")

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    def quadratic_form(self, theta: np.ndarray) -> float:
        """theta^T sigma^{-1} theta via triangular solves (no explicit inverse)."""
        theta = np.asarray(theta, dtype=np.float64)
        y = cho_solve((self.chol_lower, True), theta)
        return float(theta @ y)

    def solve(self, theta: np.ndarray) -> np.ndarray:
        """sigma^{-1} theta via the cached factor."""
        return cho_solve((self.chol_lower, True), np.asarray(theta, dtype=np.float64))


def prior_covariance(
    basis: CpaBasis, lambda_sigma: float, lambda_smooth: float
) -> PriorCovariance:
    """Smoothness prior over theta for the given basis."""
    if lambda_sigma <= 0 or lambda_smooth <= 0:
        raise ValueError("lambda_sigma and lambda_smooth must be positive")
    tess = basis.tess
    centers = 0.5 * (tess.vertices[:-1] + tess.vertices[1:])
    dist2 = (centers[:, None] - centers[None, :]) ** 2
    kernel = lambda_sigma**2 * np.exp(-dist2 / (2.0 * lambda_smooth**2))
    n = tess.n_cells
    sigma_cell = np.zeros((2 * n, 2 * n))
    sigma_cell[0::2, 0::2] = kernel
    sigma_cell[1::2, 1::2] = kernel
    sigma = basis.matrix.T @ sigma_cell @ basis.matrix
    sigma = 0.5 * (sigma + sigma.T)
    return PriorCovariance(
        basis=basis, lambda_sigma=lambda_sigma, lambda_smooth=lambda_smooth, sigma=sigma
    )


def sample_prior(prior: PriorCovariance, seed: int) -> np.ndarray:
    """One draw theta = chol(sigma + jitter) @ z with a seeded generator."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(prior.d)
    return prior.chol_lower @ z
