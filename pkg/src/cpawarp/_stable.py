"""Cancellation-free kernels shared by the integrator, gradient and oracle.

Each kernel is a smooth function of z with a removable singularity at 0;
direct evaluation loses accuracy only for |z| below the series cutoffs used
here, where the truncated series is exact to double precision.
"""

from __future__ import annotations

import numpy as np

_SERIES_CUTOFF = 1e-3


def e1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1) / z, continued with 1 at z = 0."""
    z = np.asarray(z, dtype=np.float64)
    out = np.ones_like(z)
    nz = z != 0
    with np.errstate(over="ignore"):
        out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def l1(z: np.ndarray) -> np.ndarray:
    """log(1 + z) / z, continued with 1 at z = 0."""
    z = np.asarray(z, dtype=np.float64)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.log1p(z[nz]) / z[nz]
    return out


def g2(z: np.ndarray) -> np.ndarray:
    """(z e^z - (e^z - 1)) / z^2, continued with 1/2 at z = 0.

    Appears in d(psi)/d(slope); the numerator cancels catastrophically for
    small z, hence the series branch.
    """
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_CUTOFF
    zs = z[small]
    out[small] = 0.5 + zs * (1.0 / 3.0 + zs * (0.125 + zs * (1.0 / 30.0 + zs / 144.0)))
    zb = z[~small]
    with np.errstate(over="ignore", invalid="ignore"):
        out[~small] = (zb * np.exp(zb) - np.expm1(zb)) / (zb * zb)
    return out


def h2(z: np.ndarray) -> np.ndarray:
    """(z - log(1 + z)) / z^2, continued with 1/2 at z = 0.

    Appears in d(t_hit)/d(slope); same cancellation story as g2.
    """
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_CUTOFF
    zs = z[small]
    out[small] = 0.5 + zs * (-1.0 / 3.0 + zs * (0.25 + zs * (-0.2 + zs / 6.0)))
    zb = z[~small]
    out[~small] = (zb - np.log1p(zb)) / (zb * zb)
    return out
