"""Symmetric 3x3 tensor algebra in 6-component (Voigt) storage.

A symmetric second-order tensor (stress, strain, fiber orientation) is
stored as a 6-vector in the fixed component order

    [11, 22, 33, 12, 13, 23]

Shear entries hold *tensor* components (e.g. ``e12``, never the engineering
``2*e12``).  All rotation operations reconstruct the full 3x3 matrix,
conjugate it, and read back the upper triangle, so no shear-factor
bookkeeping ever enters the algebra and symmetry is preserved structurally.

Every function accepts a trailing-axis batch: a single tensor is shape
``(6,)``, a pseudo-time path is ``(T, 6)``, a stack of paths ``(P, T, 6)``.
Rotations are plain ``(3, 3)`` orthogonal matrices with determinant +1.

All operations are pure; arrays are never mutated in place.
"""

from __future__ import annotations

import numpy as np

# Upper-triangle index pairs matching the component order [11,22,33,12,13,23].
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

#: Names of the six components, used by reports and file headers.
COMPONENT_NAMES = ("11", "22", "33", "12", "13", "23")

ROTATION_TOL = 1e-12


def to_matrix(v):
    """Expand Voigt 6-vector(s) ``(..., 6)`` into full 3x3 matrices ``(..., 3, 3)``."""
    v = np.asarray(v, dtype=float)
    m = np.empty(v.shape[:-1] + (3, 3), dtype=float)
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        m[..., i, j] = v[..., k]
        m[..., j, i] = v[..., k]
    return m


def from_matrix(m):
    """Collapse symmetric matrices ``(..., 3, 3)`` to Voigt form, reading the upper triangle only."""
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., i, j] for (i, j) in VOIGT_PAIRS], axis=-1)


def trace(v):
    """Trace of Voigt tensor(s): sum of the three normal components."""
    v = np.asarray(v, dtype=float)
    return v[..., 0] + v[..., 1] + v[..., 2]


def rotate_sym(x, r):
    """Conjugate a symmetric tensor by a rotation: returns Voigt form of ``r . X . r^T``.

    Parameters
    ----------
    x : array_like, shape (..., 6)
        Symmetric tensor(s) in Voigt storage.
    r : array_like, shape (3, 3)
        Proper orthogonal rotation matrix.

    The full 3x3 product is formed and the upper triangle read back, so the
    result is symmetric by construction rather than by averaging.
    """
    r = np.asarray(r, dtype=float)
    m = to_matrix(x)
    rotated = np.einsum("ij,...jk,lk->...il", r, m, r)
    return from_matrix(rotated)


def inverse_rotate_sym(x, r):
    """Undo :func:`rotate_sym`: returns Voigt form of ``r^T . X . r``."""
    r = np.asarray(r, dtype=float)
    m = to_matrix(x)
    rotated = np.einsum("ji,...jk,kl->...il", r, m, r)
    return from_matrix(rotated)


def von_mises(x):
    """Von Mises equivalent stress of Voigt tensor(s).

    For components ``[s11, s22, s33, s12, s13, s23]``::

        sqrt( 0.5*((s11-s22)^2 + (s22-s33)^2 + (s33-s11)^2)
              + 3*(s12^2 + s13^2 + s23^2) )

    All six components participate.  Returns a scalar for ``(6,)`` input,
    an array with the batch shape otherwise.  Always >= 0.
    """
    x = np.asarray(x, dtype=float)
    s11, s22, s33 = x[..., 0], x[..., 1], x[..., 2]
    s12, s13, s23 = x[..., 3], x[..., 4], x[..., 5]
    normal = 0.5 * ((s11 - s22) ** 2 + (s22 - s33) ** 2 + (s33 - s11) ** 2)
    shear = 3.0 * (s12**2 + s13**2 + s23**2)
    return np.sqrt(normal + shear)


def von_mises_path(path):
    """Per-step von Mises values of a ``(T, 6)`` tensor path; returns shape ``(T,)``."""
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[-1] != 6:
        raise ValueError(f"expected a (T, 6) path, got shape {path.shape}")
    return von_mises(path)


def deviatoric_split(v):
    """Split Voigt tensor(s) into (deviatoric part, mean normal stress tr/3)."""
    v = np.asarray(v, dtype=float)
    mean = trace(v) / 3.0
    dev = v.copy()
    dev[..., :3] -= mean[..., np.newaxis]
    return dev, mean


def check_rotation(r, tol=ROTATION_TOL):
    """Raise ``ValueError`` unless ``r`` is proper orthogonal within ``tol``.

    Checks max-abs deviation of ``r . r^T`` from identity and ``|det(r) - 1|``.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
    ortho_err = np.max(np.abs(r @ r.T - np.eye(3)))
    det_err = abs(np.linalg.det(r) - 1.0)
    if ortho_err > tol or det_err > tol:
        raise ValueError(
            f"not a proper rotation: |R R^T - I|_max = {ortho_err:.3e}, "
            f"|det - 1| = {det_err:.3e} (tol {tol:.1e})"
        )


def check_orientation_tensor(v, trace_tol=1e-9, eig_tol=1e-9):
    """Raise ``ValueError`` unless ``v`` is a valid fiber orientation tensor.

    Requires trace 1 within ``trace_tol`` and eigenvalues >= ``-eig_tol``
    (positive semi-definite up to round-off).
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (6,):
        raise ValueError(f"orientation tensor must have 6 components, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("orientation tensor has non-finite components")
    tr = float(trace(v))
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"orientation tensor trace {tr!r} deviates from 1 by more than {trace_tol:.1e}")
    eigvals = np.linalg.eigvalsh(to_matrix(v))
    if eigvals.min() < -eig_tol:
        raise ValueError(f"orientation tensor has eigenvalue {eigvals.min():.3e} < -{eig_tol:.1e}")
