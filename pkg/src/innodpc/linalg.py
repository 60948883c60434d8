"""Dense real-matrix primitives: factorizations, projectors, null spaces, angles.

All routines work on float64 ndarrays and reject non-finite input.  Rank
decisions use the standard numerical-rank rule
``tol = max(rows, cols) * eps * sigma_max`` unless an explicit tolerance is
given.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, NumericalError

_EPS = np.finfo(np.float64).eps


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``a`` to a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{name} contains NaN or Inf entries")
    return m


def default_rank_tol(shape: tuple[int, int], smax: float) -> float:
    return max(shape) * _EPS * smax


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis of a linear subspace of R^ambient_dim.

    ``basis`` is (ambient_dim, k) with orthonormal columns; k may be zero.
    """

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        b = as_matrix(self.basis, "basis")
        if b.shape[0] != self.ambient_dim:
            raise DimensionError(
                f"basis has {b.shape[0]} rows, ambient dimension is {self.ambient_dim}")
        if b.shape[1] > self.ambient_dim:
            raise DimensionError(
                f"basis has {b.shape[1]} columns > ambient dimension {self.ambient_dim}")
        if b.shape[1] > 0:
            gram = b.T @ b
            if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-10):
                raise DomainError("basis columns are not orthonormal (tol 1e-10)")
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def svd(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singular value decomposition ``m = U @ diag(s) @ V.T``.

    Returns
    -------
    U, s, V : U and V with orthonormal columns, s nonincreasing.
    """
    m = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge for a {m.shape[0]}x{m.shape[1]} matrix") from exc
    return u, s, vt.T


def pinv(m, rank_tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD truncation."""
    m = as_matrix(m)
    u, s, v = svd(m)
    if s.size == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    tol = default_rank_tol(m.shape, s[0]) if rank_tol is None else rank_tol
    r = int(np.sum(s > tol))
    if r == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    return (v[:, :r] / s[:r]) @ u[:, :r].T


def numerical_rank(m, rank_tol: float | None = None) -> int:
    m = as_matrix(m)
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0:
        return 0
    tol = default_rank_tol(m.shape, s[0]) if rank_tol is None else rank_tol
    return int(np.sum(s > tol))


def orth_projector(phi) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal projectors onto the row space of ``phi`` and its complement.

    Returns ``(pi, pi_perp)`` with ``pi = pinv(phi) @ phi`` and
    ``pi_perp = I - pi``; both are symmetric and idempotent.
    """
    phi = as_matrix(phi, "phi")
    pi = pinv(phi) @ phi
    pi = 0.5 * (pi + pi.T)
    return pi, np.eye(phi.shape[1]) - pi


def nullspace_basis(m, rank_tol: float | None = None) -> SubspaceBasis:
    """Orthonormal basis of the null space of ``m``.

    The basis dimension equals ``cols(m) - numerical_rank(m)``.
    """
    m = as_matrix(m)
    if m.shape[1] < 1:
        raise DimensionError("matrix must have at least one column")
    u, s, vt = np.linalg.svd(m, full_matrices=True)
    if s.size == 0:
        r = 0
    else:
        tol = default_rank_tol(m.shape, s[0]) if rank_tol is None else rank_tol
        r = int(np.sum(s > tol))
    return SubspaceBasis(m.shape[1], vt[r:].T)


def row_space_basis(m, rank_tol: float | None = None) -> SubspaceBasis:
    """Orthonormal basis of the row space of ``m`` (= range of ``m.T``)."""
    m = as_matrix(m)
    if m.shape[1] < 1:
        raise DimensionError("matrix must have at least one column")
    s_all = np.linalg.svd(m, compute_uv=False)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0:
        r = 0
    else:
        tol = default_rank_tol(m.shape, s_all[0]) if rank_tol is None else rank_tol
        r = int(np.sum(s > tol))
    return SubspaceBasis(m.shape[1], vt[:r].T)


def lq_decompose(m, complete: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """LQ factorization ``m = L @ Q`` of a fat matrix.

    Computed as the transpose of a QR factorization of ``m.T``.  ``L`` is
    lower-triangular with nonnegative diagonal (sign flips are absorbed into
    the rows of ``Q``); ``Q`` has orthonormal rows.

    With ``complete=True`` the returned ``Q`` is a full square orthogonal
    matrix (cols x cols) whose trailing rows span the orthogonal complement
    of the row space of ``m``, and ``L`` is rows x cols with zero trailing
    columns.
    """
    m = as_matrix(m)
    rows, cols = m.shape
    if rows > cols:
        raise DimensionError(
            f"lq_decompose requires rows <= cols, got {rows}x{cols}")
    mode = "complete" if complete else "reduced"
    q0, r0 = np.linalg.qr(m.T, mode=mode)
    l_mat = r0.T
    q_mat = q0.T
    # nonnegative-diagonal convention
    diag = np.diagonal(l_mat).copy()
    sgn = np.where(diag < 0, -1.0, 1.0)
    if complete:
        full_sgn = np.ones(cols)
        full_sgn[:rows] = sgn
        l_mat = l_mat * full_sgn[None, :]
        q_mat = q_mat * full_sgn[:, None]
    else:
        l_mat = l_mat * sgn[None, :]
        q_mat = q_mat * sgn[:, None]
    return l_mat, q_mat


def principal_angles(a: SubspaceBasis, b: SubspaceBasis) -> np.ndarray:
    """Principal angles between two subspaces, nondecreasing, in [0, pi/2].

    Uses the SVD of the cross-Gram matrix ``a.T @ b`` with the cosines
    clamped to [0, 1]; the list has ``min(dim a, dim b)`` entries and the
    largest angle is last.
    """
    if a.ambient_dim != b.ambient_dim:
        raise DimensionError(
            f"ambient dimensions differ: {a.ambient_dim} vs {b.ambient_dim}")
    if a.dim == 0 or b.dim == 0:
        raise DomainError("principal angles are undefined for an empty subspace")
    s = np.linalg.svd(a.basis.T @ b.basis, compute_uv=False)
    s = np.clip(s, 0.0, 1.0)
    return np.arccos(s)


def largest_angle_to_nullspace(sub: SubspaceBasis, m,
                               rank_tol: float | None = None) -> float:
    """Largest principal angle between ``sub`` and ``null(m)``.

    Equivalent to ``principal_angles(sub, nullspace_basis(m))[-1]`` but
    computed through the row space of ``m``, which is much cheaper when
    ``m`` has few rows.  Requires ``dim(sub) <= nullity(m)``.
    """
    m = as_matrix(m)
    rs = row_space_basis(m, rank_tol)
    nullity = m.shape[1] - rs.dim
    if sub.dim > nullity:
        return float(principal_angles(sub, nullspace_basis(m, rank_tol))[-1])
    if rs.dim == 0:
        return 0.0
    s = np.linalg.svd(rs.basis.T @ sub.basis, compute_uv=False)
    return float(np.arcsin(np.clip(s.max(initial=0.0), 0.0, 1.0)))


def largest_nullspace_angle(m1, m2, rank_tol: float | None = None) -> float:
    """Largest principal angle between ``null(m1)`` and ``null(m2)``.

    When the two null spaces have equal dimension this equals the largest
    principal angle between the row spaces of ``m1`` and ``m2``, which is
    cheap to compute; otherwise falls back to the direct computation.
    """
    m1 = as_matrix(m1)
    m2 = as_matrix(m2)
    r1 = row_space_basis(m1, rank_tol)
    r2 = row_space_basis(m2, rank_tol)
    if m1.shape[1] != m2.shape[1]:
        raise DimensionError(
            f"ambient dimensions differ: {m1.shape[1]} vs {m2.shape[1]}")
    if m1.shape[1] - r1.dim != m2.shape[1] - r2.dim:
        return float(principal_angles(nullspace_basis(m1, rank_tol),
                                      nullspace_basis(m2, rank_tol))[-1])
    if r1.dim == 0:
        return 0.0
    s = np.linalg.svd(r1.basis.T @ r2.basis, compute_uv=False)
    s = np.clip(s, 0.0, 1.0)
    return float(np.arccos(s.min()))
