"""Dense complex tensor kernel: contraction and matrix factorizations.

Tensors are plain ``numpy.ndarray`` values of dtype complex128 in row-major
(C) layout, so reshapes reinterpret the shape without moving data.  All
contractions reduce to transpose-reshape-matmul, which keeps the dominant
cost on the BLAS path.  Every function is pure: inputs are never mutated.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

# Relative floor below which singular values are treated as exact zeros,
# so numerical noise cannot inflate bond ranks.
SV_RELATIVE_FLOOR = 1e-14


def contract(a: np.ndarray, b: np.ndarray, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Contract two tensors over the given axis pairs.

    Args:
        a, b: input tensors.
        pairs: (axis-of-a, axis-of-b) pairs to sum over; must be duplicate-free
            and the paired extents must match.

    Returns:
        Tensor whose axes are the unpaired axes of ``a`` (in order) followed by
        the unpaired axes of ``b``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [p[0] for p in pairs]
    axes_b = [p[1] for p in pairs]
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ValueError(f"duplicate axes in contraction pairs {list(pairs)}")
    for ax_a, ax_b in pairs:
        if not (-a.ndim <= ax_a < a.ndim) or not (-b.ndim <= ax_b < b.ndim):
            raise ValueError(
                f"axis pair ({ax_a}, {ax_b}) out of range for shapes {a.shape}, {b.shape}"
            )
        if a.shape[ax_a] != b.shape[ax_b]:
            raise ValueError(
                f"extent mismatch on pair ({ax_a}, {ax_b}): "
                f"{a.shape[ax_a]} != {b.shape[ax_b]}"
            )
    if not pairs:
        return np.multiply.outer(a, b)
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _split_axes(t: np.ndarray, left_axes: Iterable[int]) -> tuple[list[int], list[int]]:
    left = [ax % t.ndim for ax in left_axes]
    if len(set(left)) != len(left):
        raise ValueError(f"duplicate axes in left_axes {list(left_axes)}")
    for ax in left:
        if ax >= t.ndim:
            raise ValueError(f"axis {ax} out of range for rank-{t.ndim} tensor")
    right = [ax for ax in range(t.ndim) if ax not in set(left)]
    if not left or not right:
        raise ValueError("left_axes must be a nonempty proper subset of the tensor axes")
    return left, right


def _as_matrix(t: np.ndarray, left: list[int], right: list[int]) -> np.ndarray:
    m = np.transpose(t, left + right)
    rows = int(np.prod([t.shape[ax] for ax in left], dtype=np.int64))
    return np.ascontiguousarray(m).reshape(rows, -1)


def _unit_phase(z: np.ndarray) -> np.ndarray:
    phase = np.ones(z.shape, dtype=complex)
    nz = np.abs(z) > 0
    phase[nz] = z[nz] / np.abs(z[nz])
    return phase


def svd_split(
    t: np.ndarray, left_axes: Iterable[int], chi_max: int | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Split a tensor by truncated SVD over a bipartition of its axes.

    The tensor is reshaped to a matrix with rows indexed by ``left_axes`` (in
    the order given) and columns by the remaining axes (in original order),
    then factored as U * diag(S) * V keeping at most ``chi_max`` singular
    values.  Values below ``SV_RELATIVE_FLOOR`` times the largest are dropped
    as noise before the cap is applied.

    Returns:
        (U, S, V, discarded_weight) where U has the left extents plus a new
        trailing bond axis, V has a leading bond axis plus the right extents,
        S is the kept singular values (descending), and discarded_weight is
        the squared weight fraction removed by truncation.
    """
    t = np.asarray(t, dtype=complex)
    if chi_max is not None and chi_max < 1:
        raise ValueError(f"chi_max must be >= 1, got {chi_max}")
    if not np.all(np.isfinite(t)):
        raise ValueError("cannot factorize tensor with non-finite entries")
    left, right = _split_axes(t, left_axes)
    m = _as_matrix(t, left, right)
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd via scipy is slower but robust
        import scipy.linalg

        u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")

    total = float(np.sum(s**2))
    keep = s.size
    if total > 0.0:
        keep = int(np.count_nonzero(s > SV_RELATIVE_FLOOR * s[0]))
        keep = max(keep, 1)
    if chi_max is not None:
        keep = min(keep, chi_max)
    dropped = float(np.sum(s[keep:] ** 2))
    discarded = dropped / total if total > 0.0 else 0.0
    u, s, vh = u[:, :keep], s[:keep], vh[:keep, :]

    # Phase gauge: the largest-magnitude entry of each row of V is made real
    # positive, so repeated decompositions are idempotent up to 1e-12.
    lead = np.argmax(np.abs(vh), axis=1)
    pivot = vh[np.arange(keep), lead]
    phase = _unit_phase(pivot)
    vh = vh / phase[:, None]
    u = u * phase[None, :]

    left_shape = [t.shape[ax] for ax in left]
    right_shape = [t.shape[ax] for ax in right]
    u = u.reshape(left_shape + [keep])
    vh = vh.reshape([keep] + right_shape)
    return u, s, vh, discarded


def qr_split(t: np.ndarray, left_axes: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    """Split a tensor by QR over a bipartition of its axes (no truncation).

    Q carries the left extents plus a new trailing bond axis and satisfies
    Q^dagger Q = identity on that bond; R carries the bond plus the right
    extents, with a real nonnegative diagonal (phase gauge), so Q * R
    reconstructs the input to numerical precision.
    """
    t = np.asarray(t, dtype=complex)
    if not np.all(np.isfinite(t)):
        raise ValueError("cannot factorize tensor with non-finite entries")
    left, right = _split_axes(t, left_axes)
    m = _as_matrix(t, left, right)
    q, r = np.linalg.qr(m)
    phase = _unit_phase(np.diagonal(r).copy())
    q = q * phase[None, :]
    r = r / phase[:, None]

    k = q.shape[1]
    left_shape = [t.shape[ax] for ax in left]
    right_shape = [t.shape[ax] for ax in right]
    return q.reshape(left_shape + [k]), r.reshape([k] + right_shape)
