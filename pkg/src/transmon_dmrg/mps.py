"""Matrix product states, multi-target MPS, and matrix product operators.

Conventions used throughout the package:

* MPS site tensors have axes ``(left_bond, phys, right_bond)``; boundary
  bonds have extent 1.  Sites are 0-indexed.
* A multi-target MPS (MTMPS) is an MPS whose orthogonality-center tensor
  carries a fourth axis enumerating ``m`` mutually orthonormal states:
  ``(left_bond, phys, right_bond, target)``.
* MPO site tensors have axes ``(left_bond, phys_out, phys_in, right_bond)``.
* ``overlap(a, b)`` is the inner product with the conjugate on ``a``.
* Dense vectors enumerate configurations in mixed radix with site 0 as the
  slowest-varying digit (matching the exact-diagonalization basis).

States are treated as immutable values: operations return new instances and
never mutate tensors of an existing state, so states may be shared freely
across threads.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .tensor import qr_split, svd_split

logger = logging.getLogger(__name__)

# Drift in the state norm beyond this triggers explicit renormalization.
NORM_DRIFT_TOL = 1e-8


@dataclass(frozen=True)
class BareState:
    """Occupation-number product state, one occupation per chain site."""

    occupations: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "occupations", tuple(int(n) for n in self.occupations))

    def validate(self, local_dims: Sequence[int]) -> None:
        if len(self.occupations) != len(local_dims):
            raise ValueError(
                f"bare state has {len(self.occupations)} sites, expected {len(local_dims)}"
            )
        for x, (n, d) in enumerate(zip(self.occupations, local_dims)):
            if not 0 <= n < d:
                raise ValueError(f"occupation {n} at site {x} exceeds local dimension {d}")

    @property
    def total_excitation(self) -> int:
        return int(sum(self.occupations))


class MatrixProductState:
    """MPS with orthogonality-center bookkeeping.

    Attributes:
        sites: list of rank-3 tensors ``(left_bond, phys, right_bond)``.
        local_dims: physical dimension per site.
        oc: orthogonality-center site index, or None if not in canonical form.
    """

    def __init__(self, sites: list[np.ndarray], oc: int | None = None):
        self.sites = [np.asarray(t, dtype=complex) for t in sites]
        self.oc = oc
        self._check_shapes()

    def _check_shapes(self):
        n = len(self.sites)
        if n == 0:
            raise ValueError("MPS needs at least one site")
        left = 1
        for x, t in enumerate(self.sites):
            rank = 4 if (x == self.oc and self._is_multi()) else 3
            if t.ndim != rank:
                raise ValueError(f"site {x} has rank {t.ndim}, expected {rank}")
            if t.shape[0] != left:
                raise ValueError(f"bond mismatch entering site {x}: {t.shape[0]} != {left}")
            left = t.shape[2]
        if left != 1:
            raise ValueError(f"right boundary bond has extent {left}, expected 1")
        if self.oc is not None and not 0 <= self.oc < n:
            raise ValueError(f"oc {self.oc} out of range for {n} sites")

    def _is_multi(self) -> bool:
        return False

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def local_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[1] for t in self.sites)

    @property
    def bond_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[0] for t in self.sites) + (1,)

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    def copy(self) -> "MatrixProductState":
        return type(self)(list(self.sites), self.oc)


class MultiTargetMPS(MatrixProductState):
    """MPS whose center tensor carries an extra target axis of extent m."""

    def __init__(self, sites: list[np.ndarray], oc: int):
        if oc is None:
            raise ValueError("a multi-target MPS must have an orthogonality center")
        super().__init__(sites, oc)

    def _is_multi(self) -> bool:
        return True

    @property
    def m(self) -> int:
        return self.sites[self.oc].shape[3]


class MatrixProductOperator:
    """MPO: a chain of rank-4 tensors ``(left_bond, phys_out, phys_in, right_bond)``."""

    def __init__(self, sites: list[np.ndarray]):
        self.sites = [np.asarray(t, dtype=complex) for t in sites]
        left = 1
        for x, t in enumerate(self.sites):
            if t.ndim != 4:
                raise ValueError(f"MPO site {x} has rank {t.ndim}, expected 4")
            if t.shape[0] != left:
                raise ValueError(f"MPO bond mismatch entering site {x}")
            if t.shape[1] != t.shape[2]:
                raise ValueError(f"MPO site {x} has unequal physical legs")
            left = t.shape[3]
        if left != 1:
            raise ValueError("MPO right boundary bond must have extent 1")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def local_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[1] for t in self.sites)

    @property
    def bond_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[0] for t in self.sites) + (1,)


def from_bare_state(b: BareState, local_dims: Sequence[int]) -> MatrixProductState:
    """Product-state MPS with amplitude 1 on configuration ``b`` (all bonds 1)."""
    b.validate(local_dims)
    sites = []
    for n, d in zip(b.occupations, local_dims):
        t = np.zeros((1, d, 1), dtype=complex)
        t[0, n, 0] = 1.0
        sites.append(t)
    return MatrixProductState(sites, oc=0)


def mtmps_from_bare_states(
    targets: Sequence[BareState], local_dims: Sequence[int]
) -> MultiTargetMPS:
    """MTMPS holding one bare product state per target slice.

    Bond bases enumerate the distinct occupation suffixes of the target set,
    so the bond dimension never exceeds the number of targets and every site
    right of the center is an exact right isometry.
    """
    if not targets:
        raise ValueError("need at least one target")
    if len(set(t.occupations for t in targets)) != len(targets):
        raise ValueError("target bare states must be distinct")
    for t in targets:
        t.validate(local_dims)
    n = len(local_dims)
    m = len(targets)

    # suffix classes at each bond x = distinct occupations[x:] over targets
    classes: list[dict[tuple[int, ...], int]] = []
    for x in range(n + 1):
        seen: dict[tuple[int, ...], int] = {}
        for t in targets:
            suf = t.occupations[x:]
            if suf not in seen:
                seen[suf] = len(seen)
        classes.append(seen)

    sites: list[np.ndarray] = []
    center = np.zeros((1, local_dims[0], len(classes[1]), m), dtype=complex)
    for k, t in enumerate(targets):
        center[0, t.occupations[0], classes[1][t.occupations[1:]], k] = 1.0
    sites.append(center)
    for x in range(1, n):
        t_x = np.zeros((len(classes[x]), local_dims[x], len(classes[x + 1])), dtype=complex)
        for suf, idx in classes[x].items():
            t_x[idx, suf[0], classes[x + 1][suf[1:]]] = 1.0
        sites.append(t_x)
    return MultiTargetMPS(sites, oc=0)


# ---------------------------------------------------------------------------
# canonical form


def _move_right(sites: list[np.ndarray], oc: int, multi: bool) -> int:
    c = sites[oc]
    if multi:
        q, r = qr_split(c, (0, 1))  # q: (l, p, k); r: (k, r, m)
        sites[oc] = q
        nxt = np.tensordot(r, sites[oc + 1], axes=([1], [0]))  # (k, m, p, r)
        sites[oc + 1] = nxt.transpose(0, 2, 3, 1)
    else:
        q, r = qr_split(c, (0, 1))
        sites[oc] = q
        sites[oc + 1] = np.tensordot(r, sites[oc + 1], axes=([1], [0]))
    return oc + 1


def _move_left(sites: list[np.ndarray], oc: int, multi: bool) -> int:
    c = sites[oc]
    if multi:
        q, r = qr_split(c, (1, 2))  # q: (p, r, k); r: (k, l, m)
        sites[oc] = q.transpose(2, 0, 1)
        nxt = np.tensordot(sites[oc - 1], r, axes=([2], [1]))  # (l, p, k, m)
        sites[oc - 1] = nxt
    else:
        q, r = qr_split(c, (1, 2))
        sites[oc] = q.transpose(2, 0, 1)
        sites[oc - 1] = np.tensordot(sites[oc - 1], r, axes=([2], [1]))
    return oc - 1


def move_oc(psi: MatrixProductState, target_site: int) -> MatrixProductState:
    """Move the orthogonality center to ``target_site`` without truncation.

    The represented state is unchanged.  For a multi-target MPS the target
    axis always rides on the center tensor.  If the state has no known
    center it is first brought into canonical form.
    """
    n = psi.n_sites
    if not 0 <= target_site < n:
        raise ValueError(f"target site {target_site} out of range for {n} sites")
    multi = psi._is_multi()
    sites = list(psi.sites)
    if psi.oc is None:
        oc = _canonicalize(sites, target_site)
    else:
        oc = psi.oc
    while oc < target_site:
        oc = _move_right(sites, oc, multi)
    while oc > target_site:
        oc = _move_left(sites, oc, multi)

    # an MTMPS center of m orthonormal slices has norm sqrt(m)
    expected = math.sqrt(sites[oc].shape[3]) if multi else 1.0
    norm = float(np.linalg.norm(sites[oc]))
    drift = abs(norm / expected - 1.0)
    if drift > NORM_DRIFT_TOL:
        logger.warning("normalization drift %.3e at oc move; renormalizing", drift)
        sites[oc] = sites[oc] * (expected / norm)
    if multi:
        return MultiTargetMPS(sites, oc)
    return MatrixProductState(sites, oc)


def _canonicalize(sites: list[np.ndarray], oc: int) -> int:
    """In-place QR sweeps bringing a center-free MPS to canonical form at ``oc``."""
    for x in range(oc):
        q, r = qr_split(sites[x], (0, 1))
        sites[x] = q
        sites[x + 1] = np.tensordot(r, sites[x + 1], axes=([1], [0]))
    for x in range(len(sites) - 1, oc, -1):
        q, r = qr_split(sites[x], (1, 2))
        sites[x] = q.transpose(2, 0, 1)
        sites[x - 1] = np.tensordot(sites[x - 1], r, axes=([2], [1]))
    return oc


def left_isometry_defect(t: np.ndarray) -> float:
    m = t.reshape(-1, t.shape[2])
    g = m.conj().T @ m
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))

def right_isometry_defect(t: np.ndarray) -> float:
    m = t.reshape(t.shape[0], -1)
    g = m @ m.conj().T
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))


def canonical_defect(psi: MatrixProductState) -> float:
    """Largest deviation from the isometry conditions on either side of the center."""
    if psi.oc is None:
        raise ValueError("state has no orthogonality center")
    worst = 0.0
    for x in range(psi.oc):
        worst = max(worst, left_isometry_defect(psi.sites[x]))
    for x in range(psi.oc + 1, psi.n_sites):
        worst = max(worst, right_isometry_defect(psi.sites[x]))
    return worst


def target_gram_defect(gamma: MultiTargetMPS) -> float:
    """Deviation of the center-tensor slices from mutual orthonormality."""
    c = gamma.sites[gamma.oc]
    m = c.reshape(-1, c.shape[3])
    g = m.conj().T @ m
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))


# ---------------------------------------------------------------------------
# contractions


def overlap(a: MatrixProductState, b: MatrixProductState) -> complex:
    """Inner product <a|b> of the represented vectors (conjugate on ``a``)."""
    if a.local_dims != b.local_dims:
        raise ValueError(f"local dimensions differ: {a.local_dims} vs {b.local_dims}")
    if a._is_multi() or b._is_multi():
        raise ValueError("overlap is defined for single-target states; use extract_target")
    env = np.ones((1, 1), dtype=complex)  # (bra_bond, ket_bond)
    for ta, tb in zip(a.sites, b.sites):
        tmp = np.tensordot(env, ta.conj(), axes=([0], [0]))  # (kb, p, a')
        env = np.tensordot(tmp, tb, axes=([0, 1], [0, 1]))  # (a', b')
    return complex(env[0, 0])


def _mpo_env_step(env: np.ndarray, a: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    tmp = np.tensordot(env, b, axes=([2], [0]))  # (a, w, p, b')
    tmp = np.tensordot(tmp, w, axes=([1, 2], [0, 2]))  # (a, b', o, w')
    tmp = np.tensordot(tmp, a.conj(), axes=([0, 2], [0, 1]))  # (b', w', a')
    return tmp.transpose(2, 1, 0)


def _sandwich_value(psi: MatrixProductState, h: MatrixProductOperator) -> complex:
    """<psi| H H |psi> by a two-layer transfer contraction (no MPO squaring)."""
    env = np.ones((1, 1, 1, 1), dtype=complex)  # (bra, w_outer, w_inner, ket)
    for a, w in zip(psi.sites, h.sites):
        tmp = np.tensordot(env, a, axes=([3], [0]))  # (bra, w1, w2, p, ket')
        tmp = np.tensordot(tmp, w, axes=([2, 3], [0, 2]))  # (bra, w1, ket', mid, w2')
        tmp = np.tensordot(tmp, w, axes=([1, 3], [0, 2]))  # (bra, ket', w2', out, w1')
        tmp = np.tensordot(tmp, a.conj(), axes=([0, 3], [0, 1]))  # (ket', w2', w1', bra')
        env = tmp.transpose(3, 2, 1, 0)
    return complex(env[0, 0, 0, 0])


def _real_part(value: complex, what: str) -> float:
    tol = 1e-10 * max(1.0, abs(value))
    if abs(value.imag) > tol:
        raise ValueError(f"{what} has non-Hermitian residue {value.imag:.3e}")
    return float(value.real)


def expectation(psi: MatrixProductState, h: MatrixProductOperator) -> float:
    """Real part of <psi|H|psi>; raises if the imaginary residue is non-numerical."""
    if psi.local_dims != h.local_dims:
        raise ValueError("state and MPO local dimensions differ")
    if psi._is_multi():
        raise ValueError("expectation is defined per target; use extract_target")
    env = np.ones((1, 1, 1), dtype=complex)
    for a, w in zip(psi.sites, h.sites):
        env = _mpo_env_step(env, a, w, a)
    return _real_part(complex(env[0, 0, 0]), "expectation value")


def apply_mpo(psi: MatrixProductState, h: MatrixProductOperator) -> MatrixProductState:
    """H|psi> with exact (untruncated) bond growth; result has no center."""
    if psi.local_dims != h.local_dims:
        raise ValueError("state and MPO local dimensions differ")
    sites = []
    for a, w in zip(psi.sites, h.sites):
        t = np.tensordot(a, w, axes=([1], [2]))  # (l, r, wl, o, wr)
        t = t.transpose(0, 2, 3, 1, 4)
        l, wl, o, r, wr = t.shape
        sites.append(t.reshape(l * wl, o, r * wr))
    return MatrixProductState(sites, oc=None)


def variance(psi: MatrixProductState, h: MatrixProductOperator) -> float:
    """<H^2> - <H>^2 in GHz^2 without building the squared MPO.

    Small systems apply the MPO exactly and take the norm; larger ones use a
    two-layer sandwich contraction.  Numerically negative results within
    1e-10 are clamped to zero.
    """
    e = expectation(psi, h)
    max_w = max(h.bond_dims)
    if psi.n_sites <= 8 and psi.max_bond * max_w <= 256:
        hpsi = apply_mpo(psi, h)
        h2 = float(np.real(overlap(hpsi, hpsi)))
    else:
        h2 = _real_part(_sandwich_value(psi, h), "squared expectation")
    var = h2 - e * e
    if var < -1e-10:
        raise ValueError(f"variance {var:.3e} is negative beyond numerical tolerance")
    return max(var, 0.0)


def amplitude(psi: MatrixProductState, config: BareState) -> complex:
    """<config|psi> evaluated by a single sweep along the chain."""
    config.validate(psi.local_dims)
    if psi._is_multi():
        raise ValueError("amplitude is defined per target; use extract_target")
    v = np.ones((1,), dtype=complex)
    for t, p in zip(psi.sites, config.occupations):
        v = v @ t[:, p, :]
    return complex(v[0])


def extract_target(gamma: MultiTargetMPS, k: int) -> MatrixProductState:
    """The k-th (0-based) state carried by a multi-target MPS."""
    if not 0 <= k < gamma.m:
        raise ValueError(f"target index {k} out of range for m={gamma.m}")
    sites = list(gamma.sites)
    center = sites[gamma.oc][:, :, :, k]
    norm = float(np.linalg.norm(center))
    if abs(norm - 1.0) > NORM_DRIFT_TOL:
        logger.warning("target %d norm drift %.3e; renormalizing", k, abs(norm - 1.0))
        center = center / norm
    sites[gamma.oc] = center
    return MatrixProductState(sites, gamma.oc)


# ---------------------------------------------------------------------------
# dense bridging (small systems, tests, oracle comparisons)


def to_dense(psi: MatrixProductState) -> np.ndarray:
    """Dense amplitude vector; site 0 is the slowest-varying digit."""
    if psi._is_multi():
        raise ValueError("expand targets individually via extract_target")
    block = np.ones((1, 1), dtype=complex)  # (dense prefix, bond)
    for t in psi.sites:
        block = np.tensordot(block, t, axes=([1], [0]))  # (prefix, p, r)
        block = block.reshape(-1, t.shape[2])
    return block[:, 0]


def from_dense(
    vec: np.ndarray, local_dims: Sequence[int], chi_max: int | None = None
) -> MatrixProductState:
    """Exact (or chi-truncated) MPS decomposition of a dense vector."""
    dims = list(local_dims)
    vec = np.asarray(vec, dtype=complex)
    if vec.size != int(np.prod(dims)):
        raise ValueError("vector length does not match local dimensions")
    sites = []
    rest = vec.reshape(1, -1)
    for d in dims[:-1]:
        chi_l = rest.shape[0]
        theta = rest.reshape(chi_l, d, -1)
        u, s, v, _ = svd_split(theta, (0, 1), chi_max)
        sites.append(u)
        rest = s[:, None] * v.reshape(s.size, -1)
    sites.append(rest.reshape(rest.shape[0], dims[-1], 1))
    return MatrixProductState(sites, oc=len(dims) - 1)


def mpo_element(h: MatrixProductOperator, bra: BareState, ket: BareState) -> complex:
    """Matrix element <bra|H|ket> from the MPO tensors alone."""
    bra.validate(h.local_dims)
    ket.validate(h.local_dims)
    v = np.ones((1,), dtype=complex)
    for w, o, i in zip(h.sites, bra.occupations, ket.occupations):
        v = v @ w[:, o, i, :]
    return complex(v[0])


def mpo_to_dense(h: MatrixProductOperator) -> np.ndarray:
    """Dense matrix of the MPO; guarded against excessive dimensions."""
    dim = int(np.prod(h.local_dims))
    if dim > 8192:
        raise ValueError(f"refusing dense MPO expansion at dimension {dim} > 8192")
    block = np.ones((1, 1, 1), dtype=complex)  # (out prefix, in prefix, bond)
    for w in h.sites:
        block = np.tensordot(block, w, axes=([2], [0]))  # (O, I, o, i, wr)
        block = block.transpose(0, 2, 1, 3, 4)
        o_dim = block.shape[0] * block.shape[1]
        i_dim = block.shape[2] * block.shape[3]
        block = block.reshape(o_dim, i_dim, -1)
    return block[:, :, 0]


# ---------------------------------------------------------------------------
# serialization: binary checkpoint container

_MAGIC = b"MPSC"
_VERSION = 1


def save_state(psi: MatrixProductState, f: BinaryIO | str) -> None:
    """Write an MPS/MTMPS to the binary checkpoint container.

    Layout (all little-endian): magic ``MPSC``, u32 version, u32 site count,
    u32 target count (0 for a plain MPS), i32 center index (-1 for none),
    u32 local dims; then per site a u32 rank, u32 shape, and the row-major
    complex-double payload.
    """
    if isinstance(f, str):
        with open(f, "wb") as fh:
            save_state(psi, fh)
        return
    m = psi.m if isinstance(psi, MultiTargetMPS) else 0
    oc = -1 if psi.oc is None else psi.oc
    f.write(_MAGIC)
    f.write(struct.pack("<IIIi", _VERSION, psi.n_sites, m, oc))
    f.write(struct.pack(f"<{psi.n_sites}I", *psi.local_dims))
    for t in psi.sites:
        f.write(struct.pack("<I", t.ndim))
        f.write(struct.pack(f"<{t.ndim}I", *t.shape))
        f.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def load_state(f: BinaryIO | str) -> MatrixProductState:
    """Read an MPS/MTMPS written by :func:`save_state`."""
    if isinstance(f, str):
        with open(f, "rb") as fh:
            return load_state(fh)
    if f.read(4) != _MAGIC:
        raise ValueError("not an MPS checkpoint container")
    version, n, m, oc = struct.unpack("<IIIi", f.read(16))
    if version != _VERSION:
        raise ValueError(f"unsupported container version {version}")
    local_dims = struct.unpack(f"<{n}I", f.read(4 * n))
    sites = []
    for _ in range(n):
        (rank,) = struct.unpack("<I", f.read(4))
        shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
        count = int(np.prod(shape))
        data = np.frombuffer(f.read(16 * count), dtype="<c16").reshape(shape)
        sites.append(np.array(data, dtype=complex))
    psi: MatrixProductState
    if m > 0:
        psi = MultiTargetMPS(sites, oc)
    else:
        psi = MatrixProductState(sites, None if oc < 0 else oc)
    if psi.local_dims != tuple(local_dims):
        raise ValueError("corrupt container: local dims disagree with tensors")
    return psi
