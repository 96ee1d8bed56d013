"""Dense exact-diagonalization reference for small devices.

Ground truth for solver tests: Hamiltonians are assembled in the bare product
basis enumerated in mixed radix with the snake-order site as the slowest
varying digit, so bare-state indices are computable in closed form and dense
vectors line up with ``mps.to_dense`` output.

The fully dense path is kept for dimensions where an n^2 matrix is
affordable; beyond that (up to the 2^16 guard) ``low_spectrum`` computes the
low-lying eigenpairs from the sparse Hamiltonian and certifies every returned
pair against the residual bound ||H v - E v|| <= 1e-9 * ||H||.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .model import DeviceSpec, SnakeOrder, kerr_levels, quadrature, snake_order
from .mps import BareState

# Largest dimension for which a dense n x n complex matrix is built.
DENSE_DIM_MAX = 4096
# Outer guard on any exact-diagonalization request.
TOTAL_DIM_MAX = 2**16

RESIDUAL_BOUND = 1e-9


def basis_index(local_dims: Sequence[int], occupations: Sequence[int]) -> int:
    """Closed-form index of a configuration (site 0 slowest-varying)."""
    idx = 0
    for d, n in zip(local_dims, occupations):
        if not 0 <= n < d:
            raise ValueError(f"occupation {n} out of range for local dimension {d}")
        idx = idx * d + n
    return idx


def basis_config(local_dims: Sequence[int], index: int) -> tuple[int, ...]:
    """Inverse of :func:`basis_index`."""
    occ = []
    for d in reversed(local_dims):
        occ.append(index % d)
        index //= d
    return tuple(reversed(occ))


@dataclass
class DenseSpectrum:
    """Eigenpairs in ascending energy order over the bare-product basis.

    ``complete`` is False when only the low-lying part of the spectrum was
    computed; ``best_match`` then ranges over the computed pairs only.
    """

    energies: np.ndarray
    states: np.ndarray  # column k is the eigenvector of energies[k]
    local_dims: tuple[int, ...]
    complete: bool = True

    @property
    def n_states(self) -> int:
        return int(self.energies.size)


def _chain_dims_and_terms(device: DeviceSpec, order: SnakeOrder | None):
    if order is None:
        order = snake_order(device)
    dims = tuple(device.modes[i].local_dim for i in order.chain)
    chain_modes = [device.modes[i] for i in order.chain]
    terms = []
    for c in device.couplings:
        a, b = order.index_of[c.i], order.index_of[c.j]
        terms.append((a, b, device.coupling_strength(c)))
    return dims, chain_modes, terms


def _embed_sparse(dims: Sequence[int], ops: dict[int, np.ndarray]) -> scipy.sparse.csr_matrix:
    out = scipy.sparse.identity(1, dtype=complex, format="csr")
    for x, d in enumerate(dims):
        op = scipy.sparse.csr_matrix(ops[x]) if x in ops else scipy.sparse.identity(d, dtype=complex, format="csr")
        out = scipy.sparse.kron(out, op, format="csr")
    return out


def sparse_hamiltonian(device: DeviceSpec, order: SnakeOrder | None = None) -> scipy.sparse.csr_matrix:
    """Device Hamiltonian as a sparse matrix over the chain-ordered basis."""
    dims, chain_modes, terms = _chain_dims_and_terms(device, order)
    dim = int(np.prod(dims))
    if dim > TOTAL_DIM_MAX:
        raise ValueError(f"total dimension {dim} exceeds the 2^16 guard")
    h = scipy.sparse.csr_matrix((dim, dim), dtype=complex)
    for x, m in enumerate(chain_modes):
        h = h + _embed_sparse(dims, {x: np.diag(kerr_levels(m.omega, m.eta, m.local_dim))})
    for a, b, g in terms:
        if g == 0.0:
            continue
        h = h + g * _embed_sparse(dims, {a: quadrature(dims[a]), b: quadrature(dims[b])})
    return h.tocsr()


def dense_hamiltonian(device: DeviceSpec, order: SnakeOrder | None = None) -> np.ndarray:
    """Hermitian device Hamiltonian as a dense complex matrix (GHz)."""
    dims, _, _ = _chain_dims_and_terms(device, order)
    dim = int(np.prod(dims))
    if dim > TOTAL_DIM_MAX:
        raise ValueError(f"total dimension {dim} exceeds the 2^16 guard")
    if dim > DENSE_DIM_MAX:
        raise ValueError(
            f"dense matrix at dimension {dim} exceeds the {DENSE_DIM_MAX} memory guard; "
            "use sparse_hamiltonian / low_spectrum"
        )
    return sparse_hamiltonian(device, order).toarray()


def diagonalize(device: DeviceSpec, order: SnakeOrder | None = None) -> DenseSpectrum:
    """Full spectrum of a small device by dense Hermitian diagonalization."""
    dims, _, _ = _chain_dims_and_terms(device, order)
    h = dense_hamiltonian(device, order)
    energies, states = np.linalg.eigh(h)
    return DenseSpectrum(energies, states, dims, complete=True)


def _gershgorin_scale(h: scipy.sparse.csr_matrix) -> float:
    return float(np.max(np.abs(h).sum(axis=1)))


def low_spectrum(
    device: DeviceSpec, k: int, order: SnakeOrder | None = None
) -> DenseSpectrum:
    """The k lowest eigenpairs of a large device, residual-certified.

    Uses ARPACK on the sparse Hamiltonian with a deterministic start vector;
    every returned pair is verified against ||H v - E v|| <= 1e-9 * ||H||
    (Gershgorin estimate of ||H||), so the result is trustworthy independent
    of the iterative path that produced it.
    """
    dims, _, _ = _chain_dims_and_terms(device, order)
    h = sparse_hamiltonian(device, order)
    dim = h.shape[0]
    if not 1 <= k < dim - 1:
        raise ValueError(f"k={k} out of range for dimension {dim}")
    rng = np.random.default_rng(7)
    v0 = rng.standard_normal(dim)
    ncv = min(dim, max(2 * k + 1, 60))
    energies, states = scipy.sparse.linalg.eigsh(h, k=k, which="SA", v0=v0, ncv=ncv, tol=0)
    idx = np.argsort(energies)
    energies, states = energies[idx], states[:, idx]

    scale = _gershgorin_scale(h)
    residuals = np.linalg.norm(h @ states - states * energies[None, :], axis=0)
    worst = float(residuals.max())
    if worst > RESIDUAL_BOUND * scale:
        raise ArithmeticError(
            f"low-spectrum residual {worst:.3e} exceeds {RESIDUAL_BOUND:.0e} * ||H|| = "
            f"{RESIDUAL_BOUND * scale:.3e}"
        )
    return DenseSpectrum(energies, states, dims, complete=False)


def best_match(spectrum: DenseSpectrum, b: BareState) -> tuple[int, float]:
    """Eigenstate index maximizing |<b|psi>|^2 and that overlap.

    Ties within 1e-12 resolve to the lower-energy state.
    """
    b.validate(spectrum.local_dims)
    row = spectrum.states[basis_index(spectrum.local_dims, b.occupations), :]
    overlaps = np.abs(row) ** 2
    vmax = float(overlaps.max())
    index = int(np.nonzero(overlaps >= vmax - 1e-12)[0][0])
    return index, float(overlaps[index])
