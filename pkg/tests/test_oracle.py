import itertools

import numpy as np
import pytest

from transmon_dmrg import chips
from transmon_dmrg.model import CouplingSpec, DeviceSpec, ModeSpec, build_mpo, kerr_levels
from transmon_dmrg.mps import BareState, mpo_to_dense
from transmon_dmrg.oracle import (
    basis_config,
    basis_index,
    best_match,
    dense_hamiltonian,
    diagonalize,
    low_spectrum,
    sparse_hamiltonian,
)


def test_basis_index_round_trip():
    dims = (4, 3, 2)
    for idx, occ in enumerate(itertools.product(range(4), range(3), range(2))):
        assert basis_index(dims, occ) == idx
        assert basis_config(dims, idx) == occ


def test_dense_single_mode_is_kerr_diagonal():
    device = DeviceSpec((ModeSpec("qubit", (1, 1), 6.0, 0.2, 4),), ())
    np.testing.assert_allclose(
        dense_hamiltonian(device), np.diag(kerr_levels(6.0, 0.2, 4)), atol=1e-14
    )


def test_dense_two_modes_decoupled_kron_sum():
    device = DeviceSpec(
        (ModeSpec("qubit", (1, 1), 6.0, 0.2, 3), ModeSpec("qubit", (2, 1), 6.4, 0.25, 3)),
        (),
    )
    h = dense_hamiltonian(device)
    expected = np.kron(np.diag(kerr_levels(6.0, 0.2, 3)), np.eye(3)) + np.kron(
        np.eye(3), np.diag(kerr_levels(6.4, 0.25, 3))
    )
    np.testing.assert_allclose(h, expected, atol=1e-14)


def test_dense_matches_mpo_expansion_on_motif():
    device = chips.qcq_motif()
    h = dense_hamiltonian(device)
    expanded = mpo_to_dense(build_mpo(device))
    assert np.max(np.abs(h - expanded)) <= 1e-12


def test_diagonalize_decoupled_energies_are_kerr_sums():
    device = DeviceSpec(
        (ModeSpec("qubit", (1, 1), 6.0, 0.2, 3), ModeSpec("qubit", (2, 1), 6.4, 0.25, 3)),
        (),
    )
    spectrum = diagonalize(device)
    levels = [kerr_levels(6.0, 0.2, 3), kerr_levels(6.4, 0.25, 3)]
    expected = sorted(a + b for a in levels[0] for b in levels[1])
    np.testing.assert_allclose(spectrum.energies, expected, atol=1e-12)


def test_diagonalize_resonant_pair_matches_closed_form():
    g = 0.01
    device = chips.resonant_pair(g=g)
    spectrum = diagonalize(device)
    # single-excitation doublet: mean +- sqrt(delta^2/4 + g^2) with delta = 0,
    # exact up to counter-rotating corrections checked numerically
    split = spectrum.energies[2] - spectrum.energies[1]
    assert split == pytest.approx(2 * g, rel=0.02)
    assert abs(split - 2 * g) <= 5e-6  # beyond-RWA correction is tiny


def test_ground_energy_invariant_under_relabeling():
    device = chips.qcq_motif()
    relabeled = DeviceSpec(
        (device.modes[2], device.modes[1], device.modes[0]),
        tuple(CouplingSpec(2 - c.i, 2 - c.j, c.g, c.k) for c in device.couplings),
    )
    e1 = diagonalize(device).energies[0]
    e2 = diagonalize(relabeled).energies[0]
    assert e1 == pytest.approx(e2, abs=1e-10)


def test_spectrum_invariants():
    device = chips.qcq_motif()
    spectrum = diagonalize(device)
    assert np.all(np.diff(spectrum.energies) >= -1e-12)
    gram = spectrum.states.conj().T @ spectrum.states
    assert np.max(np.abs(gram - np.eye(spectrum.n_states))) <= 1e-10
    h = dense_hamiltonian(device)
    resid = np.linalg.norm(h @ spectrum.states - spectrum.states * spectrum.energies[None, :], axis=0)
    assert resid.max() <= 1e-9 * np.linalg.norm(h, 2)


def test_best_match_decoupled_is_exact():
    device = DeviceSpec(
        (ModeSpec("qubit", (1, 1), 6.0, 0.2, 3), ModeSpec("qubit", (2, 1), 6.4, 0.25, 3)),
        (),
    )
    spectrum = diagonalize(device)
    idx, ov2 = best_match(spectrum, BareState((1, 0)))
    assert ov2 == pytest.approx(1.0, abs=1e-12)
    assert spectrum.energies[idx] == pytest.approx(6.0, abs=1e-12)


def test_best_match_resonant_pair_is_half_and_half():
    device = chips.resonant_pair(g=0.01)
    spectrum = diagonalize(device)
    idx, ov2 = best_match(spectrum, BareState((0, 1)))
    assert ov2 == pytest.approx(0.5, abs=1e-6)
    assert idx in (1, 2)


def test_best_match_exact_tie_breaks_to_lower_energy():
    from transmon_dmrg.oracle import DenseSpectrum

    states = np.array(
        [[1.0, 0.0, 0.0, 0.0],
         [0.0, 1 / np.sqrt(2), 1 / np.sqrt(2), 0.0],
         [0.0, 1 / np.sqrt(2), -1 / np.sqrt(2), 0.0],
         [0.0, 0.0, 0.0, 1.0]]
    ).astype(complex)
    spectrum = DenseSpectrum(np.array([0.0, 5.9, 6.1, 12.0]), states, (2, 2))
    idx, ov2 = best_match(spectrum, BareState((0, 1)))
    assert idx == 1 and ov2 == pytest.approx(0.5)


def test_best_match_detuned_pair_is_adiabatic():
    device = chips.dispersive_pair(omega_1=6.0, omega_2=6.3, g=0.02)
    spectrum = diagonalize(device)
    idx, ov2 = best_match(spectrum, BareState((1, 0)))
    assert ov2 > 0.9
    assert spectrum.energies[idx] == pytest.approx(6.0, abs=0.05)


def test_low_spectrum_matches_dense_on_small_device():
    device = chips.qcq_motif()
    full = diagonalize(device)
    low = low_spectrum(device, k=10)
    np.testing.assert_allclose(low.energies, full.energies[:10], atol=1e-9)
    for k in range(10):
        ov = abs(np.vdot(low.states[:, k], full.states[:, k]))
        assert ov >= 1.0 - 1e-8
    assert not low.complete and full.complete


def test_dimension_guards():
    big = chips.grid_chip(3, 3, calibrate=False)
    with pytest.raises(ValueError, match="2\\^16"):
        dense_hamiltonian(big)
    chip = chips.chip_2x2(calibrate=False)
    with pytest.raises(ValueError, match="memory guard"):
        dense_hamiltonian(chip)
    sparse_hamiltonian(chip)  # sparse path is fine at this size
