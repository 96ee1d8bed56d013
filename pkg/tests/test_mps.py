import io

import numpy as np
import pytest

from transmon_dmrg import chips, model, oracle, solver
from transmon_dmrg.mps import (
    BareState,
    MatrixProductState,
    MultiTargetMPS,
    amplitude,
    apply_mpo,
    canonical_defect,
    expectation,
    extract_target,
    from_bare_state,
    from_dense,
    load_state,
    move_oc,
    mpo_element,
    mpo_to_dense,
    mtmps_from_bare_states,
    overlap,
    save_state,
    target_gram_defect,
    to_dense,
    variance,
)


def kerr_mpo(omegas, etas, dims):
    device = model.DeviceSpec(
        tuple(
            model.ModeSpec("qubit", (float(i + 1), 1.0), w, e, d)
            for i, (w, e, d) in enumerate(zip(omegas, etas, dims))
        ),
        (),
    )
    return model.build_mpo(device)


def random_state(local_dims, chi, rng):
    return solver.random_mps(local_dims, chi, rng)


# ---------------------------------------------------------------------------
# from_bare_state


def test_bare_product_state_norm_and_bonds():
    psi = from_bare_state(BareState((0, 0, 0)), (2, 2, 2))
    assert psi.max_bond == 1
    assert overlap(psi, psi) == pytest.approx(1.0)
    assert psi.oc == 0


def test_bare_amplitudes():
    psi = from_bare_state(BareState((1, 0)), (2, 2))
    assert amplitude(psi, BareState((1, 0))) == pytest.approx(1.0)
    assert amplitude(psi, BareState((0, 1))) == pytest.approx(0.0)


def test_bare_state_is_eigenstate_of_diagonal_mpo():
    h = kerr_mpo([6.0, 6.3], [0.2, 0.2], [3, 3])
    psi = from_bare_state(BareState((2, 1)), (3, 3))
    assert variance(psi, h) == pytest.approx(0.0, abs=1e-12)


def test_bare_state_validation():
    with pytest.raises(ValueError, match="exceeds local dimension"):
        from_bare_state(BareState((3, 0)), (3, 3))


# ---------------------------------------------------------------------------
# move_oc


def test_move_oc_in_place_is_identity(rng):
    psi = random_state((2, 2, 2), 4, rng)
    out = move_oc(psi, 0)
    for a, b in zip(psi.sites, out.sites):
        np.testing.assert_allclose(a, b, atol=1e-14)


def test_move_oc_product_state_keeps_overlap():
    psi = from_bare_state(BareState((1, 0, 1)), (2, 2, 2))
    for target in (2, 1, 0):
        psi = move_oc(psi, target)
        assert abs(overlap(psi, psi) - 1.0) <= 1e-12


def test_move_oc_round_trip_matches_dense(rng):
    psi = random_state((2, 3, 2, 3, 2), 8, rng)
    dense_before = to_dense(psi)
    moved = move_oc(move_oc(psi, 4), 0)
    dense_after = to_dense(moved)
    fidelity = abs(np.vdot(dense_before, dense_after))
    assert fidelity >= 1.0 - 1e-12
    assert canonical_defect(moved) <= 1e-10


def test_move_oc_range_error(rng):
    psi = random_state((2, 2), 2, rng)
    with pytest.raises(ValueError, match="out of range"):
        move_oc(psi, 5)


def test_canonical_invariants_after_moves(rng):
    psi = random_state((3, 2, 4, 2), 8, rng)
    for target in (3, 1, 2, 0):
        psi = move_oc(psi, target)
        assert canonical_defect(psi) <= 1e-10
        assert abs(overlap(psi, psi) - 1.0) <= 1e-10


# ---------------------------------------------------------------------------
# overlap / expectation / variance / amplitude


def test_overlap_normalized_self(rng):
    psi = random_state((2, 2, 2, 2), 4, rng)
    assert overlap(psi, psi) == pytest.approx(1.0, abs=1e-12)


def test_overlap_orthogonal_bare_states():
    a = from_bare_state(BareState((0, 1)), (2, 2))
    b = from_bare_state(BareState((1, 0)), (2, 2))
    assert overlap(a, b) == pytest.approx(0.0, abs=1e-14)


def test_overlap_matches_dense(rng):
    dims = (2, 2, 2, 2, 2)
    va = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    vb = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    a = from_dense(va, dims, chi_max=4)
    b = from_dense(vb, dims, chi_max=4)
    expected = np.vdot(to_dense(a), to_dense(b))
    assert overlap(a, b) == pytest.approx(expected, abs=1e-12)


def test_expectation_bare_kerr():
    h = kerr_mpo([6.0, 6.4, 6.2], [0.2, 0.2, 0.2], [3, 3, 3])
    excited = from_bare_state(BareState((1, 0, 0)), (3, 3, 3))
    assert expectation(excited, h) == pytest.approx(6.0, abs=1e-12)
    ground = from_bare_state(BareState((0, 0, 0)), (3, 3, 3))
    assert expectation(ground, h) == pytest.approx(0.0, abs=1e-12)


def test_expectation_matches_dense_oracle(rng):
    device = chips.qcq_motif()
    h = model.build_mpo(device)
    hd = oracle.dense_hamiltonian(device)
    psi = random_state(h.local_dims, 6, rng)
    vec = to_dense(psi)
    expected = float(np.real(np.vdot(vec, hd @ vec)))
    assert expectation(psi, h) == pytest.approx(expected, abs=1e-10)


def test_variance_eigenstate_is_zero():
    h = kerr_mpo([6.0, 6.3], [0.2, 0.2], [4, 4])
    psi = from_bare_state(BareState((1, 1)), (4, 4))
    assert variance(psi, h) == pytest.approx(0.0, abs=1e-12)


def test_variance_equal_superposition():
    # eigenstates at 0 and 2 GHz: classical +-1 split has variance 1
    h = kerr_mpo([2.0, 5.0], [0.0, 0.0], [2, 2])
    vec = np.zeros(4, dtype=complex)
    vec[0] = 1 / np.sqrt(2)  # |00> at 0 GHz
    vec[2] = 1 / np.sqrt(2)  # |10> at 2 GHz
    psi = from_dense(vec, (2, 2))
    assert variance(psi, h) == pytest.approx(1.0, abs=1e-10)


def test_variance_matches_dense_on_converged_state(rng):
    device = chips.grid_chip(2, 1, seed=3, calibrate=False)  # 2 qubits + coupler + extras
    h = model.build_mpo(device)
    hd = oracle.dense_hamiltonian(device)
    psi = random_state(h.local_dims, 6, rng)
    vec = to_dense(psi)
    e = float(np.real(np.vdot(vec, hd @ vec)))
    var_dense = float(np.real(np.vdot(vec, hd @ (hd @ vec)))) - e * e
    assert variance(psi, h) == pytest.approx(var_dense, abs=1e-10)


def test_variance_sandwich_agrees_with_apply(rng):
    dims = tuple([2] * 10)
    h = kerr_mpo([6.0 + 0.05 * i for i in range(10)], [0.2] * 10, dims)
    psi = random_state(dims, 4, rng)
    hpsi = apply_mpo(psi, h)
    e = expectation(psi, h)
    direct = float(np.real(overlap(hpsi, hpsi))) - e * e
    assert variance(psi, h) == pytest.approx(direct, abs=1e-9)


def test_amplitude_matches_dense(rng):
    dims = (2, 2, 2, 2, 2)
    vec = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    psi = from_dense(vec, dims, chi_max=4)
    dense = to_dense(psi)
    config = BareState((1, 0, 1, 1, 0))
    idx = oracle.basis_index(dims, config.occupations)
    assert amplitude(psi, config) == pytest.approx(dense[idx], abs=1e-12)


# ---------------------------------------------------------------------------
# multi-target states


def test_mtmps_from_bare_states_amplitudes():
    targets = (BareState((0, 1)), BareState((1, 0)))
    gamma = mtmps_from_bare_states(targets, (2, 2))
    first = extract_target(gamma, 0)
    assert amplitude(first, BareState((0, 1))) == pytest.approx(1.0)
    assert amplitude(first, BareState((1, 0))) == pytest.approx(0.0, abs=1e-14)


def test_mtmps_targets_mutually_orthogonal():
    targets = (BareState((0, 1, 0)), BareState((1, 0, 0)), BareState((0, 0, 1)))
    gamma = mtmps_from_bare_states(targets, (2, 2, 2))
    assert target_gram_defect(gamma) <= 1e-12
    states = [extract_target(gamma, k) for k in range(3)]
    for i in range(3):
        for j in range(i + 1, 3):
            assert abs(overlap(states[i], states[j])) <= 1e-10


def test_mtmps_move_oc_carries_target_axis():
    targets = (BareState((0, 1, 1)), BareState((1, 0, 0)))
    gamma = mtmps_from_bare_states(targets, (2, 2, 2))
    moved = move_oc(gamma, 2)
    assert isinstance(moved, MultiTargetMPS)
    assert moved.sites[2].ndim == 4
    assert target_gram_defect(moved) <= 1e-10
    back = move_oc(moved, 0)
    for k in range(2):
        a, b = extract_target(gamma, k), extract_target(back, k)
        assert abs(abs(overlap(a, b)) - 1.0) <= 1e-12


def test_extract_target_range_error():
    gamma = mtmps_from_bare_states((BareState((0,)), BareState((1,))), (2,))
    with pytest.raises(ValueError, match="out of range"):
        extract_target(gamma, 5)


def test_extracted_targets_match_dense_after_mtdmrg(rng):
    from transmon_dmrg.solver import SweepConfig, TargetSet, run_sweeps

    device = chips.qcq_motif()
    h = model.build_mpo(device)
    spectrum = oracle.diagonalize(device)
    targets = TargetSet((BareState((1, 0, 0)), BareState((0, 0, 1))))
    gamma = mtmps_from_bare_states(targets.states, h.local_dims)
    gamma, report = run_sweeps("mtdmrgx", gamma, h, SweepConfig(chi_max=8, seed=2), targets=targets)
    for k in range(2):
        psi = extract_target(gamma, k)
        idx = int(np.argmax(np.abs(spectrum.states.conj().T @ to_dense(psi))))
        ov2 = abs(np.vdot(spectrum.states[:, idx], to_dense(psi))) ** 2
        assert ov2 >= 1.0 - 1e-8


# ---------------------------------------------------------------------------
# variance-fidelity relation


def test_variance_fidelity_relation():
    device = chips.qcq_motif()
    h = model.build_mpo(device)
    spectrum = oracle.diagonalize(device)
    eps = 1e-6
    target_idx = 1
    mix = [3, 5, 9]
    coeffs = np.array([0.6, 0.5, np.sqrt(1 - 0.61)])
    vec = np.sqrt(1 - eps) * spectrum.states[:, target_idx]
    for c, n in zip(coeffs, mix):
        vec = vec + np.sqrt(eps) * c * spectrum.states[:, n]
    psi = from_dense(vec, h.local_dims)
    e_t = spectrum.energies[target_idx]
    expected = eps * sum(
        abs(c) ** 2 * (spectrum.energies[n] - e_t) ** 2 for c, n in zip(coeffs, mix)
    )
    assert variance(psi, h) == pytest.approx(expected, abs=1e-8)


# ---------------------------------------------------------------------------
# MPO element checks


def test_mpo_element_matches_dense():
    device = chips.qcq_motif()
    h = model.build_mpo(device)
    hd = oracle.dense_hamiltonian(device)
    dims = h.local_dims
    rng = np.random.default_rng(7)
    for _ in range(40):
        bra = tuple(int(rng.integers(0, d)) for d in dims)
        ket = tuple(int(rng.integers(0, d)) for d in dims)
        i = oracle.basis_index(dims, bra)
        j = oracle.basis_index(dims, ket)
        assert mpo_element(h, BareState(bra), BareState(ket)) == pytest.approx(
            hd[i, j], abs=1e-12
        )


def test_mpo_to_dense_guard():
    dims = [4] * 8
    h = kerr_mpo([6.0] * 8, [0.2] * 8, dims)
    with pytest.raises(ValueError, match="8192"):
        mpo_to_dense(h)


# ---------------------------------------------------------------------------
# serialization


def test_serialization_round_trip(rng):
    psi = random_state((2, 3, 4, 2), 6, rng)
    buf = io.BytesIO()
    save_state(psi, buf)
    buf.seek(0)
    loaded = load_state(buf)
    assert isinstance(loaded, MatrixProductState)
    assert loaded.oc == psi.oc
    assert loaded.local_dims == psi.local_dims
    assert abs(abs(overlap(psi, loaded)) - 1.0) <= 1e-12


def test_serialization_round_trip_mtmps(tmp_path):
    targets = (BareState((0, 1, 0)), BareState((1, 0, 1)))
    gamma = mtmps_from_bare_states(targets, (2, 2, 2))
    path = str(tmp_path / "state.mpsc")
    save_state(gamma, path)
    loaded = load_state(path)
    assert isinstance(loaded, MultiTargetMPS)
    assert loaded.m == 2
    for k in range(2):
        a, b = extract_target(gamma, k), extract_target(loaded, k)
        assert abs(abs(overlap(a, b)) - 1.0) <= 1e-12


def test_serialization_bad_magic():
    with pytest.raises(ValueError, match="not an MPS checkpoint"):
        load_state(io.BytesIO(b"XXXX" + b"\x00" * 64))
