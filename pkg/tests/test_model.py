import json
import math

import numpy as np
import pytest

from transmon_dmrg import chips
from transmon_dmrg.model import (
    CouplingSpec,
    DeviceSpec,
    ModeSpec,
    build_mpo,
    charge_coupling_g,
    coupler_off_frequency,
    coupling_g,
    device_from_dict,
    device_to_dict,
    impedance_xi,
    kerr_levels,
    load_device,
    quadrature,
    save_device,
    snake_order,
    transmon_params,
)
from transmon_dmrg.mps import BareState, expectation, from_bare_state, mpo_to_dense


def qubit(x, y, omega, eta=0.2, d=4):
    return ModeSpec("qubit", (x, y), omega, eta, d)


def coupler(x, y, omega, eta=0.12, d=3):
    return ModeSpec("coupler", (x, y), omega, eta, d)


# ---------------------------------------------------------------------------
# closed-form maps


def test_kerr_levels_values():
    np.testing.assert_allclose(kerr_levels(6.0, 0.2, 4), [0.0, 6.0, 11.8, 17.4])
    np.testing.assert_allclose(kerr_levels(1.5, 0.0, 4), [0.0, 1.5, 3.0, 4.5])
    np.testing.assert_allclose(kerr_levels(6.3, 0.25, 3), [0.0, 6.3, 12.35])


def test_transmon_params_values():
    omega, eta = transmon_params(0.2, 16.0)
    assert omega == pytest.approx(math.sqrt(25.6) - 0.2, abs=1e-12)
    assert eta == pytest.approx(0.2)
    omega2, eta2 = transmon_params(0.25, 20.0)
    assert omega2 == pytest.approx(math.sqrt(40.0) - 0.25, abs=1e-12)
    assert eta2 == pytest.approx(0.25)


def test_transmon_params_doubling_ej_scales_by_sqrt2():
    omega1, _ = transmon_params(0.2, 16.0)
    omega2, _ = transmon_params(0.2, 32.0)
    assert (omega2 + 0.2) / (omega1 + 0.2) == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_transmon_regime_guard():
    with pytest.raises(ValueError, match="transmon regime"):
        transmon_params(0.2, 3.0)


def test_coupling_g_values():
    assert coupling_g(0.02, 6.0, 6.0) == pytest.approx(0.06)
    assert coupling_g(0.0, 6.0, 6.6) == 0.0
    assert coupling_g(0.01, 6.0, 6.6) == pytest.approx(0.5 * 0.01 * math.sqrt(6.0 * 6.6))


def test_charge_coupling_g_values():
    xi = impedance_xi(0.2, 16.0)
    assert xi == pytest.approx(math.sqrt(0.025), abs=1e-12)
    g = charge_coupling_g(0.02, 0.2, 0.2, xi, xi)
    assert g == pytest.approx(8 * 0.02 * 0.2 / (4 * xi), abs=1e-9)
    assert charge_coupling_g(0.0, 0.2, 0.2, xi, xi) == 0.0


def test_charge_coupling_consistent_with_frequency_form():
    # same physical inputs through both coupling formulas agree to ~the
    # -E_C frequency correction
    e_c, e_j, k = 0.2, 16.0, 0.02
    omega, _ = transmon_params(e_c, e_j)
    xi = impedance_xi(e_c, e_j)
    g_charge = charge_coupling_g(k, e_c, e_c, xi, xi)
    g_freq = coupling_g(k, omega, omega)
    assert abs(g_charge - g_freq) / g_freq <= 0.2


# ---------------------------------------------------------------------------
# snake ordering


def test_snake_single_row_interleaves_couplers():
    device = DeviceSpec(
        (
            qubit(1, 1, 6.0),
            qubit(2, 1, 6.1),
            qubit(3, 1, 6.2),
            coupler(1.5, 1, 7.5),
            coupler(2.5, 1, 7.6),
        ),
        (),
    )
    order = snake_order(device)
    xs = [device.modes[i].position[0] for i in order.chain]
    assert xs == [1.0, 1.5, 2.0, 2.5, 3.0]


def test_snake_2x2_serpentine():
    device = DeviceSpec(
        (qubit(1, 1, 6.0), qubit(2, 1, 6.1), qubit(1, 2, 6.2), qubit(2, 2, 6.3)),
        (),
    )
    order = snake_order(device)
    path = [device.modes[i].position for i in order.chain]
    assert path == [(1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0)]


def test_snake_3x3_boustrophedon_path():
    modes = tuple(
        qubit(x, y, 6.0 + 0.01 * (3 * (y - 1) + x)) for y in (1, 2, 3) for x in (1, 2, 3)
    )
    order = snake_order(DeviceSpec(modes, ()))
    path = [modes[i].position for i in order.chain]
    assert path == [
        (1.0, 1.0), (2.0, 1.0), (3.0, 1.0),
        (3.0, 2.0), (2.0, 2.0), (1.0, 2.0),
        (1.0, 3.0), (2.0, 3.0), (3.0, 3.0),
    ]


def test_snake_duplicate_positions_rejected():
    device = DeviceSpec((qubit(1, 1, 6.0), qubit(1, 1, 6.1)), ())
    with pytest.raises(ValueError, match="distinct positions"):
        snake_order(device)


# ---------------------------------------------------------------------------
# MPO construction


def dense_assembly(device, order):
    """Independent dense Hamiltonian: explicit kron loops in chain order."""
    chain = [device.modes[i] for i in order.chain]
    dims = [m.local_dim for m in chain]
    dim = int(np.prod(dims))
    h = np.zeros((dim, dim), dtype=complex)

    def embed(ops):
        out = np.eye(1, dtype=complex)
        for x, d in enumerate(dims):
            out = np.kron(out, ops.get(x, np.eye(d, dtype=complex)))
        return out

    for x, m in enumerate(chain):
        h += embed({x: np.diag(kerr_levels(m.omega, m.eta, m.local_dim)).astype(complex)})
    for c in device.couplings:
        a, b = order.index_of[c.i], order.index_of[c.j]
        g = device.coupling_strength(c)
        h += g * embed({a: quadrature(dims[a]), b: quadrature(dims[b])})
    return h


def test_mpo_single_mode_is_kerr_diagonal():
    device = DeviceSpec((qubit(1, 1, 6.0, 0.2, 4),), ())
    h = build_mpo(device)
    np.testing.assert_allclose(
        mpo_to_dense(h), np.diag(kerr_levels(6.0, 0.2, 4)), atol=1e-14
    )


def test_mpo_decoupled_is_kron_sum():
    device = DeviceSpec((qubit(1, 1, 6.0), qubit(2, 1, 6.3)), ())
    h = mpo_to_dense(build_mpo(device))
    d1 = np.diag(kerr_levels(6.0, 0.2, 4))
    d2 = np.diag(kerr_levels(6.3, 0.2, 4))
    expected = np.kron(d1, np.eye(4)) + np.kron(np.eye(4), d2)
    np.testing.assert_allclose(h, expected, atol=1e-14)


def test_mpo_matches_dense_assembly_on_four_mode_device():
    device = DeviceSpec(
        (
            qubit(1, 1, 6.0),
            coupler(1.5, 1, 7.4),
            qubit(2, 1, 6.25),
            coupler(1, 1.5, 7.6),
        ),
        (
            CouplingSpec(0, 1, k=0.02),
            CouplingSpec(1, 2, k=0.02),
            CouplingSpec(0, 2, k=0.002),
            CouplingSpec(0, 3, g=0.05),
            CouplingSpec(2, 3, g=0.04),  # long range under the snake
        ),
    )
    order = snake_order(device)
    h = build_mpo(device, order)
    expanded = mpo_to_dense(h)
    expected = dense_assembly(device, order)
    assert np.max(np.abs(expanded - expected)) <= 1e-12
    assert np.max(np.abs(expanded - expanded.conj().T)) <= 1e-12
    assert np.max(np.abs(np.diag(expanded).imag)) == 0.0


def test_mpo_bond_dimensions_follow_straddling_terms():
    device = chips.chip_2x2(calibrate=False)
    order = snake_order(device)
    h = build_mpo(device, order)
    terms = []
    for c in device.couplings:
        a, b = sorted((order.index_of[c.i], order.index_of[c.j]))
        terms.append((a, b))
    for bond in range(1, device.n_modes):
        straddle = sum(1 for a, b in terms if a < bond <= b)
        assert h.bond_dims[bond] == 2 + straddle


def test_bare_energy_under_decoupled_device_is_kerr_sum():
    device = DeviceSpec(
        (qubit(1, 1, 6.0), qubit(2, 1, 6.3, 0.25, 3), coupler(1.5, 1, 7.5)), ()
    )
    order = snake_order(device)
    h = build_mpo(device, order)
    occ = (1, 2, 1)
    chain = [device.modes[i] for i in order.chain]
    expected = sum(
        kerr_levels(m.omega, m.eta, m.local_dim)[n] for m, n in zip(chain, occ)
    )
    psi = from_bare_state(BareState(occ), h.local_dims)
    assert expectation(psi, h) == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------------------
# coupler off point


def test_coupler_off_fully_decoupled_returns_midpoint():
    device = DeviceSpec(
        (qubit(1, 1, 6.0), coupler(1.5, 1, 7.0), qubit(2, 1, 6.0)),
        (CouplingSpec(0, 1, g=0.0), CouplingSpec(1, 2, g=0.0), CouplingSpec(0, 2, g=0.0)),
    )
    off = coupler_off_frequency(device, 0, 2, 1, (6.5, 8.5))
    assert off.frequency == pytest.approx(7.5)
    assert off.residual_splitting <= 1e-12


def test_coupler_off_symmetric_motif():
    device = chips.qcq_motif()
    off = coupler_off_frequency(device, 0, 2, 1, chips.COUPLER_WINDOW)
    assert off.frequency > device.modes[0].omega
    assert off.residual_splitting <= 1e-5


def test_coupler_off_edges_exceed_minimum():
    from transmon_dmrg import oracle

    device = chips.qcq_motif()
    off = coupler_off_frequency(device, 0, 2, 1, chips.COUPLER_WINDOW)

    def splitting(omega_c):
        motif = device.with_mode_omega(1, omega_c)
        spec = oracle.diagonalize(motif)
        i = oracle.basis_index(motif.local_dims, (1, 0, 0))
        j = oracle.basis_index(motif.local_dims, (0, 0, 1))
        support = np.abs(spec.states[i, :]) ** 2 + np.abs(spec.states[j, :]) ** 2
        top2 = np.argsort(support)[-2:]
        return abs(spec.energies[top2[0]] - spec.energies[top2[1]])

    for edge in chips.COUPLER_WINDOW:
        assert splitting(edge) > off.residual_splitting


def test_coupler_off_invariant_under_qubit_relabeling():
    device = chips.qcq_motif()
    a = coupler_off_frequency(device, 0, 2, 1, chips.COUPLER_WINDOW)
    b = coupler_off_frequency(device, 2, 0, 1, chips.COUPLER_WINDOW)
    assert a.frequency == pytest.approx(b.frequency, abs=1e-9)


def test_coupler_off_monotone_window_raises():
    device = chips.qcq_motif()
    with pytest.raises(ValueError, match="monotone"):
        coupler_off_frequency(device, 0, 2, 1, (8.5, 9.5))


# ---------------------------------------------------------------------------
# device files


def test_device_round_trip(tmp_path):
    device = chips.qcq_motif()
    path = str(tmp_path / "device.json")
    save_device(device, path)
    loaded = load_device(path)
    assert loaded == device


def test_device_validation_names_offenders():
    doc = device_to_dict(chips.resonant_pair())
    doc["couplings"][0]["i"] = 7
    with pytest.raises(ValueError, match="missing mode"):
        device_from_dict(doc)
    doc2 = device_to_dict(chips.resonant_pair())
    del doc2["modes"][1]["omega_ghz"]
    with pytest.raises(ValueError, match="mode 1"):
        device_from_dict(doc2)
    doc3 = device_to_dict(chips.resonant_pair())
    doc3["couplings"][0]["k"] = 0.01  # both g and k now present
    with pytest.raises(ValueError, match="coupling 0"):
        device_from_dict(doc3)


def test_device_schema_guard():
    with pytest.raises(ValueError, match="schema"):
        device_from_dict({"schema": "nope", "modes": [], "couplings": []})


def test_coupling_validation():
    with pytest.raises(ValueError, match="exactly one"):
        CouplingSpec(0, 1, g=0.1, k=0.01)
    with pytest.raises(ValueError, match="differ"):
        CouplingSpec(1, 1, g=0.1)
    with pytest.raises(ValueError, match="outside"):
        CouplingSpec(0, 1, k=0.5)
    with pytest.raises(ValueError, match="duplicate"):
        DeviceSpec(
            (qubit(1, 1, 6.0), qubit(2, 1, 6.1)),
            (CouplingSpec(0, 1, g=0.1), CouplingSpec(1, 0, k=0.01)),
        )


def test_shipped_device_files_parse():
    for name in ("chip_2x2", "chip_3x3", "qcq_motif", "resonant_pair"):
        device = load_device(f"devices/{name}.json")
        assert device.n_modes >= 2
