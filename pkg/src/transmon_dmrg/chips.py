"""Preset device builders for demos, tests, and the shipped device files.

Frequencies follow typical circuit-QED operating points: qubits sampled in
the 6-6.6 GHz band (fixed RNG seed, so the shipped fixtures are stable),
couplers calibrated to their off points above the qubit band.  Stray diagonal
couplings carry explicit user-set efficiencies; nothing is inferred.
"""

from __future__ import annotations

import numpy as np

from .model import (
    CouplingSpec,
    DeviceSpec,
    ModeSpec,
    coupler_off_frequency,
)

QUBIT_BAND = (6.0, 6.6)
QUBIT_ETA = 0.20
COUPLER_ETA = 0.12
QUBIT_DIM = 4
COUPLER_DIM = 3
K_QUBIT_COUPLER = 0.02
K_QUBIT_QUBIT = 0.002
COUPLER_WINDOW = (6.3, 9.5)


def resonant_pair(
    g: float = 0.01, omega: float = 6.0, delta: float = 0.0,
    eta: float = QUBIT_ETA, d: int = QUBIT_DIM,
) -> DeviceSpec:
    """Two directly coupled qubits at detuning delta."""
    modes = (
        ModeSpec("qubit", (1.0, 1.0), omega, eta, d),
        ModeSpec("qubit", (2.0, 1.0), omega + delta, eta, d),
    )
    return DeviceSpec(modes, (CouplingSpec(0, 1, g=g),))


def dispersive_pair(
    omega_1: float = 6.0, omega_2: float = 6.25, g: float = 0.02,
    eta: float = QUBIT_ETA, d: int = QUBIT_DIM,
) -> DeviceSpec:
    """Two detuned qubits; the anharmonicity gives a nonzero ZZ interaction."""
    modes = (
        ModeSpec("qubit", (1.0, 1.0), omega_1, eta, d),
        ModeSpec("qubit", (2.0, 1.0), omega_2, eta, d),
    )
    return DeviceSpec(modes, (CouplingSpec(0, 1, g=g),))


def qcq_motif(
    omega_q: float = 6.0,
    omega_c: float = 7.6,
    k_qc: float = K_QUBIT_COUPLER,
    k_qq: float = K_QUBIT_QUBIT,
    d_q: int = QUBIT_DIM,
    d_c: int = COUPLER_DIM,
) -> DeviceSpec:
    """Qubit-coupler-qubit motif with direct and mediated coupling paths."""
    modes = (
        ModeSpec("qubit", (1.0, 1.0), omega_q, QUBIT_ETA, d_q),
        ModeSpec("coupler", (1.5, 1.0), omega_c, COUPLER_ETA, d_c),
        ModeSpec("qubit", (2.0, 1.0), omega_q, QUBIT_ETA, d_q),
    )
    couplings = (
        CouplingSpec(0, 1, k=k_qc),
        CouplingSpec(1, 2, k=k_qc),
        CouplingSpec(0, 2, k=k_qq),
    )
    return DeviceSpec(modes, couplings)


def detuned_chain(
    n: int = 7,
    base: float = 6.0,
    spread: float = 0.6,
    k_nn: float = 0.004,
    d: int = QUBIT_DIM,
    seed: int = 11,
) -> DeviceSpec:
    """1D qubit chain with randomized detunings and nearest-neighbor coupling."""
    rng = np.random.default_rng(seed)
    freqs = base + spread * rng.random(n)
    modes = tuple(
        ModeSpec("qubit", (float(x + 1), 1.0), float(freqs[x]), QUBIT_ETA, d)
        for x in range(n)
    )
    couplings = tuple(CouplingSpec(x, x + 1, k=k_nn) for x in range(n - 1))
    return DeviceSpec(modes, couplings)


# Frequencies chosen so the ladder targets |1...10...0> with 1-4 excitations
# sit >= 70 MHz away from every other bare state up to 5 excitations: far
# beyond the ~12 MHz couplings, so each target stays a clean localized state.
WORK_SCALING_FREQS = (6.033, 6.325, 6.713, 7.074, 7.277, 7.336, 7.378)


def work_scaling_chain(k_nn: float = 0.004, d: int = 3) -> DeviceSpec:
    """7-qubit chain whose 1-4 excitation ladder targets are non-resonant."""
    modes = tuple(
        ModeSpec("qubit", (float(x + 1), 1.0), w, QUBIT_ETA, d)
        for x, w in enumerate(WORK_SCALING_FREQS)
    )
    couplings = tuple(CouplingSpec(x, x + 1, k=k_nn) for x in range(6))
    return DeviceSpec(modes, couplings)


def grid_chip(
    rows: int,
    cols: int,
    seed: int = 23,
    k_qc: float = K_QUBIT_COUPLER,
    k_qq: float = K_QUBIT_QUBIT,
    stray_k: float = 0.0,
    calibrate: bool = True,
) -> DeviceSpec:
    """rows x cols qubit grid with a coupler on every edge.

    Qubit frequencies are sampled in the 6-6.6 GHz band with the given seed.
    Each coupler carries efficiency ``k_qc`` to both its qubits and the qubit
    pair keeps a direct ``k_qq``; with ``calibrate`` the coupler frequencies
    are set to their computed off points (one isolated q-c-q calibration per
    edge), otherwise they start at the window midpoint.  ``stray_k`` adds
    explicit diagonal qubit-qubit couplings inside every plaquette.
    """
    rng = np.random.default_rng(seed)
    modes: list[ModeSpec] = []
    qubit_at: dict[tuple[int, int], int] = {}
    for y in range(1, rows + 1):
        for x in range(1, cols + 1):
            qubit_at[(x, y)] = len(modes)
            omega = float(QUBIT_BAND[0] + (QUBIT_BAND[1] - QUBIT_BAND[0]) * rng.random())
            modes.append(ModeSpec("qubit", (float(x), float(y)), omega, QUBIT_ETA, QUBIT_DIM))

    omega_c0 = 0.5 * (COUPLER_WINDOW[0] + COUPLER_WINDOW[1])
    couplings: list[CouplingSpec] = []
    coupler_edges: list[tuple[int, int, int]] = []  # (qubit_i, qubit_j, coupler)
    for (x, y), qi in sorted(qubit_at.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        for dx, dy in ((1, 0), (0, 1)):
            if (x + dx, y + dy) not in qubit_at:
                continue
            qj = qubit_at[(x + dx, y + dy)]
            c = len(modes)
            modes.append(
                ModeSpec(
                    "coupler",
                    (x + 0.5 * dx, y + 0.5 * dy),
                    omega_c0,
                    COUPLER_ETA,
                    COUPLER_DIM,
                )
            )
            couplings.append(CouplingSpec(qi, c, k=k_qc))
            couplings.append(CouplingSpec(c, qj, k=k_qc))
            couplings.append(CouplingSpec(qi, qj, k=k_qq))
            coupler_edges.append((qi, qj, c))
    if stray_k > 0:
        for (x, y), qi in sorted(qubit_at.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            for dx, dy in ((1, 1), (1, -1)):
                if (x + dx, y + dy) in qubit_at:
                    couplings.append(CouplingSpec(qi, qubit_at[(x + dx, y + dy)], k=stray_k))

    device = DeviceSpec(tuple(modes), tuple(couplings))
    if calibrate:
        for qi, qj, c in coupler_edges:
            off = coupler_off_frequency(device, qi, qj, c, COUPLER_WINDOW)
            device = device.with_mode_omega(c, off.frequency)
    return device


def chip_2x2(seed: int = 23, calibrate: bool = True) -> DeviceSpec:
    """2x2 qubit grid with 4 couplers (8 modes, dense dimension 20736)."""
    return grid_chip(2, 2, seed=seed, calibrate=calibrate)


def chip_3x3(seed: int = 29, stray_k: float = 2e-4, calibrate: bool = True) -> DeviceSpec:
    """3x3 qubit grid with 12 couplers (21 modes) and explicit stray diagonals."""
    return grid_chip(3, 3, seed=seed, stray_k=stray_k, calibrate=calibrate)


def paired_columns_chip(
    cols: int = 4,
    intra_g: float = 0.01,
    inter_k: float = 0.004,
    seed: int = 31,
    d: int = QUBIT_DIM,
) -> DeviceSpec:
    """2 x cols qubit grid of vertical pairs for state-dependence studies.

    Each column is a vertical qubit pair with a direct intra-pair coupling
    (coupler already absorbed into an effective g); adjacent columns are
    linked by weak horizontal couplings on both rows.  Spectator columns are
    detuned away from the first column's operating frequency.
    """
    rng = np.random.default_rng(seed)
    modes: list[ModeSpec] = []
    for x in range(1, cols + 1):
        base = 6.0 if x == 1 else 6.3 + 0.08 * float(rng.integers(0, 4)) + 0.02 * x
        modes.append(ModeSpec("qubit", (float(x), 1.0), base, QUBIT_ETA, d))
        modes.append(ModeSpec("qubit", (float(x), 2.0), base, QUBIT_ETA, d))

    def qid(x: int, row: int) -> int:
        return 2 * (x - 1) + (row - 1)

    couplings = []
    for x in range(1, cols + 1):
        couplings.append(CouplingSpec(qid(x, 1), qid(x, 2), g=intra_g))
    for x in range(1, cols):
        couplings.append(CouplingSpec(qid(x, 1), qid(x + 1, 1), k=inter_k))
        couplings.append(CouplingSpec(qid(x, 2), qid(x + 1, 2), k=inter_k))
    return DeviceSpec(tuple(modes), tuple(couplings))
