"""Physics metrics over converged eigenstates.

Covers per-site localization profiles aggregated by Manhattan distance,
exchange-coupling extraction from avoided-crossing scans, ZZ coupling from
four dressed energies, and the state-dependence experiment that monitors a
target pair's couplings against the excitation state of an aggressor pair.

Metrics accept an *engine* callback producing dressed energies for a device
variant, so every experiment can run against the exact-diagonalization
oracle on desk-scale fixtures or against (MT)DMRG-X on large ones.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import mps as mps_mod
from . import oracle as oracle_mod
from .model import DeviceSpec, SnakeOrder, build_mpo, snake_order
from .mps import BareState, MatrixProductState
from .solver import SweepConfig, TargetSet, mtmps_target_energies

logger = logging.getLogger(__name__)

# An energy engine maps (device, target set) to the dressed energy of the
# state matched to each bare target, in target order.
EnergyEngine = Callable[[DeviceSpec, TargetSet], list[float]]


@dataclass
class LocalizationProfile:
    """Excitation weight of an eigenstate across the 2D lattice."""

    per_site: dict[tuple[float, float], float]
    center: tuple[float, float]
    by_distance: dict[float, float]  # Manhattan distance -> aggregated weight
    kind: str  # qubit | coupler (classification of the center site)


def localization_profile(
    psi: MatrixProductState, device: DeviceSpec, order: SnakeOrder
) -> LocalizationProfile:
    """Single-excitation support of a converged eigenstate per lattice site.

    Probabilities come from amplitudes against every single-excitation bare
    state; aggregation uses Manhattan distance on the physical coordinates
    (couplers keep their half-integer positions), not the chain order.
    """
    n = device.n_modes
    dims = psi.local_dims
    per_site: dict[tuple[float, float], float] = {}
    for mode_id, mode in enumerate(device.modes):
        pos = order.index_of[mode_id]
        occ = [0] * n
        occ[pos] = 1
        amp = mps_mod.amplitude(psi, BareState(tuple(occ)))
        per_site[mode.position] = float(abs(amp) ** 2)
    total = sum(per_site.values())
    if total > 1 + 1e-9:
        raise ValueError(f"single-excitation weight {total} exceeds 1")

    center_mode = max(range(n), key=lambda i: per_site[device.modes[i].position])
    center = device.modes[center_mode].position
    by_distance: dict[float, float] = {}
    for mode in device.modes:
        d = abs(mode.position[0] - center[0]) + abs(mode.position[1] - center[1])
        by_distance[d] = by_distance.get(d, 0.0) + per_site[mode.position]
    return LocalizationProfile(
        per_site=per_site,
        center=center,
        by_distance=dict(sorted(by_distance.items())),
        kind=device.modes[center_mode].kind,
    )


# ---------------------------------------------------------------------------
# energy engines


def _injective_best_matches(
    spectrum: oracle_mod.DenseSpectrum, bares: Sequence[BareState]
) -> list[int]:
    """Distinct eigenstate indices matched to the bare states by overlap."""
    rows = []
    for b in bares:
        row = spectrum.states[oracle_mod.basis_index(spectrum.local_dims, b.occupations), :]
        rows.append(np.abs(row) ** 2)
    ov = np.stack(rows)
    order = np.argsort(ov, axis=None)[::-1]
    taken_rows: set[int] = set()
    taken_cols: set[int] = set()
    out = [0] * len(bares)
    for pos in order:
        k, lam = np.unravel_index(pos, ov.shape)
        k, lam = int(k), int(lam)
        if k in taken_rows or lam in taken_cols:
            continue
        out[k] = lam
        taken_rows.add(k)
        taken_cols.add(lam)
        if len(taken_rows) == len(bares):
            break
    return out


def oracle_energy_engine() -> EnergyEngine:
    """Dressed energies from full dense diagonalization (small devices)."""

    def engine(device: DeviceSpec, targets: TargetSet) -> list[float]:
        spectrum = oracle_mod.diagonalize(device)
        indices = _injective_best_matches(spectrum, targets.states)
        return [float(spectrum.energies[i]) for i in indices]

    return engine


def solver_energy_engine(config: SweepConfig) -> EnergyEngine:
    """Dressed energies from an MTDMRG-X run over the target set."""

    def engine(device: DeviceSpec, targets: TargetSet) -> list[float]:
        return mtmps_target_energies(device, targets, config)

    return engine


def bare_with(
    device: DeviceSpec, order: SnakeOrder, occupations_by_mode: dict[int, int]
) -> BareState:
    """Chain-ordered bare state from a sparse { mode id: occupation } map."""
    occ = [0] * device.n_modes
    for mode_id, n in occupations_by_mode.items():
        occ[order.index_of[mode_id]] = int(n)
    return BareState(tuple(occ))


# ---------------------------------------------------------------------------
# exchange coupling g


@dataclass
class CouplingScan:
    """Avoided-crossing scan record; g is half the refined minimum detuning."""

    swept: np.ndarray  # bare frequencies of the swept qubit (GHz)
    detunings: np.ndarray  # dressed |omega_k - omega_l| per grid point (GHz)
    g: float
    refined_minimum: float
    minimum_at: float  # swept value at the refined minimum
    is_upper_bound: bool  # g fell below the grid-resolution floor


def extract_g(
    device: DeviceSpec,
    qubit_k: int,
    qubit_l: int,
    sweep: Sequence[float],
    engine: EnergyEngine,
    order: SnakeOrder | None = None,
) -> CouplingScan:
    """Exchange coupling from the minimum dressed detuning across a sweep.

    The bare frequency of ``qubit_k`` is swept over the grid; the two
    single-excitation dressed energies come from the engine callback and the
    minimum detuning is refined by a parabola through the sample minimum and
    its neighbors.  Raises when the minimum sits on a grid edge (the crossing
    is outside the sweep).
    """
    if order is None:
        order = snake_order(device)
    sweep = np.asarray(sweep, dtype=float)
    if sweep.size < 3:
        raise ValueError("need at least three sweep points")
    targets = TargetSet(
        (
            bare_with(device, order, {qubit_k: 1}),
            bare_with(device, order, {qubit_l: 1}),
        )
    )
    detunings = np.empty_like(sweep)
    for i, omega in enumerate(sweep):
        e_k, e_l = engine(device.with_mode_omega(qubit_k, float(omega)), targets)
        detunings[i] = abs(e_k - e_l)

    i_min = int(np.argmin(detunings))
    if i_min == 0 or i_min == sweep.size - 1:
        raise ValueError(
            f"no interior minimum: detuning minimum {detunings[i_min]:.3e} GHz sits at "
            f"the grid {'lower' if i_min == 0 else 'upper'} edge (crossing outside sweep)"
        )
    f_m, f_0, f_p = detunings[i_min - 1], detunings[i_min], detunings[i_min + 1]
    w_m, w_0, w_p = sweep[i_min - 1], sweep[i_min], sweep[i_min + 1]
    denom = f_m - 2.0 * f_0 + f_p
    if denom > 0:
        refined = float(f_0 - (f_p - f_m) ** 2 / (8.0 * denom))
        h = 0.5 * (w_p - w_m)
        at = float(w_0 - h * (f_p - f_m) / (2.0 * denom))
    else:
        refined, at = float(f_0), float(w_0)
    refined = min(max(refined, 0.0), float(f_0))
    floor = 0.25 * float(abs(w_p - w_m))
    g = 0.5 * refined
    return CouplingScan(
        swept=sweep,
        detunings=detunings,
        g=g,
        refined_minimum=refined,
        minimum_at=at,
        is_upper_bound=bool(g <= floor),
    )


def default_g_sweep(center: float, g_guess: float, points: int = 41) -> np.ndarray:
    """Sweep grid spanning +-10*g_guess around the partner frequency."""
    span = 10.0 * max(abs(g_guess), 1e-6)
    return np.linspace(center - span, center + span, points)


# ---------------------------------------------------------------------------
# ZZ coupling zeta


@dataclass
class ZZReport:
    """Four dressed energies and the assembled ZZ coupling (GHz)."""

    omega_00: float
    omega_01: float
    omega_10: float
    omega_11: float
    zeta: float
    subspaces: list[list[tuple[int, ...]]]  # groups of chain-ordered occupations

    def recompute(self) -> float:
        return (self.omega_11 - self.omega_01) - (self.omega_10 - self.omega_00)


def extract_zeta(
    device: DeviceSpec,
    qubit_k: int,
    qubit_l: int,
    spectator_config: dict[int, int] | None,
    engine: EnergyEngine,
    groups: Sequence[Sequence[BareState]] | None = None,
    order: SnakeOrder | None = None,
) -> ZZReport:
    """ZZ coupling zeta = (w11 - w01) - (w10 - w00) from dressed energies.

    Each group of bare states is resolved in one engine call (one MTDMRG-X
    run when hybridized); each dressed energy is assigned to the label of its
    bare target's (qubit_k, qubit_l) occupations, and a label covered by
    several aggressor branches takes their mean energy.  Default groups are
    the four single labels over the given spectator configuration.
    """
    if order is None:
        order = snake_order(device)
    spectators = dict(spectator_config or {})
    for q in (qubit_k, qubit_l):
        spectators.pop(q, None)

    if groups is None:
        groups = []
        for n_k, n_l in ((0, 0), (0, 1), (1, 0), (1, 1)):
            occ = dict(spectators)
            occ[qubit_k] = n_k
            occ[qubit_l] = n_l
            groups.append([bare_with(device, order, occ)])

    pos_k, pos_l = order.index_of[qubit_k], order.index_of[qubit_l]
    label_energies: dict[tuple[int, int], list[float]] = {}
    for group in groups:
        targets = TargetSet(tuple(group))
        energies = engine(device, targets)
        for b, e in zip(targets.states, energies):
            label = (b.occupations[pos_k], b.occupations[pos_l])
            if label not in ((0, 0), (0, 1), (1, 0), (1, 1)):
                raise ValueError(f"bare target carries a non-binary label {label}")
            label_energies.setdefault(label, []).append(float(e))

    missing = [lab for lab in ((0, 0), (0, 1), (1, 0), (1, 1)) if lab not in label_energies]
    if missing:
        raise ValueError(f"target subspaces do not cover labels {missing}")
    w00 = float(np.mean(label_energies[(0, 0)]))
    w01 = float(np.mean(label_energies[(0, 1)]))
    w10 = float(np.mean(label_energies[(1, 0)]))
    w11 = float(np.mean(label_energies[(1, 1)]))
    return ZZReport(
        omega_00=w00,
        omega_01=w01,
        omega_10=w10,
        omega_11=w11,
        zeta=(w11 - w01) - (w10 - w00),
        subspaces=[[b.occupations for b in g] for g in groups],
    )


# ---------------------------------------------------------------------------
# state-dependence experiment


def pair_distance(
    device: DeviceSpec,
    pair_a: tuple[int, int],
    pair_b: tuple[int, int],
    metric: str = "hops",
) -> float:
    """Distance between two qubit pairs.

    ``hops``: minimum Manhattan distance between any member of one pair and
    any member of the other (qubit hops on the lattice).  ``manhattan``:
    Manhattan distance between the pair centroids.  Both readings are
    reported in lattice units.
    """
    pos = lambda i: np.asarray(device.modes[i].position)
    if metric == "hops":
        return float(
            min(
                np.abs(pos(a) - pos(b)).sum()
                for a in pair_a
                for b in pair_b
            )
        )
    if metric == "manhattan":
        ca = 0.5 * (pos(pair_a[0]) + pos(pair_a[1]))
        cb = 0.5 * (pos(pair_b[0]) + pos(pair_b[1]))
        return float(np.abs(ca - cb).sum())
    raise ValueError(f"unknown distance metric {metric!r}")


def _g_subspaces(n_exc: int) -> list[list[tuple[int, int, int, int]]]:
    """Occupation patterns (aggr_1, aggr_2, targ_1, targ_2) for g estimation."""
    if n_exc == 0:
        return [[(0, 0, 1, 0), (0, 0, 0, 1)]]
    if n_exc == 1:
        return [[(1, 0, 1, 0), (0, 1, 1, 0), (1, 0, 0, 1), (0, 1, 0, 1)]]
    if n_exc == 2:
        return [[(1, 1, 1, 0), (1, 1, 0, 1)]]
    raise ValueError("n_exc must be 0, 1, or 2")


def _zeta_subspaces(n_exc: int) -> list[list[tuple[int, int, int, int]]]:
    """Occupation patterns for zeta estimation, grouped by resonant bracket."""
    if n_exc == 0:
        return [[(0, 0, 0, 0)], [(0, 0, 1, 0), (0, 0, 0, 1)], [(0, 0, 1, 1)]]
    if n_exc == 1:
        return [
            [(1, 0, 0, 0), (0, 1, 0, 0)],
            [(1, 0, 1, 0), (0, 1, 1, 0), (1, 0, 0, 1), (0, 1, 0, 1)],
            [(1, 0, 1, 1), (0, 1, 1, 1)],
        ]
    if n_exc == 2:
        return [[(1, 1, 0, 0)], [(1, 1, 1, 0), (1, 1, 0, 1)], [(1, 1, 1, 1)]]
    raise ValueError("n_exc must be 0, 1, or 2")


def _pattern_groups(
    device: DeviceSpec,
    order: SnakeOrder,
    aggressor_pair: tuple[int, int],
    target_pair: tuple[int, int],
    spectators: dict[int, int],
    patterns: list[list[tuple[int, int, int, int]]],
) -> list[list[BareState]]:
    groups = []
    for pattern_group in patterns:
        group = []
        for (na1, na2, nt1, nt2) in pattern_group:
            occ = dict(spectators)
            occ[aggressor_pair[0]] = na1
            occ[aggressor_pair[1]] = na2
            occ[target_pair[0]] = nt1
            occ[target_pair[1]] = nt2
            group.append(bare_with(device, order, occ))
        groups.append(group)
    return groups


def _g_from_groups(
    device: DeviceSpec,
    order: SnakeOrder,
    target_pair: tuple[int, int],
    groups: list[list[BareState]],
    engine: EnergyEngine,
) -> float:
    """Half the target-doublet splitting at the operating point.

    Dressed energies are grouped by the target part of their bare label;
    aggressor branches average out, isolating the target splitting.
    """
    pos_t1, pos_t2 = order.index_of[target_pair[0]], order.index_of[target_pair[1]]
    top, bottom = [], []
    for group in groups:
        targets = TargetSet(tuple(group))
        energies = engine(device, targets)
        for b, e in zip(targets.states, energies):
            t_label = (b.occupations[pos_t1], b.occupations[pos_t2])
            if t_label == (1, 0):
                top.append(float(e))
            elif t_label == (0, 1):
                bottom.append(float(e))
            else:
                raise ValueError(f"unexpected target label {t_label} in g subspace")
    return 0.5 * abs(float(np.mean(top)) - float(np.mean(bottom)))


def state_dependence_experiment(
    device: DeviceSpec,
    target_pair: tuple[int, int],
    aggressor_pair: tuple[int, int],
    detuning_grid: Sequence[float],
    n_exc_values: Sequence[int],
    engine: EnergyEngine,
    spectator_config: dict[int, int] | None = None,
    distance_metric: str = "hops",
    order: SnakeOrder | None = None,
) -> list[dict]:
    """Target-pair g and zeta versus aggressor detuning and excitation count.

    The device must already hold the operating configuration: target pair at
    its calibrated detuning, intra-pair couplings on, spectators off-resonant.
    For each grid detuning, both aggressor qubits are set resonant at
    (mean target frequency + detuning) and the target couplings are computed
    over the excitation-count subspaces; ``delta_g``/``delta_zeta`` are
    absolute differences from the zero-excitation reference at the same
    detuning.  Returns one result row per (detuning, n_exc).
    """
    if order is None:
        order = snake_order(device)
    spectators = dict(spectator_config or {})
    for q in (*target_pair, *aggressor_pair):
        spectators.pop(q, None)
    omega_t = 0.5 * (
        device.modes[target_pair[0]].omega + device.modes[target_pair[1]].omega
    )
    distance = pair_distance(device, target_pair, aggressor_pair, distance_metric)

    rows: list[dict] = []
    for detuning in detuning_grid:
        omega_a = omega_t + float(detuning)
        dev = device.with_mode_omega(aggressor_pair[0], omega_a)
        dev = dev.with_mode_omega(aggressor_pair[1], omega_a)

        ref_g = ref_zeta = None
        for n_exc in sorted(set([0, *n_exc_values])):
            g_groups = _pattern_groups(
                dev, order, aggressor_pair, target_pair, spectators, _g_subspaces(n_exc)
            )
            g_val = _g_from_groups(dev, order, target_pair, g_groups, engine)
            z_groups = _pattern_groups(
                dev, order, aggressor_pair, target_pair, spectators, _zeta_subspaces(n_exc)
            )
            zeta_val = extract_zeta(
                dev, target_pair[0], target_pair[1], spectators, engine,
                groups=z_groups, order=order,
            ).zeta
            if n_exc == 0:
                ref_g, ref_zeta = g_val, zeta_val
            if n_exc not in n_exc_values and n_exc == 0:
                continue
            rows.append(
                {
                    "distance": distance,
                    "distance_metric": distance_metric,
                    "detuning_ghz": float(detuning),
                    "n_exc": int(n_exc),
                    "g_ghz": float(g_val),
                    "zeta_ghz": float(zeta_val),
                    "delta_g_ghz": float(abs(g_val - ref_g)),
                    "delta_zeta_ghz": float(abs(zeta_val - ref_zeta)),
                }
            )
    return rows


# ---------------------------------------------------------------------------
# result emission


def write_rows_csv(path: str, rows: Iterable[dict]) -> None:
    rows = list(rows)
    if not rows:
        with open(path, "w", newline="") as f:
            f.write("")
        return
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def write_rows_json(path: str, rows: Iterable[dict]) -> None:
    with open(path, "w") as f:
        json.dump(list(rows), f, indent=2)
        f.write("\n")
