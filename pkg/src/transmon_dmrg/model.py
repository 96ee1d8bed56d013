"""Circuit-QED device models: transmon lattices mapped to MPO Hamiltonians.

A device is a 2D arrangement of weakly anharmonic (Kerr) modes, qubits on
integer lattice positions and couplers on half-integer ones, joined by a
weighted capacitive-coupling graph.  The device Hamiltonian (units of GHz,
hbar = 1) is

    H = sum_i [ omega_i n_i - (eta_i/2) n_i (n_i - 1) ]
      + sum_{i,j} g_ij (a_i + a_i^dag)(a_j + a_j^dag)

and is encoded as an MPO over a boustrophedon ("snake") ordering of the 2D
lattice, with long-range terms carried by identity channels of a
finite-state automaton between their endpoints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mps import MatrixProductOperator

DEVICE_SCHEMA = "device-v1"


@dataclass(frozen=True)
class ModeSpec:
    """One transmon mode: a qubit or a coupler."""

    kind: str
    position: tuple[float, float]
    omega: float
    eta: float
    local_dim: int

    def __post_init__(self):
        if self.kind not in ("qubit", "coupler"):
            raise ValueError(f"mode kind must be 'qubit' or 'coupler', got {self.kind!r}")
        if self.omega <= 0:
            raise ValueError(f"mode frequency must be positive, got {self.omega}")
        if self.eta < 0:
            raise ValueError(f"anharmonicity must be >= 0, got {self.eta}")
        if self.local_dim < 2:
            raise ValueError(f"local dimension must be >= 2, got {self.local_dim}")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))


@dataclass(frozen=True)
class CouplingSpec:
    """Capacitive coupling between modes i and j.

    Exactly one of ``g`` (strength, GHz) or ``k`` (dimensionless efficiency)
    is given; an efficiency resolves to g = k * sqrt(omega_i * omega_j) / 2
    against the current mode frequencies.
    """

    i: int
    j: int
    g: float | None = None
    k: float | None = None

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError(f"coupling endpoints must differ, got {self.i}")
        if (self.g is None) == (self.k is None):
            raise ValueError(f"coupling ({self.i},{self.j}): give exactly one of g or k")
        if self.k is not None and not 0 <= self.k < 0.2:
            raise ValueError(f"coupling efficiency k={self.k} outside [0, 0.2)")


@dataclass(frozen=True)
class DeviceSpec:
    """A lattice of modes plus its coupling graph."""

    modes: tuple[ModeSpec, ...]
    couplings: tuple[CouplingSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        n = len(self.modes)
        seen_pairs = set()
        for c in self.couplings:
            if not (0 <= c.i < n and 0 <= c.j < n):
                raise ValueError(f"coupling ({c.i},{c.j}) references a missing mode")
            pair = frozenset((c.i, c.j))
            if pair in seen_pairs:
                raise ValueError(f"duplicate coupling between modes {c.i} and {c.j}")
            seen_pairs.add(pair)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def local_dims(self) -> tuple[int, ...]:
        return tuple(m.local_dim for m in self.modes)

    def coupling_strength(self, c: CouplingSpec) -> float:
        if c.g is not None:
            return float(c.g)
        return coupling_g(c.k, self.modes[c.i].omega, self.modes[c.j].omega)

    def with_mode_omega(self, mode_id: int, omega: float) -> "DeviceSpec":
        """A copy with one mode retuned; couplings stay in their given form."""
        modes = list(self.modes)
        m = modes[mode_id]
        modes[mode_id] = ModeSpec(m.kind, m.position, omega, m.eta, m.local_dim)
        return DeviceSpec(tuple(modes), self.couplings)

    def restricted_to(self, mode_ids: Sequence[int]) -> "DeviceSpec":
        """Sub-device over the listed modes, keeping couplings among them."""
        idx = {old: new for new, old in enumerate(mode_ids)}
        modes = tuple(self.modes[i] for i in mode_ids)
        couplings = tuple(
            CouplingSpec(idx[c.i], idx[c.j], c.g, c.k)
            for c in self.couplings
            if c.i in idx and c.j in idx
        )
        return DeviceSpec(modes, couplings)


@dataclass(frozen=True)
class SnakeOrder:
    """Bijection between 2D mode ids and 1D chain positions."""

    chain: tuple[int, ...]  # chain position -> mode id
    index_of: tuple[int, ...] = field(default=None)  # mode id -> chain position

    def __post_init__(self):
        n = len(self.chain)
        if sorted(self.chain) != list(range(n)):
            raise ValueError("snake order must be a permutation of mode ids")
        inv = [0] * n
        for pos, mode in enumerate(self.chain):
            inv[mode] = pos
        object.__setattr__(self, "index_of", tuple(inv))


# ---------------------------------------------------------------------------
# closed-form parameter maps


def kerr_levels(omega: float, eta: float, d: int) -> np.ndarray:
    """Kerr-ladder energies E_n = omega*n - (eta/2)*n*(n-1) for n = 0..d-1."""
    if d < 2:
        raise ValueError("need at least two levels")
    n = np.arange(d, dtype=float)
    return omega * n - 0.5 * eta * n * (n - 1)


def transmon_params(e_c: float, e_j: float) -> tuple[float, float]:
    """Kerr parameters of a transmon: omega = sqrt(8*E_C*E_J) - E_C, eta = E_C."""
    if e_c <= 0 or e_j <= 0:
        raise ValueError("transmon energies must be positive")
    ratio = e_j / e_c
    if ratio < 20:
        raise ValueError(
            f"E_J/E_C = {ratio:.2f} is outside the transmon regime (need >= 20)"
        )
    return math.sqrt(8.0 * e_c * e_j) - e_c, e_c


def coupling_g(k_ij: float, omega_i: float, omega_j: float) -> float:
    """Coupling strength from an efficiency: g = k * sqrt(omega_i*omega_j) / 2."""
    if omega_i <= 0 or omega_j <= 0:
        raise ValueError("mode frequencies must be positive")
    return 0.5 * k_ij * math.sqrt(omega_i * omega_j)


def charge_coupling_g(
    k_ij: float, e_ci: float, e_cj: float, xi_i: float, xi_j: float
) -> float:
    """Charge-basis coupling strength g = 8*k*sqrt(E_Ci*E_Cj) / (4*sqrt(xi_i*xi_j)).

    Consistent with :func:`coupling_g` up to the -E_C correction in the mode
    frequency, with xi = sqrt(2*E_C/E_J) the impedance-like parameter.
    """
    if min(e_ci, e_cj, xi_i, xi_j) <= 0:
        raise ValueError("inputs must be positive")
    return 8.0 * k_ij * math.sqrt(e_ci * e_cj) / (4.0 * math.sqrt(xi_i * xi_j))


def impedance_xi(e_c: float, e_j: float) -> float:
    """xi = sqrt(2*E_C/E_J)."""
    return math.sqrt(2.0 * e_c / e_j)


# ---------------------------------------------------------------------------
# snake ordering


def snake_order(device: DeviceSpec) -> SnakeOrder:
    """Boustrophedon ordering of the 2D lattice into a 1D chain.

    Rows (fixed y) are walked in ascending y with alternating x direction;
    same-row couplers sit between the qubits they connect, and coupler-only
    rows between two qubit rows are emitted in the direction of the row just
    finished, which places the turning-column coupler adjacent to its qubits.
    """
    positions = [m.position for m in device.modes]
    if len(set(positions)) != len(positions):
        raise ValueError("modes must occupy distinct positions")
    by_row: dict[float, list[int]] = {}
    for i, m in enumerate(device.modes):
        by_row.setdefault(m.position[1], []).append(i)

    chain: list[int] = []
    direction = 1
    for y in sorted(by_row):
        group = sorted(by_row[y], key=lambda i: device.modes[i].position[0])
        has_qubit = any(device.modes[i].kind == "qubit" for i in group)
        if has_qubit:
            chain.extend(group if direction > 0 else group[::-1])
            direction = -direction
        else:
            # coupler-only row: use the direction of the qubit row just walked
            prev = -direction
            chain.extend(group if prev > 0 else group[::-1])
    return SnakeOrder(tuple(chain))


# ---------------------------------------------------------------------------
# MPO construction (finite-state automaton)


def _lowering(d: int) -> np.ndarray:
    a = np.zeros((d, d), dtype=complex)
    for n in range(1, d):
        a[n - 1, n] = math.sqrt(n)
    return a


def quadrature(d: int) -> np.ndarray:
    """(a + a^dag) truncated to d levels."""
    a = _lowering(d)
    return a + a.conj().T


def build_mpo(device: DeviceSpec, order: SnakeOrder | None = None) -> MatrixProductOperator:
    """Device Hamiltonian as an MPO over the snake-ordered chain.

    One automaton channel is kept in flight per coupling whose endpoints
    straddle a bond, so the MPO bond dimension at any cut is exactly
    2 + (number of straddling couplings).
    """
    if order is None:
        order = snake_order(device)
    n = device.n_modes
    chain_modes = [device.modes[i] for i in order.chain]
    dims = [m.local_dim for m in chain_modes]

    terms = []  # (left chain pos, right chain pos, strength)
    for c in device.couplings:
        a, b = order.index_of[c.i], order.index_of[c.j]
        if a > b:
            a, b = b, a
        terms.append((a, b, device.coupling_strength(c)))

    # channel layout per bond; bond x sits between sites x-1 and x
    channels: list[dict] = []
    for bond in range(n + 1):
        if bond == 0:
            channels.append({"ready": 0})
        elif bond == n:
            channels.append({"done": 0})
        else:
            ch = {"ready": 0, "done": 1}
            for t_id, (a, b, _) in enumerate(terms):
                if a < bond <= b:
                    ch[t_id] = len(ch)
            channels.append(ch)

    sites = []
    for x in range(n):
        d = dims[x]
        lch, rch = channels[x], channels[x + 1]
        w = np.zeros((len(lch), d, d, len(rch)), dtype=complex)
        ident = np.eye(d, dtype=complex)
        kerr = np.diag(kerr_levels(chain_modes[x].omega, chain_modes[x].eta, d)).astype(complex)
        q = quadrature(d)
        if "ready" in lch and "ready" in rch:
            w[lch["ready"], :, :, rch["ready"]] = ident
        if "done" in lch and "done" in rch:
            w[lch["done"], :, :, rch["done"]] = ident
        if "ready" in lch and "done" in rch:
            w[lch["ready"], :, :, rch["done"]] += kerr
        for t_id, (a, b, g) in enumerate(terms):
            if a == x:
                w[lch["ready"], :, :, rch[t_id]] = g * q
            if a < x < b:
                w[lch[t_id], :, :, rch[t_id]] = ident
            if b == x:
                w[lch[t_id], :, :, rch["done"]] = q
        sites.append(w)
    return MatrixProductOperator(sites)


def chain_local_dims(device: DeviceSpec, order: SnakeOrder) -> tuple[int, ...]:
    return tuple(device.modes[i].local_dim for i in order.chain)


# ---------------------------------------------------------------------------
# tunable-coupler off-point calibration


@dataclass(frozen=True)
class CouplerOffPoint:
    """Result of an off-point search: frequency and the residual splitting there."""

    frequency: float
    residual_splitting: float


def _golden_min(f: Callable[[float], float], a: float, b: float, xtol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def coupler_off_frequency(
    device: DeviceSpec,
    qubit_i: int,
    qubit_j: int,
    coupler_c: int,
    search_window: tuple[float, float],
    grid_points: int = 50,
    xtol: float = 5e-7,
) -> CouplerOffPoint:
    """Coupler frequency nulling the qubit-qubit exchange on an isolated q-c-q motif.

    Both qubits are set mutually resonant (at the mean of their frequencies)
    for the calibration; the splitting of the two qubit-like single-excitation
    levels of the isolated 3-mode Hamiltonian is minimized over the window by
    a coarse grid followed by golden-section refinement.

    Raises:
        ValueError: if the splitting is monotone over the window (no interior
            minimum), with the edge values in the diagnostic.
    """
    from . import oracle  # local import; oracle builds dense Hamiltonians from devices

    mi, mj, mc = device.modes[qubit_i], device.modes[qubit_j], device.modes[coupler_c]
    if mi.kind != "qubit" or mj.kind != "qubit" or mc.kind != "coupler":
        raise ValueError("expected two qubits and one coupler")
    motif = device.restricted_to([qubit_i, coupler_c, qubit_j])
    pairs = {frozenset((c.i, c.j)) for c in motif.couplings}
    if frozenset((0, 1)) not in pairs or frozenset((1, 2)) not in pairs:
        raise ValueError("modes do not form a q-c-q motif (missing qubit-coupler coupling)")
    omega_q = 0.5 * (mi.omega + mj.omega)
    motif = motif.with_mode_omega(0, omega_q).with_mode_omega(2, omega_q)

    dim = int(np.prod(motif.local_dims))
    bare_i = oracle.basis_index(motif.local_dims, (1, 0, 0))
    bare_j = oracle.basis_index(motif.local_dims, (0, 0, 1))

    def splitting(omega_c: float) -> float:
        h = oracle.dense_hamiltonian(motif.with_mode_omega(1, omega_c))
        energies, states = np.linalg.eigh(h)
        support = np.abs(states[bare_i, :]) ** 2 + np.abs(states[bare_j, :]) ** 2
        top2 = np.argsort(support)[-2:]
        return float(abs(energies[top2[0]] - energies[top2[1]]))

    lo, hi = float(search_window[0]), float(search_window[1])
    if not lo < hi:
        raise ValueError(f"invalid search window ({lo}, {hi})")
    grid = np.linspace(lo, hi, grid_points)
    values = np.array([splitting(w) for w in grid])

    if float(values.max() - values.min()) < 1e-12:
        mid = 0.5 * (lo + hi)
        return CouplerOffPoint(mid, splitting(mid))
    i_min = int(np.argmin(values))
    if i_min == 0 or i_min == grid_points - 1:
        raise ValueError(
            "splitting is monotone over the window (minimum at the "
            f"{'lower' if i_min == 0 else 'upper'} edge; "
            f"edges give {values[0]:.3e} and {values[-1]:.3e} GHz)"
        )
    freq = _golden_min(splitting, float(grid[i_min - 1]), float(grid[i_min + 1]), xtol)
    return CouplerOffPoint(freq, splitting(freq))


# ---------------------------------------------------------------------------
# device description files


def device_to_dict(device: DeviceSpec) -> dict:
    doc = {"schema": DEVICE_SCHEMA, "modes": [], "couplings": []}
    for m in device.modes:
        doc["modes"].append(
            {
                "kind": m.kind,
                "position": list(m.position),
                "omega_ghz": m.omega,
                "eta_ghz": m.eta,
                "local_dim": m.local_dim,
            }
        )
    for c in device.couplings:
        entry: dict = {"i": c.i, "j": c.j}
        if c.g is not None:
            entry["g_ghz"] = c.g
        else:
            entry["k"] = c.k
        doc["couplings"].append(entry)
    return doc


def device_from_dict(doc: dict) -> DeviceSpec:
    if doc.get("schema") != DEVICE_SCHEMA:
        raise ValueError(f"unsupported device schema {doc.get('schema')!r}")
    modes = []
    for idx, m in enumerate(doc.get("modes", [])):
        try:
            modes.append(
                ModeSpec(
                    kind=m["kind"],
                    position=tuple(m["position"]),
                    omega=float(m["omega_ghz"]),
                    eta=float(m["eta_ghz"]),
                    local_dim=int(m["local_dim"]),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"mode {idx}: {exc}") from exc
    couplings = []
    for idx, c in enumerate(doc.get("couplings", [])):
        try:
            couplings.append(
                CouplingSpec(
                    i=int(c["i"]),
                    j=int(c["j"]),
                    g=float(c["g_ghz"]) if "g_ghz" in c else None,
                    k=float(c["k"]) if "k" in c else None,
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"coupling {idx}: {exc}") from exc
    try:
        return DeviceSpec(tuple(modes), tuple(couplings))
    except ValueError as exc:
        raise ValueError(f"device validation failed: {exc}") from exc


def load_device(path: str) -> DeviceSpec:
    with open(path) as f:
        doc = json.load(f)
    return device_from_dict(doc)


def save_device(device: DeviceSpec, path: str) -> None:
    with open(path, "w") as f:
        json.dump(device_to_dict(device), f, indent=2)
        f.write("\n")
