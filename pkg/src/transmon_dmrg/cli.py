"""Batch command-line front end.

Subcommands:

* ``validate <devicefile>``            - parse and validate a device description.
* ``targets <devicefile> --band N``    - enumerate bare states of a band.
* ``run <jobfile>``                    - execute a job (solver runs, metric
                                         scans, oracle checks) and write
                                         reports, tables, and checkpoints.

Jobs are JSON documents with a versioned ``schema`` field; all energies are
GHz.  Outputs are deterministic given (job, seed): independent targets are
dispatched to a bounded worker pool and results are ordered by target index.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis, mps as mps_mod, oracle as oracle_mod
from .model import DeviceSpec, SnakeOrder, build_mpo, load_device, snake_order
from .mps import BareState, from_bare_state, mtmps_from_bare_states
from .solver import SweepConfig, TargetSet, random_mps, run_sweeps

logger = logging.getLogger(__name__)

JOB_SCHEMA = "job-v1"
TASKS = (
    "ground",
    "excited_ortho",
    "multiband",
    "dmrgx",
    "mtdmrgx",
    "localization",
    "g_scan",
    "zeta",
    "state_dependence",
    "oracle_check",
)


@dataclass
class JobSpec:
    """Parsed job file."""

    device_path: str
    task: str
    output_dir: str
    seed: int = 0
    parallelism: int = 1
    targets: list[BareState] = field(default_factory=list)
    target_sets: list[TargetSet] = field(default_factory=list)
    sweep: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    checkpoint_dir: str | None = None

    @staticmethod
    def from_dict(doc: dict, base_dir: str = ".") -> "JobSpec":
        if doc.get("schema") != JOB_SCHEMA:
            raise ValueError(f"unsupported job schema {doc.get('schema')!r}")
        task = doc.get("task")
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
        device_path = doc.get("device")
        if not device_path:
            raise ValueError("job is missing the 'device' field")
        if not os.path.isabs(device_path):
            device_path = str(Path(base_dir) / device_path)
        targets = [BareState(tuple(t)) for t in doc.get("targets", [])]
        target_sets = [
            TargetSet(tuple(BareState(tuple(t)) for t in group))
            for group in doc.get("target_sets", [])
        ]
        output_dir = doc.get("output_dir", "out")
        if not os.path.isabs(output_dir):
            output_dir = str(Path(base_dir) / output_dir)
        return JobSpec(
            device_path=device_path,
            task=task,
            output_dir=output_dir,
            seed=int(doc.get("seed", 0)),
            parallelism=int(doc.get("parallelism", 1)),
            targets=targets,
            target_sets=target_sets,
            sweep=dict(doc.get("sweep", {})),
            options=dict(doc.get("options", {})),
        )


def load_job(path: str) -> JobSpec:
    with open(path) as f:
        doc = json.load(f)
    return JobSpec.from_dict(doc, base_dir=str(Path(path).parent))


def _sweep_config(spec: JobSpec, seed_offset: int = 0) -> SweepConfig:
    kwargs = dict(spec.sweep)
    kwargs.setdefault("seed", spec.seed)
    kwargs["seed"] = int(kwargs["seed"]) + seed_offset
    return SweepConfig(**kwargs)


def list_targets(device: DeviceSpec, band: int, kind: str = "all") -> list[BareState]:
    """All bare states with total excitation count ``band`` (chain order).

    ``kind`` restricts the excited sites to qubits or couplers only.
    """
    if band < 1:
        raise ValueError("band must be >= 1")
    order = snake_order(device)
    dims = [device.modes[i].local_dim for i in order.chain]
    kinds = [device.modes[i].kind for i in order.chain]
    out: list[BareState] = []

    def walk(x: int, remaining: int, occ: list[int]):
        if x == len(dims):
            if remaining == 0:
                out.append(BareState(tuple(occ)))
            return
        for n_x in range(0, min(dims[x] - 1, remaining) + 1):
            if n_x > 0 and kind != "all" and kinds[x] != kind:
                continue
            occ.append(n_x)
            walk(x + 1, remaining - n_x, occ)
            occ.pop()

    walk(0, band, [])
    return out


# ---------------------------------------------------------------------------
# task runners


def _engine_for(spec: JobSpec, config: SweepConfig):
    name = spec.options.get("engine", "solver")
    if name == "oracle":
        return analysis.oracle_energy_engine()
    if name == "solver":
        return analysis.solver_energy_engine(config)
    raise ValueError(f"unknown engine {name!r}")


def _dispatch(spec: JobSpec, jobs: list) -> list:
    """Run callables on a bounded pool; results ordered by submission index."""
    width = spec.parallelism
    env = os.environ.get("TRANSMON_DMRG_THREADS")
    if env:
        width = int(env)
    width = max(1, width)
    if width == 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with concurrent.futures.ThreadPoolExecutor(max_workers=width) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def _solver_row(index: int, label, report) -> dict:
    return {
        "target": index,
        "label": str(label),
        "energy_ghz": report.final_energies[0] if report.final_energies else float("nan"),
        "variance_ghz2": report.final_variances[0] if report.final_variances else float("nan"),
        "converged": bool(report.converged),
        "sweeps": report.n_sweeps,
        "heff_applications": report.heff_applications,
        "error": "",
    }


def _error_row(index: int, label, exc: Exception) -> dict:
    return {
        "target": index,
        "label": str(label),
        "energy_ghz": float("nan"),
        "variance_ghz2": float("nan"),
        "converged": False,
        "sweeps": 0,
        "heff_applications": 0,
        "error": f"{type(exc).__name__}: {exc}",
    }


def _checkpoint_path(spec: JobSpec, name: str) -> str | None:
    if not spec.checkpoint_dir:
        return None
    Path(spec.checkpoint_dir).mkdir(parents=True, exist_ok=True)
    return str(Path(spec.checkpoint_dir) / f"{name}.mpsc")


def _run_ground(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    h = build_mpo(device, order)
    config = _sweep_config(spec)
    rng = np.random.default_rng(config.seed)
    psi0 = random_mps(h.local_dims, min(config.chi_max, 8), rng)
    psi, report = run_sweeps(
        "dmrg", psi0, h, config, checkpoint_path=_checkpoint_path(spec, "ground")
    )
    (out / "report_ground.json").write_text(report.to_json() + "\n")
    analysis.write_rows_csv(str(out / "energies.csv"), [_solver_row(0, "ground", report)])
    return report.converged


def _run_excited_ortho(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    n_states = int(spec.options.get("n_states", 2))
    h = build_mpo(device, order)
    found = []
    rows = []
    ok = True
    for m in range(n_states):
        config = _sweep_config(spec, seed_offset=m)
        config.ortho_states = tuple(found)
        rng = np.random.default_rng(config.seed)
        psi0 = random_mps(h.local_dims, min(config.chi_max, 8), rng)
        strategy = "dmrg" if m == 0 else "dmrg_ortho"
        psi, report = run_sweeps(
            strategy, psi0, h, config, checkpoint_path=_checkpoint_path(spec, f"state_{m}")
        )
        found.append(psi)
        rows.append(_solver_row(m, f"state_{m}", report))
        (out / f"report_state_{m}.json").write_text(report.to_json() + "\n")
        ok = ok and report.converged
    analysis.write_rows_csv(str(out / "energies.csv"), rows)
    analysis.write_rows_json(str(out / "energies.json"), rows)
    return ok


def _run_multiband(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    h = build_mpo(device, order)
    config = _sweep_config(spec)
    if spec.target_sets:
        seeds = spec.target_sets[0].states
    else:
        band = int(spec.options.get("band", 1))
        seeds = tuple([BareState((0,) * device.n_modes)] + list_targets(device, band))
    gamma = mtmps_from_bare_states(seeds, h.local_dims)
    _, report = run_sweeps(
        "mtdmrg", gamma, h, config, checkpoint_path=_checkpoint_path(spec, "multiband")
    )
    (out / "report_multiband.json").write_text(report.to_json() + "\n")
    rows = [
        {
            "target": k,
            "energy_ghz": e,
            "variance_ghz2": v,
            "converged": bool(report.converged),
        }
        for k, (e, v) in enumerate(zip(report.final_energies, report.final_variances))
    ]
    analysis.write_rows_csv(str(out / "energies.csv"), rows)
    return report.converged


def _run_dmrgx(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    if not spec.targets:
        raise ValueError("dmrgx task requires 'targets'")
    h = build_mpo(device, order)

    def make_job(i: int, b: BareState):
        def job():
            config = _sweep_config(spec, seed_offset=i)
            try:
                b.validate(h.local_dims)
                psi0 = from_bare_state(b, h.local_dims)
                psi, report = run_sweeps(
                    "dmrgx", psi0, h, config,
                    checkpoint_path=_checkpoint_path(spec, f"target_{i}"),
                )
                (out / f"report_target_{i}.json").write_text(report.to_json() + "\n")
                return _solver_row(i, b.occupations, report)
            except Exception as exc:  # surfaced per target, siblings continue
                logger.warning("target %d failed: %s", i, exc)
                return _error_row(i, b.occupations, exc)

        return job

    rows = _dispatch(spec, [make_job(i, b) for i, b in enumerate(spec.targets)])
    analysis.write_rows_csv(str(out / "energies.csv"), rows)
    analysis.write_rows_json(str(out / "energies.json"), rows)
    return all(r["converged"] and not r["error"] for r in rows)


def _run_mtdmrgx(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    if not spec.target_sets:
        raise ValueError("mtdmrgx task requires 'target_sets'")
    h = build_mpo(device, order)

    def make_job(i: int, ts: TargetSet):
        def job():
            config = _sweep_config(spec, seed_offset=i)
            try:
                ts.validate(h.local_dims)
                gamma = mtmps_from_bare_states(ts.states, h.local_dims)
                _, report = run_sweeps(
                    "mtdmrgx", gamma, h, config, targets=ts,
                    checkpoint_path=_checkpoint_path(spec, f"set_{i}"),
                )
                (out / f"report_set_{i}.json").write_text(report.to_json() + "\n")
                rows = []
                for k, (e, v) in enumerate(
                    zip(report.final_energies, report.final_variances)
                ):
                    rows.append(
                        {
                            "set": i,
                            "target": k,
                            "label": str(ts.states[k].occupations),
                            "energy_ghz": e,
                            "variance_ghz2": v,
                            "converged": bool(report.converged),
                            "error": "",
                        }
                    )
                return rows
            except Exception as exc:
                logger.warning("target set %d failed: %s", i, exc)
                return [
                    {
                        "set": i,
                        "target": -1,
                        "label": "",
                        "energy_ghz": float("nan"),
                        "variance_ghz2": float("nan"),
                        "converged": False,
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                ]

        return job

    nested = _dispatch(spec, [make_job(i, ts) for i, ts in enumerate(spec.target_sets)])
    rows = [row for group in nested for row in group]
    analysis.write_rows_csv(str(out / "energies.csv"), rows)
    analysis.write_rows_json(str(out / "energies.json"), rows)
    return all(r["converged"] and not r["error"] for r in rows)


def _run_localization(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    targets = spec.targets
    if not targets:
        targets = list_targets(device, 1)
    h = build_mpo(device, order)

    def make_job(i: int, b: BareState):
        def job():
            config = _sweep_config(spec, seed_offset=i)
            psi0 = from_bare_state(b, h.local_dims)
            psi, report = run_sweeps("dmrgx", psi0, h, config)
            profile = analysis.localization_profile(psi, device, order)
            return b, report, profile

        return job

    results = _dispatch(spec, [make_job(i, b) for i, b in enumerate(targets)])
    site_rows, dist_rows = [], []
    ok = True
    for i, (b, report, profile) in enumerate(results):
        ok = ok and report.converged
        for pos, p in profile.per_site.items():
            site_rows.append(
                {
                    "target": i,
                    "label": str(b.occupations),
                    "kind": profile.kind,
                    "x": pos[0],
                    "y": pos[1],
                    "weight": p,
                }
            )
        for d, w in profile.by_distance.items():
            dist_rows.append(
                {
                    "target": i,
                    "kind": profile.kind,
                    "distance": d,
                    "weight": w,
                    "converged": bool(report.converged),
                }
            )
    analysis.write_rows_csv(str(out / "localization_sites.csv"), site_rows)
    analysis.write_rows_csv(str(out / "localization_distance.csv"), dist_rows)
    analysis.write_rows_json(str(out / "localization_distance.json"), dist_rows)
    return ok


def _run_g_scan(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    opts = spec.options
    qubit_k, qubit_l = int(opts["qubit_k"]), int(opts["qubit_l"])
    config = _sweep_config(spec)
    engine = _engine_for(spec, config)
    if "sweep_values" in opts:
        grid = np.asarray(opts["sweep_values"], dtype=float)
    else:
        center = float(opts.get("sweep_center", device.modes[qubit_l].omega))
        g_guess = float(opts.get("g_guess", 0.01))
        grid = analysis.default_g_sweep(center, g_guess, int(opts.get("points", 41)))
    scan = analysis.extract_g(device, qubit_k, qubit_l, grid, engine, order=order)
    doc = {
        "qubit_k": qubit_k,
        "qubit_l": qubit_l,
        "g_ghz": scan.g,
        "refined_minimum_ghz": scan.refined_minimum,
        "minimum_at_ghz": scan.minimum_at,
        "is_upper_bound": scan.is_upper_bound,
        "seed": spec.seed,
    }
    (out / "g_scan.json").write_text(json.dumps(doc, indent=2) + "\n")
    analysis.write_rows_csv(
        str(out / "g_scan.csv"),
        [
            {"swept_ghz": float(w), "detuning_ghz": float(d)}
            for w, d in zip(scan.swept, scan.detunings)
        ],
    )
    return True


def _run_zeta(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    opts = spec.options
    qubit_k, qubit_l = int(opts["qubit_k"]), int(opts["qubit_l"])
    spectators = {int(k): int(v) for k, v in opts.get("spectators", {}).items()}
    config = _sweep_config(spec)
    engine = _engine_for(spec, config)
    groups = None
    if spec.target_sets:
        groups = [list(ts.states) for ts in spec.target_sets]
    report = analysis.extract_zeta(
        device, qubit_k, qubit_l, spectators, engine, groups=groups, order=order
    )
    doc = {
        "qubit_k": qubit_k,
        "qubit_l": qubit_l,
        "omega_00_ghz": report.omega_00,
        "omega_01_ghz": report.omega_01,
        "omega_10_ghz": report.omega_10,
        "omega_11_ghz": report.omega_11,
        "zeta_ghz": report.zeta,
        "subspaces": [[list(occ) for occ in grp] for grp in report.subspaces],
        "seed": spec.seed,
    }
    (out / "zeta.json").write_text(json.dumps(doc, indent=2) + "\n")
    return True


def _run_state_dependence(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    opts = spec.options
    config = _sweep_config(spec)
    engine = _engine_for(spec, config)
    rows = analysis.state_dependence_experiment(
        device,
        tuple(opts["target_pair"]),
        tuple(opts["aggressor_pair"]),
        [float(d) for d in opts.get("detunings", [0.0])],
        [int(n) for n in opts.get("n_exc", [0, 1, 2])],
        engine,
        spectator_config={int(k): int(v) for k, v in opts.get("spectators", {}).items()},
        distance_metric=opts.get("distance_metric", "hops"),
        order=order,
    )
    analysis.write_rows_csv(str(out / "state_dependence.csv"), rows)
    analysis.write_rows_json(str(out / "state_dependence.json"), rows)
    return True


def _run_oracle_check(spec: JobSpec, device: DeviceSpec, order: SnakeOrder, out: Path) -> bool:
    h = build_mpo(device, order)
    dims = h.local_dims
    dim = int(np.prod(dims))
    rows = []
    tol = 1e-12

    def record(check: str, err: float):
        rows.append({"check": check, "max_abs_error": err, "passed": bool(err <= tol)})

    if dim <= oracle_mod.DENSE_DIM_MAX:
        dense = oracle_mod.dense_hamiltonian(device, order)
        expanded = mps_mod.mpo_to_dense(h)
        record("mpo_equals_dense", float(np.max(np.abs(dense - expanded))))
        record("hermiticity", float(np.max(np.abs(dense - dense.conj().T))))
        record("diagonal_real", float(np.max(np.abs(np.diag(dense).imag))))
    else:
        sparse = oracle_mod.sparse_hamiltonian(device, order)
        record(
            "hermiticity",
            float(abs(sparse - sparse.conj().T).max()),
        )
        rng = np.random.default_rng(spec.seed)
        configs = [tuple([0] * len(dims))]
        for pos in range(len(dims)):
            occ = [0] * len(dims)
            occ[pos] = 1
            configs.append(tuple(occ))
        for _ in range(32):
            configs.append(tuple(int(rng.integers(0, d)) for d in dims))
        worst = 0.0
        for occ in configs:
            column = mps_mod.to_dense(
                mps_mod.apply_mpo(from_bare_state(BareState(occ), dims), h)
            )
            idx = oracle_mod.basis_index(dims, occ)
            worst = max(worst, float(np.max(np.abs(column - sparse[:, idx].toarray().ravel()))))
        record("mpo_columns_vs_sparse", worst)

    analysis.write_rows_csv(str(out / "oracle_check.csv"), rows)
    analysis.write_rows_json(str(out / "oracle_check.json"), rows)
    return all(r["passed"] for r in rows)


_RUNNERS = {
    "ground": _run_ground,
    "excited_ortho": _run_excited_ortho,
    "multiband": _run_multiband,
    "dmrgx": _run_dmrgx,
    "mtdmrgx": _run_mtdmrgx,
    "localization": _run_localization,
    "g_scan": _run_g_scan,
    "zeta": _run_zeta,
    "state_dependence": _run_state_dependence,
    "oracle_check": _run_oracle_check,
}


def run_job(spec: JobSpec) -> int:
    """Execute a job; returns the process exit status (0 = all runs clean)."""
    device = load_device(spec.device_path)
    order = snake_order(device)
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "job_echo.json").write_text(
        json.dumps(
            {
                "schema": JOB_SCHEMA,
                "task": spec.task,
                "device": spec.device_path,
                "seed": spec.seed,
                "parallelism": spec.parallelism,
                "sweep": spec.sweep,
                "options": spec.options,
            },
            indent=2,
        )
        + "\n"
    )
    ok = _RUNNERS[spec.task](spec, device, order, out)
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# argument parsing


def _cmd_validate(args) -> int:
    try:
        device = load_device(args.devicefile)
    except json.JSONDecodeError as exc:
        print(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"invalid device: {exc}", file=sys.stderr)
        return 1
    order = snake_order(device)
    n_q = sum(1 for m in device.modes if m.kind == "qubit")
    n_c = device.n_modes - n_q
    dim = int(np.prod([m.local_dim for m in device.modes]))
    print(
        f"ok: {n_q} qubits + {n_c} couplers, {len(device.couplings)} couplings, "
        f"dense dimension {dim}, chain {list(order.chain)}"
    )
    return 0


def _cmd_targets(args) -> int:
    try:
        device = load_device(args.devicefile)
        states = list_targets(device, args.band, args.kind)
    except json.JSONDecodeError as exc:
        print(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for b in states:
        print(" ".join(str(n) for n in b.occupations))
    print(f"# {len(states)} states in band {args.band} ({args.kind})", file=sys.stderr)
    return 0


def _cmd_run(args) -> int:
    try:
        spec = load_job(args.jobfile)
    except json.JSONDecodeError as exc:
        print(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"invalid job: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        spec.seed = args.seed
    if args.threads is not None:
        spec.parallelism = args.threads
    if args.checkpoint_dir is not None:
        spec.checkpoint_dir = args.checkpoint_dir
    try:
        return run_job(spec)
    except (ValueError, KeyError) as exc:
        print(f"job failed: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="transmon-dmrg",
        description="Tensor-network eigenstate engine for coupled-transmon lattices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="validate a device description file")
    p_val.add_argument("devicefile")
    p_val.set_defaults(func=_cmd_validate)

    p_tgt = sub.add_parser("targets", help="enumerate bare states of an excitation band")
    p_tgt.add_argument("devicefile")
    p_tgt.add_argument("--band", type=int, required=True)
    p_tgt.add_argument("--kind", choices=("all", "qubit", "coupler"), default="all")
    p_tgt.set_defaults(func=_cmd_targets)

    p_run = sub.add_parser("run", help="run a job file")
    p_run.add_argument("jobfile")
    p_run.add_argument("--threads", type=int, default=None, help="worker pool width")
    p_run.add_argument("--checkpoint-dir", default=None, help="write MPS checkpoints here")
    p_run.add_argument("--seed", type=int, default=None, help="override the job seed")
    p_run.set_defaults(func=_cmd_run)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
