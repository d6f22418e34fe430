"""Batch orchestration: staged runs, caching, and artifact emission.

Subcommands: optimize, cluster, extend, library, mockbench, report.
Every stage reads the previous stage's files from the output directory
and writes JSON/CSV artifacts plus a manifest. Artifacts are keyed by a
hash of the fully resolved configuration (defaults included), so a rerun
with an unchanged config recomputes nothing and --force ignores caches.

Exit codes: 0 success, 2 config error, 3 missing upstream artifact,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import elbow_k, similarity_from_distances, spectral_cluster
from .families import (Family, MockFamilyConfig, build_gate_library,
                       compare_metrics_experiment, extend_family, infidelity,
                       interpolate, _default_fidelity_fn)
from .lindblad import IntegratorConfig, StabilityError
from .optimize import OptimConfig, OptimizationError, optimize_gate
from .pulses import ShapingConfig, pulse_set_from_json, pulse_set_to_json
from .systems import CatParams, RydbergParams, SystemModel, build_system
from .transport import (SinkhornConvergenceError, TransportConfig,
                        pulse_set_distance_matrix)

MANIFEST_SCHEMA = "pulsefam.manifest/v1"


class ConfigError(ValueError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _dataclass_from(cls, raw: dict, field_name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{field_name} must be an object")
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - valid
    if unknown:
        raise ConfigError(f"unknown {field_name} keys: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {field_name}: {exc}") from exc


@dataclasses.dataclass
class RunConfig:
    system_kind: str = "rydberg"
    system_params: dict = dataclasses.field(default_factory=dict)
    gate: str = "RX"
    n_angles: int = 10
    seed: int = 0
    t_end: float | None = None
    metric: str = "w2"
    epsilon: float = 1e-4
    k_families: int | None = None
    k_max: int = 5
    n_trials: int = 200
    optimizer: OptimConfig = OptimConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    shaping: ShapingConfig = ShapingConfig()
    transport: TransportConfig = TransportConfig()
    mock: MockFamilyConfig = MockFamilyConfig()

    def angles(self) -> np.ndarray:
        return np.linspace(0.0, np.pi, self.n_angles)

    def build_model(self) -> SystemModel:
        n = 2 if self.gate == "RZZ" else 1
        params = dict(self.system_params)
        params.setdefault("n_qubits", n)
        if self.system_kind == "rydberg":
            return build_system("rydberg", self.gate,
                                _dataclass_from(RydbergParams, params, "system.params"))
        if self.system_kind == "cat":
            params.setdefault("fock_dim", 16 if self.gate == "RZZ" else 20)
            return build_system("cat", self.gate,
                                _dataclass_from(CatParams, params, "system.params"))
        raise ConfigError(f"system.kind must be 'rydberg' or 'cat', got {self.system_kind!r}")

    def duration(self, model: SystemModel) -> float:
        return model.gate_time if self.t_end is None else float(self.t_end)

    def resolved(self) -> dict:
        out = dataclasses.asdict(self)
        return out

    def hash(self) -> str:
        text = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def resolve_config(raw: dict, seed_override: int | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    raw = dict(raw)
    system = raw.pop("system", {"kind": "rydberg"})
    if not isinstance(system, dict) or "kind" not in system:
        raise ConfigError("system must be an object with a 'kind' field")
    known = {
        "gate", "n_angles", "seed", "t_end", "metric", "epsilon", "k_families",
        "k_max", "n_trials", "optimizer", "integrator", "shaping", "transport", "mock",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    cfg = RunConfig(
        system_kind=system.get("kind", "rydberg"),
        system_params=system.get("params", {}),
        gate=raw.get("gate", "RX"),
        n_angles=int(raw.get("n_angles", 10)),
        seed=int(raw.get("seed", 0)),
        t_end=raw.get("t_end"),
        metric=raw.get("metric", "w2"),
        epsilon=float(raw.get("epsilon", 1e-4)),
        k_families=raw.get("k_families"),
        k_max=int(raw.get("k_max", 5)),
        n_trials=int(raw.get("n_trials", 200)),
        optimizer=_dataclass_from(OptimConfig, raw.get("optimizer", {}), "optimizer"),
        integrator=_dataclass_from(IntegratorConfig, raw.get("integrator", {}), "integrator"),
        shaping=_dataclass_from(ShapingConfig, raw.get("shaping", {}), "shaping"),
        transport=_dataclass_from(TransportConfig, raw.get("transport", {}), "transport"),
        mock=_dataclass_from(MockFamilyConfig, raw.get("mock", {}), "mock"),
    )
    if seed_override is not None:
        cfg.seed = int(seed_override)
    if cfg.gate not in ("RX", "RY", "RZ", "RZZ"):
        raise ConfigError(f"gate must be one of RX, RY, RZ, RZZ, got {cfg.gate!r}")
    if cfg.metric not in ("w2", "l2"):
        raise ConfigError(f"metric must be 'w2' or 'l2', got {cfg.metric!r}")
    if cfg.n_angles < 2:
        raise ConfigError("n_angles must be >= 2")
    try:
        cfg.build_model()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# artifact helpers
# ---------------------------------------------------------------------------

def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
                    encoding="utf-8")


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise MissingArtifactError(str(path))
    return json.loads(path.read_text(encoding="utf-8"))


def _write_csv(path: Path, schema: str, config_hash: str, header: list[str],
               rows: list[list]):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# schema={schema} config={config_hash}", ",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.exists():
        raise MissingArtifactError(str(path))
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines()
             if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


class Manifest:
    def __init__(self, stage: str, cfg: RunConfig):
        self.stage = stage
        self.config_hash = cfg.hash()
        self.t0 = time.time()
        self.timings: dict[str, float] = {}
        self.warnings: list[str] = []
        self.outputs: list[str] = []
        self.extra: dict = {}

    def output(self, out_dir: Path, path: Path):
        self.outputs.append(str(path.relative_to(out_dir)))

    def write(self, out_dir: Path):
        self.timings["total_s"] = time.time() - self.t0
        payload = {
            "schema": MANIFEST_SCHEMA,
            "stage": self.stage,
            "config_hash": self.config_hash,
            "versions": {"pulsefam": __version__},
            "timings": self.timings,
            "warnings": self.warnings,
            "outputs": sorted(self.outputs),
            **self.extra,
        }
        _write_json(out_dir / f"manifest_{self.stage}.json", payload)


def _angle_pulse_path(out_dir: Path, index: int) -> Path:
    return out_dir / "pulses" / f"angle_{index:03d}.json"


def _extended_pulse_path(out_dir: Path, family_id: int, index: int) -> Path:
    return out_dir / "pulses" / f"family{family_id}_angle_{index:03d}.json"


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _optimize_one(args):
    cfg, index, theta = args
    model = cfg.build_model()
    opt_cfg = dataclasses.replace(cfg.optimizer, seed=cfg.seed * 1000003 + index)
    result = optimize_gate(model, cfg.gate, theta, cfg=opt_cfg,
                           integrator=cfg.integrator, shaping=cfg.shaping,
                           t_end=cfg.t_end)
    return index, result


def cmd_optimize(cfg: RunConfig, out_dir: Path, force: bool = False, jobs: int = 1) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("optimize", cfg)
    angles = cfg.angles()
    chash = cfg.hash()

    todo = []
    cached = 0
    for i, theta in enumerate(angles):
        path = _angle_pulse_path(out_dir, i)
        if not force and path.exists():
            try:
                existing = _read_json(path)
            except (json.JSONDecodeError, MissingArtifactError):
                existing = {}
            if existing.get("config_hash") == chash:
                cached += 1
                manifest.output(out_dir, path)
                continue
        todo.append((cfg, i, float(theta)))

    if todo:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(_optimize_one, todo))
        else:
            outcomes = [_optimize_one(t) for t in todo]
        for index, result in outcomes:
            path = _angle_pulse_path(out_dir, index)
            _write_json(path, {
                "schema": "pulsefam.optresult/v1",
                "config_hash": chash,
                "gate": cfg.gate,
                "theta": float(angles[index]),
                "index": index,
                "seed": cfg.seed * 1000003 + index,
                "fidelity": result.fidelity,
                "iterations": result.iterations,
                "restart_index": result.restart_index,
                "pulses": pulse_set_to_json(result.pulses),
            })
            manifest.output(out_dir, path)

    rows = []
    for i, theta in enumerate(angles):
        entry = _read_json(_angle_pulse_path(out_dir, i))
        rows.append([i, float(theta), float(entry["fidelity"]), int(entry["iterations"])])
    fid_path = out_dir / "fidelities.csv"
    _write_csv(fid_path, "pulsefam.fidelities/v1", chash,
               ["index", "theta", "fidelity", "iterations"], rows)
    manifest.output(out_dir, fid_path)
    manifest.extra.update({"cached": cached, "computed": len(todo)})
    manifest.write(out_dir)
    return {"cached": cached, "computed": len(todo)}


def _load_stage1_pulses(cfg: RunConfig, out_dir: Path, model: SystemModel):
    angles = cfg.angles()
    chash = cfg.hash()
    pulses, fidelities = [], []
    for i in range(cfg.n_angles):
        path = _angle_pulse_path(out_dir, i)
        if not path.exists():
            raise MissingArtifactError(
                f"{path} missing; run `pulsefam optimize` first")
        entry = _read_json(path)
        if entry.get("config_hash") != chash:
            raise MissingArtifactError(
                f"{path} was produced by a different config; rerun `pulsefam optimize`")
        pulses.append(pulse_set_from_json(entry["pulses"], model.channel_table))
        fidelities.append(float(entry["fidelity"]))
    return angles, pulses, fidelities


def cmd_cluster(cfg: RunConfig, out_dir: Path, force: bool = False, jobs: int = 1) -> dict:
    manifest = Manifest("cluster", cfg)
    model = cfg.build_model()
    angles, pulses, _ = _load_stage1_pulses(cfg, out_dir, model)

    distances = pulse_set_distance_matrix(pulses, cfg.metric, cfg.transport, cfg.shaping)
    sim = similarity_from_distances(distances, cfg.epsilon)
    if cfg.k_families is None:
        elbow = elbow_k(sim, min(cfg.k_max, cfg.n_angles - 1), seed=cfg.seed)
        k = elbow.k
        if not elbow.confident:
            manifest.warnings.append(f"elbow unconfident; k={k}")
        manifest.extra["elbow_dispersions"] = [float(v) for v in elbow.dispersions]
    else:
        k = int(cfg.k_families)
    labels = spectral_cluster(sim, k, seed=cfg.seed)

    chash = cfg.hash()
    dpath = out_dir / "distances.csv"
    header = ["index"] + [repr(float(t)) for t in angles]
    _write_csv(dpath, "pulsefam.distances/v1", chash, header,
               [[i] + [float(v) for v in row] for i, row in enumerate(distances)])
    manifest.output(out_dir, dpath)

    lpath = out_dir / "labels.csv"
    _write_csv(lpath, "pulsefam.labels/v1", chash, ["index", "theta", "family"],
               [[i, float(angles[i]), int(labels.labels[i])] for i in range(cfg.n_angles)])
    manifest.output(out_dir, lpath)
    manifest.extra["k"] = labels.k
    manifest.write(out_dir)
    return {"k": labels.k}


def _load_labels(out_dir: Path, cfg: RunConfig) -> np.ndarray:
    path = out_dir / "labels.csv"
    if not path.exists():
        raise MissingArtifactError(f"{path} missing; run `pulsefam cluster` first")
    _, rows = _read_csv(path)
    if len(rows) != cfg.n_angles:
        raise MissingArtifactError(f"{path} does not match n_angles; rerun `pulsefam cluster`")
    return np.array([int(r[2]) for r in rows])


def cmd_extend(cfg: RunConfig, out_dir: Path, force: bool = False, jobs: int = 1) -> dict:
    manifest = Manifest("extend", cfg)
    model = cfg.build_model()
    angles, pulses, fidelities = _load_stage1_pulses(cfg, out_dir, model)
    labels = _load_labels(out_dir, cfg)
    chash = cfg.hash()

    n_extended = 0
    for fam_id in sorted(set(int(v) for v in labels)):
        idx = np.flatnonzero(labels == fam_id)
        family = Family(
            id=fam_id,
            members={float(angles[i]): pulses[i] for i in idx},
            fidelities={float(angles[i]): fidelities[i] for i in idx},
            provenance={float(angles[i]): "original" for i in idx},
        )
        extended = extend_family(family, angles, model, cfg.gate, cfg.optimizer,
                                 cfg.integrator, cfg.shaping)
        for warning_angle in extended.failed_angles:
            manifest.warnings.append(
                f"family {fam_id}: extension failed at theta={warning_angle:.4f}")

        members = {}
        for i, theta in enumerate(angles):
            key = float(theta)
            if key not in extended.members:
                continue
            if extended.provenance.get(key) == "original":
                ref = _angle_pulse_path(out_dir, i)
            else:
                ref = _extended_pulse_path(out_dir, fam_id, i)
                _write_json(ref, {
                    "schema": "pulsefam.optresult/v1",
                    "config_hash": chash,
                    "gate": cfg.gate,
                    "theta": key,
                    "index": i,
                    "family": fam_id,
                    "fidelity": extended.fidelities.get(key),
                    "pulses": pulse_set_to_json(extended.members[key]),
                })
                manifest.output(out_dir, ref)
                n_extended += 1
            members[repr(key)] = {
                "file": str(ref.relative_to(out_dir)),
                "fidelity": extended.fidelities.get(key),
                "provenance": extended.provenance.get(key, "original"),
            }
        fpath = out_dir / "families" / f"family_{fam_id}.json"
        _write_json(fpath, {
            "schema": "pulsefam.family/v1",
            "config_hash": chash,
            "id": fam_id,
            "members": members,
            "failed_angles": extended.failed_angles,
        })
        manifest.output(out_dir, fpath)

    manifest.extra["extended_members"] = n_extended
    manifest.write(out_dir)
    return {"extended": n_extended}


def _load_families(cfg: RunConfig, out_dir: Path, model: SystemModel) -> list[Family]:
    fam_dir = out_dir / "families"
    if not fam_dir.exists():
        raise MissingArtifactError(f"{fam_dir} missing; run `pulsefam extend` first")
    families = []
    for path in sorted(fam_dir.glob("family_*.json")):
        entry = _read_json(path)
        members, fidelities, provenance = {}, {}, {}
        for key, info in entry["members"].items():
            theta = float(key)
            pulse_entry = _read_json(out_dir / info["file"])
            members[theta] = pulse_set_from_json(pulse_entry["pulses"], model.channel_table)
            if info.get("fidelity") is not None:
                fidelities[theta] = float(info["fidelity"])
            provenance[theta] = info.get("provenance", "original")
        families.append(Family(id=int(entry["id"]), members=members,
                               fidelities=fidelities, provenance=provenance,
                               failed_angles=[float(v) for v in entry.get("failed_angles", [])]))
    if not families:
        raise MissingArtifactError(f"no family files in {fam_dir}; run `pulsefam extend` first")
    return families


def cmd_library(cfg: RunConfig, out_dir: Path, force: bool = False, jobs: int = 1) -> dict:
    manifest = Manifest("library", cfg)
    model = cfg.build_model()
    angles = cfg.angles()
    families = _load_families(cfg, out_dir, model)
    _, pulses, _ = _load_stage1_pulses(cfg, out_dir, model)

    library = build_gate_library(families, model, cfg.gate, angles,
                                 cfg.integrator, cfg.shaping)

    fid_fn = _default_fidelity_fn(model, cfg.gate, cfg.integrator, cfg.shaping)
    original = Family(id=-1, members={float(angles[i]): pulses[i]
                                      for i in range(cfg.n_angles)})
    midpoints = 0.5 * (angles[:-1] + angles[1:])
    tables = {"original": {float(m): fid_fn(interpolate(original, float(m)), float(m))
                           for m in midpoints}}
    for fam in families:
        tables[f"family-{fam.id}"] = {
            m: row[fam.id] for m, row in library.midpoint_fidelities.items()
            if fam.id in row
        }
    tables["partitioned"] = {m: max(row.values())
                             for m, row in library.midpoint_fidelities.items() if row}

    chash = cfg.hash()
    lib_path = out_dir / "library.json"
    _write_json(lib_path, {
        "schema": "pulsefam.library/v1",
        "config_hash": chash,
        "gate": cfg.gate,
        "system": model.descriptor(),
        "regimes": [[lo, hi, fam] for lo, hi, fam in library.regimes],
        "midpoint_fidelities": {repr(m): {str(k): v for k, v in row.items()}
                                for m, row in library.midpoint_fidelities.items()},
        "families": [f"families/family_{f.id}.json" for f in families],
    })
    manifest.output(out_dir, lib_path)

    ceiling = model.fidelity_ceiling
    rows = []
    for method, table in tables.items():
        infids = np.array([infidelity(f, ceiling) for f in table.values()])
        rows.append([cfg.gate, method, float(np.mean(infids)), float(np.std(infids)),
                     int(infids.size)])
    rpath = out_dir / "report.csv"
    _write_csv(rpath, "pulsefam.report/v1", chash,
               ["gate", "method", "mean_infidelity", "std_infidelity", "n_midpoints"],
               rows)
    manifest.output(out_dir, rpath)
    manifest.write(out_dir)
    return {"regimes": library.regimes}


def cmd_mockbench(cfg: RunConfig, out_dir: Path, force: bool = False, jobs: int = 1) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("mockbench", cfg)
    mock_cfg = dataclasses.replace(cfg.mock, seed=cfg.seed)
    samples = compare_metrics_experiment(mock_cfg, cfg.n_trials,
                                         transport=cfg.transport, epsilon=cfg.epsilon)
    rows = []
    for metric, values in sorted(samples.items()):
        for trial, p in enumerate(values):
            rows.append([trial, metric, float(p)])
    path = out_dir / "mockbench.csv"
    _write_csv(path, "pulsefam.mockbench/v1", cfg.hash(),
               ["trial", "metric", "p_correct"], rows)
    manifest.output(out_dir, path)
    medians = {metric: float(np.median(values)) for metric, values in samples.items()}
    manifest.extra["medians"] = medians
    manifest.write(out_dir)
    return {"medians": medians}


def cmd_report(cfg: RunConfig, out_dir: Path, force: bool = False, jobs: int = 1) -> dict:
    path = out_dir / "report.csv"
    if not path.exists():
        raise MissingArtifactError(f"{path} missing; run `pulsefam library` first")
    header, rows = _read_csv(path)
    print(",".join(header))
    for row in rows:
        print(",".join(row))
    lib = _read_json(out_dir / "library.json")
    print("regimes:")
    for lo, hi, fam in lib["regimes"]:
        print(f"  [{float(lo):.4f}, {float(hi):.4f}] -> family {fam}")
    return {"rows": rows}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "optimize": cmd_optimize,
    "cluster": cmd_cluster,
    "extend": cmd_extend,
    "library": cmd_library,
    "mockbench": cmd_mockbench,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pulsefam",
                                     description="pulse family gate synthesis")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=True)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--force", action="store_true")
    args = parser.parse_args(argv)

    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError:
        print(f"config file not found: {args.config}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}", file=sys.stderr)
        return 2

    try:
        cfg = resolve_config(raw, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        summary = _COMMANDS[args.command](cfg, args.out, force=args.force, jobs=args.jobs)
    except MissingArtifactError as exc:
        print(f"missing upstream artifact: {exc}", file=sys.stderr)
        return 3
    except (OptimizationError, StabilityError, SinkhornConvergenceError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    print(json.dumps({"command": args.command, "out": str(args.out), **_jsonable(summary)},
                     sort_keys=True))
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


if __name__ == "__main__":
    sys.exit(main())
