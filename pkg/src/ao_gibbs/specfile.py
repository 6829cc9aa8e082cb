"""Experiment files: TOML-style specs, run manifests, CSV and snapshot IO.

One flat file describes a whole experiment; every command hashes the parsed
content (canonical, key-sorted) so outputs can be traced back to the exact
configuration, and reruns with the same seeds are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .geometry import QuadratureSpec
from .model import Configuration, MarkLaw, ModelParams, Window
from .sampling import MoveMix, SamplerParams

CODE_VERSION = "0.1.0"

__all__ = [
    "CODE_VERSION",
    "SpecError",
    "ExperimentSpec",
    "RunManifest",
    "load_spec",
    "spec_from_dict",
    "default_spec_dict",
    "derive_seeds",
    "write_csv",
    "save_snapshot",
    "load_snapshot",
]


class SpecError(ValueError):
    """A configuration file that cannot be parsed or validated."""


def default_spec_dict() -> dict:
    """Built-in experiment: small enough for interactive runs."""
    return {
        "model": {"d": 2, "z": 0.3, "beta": 1.0, "r": 0.1,
                  "mark_law": "dirac", "radius": 0.25},
        "window": {"side": 3.0, "torus": False},
        "bc": {"kind": "free"},
        "sampler": {"burn_in": 1000, "thin": 10, "audit_every": 200,
                    "mix": [0.35, 0.35, 0.2, 0.1]},
        "quadrature": {"points_per_unit_volume": 128.0, "scheme": "stratified",
                       "target_rel_error": 1e-3, "max_doublings": 8,
                       "min_points": 32},
        "run": {"seeds": [1], "out": "runs/out", "n_list": [],
                "n_samples": 20000, "snapshots": 200, "chains": 2,
                "suite": "all"},
    }


def _merge(base: dict, override: dict) -> dict:
    out = {k: dict(v) for k, v in base.items()}
    for section, values in override.items():
        if not isinstance(values, dict):
            raise SpecError(f"top-level entry {section!r} must be a table")
        out.setdefault(section, {})
        out[section].update(values)
    return out


def _mark_law_from(section: dict) -> MarkLaw:
    name = section.get("mark_law", "dirac")
    if name == "dirac":
        return MarkLaw.dirac(section["radius"])
    if name == "uniform":
        return MarkLaw.uniform(section["lo"], section["hi"])
    if name == "truncated_weibull":
        return MarkLaw.truncated_weibull_like(
            scale=section["scale"], shape=section["shape"],
            cutoff=section["cutoff"], delta=section.get("delta", 1.0),
        )
    raise SpecError(f"unknown mark_law {name!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment description plus its canonical content hash."""

    params: ModelParams
    window: Window
    bc_kind: str
    bc_path: str | None
    sampler: SamplerParams
    quad: QuadratureSpec
    seeds: tuple[int, ...]
    out_dir: str
    n_list: tuple[int, ...]
    n_samples: int
    snapshots: int
    chains: int
    suite: str
    content: dict

    def spec_hash(self) -> str:
        blob = json.dumps(self.content, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def spec_from_dict(data: dict) -> ExperimentSpec:
    """Validate a parsed spec dictionary, filling defaults section by section."""
    content = _merge(default_spec_dict(), data)
    try:
        model = content["model"]
        params = ModelParams(
            d=int(model["d"]), z=float(model["z"]), beta=float(model["beta"]),
            r=float(model["r"]), mark_law=_mark_law_from(model),
        )
        win = content["window"]
        side = float(win["n"]) if "n" in win else float(win["side"])
        window = Window.cube(side, params.d, torus=bool(win.get("torus", False)))
        bc = content["bc"]
        bc_kind = bc.get("kind", "free")
        if bc_kind not in ("free", "periodic", "fixed"):
            raise SpecError(f"unknown bc kind {bc_kind!r}")
        bc_path = bc.get("path")
        if bc_kind == "fixed" and not bc_path and bc.get("points") is None:
            raise SpecError(
                "fixed boundary needs bc.path pointing at a snapshot, "
                "or inline bc.points rows")
        samp = content["sampler"]
        sampler = SamplerParams(
            burn_in_sweeps=int(samp["burn_in"]),
            thin_sweeps=int(samp["thin"]),
            mix=MoveMix(*[float(x) for x in samp["mix"]]),
            translate_halfwidth=samp.get("translate_halfwidth"),
            audit_every=int(samp["audit_every"]),
        )
        q = content["quadrature"]
        quad = QuadratureSpec(
            points_per_unit_volume=float(q["points_per_unit_volume"]),
            scheme=str(q["scheme"]),
            target_rel_error=float(q["target_rel_error"]),
            max_doublings=int(q["max_doublings"]),
            min_points=int(q["min_points"]),
        )
        run = content["run"]
        seeds = tuple(int(s) for s in run["seeds"])
        if not seeds:
            raise SpecError("run.seeds must be nonempty")
        n_list = tuple(int(n) for n in run["n_list"]) or (int(round(side)),)
        spec = ExperimentSpec(
            params=params, window=window, bc_kind=bc_kind, bc_path=bc_path,
            sampler=sampler, quad=quad, seeds=seeds,
            out_dir=str(run["out"]), n_list=n_list,
            n_samples=int(run["n_samples"]), snapshots=int(run["snapshots"]),
            chains=int(run["chains"]), suite=str(run["suite"]),
            content=content,
        )
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"invalid spec: {exc}") from exc
    return spec


def load_spec(path: str | Path) -> ExperimentSpec:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise SpecError(f"spec file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"spec file {path} does not parse: {exc}") from exc
    return spec_from_dict(data)


# ---- seeds and manifests ------------------------------------------------------


def derive_seeds(master: int, purpose: str, k: int) -> list[np.random.SeedSequence]:
    """Split one master seed into k independent streams for a named purpose."""
    tag = int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:8], "big")
    return np.random.SeedSequence(entropy=int(master), spawn_key=(tag,)).spawn(k)


@dataclass(frozen=True)
class RunManifest:
    """Provenance record written next to every output file."""

    spec_hash: str
    code_version: str
    started: str
    finished: str
    seeds: tuple[int, ...]
    outputs: tuple[str, ...]

    @classmethod
    def begin(cls, spec: ExperimentSpec) -> dict:
        return {
            "spec_hash": spec.spec_hash(),
            "code_version": CODE_VERSION,
            "started": datetime.now(timezone.utc).isoformat(),
            "seeds": list(spec.seeds),
            "outputs": [],
        }

    @classmethod
    def finish(cls, record: dict) -> "RunManifest":
        return cls(
            spec_hash=record["spec_hash"], code_version=record["code_version"],
            started=record["started"],
            finished=datetime.now(timezone.utc).isoformat(),
            seeds=tuple(record["seeds"]), outputs=tuple(record["outputs"]),
        )

    def save(self, directory: str | Path) -> Path:
        path = Path(directory) / "manifest.json"
        payload = {
            "spec_hash": self.spec_hash, "code_version": self.code_version,
            "started": self.started, "finished": self.finished,
            "seeds": list(self.seeds), "outputs": list(self.outputs),
        }
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return path


# ---- output files --------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str | Path, schema: list[str], rows, spec_hash: str,
              schema_name: str) -> Path:
    """Comma-separated rows with full-precision floats.

    Comment lines pin the schema version and the spec hash recorded in the
    manifest; the body is a pure function of the rows, so identical inputs
    produce byte-identical files.
    """
    path = Path(path)
    lines = [
        f"# schema: {schema_name}",
        f"# spec: sha256:{spec_hash}",
        ",".join(schema),
    ]
    for row in rows:
        if len(row) != len(schema):
            raise ValueError(f"row width {len(row)} != schema width {len(schema)}")
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def save_snapshot(path: str | Path, config: Configuration, n: float) -> Path:
    """Text header "d n count", then one "x1 ... xd R" line per point."""
    path = Path(path)
    lines = [f"{config.d} {_fmt(float(n))} {config.n}"]
    for i in range(config.n):
        coords = " ".join(repr(float(c)) for c in config.positions[i])
        lines.append(f"{coords} {repr(float(config.radii[i]))}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_snapshot(path: str | Path, reach: float = 0.0) -> tuple[Configuration, float]:
    """Inverse of save_snapshot; returns the configuration and the scale n."""
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise SpecError(f"snapshot file {path} is empty")
    head = text[0].split()
    if len(head) != 3:
        raise SpecError(f"snapshot header must be 'd n count', got {text[0]!r}")
    d, n, count = int(head[0]), float(head[1]), int(head[2])
    if len(text) - 1 != count:
        raise SpecError(f"snapshot {path} promises {count} points, has {len(text) - 1}")
    pos = np.zeros((count, d))
    rad = np.zeros(count)
    for i, line in enumerate(text[1:]):
        parts = line.split()
        if len(parts) != d + 1:
            raise SpecError(f"snapshot line {i + 2}: want {d + 1} fields, got {len(parts)}")
        pos[i] = [float(p) for p in parts[:d]]
        rad[i] = float(parts[d])
    if count == 0:
        return Configuration(d=d, reach=reach), n
    return Configuration(pos, rad, d=d, reach=reach), n
