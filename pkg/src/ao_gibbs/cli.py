"""Command-line client for the simulator service.

The client owns every file: it reads the spec, inlines fixed-boundary
snapshots, and writes CSV tables, snapshot files, verification reports, and
the run manifest.  Compute happens behind the HTTP interface, served either
in process (the default) or by a remote `ao-gibbs serve` instance, so results
are identical either way.

Exit codes: 0 success, 1 failed verification or server fault, 2 unusable
input (spec parse errors, bad files, rejected requests).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import math
import os
import sys
from pathlib import Path

import httpx

from .specfile import (
    CODE_VERSION,
    ExperimentSpec,
    RunManifest,
    SpecError,
    load_snapshot,
    load_spec,
    save_snapshot,
    spec_from_dict,
    write_csv,
)

COMMANDS = ("sample", "pressure", "energy-density", "palm-check",
            "discontinuity", "verify", "serve")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ao-gibbs",
                                description="Hardcore depletion-interaction simulator")
    p.add_argument("--server", default=None,
                   help="base URL of a running service; default runs in process")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--spec", default=None, help="experiment file (TOML)")
        sp.add_argument("--seed", type=int, default=None,
                        help="master seed; overrides the spec seed list")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int,
                        default=_env_threads(),
                        help="worker threads (env AO_GIBBS_THREADS)")
        sp.add_argument("--quiet", action="store_true", help="no progress lines")

    common(sub.add_parser("sample", help="dump chain snapshots"))
    common(sub.add_parser("pressure", help="finite-volume pressure ladder"))
    common(sub.add_parser("energy-density", help="direct vs per-point energy density"))
    pc = sub.add_parser("palm-check", help="per-point energy share identity")
    common(pc)
    pc.add_argument("--configs", type=int, default=4, help="sampled states to test")
    dc = sub.add_parser("discontinuity", help="lattice energy-density gap demo")
    common(dc)
    dc.add_argument("--scale", type=float, default=1.0,
                    help="good-lattice ball radius and half spacing")
    vf = sub.add_parser("verify", help="run numerical self-checks")
    common(vf)
    vf.add_argument("suite", nargs="?", default=None,
                    help="geometry|energy|palm|temperedness|dlr|all")
    sv = sub.add_parser("serve", help="run the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    return p


def _env_threads() -> int:
    try:
        return max(1, int(os.environ.get("AO_GIBBS_THREADS", "1")))
    except ValueError:
        return 1


def _load(args) -> ExperimentSpec:
    return load_spec(args.spec) if args.spec else spec_from_dict({})


def _post(server: str | None, path: str, payload: dict) -> tuple[int, dict]:
    if server:
        resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
        return resp.status_code, resp.json()

    async def go() -> tuple[int, dict]:
        from .service import app
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://service",
                                     timeout=None) as client:
            resp = await client.post(path, json=payload)
            return resp.status_code, resp.json()

    return asyncio.run(go())


def _spec_payload(spec: ExperimentSpec) -> dict:
    sections = {k: dict(v) for k, v in spec.content.items()}
    if spec.bc_kind == "fixed" and spec.bc_path:
        # the service never touches disk: boundary points travel inline
        cfg, _ = load_snapshot(spec.bc_path)
        if cfg.d != spec.params.d:
            raise SpecError(f"boundary snapshot dimension {cfg.d} != model {spec.params.d}")
        sections["bc"]["points"] = [
            [*map(float, cfg.positions[i]), float(cfg.radii[i])] for i in range(cfg.n)
        ]
    return sections


def _seeds_for(args, spec: ExperimentSpec) -> list[int]:
    return [int(args.seed)] if args.seed is not None else list(spec.seeds)


def _out_dir(args, spec: ExperimentSpec) -> Path:
    out = Path(args.out if args.out else spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise SpecError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _fail(status: int, body: dict) -> int:
    detail = body.get("detail", body)
    print(f"error ({status}): {detail}", file=sys.stderr)
    return 2 if status < 500 else 1


def _inf_or(x) -> float:
    return math.inf if x is None else float(x)


# ---- commands -------------------------------------------------------------------


def _cmd_sample(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    record = RunManifest.begin(spec)
    payload_spec = _spec_payload(spec)
    rows = []
    for seed in _seeds_for(args, spec):
        status, body = _post(args.server, "/sample",
                             {"spec": payload_spec, "seed": seed,
                              "threads": args.threads})
        if status != 200:
            return _fail(status, body)
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for snap in body["snapshots"]:
            from .model import Configuration  # deferred: keep CLI import light
            pts = snap["points"]
            cfg = (Configuration(d=body["d"])
                   if not pts else
                   Configuration([p[:-1] for p in pts], [p[-1] for p in pts],
                                 d=body["d"]))
            path = snap_dir / f"snap_s{seed}_{snap['index']:04d}.txt"
            save_snapshot(path, cfg, body["n"])
            record["outputs"].append(str(path.relative_to(out)))
            rows.append((seed, body["n"], body["bc"], snap["area"],
                         snap["area_stderr"], 1, snap["index"], snap["count"]))
        _say(args, f"seed {seed}: {len(body['snapshots'])} snapshots")
    csv = write_csv(out / "samples.csv",
                    ["seed", "n", "bc", "estimate", "stderr", "n_samples",
                     "snapshot", "count"],
                    rows, spec.spec_hash(), "ao-gibbs/sample/v1")
    record["outputs"].append(csv.name)
    RunManifest.finish(record).save(out)
    _say(args, f"wrote {csv}")
    return 0


def _cmd_pressure(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    record = RunManifest.begin(spec)
    payload_spec = _spec_payload(spec)
    rows, gap_rows = [], []
    trend_ok = True
    for seed in _seeds_for(args, spec):
        status, body = _post(args.server, "/pressure",
                             {"spec": payload_spec, "seed": seed,
                              "threads": args.threads})
        if status != 200:
            return _fail(status, body)
        for row in body["rows"]:
            est = row["estimate"]
            rows.append((seed, row["n"], row["bc"], _inf_or(est["value"]),
                         _inf_or(est["stderr"]), est["n_samples"], row["method"]))
        for gap in body["gaps"]:
            for label in ("per_minus_free", "fixed_minus_free"):
                g = gap[label]
                gap_rows.append((seed, gap["n"], label, _inf_or(g["value"]),
                                 _inf_or(g["stderr"]), g["n_samples"]))
        trend_ok = trend_ok and body["gap_abs_nonincreasing_1sigma"]
        _say(args, f"seed {seed}: ladder n={list(spec.n_list)} done")
    csv = write_csv(out / "pressure.csv",
                    ["seed", "n", "bc", "estimate", "stderr", "n_samples", "method"],
                    rows, spec.spec_hash(), "ao-gibbs/pressure/v1")
    gaps = write_csv(out / "pressure_gaps.csv",
                     ["seed", "n", "bc", "estimate", "stderr", "n_samples"],
                     gap_rows, spec.spec_hash(), "ao-gibbs/pressure-gaps/v1")
    record["outputs"] += [csv.name, gaps.name]
    RunManifest.finish(record).save(out)
    _say(args, f"wrote {csv} and {gaps}; gap trend nonincreasing: {trend_ok}")
    return 0


def _cmd_energy_density(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    record = RunManifest.begin(spec)
    payload_spec = _spec_payload(spec)
    rows = []
    for seed in _seeds_for(args, spec):
        status, body = _post(args.server, "/energy-density",
                             {"spec": payload_spec, "seed": seed,
                              "threads": args.threads})
        if status != 200:
            return _fail(status, body)
        for row in body["rows"]:
            direct, palm = row["direct"], row["palm"]
            rows.append((
                seed, row["n"], row["bc"], _inf_or(direct["value"]),
                _inf_or(direct["stderr"]), direct["n_samples"],
                "" if palm is None else _inf_or(palm["value"]),
                "" if palm is None else _inf_or(palm["stderr"]),
                "" if row["diff_z"] is None else row["diff_z"],
            ))
        _say(args, f"seed {seed}: {len(body['rows'])} volumes")
    csv = write_csv(out / "energy_density.csv",
                    ["seed", "n", "bc", "estimate", "stderr", "n_samples",
                     "palm", "palm_stderr", "diff_z"],
                    rows, spec.spec_hash(), "ao-gibbs/energy-density/v1")
    record["outputs"].append(csv.name)
    RunManifest.finish(record).save(out)
    _say(args, f"wrote {csv}")
    return 0


def _cmd_palm_check(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    record = RunManifest.begin(spec)
    payload_spec = _spec_payload(spec)
    rows = []
    all_ok = True
    for seed in _seeds_for(args, spec):
        status, body = _post(args.server, "/palm-check",
                             {"spec": payload_spec, "seed": seed,
                              "n_configs": args.configs, "threads": args.threads})
        if status != 200:
            return _fail(status, body)
        all_ok = all_ok and body["ok"]
        for rep in body["reports"]:
            rows.append((seed, body["window_side"], "periodic", rep["diff"],
                         rep["stderr"], rep["rhs"]["n_samples"], rep["n_points"],
                         _inf_or(rep["lhs"]["value"]), _inf_or(rep["rhs"]["value"]),
                         "" if rep["z"] is None else rep["z"], rep["ok"]))
        _say(args, f"seed {seed}: {len(body['reports'])} states, ok={body['ok']}")
    csv = write_csv(out / "palm_check.csv",
                    ["seed", "n", "bc", "estimate", "stderr", "n_samples",
                     "n_points", "lhs", "rhs", "z", "ok"],
                    rows, spec.spec_hash(), "ao-gibbs/palm-check/v1")
    record["outputs"].append(csv.name)
    RunManifest.finish(record).save(out)
    _say(args, f"wrote {csv}")
    return 0 if all_ok else 1


def _cmd_discontinuity(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    record = RunManifest.begin(spec)
    payload_spec = _spec_payload(spec)
    rows = []
    for seed in _seeds_for(args, spec):
        status, body = _post(args.server, "/discontinuity",
                             {"spec": payload_spec, "seed": seed,
                              "lattice_scale": args.scale})
        if status != 200:
            return _fail(status, body)
        for row in body["rows"]:
            rows.append((seed, row["n"], "free", row["good_density"],
                         row["good_density_stderr"], 1, row["good_count"],
                         row["bad_violated"], _inf_or(row["bad_energy"])))
        _say(args, f"seed {seed}: {len(body['rows'])} scales")
    csv = write_csv(out / "discontinuity.csv",
                    ["seed", "n", "bc", "estimate", "stderr", "n_samples",
                     "good_count", "bad_violated", "bad_energy"],
                    rows, spec.spec_hash(), "ao-gibbs/discontinuity/v1")
    record["outputs"].append(csv.name)
    RunManifest.finish(record).save(out)
    _say(args, f"wrote {csv}")
    return 0


def _cmd_verify(args) -> int:
    spec = _load(args)
    suite = args.suite if args.suite else spec.suite
    payload_spec = _spec_payload(spec)
    seeds = _seeds_for(args, spec)
    worst = 0
    for seed in seeds:
        status, body = _post(args.server, "/verify",
                             {"spec": payload_spec, "suite": suite, "seed": seed,
                              "threads": args.threads})
        if status != 200:
            return _fail(status, body)
        report = {k: body[k] for k in ("spec_hash", "suite", "master_seed", "ok",
                                       "n_checks", "n_failed", "suites")}
        text = json.dumps(report, sort_keys=True, indent=2) + "\n"
        if args.out:
            out = _out_dir(args, spec)
            path = out / f"verify_{suite}_s{seed}.json"
            path.write_text(text)
            _say(args, f"wrote {path}")
        elif not args.quiet:
            sys.stdout.write(text)
        _say(args, f"seed {seed}: {body['n_checks'] - body['n_failed']}/"
                   f"{body['n_checks']} checks passed")
        if not body["ok"]:
            worst = 1
    return worst


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {
        "sample": _cmd_sample,
        "pressure": _cmd_pressure,
        "energy-density": _cmd_energy_density,
        "palm-check": _cmd_palm_check,
        "discontinuity": _cmd_discontinuity,
        "verify": _cmd_verify,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
