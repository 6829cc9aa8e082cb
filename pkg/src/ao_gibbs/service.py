"""HTTP service exposing the simulator and verification suites.

Endpoints are pure compute: JSON in, JSON out, no disk access.  File handling
(spec files, CSV, snapshots, manifests) lives in the command-line client, so
a remote service and the in-process transport behave identically.

Non-finite floats are returned as nulls; CSV writers downstream restore them.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .energy import BoundaryCondition
from .estimators import (
    discontinuity_demo,
    energy_density_curve,
    palm_energy_identity_check,
    pressure_bc_comparison,
)
from .model import Configuration, Estimate, Window
from .sampling import boundary_envelope_ok, gibbs_mcmc, rejection_sample_gibbs
from .specfile import CODE_VERSION, ExperimentSpec, SpecError, derive_seeds, spec_from_dict
from .verify import SUITES, run_suite

from itertools import islice

app = FastAPI(title="ao-gibbs", version=CODE_VERSION)


# ---- wire formats -------------------------------------------------------------


class SpecModel(BaseModel):
    """Experiment description, one table per concern, same shape as the file."""

    model: dict = Field(default_factory=dict)
    window: dict = Field(default_factory=dict)
    bc: dict = Field(default_factory=dict)
    sampler: dict = Field(default_factory=dict)
    quadrature: dict = Field(default_factory=dict)
    run: dict = Field(default_factory=dict)

    def to_spec(self) -> ExperimentSpec:
        return spec_from_dict({
            "model": self.model, "window": self.window, "bc": self.bc,
            "sampler": self.sampler, "quadrature": self.quadrature,
            "run": self.run,
        })


class SampleRequest(BaseModel):
    spec: SpecModel = Field(default_factory=SpecModel)
    seed: int = 0
    n_snapshots: int | None = None
    threads: int | None = None


class OpRequest(BaseModel):
    spec: SpecModel = Field(default_factory=SpecModel)
    seed: int = 0
    threads: int | None = None


class PalmRequest(OpRequest):
    n_configs: int = 4


class DiscontinuityRequest(BaseModel):
    spec: SpecModel = Field(default_factory=SpecModel)
    seed: int = 0
    lattice_scale: float = 1.0


class VerifyRequest(OpRequest):
    suite: str = "all"


class EstimateModel(BaseModel):
    value: float | None
    stderr: float | None
    n_samples: int


class SnapshotModel(BaseModel):
    index: int
    count: int
    area: float
    area_stderr: float
    points: list[list[float]]


class SampleResponse(BaseModel):
    spec_hash: str
    seed: int
    d: int
    n: float
    bc: str
    snapshots: list[SnapshotModel]


class PressureRowModel(BaseModel):
    seed: int
    n: float
    bc: str
    method: str
    estimate: EstimateModel


class PressureResponse(BaseModel):
    spec_hash: str
    rows: list[PressureRowModel]
    gaps: list[dict]
    gap_abs_nonincreasing_1sigma: bool


class EnergyRowModel(BaseModel):
    seed: int
    n: float
    bc: str
    direct: EstimateModel
    palm: EstimateModel | None
    diff_z: float | None


class EnergyResponse(BaseModel):
    spec_hash: str
    rows: list[EnergyRowModel]


class PalmReportModel(BaseModel):
    seed: int
    n_points: int
    lhs: EstimateModel
    rhs: EstimateModel
    diff: float
    stderr: float
    z: float | None
    ok: bool


class PalmResponse(BaseModel):
    spec_hash: str
    window_side: float
    reports: list[PalmReportModel]
    ok: bool


class DiscontinuityRowModel(BaseModel):
    n: int
    good_count: int
    good_density: float
    good_density_stderr: float
    bad_violated: bool
    bad_energy: float | None


class DiscontinuityResponse(BaseModel):
    spec_hash: str
    lattice_scale: float
    rows: list[DiscontinuityRowModel]


class VerifyResponse(BaseModel):
    spec_hash: str
    suite: str
    master_seed: int
    ok: bool
    n_checks: int
    n_failed: int
    suites: list[dict]


# ---- helpers ------------------------------------------------------------------


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def _est(e: Estimate) -> EstimateModel:
    return EstimateModel(value=_finite(e.value), stderr=_finite(e.stderr),
                         n_samples=int(e.n_samples))


def _threads(requested: int | None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("AO_GIBBS_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _map(fn, jobs, threads: int) -> list:
    """Order-preserving map; the reduction order never depends on timing."""
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def _spec_or_422(payload: SpecModel) -> ExperimentSpec:
    try:
        return payload.to_spec()
    except SpecError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _bc_for(spec: ExperimentSpec) -> BoundaryCondition:
    if spec.bc_kind == "free":
        return BoundaryCondition.free()
    if spec.bc_kind == "periodic":
        return BoundaryCondition.periodic()
    pts = spec.content["bc"].get("points")
    if pts is None:
        raise HTTPException(status_code=422, detail=(
            "fixed boundary over HTTP needs bc.points rows [x1..xd, R]; "
            "the command-line client inlines them from bc.path"))
    rows = np.asarray(pts, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != spec.params.d + 1:
        raise HTTPException(status_code=422, detail=(
            f"bc.points rows must have {spec.params.d + 1} entries"))
    outer = Configuration(rows[:, :-1], rows[:, -1], d=spec.params.d)
    if not boundary_envelope_ok(outer, spec.window, spec.params):
        raise HTTPException(status_code=422, detail=(
            "fixed boundary condition breaks the temperedness envelope"))
    return BoundaryCondition.fixed(outer)


# ---- endpoints ------------------------------------------------------------------


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": CODE_VERSION}


@app.post("/sample", response_model=SampleResponse)
def sample(req: SampleRequest) -> SampleResponse:
    spec = _spec_or_422(req.spec)
    bc = _bc_for(spec)
    count = req.n_snapshots if req.n_snapshots is not None else spec.snapshots
    window = spec.window
    if spec.bc_kind == "periodic" and not window.torus:
        window = Window.cube(window.side, spec.params.d, torus=True)
    seed = derive_seeds(req.seed, "sample", 1)[0]
    chain = gibbs_mcmc(spec.params, window, bc, sampler=spec.sampler,
                       quad=spec.quad, rng=np.random.default_rng(seed))
    snaps = []
    for i, state in enumerate(islice(chain, count)):
        cfg = state.config
        pts = [[*map(float, cfg.positions[j]), float(cfg.radii[j])]
               for j in range(cfg.n)]
        snaps.append(SnapshotModel(index=i, count=cfg.n, area=float(state.area),
                                   area_stderr=float(state.area_sigma), points=pts))
    return SampleResponse(spec_hash=spec.spec_hash(), seed=req.seed,
                          d=spec.params.d, n=window.side, bc=spec.bc_kind,
                          snapshots=snaps)


@app.post("/pressure", response_model=PressureResponse)
def pressure(req: OpRequest) -> PressureResponse:
    spec = _spec_or_422(req.spec)
    try:
        out = pressure_bc_comparison(
            spec.params, list(spec.n_list), seed=req.seed,
            direct_samples=spec.n_samples, anchor_samples=spec.n_samples,
            chains=spec.chains, snapshots_per_chain=spec.snapshots,
            sampler=spec.sampler, quad=spec.quad)
    except (ValueError, RuntimeError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    rows = []
    gaps = []
    for row in out["rows"]:
        for kind in ("free", "periodic", "fixed"):
            est = row[kind]
            rows.append(PressureRowModel(
                seed=req.seed, n=float(est.n), bc=est.bc_kind, method=est.method,
                estimate=_est(est.log_z_over_volume)))
        gaps.append({
            "n": row["n"],
            "per_minus_free": _est(row["per_minus_free"]).model_dump(),
            "fixed_minus_free": _est(row["fixed_minus_free"]).model_dump(),
        })
    return PressureResponse(spec_hash=spec.spec_hash(), rows=rows, gaps=gaps,
                            gap_abs_nonincreasing_1sigma=out["gap_abs_nonincreasing_1sigma"])


@app.post("/energy-density", response_model=EnergyResponse)
def energy_density(req: OpRequest) -> EnergyResponse:
    spec = _spec_or_422(req.spec)
    bc = BoundaryCondition.periodic() if spec.bc_kind != "free" else BoundaryCondition.free()
    threads = _threads(req.threads)

    def one(n: int) -> EnergyRowModel:
        seed = derive_seeds(req.seed, f"energy-density/n{n}", 1)[0]
        curve = energy_density_curve(
            spec.params, bc, [n], chains=spec.chains, seed=seed,
            snapshots_per_chain=spec.snapshots, sampler=spec.sampler,
            quad=spec.quad)
        row = curve["rows"][0]
        palm = row["palm"]
        z = row["z"]
        return EnergyRowModel(
            seed=req.seed, n=float(row["n"]), bc=bc.kind,
            direct=_est(row["direct"]),
            palm=None if palm is None else _est(palm),
            diff_z=None if z is None or not math.isfinite(z) else float(z))

    rows = _map(one, list(spec.n_list), threads)
    return EnergyResponse(spec_hash=spec.spec_hash(), rows=rows)


@app.post("/palm-check", response_model=PalmResponse)
def palm_check(req: PalmRequest) -> PalmResponse:
    spec = _spec_or_422(req.spec)
    params = spec.params
    torus = Window.cube(spec.window.side, params.d, torus=True)
    threads = _threads(req.threads)

    def one(i: int) -> PalmReportModel:
        draw, check = derive_seeds(req.seed, f"palm-check/{i}", 2)
        cfg, _ = rejection_sample_gibbs(params, torus, BoundaryCondition.periodic(),
                                        np.random.default_rng(draw), quad=spec.quad)
        rep = palm_energy_identity_check(cfg, torus, params, quad=spec.quad,
                                         rng=np.random.default_rng(check))
        z = rep["z"]
        return PalmReportModel(
            seed=req.seed, n_points=rep["n_points"], lhs=_est(rep["lhs"]),
            rhs=_est(rep["rhs"]), diff=float(rep["diff"]),
            stderr=float(rep["stderr"]),
            z=None if not math.isfinite(z) else float(z), ok=bool(rep["ok"]))

    reports = _map(one, list(range(req.n_configs)), threads)
    return PalmResponse(spec_hash=spec.spec_hash(), window_side=torus.side,
                        reports=reports, ok=all(r.ok for r in reports))


@app.post("/discontinuity", response_model=DiscontinuityResponse)
def discontinuity(req: DiscontinuityRequest) -> DiscontinuityResponse:
    spec = _spec_or_422(req.spec)
    try:
        demo = discontinuity_demo(req.lattice_scale, list(spec.n_list),
                                  d=spec.params.d, r=spec.params.r,
                                  seed=req.seed, quad=spec.quad)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    out = [DiscontinuityRowModel(
        n=row["n"], good_count=row["good_count"],
        good_density=row["good_density"],
        good_density_stderr=row["good_density_stderr"],
        bad_violated=row["bad_violated"], bad_energy=_finite(row["bad_energy"]))
        for row in demo["rows"]]
    return DiscontinuityResponse(spec_hash=spec.spec_hash(),
                                 lattice_scale=req.lattice_scale, rows=out)


@app.post("/verify", response_model=VerifyResponse)
def verify(req: VerifyRequest) -> VerifyResponse:
    spec = _spec_or_422(req.spec)
    names = list(SUITES) if req.suite == "all" else [req.suite]
    if any(n not in SUITES for n in names):
        raise HTTPException(status_code=422,
                            detail=f"unknown suite {req.suite!r}; choose from {SUITES} or 'all'")
    threads = _threads(req.threads)
    results = _map(lambda name: run_suite(name, spec, req.seed), names, threads)
    suites = []
    all_ok = True
    n_checks = 0
    n_failed = 0
    for name, checks in zip(names, results):
        ok = all(c["ok"] for c in checks)
        all_ok = all_ok and ok
        n_checks += len(checks)
        n_failed += sum(not c["ok"] for c in checks)
        suites.append({"suite": name, "ok": ok, "checks": checks})
    return VerifyResponse(spec_hash=spec.spec_hash(), suite=req.suite,
                          master_seed=req.seed, ok=all_ok, n_checks=n_checks,
                          n_failed=n_failed, suites=suites)
