"""Hardcore exclusion plus depletion area energy under boundary conditions.

The energy of a configuration in a window is infinite when any pair of
hardcore balls with at least one member inside the window touches or overlaps
(touching counts), and otherwise equals the volume of the union of the
enlarged balls B(x, R_x + r) over the inside points, minus whatever the
boundary points already cover.  Three boundary readings are supported:

- free: nothing outside, the union is taken as is;
- periodic: the window is a torus, distances and volumes wrap;
- fixed: an explicit outer configuration blocks space; pairs between two
  outer points never contribute since neither member is inside.

The x-wise decomposition writes the area term as a sum over inside points of
``integral over B(x, R_x + r) of veto(z) / cover(z) dz`` where cover counts
the enlarged balls of the configuration covering z (at least the own one) and
veto kills z already covered by a boundary ball.  Summing over x recovers the
area term exactly, which the tests check, and the summand is the object whose
expectation enters the per-point energy density.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    Ball,
    QuadratureSpec,
    _box_points,
    _cover_mask,
    ball_volume,
    critical_ratio,
    k_intersection_volume,
    pair_intersection_volume,
    union_volume,
)
from .model import Configuration, Estimate, ModelParams, Window, restrict

Array = NDArray[np.float64]

__all__ = [
    "BoundaryCondition",
    "EnergyValue",
    "hardcore_violated",
    "hardcore_ok_insert",
    "exclusive_volume",
    "area_energy",
    "conditional_energy",
    "kbody_expansion",
    "xwise_palm_summand",
]


@dataclass(frozen=True)
class BoundaryCondition:
    """How the window boundary is read: free, periodic, or fixed outer points."""

    kind: str
    outer: Configuration | None = None

    FREE = "free"
    PERIODIC = "periodic"
    FIXED = "fixed"

    def __post_init__(self) -> None:
        if self.kind not in (self.FREE, self.PERIODIC, self.FIXED):
            raise ValueError(f"unknown boundary condition {self.kind!r}")
        if self.kind == self.FIXED and self.outer is None:
            raise ValueError("fixed boundary condition needs an outer configuration")
        if self.kind != self.FIXED and self.outer is not None:
            raise ValueError(f"{self.kind} boundary condition takes no outer configuration")

    @classmethod
    def free(cls) -> "BoundaryCondition":
        return cls(cls.FREE)

    @classmethod
    def periodic(cls) -> "BoundaryCondition":
        return cls(cls.PERIODIC)

    @classmethod
    def fixed(cls, outer: Configuration) -> "BoundaryCondition":
        return cls(cls.FIXED, outer)


@dataclass(frozen=True)
class EnergyValue:
    """Conditional energy: infinite on hardcore violation, else the area term."""

    finite: bool
    area: Estimate

    @property
    def value(self) -> float:
        return self.area.value if self.finite else math.inf


def _torus(window: Window) -> Window:
    return window if window.torus else Window(window.center, window.side, torus=True)


def _outer_arrays(window: Window, bc: BoundaryCondition) -> tuple[Array, Array]:
    """Boundary points strictly outside the window."""
    if bc.kind != BoundaryCondition.FIXED or bc.outer is None or bc.outer.n == 0:
        return np.empty((0, window.d)), np.empty(0)
    keep = ~window.contains(bc.outer.positions)
    return bc.outer.positions[keep], bc.outer.radii[keep]


def _outer_band(
    window: Window, bc: BoundaryCondition, reach: float
) -> tuple[Array, Array]:
    """Outer points whose ball of radius R + reach can meet the inside union."""
    pos, rad = _outer_arrays(window, bc)
    if len(pos) == 0:
        return pos, rad
    keep = window.box_distance(pos) <= rad + reach
    return pos[keep], rad[keep]


# ---- hardcore part ----


def hardcore_violated(
    config: Configuration, window: Window, bc: BoundaryCondition, params: ModelParams
) -> bool:
    """Any touching or overlapping pair with at least one member inside."""
    inner = restrict(config, window)
    pos, rad = inner.positions, inner.radii
    if inner.n >= 2:
        diff = pos[:, None, :] - pos[None, :, :]
        if bc.kind == BoundaryCondition.PERIODIC:
            diff = diff - window.side * np.round(diff / window.side)
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        lim = (rad[:, None] + rad[None, :]) ** 2
        iu = np.triu_indices(inner.n, 1)
        if np.any(d2[iu] <= lim[iu]):
            return True
    if bc.kind == BoundaryCondition.FIXED and inner.n:
        opos, orad = _outer_arrays(window, bc)
        if len(opos):
            diff = pos[:, None, :] - opos[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            if np.any(d2 <= (rad[:, None] + orad[None, :]) ** 2):
                return True
    return False


def hardcore_ok_insert(
    config: Configuration,
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    x: Array,
    R: float,
    exclude_row: int | None = None,
) -> bool:
    """Would adding (x, R) keep the configuration hardcore-feasible?

    Assumes the current configuration is feasible; only pairs involving the
    new point are checked.  ``exclude_row`` skips one existing row so moves
    can test a point's replacement against the others.
    """
    x = np.asarray(x, dtype=float)
    if config.n:
        diff = config.positions - x
        if bc.kind == BoundaryCondition.PERIODIC:
            diff = diff - window.side * np.round(diff / window.side)
        d2 = np.einsum("ij,ij->i", diff, diff)
        hit = d2 <= (config.radii + R) ** 2
        if exclude_row is not None:
            hit[exclude_row] = False
        if np.any(hit):
            return False
    if bc.kind == BoundaryCondition.FIXED:
        opos, orad = _outer_arrays(window, bc)
        if len(opos):
            diff = opos - x
            d2 = np.einsum("ij,ij->i", diff, diff)
            if np.any(d2 <= (orad + R) ** 2):
                return False
    return True


# ---- area part ----


def _enlarged(pos: Array, rad: Array, r: float) -> list[Ball]:
    return [Ball(tuple(p), float(R) + r) for p, R in zip(pos, rad)]


def exclusive_volume(
    config: Configuration,
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    x: Array,
    R: float,
    exclude_row: int | None = None,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
) -> Estimate:
    """|B(x, R + r) minus everything else|: the area change of one insertion.

    "Everything else" is the enlarged balls of the configuration (minus the
    excluded row, so translate and resize moves can price both endpoints) and
    the boundary balls.  This is the only volume a single-point move needs.
    """
    x = np.asarray(x, dtype=float)
    r = params.r
    rho = R + r
    torus = _torus(window) if bc.kind == BoundaryCondition.PERIODIC else None
    minus: list[Ball] = []
    if config.n:
        diff = config.positions - x
        if torus is not None:
            diff = diff - window.side * np.round(diff / window.side)
        d2 = np.einsum("ij,ij->i", diff, diff)
        near = d2 < (config.radii + r + rho) ** 2
        if exclude_row is not None:
            near[exclude_row] = False
        minus.extend(_enlarged(config.positions[near], config.radii[near], r))
    if bc.kind == BoundaryCondition.FIXED:
        opos, orad = _outer_arrays(window, bc)
        if len(opos):
            diff = opos - x
            d2 = np.einsum("ij,ij->i", diff, diff)
            onear = d2 < (orad + r + rho) ** 2
            minus.extend(_enlarged(opos[onear], orad[onear], r))
    return union_volume(params.d, [Ball(tuple(x), rho)], minus=minus, quad=quad, rng=rng,
                        torus=torus)


def _truncated_area(
    pos: Array,
    rad: Array,
    n_inner: int,
    d: int,
    r: float,
    torus: Window | None,
    quad: QuadratureSpec | None,
    rng: np.random.Generator | None,
) -> Estimate:
    """First three inclusion-exclusion orders over enlarged balls.

    ``pos`` lists inside points first, then boundary points; only subsets
    containing at least one of the first ``n_inner`` rows contribute, which
    cancels the pure-boundary part of the union difference exactly.  Valid
    as the full area term whenever 4-wise intersections of the enlarged
    balls vanish.
    """
    rho = rad + r
    n = len(pos)
    total = float(sum(ball_volume(d, rho_i) for rho_i in rho[:n_inner]))
    var = 0.0
    n_samples = 1
    diff = pos[:, None, :] - pos[None, :, :]
    if torus is not None:
        diff = diff - torus.side * np.round(diff / torus.side)
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    overlap = dist < (rho[:, None] + rho[None, :])
    np.fill_diagonal(overlap, False)
    for i in range(n):
        for j in range(i + 1, n):
            if i >= n_inner:
                continue  # pure boundary pair cancels
            if overlap[i, j]:
                b1 = Ball(tuple(pos[i]), float(rho[i]))
                b2 = Ball(tuple(pos[j]), float(rho[j]))
                total -= pair_intersection_volume(d, b1, b2, torus=torus)
    for i, j, k in itertools.combinations(range(n), 3):
        if i >= n_inner:
            continue  # sorted, so i >= n_inner means all three are boundary
        if overlap[i, j] and overlap[i, k] and overlap[j, k]:
            balls = [Ball(tuple(pos[t]), float(rho[t])) for t in (i, j, k)]
            est = k_intersection_volume(d, balls, quad=quad, rng=rng, torus=torus)
            total += est.value
            var += est.stderr ** 2
            n_samples += est.n_samples
    return Estimate(total, math.sqrt(var), n_samples)


def area_energy(
    config: Configuration,
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
    method: str = "auto",
) -> Estimate:
    """Volume of the enlarged union of inside points, boundary part removed.

    ``method`` is "quadrature" for the union estimator, "truncated" for the
    three-order inclusion-exclusion (exact only when 4-wise intersections
    vanish), or "auto": exact intervals for d = 1, truncated when the
    enlargement-to-radius ratio is below the critical one and the pooled
    configuration is hardcore-feasible, the union estimator otherwise.
    """
    if method not in ("auto", "quadrature", "truncated"):
        raise ValueError(f"unknown area method {method!r}")
    inner = restrict(config, window)
    r = params.r
    d = params.d
    torus = _torus(window) if bc.kind == BoundaryCondition.PERIODIC else None
    if inner.n == 0:
        return Estimate(0.0, 0.0, 1)
    reach = float(inner.radii.max()) + 2.0 * r
    opos, orad = _outer_band(window, bc, reach)

    if method == "auto" and d == 1:
        method = "quadrature"  # the union estimator is exact intervals in 1d
    if method == "auto":
        r_min = float(min(inner.radii.min(), orad.min() if len(orad) else math.inf))
        n_pool = inner.n + len(opos)
        regime = r_min > 0.0 and r <= critical_ratio(d) * r_min and n_pool <= 400
        if regime:
            pool = np.concatenate([inner.positions, opos])
            prad = np.concatenate([inner.radii, orad])
            diff = pool[:, None, :] - pool[None, :, :]
            if torus is not None:
                diff = diff - torus.side * np.round(diff / torus.side)
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            lim = (prad[:, None] + prad[None, :]) ** 2
            iu = np.triu_indices(len(pool), 1)
            regime = not np.any(d2[iu] <= lim[iu])
        method = "truncated" if regime else "quadrature"

    if method == "truncated":
        pool = np.concatenate([inner.positions, opos])
        prad = np.concatenate([inner.radii, orad])
        return _truncated_area(pool, prad, inner.n, d, r, torus, quad, rng)

    balls = _enlarged(inner.positions, inner.radii, r)
    minus = _enlarged(opos, orad, r)
    return union_volume(d, balls, minus=minus, quad=quad, rng=rng, torus=torus)


def conditional_energy(
    config: Configuration,
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
    method: str = "auto",
) -> EnergyValue:
    """Hardcore check plus area term; the area is skipped when infinite."""
    if hardcore_violated(config, window, bc, params):
        return EnergyValue(False, Estimate(0.0, 0.0, 1))
    return EnergyValue(True, area_energy(config, window, bc, params, quad, rng, method))


# ---- inclusion-exclusion diagnostics ----


def kbody_expansion(
    config: Configuration,
    params: ModelParams,
    k_max: int | None = None,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
) -> list[tuple[int, Estimate]]:
    """Signed inclusion-exclusion orders of the enlarged union, free reading.

    Returns [(k, term_k)] with term_k = (-1)^(k-1) * sum over k-subsets of the
    intersection volume.  Summing the values over all k up to n gives the
    union volume exactly.  Guarded to small configurations: the number of
    subsets grows as binom(n, k).
    """
    n = config.n
    k_top = n if k_max is None else min(k_max, n)
    if n > 14 and k_top > 3:
        raise ValueError(f"inclusion-exclusion over {n} points is too large; pass k_max <= 3")
    rho = config.radii + params.r
    pos = config.positions
    out: list[tuple[int, Estimate]] = []
    for k in range(1, k_top + 1):
        sign = 1.0 if k % 2 == 1 else -1.0
        total = 0.0
        var = 0.0
        count = 1
        for subset in itertools.combinations(range(n), k):
            balls = [Ball(tuple(pos[i]), float(rho[i])) for i in subset]
            est = k_intersection_volume(params.d, balls, quad=quad, rng=rng)
            total += est.value
            var += est.stderr ** 2
            count += est.n_samples
        out.append((k, Estimate(sign * total, math.sqrt(var), count)))
    return out


# ---- x-wise decomposition ----


def _xwise_exact_1d(
    x: float,
    rho_x: float,
    other_c: Array,
    other_rho: Array,
    minus_c: Array,
    minus_rho: Array,
    side: float | None,
) -> float:
    """Piecewise-constant sweep of veto(z) / cover(z) over [x - rho_x, x + rho_x].

    On a torus of given side, every tiling image of the other intervals that
    meets the base interval is enumerated, so the sweep stays exact.
    """
    a, b = x - rho_x, x + rho_x

    def images(c: float, rho: float) -> list[float]:
        if side is None:
            return [c] if c - rho < b and c + rho > a else []
        k_lo = math.ceil((a - rho - c) / side)
        k_hi = math.floor((b + rho - c) / side)
        return [c + k * side for k in range(k_lo, k_hi + 1)]

    segs: list[tuple[float, float]] = []
    for c, rho in zip(other_c, other_rho):
        segs.extend((ic - rho, ic + rho) for ic in images(c, rho))
    vetos: list[tuple[float, float]] = []
    for c, rho in zip(minus_c, minus_rho):
        vetos.extend((ic - rho, ic + rho) for ic in images(c, rho))

    cuts = sorted({a, b, *(v for s in segs for v in s), *(v for s in vetos for v in s)})
    cuts = [v for v in cuts if a <= v <= b]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        if any(s <= mid <= e for s, e in vetos):
            continue
        cover = 1 + sum(1 for s, e in segs if s <= mid <= e)
        total += (hi - lo) / cover
    return total


def xwise_palm_summand(
    config: Configuration,
    row: int,
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
) -> Estimate:
    """The one-point share of the area term attached to configuration row.

    integral over B(x, R_x + r) of veto(z) / cover(z) dz, where cover counts
    the enlarged balls of the configuration covering z (the own ball always
    does) and veto removes z covered by a boundary ball.  Summing over all
    rows gives the area term exactly.
    """
    if not (0 <= row < config.n):
        raise IndexError(f"row {row} out of range for n={config.n}")
    r = params.r
    d = params.d
    x = config.positions[row]
    rho_x = float(config.radii[row]) + r
    torus = _torus(window) if bc.kind == BoundaryCondition.PERIODIC else None

    mask = np.ones(config.n, dtype=bool)
    mask[row] = False
    oc, orad = config.positions[mask], config.radii[mask]
    reach = rho_x + (float(orad.max()) if len(orad) else 0.0) + 2.0 * r
    mc, mrad = _outer_band(window, bc, reach)

    # a wrapping ball of radius <= side / 2 has disjoint tiling images, so
    # cover(z) can count one entry per point; larger radii would double count
    if torus is not None:
        top = max(rho_x, float(orad.max()) + r if len(orad) else 0.0)
        if top > 0.5 * window.side + 1e-12:
            raise ValueError("torus summand requires enlarged radius <= side / 2")

    if d == 1:
        val = _xwise_exact_1d(
            float(x[0]), rho_x, oc[:, 0], orad + r, mc[:, 0] if len(mc) else np.empty(0),
            mrad + r, window.side if torus is not None else None,
        )
        return Estimate(val, 0.0, 1)

    quad = quad or QuadratureSpec()
    rng = rng if rng is not None else np.random.default_rng(0)
    blo, bhi = x - rho_x, x + rho_x
    vol = float(np.prod(bhi - blo))
    phi1 = ball_volume(d, rho_x)
    floor = 1e-9 * phi1 + 1e-300
    o_rho = orad + r
    m_rho = mrad + r
    ppu = quad.points_per_unit_volume
    prev = None
    val = var = 0.0
    n_total = 0
    for _ in range(quad.max_doublings + 1):
        m = max(quad.min_points, int(math.ceil(ppu * vol)))
        pts = _box_points(blo, bhi, m, rng, quad.scheme)
        m = len(pts)
        n_total += m
        delta = pts - x
        own = np.einsum("ij,ij->i", delta, delta) <= rho_x * rho_x
        f = np.zeros(m)
        if own.any():
            sub = pts[own]
            cover = 1 + _cover_mask(sub, oc, o_rho, torus).sum(axis=1)
            good = np.ones(len(sub), dtype=bool)
            if len(mc):
                good = ~_cover_mask(sub, mc, m_rho, torus).any(axis=1)
            f[own] = good / cover
        mean = float(np.mean(f))
        val = vol * mean
        var = vol * vol * float(np.var(f)) / (m - 1) if m > 1 else 0.0
        scale = max(abs(val), floor)
        if prev is not None and (
            abs(val - prev) <= quad.target_rel_error * scale
            or math.sqrt(var) <= quad.target_rel_error * scale
        ):
            break
        prev = val
        ppu *= 2.0
    return Estimate(val, math.sqrt(var), n_total)
