"""Volumes of balls, lenses, k-wise intersections, and unions of balls.

Closed forms cover single balls and pairs in d in {1, 2, 3}; every d = 1 set
operation is exact interval arithmetic; higher-order intersections and unions
use seeded stratified quadrature with a reported 1-sigma error, refined by
doubling the point budget until two successive estimates agree within the
target relative error.

Torus conventions: a ball on a torus of side L must have radius <= L / 2 so
that its tiling images are disjoint and the euclidean image sums below are
exact.  Pair volumes sum the lens over the 3^d neighboring images; k-wise
membership uses the minimal-image distance, which is equivalent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .model import Estimate, Window

Array = NDArray[np.float64]

__all__ = [
    "Ball",
    "QuadratureSpec",
    "IntervalSet",
    "ball_volume",
    "pair_intersection_volume",
    "k_intersection_volume",
    "union_volume",
    "cover_counts",
    "critical_ratio",
]

# unit-ball volumes v_d for d = 1, 2, 3
UNIT_BALL_VOLUME = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius) and self.radius >= 0.0):
            raise ValueError(f"radius must be finite and >= 0, got {self.radius}")


@dataclass(frozen=True)
class QuadratureSpec:
    """Stratified sampling budget and stopping rule for volume estimates."""

    points_per_unit_volume: float = 128.0
    scheme: str = "stratified"  # or "lattice+random-shift"
    target_rel_error: float = 1.0e-3
    max_doublings: int = 8
    min_points: int = 32

    def __post_init__(self) -> None:
        if self.points_per_unit_volume <= 0.0:
            raise ValueError("points_per_unit_volume must be > 0")
        if self.scheme not in ("stratified", "lattice+random-shift"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if self.target_rel_error <= 0.0:
            raise ValueError("target_rel_error must be > 0")


def ball_volume(d: int, radius: float) -> float:
    """v_d * radius^d with v_1 = 2, v_2 = pi, v_3 = 4 pi / 3."""
    if d not in UNIT_BALL_VOLUME:
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if radius < 0.0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    return UNIT_BALL_VOLUME[d] * radius ** d


def critical_ratio(d: int) -> float:
    """Largest enlargement-to-radius ratio below which 4-wise terms vanish."""
    if d == 2:
        return math.sqrt(2.0) - 1.0
    if d == 3:
        return math.sqrt(1.5) - 1.0
    raise ValueError(f"critical ratio defined for d in {{2, 3}}, got {d}")


# ---- exact 1d interval arithmetic --------------------------------------------


class IntervalSet:
    """Finite union of disjoint intervals on the line, kept sorted and merged."""

    __slots__ = ("segs",)

    def __init__(self, segs=()):
        raw = sorted((float(a), float(b)) for a, b in segs if b > a)
        merged: list[tuple[float, float]] = []
        for a, b in raw:
            if merged and a <= merged[-1][1]:
                prev = merged[-1]
                merged[-1] = (prev[0], max(prev[1], b))
            else:
                merged.append((a, b))
        self.segs = merged

    def length(self) -> float:
        return float(sum(b - a for a, b in self.segs))

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.segs + other.segs)

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        for a, b in self.segs:
            for c, e in other.segs:
                if e <= a:
                    continue
                if c >= b:
                    break
                out.append((max(a, c), min(b, e)))
        return IntervalSet(out)

    def subtract(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        for a, b in self.segs:
            cur = a
            for c, e in other.segs:
                if e <= cur:
                    continue
                if c >= b:
                    break
                if c > cur:
                    out.append((cur, c))
                cur = max(cur, e)
                if cur >= b:
                    break
            if cur < b:
                out.append((cur, b))
        return IntervalSet(out)


def _wrap_segment(a: float, b: float, lo: float, side: float) -> list[tuple[float, float]]:
    """Pieces of [a, b] mapped into [lo, lo + side) by periodic identification."""
    if b - a >= side:
        return [(lo, lo + side)]
    a_w = lo + math.fmod(a - lo, side)
    if a_w < lo:
        a_w += side
    b_w = a_w + (b - a)
    if b_w <= lo + side:
        return [(a_w, b_w)]
    return [(a_w, lo + side), (lo, b_w - side)]


def _interval_union_1d(centers: Array, radii: Array, torus: Window | None) -> IntervalSet:
    segs: list[tuple[float, float]] = []
    if torus is None:
        for c, rho in zip(centers[:, 0], radii):
            if rho > 0.0:
                segs.append((c - rho, c + rho))
    else:
        lo = float(torus.lo[0])
        for c, rho in zip(centers[:, 0], radii):
            if rho > 0.0:
                segs.extend(_wrap_segment(c - rho, c + rho, lo, torus.side))
    return IntervalSet(segs)


# ---- pair closed forms --------------------------------------------------------


def _clamp(v: float) -> float:
    return max(-1.0, min(1.0, v))


def _pair_volume_euclid(d: int, s: float, r1: float, r2: float) -> float:
    """|B(0, r1) cap B(s e_1, r2)| in dimension d."""
    if s >= r1 + r2 or min(r1, r2) == 0.0:
        return 0.0
    if s <= abs(r1 - r2):
        return ball_volume(d, min(r1, r2))
    if d == 1:
        return r1 + r2 - s
    if d == 2:
        a1 = math.acos(_clamp((s * s + r1 * r1 - r2 * r2) / (2.0 * s * r1)))
        a2 = math.acos(_clamp((s * s + r2 * r2 - r1 * r1) / (2.0 * s * r2)))
        tri = 0.5 * math.sqrt(
            max(0.0, (-s + r1 + r2) * (s + r1 - r2) * (s - r1 + r2) * (s + r1 + r2))
        )
        return r1 * r1 * a1 + r2 * r2 * a2 - tri
    # d == 3: sum of the two spherical caps cut by the radical plane
    d1 = (s * s - r2 * r2 + r1 * r1) / (2.0 * s)
    h1 = r1 - d1
    h2 = r2 - (s - d1)
    return (math.pi / 3.0) * (h1 * h1 * (3.0 * r1 - h1) + h2 * h2 * (3.0 * r2 - h2))


def _check_torus_radii(radii, torus: Window) -> None:
    if np.any(np.asarray(radii) > 0.5 * torus.side + 1e-12):
        raise ValueError("torus volume formulas require radius <= side / 2")


def pair_intersection_volume(d: int, b1: Ball, b2: Ball, torus: Window | None = None) -> float:
    """Exact lens volume of two balls; on a torus, summed over images."""
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    c1 = np.asarray(b1.center, dtype=float)
    c2 = np.asarray(b2.center, dtype=float)
    if torus is None:
        return _pair_volume_euclid(d, float(np.linalg.norm(c2 - c1)), b1.radius, b2.radius)
    _check_torus_radii([b1.radius, b2.radius], torus)
    total = 0.0
    for ks in itertools.product((-1.0, 0.0, 1.0), repeat=d):
        s = float(np.linalg.norm(c2 + torus.side * np.asarray(ks) - c1))
        total += _pair_volume_euclid(d, s, b1.radius, b2.radius)
    return total


# ---- stratified box sampling ---------------------------------------------------


def _box_points(lo: Array, hi: Array, m: int, rng: np.random.Generator, scheme: str) -> Array:
    """About m points filling [lo, hi) one per congruent grid cell."""
    edges = hi - lo
    d = len(lo)
    vol = float(np.prod(edges))
    per_len = (m / vol) ** (1.0 / d)
    counts = np.maximum(1, np.rint(edges * per_len).astype(int))
    grids = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1).astype(float)
    cell = edges / counts
    if scheme == "stratified":
        return lo + (idx + rng.random(idx.shape)) * cell
    # one uniform shift for the whole lattice, wrapped back into the box
    return lo + np.mod(idx + 0.5 + rng.random(d), counts) * cell


def _cover_mask(pts: Array, centers: Array, radii: Array, torus: Window | None) -> Array:
    """Boolean (m, k): point i inside ball j (minimal-image metric on a torus)."""
    if len(centers) == 0:
        return np.zeros((len(pts), 0), dtype=bool)
    delta = pts[:, None, :] - centers[None, :, :]
    if torus is not None:
        delta = delta - torus.side * np.round(delta / torus.side)
    dist2 = np.einsum("mkd,mkd->mk", delta, delta)
    return dist2 <= radii[None, :] ** 2


def cover_counts(pts: Array, centers: Array, radii: Array, torus: Window | None = None):
    """How many of the balls cover each point (minimal image when toroidal)."""
    return _cover_mask(np.atleast_2d(np.asarray(pts, dtype=float)), centers, radii, torus).sum(
        axis=1
    )


def _ball_arrays(balls, d: int) -> tuple[Array, Array]:
    centers = []
    radii = []
    for b in balls:
        if isinstance(b, Ball):
            c, rho = b.center, b.radius
        else:
            c, rho = b
        c = np.asarray(c, dtype=float).reshape(-1)
        if len(c) != d:
            raise ValueError(f"ball center has dimension {len(c)}, expected {d}")
        centers.append(c)
        radii.append(float(rho))
    if not centers:
        return np.empty((0, d)), np.empty(0)
    return np.asarray(centers), np.asarray(radii)


def _torus_images(centers: Array, radii: Array, torus: Window) -> tuple[Array, Array]:
    """Tiling images whose ball meets the closed fundamental box."""
    _check_torus_radii(radii, torus)
    lo, hi, side = torus.lo, torus.hi, torus.side
    out_c: list[Array] = []
    out_r: list[float] = []
    for c, rho in zip(centers, radii):
        axes = []
        for a in range(torus.d):
            k_lo = math.ceil((lo[a] - rho - c[a]) / side)
            k_hi = math.floor((hi[a] + rho - c[a]) / side)
            axes.append(range(k_lo, k_hi + 1))
        for ks in itertools.product(*axes):
            out_c.append(c + side * np.asarray(ks, dtype=float))
            out_r.append(float(rho))
    if not out_c:
        return np.empty((0, torus.d)), np.empty(0)
    return np.asarray(out_c), np.asarray(out_r)


# ---- union of balls -------------------------------------------------------------


def _union_pass(
    boxes: list[tuple[Array, Array]],
    centers: Array,
    radii: Array,
    minus_c: Array,
    minus_r: Array,
    ppu: float,
    quad: QuadratureSpec,
    rng: np.random.Generator,
) -> tuple[float, float, int]:
    total = 0.0
    var = 0.0
    n_pts = 0
    r2 = radii ** 2
    for i, (blo, bhi) in enumerate(boxes):
        vol = float(np.prod(bhi - blo))
        if vol <= 0.0:
            continue
        m = max(quad.min_points, int(math.ceil(ppu * vol)))
        pts = _box_points(blo, bhi, m, rng, quad.scheme)
        m = len(pts)
        n_pts += m
        # owner rule: count a point only in the box of the lowest-index ball
        # containing it, so overlapping boxes never double count
        delta = pts - centers[i]
        inside = np.einsum("md,md->m", delta, delta) <= r2[i]
        if i > 0 and inside.any():
            sub = pts[inside]
            prior = _cover_mask(sub, centers[:i], radii[:i], None).any(axis=1)
            tmp = inside.copy()
            tmp[np.flatnonzero(inside)[prior]] = False
            inside = tmp
        if len(minus_c) and inside.any():
            sub = pts[inside]
            cut = _cover_mask(sub, minus_c, minus_r, None).any(axis=1)
            tmp = inside.copy()
            tmp[np.flatnonzero(inside)[cut]] = False
            inside = tmp
        p = float(np.mean(inside))
        total += vol * p
        if m > 1:
            var += vol * vol * p * (1.0 - p) / (m - 1)
    return total, var, n_pts


def union_volume(
    d: int,
    balls,
    minus=(),
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
    torus: Window | None = None,
) -> Estimate:
    """Volume of (union of balls) minus (union of the ``minus`` balls).

    Exact for d = 1; otherwise a stratified quadrature estimate over the
    per-ball bounding boxes with a valid 1-sigma stderr, refined by doubling.
    """
    quad = quad or QuadratureSpec()
    centers, radii = _ball_arrays(balls, d)
    minus_c, minus_r = _ball_arrays(minus, d)
    if torus is not None and torus.d != d:
        raise ValueError("torus window dimension mismatch")

    if d == 1:
        if torus is not None:
            _check_torus_radii(radii, torus)
            _check_torus_radii(minus_r, torus)
        u = _interval_union_1d(centers.reshape(-1, 1), radii, torus)
        if len(minus_c):
            u = u.subtract(_interval_union_1d(minus_c.reshape(-1, 1), minus_r, torus))
        return Estimate(u.length(), 0.0, 1)

    keep = radii > 0.0
    centers, radii = centers[keep], radii[keep]
    if len(centers) == 0:
        return Estimate(0.0, 0.0, 1)
    if torus is not None:
        _check_torus_radii(radii, torus)

    # exact shortcut: pairwise disjoint balls (minimal-image distance on a
    # torus, where each wrapped ball keeps its full volume) and no subtraction
    if len(minus_c) == 0 and len(centers) <= 64:
        diff = centers[:, None, :] - centers[None, :, :]
        if torus is not None:
            diff = diff - torus.side * np.round(diff / torus.side)
        dist = np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))
        if np.all(dist + np.eye(len(centers)) * 1e18 > radii[:, None] + radii[None, :]):
            return Estimate(float(sum(ball_volume(d, rho) for rho in radii)), 0.0, 1)

    clip = None
    if torus is not None:
        centers, radii = _torus_images(centers, radii, torus)
        minus_c, minus_r = _torus_images(minus_c, minus_r, torus)
        clip = (torus.lo, torus.hi)

    boxes = []
    for c, rho in zip(centers, radii):
        blo, bhi = c - rho, c + rho
        if clip is not None:
            blo, bhi = np.maximum(blo, clip[0]), np.minimum(bhi, clip[1])
        if np.all(bhi > blo):
            boxes.append((blo, bhi))
        else:
            boxes.append((blo, blo))  # degenerate, skipped by zero volume

    rng = rng if rng is not None else np.random.default_rng(0)
    char = float(sum(ball_volume(d, rho) for rho in radii))
    floor = 1e-9 * char + 1e-300
    ppu = quad.points_per_unit_volume
    prev = None
    val = var = 0.0
    n_total = 0
    for _ in range(quad.max_doublings + 1):
        val, var, n_pass = _union_pass(boxes, centers, radii, minus_c, minus_r, ppu, quad, rng)
        n_total += n_pass
        scale = max(abs(val), floor)
        if prev is not None and (
            abs(val - prev) <= quad.target_rel_error * scale
            or math.sqrt(var) <= quad.target_rel_error * scale
        ):
            break
        prev = val
        ppu *= 2.0
    return Estimate(val, math.sqrt(var), max(n_total, 1))


# ---- k-wise intersections --------------------------------------------------------


def k_intersection_volume(
    d: int,
    balls,
    quad: QuadratureSpec | None = None,
    rng: np.random.Generator | None = None,
    torus: Window | None = None,
) -> Estimate:
    """Unsigned volume of the common intersection of k balls.

    Exact for k <= 2 (and for d = 1); otherwise stratified quadrature over the
    intersection of the bounding boxes, with pairwise-distance early exit.
    """
    quad = quad or QuadratureSpec()
    centers, radii = _ball_arrays(balls, d)
    k = len(centers)
    if k == 0:
        raise ValueError("need at least one ball")
    if torus is not None:
        _check_torus_radii(radii, torus)
    if np.any(radii == 0.0) and k > 1:
        return Estimate(0.0, 0.0, 1)
    if k == 1:
        return Estimate(ball_volume(d, float(radii[0])), 0.0, 1)

    # pairwise early exit (minimal-image distance when toroidal)
    for i in range(k):
        for j in range(i + 1, k):
            delta = centers[j] - centers[i]
            if torus is not None:
                delta = delta - torus.side * np.round(delta / torus.side)
            if float(np.linalg.norm(delta)) >= radii[i] + radii[j]:
                return Estimate(0.0, 0.0, 1)

    if k == 2:
        b1 = Ball(tuple(centers[0]), float(radii[0]))
        b2 = Ball(tuple(centers[1]), float(radii[1]))
        return Estimate(pair_intersection_volume(d, b1, b2, torus=torus), 0.0, 1)

    if d == 1:
        segs = None
        for c, rho in zip(centers[:, 0], radii):
            cur = IntervalSet([(c - rho, c + rho)]) if torus is None else IntervalSet(
                _wrap_segment(c - rho, c + rho, float(torus.lo[0]), torus.side)
            )
            segs = cur if segs is None else segs.intersect(cur)
        return Estimate(segs.length(), 0.0, 1)

    if torus is None:
        blo = np.max(centers - radii[:, None], axis=0)
        bhi = np.min(centers + radii[:, None], axis=0)
        if np.any(bhi <= blo):
            return Estimate(0.0, 0.0, 1)
    else:
        # the intersection lifts into the first ball's own box; per-image box
        # intersections could clip lobes covered by a different image
        blo = centers[0] - radii[0]
        bhi = centers[0] + radii[0]

    rng = rng if rng is not None else np.random.default_rng(0)
    char = ball_volume(d, float(radii.min()))
    floor = 1e-9 * char + 1e-300
    r2 = radii ** 2
    ppu = quad.points_per_unit_volume
    prev = None
    val = var = 0.0
    n_total = 0
    vol = float(np.prod(bhi - blo))
    for _ in range(quad.max_doublings + 1):
        m = max(quad.min_points, int(math.ceil(ppu * vol)))
        pts = _box_points(blo, bhi, m, rng, quad.scheme)
        m = len(pts)
        n_total += m
        delta = pts[:, None, :] - centers[None, :, :]
        if torus is not None:
            delta = delta - torus.side * np.round(delta / torus.side)
        inside = np.all(np.einsum("mkd,mkd->mk", delta, delta) <= r2[None, :], axis=1)
        p = float(np.mean(inside))
        val = vol * p
        var = vol * vol * p * (1.0 - p) / (m - 1) if m > 1 else 0.0
        scale = max(abs(val), floor)
        if prev is not None and (
            abs(val - prev) <= quad.target_rel_error * scale
            or math.sqrt(var) <= quad.target_rel_error * scale
        ):
            break
        prev = val
        ppu *= 2.0
    return Estimate(val, math.sqrt(var), n_total)
