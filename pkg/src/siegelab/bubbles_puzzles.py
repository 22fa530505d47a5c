"""Bubbles, puzzle regions along the unit circle, and fiber diameters.

Regions near the circle are rasters. A pixel belongs to a puzzle piece when
its Böttcher angle lies between the wakes of the two endpoints of the piece's
base arc and its potential is below the depth threshold; pixels inside the
unit disk are classified through their reflection ``1/conj(z)``. Pullbacks
along the circle are computed by iterating pixel centres forward, looking the
images up in the previous region, and keeping the connected component that
contains the new base arc. Grid edges whose images cross the circle are cut
unless the crossing happens inside the allowed arc, which realizes the slits.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from .blaschke_family import HermanBlaschke, critical_points, fixed_points
from .cf_engine import RotationNumber, return_times, value
from .rays_potentials import (basin_grid, equipotential, kappa, trace_external_ray, TWO_PI)

LOG2 = math.log(2.0)
WAKE_TERMS = 64
EXTRA_ITERATIONS = 6
MAX_GROWTH = 6
CRITICAL_RADIUS = 2.5  # pixels around a critical point of the pullback map removed before labelling


class BranchAmbiguity(RuntimeError):
    pass


class NestingViolation(RuntimeError):
    pass


class CriticalCollision(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# arcs and orbit combinatorics


@dataclass(frozen=True)
class CircleArc:
    """Counter-clockwise arc from ``start`` to ``end`` in turns (fractions of a full turn)."""

    start: float
    end: float

    @property
    def length(self) -> float:
        L = (self.end - self.start) % 1.0
        return 1.0 if L == 0 else L

    @property
    def midpoint(self) -> float:
        return (self.start + 0.5 * self.length) % 1.0

    def contains(self, x, margin: float = 0.0):
        off = (np.asarray(x) - self.start - margin) % 1.0
        return off < self.length - 2 * margin

    def chord(self) -> float:
        return 2 * math.sin(math.pi * min(self.length, 0.5))

    def angles(self) -> tuple[float, float]:
        return (TWO_PI * self.start, TWO_PI * self.end)

    def to_json(self):
        return {"start": self.start, "end": self.end}

    @classmethod
    def from_json(cls, data):
        return cls(float(data["start"]), float(data["end"]))


class OrbitCombinatorics:
    """Positions of the critical orbit c_k = F^k(1) on the circle and the wakes at its backward orbit.

    ``position(k)`` is the actual location of c_k in turns; ``coordinate(k)``
    is the matching point {k rho} of the rigid rotation. The wake of c_{-j} is
    the interval of external angles between the two rays landing at c_{-j};
    for degree-two maps it has length 2^{-j-1}.
    """

    def __init__(self, F: HermanBlaschke, rho: RotationNumber, wake_terms: int = WAKE_TERMS):
        if F.d != 2:
            raise NotImplementedError("wake angles are implemented for degree two at infinity")
        self.F = F
        self.rho = rho
        self.value = float(value(rho))
        self.times = return_times(rho)
        self.lift = F.circle_lift()
        self._forward = [0.0]
        self._backward = [0.0]
        crit = [c.location for c in critical_points(F).points if c.on_circle]
        self.critical_points = tuple(complex(c) for c in crit)
        base = (math.atan2(self.critical_points[0].imag, self.critical_points[0].real) / TWO_PI) % 1.0
        self._base = base
        self._forward[0] = base
        self._backward[0] = base
        j = np.arange(wake_terms)
        self._s = (-j * self.value) % 1.0
        self._w = 0.5 ** (j + 1.0)
        self.alpha = (0.5 + np.sum(self._w[1:][self._s[1:] < self.value])) % 1.0

    def coordinate(self, k: int) -> float:
        return (k * self.value) % 1.0

    def position(self, k: int) -> float:
        if k >= 0:
            while len(self._forward) <= k:
                self._forward.append(self.lift.scalar(self._forward[-1]) % 1.0)
            return self._forward[k]
        while len(self._backward) <= -k:
            self._backward.append(self._inverse(self._backward[-1]))
        return self._backward[-k]

    def point(self, k: int) -> complex:
        return complex(np.exp(1j * TWO_PI * self.position(k)))

    def _inverse(self, y: float) -> float:
        g = self.lift.scalar
        lo, hi = y - 2.0, y + 1.0
        while g(lo) > y:
            lo -= 1.0
        while g(hi) < y:
            hi += 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if g(mid) < y:
                lo = mid
            else:
                hi = mid
        return (0.5 * (lo + hi)) % 1.0

    def pull_back(self, x: float, k: int) -> float:
        for _ in range(k):
            x = self._inverse(x)
        return x

    def push_forward(self, x: float, k: int) -> float:
        for _ in range(k):
            x = self.lift.scalar(x) % 1.0
        return x

    def theta_minus_at(self, s: float) -> float:
        return float((self.alpha + np.sum(self._w[self._s < s])) % 1.0)

    def wake(self, j: int) -> tuple[float, float]:
        """(theta_minus, theta_plus) of the rays landing at c_{-j}."""
        if j >= len(self._s):
            raise ValueError(f"wake of c_-{j} exceeds the {len(self._s)} tabulated terms")
        lo = self.theta_minus_at(self._s[j])
        return lo, (lo + self._w[j]) % 1.0

    def arc(self, i: int, j: int, containing: int) -> CircleArc:
        """The arc with endpoints c_i, c_j that contains c_containing."""
        a, b = self.position(i), self.position(j)
        arc = CircleArc(a, b)
        if not arc.contains(self.position(containing)):
            arc = CircleArc(b, a)
        return arc

    def j_minus(self, n: int) -> CircleArc:
        q = self.times.q
        return self.arc(-q[n], -q[n + 1], 0)

    def j_plus(self, n: int) -> CircleArc:
        q, r = self.times.q, self.times.r
        return self.arc(q[n], q[n + 1], r[n])

    def gap(self, s: float, depth: int) -> tuple[int, int]:
        """Indices (i, j) such that the gap of {c_-k : k <= depth} containing s runs ccw from c_-i to c_-j."""
        coords = (-np.arange(depth + 1) * self.value) % 1.0
        off = (coords - s) % 1.0
        after = int(np.argmin(np.where(off > 0, off, 2.0)))
        before = int(np.argmax(np.where(off > 0, off, -1.0)))
        if depth == 0:
            return 0, 0
        return before, after

    def gap_arc(self, i: int, j: int) -> CircleArc:
        return CircleArc(self.position(-i), self.position(-j))

    def angle_window(self, i: int, j: int) -> tuple[float, float]:
        """External angles strictly between the wakes of c_-i and c_-j, as (start, length)."""
        start = self.wake(i)[1]
        stop = self.wake(j)[0]
        length = (stop - start) % 1.0
        if i == j:
            length = (stop - start) % 1.0 or 1.0
        return start, length


# ---------------------------------------------------------------------------
# raster regions


@dataclass(frozen=True)
class RasterWindow:
    center: complex
    half_width: float
    size: int

    @property
    def h(self) -> float:
        return 2 * self.half_width / self.size

    def points(self) -> np.ndarray:
        h = self.h
        xs = self.center.real - self.half_width + h * (np.arange(self.size) + 0.5)
        ys = self.center.imag - self.half_width + h * (np.arange(self.size) + 0.5)
        return xs[None, :] + 1j * ys[:, None]

    def index(self, w):
        h = self.h
        with np.errstate(invalid="ignore"):
            fx = (w.real - (self.center.real - self.half_width)) / h
            fy = (w.imag - (self.center.imag - self.half_width)) / h
            ok = np.isfinite(fx) & np.isfinite(fy) & (fx >= 0) & (fx < self.size) & (fy >= 0) & (fy < self.size)
        ix = np.where(ok, fx, 0).astype(np.int64)
        iy = np.where(ok, fy, 0).astype(np.int64)
        return iy, ix, ok

    def grown(self, factor: float) -> "RasterWindow":
        return RasterWindow(self.center, self.half_width * factor, self.size)

    def resized(self, size: int) -> "RasterWindow":
        return RasterWindow(self.center, self.half_width, size)

    def to_json(self):
        return {"center": [self.center.real, self.center.imag], "half_width": self.half_width,
                "size": self.size}


@dataclass
class PlanarRegion:
    """A region described by its outer boundary polyline, base arc, depth tag and slits."""

    boundary: np.ndarray
    base_arc: CircleArc | None
    depth: int
    slits: list[CircleArc] = field(default_factory=list)

    def is_simple(self) -> bool:
        pts = np.column_stack([self.boundary.real, self.boundary.imag])
        return bool(shapely.LinearRing(pts).is_simple)

    def polygon(self):
        return shapely.Polygon(np.column_stack([self.boundary.real, self.boundary.imag]))

    def contains(self, w):
        """Closed containment (boundary points count as inside)."""
        w = np.asarray(w, dtype=complex)
        return shapely.intersects_xy(self.polygon(), w.real, w.imag)

    def interior(self, w, h: float):
        """Open containment with circle points outside the base arc removed, within a band of width h."""
        w = np.asarray(w, dtype=complex)
        inside = shapely.contains_xy(self.polygon(), w.real, w.imag)
        return inside & ~_off_arc_band(w, self.base_arc, h)

    def bounds(self) -> tuple[complex, complex]:
        z = self.boundary
        return complex(z.real.min(), z.imag.min()), complex(z.real.max(), z.imag.max())

    def signed_area(self) -> float:
        z = self.boundary
        return 0.5 * float(np.sum(z.real * np.roll(z.imag, -1) - np.roll(z.real, -1) * z.imag))

    def circle_contacts(self, tol: float) -> np.ndarray:
        """Angles (turns) of boundary vertices lying within ``tol`` of the unit circle."""
        near = np.abs(np.abs(self.boundary) - 1) < tol
        return (np.angle(self.boundary[near]) / TWO_PI) % 1.0

    def check_base_arc(self, tol: float) -> bool:
        """Boundary points on the circle lie in the closure of the base arc or a slit, up to ``tol`` turns."""
        if self.base_arc is None:
            return True
        pts = self.circle_contacts(tol)
        arcs = [self.base_arc] + list(self.slits)
        ok = np.zeros(pts.shape, dtype=bool)
        for a in arcs:
            ok |= a.contains(pts, -tol)
        return bool(ok.all())

    def to_json(self):
        return {"boundary": [[float(z.real), float(z.imag)] for z in self.boundary],
                "base_arc": self.base_arc.to_json() if self.base_arc else None,
                "depth": self.depth,
                "slits": [s.to_json() for s in self.slits]}

    @classmethod
    def from_json(cls, data):
        pts = np.array([complex(x, y) for x, y in data["boundary"]])
        arc = CircleArc.from_json(data["base_arc"]) if data.get("base_arc") else None
        return cls(pts, arc, int(data["depth"]), [CircleArc.from_json(s) for s in data.get("slits", [])])


def save_polyline_f32(path, points) -> None:
    """Binary polyline: uint32 count, then interleaved little-endian float32 (re, im)."""
    pts = np.asarray(points, dtype=complex)
    buf = np.empty(2 * pts.size, dtype="<f4")
    buf[0::2] = pts.real
    buf[1::2] = pts.imag
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", pts.size))
        fh.write(buf.tobytes())


def load_polyline_f32(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<I", fh.read(4))
        buf = np.frombuffer(fh.read(8 * n), dtype="<f4")
    return buf[0::2].astype(float) + 1j * buf[1::2].astype(float)


@dataclass
class RasterRegion:
    window: RasterWindow
    mask: np.ndarray
    base_arc: CircleArc | None
    depth: int
    label: str = ""
    critical_clusters: int = 0

    @property
    def h(self) -> float:
        return self.window.h

    def contains(self, w, reflect: bool = True):
        """Nearest-pixel membership; points inside the disk are looked up through their reflection."""
        w = np.asarray(w, dtype=complex)
        if reflect:
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(np.abs(w) < 1, 1 / np.conj(w), w)
        iy, ix, ok = self.window.index(w)
        out = np.zeros(w.shape, dtype=bool)
        out[ok] = self.mask[iy[ok], ix[ok]]
        return out

    def interior(self, w, h: float):
        """Direct mask lookup with circle points outside the base arc removed (slits)."""
        w = np.asarray(w, dtype=complex)
        return self.contains(w, reflect=False) & ~_off_arc_band(w, self.base_arc, h)

    def bounds(self) -> tuple[complex, complex]:
        pts = self.boundary_pixels()
        pad = self.h
        return (complex(pts.real.min() - pad, pts.imag.min() - pad),
                complex(pts.real.max() + pad, pts.imag.max() + pad))

    def member_points(self) -> np.ndarray:
        return self.window.points()[self.mask]

    def touches_border(self) -> bool:
        m = self.mask
        return bool(m[0].any() or m[-1].any() or m[:, 0].any() or m[:, -1].any())

    def area(self) -> float:
        return float(self.mask.sum()) * self.h**2

    def diameter(self) -> float:
        return point_set_diameter(self.boundary_pixels())

    def boundary_pixels(self) -> np.ndarray:
        edge = self.mask & ~ndimage.binary_erosion(self.mask)
        return self.window.points()[edge]

    def open_set(self) -> np.ndarray:
        """Mask with the circle outside the base arc removed (slits count as boundary)."""
        Z = self.window.points()
        band = np.abs(np.abs(Z) - 1) < self.h
        if self.base_arc is None:
            return self.mask.copy()
        off = band & ~self.base_arc.contains((np.angle(Z) / TWO_PI) % 1.0)
        return self.mask & ~off

    def slits(self) -> list[CircleArc]:
        """Maximal arcs of the circle outside the base arc with the region on both sides."""
        if self.base_arc is None:
            return []
        h = self.h
        c, r = self.window.center, self.window.half_width
        n = max(64, int(math.ceil(TWO_PI / h)))
        t = np.arange(n) / n
        p = np.exp(1j * TWO_PI * t)
        near = (np.abs(p.real - c.real) < r) & (np.abs(p.imag - c.imag) < r)
        above = self.contains(p * (1 + 1.5 * h), reflect=False)
        below = self.contains(p * (1 - 1.5 * h), reflect=False)
        flag = near & above & below & ~self.base_arc.contains(t)
        return _runs_to_arcs(flag, t)

    def planar(self) -> PlanarRegion:
        return PlanarRegion(self.boundary_polyline(), self.base_arc, self.depth, self.slits())

    def boundary_polyline(self) -> np.ndarray:
        from skimage.measure import find_contours
        padded = np.pad(self.mask.astype(float), 1)
        contours = find_contours(padded, 0.5)
        if not contours:
            return np.zeros(0, dtype=complex)
        best = max(contours, key=len)
        w = self.window
        h = w.h
        x = w.center.real - w.half_width + h * (best[:, 1] - 1 + 0.5)
        y = w.center.imag - w.half_width + h * (best[:, 0] - 1 + 0.5)
        z = x + 1j * y
        if np.abs(z[0] - z[-1]) < 1e-12:
            z = z[:-1]
        area = 0.5 * np.sum(z.real * np.roll(z.imag, -1) - np.roll(z.real, -1) * z.imag)
        return z if area > 0 else z[::-1]

    def resample(self, window: RasterWindow) -> np.ndarray:
        """Membership on another grid; circle pixels outside the base arc stay excluded."""
        Z = window.points()
        return self.contains(Z, reflect=False) & ~_off_arc_band(Z, self.base_arc, window.h / 2)

    def to_json(self):
        return {"label": self.label, "depth": self.depth, "window": self.window.to_json(),
                "base_arc": self.base_arc.to_json() if self.base_arc else None,
                "rows": [np.packbits(row).tobytes().hex() for row in self.mask]}

    @classmethod
    def from_json(cls, data):
        w = data["window"]
        window = RasterWindow(complex(*w["center"]), float(w["half_width"]), int(w["size"]))
        rows = [np.unpackbits(np.frombuffer(bytes.fromhex(r), dtype=np.uint8))[: window.size]
                for r in data["rows"]]
        arc = CircleArc.from_json(data["base_arc"]) if data.get("base_arc") else None
        return cls(window, np.array(rows, dtype=bool), arc, int(data["depth"]), data.get("label", ""))


def _off_arc_band(w, arc: CircleArc | None, h: float):
    if arc is None:
        return np.zeros(np.shape(w), dtype=bool)
    band = np.abs(np.abs(w) - 1) < h
    return band & ~arc.contains((np.angle(w) / TWO_PI) % 1.0)


def _runs_to_arcs(flag, t) -> list[CircleArc]:
    if not flag.any():
        return []
    if flag.all():
        return [CircleArc(0.0, 0.0)]
    n = flag.size
    step = 1.0 / n
    shift = int(np.argmin(flag))  # start scanning at a gap so runs do not wrap
    f = np.roll(flag, -shift)
    tt = np.roll(t, -shift)
    arcs = []
    k = 0
    while k < n:
        if f[k]:
            s = k
            while k < n and f[k]:
                k += 1
            arcs.append(CircleArc(float(tt[s]), float((tt[k - 1] + step) % 1.0)))
        k += 1
    return arcs


def point_set_diameter(points) -> float:
    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size < 2:
        return 0.0
    xy = np.column_stack([pts.real, pts.imag])
    if pts.size > 3:
        try:
            xy = xy[ConvexHull(xy).vertices]
        except Exception:
            pass
    return float(pdist(xy).max())


# ---------------------------------------------------------------------------
# pixel classification and connectivity


def _apply(F, z):
    w = F.lam * z**F.d
    for a in F.zeros:
        w = w * (1 - np.conj(a) * z) / (z - a)
    return w


def _apply_derivative(F, z):
    ratio = np.ones_like(z)
    logd = np.zeros_like(z)
    for a in F.zeros:
        ac = np.conj(a)
        ratio = ratio * (1 - ac * z) / (z - a)
        logd = logd - ac / (1 - ac * z) - 1 / (z - a)
    return F.lam * z ** (F.d - 1) * ratio * (F.d + z * logd)


def forward_images(F, Z, k: int, h: float | None = None, critical=()):
    """F^k on an array; with ``h`` also flag points within a few pixels of a critical point of F^k."""
    W = np.array(Z, dtype=complex, copy=True)
    D = np.ones_like(W)
    crit = np.zeros(W.shape, dtype=bool)
    with np.errstate(all="ignore"):
        for _ in range(k):
            live = np.isfinite(W) & (np.abs(W) < 1e8) & (np.abs(W) > 1e-8)
            W[~live] = np.nan
            if h is not None:
                for c in critical:
                    crit |= np.abs(W - c) < CRITICAL_RADIUS * h * np.abs(D)
                D[live] = D[live] * _apply_derivative(F, W[live])
            W[live] = _apply(F, W[live])
    return (W, crit) if h is not None else W


def silhouette_members(F, comb: OrbitCombinatorics, i: int, j: int, depth: int, Z, h: float):
    """Pointwise silhouette test over the gap (c_-i, c_-j) at the given depth."""
    start, length = comb.angle_window(i, j)
    arc = comb.gap_arc(i, j)
    r = np.abs(Z)
    band = np.abs(r - 1) < h / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(r > 1, Z, 1 / np.conj(Z))
    g = basin_grid(F, W, depth + EXTRA_ITERATIONS)
    ang = ((g.angle - start) % 1.0) < length
    low = (g.kind == 1) | (g.potential < LOG2 * 2.0 ** (-depth))
    pos = (np.angle(Z) / TWO_PI) % 1.0
    if i == j:
        on_arc = np.abs(((pos - arc.start + 0.5) % 1.0) - 0.5) * TWO_PI > h
    else:
        on_arc = arc.contains(pos)
    return np.where(band, on_arc, ang & low), band & on_arc


def connected_region(Z, h, members, seeds, images=None, image_arc: CircleArc | None = None):
    """Union of the 4-connected components of ``members`` meeting ``seeds``.

    With ``images`` given, an edge whose endpoint images lie on opposite sides
    of the circle survives only when both images sit over ``image_arc``.
    """
    M0, M1 = members.shape
    idx = np.arange(M0 * M1).reshape(M0, M1)
    if images is not None:
        side = np.abs(images) > 1
        over = image_arc.contains((np.angle(images) / TWO_PI) % 1.0)
    rows, cols = [], []
    for a, b in (((slice(None), slice(0, -1)), (slice(None), slice(1, None))),
                 ((slice(0, -1), slice(None)), (slice(1, None), slice(None)))):
        ok = members[a] & members[b]
        if images is not None:
            ok &= (side[a] == side[b]) | (over[a] & over[b])
        rows.append(idx[a][ok])
        cols.append(idx[b][ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(M0 * M1, M0 * M1))
    _, labels = connected_components(graph, directed=False)
    labels = labels.reshape(M0, M1)
    keep = np.unique(labels[seeds & members])
    return members & np.isin(labels, keep), keep.size


def _default_window(arc: CircleArc, size: int, scale: float = 1.2) -> RasterWindow:
    mid = complex(np.exp(1j * TWO_PI * arc.midpoint))
    return RasterWindow(mid, max(scale * arc.chord(), 0.02), size)


def silhouette(F, comb: OrbitCombinatorics, i: int, j: int, depth: int, size: int = 256,
               window: RasterWindow | None = None) -> RasterRegion:
    """Depth-``depth`` silhouette over the gap (c_-i, c_-j); the window grows until the region fits."""
    arc = comb.gap_arc(i, j)
    if window is None:
        if i == j:
            window = RasterWindow(0j, 2.5, size)
        else:
            window = _default_window(arc, size)
    for _ in range(MAX_GROWTH):
        Z = window.points()
        members, seeds = silhouette_members(F, comb, i, j, depth, Z, window.h)
        mask, _ = connected_region(Z, window.h, members, seeds)
        mask = ndimage.binary_fill_holes(mask)
        region = RasterRegion(window, mask, arc, depth, f"S^{depth}(c_-{i}, c_-{j})")
        if not region.touches_border():
            return region
        window = window.grown(1.6)
    return region


def pullback_along_circle(F, U: RasterRegion, k: int, comb: OrbitCombinatorics,
                          image_arc: CircleArc | None = None, size: int | None = None,
                          window: RasterWindow | None = None,
                          arc: CircleArc | None = None) -> RasterRegion:
    """Component of F^{-k}(U cut along the circle outside ``image_arc``) over the pulled-back arc.

    ``image_arc`` defaults to the base arc of ``U``; the result has base arc
    g^{-k}(image_arc) where g is the circle restriction. Passing ``arc`` uses
    those endpoints instead (e.g. orbit points known more precisely).
    """
    if k == 0:
        return U
    image_arc = image_arc or U.base_arc
    if image_arc is None:
        raise ValueError("pullback along the circle needs a base arc")
    if arc is None:
        arc = CircleArc(comb.pull_back(image_arc.start, k), comb.pull_back(image_arc.end, k))
    size = size or U.window.size
    window = window or _default_window(arc, size)
    for _ in range(MAX_GROWTH):
        Z = window.points()
        h = window.h
        W, crit = forward_images(F, Z, k, h, comb.critical_points)
        pos = (np.angle(Z) / TWO_PI) % 1.0
        band = np.abs(np.abs(Z) - 1) < h / 2
        members = U.contains(W) & ~crit & (~band | arc.contains(pos))
        seeds = band & arc.contains(pos)
        mask, _ = connected_region(Z, h, members, seeds, W, image_arc)
        holes = ndimage.binary_fill_holes(mask) & ~mask
        clusters = ndimage.label(holes & crit)[1]
        mask |= holes
        region = RasterRegion(window, mask, arc, U.depth + k, f"pullback^{k}({U.label})", clusters)
        if not region.touches_border():
            return region
        window = window.grown(1.6)
    return region


def restrict(U: RasterRegion, arc: CircleArc) -> RasterRegion:
    """U with the circle outside ``arc`` slit open (same raster, new base arc)."""
    return RasterRegion(U.window, U.mask, arc, U.depth, f"{U.label}|arc", U.critical_clusters)


# ---------------------------------------------------------------------------
# puzzle disks


@dataclass
class PullbackStep:
    steps: int
    image_arc: CircleArc
    base_arc: CircleArc
    window: RasterWindow
    seconds: float

    def to_json(self):
        return {"steps": self.steps, "image_arc": self.image_arc.to_json(),
                "base_arc": self.base_arc.to_json(), "window": self.window.to_json(),
                "seconds": self.seconds}


@dataclass
class PuzzleDisk:
    scale: int
    region: RasterRegion
    depth: int
    log: list[PullbackStep] = field(default_factory=list)

    @property
    def degree(self) -> int:
        """Degree of the return map on the disk, from the critical points it encloses."""
        return 1 + 2 * self.region.critical_clusters

    def to_json(self):
        return {"scale": self.scale, "depth": self.depth, "degree": self.degree,
                "region": self.region.to_json(), "log": [s.to_json() for s in self.log]}


def containment(inner: RasterRegion, outer: RasterRegion, tol_pixels: float = 1.5):
    """Fraction of ``inner`` inside ``outer`` and the largest excursion in pixels of ``outer``."""
    pts = inner.member_points()
    inside = outer.contains(pts, reflect=False)
    if inside.all():
        return 1.0, 0.0
    dist = ndimage.distance_transform_edt(~outer.mask)
    iy, ix, ok = outer.window.index(pts[~inside])
    excess = np.where(ok, dist[iy, ix], np.inf)
    return float(inside.mean()), float(excess.max())


def boundary_separation(inner: RasterRegion, outer: RasterRegion) -> float:
    """Euclidean distance from ``inner`` to the complement of ``outer`` (slits included); <= 0 if not inside."""
    open_set = outer.open_set()
    dist = ndimage.distance_transform_edt(open_set) * outer.h
    iy, ix, ok = outer.window.index(inner.member_points())
    if not ok.all():
        return 0.0
    return float(dist[iy, ix].min()) - outer.h


@dataclass
class NestingReport:
    n: int
    contained_fraction: float
    excess_pixels: float
    separation: float

    @property
    def nested(self) -> bool:
        return self.excess_pixels <= 1.5

    @property
    def compactly_nested(self) -> bool:
        return self.separation > 0


class PuzzleTower:
    """The puzzle disks D^n along the critical point, built from scale n0 upwards."""

    def __init__(self, F: HermanBlaschke, rho: RotationNumber, size: int = 384,
                 min_scale: int = 2, clearance: float = 1e-4, orbit_samples: int = 100,
                 n0: int | None = None):
        self.F = F
        self.rho = rho
        self.size = size
        self.comb = OrbitCombinatorics(F, rho)
        self.times = self.comb.times
        self.clearance = clearance
        self.orbit_samples = orbit_samples
        self.n0 = n0 if n0 is not None else self.initial_scale(min_scale)
        self.l0 = 1
        self.disks: dict[int, PuzzleDisk] = {}
        self._silhouette: RasterRegion | None = None

    def initial_scale(self, min_scale: int) -> int:
        """Smallest even n > min_scale whose silhouette endpoints clear the sampled postcritical set."""
        comb, q = self.comb, self.times.q
        post = np.array([comb.position(k) for k in range(1, self.orbit_samples + 1)])
        n = min_scale + 1
        n += n % 2
        while n + 2 < len(q):
            ends = [comb.position(1 - q[n]), comb.position(1 - q[n + 1])]
            gap = min(np.min(np.abs((post - e + 0.5) % 1.0 - 0.5)) for e in ends)
            if gap > self.clearance:
                return n
            n += 2
        raise ValueError("no admissible initial scale within the available prefix")

    def silhouette_indices(self) -> tuple[int, int, int]:
        q, R = self.times.q, self.times.R
        n = self.n0
        i, j = q[n] - 1, q[n + 1] - 1
        arc = self.comb.gap_arc(i, j)
        if not arc.contains(self.comb.position(1)):
            i, j = j, i
        return i, j, R[n] - 1

    def silhouette(self) -> RasterRegion:
        if self._silhouette is None:
            i, j, depth = self.silhouette_indices()
            self._silhouette = silhouette(self.F, self.comb, i, j, depth, size=self.size)
        return self._silhouette

    def disk(self, n: int) -> PuzzleDisk:
        if n < self.n0:
            raise ValueError(f"puzzle disks start at scale n0 = {self.n0}")
        if n in self.disks:
            return self.disks[n]
        if n + 1 >= len(self.times.q):
            raise ValueError(f"scale {n} needs a longer rotation-number prefix")
        t = time.perf_counter()
        if n == self.n0:
            U = self.silhouette()
            k = self.l0
            image_arc = U.base_arc
        else:
            prev = self.disk(n - 1)
            U = prev.region
            k = self.times.r[n]
            image_arc = self.comb.j_plus(n)
        target = self.comb.j_minus(n)
        pulled = CircleArc(self.comb.pull_back(image_arc.start, k), self.comb.pull_back(image_arc.end, k))
        # backward orbits through the critical point lose digits, so only require agreement to 1e-5 turns
        if max(abs((pulled.start - target.start + 0.5) % 1 - 0.5),
               abs((pulled.end - target.end + 0.5) % 1 - 0.5)) > 1e-5:
            raise NestingViolation(f"pulled-back arc of D^{n} does not match J-_{n}")
        region = pullback_along_circle(self.F, U, k, self.comb, image_arc, self.size, arc=target)
        region.label = f"D^{n}"
        log = [] if n == self.n0 else list(self.disks[n - 1].log)
        log.append(PullbackStep(k, image_arc, region.base_arc, region.window, time.perf_counter() - t))
        disk = PuzzleDisk(n, region, self.times.R[n], log)
        self.disks[n] = disk
        return disk

    def nesting(self, n: int) -> tuple[NestingReport, NestingReport]:
        """Reports for D^{n+1} in D^n and D^{n+2} in D^n."""
        out = []
        for m in (n + 1, n + 2):
            inner, outer = self.disk(m).region, self.disk(n).region
            frac, excess = containment(inner, outer)
            out.append(NestingReport(n, frac, excess, boundary_separation(inner, outer)))
        return out[0], out[1]


def puzzle_disk(F, n: int, tower: PuzzleTower | None = None, rho: RotationNumber | None = None,
                size: int = 384) -> PuzzleDisk:
    if tower is None:
        if rho is None:
            raise ValueError("need a rotation number or an existing tower")
        tower = PuzzleTower(F, rho, size=size)
    return tower.disk(n)


def annulus_masks(tower: PuzzleTower, n: int, size: int, margin: float = 0.08):
    """Masks of D^{n-2} and D^n on a common grid covering D^{n-2}; returns (window, outer, inner)."""
    outer = tower.disk(n - 2).region
    inner = tower.disk(n).region
    pts = outer.boundary_pixels()
    lo = complex(pts.real.min(), pts.imag.min())
    hi = complex(pts.real.max(), pts.imag.max())
    half = 0.5 * max(hi.real - lo.real, hi.imag - lo.imag) * (1 + margin) + 2 * outer.h
    window = RasterWindow(0.5 * (lo + hi), half, size)
    return window, outer.resample(window), inner.resample(window)


# ---------------------------------------------------------------------------
# depth-n puzzle pieces, fibers, and the puzzle neighborhood of the circle


def piece_gaps(comb: OrbitCombinatorics, s: float, depth: int) -> list[tuple[int, int]]:
    """Gaps of {c_-k : k <= depth} whose closure holds the point with rotation coordinate s.

    Two gaps when s is itself one of the points, listed clockwise to counter-clockwise.
    """
    if depth == 0:
        return [(0, 0)]
    coords = (-np.arange(depth + 1) * comb.value) % 1.0
    if np.any(np.abs((coords - s + 0.5) % 1.0 - 0.5) < 1e-12):
        left = comb.gap((s - 1e-9) % 1.0, depth)
        right = comb.gap((s + 1e-9) % 1.0, depth)
        return [left, right] if left != right else [left]
    return [comb.gap(s, depth)]


def _piece_members(F, comb, gaps, depth, Z, h):
    members = np.zeros(Z.shape, dtype=bool)
    seeds = np.zeros(Z.shape, dtype=bool)
    for i, j in gaps:
        m, sd = silhouette_members(F, comb, i, j, depth, Z, h)
        members |= m
        seeds |= sd
    return members, seeds


def puzzle_piece(F, comb: OrbitCombinatorics, s: float, depth: int, size: int = 256,
                 coarser=()) -> RasterRegion:
    """Depth-n puzzle neighborhood of the circle point at rotation coordinate s.

    When s is an endpoint the two adjacent pieces are joined. Pixels must also
    pass the pointwise tests at every depth listed in ``coarser``; pieces are
    nested, and this keeps near-boundary pixels whose angle is only known to
    2^-N from flipping sides between depths.
    """
    gaps = piece_gaps(comb, s, depth)
    if gaps == [(0, 0)]:
        arc = CircleArc(comb.position(0), comb.position(0))
        window = RasterWindow(0j, 2.5, size)
    else:
        arc = CircleArc(comb.gap_arc(*gaps[0]).start, comb.gap_arc(*gaps[-1]).end)
        window = _default_window(arc, size)
    earlier = {m: piece_gaps(comb, s, m) for m in coarser if m < depth}
    for _ in range(MAX_GROWTH):
        Z = window.points()
        members, seeds = _piece_members(F, comb, gaps, depth, Z, window.h)
        for m, g in earlier.items():
            members &= _piece_members(F, comb, g, m, Z, window.h)[0]
        mask, _ = connected_region(Z, window.h, members, seeds)
        mask = ndimage.binary_fill_holes(mask)
        region = RasterRegion(window, mask, arc, depth, f"P^{depth}({s:.6f})")
        if not region.touches_border():
            return region
        window = window.grown(1.6)
    return region


def fiber_diameter(F, comb: OrbitCombinatorics, s: float, n_max: int, size: int = 256,
                   depths=None) -> list[tuple[int, float]]:
    """Diameters of the depth-n puzzle neighborhoods of the circle point at rotation coordinate s."""
    depths = sorted(range(n_max + 1) if depths is None else depths)
    out = []
    for k, n in enumerate(depths):
        piece = puzzle_piece(F, comb, s, n, size, coarser=depths[:k])
        out.append((n, point_set_diameter(piece.boundary_pixels())))
    return out


def neighborhood_members(F, comb: OrbitCombinatorics, Z, depth: int, h: float = 0.0):
    """Pointwise test for the depth-n puzzle neighborhood of the circle (union of all gap pieces)."""
    Z = np.asarray(Z, dtype=complex)
    r = np.abs(Z)
    band = np.abs(r - 1) < max(h / 2, 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(r > 1, Z, 1 / np.conj(Z))
    g = basin_grid(F, W, depth + EXTRA_ITERATIONS)
    excluded = np.zeros(Z.shape, dtype=bool)
    for j in range(depth + 1):
        lo, _ = comb.wake(j)
        excluded |= ((g.angle - lo) % 1.0) <= comb._w[j]
    low = (g.kind == 1) | (g.potential < LOG2 * 2.0 ** (-depth))
    finite = np.isfinite(Z) & (r > 0)
    return np.where(band, True, low & ~excluded) & finite, band


def puzzle_neighborhood(F, comb: OrbitCombinatorics, depth: int, window: RasterWindow) -> RasterRegion:
    Z = window.points()
    members, band = neighborhood_members(F, comb, Z, depth, window.h)
    mask, _ = connected_region(Z, window.h, members, band)
    return RasterRegion(window, mask, None, depth, f"P^{depth}")


@dataclass
class TrappingReport:
    fixed_points: list[complex]
    first_trapping_depth: int | None
    distances: dict[int, list[float]]
    equivariance: dict[int, float]
    origin_infinity_outside: bool

    @property
    def ok(self) -> bool:
        return (self.first_trapping_depth is not None and self.origin_infinity_outside
                and all(v >= 0.99 for v in self.equivariance.values()))


def equivariance_fraction(F, comb: OrbitCombinatorics, depth: int, window: RasterWindow,
                          samples: int = 400, seed: int = 0) -> float:
    """Share of boundary samples of P^n whose image lies in P^{n-1}, and of P^{n-1} samples with a preimage in P^n."""
    rng = np.random.default_rng(seed)
    P = puzzle_neighborhood(F, comb, depth, window)
    Q = puzzle_neighborhood(F, comb, depth - 1, window)
    fwd = _interior_boundary(P)
    if fwd.size > samples:
        fwd = rng.choice(fwd, samples, replace=False)
    img = _apply(F, fwd)
    ok_fwd = neighborhood_members(F, comb, img, depth - 1)[0]
    back = _interior_boundary(Q)
    if back.size > samples:
        back = rng.choice(back, samples, replace=False)
    pre = preimages(F, back)
    ok_back = neighborhood_members(F, comb, pre, depth)[0].any(axis=1)
    total = fwd.size + back.size
    return float((ok_fwd.sum() + ok_back.sum()) / max(total, 1))


def _interior_boundary(region: RasterRegion) -> np.ndarray:
    """Boundary pixels off the circle and away from the window frame."""
    pts = region.boundary_pixels()
    c, r, h = region.window.center, region.window.half_width, region.h
    inside = (np.abs(pts.real - c.real) < r - 2 * h) & (np.abs(pts.imag - c.imag) < r - 2 * h)
    return pts[inside & (np.abs(np.abs(pts) - 1) > h)]


def trapping_check(F, comb: OrbitCombinatorics, n_max: int = 8, size: int = 128,
                   radius: float = 0.25, seed: int = 0) -> TrappingReport:
    """Depth at which every fixed point off the circle has left the puzzle neighborhood P^n."""
    pts = [z for z in fixed_points(F) if np.isfinite(z) and abs(abs(z) - 1) > 1e-6 and abs(z) > 1e-9]
    distances: dict[int, list[float]] = {}
    first = None
    for n in range(1, n_max + 1):
        ds = []
        for z in pts:
            w = RasterWindow(complex(z), radius, size)
            region = puzzle_neighborhood(F, comb, n, w)
            m = region.member_points()
            ds.append(float(np.min(np.abs(m - z))) if m.size else math.inf)
        distances[n] = ds
        outside = all(d > 2 * radius * 2 / size for d in ds)
        if outside and first is None:
            first = n
        elif not outside:
            first = None
    eq = {}
    window = RasterWindow(0j, 4.0, 2 * size)
    for n in range(1, (first or n_max) + 1):
        eq[n] = equivariance_fraction(F, comb, n, window, seed=seed + n)
    probe = np.array([1e-9 + 0j, 1e9 + 0j])
    far = neighborhood_members(F, comb, probe, 1)[0]
    return TrappingReport(pts, first, distances, eq, not bool(far.any()))


# ---------------------------------------------------------------------------
# bubbles


def _companion_roots(F, w):
    """All preimages of each w (rows), via eigenvalues of stacked companion matrices."""
    lam = F.lam
    num = np.array([lam], dtype=complex)
    den = np.array([1.0 + 0j])
    for a in F.zeros:
        num = np.convolve(num, np.array([1.0, -np.conj(a)]))  # coefficients low -> high
        den = np.convolve(den, np.array([-a, 1.0]))
    num = np.concatenate([np.zeros(F.d, dtype=complex), num])  # multiply by z^d
    deg = num.size - 1
    den = np.concatenate([den, np.zeros(deg + 1 - den.size, dtype=complex)])
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    coeffs = num[None, :] - w[:, None] * den[None, :]  # low -> high
    lead = coeffs[:, -1]
    C = np.zeros((w.size, deg, deg), dtype=complex)
    C[:, 1:, :-1] = np.eye(deg - 1)
    C[:, :, -1] = -coeffs[:, :-1] / lead[:, None]
    roots = np.linalg.eigvals(C)
    return _polish(F, roots, w[:, None])


def _polish(F, z, w, steps: int = 3):
    with np.errstate(all="ignore"):
        for _ in range(steps):
            d = _apply_derivative(F, z)
            dz = (_apply(F, z) - w) / d
            good = np.isfinite(dz) & (np.abs(dz) < 1e-3 * (1 + np.abs(z)))
            z = np.where(good, z - dz, z)
    return z


def preimages(F, w) -> np.ndarray:
    return _companion_roots(F, w)


@dataclass
class Bubble:
    """A component of an iterated preimage of the unit disk.

    ``params`` are the turns t with F^generation(boundary) = exp(2 pi i t);
    ``parent`` is the id of the image bubble F(B).
    """

    generation: int
    root: complex | None
    boundary: np.ndarray
    params: np.ndarray
    parent: int | None
    external: bool
    id: int = 0

    def diameter(self) -> float:
        return point_set_diameter(self.boundary)

    def centroid(self) -> complex:
        return complex(np.mean(self.boundary))

    def circle_defect(self, F) -> float:
        z = self.boundary
        for _ in range(self.generation):
            z = _apply(F, z)
        return float(np.max(np.abs(np.abs(z) - 1)))

    def reflected(self) -> "Bubble":
        root = None if self.root is None else 1 / np.conj(self.root)
        return Bubble(self.generation, root, 1 / np.conj(self.boundary), self.params.copy(),
                      self.parent, not self.external, self.id)

    def to_json(self):
        return {"id": self.id, "generation": self.generation, "parent": self.parent,
                "external": self.external,
                "root": None if self.root is None else [self.root.real, self.root.imag],
                "boundary": [[float(z.real), float(z.imag)] for z in self.boundary]}


def circle_parameters(F, samples: int = 2048) -> tuple[np.ndarray, int]:
    """Boundary parameters clustered cubically at the critical value; returns (params, root index)."""
    cv = complex(_apply(F, np.array([1.0 + 0j]))[0])
    crit = [c.location for c in critical_points(F).points if c.on_circle]
    if crit:
        cv = complex(_apply(F, np.array([complex(crit[0])]))[0])
    base = (math.atan2(cv.imag, cv.real) / TWO_PI) % 1.0
    u = (np.arange(samples) - samples // 2) / samples
    return (base + 0.5 * (2 * u) ** 3) % 1.0, samples // 2


def unit_bubble(F, samples: int = 2048) -> Bubble:
    params, _ = circle_parameters(F, samples)
    return Bubble(0, None, np.exp(1j * TWO_PI * params), params, None, True, 0)


def _track(roots, anchor_index: int, anchor: complex, ambiguity: float = 0.25):
    """Follow one root branch around a closed polyline, starting from the root nearest ``anchor``."""
    n = roots.shape[0]
    out = np.empty(n, dtype=complex)
    cur = roots[anchor_index, np.argmin(np.abs(roots[anchor_index] - anchor))]
    out[anchor_index] = cur
    for step in range(1, n):
        k = (anchor_index + step) % n
        d = np.abs(roots[k] - cur)
        order = np.argsort(d)
        if roots.shape[1] > 1 and d[order[0]] > ambiguity * d[order[1]] and d[order[0]] > 1e-9:
            raise BranchAmbiguity("branch ambiguity near a critical point; refine resolution")
        cur = roots[k, order[0]]
        out[k] = cur
    return out


def _lift(F, boundary, anchor_index: int, anchor: complex):
    return _track(preimages(F, boundary), anchor_index, anchor)


def bubble_children(F, parent: Bubble, max_count: int | None = None) -> list[Bubble]:
    """External components of F^{-1}(parent) lying outside the lower-generation bubbles."""
    if parent.boundary.size < 256:
        raise ValueError("parent boundary must be resolved to at least 256 points")
    if not parent.external:
        return [b.reflected() for b in bubble_children(F, parent.reflected(), max_count)]
    roots = preimages(F, parent.boundary)
    _, root_index = circle_parameters(F, parent.params.size)
    children = []
    if parent.generation == 0:
        # over the circle the three preimages are on, outside and inside the circle
        branch = roots[np.arange(roots.shape[0]), np.argmax(np.abs(roots), axis=1)]
        branches = [branch]
    else:
        start = roots[root_index]
        branches = []
        for r0 in start:
            b = _track(roots, root_index, r0)
            if np.median(np.abs(b)) > 1 and np.all(np.abs(b) > 1 - 1e-9):
                branches.append(b)
    for b in branches[:max_count]:
        root = _child_root(F, parent, complex(b[root_index]))
        b = b.copy()
        b[root_index] = root
        children.append(Bubble(parent.generation + 1, root, b, parent.params.copy(),
                               parent.id, True, parent.id * 10 + len(children) + 1))
    return children


def _child_root(F, parent: Bubble, guess: complex) -> complex:
    """The exact root near ``guess``: the critical point for children of the circle, else a preimage of the parent root."""
    if parent.root is None:
        crit = [complex(c.location) for c in critical_points(F).points if c.on_circle]
        return min(crit, key=lambda c: abs(c - guess))
    z = np.array([[guess]])
    return complex(_polish(F, z, np.array([[parent.root]]), steps=8)[0, 0])


@dataclass
class BubbleRay:
    bubbles: list[Bubble]
    increments: tuple[int, ...]

    def generations(self) -> list[int]:
        return [b.generation for b in self.bubbles]

    def diameters(self) -> list[float]:
        return [b.diameter() for b in self.bubbles]

    def adjacency_defects(self, F) -> list[float]:
        """How far each root is from the previous bubble boundary, measured as ||F^g(root)| - 1|."""
        out = [abs(abs(self.bubbles[0].root) - 1)]
        for prev, cur in zip(self.bubbles, self.bubbles[1:]):
            w = np.array([cur.root])
            for _ in range(prev.generation):
                w = _apply(F, w)
            out.append(float(abs(abs(w[0]) - 1)))
        return out

    def root_defects(self, F, c0: complex) -> list[float]:
        """|F^(gen-1)(root) - c_0| for every bubble."""
        out = []
        for b in self.bubbles:
            w = np.array([b.root])
            for _ in range(b.generation - 1):
                w = _apply(F, w)
            out.append(float(abs(w[0] - c0)))
        return out

    def landing_estimate(self, tail: int = 3) -> tuple[complex, float]:
        pts = np.concatenate([b.boundary for b in self.bubbles[-tail:]])
        return complex(self.bubbles[-1].centroid()), point_set_diameter(pts)

    def image(self, F) -> np.ndarray:
        return [_apply(F, b.boundary) for b in self.bubbles]


def build_bubble_ray(F, increments=(1,), depth: int = 12, start_generation: int = 1,
                     samples: int = 2048, comb: OrbitCombinatorics | None = None) -> BubbleRay:
    """Chain of external bubbles; the generation gap between neighbours cycles through ``increments``.

    The first bubble has generation ``start_generation`` and is attached to the
    circle at c_{1-start_generation}; each next bubble is the unique one of the
    prescribed generation attached to its predecessor.
    """
    if comb is None:
        raise ValueError("build_bubble_ray needs the orbit combinatorics of the map")
    circle = unit_bubble(F, samples)
    params, root_index = circle_parameters(F, samples)
    b1 = bubble_children(F, circle)[0]
    b1.id = 1
    cache = {1: b1}

    def attached_to_circle(g):
        # gen-g bubble rooted at c_{1-g}: pull B_1 back along the circle g-1 times
        if g not in cache:
            prev = attached_to_circle(g - 1)
            target = comb.point(1 - g)
            cache[g] = Bubble(g, target, _lift(F, prev.boundary, root_index, target), params, None, True, g)
        return cache[g]

    bubbles = [attached_to_circle(start_generation)]
    for step in range(1, depth):
        prev = bubbles[-1]
        delta = increments[(step - 1) % len(increments)]
        # the next root is the point of the previous boundary whose F^gen image is c_{1-delta}
        target_t = comb.position(1 - delta)
        idx = int(np.argmin(np.abs((prev.params - target_t + 0.5) % 1.0 - 0.5)))
        root = _refine_on_boundary(F, prev, idx, target_t)
        orbit = [root]
        for _ in range(prev.generation - 1):
            orbit.append(complex(_apply(F, np.array([orbit[-1]]))[0]))
        piece = attached_to_circle(delta)
        curve = piece.boundary
        for z in reversed(orbit):
            curve = _lift(F, curve, root_index, z)
        gen = prev.generation + delta
        bubbles.append(Bubble(gen, complex(curve[root_index]), curve, params, None, True, gen))
    return BubbleRay(bubbles, tuple(increments))


def _refine_on_boundary(F, bubble: Bubble, idx: int, t: float) -> complex:
    """Newton-correct a boundary vertex so that F^gen lands exactly at angle t."""
    z = complex(bubble.boundary[idx])
    target = np.exp(1j * TWO_PI * t)
    for _ in range(20):
        w, dw = z, 1.0 + 0j
        for _ in range(bubble.generation):
            dw *= complex(_apply_derivative(F, np.array([w]))[0])
            w = complex(_apply(F, np.array([w]))[0])
        step = (w - target) / dw
        z -= step
        if abs(step) < 1e-15 * (1 + abs(z)):
            break
    return z


# ---------------------------------------------------------------------------
# the initial puzzle graph


@dataclass
class InitialPuzzle:
    curves: dict[str, np.ndarray]
    landing_points: list[tuple[complex, float]]
    colanding_angles: list[float]
    max_period: int

    def rasterize(self, window: RasterWindow, thickness: float = 1.0) -> np.ndarray:
        grid = np.zeros((window.size, window.size), dtype=bool)
        h = window.h
        for pts in self.curves.values():
            pts = np.asarray(pts)
            seg = np.concatenate([pts, pts[:1]]) if pts.size > 2 else pts
            for a, b in zip(seg[:-1], seg[1:]):
                n = max(2, int(abs(b - a) / (0.5 * h)) + 1)
                line = a + (b - a) * np.linspace(0, 1, n)
                iy, ix, ok = window.index(line)
                grid[iy[ok], ix[ok]] = True
        for z, rad in self.landing_points:
            Z = window.points()
            grid |= np.abs(Z - z) < max(rad, thickness * h)
        if thickness > 1:
            grid = ndimage.binary_dilation(grid, iterations=int(thickness) - 1)
        return grid

    def face_count(self, F, window: RasterWindow, outer_level: float = 2.0) -> int:
        """Bounded faces of the graph between the equipotentials of levels ``outer_level`` and its inverse."""
        Z = window.points()
        walls = self.rasterize(window)
        k = abs(kappa(F))
        r = np.abs(Z)
        with np.errstate(divide="ignore", invalid="ignore"):
            W = np.where(r > 1, Z, 1 / np.conj(Z))
        g = basin_grid(F, W, 40)
        inside = (g.kind == 1) | (g.potential < math.log(outer_level))
        del k
        labels, n = ndimage.label(inside & ~walls)
        if n == 0:
            return 0
        sizes = np.bincount(labels.ravel())[1:]
        return int(np.sum(sizes > 4))

    def to_json(self):
        return {"curves": {k: [[float(z.real), float(z.imag)] for z in v] for k, v in self.curves.items()},
                "landing_points": [{"point": [z.real, z.imag], "radius": r} for z, r in self.landing_points],
                "colanding_angles": self.colanding_angles, "max_period": self.max_period}


def initial_puzzle(F, comb: OrbitCombinatorics, depth: int = 10, ray_depth: int = 40,
                   max_period: int = 12, samples: int = 1024, landing_tol: float = 1e-6) -> InitialPuzzle:
    """Fixed bubble rays, the external and internal rays co-landing with them, Q_2, Q_1/2 and the circle."""
    ray = build_bubble_ray(F, (1,), depth, 1, samples, comb)
    curves: dict[str, np.ndarray] = {"circle": np.exp(1j * TWO_PI * np.arange(samples) / samples)}
    for k, b in enumerate(ray.bubbles):
        curves[f"bubble_ext_{k}"] = b.boundary
        curves[f"bubble_int_{k}"] = 1 / np.conj(b.boundary)
    ext = trace_external_ray(F, 0.0, ray_depth)
    if ext.landing is None:
        raise RuntimeError("fixed external ray did not land; increase depth")
    curves["ray_ext_0"] = ext.points
    curves["ray_int_0"] = 1 / np.conj(ext.points)
    q2 = equipotential(F, 2.0, samples)
    curves["Q_2"] = q2.points
    curves["Q_1/2"] = 1 / np.conj(q2.points)
    land = ext.landing
    angles = colanding_angles(F, land[0], max_period, ray_depth)
    return InitialPuzzle(curves, [land, (1 / np.conj(land[0]), land[1])], angles, max_period)


def colanding_angles(F, point: complex, max_period: int = 12, depth: int = 40,
                     tol: float = 1e-6, coarse_tol: float = 5e-2, chunk: int = 1024) -> list[float]:
    """Periodic angles of period <= max_period whose rays land within ``tol`` of ``point``."""
    from .rays_potentials import trace_rays, RayTraceFailure
    angles = []
    for p in range(1, max_period + 1):
        den = 2**p - 1
        angles += [k / den for k in range(den) if _exact_period(k, den, p)]
    angles = np.array(angles)

    def ends(batch, d, spl):
        try:
            rays = trace_rays(F, batch, depth=d, steps_per_level=spl)
        except RayTraceFailure as exc:
            rays = exc.partial or []
        return np.array([r.points[-1] if r.points.size else np.nan for r in rays])

    # coarse pass at moderate depth, then confirm the survivors at full depth
    near = []
    for k in range(0, angles.size, chunk):
        batch = angles[k:k + chunk]
        e = ends(batch, min(depth, 16), 4)
        near.extend(batch[np.abs(e - point) < coarse_tol])
    if not near:
        return []
    near = np.array(near)
    e = ends(near, depth, 8)
    return sorted(float(t) for t in near[np.abs(e - point) < tol])


def _exact_period(k: int, den: int, p: int) -> bool:
    x = k
    for m in range(1, p):
        x = (2 * x) % den
        if x == k:
            return False
    return True
