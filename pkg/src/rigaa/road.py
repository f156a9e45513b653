"""Road topologies on a 200 m x 200 m map.

Each element is a road segment ``(road_type, length, angle)``: straights use
``length`` metres, left/right turns sweep ``angle`` degrees on a circular
arc.  The decoded centreline is sampled at a fixed arc-length step and
driven by a kinematic vehicle model; the surrogate fitness is the largest
distance between the vehicle and the matched road point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import AttributeSpec, ScenarioSchema, ValidityReport
from .errors import DegenerateGeometry, InvalidScenario

STRAIGHT, LEFT, RIGHT = 0, 1, 2
MAP_SIZE = 200.0
START_POSE = (100.0, 100.0, 0.0)
ARC_RADIUS = 20.0
SAMPLE_STEP = 3.0
HALF_WIDTH = 4.0
SHARPNESS_LIMIT = 0.4  # rad per sample
LOOKAHEAD = 12.0  # m

ROAD_SCHEMA = ScenarioSchema(
    schema_id="road-v1",
    attributes=(
        AttributeSpec.categorical("road_type", 3),
        AttributeSpec.integer("length", 5, 50),
        AttributeSpec.integer("angle", 5, 85),
    ),
    min_elements=2,
    max_elements=30,
)

ROAD_THRESHOLDS = np.array([0, 5, 5], dtype=np.int64)

CONTROLLERS = {"heading": 0, "literal": 1}


@dataclass(frozen=True)
class Polyline:
    points: np.ndarray  # (n, 2)
    headings: np.ndarray  # (n,) rad
    arc_length: np.ndarray  # (n,) cumulative metres along the centreline

    @property
    def length(self) -> float:
        return float(self.arc_length[-1])

    def to_json(self) -> dict:
        return {"points": np.round(self.points, 6).tolist()}


@dataclass(frozen=True)
class KinematicParams:
    delta0: float = 0.0
    theta0: float = 0.0
    v0: float = 15.0
    a0: float = 0.1
    dt: float = 0.7

    def __post_init__(self):
        if self.dt <= 0 or self.v0 <= 0:
            raise ValueError("dt and v0 must be positive")


DEFAULT_KINEMATICS = KinematicParams()


@dataclass(frozen=True)
class VehicleTrace:
    veh_points: np.ndarray
    road_points: np.ndarray
    deviations: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(self.deviations.max())


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _decode(elements, radius, step, x0, y0, h0):
    n_seg = elements.shape[0]
    total = 0.0
    for i in range(n_seg):
        if elements[i, 0] == STRAIGHT:
            total += elements[i, 1]
        else:
            total += radius * math.radians(elements[i, 2])
    cap = int(total / step) + 3
    pts = np.empty((cap, 2))
    heads = np.empty(cap)
    arc = np.empty(cap)
    x, y, h = x0, y0, h0
    pts[0, 0] = x
    pts[0, 1] = y
    heads[0] = h
    arc[0] = 0.0
    k = 1
    s_done = 0.0  # arc length at the start of the current segment
    next_s = step
    for i in range(n_seg):
        kind = elements[i, 0]
        if kind == STRAIGHT:
            seg = float(elements[i, 1])
        else:
            seg = radius * math.radians(elements[i, 2])
        sign = 1.0 if kind == LEFT else -1.0
        cx = x - sign * radius * math.sin(h)
        cy = y + sign * radius * math.cos(h)
        while next_s <= s_done + seg + 1e-9:
            t = next_s - s_done
            if kind == STRAIGHT:
                pts[k, 0] = x + t * math.cos(h)
                pts[k, 1] = y + t * math.sin(h)
                heads[k] = h
            else:
                hh = h + sign * t / radius
                pts[k, 0] = cx + sign * radius * math.sin(hh)
                pts[k, 1] = cy - sign * radius * math.cos(hh)
                heads[k] = hh
            arc[k] = next_s
            k += 1
            next_s += step
        # end pose of the segment, computed in closed form
        if kind == STRAIGHT:
            x = x + seg * math.cos(h)
            y = y + seg * math.sin(h)
        else:
            h = h + sign * seg / radius
            x = cx + sign * radius * math.sin(h)
            y = cy - sign * radius * math.cos(h)
        s_done += seg
    if s_done - arc[k - 1] > 1e-6:
        pts[k, 0] = x
        pts[k, 1] = y
        heads[k] = h
        arc[k] = s_done
        k += 1
    return pts[:k], heads[:k], arc[:k]


@njit(cache=True)
def _seg_seg_dist(ax, ay, bx, by, cx, cy, dx, dy):
    # segments AB and CD; zero if they cross
    def orient(px, py, qx, qy, rx, ry):
        return (qx - px) * (ry - py) - (qy - py) * (rx - px)

    o1 = orient(ax, ay, bx, by, cx, cy)
    o2 = orient(ax, ay, bx, by, dx, dy)
    o3 = orient(cx, cy, dx, dy, ax, ay)
    o4 = orient(cx, cy, dx, dy, bx, by)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0 and o3 != 0 and o4 != 0:
        return 0.0
    best = np.inf
    for px, py, qx, qy, rx, ry in (
        (ax, ay, cx, cy, dx, dy),
        (bx, by, cx, cy, dx, dy),
        (cx, cy, ax, ay, bx, by),
        (dx, dy, ax, ay, bx, by),
    ):
        vx = rx - qx
        vy = ry - qy
        ll = vx * vx + vy * vy
        t = 0.0
        if ll > 0:
            t = ((px - qx) * vx + (py - qy) * vy) / ll
            t = min(1.0, max(0.0, t))
        ex = qx + t * vx - px
        ey = qy + t * vy - py
        d = math.sqrt(ex * ex + ey * ey)
        if d < best:
            best = d
    return best


@njit(cache=True)
def _violations(pts, heads, arc, margin, map_size, sharp_limit, clearance, gap):
    """Bit flags: 1 out-of-bounds, 2 too-sharp, 4 self-intersect."""
    flags = 0
    n = pts.shape[0]
    for i in range(n):
        if pts[i, 0] < margin or pts[i, 0] > map_size - margin or pts[i, 1] < margin or pts[i, 1] > map_size - margin:
            flags |= 1
            break
    for i in range(1, n):
        d = heads[i] - heads[i - 1]
        d = (d + math.pi) % (2 * math.pi) - math.pi
        if abs(d) > sharp_limit + 1e-12:
            flags |= 2
            break
    for i in range(n - 1):
        ax, ay, bx, by = pts[i, 0], pts[i, 1], pts[i + 1, 0], pts[i + 1, 1]
        minx = min(ax, bx) - clearance
        maxx = max(ax, bx) + clearance
        miny = min(ay, by) - clearance
        maxy = max(ay, by) + clearance
        for j in range(i + 2, n - 1):
            if arc[j] - arc[i + 1] < gap:
                continue
            cx, cy, dx, dy = pts[j, 0], pts[j, 1], pts[j + 1, 0], pts[j + 1, 1]
            if max(cx, dx) < minx or min(cx, dx) > maxx or max(cy, dy) < miny or min(cy, dy) > maxy:
                continue
            if _seg_seg_dist(ax, ay, bx, by, cx, cy, dx, dy) < clearance:
                return flags | 4
    return flags


@njit(cache=True)
def _simulate(pts, delta0, theta0, v0, a0, dt, max_steps, window, look, mode):
    n = pts.shape[0]
    veh = np.empty((max_steps, 2))
    rd = np.empty((max_steps, 2))
    dev = np.empty(max_steps)
    x = pts[0, 0]
    y = pts[0, 1]
    theta = theta0
    delta = delta0
    v = v0
    idx = 0
    k = 0
    degenerate = False
    while k < max_steps:
        hi = min(n, idx + window + 1)
        best = np.inf
        j = idx
        for m in range(idx, hi):
            ex = pts[m, 0] - x
            ey = pts[m, 1] - y
            d = ex * ex + ey * ey
            if d < best:
                best = d
                j = m
        idx = j
        veh[k, 0] = x
        veh[k, 1] = y
        rd[k, 0] = pts[j, 0]
        rd[k, 1] = pts[j, 1]
        dev[k] = math.sqrt(best)
        k += 1
        if j == n - 1:
            break
        if mode == 0:
            t = min(n - 1, j + look)
            bearing = math.atan2(pts[t, 1] - y, pts[t, 0] - x)
            err = bearing - theta
            delta = (err + math.pi) % (2 * math.pi) - math.pi
        else:
            ddx = pts[j, 0] - x
            ddy = pts[j, 1] - y
            if ddx == 0.0:
                degenerate = True
            delta = math.atan2(ddy, ddx) - delta
        nx = x + v * math.cos(theta) * dt
        ny = y + v * math.sin(theta) * dt
        theta = theta + delta * dt
        x = nx
        y = ny
        v = v + a0 * dt
    return veh[:k], rd[:k], dev[:k], degenerate


# ---------------------------------------------------------------------------
# public API


def decode_polyline(
    chromosome: np.ndarray,
    arc_radius: float = ARC_RADIUS,
    sample_step: float = SAMPLE_STEP,
    start: tuple[float, float, float] = START_POSE,
    *,
    check: bool = True,
) -> Polyline:
    """Decode road segments into a centreline sampled every ``sample_step`` metres.

    All gaps equal ``sample_step`` of arc length except the last, which ends
    exactly on the final segment endpoint.
    """
    if arc_radius <= 0 or sample_step <= 0:
        raise ValueError("arc_radius and sample_step must be positive")
    elements = np.ascontiguousarray(chromosome, dtype=np.int64)
    if check:
        ROAD_SCHEMA.check(elements, partial=True)
    pts, heads, arc = _decode(elements, float(arc_radius), float(sample_step), *map(float, start))
    return Polyline(pts, heads, arc)


def _flags(polyline: Polyline, half_width: float, sharpness_limit: float) -> int:
    return int(
        _violations(
            polyline.points,
            polyline.headings,
            polyline.arc_length,
            half_width,
            MAP_SIZE,
            sharpness_limit,
            2.0 * half_width,
            4.0 * half_width,
        )
    )


def validate(
    polyline: Polyline, half_width: float = HALF_WIDTH, sharpness_limit: float = SHARPNESS_LIMIT
) -> ValidityReport:
    """Check map bounds, per-sample sharpness and self-intersection.

    Two centreline pieces conflict when they come closer than a full road
    width while being more than two road widths apart along the road.
    """
    flags = _flags(polyline, half_width, sharpness_limit)
    names = [name for bit, name in ((1, "out-of-bounds"), (2, "too-sharp"), (4, "self-intersect")) if flags & bit]
    return ValidityReport.from_violations(names)


def default_max_steps(polyline: Polyline, params: KinematicParams = DEFAULT_KINEMATICS) -> int:
    return max(1, int(math.ceil(4.0 * polyline.length / (params.v0 * params.dt))))


def simulate_vehicle(
    polyline: Polyline,
    params: KinematicParams = DEFAULT_KINEMATICS,
    max_steps: int | None = None,
    *,
    controller: str = "heading",
    lookahead: float = LOOKAHEAD,
    strict: bool = False,
) -> VehicleTrace:
    """Drive the kinematic model along ``polyline``.

    ``controller="heading"`` steers by the heading error towards the road
    point ``lookahead`` metres past the matched point; ``"literal"`` uses
    ``delta' = atan2(dy, dx) - delta`` on the world-frame offset to the
    matched point.  Matching only ever moves forward along the polyline,
    within a window of three travel steps.
    """
    if max_steps is None:
        max_steps = default_max_steps(polyline, params)
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    step = float(np.median(np.diff(polyline.arc_length))) if len(polyline.arc_length) > 1 else SAMPLE_STEP
    window = max(2, int(math.ceil(3.0 * params.v0 * params.dt / step)))
    look = max(1, int(round(lookahead / step)))
    veh, rd, dev, degenerate = _simulate(
        polyline.points,
        params.delta0,
        params.theta0,
        params.v0,
        params.a0,
        params.dt,
        int(max_steps),
        window,
        look,
        CONTROLLERS[controller],
    )
    if strict and degenerate:
        raise DegenerateGeometry("dx == 0 in the literal steering law")
    return VehicleTrace(veh, rd, dev)


def surrogate_fitness(chromosome: np.ndarray, params: KinematicParams = DEFAULT_KINEMATICS, **kwargs) -> float:
    polyline = decode_polyline(chromosome)
    report = validate(polyline)
    if not report.valid:
        raise InvalidScenario(f"invalid road: {', '.join(report.violated_constraints)}")
    return simulate_vehicle(polyline, params, **kwargs).max_deviation


@njit(cache=True)
def _evaluate(elements, radius, step, x0, y0, h0, half_width, sharp, v0, a0, dt, window, look):
    pts, heads, arc = _decode(elements, radius, step, x0, y0, h0)
    flags = _violations(pts, heads, arc, half_width, MAP_SIZE, sharp, 2.0 * half_width, 4.0 * half_width)
    if flags != 0:
        return -np.inf
    max_steps = max(1, int(math.ceil(4.0 * arc[-1] / (v0 * dt))))
    _, _, dev, _ = _simulate(pts, 0.0, 0.0, v0, a0, dt, max_steps, window, look, 0)
    return dev.max()


class RoadDomain:
    name = "road"
    schema = ROAD_SCHEMA

    def __init__(self, thresholds=None, arc_radius: float = ARC_RADIUS, sample_step: float = SAMPLE_STEP):
        self.thresholds = ROAD_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=np.int64)
        self.arc_radius = float(arc_radius)
        self.sample_step = float(sample_step)
        p = DEFAULT_KINEMATICS
        self._window = max(2, int(math.ceil(3.0 * p.v0 * p.dt / self.sample_step)))
        self._look = max(1, int(round(LOOKAHEAD / self.sample_step)))

    def polyline(self, chromosome) -> Polyline:
        return decode_polyline(chromosome, self.arc_radius, self.sample_step)

    def validate(self, chromosome):
        return validate(self.polyline(chromosome))

    def is_valid(self, chromosome) -> bool:
        return np.isfinite(self.evaluate(chromosome))

    def fitness(self, chromosome) -> float:
        value = self.evaluate(chromosome)
        if not np.isfinite(value):
            raise InvalidScenario("invalid road")
        return value

    def evaluate(self, chromosome) -> float:
        """Fitness of any segment sequence (prefixes allowed), -inf if invalid."""
        elements = np.ascontiguousarray(chromosome, dtype=np.int64)
        p = DEFAULT_KINEMATICS
        x0, y0, h0 = START_POSE
        return float(
            _evaluate(
                elements, self.arc_radius, self.sample_step, x0, y0, h0, HALF_WIDTH, SHARPNESS_LIMIT,
                p.v0, p.a0, p.dt, self._window, self._look,
            )
        )

    def render_svg(self, chromosome) -> str:
        from .plots import road_svg

        polyline = self.polyline(chromosome)
        return road_svg(polyline, simulate_vehicle(polyline))
