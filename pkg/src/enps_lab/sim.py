"""Closed-loop lane keeping simulation.

Road geometry is a spine polyline with lane boundaries offset by half the
road width.  The robot is a differential-drive disc with infrared-style
proximity sensors that ray-cast against the lane boundaries; readings are
injected into the controller's sensor membranes, the P system advances
one tick, and the two speed variables drive the wheels.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .engine import PSystem, step as engine_step


class SimulationError(Exception):
    pass


class RoadError(SimulationError):
    """Degenerate or undrivable road geometry."""


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float  # radians, (-pi, pi]

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))


@dataclass(frozen=True)
class SensorSpec:
    mount_angle: float  # radians, relative to heading; positive = left
    range: float = 0.04  # meters
    s_max: float = 1.0


def default_sensors() -> tuple:
    """Six sensors: front pair, front-side pair, side pair (left, right)."""
    angles = [17.0, 49.0, 90.0, -17.0, -49.0, -90.0]
    return tuple(SensorSpec(mount_angle=math.radians(a)) for a in angles)


@dataclass(frozen=True)
class RobotParams:
    wheel_radius: float = 0.0205  # m
    axle_length: float = 0.052  # m
    body_radius: float = 0.037  # m
    max_wheel_speed: float = 40.0  # rad/s
    dt: float = 0.032  # s
    sensors: tuple = field(default_factory=default_sensors)
    # ADC-style resolution applied when readings are written into the
    # controller.  Without it, float dust keeps the multiplicative
    # controller's zero-indicator from ever firing and the robot stalls.
    sensor_quantum: float = 0.01


@dataclass(frozen=True)
class RoadGeometry:
    spine: tuple  # of (x, y), meters
    width: float
    left: tuple  # left boundary polyline
    right: tuple  # right boundary polyline
    start_pose: Pose
    finish_center: tuple
    finish_radius: float


@dataclass(frozen=True)
class SimResult:
    outcome: str  # completed | off_road | step_limit
    steps: int
    trajectory: tuple  # of Pose, length steps + 1
    wheel_speeds: tuple  # of (lw, rw), length steps
    failure_position: tuple | None = None
    traces: tuple = ()  # per-step engine traces when requested


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------


def _seg_intersection(p1, p2, p3, p4, eps=1e-12):
    """Proper/touching intersection of segments p1p2 and p3p4, or None."""
    d1x, d1y = p2[0] - p1[0], p2[1] - p1[1]
    d2x, d2y = p4[0] - p3[0], p4[1] - p3[1]
    denom = d1x * d2y - d1y * d2x
    if denom == 0.0 or abs(denom) < eps:
        return None
    rx, ry = p3[0] - p1[0], p3[1] - p1[1]
    t = (rx * d2y - ry * d2x) / denom
    u = (rx * d1y - ry * d1x) / denom
    if -eps <= t <= 1 + eps and -eps <= u <= 1 + eps:
        return (p1[0] + t * d1x, p1[1] + t * d1y)
    return None


def polyline_self_intersects(points) -> bool:
    """True when any two non-adjacent segments of the polyline cross."""
    segs = list(zip(points[:-1], points[1:]))
    for i in range(len(segs)):
        for j in range(i + 2, len(segs)):
            if i == 0 and j == len(segs) - 1 and points[0] == points[-1]:
                continue
            if _seg_intersection(*segs[i], *segs[j], eps=0.0) is not None:
                return True
    return False


def point_segment_distance(p, a, b) -> float:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    len2 = dx * dx + dy * dy
    if len2 == 0.0:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / len2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def point_polyline_distance(p, points) -> float:
    return min(point_segment_distance(p, a, b) for a, b in zip(points[:-1], points[1:]))


def offset_polyline(points, offset: float, miter_limit: float = 4.0):
    """Offset a polyline to its left (positive) or right (negative).

    Interior vertices get a miter join; a miter longer than
    miter_limit * |offset| is beveled into the two segment-end offsets.
    """
    n = len(points)
    normals = []
    for a, b in zip(points[:-1], points[1:]):
        dx, dy = b[0] - a[0], b[1] - a[1]
        length = math.hypot(dx, dy)
        normals.append((-dy / length, dx / length))

    out = [(points[0][0] + offset * normals[0][0], points[0][1] + offset * normals[0][1])]
    for i in range(1, n - 1):
        n0, n1 = normals[i - 1], normals[i]
        mx, my = n0[0] + n1[0], n0[1] + n1[1]
        denom = mx * mx + my * my
        bevel = denom < 1e-12  # ~180 degree turn
        if not bevel:
            # miter direction scaled so its projection on each normal is `offset`
            scale = 2.0 * offset / denom
            miter = (mx * scale, my * scale)
            bevel = math.hypot(*miter) > miter_limit * abs(offset)
        if bevel:
            out.append((points[i][0] + offset * n0[0], points[i][1] + offset * n0[1]))
            out.append((points[i][0] + offset * n1[0], points[i][1] + offset * n1[1]))
        else:
            out.append((points[i][0] + miter[0], points[i][1] + miter[1]))
    out.append((points[-1][0] + offset * normals[-1][0], points[-1][1] + offset * normals[-1][1]))
    return tuple(out)


def build_road(spine, width: float, finish_radius: float | None = None) -> RoadGeometry:
    """Derive lane boundaries and start/finish from a spine polyline."""
    if len(spine) < 2:
        raise RoadError("spine needs at least 2 points")
    spine = tuple((float(x), float(y)) for x, y in spine)
    for a, b in zip(spine[:-1], spine[1:]):
        if math.hypot(b[0] - a[0], b[1] - a[1]) < 1e-9:
            raise RoadError("spine has repeated consecutive points")
    if width <= 0:
        raise RoadError("width must be positive")
    half = width / 2.0
    left = offset_polyline(spine, +half)
    right = offset_polyline(spine, -half)
    for name, boundary in (("left", left), ("right", right)):
        if polyline_self_intersects(boundary):
            raise RoadError(f"{name} boundary self-intersects: width too large for curvature")
    heading = math.atan2(spine[1][1] - spine[0][1], spine[1][0] - spine[0][0])
    return RoadGeometry(
        spine=spine,
        width=float(width),
        left=left,
        right=right,
        start_pose=Pose(spine[0][0], spine[0][1], heading),
        finish_center=spine[-1],
        finish_radius=half if finish_radius is None else float(finish_radius),
    )


# ---------------------------------------------------------------------------
# Sensing
# ---------------------------------------------------------------------------


def _ray_polyline_distance(origin, direction, points):
    """Distance along a ray to the nearest polyline segment, or inf."""
    ox, oy = origin
    dx, dy = direction
    best = math.inf
    for a, b in zip(points[:-1], points[1:]):
        sx, sy = b[0] - a[0], b[1] - a[1]
        denom = dx * sy - dy * sx
        if abs(denom) < 1e-15:
            continue
        rx, ry = a[0] - ox, a[1] - oy
        t = (rx * sy - ry * sx) / denom  # along the ray
        u = (rx * dy - ry * dx) / denom  # along the segment
        if t >= 0.0 and 0.0 <= u <= 1.0 and t < best:
            best = t
    return best


def read_sensor(pose: Pose, spec: SensorSpec, road: RoadGeometry, body_radius: float = 0.037) -> float:
    """Proximity reading in [0, s_max]; 0 beyond range, s_max at contact.

    The ray starts at the body edge along the mount direction; closeness
    maps linearly onto the reading.
    """
    angle = pose.heading + spec.mount_angle
    direction = (math.cos(angle), math.sin(angle))
    origin = (pose.x + body_radius * direction[0], pose.y + body_radius * direction[1])
    d = min(
        _ray_polyline_distance(origin, direction, road.left),
        _ray_polyline_distance(origin, direction, road.right),
    )
    if d >= spec.range:
        return 0.0
    return spec.s_max * (1.0 - d / spec.range)


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------


def kinematics_step(pose: Pose, lw: float, rw: float, params: RobotParams) -> Pose:
    """Exact constant-twist integration of the differential drive over dt."""
    cap = params.max_wheel_speed
    lw = min(cap, max(-cap, lw))
    rw = min(cap, max(-cap, rw))
    r = params.wheel_radius
    v = r * (lw + rw) / 2.0
    omega = r * (rw - lw) / params.axle_length
    dt = params.dt
    if abs(omega) < 1e-9:
        return Pose(
            pose.x + v * dt * math.cos(pose.heading),
            pose.y + v * dt * math.sin(pose.heading),
            pose.heading,
        )
    radius = v / omega
    h0 = pose.heading
    h1 = h0 + omega * dt
    return Pose(
        pose.x + radius * (math.sin(h1) - math.sin(h0)),
        pose.y - radius * (math.cos(h1) - math.cos(h0)),
        h1,
    )


# ---------------------------------------------------------------------------
# Adjudication and the control loop
# ---------------------------------------------------------------------------


def check_status(pose: Pose, road: RoadGeometry) -> str:
    """'finished' inside the finish disc, else 'off_road' past the half
    width, else 'on_road'.  Finished wins at the overlap."""
    p = (pose.x, pose.y)
    fx, fy = road.finish_center
    if math.hypot(p[0] - fx, p[1] - fy) <= road.finish_radius:
        return "finished"
    if point_polyline_distance(p, road.spine) > road.width / 2.0:
        return "off_road"
    return "on_road"


def simulate(
    controller: PSystem,
    road: RoadGeometry,
    params: RobotParams | None = None,
    max_steps: int = 5000,
    seed: int = 0,
    collect_traces: bool = False,
) -> SimResult:
    """Run the sense -> step -> actuate loop until finish, exit or limit."""
    params = params or RobotParams()
    k = len(params.sensors)
    env = controller.valuation()
    missing = [n for n in ("s.x_sl", "s.x_sr") if n not in env]
    missing += [f"s{i}.x" for i in range(1, k + 1) if f"s{i}.x" not in env]
    if missing:
        raise SimulationError(
            "controller lacks expected variables: " + ", ".join(missing)
        )

    rng = random.Random(seed)
    pose = road.start_pose
    trajectory = [pose]
    speeds = []
    traces = []
    outcome = "step_limit"
    failure = None
    steps = 0
    for t in range(max_steps):
        status = check_status(pose, road)
        if status == "finished":
            outcome = "completed"
            break
        if status == "off_road":
            outcome = "off_road"
            failure = (pose.x, pose.y)
            break
        for i, spec in enumerate(params.sensors, start=1):
            reading = read_sensor(pose, spec, road, params.body_radius)
            if params.sensor_quantum > 0:
                reading = round(reading / params.sensor_quantum) * params.sensor_quantum
            controller.set(f"s{i}.x", reading)
        trace = engine_step(controller, rng, step_index=t)
        if collect_traces:
            traces.append(trace)
        lw = controller.get("s.x_sl")
        rw = controller.get("s.x_sr")
        speeds.append((lw, rw))
        pose = kinematics_step(pose, lw, rw, params)
        trajectory.append(pose)
        steps += 1
    else:
        # limit reached; adjudicate the final pose once more
        status = check_status(pose, road)
        if status == "finished":
            outcome = "completed"
        elif status == "off_road":
            outcome = "off_road"
            failure = (pose.x, pose.y)

    return SimResult(
        outcome=outcome,
        steps=steps,
        trajectory=tuple(trajectory),
        wheel_speeds=tuple(speeds),
        failure_position=failure,
        traces=tuple(traces),
    )


# ---------------------------------------------------------------------------
# Road files
# ---------------------------------------------------------------------------

DEFAULT_ROAD_WIDTH_M = 0.15
DEFAULT_MAP_SCALE = 0.01  # meters per map unit


def road_from_json(text: str, width_m: float | None = None, scale: float = DEFAULT_MAP_SCALE) -> RoadGeometry:
    """Build road geometry from an exported test file.

    Spine coordinates are in generator map units and get rescaled to
    meters; the file may carry its own width_m.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RoadError(f"bad road JSON: {exc}") from None
    if not isinstance(doc, dict) or "spine" not in doc:
        raise RoadError("road JSON must be an object with a 'spine' array")
    spine = [(float(x) * scale, float(y) * scale) for x, y in doc["spine"]]
    if width_m is None:
        width_m = float(doc.get("width_m", DEFAULT_ROAD_WIDTH_M))
    return build_road(spine, width_m)
