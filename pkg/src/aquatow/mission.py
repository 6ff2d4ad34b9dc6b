"""Reference trajectories from line/arc path segments, and mission scripts.

Paths are parameterized by arc length at a constant per-segment speed. Beyond
the end of the path the final point is held with zero velocity.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Disturbance:
    force: np.ndarray    # world frame [N]
    t_start: float
    duration: float

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        if self.duration <= 0:
            raise ValueError("disturbance duration must be positive")

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_start + self.duration


@dataclass
class LineSegment:
    start: np.ndarray
    end: np.ndarray
    speed: float = 1.0

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        self.end = np.asarray(self.end, dtype=float)
        if self.speed <= 0:
            raise ValueError("speed must be positive")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def duration(self) -> float:
        return self.length / self.speed

    def point(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """Position and unit tangent at arc length s."""
        tangent = (self.end - self.start) / self.length
        return self.start + s * tangent, tangent

    def start_point(self) -> np.ndarray:
        return self.start.copy()

    def end_point(self) -> np.ndarray:
        return self.end.copy()


@dataclass
class ArcSegment:
    center: np.ndarray
    radius: float
    angle_start: float
    angle_sweep: float    # signed; positive = counterclockwise
    speed: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.speed <= 0:
            raise ValueError("speed must be positive")

    @property
    def length(self) -> float:
        return self.radius * abs(self.angle_sweep)

    @property
    def duration(self) -> float:
        return self.length / self.speed

    def point(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        direction = math.copysign(1.0, self.angle_sweep)
        ang = self.angle_start + direction * s / self.radius
        p = self.center + self.radius * np.array([math.cos(ang), math.sin(ang), 0.0])
        tangent = direction * np.array([-math.sin(ang), math.cos(ang), 0.0])
        return p, tangent

    def start_point(self) -> np.ndarray:
        return self.point(0.0)[0]

    def end_point(self) -> np.ndarray:
        return self.point(self.length)[0]


PathSegment = LineSegment | ArcSegment


@dataclass
class RefSample:
    p: np.ndarray
    v: np.ndarray
    t: float


@dataclass
class MissionPlan:
    name: str
    segments: list
    disturbances: list = field(default_factory=list)
    duration: float = 0.0

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            gap = np.linalg.norm(b.start_point() - a.end_point())
            if gap > 1e-9:
                raise ValueError(f"segments not continuous (gap {gap:.3g} m)")
        if self.duration <= 0:
            self.duration = self.path_duration

    @property
    def path_duration(self) -> float:
        return sum(seg.duration for seg in self.segments)


def sample_reference(plan: MissionPlan, t: float) -> RefSample:
    if t < 0:
        raise ValueError("t must be nonnegative")
    remaining = t
    for seg in plan.segments:
        if remaining < seg.duration:
            p, tangent = seg.point(remaining * seg.speed)
            return RefSample(p=p, v=seg.speed * tangent, t=t)
        remaining -= seg.duration
    # past the path end: hold the final point
    last = plan.segments[-1]
    return RefSample(p=last.end_point(), v=np.zeros(3), t=t)


def build_reference_window(plan: MissionPlan, t: float, n: int,
                           dt: float) -> list[RefSample]:
    """Horizon window sampled at t + k*dt for k in 1..n."""
    if n < 2:
        raise ValueError("window needs at least 2 steps")
    return [sample_reference(plan, t + k * dt) for k in range(1, n + 1)]


def circle_mission(speed: float = 1.0, radius: float = 20.0,
                   duration: float = 60.0) -> MissionPlan:
    """Counterclockwise circle starting at (0, -radius)."""
    laps = max(1.0, math.ceil(duration * speed / (2 * math.pi * radius)))
    arc = ArcSegment(center=np.zeros(3), radius=radius,
                     angle_start=-math.pi / 2.0,
                     angle_sweep=laps * 2.0 * math.pi, speed=speed)
    return MissionPlan(name="circle", segments=[arc], duration=duration)


def line_mission(speed: float = 1.0, length: float = 50.0,
                 duration: float = 0.0) -> MissionPlan:
    seg = LineSegment(start=np.zeros(3), end=np.array([length, 0.0, 0.0]),
                      speed=speed)
    return MissionPlan(name="line", segments=[seg],
                       duration=duration or seg.duration)


def disturbance_mission(speed: float = 1.0, radius: float = 20.0,
                        duration: float = 40.0, magnitude: float = 1000.0,
                        t_start: float = 7.0,
                        pulse: float = 0.5) -> MissionPlan:
    """Circle mission plus a lateral impulse, perpendicular to the motion and
    pointing outward from the circle at the moment of onset."""
    plan = circle_mission(speed=speed, radius=radius, duration=duration)
    ref = sample_reference(plan, t_start)
    outward = ref.p - plan.segments[0].center
    outward = outward / np.linalg.norm(outward)
    plan = MissionPlan(name="disturbance", segments=plan.segments,
                       disturbances=[Disturbance(force=magnitude * outward,
                                                 t_start=t_start,
                                                 duration=pulse)],
                       duration=duration)
    return plan


def paper_missions(speed: float = 1.0) -> dict[str, MissionPlan]:
    return {
        "circle": circle_mission(speed=speed),
        "line": line_mission(speed=speed),
        "disturbance": disturbance_mission(speed=speed),
    }


def random_plan(rng: np.random.Generator, speed: float = 1.0,
                n_segments: tuple[int, int] = (2, 5)) -> MissionPlan:
    """Random continuous line/arc path for the statistical campaign."""
    count = int(rng.integers(n_segments[0], n_segments[1] + 1))
    pos = np.zeros(3)
    heading = float(rng.uniform(-math.pi, math.pi))
    segments = []
    for _ in range(count):
        if rng.random() < 0.5:
            length = float(rng.uniform(20.0, 60.0))
            end = pos + length * np.array([math.cos(heading), math.sin(heading), 0.0])
            segments.append(LineSegment(start=pos, end=end, speed=speed))
            pos = end
        else:
            radius = float(rng.uniform(10.0, 30.0))
            sweep = float(rng.uniform(math.radians(20), math.radians(120)))
            sweep *= 1.0 if rng.random() < 0.5 else -1.0
            side = math.copysign(1.0, sweep)
            center = pos + radius * np.array([
                math.cos(heading + side * math.pi / 2.0),
                math.sin(heading + side * math.pi / 2.0), 0.0])
            angle_start = math.atan2(pos[1] - center[1], pos[0] - center[0])
            seg = ArcSegment(center=center, radius=radius,
                             angle_start=angle_start, angle_sweep=sweep,
                             speed=speed)
            segments.append(seg)
            pos = seg.end_point()
            heading += sweep
    return MissionPlan(name="random", segments=segments)
