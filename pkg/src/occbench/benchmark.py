"""Camera poses, occlusion-level bands and benchmark manifests."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

from . import OccbenchError
from .rng import make_rng

CANONICAL_ELEVATIONS = (30.0, -20.0)
CANONICAL_AZIMUTHS = (30.0, 90.0, 150.0, 210.0, 270.0, 330.0)
RANDOM_ELEVATION_RANGE = (-20.0, 30.0)
N_RANDOM_VIEWS = 4
POSE_COLLISION_DEG = 1.0
DEFAULT_RADIUS = 1.0


@dataclass(frozen=True)
class CameraPose:
    elevation: float
    azimuth: float

    def __post_init__(self):
        if not -90.0 <= self.elevation <= 90.0:
            raise OccbenchError(f"elevation {self.elevation} outside [-90, 90]")
        if not 0.0 <= self.azimuth < 360.0:
            raise OccbenchError(f"azimuth {self.azimuth} outside [0, 360)")


class OcclusionLevel(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"
    L4 = "L4"
    L5 = "L5"


# lower edges of each band; a band is [edge, next_edge), the last is closed at 1
LEVEL_EDGES = (
    (0.0, OcclusionLevel.L1),
    (0.1, OcclusionLevel.L2),
    (0.2, OcclusionLevel.L3),
    (0.3, OcclusionLevel.L4),
    (0.4, OcclusionLevel.L5),
)


def canonical_poses() -> list[CameraPose]:
    """Six fixed views: azimuth 30..330 in 60 degree steps, elevation alternating 30 / -20."""
    return [CameraPose(CANONICAL_ELEVATIONS[i % 2], az) for i, az in enumerate(CANONICAL_AZIMUTHS)]


def _near_canonical(elevation: float, azimuth: float) -> bool:
    for pose in canonical_poses():
        d_az = abs(azimuth - pose.azimuth) % 360.0
        d_az = min(d_az, 360.0 - d_az)
        if abs(elevation - pose.elevation) <= POSE_COLLISION_DEG and d_az <= POSE_COLLISION_DEG:
            return True
    return False


def random_poses(n: int, seed: int, *stream: int) -> list[CameraPose]:
    if n < 1:
        raise OccbenchError("need at least one random pose")
    rng = make_rng(seed, *stream)
    lo, hi = RANDOM_ELEVATION_RANGE
    poses = []
    while len(poses) < n:
        az = float(rng.uniform(0.0, 360.0))
        el = float(rng.uniform(lo, hi))
        if az >= 360.0 or _near_canonical(el, az):
            continue
        poses.append(CameraPose(el, az))
    return poses


def classify_level(ratio: float) -> OcclusionLevel:
    if not 0.0 <= ratio <= 1.0:
        raise OccbenchError(f"occlusion ratio {ratio} outside [0, 1]")
    level = LEVEL_EDGES[0][1]
    for edge, lvl in LEVEL_EDGES:
        if ratio >= edge:
            level = lvl
    return level


@dataclass(frozen=True)
class BenchmarkEntry:
    object_id: str
    occluded_input: str
    canonical_views: list[str]
    random_views: list[str]
    random_poses: list[CameraPose]
    mesh: str
    ratio: float
    level: OcclusionLevel

    def __post_init__(self):
        if len(self.canonical_views) != len(CANONICAL_AZIMUTHS):
            raise OccbenchError(f"{self.object_id}: expected 6 canonical views, got {len(self.canonical_views)}")
        if len(self.random_views) != N_RANDOM_VIEWS or len(self.random_poses) != N_RANDOM_VIEWS:
            raise OccbenchError(f"{self.object_id}: expected {N_RANDOM_VIEWS} random views")

    def to_json(self) -> dict:
        d = asdict(self)
        d["level"] = self.level.value
        d["random_poses"] = [asdict(p) for p in self.random_poses]
        return d


def level_histogram(levels) -> dict:
    counts = {lvl.value: 0 for lvl in OcclusionLevel}
    for lvl in levels:
        counts[OcclusionLevel(lvl).value] += 1
    total = sum(counts.values())
    return {
        lvl: {"count": c, "proportion": (c / total if total else 0.0)}
        for lvl, c in counts.items()
    }


@dataclass
class BenchmarkManifest:
    seed: int
    entries: list[BenchmarkEntry]
    histogram: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "metadata": {
                "canonical_poses": [asdict(p) for p in canonical_poses()],
                "pose_pairing": "azimuth ascending from 30, elevation alternating starting at 30",
                "radius": DEFAULT_RADIUS,
                "random_elevation_range": list(RANDOM_ELEVATION_RANGE),
                "level_bands": "[0,0.1) L1, [0.1,0.2) L2, [0.2,0.3) L3, [0.3,0.4) L4, [0.4,1] L5",
                "ratio_definition": "hidden fraction 1 - |visible| / |full|",
            },
            "entries": [e.to_json() for e in self.entries],
            "histogram": self.histogram,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def build_benchmark_manifest(samples, seed: int) -> BenchmarkManifest:
    """Bind occluded inputs to their ground-truth views and meshes.

    Each sample is a mapping with ``id``, ``ratio``, ``input``, ``mesh``,
    ``canonical_views`` (6 paths) and ``random_views`` (4 paths). Random
    poses are drawn per entry from ``(seed, index)``.
    """
    samples = list(samples)
    if not samples:
        raise OccbenchError("no samples given")
    entries = []
    for index, s in enumerate(samples):
        sid = str(s.get("id", f"#{index}"))
        for key in ("ratio", "input", "mesh", "canonical_views", "random_views"):
            if s.get(key) is None:
                raise OccbenchError(f"entry {sid}: missing {key!r}")
        ratio = float(s["ratio"])
        entries.append(BenchmarkEntry(
            object_id=sid,
            occluded_input=str(s["input"]),
            canonical_views=[str(p) for p in s["canonical_views"]],
            random_views=[str(p) for p in s["random_views"]],
            random_poses=random_poses(N_RANDOM_VIEWS, seed, index),
            mesh=str(s["mesh"]),
            ratio=ratio,
            level=classify_level(ratio),
        ))
    hist = level_histogram(e.level for e in entries)
    return BenchmarkManifest(seed, entries, hist)
