"""Domain types shared by every stage: AU+PS vectors, landmark sets, frames, samples."""
from __future__ import annotations
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ContractError, EmptyInputError, RangeError, ShapeError

# OpenFace intensity AUs, in OpenFace column order
AU_NAMES: Tuple[str, ...] = (
    "au01", "au02", "au04", "au05", "au06", "au07", "au09", "au10", "au12",
    "au14", "au15", "au17", "au20", "au23", "au25", "au26", "au45",
)
POSE_NAMES: Tuple[str, ...] = ("pitch", "yaw", "roll")
AUPS_NAMES: Tuple[str, ...] = AU_NAMES + POSE_NAMES
AU_DIM = len(AU_NAMES)
POSE_DIM = len(POSE_NAMES)
AUPS_DIM = AU_DIM + POSE_DIM

AU_MAX = 5.0
POSE_MAX = math.pi / 2
_TOL = 1e-9


def au_index(name: str) -> int:
    return AU_NAMES.index(name.lower())


def _check_ranges(values: Sequence[float], normalized: bool) -> None:
    au_hi = 1.0 if normalized else AU_MAX
    pose_hi = 1.0 if normalized else POSE_MAX
    for i, x in enumerate(values):
        if not math.isfinite(x):
            raise RangeError(f"component {i} ({AUPS_NAMES[i]}) is not finite: {x}")
        if i < AU_DIM:
            if x < -_TOL or x > au_hi + _TOL:
                raise RangeError(f"component {i} ({AUPS_NAMES[i]}) = {x} outside [0, {au_hi}]")
        elif abs(x) > pose_hi + _TOL:
            raise RangeError(f"component {i} ({AUPS_NAMES[i]}) = {x} outside [-{pose_hi}, {pose_hi}]")


@dataclass(frozen=True)
class AUPSVector:
    au: Tuple[float, ...]
    pose: Tuple[float, float, float]
    normalized: bool = False

    def __post_init__(self):
        au = tuple(float(x) for x in self.au)
        pose = tuple(float(x) for x in self.pose)
        if len(au) != AU_DIM or len(pose) != POSE_DIM:
            raise ShapeError(f"AU+PS needs {AU_DIM} AU and {POSE_DIM} pose values, got {len(au)} + {len(pose)}")
        _check_ranges(au + pose, self.normalized)
        object.__setattr__(self, "au", au)
        object.__setattr__(self, "pose", pose)

    @property
    def values(self) -> Tuple[float, ...]:
        return self.au + self.pose

    def as_array(self, dtype=np.float64) -> np.ndarray:
        return np.asarray(self.values, dtype=dtype)

    @classmethod
    def from_values(cls, values: Iterable[float], normalized: bool) -> "AUPSVector":
        vals = [float(x) for x in values]
        if len(vals) != AUPS_DIM:
            raise ShapeError(f"AU+PS vector must have length {AUPS_DIM}, got {len(vals)}")
        return cls(tuple(vals[:AU_DIM]), tuple(vals[AU_DIM:]), normalized)

    @classmethod
    def zeros(cls, normalized: bool = True) -> "AUPSVector":
        return cls((0.0,) * AU_DIM, (0.0,) * POSE_DIM, normalized)


def normalize_aups(v: AUPSVector) -> AUPSVector:
    if v.normalized:
        raise ContractError("normalize_aups expects a raw AU+PS vector")
    _check_ranges(v.values, normalized=False)
    return AUPSVector(tuple(x / AU_MAX for x in v.au), tuple(x / POSE_MAX for x in v.pose), True)


def denormalize_aups(v: AUPSVector) -> AUPSVector:
    if not v.normalized:
        raise ContractError("denormalize_aups expects a normalized AU+PS vector")
    _check_ranges(v.values, normalized=True)
    return AUPSVector(tuple(x * AU_MAX for x in v.au), tuple(x * POSE_MAX for x in v.pose), False)


def clamp_normalized(values: Sequence[float]) -> AUPSVector:
    """Build a normalized vector from network output, absorbing float32 overshoot at the range ends."""
    arr = np.asarray(values, dtype=np.float64)
    arr[:AU_DIM] = np.clip(arr[:AU_DIM], 0.0, 1.0)
    arr[AU_DIM:] = np.clip(arr[AU_DIM:], -1.0, 1.0)
    return AUPSVector.from_values(arr, normalized=True)


@dataclass(frozen=True)
class LandmarkSet:
    points: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        for k, (x, y) in enumerate(pts):
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise RangeError(f"landmark {k} = ({x}, {y}) outside [0,1]^2")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64).reshape(-1, 2)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "LandmarkSet":
        arr = np.asarray(arr, dtype=np.float64).reshape(-1, 2)
        return cls(tuple((float(x), float(y)) for x, y in arr))


def average_landmarks(sets: Sequence[LandmarkSet]) -> LandmarkSet:
    if not sets:
        raise EmptyInputError("average_landmarks needs at least one landmark set")
    count = len(sets[0])
    for i, s in enumerate(sets):
        if len(s) != count:
            raise ShapeError(f"landmark set {i} has {len(s)} points, expected {count}")
    stacked = np.stack([s.as_array() for s in sets])
    # summing sorted values makes the mean independent of input order
    mean = np.sort(stacked, axis=0).sum(axis=0) / len(sets)
    return LandmarkSet.from_array(np.clip(mean, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class FrameImage:
    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float32, copy=True)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeError(f"frame must be H x W x 3, got {px.shape}")
        if not np.all(np.isfinite(px)) or px.min(initial=0.0) < -1.0 or px.max(initial=0.0) > 1.0:
            raise RangeError("frame pixels must lie in [-1, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def to_uint8(self) -> np.ndarray:
        return np.rint((self.pixels.astype(np.float64) + 1.0) * 127.5).clip(0, 255).astype(np.uint8)

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "FrameImage":
        return cls(np.asarray(arr, dtype=np.float32) / 127.5 - 1.0)

    @classmethod
    def blank(cls, height: int, width: int) -> "FrameImage":
        return cls(np.zeros((height, width, 3), dtype=np.float32))


@dataclass(frozen=True)
class SampleRecord:
    id: str
    text: str
    aups_seq: Tuple[AUPSVector, ...]
    frames: Tuple[FrameImage, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "aups_seq", tuple(self.aups_seq))
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.aups_seq:
            raise EmptyInputError(f"sample {self.id} has no frames")
        if self.frames and len(self.frames) != len(self.aups_seq):
            raise ShapeError(f"sample {self.id}: {len(self.aups_seq)} AU+PS rows but {len(self.frames)} frames")

    def __len__(self) -> int:
        return len(self.aups_seq)

    def aups_matrix(self, normalized: bool = True) -> np.ndarray:
        rows: List[AUPSVector] = []
        for v in self.aups_seq:
            if v.normalized == normalized:
                rows.append(v)
            else:
                rows.append(normalize_aups(v) if normalized else denormalize_aups(v))
        return np.stack([v.as_array() for v in rows])
