"""Az/el beam codebooks on a tilted, rotated antenna mount.

Antenna frame: forward is the boresight, right is horizontal and to the right
of boresight, up is perpendicular to both.  Azimuth is positive to the
right, elevation positive upward, both in degrees.  The mount applies the
bearing (clockwise from +y toward +x, seen from above) first and then tilts
the boresight down by the downtilt about the rotated right axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .scene import Scene, ray_intersect_many, vec3


class BeamId(NamedTuple):
    az: int
    el: int


@dataclass(frozen=True)
class MountOrientation:
    bearing: float = 0.0
    downtilt: float = 0.0

    def __post_init__(self):
        b = self.bearing % 360.0
        object.__setattr__(self, "bearing", 0.0 if b == 360.0 else b)
        if not -90.0 <= self.downtilt <= 90.0:
            raise ValueError(f"downtilt must lie in [-90, 90], got {self.downtilt}")

    @classmethod
    def facing(cls, position, target) -> "MountOrientation":
        """Mount whose boresight points from `position` at `target`."""
        d = vec3(target) - vec3(position)
        bearing = math.degrees(math.atan2(d[0], d[1]))
        downtilt = math.degrees(math.atan2(-d[2], math.hypot(d[0], d[1])))
        return cls(bearing, downtilt)

    def frame(self) -> np.ndarray:
        """Rows are the forward, right and up axes in global coordinates."""
        b, t = math.radians(self.bearing), math.radians(self.downtilt)
        sb, cb, st, ct = math.sin(b), math.cos(b), math.sin(t), math.cos(t)
        forward = np.array([sb * ct, cb * ct, -st])
        right = np.array([cb, -sb, 0.0])
        up = np.array([sb * st, cb * st, ct])
        return np.vstack([forward, right, up])


def grid_count(fov: float, beamwidth: float) -> int:
    # The small slack keeps exact ratios such as 140/5 from rounding down.
    return int(math.floor(2.0 * fov / beamwidth + 1e-9))


def _centers(fov: float, beamwidth: float) -> tuple[float, ...]:
    n = grid_count(fov, beamwidth)
    return tuple((k - (n - 1) / 2.0) * beamwidth for k in range(n))


@dataclass(frozen=True)
class BeamCodebook:
    fov_az: float
    fov_el: float
    beamwidth: float
    az_centers: tuple[float, ...]
    el_centers: tuple[float, ...]
    mount: MountOrientation

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.az_centers), len(self.el_centers)

    @property
    def size(self) -> int:
        return len(self.az_centers) * len(self.el_centers)

    def __len__(self) -> int:
        return self.size

    def beams(self) -> Iterator[BeamId]:
        for el in range(len(self.el_centers)):
            for az in range(len(self.az_centers)):
                yield BeamId(az, el)

    def angles(self, beam: BeamId) -> tuple[float, float]:
        return self.az_centers[beam.az], self.el_centers[beam.el]

    def to_local(self, direction) -> tuple[float, float]:
        """Antenna-frame (az, el) in degrees of a global direction."""
        local = self.mount.frame() @ np.asarray(direction, dtype=float)
        az = math.degrees(math.atan2(local[1], local[0]))
        # atan2 stays well conditioned near the poles, where asin does not.
        el = math.degrees(math.atan2(local[2], math.hypot(local[0], local[1])))
        return az, el

    def center_direction(self, beam: BeamId) -> np.ndarray:
        """Global unit vector along a beam's center ray."""
        az, el = (math.radians(a) for a in self.angles(beam))
        local = np.array(
            [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
        )
        return self.mount.frame().T @ local

    def nearest(self, az: float, el: float) -> BeamId | None:
        """Cell nearest to an antenna-frame direction, None outside the FOV."""
        if abs(az) > self.fov_az or abs(el) > self.fov_el:
            return None
        return BeamId(_nearest_index(self.az_centers, az), _nearest_index(self.el_centers, el))


def _nearest_index(centers: tuple[float, ...], value: float) -> int:
    # Rounding the distances makes exact mid-cell ties resolve to the lower index.
    dist = np.round(np.abs(np.asarray(centers) - value), 9)
    return int(np.argmin(dist))


def build_codebook(
    fov: float,
    beamwidth: float,
    mount: MountOrientation | None = None,
    fov_el: float | None = None,
) -> BeamCodebook:
    """Uniform az/el grid over +-`fov` degrees with `beamwidth`-wide cells."""
    fov_el = fov if fov_el is None else fov_el
    if not (0 < beamwidth <= 2 * min(fov, fov_el)):
        raise ValueError(f"beamwidth must lie in (0, 2*fov], got {beamwidth}")
    return BeamCodebook(
        float(fov), float(fov_el), float(beamwidth),
        _centers(fov, beamwidth), _centers(fov_el, beamwidth),
        mount or MountOrientation(),
    )


def direction_to_beam(codebook: BeamCodebook, bs_pos, target) -> BeamId | None:
    d = vec3(target) - vec3(bs_pos)
    if not np.any(d):
        raise ValueError("target coincides with the BS position")
    return codebook.nearest(*codebook.to_local(d))


def first_hit_map(codebook: BeamCodebook, bs_pos, scene: Scene) -> dict[BeamId, str | None]:
    """Surface first hit by each beam's center ray (None when nothing is hit)."""
    beams = list(codebook.beams())
    dirs = np.array([codebook.center_direction(b) for b in beams])
    hits = ray_intersect_many(scene, vec3(bs_pos), dirs)
    return {b: (h.surface_id if h is not None else None) for b, h in zip(beams, hits)}


def beams_covering_surface(
    codebook: BeamCodebook, bs_pos, scene: Scene, surface_id: str, hits=None
) -> set[BeamId]:
    scene.surface(surface_id)
    hits = first_hit_map(codebook, bs_pos, scene) if hits is None else hits
    return {b for b, sid in hits.items() if sid == surface_id}
