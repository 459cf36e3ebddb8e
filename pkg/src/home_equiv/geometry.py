"""Planar homography algebra and image warping.

A homography is an invertible 3x3 matrix acting on homogeneous image
coordinates, defined up to scale. Matrices here are stored in a canonical
normalized form (bottom-right entry 1 whenever it is not vanishingly
small), which turns the projective "equal up to scale" relation into plain
entrywise equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, DegeneratePoint, ShapeMismatch, SingularMatrix
from .kernels import bilinear_warp

DET_EPS = 1e-12
W_EPS = 1e-12

SCALE_RANGE = (0.5, 1.5)
TRANSLATION_RANGE = (-4.0, 4.0)
ROTATION_RANGE_DEG = (-20.0, 20.0)


class Homography:
    """Normalized invertible 3x3 matrix mapping homogeneous coordinates.

    Construction copies the input, divides through by m[2,2] when
    |m[2,2]| > 1e-12, verifies invertibility, and freezes the buffer.
    """

    __slots__ = ("m",)

    def __init__(self, m):
        m = np.array(m, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise BadConfig("homography entries must be finite")
        if abs(m[2, 2]) > W_EPS:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) < DET_EPS:
            raise SingularMatrix(f"matrix is singular within {DET_EPS}: {m.tolist()}")
        m.setflags(write=False)
        self.m = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])

    @classmethod
    def scaling(cls, sx: float, sy: float) -> "Homography":
        return cls([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])

    @classmethod
    def rotation_deg(cls, theta_deg: float) -> "Homography":
        t = math.radians(theta_deg)
        c, s = math.cos(t), math.sin(t)
        return cls([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def __repr__(self):
        return f"Homography({self.m.tolist()})"


@dataclass(frozen=True)
class PointH:
    """Homogeneous 2D point (x, y, w); not all components may be zero."""

    x: float
    y: float
    w: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w)):
            raise BadConfig("point components must be finite")
        if self.x == 0.0 and self.y == 0.0 and self.w == 0.0:
            raise BadConfig("homogeneous point must have a nonzero component")


@dataclass(frozen=True)
class HomographyParams:
    """Sampled transform parameters: scaling, translation (pixels), rotation.

    Ranges match the synthetic multi-view generator: scales in [0.5, 1.5],
    translations in [-4, 4] pixels, rotation in [-20, 20] degrees.
    """

    sx: float
    sy: float
    tx: float
    ty: float
    theta_deg: float

    def __post_init__(self):
        lo, hi = SCALE_RANGE
        if not (lo <= self.sx <= hi and lo <= self.sy <= hi):
            raise BadConfig(f"scale outside [{lo}, {hi}]: sx={self.sx}, sy={self.sy}")
        lo, hi = TRANSLATION_RANGE
        if not (lo <= self.tx <= hi and lo <= self.ty <= hi):
            raise BadConfig(f"translation outside [{lo}, {hi}]: tx={self.tx}, ty={self.ty}")
        lo, hi = ROTATION_RANGE_DEG
        if not (lo <= self.theta_deg <= hi):
            raise BadConfig(f"rotation outside [{lo}, {hi}]: {self.theta_deg}")

    @classmethod
    def identity(cls) -> "HomographyParams":
        return cls(1.0, 1.0, 0.0, 0.0, 0.0)


def compose(a: Homography, b: Homography) -> Homography:
    """Matrix product a.b: applying the result equals applying b, then a."""
    return Homography(a.m @ b.m)


def invert(h: Homography) -> Homography:
    """Inverse homography; compose(h, invert(h)) is the identity."""
    try:
        inv = np.linalg.inv(h.m)
    except np.linalg.LinAlgError as exc:  # construction normally rules this out
        raise SingularMatrix(str(exc)) from exc
    return Homography(inv)


def apply(h: Homography, p: PointH) -> PointH:
    """Map a homogeneous point through h (no perspective division)."""
    v = h.m @ np.array([p.x, p.y, p.w], dtype=np.float64)
    return PointH(float(v[0]), float(v[1]), float(v[2]))


def apply_euclidean(h: Homography, p: PointH) -> tuple[float, float]:
    """Map a point through h and divide out w; errors when w ~ 0."""
    q = apply(h, p)
    if abs(q.w) < W_EPS:
        raise DegeneratePoint(f"output w = {q.w} below {W_EPS}")
    return q.x / q.w, q.y / q.w


def homography_from_params(params: HomographyParams, width: int, height: int) -> Homography:
    """Build T(tx,ty) . C . R(theta) . S(sx,sy) . C^-1 for an image.

    Rotation and scaling are conjugated about the image center (W/2, H/2)
    so that content stays in frame at small image sizes.
    """
    center = Homography.translation(width / 2.0, height / 2.0)
    h = compose(Homography.translation(params.tx, params.ty), center)
    h = compose(h, Homography.rotation_deg(params.theta_deg))
    h = compose(h, Homography.scaling(params.sx, params.sy))
    return compose(h, invert(center))


def random_homography(rng, width, height, scale_range=SCALE_RANGE,
                      translation_range=TRANSLATION_RANGE,
                      rotation_range_deg=ROTATION_RANGE_DEG):
    """Sample a random center-conjugated similarity-style homography.

    Draws sx, sy, tx, ty, theta uniformly (in that order) from the given
    ranges and returns (Homography, HomographyParams). Ranges may only
    narrow the canonical ones, never widen them.

    Parameters
    ----------
    rng : np.random.Generator
        Seeded generator; the five draws fully determine the result.
    width, height : int
        Image dimensions used for the centering conjugation.
    """
    for got, legal in ((scale_range, SCALE_RANGE),
                       (translation_range, TRANSLATION_RANGE),
                       (rotation_range_deg, ROTATION_RANGE_DEG)):
        if got[0] < legal[0] or got[1] > legal[1] or got[0] > got[1]:
            raise BadConfig(f"range {got} outside legal {legal}")
    params = HomographyParams(
        sx=float(rng.uniform(*scale_range)),
        sy=float(rng.uniform(*scale_range)),
        tx=float(rng.uniform(*translation_range)),
        ty=float(rng.uniform(*translation_range)),
        theta_deg=float(rng.uniform(*rotation_range_deg)),
    )
    return homography_from_params(params, width, height), params


def warp_image(pixels: np.ndarray, h: Homography) -> np.ndarray:
    """Warp a 2D image by h using inverse mapping and bilinear sampling.

    Destination pixel q samples the source at invert(h) applied to q;
    out-of-bounds taps read as zero. Output dims equal input dims.
    """
    pixels = np.ascontiguousarray(pixels, dtype=np.float64)
    if pixels.ndim != 2 or pixels.size == 0:
        raise ShapeMismatch(f"expected nonempty 2D image, got shape {pixels.shape}")
    hinv = np.ascontiguousarray(invert(h).m)
    return bilinear_warp(pixels, hinv)
