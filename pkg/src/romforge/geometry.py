"""Hole geometry on the unit square: shapes, membership, rasterization, samplers.

The computational domain is always the unit square (0, 1)^2 minus a set of
elliptical or circular holes. Everything downstream (finite differences,
bitmap encodings, benchmark samplers) goes through the membership test
defined here, so the quadratic-form convention below is the single source
of truth for what "inside a hole" means.

A hole with center (x0, y0), half axes (a, b) and tilt angle alpha contains
the point (x, y) iff

    ((c*dx + s*dy) / a)^2 + ((-s*dx + c*dy) / b)^2 <= 1

with dx = x - x0, dy = y - y0, c = cos(alpha), s = sin(alpha). Boundary
points count as inside (holes are closed sets; the PDE domain is open).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class SamplingBudgetExceeded(RuntimeError):
    """Raised when rejection sampling fails to find a feasible layout."""


class InvalidRatio(ValueError):
    """Raised for aspect ratios outside (0, 1]."""


@dataclass(frozen=True)
class HoleShape:
    """One elliptical or circular hole.

    Parameters
    ----------
    kind : str
        Either ``"circle"`` or ``"ellipse"``. Circles must have equal
        half axes.
    center : tuple of float
        Hole center (x0, y0), strictly inside the unit square.
    half_axes : tuple of float
        Semi-major and semi-minor axes (a, b) with a >= b > 0.
    angle : float
        Tilt of the semi-major axis against the x axis, in radians.
    """

    kind: str
    center: tuple[float, float]
    half_axes: tuple[float, float]
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in ("circle", "ellipse"):
            raise ValueError(f"unknown hole kind {self.kind!r}")
        a, b = self.half_axes
        if not (a >= b > 0.0):
            raise ValueError(f"half axes must satisfy a >= b > 0, got {self.half_axes}")
        if self.kind == "circle" and a != b:
            raise ValueError("circle requires equal half axes")
        if boundary_clearance(self) <= 0.0:
            raise ValueError(f"hole is not strictly inside the unit square: {self}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "center": [float(self.center[0]), float(self.center[1])],
            "half_axes": [float(self.half_axes[0]), float(self.half_axes[1])],
            "angle": float(self.angle),
        }

    @staticmethod
    def from_dict(d: dict) -> "HoleShape":
        return HoleShape(
            kind=d["kind"],
            center=(float(d["center"][0]), float(d["center"][1])),
            half_axes=(float(d["half_axes"][0]), float(d["half_axes"][1])),
            angle=float(d.get("angle", 0.0)),
        )


@dataclass(frozen=True)
class DomainSpec:
    """Unit square minus a tuple of holes."""

    holes: tuple[HoleShape, ...]

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))

    def validate(self, margin: float = 0.1, separation: float = 0.1) -> None:
        """Check sampler guarantees: boundary margin and pairwise separation.

        Raises ValueError if any hole boundary comes closer than ``margin``
        to the square boundary or closer than ``separation`` to another
        hole's boundary.
        """
        for k, hole in enumerate(self.holes):
            bc = boundary_clearance(hole)
            if bc < margin:
                raise ValueError(
                    f"hole {k} clears the square boundary by {bc:.4f} < {margin}"
                )
        for i in range(len(self.holes)):
            for j in range(i + 1, len(self.holes)):
                gap = pair_clearance(self.holes[i], self.holes[j])
                if gap < separation:
                    raise ValueError(
                        f"holes {i} and {j} are separated by {gap:.4f} < {separation}"
                    )

    def to_dict(self) -> dict:
        return {"holes": [h.to_dict() for h in self.holes]}

    @staticmethod
    def from_dict(d: dict) -> "DomainSpec":
        return DomainSpec(holes=tuple(HoleShape.from_dict(h) for h in d["holes"]))


@dataclass(frozen=True)
class EquationParams:
    """Scalar equation parameters attached to a sampled domain.

    ``phi`` is the transport direction angle, ``beta`` the magnitude of the
    prescribed boundary flux on the vertical sides. ``mu`` (diffusion) and
    ``hole_value`` (Dirichlet datum on hole boundaries) are fixed by the
    benchmark family rather than sampled; samplers fill them in.
    """

    phi: float
    beta: float
    mu: float = 1.0
    hole_value: float = 1.0


@dataclass(frozen=True)
class CharacteristicBitmap:
    """Binary raster of a domain: 1 inside the domain, 0 inside a hole.

    ``pixels[i, j]`` samples the pixel center ((j + 0.5) / width,
    (i + 0.5) / height), so row 0 sits at the bottom of the square.
    """

    height: int
    width: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"({self.height}, {self.width})"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")


def _hole_quadratic(hole: HoleShape, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    c = np.cos(hole.angle)
    s = np.sin(hole.angle)
    dx = np.asarray(x, dtype=np.float64) - hole.center[0]
    dy = np.asarray(y, dtype=np.float64) - hole.center[1]
    a, b = hole.half_axes
    u = (c * dx + s * dy) / a
    v = (-s * dx + c * dy) / b
    return u * u + v * v


def in_hole(hole: HoleShape, x, y):
    """Vectorized closed-set membership test for one hole."""
    return _hole_quadratic(hole, x, y) <= 1.0


def domain_mask(spec: DomainSpec, x, y) -> np.ndarray:
    """Boolean mask, True where (x, y) lies in the closed square and no hole."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mask = (x >= 0.0) & (x <= 1.0) & (y >= 0.0) & (y <= 1.0)
    for hole in spec.holes:
        mask &= ~in_hole(hole, x, y)
    return mask


def point_in_domain(spec: DomainSpec, x: float, y: float) -> bool:
    return bool(domain_mask(spec, x, y))


def rasterize(spec: DomainSpec, height: int, width: int) -> CharacteristicBitmap:
    """Rasterize a domain to a binary bitmap sampled at pixel centers.

    Parameters
    ----------
    spec : DomainSpec
    height, width : int
        Raster size, each at least 1.

    Returns
    -------
    CharacteristicBitmap
        uint8 pixels, 1 in the domain, 0 in a hole.
    """
    if height < 1 or width < 1:
        raise ValueError(f"raster size must be at least 1x1, got {height}x{width}")
    xs = (np.arange(width, dtype=np.float64) + 0.5) / width
    ys = (np.arange(height, dtype=np.float64) + 0.5) / height
    xg, yg = np.meshgrid(xs, ys)
    pixels = domain_mask(spec, xg, yg).astype(np.uint8)
    return CharacteristicBitmap(height=height, width=width, pixels=pixels)


def axis_extents(hole: HoleShape) -> tuple[float, float]:
    """Half widths of the hole's axis-aligned bounding box.

    The extent of a tilted ellipse along the x axis is
    sqrt(a^2 cos^2 alpha + b^2 sin^2 alpha) and symmetrically for y.
    """
    a, b = hole.half_axes
    c2 = np.cos(hole.angle) ** 2
    s2 = np.sin(hole.angle) ** 2
    ex = float(np.sqrt(a * a * c2 + b * b * s2))
    ey = float(np.sqrt(a * a * s2 + b * b * c2))
    return ex, ey


def boundary_clearance(hole: HoleShape) -> float:
    """Distance from the hole boundary to the nearest side of the square."""
    ex, ey = axis_extents(hole)
    x0, y0 = hole.center
    return float(min(x0 - ex, 1.0 - x0 - ex, y0 - ey, 1.0 - y0 - ey))


def hole_boundary_points(hole: HoleShape, count: int = 360) -> np.ndarray:
    """Points on the hole boundary at ``count`` uniformly spaced parameters."""
    t = np.linspace(0.0, TWO_PI, count, endpoint=False)
    a, b = hole.half_axes
    c = np.cos(hole.angle)
    s = np.sin(hole.angle)
    px = a * np.cos(t)
    py = b * np.sin(t)
    x = hole.center[0] + c * px - s * py
    y = hole.center[1] + s * px + c * py
    return np.column_stack([x, y])


def pair_clearance(h1: HoleShape, h2: HoleShape, samples: int = 720) -> float:
    """Distance between two hole boundaries.

    Exact for circle pairs; for ellipses the boundaries are sampled at
    ``samples`` parameters each and the minimum pairwise distance taken.
    """
    if h1.kind == "circle" and h2.kind == "circle":
        d = np.hypot(
            h1.center[0] - h2.center[0], h1.center[1] - h2.center[1]
        )
        return float(d - h1.half_axes[0] - h2.half_axes[0])
    p1 = hole_boundary_points(h1, samples)
    p2 = hole_boundary_points(h2, samples)
    d2 = (
        (p1[:, None, 0] - p2[None, :, 0]) ** 2
        + (p1[:, None, 1] - p2[None, :, 1]) ** 2
    )
    return float(np.sqrt(d2.min()))


def sample_ellipse_domain(
    seed: int,
    margin: float = 0.1,
    min_half_axis: float = 0.05,
) -> tuple[DomainSpec, EquationParams]:
    """Sample the one-ellipse benchmark family.

    Draws, in this order, from ``numpy.random.default_rng(seed)``:
    center (x0, y0) uniform on [margin, 1 - margin]^2 and tilt alpha uniform
    on [0, pi), redrawn together until the largest admissible semi-major
    axis (distance from center to the nearest side minus ``margin``) is at
    least ``min_half_axis``; then a uniform on [min_half_axis, a_max],
    b uniform on [min_half_axis, a], phi uniform on [0, 2 pi) and beta
    uniform on [1, 10].

    The margin bound uses the center distance, which dominates the tilted
    extent for any alpha, so sampled ellipses always clear the boundary by
    at least ``margin``.

    Returns
    -------
    (DomainSpec, EquationParams)
        One-hole domain and its equation parameters (hole Dirichlet
        value 1).
    """
    rng = np.random.default_rng(seed)
    while True:
        x0, y0 = rng.uniform(margin, 1.0 - margin, size=2)
        alpha = rng.uniform(0.0, np.pi)
        a_max = min(x0, 1.0 - x0, y0, 1.0 - y0) - margin
        if a_max >= min_half_axis:
            break
    a = rng.uniform(min_half_axis, a_max)
    b = rng.uniform(min_half_axis, a)
    phi = rng.uniform(0.0, TWO_PI)
    beta = rng.uniform(1.0, 10.0)
    hole = HoleShape(
        kind="ellipse", center=(float(x0), float(y0)),
        half_axes=(float(a), float(b)), angle=float(alpha),
    )
    spec = DomainSpec(holes=(hole,))
    params = EquationParams(phi=float(phi), beta=float(beta), hole_value=1.0)
    return spec, params


def sample_holes_domain(
    seed: int,
    margin: float = 0.1,
    separation: float = 0.1,
    min_radius: float = 0.05,
    max_radius: float = 0.2,
    budget: int = 10000,
) -> tuple[DomainSpec, EquationParams]:
    """Sample the multi-circle benchmark family (1 to 4 holes).

    Draws, in this order, from ``numpy.random.default_rng(seed)``: the hole
    count m uniform on {1, .., 4}; then, per attempt, m centers uniform on
    [margin, 1 - margin]^2. An attempt is feasible when every center clears
    each side by at least margin + min_radius and every center pair is at
    least 2 * min_radius + separation apart; infeasible attempts discard all
    centers and redraw. After ``budget`` failed attempts
    SamplingBudgetExceeded is raised. For a feasible layout the radii are
    drawn in center order, r_k uniform on [min_radius, hi_k] where hi_k
    caps the radius by ``max_radius``, by the side clearance minus
    ``margin``, by already-drawn neighbors (gap >= separation) and by
    not-yet-drawn neighbors (reserving min_radius for them). Finally phi
    uniform on [0, 2 pi) and beta uniform on [1, 10].

    The caps keep every later interval nonempty, so a feasible layout never
    fails at the radius stage.

    Returns
    -------
    (DomainSpec, EquationParams)
        Multi-circle domain and its equation parameters (hole Dirichlet
        value 2).
    """
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 5))
    lo = margin + min_radius
    for _ in range(budget):
        centers = rng.uniform(margin, 1.0 - margin, size=(m, 2))
        side = np.minimum(centers, 1.0 - centers).min(axis=1)
        if (side < lo).any():
            continue
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        iu = np.triu_indices(m, k=1)
        if m > 1 and (dist[iu] < 2.0 * min_radius + separation).any():
            continue
        break
    else:
        raise SamplingBudgetExceeded(
            f"no feasible {m}-hole layout in {budget} attempts (seed {seed})"
        )
    radii = np.empty(m)
    for k in range(m):
        hi = min(max_radius, side[k] - margin)
        for j in range(m):
            if j == k:
                continue
            taken = radii[j] if j < k else min_radius
            hi = min(hi, dist[k, j] - separation - taken)
        radii[k] = rng.uniform(min_radius, hi)
    phi = rng.uniform(0.0, TWO_PI)
    beta = rng.uniform(1.0, 10.0)
    holes = tuple(
        HoleShape(
            kind="circle",
            center=(float(centers[k, 0]), float(centers[k, 1])),
            half_axes=(float(radii[k]), float(radii[k])),
        )
        for k in range(m)
    )
    spec = DomainSpec(holes=holes)
    params = EquationParams(phi=float(phi), beta=float(beta), hole_value=2.0)
    return spec, params


def _spec_digest_seed(spec: DomainSpec, tag: bytes) -> int:
    """Stable content seed for deterministic shape perturbations."""
    h = hashlib.blake2b(tag, digest_size=8)
    for hole in spec.holes:
        h.update(
            struct.pack(
                "<5d",
                hole.center[0], hole.center[1],
                hole.half_axes[0], hole.half_axes[1],
                hole.angle,
            )
        )
    return int.from_bytes(h.digest(), "little")


def perturb_circles_to_ellipses(spec: DomainSpec, ratio: float) -> DomainSpec:
    """Flatten every circle into an ellipse with the given aspect ratio.

    Each circle of radius r becomes an ellipse with half axes (r, ratio * r)
    at a tilt drawn uniform on [0, pi). Tilts are seeded from a content hash
    of the spec, so the same spec and ratio always produce the same result.
    Ratio 1 keeps the geometry identical.

    Raises
    ------
    InvalidRatio
        If ratio is outside (0, 1].
    ValueError
        If any hole is not a circle.
    """
    if not (0.0 < ratio <= 1.0):
        raise InvalidRatio(f"aspect ratio must lie in (0, 1], got {ratio}")
    if any(h.kind != "circle" for h in spec.holes):
        raise ValueError("perturbation is defined for all-circle specs only")
    rng = np.random.default_rng(_spec_digest_seed(spec, b"flatten"))
    angles = rng.uniform(0.0, np.pi, size=len(spec.holes))
    holes = tuple(
        HoleShape(
            kind="ellipse",
            center=h.center,
            half_axes=(h.half_axes[0], ratio * h.half_axes[0]),
            angle=float(t),
        )
        for h, t in zip(spec.holes, angles)
    )
    return DomainSpec(holes=holes)
