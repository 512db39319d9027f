"""Synthetic instance scenes used by the simulators and property tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grids import InstanceLabelMap

__all__ = ["SceneSpec", "generate_scene", "TWO_SQUARES_NOTCH", "RANDOM_BLOBS"]

TWO_SQUARES_NOTCH = "two-squares-notch"
RANDOM_BLOBS = "random-blobs"

#: Extra Euclidean clearance between blob surfaces.  At 1.5 no two labels can
#: share a face (or a diagonal in 2-D), so rasterized blobs always keep at
#: least one background element between them, while staying close enough for
#: the touching and gap classes to arise across the separation.
_BLOB_CLEARANCE = 1.5


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for a deterministic synthetic scene.

    ``two-squares-notch``: two axis-aligned side-``cell_size`` squares (cubes
    in 3-D) labelled 1 and 2 sharing a side, with a ``notch_width`` by
    ``notch_length`` strip carved out of the shared side (spanning the full
    depth in 3-D); the rest of the side is left touching.

    ``random-blobs``: ``n_blobs`` non-overlapping discs/spheres of diameter
    about ``cell_size``, placed by the seeded generator.  Same spec, same
    scene, down to the byte.
    """

    kind: str
    dims: tuple[int, ...]
    cell_size: int = 8
    notch_width: int = 1
    notch_length: int = 4
    seed: int = 0
    n_blobs: int = 3

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        if self.kind not in (TWO_SQUARES_NOTCH, RANDOM_BLOBS):
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if len(self.dims) not in (2, 3) or any(n < 1 for n in self.dims):
            raise ValueError(f"dims must be 2 or 3 positive sizes, got {self.dims}")
        if self.cell_size < 1:
            raise ValueError("cell_size must be >= 1")
        if self.notch_width < 1:
            raise ValueError("notch width must be >= 1")
        if not 0 <= self.notch_length <= self.cell_size:
            raise ValueError("notch length must lie in [0, cell_size]")
        if self.n_blobs < 1:
            raise ValueError("need at least one blob")


def generate_scene(spec: SceneSpec) -> InstanceLabelMap:
    """Rasterize the scene described by ``spec``; pure function of the spec."""
    if spec.kind == TWO_SQUARES_NOTCH:
        return _two_squares_notch(spec)
    return _random_blobs(spec)


def _two_squares_notch(spec: SceneSpec) -> InstanceLabelMap:
    s = spec.cell_size
    dims = spec.dims
    block = (2 * s,) + (s,) * (len(dims) - 1)
    if any(b > n for b, n in zip(block, dims)):
        raise ValueError(f"cells of size {block} overlap the {dims} grid boundary")
    origin = tuple((n - b) // 2 for n, b in zip(dims, block))

    labels = np.zeros(dims, dtype=np.int32)
    inner = tuple(slice(o, o + b) for o, b in zip(origin, block))
    body = np.ones(block, dtype=np.int32)
    body[s:] = 2

    # Carve the notch from the shared side: ceil(w/2) planes from cell 1,
    # floor(w/2) from cell 2, running notch_length elements from one end of
    # the side (full depth along any third axis).
    w, length = spec.notch_width, spec.notch_length
    if length > 0 and w > 0:
        lo = max(0, s - (w + 1) // 2)
        hi = min(2 * s, s + w // 2)
        body[(slice(lo, hi), slice(0, length)) + (slice(None),) * (len(dims) - 2)] = 0

    labels[inner] = body
    return InstanceLabelMap(labels)


def _random_blobs(spec: SceneSpec) -> InstanceLabelMap:
    rng = np.random.default_rng(spec.seed)
    dims = spec.dims
    base_radius = max(1, spec.cell_size // 2)

    placed: list[tuple[np.ndarray, int]] = []
    for _ in range(spec.n_blobs):
        for _attempt in range(5000):
            radius = int(rng.integers(max(1, base_radius - 1), base_radius + 2))
            if any(n < 2 * radius + 1 for n in dims):
                continue  # this radius cannot fit; retry (possibly smaller)
            center = np.array([int(rng.integers(radius, n - radius)) for n in dims])
            ok = all(
                np.linalg.norm(center - c) >= radius + r + _BLOB_CLEARANCE for c, r in placed
            )
            if ok:
                placed.append((center, radius))
                break
        else:
            raise ValueError(
                f"could not place {spec.n_blobs} blobs of diameter ~{spec.cell_size} "
                f"inside the {dims} grid boundary"
            )

    labels = np.zeros(dims, dtype=np.int32)
    grids = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    for label, (center, radius) in enumerate(placed, start=1):
        dist2 = sum((g - c) ** 2 for g, c in zip(grids, center))
        labels[dist2 <= radius**2] = label
    return InstanceLabelMap(labels)


def face_offsets(d: int) -> list[tuple[int, ...]]:
    """Face-neighbour offsets (4 in 2-D, 6 in 3-D)."""
    offsets = []
    for axis in range(d):
        for sign in (-1, 1):
            off = [0] * d
            off[axis] = sign
            offsets.append(tuple(off))
    return offsets


def full_offsets(d: int) -> list[tuple[int, ...]]:
    """All nonzero offsets of the Chebyshev-1 neighbourhood."""
    return [off for off in itertools.product((-1, 0, 1), repeat=d) if any(off)]
