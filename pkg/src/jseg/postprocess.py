"""From probability fields to panoptic instance maps.

Three steps: a per-element MAP decision, reassignment of gap elements to
one of the first three classes, and instance labelling of the cell
components with iterative absorption of the touching band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import InstanceLabelMap, ProbabilityField, SemanticLabelMap
from .scenes import face_offsets, full_offsets
from .transform import CELL, GAP, TOUCHING

__all__ = [
    "PostprocessConfig",
    "map_decision",
    "resolve_gaps",
    "to_instances",
    "instances_from_probs",
]

MAP3 = "map3"
GAP_TO_BACKGROUND = "background"
DUBIOUS = "dubious"

FACE = "face"
FULL = "full"


@dataclass(frozen=True)
class PostprocessConfig:
    """Gap handling, component connectivity, and the touching tie rule.

    ``map3`` re-decides every gap element as the most likely of the first
    three classes (which already covers sending it to background when
    background wins).  ``background`` sends gaps to background outright.
    ``dubious`` does so too unless the top probabilities are within ``tau``
    of each other, in which case the restricted MAP decides.
    """

    gap_mode: str = MAP3
    tau: float = 0.1
    connectivity: str = FACE
    tie_break: str = "low-label"

    def __post_init__(self):
        if self.gap_mode not in (MAP3, GAP_TO_BACKGROUND, DUBIOUS):
            raise ValueError(f"unknown gap mode {self.gap_mode!r}")
        if self.gap_mode == DUBIOUS and not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.connectivity not in (FACE, FULL):
            raise ValueError(f"unknown connectivity {self.connectivity!r}")
        if self.tie_break != "low-label":
            raise ValueError("the only supported tie rule is 'low-label'")


def map_decision(probs: ProbabilityField) -> SemanticLabelMap:
    """Per-element most likely class; ties break toward the lowest index."""
    return probs.argmax_classes()


def resolve_gaps(
    semantic: SemanticLabelMap, probs: ProbabilityField, cfg: PostprocessConfig
) -> SemanticLabelMap:
    """Re-decide every gap element onto the first three classes.

    Non-gap elements pass through unchanged; the output never contains the
    gap class.
    """
    classes = semantic.classes
    if classes.shape != probs.values.shape[:-1]:
        raise ValueError("semantic map and probability field shapes differ")
    out = classes.copy()
    gap = classes == GAP
    if not gap.any():
        return SemanticLabelMap(out)
    if probs.channels < 3:
        raise ValueError("gap resolution needs at least 3 channels")

    first3 = probs.values[..., :3]
    restricted = np.argmax(first3, axis=-1).astype(np.int32)
    if cfg.gap_mode == MAP3:
        out[gap] = restricted[gap]
    elif cfg.gap_mode == GAP_TO_BACKGROUND:
        out[gap] = 0
    else:
        spread = first3.max(axis=-1) - np.median(first3, axis=-1)
        dubious = spread < cfg.tau
        out[gap] = np.where(dubious[gap], restricted[gap], 0)
    return SemanticLabelMap(out)


def _offsets(connectivity: str, d: int):
    return face_offsets(d) if connectivity == FACE else full_offsets(d)


def _structure(connectivity: str, d: int) -> np.ndarray:
    if connectivity == FACE:
        return ndimage.generate_binary_structure(d, 1)
    return np.ones((3,) * d, dtype=bool)


def _shift(arr: np.ndarray, offset: tuple[int, ...], fill) -> np.ndarray:
    """Shift without wraparound, padding with ``fill``."""
    out = np.full_like(arr, fill)
    src = []
    dst = []
    for n, o in zip(arr.shape, offset):
        if o >= 0:
            src.append(slice(0, n - o))
            dst.append(slice(o, n))
        else:
            src.append(slice(-o, n))
            dst.append(slice(0, n + o))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def to_instances(semantic: SemanticLabelMap, cfg: PostprocessConfig | None = None) -> InstanceLabelMap:
    """Label cell components, then grow them into the touching band.

    Components of the cell class receive labels 1..m in scan order.  The
    touching elements are absorbed by repeated one-element label dilation:
    each round assigns every still-unlabelled touching element adjacent to
    a labelled element the smallest adjacent label, until nothing changes.
    Touching elements no component can reach become background.
    """
    cfg = cfg or PostprocessConfig()
    classes = semantic.classes
    if (classes == GAP).any():
        raise ValueError("instance labelling expects gaps to be resolved first")
    d = classes.ndim

    cells = classes == CELL
    labels, m = ndimage.label(cells, structure=_structure(cfg.connectivity, d))
    labels = labels.astype(np.int32)

    touching = classes == TOUCHING
    offsets = _offsets(cfg.connectivity, d)
    sentinel = np.int32(m + 1)
    while True:
        unassigned = touching & (labels == 0)
        if not unassigned.any():
            break
        best = np.full_like(labels, sentinel)
        for off in offsets:
            neighbor = _shift(labels, off, 0)
            np.minimum(best, np.where(neighbor > 0, neighbor, sentinel), out=best)
        grow = unassigned & (best <= m)
        if not grow.any():
            break  # remaining touching elements are unreachable
        labels[grow] = best[grow]

    return InstanceLabelMap(labels)


def instances_from_probs(
    probs: ProbabilityField, cfg: PostprocessConfig | None = None
) -> InstanceLabelMap:
    """Full pipeline: MAP decision, gap resolution, instance labelling."""
    cfg = cfg or PostprocessConfig()
    decided = map_decision(probs)
    if probs.channels >= 4:
        decided = resolve_gaps(decided, probs, cfg)
    return to_instances(decided, cfg)
