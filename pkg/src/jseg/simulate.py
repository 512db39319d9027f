"""Analytic experiments around the J-regularized loss.

Three simulators:

* random-classifier sweeps over imbalance ratios, showing which binary
  measures stay put when the positive class shrinks;
* the shrinkwrap run, a prescribed segmentation trajectory that contracts
  an inflated mask onto two touching cells and then ramps the probabilities
  to the exact ground truth, recording the gradient norms of the losses
  along the way;
* a 2-D loss-landscape scan around a near-optimal logit field along two
  random, channel-normalized directions.

Everything is deterministic per seed, independent of thread count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._util import child_rng, ordered_thread_map
from .grids import LogitField, ProbabilityField, one_hot, probs_to_logits
from .losses import PairWeights, evaluate_loss
from .metrics import pearson
from .scenes import TWO_SQUARES_NOTCH, SceneSpec, generate_scene
from .transform import CELL, TransformConfig, ball_footprint, to_semantic

__all__ = [
    "ImbalanceSimConfig",
    "ImbalanceTable",
    "run_imbalance_sim",
    "CorrelationResult",
    "mcc_j_correlation",
    "ShrinkwrapConfig",
    "ShrinkwrapTrace",
    "run_shrinkwrap",
    "LandscapeResult",
    "landscape_scan",
    "default_pi_grid",
]

C1 = "c1"
C3 = "c3"

MEASURES = ("j", "mcc", "jaccard", "f1", "tversky", "accuracy")


def default_pi_grid() -> tuple[float, ...]:
    """Imbalance ratios 0.01, 0.02, ..., 0.50."""
    return tuple(round(0.01 * i, 2) for i in range(1, 51))


@dataclass(frozen=True)
class ImbalanceSimConfig:
    """Protocol for the random-classifier sweeps.

    C1 predicts positive with the ground-truth ratio pi, C3 with one half.
    """

    classifier: str = C3
    pis: tuple[float, ...] = field(default_factory=default_pi_grid)
    samples: int = 1000
    trials: int = 500
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pis", tuple(float(p) for p in self.pis))
        if self.classifier not in (C1, C3):
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if not self.pis or any(not 0.0 < p <= 0.5 for p in self.pis):
            raise ValueError("every imbalance ratio must lie in (0, 0.5]")
        if self.samples < 100:
            raise ValueError("need at least 100 samples per trial")
        if self.trials < 2:
            raise ValueError("need at least 2 trials")


@dataclass(frozen=True)
class ImbalanceTable:
    """Per-(pi, trial) measure table plus resampling counts."""

    classifier: str
    pis: tuple[float, ...]
    rows: np.ndarray  # structured: pi, trial, j, mcc, jaccard, f1, tversky, accuracy
    resampled: dict[float, int]

    def per_pi(self, pi: float, measure: str) -> np.ndarray:
        sel = self.rows["pi"] == pi
        return self.rows[measure][sel]

    def summary(self) -> list[dict]:
        out = []
        for pi in self.pis:
            entry = {"pi": pi, "resampled": self.resampled[pi]}
            for m in MEASURES:
                vals = self.per_pi(pi, m)
                entry[f"{m}_mean"] = float(vals.mean())
                entry[f"{m}_std"] = float(vals.std())
            out.append(entry)
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pi", "trial"] + list(MEASURES))
            for row in self.rows:
                writer.writerow(
                    [f"{row['pi']:.17g}", int(row["trial"])]
                    + [f"{row[m]:.17g}" for m in MEASURES]
                )


def _trial_measures(gt: np.ndarray, pred: np.ndarray) -> tuple[np.ndarray, ...]:
    """Vectorized confusion measures for a (trials, samples) boolean pair."""
    tp = (gt & pred).sum(axis=1).astype(np.float64)
    fp = (~gt & pred).sum(axis=1).astype(np.float64)
    fn = (gt & ~pred).sum(axis=1).astype(np.float64)
    tn = (~gt & ~pred).sum(axis=1).astype(np.float64)
    tpr = tp / (tp + fn)
    tnr = tn / (tn + fp)
    j = tpr + tnr - 1.0
    mcc = (tp * tn - fp * fn) / np.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    jaccard = tp / (tp + fp + fn)
    f1 = 2 * tp / (2 * tp + fp + fn)
    tversky = tp / (tp + 0.5 * fn + 0.5 * fp)
    accuracy = (tp + tn) / gt.shape[1]
    return j, mcc, jaccard, f1, tversky, accuracy


def _simulate_pi(args) -> tuple[np.ndarray, int]:
    cfg, pi_index = args
    pi = cfg.pis[pi_index]
    rng = child_rng(cfg.seed, pi_index)
    p_pred = pi if cfg.classifier == C1 else 0.5
    trials, samples = cfg.trials, cfg.samples

    gt = rng.random((trials, samples)) < pi
    pred = rng.random((trials, samples)) < p_pred
    resampled = 0
    while True:
        # A trial is degenerate when truth or prediction misses a class
        # entirely; Jaccard would divide by zero and MCC would be undefined.
        pos = gt.sum(axis=1)
        ppos = pred.sum(axis=1)
        bad = (pos == 0) | (pos == samples) | (ppos == 0) | (ppos == samples)
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        resampled += n_bad
        gt[bad] = rng.random((n_bad, samples)) < pi
        pred[bad] = rng.random((n_bad, samples)) < p_pred

    cols = _trial_measures(gt, pred)
    rows = np.zeros(
        trials,
        dtype=[("pi", "f8"), ("trial", "i8")] + [(m, "f8") for m in MEASURES],
    )
    rows["pi"] = pi
    rows["trial"] = np.arange(trials)
    for name, col in zip(MEASURES, cols):
        rows[name] = col
    return rows, resampled


def run_imbalance_sim(cfg: ImbalanceSimConfig, threads: int = 1) -> ImbalanceTable:
    """Sample the configured classifier against Bernoulli(pi) ground truths.

    Trials where a class is entirely absent (in the truth or the
    prediction) are redrawn and counted.
    """
    results = ordered_thread_map(
        _simulate_pi, [(cfg, i) for i in range(len(cfg.pis))], threads
    )
    rows = np.concatenate([r for r, _ in results])
    resampled = {pi: n for pi, (_, n) in zip(cfg.pis, results)}
    return ImbalanceTable(classifier=cfg.classifier, pis=cfg.pis, rows=rows, resampled=resampled)


@dataclass(frozen=True)
class CorrelationResult:
    """Per-pi Pearson correlation between per-trial MCC and J."""

    pis: tuple[float, ...]
    r_values: tuple[float, ...]
    table: ImbalanceTable

    def r_at(self, pi: float) -> float:
        return self.r_values[self.pis.index(pi)]

    def write_scatter_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pi", "trial", "mcc", "j"])
            for row in self.table.rows:
                writer.writerow(
                    [f"{row['pi']:.17g}", int(row["trial"]), f"{row['mcc']:.17g}", f"{row['j']:.17g}"]
                )


def mcc_j_correlation(cfg: ImbalanceSimConfig, threads: int = 1) -> CorrelationResult:
    """Linear agreement between MCC and J across trials, per imbalance ratio."""
    if cfg.classifier != C3:
        raise ValueError("the MCC/J correlation protocol uses classifier c3")
    table = run_imbalance_sim(cfg, threads=threads)
    rs = []
    for pi in cfg.pis:
        try:
            rs.append(pearson(table.per_pi(pi, "mcc"), table.per_pi(pi, "j")))
        except ValueError as exc:
            raise ValueError(f"degenerate trials at pi={pi}: {exc}") from exc
    return CorrelationResult(pis=cfg.pis, r_values=tuple(rs), table=table)


# ---------------------------------------------------------------------------
# Shrinkwrap trajectory


@dataclass(frozen=True)
class ShrinkwrapConfig:
    """Schedule for the prescribed shrink-then-sharpen trajectory.

    The foreground mask starts as the true cells dilated by
    ``margin_start`` and loses one element of margin every
    ``iters_per_margin_step`` iterations.  While shrinking, each element
    holds probability ``c(t)`` on its prescribed class (cell inside the
    mask, background outside), the remainder spread uniformly; ``c`` moves
    linearly from ``confidence_start`` to ``confidence_final``.  Once the
    margin hits zero the per-element probabilities move linearly to the
    exact one-hot ground truth over the remaining iterations.
    """

    scene: SceneSpec = SceneSpec(kind=TWO_SQUARES_NOTCH, dims=(80, 56), cell_size=8, seed=0)
    iterations: int = 85
    margin_start: int = 18
    iters_per_margin_step: int = 3
    confidence_start: float = 0.95
    confidence_final: float = 0.95
    transform: TransformConfig = TransformConfig()

    def __post_init__(self):
        if self.margin_start < 1:
            raise ValueError("initial margin must be >= 1")
        if not 0.25 < self.confidence_start <= self.confidence_final < 1.0:
            raise ValueError("need 0.25 < confidence_start <= confidence_final < 1")
        if self.iters_per_margin_step < 1:
            raise ValueError("iters_per_margin_step must be >= 1")
        if self.iterations <= self.shrink_iterations:
            raise ValueError(
                f"{self.iterations} iterations never reach margin 0 "
                f"(shrink takes {self.shrink_iterations})"
            )

    @property
    def shrink_iterations(self) -> int:
        """Iteration index at which the margin first reaches zero."""
        return self.margin_start * self.iters_per_margin_step + 1


@dataclass(frozen=True)
class ShrinkwrapTrace:
    """Per-iteration gradient norms with the shrinkwrap index marked."""

    records: tuple[dict, ...]
    shrinkwrap_index: int  # position in records of the first margin-0 iteration

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    def write_csv(self, path) -> None:
        cols = ["iteration", "margin", "confidence", "ramp", "grad_ce", "grad_j", "grad_jc"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for r in self.records:
                writer.writerow(
                    [r["iteration"], r["margin"], f"{r['confidence']:.17g}", f"{r['ramp']:.17g}"]
                    + [f"{r[c]:.17g}" for c in ("grad_ce", "grad_j", "grad_jc")]
                )


def _confidence_field(prescribed: np.ndarray, confidence: float, channels: int) -> np.ndarray:
    rest = (1.0 - confidence) / (channels - 1)
    z = np.full(prescribed.shape + (channels,), rest)
    np.put_along_axis(z, prescribed[..., None].astype(np.intp), confidence, axis=-1)
    return z


def run_shrinkwrap(cfg: ShrinkwrapConfig, weights: PairWeights | None = None) -> ShrinkwrapTrace:
    """Walk the prescribed trajectory and record each loss's gradient norm.

    The scene must be the two-squares-notch geometry; the cells' dilation
    absorbs the notch and touching structure until the margin reaches zero,
    at which point the mask hugs the cells but the rare classes are still
    wrong ("the shrinkwrap point").
    """
    if cfg.scene.kind != TWO_SQUARES_NOTCH:
        raise ValueError("the shrinkwrap trajectory runs on the two-squares-notch scene")
    scene = generate_scene(cfg.scene)
    semantic = to_semantic(scene, cfg.transform)
    channels = cfg.transform.channels
    target = one_hot(semantic, channels)
    y = target.values
    fg = scene.labels > 0
    d = fg.ndim

    t_shrink = cfg.shrink_iterations
    ramp_len = cfg.iterations - t_shrink

    masks: dict[int, np.ndarray] = {0: fg}
    records = []
    z_at_shrinkwrap: np.ndarray | None = None
    for t in range(1, cfg.iterations + 1):
        if t <= t_shrink:
            margin = max(0, cfg.margin_start - (t - 1) // cfg.iters_per_margin_step)
            if t_shrink > 1:
                confidence = cfg.confidence_start + (
                    cfg.confidence_final - cfg.confidence_start
                ) * (t - 1) / (t_shrink - 1)
            else:
                confidence = cfg.confidence_final
            if margin not in masks:
                masks[margin] = ndimage.binary_dilation(fg, structure=ball_footprint(margin, d))
            prescribed = np.where(masks[margin], CELL, 0).astype(np.int32)
            z = _confidence_field(prescribed, confidence, channels)
            ramp = 0.0
            if t == t_shrink:
                z_at_shrinkwrap = z
        else:
            margin = 0
            confidence = cfg.confidence_final
            ramp = (t - t_shrink) / ramp_len
            z = (1.0 - ramp) * z_at_shrinkwrap + ramp * y

        logits = probs_to_logits(ProbabilityField(z))
        record = {
            "iteration": t,
            "margin": margin,
            "confidence": confidence,
            "ramp": ramp,
        }
        for loss_id in ("ce", "j", "jc"):
            record[f"grad_{loss_id}"] = evaluate_loss(loss_id, target, logits, weights).grad_norm
        records.append(record)

    return ShrinkwrapTrace(records=tuple(records), shrinkwrap_index=t_shrink - 1)


# ---------------------------------------------------------------------------
# Loss landscape


@dataclass(frozen=True)
class LandscapeResult:
    """Loss values over the 2-D perturbation grid around a centre point."""

    alphas: np.ndarray
    betas: np.ndarray
    values: np.ndarray  # (len(alphas), len(betas))
    flagged: tuple[tuple[int, int], ...]  # cells where the loss was non-finite

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["a", "b", "loss"])
            for i, a in enumerate(self.alphas):
                for jdx, b in enumerate(self.betas):
                    writer.writerow([f"{a:.17g}", f"{b:.17g}", f"{self.values[i, jdx]:.17g}"])


def landscape_scan(
    loss_id: str,
    target: ProbabilityField,
    center: LogitField,
    seed: int = 0,
    resolution: int = 41,
    span: float = 1.0,
    weights: PairWeights | None = None,
    threads: int = 1,
) -> LandscapeResult:
    """Scan ``loss(center + a*d1 + b*d2)`` over an (a, b) grid.

    The two directions are seeded Gaussian fields rescaled channel by
    channel to the norm of the matching centre channel, so the axes are
    comparable across channels of very different magnitude.  Non-finite
    values are recorded and flagged, never raised.
    """
    if resolution < 3 or resolution % 2 == 0:
        raise ValueError("resolution must be an odd number >= 3 so the centre lies on the grid")
    if span <= 0:
        raise ValueError("span must be positive")
    rng = np.random.default_rng(seed)
    theta = center.values

    def direction() -> np.ndarray:
        delta = rng.standard_normal(theta.shape)
        for c in range(theta.shape[-1]):
            ref = np.linalg.norm(theta[..., c])
            norm = np.linalg.norm(delta[..., c])
            delta[..., c] *= ref / norm if norm > 0 else 0.0
        return delta

    d1 = direction()
    d2 = direction()
    alphas = np.linspace(-span, span, resolution)
    betas = np.linspace(-span, span, resolution)

    def scan_row(i: int) -> np.ndarray:
        row = np.zeros(resolution)
        for jdx in range(resolution):
            perturbed = LogitField(theta + alphas[i] * d1 + betas[jdx] * d2)
            value = evaluate_loss(loss_id, target, perturbed, weights).total
            row[jdx] = value if np.isfinite(value) else np.nan
        return row

    rows = ordered_thread_map(scan_row, list(range(resolution)), threads)
    values = np.stack(rows)
    flagged = tuple(zip(*np.nonzero(~np.isfinite(values))))
    return LandscapeResult(
        alphas=alphas, betas=betas, values=values, flagged=tuple((int(i), int(jdx)) for i, jdx in flagged)
    )
