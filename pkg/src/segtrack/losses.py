"""Training-loss kernels with hand-derived analytic gradients.

No autodiff: every component returns its scalar value together with
gradients w.r.t. the raw network outputs it touches.  Conventions:

* bandwidth variance squares the 2-vector residual, sums x/y, means over
  pixels, means over instances;
* the seediness regression target is detached (constant) so the seed
  loss sends no gradient into offsets or bandwidths;
* hinge kinks (error exactly 0) take the zero subgradient branch; sort
  ties break by index;
* the mean bandwidth is differentiated through (each mask pixel receives
  1/N of the mean's gradient).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .fields import BandwidthField, LabelImage, PredictionSet, ScalarField, VectorField
from .geometry import BANDWIDTH_SCALE_WEIGHT, coordinate_grid, medoid_of_arrays


@dataclass(frozen=True)
class LossWeights:
    w_instance: float = 1.0
    w_var: float = 10.0
    w_seed: float = 1.0
    w_fg: float = 1.0
    w_seg: float = 1.0
    w_track: float = 1.0

    def __post_init__(self):
        for name in ("w_instance", "w_var", "w_seed", "w_fg", "w_seg", "w_track"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class LossReport:
    """Scalar loss components plus gradients of the weighted total."""

    total: float
    components: dict[str, float]
    gradients: dict[str, np.ndarray]
    skipped_track_instances: list[int] = field(default_factory=list)


def mean_bandwidth(bw: BandwidthField, mask: np.ndarray) -> np.ndarray:
    """Componentwise mean of the raw bandwidths over a pixel mask."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mean bandwidth of an empty mask")
    return np.array([bw.values[0][mask].mean(), bw.values[1][mask].mean()])


def variance_loss(bw: BandwidthField, labels: LabelImage) -> tuple[float, np.ndarray]:
    """Penalize bandwidth spread within each instance.

    Returns (loss, gradient) with the gradient shaped like the bandwidth
    tensor.  No instances -> (0, zeros).
    """
    grad = np.zeros_like(bw.values)
    ids = labels.instance_ids()
    if ids.size == 0:
        return 0.0, grad
    total = 0.0
    m_count = ids.size
    for m in ids:
        mask = labels.labels == m
        n = int(mask.sum())
        for dim in range(2):
            vals = bw.values[dim][mask]
            mean = vals.mean()
            resid = vals - mean
            total += float((resid * resid).mean())
            # d/ds_q of sum_k (mean - s_k)^2 is 2 (s_q - mean): the mean
            # term cancels because the residuals sum to zero
            grad[dim][mask] += 2.0 * resid / (m_count * n)
    return total / m_count, grad


def lovasz_hinge(margins, labels) -> tuple[float, np.ndarray]:
    """Lovász hinge surrogate of the Jaccard loss for one instance.

    ``margins`` are real scores, ``labels`` are +/-1.  Returns the loss
    and its gradient w.r.t. the margins.
    """
    m = np.asarray(margins, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if m.size == 0 or m.size != y.size:
        raise ValueError("margins and labels must be equal-length, non-empty")
    errors = np.maximum(0.0, 1.0 - y * m)
    order = np.argsort(-errors, kind="stable")
    g_sorted = _jaccard_grad(y[order] > 0)
    loss = float(errors[order] @ g_sorted)
    g = np.empty_like(g_sorted)
    g[order] = g_sorted
    grad = np.where(errors > 0.0, -y * g, 0.0)
    return loss, grad


def _jaccard_grad(fg_sorted: np.ndarray) -> np.ndarray:
    """Gradient of the Jaccard-loss Lovász extension along sorted errors."""
    gts = fg_sorted.sum()
    intersection = gts - np.cumsum(fg_sorted)
    union = gts + np.cumsum(~fg_sorted)
    jaccard = 1.0 - intersection / union
    out = np.empty(fg_sorted.size, dtype=np.float64)
    out[0] = jaccard[0]
    out[1:] = jaccard[1:] - jaccard[:-1]
    return out


def _instance_kernel_terms(
    off: VectorField,
    scaled_bw: np.ndarray,
    center_xy: tuple[float, float],
    binary_mask: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Shared Lovász-over-kernel machinery for one instance.

    Computes the kernel scores of all shifted pixels around the center,
    the Lovász hinge against the binary mask, and the chain-rule pieces.
    Returns (loss, dL/dD flat, D flat, (dx, dy) flat residuals).
    """
    h, w = off.height, off.width
    xs, ys = coordinate_grid(h, w)
    ex = (xs + off.values[0]).ravel()
    ey = (ys + off.values[1]).ravel()
    cx, cy = center_xy
    d_flat = _backend.kernel_scores(cx, cy, scaled_bw[0], scaled_bw[1], ex, ey)
    y = np.where(binary_mask.ravel(), 1.0, -1.0)
    loss, grad_m = lovasz_hinge(2.0 * d_flat - 1.0, y)
    dl_dd = 2.0 * grad_m
    return loss, dl_dd, d_flat, np.stack([cx - ex, cy - ey])


def instance_loss(
    off: VectorField,
    bw: BandwidthField,
    labels: LabelImage,
    w_s: float = BANDWIDTH_SCALE_WEIGHT,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Per-instance Lovász hinge between kernel scores and the mask.

    Kernel scores are evaluated over the whole image (the hinge needs
    negatives).  Returns (loss, grad_offsets, grad_bandwidths).
    """
    h, w = off.height, off.width
    grad_off = np.zeros_like(off.values)
    grad_bw = np.zeros_like(bw.values)
    total = 0.0
    for m in labels.instance_ids():
        mask = labels.labels == m
        rows, cols = np.nonzero(mask)
        mr, mc = medoid_of_arrays(rows, cols)
        center = (mc / w, mr / h)
        s_bar = mean_bandwidth(bw, mask)
        s = np.exp(w_s * s_bar)
        loss, dl_dd, d_flat, resid = _instance_kernel_terms(off, s, center, mask)
        total += loss
        dd = dl_dd * d_flat
        for dim in range(2):
            # dD/d(offset) through e = p + o: D * 2 (c - e) / s
            grad_off[dim] += (dd * 2.0 * resid[dim] / s[dim]).reshape(h, w)
            # dD/ds through s = exp(w_s * mean(bw)): D (c - e)^2 / s^2
            dl_ds = float(dd @ (resid[dim] * resid[dim])) / (s[dim] * s[dim])
            grad_bw[dim][mask] += dl_ds * w_s * s[dim] / rows.size
    return total, grad_off, grad_bw


def seed_loss(
    seediness: ScalarField,
    off: VectorField,
    bw: BandwidthField,
    labels: LabelImage,
    w_fg: float = 1.0,
    w_s: float = BANDWIDTH_SCALE_WEIGHT,
) -> tuple[float, np.ndarray]:
    """Regress seediness to the kernel score inside cells, 0 outside.

    The kernel target is detached: the only gradient is w.r.t. the
    seediness map itself.
    """
    h, w = seediness.height, seediness.width
    xs, ys = coordinate_grid(h, w)
    ex = xs + off.values[0]
    ey = ys + off.values[1]
    d_pred = seediness.values
    grad = np.zeros_like(d_pred)
    total = 0.0
    for m in labels.instance_ids():
        mask = labels.labels == m
        rows, cols = np.nonzero(mask)
        mr, mc = medoid_of_arrays(rows, cols)
        s = np.exp(w_s * mean_bandwidth(bw, mask))
        target = _backend.kernel_scores(
            mc / w, mr / h, s[0], s[1],
            np.ascontiguousarray(ex[mask]), np.ascontiguousarray(ey[mask]),
        )
        resid = d_pred[mask] - target
        total += w_fg * float((resid * resid).mean())
        grad[mask] += w_fg * 2.0 * resid / rows.size
    background = labels.labels == 0
    n_bg = int(background.sum())
    if n_bg > 0:
        total += float((d_pred[background] ** 2).mean())
        grad[background] += 2.0 * d_pred[background] / n_bg
    return total, grad


def tracking_loss(
    track_off: VectorField,
    bw_t: BandwidthField,
    labels_t: LabelImage,
    labels_tm1: LabelImage,
    links: dict[int, int],
    w_s: float = BANDWIDTH_SCALE_WEIGHT,
) -> tuple[float, np.ndarray, np.ndarray, list[int]]:
    """Lovász hinge pulling frame-t pixels onto their t-1 cell centers.

    The kernel center is the medoid of the linked predecessor mask at
    t-1; the bandwidth comes from frame t's prediction over the mask at
    t.  Instances whose predecessor mask is missing are skipped and
    reported.  Returns (loss, grad_track_offsets, grad_bandwidths_t,
    skipped labels).
    """
    h, w = track_off.height, track_off.width
    grad_off = np.zeros_like(track_off.values)
    grad_bw = np.zeros_like(bw_t.values)
    skipped: list[int] = []
    total = 0.0
    for m in labels_t.instance_ids():
        prev_label = links.get(int(m))
        if prev_label is None:
            continue
        prev_rows, prev_cols = labels_tm1.pixels(prev_label)
        if prev_rows.size == 0:
            skipped.append(int(m))
            continue
        mask_t = labels_t.labels == m
        rows, cols = np.nonzero(mask_t)
        mr, mc = medoid_of_arrays(prev_rows, prev_cols)
        center = (mc / w, mr / h)
        s_bar = mean_bandwidth(bw_t, mask_t)
        s = np.exp(w_s * s_bar)
        loss, dl_dd, d_flat, resid = _instance_kernel_terms(track_off, s, center, mask_t)
        total += loss
        dd = dl_dd * d_flat
        for dim in range(2):
            grad_off[dim] += (dd * 2.0 * resid[dim] / s[dim]).reshape(h, w)
            dl_ds = float(dd @ (resid[dim] * resid[dim])) / (s[dim] * s[dim])
            grad_bw[dim][mask_t] += dl_ds * w_s * s[dim] / rows.size
    return total, grad_off, grad_bw, skipped


def total_loss(
    pred: PredictionSet,
    labels_t: LabelImage,
    labels_tm1: LabelImage,
    links: dict[int, int],
    weights: LossWeights = LossWeights(),
    w_s: float = BANDWIDTH_SCALE_WEIGHT,
) -> LossReport:
    """Two-frame segmentation loss plus tracking loss.

    Segmentation components are evaluated for both frames of the pair
    and accumulated.  Gradients in the report are gradients of the
    weighted total w.r.t. each raw input tensor.
    """
    comp = {"var": 0.0, "instance": 0.0, "seed": 0.0}
    grads: dict[str, np.ndarray] = {}
    for tag, seg, lab in (
        ("t", pred.seg_t, labels_t),
        ("tm1", pred.seg_tm1, labels_tm1),
    ):
        var, g_var = variance_loss(seg.bandwidths, lab)
        inst, g_off, g_bw = instance_loss(seg.offsets, seg.bandwidths, lab, w_s)
        seed, g_seed = seed_loss(
            seg.seediness, seg.offsets, seg.bandwidths, lab, weights.w_fg, w_s
        )
        comp["var"] += var
        comp["instance"] += inst
        comp["seed"] += seed
        w_all = weights.w_seg
        grads[f"seg_off_{tag}"] = w_all * weights.w_instance * g_off
        grads[f"bw_{tag}"] = w_all * (weights.w_instance * g_bw + weights.w_var * g_var)
        grads[f"seed_{tag}"] = w_all * weights.w_seed * g_seed

    track, g_toff, g_tbw, skipped = tracking_loss(
        pred.track, pred.seg_t.bandwidths, labels_t, labels_tm1, links, w_s
    )
    comp["track"] = track
    grads["track_off"] = weights.w_track * g_toff
    grads["bw_t"] = grads["bw_t"] + weights.w_track * g_tbw

    comp["seg"] = (
        weights.w_instance * comp["instance"]
        + weights.w_var * comp["var"]
        + weights.w_seed * comp["seed"]
    )
    total = weights.w_seg * comp["seg"] + weights.w_track * comp["track"]
    return LossReport(
        total=total,
        components=comp,
        gradients=grads,
        skipped_track_instances=skipped,
    )
