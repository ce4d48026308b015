"""Shared fixtures and independent oracles used across the test suite."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from segtrack.fields import (
    BandwidthField,
    LabelImage,
    PredictionSet,
    ScalarField,
    SegPrediction,
    VectorField,
)


def make_fields(h, w, rng=None, off_scale=0.1):
    """Random but valid (offsets, bandwidths, seediness) triple."""
    rng = rng or np.random.default_rng(0)
    off = VectorField(rng.uniform(-off_scale, off_scale, size=(2, h, w)))
    bw = BandwidthField(rng.uniform(0.1, 0.9, size=(2, h, w)))
    seed = ScalarField(rng.uniform(0.0, 1.0, size=(h, w)))
    return off, bw, seed


def make_prediction_set(h, w, rng=None):
    rng = rng or np.random.default_rng(0)
    segs = []
    for _ in range(2):
        off, bw, seed = make_fields(h, w, rng)
        segs.append(SegPrediction(offsets=off, bandwidths=bw, seediness=seed))
    track = VectorField(rng.uniform(-0.1, 0.1, size=(2, h, w)))
    return PredictionSet(seg_t=segs[0], seg_tm1=segs[1], track=track)


def disk_labels(h, w, centers, radius, labels=None):
    """Label image with one disk per center."""
    out = np.zeros((h, w), dtype=np.int64)
    ys, xs = np.mgrid[0:h, 0:w]
    for i, (cy, cx) in enumerate(centers):
        lab = labels[i] if labels is not None else i + 1
        out[(xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2] = lab
    return LabelImage(out)


# ------------------------------------------------------- Lovász oracle


def lovasz_bruteforce(margins, labels):
    """Independent Lovász-extension evaluation of the Jaccard loss.

    Walks the elements in descending-error order and accumulates
    error * (F(S_k) - F(S_{k-1})) where F(S) = 1 - Jaccard loss of the
    misprediction set S against the foreground set.
    """
    m = np.asarray(margins, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    errors = np.maximum(0.0, 1.0 - y * m)
    fg = set(np.nonzero(y > 0)[0].tolist())

    def set_loss(mispredicted):
        union = fg | mispredicted
        if not union:
            return 0.0
        inter = fg - mispredicted
        return 1.0 - len(inter) / len(union)

    order = sorted(range(len(errors)), key=lambda i: (-errors[i], i))
    total = 0.0
    current: set[int] = set()
    prev = set_loss(current)
    for idx in order:
        current = current | {idx}
        cur = set_loss(current)
        total += errors[idx] * (cur - prev)
        prev = cur
    return total


def all_sign_patterns(max_len):
    """Every (margins, labels) combination with entries in {-1, +1}."""
    for n in range(1, max_len + 1):
        for margins in itertools.product((-1.0, 1.0), repeat=n):
            for labels in itertools.product((-1.0, 1.0), repeat=n):
                yield np.array(margins), np.array(labels)


# --------------------------------------------- finite-difference checks


def central_diff(f, x, idx, h):
    xp = x.copy()
    xp[idx] += h
    xm = x.copy()
    xm[idx] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


def check_gradient(
    f_loss,
    f_grad,
    x0,
    rng,
    n_samples=100,
    step=1e-5,
    rtol=1e-4,
    min_mag=1e-7,
    max_tries=None,
):
    """Compare an analytic gradient to central differences.

    Samples random coordinates of ``x0``.  A sample is rejected (not
    counted) when the finite difference is too small to resolve or when
    two step sizes disagree, which signals a hinge kink or sort tie in
    the sampled neighborhood.  Asserts the relative error on every
    accepted sample and that enough samples were accepted.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.asarray(f_grad(x0))
    assert grad.shape == x0.shape
    flat = x0.ravel()

    def loss_flat(v):
        return f_loss(v.reshape(x0.shape))

    accepted = 0
    tries = 0
    limit = max_tries or n_samples * 200
    while accepted < n_samples and tries < limit:
        tries += 1
        idx = rng.integers(flat.size)
        fd = central_diff(loss_flat, flat, idx, step)
        if abs(fd) < min_mag:
            continue
        fd_half = central_diff(loss_flat, flat, idx, step / 2.0)
        if abs(fd - fd_half) > 1e-6 * max(1.0, abs(fd)):
            continue  # kink or sort tie within the stencil
        rel = abs(grad.ravel()[idx] - fd) / abs(fd)
        assert rel <= rtol, f"index {idx}: analytic {grad.ravel()[idx]}, fd {fd}"
        accepted += 1
    assert accepted >= n_samples, f"only {accepted} usable samples in {tries} tries"
    return accepted


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
