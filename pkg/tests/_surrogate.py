"""Deterministic stand-in digit data for the 1-vs-7 experiments.

Real MNIST IDX files are used when the DRFIT_DATA_ROOT environment
variable points at them. Otherwise this module renders seeded synthetic
"1" and "7" glyphs (plus some other digits so the filter has work to
do), writes them through the same IDX byte format, and the tests consume
them through the identical ingestion path.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from drfit.data import write_idx_images, write_idx_labels
from drfit.cli import DATA_ROOT_ENV

_CACHE = Path("/tmp/drfit_surrogate_v1")
_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)

_BLUR = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 16.0


def _blur(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 1)
    out = np.zeros_like(img)
    for di in range(3):
        for dj in range(3):
            out += _BLUR[di, dj] * padded[di:di + 28, dj:dj + 28]
    return out


def _stroke(img, r0, c0, r1, c1, width, value):
    """Draw a straight stroke by marking pixels near the segment."""
    steps = int(max(abs(r1 - r0), abs(c1 - c0)) * 3) + 1
    rs = np.linspace(r0, r1, steps)
    cs = np.linspace(c0, c1, steps)
    for r, c in zip(rs, cs):
        lo_r, hi_r = int(np.floor(r - width / 2)), int(np.ceil(r + width / 2))
        lo_c, hi_c = int(np.floor(c - width / 2)), int(np.ceil(c + width / 2))
        img[max(lo_r, 0):min(hi_r + 1, 28), max(lo_c, 0):min(hi_c + 1, 28)] = value


def render_digit(rng: np.random.Generator, digit: int) -> np.ndarray:
    img = np.zeros((28, 28))
    value = rng.uniform(0.55, 1.0)
    width = rng.uniform(1.0, 2.2)
    dx = rng.uniform(-3.0, 3.0)
    dy = rng.uniform(-2.0, 2.0)
    slant = rng.uniform(-2.0, 3.5)
    top, bottom = 5 + dy, 23 + dy
    mid = 14 + dx
    if digit == 1:
        _stroke(img, top, mid + slant, bottom, mid - slant / 2, width, value)
        # many "1"s carry a top serif, shading toward a "7"-like bar
        if rng.uniform() < 0.7:
            serif = rng.uniform(2.0, 5.5)
            _stroke(img, top + 1, mid + slant - serif, top, mid + slant,
                    width * 0.8, value)
    elif digit == 7:
        left = mid - rng.uniform(2.5, 6.5)
        right = mid + rng.uniform(3.0, 5.5)
        bar_value = value * rng.uniform(0.55, 1.0)  # some top bars are faint
        _stroke(img, top, left, top, right, width, bar_value)
        _stroke(img, top, right, bottom, mid - rng.uniform(1.0, 3.0), width, value)
        if rng.uniform() < 0.3:
            cross = (top + bottom) / 2
            _stroke(img, cross, mid - 3, cross, mid + 2, width * 0.8, value)
    else:
        # a crude ring for any other digit; only there to exercise filtering
        angles = np.linspace(0, 2 * np.pi, 40)
        for a, b in zip(angles, angles[1:]):
            _stroke(
                img,
                14 + dy + 7 * np.sin(a), mid + 5 * np.cos(a),
                14 + dy + 7 * np.sin(b), mid + 5 * np.cos(b),
                width * 0.8, value,
            )
    img = _blur(img)
    img += rng.normal(0.0, 0.05, size=img.shape)
    return (np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


def _build(root: Path, n_train: int = 4000, n_test: int = 1000, seed: int = 20240817) -> None:
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)

    def make(n, with_extras):
        digits = [1, 7] * (n // 2)
        if with_extras:
            extras = rng.integers(0, 10, size=n // 10)
            digits = digits[: n - len(extras)] + [int(d) for d in extras]
        order = rng.permutation(len(digits))
        labels = np.array(digits)[order]
        images = np.stack([render_digit(rng, int(d)) for d in labels])
        return images, labels.astype(np.uint8)

    tr_imgs, tr_labs = make(n_train, with_extras=True)
    te_imgs, te_labs = make(n_test, with_extras=False)
    write_idx_images(root / _FILES[0], tr_imgs)
    write_idx_labels(root / _FILES[1], tr_labs)
    write_idx_images(root / _FILES[2], te_imgs)
    write_idx_labels(root / _FILES[3], te_labs)


def mnist_root() -> tuple[Path, str]:
    """Path to IDX files plus which source they are ("real" or "surrogate")."""
    env = os.environ.get(DATA_ROOT_ENV)
    if env and all((Path(env) / f).exists() for f in _FILES):
        return Path(env), "real"
    if not all((_CACHE / f).exists() for f in _FILES):
        _build(_CACHE)
    return _CACHE, "surrogate"
