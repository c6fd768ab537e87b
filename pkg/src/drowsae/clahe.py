"""Contrast-limited adaptive histogram equalization for grayscale frames.

The image is split into a G x G tile grid. Each tile gets a 256-bin
histogram whose bins are clipped at a multiple of the uniform bin height;
clipped mass is redistributed uniformly, the tile mapping is the rounded
scaled CDF, and output pixels blend the mappings of their nearest tile
centers bilinearly (clamped at the borders). With a single tile and an
inactive clip limit this reduces bit-exactly to plain global histogram
equalization, which doubles as the test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridTooFineError
from .features import check_gray_image, tile_edges

N_BINS = 256


@dataclass(frozen=True)
class ClaheConfig:
    """CLAHE parameters.

    ``clip_limit`` is expressed in multiples of the uniform bin height
    (tile_pixel_count / 256), so the same limit value means the same
    relative clipping strength at any tile size. ``grid`` is the number of
    tiles per axis.
    """

    clip_limit: float
    grid: int
    bins: int = N_BINS

    def __post_init__(self):
        if self.clip_limit <= 0:
            raise ValueError(f"clip_limit must be > 0, got {self.clip_limit}")
        if self.grid < 1:
            raise ValueError(f"grid must be >= 1, got {self.grid}")
        if self.bins != N_BINS:
            raise ValueError(f"only {N_BINS}-bin histograms are supported")


def clip_histogram(hist: np.ndarray, threshold: int) -> np.ndarray:
    """Clip histogram bins at ``threshold`` and redistribute the excess.

    One-pass redistribution: every bin receives ``excess // 256``, and the
    remainder is handed out one count each to bins 0, 1, ... left to right.
    Total mass is conserved exactly.
    """
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    clipped = np.minimum(hist, threshold).astype(np.int64)
    excess = int(hist.sum() - clipped.sum())
    clipped += excess // N_BINS
    clipped[: excess % N_BINS] += 1
    return clipped


def _equalize_map(hist: np.ndarray) -> np.ndarray:
    """Mapping value = round-half-up(255 * CDF), one entry per intensity."""
    cdf = np.cumsum(hist, dtype=np.float64)
    return np.floor(255.0 * cdf / cdf[-1] + 0.5).astype(np.int64)


def global_hist_equalize(img: np.ndarray) -> np.ndarray:
    """Histogram-equalize the whole image with a single 256-bin histogram."""
    arr = check_gray_image(img)
    hist = np.bincount(arr.ravel(), minlength=N_BINS)
    return _equalize_map(hist)[arr].astype(np.uint8)


def _axis_blend(length: int, edges: np.ndarray):
    """Per-pixel tile-center interpolation data for one axis.

    Returns (lo, hi, w): indices of the two bracketing tile centers and the
    weight of the ``hi`` tile. Pixels outside the first/last center clamp to
    the nearest tile (w forced into [0, 1]).
    """
    centers = (edges[:-1] + edges[1:] - 1) / 2.0
    p = np.arange(length, dtype=np.float64)
    lo = np.clip(np.searchsorted(centers, p, side="right") - 1, 0, len(centers) - 1)
    hi = np.minimum(lo + 1, len(centers) - 1)
    span = centers[hi] - centers[lo]
    w = np.zeros(length, dtype=np.float64)
    inner = span > 0
    w[inner] = (p[inner] - centers[lo[inner]]) / span[inner]
    return lo, hi, np.clip(w, 0.0, 1.0)


def clahe_enhance(img: np.ndarray, cfg: ClaheConfig) -> np.ndarray:
    """Apply CLAHE to a grayscale frame; returns a uint8 image of equal size."""
    arr = check_gray_image(img)
    g = cfg.grid
    if arr.shape[0] < g or arr.shape[1] < g:
        raise GridTooFineError(
            f"grid {g}x{g} leaves empty tiles on a {arr.shape[0]}x{arr.shape[1]} image"
        )
    row_edges = tile_edges(arr.shape[0], g)
    col_edges = tile_edges(arr.shape[1], g)

    maps = np.empty((g, g, N_BINS), dtype=np.int64)
    for ty in range(g):
        for tx in range(g):
            tile = arr[row_edges[ty]:row_edges[ty + 1], col_edges[tx]:col_edges[tx + 1]]
            hist = np.bincount(tile.ravel(), minlength=N_BINS)
            threshold = max(1, int(cfg.clip_limit * tile.size / N_BINS))
            maps[ty, tx] = _equalize_map(clip_histogram(hist, threshold))

    ylo, yhi, wy = _axis_blend(arr.shape[0], row_edges)
    xlo, xhi, wx = _axis_blend(arr.shape[1], col_edges)

    tl = maps[ylo[:, None], xlo[None, :], arr]
    tr = maps[ylo[:, None], xhi[None, :], arr]
    bl = maps[yhi[:, None], xlo[None, :], arr]
    br = maps[yhi[:, None], xhi[None, :], arr]

    top = (1.0 - wx[None, :]) * tl + wx[None, :] * tr
    bottom = (1.0 - wx[None, :]) * bl + wx[None, :] * br
    blended = (1.0 - wy[:, None]) * top + wy[:, None] * bottom

    out = np.floor(blended + 0.5).astype(np.int64)
    return np.clip(out, 0, 255).astype(np.uint8)
