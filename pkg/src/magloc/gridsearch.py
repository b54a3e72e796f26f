"""Indicator sweeps over a sampling lattice in the shell, normalization and peak picking."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from . import imaging
from .errors import ConfigError

CHUNK = 65536


@dataclass(frozen=True)
class SlicePlane:
    point: np.ndarray
    normal: np.ndarray

    @classmethod
    def parse(cls, text):
        """``x=c``, ``y=c`` or ``z=c``."""
        axis, sep, value = text.replace(" ", "").partition("=")
        if not sep or axis not in "xyz" or len(axis) != 1:
            raise ConfigError(f"cannot parse slice plane {text!r}; expected e.g. 'z=0'")
        normal = np.zeros(3)
        normal["xyz".index(axis)] = 1.0
        return cls(normal * float(value), normal)

    def basis(self):
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        ref = np.eye(3)[np.argmin(np.abs(n))]
        if np.count_nonzero(np.abs(n) > 1e-15) == 1:
            # axis-aligned: keep the in-plane axes exactly Cartesian
            u, v = [e for e in np.eye(3) if abs(e @ n) < 0.5]
        else:
            u = np.cross(n, ref)
            u /= np.linalg.norm(u)
            v = np.cross(n, u)
        foot = (np.asarray(self.point, dtype=float) @ n) * n
        return foot, np.stack([u, v])


@dataclass(frozen=True)
class ShellGrid:
    """
    Lattice points origin + h * index @ axes masked to inner <= |z| <= outer.

    ``axes`` is (3, 3) for a volume grid and (2, 3) for a planar slice; ``shape``
    is the bounding lattice shape used for neighbourhood queries.
    """

    inner_radius: float
    outer_radius: float
    h: float
    origin: np.ndarray
    axes: np.ndarray
    index: np.ndarray
    shape: tuple
    slice: SlicePlane | None = None

    @property
    def points(self):
        return self.origin + self.h * (self.index @ self.axes)

    @property
    def dim(self):
        return self.axes.shape[0]

    def __len__(self):
        return self.index.shape[0]


def build_shell_grid(inner=0.5, outer=1.0, h=0.02, slice=None):
    if not 0 < inner < outer:
        raise ConfigError("need 0 < inner < outer")
    if not 0 < h < outer - inner:
        raise ConfigError("need 0 < h < outer - inner")
    kmax = int(np.floor(outer / h + 1e-9))
    ks = np.arange(-kmax, kmax + 1)
    if slice is None:
        axes = np.eye(3)
        centre = np.zeros(3)
        dim = 3
    else:
        centre, axes = slice.basis()
        dim = 2
    grids = np.meshgrid(*([ks] * dim), indexing="ij")
    index = np.stack([g.ravel() for g in grids], axis=1)
    pts = centre + h * (index @ axes)
    r = np.linalg.norm(pts, axis=1)
    keep = (r >= inner - 1e-12) & (r <= outer + 1e-12)
    if not keep.any():
        raise ConfigError("sampling grid is empty")
    origin = centre - h * kmax * axes.sum(axis=0)
    return ShellGrid(
        float(inner), float(outer), float(h), origin, axes,
        index[keep] + kmax, (2 * kmax + 1,) * dim, slice,
    )


@dataclass(frozen=True)
class IndicatorGrid:
    grid: ShellGrid
    values: np.ndarray
    normalized: np.ndarray
    saturated: np.ndarray

    def dense(self, fill=-np.inf):
        arr = np.full(self.grid.shape, fill)
        arr[tuple(self.grid.index.T)] = self.normalized
        return arr


def sweep(grid, pd, rule, scale=imaging.QZ_SCALE, workers=1):
    """
    Evaluate I(z) at every grid point and normalize by the grid maximum.

    Chunks are evaluated independently and reassembled in index order, so the
    result does not depend on ``workers``.
    """
    pd.require_signal()
    imaging.transfer_blocks(rule)  # populate the cache before fanning out
    pts = grid.points
    chunks = [pts[i:i + CHUNK] for i in range(0, len(pts), CHUNK)]

    def run(chunk):
        return imaging.evaluate_indicator(chunk, pd, rule, scale)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    values = np.concatenate([p[0] for p in parts])
    saturated = np.concatenate([p[1] for p in parts])
    normalized = values / values.max()
    return IndicatorGrid(grid, values, normalized, saturated)


@dataclass(frozen=True)
class Peak:
    position: np.ndarray
    normalized_value: float
    support_radius: float
    saturated: bool = False
    index: int = -1


def extract_peaks(ig, threshold=0.5, min_separation=0.05):
    """
    Local maxima of the normalized indicator (26- or 8-neighbourhood) at or
    above ``threshold``, greedily thinned so no two kept peaks are closer than
    ``min_separation``; higher peaks win.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    arr = ig.dense()
    local_max = arr >= maximum_filter(arr, size=3, mode="constant", cval=-np.inf)
    idx = ig.grid.index
    is_peak = local_max[tuple(idx.T)] & (ig.normalized >= threshold)
    candidates = np.flatnonzero(is_peak)
    candidates = candidates[np.argsort(-ig.normalized[candidates], kind="stable")]
    pts = ig.grid.points
    kept = []
    for c in candidates:
        if all(np.linalg.norm(pts[c] - pts[k]) >= min_separation for k in kept):
            kept.append(c)
    peaks = []
    for c in kept:
        higher = ig.normalized > ig.normalized[c]
        support = np.linalg.norm(pts[higher] - pts[c], axis=1).min() if higher.any() else np.inf
        peaks.append(Peak(pts[c].copy(), float(ig.normalized[c]), float(support),
                          bool(ig.saturated[c]), int(c)))
    return peaks


@dataclass(frozen=True)
class Refinement:
    position: np.ndarray
    value: float
    clamped: bool


def refine_peak(ig, peak, pd, rule, scale=imaging.QZ_SCALE):
    """
    Re-sweep a lattice three times finer than the grid over one cell around
    the peak (within the grid's plane for slices) and return its argmax.
    Candidate points outside the shell are pulled radially back onto it.
    """
    grid = ig.grid
    step = grid.h / 3.0
    ks = np.arange(-3, 4)
    mesh = np.meshgrid(*([ks] * grid.dim), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1) @ grid.axes * step
    cand = peak.position + offsets
    r = np.linalg.norm(cand, axis=1)
    clipped_r = np.clip(r, grid.inner_radius, grid.outer_radius)
    moved = np.abs(clipped_r - r) > 1e-12
    cand = cand * (clipped_r / r)[:, None]
    values, _ = imaging.evaluate_indicator(cand, pd, rule, scale)
    best = int(np.argmax(values))
    return Refinement(cand[best], float(values[best]), bool(moved[best]))
