"""
End-to-end steps behind the command-line interface.

Each step takes a RunConfig plus in-memory inputs and returns plain results;
the CLI couples the steps only through files.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import aperture, forward, gridsearch, imaging
from .errors import NeedsQuadratureError

BOUND_MIN_DISTANCE = 0.3
BOUND_SLACK = 1.05


def rnd(x, digits=3):
    """Round for report presentation; complex values become [re, im]."""
    arr = np.asarray(x)
    if np.iscomplexobj(arr):
        return np.stack([arr.real, arr.imag], axis=-1).round(digits).tolist()
    return arr.round(digits).tolist()


def sci(x, digits=3):
    """Three significant digits, for quantities far from unit scale."""
    arr = np.asarray(x)
    if np.iscomplexobj(arr):
        return [[sci(v.real, digits), sci(v.imag, digits)] for v in arr.ravel()]
    if arr.ndim:
        return [sci(v, digits) for v in arr.ravel()]
    return float(f"{float(arr):.{digits - 1}e}")


def synth(cfg):
    """Clean data on the full rule, then noise; returns (full, restricted or None)."""
    rule = cfg.rule()
    noise = cfg["noise"]
    meas = forward.synthesize(cfg.scenario(), rule)
    meas = forward.corrupt(meas, float(noise["beta"]), int(noise["seed"]), noise["mode"])
    ap = cfg.aperture()
    if ap.kind == "full":
        return meas, None
    # weights are kept so the partial data can also be integrated over the aperture
    return meas, forward.restrict(meas, ap, keep_weights=True)


def extend(cfg, partial):
    ext = cfg["extension"]
    coeffs, report = aperture.fit_extension(
        partial, cfg.basis(), float(ext["floor"]), bool(ext["weighted"]), bool(ext["strict"])
    )
    full = aperture.evaluate_extension(coeffs, cfg.rule(), partial.radius)
    meta = dict(full.metadata, basis=[cfg.basis().N1, cfg.basis().N2, cfg.basis().N3])
    full = replace(full, metadata=meta)
    return full, coeffs, report


@dataclass
class LocateResult:
    grid: gridsearch.IndicatorGrid
    pd: imaging.ProjectionData
    peaks: list
    refined: list
    partial: bool
    timing: dict = field(default_factory=dict)


def locate(cfg, meas, scale=imaging.QZ_SCALE):
    """
    Projections, sweep, peaks and refinement.

    Data with full-sphere weights are processed directly. Data whose weights
    cover only part of the sphere are integrated over that part, which is
    allowed only when the config selects a partial aperture.
    """
    rule = meas.rule()
    if rule is None:
        raise NeedsQuadratureError(
            "data carry no quadrature weights; run 'extend' to complete them on the sphere"
        )
    partial = not rule.is_full_sphere
    if partial and cfg.aperture().kind == "full":
        raise NeedsQuadratureError(
            "data cover only part of the sphere; select an aperture or extend the data first"
        )
    t0 = time.perf_counter()
    pd = imaging.projection_data(meas, allow_partial=partial)
    pd.require_signal()
    t1 = time.perf_counter()
    ig = gridsearch.sweep(cfg.grid(), pd, rule, scale, workers=int(cfg["grid"]["workers"]))
    t2 = time.perf_counter()
    pk = cfg["peaks"]
    peaks = gridsearch.extract_peaks(ig, float(pk["threshold"]), float(pk["min_separation"]))
    if pk["refine"]:
        refined = [gridsearch.refine_peak(ig, p, pd, rule, scale) for p in peaks]
    else:
        refined = [gridsearch.Refinement(p.position, float(ig.values[p.index]), False) for p in peaks]
    t3 = time.perf_counter()
    timing = {"projection_s": t1 - t0, "sweep_s": t2 - t1, "peaks_s": t3 - t2}
    return LocateResult(ig, pd, peaks, refined, partial, timing)


def chain_coverage(ig, points, threshold=0.5):
    """Fraction of ``points`` whose nearest grid cell has normalized indicator >= threshold."""
    tree = cKDTree(ig.grid.points)
    _, idx = tree.query(np.asarray(points, dtype=float))
    return float(np.mean(ig.normalized[idx] >= threshold))


def bound_summary(res, z1):
    """Check I(z) <= 1.05 sqrt(4 pi / 3) / (|z - z1| kappa) at grid points 0.3 or more from z1."""
    P_hat = res.pd.P / np.linalg.norm(res.pd.P)
    kappa = imaging.min_bound_constant(P_hat, imaging.d_matrices(imaging.n_matrices()))
    pts = res.grid.grid.points
    far = np.linalg.norm(pts - z1, axis=1) >= BOUND_MIN_DISTANCE
    bound = imaging.indicator_bound(pts[far], z1, kappa.value) * BOUND_SLACK
    vals = res.grid.values[far]
    violations = int(np.sum(vals > bound))
    return {
        "kappa": sci(kappa.value, 4),
        "checked_points": int(far.sum()),
        "violations": violations,
        "max_ratio": sci(float(np.max(vals / bound)) if far.any() else 0.0),
        "compliant": violations == 0,
    }


def run_report(cfg, res, label="", fit=None):
    """The report mapping for one locate run; positions and errors to 3 decimals."""
    truth = cfg.truth()
    chains = cfg.has_chains()
    peaks = []
    for p, r in zip(res.peaks, res.refined):
        entry = {
            "grid_position": rnd(p.position),
            "refined_position": rnd(r.position),
            "normalized_value": rnd(p.normalized_value),
            "saturated": bool(p.saturated),
        }
        if len(truth) and not chains:
            d = np.linalg.norm(truth - r.position, axis=1)
            entry["nearest_truth"] = int(np.argmin(d))
            entry["error"] = rnd(d.min())
        peaks.append(entry)
    out = {
        "label": label,
        "data": "partial (aperture integration)" if res.partial else "full sphere",
        "projections": {"P": sci(res.pd.P), "Q": sci(res.pd.Q), "R0": float(res.pd.R0)},
        "grid": {
            "h": res.grid.grid.h,
            "points": len(res.grid.grid),
            "slice": None if res.grid.grid.slice is None else rnd(res.grid.grid.slice.normal),
            "saturated_cells": int(res.grid.saturated.sum()),
        },
        "n_peaks": len(peaks),
        "peaks": peaks,
    }
    if len(truth) and not chains:
        if res.refined:
            est = np.array([r.position for r in res.refined])
            errs = np.linalg.norm(truth[:, None] - est[None], axis=-1).min(axis=1)
            out["truth_errors"] = rnd(errs)
        else:
            out["truth_errors"] = None
        out["truth"] = rnd(truth)
    if chains:
        out["chain_coverage"] = rnd(chain_coverage(res.grid, truth, float(cfg["peaks"]["threshold"])))
    if cfg["report"]["bound"] and len(truth) == 1 and not res.partial:
        out["bound"] = bound_summary(res, truth[0])
    if fit is not None:
        out["fit"] = {
            "relative_residual": sci(fit.relative_residual),
            "condition": sci(fit.condition),
            "rank": fit.rank,
            "n_coefficients": fit.n_coefficients,
            "n_samples": fit.n_samples,
        }
    if cfg["report"]["timing"]:
        out["timing"] = {k: sci(v) for k, v in res.timing.items()}
    return out
