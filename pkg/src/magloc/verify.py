"""
Noise-free self-checks of the harmonic machinery and the imaging identities.

All checks run on clean synthetic data for a single anomaly (the first one in
the config, or a default mid-shell anomaly), so their outcome does not depend
on the noise seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import forward, gridsearch, imaging, sphharm

DEFAULT_ANOMALY = (0.6, 0.45, 0.0)
MIN_VERIFY_DEGREE = 32


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def _le(name, value, tol, detail=""):
    return Check(name, bool(value <= tol), float(value), float(tol), detail)


def check_sh_orthonormality(n_max=6):
    rule = sphharm.build_quadrature(2 * n_max)
    idx = sphharm.sh_indices(n_max)
    Y = np.array([sphharm.eval_scalar_sh(n, m, rule.nodes) for n, m in idx])
    gram = (Y * rule.weights) @ Y.conj().T
    return _le("sh_orthonormality", float(np.abs(gram - np.eye(len(idx))).max()), 1e-10,
               f"degrees <= {n_max}")


def check_vsh_tangency(n_max=5):
    rule = sphharm.build_quadrature(8)
    d = rule.nodes
    worst = 0.0
    for n in range(1, n_max + 1):
        for m in range(-n, n + 1):
            for v in (sphharm.eval_surface_gradient_sh(n, m, d), sphharm.eval_vsh("T", n, m, d)):
                worst = max(worst, float(np.abs(np.einsum("ki,ki->k", v, d)).max()))
    return _le("vsh_tangency", worst, 1e-10, "grad_S Y and T families have no radial part")


def check_vsh_orthogonality(n_max=4):
    rule = sphharm.build_quadrature(2 * n_max + 2)
    fields = []
    for kind in "ITN":
        for n in range(0 if kind == "I" else 1, n_max + 1):
            for m in range(-n - 1, n + 2):
                if sphharm.vsh_index_valid(kind, n, m):
                    fields.append(sphharm.eval_vsh(kind, n, m, rule.nodes).reshape(len(rule), 3))
    F = np.array(fields)
    gram = np.einsum("k,aki,bki->ab", rule.weights, F, F.conj())
    off = gram - np.diag(np.diag(gram))
    return _le("vsh_orthogonality", float(np.abs(off).max()), 1e-10, "I, T, N families")


def check_n_matrices():
    lit = imaging.n_matrices().stacked()
    der = imaging.derive_n_matrices(sphharm.build_quadrature(8)).stacked()
    return _le("n_matrices", float(np.abs(lit - der).max()), 1e-12, "closed form vs quadrature")


def check_rank_margin(seed, count=1000):
    rng = np.random.default_rng(seed)
    dm = imaging.d_matrices(imaging.n_matrices())
    a = rng.standard_normal((count, 3)) + 1j * rng.standard_normal((count, 3))
    worst = min(imaging.rank_margin(v, dm) for v in a)
    return Check("rank_margin", bool(worst >= 1e-8), float(worst), 1e-8,
                 f"min singular value ratio over {count} random vectors")


def _verification_data(cfg):
    sc = cfg.scenario()
    anomaly = sc.anomalies[0] if sc.anomalies else forward.Anomaly(np.array(DEFAULT_ANOMALY))
    single = forward.Scenario([anomaly], sc.background, sc.R0, sc.earth_radius, sc.core_radius)
    rule = sphharm.build_quadrature(max(cfg.rule_degree(), MIN_VERIFY_DEGREE))
    meas = forward.synthesize(single, rule)
    return single, rule, meas


def check_projection_P(single, meas):
    expected = -(2.0 / 3.0) * single.moments()[0] / single.R0**3
    return _le("projection_P", _rel(imaging.compute_P(meas), expected), 1e-8,
               "P = -(2/3) delta^3 p / R0^3")


def check_expansion_T(single, rule, meas, P):
    z1 = single.anomalies[0].position
    worst = 0.0
    for n in range(1, 5):
        got = imaging.radial_coefficients(meas, n)
        want = np.array([imaging.predicted_radial_coefficient(n, m, z1, P, single.R0, rule)
                         for m in range(-n, n + 1)])
        worst = max(worst, _rel(got, want))
    return _le("expansion_T", worst, 1e-6, "radial degree 1..4 projections vs T_{n,m}^T P")


def check_qz_consistency(single, rule, pd, scale):
    z1 = single.anomalies[0].position
    qz = imaging.compute_Qz(z1, pd.P, pd.R0, rule, scale)
    return _le("qz_consistency", _rel(qz, pd.Q), 1e-8, "Q_{z1} reproduces Q at the anomaly")


def check_indicator_peak(single, rule, pd, scale, radius=0.05, count=200):
    z1 = single.anomalies[0].position
    rng = np.random.default_rng(0)
    u = rng.standard_normal((count, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    at, _ = imaging.evaluate_indicator(z1[None, :], pd, rule, scale)
    ring, _ = imaging.evaluate_indicator(z1 + radius * u, pd, rule, scale)
    ratio = float(ring.max() / at[0])
    return _le("indicator_peak", ratio, 1e-3, f"max I at distance {radius} over I at the anomaly")


def check_bound(single, rule, pd, scale, seed):
    z1 = single.anomalies[0].position
    plane = gridsearch.SlicePlane(np.array([0.0, 0.0, z1[2]]), np.array([0.0, 0.0, 1.0]))
    grid = gridsearch.build_shell_grid(single.core_radius, single.earth_radius, 0.02, plane)
    P_hat = pd.P / np.linalg.norm(pd.P)
    kappa = imaging.min_bound_constant(P_hat, imaging.d_matrices(imaging.n_matrices()), seed=seed)
    pts = grid.points
    far = np.linalg.norm(pts - z1, axis=1) >= 0.3
    vals, _ = imaging.evaluate_indicator(pts[far], pd, rule, scale)
    ratio = float(np.max(vals / (1.05 * imaging.indicator_bound(pts[far], z1, kappa.value))))
    return _le("indicator_bound", ratio, 1.0, f"kappa={kappa.value:.4f}, {int(far.sum())} points")


def run_checks(cfg, seed=0, scale=imaging.QZ_SCALE):
    single, rule, meas = _verification_data(cfg)
    pd = imaging.projection_data(meas)
    return [
        check_sh_orthonormality(),
        check_vsh_tangency(),
        check_vsh_orthogonality(),
        check_n_matrices(),
        check_rank_margin(seed),
        check_projection_P(single, meas),
        check_expansion_T(single, rule, meas, pd.P),
        check_qz_consistency(single, rule, pd, scale),
        check_indicator_peak(single, rule, pd, scale),
        check_bound(single, rule, pd, scale, seed),
    ]
