"""
Projection vectors, transfer matrices and the anomaly indicator functional.

From full-sphere data H~ on the sphere of radius R0 two projections are taken,

    P = int (x^ . H~(R0 x^)) x^ ds            (degree-1 radial content, in C^3)
    Q = int (x^ . H~(R0 x^)) conj(Y_2(x^)) ds  (degree-2 radial content, in C^5)

and compared with the degree-2 content a single dipole at a sampling point z
would produce, Q_z = (c / R0) T(z) P. The indicator

    I(z) = 2 |P| / (3 R0 |Q - Q_z|)

blows up at the anomaly. T(z) is linear in z: its row m is z~^T D_m with
z~_h = conj(Y_1^h(z^)) |z|.

The prefactor c defaults to ``QZ_SCALE = 3/2``. That is the value for which
Q = Q_{z1} holds exactly on leading-order dipole data: for a dipole moment p,
P = -(2/3) p / R0^3 and Q = -T(z1) p / R0^4.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import sphharm
from .errors import (
    DegenerateDataError,
    DegeneratePointError,
    DivergenceDomainError,
    IndexDomainError,
    NeedsQuadratureError,
)

QZ_SCALE = 1.5
LITERAL_QZ_SCALE = 2.0 / 3.0
SATURATION_REL = 1e-12
_C1 = np.sqrt(3.0 / (8.0 * np.pi))
_C0 = np.sqrt(3.0 / (4.0 * np.pi))


@dataclass(frozen=True)
class ProjectionData:
    P: np.ndarray
    Q: np.ndarray
    R0: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.P)) and np.all(np.isfinite(self.Q))):
            raise DegenerateDataError("projection vectors contain non-finite entries")

    def require_signal(self):
        if not np.linalg.norm(self.P) > 0:
            raise DegenerateDataError("P vanishes; the data carry no anomaly signal")


def _measurement_rule(meas, allow_partial):
    rule = meas.rule()
    if rule is None:
        raise NeedsQuadratureError(
            "measurement has no quadrature weights; extend partial data to the full sphere first"
        )
    if not allow_partial and not rule.is_full_sphere:
        raise NeedsQuadratureError(
            "weights do not cover the full sphere; pass allow_partial=True to integrate over the aperture"
        )
    return rule


def compute_P(meas, allow_partial=False):
    """Quadrature of (x^ . H~) x^ over the sphere (or over the aperture if allowed)."""
    rule = _measurement_rule(meas, allow_partial)
    return sphharm.integrate(meas.radial()[:, None] * rule.nodes, rule)


def compute_Q(meas, allow_partial=False):
    """Projections of x^ . H~ onto Y_2^m, ordered m = -2..2."""
    rule = _measurement_rule(meas, allow_partial)
    radial = meas.radial()
    return np.array(
        [np.sum(rule.weights * radial * np.conj(sphharm.eval_scalar_sh(2, m, rule.nodes)))
         for m in range(-2, 3)]
    )


def projection_data(meas, allow_partial=False):
    return ProjectionData(compute_P(meas, allow_partial), compute_Q(meas, allow_partial), meas.radius)


def z_tilde(z):
    """conj(Y_1^h(z^)) |z| for h = -1, 0, 1; linear in z, shape (..., 3)."""
    z = np.asarray(z, dtype=float)
    x, y, w = z[..., 0], z[..., 1], z[..., 2]
    return np.stack([_C1 * (x + 1j * y), _C0 * w + 0j, -_C1 * (x - 1j * y)], axis=-1)


@functools.lru_cache(maxsize=16)
def transfer_blocks(rule):
    """
    B[h, j, m] = int (N_2^h(x^))_j conj(Y_2^m(x^)) ds, with N_2^h = 2 Y_1^h x^ - grad_S Y_1^h.

    Indices h = -1..1 and m = -2..2 are stored at offsets +1 and +2. Cached per
    rule (by identity) since a sweep reuses them at every sampling point.
    """
    y2 = np.array([np.conj(sphharm.eval_scalar_sh(2, m, rule.nodes)) for m in range(-2, 3)])
    blocks = np.empty((3, 3, 5), dtype=complex)
    for i, h in enumerate(range(-1, 2)):
        nvec = sphharm.eval_vsh("N", 2, h, rule.nodes)
        blocks[i] = np.einsum("k,kj,mk->jm", rule.weights, nvec, y2)
    blocks.setflags(write=False)
    return blocks


@dataclass(frozen=True)
class TransferMatrix:
    T: np.ndarray
    z: np.ndarray


def compute_T_tilde(z, rule):
    """5x3 matrix whose row m (m = -2..2) is T~_m(z)^T, integrals by quadrature."""
    z = np.asarray(z, dtype=float)
    if not np.linalg.norm(z) > 0:
        raise DegeneratePointError("T~ is undefined at the origin")
    T = np.einsum("h,hjm->mj", z_tilde(z), transfer_blocks(rule))
    return TransferMatrix(T, z.copy())


def compute_Qz(z, P, R0, rule, scale=QZ_SCALE):
    """Degree-2 projection predicted for a dipole at ``z``: (scale / R0) T(z) P."""
    return (scale / R0) * compute_T_tilde(z, rule).T @ np.asarray(P)


def evaluate_indicator(points, pd, rule, scale=QZ_SCALE):
    """
    Vectorized indicator over sampling points of shape (G, 3).

    Returns ``(values, saturated)``. Where |Q - Q_z| drops below the floor
    1e-12 |Q| (plus the smallest normal float) the floor is used instead and
    the point is flagged.
    """
    pd.require_signal()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    # Q_z = (scale/R0) z~ . M with M[h, m] = sum_j B[h, j, m] P_j
    M = np.einsum("hjm,j->hm", transfer_blocks(rule), pd.P)
    qz = (scale / pd.R0) * (z_tilde(points) @ M)
    denom = np.linalg.norm(pd.Q[None, :] - qz, axis=1)
    floor = SATURATION_REL * np.linalg.norm(pd.Q) + np.finfo(float).tiny
    saturated = denom < floor
    denom = np.where(saturated, floor, denom)
    values = 2.0 * np.linalg.norm(pd.P) / (3.0 * pd.R0 * denom)
    return values, saturated


def indicator(z, pd, rule, scale=QZ_SCALE):
    values, _ = evaluate_indicator(np.asarray(z, dtype=float)[None, :], pd, rule, scale)
    return float(values[0])


@dataclass(frozen=True)
class NMatrices:
    """Representations N_2^h = N^(h) Y_2 for h = -1, 0, 1 (each 3x5)."""

    N_minus1: np.ndarray
    N_0: np.ndarray
    N_plus1: np.ndarray

    def stacked(self):
        return np.stack([self.N_minus1, self.N_0, self.N_plus1])


def n_matrices():
    s5 = 3 * np.sqrt(5) / 5
    s30 = np.sqrt(30) / 10
    s10 = 3 * np.sqrt(10) / 10
    s15 = 2 * np.sqrt(15) / 5
    n_m1 = np.array(
        [
            [s5, 0, -s30, 0, 0],
            [1j * s5, 0, 1j * s30, 0, 0],
            [0, s5, 0, 0, 0],
        ],
        dtype=complex,
    )
    n_0 = np.array(
        [
            [0, s10, 0, -s10, 0],
            [0, 1j * s10, 0, 1j * s10, 0],
            [0, 0, s15, 0, 0],
        ],
        dtype=complex,
    )
    n_p1 = np.array(
        [
            [0, 0, s30, 0, -s5],
            [0, 0, 1j * s30, 0, 1j * s5],
            [0, 0, 0, s5, 0],
        ],
        dtype=complex,
    )
    return NMatrices(n_m1, n_0, n_p1)


def derive_n_matrices(rule):
    """Recompute the N^(h) entries as quadrature projections <(N_2^h)_j, Y_2^m>."""
    if rule.exact_degree is not None and rule.exact_degree < 5:
        raise ValueError("deriving N matrices needs a rule exact to degree >= 5")
    b = transfer_blocks(rule)
    return NMatrices(b[0].copy(), b[1].copy(), b[2].copy())


@dataclass(frozen=True)
class DMatrices:
    D: np.ndarray  # (5, 3, 3), m = -2..2 at offset +2

    def __getitem__(self, m):
        return self.D[m + 2]


def d_matrices(nm):
    """D_m[i, j] = N^(i-2)[j, m+3] (1-based), i.e. D[m][h, j] = N^(h)[j, m]."""
    n = nm.stacked()
    return DMatrices(np.transpose(n, (2, 0, 1)).copy())


def rank_margin(a, dm):
    """Smallest over largest singular value of [D_-2 a, ..., D_2 a]."""
    cols = np.stack([dm.D[k] @ a for k in range(5)], axis=1)
    s = np.linalg.svd(cols, compute_uv=False)
    return s[-1] / s[0]


@dataclass(frozen=True)
class BoundConstant:
    value: float
    argmin: np.ndarray
    converged: bool
    coarse_value: float


def _minmax_objective(v, A):
    y = v[:3] + 1j * v[3:]
    norm = np.linalg.norm(y)
    if norm == 0:
        return np.inf
    return np.max(np.abs((y / norm) @ A))


def min_bound_constant(P_hat, dm, n_samples=20000, n_starts=6, seed=0):
    """
    min over complex unit y of max_m |y^T D_m P^|.

    Coarse random sampling of the unit sphere in C^3 followed by Nelder-Mead
    refinement from the best coarse points. The objective is invariant under a
    global phase of y, so the search runs over unnormalized real 6-vectors.
    """
    P_hat = np.asarray(P_hat, dtype=complex)
    if abs(np.linalg.norm(P_hat) - 1.0) > 1e-10:
        raise ValueError("P_hat must be a unit vector")
    A = np.stack([dm.D[k] @ P_hat for k in range(5)], axis=1)  # (3, 5)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_samples, 6))
    y = v[:, :3] + 1j * v[:, 3:]
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    f = np.abs(y @ A).max(axis=1)
    order = np.argsort(f)[:n_starts]
    coarse = float(f[order[0]])
    best_val, best_v, converged = coarse, v[order[0]], True
    for idx in order:
        res = minimize(
            _minmax_objective,
            v[idx],
            args=(A,),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000, "maxfev": 40000},
        )
        if res.fun < best_val:
            best_val, best_v, converged = float(res.fun), res.x, bool(res.success)
    y_best = best_v[:3] + 1j * best_v[3:]
    y_best /= np.linalg.norm(y_best)
    return BoundConstant(best_val, y_best, converged, coarse)


def indicator_bound(z, z1, kappa):
    """Upper bound sqrt(4 pi / 3) / (|z1 - z| kappa) on I(z) away from the anomaly."""
    dist = np.linalg.norm(np.asarray(z) - np.asarray(z1), axis=-1)
    return np.sqrt(4 * np.pi / 3) / (dist * kappa)


def expansion_coeff_T(n, m, z1, R, rule):
    """
    Coefficient vector T_{n,m} of the radial expansion, as displayed:

        sum_h conj(Y_{n-1}^h(z1^)) |z1|^{n-1} / ((2n-1)(-n-1) R^{n+2})
              * int (n Y_{n-1}^h x^ - grad_S Y_{n-1}^h) conj(Y_n^m) ds

    Note the (-n-1) sits in the denominator here; the dipole field itself
    carries the factor -(n+1) in the numerator. ``predicted_radial_coefficient``
    applies the resulting (n+1)^2 correction.
    """
    if n < 1 or abs(m) > n:
        raise IndexDomainError(f"invalid expansion index n={n}, m={m}")
    z1 = np.asarray(z1, dtype=float)
    r1 = np.linalg.norm(z1)
    if not 0 < r1 < R:
        raise ValueError("need 0 < |z1| < R")
    if rule.exact_degree is not None and rule.exact_degree < 2 * n:
        raise ValueError(f"rule exact to degree {rule.exact_degree} cannot resolve degree-{n} products")
    zhat = z1 / r1
    yconj = np.conj(sphharm.eval_scalar_sh(n, m, rule.nodes))
    prefactor = r1 ** (n - 1) / ((2 * n - 1) * (-n - 1) * R ** (n + 2))
    out = np.zeros(3, dtype=complex)
    for h in range(-(n - 1), n):
        vec = sphharm.eval_vsh("N", n, h, rule.nodes)
        integral = np.einsum("k,kj,k->j", rule.weights, vec, yconj)
        out += np.conj(sphharm.eval_scalar_sh(n - 1, h, zhat)) * prefactor * integral
    return out


def predicted_radial_coefficient(n, m, z1, P, R0, rule):
    """
    <x^ . H~, Y_n^m> on the sphere of radius R0 predicted from P for a dipole at z1:
    -(3/2) (n+1)^2 R0^3 T_{n,m}^T P. For n = 1 this is -6 R0^3 T_{1,m}^T P.
    """
    T = expansion_coeff_T(n, m, z1, R0, rule)
    return -1.5 * (n + 1) ** 2 * R0**3 * (T @ np.asarray(P))


def radial_coefficients(meas, n):
    """Projections of the radial data x^ . H~ onto Y_n^m, m = -n..n (full sphere)."""
    rule = _measurement_rule(meas, allow_partial=False)
    radial = meas.radial()
    return np.array([sphharm.project_scalar(radial, n, m, rule) for m in range(-n, n + 1)])


def gradient_gamma0_series(x, z, N):
    """
    Partial sum through degree N of the multipole expansion of grad Gamma_0(x - z),

        sum_n sum_m ((n+1) Y_n^m(x^) x^ - grad_S Y_n^m(x^)) / ((2n+1) R^{n+2}) conj(Y_n^m(z^)) |z|^n

    with R = |x| > |z|; converges to (x - z) / (4 pi |x - z|^3).
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    R = np.linalg.norm(x)
    rz = np.linalg.norm(z)
    if rz >= R:
        raise DivergenceDomainError("series requires |z| < |x|")
    xhat = x / R
    zhat = z / rz if rz > 0 else np.array([0.0, 0.0, 1.0])
    total = np.zeros(3, dtype=complex)
    for n in range(N + 1):
        radial_scale = rz**n
        if radial_scale == 0 and n > 0:
            break
        for m in range(-n, n + 1):
            y = sphharm.eval_scalar_sh(n, m, xhat)
            vec = (n + 1) * y * xhat - sphharm.eval_surface_gradient_sh(n, m, xhat)
            total += vec * np.conj(sphharm.eval_scalar_sh(n, m, zhat)) * radial_scale / (
                (2 * n + 1) * R ** (n + 2)
            )
    return total.real
