"""
Scalar and vectorial spherical harmonics on the unit sphere, plus product
quadrature for surface integrals.

Convention: orthonormal complex harmonics with the Condon-Shortley phase,

    Y_n^m(theta, phi) = sqrt((2n+1)/(4 pi) (n-m)!/(n+m)!) P_n^m(cos theta) e^{i m phi}

so that conj(Y_n^m) = (-1)^m Y_n^{-m}. Directions are Cartesian unit vectors
of shape (3,) or (..., 3); every evaluator broadcasts over the leading axes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import sph_harm_y

from .errors import CapabilityError, IndexDomainError, NumericDegeneracyError, ShapeError

MAX_QUADRATURE_DEGREE = 200
DEFAULT_EXACT_DEGREE = 16


class VshKind(enum.Enum):
    I = "I"
    T = "T"
    N = "N"


def _check_index(n, m):
    if int(n) != n or int(m) != m:
        raise IndexDomainError(f"non-integer harmonic index ({n}, {m})")
    if n < 0 or abs(m) > n:
        raise IndexDomainError(f"invalid harmonic index n={n}, m={m}")


def as_directions(d, tol=1e-10):
    """Return ``d`` as a float array of unit vectors, checking the norm."""
    d = np.asarray(d, dtype=float)
    if d.shape[-1] != 3:
        raise ShapeError(f"directions must have a trailing axis of length 3, got {d.shape}")
    norms = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError("directions must be unit vectors")
    return d


def _angles(d):
    theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
    phi = np.arctan2(d[..., 1], d[..., 0])
    return theta, phi


def _ylm(n, m, theta, phi):
    if n < 0 or abs(m) > n:
        return np.zeros(np.shape(theta), dtype=complex)
    return sph_harm_y(n, m, theta, phi)


def eval_scalar_sh(n, m, d):
    """Evaluate Y_n^m at unit direction(s) ``d``."""
    _check_index(n, m)
    d = as_directions(d)
    theta, phi = _angles(d)
    return _ylm(n, m, theta, phi)


def _solid_gradient(n, m, theta, phi):
    # Cartesian gradient of r^n Y_n^m evaluated on the unit sphere, written
    # through degree n-1 harmonics; regular at the poles.
    shape = np.shape(theta) + (3,)
    if n == 0:
        return np.zeros(shape, dtype=complex)
    c = np.sqrt((2 * n + 1) / (2 * n - 1))
    dz = c * np.sqrt((n + m) * (n - m)) * _ylm(n - 1, m, theta, phi)
    d_plus = c * np.sqrt((n - m) * (n - m - 1)) * _ylm(n - 1, m + 1, theta, phi)
    d_minus = -c * np.sqrt((n + m) * (n + m - 1)) * _ylm(n - 1, m - 1, theta, phi)
    g = np.empty(shape, dtype=complex)
    g[..., 0] = 0.5 * (d_plus + d_minus)
    g[..., 1] = (d_plus - d_minus) / 2j
    g[..., 2] = dz
    return g


def eval_surface_gradient_sh(n, m, d):
    """
    Surface gradient of Y_n^m on the unit sphere.

    Uses grad_S Y = grad(r^n Y)|_{r=1} - n Y d, which has no coordinate
    singularity, so the poles need no special treatment.

    Returns
    -------
    ndarray, complex, shape (..., 3)
    """
    _check_index(n, m)
    d = as_directions(d)
    theta, phi = _angles(d)
    g = _solid_gradient(n, m, theta, phi) - n * _ylm(n, m, theta, phi)[..., None] * d
    if not np.all(np.isfinite(g)):
        raise NumericDegeneracyError(f"non-finite surface gradient for ({n}, {m})")
    return g


def vsh_index_valid(kind, n, m):
    kind = VshKind(kind)
    if kind is VshKind.I:
        return n >= 0 and abs(m) <= n + 1
    if kind is VshKind.T:
        return n >= 1 and abs(m) <= n
    return n >= 1 and abs(m) <= n - 1


def eval_vsh(kind, n, m, d):
    """
    Vectorial spherical harmonic of family ``kind`` at direction(s) ``d``.

    I_n^m = grad_S Y_{n+1}^m + (n+1) Y_{n+1}^m d,  n >= 0, |m| <= n+1
    T_n^m = grad_S Y_n^m x d,                       n >= 1, |m| <= n
    N_n^m = -grad_S Y_{n-1}^m + n Y_{n-1}^m d,      n >= 1, |m| <= n-1
    """
    kind = VshKind(kind)
    if not vsh_index_valid(kind, n, m):
        raise IndexDomainError(f"invalid {kind.value}-family index n={n}, m={m}")
    d = as_directions(d)
    if kind is VshKind.I:
        y = eval_scalar_sh(n + 1, m, d)
        return eval_surface_gradient_sh(n + 1, m, d) + (n + 1) * y[..., None] * d
    if kind is VshKind.T:
        return np.cross(eval_surface_gradient_sh(n, m, d), d)
    y = eval_scalar_sh(n - 1, m, d)
    return -eval_surface_gradient_sh(n - 1, m, d) + n * y[..., None] * d


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Nodes and weights on the unit sphere.

    ``exact_degree`` is None for patches cut out of a full rule; such a patch
    integrates over the covered aperture only and has no exactness guarantee.
    """

    nodes: np.ndarray
    weights: np.ndarray
    exact_degree: int | None = None

    def __post_init__(self):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise ShapeError("nodes must have shape (K, 3)")
        if self.weights.shape != (self.nodes.shape[0],):
            raise ShapeError("weights must have shape (K,)")

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def is_full_sphere(self):
        return abs(self.weights.sum() - 4 * np.pi) < 1e-9

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return QuadratureRule(self.nodes[mask], self.weights[mask], None)


def build_quadrature(exact_degree=DEFAULT_EXACT_DEGREE):
    """
    Gauss-Legendre in cos(theta) times uniform azimuth.

    Integrates every spherical polynomial of degree <= ``exact_degree``
    exactly, using (exact_degree // 2 + 1) * (exact_degree + 1) nodes.
    """
    if int(exact_degree) != exact_degree or exact_degree < 0:
        raise ValueError("exact_degree must be a nonnegative integer")
    if exact_degree > MAX_QUADRATURE_DEGREE:
        raise CapabilityError(
            f"exact_degree {exact_degree} exceeds supported maximum {MAX_QUADRATURE_DEGREE}"
        )
    exact_degree = int(exact_degree)
    n_theta = exact_degree // 2 + 1
    n_phi = exact_degree + 1
    x, w = leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    sin_t = np.sqrt(1.0 - x**2)
    nodes = np.stack(
        [
            np.outer(sin_t, np.cos(phi)),
            np.outer(sin_t, np.sin(phi)),
            np.outer(x, np.ones(n_phi)),
        ],
        axis=-1,
    ).reshape(-1, 3)
    weights = np.outer(w, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    return QuadratureRule(nodes, weights, exact_degree)


def integrate(samples, rule):
    """Quadrature sum over the leading (node) axis of ``samples``."""
    samples = np.asarray(samples)
    if samples.shape[0] != len(rule):
        raise ShapeError(f"{samples.shape[0]} samples for a rule with {len(rule)} nodes")
    return np.tensordot(rule.weights, samples, axes=(0, 0))


def project_scalar(samples, n, m, rule):
    """Inner product of node samples with Y_n^m: sum_k w_k f(d_k) conj(Y_n^m(d_k))."""
    samples = np.asarray(samples)
    if samples.shape != (len(rule),):
        raise ShapeError(f"expected {len(rule)} samples, got shape {samples.shape}")
    y = eval_scalar_sh(n, m, rule.nodes)
    return np.sum(rule.weights * samples * np.conj(y))


def sh_indices(n_max, n_min=0):
    return [(n, m) for n in range(n_min, n_max + 1) for m in range(-n, n + 1)]
