"""
Synthetic field-difference data from small magnetized anomalies.

Each anomaly at z_l with scale delta_l and polarization matrix P_l acts as a
point dipole with moment p_l = P_l H0(z_l), where H0 is the static background
field. The leading-order data on the measurement sphere are

    H~(x) = sum_l delta_l^3 Hess(Gamma_0)(x - z_l) p_l,   Gamma_0(x) = -1/(4 pi |x|)

and the O(delta^4) remainder is dropped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import sphharm
from .errors import DomainError, EmptyApertureError, ShapeError, SingularityError

SINGULARITY_RADIUS = 1e-9
TIE_TOL = 1e-12
RESOLUTION_LIMIT = 0.05


def hessian_gamma0(r):
    """
    Hessian of Gamma_0 = -1/(4 pi |r|): (I - 3 r^ r^T) / (4 pi |r|^3).

    Accepts a single vector (3,) or a stack (..., 3).
    """
    r = np.asarray(r, dtype=float)
    norm = np.linalg.norm(r, axis=-1)
    if np.any(norm < SINGULARITY_RADIUS):
        raise SingularityError("Hessian of Gamma_0 evaluated at its singularity")
    rhat = r / norm[..., None]
    outer = rhat[..., :, None] * rhat[..., None, :]
    return (np.eye(3) - 3.0 * outer) / (4 * np.pi * norm[..., None, None] ** 3)


@dataclass(frozen=True)
class Anomaly:
    position: np.ndarray
    delta: float = 0.02
    polarization: np.ndarray = field(default_factory=lambda: np.eye(3, dtype=complex))
    strict: bool = True

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        pol = np.asarray(self.polarization, dtype=complex)
        if pos.shape != (3,):
            raise ShapeError("anomaly position must be a 3-vector")
        if pol.shape != (3, 3):
            raise ShapeError("polarization must be a 3x3 matrix")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.delta > 0.1:
            warnings.warn(f"delta={self.delta} is not small; the dipole model degrades", stacklevel=3)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "polarization", pol)


@dataclass(frozen=True)
class BackgroundSpec:
    """
    Static background field H0.

    kind:
      ``axial_dipole``         (3 x^(x^.m) - m) / (4 pi |x|^3)
      ``uniform``              constant ``moment``
      ``custom_coefficients``  sum_{n,m} c_nm grad(r^{-n-1} Y_n^m), core-generated
    """

    kind: str = "axial_dipole"
    moment: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0], dtype=complex))
    coefficients: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("axial_dipole", "uniform", "custom_coefficients"):
            raise ValueError(f"unknown background kind {self.kind!r}")
        moment = np.asarray(self.moment, dtype=complex)
        object.__setattr__(self, "moment", moment)
        if self.kind == "custom_coefficients":
            if not any(abs(c) > 0 for c in self.coefficients.values()):
                raise ValueError("custom background needs at least one nonzero coefficient")
            for n, m in self.coefficients:
                if n < 1 or abs(m) > n:
                    raise ValueError(f"invalid background coefficient index ({n}, {m})")
        elif moment.shape != (3,) or not np.any(moment != 0):
            raise ValueError("background moment must be a nonzero 3-vector")


def background_field(spec, x, core_radius=0.5):
    """Evaluate H0 at point(s) ``x``; returns complex (..., 3)."""
    x = np.asarray(x, dtype=float)
    if spec.kind == "uniform":
        return np.broadcast_to(spec.moment, x.shape).astype(complex)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r <= core_radius):
        raise DomainError("background field requested inside the core")
    xhat = x / r[..., None]
    if spec.kind == "axial_dipole":
        proj = np.einsum("...i,i->...", xhat, spec.moment)
        return (3 * xhat * proj[..., None] - spec.moment) / (4 * np.pi * r[..., None] ** 3)
    out = np.zeros(x.shape, dtype=complex)
    for (n, m), c in spec.coefficients.items():
        out += -c * r[..., None] ** (-n - 2) * sphharm.eval_vsh("N", n + 1, m, xhat)
    return out


@dataclass(frozen=True)
class Scenario:
    anomalies: tuple
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    R0: float = 7.0
    earth_radius: float = 1.0
    core_radius: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "anomalies", tuple(self.anomalies))
        if not (self.R0 > self.earth_radius > self.core_radius > 0):
            raise ValueError("require R0 > earth_radius > core_radius > 0")
        for a in self.anomalies:
            r = np.linalg.norm(a.position)
            if a.strict and not (self.core_radius < r < self.earth_radius):
                raise DomainError(f"anomaly at |z|={r:.4f} lies outside the shell")
            if r >= self.R0:
                raise DomainError("anomaly outside the measurement sphere")
        if len(self.anomalies) > 1:
            pos = np.array([a.position for a in self.anomalies])
            dist = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
            dmin = dist[np.triu_indices(len(pos), 1)].min()
            if dmin < RESOLUTION_LIMIT:
                warnings.warn(
                    f"anomalies only {dmin:.3f} apart, below the resolution limit {RESOLUTION_LIMIT}",
                    stacklevel=3,
                )

    def moments(self):
        """Effective dipole moments delta_l^3 P_l H0(z_l), one row per anomaly."""
        if not self.anomalies:
            return np.zeros((0, 3), dtype=complex)
        pos = np.array([a.position for a in self.anomalies])
        h0 = background_field(self.background, pos, self.core_radius)
        return np.array(
            [a.delta**3 * (a.polarization @ h) for a, h in zip(self.anomalies, h0)]
        )


@dataclass(frozen=True)
class Measurement:
    """Complex field-difference samples at directions on the sphere of ``radius``."""

    directions: np.ndarray
    radius: float
    values: np.ndarray
    weights: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if d.ndim != 2 or d.shape[1] != 3 or v.shape != d.shape:
            raise ShapeError("directions and values must both have shape (K, 3)")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "values", v)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (d.shape[0],):
                raise ShapeError("weights must have shape (K,)")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.directions.shape[0]

    def rule(self):
        """The sample directions and weights as a quadrature rule (None without weights)."""
        if self.weights is None:
            return None
        rule = sphharm.QuadratureRule(self.directions, self.weights, None)
        return rule

    def radial(self):
        return np.einsum("ki,ki->k", self.directions, self.values)


def synthesize(scenario, rule):
    """Leading-order anomaly response at the nodes of ``rule`` on the sphere of radius R0."""
    if len(rule) == 0:
        raise ValueError("quadrature rule has no nodes")
    x = scenario.R0 * rule.nodes
    values = np.zeros(x.shape, dtype=complex)
    for a, p in zip(scenario.anomalies, scenario.moments()):
        values += hessian_gamma0(x - a.position) @ p
    return Measurement(
        rule.nodes.copy(),
        float(scenario.R0),
        values,
        rule.weights.copy(),
        {"exact_degree": rule.exact_degree},
    )


def corrupt(meas, beta, seed, mode="component"):
    """
    Add the uniform-amplitude, random-phase noise

        H^beta = H + beta * zeta1 * M * exp(2 pi i zeta2),  zeta1, zeta2 ~ U[-1, 1].

    ``mode="component"`` draws (zeta1, zeta2) independently for every sample and
    Cartesian component, with M the largest component modulus. ``mode="scalar"``
    draws one pair per sample and adds the same complex number to all three
    components, with M the largest vector norm.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return replace(meas, values=meas.values.copy())
    rng = np.random.Generator(np.random.Philox(seed))
    k = len(meas)
    if mode == "component":
        scale = np.abs(meas.values).max()
        z1 = rng.uniform(-1.0, 1.0, size=(k, 3))
        z2 = rng.uniform(-1.0, 1.0, size=(k, 3))
        noise = beta * z1 * scale * np.exp(2j * np.pi * z2)
    elif mode == "scalar":
        scale = np.linalg.norm(meas.values, axis=1).max()
        z1 = rng.uniform(-1.0, 1.0, size=k)
        z2 = rng.uniform(-1.0, 1.0, size=k)
        noise = np.repeat((beta * z1 * scale * np.exp(2j * np.pi * z2))[:, None], 3, axis=1)
    else:
        raise ValueError(f"unknown noise mode {mode!r}")
    meta = dict(meas.metadata, noise_beta=beta, noise_seed=seed, noise_mode=mode)
    return replace(meas, values=meas.values + noise, metadata=meta)


_AXES = {
    "x": (1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
    "z": (0.0, 0.0, 1.0),
}


def parse_axis(token):
    token = token.strip().lower()
    sign = -1.0 if token.startswith("-") else 1.0
    key = token.lstrip("+-")
    if key not in _AXES:
        raise ValueError(f"unknown axis {token!r}; expected one of [+-]x, [+-]y, [+-]z")
    return sign * np.array(_AXES[key])


@dataclass(frozen=True)
class Aperture:
    """
    Measured part of the sphere.

    ``kind`` is one of ``full``, ``cap`` (axis, half_angle), ``hemisphere``
    (axis) or ``quarter`` (two axes; directions on the nonnegative side of both).
    """

    kind: str = "full"
    axes: tuple = ()
    half_angle: float = np.pi

    @classmethod
    def parse(cls, text):
        """Parse ``full``, ``hemi:AXIS``, ``quarter:AXIS1,AXIS2`` or ``cap:AXIS,ANGLE``."""
        text = text.strip()
        if text == "full":
            return cls("full")
        kind, _, rest = text.partition(":")
        parts = [p for p in rest.split(",") if p]
        if kind in ("hemi", "hemisphere") and len(parts) == 1:
            return cls("hemisphere", (tuple(parse_axis(parts[0])),))
        if kind == "quarter" and len(parts) == 2:
            return cls("quarter", tuple(tuple(parse_axis(p)) for p in parts))
        if kind == "cap" and len(parts) == 2:
            return cls("cap", (tuple(parse_axis(parts[0])),), float(parts[1]))
        raise ValueError(f"cannot parse aperture {text!r}")

    def contains(self, directions):
        d = np.asarray(directions, dtype=float)
        if self.kind == "full":
            return np.ones(d.shape[0], dtype=bool)
        if self.kind == "cap":
            if self.half_angle >= np.pi:
                return np.ones(d.shape[0], dtype=bool)
            return d @ np.asarray(self.axes[0]) >= np.cos(self.half_angle) - TIE_TOL
        mask = np.ones(d.shape[0], dtype=bool)
        for axis in self.axes:
            mask &= d @ np.asarray(axis) >= -TIE_TOL
        return mask


def restrict(meas, aperture, keep_weights=False):
    """
    Keep the samples whose direction lies in ``aperture``.

    Weights are dropped unless ``keep_weights`` is set, since partial data are
    not a quadrature of the sphere; kept weights integrate over the aperture only.
    """
    if isinstance(aperture, str):
        aperture = Aperture.parse(aperture)
    mask = aperture.contains(meas.directions)
    if not mask.any():
        raise EmptyApertureError("no samples inside the aperture")
    weights = meas.weights[mask] if (keep_weights and meas.weights is not None) else None
    meta = dict(meas.metadata, aperture=aperture.kind)
    return Measurement(meas.directions[mask], meas.radius, meas.values[mask], weights, meta)
