"""
Limited-aperture data extension.

Partial-sphere samples of H~ are fitted by a truncated expansion in the three
vectorial spherical harmonic families,

    H~(R0 x^) ~ sum alpha_n^m I_n^m + sum beta_n^m T_n^m + sum rho_n^m N_n^m,

by linear least squares over the sample points, and the fitted expansion is
evaluated on a full quadrature rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sphharm
from .errors import DegenerateSystemError, IllConditionedFitError
from .forward import Measurement

DEFAULT_BASIS = (2, 0, 6)
DEFAULT_FLOOR = 1e-10


@dataclass(frozen=True)
class VshBasisSpec:
    N1: int = DEFAULT_BASIS[0]
    N2: int = DEFAULT_BASIS[1]
    N3: int = DEFAULT_BASIS[2]

    def __post_init__(self):
        if min(self.N1, self.N2, self.N3) < 0:
            raise ValueError("truncation degrees must be nonnegative")

    @classmethod
    def parse(cls, text):
        parts = [int(p) for p in str(text).split(",")]
        if len(parts) != 3:
            raise ValueError(f"basis must be 'N1,N2,N3', got {text!r}")
        return cls(*parts)

    def indices(self):
        """(family, n, m) for every basis function, in coefficient order."""
        out = [("I", n, m) for n in range(0, self.N1 + 1) for m in range(-(n + 1), n + 2)]
        out += [("T", n, m) for n in range(1, self.N2 + 1) for m in range(-n, n + 1)]
        out += [("N", n, m) for n in range(1, self.N3 + 1) for m in range(-(n - 1), n)]
        return out

    @property
    def count(self):
        return (
            sum(2 * n + 3 for n in range(self.N1 + 1))
            + sum(2 * n + 1 for n in range(1, self.N2 + 1))
            + sum(2 * n - 1 for n in range(1, self.N3 + 1))
        )


_FAMILY_ATTR = {"I": "alpha", "T": "beta", "N": "rho"}


@dataclass(frozen=True)
class VshCoefficients:
    basis: VshBasisSpec
    alpha: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)
    rho: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = {fam: set() for fam in "ITN"}
        for fam, n, m in self.basis.indices():
            expected[fam].add((n, m))
        for fam, attr in _FAMILY_ATTR.items():
            if set(getattr(self, attr)) - expected[fam]:
                raise ValueError(f"{attr} has keys outside the basis")

    @classmethod
    def from_vector(cls, basis, vec):
        maps = {"I": {}, "T": {}, "N": {}}
        for (fam, n, m), c in zip(basis.indices(), vec):
            maps[fam][(n, m)] = complex(c)
        return cls(basis, maps["I"], maps["T"], maps["N"])

    def vector(self):
        return np.array(
            [getattr(self, _FAMILY_ATTR[fam]).get((n, m), 0j) for fam, n, m in self.basis.indices()],
            dtype=complex,
        )


def basis_fields(directions, basis):
    """Array (K, 3, C) of basis vector fields evaluated at ``directions``."""
    d = sphharm.as_directions(directions)
    cols = [sphharm.eval_vsh(fam, n, m, d) for fam, n, m in basis.indices()]
    if not cols:
        return np.zeros(d.shape + (0,), dtype=complex)
    return np.stack(cols, axis=-1)


def design_matrix(directions, basis):
    """(3K, C) design matrix; row 3k + i is Cartesian component i at sample k."""
    f = basis_fields(directions, basis)
    return f.reshape(-1, f.shape[-1])


def _truncated_svd(design, rhs, floor):
    if floor < 0:
        raise ValueError("floor must be nonnegative")
    u, s, vh = np.linalg.svd(design, full_matrices=False)
    if s.size == 0 or s[0] == 0 or np.all(s < floor * s[0]):
        raise DegenerateSystemError("every singular value lies below the floor")
    keep = s >= floor * s[0]
    coef = (u[:, keep].conj().T @ rhs) / s[keep]
    return vh[keep].conj().T @ coef, s, int(keep.sum())


def regularized_solve(design, rhs, floor=DEFAULT_FLOOR):
    """
    Minimum-norm least-squares solution with singular values below
    ``floor * s_max`` discarded.
    """
    x, _, _ = _truncated_svd(np.asarray(design), np.asarray(rhs), floor)
    return x


@dataclass(frozen=True)
class FitReport:
    residual_norm: float
    relative_residual: float
    condition: float
    rank: int
    n_coefficients: int
    n_samples: int

    @property
    def truncated(self):
        return self.rank < self.n_coefficients


def fit_extension(partial, basis=VshBasisSpec(), floor=DEFAULT_FLOOR, weighted=False, strict=True):
    """
    Least-squares fit of the VSH expansion to (partial) measurement data.

    The default norm is the plain sum of squared component moduli over the
    samples; ``weighted=True`` uses the quadrature weights carried by
    ``partial`` instead. Columns are scaled to unit norm before the SVD, and
    the reported condition number refers to that scaled design. With
    ``strict=False`` singular values below the floor are truncated instead of
    raising.

    Raises
    ------
    IllConditionedFitError
        More coefficients than data (3 per sample), or (when ``strict``) a
        design whose rank, counted above the floor, is below the coefficient count.
    """
    if len(partial) == 0:
        raise ValueError("no samples to fit")
    if basis.count > 3 * len(partial):
        raise IllConditionedFitError(
            f"{basis.count} coefficients exceed the {3 * len(partial)} available data",
            condition=np.inf,
        )
    design = design_matrix(partial.directions, basis)
    rhs = partial.values.reshape(-1)
    if weighted:
        if partial.weights is None:
            raise ValueError("weighted fit requested but the measurement has no weights")
        sw = np.repeat(np.sqrt(partial.weights), 3)
        design = design * sw[:, None]
        rhs = rhs * sw
    scale = np.linalg.norm(design, axis=0)
    scale[scale == 0] = 1.0
    try:
        x, s, rank = _truncated_svd(design / scale, rhs, floor)
    except DegenerateSystemError as exc:
        raise IllConditionedFitError(str(exc), condition=np.inf) from exc
    condition = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    if strict and rank < basis.count:
        raise IllConditionedFitError(
            f"design rank {rank} < {basis.count} coefficients at floor {floor:g}",
            condition=condition,
        )
    coeffs = x / scale
    resid = float(np.linalg.norm(design @ coeffs - rhs))
    rhs_norm = float(np.linalg.norm(rhs))
    report = FitReport(
        resid,
        resid / rhs_norm if rhs_norm > 0 else 0.0,
        condition,
        rank,
        basis.count,
        len(partial),
    )
    return VshCoefficients.from_vector(basis, coeffs), report


def evaluate_extension(coeffs, rule, R0):
    """The fitted expansion sampled at the nodes of a full rule, weights attached."""
    fields = basis_fields(rule.nodes, coeffs.basis)
    values = fields @ coeffs.vector() if fields.shape[-1] else np.zeros(rule.nodes.shape, complex)
    return Measurement(
        rule.nodes.copy(), float(R0), values, rule.weights.copy(),
        {"exact_degree": rule.exact_degree, "extended": True},
    )
