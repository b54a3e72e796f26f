"""
Run configuration: a YAML mapping with fixed nested sections.

Unknown keys are rejected, and every value is checked by building the
objects it describes (scenario, quadrature rule, aperture, basis, grid) at
load time. A config may name a bundled preset; its own keys then override
the preset's. The full grammar with defaults is ``DEFAULTS`` below.
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import aperture, forward, gridsearch, presets, sphharm
from .errors import ConfigError

DEFAULTS = {
    "preset": None,
    "scenario": {
        "R0": 7.0,
        "earth_radius": 1.0,
        "core_radius": 0.5,
        "background": {"kind": "axial_dipole", "moment": [0.0, 0.0, 1.0], "coefficients": []},
        "anomalies": [],
        "chains": [],
    },
    "quadrature": {"exact_degree": sphharm.DEFAULT_EXACT_DEGREE},
    "noise": {"beta": 0.0, "seed": 0, "mode": "component"},
    "aperture": "full",
    "extension": {
        "basis": list(aperture.DEFAULT_BASIS),
        "floor": aperture.DEFAULT_FLOOR,
        "weighted": False,
        "strict": True,
    },
    "grid": {"h": 0.02, "inner": 0.5, "outer": 1.0, "slice": None, "workers": 1},
    "peaks": {"threshold": 0.5, "min_separation": 0.05, "refine": True},
    "report": {"timing": False, "bound": True},
    "output": {"dir": "out"},
}

ANOMALY_KEYS = {"position", "delta", "polarization"}
CHAIN_KEYS = {"vertices", "points", "cross_section", "polarization"}
COEFFICIENT_KEYS = {"n", "m", "value"}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check_items(items, allowed, what):
    if not isinstance(items, list):
        raise ConfigError(f"{what} must be a list")
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise ConfigError(f"{what}[{i}] must be a mapping")
        extra = set(item) - allowed
        if extra:
            raise ConfigError(f"unknown key(s) {sorted(extra)} in {what}[{i}]")


def _complex(value):
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    return complex(value)


def _polarization(value):
    if value is None:
        return np.eye(3, dtype=complex)
    arr = np.asarray(value)
    if arr.ndim == 0:
        return complex(arr) * np.eye(3, dtype=complex)
    if arr.shape == (3,):
        return np.diag(arr.astype(complex))
    return arr.astype(complex)


def chain_points(vertices, points):
    """``points`` positions spaced evenly by arc length along a polyline, vertices included."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 3 or len(v) < 2:
        raise ConfigError("a chain needs at least two 3D vertices")
    seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
    if np.any(seg == 0):
        raise ConfigError("chain has a zero-length segment")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], int(points))
    return np.column_stack([np.interp(t, s, v[:, k]) for k in range(3)]), float(s[-1])


def read_yaml(path):
    """The raw mapping stored in a config file (empty file gives an empty mapping)."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return raw


@dataclass(frozen=True)
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw or {})
        base = DEFAULTS
        name = raw.get("preset")
        if name is not None:
            try:
                base = _merge(DEFAULTS, presets.preset(name))
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
        cfg = cls(_merge(base, raw))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_yaml(path))

    def override(self, **changes):
        """Return a new config with dotted-path overrides, e.g. ``{"noise.beta": 0.1}``."""
        data = copy.deepcopy(self.data)
        for dotted, value in changes.items():
            node = data
            *parents, leaf = dotted.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node[leaf] = value
        cfg = RunConfig(data)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    def validate(self):
        sc = self.data["scenario"]
        _check_items(sc["anomalies"], ANOMALY_KEYS, "scenario.anomalies")
        _check_items(sc["chains"], CHAIN_KEYS, "scenario.chains")
        _check_items(sc["background"]["coefficients"], COEFFICIENT_KEYS, "scenario.background.coefficients")
        noise = self.data["noise"]
        if noise["mode"] not in ("component", "scalar"):
            raise ConfigError(f"noise.mode must be 'component' or 'scalar', got {noise['mode']!r}")
        if int(noise["seed"]) != noise["seed"] or noise["seed"] < 0:
            raise ConfigError("noise.seed must be a nonnegative integer")
        if not float(noise["beta"]) >= 0:
            raise ConfigError("noise.beta must be nonnegative")
        peaks = self.data["peaks"]
        if not 0 < peaks["threshold"] < 1:
            raise ConfigError("peaks.threshold must lie in (0, 1)")
        if not peaks["min_separation"] >= 0:
            raise ConfigError("peaks.min_separation must be nonnegative")
        if int(self.data["grid"]["workers"]) < 1:
            raise ConfigError("grid.workers must be at least 1")
        try:
            self.scenario()
            self.rule_degree()
            self.aperture()
            self.basis()
            self.grid()
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def anomalies(self):
        sc = self.data["scenario"]
        out = [
            forward.Anomaly(
                np.asarray(a["position"], dtype=float),
                float(a.get("delta", 0.02)),
                _polarization(a.get("polarization")),
            )
            for a in sc["anomalies"]
        ]
        for ch in sc["chains"]:
            pts, length = chain_points(ch["vertices"], ch.get("points", 51))
            cross = float(ch.get("cross_section", 0.03))
            delta = (cross**2 * length / len(pts)) ** (1.0 / 3.0)
            pol = _polarization(ch.get("polarization"))
            out.extend(forward.Anomaly(p, delta, pol) for p in pts)
        return out

    def has_chains(self):
        return bool(self.data["scenario"]["chains"])

    def background(self):
        bg = self.data["scenario"]["background"]
        coeffs = {(int(c["n"]), int(c["m"])): _complex(c["value"]) for c in bg["coefficients"]}
        return forward.BackgroundSpec(bg["kind"], np.asarray(bg["moment"], dtype=complex), coeffs)

    def scenario(self):
        sc = self.data["scenario"]
        with warnings.catch_warnings():
            if self.has_chains():
                # chain dipoles sit closer than the resolution limit by construction
                warnings.filterwarnings("ignore", message=".*resolution limit.*")
            return forward.Scenario(
                self.anomalies(), self.background(),
                float(sc["R0"]), float(sc["earth_radius"]), float(sc["core_radius"]),
            )

    def truth(self):
        """Anomaly positions used as ground truth in reports, shape (L, 3)."""
        return np.array([a.position for a in self.anomalies()]).reshape(-1, 3)

    def rule_degree(self):
        deg = self.data["quadrature"]["exact_degree"]
        if int(deg) != deg or not 0 <= deg <= sphharm.MAX_QUADRATURE_DEGREE:
            raise ConfigError(f"quadrature.exact_degree must be an integer in [0, {sphharm.MAX_QUADRATURE_DEGREE}]")
        return int(deg)

    def rule(self):
        return sphharm.build_quadrature(self.rule_degree())

    def aperture(self):
        return forward.Aperture.parse(str(self.data["aperture"]))

    def basis(self):
        b = self.data["extension"]["basis"]
        if isinstance(b, str):
            return aperture.VshBasisSpec.parse(b)
        if len(b) != 3:
            raise ConfigError("extension.basis must list N1, N2, N3")
        return aperture.VshBasisSpec(*(int(x) for x in b))

    def slice_plane(self):
        s = self.data["grid"]["slice"]
        if s is None or str(s).lower() in ("none", "volume"):
            return None
        return gridsearch.SlicePlane.parse(str(s))

    def grid(self):
        g = self.data["grid"]
        return gridsearch.build_shell_grid(float(g["inner"]), float(g["outer"]), float(g["h"]), self.slice_plane())

    def dump(self):
        """
        The resolved configuration without execution-only settings (worker
        count, output directory), so outputs do not depend on them.
        """
        out = copy.deepcopy(self.data)
        del out["grid"]["workers"]
        del out["output"]
        return out
