"""
Bundled scenarios mirroring the published numerical examples.

Extended shapes enter the leading-order model only through their position, so
the kite and peanut inclusions are single dipoles at their centroids and the
L-shaped inclusion is a chain of dipoles along its two arms. Every preset lies
in the plane z = 0, which is also its default slice.
"""

from __future__ import annotations

import copy

import numpy as np

_SURFACE = 0.99 / np.sqrt(2.0)

# corner of the L and the far ends of its two 0.5-long arms
_L_CORNER = [0.85, 0.2, 0.0]
_L_ARM_A = [0.426, 0.465, 0.0]
_L_ARM_B = [0.585, -0.224, 0.0]


def _base(anomalies, beta, **extra):
    cfg = {
        "scenario": {"anomalies": anomalies},
        "quadrature": {"exact_degree": 128},
        "noise": {"beta": beta},
        "grid": {"slice": "z=0"},
    }
    for key, value in extra.items():
        cfg.setdefault(key, {})
        if isinstance(value, dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


PRESETS = {
    # one kite-sized anomaly in the middle of the shell, 20% noise
    "ex1a": _base([{"position": [0.6, 0.45, 0.0], "delta": 0.02}], 0.20),
    # one peanut-sized anomaly just beneath the surface, 10% noise
    "ex1b": _base([{"position": [_SURFACE, _SURFACE, 0.0], "delta": 0.01}], 0.10),
    # four well separated kites, 10% noise
    "ex2a": _base(
        [
            {"position": [0.8, 0.2, 0.0], "delta": 0.02},
            {"position": [-0.2, 0.8, 0.0], "delta": 0.02},
            {"position": [-0.7, -0.3, 0.0], "delta": 0.02},
            {"position": [0.3, -0.7, 0.0], "delta": 0.02},
        ],
        0.10,
    ),
    # two peanuts 0.2 apart, 10% noise
    "ex2b": _base(
        [
            {"position": [0.75, 0.1, 0.0], "delta": 0.03},
            {"position": [0.75, -0.1, 0.0], "delta": 0.03},
        ],
        0.10,
    ),
    # L-shaped inclusion, cross-section 0.03, arms 0.5
    "ex3": _base(
        [],
        0.10,
        scenario={"chains": [{
            "vertices": [_L_ARM_A, _L_CORNER, _L_ARM_B],
            "points": 51,
            "cross_section": 0.03,
        }]},
    ),
    "ex4-full": _base([{"position": [0.95, 0.0, 0.0], "delta": 0.02}], 0.01, aperture="full"),
    "ex4-hemi": _base([{"position": [0.95, 0.0, 0.0], "delta": 0.02}], 0.01, aperture="hemi:+x"),
    "ex4-quarter": _base([{"position": [0.95, 0.0, 0.0], "delta": 0.02}], 0.01, aperture="quarter:+x,+y"),
}


def preset(name):
    """A deep copy of the named preset's config overrides."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return copy.deepcopy(PRESETS[name])
