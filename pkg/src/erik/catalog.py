"""Built-in test skeletons A-G and the DH parameterization of skeleton C.

The chains are serial, root-first, with every segment along the local +Y
axis.  Axis letters map to the unit coordinate axes; a Y-axis joint is a
twister (its axis is parallel to its own segment).  Skeleton C carries the
segment lengths of its DH model; all other chains use unit segments since
ERIK's error measures only depend on directions.
"""

from __future__ import annotations

import math

import numpy as np

from .jacobian import DhLink
from .skeleton import Link, Skeleton

_AXES = {
    "Y": np.array([0.0, 1.0, 0.0]),
    "X": np.array([1.0, 0.0, 0.0]),
    "Z": np.array([0.0, 0.0, 1.0]),
}

HALF_PI = math.pi / 2.0

# name -> (axis sequence, (min, max) shared by all links, segment lengths)
CATALOG = {
    "A": ("Y-X-Y", (-HALF_PI, HALF_PI), None),
    "B": ("Y-X-Z-Y", (-math.pi, math.pi), None),
    "C": ("Y-X-X-Z-Y", (-HALF_PI, HALF_PI), (10.0, 30.0, 30.0, 40.0, 1.0)),
    "D": ("Y-X-Z-X-Y", (-math.pi, math.pi), None),
    "E": ("Y-X-Z-X-Y", (-HALF_PI, HALF_PI), None),
    "F": ("Y-X-X-Z-X-Y", (-HALF_PI, HALF_PI), None),
    "G": ("Y-X-Z-X-Y-X-Z-Y", (-HALF_PI, HALF_PI), None),
}

SKELETON_NAMES = tuple(CATALOG)


def build_skeleton(name: str, lalut_step: float | None = None,
                   aggravation: float = 2.0) -> Skeleton:
    """Construct one of the named catalog chains."""
    key = name.upper()
    if key not in CATALOG:
        raise KeyError(f"unknown skeleton {name!r}; expected one of {SKELETON_NAMES}")
    axes, (lo, hi), lengths = CATALOG[key]
    letters = axes.split("-")
    if lengths is None:
        lengths = (1.0,) * len(letters)
    links = []
    for i, (letter, length) in enumerate(zip(letters, lengths)):
        links.append(Link(
            index=i,
            segment=np.array([0.0, length, 0.0]),
            rotation_axis=_AXES[letter].copy(),
            min_theta=lo,
            max_theta=hi,
        ))
    return Skeleton(links, name=key, aggravation=aggravation)


def skeleton_c_dh_chain() -> list[DhLink]:
    """Classic Denavit-Hartenberg rows modelling skeleton C."""
    return [
        DhLink(theta_offset=0.0, alpha=HALF_PI, a=0.0, d=10.0),
        DhLink(theta_offset=HALF_PI, alpha=0.0, a=30.0, d=0.0),
        DhLink(theta_offset=0.0, alpha=HALF_PI, a=30.0, d=0.0),
        DhLink(theta_offset=HALF_PI, alpha=HALF_PI, a=0.0, d=0.0),
        DhLink(theta_offset=HALF_PI, alpha=0.0, a=0.0, d=40.0),
    ]
