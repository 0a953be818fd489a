"""YAML file formats: skeleton definitions and run configurations.

Skeleton files list the chain root-first; angles are radians.  The same
schema round-trips through :func:`save_skeleton` / :func:`load_skeleton`,
and the seven built-in chains ship as package data.
"""

from __future__ import annotations

import math
from importlib import resources

import numpy as np
import yaml

from .ccd import CcdConfig
from .errors import ErrorWeights
from .evaluation import SweepConfig
from .skeleton import Link, Skeleton
from .solver import ErikHyperparams


class SkeletonFileError(ValueError):
    """Raised with the offending field when a skeleton file is invalid."""


def skeleton_to_dict(skeleton: Skeleton) -> dict:
    return {
        "name": skeleton.name,
        "links": [
            {
                "segment": [float(v) for v in link.segment],
                "rotation_axis": [float(v) for v in link.rotation_axis],
                "min_theta": float(link.min_theta),
                "max_theta": float(link.max_theta),
            }
            for link in skeleton.links
        ],
    }


def skeleton_from_dict(data: dict, lalut_step: float | None = None) -> Skeleton:
    if not isinstance(data, dict) or "links" not in data:
        raise SkeletonFileError("missing 'links' list")
    links = []
    for i, raw in enumerate(data["links"]):
        for key in ("segment", "rotation_axis", "min_theta", "max_theta"):
            if key not in raw:
                raise SkeletonFileError(f"link {i}: missing '{key}'")
        for key in ("segment", "rotation_axis"):
            vec = raw[key]
            if not (isinstance(vec, (list, tuple)) and len(vec) == 3):
                raise SkeletonFileError(f"link {i}: '{key}' must be [x, y, z]")
        try:
            link = Link(
                index=i,
                segment=np.array(raw["segment"], dtype=float),
                rotation_axis=np.array(raw["rotation_axis"], dtype=float),
                min_theta=float(raw["min_theta"]),
                max_theta=float(raw["max_theta"]),
            )
        except ValueError as exc:
            raise SkeletonFileError(f"link {i}: {exc}") from exc
        links.append(link)
    return Skeleton(links, name=str(data.get("name", "")))


def save_skeleton(path, skeleton: Skeleton) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(skeleton_to_dict(skeleton), fh, sort_keys=False)


def load_skeleton(path) -> Skeleton:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return skeleton_from_dict(data)


def load_bundled_skeleton(name: str) -> Skeleton:
    """Load one of the shipped catalog chains (A-G) from package data."""
    ref = resources.files("erik").joinpath(f"data/skeletons/{name.upper()}.yaml")
    with ref.open() as fh:
        return skeleton_from_dict(yaml.safe_load(fh))


def resolve_skeleton(spec: str) -> Skeleton:
    """Catalog letter or a path to a skeleton file."""
    import os

    if len(spec) == 1 and spec.upper() in "ABCDEFG":
        return load_bundled_skeleton(spec)
    if not os.path.exists(spec):
        raise SkeletonFileError(f"skeleton {spec!r}: not a catalog letter or file")
    return load_skeleton(spec)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

def config_to_dict(hp: ErikHyperparams, sweep: SweepConfig | None = None) -> dict:
    data = {
        "weights": {
            "orientation": hp.weights.orientation_weight,
            "posture": hp.weights.posture_weight,
            "threshold": hp.weights.threshold,
            "aggravation": hp.weights.aggravation,
        },
        "max_erik_iterations": hp.max_erik_iterations,
        "ccd": {
            "max_iterations": hp.ccd.max_iterations,
            "precision": hp.ccd.precision,
            "stall_precision": hp.ccd.stall_precision,
            "round_decimals": hp.ccd.round_decimals,
        },
        "disturbance": hp.disturbance,
        "extensions": {
            "symmetric_endpoint": hp.ext_symmetric_endpoint,
            "avoid_edges": hp.ext_avoid_edges,
            "nonconv_offset": hp.ext_nonconv_offset,
            "nonconv_ccd": hp.ext_nonconv_ccd,
        },
        "nonconv_window": hp.nonconv_window,
        "seed": hp.offset_jitter_seed,
    }
    if sweep is not None:
        data["sweep"] = {
            "posture_step": sweep.posture_step,
            "orientation_counts": list(sweep.orientation_counts),
            "seed": sweep.seed,
        }
    return data


def hyperparams_from_dict(data: dict, skeleton: Skeleton) -> ErikHyperparams:
    data = data or {}
    w = data.get("weights", {})
    weights = ErrorWeights(
        orientation_weight=float(w.get("orientation", 1.0)),
        posture_weight=float(w.get("posture", 0.2)),
        threshold=float(w.get("threshold", 0.04)),
        aggravation=float(w.get("aggravation", 2.0)),
    )
    c = data.get("ccd", {})
    ccd = CcdConfig(
        max_iterations=int(c.get("max_iterations", 20)),
        precision=float(c.get("precision", 1e-3)),
        stall_precision=float(c.get("stall_precision", 1e-5)),
        round_decimals=int(c.get("round_decimals", 3)),
    )
    ext = data.get("extensions", {})
    seed = data.get("seed")
    return ErikHyperparams(
        skeleton=skeleton,
        weights=weights,
        max_erik_iterations=int(data.get("max_erik_iterations", 12)),
        ccd=ccd,
        disturbance=float(data.get("disturbance", math.pi / 90.0)),
        ext_symmetric_endpoint=bool(ext.get("symmetric_endpoint", True)),
        ext_avoid_edges=bool(ext.get("avoid_edges", True)),
        ext_nonconv_offset=bool(ext.get("nonconv_offset", True)),
        ext_nonconv_ccd=bool(ext.get("nonconv_ccd", True)),
        nonconv_window=int(data.get("nonconv_window", 4)),
        offset_jitter_seed=None if seed is None else int(seed),
    )


def sweep_from_dict(data: dict) -> SweepConfig:
    data = (data or {}).get("sweep", data or {})
    counts = data.get("orientation_counts", (12, 12, 5))
    return SweepConfig(
        posture_step=float(data.get("posture_step", math.pi / 4.0)),
        orientation_counts=tuple(int(c) for c in counts),
        seed=int(data.get("seed", 0)),
    )


def load_config(path) -> dict:
    with open(path) as fh:
        return yaml.safe_load(fh) or {}
