"""Shared numeric tolerances.

Every threshold used by the checks lives here so the CLI can expose
them uniformly as ``tol.<name>`` overrides.  Defaults are pinned; tests
rely on them.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    # zero finding / classification
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    dedup_tol: float = 1e-6
    match_tol: float = 1e-5
    eig_zero_rel: float = 1e-6
    third_tol: float = 1e-8
    # Lyapunov-ratio check
    delta_floor: float = 1e-4
    decay_scales: int = 4
    decay_drop: float = 1e-3
    annulus_r0: float = 0.5
    annulus_levels: int = 8
    annulus_min_samples: int = 64
    # certificates
    cert_residual_rtol: float = 1e-8
    asym_tol: float = 1e-10
    partition_tol: float = 1e-10
    limit_tol: float = 1e-3
    quad_order: int = 8
    # symplectic checks
    closed_tol: float = 1e-10
    liouville_tol: float = 1e-8
    consistency_tol: float = 1e-8
    j_square_tol: float = 1e-10


DEFAULT_TOL = Tolerances()

_FIELD_TYPES = {f.name: f.type for f in fields(Tolerances)}


def with_overrides(overrides: dict, base: Tolerances = DEFAULT_TOL) -> Tolerances:
    """Apply string-keyed overrides; unknown keys raise KeyError."""
    kw = {}
    for key, value in overrides.items():
        if key not in _FIELD_TYPES:
            raise KeyError(f"unknown tolerance {key!r}")
        kw[key] = int(value) if _FIELD_TYPES[key] == "int" else float(value)
    return replace(base, **kw)
