"""Synthetic case generation and the condition-vector conventions.

A case couples one planform with one flight condition and its oracle labels.
Two conditioning layouts are used downstream and kept explicit here:

* field-surrogate conditioning (12 entries, no altitude):
  [log10_Re, mach, alpha_deg, b1, b2, b3, c2, c3, c4, s1, s3, x3]
* diffusion conditioning (5 entries, altitude included):
  [altitude_kft, log10_Re, mach, alpha_deg, ld_target]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    FlightCondition,
    ParamBox,
    PlanformParams,
    SurfacePointCloud,
    sample_conditions,
    sample_planforms,
    synthesize_surface,
)
from .oracle import oracle_aero

__all__ = [
    "AeroCase",
    "FILM_COND_NAMES",
    "DIFFUSION_COND_NAMES",
    "film_condition_vector",
    "diffusion_condition_vector",
    "generate_cases",
]

FILM_COND_NAMES = (
    "log10_reynolds", "mach", "alpha_deg",
    "b1", "b2", "b3", "c2", "c3", "c4", "s1", "s3", "x3",
)

DIFFUSION_COND_NAMES = ("altitude_kft", "log10_reynolds", "mach", "alpha_deg", "ld_target")


@dataclass
class AeroCase:
    case_id: str
    params: PlanformParams
    condition: FlightCondition
    cl: float
    cd: float
    cm: float
    ld: float
    cloud: SurfacePointCloud | None = None
    field_file: str | None = None
    in_box: bool = True


def film_condition_vector(case: AeroCase) -> np.ndarray:
    fc = case.condition
    return np.concatenate([
        [fc.log10_reynolds, fc.mach, fc.alpha_deg],
        case.params.to_array(),
    ])


def diffusion_condition_vector(case: AeroCase, ld_target: float | None = None) -> np.ndarray:
    fc = case.condition
    target = case.ld if ld_target is None else float(ld_target)
    return np.array([fc.altitude_kft, fc.log10_reynolds, fc.mach, fc.alpha_deg, target])


def generate_cases(
    n: int,
    seed: int,
    with_fields: bool = False,
    n_chord: int = 12,
    n_span: int = 12,
    prefix: str = "case",
    box: ParamBox | None = None,
) -> list:
    """n LHS-sampled cases labeled by the oracle.

    Planforms and flight conditions come from independent LHS draws; surface
    clouds with cp/cfx/cfz are attached when ``with_fields``.
    """
    box = box or ParamBox.default()
    planforms = sample_planforms(n, np.random.SeedSequence([seed, 0]), box)
    conditions = sample_conditions(n, np.random.SeedSequence([seed, 1]))
    cases = []
    for k in range(n):
        p, fc = planforms[k], conditions[k]
        cloud = synthesize_surface(p, n_chord, n_span, box=box) if with_fields else None
        res = oracle_aero(p, fc, cloud=cloud, box=box)
        cases.append(AeroCase(
            case_id=f"{prefix}{k:05d}",
            params=p,
            condition=fc,
            cl=res.cl, cd=res.cd, cm=res.cm, ld=res.ld,
            cloud=res.cloud,
        ))
    return cases
