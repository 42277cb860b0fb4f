"""Synthetic aerodynamic oracle.

A deterministic closed-form stand-in for CFD labels: lifting-line style
integrated coefficients plus thin-airfoil / flat-plate surface field proxies.
Everything here is synthetic engineering convention, good for exercising the
surrogate/inverse pipeline, not for comparing against real aerodynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    FlightCondition,
    ParamBox,
    PlanformParams,
    SurfacePointCloud,
    planform_stations,
)

__all__ = ["OracleResult", "oracle_coefficients", "oracle_fields", "oracle_aero"]

# Flat-plate skin friction needs a local-Reynolds floor: the Schlichting form
# diverges at the leading edge. Slope factor clipped for the same reason.
_REX_FLOOR = 1.0e3
_SLOPE_CLIP = 2.0
_CP_CLIP = 2.0
_WETTED_RATIO = 2.0


@dataclass
class OracleResult:
    cl: float
    cd: float
    cm: float
    ld: float
    cloud: SurfacePointCloud | None = None


def _zero_lift_alpha_deg(p: PlanformParams) -> float:
    # camber proxy grows with the inboard chord fraction
    return -2.0 * p.c2


def oracle_coefficients(p: PlanformParams, fc: FlightCondition, box: ParamBox | None = None):
    """(CL, CD, CM, L/D) from lifting-line + Schlichting flat-plate estimates."""
    st = planform_stations(p, box)
    span = 2.0 * st.half_span
    panel_area = 0.5 * (st.chord[:-1] + st.chord[1:]) * np.diff(st.y)
    area = 2.0 * float(panel_area.sum())
    ar = span * span / area

    alpha0 = _zero_lift_alpha_deg(p)
    cl = 2.0 * math.pi * ar / (ar + 2.0) * math.radians(fc.alpha_deg - alpha0)

    log_re = fc.log10_reynolds
    cf = 0.455 / log_re**2.58
    cd0 = _WETTED_RATIO * cf
    e = 0.85 - 0.05 * (math.tan(math.radians(p.s1)) - 1.0) ** 2
    cd = cd0 + cl * cl / (math.pi * e * ar)

    # pitching moment about the nose: lift acting at an area-weighted
    # quarter-chord arm (synthetic, only used to populate case tables)
    x_le_mid = 0.5 * (st.x_le[:-1] + st.x_le[1:])
    c_mid = 0.5 * (st.chord[:-1] + st.chord[1:])
    x_arm = float(np.sum(panel_area * (x_le_mid + 0.25 * c_mid)) / panel_area.sum())
    cm = -cl * x_arm

    return cl, cd, cm, cl / cd


def _naca_slope(xi: np.ndarray, thickness: float) -> np.ndarray:
    xi = np.maximum(xi, 1e-3)
    return 5.0 * thickness * (
        0.5 * 0.2969 / np.sqrt(xi)
        - 0.1260
        - 2.0 * 0.3516 * xi
        + 3.0 * 0.2843 * xi**2
        - 4.0 * 0.1015 * xi**3
    )


def oracle_fields(
    p: PlanformParams,
    fc: FlightCondition,
    cloud: SurfacePointCloud,
    thickness: float = 0.12,
    box: ParamBox | None = None,
) -> SurfacePointCloud:
    """Fill cp/cfx/cfz on ``cloud`` (points must lie on the planform of ``p``)."""
    st = planform_stations(p, box)
    pts = cloud.points
    y_abs = np.abs(pts[:, 1])
    x_le = np.interp(y_abs, st.y, st.x_le)
    chord = np.interp(y_abs, st.y, st.chord)
    xi = np.clip((pts[:, 0] - x_le) / chord, 0.0, 1.0)
    side = np.where(pts[:, 2] >= 0.0, 1.0, -1.0)

    eff = math.radians(fc.alpha_deg) + math.radians(-_zero_lift_alpha_deg(p))
    with np.errstate(divide="ignore"):
        shape = np.sqrt((1.0 - xi) / np.maximum(xi, 1e-12))
    cp = np.clip(-4.0 * eff * shape, -_CP_CLIP, _CP_CLIP) * side

    re_x = np.maximum(fc.reynolds * xi * chord, _REX_FLOOR)
    cfx = 0.0592 * re_x**-0.2
    slope = np.clip(side * _naca_slope(xi, thickness), -_SLOPE_CLIP, _SLOPE_CLIP)
    cfz = cfx * slope

    cloud.cp = cp
    cloud.cfx = cfx
    cloud.cfz = cfz
    return cloud


def oracle_aero(
    p: PlanformParams,
    fc: FlightCondition,
    cloud: SurfacePointCloud | None = None,
    thickness: float = 0.12,
    box: ParamBox | None = None,
) -> OracleResult:
    """Integrated coefficients plus (optionally) surface fields on a cloud."""
    cl, cd, cm, ld = oracle_coefficients(p, fc, box)
    if cloud is not None:
        cloud = oracle_fields(p, fc, cloud, thickness=thickness, box=box)
    return OracleResult(cl=cl, cd=cd, cm=cm, ld=ld, cloud=cloud)
