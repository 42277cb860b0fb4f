"""Blended-wing-body planform geometry, surface synthesis, and flight conditions.

The vehicle is parameterized by 9 planform scalars, all lengths expressed as
fractions of the centerline length C1 (the reference length, taken as 1):

* ``b1, b2, b3``  spanwise extents of the three trapezoidal segments
* ``c2, c3, c4``  chords at the three outboard stations (station 1 chord is 1)
* ``s1, s3``      inboard / outboard leading-edge sweep angles in degrees
* ``x3``          streamwise location of the leading edge at the outboard break

Flight conditions are (altitude [kft], Mach, centerline length [m], angle of
attack [deg]); the Reynolds number is derived from the standard atmosphere
with Sutherland viscosity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainError",
    "PARAM_NAMES",
    "ParamBox",
    "PlanformParams",
    "FlightCondition",
    "StationTable",
    "SurfacePointCloud",
    "CONDITION_RANGES",
    "planform_stations",
    "planform_area",
    "span_grid",
    "synthesize_surface",
    "lhs_sample",
    "sample_planforms",
    "sample_conditions",
    "atmosphere",
    "dynamic_viscosity",
    "derive_reynolds",
]

PARAM_NAMES = ("b1", "b2", "b3", "c2", "c3", "c4", "s1", "s3", "x3")

_PARAM_BOUNDS = {
    "b1": (0.10, 0.20),
    "b2": (0.05, 0.20),
    "b3": (0.35, 0.70),
    "c2": (0.55, 0.85),
    "c3": (0.18, 0.28),
    "c4": (0.06, 0.09),
    "s1": (40.0, 60.0),
    "s3": (20.0, 40.0),
    "x3": (0.50, 0.65),
}

# Sampling ranges for the flight-condition inputs; centerline length is
# stratified in log10 space.
CONDITION_RANGES = {
    "altitude_kft": (0.0, 40.0),
    "mach": (0.05, 0.5),
    "centerline_length": (0.1, 10.0),
    "alpha_deg": (-8.0, 16.0),
}

KFT_TO_M = 304.8  # exact

# Standard atmosphere (sea level to 40 kft) and Sutherland constants.
_T0 = 288.15          # K
_P0 = 101325.0        # Pa
_LAPSE = 0.0065       # K/m below the tropopause
_TROPOPAUSE_M = 11000.0
_R_AIR = 287.05       # J/(kg K)
_GAMMA = 1.4
_G0 = 9.80665         # m/s^2
_MU_REF = 1.716e-5    # Pa s
_T_MU_REF = 273.15    # K
_S_MU = 110.4         # K


class DomainError(ValueError):
    """An input lies outside its physical/valid domain."""


@dataclass(frozen=True)
class ParamBox:
    """Axis-aligned box of valid planform parameters."""

    lo: np.ndarray
    hi: np.ndarray
    names: tuple = PARAM_NAMES

    @staticmethod
    def default() -> "ParamBox":
        lo = np.array([_PARAM_BOUNDS[n][0] for n in PARAM_NAMES])
        hi = np.array([_PARAM_BOUNDS[n][1] for n in PARAM_NAMES])
        return ParamBox(lo=lo, hi=hi)

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (len(self.names),) or hi.shape != (len(self.names),):
            raise ValueError("bounds must match the parameter count")
        if not np.all(lo < hi):
            raise ValueError("lower bounds must be strictly below upper bounds")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def clip(self, arr: np.ndarray) -> np.ndarray:
        return np.clip(arr, self.lo, self.hi)

    def contains(self, arr: np.ndarray, tol: float = 0.0) -> bool:
        arr = np.asarray(arr, dtype=float)
        return bool(np.all(arr >= self.lo - tol) and np.all(arr <= self.hi + tol))

    def validate(self, arr: np.ndarray) -> None:
        """Raise :class:`DomainError` naming the first offending parameter."""
        arr = np.asarray(arr, dtype=float)
        for j, name in enumerate(self.names):
            v = arr[j]
            if not np.isfinite(v):
                raise DomainError(f"parameter {name} is not finite")
            if v < self.lo[j] or v > self.hi[j]:
                raise DomainError(
                    f"parameter {name}={v:g} outside [{self.lo[j]:g}, {self.hi[j]:g}]"
                )


@dataclass
class PlanformParams:
    """The 9 planform parameters, in centerline-length units / degrees."""

    b1: float
    b2: float
    b3: float
    c2: float
    c3: float
    c4: float
    s1: float
    s3: float
    x3: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @staticmethod
    def from_array(arr) -> "PlanformParams":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (9,):
            raise ValueError(f"expected 9 parameters, got shape {arr.shape}")
        return PlanformParams(**{n: float(arr[j]) for j, n in enumerate(PARAM_NAMES)})


@dataclass
class FlightCondition:
    """Sampled flight condition plus the derived Reynolds number."""

    altitude_kft: float
    mach: float
    centerline_length: float
    alpha_deg: float
    reynolds: float
    log10_reynolds: float

    @staticmethod
    def from_sample(altitude_kft, mach, centerline_length, alpha_deg) -> "FlightCondition":
        re = derive_reynolds(altitude_kft, mach, centerline_length)
        return FlightCondition(
            altitude_kft=float(altitude_kft),
            mach=float(mach),
            centerline_length=float(centerline_length),
            alpha_deg=float(alpha_deg),
            reynolds=re,
            log10_reynolds=math.log10(re),
        )


@dataclass
class StationTable:
    """Spanwise position, leading-edge x, and chord at the 4 planform stations."""

    y: np.ndarray
    x_le: np.ndarray
    chord: np.ndarray

    @property
    def half_span(self) -> float:
        return float(self.y[-1])


@dataclass
class SurfacePointCloud:
    """Surface points with outward unit normals and optional field channels."""

    points: np.ndarray                 # (N, 3)
    normals: np.ndarray                # (N, 3), unit
    cp: np.ndarray | None = None       # (N,)
    cfx: np.ndarray | None = None
    cfz: np.ndarray | None = None
    cfy: np.ndarray | None = None      # retained when present in files, unused downstream
    faces: np.ndarray | None = None    # (F, 3) vertex indices, optional topology

    def __len__(self) -> int:
        return self.points.shape[0]

    def validate(self) -> None:
        n = self.points.shape[0]
        if n < 3:
            raise ValueError("point cloud needs at least 3 points")
        if self.points.shape != (n, 3) or self.normals.shape != (n, 3):
            raise ValueError("points and normals must both be (N, 3)")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("normals must be unit length within 1e-6")
        for name in ("cp", "cfx", "cfz", "cfy"):
            ch = getattr(self, name)
            if ch is not None and ch.shape != (n,):
                raise ValueError(f"field channel {name} must have length {n}")


def planform_stations(p: PlanformParams, box: ParamBox | None = None) -> StationTable:
    """Station table of the half-planform.

    Station 1 is the centerline (y=0, chord 1, leading edge at x=0); station 2
    sits at y=b1 with the leading edge swept back by s1; station 3 is the
    outboard break with its leading edge pinned at x3; station 4 is the tip,
    swept back from the break by s3.
    """
    box = box or ParamBox.default()
    box.validate(p.to_array())
    y = np.array([0.0, p.b1, p.b1 + p.b2, p.b1 + p.b2 + p.b3])
    x_le = np.array([
        0.0,
        p.b1 * math.tan(math.radians(p.s1)),
        p.x3,
        p.x3 + p.b3 * math.tan(math.radians(p.s3)),
    ])
    chord = np.array([1.0, p.c2, p.c3, p.c4])
    return StationTable(y=y, x_le=x_le, chord=chord)


def planform_area(p: PlanformParams, box: ParamBox | None = None) -> float:
    """Projected planform area of the full vehicle (both half-wings)."""
    st = planform_stations(p, box)
    half = float(np.sum(0.5 * (st.chord[:-1] + st.chord[1:]) * np.diff(st.y)))
    return 2.0 * half


def span_grid(stations: StationTable, n_span: int):
    """Spanwise sample stations (y, x_le, chord) with all 4 breaks included.

    The n_span samples are distributed over the three segments proportionally
    to their widths (largest-remainder rounding), so chord/leading edge are
    piecewise-linear with the segment breaks among the sample points.
    """
    if n_span < 4:
        raise ValueError("n_span must be at least 4")
    widths = np.diff(stations.y)
    interior = n_span - 4
    ideal = interior * widths / widths.sum()
    counts = np.floor(ideal).astype(int)
    rem = ideal - counts
    for _ in range(interior - int(counts.sum())):
        k = int(np.argmax(rem))
        counts[k] += 1
        rem[k] = -1.0
    ys = [np.array([stations.y[0]])]
    for seg in range(3):
        seg_y = np.linspace(stations.y[seg], stations.y[seg + 1], counts[seg] + 2)
        ys.append(seg_y[1:])
    y = np.concatenate(ys)
    x_le = np.interp(y, stations.y, stations.x_le)
    chord = np.interp(y, stations.y, stations.chord)
    return y, x_le, chord


def _naca_thickness(xi: np.ndarray, thickness: float) -> np.ndarray:
    """Symmetric 4-digit half-thickness per unit chord (open trailing edge)."""
    xi = np.asarray(xi, dtype=float)
    return 5.0 * thickness * (
        0.2969 * np.sqrt(xi)
        - 0.1260 * xi
        - 0.3516 * xi**2
        + 0.2843 * xi**3
        - 0.1015 * xi**4
    )


def synthesize_surface(
    p: PlanformParams,
    n_chord: int,
    n_span: int,
    thickness: float = 0.12,
    full_span: bool = False,
    box: ParamBox | None = None,
) -> SurfacePointCloud:
    """Loft a symmetric-section surface between the planform stations.

    Chord and leading edge interpolate linearly in span; sections follow a
    symmetric 4-digit thickness law. Returns 2*n_chord*n_span points (upper
    then lower surface; doubled again when ``full_span`` mirrors y -> -y).
    Normals come from finite-difference cross products on the structured
    grid, unit length, oriented outward (positive z on the upper crest).
    """
    if n_chord < 4 or n_span < 4:
        raise ValueError("n_chord and n_span must be at least 4")
    st = planform_stations(p, box)
    if np.any(st.chord <= 0.0):
        raise DomainError("degenerate station: chord must be positive")
    y, x_le, chord = span_grid(st, n_span)

    # Cosine chordwise spacing clusters points at the leading/trailing edges.
    i = np.arange(n_chord)
    xi = 0.5 * (1.0 - np.cos(np.pi * i / (n_chord - 1)))
    zhat = _naca_thickness(xi, thickness)

    x = x_le[None, :] + xi[:, None] * chord[None, :]          # (n_chord, n_span)
    yy = np.broadcast_to(y[None, :], x.shape)
    parts = []
    norm_parts = []
    face_parts = []
    offset = 0
    for side in (+1.0, -1.0):
        z = side * zhat[:, None] * chord[None, :]
        grid = np.stack([x, yy, z], axis=-1)                  # (n_chord, n_span, 3)
        t_xi = np.gradient(grid, axis=0)
        t_y = np.gradient(grid, axis=1)
        nrm = np.cross(t_xi, t_y)
        # Orient outward: the crest column (max thickness) must point to +z on
        # the upper surface, -z on the lower. Points with z exactly 0 (shared
        # leading edge) inherit the upper-surface orientation by convention.
        crest = int(np.argmax(zhat))
        if np.median(nrm[crest, :, 2]) * side < 0:
            nrm = -nrm
        nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
        parts.append(grid.reshape(-1, 3))
        norm_parts.append(nrm.reshape(-1, 3))
        face_parts.append(_grid_faces(n_chord, n_span, offset))
        offset += n_chord * n_span
    points = np.concatenate(parts, axis=0)
    normals = np.concatenate(norm_parts, axis=0)
    faces = np.concatenate(face_parts, axis=0)

    if full_span:
        mirrored = points * np.array([1.0, -1.0, 1.0])
        mnormals = normals * np.array([1.0, -1.0, 1.0])
        mfaces = faces[:, ::-1] + points.shape[0]  # reversed winding keeps orientation
        points = np.concatenate([points, mirrored], axis=0)
        normals = np.concatenate([normals, mnormals], axis=0)
        faces = np.concatenate([faces, mfaces], axis=0)

    return SurfacePointCloud(points=points, normals=normals, faces=faces)


def _grid_faces(n_chord: int, n_span: int, offset: int) -> np.ndarray:
    """Triangulate a structured (n_chord, n_span) grid stored row-major."""
    ii, jj = np.meshgrid(np.arange(n_chord - 1), np.arange(n_span - 1), indexing="ij")
    a = ii * n_span + jj
    b = a + 1
    c = a + n_span
    d = c + 1
    tri1 = np.stack([a, c, b], axis=-1).reshape(-1, 3)
    tri2 = np.stack([b, c, d], axis=-1).reshape(-1, 3)
    return np.concatenate([tri1, tri2], axis=0) + offset


def lhs_sample(
    bounds,
    n: int,
    seed,
    log_axes: tuple = (),
) -> np.ndarray:
    """Latin hypercube sample of ``n`` points inside ``bounds``.

    ``bounds`` is a sequence of (lo, hi) pairs. Each dimension's n values land
    in distinct equal-width strata; dimensions listed in ``log_axes`` are
    stratified in log10 space. Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    bounds = [(float(lo), float(hi)) for lo, hi in bounds]
    rng = np.random.default_rng(seed)
    out = np.empty((n, len(bounds)))
    for d, (lo, hi) in enumerate(bounds):
        perm = rng.permutation(n)
        u = rng.random(n)
        unit = (perm + u) / n
        if d in log_axes:
            lo_l, hi_l = math.log10(lo), math.log10(hi)
            out[:, d] = 10.0 ** (lo_l + unit * (hi_l - lo_l))
        else:
            out[:, d] = lo + unit * (hi - lo)
    return out


def sample_planforms(n: int, seed, box: ParamBox | None = None) -> list:
    """n in-box planforms via Latin hypercube sampling."""
    box = box or ParamBox.default()
    arr = lhs_sample(list(zip(box.lo, box.hi)), n, seed)
    return [PlanformParams.from_array(arr[k]) for k in range(n)]


def sample_conditions(n: int, seed) -> list:
    """n flight conditions via LHS; centerline length stratified on a log scale."""
    names = list(CONDITION_RANGES)
    bounds = [CONDITION_RANGES[k] for k in names]
    arr = lhs_sample(bounds, n, seed, log_axes=(names.index("centerline_length"),))
    return [
        FlightCondition.from_sample(arr[k, 0], arr[k, 1], arr[k, 2], arr[k, 3])
        for k in range(n)
    ]


def atmosphere(altitude_m: float):
    """Temperature [K], pressure [Pa], density [kg/m^3] at a geometric altitude.

    Linear 6.5 K/km lapse to 11 km, isothermal above; valid through 40 kft.
    """
    h = float(altitude_m)
    if h < -100.0 or h > 40.5 * KFT_TO_M:
        raise DomainError(f"altitude {h:g} m outside the supported 0-40 kft band")
    if h <= _TROPOPAUSE_M:
        t = _T0 - _LAPSE * h
        pres = _P0 * (t / _T0) ** (_G0 / (_LAPSE * _R_AIR))
    else:
        t11 = _T0 - _LAPSE * _TROPOPAUSE_M
        p11 = _P0 * (t11 / _T0) ** (_G0 / (_LAPSE * _R_AIR))
        t = t11
        pres = p11 * math.exp(-_G0 * (h - _TROPOPAUSE_M) / (_R_AIR * t11))
    rho = pres / (_R_AIR * t)
    return t, pres, rho


def dynamic_viscosity(temperature_k: float) -> float:
    """Sutherland's law for air."""
    t = float(temperature_k)
    return _MU_REF * (t / _T_MU_REF) ** 1.5 * (_T_MU_REF + _S_MU) / (t + _S_MU)


def derive_reynolds(altitude_kft: float, mach: float, centerline_length: float) -> float:
    """Reynolds number based on the centerline length."""
    t, _, rho = atmosphere(float(altitude_kft) * KFT_TO_M)
    a = math.sqrt(_GAMMA * _R_AIR * t)
    v = float(mach) * a
    mu = dynamic_viscosity(t)
    return rho * v * float(centerline_length) / mu
