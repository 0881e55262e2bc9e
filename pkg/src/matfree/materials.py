"""Element-constant material coefficients from a spatial parameterisation.

Every field kind reduces to a per-vertex fraction of the *altered* material
in [0, 1]. An element's fraction is the mean over its four vertices and its
coefficients are the linear blend ``base + frac * (altered - base)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import GridSpec, element_vertex_table, element_vertices, vertex_positions

KINDS = ("two_layer", "smoothed_layer", "functional", "corrosion")
REQUIRED = {"two_layer": ("z_threshold",), "smoothed_layer": ("z_center", "width"),
            "functional": (), "corrosion": ("depth",)}

# Base material first, altered second: mild steel and its oxide.
STEEL_OXIDE_RHOC = (3.724e6, 1.65e6)
STEEL_OXIDE_K = (4.9e8, 4e6)


@dataclass(frozen=True)
class MaterialCoefficients:
    rhoC: tuple[float, float] = STEEL_OXIDE_RHOC
    k: tuple[float, float] = STEEL_OXIDE_K

    def __post_init__(self):
        if len(self.rhoC) != 2 or len(self.k) != 2:
            raise ValueError("need (base, altered) pairs for rhoC and k")
        if min(self.rhoC) <= 0 or min(self.k) <= 0:
            raise ValueError("material coefficients must be positive")


@dataclass(frozen=True)
class MaterialField:
    kind: str
    params: dict = field(default_factory=dict)
    coefficients: MaterialCoefficients = MaterialCoefficients()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown material kind {self.kind!r}; expected one of {KINDS}")
        missing = [k for k in REQUIRED[self.kind] if k not in self.params]
        if missing:
            raise ValueError(f"{self.kind} material needs parameter(s) {', '.join(missing)}")

    def with_params(self, **params) -> "MaterialField":
        return MaterialField(self.kind, {**self.params, **params}, self.coefficients)


def corrosion_indicator(theta, position, plate: float, half_height: float):
    """Whether points lie inside the parabolic corrosion region.

    ``position`` is plate-local: y measured from the parabola axis, z from
    the heated (front) face, so the depth from the rear face is ``plate - z``.
    Works on a single point (3,) or an array (..., 3).
    """
    p = np.asarray(position, dtype=float)
    y, z = p[..., 1], p[..., 2]
    depth = plate - z
    if theta <= 0:
        return np.zeros(np.shape(y), dtype=bool) if np.ndim(y) else False
    inside = (np.abs(y) <= half_height) & (depth <= theta * (1.0 - (y / half_height) ** 2))
    return inside if np.ndim(inside) else bool(inside)


def _corrosion_geometry(params: dict, spec: GridSpec):
    lo, hi = spec.bounds_min, spec.bounds_max
    plate = hi[2] - lo[2]
    half_height = params.get("half_height") or 0.5 * (hi[1] - lo[1])
    y_center = params.get("y_center", 0.5 * (hi[1] + lo[1]))
    return plate, half_height, y_center


def vertex_fraction(fld: MaterialField, spec: GridSpec, positions=None) -> np.ndarray:
    """Altered-material fraction at each vertex (or at given positions)."""
    pos = vertex_positions(spec) if positions is None else np.asarray(positions, dtype=float)
    x, y, z = pos[..., 0], pos[..., 1], pos[..., 2]
    p = fld.params
    if fld.kind == "two_layer":
        return (z > p["z_threshold"]).astype(float)
    if fld.kind == "smoothed_layer":
        lo = p["z_center"] - 0.5 * p["width"]
        return np.clip((z - lo) / p["width"], 0.0, 1.0)
    if fld.kind == "functional":
        val = x**2 - 0.2 * y**2 + 10.0 * z
        # normalise over the whole domain, not over the points asked for
        allp = vertex_positions(spec)
        ref = allp[:, 0] ** 2 - 0.2 * allp[:, 1] ** 2 + 10.0 * allp[:, 2]
        vmin, vmax = ref.min(), ref.max()
        return np.clip((val - vmin) / (vmax - vmin), 0.0, 1.0)
    # corrosion
    theta = p["depth"]
    plate, half_height, y_center = _corrosion_geometry(p, spec)
    if not 0 <= theta <= plate:
        raise ValueError(f"corrosion depth {theta} outside [0, {plate}]")
    local = np.stack([x, y - y_center, z - spec.bounds_min[2]], axis=-1)
    return corrosion_indicator(theta, local, plate, half_height).astype(float)


def blend(fld: MaterialField, frac):
    c = fld.coefficients
    rhoC = c.rhoC[0] + frac * (c.rhoC[1] - c.rhoC[0])
    k = c.k[0] + frac * (c.k[1] - c.k[0])
    return rhoC, k


def element_coefficients(fld: MaterialField, spec: GridSpec, e: int):
    verts = element_vertices(spec, e)
    frac = vertex_fraction(fld, spec)[verts].mean()
    rhoC, k = blend(fld, frac)
    return float(rhoC), float(k)


def element_coefficients_all(fld: MaterialField, spec: GridSpec, vfrac=None):
    """(rhoC, k) arrays over all elements in element order."""
    if vfrac is None:
        vfrac = vertex_fraction(fld, spec)
    ev = element_vertex_table(spec)
    frac = vfrac[ev].mean(axis=1)
    return blend(fld, frac)
