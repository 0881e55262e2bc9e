"""Run configuration: strict JSON schema, validated before any compute."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .inverse import WATT, CameraModel, ChainConfig
from .materials import KINDS, MaterialCoefficients, MaterialField
from .mesh import GridSpec
from .operator import PRECISIONS, STRATEGIES
from .solver import FACES, PcgConfig, gaussian_beam, uniform_flux

BUNDLED = ("laminate", "corrosion")


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridCfg(_Strict):
    bounds: tuple[tuple[float, float, float], tuple[float, float, float]]
    divisions: tuple[int, int, int]

    def spec(self) -> GridSpec:
        return GridSpec(self.bounds[0], self.bounds[1], self.divisions)


class MaterialCfg(_Strict):
    kind: Literal[KINDS]  # type: ignore[valid-type]
    params: dict[str, float] = Field(default_factory=dict)
    rhoC: tuple[float, float] = MaterialCoefficients().rhoC
    k: tuple[float, float] = MaterialCoefficients().k

    def field(self) -> MaterialField:
        return MaterialField(self.kind, dict(self.params), MaterialCoefficients(self.rhoC, self.k))


class SolverCfg(_Strict):
    strategy: Literal[STRATEGIES] = "coalesced"  # type: ignore[valid-type]
    tol: float = Field(1e-6, gt=0)
    i_max: Optional[int] = Field(None, ge=1)
    precision: Literal[tuple(PRECISIONS)] = "double"  # type: ignore[valid-type]
    partitions: Literal[1, 2] = 1
    split_fraction: float = Field(0.5, gt=0, lt=1)

    def pcg(self) -> PcgConfig:
        return PcgConfig(tol=self.tol, i_max=self.i_max)


class TimeCfg(_Strict):
    dt: float = Field(0.01, gt=0)
    theta: float = Field(0.5, ge=0, le=1)
    n_steps: int = Field(50, ge=1)


class LoadCfg(_Strict):
    kind: Literal["uniform", "gaussian_beam"] = "uniform"
    face: Literal[tuple(FACES)] = "zmin"  # type: ignore[valid-type]
    value: float = 1.0
    power_watts: float = 10.0
    sigma: float = Field(2.0, gt=0)
    center: Optional[tuple[float, float]] = None

    def flux(self, spec: GridSpec):
        if self.kind == "uniform":
            return uniform_flux(self.value)
        lo, hi = spec.bounds_min, spec.bounds_max
        center = self.center or (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]))
        return gaussian_beam(self.power_watts * WATT, self.sigma, center)


class CameraCfg(_Strict):
    pitch: float = Field(0.5, gt=0)
    sigma: float = Field(0.1, ge=0)
    quantum: float = Field(0.1, gt=0)

    def model(self, seed: int = 0) -> CameraModel:
        return CameraModel(self.pitch, self.sigma, self.quantum, seed)


class ChainCfg(_Strict):
    n_burn: int = Field(200, ge=0)
    n_keep: int = Field(2500, ge=1)
    proposal_sigma: float = Field(0.1, gt=0)

    def model(self) -> ChainConfig:
        return ChainConfig(self.n_burn, self.n_keep, self.proposal_sigma)


class InverseCfg(_Strict):
    theta_true: float = 3.175
    prior: Optional[tuple[float, float]] = None    # None: [0, plate thickness]
    likelihood: Literal["interval", "gaussian"] = "interval"
    camera: CameraCfg = CameraCfg()
    chain: ChainCfg = ChainCfg()
    data: Optional[str] = None                     # CSV image; synthesised when absent

    @field_validator("prior")
    @classmethod
    def _prior_order(cls, v):
        if v is not None and not v[1] > v[0]:
            raise ValueError("prior must be [lo, hi] with lo < hi")
        return v


class BenchCfg(_Strict):
    sizes: list[tuple[int, int, int]] = Field(default_factory=lambda: [(8, 8, 8), (16, 16, 16), (24, 24, 24)])
    strategies: list[Literal[STRATEGIES]] = list(STRATEGIES)  # type: ignore[valid-type]
    partitions: list[Literal[1, 2]] = [1]
    precision: Literal[tuple(PRECISIONS)] = "double"  # type: ignore[valid-type]
    n_steps: Optional[int] = Field(None, ge=1)     # None: time.n_steps


class OutputCfg(_Strict):
    dir: str = "out"


class RunConfig(_Strict):
    grid: GridCfg
    material: MaterialCfg
    solver: SolverCfg = SolverCfg()
    time: TimeCfg = TimeCfg()
    load: LoadCfg = LoadCfg()
    inverse: Optional[InverseCfg] = None
    bench: BenchCfg = BenchCfg()
    output: OutputCfg = OutputCfg()

    @model_validator(mode="after")
    def _check(self):
        # surface geometry errors (bounds, divisions) at parse time
        spec = self.grid.spec()
        if self.solver.partitions == 2 and spec.divisions[2] < 3:
            raise ValueError("two partitions need at least 3 z divisions")
        if self.inverse is not None and self.material.kind != "corrosion":
            raise ValueError("the inverse section needs material.kind == 'corrosion'")
        return self

    def prior_bounds(self) -> tuple[float, float]:
        spec = self.grid.spec()
        if self.inverse and self.inverse.prior:
            return tuple(self.inverse.prior)
        return (0.0, spec.bounds_max[2] - spec.bounds_min[2])


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    """Load a JSON config file, or a bundled one by name (``laminate``, ``corrosion``)."""
    name = str(path)
    if name in BUNDLED:
        text = resources.files("matfree.configs").joinpath(f"{name}.json").read_text(encoding="utf-8")
    else:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {name}: {exc}") from exc
    return parse_config(data)
