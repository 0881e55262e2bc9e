"""Corrosion-depth inversion from synthetic thermal-camera images.

The forward model heats the front face (z = bounds_min) with a Gaussian beam
for ``n_steps * dt`` seconds; the camera sees that face. Depth enters only
through which vertices are corroded, so the likelihood is piecewise constant
in depth and forward solves are cached on the corroded-vertex mask.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import log_ndtr

from .errors import LikelihoodError, NonConvergenceError, BreakdownError
from .materials import MaterialField, vertex_fraction
from .mesh import GridSpec
from .operator import SystemOperator
from .solver import FACES, PcgConfig, TransientProblem, boundary_load, gaussian_beam, simulate

log = logging.getLogger(__name__)

WATT = 1e9  # g mm^2 / s^3, the power unit of the g-mm-s system
SUBSAMPLES = 4


@dataclass(frozen=True)
class CameraModel:
    pitch: float = 0.5        # mm
    sigma: float = 0.1        # C
    quantum: float = 0.1      # C
    seed: int = 0

    def __post_init__(self):
        if not self.pitch > 0:
            raise ValueError("pixel pitch must be positive")
        if self.sigma < 0 or not self.quantum > 0:
            raise ValueError("camera noise sigma must be >= 0 and quantum > 0")

    def pixel_grid(self, spec: GridSpec):
        """Pixel edges along x and y; pixels tile the face, the last column/row
        is dropped when the extent is not a whole number of pitches."""
        edges = []
        for a in (0, 1):
            lo, hi = spec.bounds_min[a], spec.bounds_max[a]
            n = int(math.floor((hi - lo) / self.pitch + 1e-9))
            if n < 1:
                raise ValueError(f"pixel pitch {self.pitch} larger than the face ({hi - lo} mm)")
            edges.append(lo + self.pitch * np.arange(n + 1))
        return edges


def face_grid(spec: GridSpec, values, face: str = "zmin") -> np.ndarray:
    """Vertex values on a z face as an (ny, nx) array."""
    axis, side = FACES[face]
    if axis != 2:
        raise ValueError("camera faces must be normal to z")
    nx, ny, nz = spec.vertex_dims
    k = 0 if side == 0 else nz - 1
    return np.asarray(values).reshape(nz, ny, nx)[k]


def render_measurement(surface, spec: GridSpec, camera: CameraModel) -> np.ndarray:
    """Pixel means of the bilinearly interpolated face field, (n_py, n_px).

    ``surface`` is the (ny, nx) vertex grid of the measured face.
    """
    surface = np.asarray(surface, dtype=float)
    nx, ny, _ = spec.vertex_dims
    if surface.shape != (ny, nx):
        raise ValueError(f"surface shape {surface.shape} does not match face grid {(ny, nx)}")
    xs = np.linspace(spec.bounds_min[0], spec.bounds_max[0], nx)
    ys = np.linspace(spec.bounds_min[1], spec.bounds_max[1], ny)
    interp = RegularGridInterpolator((ys, xs), surface, method="linear")
    ex, ey = camera.pixel_grid(spec)
    frac = (np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES * camera.pitch
    sx = (ex[:-1, None] + frac).ravel()
    sy = (ey[:-1, None] + frac).ravel()
    # points can overshoot the last vertex by rounding; clamp onto the face
    sx = np.clip(sx, xs[0], xs[-1])
    sy = np.clip(sy, ys[0], ys[-1])
    YY, XX = np.meshgrid(sy, sx, indexing="ij")
    fine = interp(np.stack([YY, XX], axis=-1))
    npy, npx = len(ey) - 1, len(ex) - 1
    return fine.reshape(npy, SUBSAMPLES, npx, SUBSAMPLES).mean(axis=(1, 3))


def corrupt(image, camera: CameraModel, seed: int | None = None) -> np.ndarray:
    """Add i.i.d. Gaussian noise and round to the camera's quantum."""
    rng = np.random.default_rng(camera.seed if seed is None else seed)
    noisy = np.asarray(image, dtype=float) + camera.sigma * rng.standard_normal(np.shape(image))
    return np.round(noisy / camera.quantum) * camera.quantum


def interval_loglik(data, mu, sigma: float, quantum: float) -> float:
    """Sum over pixels of ``log P(round(mu + noise) = d)``."""
    if not sigma > 0:
        raise ValueError("the rounding likelihood needs sigma > 0")
    d = np.asarray(data, dtype=float)
    mu = np.asarray(mu, dtype=float)
    a = (d - 0.5 * quantum - mu) / sigma
    b = (d + 0.5 * quantum - mu) / sigma
    # Phi(b) - Phi(a) == Phi(-a) - Phi(-b); use whichever keeps both in the lower tail
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    lhi, llo = log_ndtr(hi), log_ndtr(lo)
    with np.errstate(divide="ignore"):
        terms = lhi + np.log1p(-np.exp(llo - lhi))
    return float(np.sum(terms))


def gaussian_loglik(data, mu, sigma: float) -> float:
    r = (np.asarray(data, dtype=float) - np.asarray(mu, dtype=float)) / sigma
    return float(-0.5 * np.sum(r * r) - r.size * math.log(sigma * math.sqrt(2 * math.pi)))


@dataclass
class ForwardModel:
    """Heated-plate simulation as a function of corrosion depth.

    ``power`` is in internal units (``WATT`` per watt).
    """
    spec: GridSpec
    field: MaterialField
    camera: CameraModel
    power: float = 10.0 * WATT
    beam_sigma: float = 2.0
    beam_center: tuple[float, float] | None = None
    dt: float = 0.1
    n_steps: int = 100
    theta: float = 0.5
    strategy: str = "flexible"
    pcg: PcgConfig = field(default_factory=PcgConfig)
    cache_size: int = 256

    def __post_init__(self):
        if self.field.kind != "corrosion":
            raise ValueError("the forward model needs a corrosion material field")
        lo, hi = self.spec.bounds_min, self.spec.bounds_max
        center = self.beam_center or (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]))
        self._F = boundary_load(self.spec, gaussian_beam(self.power, self.beam_sigma, center),
                                self.dt, "zmin")
        self._cache: OrderedDict = OrderedDict()
        self.solves = 0

    @property
    def plate(self) -> float:
        return self.spec.bounds_max[2] - self.spec.bounds_min[2]

    def surface(self, depth: float) -> np.ndarray:
        fld = self.field.with_params(depth=float(depth))
        vf = vertex_fraction(fld, self.spec)
        key = hashlib.sha1(np.packbits(vf > 0.5).tobytes()).hexdigest()
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        op_A = SystemOperator(self.spec, fld, self.theta, self.dt, "A", self.strategy,
                              vertex_fraction=vf)
        problem = TransientProblem(op_A, op_A.with_mode("L"), self._F, 0.0, self.n_steps,
                                   self.dt, self.theta)
        res = simulate(problem, self.pcg)
        self.solves += 1
        surf = face_grid(self.spec, res.final, "zmin").copy()
        self._cache[key] = surf
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return surf

    def image(self, depth: float) -> np.ndarray:
        return render_measurement(self.surface(depth), self.spec, self.camera)


def make_loglik(model: ForwardModel, data, likelihood: str = "interval"):
    """Log-likelihood of depth given data; solver failures become LikelihoodError."""
    cam = model.camera
    if likelihood not in ("interval", "gaussian"):
        raise ValueError(f"unknown likelihood {likelihood!r}")

    def loglik(depth):
        try:
            mu = model.image(depth)
        except (NonConvergenceError, BreakdownError) as exc:
            raise LikelihoodError(f"forward solve failed at depth {depth:.4f}: {exc}") from exc
        if mu.shape != np.shape(data):
            raise ValueError(f"data shape {np.shape(data)} does not match image {mu.shape}")
        if likelihood == "interval":
            return interval_loglik(data, mu, cam.sigma, cam.quantum)
        return gaussian_loglik(data, mu, cam.sigma)

    return loglik


# ---------------------------------------------------------------------------
# sampler

@dataclass(frozen=True)
class ChainConfig:
    n_burn: int = 200
    n_keep: int = 2500
    proposal_sigma: float = 0.1
    stall_window: int = 200

    def __post_init__(self):
        if self.n_burn < 0 or self.n_keep < 1:
            raise ValueError("need n_burn >= 0 and n_keep >= 1")
        if not self.proposal_sigma > 0:
            raise ValueError("proposal_sigma must be positive")


@dataclass
class Chain:
    theta: np.ndarray       # every state, burn-in included (index 0 is the start)
    loglik: np.ndarray
    accepted: np.ndarray    # per proposal; accepted[i] produced theta[i + 1]
    n_burn: int
    n_keep: int
    proposal_sigma: float
    bounds: tuple[float, float]
    failures: int = 0

    @property
    def samples(self) -> np.ndarray:
        return self.theta[1 + self.n_burn:]

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def std(self) -> float:
        return float(np.std(self.samples, ddof=1)) if self.n_keep > 1 else 0.0

    @property
    def acceptance_rate(self) -> float:
        """Fraction of post-burn-in proposals accepted."""
        return float(np.mean(self.accepted[self.n_burn:]))

    def summary(self) -> dict:
        return {"mean": self.mean, "std": self.std, "acceptance_rate": self.acceptance_rate,
                "overall_acceptance_rate": float(np.mean(self.accepted)),
                "n_burn": self.n_burn, "n_keep": self.n_keep,
                "proposal_sigma": self.proposal_sigma, "bounds": list(self.bounds),
                "failed_likelihoods": self.failures}

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "theta", "loglik", "accepted"])
            w.writerow([0, repr(float(self.theta[0])), repr(float(self.loglik[0])), 1])
            for i in range(len(self.accepted)):
                w.writerow([i + 1, repr(float(self.theta[i + 1])), repr(float(self.loglik[i + 1])),
                            int(self.accepted[i])])

    def write_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2) + "\n", encoding="utf-8")


def reflect(x: float, lo: float, hi: float) -> float:
    """Fold ``x`` back into ``[lo, hi]`` by mirror reflection at the bounds."""
    w = hi - lo
    y = math.fmod(x - lo, 2 * w)
    if y < 0:
        y += 2 * w
    return lo + (y if y <= w else 2 * w - y)


def metropolis_hastings(loglik, bounds, cfg: ChainConfig | None = None, seed: int = 0) -> Chain:
    """Random-walk Metropolis over one parameter with a uniform prior on ``bounds``.

    Reflection keeps the proposal symmetric, so the acceptance test only
    needs the likelihood ratio.
    """
    cfg = cfg or ChainConfig()
    lo, hi = map(float, bounds)
    if not hi > lo:
        raise ValueError("prior bounds must satisfy lo < hi")
    rng = np.random.default_rng(seed)
    total = cfg.n_burn + cfg.n_keep
    theta = np.empty(total + 1)
    ll = np.empty(total + 1)
    accepted = np.zeros(total, dtype=bool)
    cur = 0.5 * (lo + hi)
    cur_ll = loglik(cur)
    theta[0], ll[0] = cur, cur_ll
    run, failures = 0, 0
    for i in range(total):
        prop = reflect(cur + cfg.proposal_sigma * rng.standard_normal(), lo, hi)
        log_u = math.log(rng.random() or 5e-324)
        try:
            prop_ll = loglik(prop)
        except LikelihoodError as exc:
            failures += 1
            log.warning("iteration %d: %s; proposal rejected", i, exc)
            prop_ll = -math.inf
        if prop_ll - cur_ll >= 0 or log_u < prop_ll - cur_ll:
            cur, cur_ll = prop, prop_ll
            accepted[i] = True
            run = 0
        else:
            run += 1
            if run == cfg.stall_window:
                log.warning("chain stalled: %d consecutive rejections at theta=%.4f "
                            "(loglik %.3f, last proposal %.4f with loglik %.3f, sigma_prop %.3g)",
                            run, cur, cur_ll, prop, prop_ll, cfg.proposal_sigma)
        theta[i + 1], ll[i + 1] = cur, cur_ll
    return Chain(theta, ll, accepted, cfg.n_burn, cfg.n_keep, cfg.proposal_sigma, (lo, hi), failures)


def save_image(path, image) -> None:
    np.savetxt(path, np.asarray(image), delimiter=",", fmt="%.17g")


def load_image(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
