"""Scalar diffusions: model catalog, sampling schemes, Euler-Maruyama, invariant laws.

Models are ``dX = S(X) dt + sigma(X) dW`` with vectorized ``S`` and ``sigma``.
Observation schemes follow the high-frequency regime: horizon ``t_n -> inf``
while ``n * Delta_n**2 -> 0``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid, trapezoid

from .randomness import standard_normal, uniform

LAW_RESOLUTION = 2**14
DEFAULT_SUBSTEPS = 10

# observation intervals simulated per noise block
_BLOCK = 512


class SchemeError(ValueError):
    pass


class TrajectoryDiverged(RuntimeError):
    def __init__(self, step, path=None):
        self.step = step
        self.path = path
        where = f" (path {path})" if path is not None else ""
        super().__init__(f"trajectory diverged at step {step}{where}")


class NotPositiveRecurrent(ValueError):
    pass


# models --------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionModel:
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    name: str
    params: dict = field(default_factory=dict)
    lipschitz_hint: float | None = None
    domain: tuple[float, float] | None = None

    def shifted(self, shift: float) -> "DiffusionModel":
        """Same model with drift ``S(x) + shift``."""
        if shift == 0:
            return self
        drift = self.drift
        params = dict(self.params, drift_shift=self.params.get("drift_shift", 0.0) + shift)
        domain = None
        if self.domain is not None:
            # the mean moves by shift / reversion rate; widen generously
            lo, hi = self.domain
            domain = (lo - 10 * abs(shift), hi + 10 * abs(shift))
        return DiffusionModel(lambda x: drift(x) + shift, self.diffusion, self.name, params,
                              self.lipschitz_hint, domain)


def _constant(value):
    return lambda x: np.full(np.shape(x), float(value))


def ou_model(theta: float = 1.0, sigma: float = 1.0) -> DiffusionModel:
    """Ornstein-Uhlenbeck: ``S(x) = -theta x``, constant ``sigma``."""
    if theta <= 0 or sigma <= 0:
        raise ValueError("OU needs theta > 0 and sigma > 0")
    sd = sigma / np.sqrt(2 * theta)
    return DiffusionModel(lambda x: -theta * np.asarray(x, dtype=float), _constant(sigma), "ou",
                          {"theta": theta, "sigma": sigma}, max(theta, 1.0), (-14 * sd, 14 * sd))


def tanh_model(theta: float = 1.0, a: float = 0.5, sigma: float = 1.0) -> DiffusionModel:
    """``S(x) = -theta x + a tanh(x)``; ergodic for ``theta > 0``."""
    if theta <= 0 or sigma <= 0:
        raise ValueError("tanh model needs theta > 0 and sigma > 0")
    half = 14 * sigma / np.sqrt(2 * theta) + abs(a) / theta
    return DiffusionModel(lambda x: -theta * np.asarray(x, dtype=float) + a * np.tanh(x),
                          _constant(sigma), "tanh", {"theta": theta, "a": a, "sigma": sigma},
                          theta + abs(a), (-half, half))


CATALOG = {"ou": ou_model, "tanh": tanh_model}


def diffusion_model(name: str, **params) -> DiffusionModel:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown diffusion model {name!r}; known: {sorted(CATALOG)}") from None
    return factory(**params)


# sampling schemes ----------------------------------------------------------

@dataclass(frozen=True)
class SamplingScheme:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise SchemeError("a scheme needs at least two time points")
        if t[0] != 0.0 or not np.all(np.diff(t) > 0):
            raise SchemeError("times must start at 0 and be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def n(self) -> int:
        return self.times.size - 1

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def delta_max(self) -> float:
        return float(self.spacings.max())

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def make_scheme(n: int, beta: float = 2 / 3, c: float = 1.0) -> SamplingScheme:
    """Uniform scheme with spacing ``c * n**-beta``.

    Horizon ``c n^(1-beta)`` grows and ``n Delta^2 = c^2 n^(1-2 beta)`` shrinks
    exactly when ``1/2 < beta < 1``.
    """
    if not 0.5 < beta < 1:
        raise SchemeError("scheme violates high-frequency conditions: need 1/2 < beta < 1")
    if c <= 0 or n < 1:
        raise SchemeError("need c > 0 and n >= 1")
    delta = c * float(n) ** (-beta)
    return SamplingScheme(np.arange(n + 1) * delta)


@dataclass(frozen=True)
class DiscreteSample:
    scheme: SamplingScheme
    states: np.ndarray
    brownian_increments: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.states, dtype=float)
        if x.shape != (self.scheme.n + 1,):
            raise ValueError("states must have one entry per scheme time")
        if not np.all(np.isfinite(x)):
            raise ValueError("states must be finite")
        object.__setattr__(self, "states", x)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "X"])
            for t, x in zip(self.scheme.times, self.states):
                writer.writerow([f"{t:.17g}", f"{x:.17g}"])


# simulation ----------------------------------------------------------------

@dataclass(frozen=True)
class BatchTrajectories:
    states: np.ndarray
    diverged_at: np.ndarray
    brownian_increments: np.ndarray | None = None


def euler_maruyama_batch(model: DiffusionModel, scheme: SamplingScheme, x0,
                         generators: Sequence[np.random.Generator], substeps: int = DEFAULT_SUBSTEPS,
                         record_noise: bool = False) -> BatchTrajectories:
    """Euler-Maruyama for several independent paths at once.

    Path ``r`` takes its noise exclusively from ``generators[r]``, in time
    order, so its trajectory does not depend on which other paths share the
    batch.  ``diverged_at[r]`` is the first observation index with a
    non-finite state, or -1.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    x = np.array(x0, dtype=float).reshape(-1)
    R = x.size
    if len(generators) != R:
        raise ValueError("one generator per path is required")
    n = scheme.n
    spacings = scheme.spacings
    states = np.empty((R, n + 1))
    states[:, 0] = x
    dw = np.empty((R, n)) if record_noise else None
    diverged = np.full(R, -1)
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, n, _BLOCK):
            stop = min(start + _BLOCK, n)
            xi = np.stack([standard_normal(g, (stop - start) * substeps) for g in generators])
            col = 0
            for i in range(start, stop):
                h = spacings[i] / substeps
                sq = np.sqrt(h)
                acc = np.zeros(R) if record_noise else None
                for _ in range(substeps):
                    z = sq * xi[:, col]
                    x = x + model.drift(x) * h + model.diffusion(x) * z
                    if record_noise:
                        acc += z
                    col += 1
                states[:, i + 1] = x
                if record_noise:
                    dw[:, i] = acc
            bad = (diverged < 0) & ~np.all(np.isfinite(states[:, start + 1:stop + 1]), axis=1)
            if np.any(bad):
                first = np.argmax(~np.isfinite(states[bad, start + 1:stop + 1]), axis=1)
                diverged[bad] = start + 1 + first
    return BatchTrajectories(states, diverged, dw)


def euler_maruyama(model: DiffusionModel, scheme: SamplingScheme, x0: float,
                   gen: np.random.Generator, substeps: int = DEFAULT_SUBSTEPS,
                   record_noise: bool = False) -> DiscreteSample:
    """Single-path Euler-Maruyama observed at the scheme times.

    Each observation interval is split into ``substeps`` equal Euler steps.
    With ``record_noise`` the Brownian increments over each observation
    interval are kept on the returned sample.
    """
    batch = euler_maruyama_batch(model, scheme, [x0], [gen], substeps, record_noise)
    if batch.diverged_at[0] >= 0:
        raise TrajectoryDiverged(int(batch.diverged_at[0]))
    dw = batch.brownian_increments[0] if record_noise else None
    return DiscreteSample(scheme, batch.states[0], dw)


# invariant laws ------------------------------------------------------------

@dataclass(frozen=True)
class InvariantLaw:
    density: Callable
    cdf: Callable
    quantile: Callable
    support: tuple[float, float]
    second_moment: float
    third_abs_moment: float
    name: str = ""


def _law_from_grid(grid, dens, name=""):
    cdf_vals = cumulative_trapezoid(dens, grid, initial=0.0)
    total = cdf_vals[-1]
    dens = dens / total
    cdf_vals = cdf_vals / total
    keep = np.concatenate(([True], np.diff(cdf_vals) > 0))
    inv_p, inv_x = cdf_vals[keep], grid[keep]

    def density(x):
        return np.interp(x, grid, dens, left=0.0, right=0.0)

    def cdf(x):
        return np.interp(x, grid, cdf_vals, left=0.0, right=1.0)

    def quantile(p):
        return np.interp(p, inv_p, inv_x)

    m2 = trapezoid(grid**2 * dens, grid)
    m3 = trapezoid(np.abs(grid) ** 3 * dens, grid)
    return InvariantLaw(density, cdf, quantile, (float(grid[0]), float(grid[-1])), float(m2),
                        float(m3), name)


def invariant_law(model: DiffusionModel, domain: tuple[float, float] | None = None,
                  resolution: int = LAW_RESOLUTION) -> InvariantLaw:
    """Stationary law from the speed density ``sigma^-2 exp(int_0^x 2 S / sigma^2)``.

    Normalized by trapezoid quadrature on a uniform grid over ``domain``.
    Raises :class:`NotPositiveRecurrent` when the density has not decayed at
    the domain edges.
    """
    domain = domain or model.domain
    if domain is None:
        raise ValueError("an integration domain is required for this model")
    lo, hi = map(float, domain)
    grid = np.linspace(lo, hi, resolution)
    sig2 = np.asarray(model.diffusion(grid), dtype=float) ** 2
    if np.any(sig2 <= 0):
        raise ValueError("diffusion coefficient must be positive on the domain")
    integrand = 2 * np.asarray(model.drift(grid), dtype=float) / sig2
    scale = cumulative_trapezoid(integrand, grid, initial=0.0)
    scale -= np.interp(0.0, grid, scale) if lo < 0 < hi else 0.0
    log_dens = scale - np.log(sig2)
    if not np.all(np.isfinite(log_dens)):
        raise NotPositiveRecurrent("model not positive recurrent on domain")
    log_dens -= log_dens.max()
    dens = np.exp(log_dens)
    if max(dens[0], dens[-1]) > 1e-12:
        raise NotPositiveRecurrent("model not positive recurrent on domain")
    return _law_from_grid(grid, dens, model.name)


def normal_law(mean: float = 0.0, sd: float = 1.0, name: str = "normal") -> InvariantLaw:
    """Closed-form Gaussian law."""
    dist = stats.norm(mean, sd)
    m2 = mean**2 + sd**2
    m3 = float(dist.expect(lambda x: np.abs(x) ** 3))
    return InvariantLaw(dist.pdf, dist.cdf, dist.ppf, (mean - 14 * sd, mean + 14 * sd), m2, m3, name)


def ou_invariant_law(theta: float, sigma: float) -> InvariantLaw:
    return normal_law(0.0, sigma / np.sqrt(2 * theta), "ou")


@dataclass(frozen=True)
class PsiFunction:
    """``x -> int_{-inf}^x sigma(z)^2 mu(dz)`` tabulated on a grid."""

    grid: np.ndarray
    values: np.ndarray

    @property
    def total(self) -> float:
        return float(self.values[-1])

    def __call__(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=self.total)


def psi_function(model: DiffusionModel, law: InvariantLaw,
                 resolution: int = LAW_RESOLUTION) -> PsiFunction:
    grid = np.linspace(*law.support, resolution)
    integrand = np.asarray(model.diffusion(grid), dtype=float) ** 2 * law.density(grid)
    return PsiFunction(grid, cumulative_trapezoid(integrand, grid, initial=0.0))


def stationary_start(law: InvariantLaw, gen: np.random.Generator | None = None, u=None) -> float:
    """Initial value ``quantile(U)``; ``u`` overrides the uniform draw."""
    if u is None:
        u = uniform(gen)
    return float(law.quantile(u))
