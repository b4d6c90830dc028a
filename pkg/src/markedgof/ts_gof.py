"""Anderson-Darling type sign test for Markov time series.

Model: ``X_i = S(X_{i-1}) + sigma(X_{i-1}) eps_i`` with ``eps`` of median zero.
For a null location function ``S0`` the statistic is

    T_n = int (1 / (n Psi(x))) (sum_i sgn(X_i - S0(X_{i-1})) 1{X_{i-1} <= x})^2 mu(dx)

where ``mu`` is the stationary law under the null and ``Psi`` its CDF.  Under
the null ``T_n`` tends to ``int_0^1 B(u)^2 / u du``.  No moment condition on
the noise is needed; the catalog includes Cauchy noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .l2core import MarkedSample, QuadratureMeasure
from .limitlaws import LimitLawSample
from .randomness import AUX_BLOCK, SeedSpec, derive_stream, uniform
from .results import TestResult, decide
from .sde import InvariantLaw, _law_from_grid, normal_law

PSI_FLOOR = 1e-4
N_ATOMS = 2**12
EMPIRICAL_LAW_LENGTH = 1_000_000
CONDITION_B_RESOLUTION = 2**14
CONDITION_B_TOLERANCE = 0.05


class DegenerateDomain(ValueError):
    pass


class SeriesDiverged(RuntimeError):
    pass


# noise laws ----------------------------------------------------------------

@dataclass(frozen=True)
class NoiseLaw:
    """Absolutely continuous noise given by its quantile function."""

    name: str
    ppf: Callable
    cdf: Callable
    shift: float = 0.0

    def draw(self, u):
        return self.ppf(u) + self.shift

    def with_median_shift(self, delta: float) -> "NoiseLaw":
        """Location-shifted copy with ``P(eps <= 0) = 1/2 - delta``."""
        if not abs(delta) < 0.5:
            raise ValueError("delta must satisfy |delta| < 1/2")
        if delta == 0:
            return replace(self, shift=0.0)
        return replace(self, shift=-float(self.ppf(0.5 - delta)))

    def prob_nonpositive(self) -> float:
        return float(self.cdf(-self.shift))


_t3 = stats.t(3)
_cauchy = stats.cauchy()

NOISES = {
    "normal": NoiseLaw("normal", ndtri, stats.norm.cdf),
    "t3": NoiseLaw("t3", _t3.ppf, _t3.cdf),
    "cauchy": NoiseLaw("cauchy", lambda u: np.tan(np.pi * (np.asarray(u) - 0.5)), _cauchy.cdf),
}


def noise_law(name: str) -> NoiseLaw:
    try:
        return NOISES[name]
    except KeyError:
        raise KeyError(f"unknown noise {name!r}; known: {sorted(NOISES)}") from None


# models --------------------------------------------------------------------

@dataclass(frozen=True)
class TimeSeriesModel:
    S: Callable
    sigma: Callable
    noise: NoiseLaw
    name: str
    params: dict = field(default_factory=dict)

    def with_median_shift(self, delta: float) -> "TimeSeriesModel":
        return replace(self, noise=self.noise.with_median_shift(delta),
                       params=dict(self.params, delta=delta))

    def shifted(self, shift: float) -> "TimeSeriesModel":
        """Same model with location function ``S(x) + shift``."""
        if shift == 0:
            return self
        S = self.S
        return replace(self, S=lambda x: S(x) + shift,
                       params=dict(self.params, location_shift=self.params.get("location_shift", 0.0) + shift))

    def scale_floor(self, lo=-50.0, hi=50.0, points=10_001) -> float:
        """Smallest scale over a grid scan of ``[lo, hi]``."""
        return float(np.min(self.sigma(np.linspace(lo, hi, points))))


def _constant(value):
    return lambda x: np.full(np.shape(x), float(value))


def ar1_model(rho: float = 0.5, scale: float = 1.0, noise: str = "normal") -> TimeSeriesModel:
    if not abs(rho) < 1 or scale <= 0:
        raise ValueError("AR(1) needs |rho| < 1 and scale > 0")
    return TimeSeriesModel(lambda x: rho * np.asarray(x, dtype=float), _constant(scale),
                           noise_law(noise), "ar1", {"rho": rho, "scale": scale, "noise": noise})


def nlar_model(rho: float = 0.5, a: float = 1.0, scale: float = 1.0, noise: str = "normal") -> TimeSeriesModel:
    """``S(x) = rho x + a tanh(x)``; ergodic for ``|rho| < 1``."""
    if not abs(rho) < 1 or scale <= 0:
        raise ValueError("nlar needs |rho| < 1 and scale > 0")
    return TimeSeriesModel(lambda x: rho * np.asarray(x, dtype=float) + a * np.tanh(x), _constant(scale),
                           noise_law(noise), "nlar", {"rho": rho, "a": a, "scale": scale, "noise": noise})


CATALOG = {"ar1": ar1_model, "nlar": nlar_model}


def ts_model(name: str, **params) -> TimeSeriesModel:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown time-series model {name!r}; known: {sorted(CATALOG)}") from None
    return factory(**params)


# simulation ----------------------------------------------------------------

def simulate_ts_batch(model: TimeSeriesModel, n: int, generators, burn_in: int = 0,
                      law: InvariantLaw | None = None, x0=None) -> np.ndarray:
    """Iterate the recursion for several paths; returns shape ``(R, n + 1)``.

    Each generator first supplies one uniform for a stationary start when
    ``law`` is given, then ``burn_in + n`` noise uniforms.
    """
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    R = len(generators)
    if law is not None:
        x = np.array([float(law.quantile(uniform(g))) for g in generators])
    elif x0 is None:
        x = np.zeros(R)
    else:
        x = np.broadcast_to(np.asarray(x0, dtype=float), (R,)).copy()
    steps = burn_in + n
    eps = model.noise.draw(np.stack([uniform(g, steps) for g in generators]).reshape(R, steps))
    out = np.empty((R, n + 1))
    if burn_in == 0:
        out[:, 0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            x = model.S(x) + model.sigma(x) * eps[:, k]
            j = k + 1 - burn_in
            if j >= 0:
                out[:, j] = x
    return out


def simulate_ts(model: TimeSeriesModel, n: int, gen: np.random.Generator, burn_in: int = 0,
                law: InvariantLaw | None = None, x0: float | None = None) -> np.ndarray:
    """Series ``X_0, ..., X_n`` after discarding ``burn_in`` steps.

    Starts from ``law.quantile(U)`` when a stationary law is supplied,
    otherwise from ``x0`` (default 0).
    """
    series = simulate_ts_batch(model, n, [gen], burn_in, law, x0)[0]
    if not np.all(np.isfinite(series)):
        bad = int(np.argmax(~np.isfinite(series)))
        raise SeriesDiverged(f"series diverged at index {bad}")
    return series


# hypotheses ----------------------------------------------------------------

def empirical_law(model: TimeSeriesModel, length: int = EMPIRICAL_LAW_LENGTH, burn_in: int = 1000,
                  root_seed: int = 0, n_grid: int = 2**12) -> InvariantLaw:
    """Stationary law approximated by pooling 100 long simulated chains."""
    chains = 100
    gens = [derive_stream(SeedSpec(root_seed, AUX_BLOCK + k)) for k in range(chains)]
    series = simulate_ts_batch(model, -(-length // chains), gens, burn_in).ravel()
    if not np.all(np.isfinite(series)):
        raise SeriesDiverged("long run for the empirical law diverged")
    lo, hi = np.quantile(series, [1e-6, 1 - 1e-6])
    pad = 0.05 * (hi - lo)
    grid = np.linspace(lo - pad, hi + pad, n_grid)
    ecdf = np.searchsorted(np.sort(series), grid, side="right") / series.size
    dens = np.gradient(ecdf, grid)
    return _law_from_grid(grid, np.maximum(dens, 0.0) + 1e-300, f"{model.name}-empirical")


def stationary_law(model: TimeSeriesModel, root_seed: int = 0) -> InvariantLaw:
    """Closed form where known (AR(1) with Gaussian or Cauchy noise), simulated otherwise."""
    p = model.params
    if model.name == "ar1" and p.get("location_shift", 0.0) == 0.0:
        rho, scale = p["rho"], p["scale"]
        if model.noise.name == "normal" and model.noise.shift == 0:
            return normal_law(0.0, scale / np.sqrt(1 - rho**2), "ar1-normal")
        if model.noise.name == "cauchy" and model.noise.shift == 0:
            dist = stats.cauchy(0.0, scale / (1 - abs(rho)))
            lo, hi = dist.ppf(1e-9), dist.ppf(1 - 1e-9)
            return InvariantLaw(dist.pdf, dist.cdf, dist.ppf, (lo, hi), float("inf"), float("inf"),
                                "ar1-cauchy")
    return empirical_law(model, root_seed=root_seed)


@dataclass(frozen=True)
class TSHypothesis:
    model: TimeSeriesModel
    law: InvariantLaw
    mu_measure: QuadratureMeasure
    psi_at_atoms: np.ndarray
    psi_floor: float = PSI_FLOOR

    @property
    def S0(self):
        return self.model.S

    def invariant_cdf(self, x):
        return self.law.cdf(x)


def ts_hypothesis(model0: TimeSeriesModel, law: InvariantLaw | None = None,
                  psi_floor: float = PSI_FLOOR, n_atoms: int = N_ATOMS) -> TSHypothesis:
    """Null ``S = model0.S``; ``mu`` discretized on equal-probability cells above ``psi_floor``."""
    law = law or stationary_law(model0)
    if not 0 <= psi_floor < 1:
        raise ValueError("psi_floor must lie in [0, 1)")
    edges = np.linspace(psi_floor, 1.0, n_atoms + 1)
    atoms = np.asarray(law.quantile(0.5 * (edges[:-1] + edges[1:])), dtype=float)
    weights = np.diff(edges)
    psi = np.asarray(law.cdf(atoms), dtype=float)
    keep = psi >= psi_floor
    if not np.any(keep):
        raise DegenerateDomain("degenerate integration domain")
    nu = QuadratureMeasure(atoms[keep], weights[keep], "density-on-grid")
    return TSHypothesis(model0, law, nu, psi[keep], psi_floor)


# statistic -----------------------------------------------------------------

def sgn(x):
    """Sign with ``sgn(0) = 0`` exactly."""
    x = np.asarray(x, dtype=float)
    return (x > 0).astype(float) - (x < 0).astype(float)


def sign_marks(series, S0) -> MarkedSample:
    """Anchors ``X_{i-1}`` and marks ``sgn(X_i - S0(X_{i-1})) / sqrt(n)``."""
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise ValueError("series needs at least two values")
    n = x.size - 1
    return MarkedSample(x[:-1], sgn(x[1:] - S0(x[:-1])) / np.sqrt(n))


def _sign_sums(anchors, signs, atoms):
    order = np.argsort(anchors, kind="stable")
    csum = np.concatenate(([0.0], np.cumsum(signs[order])))
    idx = np.searchsorted(anchors[order], atoms, side="right")
    return csum[idx], idx


def ad_statistic(series, hyp: TSHypothesis, plugin_weight: bool = False) -> float:
    """Quadrature of the squared sign-sum process weighted by ``1 / (n Psi)``.

    ``plugin_weight`` swaps ``Psi`` for the empirical CDF of the anchors.
    That variant has no established limit law and is exploratory only.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise ValueError("series needs at least two values")
    n = x.size - 1
    anchors = x[:-1]
    signs = sgn(x[1:] - hyp.S0(anchors))
    nu = hyp.mu_measure
    if nu.atoms.size == 0:
        raise DegenerateDomain("degenerate integration domain")
    z, counts = _sign_sums(anchors, signs, nu.atoms)
    if plugin_weight:
        psi = counts / n
        live = psi > 0
        return float(np.sum(z[live] ** 2 * nu.weights[live] / psi[live]) / n)
    return float(np.sum(z * z * nu.weights / hyp.psi_at_atoms) / n)


def unweighted_norm(series, hyp: TSHypothesis) -> float:
    """``int (n^-1/2 sum sgn 1{X_{i-1} <= x})^2 mu(dx)``; CVM-type limit."""
    x = np.asarray(series, dtype=float)
    n = x.size - 1
    signs = sgn(x[1:] - hyp.S0(x[:-1]))
    z, _ = _sign_sums(x[:-1], signs, hyp.mu_measure.atoms)
    return float(np.sum(z * z * hyp.mu_measure.weights) / n)


# condition (B) -------------------------------------------------------------

@dataclass(frozen=True)
class IntegrabilityReport:
    value: float
    coarse_value: float
    rel_change: float
    warn: bool


def integrability_diagnostic(density, psi, lo: float, hi: float,
                             resolution: int = CONDITION_B_RESOLUTION,
                             tolerance: float = CONDITION_B_TOLERANCE) -> IntegrabilityReport:
    """Midpoint estimate of ``int_lo^hi density / sqrt(psi)`` at two resolutions.

    A divergent integral shows up as a large jump between the coarse and fine
    estimates; ``warn`` is raised when the relative change exceeds ``tolerance``.
    """

    def midpoint(m):
        edges = np.linspace(lo, hi, m + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        f = np.asarray(density(mids), dtype=float)
        p = np.asarray(psi(mids), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(f > 0, f / np.sqrt(p), 0.0)
        return float(np.sum(vals) * (hi - lo) / m)

    coarse = midpoint(resolution // 2)
    fine = midpoint(resolution)
    rel = abs(fine - coarse) / abs(fine) if fine else float("inf")
    return IntegrabilityReport(fine, coarse, rel, bool(not np.isfinite(fine) or rel > tolerance))


def condition_b_diagnostic(hyp: TSHypothesis, resolution: int = CONDITION_B_RESOLUTION) -> IntegrabilityReport:
    lo, hi = hyp.law.support
    return integrability_diagnostic(hyp.law.density, hyp.law.cdf, lo, hi, resolution)


def ts_test(series, hyp: TSHypothesis, alpha: float, limit_sample: LimitLawSample,
            plugin_weight: bool = False, metadata=None) -> TestResult:
    if limit_sample.functional != "AD":
        raise ValueError("wrong limit law: the sign test needs the AD functional")
    stat = ad_statistic(series, hyp, plugin_weight)
    meta = {"n": int(np.size(series) - 1), "model": hyp.model.name, "null_params": hyp.model.params,
            "psi_floor": hyp.psi_floor, "plugin_weight": plugin_weight}
    meta.update(metadata or {})
    return decide(stat, alpha, limit_sample, meta)
