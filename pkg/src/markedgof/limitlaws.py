"""Brownian motion on a uniform grid and the two limit functionals.

``CVM``  ->  int_0^1 B(u)^2 du
``AD``   ->  int_0^1 B(u)^2 / u du

Both are approximated by left-endpoint Riemann sums on ``K`` equal cells; for
``AD`` the first cell (where ``u_0 = 0``) borrows the value at ``u_1``, which
keeps the expectation exactly 1 on every grid.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .randomness import DEFAULT_ROOT_SEED, LIMIT_BLOCK, SeedSpec, derive_stream, standard_normal

FUNCTIONALS = ("CVM", "AD")
DEFAULT_K = {"CVM": 2048, "AD": 4096}
DEFAULT_TEST_PATHS = 100_000
GOLDEN_PATHS = 1_000_000
GOLDEN_ALPHAS = (0.10, 0.05, 0.01)
GOLDEN_COLUMNS = ("functional", "alpha", "K", "n_paths", "root_seed", "critical_value")

_CHUNK = 256


class LimitLawError(ValueError):
    pass


def _kind(functional: str) -> str:
    kind = str(functional).upper()
    if kind not in FUNCTIONALS:
        raise LimitLawError(f"unknown functional {functional!r}; expected one of {FUNCTIONALS}")
    return kind


@dataclass(frozen=True)
class BMPath:
    """Brownian path sampled at ``u_k = k / K``."""

    values: np.ndarray

    @property
    def K(self) -> int:
        return self.values.size - 1

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.K + 1)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def _paths_from_noise(xi: np.ndarray) -> np.ndarray:
    K = xi.shape[-1]
    steps = np.sqrt(1.0 / K) * xi
    zeros = np.zeros(xi.shape[:-1] + (1,))
    return np.concatenate((zeros, np.cumsum(steps, axis=-1)), axis=-1)


def simulate_bm(K: int, gen: np.random.Generator | None = None, noise=None) -> BMPath:
    """One path on ``K`` cells; ``noise`` overrides the ``K`` standard normal draws."""
    if K < 1:
        raise LimitLawError("K must be at least 1")
    if noise is None:
        if gen is None:
            raise LimitLawError("either a generator or explicit noise is required")
        noise = standard_normal(gen, K)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (K,):
        raise LimitLawError(f"noise must have shape ({K},)")
    return BMPath(_paths_from_noise(noise))


def cvm_values(values: np.ndarray) -> np.ndarray:
    """Vectorized CVM functional over the last axis of path values."""
    K = values.shape[-1] - 1
    return np.sum(values[..., :-1] ** 2, axis=-1) / K


def ad_values(values: np.ndarray) -> np.ndarray:
    """Vectorized AD functional over the last axis of path values."""
    K = values.shape[-1] - 1
    if K < 2:
        raise LimitLawError("the AD functional needs K >= 2")
    u = np.arange(1, K) / K
    inner = values[..., 1:-1] ** 2 / u
    return (values[..., 1] ** 2 / u[0] + np.sum(inner, axis=-1)) / K


def cvm_functional(path: BMPath) -> float:
    return float(cvm_values(path.values))


def ad_functional(path: BMPath) -> float:
    return float(ad_values(path.values))


_EVALUATORS = {"CVM": cvm_values, "AD": ad_values}


def limit_stream(root_seed: int, path_index: int) -> np.random.Generator:
    return derive_stream(SeedSpec(root_seed, LIMIT_BLOCK + path_index))


@dataclass(frozen=True)
class LimitLawSample:
    functional: str
    draws: np.ndarray
    K: int
    n_paths: int
    seed: SeedSpec

    def quantile(self, level: float) -> float:
        return float(np.quantile(self.draws, level))

    def identity(self) -> dict:
        return {"functional": self.functional, "K": self.K, "n_paths": self.n_paths,
                "root_seed": self.seed.root_seed, "first_stream_id": self.seed.stream_id}


@functools.lru_cache(maxsize=16)
def _cached_draws(kind: str, K: int, n_paths: int, root_seed: int) -> np.ndarray:
    evaluate = _EVALUATORS[kind]
    out = np.empty(n_paths)
    for start in range(0, n_paths, _CHUNK):
        stop = min(start + _CHUNK, n_paths)
        xi = np.stack([standard_normal(limit_stream(root_seed, i), K) for i in range(start, stop)])
        out[start:stop] = evaluate(_paths_from_noise(xi))
    out.flags.writeable = False
    return out


def sample_limit_law(functional: str, K: int | None = None, n_paths: int = DEFAULT_TEST_PATHS,
                     root_seed: int = DEFAULT_ROOT_SEED) -> LimitLawSample:
    """Monte Carlo draws of a limit functional; path ``i`` uses its own stream.

    Draws are a deterministic function of ``(functional, K, n_paths, root_seed)``
    and are cached per process.
    """
    kind = _kind(functional)
    K = DEFAULT_K[kind] if K is None else int(K)
    if K < (2 if kind == "AD" else 1):
        raise LimitLawError(f"K={K} too small for {kind}")
    if n_paths < 1:
        raise LimitLawError("n_paths must be positive")
    draws = _cached_draws(kind, K, int(n_paths), int(root_seed))
    return LimitLawSample(kind, draws, K, int(n_paths), SeedSpec(root_seed, LIMIT_BLOCK))


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise LimitLawError(f"alpha must lie in (0, 1), got {alpha}")


def critical_value(sample: LimitLawSample, alpha: float) -> float:
    _check_alpha(alpha)
    return sample.quantile(1.0 - alpha)


def limit_quantile(functional: str, alpha: float, K: int | None = None,
                   n_paths: int = DEFAULT_TEST_PATHS, root_seed: int = DEFAULT_ROOT_SEED) -> float:
    """Empirical ``1 - alpha`` quantile of the simulated limit law."""
    _check_alpha(alpha)
    return critical_value(sample_limit_law(functional, K, n_paths, root_seed), alpha)


def p_value(statistic: float, sample: LimitLawSample) -> float:
    """Add-one Monte Carlo p-value ``(#{draws >= statistic} + 1) / (n_paths + 1)``."""
    if not statistic >= 0:
        raise LimitLawError("statistic must be non-negative")
    count = int(np.count_nonzero(sample.draws >= statistic))
    return (count + 1) / (sample.n_paths + 1)


# golden tables -------------------------------------------------------------

def golden_rows(n_paths: int = GOLDEN_PATHS, root_seed: int = DEFAULT_ROOT_SEED,
                alphas=GOLDEN_ALPHAS, functionals=FUNCTIONALS) -> list[dict]:
    rows = []
    for kind in functionals:
        sample = sample_limit_law(kind, DEFAULT_K[kind], n_paths, root_seed)
        for alpha in alphas:
            rows.append({"functional": kind, "alpha": alpha, "K": sample.K,
                         "n_paths": n_paths, "root_seed": root_seed,
                         "critical_value": critical_value(sample, alpha)})
    return rows


def write_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GOLDEN_COLUMNS)
        for r in rows:
            writer.writerow([r["functional"], f"{r['alpha']:.17g}", r["K"], r["n_paths"],
                             r["root_seed"], f"{r['critical_value']:.17g}"])


def read_table(path=None) -> list[dict]:
    if path is None:
        text = resources.files("markedgof").joinpath("data/golden_critical_values.csv").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = []
    for r in csv.DictReader(text.splitlines()):
        rows.append({"functional": r["functional"], "alpha": float(r["alpha"]), "K": int(r["K"]),
                     "n_paths": int(r["n_paths"]), "root_seed": int(r["root_seed"]),
                     "critical_value": float(r["critical_value"])})
    return rows


def golden_critical_value(functional: str, alpha: float) -> float:
    kind = _kind(functional)
    for r in read_table():
        if r["functional"] == kind and abs(r["alpha"] - alpha) < 1e-12:
            return r["critical_value"]
    raise KeyError(f"no golden entry for {kind} at alpha={alpha}")


def verify_table(rows, n_paths: int | None = None, rel_tol: float = 0.005) -> list[dict]:
    """Recompute each golden row; report relative deviation and pass flag."""
    report = []
    for r in rows:
        sample = sample_limit_law(r["functional"], r["K"], n_paths or r["n_paths"], r["root_seed"])
        fresh = critical_value(sample, r["alpha"])
        rel = abs(fresh - r["critical_value"]) / r["critical_value"]
        report.append({**r, "fresh": fresh, "rel_diff": rel, "ok": rel <= rel_tol})
    return report
