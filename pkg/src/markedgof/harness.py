"""Monte Carlo campaigns: size, power and weak-convergence studies.

Replication ``r`` at sample size ``n`` draws from stream
``replication_stream_id(n, r)`` and replications are processed in fixed
chunks, so a report depends only on the spec, never on the worker count or
on the order in which chunks finish.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import logging
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .diffusion_gof import cvm_from_marks, diffusion_hypothesis, residual_marks, weighted_norm_from_marks
from .limitlaws import DEFAULT_K, critical_value, sample_limit_law
from .randomness import (DEFAULT_ROOT_SEED, QUADRATURE_LIMIT_BLOCK, SeedSpec, derive_stream,
                         replication_stream_id, standard_normal, uniform)
from .sde import CATALOG as DIFFUSION_CATALOG
from .sde import diffusion_model, euler_maruyama_batch, invariant_law, make_scheme
from .ts_gof import CATALOG as TS_CATALOG
from .ts_gof import ad_statistic, simulate_ts_batch, stationary_law, ts_hypothesis, ts_model, unweighted_norm

log = logging.getLogger(__name__)

CHUNK = 250
MAX_FAILURE_FRACTION = 0.01
KINDS = ("size", "power", "convergence")
TESTS = ("diffusion", "ts")


class SpecError(ValueError):
    pass


class CampaignAborted(RuntimeError):
    pass


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce a campaign.

    ``ladder`` holds alternative magnitudes for power studies: a drift shift
    of the null hypothesis for the diffusion test, a noise-median shift
    ``delta`` of the data for the sign test.
    """

    kind: str
    test: str
    model: str
    model_params: dict = field(default_factory=dict)
    null_shift: float = 0.0
    n_grid: list = field(default_factory=lambda: [10_000])
    replications: int = 1000
    alpha: float = 0.05
    root_seed: int = DEFAULT_ROOT_SEED
    K: int | None = None
    n_paths: int = 100_000
    beta: float = 2 / 3
    c: float = 1.0
    substeps: int = 10
    burn_in: int = 0
    psi_floor: float = 1e-4
    ladder: list = field(default_factory=list)
    limit_draws: int = 10_000
    workers: int = 1

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        self.ladder = [float(m) for m in self.ladder]
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise SpecError(f"kind must be one of {KINDS}")
        if self.test not in TESTS:
            raise SpecError(f"test must be one of {TESTS}")
        catalog = DIFFUSION_CATALOG if self.test == "diffusion" else TS_CATALOG
        if self.model not in catalog:
            raise SpecError(f"unknown model {self.model!r} for the {self.test} test")
        if self.replications < 1:
            raise SpecError("replications must be >= 1")
        if not self.n_grid or any(n < 1 for n in self.n_grid) or any(
                b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise SpecError("n_grid must be non-empty, positive and increasing")
        if not 0 < self.alpha < 1:
            raise SpecError("alpha must lie in (0, 1)")
        if self.kind == "power" and not self.ladder:
            raise SpecError("a power study needs a non-empty ladder")
        if self.test == "ts" and any(abs(m) >= 0.5 for m in self.ladder):
            raise SpecError("median shifts must satisfy |delta| < 1/2")
        if self.workers < 1:
            raise SpecError("workers must be >= 1")
        # degenerate models (e.g. zero diffusion) fail here rather than mid-campaign
        self.build_model()

    @property
    def functional(self) -> str:
        return "CVM" if self.test == "diffusion" else "AD"

    @property
    def limit_K(self) -> int:
        return self.K or DEFAULT_K[self.functional]

    def build_model(self):
        try:
            if self.test == "diffusion":
                return diffusion_model(self.model, **self.model_params)
            return ts_model(self.model, **self.model_params)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"invalid model parameters: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown spec keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    rows: list
    failures: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    columns = ("kind", "test", "n", "magnitude", "functional", "replications", "n_failed",
               "rejection_rate", "std_error", "stat_mean", "stat_var", "critical_value",
               "ks_distance")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"version": __version__, "spec": self.spec.to_dict(),
                "seed": {"root_seed": self.spec.root_seed,
                         "replication_streams": "n * 2**32 + rep",
                         "limit_streams": "2**62 + path"},
                "failures": self.failures, "timings": self.timings}

    def write(self, csv_path) -> tuple[Path, Path]:
        csv_path = Path(csv_path)
        csv_path.write_text(self.to_csv())
        side = csv_path.with_suffix(".json")
        side.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return csv_path, side


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return v


# per-process model/hypothesis caches -----------------------------------------

@functools.lru_cache(maxsize=32)
def _diffusion_setup(model: str, params_json: str, hyp_shift: float):
    true = diffusion_model(model, **json.loads(params_json))
    return true, invariant_law(true), diffusion_hypothesis(true.shifted(hyp_shift))


@functools.lru_cache(maxsize=32)
def _ts_setup(model: str, params_json: str, null_shift: float, psi_floor: float, root_seed: int):
    null = ts_model(model, **json.loads(params_json)).shifted(null_shift)
    return ts_hypothesis(null, stationary_law(null, root_seed), psi_floor=psi_floor)


def _params_json(spec):
    return json.dumps(spec.model_params, sort_keys=True)


# replication kernels -------------------------------------------------------

def _diffusion_chunk(spec: ExperimentSpec, n: int, magnitude: float, reps):
    true, law, hyp = _diffusion_setup(spec.model, _params_json(spec), spec.null_shift + magnitude)
    scheme = make_scheme(n, spec.beta, spec.c)
    gens = [derive_stream(SeedSpec(spec.root_seed, replication_stream_id(n, r))) for r in reps]
    x0 = np.array([float(law.quantile(uniform(g))) for g in gens])
    batch = euler_maruyama_batch(true, scheme, x0, gens, spec.substeps)
    out = []
    for r, states, bad in zip(reps, batch.states, batch.diverged_at):
        if bad >= 0:
            out.append((r, None, None, f"trajectory diverged at step {bad}"))
            continue
        ms = residual_marks(scheme.times, states, hyp.S0)
        primary = float(cvm_from_marks(ms.anchors, ms.marks, hyp))
        secondary = float(weighted_norm_from_marks(ms.anchors, ms.marks, hyp)) if spec.kind == "convergence" else None
        out.append((r, primary, secondary, None))
    return out


def _ts_chunk(spec: ExperimentSpec, n: int, magnitude: float, reps):
    hyp = _ts_setup(spec.model, _params_json(spec), spec.null_shift, spec.psi_floor, spec.root_seed)
    truth = spec.build_model().with_median_shift(magnitude)
    gens = [derive_stream(SeedSpec(spec.root_seed, replication_stream_id(n, r))) for r in reps]
    series = simulate_ts_batch(truth, n, gens, spec.burn_in, law=hyp.law)
    out = []
    for r, s in zip(reps, series):
        if not np.all(np.isfinite(s)):
            out.append((r, None, None, f"series diverged at index {int(np.argmax(~np.isfinite(s)))}"))
            continue
        primary = ad_statistic(s, hyp)
        secondary = unweighted_norm(s, hyp) if spec.kind == "convergence" else None
        out.append((r, primary, secondary, None))
    return out


def _run_chunk(spec_dict, n, magnitude, reps):
    spec = ExperimentSpec.from_dict(spec_dict)
    kernel = _diffusion_chunk if spec.test == "diffusion" else _ts_chunk
    return kernel(spec, n, magnitude, list(reps))


def _replicate(spec: ExperimentSpec, n: int, magnitude: float, schedule: str = "forward"):
    """All replications for one scenario, merged in replication order."""
    chunks = [range(s, min(s + CHUNK, spec.replications)) for s in range(0, spec.replications, CHUNK)]
    order = list(range(len(chunks)))
    if schedule == "reverse":
        order.reverse()
    elif schedule == "shuffle":
        random.Random(len(order)).shuffle(order)
    results = [None] * len(chunks)
    d = spec.to_dict()
    if spec.workers == 1:
        for i in order:
            results[i] = _run_chunk(d, n, magnitude, chunks[i])
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = {i: pool.submit(_run_chunk, d, n, magnitude, chunks[i]) for i in order}
            for i, fut in futures.items():
                results[i] = fut.result()
    merged = [item for chunk in results for item in chunk]
    failures = [{"n": n, "magnitude": magnitude, "replication": r, "error": err}
                for r, _, _, err in merged if err is not None]
    if len(failures) > MAX_FAILURE_FRACTION * spec.replications:
        raise CampaignAborted(f"{len(failures)} of {spec.replications} replications failed at n={n}; "
                              f"first: {failures[0]}")
    primary = np.array([p for _, p, _, err in merged if err is None])
    secondary = np.array([s for _, _, s, err in merged if err is None and s is not None])
    return primary, secondary, failures


def _rejection_row(spec, n, magnitude, stats_, n_failed, crit):
    reject = stats_ > crit
    p = float(reject.mean()) if stats_.size else float("nan")
    R = stats_.size
    return {"kind": spec.kind, "test": spec.test, "n": n, "magnitude": magnitude,
            "functional": spec.functional, "replications": R, "n_failed": n_failed,
            "rejection_rate": p, "std_error": float(np.sqrt(p * (1 - p) / R)),
            "stat_mean": float(stats_.mean()), "stat_var": float(stats_.var(ddof=1)) if R > 1 else 0.0,
            "critical_value": crit, "ks_distance": ""}


def _rejection_study(spec, magnitudes, schedule):
    t0 = time.perf_counter()
    limit = sample_limit_law(spec.functional, spec.limit_K, spec.n_paths, spec.root_seed)
    crit = critical_value(limit, spec.alpha)
    rows, failures, timings = [], [], {"limit_law": time.perf_counter() - t0}
    for n in spec.n_grid:
        for m in magnitudes:
            t1 = time.perf_counter()
            stats_, _, fail = _replicate(spec, n, m, schedule)
            failures.extend(fail)
            rows.append(_rejection_row(spec, n, m, stats_, len(fail), crit))
            timings[f"n={n},magnitude={m}"] = time.perf_counter() - t1
            log.info("n=%d magnitude=%g rate=%.4f", n, m, rows[-1]["rejection_rate"])
    return ExperimentReport(spec, rows, failures, timings)


def run_size_study(spec: ExperimentSpec, schedule: str = "forward") -> ExperimentReport:
    if spec.kind != "size":
        raise SpecError("run_size_study needs kind='size'")
    return _rejection_study(spec, [0.0], schedule)


def run_power_study(spec: ExperimentSpec, schedule: str = "forward") -> ExperimentReport:
    if spec.kind != "power":
        raise SpecError("run_power_study needs kind='power'")
    return _rejection_study(spec, spec.ladder, schedule)


# convergence ---------------------------------------------------------------

def quadrature_limit_draws(levels, weights, n_draws: int, root_seed: int, weighted: bool,
                           block: int = 0) -> np.ndarray:
    """Draws of ``sum_k weights_k B(levels_k)^2 [/ levels_k]`` for Brownian ``B``.

    ``levels`` are the normalized variance-profile values at the quadrature
    atoms, so these draws share the discretization of the statistic.
    """
    levels = np.asarray(levels, dtype=float)
    order = np.argsort(levels, kind="stable")
    lv = levels[order]
    w = np.asarray(weights, dtype=float)[order]
    steps = np.sqrt(np.diff(np.concatenate(([0.0], lv))))
    scale = w / lv if weighted else w
    out = np.empty(n_draws)
    for start in range(0, n_draws, 256):
        stop = min(start + 256, n_draws)
        z = np.stack([standard_normal(derive_stream(SeedSpec(root_seed, QUADRATURE_LIMIT_BLOCK + block + i)),
                                      lv.size) for i in range(start, stop)])
        b = np.cumsum(z * steps, axis=1)
        out[start:stop] = (b * b) @ scale
    return out


def _limit_levels(spec):
    if spec.test == "diffusion":
        _, _, hyp = _diffusion_setup(spec.model, _params_json(spec), spec.null_shift)
        nu = hyp.integration_measure
        return hyp.psi(nu.atoms) / hyp.psi_total, nu.weights
    hyp = _ts_setup(spec.model, _params_json(spec), spec.null_shift, spec.psi_floor, spec.root_seed)
    return hyp.psi_at_atoms, hyp.mu_measure.weights


def run_convergence_study(spec: ExperimentSpec, schedule: str = "forward") -> ExperimentReport:
    """KS distances between replicated functionals of the marked process and their limits.

    For each ``n`` two functionals are reported: the unweighted squared norm
    (limit ``int B^2``) and the norm standardized by ``Psi^-1/2`` (limit
    ``int B^2 / u``).  Limit draws use the same atoms as the statistics.
    """
    if spec.kind != "convergence":
        raise SpecError("run_convergence_study needs kind='convergence'")
    t0 = time.perf_counter()
    levels, weights = _limit_levels(spec)
    limits = {"CVM": quadrature_limit_draws(levels, weights, spec.limit_draws, spec.root_seed, False),
              "AD": quadrature_limit_draws(levels, weights, spec.limit_draws, spec.root_seed, True)}
    rows, failures, timings = [], [], {"limit_draws": time.perf_counter() - t0}
    for n in spec.n_grid:
        t1 = time.perf_counter()
        primary, secondary, fail = _replicate(spec, n, 0.0, schedule)
        failures.extend(fail)
        if spec.test == "diffusion":
            by_functional = {"CVM": primary, "AD": secondary}
        else:
            by_functional = {"AD": primary, "CVM": secondary}
        for name in (spec.functional, "AD" if spec.functional == "CVM" else "CVM"):
            values = by_functional[name]
            ks = stats.ks_2samp(values, limits[name]).statistic
            rows.append({"kind": spec.kind, "test": spec.test, "n": n, "magnitude": 0.0,
                         "functional": name, "replications": values.size, "n_failed": len(fail),
                         "rejection_rate": "", "std_error": "", "stat_mean": float(values.mean()),
                         "stat_var": float(values.var(ddof=1)) if values.size > 1 else 0.0,
                         "critical_value": "", "ks_distance": float(ks)})
        timings[f"n={n}"] = time.perf_counter() - t1
    return ExperimentReport(spec, rows, failures, timings)


RUNNERS = {"size": run_size_study, "power": run_power_study, "convergence": run_convergence_study}


def run_study(spec: ExperimentSpec, schedule: str = "forward") -> ExperimentReport:
    return RUNNERS[spec.kind](spec, schedule)


def count_inversions(values) -> int:
    """Number of consecutive increases in a sequence expected to be non-increasing."""
    v = list(values)
    return sum(1 for a, b in zip(v, v[1:]) if b > a)
