"""Command-line interface.

    markedgof limits --functional ad --alpha 0.05
    markedgof simulate --model ou --theta 1 --n 1000 --out path.csv
    markedgof test-diffusion --data path.csv --model ou --theta 1
    markedgof test-ts --model ar1 --rho 0.5 --n 10000 --seed 42
    markedgof size-study --model ou --replications 1000 --out size.csv

Options may also come from a JSON config file (``--config``); flags win over
file values.  A study's JSON sidecar is itself a valid config file.
Exit status: 0 success, 1 invalid configuration or input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import limitlaws
from .diffusion_gof import diffusion_hypothesis, diffusion_test
from .harness import CampaignAborted, ExperimentSpec, SpecError, run_study
from .randomness import DEFAULT_ROOT_SEED, SeedSpec, derive_stream
from .sde import CATALOG as DIFFUSION_CATALOG
from .sde import (DiscreteSample, SamplingScheme, TrajectoryDiverged, diffusion_model, euler_maruyama,
                  invariant_law, make_scheme, stationary_start)
from .ts_gof import CATALOG as TS_CATALOG
from .ts_gof import NOISES, SeriesDiverged, simulate_ts, stationary_law, ts_hypothesis, ts_model, ts_test

log = logging.getLogger("markedgof")

COMMANDS = ("limits", "simulate", "test-diffusion", "test-ts", "size-study", "power-study",
            "convergence-study")

MODEL_PARAMS = {
    "ou": ("theta", "sigma"),
    "tanh": ("theta", "a", "sigma"),
    "ar1": ("rho", "scale", "noise"),
    "nlar": ("rho", "a", "scale", "noise"),
}


class ConfigError(ValueError):
    """Invalid configuration or input data (exit status 1)."""


@dataclass
class RunConfig:
    command: str = "simulate"
    model: str | None = None
    theta: float | None = None
    sigma: float | None = None
    a: float | None = None
    rho: float | None = None
    scale: float | None = None
    noise: str | None = None
    null_shift: float = 0.0
    delta: float = 0.0
    n: int = 10_000
    n_grid: list | None = None
    K: int | None = None
    n_paths: int = limitlaws.DEFAULT_TEST_PATHS
    replications: int = 1000
    alpha: float = 0.05
    beta: float = 2 / 3
    c: float = 1.0
    substeps: int = 10
    burn_in: int = 0
    psi_floor: float = 1e-4
    ladder: list | None = None
    limit_draws: int = 10_000
    functional: str = "CVM"
    seed: int = DEFAULT_ROOT_SEED
    workers: int = 1
    data: str | None = None
    out: str | None = None
    regenerate: bool = False
    verify: bool = False
    experimental_plugin_weight: bool = False

    @property
    def family(self) -> str:
        return "diffusion" if self.model in DIFFUSION_CATALOG else "ts"

    def model_params(self) -> dict:
        return {k: getattr(self, k) for k in MODEL_PARAMS[self.model] if getattr(self, k) is not None}

    def validate(self) -> "RunConfig":
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg} (got {getattr(self, key)!r})")

        need(self.command in COMMANDS, "command", f"must be one of {COMMANDS}")
        if self.model is None:
            self.model = "ar1" if self.command == "test-ts" else "ou"
        need(self.model in MODEL_PARAMS, "model", f"unknown model; known: {sorted(MODEL_PARAMS)}")
        if self.command == "test-ts":
            need(self.model in TS_CATALOG, "model", "test-ts needs a time-series model")
        if self.command == "test-diffusion":
            need(self.model in DIFFUSION_CATALOG, "model", "test-diffusion needs a diffusion model")
        for key in ("theta", "sigma", "scale"):
            v = getattr(self, key)
            need(v is None or v > 0, key, "must be positive")
        need(self.rho is None or abs(self.rho) < 1, "rho", "must satisfy |rho| < 1")
        need(self.noise is None or self.noise in NOISES, "noise", f"must be one of {sorted(NOISES)}")
        need(abs(self.delta) < 0.5, "delta", "must satisfy |delta| < 1/2")
        need(self.n >= 1, "n", "must be >= 1")
        need(self.K is None or self.K >= 2, "K", "must be >= 2")
        need(self.n_paths >= 1, "n_paths", "must be >= 1")
        need(self.replications >= 1, "replications", "must be >= 1")
        need(0 < self.alpha < 1, "alpha", "must lie in the open interval (0, 1)")
        need(0.5 < self.beta < 1, "beta", "must lie in (1/2, 1)")
        need(self.c > 0, "c", "must be positive")
        need(self.substeps >= 1, "substeps", "must be >= 1")
        need(self.burn_in >= 0, "burn_in", "must be >= 0")
        need(0 <= self.psi_floor < 1, "psi_floor", "must lie in [0, 1)")
        need(self.limit_draws >= 1, "limit_draws", "must be >= 1")
        need(0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        need(self.workers >= 1, "workers", "must be >= 1")
        self.functional = str(self.functional).upper()
        need(self.functional in limitlaws.FUNCTIONALS, "functional", "must be CVM or AD")
        if self.n_grid is not None:
            need(len(self.n_grid) > 0 and all(int(x) >= 1 for x in self.n_grid)
                 and all(b > a for a, b in zip(self.n_grid, self.n_grid[1:])),
                 "n_grid", "must be a non-empty increasing list of positive integers")
        if self.command == "power-study":
            need(bool(self.ladder), "ladder", "a power study needs alternative magnitudes")
        try:
            self.build_model()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model parameters: {exc}") from None
        return self

    def build_model(self):
        if self.family == "diffusion":
            return diffusion_model(self.model, **self.model_params())
        return ts_model(self.model, **self.model_params())

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def experiment_spec(self) -> ExperimentSpec:
        return ExperimentSpec(
            kind=self.command.split("-")[0], test=self.family, model=self.model,
            model_params=self.model_params(), null_shift=self.null_shift,
            n_grid=self.n_grid or [self.n], replications=self.replications, alpha=self.alpha,
            root_seed=self.seed, K=self.K, n_paths=self.n_paths, beta=self.beta, c=self.c,
            substeps=self.substeps, burn_in=self.burn_in, psi_floor=self.psi_floor,
            ladder=self.ladder or [], limit_draws=self.limit_draws, workers=self.workers)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key, value):
    """Convert a file/flag value to the field's type, naming the key on failure."""
    if key not in _FIELDS:
        raise ConfigError(f"{key}: unknown configuration key")
    if value is None:
        return None
    default = _FIELDS[key].default
    try:
        if key in ("n_grid", "ladder"):
            items = value.split(",") if isinstance(value, str) else list(value)
            return [int(x) if key == "n_grid" else float(x) for x in items]
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes", "on")
            return bool(value)
        if key in ("n", "K", "n_paths", "replications", "substeps", "burn_in", "seed", "workers",
                   "limit_draws"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("not an integer")
            return int(value)
        if key in ("command", "model", "noise", "functional", "data", "out"):
            return str(value)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r}") from None


def load_config_file(path) -> dict:
    """Flat JSON object of config keys, or a sidecar carrying one under ``config``."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"malformed config file {path}: expected a JSON object")
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]
    return raw


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="markedgof", description="Marked empirical process goodness-of-fit tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="JSON config file or study sidecar")
    parser.add_argument("--print-effective-config", action="store_true",
                        help="print the merged configuration and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    add = parser.add_argument
    add("--model", default=S, choices=sorted(MODEL_PARAMS))
    for name in ("theta", "sigma", "a", "rho", "scale", "null-shift", "delta", "alpha", "beta", "c",
                 "psi-floor"):
        add(f"--{name}", default=S)
    add("--noise", default=S)
    for name in ("n", "K", "n-paths", "replications", "substeps", "burn-in", "seed", "workers",
                 "limit-draws"):
        add(f"--{name}", default=S)
    add("--n-grid", default=S, help="comma-separated sample sizes")
    add("--ladder", default=S, help="comma-separated alternative magnitudes")
    add("--functional", default=S, type=str.upper, choices=limitlaws.FUNCTIONALS)
    add("--data", default=S, help="input CSV: columns t,X (diffusion) or X (time series)")
    add("--out", default=S, help="output path")
    add("--regenerate", action="store_const", const=True, default=S)
    add("--verify", action="store_const", const=True, default=S)
    add("--experimental-plugin-weight", action="store_const", const=True, default=S,
        help="weight by the empirical CDF of the anchors (no limit theory; exploratory)")
    return parser


def parse_config(argv, config_file=None) -> tuple[RunConfig, dict]:
    """Merge defaults, config file and flags; returns the config and a provenance echo."""
    ns = build_parser().parse_args(argv)
    file_values = {}
    path = config_file or ns.config
    if path:
        file_values = {k: _coerce(k, v) for k, v in load_config_file(path).items()}
    flag_values = {k: _coerce(k, v) for k, v in vars(ns).items()
                   if k not in ("command", "config", "print_effective_config", "verbose")}
    merged = dict(file_values)
    merged.update(flag_values)
    merged["command"] = ns.command
    cfg = RunConfig(**merged).validate()
    echo = {"config_file": str(path) if path else None,
            "overridden_by_flags": sorted(k for k in flag_values if k in file_values
                                          and file_values[k] != flag_values[k])}
    cfg._print_only = ns.print_effective_config
    cfg._verbose = ns.verbose
    return cfg, echo


# I/O -----------------------------------------------------------------------

def _read_csv_columns(path, required):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise ConfigError(f"{path}: missing column(s) {', '.join(missing)}")
            rows = list(reader)
    except OSError as exc:
        raise OSError(f"cannot read data file {path}: {exc.strerror}") from None
    try:
        cols = {c: np.array([float(r[c]) for r in rows]) for c in required}
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: non-numeric entry in column(s) {', '.join(required)}") from None
    for c, v in cols.items():
        if not np.all(np.isfinite(v)):
            raise ConfigError(f"{path}: non-finite entry in column {c}")
    return cols


def read_diffusion_csv(path) -> DiscreteSample:
    cols = _read_csv_columns(path, ("t", "X"))
    t = cols["t"]
    if t.size < 2 or not np.all(np.diff(t) > 0):
        raise ConfigError(f"{path}: column t must be strictly increasing with at least two rows")
    return DiscreteSample(SamplingScheme(t - t[0]), cols["X"])


def read_series_csv(path) -> np.ndarray:
    x = _read_csv_columns(path, ("X",))["X"]
    if x.size < 2:
        raise ConfigError(f"{path}: column X needs at least two rows")
    return x


def write_series_csv(path, series) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["X"])
        for x in series:
            writer.writerow([f"{x:.17g}"])


def _write_json(path, payload):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _sidecar_path(out):
    return Path(out).with_suffix(".json")


# commands ------------------------------------------------------------------

def _simulate_diffusion(cfg, model, stream=0):
    gen = derive_stream(SeedSpec(cfg.seed, stream))
    law = invariant_law(model)
    x0 = stationary_start(law, gen)
    return euler_maruyama(model, make_scheme(cfg.n, cfg.beta, cfg.c), x0, gen, cfg.substeps)


def _simulate_series(cfg, model, law, stream=0):
    gen = derive_stream(SeedSpec(cfg.seed, stream))
    return simulate_ts(model, cfg.n, gen, cfg.burn_in, law=law)


def cmd_limits(cfg, echo):
    if cfg.regenerate:
        rows = limitlaws.golden_rows(cfg.n_paths, cfg.seed)
        out = cfg.out or "golden_critical_values.csv"
        limitlaws.write_table(rows, out)
        print(f"wrote {out}")
        return 0
    if cfg.verify:
        rows = limitlaws.read_table()
        report = limitlaws.verify_table(rows)
        for r in report:
            print(f"{'PASS' if r['ok'] else 'FAIL'} {r['functional']} alpha={r['alpha']} "
                  f"golden={r['critical_value']:.6f} fresh={r['fresh']:.6f} rel={r['rel_diff']:.2e}")
        return 0 if all(r["ok"] for r in report) else 2
    sample = limitlaws.sample_limit_law(cfg.functional, cfg.K, cfg.n_paths, cfg.seed)
    row = {"functional": sample.functional, "alpha": cfg.alpha, "K": sample.K,
           "n_paths": sample.n_paths, "root_seed": cfg.seed,
           "critical_value": limitlaws.critical_value(sample, cfg.alpha)}
    out = cfg.out or f"critical_value_{sample.functional.lower()}.csv"
    limitlaws.write_table([row], out)
    _write_json(_sidecar_path(out), {"config": cfg.to_dict(), "echo": echo})
    print(f"{row['functional']} alpha={cfg.alpha} critical_value={row['critical_value']:.17g} -> {out}")
    return 0


def cmd_simulate(cfg, echo):
    model = cfg.build_model()
    out = cfg.out or "simulated.csv"
    if cfg.family == "diffusion":
        _simulate_diffusion(cfg, model).to_csv(out)
    else:
        truth = model.with_median_shift(cfg.delta)
        write_series_csv(out, _simulate_series(cfg, truth, stationary_law(model, cfg.seed)))
    _write_json(_sidecar_path(out), {"config": cfg.to_dict(), "echo": echo})
    print(f"wrote {out}")
    return 0


def cmd_test_diffusion(cfg, echo):
    model = cfg.build_model()
    sample = read_diffusion_csv(cfg.data) if cfg.data else _simulate_diffusion(cfg, model)
    hyp = diffusion_hypothesis(model.shifted(cfg.null_shift))
    limit = limitlaws.sample_limit_law("CVM", cfg.K, cfg.n_paths, cfg.seed)
    result = diffusion_test(sample, hyp, cfg.alpha, limit,
                            {"seed": cfg.seed, "beta": cfg.beta, "c": cfg.c, "data": cfg.data})
    payload = dataclasses.asdict(result)
    payload.update({"config": cfg.to_dict(), "echo": echo})
    _write_json(cfg.out, payload)
    return 0


def cmd_test_ts(cfg, echo):
    model = cfg.build_model()
    null = model.shifted(cfg.null_shift)
    law = stationary_law(null, cfg.seed)
    hyp = ts_hypothesis(null, law, psi_floor=cfg.psi_floor)
    if cfg.data:
        series = read_series_csv(cfg.data)
    else:
        series = _simulate_series(cfg, model.with_median_shift(cfg.delta), law)
    limit = limitlaws.sample_limit_law("AD", cfg.K, cfg.n_paths, cfg.seed)
    result = ts_test(series, hyp, cfg.alpha, limit, cfg.experimental_plugin_weight,
                     {"seed": cfg.seed, "data": cfg.data, "delta": cfg.delta})
    payload = dataclasses.asdict(result)
    payload.update({"config": cfg.to_dict(), "echo": echo})
    _write_json(cfg.out, payload)
    return 0


def cmd_study(cfg, echo):
    try:
        spec = cfg.experiment_spec()
    except SpecError as exc:
        raise ConfigError(str(exc)) from None
    report = run_study(spec)
    out = Path(cfg.out or f"{cfg.command}.csv")
    out.write_text(report.to_csv())
    payload = report.sidecar()
    payload.update({"config": cfg.to_dict(), "echo": echo})
    _write_json(_sidecar_path(out), payload)
    sys.stdout.write(report.to_csv())
    return 0


DISPATCH = {"limits": cmd_limits, "simulate": cmd_simulate, "test-diffusion": cmd_test_diffusion,
            "test-ts": cmd_test_ts, "size-study": cmd_study, "power-study": cmd_study,
            "convergence-study": cmd_study}


def dispatch(cfg: RunConfig, echo=None) -> int:
    return DISPATCH[cfg.command](cfg, echo or {})


def main(argv=None) -> int:
    try:
        cfg, echo = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if cfg._verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if cfg._print_only:
        _write_json(None, {"config": cfg.to_dict(), "echo": echo})
        return 0
    try:
        return dispatch(cfg, echo)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, CampaignAborted, TrajectoryDiverged, SeriesDiverged, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
