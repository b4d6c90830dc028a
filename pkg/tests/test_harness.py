import json

import numpy as np
import pytest

from markedgof import harness as H


def _spec(**kw):
    base = dict(kind="size", test="ts", model="ar1", n_grid=[200], replications=300, n_paths=2000, K=256)
    base.update(kw)
    return H.ExperimentSpec(**base)


def test_single_replication_rate_is_binary():
    for test, model in (("ts", "ar1"), ("diffusion", "ou")):
        row = H.run_size_study(_spec(test=test, model=model, replications=1)).rows[0]
        assert row["rejection_rate"] in (0.0, 1.0)
        assert row["std_error"] == 0.0


@pytest.mark.parametrize("test,model", [("ts", "ar1"), ("diffusion", "ou")])
def test_report_independent_of_workers_and_schedule(test, model):
    kw = dict(kind="power", test=test, model=model, ladder=[0.0, 0.1], replications=520, n_grid=[100, 300])
    ref = H.run_power_study(_spec(**kw)).to_csv()
    assert H.run_power_study(_spec(workers=2, **kw), schedule="reverse").to_csv() == ref
    assert H.run_power_study(_spec(workers=3, **kw), schedule="shuffle").to_csv() == ref


def test_zero_rung_equals_size_row():
    size = H.run_size_study(_spec()).rows[0]
    power = H.run_power_study(_spec(kind="power", ladder=[0.0, 0.2])).rows[0]
    for key in ("rejection_rate", "stat_mean", "stat_var", "critical_value"):
        assert size[key] == power[key]


def test_standard_error_formula():
    row = H.run_power_study(_spec(kind="power", ladder=[0.15], replications=400)).rows[0]
    p = row["rejection_rate"]
    assert 0 < p < 1
    assert row["std_error"] == pytest.approx(np.sqrt(p * (1 - p) / 400))


def test_power_increases_along_ladder():
    rows = H.run_power_study(_spec(kind="power", ladder=[0.0, 0.1, 0.2], n_grid=[1000], replications=200)).rows
    rates = [r["rejection_rate"] for r in rows]
    assert rates[-1] > rates[0]
    assert H.count_inversions([-r for r in rates]) <= 1


def test_convergence_rows_and_levels():
    spec = _spec(kind="convergence", n_grid=[100, 400], replications=250, limit_draws=2000)
    rows = H.run_convergence_study(spec).rows
    assert [(r["n"], r["functional"]) for r in rows] == [(100, "AD"), (100, "CVM"), (400, "AD"), (400, "CVM")]
    assert all(0 <= r["ks_distance"] <= 1 for r in rows)


def test_quadrature_limit_draws_match_brownian_functionals():
    """Fine uniform levels: draws follow the Riemann sums of int B^2 (mean 1/2)."""
    K = 512
    levels = np.arange(1, K + 1) / K
    w = np.full(K, 1 / K)
    d = H.quadrature_limit_draws(levels, w, 4000, root_seed=3, weighted=False)
    assert d.mean() == pytest.approx(0.5 * (1 + 1 / K), abs=0.03)
    dw = H.quadrature_limit_draws(levels, w, 4000, root_seed=3, weighted=True)
    assert dw.mean() == pytest.approx(1.0, abs=0.05)
    # order of atoms is irrelevant
    perm = np.random.default_rng(0).permutation(K)
    np.testing.assert_allclose(H.quadrature_limit_draws(levels[perm], w[perm], 50, 3, False), d[:50], rtol=1e-13)


def test_count_inversions():
    assert H.count_inversions([0.2, 0.1, 0.05]) == 0
    assert H.count_inversions([0.2, 0.25, 0.05, 0.06]) == 2


@pytest.mark.parametrize("bad", [
    dict(replications=0), dict(n_grid=[]), dict(n_grid=[100, 100]), dict(n_grid=[0]),
    dict(alpha=1.0), dict(kind="bogus"), dict(test="x"), dict(model="ou"),
    dict(kind="power", ladder=[]), dict(kind="power", ladder=[0.6]), dict(workers=0),
    dict(model_params={"rho": 2.0}), dict(model_params={"nonsense": 1}),
])
def test_spec_validation(bad):
    with pytest.raises(H.SpecError):
        _spec(**bad)


def test_spec_roundtrip_and_unknown_keys():
    spec = _spec(kind="power", ladder=[0.0, 0.1])
    again = H.ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec
    with pytest.raises(H.SpecError, match="unknown"):
        H.ExperimentSpec.from_dict(dict(spec.to_dict(), colour="red"))


def test_runner_kind_mismatch():
    with pytest.raises(H.SpecError):
        H.run_power_study(_spec())


def test_abort_policy(monkeypatch):
    def failing(spec, n, magnitude, reps):
        return [(r, None, None, "boom") if r % 10 == 0 else (r, 1.0, None, None) for r in reps]

    monkeypatch.setattr(H, "_ts_chunk", failing)
    with pytest.raises(H.CampaignAborted, match="failed"):
        H.run_size_study(_spec(replications=100))

    def rare(spec, n, magnitude, reps):
        return [(r, None, None, "boom") if r == 3 else (r, 1.0, None, None) for r in reps]

    monkeypatch.setattr(H, "_ts_chunk", rare)
    report = H.run_size_study(_spec(replications=100))
    assert report.rows[0]["n_failed"] == 1 and report.rows[0]["replications"] == 99
    assert report.failures == [{"n": 200, "magnitude": 0.0, "replication": 3, "error": "boom"}]


def test_report_files(tmp_path):
    report = H.run_size_study(_spec(replications=20))
    csv_path, side = report.write(tmp_path / "out.csv")
    lines = csv_path.read_text().splitlines()
    assert lines[0].split(",") == list(H.ExperimentReport.columns)
    assert len(lines) == 2
    meta = json.loads(side.read_text())
    assert meta["spec"] == report.spec.to_dict()
    assert meta["seed"]["root_seed"] == report.spec.root_seed
    assert set(meta) == {"version", "spec", "seed", "failures", "timings"}
