import json
import math

import numpy as np
import pytest

from loctime import harness
from loctime.harness import (
    field_with_retry,
    map_paths,
    parse_kac_points,
    path_seed,
    run_experiment,
    scaling_check,
    variance_identity_check,
)
from loctime.paths import GridSpec, simulate_path
from loctime.report import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    GatePolicy,
    compare_to_oracle,
)
from loctime.statistics import MomentEstimate

KAC_SMALL = dict(experiment_kind="kac_oracle", zeta=1.0, dt=4e-4, dx=0.05, h_list=(0.1,), n_paths=300,
                 kac_points="0 | 0,0 | 0@1,0@1")


def test_compare_to_oracle_basics():
    est = MomentEstimate(1.0, 0.1, 100, 0.0)
    v = compare_to_oracle(est, 1.0, 0.0)
    assert v.z == 0.0 and v.passed
    assert not compare_to_oracle(MomentEstimate(1.75 + 0.001, 0.25, 100, 0), 1.0).passed  # |z| = 3.004
    assert compare_to_oracle(MomentEstimate(1.75, 0.25, 100, 0), 1.0).passed  # |z| = 3 exactly
    assert compare_to_oracle(MomentEstimate(2.0, 0.1, 100, 0), 1.0, 0.0).z == pytest.approx(10.0)
    assert compare_to_oracle(MomentEstimate(2.0, 0.3, 100, 0), 1.0, 0.4).z == pytest.approx(2.0)
    # relative tolerance is an alternative, not a replacement
    assert compare_to_oracle(MomentEstimate(1.1, 0.001, 100, 0), 1.0, 0, GatePolicy(3.0, 0.15)).passed
    assert not compare_to_oracle(MomentEstimate(1.2, 0.001, 100, 0), 1.0, 0, GatePolicy(3.0, 0.15)).passed
    assert math.isinf(compare_to_oracle(MomentEstimate.exact(2.0), 1.0).z)


def test_path_seed():
    assert path_seed(1, 0, 5) == path_seed(1, 0, 5)
    seeds = {path_seed(1, s, i) for s in range(3) for i in range(200)} | {path_seed(2, 0, 0)}
    assert len(seeds) == 601
    assert 0 <= path_seed(2**64 - 1, 0, 0) < 2**64


def test_map_paths_order_independent_of_threads():
    fn = lambda i: [i, simulate_path(0.01, 1e-4, seed=path_seed(0, 0, i)).positions[-1]]
    a = map_paths(fn, 150, threads=1, batch=7)
    b = map_paths(fn, 150, threads=4, batch=7)
    assert np.array_equal(a, b)
    assert a[:, 0].tolist() == list(range(150))


def test_field_retry_widens_grid():
    p = simulate_path(1.0, 1e-3, seed=2)
    tiny = GridSpec.centered(0.0, 0.05, 0.01)
    f, retries = field_with_retry(p, tiny, 1.0)
    assert retries >= 1
    assert abs(f.total_mass() - 1.0) < 1e-12
    assert np.min(np.abs(f.grid.centers)) < 1e-12  # alignment kept


def test_parse_kac_points():
    assert parse_kac_points("0 | 0, 0.5 | 0@1,0@2") == [((0.0,), (0,)), ((0.0, 0.5), (0, 0)), ((0.0, 0.0), (1, 2))]
    for bad in ("", "0@3", "x"):
        with pytest.raises(ValueError):
            parse_kac_points(bad)


@pytest.mark.parametrize(
    "kw,field",
    [
        (dict(experiment_kind="nope"), "experiment_kind"),
        (dict(experiment_kind="clt2", n_paths=50), "n_paths"),
        (dict(experiment_kind="clt2", h_list=()), "h_list"),
        (dict(experiment_kind="clt2", h_list=(0.015,), dx=0.01, dt=1e-6), "h_list"),
        (dict(experiment_kind="clt2", h_list=(0.02,), dt=1e-4), "dt"),
        (dict(experiment_kind="kac_oracle", kac_points="0"), "zeta"),
        (dict(experiment_kind="kac_oracle", zeta=1.0, kac_points="", dt=1e-4, dx=0.01, h_list=(0.1,)), "kac_points"),
        (dict(experiment_kind="clt2", t=math.inf), "t"),
        (dict(experiment_kind="lemma21_integrals", h_list=(2.0,)), "h_list"),
        (dict(experiment_kind="clt2", tolerance={"x": -1}), "tolerance"),
    ],
)
def test_config_validation_names_field(kw, field):
    with pytest.raises(ConfigError, match=field):
        ExperimentConfig(**kw)


def test_coarse_dt_override_is_recorded():
    cfg = ExperimentConfig("clt2", h_list=(0.02,), dt=1e-4, dx=0.002, n_paths=100, allow_coarse_dt=True)
    r = run_experiment(cfg, threads=1)
    assert any("allow_coarse_dt" in n for n in r.notes)


def test_config_overrides_and_flat_roundtrip():
    cfg = ExperimentConfig(**KAC_SMALL)
    c2 = cfg.with_overrides(["n_paths=400", "tolerance.default=2"])
    assert c2.n_paths == 400 and c2.multiplier("anything") == 2.0
    assert ExperimentConfig.from_mapping(cfg.to_flat()) == cfg
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        cfg.with_overrides(["n_paths"])
    with pytest.raises(ConfigError, match="bogus"):
        cfg.with_overrides(["bogus=1"])


def test_kac_experiment_small():
    r = run_experiment(ExperimentConfig(**KAC_SMALL), threads=1)
    names = [c.name for c in r.checks]
    assert "occupation.pathwise" in names and "kac[0@1,0@1]" in names
    for c in r.checks:
        assert c.anchor and c.estimate_source is not None
        if c.gating and c.z is not None:
            assert c.oracle_source
    assert r.check("occupation.pathwise").passed


def test_reproducible_and_thread_independent():
    cfg = ExperimentConfig(**KAC_SMALL)
    a = run_experiment(cfg, threads=1)
    b = run_experiment(cfg, threads=1)
    c = run_experiment(cfg, threads=3)
    assert a.body() == b.body() == c.body()


def test_clt_reproducible_without_cache():
    cfg = ExperimentConfig("clt3", h_list=(0.05, 0.02), dt=1e-5, dx=0.002, t=0.1, n_paths=100)
    a = run_experiment(cfg, threads=1).body()
    harness._CLT_CACHE.clear()
    b = run_experiment(cfg, threads=2).body()
    assert a == b


def test_report_roundtrip(tmp_path):
    r = run_experiment(ExperimentConfig(**KAC_SMALL), threads=1, overrides=["n_paths=300"])
    r.checks[0].note = "x"
    r.checks[0].z = math.nan
    back = ExperimentReport.from_json(r.to_json())
    assert back.to_dict() == json.loads(r.to_json()) or back.to_json() == r.to_json()
    assert back.overrides == ["n_paths=300"]
    j, c = r.write(tmp_path, "kac")
    assert ExperimentReport.from_json(j.read_text()).to_json() == r.to_json()
    lines = c.read_text().splitlines()
    assert lines[0].startswith("schema_version,experiment_kind,name,anchor")
    assert len(lines) == 1 + len(r.checks)
    d = r.to_dict()
    assert d["schema_version"] == 1 and "engineering choices" in d["engineering_note"]
    d["schema_version"] = 99
    with pytest.raises(ValueError):
        ExperimentReport.from_dict(d)


def test_standard_error_shrinks_with_n():
    base = dict(KAC_SMALL, kac_points="0", n_paths=2000)
    se1 = run_experiment(ExperimentConfig(**base), threads=1).check("kac[0]").std_error
    base["n_paths"] = 4000
    base["base_seed"] = 77
    se2 = run_experiment(ExperimentConfig(**base), threads=1).check("kac[0]").std_error
    assert se1 / se2 == pytest.approx(math.sqrt(2), rel=0.10)


def test_degraded_when_grid_too_small():
    cfg = ExperimentConfig(**dict(KAC_SMALL, grid_half_width=0.2))
    r = run_experiment(cfg, threads=1)
    assert r.retries > 0 and r.degraded and not r.passed
    assert r.check("occupation.pathwise").passed


def test_scaling_check_small():
    r = scaling_check(1.0, 0.5, 3, n_paths=300, base_seed=5, dt=1e-3, dx=0.05)
    assert r.passed
    assert {c.name for c in r.checks} >= {"scaling.power3", "scaling.cross"}


def test_variance_identity_degenerate_horizon():
    r = variance_identity_check(1.0, 1e-4, [0.05], n_pairs=100, base_seed=1, dt=1e-5, dx=0.01)
    row = r.check("variance_identity.absolute")
    assert abs(row.estimate) < 1e-6


def test_exponential_time_check_filters_rows():
    r = harness.exponential_time_moment_check(1, 0.1, 1.0, 200, dt=1e-4, dx=0.01)
    names = [c.name for c in r.checks]
    assert "exp_time.m1" in names and "exp_time.m2" not in names
    with pytest.raises(ValueError):
        harness.exponential_time_moment_check(3, 0.1, 1.0, 200)


def test_quadrature_kinds_run():
    r = run_experiment(ExperimentConfig("lemma24_integrals", h_list=(0.05,), q_list=(2,), n_paths=100))
    assert r.check("heat.fourier_direct_q2_infinity").passed
    assert r.check("heat.fourier_direct_q2_h").passed
    assert r.check("heat.power_q2_infinity").passed


def test_check_result_coerces_numpy_scalars():
    import json

    import numpy as np

    from loctime.report import CheckResult

    c = CheckResult("x", "a", np.bool_(True), gating=np.bool_(False), h=np.float64(0.1),
                    estimate=np.float32(1.5), z=np.float64(0.2))
    assert type(c.passed) is bool and type(c.gating) is bool and type(c.estimate) is float
    json.dumps({"passed": c.passed, "h": c.h, "estimate": c.estimate})
