"""Synthetic models, the study drivers, and scenario files."""

import numpy as np
import pytest

from fmest.data import DataFormatError, Grid, integrate, matrix_dataset
from fmest.estimator import fit_marginal
from fmest.inference import quadratic_probe
from fmest.losses import huber
from fmest.sampling import complete, random_interval
from fmest.simulation import (
    ConstantScale,
    Contamination,
    ErrorModel,
    ProcessModel,
    RandomScale,
    ScenarioConfig,
    generate_curves,
    ise,
    model_mean,
    model_preset,
    probe_mean,
    read_scenario_config,
    run_coverage_study,
    run_ise_study,
    smooth_mean,
)

GRID = Grid.uniform(50)


def test_smooth_mean_values():
    t = np.array([0.0, 0.25, 0.5])
    np.testing.assert_allclose(smooth_mean(t), [3.0, 8.0, 3.0], atol=1e-12)


def test_probe_mean_coefficients():
    """The probe mean is built to carry coefficient 0.5 on the quadratic."""
    grid = Grid.uniform(1001)
    mu = probe_mean(grid.points)
    coef = integrate(mu * quadratic_probe(grid.points), grid)
    assert coef == pytest.approx(0.5, abs=1e-3)


def test_model_presets_exist():
    for name in ["model1", "model2", "model3", "model4", "model5", "model6",
                 "probe-gaussian", "probe-t3", "probe-cauchy"]:
        m = model_preset(name)
        assert isinstance(m, ProcessModel)
    with pytest.raises(DataFormatError, match="unknown model"):
        model_preset("model99")


def test_error_model_validation():
    with pytest.raises(DataFormatError):
        ErrorModel("weibull")
    with pytest.raises(DataFormatError):
        ErrorModel("student")  # df missing
    with pytest.raises(DataFormatError):
        ErrorModel("gaussian", d=-0.3)
    with pytest.raises(DataFormatError):
        Contamination(0.5, 0.4)
    with pytest.raises(DataFormatError):
        RandomScale(2.0, 0.0)
    with pytest.raises(DataFormatError):
        ConstantScale(-1.0)


def test_generate_curves_deterministic():
    m = model_preset("model1")
    a = generate_curves(m, 10, GRID, 42)
    b = generate_curves(m, 10, GRID, 42)
    np.testing.assert_array_equal(a, b)
    c = generate_curves(m, 10, GRID, 43)
    assert not np.array_equal(a, c)


def test_contamination_only_touches_its_segment():
    """Substreams: the clean portion of a contaminated draw is bit-identical
    to the uncontaminated model under the same seed."""
    base = model_preset("model1")
    cont = model_preset("model5")
    a = generate_curves(base, 8, GRID, 7)
    b = generate_curves(cont, 8, GRID, 7)
    seg = (GRID.points >= 0.2) & (GRID.points <= 0.4)
    np.testing.assert_array_equal(a[:, ~seg], b[:, ~seg])
    assert not np.array_equal(a[:, seg], b[:, seg])


def test_gaussian_curves_have_exponential_correlation():
    m = ProcessModel("smooth", ErrorModel("gaussian", d=0.3), scale=ConstantScale(1.0))
    x = generate_curves(m, 4000, GRID, 11) - smooth_mean(GRID.points)
    j1, j2 = 10, 20
    gap = GRID.points[j2] - GRID.points[j1]
    emp = np.corrcoef(x[:, j1], x[:, j2])[0, 1]
    assert emp == pytest.approx(np.exp(-gap / 0.3), abs=0.05)


def test_cauchy_margins_are_heavy():
    m = model_preset("model3")
    x = generate_curves(m, 2000, GRID, 13)
    centered = np.abs(x - smooth_mean(GRID.points))
    # Cauchy: tail mass beyond 2*sigma*tan(0.45*pi) is about 10 percent
    thresh = 2.0 * np.tan(0.45 * np.pi)
    frac = (centered > thresh).mean()
    assert frac == pytest.approx(0.10, abs=0.02)


def test_ise_discrete_mean():
    theta = np.array([1.0, 2.0, 3.0])
    mu = np.array([0.0, 2.0, 1.0])
    assert ise(theta, mu) == pytest.approx((1 + 0 + 4) / 3)
    grid = Grid.uniform(3)
    ds = matrix_dataset(grid, np.tile(mu, (4, 1)), np.ones((4, 3), dtype=bool))
    est = fit_marginal(ds, huber(5.0))
    assert ise(est, mu) == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(DataFormatError):
        ise(theta, mu[:2])


def test_scenario_config_validation():
    m = model_preset("model1")
    with pytest.raises(DataFormatError):
        ScenarioConfig(model=m, scheme=complete(), n=1)
    with pytest.raises(DataFormatError):
        ScenarioConfig(model=m, scheme=complete(), losses=())
    with pytest.raises(ValueError):
        ScenarioConfig(model=m, scheme=complete(), losses=("huber",))  # bad spec
    with pytest.raises(DataFormatError):
        ScenarioConfig(model=m, scheme=complete(), alpha=0.0)


def test_run_ise_study_rows():
    cfg = ScenarioConfig(model=model_preset("model1"), scheme=random_interval(),
                         n=20, grid_size=30, losses=("square", "huber:0.8"),
                         repetitions=5, seed=100, model_name="model1")
    rows = run_ise_study(cfg)
    metrics = {(r["estimator"], r["metric"]) for r in rows}
    assert ("square", "median_ise") in metrics
    assert ("huber:0.8", "median_ise_ratio_square_over_this") in metrics
    assert all(r["scenario"] == "model1" for r in rows)
    assert all(np.isfinite(r["value"]) for r in rows)


def test_run_ise_study_thread_invariance():
    base = dict(model=model_preset("model1"), scheme=random_interval(),
                n=15, grid_size=25, losses=("huber:0.8",), repetitions=6,
                seed=200, model_name="model1")
    serial = run_ise_study(ScenarioConfig(threads=1, **base))
    threaded = run_ise_study(ScenarioConfig(threads=3, **base))
    assert serial == threaded


def test_run_coverage_study_rows():
    cfg = ScenarioConfig(model=model_preset("probe-gaussian"), scheme=complete(),
                         n=15, grid_size=25, losses=("huber:0.8",), B=100,
                         repetitions=4, seed=300, probes=("constant",),
                         model_name="probe-gaussian")
    rows = run_coverage_study(cfg)
    d = {r["metric"]: r["value"] for r in rows}
    assert 0.0 <= d["coverage"] <= 1.0
    assert d["median_ci_length"] > 0
    with pytest.raises(DataFormatError, match="needs at least one probe"):
        run_coverage_study(ScenarioConfig(model=model_preset("probe-gaussian"),
                                          scheme=complete(), probes=()))


def test_trim_restricts_analysis_window():
    cfg = ScenarioConfig(model=model_preset("probe-gaussian"),
                         scheme=random_interval(epsilon_trim=0.05),
                         n=15, grid_size=40, losses=("huber:0.8",), B=100,
                         repetitions=2, seed=400, probes=("constant",))
    rows = run_coverage_study(cfg)  # must not blow up on the trimmed grid
    assert rows


def test_read_scenario_config(tmp_path):
    p = tmp_path / "scenario.cfg"
    p.write_text(
        "# comment line\n"
        "study = coverage\n"
        "model = probe-cauchy\n"
        "scheme = random-interval:0.3,0.3\n"
        "trim = 0.01\n"
        "n = 40\n"
        "grid_size = 60\n"
        "losses = square; squantile:0.5,0.05\n"
        "B = 150\n"
        "R = 3\n"
        "seed = 99\n"
        "probes = constant; quadratic\n"
        "alpha = 0.1\n",
        encoding="utf-8",
    )
    study, cfg = read_scenario_config(p)
    assert study == "coverage"
    assert cfg.model_name == "probe-cauchy"
    assert cfg.scheme.epsilon_trim == 0.01
    assert cfg.losses == ("square", "squantile:0.5,0.05")
    assert cfg.probes == ("constant", "quadratic")
    assert cfg.B == 150 and cfg.repetitions == 3 and cfg.alpha == 0.1


def test_read_scenario_config_errors(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("model = model1\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="seed"):
        read_scenario_config(p)
    p.write_text("model = model1\nseed = 1\nfrobnicate = 9\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="unknown keys.*frobnicate"):
        read_scenario_config(p)
    p.write_text("model = model1\nseed = 1\nseed = 2\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="duplicate key"):
        read_scenario_config(p)
    p.write_text("just a line\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="key = value"):
        read_scenario_config(p)
    with pytest.raises(DataFormatError, match="cannot read"):
        read_scenario_config(tmp_path / "absent.cfg")


def test_model_mean_dispatch():
    m1 = model_preset("model1")
    mp = model_preset("probe-gaussian")
    t = np.linspace(0, 1, 7)
    np.testing.assert_array_equal(model_mean(m1, t), smooth_mean(t))
    np.testing.assert_array_equal(model_mean(mp, t), probe_mean(t))
