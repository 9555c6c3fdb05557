import numpy as np
import pytest

from smibctrl.configio import ConfigError
from smibctrl.control import synthesize_poly
from smibctrl.scenarios import (Event, ScenarioError, Trace,
                                UndefinedMetricError, compare_traces, damping_metric,
                                load_controller_config, parse_scenario, run_oracle_loop,
                                run_scenario)

from conftest import config_path


def synthetic_f(z):
    return 0.2 + 0.1 * np.tanh(z[0]) + 0.05 * z[1] - 0.03 * z[8]


def synthetic_g(z):
    return 1.0 + 0.25 * np.tanh(z[0] - 0.5 * z[2] + z[7])


def reference_series(n=500):
    r = np.ones(n)
    r[:50] = 0.0
    r[300:] = 0.4
    return r


def oracle_residuals(placement, trace):
    """Per-step defect of the target difference equation."""
    y = trace.v_t
    r = trace.v_ref
    res = []
    for k in range(len(y) - 1):
        acc = placement.k1 * r[k]
        for i in range(placement.p):
            if k - i < 0:
                past = 0.0
            else:
                past = y[k - i]
            acc -= placement.coeffs[placement.p - 1 - i] * past
        res.append(y[k + 1] - acc)
    return np.max(np.abs(res)) if res else 0.0


@pytest.mark.parametrize("p", [0, 1, 3, 7])
def test_oracle_loop_satisfies_difference_equation(p):
    placement = synthesize_poly([0.7] * p)
    trace = run_oracle_loop(placement, synthetic_f, synthetic_g, reference_series())
    assert oracle_residuals(placement, trace) <= 1e-12


def test_oracle_loop_deadbeat_case():
    placement = synthesize_poly([])
    r = reference_series()
    trace = run_oracle_loop(placement, synthetic_f, synthetic_g, r)
    assert np.max(np.abs(trace.v_t[1:] - r[:-1])) <= 1e-13


def test_oracle_loop_first_order_geometric():
    placement = synthesize_poly([0.7])
    r = np.ones(100)
    trace = run_oracle_loop(placement, synthetic_f, synthetic_g, r, y0=0.0)
    expected = 1.0 - 0.7 ** np.arange(100)
    assert np.max(np.abs(trace.v_t - expected)) <= 1e-12


def test_damping_metric_analytic_sinusoid():
    t = np.arange(0.0, 10.0, 0.002)
    delta = np.exp(-t) * np.cos(2 * np.pi * t)
    trace = Trace(t=t, v_ref=np.zeros_like(t), v_t=np.zeros_like(t),
                  v_f=np.zeros_like(t), delta=delta, omega=np.zeros_like(t),
                  e_star=np.zeros_like(t), adapted=np.zeros_like(t))
    metric = damping_metric(trace, 0.0)
    assert metric == pytest.approx(1.0, abs=0.02)


def test_damping_metric_undefined_for_constant():
    t = np.arange(0.0, 5.0, 0.002)
    trace = Trace(t=t, v_ref=np.zeros_like(t), v_t=np.zeros_like(t),
                  v_f=np.zeros_like(t), delta=np.full_like(t, 0.3),
                  omega=np.zeros_like(t), e_star=np.zeros_like(t),
                  adapted=np.zeros_like(t))
    with pytest.raises(UndefinedMetricError):
        damping_metric(trace, 0.0)


def test_trace_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    n = 25
    trace = Trace(t=np.arange(n) * 0.002,
                  v_ref=rng.normal(size=n), v_t=rng.normal(size=n),
                  v_f=rng.normal(size=n), delta=rng.normal(size=n),
                  omega=rng.normal(size=n), e_star=rng.normal(size=n),
                  adapted=(rng.uniform(size=n) > 0.5).astype(float))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,v_ref,v_t,v_f,delta,omega,e_star,adapted"
    loaded = Trace.from_csv(path)
    for name in ("t", "v_ref", "v_t", "v_f", "delta", "omega", "e_star", "adapted"):
        assert np.array_equal(getattr(loaded, name), getattr(trace, name))


def test_scenario_parsing(tmp_path):
    scen = tmp_path / "s.cfg"
    scen.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        f"controller = {config_path('ctrl_none.cfg')}\n"
        "t_end = 0.1\n"
        "event = 0.05 set_vref 1.2\n"
    )
    cfg = parse_scenario(scen)
    assert cfg.t_end == 0.1
    assert cfg.events == [Event(0.05, "set_vref", 1.2)]


def test_scenario_validation(tmp_path):
    scen = tmp_path / "s.cfg"
    scen.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        f"controller = {config_path('ctrl_none.cfg')}\n"
        "t_end = 1.0\nbogus = 1\n"
    )
    with pytest.raises(ScenarioError):
        parse_scenario(scen)
    scen.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        f"controller = {config_path('ctrl_none.cfg')}\n"
        "t_end = 1.0\nevent = 0.5 explode 2\n"
    )
    with pytest.raises(ScenarioError):
        parse_scenario(scen)
    scen.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        f"controller = {config_path('ctrl_none.cfg')}\n"
        "t_end = 1.0\nevent = 2.0 set_vref 1.2\n"
    )
    with pytest.raises(ScenarioError):
        parse_scenario(scen)


def test_controller_config_parsing():
    cfg = load_controller_config(config_path("ctrl_neural_track.cfg"))
    assert cfg.kind == "neural"
    assert cfg.p == 1 and cfg.poles == (0.7,)
    assert cfg.nu == 0.0 and cfg.d0 == 1e-4 and cfg.adapt
    assert cfg.g_min is None
    default = load_controller_config(config_path("ctrl_neural_default.cfg"))
    assert default.p == 7 and default.poles == (0.7,) * 7


def test_controller_config_validation(tmp_path):
    bad = tmp_path / "c.cfg"
    bad.write_text("controller = magic\n")
    with pytest.raises(ConfigError):
        load_controller_config(bad)
    bad.write_text("controller = neural\np = 2\n")  # no weights
    with pytest.raises(ConfigError):
        load_controller_config(bad)
    bad.write_text("controller = none\nwhatever = 3\n")
    with pytest.raises(ConfigError):
        load_controller_config(bad)


def test_controller_config_pole_list_infers_order(tmp_path):
    cfg_file = tmp_path / "c.cfg"
    cfg_file.write_text("controller = none\npole = 0.5\npole = 0.6\npole = 0.7\n")
    cfg = load_controller_config(cfg_file)
    assert cfg.p == 3 and cfg.poles == (0.5, 0.6, 0.7)


def test_uncontrolled_plant_holds_equilibrium(tmp_path):
    scen = tmp_path / "s.cfg"
    scen.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        f"controller = {config_path('ctrl_none.cfg')}\n"
        "t_end = 5.0\nv_ref = 1.1392\n"
    )
    trace = run_scenario(parse_scenario(scen))
    assert np.max(np.abs(trace.v_t - trace.v_t[0])) <= 1e-6
    assert abs(trace.v_t[0] - 1.1392) <= 1e-8


def test_event_applies_at_first_sample_not_before(tmp_path):
    scen = tmp_path / "s.cfg"
    scen.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        f"controller = {config_path('ctrl_none.cfg')}\n"
        "t_end = 0.2\nv_ref = 1.1392\n"
        "event = 0.1 set_vref 1.25\n"
    )
    trace = run_scenario(parse_scenario(scen))
    k = int(round(0.1 / 0.002))
    assert np.all(trace.v_ref[:k] == 1.1392)
    assert np.all(trace.v_ref[k:] == 1.25)


def test_shipped_scenarios_parse():
    for name in ("scen_step_nominal_neural.cfg", "scen_step_nominal_st1a.cfg",
                 "scen_step_far_neural.cfg", "scen_pss_step.cfg",
                 "scen_pss_step_nu0.cfg", "scen_big_swing.cfg", "scen_h_drift.cfg",
                 "scen_pm_drop.cfg", "scen_baseline_none.cfg"):
        cfg = parse_scenario(config_path(name))
        assert cfg.dt_control == 0.002


def test_far_point_step_tracks():
    trace = run_scenario(parse_scenario(config_path("scen_step_far_neural.cfg")))
    k = trace.at_time(2.0)
    assert abs(trace.v_t[k] - 2.1) / 2.1 <= 1e-3


def test_big_swing_completes_and_returns():
    trace = run_scenario(parse_scenario(config_path("scen_big_swing.cfg")))
    assert np.all(np.isfinite(trace.v_t))
    assert abs(trace.v_t[trace.at_time(2.5)] - 2.0) <= 0.01
    assert abs(trace.v_t[-1] - 1.1392) <= 0.005


def test_compare_traces_alignment():
    n = 10
    t = np.arange(n) * 0.002
    mk = lambda off: Trace(t=t, v_ref=np.full(n, off), v_t=np.arange(n) + off,
                           v_f=np.zeros(n), delta=np.zeros(n), omega=np.zeros(n),
                           e_star=np.zeros(n), adapted=np.zeros(n))
    common, diffs, stats = compare_traces(mk(0.0), mk(1.0))
    assert len(common) == n
    assert np.allclose(diffs["v_t"], -1.0)
    assert stats["v_t"] == (1.0, 1.0)
