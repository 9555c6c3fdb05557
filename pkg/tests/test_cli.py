import filecmp
import os

import numpy as np

from smibctrl.cli import cli_dispatch

from conftest import config_path


def write_small_identify(tmp_path, seed=3):
    cfg = tmp_path / "ident.cfg"
    cfg.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        "v_target = 1.1392\n"
        "n_samples = 400\n"
        "hold = 2\n"
        f"seed = {seed}\n"
    )
    return cfg


def write_small_train(tmp_path, dataset):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(
        f"dataset = {dataset}\n"
        "hidden = 4\n"
        "max_iter = 25\n"
        "seed = 17\n"
    )
    return cfg


def test_identify_then_train_then_validate(tmp_path, capsys):
    ident = write_small_identify(tmp_path)
    data = tmp_path / "data.csv"
    assert cli_dispatch(["identify", "--config", str(ident), "--out", str(data)]) == 0
    header = data.read_text().splitlines()[0]
    assert header == "k,u,y"

    train = write_small_train(tmp_path, data)
    weights = tmp_path / "w.nwt"
    assert cli_dispatch(["train", "--config", str(train), "--out", str(weights)]) == 0
    assert weights.exists()
    assert (tmp_path / "w_cost.csv").exists()

    val = tmp_path / "val.cfg"
    val.write_text(f"dataset = {data}\nweights = {weights}\n")
    err_csv = tmp_path / "errors.csv"
    assert cli_dispatch(["validate", "--config", str(val), "--out", str(err_csv)]) == 0
    out = capsys.readouterr().out
    assert "relative err" in out and "deadzone" in out
    assert err_csv.read_text().splitlines()[0] == "k,error"


def test_train_determinism(tmp_path):
    ident = write_small_identify(tmp_path)
    d1, d2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_dispatch(["identify", "--config", str(ident), "--out", str(d1)]) == 0
    assert cli_dispatch(["identify", "--config", str(ident), "--out", str(d2)]) == 0
    assert filecmp.cmp(d1, d2, shallow=False)

    train = write_small_train(tmp_path, d1)
    w1, w2 = tmp_path / "w1.nwt", tmp_path / "w2.nwt"
    assert cli_dispatch(["train", "--config", str(train), "--out", str(w1)]) == 0
    assert cli_dispatch(["train", "--config", str(train), "--out", str(w2)]) == 0
    assert filecmp.cmp(w1, w2, shallow=False)


def test_seed_flag_overrides_config(tmp_path):
    ident = write_small_identify(tmp_path, seed=3)
    d1, d2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_dispatch(["identify", "--config", str(ident), "--out", str(d1)]) == 0
    assert cli_dispatch(["identify", "--config", str(ident), "--seed", "99",
                         "--out", str(d2)]) == 0
    assert not filecmp.cmp(d1, d2, shallow=False)


def test_simulate_writes_trace_contract(tmp_path):
    scen = tmp_path / "s.cfg"
    scen.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        f"controller = {config_path('ctrl_st1a.cfg')}\n"
        "t_end = 0.2\n"
    )
    out = tmp_path / "t.csv"
    assert cli_dispatch(["simulate", "--config", str(scen), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,v_ref,v_t,v_f,delta,omega,e_star,adapted"
    assert len(lines) == 1 + 100


def test_minphase_default_grid(tmp_path, capsys):
    out = tmp_path / "zeros.csv"
    code = cli_dispatch(["minphase", "--config", config_path("minphase_ref.cfg"),
                         "--out", str(out)])
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "v_target,cb,zero_re,zero_im"
    data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
    assert set(np.unique(data[:, 0])) == {1.0, 1.1392, 1.5, 2.0}
    assert np.all(data[:, 2] < 0.0)


def test_compare_command(tmp_path, capsys):
    scen = tmp_path / "s.cfg"
    scen.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        f"controller = {config_path('ctrl_st1a.cfg')}\n"
        "t_end = 0.1\n"
    )
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_dispatch(["simulate", "--config", str(scen), "--out", str(a)]) == 0
    assert cli_dispatch(["simulate", "--config", str(scen), "--out", str(b)]) == 0
    diff = tmp_path / "d.csv"
    assert cli_dispatch(["compare", str(a), str(b), "--out", str(diff)]) == 0
    out = capsys.readouterr().out
    assert "max |diff|" in out
    body = diff.read_text().splitlines()
    assert body[0].startswith("t,d_")


def test_unknown_subcommand_exits_2(capsys):
    assert cli_dispatch(["explode"]) == 2


def test_unknown_flag_exits_2(capsys):
    assert cli_dispatch(["simulate", "--config", "x", "--frobnicate"]) == 2


def test_config_error_exits_2(tmp_path, capsys):
    scen = tmp_path / "s.cfg"
    scen.write_text("not a scenario\n")
    assert cli_dispatch(["simulate", "--config", str(scen), "--out",
                         str(tmp_path / "t.csv")]) == 2
    assert cli_dispatch(["simulate", "--config", str(tmp_path / "missing.cfg"),
                         "--out", str(tmp_path / "t.csv")]) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    scen = tmp_path / "s.cfg"
    scen.write_text(
        f"machine = {config_path('machine_ref.cfg')}\n"
        f"controller = {config_path('ctrl_none.cfg')}\n"
        "t_end = 0.5\n"
        "v_ref = 0.2\n"  # no synchronized operating point this low
    )
    assert cli_dispatch(["simulate", "--config", str(scen), "--out",
                         str(tmp_path / "t.csv")]) == 3
