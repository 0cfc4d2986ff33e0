import json

import numpy as np
import pytest

from sparsefpca import DataTooSparseError, DesignSpec, PanelParseError, SparsePanel, fit_fpca, simulate_panel
from sparsefpca.cli import main
from sparsefpca.experiments import run_fit
from sparsefpca.io import read_panel_csv, write_panel_csv


def _write(tmp_path, text, name="panel.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_round_trip_is_bit_exact(tmp_path, rank2_model, design3):
    panel = simulate_panel(rank2_model, design3, 120, seed=42)
    path = tmp_path / "panel.csv"
    write_panel_csv(panel, path)
    back = read_panel_csv(path)
    for (ta, ya), (tb, yb) in zip(panel.subjects(), back.subjects()):
        assert ta.tobytes() == tb.tobytes() and ya.tobytes() == yb.tobytes()
    a = fit_fpca(panel)
    b = fit_fpca(back)
    assert a.eigen.values.tobytes() == b.eigen.values.tobytes()


def test_single_observation_subject_recorded(tmp_path, rank2_model, design3):
    panel = simulate_panel(rank2_model, design3, 80, seed=1)
    times = list(panel.times)
    values = list(panel.values)
    times[5], values[5] = times[5][:1], values[5][:1]
    panel = SparsePanel(times, values)
    fit = run_fit(panel, tmp_path / "fit")
    meta = json.loads((tmp_path / "fit" / "metadata.json").read_text())
    assert meta["dropped_subjects"] == [5]
    assert meta["covariance_excluded_subjects"] == [5]
    assert meta["pair_count_N"] == 79 * 3
    assert meta["observations"] == 79 * 3 + 1
    # the lone observation still moves the mean estimate
    others = SparsePanel(times[:5] + times[6:], values[:5] + values[6:])
    assert not np.array_equal(fit.mean.values, fit_fpca(others).mean.values)


def test_artifacts_written(tmp_path, rank2_model, design3):
    panel = simulate_panel(rank2_model, design3, 100, seed=2)
    run_fit(panel, tmp_path, j0=2)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == [
        "covariance.csv",
        "eigenfunction_1.csv",
        "eigenfunction_2.csv",
        "eigenvalues.json",
        "mean.csv",
        "metadata.json",
    ]
    ev = json.loads((tmp_path / "eigenvalues.json").read_text())
    assert len(ev["eigenvalues"]) == 2 and len(ev["negative"]) == 2
    rows = (tmp_path / "covariance.csv").read_text().splitlines()
    assert rows[0] == "u,v,value" and len(rows) == 1 + 101 * 101


def test_all_subjects_too_sparse(tmp_path):
    panel = SparsePanel([np.array([0.1]), np.array([0.5])], [np.ones(1), np.ones(1)])
    with pytest.raises(DataTooSparseError):
        run_fit(panel, tmp_path)


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("a,b,c\n1,0.1,2\n", 1),
        ("subject,t,y\n", 2),
        ("subject,t,y\n1,0.1,2\n1,0.2\n", 3),
        ("subject,t,y\n1,0.1,2\n2,zero,1\n", 3),
        ("subject,t,y\n1,0.1,2\n2,1.5,1\n", 3),
        ("subject,t,y\n1,0.1,nan\n", 2),
    ],
)
def test_parse_errors_name_lines(tmp_path, text, line):
    with pytest.raises(PanelParseError) as err:
        read_panel_csv(_write(tmp_path, text))
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_string_labels_and_order(tmp_path):
    p = _write(tmp_path, "subject,t,y\nb,0.5,1\na,0.2,2\nb,0.1,3\n")
    panel = read_panel_csv(p)
    assert list(panel.labels) == ["b", "a"]
    assert panel.times[0].tolist() == [0.1, 0.5] and panel.values[0].tolist() == [3.0, 1.0]


# -- command line ----------------------------------------------------------


def test_cli_simulate_then_fit(tmp_path, capsys):
    assert main(["simulate", "--n", "60", "--seed", "5", "--out", str(tmp_path / "sim")]) == 0
    panel = tmp_path / "sim" / "panel.csv"
    assert panel.exists()
    assert main(["fit", str(panel), "--out", str(tmp_path / "fit"), "--grid", "51"]) == 0
    meta = json.loads((tmp_path / "fit" / "metadata.json").read_text())
    assert meta["grid"]["size"] == 51 and meta["n"] == 60


def test_cli_global_flags_before_subcommand(tmp_path):
    assert main(["--seed", "9", "--out", str(tmp_path), "simulate", "--n", "10"]) == 0
    assert json.loads((tmp_path / "simulate.json").read_text())["seed"] == 9


def test_cli_parse_error_exit_code(tmp_path, capsys):
    bad = _write(tmp_path, "subject,t,y\n1,0.5,abc\n", "bad.csv")
    assert main(["fit", str(bad), "--out", str(tmp_path / "f")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_cli_validation_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "rate-study", "n_ladder": [100, 200]}))
    assert main(["rate-study", "--config", str(cfg)]) == 1
    assert "3 rungs" in capsys.readouterr().err


def test_cli_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "oracle", "colour": 1}))
    assert main(["oracle", "--config", str(cfg)]) == 1


def test_cli_oracle_prints_constants(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "oracle", "options": {"mc_draws": 20000}}))
    assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert {"C1", "C2", "sigma_matrix", "d_matrix", "N"} <= set(out)
    assert (tmp_path / "oracle.json").exists()


def test_cli_verdict_failure_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    # a slope band nobody can hit forces a failing verdict
    cfg.write_text(
        json.dumps(
            {
                "kind": "rate-study",
                "n_ladder": [60, 90, 120],
                "replicates": 20,
                "regime": "eigenvalue",
                "options": {"eigenvalue_slope_target": 5.0, "mc_draws": 20000},
            }
        )
    )
    assert main(["rate-study", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert (tmp_path / "o" / "rate_study.json").exists()
    header = (tmp_path / "o" / "rate_study_summary.csv").read_text().splitlines()[0]
    assert header == "n,statistic,value"


@pytest.mark.parametrize("cmd", ["simulate", "fit", "rate-study", "design-demo", "transition-study", "oracle"])
def test_cli_subcommands_exist(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    assert "--threads" in capsys.readouterr().out
