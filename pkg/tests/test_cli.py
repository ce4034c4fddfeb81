"""Config parsing, experiment registry, and reproducible run outputs."""

import json

import numpy as np
import pytest

from dressedspin.cli import (
    ConfigError,
    _fmt_cell,
    list_experiments,
    load_config,
    main,
    run,
    spec_from_config,
    sweep_rng,
    write_csv,
)

REGISTRY = [
    "frame-check",
    "gate-compile",
    "leakage-report",
    "bangbang-sweep",
    "leo-verify",
    "froehlich-check",
    "bcs-uniform",
    "bcs-random",
    "gap-vs-filling",
    "two-qubit-check",
    "sector-crosscheck",
]


def write_config(path, text):
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# registry and argument handling


def test_registry_names_and_order():
    assert list_experiments().split("\n") == REGISTRY


def test_list_command(capsys):
    assert main(["list"]) == 0
    assert capsys.readouterr().out.strip().split("\n") == REGISTRY


def test_unknown_flag_is_rejected():
    with pytest.raises(SystemExit) as err:
        main(["run", "cfg.yaml", "--frobnicate"])
    assert err.value.code == 2


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2
    assert "config error" in capsys.readouterr().err


def test_non_mapping_root(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.yaml", "- just\n- a list\n")
    assert main(["run", cfg]) == 2
    assert "mapping" in capsys.readouterr().err


def test_unknown_experiment(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.yaml",
        "experiment:\n  name: does-not-exist\nspec:\n  K: 3\n",
    )
    assert main(["run", cfg]) == 2
    assert "unknown experiment" in capsys.readouterr().err


def test_missing_spec_field_names_the_path(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.yaml",
        "experiment:\n  name: frame-check\nspec: {}\n",
    )
    assert main(["run", cfg, "--out", str(tmp_path / "out")]) == 2
    assert "spec.K" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# config resolution


def test_spec_from_config_profiles_and_dipolar(tmp_path):
    cfg = {
        "spec": {
            "K": 4,
            "I": 0.5,
            "A_hf": 1.2,
            "alpha": {"perturbed": {"eps": 0.1}},
            "dipolar": {"random": {"scale": 0.05}},
            "zeeman": {"B": 2.0, "g_star": 2.0},
        }
    }
    spec = spec_from_config(cfg["spec"], sweep_rng(7, 0))
    assert spec.K == 4 and spec.A_hf == 1.2
    assert abs(np.sum(spec.alpha**2) - 1.0) < 1e-12
    assert spec.b is not None and np.max(np.abs(spec.b - spec.b.T)) == 0.0
    assert spec.zeeman.B == 2.0
    # same seed resolves the same random couplings
    again = spec_from_config(cfg["spec"], sweep_rng(7, 0))
    assert np.array_equal(spec.b, again.b)
    assert np.array_equal(spec.alpha, again.alpha)


def test_spec_from_config_geometry(tmp_path):
    geom_file = tmp_path / "sites.txt"
    geom_file.write_text("0 0 0\n1.5 0 0\n0 1.5 0\n")
    cfg = {
        "spec": {
            "K": 3,
            "alpha": "uniform",
            "dipolar": {"geometry": str(geom_file), "prefactor": 0.02},
        }
    }
    spec = spec_from_config(cfg["spec"], sweep_rng(0, 0))
    assert spec.b is not None and spec.b[0, 1] != 0.0


def test_spec_from_config_rejects_conflicting_dipolar():
    cfg = {
        "spec": {
            "K": 3,
            "alpha": "uniform",
            "dipolar": {"random": {"scale": 0.1}, "constrained": {"b_bar": 0.01}},
        }
    }
    with pytest.raises(ConfigError):
        spec_from_config(cfg["spec"], sweep_rng(0, 0))


def test_spec_from_config_rejects_unknown_zeeman_key():
    cfg = {"spec": {"K": 3, "alpha": "uniform", "zeeman": {"bee": 1.0}}}
    with pytest.raises(ConfigError):
        spec_from_config(cfg["spec"], sweep_rng(0, 0))


# ---------------------------------------------------------------------------
# serialization helpers


def test_cell_formats():
    assert _fmt_cell(True) == "1" and _fmt_cell(False) == "0"
    assert _fmt_cell(3) == "3"
    assert _fmt_cell(0.5) == "0.5"
    assert _fmt_cell(1.0 / 3.0) == "%.17g" % (1.0 / 3.0)


def test_write_csv_deterministic_bytes(tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    rows = [[1, 0.1, True], [2, 0.2, False]]
    write_csv(p1, ["i", "x", "flag"], rows)
    write_csv(p2, ["i", "x", "flag"], rows)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().splitlines()[0] == "i,x,flag"


def test_sweep_rng_streams_are_stable_and_independent():
    a1 = sweep_rng(5, 0).random(4)
    a2 = sweep_rng(5, 0).random(4)
    b = sweep_rng(5, 1).random(4)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)


# ---------------------------------------------------------------------------
# end-to-end runs


def test_frame_check_run(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.yaml",
        "experiment:\n  name: frame-check\n  F: 1.0\nspec:\n  K: 5\n  alpha: random\n",
    )
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out), "--seed", "3"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["experiment"] == "frame-check"
    summary = report["summary"]
    assert abs(summary["h_m"] - 1.0) < 1e-12
    assert summary["closure_residual"] < 1e-10
    assert summary["orthonormality_residual"] < 1e-12
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3


def test_bangbang_run_is_byte_deterministic(tmp_path):
    text = (
        "experiment:\n"
        "  name: bangbang-sweep\n"
        "  total_time: 2.0\n"
        "  k_min: 1\n"
        "  k_max: 3\n"
        "seed: 9\n"
        "spec:\n"
        "  K: 3\n"
        "  alpha: random\n"
        "  dipolar:\n"
        "    random:\n"
        "      scale: 0.05\n"
    )
    cfg = write_config(tmp_path / "cfg.yaml", text)
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert run(cfg, out_dir=str(out), seed=9) == 0
        outs.append(out)
    for fname in ("bangbang-sweep.csv", "bangbang-trace-k1.csv",
                  "bangbang-trace-k3.csv", "report.json"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


def test_worker_count_does_not_change_results(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.yaml",
        "experiment:\n  name: leo-verify\n  samples: 3\nspec:\n  K: 3\n",
    )
    byte_sets = []
    for workers, name in ((1, "w1"), (2, "w2")):
        out = tmp_path / name
        assert run(cfg, out_dir=str(out), workers=workers, seed=4) == 0
        byte_sets.append((out / "leo-verify.csv").read_bytes())
    assert byte_sets[0] == byte_sets[1]
    report = json.loads((tmp_path / "w1" / "report.json").read_text())
    assert report["summary"]["max_dual_dev"] < 1e-10
    assert report["summary"]["max_anticommutator_norm"] < 1e-10


def test_json_config_accepted(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "experiment": {"name": "froehlich-check", "F": 1.0},
        "spec": {"K": 4, "alpha": "uniform"},
    }))
    out = tmp_path / "out"
    assert run(str(cfg_path), out_dir=str(out)) == 0
    summary = json.loads((out / "report.json").read_text())["summary"]
    assert len(summary["error_ratios"]) == 2
    for ratio in summary["error_ratios"]:
        assert 3.0 < ratio < 5.0
    assert (out / "froehlich-check.csv").exists()


def test_leakage_report_constrained_run(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.yaml",
        "experiment:\n"
        "  name: leakage-report\n"
        "  scan: false\n"
        "spec:\n"
        "  K: 5\n"
        "  alpha:\n"
        "    perturbed: { eps: 0.1 }\n"
        "  dipolar:\n"
        "    constrained: { b_bar: 0.02 }\n",
    )
    out = tmp_path / "out"
    assert run(cfg, out_dir=str(out), seed=12) == 0
    summary = json.loads((out / "report.json").read_text())["summary"]
    bath = summary["bath_coupling"]
    assert bath["leak_norm"] < 1e-8
    names = [c["name"] for c in bath["checks"]]
    # the constrained block's mean coupling feeds the family-specific check
    assert "constrained_excited_shift" in names
    cons = next(c for c in bath["checks"] if c["name"] == "constrained_excited_shift")
    assert abs(cons["computed"] - 6.0 * 0.5 * 0.02) < 1e-10
    assert not cons["matches"]


def test_two_qubit_run(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.yaml",
        "experiment:\n  name: two-qubit-check\n  J: 0.25\nspec:\n  K: 2\n  alpha: random\n",
    )
    out = tmp_path / "out"
    assert run(cfg, out_dir=str(out), seed=1) == 0
    summary = json.loads((out / "report.json").read_text())["summary"]
    assert summary["dim"] == 9
    assert summary["rep_deviation"] < 1e-10
    assert summary["leak_residual"] < 1e-10
    assert abs(summary["invariants"][0]["re"]) < 1e-10
    assert abs(summary["invariants"][1]["re"] - 1.0) < 1e-10
    assert summary["identity_invariant_deviation"] < 1e-10


def test_run_reports_config_error_for_bad_sector_size(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "cfg.yaml",
        "experiment:\n  name: sector-crosscheck\nspec:\n  K: 40\n  alpha: uniform\n",
    )
    assert main(["run", cfg, "--out", str(tmp_path / "out")]) == 2
    assert "config error" in capsys.readouterr().err
