import filecmp
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from qconv.cli import main
from qconv.errors import ConfigError, SchemaMismatch
from qconv.experiments import (
    emit_convergence_plot,
    generate_mdp,
    load_config,
    run_experiment,
)
from qconv.mdp import PointMass, validate_mdp

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

QLEARN = {
    "seeds": [0],
    "mdp": {"generate": {"n_states": 5, "n_actions": 3, "reward_family": "gaussian", "seed": 7}},
    "learner": {"schedule": {"family": "visit_harmonic", "c0": 1.0},
                "behavior": {"family": "epsilon_greedy", "eps0": 0.1},
                "horizon": 1000, "record_every": 100},
}


def write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def run(command, cfg_path, out, **kw):
    return run_experiment(load_config(command, cfg_path, out, **kw))


def listing(d: Path):
    return sorted(str(p.relative_to(d)) for p in d.rglob("*") if p.is_file())


# ---- generator -----------------------------------------------------------------------


def test_generate_trivial():
    spec = generate_mdp(1, 1, "point_mass", seed=0)
    mdp = validate_mdp(spec)
    assert mdp.trans.shape == (1, 1, 1) and mdp.trans[0, 0, 0] == 1.0
    assert isinstance(spec.rewards[0][0], PointMass)


def test_generate_deterministic():
    a, b = generate_mdp(4, 2, "student_t", seed=3), generate_mdp(4, 2, "student_t", seed=3)
    assert repr(a) == repr(b)
    assert repr(a) != repr(generate_mdp(4, 2, "student_t", seed=4))


@pytest.mark.parametrize("family", ["gaussian", "uniform", "student_t", "shifted_exponential", "point_mass"])
def test_generate_families_validate(family):
    mdp = validate_mdp(generate_mdp(5, 3, family, seed=7))
    assert np.all(np.abs(mdp.reward_mean) <= 1.0 + 1e-12)
    np.testing.assert_allclose(mdp.trans.sum(axis=2), 1.0, atol=1e-12)


def test_generate_noise_sd():
    for family in ("gaussian", "uniform", "student_t", "shifted_exponential"):
        spec = generate_mdp(2, 2, family, seed=1, noise=0.5)
        m, second = spec.rewards[0][0].moments()
        assert second - m * m == pytest.approx(0.25, rel=1e-12), family


def test_generate_errors():
    with pytest.raises(ConfigError):
        generate_mdp(0, 1, "gaussian", seed=0)
    with pytest.raises(ConfigError):
        generate_mdp(2, 2, "cauchy", seed=0)


# ---- config / manifest ---------------------------------------------------------------


def test_manifest_lists_exactly_the_files(tmp_path):
    cfg = write(tmp_path, "q.yaml", QLEARN)
    out = tmp_path / "out"
    m = run("qlearn", cfg, out)
    assert m.exit_code == 0
    assert sorted(m.files) == listing(out)
    assert set(m.files) == {"qlearn_seed0.csv", "qlearn_seed0.json", "qlearn_convergence.svg", "manifest.json"}
    on_disk = json.loads((out / "manifest.json").read_text())
    assert on_disk["config_hash"] == hashlib.sha256(cfg.read_bytes()).hexdigest()
    assert on_disk["seeds"] == [0]
    assert on_disk["csv_schemas"]["trajectory"][:2] == ["t", "sup_error"]


def test_seed_override_and_errors(tmp_path):
    cfg = write(tmp_path, "q.yaml", {**QLEARN, "seeds": [0, 1, 2]})
    assert load_config("qlearn", cfg, tmp_path, seed=5).seeds == [5]
    with pytest.raises(ConfigError):
        load_config("qlearn", tmp_path / "missing.yaml", tmp_path)
    with pytest.raises(ConfigError):
        load_config("dance", cfg, tmp_path)
    with pytest.raises(ConfigError):
        load_config("qlearn", write(tmp_path, "e.yaml", {**QLEARN, "seeds": []}), tmp_path)


def test_per_run_failure_does_not_abort_siblings(tmp_path):
    bad = dict(QLEARN, seeds=[0, 1])
    bad["learner"] = dict(QLEARN["learner"], q_init=[[0.0]])  # wrong shape for every seed
    m = run("qlearn", write(tmp_path, "b.yaml", bad), tmp_path / "o")
    assert m.exit_code != 0
    assert len(m.runs) == 2 and all(r.error for r in m.runs)


def test_failed_check_sets_exit_code(tmp_path):
    cfg = dict(QLEARN, checks={"max_error_ratio": 1e-9})
    assert main(["qlearn", "--config", str(write(tmp_path, "c.yaml", cfg)), "--out", str(tmp_path / "o")]) == 1


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["qlearn", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_identical_runs_byte_identical(tmp_path):
    cfg = write(tmp_path, "q.yaml", dict(QLEARN, seeds=[0, 1]))
    run("qlearn", cfg, tmp_path / "a")
    run("qlearn", cfg, tmp_path / "b", parallel=2)
    for name in ("qlearn_seed0.csv", "qlearn_seed1.csv", "qlearn_seed0.json", "qlearn_convergence.svg"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False), name


def test_lemmas_csv_final_row(tmp_path):
    cfg = {"seeds": [0], "lemmas": [{"lemma": 4, "x0": 1.0, "gamma": 0.5, "eps": 0.2, "N": 10**6, "tol": 1e-4,
                                     "schedule": {"family": "global_polynomial", "c0": 1.0, "p": 0.7}}]}
    out = tmp_path / "o"
    m = run("lemmas", write(tmp_path, "l.yaml", cfg), out)
    assert m.exit_code == 0
    csvs = sorted(out.glob("*.csv"))
    lines = csvs[0].read_text().splitlines()
    assert lines[0] == "n,x_n,oracle_n,abs_err"
    last = lines[-1].split(",")
    assert int(last[0]) == 10**6
    assert abs(float(last[1]) - 0.2) < 1e-4


# ---- plotting ------------------------------------------------------------------------


def _traj(path, errs, t=None):
    t = range(len(errs)) if t is None else t
    path.write_text("t,sup_error\n" + "".join(f"{a},{e!r}\n" for a, e in zip(t, errs)))
    return path


def test_plot_curve_counts(tmp_path):
    one = _traj(tmp_path / "a.csv", [1.0, 0.5, 0.1])
    assert emit_convergence_plot([one], tmp_path / "one.svg") == 2
    many = [_traj(tmp_path / f"s{i}.csv", [1.0, 0.5 / (i + 1), 0.1]) for i in range(10)]
    assert emit_convergence_plot(many, tmp_path / "many.svg") == 11
    assert (tmp_path / "many.svg").read_text().startswith("<?xml")


def test_plot_schema_errors(tmp_path):
    with pytest.raises(SchemaMismatch):
        emit_convergence_plot([], tmp_path / "x.svg")
    a = _traj(tmp_path / "a.csv", [1.0, 0.5])
    b = tmp_path / "b.csv"
    b.write_text("n,x_n\n0,1.0\n")
    with pytest.raises(SchemaMismatch):
        emit_convergence_plot([a, b], tmp_path / "x.svg")
    c = _traj(tmp_path / "c.csv", [1.0, 0.5], t=[0, 7])
    with pytest.raises(SchemaMismatch):
        emit_convergence_plot([a, c], tmp_path / "x.svg")


def test_plot_deterministic(tmp_path):
    a = _traj(tmp_path / "a.csv", [1.0, 0.5, 0.1])
    emit_convergence_plot([a], tmp_path / "1.svg")
    emit_convergence_plot([a], tmp_path / "2.svg")
    assert filecmp.cmp(tmp_path / "1.svg", tmp_path / "2.svg", shallow=False)


# ---- shipped configs ---------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.parametrize("name", ["solve", "qlearn", "sarsa", "decompose", "bounds", "lemmas", "ripple",
                                  "pgcheck"])
def test_shipped_configs_pass(tmp_path, name):
    out = tmp_path / name
    m = run(name, CONFIGS / f"{name}.yaml", out)
    assert m.exit_code == 0, (m.checks, [r.error for r in m.runs])
    assert sorted(m.files) == listing(out)


def test_report_over_earlier_run(tmp_path):
    run("qlearn", write(tmp_path, "q.yaml", dict(QLEARN, seeds=[0, 1])), tmp_path / "runs" / "qlearn")
    cfgdir = tmp_path / "cfg"
    cfgdir.mkdir()
    rep = write(cfgdir, "report.yaml", {"inputs": ["../runs/qlearn/qlearn_seed*.csv"], "plot": "r.svg"})
    m = run("report", rep, tmp_path / "rep")
    assert m.exit_code == 0
    assert (tmp_path / "rep" / "r.svg").exists()
