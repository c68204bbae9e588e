"""Config-driven experiment runner.

A config is a YAML mapping. Every subcommand reads the sections it needs:

    seeds: [0, 1, 2]          # replica seeds (``--seed`` overrides)
    parallel: 1               # worker processes (``--parallel`` overrides)
    mdp:                      # explicit rows (see ``mdp_from_dict``), a file
      generate:               # reference, or a generator call
        n_states: 5
        n_actions: 3
        reward_family: gaussian
        seed: 7
        gamma: 0.9
    learner:                  # see ``learn_config_from_dict``
      schedule: {family: visit_harmonic, c0: 1.0}
      behavior: {family: epsilon_greedy, eps0: 0.1}
      horizon: 100000
      record_every: 1000
    checks: {...}             # optional pass/fail thresholds per subcommand

Outputs go to ``--out``; ``manifest.json`` lists every file written along
with the config hash, seeds, wall times and check results. The process exit
code is 0 iff every check passed and no run failed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import yaml

from . import __version__
from .diagnostics import (
    DECOMP_COLUMNS,
    decompose_run,
    kt_sequence,
    lemma1_check,
    lt_moment_check,
    noise_summability_check,
)
from .errors import ConfigError, QconvError, SchemaMismatch
from .learn import (
    TRAJECTORY_COLUMNS,
    learn_config_from_dict,
    q_learning_run,
    sarsa_run,
    summary,
    write_csv,
)
from .mdp import (
    FAMILIES,
    Gaussian,
    MdpSpec,
    PointMass,
    ShiftedExponential,
    StudentT,
    Uniform,
    ValidatedMdp,
    dist_from_dict,
    mdp_from_dict,
    validate_mdp,
)
from .schedules import schedule_from_dict
from .solver import greedy_policy, value_iterate

log = logging.getLogger("qconv")

RECURRENCE_COLUMNS = ("n", "x_n", "oracle_n", "abs_err")
RIPPLE_COLUMNS = ("t", "sup_error", "mean_error")
CSV_SCHEMAS = {
    "trajectory": list(TRAJECTORY_COLUMNS),
    "decomposition": list(DECOMP_COLUMNS),
    "recurrence": list(RECURRENCE_COLUMNS),
    "ripple": list(RIPPLE_COLUMNS),
}
SCHEMA_VERSION = 1
COMMANDS = ("solve", "qlearn", "sarsa", "decompose", "bounds", "lemmas", "ripple", "pgcheck", "report")


# --------------------------------------------------------------------------
# random instances
# --------------------------------------------------------------------------


def _noisy(family: str, mean: float, noise: float):
    if family == "gaussian":
        return Gaussian(mean, noise)
    if family == "uniform":
        half = math.sqrt(3.0) * noise
        return Uniform(mean - half, mean + half)
    if family == "student_t":
        # dof 3: heavy tails, finite variance; scale chosen so the sd equals noise
        return StudentT(3.0, mean, noise / math.sqrt(3.0))
    if family == "shifted_exponential":
        return ShiftedExponential(1.0 / noise, mean - noise)
    if family == "point_mass":
        return PointMass(mean)
    raise ConfigError(f"unknown reward family {family!r}; expected one of {sorted(FAMILIES)}")


def generate_mdp(n_states: int, n_actions: int, reward_family: str, seed: int,
                 gamma: float = 0.9, noise: float = 1.0) -> MdpSpec:
    """Dirichlet(1) transition rows and Uniform(-1, 1) reward means.

    Noise has standard deviation ``noise`` in every family except the point
    mass. Deterministic given the arguments.
    """
    if n_states < 1 or n_actions < 1:
        raise ConfigError("sizes must be >= 1")
    rng = np.random.default_rng(seed)
    trans = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    trans /= trans.sum(axis=2, keepdims=True)
    means = rng.uniform(-1.0, 1.0, (n_states, n_actions))
    rewards = [[_noisy(reward_family, float(means[s, a]), noise) for a in range(n_actions)]
               for s in range(n_states)]
    return MdpSpec(n_states, n_actions, trans.tolist(), rewards, gamma)


_GEN_KEYS = {"n_states", "n_actions", "reward_family", "seed", "gamma", "noise"}


def load_mdp(section: Mapping[str, Any], base: Path | None = None) -> ValidatedMdp:
    if not isinstance(section, Mapping):
        raise ConfigError("mdp section must be a mapping")
    if "generate" in section:
        gen = dict(section["generate"])
        extra = set(gen) - _GEN_KEYS
        if extra:
            raise ConfigError(f"unknown generator keys: {sorted(extra)}")
        return validate_mdp(generate_mdp(**gen))
    if "file" in section:
        path = Path(section["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"mdp file {path} does not exist")
        with open(path) as fh:
            return validate_mdp(mdp_from_dict(yaml.safe_load(fh)))
    return validate_mdp(mdp_from_dict(section))


# --------------------------------------------------------------------------
# config and manifest
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    command: str
    raw: dict
    seeds: list
    out_dir: Path
    parallel: int = 1
    config_hash: str = ""
    source: str | None = None

    def section(self, name: str, required: bool = True) -> Any:
        if name not in self.raw:
            if required:
                raise ConfigError(f"{self.command} needs a {name!r} section")
            return {}
        return self.raw[name]

    @property
    def base(self) -> Path | None:
        return Path(self.source).parent if self.source else None


def load_config(command: str, path: str | os.PathLike | None, out_dir, seed: int | None = None,
                parallel: int | None = None) -> ExperimentConfig:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    data, digest = b"", hashlib.sha256(b"").hexdigest()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config {path} does not exist")
        data = path.read_bytes()
        digest = hashlib.sha256(data).hexdigest()
    raw = yaml.safe_load(data) if data else {}
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    seeds = [seed] if seed is not None else list(raw.get("seeds", [0]))
    if not seeds:
        raise ConfigError("seed list must not be empty")
    par = int(parallel if parallel is not None else raw.get("parallel", 1))
    if par < 1:
        raise ConfigError("parallel must be >= 1")
    return ExperimentConfig(command, raw, seeds, Path(out_dir), par, digest,
                            str(path) if path is not None else None)


@dataclass
class RunRecord:
    seed: Any
    files: list = field(default_factory=list)
    wall_time: float = 0.0
    checks: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and all(self.checks.values())


@dataclass
class RunManifest:
    tool_version: str
    command: str
    config_hash: str
    config_path: str | None
    seeds: list
    runs: list
    files: list
    wall_time: float
    checks: dict
    exit_code: int
    csv_schemas: dict = field(default_factory=lambda: dict(CSV_SCHEMAS))
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["runs"] = [r.__dict__ for r in self.runs]
        return json.dumps(d, indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.bool_,)):
        return bool(x)
    raise TypeError(f"not serialisable: {type(x)}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# per-seed workers
# --------------------------------------------------------------------------


def _seed_tag(seed) -> str:
    return "-".join(str(s) for s in seed) if isinstance(seed, (list, tuple)) else str(seed)


def _learn_worker(cfg: ExperimentConfig, seed, out: Path, algorithm: str) -> RunRecord:
    mdp = load_mdp(cfg.section("mdp"), cfg.base)
    qstar, _ = value_iterate(mdp)
    lcfg = learn_config_from_dict(cfg.section("learner"), seed=seed)
    run = q_learning_run if algorithm == "qlearn" else sarsa_run
    diag = run(mdp, qstar, lcfg)
    tag = _seed_tag(seed)
    traj = out / f"{algorithm}_seed{tag}.csv"
    diag.to_csv(traj)
    summ = summary(diag, lcfg, algorithm)
    summ.pop("wall_time")
    summ.pop("backend")
    js = out / f"{algorithm}_seed{tag}.json"
    _write_json(js, summ)
    rec = RunRecord(seed, [traj.name, js.name], diag.wall_time)
    ratio = cfg.section("checks", required=False).get("max_error_ratio")
    if ratio is not None:
        rec.checks["error_ratio"] = diag.final_error < float(ratio) * diag.initial_error
    return rec


def _decompose_worker(cfg: ExperimentConfig, seed, out: Path) -> RunRecord:
    mdp = load_mdp(cfg.section("mdp"), cfg.base)
    qstar, _ = value_iterate(mdp)
    lcfg = learn_config_from_dict(cfg.section("learner"), seed=seed)
    start = time.perf_counter()
    tr = decompose_run(mdp, qstar, lcfg, keep_tables=False)
    tag = _seed_tag(seed)
    path = out / f"decompose_seed{tag}.csv"
    write_csv(path, DECOMP_COLUMNS, tr.rows())
    scale = max(1.0, float(np.max(np.abs(qstar))), float(tr.sup_delta.max()))
    noise = noise_summability_check(tr, lcfg.schedule, mdp)
    checks = {
        "identity": tr.max_identity_residual <= 1e-9 * scale,
        "contraction": tr.max_contraction_margin <= 1e-12 * scale,
    }
    if lcfg.schedule.family != "constant":
        checks["noise_summable"] = noise.passed
    js = out / f"decompose_seed{tag}.json"
    _write_json(js, {
        "seed": seed,
        "max_identity_residual": tr.max_identity_residual,
        "max_contraction_margin": tr.max_contraction_margin,
        "noise_sum": noise.total,
        "noise_bound": noise.bound,
        "noise_bound_squared": noise.bound_squared,
        "noise_last_decile_fraction": noise.last_decile_fraction,
        "final_w_over_peak": float(tr.sup_w[-1] / tr.sup_w.max()) if tr.sup_w.max() > 0 else 0.0,
    })
    return RunRecord(seed, [path.name, js.name], time.perf_counter() - start, checks)


def _ripple_worker(cfg: ExperimentConfig, seed, out: Path) -> RunRecord:
    from .ripple import GridQ, continuous_qstar, kernel_from_dict, ripple_q_run, smoothness_check

    cmdp = _cmdp_from_dict(cfg.section("cmdp"))
    kernel = kernel_from_dict(cfg.section("kernel"))
    gsec = cfg.section("grid")
    grid = GridQ(int(gsec["n"]), int(gsec.get("dim", cmdp.dim)))
    lcfg = learn_config_from_dict(cfg.section("learner"), seed=seed)
    diag = ripple_q_run(cmdp, kernel, grid, lcfg)
    tag = _seed_tag(seed)
    path = out / f"ripple_seed{tag}.csv"
    write_csv(path, RIPPLE_COLUMNS, zip(diag.t.tolist(), diag.sup_error, diag.mean_error))
    gpath = out / f"ripple_grid_seed{tag}.csv"
    grid.to_csv(gpath, continuous_qstar(cmdp).on_grid(grid))
    rec = RunRecord(seed, [path.name, gpath.name], diag.wall_time)
    checks = cfg.section("checks", required=False)
    if "max_final_error" in checks:
        rec.checks["final_error"] = diag.final_error < float(checks["max_final_error"])
    if "lipschitz_slack" in checks and kernel.continuous:
        rec.checks["smoothness"] = smoothness_check(cmdp, grid, float(checks["lipschitz_slack"]))[2]
    return rec


def _cmdp_from_dict(d):
    from .ripple import ContinuousMdp, mean_from_dict

    d = dict(d)
    try:
        means = tuple(mean_from_dict(m) for m in d.pop("means"))
        return ContinuousMdp(means=means, **d)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad cmdp section: {exc}") from None


def _bounds_worker(cfg: ExperimentConfig, seed, out: Path) -> RunRecord:
    mdp = load_mdp(cfg.section("mdp"), cfg.base)
    lcfg = learn_config_from_dict(cfg.section("learner"), seed=seed)
    sec = cfg.section("bounds", required=False)
    n_runs = int(sec.get("n_runs", 100))
    k0 = float(sec.get("k0", 1.0))
    start = time.perf_counter()
    traces: list = []
    rep = lt_moment_check(mdp, lcfg, n_runs, k0=k0, traces=traces)
    tag = _seed_tag(seed)
    files = []
    rdir = out / f"bounds_seed{tag}"
    rdir.mkdir(exist_ok=True)
    for i, d in enumerate(traces):
        p = rdir / f"replica{i:03d}.csv"
        d.to_csv(p)
        files.append(str(p.relative_to(out)))
    js = out / f"moment_report_seed{tag}.json"
    js.write_text(rep.to_json() + "\n")
    files.append(js.name)
    checks = {"moment_bound": rep.passed}
    grid = sec.get("kt_grid")
    if grid:
        T = int(grid.get("horizon", 10**4))
        ok = True
        for k in grid.get("k0", [0.0, 1.0, 20.0]):
            for g in grid.get("gamma", [0.5, 0.9]):
                for s in grid.get("schedules", [{"family": "visit_harmonic", "c0": 1.0}]):
                    kt = kt_sequence(float(k), schedule_from_dict(s), float(g), T)
                    ok &= kt.within_cap and kt.nondecreasing
        checks["kt_cap"] = bool(ok)
    lem = sec.get("lemma1")
    if lem:
        rng = np.random.default_rng(seed)
        res = {}
        for i, dd in enumerate(lem.get("distributions", [])):
            r = lemma1_check(dist_from_dict(dd), lem.get("conditioning", "trivial"), int(lem.get("n", 10**6)), rng)
            res[f"{dd['family']}_{i}"] = r.__dict__
            checks[f"lemma1_{dd['family']}_{i}"] = r.passed
        lp = out / f"lemma1_seed{tag}.json"
        _write_json(lp, res)
        files.append(lp.name)
    return RunRecord(seed, files, time.perf_counter() - start, checks)


def _lemmas_worker(cfg: ExperimentConfig, seed, out: Path) -> RunRecord:
    from .recurrences import (
        recurrence_lemma3,
        recurrence_lemma4,
        recurrence_lemma5,
        vanishing_sequence,
    )

    start = time.perf_counter()
    rec = RunRecord(seed)
    for i, item in enumerate(cfg.section("lemmas")):
        item = dict(item)
        lemma = int(item.pop("lemma"))
        N = int(item.pop("N"))
        stride = int(item.pop("stride", 1000))
        sched = schedule_from_dict(item.pop("schedule", {"family": "global_polynomial", "c0": 1.0, "p": 1.0}))
        x0, gamma = float(item.pop("x0")), float(item.pop("gamma"))
        tol = float(item.pop("tol", 1e-4))
        if lemma == 3:
            r = recurrence_lemma3(x0, gamma, sched, N)
            ok = r.max_rel_dev <= 1e-12 if x0 >= 0 else bool(np.all(np.diff(np.abs(r.x)) <= 0))
        elif lemma == 4:
            r = recurrence_lemma4(x0, gamma, float(item.pop("eps")), sched, N)
            ok = abs(r.limit_estimate - r.limit) < tol
        elif lemma == 5:
            c = item.pop("c")
            cv = vanishing_sequence(float(c.get("C", 1.0)), float(c.get("q", 1.0)), N)
            vanishing = float(c.get("q", 1.0)) > 0
            r = recurrence_lemma5(x0, gamma, sched, cv, N, require_vanishing=vanishing)
            if vanishing:
                ok = r.envelope_dominates and all(v is not None for v in r.n_at_tolerance.values())
            else:
                level = float(c.get("C", 1.0)) * gamma / (1.0 - gamma)
                ok = abs(r.limit_estimate - level) < tol
        else:
            raise ConfigError(f"unknown lemma {lemma}")
        if item:
            raise ConfigError(f"unknown keys for lemma {lemma}: {sorted(item)}")
        path = out / f"lemma{lemma}_{i}.csv"
        write_csv(path, RECURRENCE_COLUMNS, r.rows(stride))
        rec.files.append(path.name)
        rec.checks[f"lemma{lemma}_{i}"] = bool(ok)
    rec.wall_time = time.perf_counter() - start
    return rec


def _pgcheck_worker(cfg: ExperimentConfig, seed, out: Path) -> RunRecord:
    from .pg import (
        AdditiveNoiseZ,
        QuadraticCritic,
        SmallNet,
        StateBatch,
        distributional_check,
        empirical_lipschitz,
        grad_check,
        lipschitz_bound,
        policy_grad_analytic,
    )

    sec = cfg.section("pgcheck")
    sizes = [int(s) for s in sec.get("sizes", [3, 8, 2])]
    acts = list(sec.get("activations", ["sigmoid", "sigmoid"]))
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    reports, worst = [], 0.0
    z_ok, lip_ok = True, True
    dist_res = []
    dsec = sec.get("distributional")
    for k in range(int(sec.get("draws", 20))):
        policy = SmallNet.random(sizes, acts, rng, float(sec.get("scale", 1.5)))
        critic = QuadraticCritic(target=rng.normal(size=(sizes[-1], sizes[0])), offset=0.3)
        rho = StateBatch.uniform(rng.normal(size=(int(sec.get("n_states", 10)), sizes[0])))
        rep = grad_check(policy, critic, rho, float(sec.get("h", 1e-5)))
        worst = max(worst, rep.max_rel_error)
        reports.append(json.loads(rep.to_json()))
        # each distributional comparison is one 3-SE test; run it on the first few draws only
        if dsec and k < int(dsec.get("draws", 1)):
            z = AdditiveNoiseZ(critic, float(dsec.get("sigma", 0.5)), on=dsec.get("on", "action"))
            dc = distributional_check(z, policy, rho, policy_grad_analytic(policy, critic, rho),
                                      int(dsec.get("n_samples", 10**4)), rng)
            z_ok &= dc.passed
            dist_res.append(dc.__dict__)
        bound = lipschitz_bound(policy)
        emp = empirical_lipschitz(policy, int(sec.get("lipschitz_pairs", 10**4)), rng)
        lip_ok &= emp <= bound + 1e-9
    tol = float(sec.get("tol", 1e-4))
    path = out / f"pgcheck_seed{_seed_tag(seed)}.json"
    _write_json(path, {"max_rel_error": worst, "reports": reports, "distributional": dist_res})
    checks = {"gradient": worst <= tol, "lipschitz": bool(lip_ok)}
    if sec.get("distributional"):
        checks["distributional"] = bool(z_ok)
    return RunRecord(seed, [path.name], time.perf_counter() - start, checks)


def _solve(cfg: ExperimentConfig) -> tuple[list, dict, dict]:
    mdp = load_mdp(cfg.section("mdp"), cfg.base)
    q, iters = value_iterate(mdp, float(cfg.raw.get("tol", 1e-10)))
    result = {"qstar": q.tolist(), "policy": greedy_policy(q).tolist(), "iterations": iters}
    path = cfg.out_dir / "solve.json"
    _write_json(path, result)
    return [path.name], {}, result


def _report(cfg: ExperimentConfig) -> tuple[list, dict, dict]:
    inputs = cfg.raw.get("inputs")
    if not inputs:
        raise ConfigError("report needs an 'inputs' list of CSV files or globs")
    base = cfg.base or Path(".")
    paths = []
    for pat in inputs:
        p = Path(pat)
        root = p.parent if p.is_absolute() else base / p.parent
        paths.extend(sorted(root.glob(p.name)))
    out = cfg.out_dir / cfg.raw.get("plot", "convergence.svg")
    n = emit_convergence_plot(paths, out)
    return [out.name], {}, {"curves": n, "inputs": [str(p) for p in paths]}


_WORKERS: dict[str, Callable] = {
    "qlearn": lambda c, s, o: _learn_worker(c, s, o, "qlearn"),
    "sarsa": lambda c, s, o: _learn_worker(c, s, o, "sarsa"),
    "decompose": _decompose_worker,
    "bounds": _bounds_worker,
    "lemmas": _lemmas_worker,
    "ripple": _ripple_worker,
    "pgcheck": _pgcheck_worker,
}


def _run_one(cfg: ExperimentConfig, seed) -> RunRecord:
    start = time.perf_counter()
    try:
        rec = _WORKERS[cfg.command](cfg, seed, cfg.out_dir)
    except (QconvError, ArithmeticError, ValueError, OSError) as exc:
        log.error("run with seed %s failed: %s", seed, exc)
        log.debug("%s", traceback.format_exc())
        rec = RunRecord(seed, error=f"{type(exc).__name__}: {exc}")
    if not rec.wall_time:
        rec.wall_time = time.perf_counter() - start
    return rec


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    """Run ``cfg.command`` over every seed and write artifacts plus manifest.json."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    runs: list[RunRecord] = []
    extra_checks: dict = {}
    files: list = []
    if cfg.command in ("solve", "report"):
        files, extra_checks, result = (_solve if cfg.command == "solve" else _report)(cfg)
        runs.append(RunRecord(None, list(files), time.perf_counter() - start, dict(extra_checks)))
        print(json.dumps(result, default=_jsonable))
    else:
        if cfg.parallel > 1 and len(cfg.seeds) > 1:
            with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
                runs = list(pool.map(_run_one, [cfg] * len(cfg.seeds), cfg.seeds))
        else:
            runs = [_run_one(cfg, s) for s in cfg.seeds]
        for r in runs:
            files.extend(r.files)
        if cfg.command in ("qlearn", "sarsa", "ripple"):
            csvs = [cfg.out_dir / f for f in files if f.endswith(".csv") and "_grid_" not in f]
            if csvs:
                plot = cfg.out_dir / f"{cfg.command}_convergence.svg"
                emit_convergence_plot(csvs, plot)
                files.append(plot.name)
        if cfg.command == "decompose" and len(runs) >= 30 and all(r.error is None for r in runs):
            traces = [_read_csv(cfg.out_dir / r.files[0]) for r in runs]
            ratios = [float(tr["sup_w"][-1] / tr["sup_w"].max()) if tr["sup_w"].max() > 0 else 0.0 for tr in traces]
            extra_checks["w_vanishing"] = float(np.median(ratios)) < 0.1
    checks = {f"{_seed_tag(r.seed)}:{k}": v for r in runs if r.seed is not None for k, v in r.checks.items()}
    checks.update(extra_checks)
    ok = all(r.error is None for r in runs) and all(checks.values())
    manifest = RunManifest(
        tool_version=__version__,
        command=cfg.command,
        config_hash=cfg.config_hash,
        config_path=cfg.source,
        seeds=list(cfg.seeds),
        runs=runs,
        files=sorted(files) + ["manifest.json"],
        wall_time=time.perf_counter() - start,
        checks=checks,
        exit_code=0 if ok else 1,
    )
    (cfg.out_dir / "manifest.json").write_text(manifest.to_json() + "\n")
    return manifest


# --------------------------------------------------------------------------
# plotting
# --------------------------------------------------------------------------


def _read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path} is empty")
    header, body = rows[0], rows[1:]
    cols = np.array(body, dtype=float).reshape(len(body), len(header))
    return {h: cols[:, i] for i, h in enumerate(header)}


def emit_convergence_plot(csv_paths, out_path) -> int:
    """Log-scale sup_error against t, one curve per CSV plus the median.

    Returns the number of curves drawn. All inputs must share a header
    containing ``t`` and ``sup_error`` and the same ``t`` column.
    """
    csv_paths = [Path(p) for p in csv_paths]
    if not csv_paths:
        raise SchemaMismatch("no CSV files given")
    tables, header = [], None
    for p in csv_paths:
        with open(p, newline="") as fh:
            h = next(csv.reader(fh), None)
        if h is None or "t" not in h or "sup_error" not in h:
            raise SchemaMismatch(f"{p} lacks t/sup_error columns")
        if header is not None and h != header:
            raise SchemaMismatch(f"{p} has columns {h}, expected {header}")
        header = h
        tables.append(_read_csv(p))
    t = tables[0]["t"]
    if any(not np.array_equal(tab["t"], t) for tab in tables):
        raise SchemaMismatch("inputs are recorded at different times")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    errs = np.array([tab["sup_error"] for tab in tables])
    tiny = np.finfo(float).tiny
    with matplotlib.rc_context({"svg.hashsalt": "qconv", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        x = np.maximum(t, 1.0)
        for p, e in zip(csv_paths, errs):
            ax.plot(x, np.maximum(e, tiny), lw=0.7, alpha=0.5, label=p.stem)
        ax.plot(x, np.maximum(np.median(errs, axis=0), tiny), lw=2.0, color="k", label="median")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel("sup error")
        if len(tables) <= 12:
            ax.legend(fontsize=6)
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return len(tables) + 1


def configure_logging() -> None:
    level = os.environ.get("QCONV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
