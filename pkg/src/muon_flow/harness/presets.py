"""Experiment presets: problem construction, runs and output files."""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import chaos, dynamics
from ..errors import NonFiniteState
from ..objectives import MeanMatch, TeacherStudent
from ..product import Ensemble, particle_norms
from ..rng import RngStream, gaussian_matrix
from .io import write_csv, write_plot, write_rows
from .config import save_config

SUMMARY_COLUMNS = ["rule", "eps", "final_J", "final_H", "max_P_norm", "steps"]


def build_problem(cfg):
    """Objective and zero-momentum initial ensemble for a config.

    Draw order from the seed stream is fixed: targets or teachers first, then
    particles in index order, then (teacher-student) the inputs.
    """
    rng = RngStream(cfg.seed).child("initial")
    if cfg.preset == "exp2":
        teachers_a, teachers_b = [], []
        for _ in range(cfg.M):
            teachers_a.append(gaussian_matrix(rng, cfg.p, cfg.r, 1.0 / np.sqrt(cfg.r)))
            teachers_b.append(gaussian_matrix(rng, cfg.r, cfg.d, 1.0 / np.sqrt(cfg.d)))
        a, b = [], []
        for _ in range(cfg.N):
            a.append(gaussian_matrix(rng, cfg.p, cfg.r, cfg.init_scale))
            b.append(gaussian_matrix(rng, cfg.r, cfg.d, cfg.init_scale))
        X = gaussian_matrix(rng, cfg.S, cfg.d, 1.0)
        obj = TeacherStudent.from_teacher(np.stack(teachers_a), np.stack(teachers_b), X)
        theta = (np.stack(a), np.stack(b))
    else:
        scale = 1.0 / np.sqrt(cfg.cols)
        targets = [gaussian_matrix(rng, cfg.rows, cfg.cols, scale) for _ in range(cfg.M)]
        target = np.zeros((cfg.rows, cfg.cols))
        for t in targets:
            target += t
        obj = MeanMatch(target / cfg.M)
        theta = (np.stack([gaussian_matrix(rng, cfg.rows, cfg.cols, scale) for _ in range(cfg.N)]),)
    return obj, Ensemble(theta, tuple(np.zeros_like(t) for t in theta))


def rule_list(cfg):
    rules = []
    for name in cfg.rules:
        if name == "regularized":
            rules.extend(dynamics.RegularizedMuon(e) for e in cfg.eps_list)
        else:
            rules.append(dynamics.rule_from_name(name, iters=cfg.ns_iters))
    return rules


@dataclass
class RuleRun:
    rule: object
    records: list
    max_p_norm: float
    error: str = None


@dataclass
class RunResult:
    out_dir: str
    runs: list
    summary: list
    files: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def failures(self):
        return [r.rule.label for r in self.runs if r.error]


def run_rule(obj, ens0, cfg, rule):
    sp = dynamics.inertial_params(cfg.h, cfg.gamma)
    peak = [float(particle_norms(ens0.p).max())]

    def track(ens, forces):
        peak[0] = max(peak[0], float(particle_norms(ens.p).max()))

    try:
        _, records = dynamics.run_discrete(
            obj, ens0, sp, rule, cfg.iters, alpha=cfg.alpha, stride=cfg.record_stride, callback=track
        )
        return RuleRun(rule, records, peak[0])
    except NonFiniteState as exc:
        return RuleRun(rule, exc.records, peak[0], str(exc))


def _tag(cfg):
    return f"{cfg.preset}_M{cfg.M}_N{cfg.N}"


def _positive(t, y):
    t, y = np.asarray(t), np.asarray(y)
    keep = y > 0
    return t[keep], y[keep]


def run_preset(cfg):
    """Run every configured rule and write CSVs, a summary and plots."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_config(cfg, os.path.join(cfg.out_dir, "config.txt"))
    if cfg.preset == "chaos":
        return _run_chaos(cfg)
    obj, ens0 = build_problem(cfg)
    rules = rule_list(cfg)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        runs = list(pool.map(lambda r: run_rule(obj, ens0, cfg, r), rules))

    files = []
    summary = []
    for run in runs:
        path = os.path.join(cfg.out_dir, f"diagnostics_{run.rule.label}.csv")
        write_csv(run.records, path)
        files.append(path)
        last = run.records[-1]
        eps = getattr(run.rule, "eps", None)
        summary.append([run.rule.label, eps, last.J, last.H, run.max_p_norm, last.step])
    path = os.path.join(cfg.out_dir, "summary.csv")
    write_rows(path, SUMMARY_COLUMNS, summary)
    files.append(path)

    tag = _tag(cfg)
    for name, fld, ylabel in (("objective", "J", "J_N"), ("hamiltonian", "H", "K + gamma J_N")):
        series = {}
        for run in runs:
            t, y = _positive([r.t for r in run.records], [getattr(r, fld) for r in run.records])
            if len(y):
                series[run.rule.label] = (t, y)
        if series:
            path = os.path.join(cfg.out_dir, f"{name}_{tag}.svg")
            write_plot(series, path, log_y=True, ylabel=ylabel, title=tag)
            files.append(path)

    result = RunResult(cfg.out_dir, runs, summary, files)
    if cfg.preset == "eps_sweep":
        sp = dynamics.inertial_params(cfg.h, cfg.gamma)
        sweep = dynamics.eps_sweep(obj, ens0, sp, cfg.eps_list, cfg.iters)
        path = os.path.join(cfg.out_dir, "eps_divergence.csv")
        write_rows(path, ["rule", "eps", "final_J", "max_divergence"],
                   [[s.label, s.eps, s.final_value, s.max_divergence] for s in sweep])
        files.append(path)
        result.extra["sweep"] = sweep
    return result


def _run_chaos(cfg):
    rng = RngStream(cfg.seed).child("initial")
    scale = 1.0 / np.sqrt(cfg.cols)
    target = np.zeros((cfg.rows, cfg.cols))
    for _ in range(cfg.M):
        target += gaussian_matrix(rng, cfg.rows, cfg.cols, scale)
    obj = MeanMatch(target / cfg.M)
    ccfg = chaos.ChaosConfig(
        n_list=cfg.n_list, n_ref=cfg.n_ref, t_end=cfg.t_end, h_ode=cfg.h_ode,
        n_seeds=cfg.n_seeds, eps=cfg.eps_list[0], gamma=cfg.gamma,
    )
    seeds = [cfg.seed + k for k in range(cfg.n_seeds)]
    res = chaos.chaos_rate(obj, ccfg, seeds)
    files = []
    path = os.path.join(cfg.out_dir, "chaos_errors.csv")
    write_rows(path, ["N", "mean_sup_err_sq", "N_times_err"],
               [[n, e, n * e] for n, e in res.errors.items()])
    files.append(path)
    path = os.path.join(cfg.out_dir, "chaos_rate.csv")
    write_rows(path, ["slope", "intercept", "c_poc"], [[res.slope, res.intercept, res.c_poc]])
    files.append(path)
    ns = np.array(list(res.errors), dtype=np.float64)
    path = os.path.join(cfg.out_dir, "chaos_rate.svg")
    write_plot({"coupled error": (ns, list(res.errors.values())),
                "C/N fit": (ns, np.exp(res.intercept) * ns**res.slope)},
               path, log_y=True, xlabel="N", ylabel="sup_t mean squared gap")
    files.append(path)
    return RunResult(cfg.out_dir, [], [], files, {"chaos": res})
