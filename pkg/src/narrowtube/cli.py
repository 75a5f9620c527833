"""Config-driven experiment front end.

Each subcommand reads one INI config, runs a verification experiment, and
writes a CSV table plus a JSON summary into the output directory. Outputs
are deterministic for a given config: every file carries the package
version and a hash of the effective config, and reruns are byte-identical.

Exit codes: 0 success, 2 tolerance failure, 3 censoring or convergence
failure, 4 invalid config.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import __version__
from .ctmc import (build_ctmc, ctmc_marginal_batch, exit_stats_linear_solve,
                   make_ctmc_grid)
from .geometry import ExampleFamilySpec, build_example_family, check_assumptions
from .oracles import green_bvp_solve, ks_statistic
from .resolvent import build_domain_test_function, resolvent_check
from .scale_speed import gluing_parameters, limiting_scale_speed
from .simulate2d import mc_exit_statistics, sample_marginal

__all__ = ["ExperimentConfig", "main", "parse_config"]


class ConfigError(ValueError):
    pass


_TOL_DEFAULTS = {
    "p_band": 0.02,        # exit-prob absolute band around the target
    "time_band": 0.10,     # exit-time relative band vs the Green oracle
    "theta_band": 0.10,    # relative band for the fitted theta coefficient
    "ks_max": 0.05,        # marginal KS bound at the smallest eps
    "monotone_band": 0.01, # allowed KS increase along the sweep
    "sigma_pass": 3.0,     # |mean|/stderr bound for identities that must hold
    "sigma_fail": 5.0,     # |mean|/stderr floor for the negative control
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Effective settings for one experiment run."""

    # family
    v1: Tuple[float, ...]
    beta: float
    mu: float
    delta_exponent: float
    step_mollifier: str
    bump_mollifier: str
    split: str
    # run
    eps_list: Tuple[float, ...]
    kappa: float
    kappa0: float
    dt_policy: str          # "auto" or a float literal
    n_paths: int
    T: float
    lam: float
    seed: int
    workers: int
    start_x: float
    start_y: Optional[float]
    kappa_list: Tuple[float, ...]
    negative_control: bool
    n_test_functions: int
    t_max: Optional[float]
    grid_nodes: int
    out: str
    # tolerances
    p_band: float
    time_band: float
    theta_band: float
    ks_max: float
    monotone_band: float
    sigma_pass: float
    sigma_fail: float

    def family_spec(self) -> ExampleFamilySpec:
        return ExampleFamilySpec(v1=self.v1, beta=self.beta, mu=self.mu,
                                 delta_exponent=self.delta_exponent,
                                 step_mollifier=self.step_mollifier,
                                 bump_mollifier=self.bump_mollifier,
                                 split=self.split)

    def dt_for(self, eps: float) -> float:
        if self.dt_policy == "auto":
            return min(1e-6, eps * eps / 25.0)
        return float(self.dt_policy)

    def config_hash(self) -> str:
        """Hash of everything that feeds the numbers.

        workers and the output directory are excluded so identical science
        yields identical files.
        """
        d = dataclasses.asdict(self)
        d.pop("workers")
        d.pop("out")
        lines = sorted(f"{k}={d[k]!r}" for k in d)
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]


def _parse_v1(text: str) -> Tuple[float, ...]:
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "const":
        return (float(rest),)
    if kind == "poly":
        coeffs = tuple(float(t) for t in rest.split(",") if t.strip())
        if not coeffs:
            raise ConfigError("poly v1 needs coefficients")
        return coeffs
    raise ConfigError(f"v1 must be const:c or poly:c0,c1,..., got {text!r}")


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def parse_config(path: str, seed_override: Optional[int] = None,
                 workers_override: Optional[int] = None,
                 out_override: Optional[str] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    fam = cp["family"] if cp.has_section("family") else {}
    run = cp["run"] if cp.has_section("run") else {}
    tol = cp["tolerances"] if cp.has_section("tolerances") else {}

    def fget(key, default):
        return fam.get(key, default)

    def rget(key, default):
        return run.get(key, default)

    seed = seed_override
    if seed is None:
        raw = run.get("seed") if cp.has_section("run") else None
        if raw is not None:
            seed = int(raw)
        else:
            seed = int(os.environ.get("NARROWTUBE_SEED", "0"))

    workers = workers_override
    if workers is None:
        workers = int(rget("workers", "1"))

    out = out_override if out_override is not None else rget("out", ".")

    dt_policy = str(rget("dt", "auto")).strip()
    if dt_policy != "auto":
        try:
            float(dt_policy)
        except ValueError:
            raise ConfigError(f"dt must be 'auto' or a number, got {dt_policy!r}")

    start_y_raw = rget("start_y", "").strip()
    t_max_raw = str(rget("t_max", "")).strip()

    try:
        cfg = ExperimentConfig(
            v1=_parse_v1(fget("v1", "const:1.0")),
            beta=float(fget("beta", "0.0")),
            mu=float(fget("mu", "0.0")),
            delta_exponent=float(fget("delta_exponent", "0.3")),
            step_mollifier=fget("step_mollifier", "smoothed-step-poly"),
            bump_mollifier=fget("bump_mollifier", "cosine-bump"),
            split=fget("split", "lower-zero"),
            eps_list=_floats(rget("eps_list", "0.04,0.02,0.01")),
            kappa=float(rget("kappa", "0.2")),
            kappa0=float(rget("kappa0", "0.05")),
            dt_policy=dt_policy,
            n_paths=int(rget("n_paths", "1000")),
            T=float(rget("T", "0.05")),
            lam=float(rget("lambda", "5.0")),
            seed=int(seed),
            workers=int(workers),
            start_x=float(rget("start_x", "0.0")),
            start_y=float(start_y_raw) if start_y_raw else None,
            kappa_list=_floats(rget("kappa_list", "")),
            negative_control=str(rget("negative_control", "false")).lower()
            in ("1", "true", "yes", "on"),
            n_test_functions=int(rget("n_test_functions", "3")),
            t_max=float(t_max_raw) if t_max_raw else None,
            grid_nodes=int(rget("grid_nodes", "2001")),
            out=str(out),
            **{k: float(tol.get(k, str(v))) for k, v in _TOL_DEFAULTS.items()},
        )
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc

    if len(cfg.eps_list) == 0:
        raise ConfigError("eps_list must not be empty")
    if any(e2 >= e1 for e1, e2 in zip(cfg.eps_list, cfg.eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    if not 0.0 < cfg.kappa0 < cfg.kappa:
        raise ConfigError("need 0 < kappa0 < kappa")
    if cfg.n_paths < 2:
        raise ConfigError("n_paths must be at least 2")
    try:
        spec = cfg.family_spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    # the width polynomial must stay positive across the whole window
    if float(np.min(spec.v1_at(np.linspace(-1.0, 1.0, 2001)))) <= 0.0:
        raise ConfigError("v1 must be positive on [-1, 1]")
    return cfg


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, cfg: ExperimentConfig, header: List[str],
               rows: List[List]) -> None:
    with open(path, "w") as fh:
        fh.write(f"# narrowtube v{__version__} config={cfg.config_hash()}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: str, cfg: ExperimentConfig, payload: dict) -> None:
    body = {"narrowtube_version": __version__,
            "config_hash": cfg.config_hash()}
    body.update(payload)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _limit_table(cfg: ExperimentConfig):
    spec = cfg.family_spec()
    table = limiting_scale_speed(spec, np.linspace(-1.0, 1.0, 41))
    return spec, table


def _default_start_y(spec: ExampleFamilySpec, eps: float, x: float) -> float:
    """Channel midline per the smooth limit profile, needle excluded.

    Half of the total width would start paths inside the junction needle
    for sticky families, whose descent transient the limit does not model.
    """
    if spec.split == "symmetric":
        return 0.0
    vs = spec.v1_at(x) + (spec.beta if x > 0.0 else 0.0)
    return 0.5 * eps * vs


def cmd_check_assumptions(cfg: ExperimentConfig, out_dir: str) -> int:
    spec = cfg.family_spec()
    # negative-control sweeps (delta_exponent >= 1/3) must be buildable here
    fams = [build_example_family(spec, e, strict=False) for e in cfg.eps_list]
    reports = check_assumptions(fams)
    rows = [[r.eps, r.zeta_min, r.xi_eps, r.derivative_bound_ratio,
             int(r.passed)] for r in reports]
    _write_csv(os.path.join(out_dir, "check_assumptions.csv"), cfg,
               ["eps", "zeta_min", "xi_eps", "derivative_bound_ratio",
                "passed"], rows)
    all_passed = all(r.passed for r in reports)
    _write_json(os.path.join(out_dir, "check_assumptions_summary.json"), cfg,
                {"command": "check-assumptions",
                 "rows": [dict(zip(("eps", "zeta_min", "xi_eps",
                                    "derivative_bound_ratio", "passed"),
                                   (r.eps, r.zeta_min, r.xi_eps,
                                    r.derivative_bound_ratio, bool(r.passed))))
                          for r in reports],
                 "all_passed": all_passed})
    return 0 if all_passed else 2


def cmd_exit_prob(cfg: ExperimentConfig, out_dir: str) -> int:
    spec, table = _limit_table(cfg)
    target = gluing_parameters(table).p_plus
    kap = cfg.kappa
    rows = []
    for eps in cfg.eps_list:
        fam = build_example_family(spec, eps)
        dt = cfg.dt_for(eps)
        y0 = cfg.start_y
        if y0 is None:
            y0 = _default_start_y(spec, eps, cfg.start_x)
        prob, _ = mc_exit_statistics(fam, (cfg.start_x, y0), (-kap, kap), dt,
                                     cfg.n_paths, cfg.seed, cfg.workers,
                                     t_max=cfg.t_max)
        z = (prob.mean - target) / prob.std_error if prob.std_error > 0 else 0.0
        rows.append([eps, prob.mean, prob.std_error, target, z])
    grid = make_ctmc_grid(table, cfg.grid_nodes, bounds=(-kap, kap))
    model = build_ctmc(table, grid)
    sol = exit_stats_linear_solve(model, (-kap, kap))
    limit_p = float(sol.prob_right[model.state_index(cfg.start_x)])
    rows.append([0.0, limit_p, 0.0, target, ""])

    _write_csv(os.path.join(out_dir, "exit_prob.csv"), cfg,
               ["eps", "p_hat", "stderr", "p_plus_target", "z_score"], rows)
    last = rows[len(cfg.eps_list) - 1]
    ok = abs(last[1] - target) <= max(cfg.p_band, 3.0 * last[2])
    _write_json(os.path.join(out_dir, "exit_prob_summary.json"), cfg,
                {"command": "exit-prob", "p_plus_target": target,
                 "limit_solve_value": limit_p,
                 "smallest_eps_p_hat": last[1],
                 "smallest_eps_stderr": last[2],
                 "within_band": bool(ok)})
    return 0 if ok else 2


def cmd_exit_time(cfg: ExperimentConfig, out_dir: str) -> int:
    spec, table = _limit_table(cfg)
    params = gluing_parameters(table)
    kap = cfg.kappa
    oracle = green_bvp_solve(table, -kap, kap, cfg.start_x)
    rows = []
    for eps in cfg.eps_list:
        fam = build_example_family(spec, eps)
        dt = cfg.dt_for(eps)
        y0 = cfg.start_y
        if y0 is None:
            y0 = _default_start_y(spec, eps, cfg.start_x)
        _, mean_time = mc_exit_statistics(fam, (cfg.start_x, y0), (-kap, kap),
                                          dt, cfg.n_paths, cfg.seed,
                                          cfg.workers, t_max=cfg.t_max)
        rows.append([eps, mean_time.mean, mean_time.std_error,
                     kap * params.theta, oracle])
    grid = make_ctmc_grid(table, cfg.grid_nodes, bounds=(-kap, kap))
    model = build_ctmc(table, grid)
    sol = exit_stats_linear_solve(model, (-kap, kap))
    limit_t = float(sol.mean_time[model.state_index(cfg.start_x)])
    rows.append([0.0, limit_t, 0.0, kap * params.theta, oracle])
    _write_csv(os.path.join(out_dir, "exit_time.csv"), cfg,
               ["eps", "mean_tau", "stderr", "kappa_theta_target",
                "green_oracle_value"], rows)

    summary = {"command": "exit-time", "green_oracle_value": oracle,
               "theta": params.theta, "limit_solve_value": limit_t}
    ok = True
    last = rows[len(cfg.eps_list) - 1]
    if oracle > 0.0:
        rel = abs(last[1] - oracle) / oracle
        summary["smallest_eps_rel_error"] = rel
        ok = rel <= cfg.time_band + 3.0 * last[2] / oracle

    if len(cfg.kappa_list) >= 2:
        # limit-chain exit times per kappa; leading order is theta * kappa
        taus = []
        for k in cfg.kappa_list:
            g = make_ctmc_grid(table, cfg.grid_nodes, bounds=(-k, k))
            m = build_ctmc(table, g)
            s = exit_stats_linear_solve(m, (-k, k))
            taus.append(float(s.mean_time[m.state_index(0.0)]))
        ks = np.asarray(cfg.kappa_list)
        design = np.column_stack([ks, ks * ks])
        coef, *_ = np.linalg.lstsq(design, np.asarray(taus), rcond=None)
        theta_hat = float(coef[0])
        summary["theta_hat"] = theta_hat
        summary["kappa_list"] = list(cfg.kappa_list)
        summary["kappa_taus"] = taus
        if params.theta > 0.0:
            theta_ok = abs(theta_hat - params.theta) <= cfg.theta_band * params.theta
            summary["theta_within_band"] = bool(theta_ok)
            ok = ok and theta_ok

    summary["within_band"] = bool(ok)
    _write_json(os.path.join(out_dir, "exit_time_summary.json"), cfg, summary)
    return 0 if ok else 2


def cmd_marginal(cfg: ExperimentConfig, out_dir: str) -> int:
    spec, table = _limit_table(cfg)
    grid = make_ctmc_grid(table, cfg.grid_nodes, bounds=(-1.0, 1.0))
    model = build_ctmc(table, grid)
    limit_xs = ctmc_marginal_batch(model, cfg.start_x, cfg.T, cfg.n_paths,
                                   cfg.seed + 1, cfg.workers)
    rows = []
    for eps in cfg.eps_list:
        fam = build_example_family(spec, eps)
        dt = cfg.dt_for(eps)
        y0 = cfg.start_y
        if y0 is None:
            y0 = _default_start_y(spec, eps, cfg.start_x)
        xs = sample_marginal(fam, (cfg.start_x, y0), cfg.T, dt, cfg.n_paths,
                             cfg.seed, cfg.workers)
        rows.append([eps, ks_statistic(xs, limit_xs), cfg.n_paths])
    _write_csv(os.path.join(out_dir, "marginal.csv"), cfg,
               ["eps", "ks_vs_limit", "n"], rows)
    ks_vals = [r[1] for r in rows]
    ok = ks_vals[-1] <= cfg.ks_max
    monotone = all(k2 <= k1 + cfg.monotone_band
                   for k1, k2 in zip(ks_vals, ks_vals[1:]))
    ok = ok and monotone
    _write_json(os.path.join(out_dir, "marginal_summary.json"), cfg,
                {"command": "marginal", "ks_values": ks_vals,
                 "smallest_eps_ks": ks_vals[-1],
                 "nonincreasing_within_band": bool(monotone),
                 "within_band": bool(ok)})
    return 0 if ok else 2


def cmd_resolvent(cfg: ExperimentConfig, out_dir: str) -> int:
    spec, table = _limit_table(cfg)
    params = gluing_parameters(table)
    grid = make_ctmc_grid(table, min(cfg.grid_nodes, 801), bounds=(-1.0, 1.0))
    model = build_ctmc(table, grid)
    rows = []
    ok = True
    fs = [build_domain_test_function(params, cfg.seed + 1000 * k,
                                     limit_spec=spec)
          for k in range(cfg.n_test_functions)]
    for k, f in enumerate(fs):
        res = resolvent_check("ctmc", f, cfg.lam, cfg.start_x, 0.0,
                              cfg.n_paths, cfg.seed + 10 + k, model=model,
                              workers=cfg.workers)
        sigma = abs(res.mean) / res.std_error if res.std_error > 0 else 0.0
        passed = sigma <= cfg.sigma_pass
        ok = ok and passed
        rows.append(["ctmc", k, 0.0, res.mean, res.std_error, sigma,
                     int(passed)])
    for eps in cfg.eps_list:
        fam = build_example_family(spec, eps)
        dt = cfg.dt_for(eps)
        res = resolvent_check("2d", fs[0], cfg.lam, cfg.start_x, dt,
                              cfg.n_paths, cfg.seed + 20, family=fam,
                              workers=cfg.workers)
        sigma = abs(res.mean) / res.std_error if res.std_error > 0 else 0.0
        rows.append(["2d", 0, eps, res.mean, res.std_error, sigma, ""])
    if cfg.negative_control:
        eps = cfg.eps_list[-1]
        fam = build_example_family(spec, eps)
        bad = fs[0].perturbed(0.5)
        dt = cfg.dt_for(eps)
        res = resolvent_check("hat", bad, cfg.lam, cfg.start_x, dt,
                              cfg.n_paths, cfg.seed + 30, family=fam,
                              workers=cfg.workers)
        sigma = abs(res.mean) / res.std_error if res.std_error > 0 else 0.0
        detected = sigma > cfg.sigma_fail
        ok = ok and detected
        rows.append(["hat-violating", 0, eps, res.mean, res.std_error, sigma,
                     int(detected)])
    _write_csv(os.path.join(out_dir, "resolvent.csv"), cfg,
               ["simulator", "f_index", "eps", "residual_mean", "stderr",
                "sigma", "passed"], rows)
    _write_json(os.path.join(out_dir, "resolvent_summary.json"), cfg,
                {"command": "resolvent",
                 "rows": [dict(zip(("simulator", "f_index", "eps",
                                    "residual_mean", "stderr", "sigma"),
                                   r[:6])) for r in rows],
                 "within_band": bool(ok)})
    return 0 if ok else 2


_COMMANDS = {
    "check-assumptions": cmd_check_assumptions,
    "exit-prob": cmd_exit_prob,
    "exit-time": cmd_exit_time,
    "marginal": cmd_marginal,
    "resolvent": cmd_resolvent,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="narrowtube",
        description="Verification experiments for diffusion in narrow "
                    "tubes with abrupt width changes.")
    parser.add_argument("command",
                        choices=sorted(_COMMANDS) + ["sweep"],
                        help="experiment to run (sweep runs all)")
    parser.add_argument("--config", required=True, help="INI config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="override the worker count")
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config, seed_override=args.seed,
                           workers_override=args.workers,
                           out_override=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 4

    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)

    names = sorted(_COMMANDS) if args.command == "sweep" else [args.command]
    worst = 0
    for name in names:
        try:
            code = _COMMANDS[name](cfg, out_dir)
        except (ConfigError, ValueError) as exc:
            print(f"{name}: config error: {exc}", file=sys.stderr)
            return 4
        except RuntimeError as exc:
            print(f"{name}: run failed: {exc}", file=sys.stderr)
            return 3
        if code != 0:
            print(f"{name}: tolerance check failed (see {out_dir})",
                  file=sys.stderr)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
