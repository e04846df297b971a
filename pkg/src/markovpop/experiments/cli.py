"""Command-line entry point.

Exit codes: 0 on success, 2 for configuration or input errors, 3 for
numerical failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import jgdla
from ..errors import InputError, NumericalError
from ..model import Trajectory, build_seir, build_sir
from ..simulate import SimConfig, em_path, gillespie_path, make_rng
from .config import METHODS, ExperimentConfig, load_config
from .data import ingest_csv, write_trajectory_csv

log = logging.getLogger("markovpop")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def build_network(cfg: ExperimentConfig):
    if cfg.model == "sir":
        net = build_sir()
    elif cfg.model == "seir":
        net = build_seir()
    else:
        from .networks import load_network

        net = load_network(cfg.network_file)
    if len(cfg.x0) != net.d:
        raise InputError(f"x0 has {len(cfg.x0)} entries for {net.d} classes")
    if len(cfg.theta) != len(net.param_names):
        raise InputError(f"theta has {len(cfg.theta)} entries for parameters {net.param_names}")
    return net


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _require(cfg, key):
    value = getattr(cfg, key)
    if not value:
        raise InputError(f"config key {key!r} is required for this command")
    return value


def _trajectory(path) -> Trajectory:
    data = ingest_csv(path)
    if not isinstance(data, Trajectory):
        raise InputError(f"{path}: expected a trajectory CSV (t,<classes>)")
    return data


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> None:
    net = build_network(cfg)
    sim = SimConfig(N=cfg.N, t_end=cfg.t_end, seed=cfg.seed, record_times=cfg.record_times)
    rng = make_rng(cfg.seed)
    if cfg.simulator == "gillespie":
        traj = gillespie_path(net, cfg.theta, cfg.x0, sim, rng)
    else:
        traj = em_path(net, cfg.theta, cfg.x0, cfg.sim_dt, sim, rng)
    write_trajectory_csv(traj, out / "trajectory.csv")
    if set(cfg.obs_times) <= set(traj.times):
        write_trajectory_csv(traj.at(cfg.obs_times), out / "observations.csv")


def _split_initial(cfg, data: Trajectory):
    """Use a ``t = 0`` row as the initial state, otherwise ``cfg.x0``."""
    if data.times[0] == 0.0:
        rest = Trajectory(data.times[1:], data.states[1:], data.class_names)
        return data.states[0], rest
    return np.asarray(cfg.x0, dtype=float), data


def cmd_fit(cfg: ExperimentConfig, out: Path) -> None:
    from ..euler_maruyama import em_mh_sampler
    from ..inference.fitting import fit_det_model, fit_jgdla
    from ..inference.mcmc import MHConfig
    from .study import DEFAULT_BURN_IN, DEFAULT_ITER

    net = build_network(cfg)
    data = _trajectory(_require(cfg, "data"))
    if data.class_names != net.class_names:
        raise InputError(f"data columns {data.class_names} differ from model classes {net.class_names}")
    x0, obs = _split_initial(cfg, data)
    summary = {"method": cfg.method, "N": cfg.N, "seed": cfg.seed, "data": str(cfg.data)}
    if cfg.method in ("jgdla", "ode"):
        if cfg.method == "jgdla":
            fit = fit_jgdla(net, obs, x0, cfg.N, h=cfg.h)
            times = np.union1d(obs.times, cfg.pred_times) if cfg.pred_times else obs.times
            dist = jgdla.build(net, fit.estimate, x0, times, cfg.N, cfg.h, t_end=float(times[-1]))
            dist.save(out / "jgdla.json")
        else:
            fit = fit_det_model(net, obs, x0, h=cfg.h)
        summary.update(fit.as_dict())
        lines = ["param,estimate,ci_low,ci_high"]
        for row in zip(fit.names, fit.estimate, fit.ci_low, fit.ci_high):
            lines.append(",".join([row[0]] + [f"{v:.17g}" for v in row[1:]]))
        (out / "mle.csv").write_text("\n".join(lines) + "\n")
    else:
        mh = MHConfig(n_iter=cfg.mcmc_iter or DEFAULT_ITER,
                      burn_in=DEFAULT_BURN_IN if cfg.burn_in is None else cfg.burn_in,
                      seed=cfg.seed)
        full = Trajectory(np.r_[0.0, obs.times], np.vstack([x0, obs.states]), obs.class_names)
        chain = em_mh_sampler(net, full, cfg.N, dt=cfg.em_dt, cfg=mh,
                              variant="independent" if cfg.method == "em-ind" else "full",
                              prop_sd_theta=cfg.prop_sd_theta, prop_sd_latent=cfg.prop_sd_latent)
        chain.to_csv(out / "chain.csv")
        post = chain.summary(net.param_names)
        summary.update(theta_hat=post.pop("posterior_mean"), **post)
    write_json(summary, out / "summary.json")


def cmd_predict(cfg: ExperimentConfig, out: Path) -> None:
    dist = jgdla.JgdlaDistribution.load(_require(cfg, "artifact"))
    data = _trajectory(_require(cfg, "data"))
    if data.times[0] == 0.0 and 0.0 not in dist.times:
        data = Trajectory(data.times[1:], data.states[1:], data.class_names)
    pred = jgdla.condition_on(dist, data)
    names = dist.class_names
    header = ["t", *names, *(f"sd_{c}" for c in names)]
    lines = [",".join(header)]
    for t, m, s in zip(pred.times, pred.mean, pred.sd):
        lines.append(",".join([f"{t:.17g}"] + [f"{v:.17g}" for v in (*m, *s)]))
    (out / "prediction.csv").write_text("\n".join(lines) + "\n")


def cmd_evaluate(cfg: ExperimentConfig, out: Path) -> None:
    pred = _trajectory(_require(cfg, "prediction"))
    truth = _trajectory(_require(cfg, "truth"))
    column = "I"
    if column not in pred.class_names or column not in truth.class_names:
        raise InputError("both files need an 'I' column")
    err = np.abs(pred.column(column) - truth.at(pred.times).column(column))
    write_json({"column": column, "times": pred.times.tolist(), "mape": float(np.mean(err))},
               out / "evaluation.json")


def cmd_covid(cfg: ExperimentConfig, out: Path) -> None:
    from .covid import run_covid

    report, chain, curve = run_covid(cfg)
    chain.to_csv(out / "chain.csv")
    write_json(report, out / "covid_report.json")
    lines = ["t,P,P_low,P_high"] + [",".join(f"{v:.17g}" for v in row) for row in curve]
    (out / "p_curve.csv").write_text("\n".join(lines) + "\n")


def cmd_study(cfg: ExperimentConfig, out: Path) -> None:
    from .study import run_sir_study

    write_json(run_sir_study(cfg), out / "study.json")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "covid": cmd_covid,
    "study": cmd_study,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markovpop", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--method", choices=METHODS, help="overrides the config method")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = cfg.replace(seed=args.seed, out=args.out, method=args.method)
        if args.seed is not None and args.seed < 0:
            raise InputError("seed must be nonnegative")
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except (InputError, ValueError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    log.info("%s finished; outputs in %s", args.command, out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
