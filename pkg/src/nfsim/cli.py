"""Command line interface.

Subcommands: simulate, solve, spde, lln, clt, infinite-time, moments,
oracle-check. Artifacts are written atomically (temp file + rename) into the
output directory together with a manifest recording the config hash, seed,
package versions and wall time; timestamps live only in the manifest so
reports are byte-identical across reruns and worker counts.

Exit codes: 2 config/schema errors, 3 numeric errors, 4 capacity errors.
"""

from __future__ import annotations

import argparse
import functools
import io
import json
import os
import sys
import time

import numpy as np

from . import __version__
from ._parallel import resolve_workers, run_replicates
from .analysis import (clt_experiment, infinite_time_experiment,
                       lln_experiment, oracle_check)
from .config import load_config
from .errors import (CapacityError, NfsimError, NumericError, SchemaError)
from .fields import NormSpec, cell_integrals
from .jump import replicate_rng, simulate_path, simulate_path_bounded
from .model import discrete_initial_condition
from .moments import moment_odes_langevin, moment_odes_markov
from .solver import (FieldProblem, SolverConfig, solve_amari,
                     solve_bounded_limit, solve_wilson_cowan)
from .spde import NoiseSpec, simulate_langevin, simulate_linear_noise


def _atomic_write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_manifest(outdir: str, cfg, args, t0: float):
    manifest = {
        "command": args.command,
        "config_sha256": cfg.sha256() if cfg is not None else None,
        "seed": getattr(args, "seed", None),
        "versions": {"nfsim": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
        "wall_time_s": time.time() - t0,
        "argv": sys.argv[1:],
    }
    _atomic_write(os.path.join(outdir, "manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                           for v in row) + "\n")
    return buf.getvalue()


def _trajectory_csv(traj) -> str:
    centers = traj.partition.centers[:, 0]
    rows = []
    for i, t in enumerate(traj.times):
        for x, v in zip(centers, traj.values[i]):
            rows.append((float(t), float(x), float(v)))
    return _csv(["time", "x", "value"], rows)


def _sim_replicate(payload, r: int):
    micro, theta0, T, seed, bounded = payload
    sim = simulate_path_bounded if bounded else simulate_path
    path = sim(micro, theta0, T, replicate_rng(seed, r))
    return path.times, path.pops, path.dirs


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    micro = cfg.micro()
    theta0 = discrete_initial_condition(cfg.nu0, micro.partition, micro.l)
    payload = (micro, theta0, args.T, args.seed, args.bounded)
    results = run_replicates(functools.partial(_sim_replicate, payload),
                             args.replicates, args.workers)
    rows = []
    for r, (times, pops, dirs) in enumerate(results):
        for t, k, d in zip(times, pops, dirs):
            rows.append((r, float(t), int(k), int(d)))
    _atomic_write(os.path.join(args.out, "paths.csv"),
                  _csv(["replicate", "time", "population", "direction"], rows))
    return 0


_SOLVERS = {"wilson-cowan": solve_wilson_cowan, "amari": solve_amari,
            "bounded-limit": solve_bounded_limit}


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    solver_cfg = SolverConfig(m=args.m, dt=args.dt, scheme=args.scheme,
                              store_every=args.store_every)
    traj = _SOLVERS[args.model](cfg.nu0, cfg.macro, args.T, solver_cfg)
    _atomic_write(os.path.join(args.out, "trajectory.csv"), _trajectory_csv(traj))
    return 0


def _cmd_spde(args) -> int:
    cfg = load_config(args.config)
    micro = cfg.micro()
    problem = FieldProblem.from_micro(micro)
    eps = micro.epsilon if args.eps == "auto" else float(args.eps)
    noise = NoiseSpec(eps)
    nu0 = cfg.nu0(micro.partition.centers)
    dt = args.dt if args.dt else args.T / 2048
    if args.variant == "linear-noise":
        reference = solve_wilson_cowan(cfg.nu0, cfg.macro,
                                       args.T, SolverConfig()).restrict(micro.partition)
        run = lambda r: simulate_linear_noise(nu0, problem, reference, noise,
                                              args.T, dt, replicate_rng(args.seed, r),
                                              store_every=args.store_every)
    else:
        run = lambda r: simulate_langevin(nu0, problem, noise, args.T, dt,
                                          replicate_rng(args.seed, r),
                                          store_every=args.store_every)
    if args.replicates == 1:
        _atomic_write(os.path.join(args.out, "trajectory.csv"),
                      _trajectory_csv(run(0)))
    else:
        finals = np.stack([run(r).values[-1] for r in range(args.replicates)])
        rows = [(float(x), float(m), float(v)) for x, m, v in zip(
            micro.partition.centers[:, 0], finals.mean(axis=0),
            finals.var(axis=0, ddof=1))]
        _atomic_write(os.path.join(args.out, "endpoint_stats.csv"),
                      _csv(["x", "mean", "variance"], rows))
    return 0


def _cmd_lln(args) -> int:
    cfg = load_config(args.config)
    ladder = [int(s) for s in args.ladder.split(",")]
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise SchemaError("ladder must be strictly increasing in n")
    micros = [cfg.micro(n) for n in ladder]
    norm = NormSpec(alpha=args.alpha, modes=args.modes)
    report = lln_experiment(cfg.macro, micros, cfg.nu0, args.T, args.replicates,
                            norm, args.seed, bounded=args.bounded,
                            workers=args.workers)
    _atomic_write(os.path.join(args.out, "lln_report.json"), report.to_json())
    _atomic_write(os.path.join(args.out, "lln_report.csv"), report.to_csv())
    return 0


def _cmd_clt(args) -> int:
    cfg = load_config(args.config)
    micro = cfg.micro(args.n) if args.n else cfg.micro()
    phis = [lambda x: np.ones(len(x)),
            lambda x: np.cos(np.pi * x[:, 0]),
            lambda x: np.cos(2 * np.pi * x[:, 0])]
    report = clt_experiment(cfg.macro, micro, cfg.nu0, args.T, phis,
                            args.replicates, args.seed, workers=args.workers)
    _atomic_write(os.path.join(args.out, "clt_report.json"), report.to_json())
    return 0


def _cmd_infinite_time(args) -> int:
    cfg = load_config(args.config)
    micro = cfg.micro()
    checkpoints = np.arange(args.checkpoint_every, args.T + 1e-9,
                            args.checkpoint_every)
    norm = NormSpec(alpha=args.alpha, modes=args.modes)
    report = infinite_time_experiment(cfg.macro, micro, cfg.nu0, args.T,
                                      checkpoints, args.replicates, norm,
                                      args.seed, workers=args.workers)
    _atomic_write(os.path.join(args.out, "infinite_time_report.json"),
                  report.to_json())
    _atomic_write(os.path.join(args.out, "infinite_time_report.csv"),
                  report.to_csv())
    return 0


def _cmd_moments(args) -> int:
    cfg = load_config(args.config)
    micro = cfg.micro()
    theta0 = discrete_initial_condition(cfg.nu0, micro.partition, micro.l)
    phis = [lambda x: np.ones(len(x)), lambda x: np.cos(np.pi * x[:, 0])]
    mc = moment_odes_markov(micro, theta0.astype(float), args.T, phis,
                            allow_closure=args.allow_closure)
    problem = FieldProblem.from_micro(micro)
    eps = micro.epsilon if args.eps == "auto" else float(args.eps)
    spde = moment_odes_langevin(problem, cfg.nu0(micro.partition.centers),
                                args.T, phis, eps,
                                allow_closure=args.allow_closure)
    out = {
        "approximate": mc.approximate or spde.approximate,
        "markov": {"times": mc.times.tolist(),
                   "mean_fraction": mc.mean_fraction.tolist(),
                   "second_moments": mc.second_moments.tolist()},
        "langevin": {"times": spde.times.tolist(),
                     "mean": spde.mean_fraction.tolist(),
                     "second_moments": spde.second_moments.tolist()},
    }
    _atomic_write(os.path.join(args.out, "moments_report.json"),
                  json.dumps(out, sort_keys=True))
    return 0


def _cmd_oracle_check(args) -> int:
    cfg = load_config(args.config)
    micro = cfg.micro()
    theta0 = discrete_initial_condition(cfg.nu0, micro.partition, micro.l)
    result = oracle_check(micro, theta0, args.T, args.replicates,
                          args.theta_max, args.seed, bounded=args.bounded,
                          workers=args.workers)
    _atomic_write(os.path.join(args.out, "oracle_report.json"),
                  json.dumps(result, sort_keys=True, indent=2))
    return 0


def _add_common(p: argparse.ArgumentParser, t_default: float = 1.0):
    p.add_argument("--config", required=True, help="model configuration JSON")
    p.add_argument("--T", type=float, default=t_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default NF_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nfsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample jump-process paths")
    _add_common(p)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--bounded", action="store_true")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("solve", help="deterministic field solution")
    _add_common(p)
    p.add_argument("--model", choices=sorted(_SOLVERS), default="wilson-cowan")
    p.add_argument("--m", type=int, default=512)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--scheme", choices=["exponential", "rk4"], default="exponential")
    p.add_argument("--store-every", type=int, default=8)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("spde", help="diffusion-approximation paths")
    _add_common(p, t_default=2.0)
    p.add_argument("--variant", choices=["langevin", "linear-noise"],
                   default="langevin")
    p.add_argument("--eps", default="auto",
                   help="noise amplitude; 'auto' = sqrt(v_plus/ell_minus)")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--store-every", type=int, default=8)
    p.set_defaults(fn=_cmd_spde)

    p = sub.add_parser("lln", help="law-of-large-numbers ladder experiment")
    _add_common(p, t_default=2.0)
    p.add_argument("--ladder", default="4,8,16,32")
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--modes", type=int, default=512)
    p.add_argument("--bounded", action="store_true")
    p.set_defaults(fn=_cmd_lln)

    p = sub.add_parser("clt", help="martingale CLT experiment")
    _add_common(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--replicates", type=int, default=2000)
    p.set_defaults(fn=_cmd_clt)

    p = sub.add_parser("infinite-time", help="long-horizon error experiment")
    _add_common(p, t_default=50.0)
    p.add_argument("--checkpoint-every", type=float, default=1.0)
    p.add_argument("--replicates", type=int, default=64)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--modes", type=int, default=512)
    p.set_defaults(fn=_cmd_infinite_time)

    p = sub.add_parser("moments", help="moment ODE trajectories")
    _add_common(p)
    p.add_argument("--eps", default="auto")
    p.add_argument("--allow-closure", action="store_true",
                   help="permit the mean-field closure for non-affine gains")
    p.set_defaults(fn=_cmd_moments)

    p = sub.add_parser("oracle-check", help="simulator vs uniformization oracle")
    _add_common(p)
    p.add_argument("--replicates", type=int, default=100000)
    p.add_argument("--theta-max", type=int, default=30)
    p.add_argument("--bounded", action="store_true")
    p.set_defaults(fn=_cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers is None:
        args.workers = resolve_workers(None)
    t0 = time.time()
    cfg = None
    try:
        rc = args.fn(args)
        try:
            cfg = load_config(args.config)
        except NfsimError:
            cfg = None
        _write_manifest(args.out, cfg, args, t0)
        return rc
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return 4
    except NfsimError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
