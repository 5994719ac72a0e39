"""Command-line entry points.

Most subcommands take a key=value config file (see ExperimentConfig) via
-c/--config; lines look like

    field.kind = trig
    field.amplitude = 0.8
    a = 0.5
    a_prime = 0.9
    H = 2/5
    depth = 8
    n_samples = 100000
    t_grid = 0.05,0.1,0.15,0.2,0.3
    seed = 0
    out = out

Worker count is read only from the ROUGHHEAT_WORKERS environment variable
and never changes numerical output.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import fbm, roughcore
from .expansion import as_fraction, expand, fit_order, index_set, remainder_norms
from .kernellab import ExperimentConfig, estimate_density, run_experiment
from .malliavin import malliavin_cov, nondegeneracy_scan
from .rde import solve_rde, solve_scaled_shifted
from .variational import lagrange_residual, minimize_energy


def _load_config(path: str) -> ExperimentConfig:
    with open(path) as fp:
        return ExperimentConfig.from_text(fp.read())


def _add_config(p):
    p.add_argument("-c", "--config", required=True,
                   help="key=value config file")


def cmd_index_set(args):
    s = index_set(args.family, args.H, args.cutoff)
    print(" ".join(str(e) for e in s.elements))


def cmd_sample(args):
    H = float(as_fraction(args.H))
    model = fbm.FbmModel(H=H, dim=args.dim, depth=args.depth,
                         seed=args.seed, sampler=args.sampler)
    W = fbm.sample_fbm(model, args.n, start=args.start)
    out = open(args.out, "w") if args.out else sys.stdout
    for i in range(args.n):
        rec = {"index": args.start + i, "H": H,
               "grid": model.grid.tolist(), "values": W[i].tolist()}
        out.write(json.dumps(rec) + "\n")
    if args.out:
        out.close()


def cmd_lift(args):
    paths = []
    with open(args.infile) as fp:
        for line in fp:
            if not line.strip():
                continue
            rec = json.loads(line)
            paths.append(fbm.lift_dyadic(np.asarray(rec["values"]),
                                         grid=np.asarray(rec["grid"])))
    with open(args.out, "w") as fp:
        roughcore.write_jsonl(paths, fp)


def cmd_solve(args):
    cfg = _load_config(args.config)
    with open(args.driver) as fp:
        drivers = roughcore.read_jsonl(fp)
    for X in drivers:
        if args.eps is not None:
            sol = solve_scaled_shifted(X, None, args.eps, cfg.fields, cfg.a,
                                       float(cfg.H),
                                       with_jacobian=args.jacobian)
        else:
            sol = solve_rde(X, cfg.fields, cfg.a,
                            with_jacobian=args.jacobian)
        rec = {"y1": sol.y[-1].tolist()}
        if args.jacobian:
            rec["kj_defect"] = sol.kj_defect()
        print(json.dumps(rec))


def cmd_expand(args):
    cfg = _load_config(args.config)
    model = fbm.FbmModel(H=float(cfg.H), dim=cfg.fields.d, depth=cfg.depth,
                         seed=cfg.seed)
    X = fbm.lift_dyadic(fbm.sample_fbm(model, 1, start=args.sample)[0],
                        H=float(cfg.H))
    bundle = expand(X, None, cfg.fields, cfg.a, cfg.H, args.k)
    for kappa in bundle.kappas:
        print(f"kappa={kappa}  phi_1={bundle.terms[kappa][-1].tolist()}")


def cmd_remainders(args):
    cfg = _load_config(args.config)
    model = fbm.FbmModel(H=float(cfg.H), dim=cfg.fields.d, depth=cfg.depth,
                         seed=cfg.seed)
    X = fbm.lift_dyadic(fbm.sample_fbm(model, 1, start=args.sample)[0],
                        H=float(cfg.H))
    eps_list = [float(e) for e in args.eps.split(",")]
    bundle = expand(X, None, cfg.fields, cfg.a, cfg.H, args.k)
    rows = remainder_norms(bundle, eps_list)
    for r in rows:
        print(json.dumps(r))
    fit = fit_order(eps_list, [r["pvar_norm"] for r in rows])
    fit["kappa_next"] = float(bundle.kappa_next)
    print(json.dumps(fit))


def cmd_malliavin(args):
    cfg = _load_config(args.config)
    eps_grid = [float(e) for e in args.eps.split(",")]
    rows, summary = nondegeneracy_scan(cfg.fields, cfg.a, float(cfg.H),
                                       eps_grid, args.n, depth=cfg.depth,
                                       seed=cfg.seed)
    print(json.dumps(summary, default=str, indent=2))


def cmd_minimize(args):
    cfg = _load_config(args.config)
    res = minimize_energy(cfg.a, cfg.a_prime, cfg.fields, float(cfg.H),
                          depth=cfg.depth, n_starts=args.starts,
                          seed=cfg.seed)
    out = {"energy": res.energy, "endpoint_residual": res.endpoint_residual,
           "lagrange_residual": lagrange_residual(res),
           "unique_up_to_tol": res.unique_up_to_tol}
    print(json.dumps(out))
    if args.out:
        with open(args.out, "w") as fp:
            fp.write(json.dumps(res.to_record()) + "\n")


def cmd_density(args):
    cfg = _load_config(args.config)
    for t in cfg.t_grid:
        e = estimate_density(cfg, t)
        print(json.dumps({"t": e.t, "p_hat": e.p_hat, "stderr": e.stderr,
                          "bandwidth": e.bandwidth}))


def cmd_report(args):
    cfg = _load_config(args.config)
    report = run_experiment(cfg)
    print(json.dumps(report, indent=2, sort_keys=True))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="roughheat", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("index-set", help="enumerate an asymptotic index set")
    p.add_argument("--family", required=True,
                   choices=["lambda1", "lambda2", "lambda2p", "lambda3",
                            "lambda3p", "lambda4"])
    p.add_argument("--H", required=True, help="rational, e.g. 2/5")
    p.add_argument("--cutoff", default="6")
    p.set_defaults(fn=cmd_index_set)

    p = sub.add_parser("sample", help="sample fBm paths to JSON lines")
    p.add_argument("--H", required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", default="auto",
                   choices=["auto", "cholesky", "circulant"])
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("lift", help="level-2 lift of sampled paths")
    p.add_argument("infile")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_lift)

    p = sub.add_parser("solve", help="solve the RDE along stored drivers")
    _add_config(p)
    p.add_argument("driver", help="rough-path JSONL file")
    p.add_argument("--eps", type=float, default=None,
                   help="solve the scaled equation at this eps")
    p.add_argument("--jacobian", action="store_true")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("expand", help="fractional expansion terms at t = 1")
    _add_config(p)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--sample", type=int, default=0)
    p.set_defaults(fn=cmd_expand)

    p = sub.add_parser("remainders", help="remainder norms and fitted order")
    _add_config(p)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--eps", default="0.03,0.05,0.08,0.12")
    p.add_argument("--sample", type=int, default=0)
    p.set_defaults(fn=cmd_remainders)

    p = sub.add_parser("malliavin", help="Malliavin nondegeneracy scan")
    _add_config(p)
    p.add_argument("--eps", default="0.25,0.5,1.0")
    p.add_argument("--n", type=int, default=20)
    p.set_defaults(fn=cmd_malliavin)

    p = sub.add_parser("minimize", help="Cameron-Martin energy minimizer")
    _add_config(p)
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_minimize)

    p = sub.add_parser("density", help="kernel density estimates on t_grid")
    _add_config(p)
    p.set_defaults(fn=cmd_density)

    p = sub.add_parser("report", help="full experiment: minimize, densities, fits")
    _add_config(p)
    p.set_defaults(fn=cmd_report)

    args = ap.parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
