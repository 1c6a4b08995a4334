"""Command-line front end: validation, datasets, expectations, studies.

Exit codes: 0 success, 1 validation failure, 2 usage or precondition error,
3 internal numerical failure.  Every run can emit a JSON provenance record
(resolved config, seeds, library versions); rerunning the recorded command
reproduces its outputs bitwise.  All floats print with repr round-tripping.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from .annealing import Schedule, convergence_study, make_schedule
from .errors import (
    DatasetFormatError,
    FlatNormSolverError,
    GridCapError,
    NotFiniteError,
    QoIParseError,
    ScheduleError,
    TherminfError,
    ZeroMassError,
)
from .flatnorm import DiscreteSignedMeasure, fn_distance, fn_distance_measures
from .measures import (
    SlidingGaussianDensity,
    check_transversality,
    discretize,
    read_dataset,
    sample_empirical,
    suggest_radius,
    write_dataset,
)
from .network import check_nondegeneracy, classical_solution, constraint_subspace, load_network
from .qoi import parse_qoi
from .thermalize import discrete_thermal_mass, expectation_h

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_ints(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _record(command: str, config: dict, outputs: list) -> dict:
    return {
        "command": command,
        "config": config,
        "versions": {
            "therminf": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "outputs": [str(p) for p in outputs],
    }


def _emit_record(args, command: str, config: dict, outputs: list) -> None:
    rec = _record(command, config, outputs)
    path = getattr(args, "record", None)
    if path is None and getattr(args, "out", None):
        path = str(Path(str(args.out)).with_suffix("")) + ".run.json"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rec, fh, indent=2)
            fh.write("\n")
    else:
        print("run record:")
        print(json.dumps(rec, indent=2))


def _density_pair(args):
    net = load_network(args.network)
    dens = SlidingGaussianDensity.from_network(net, ell=args.ell)
    E = constraint_subspace(net, ell=args.ell)
    return net, dens, E


def _resolve_radius(args, dens, E, beta0: float = 1.0) -> float:
    if args.radius is not None:
        return args.radius
    cert = check_transversality(dens, E, beta0)
    return suggest_radius(cert, dens, E)


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    try:
        net = load_network(args.network)
    except json.JSONDecodeError as exc:
        _err(f"{args.network}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}")
        return EXIT_VALIDATION
    except (OSError, TherminfError, ValueError) as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    print(f"network: {args.network}")
    print(f"edges N = {net.n_edges}, free nodes m = {net.n_free_nodes}")
    print("incidence B:")
    print(np.array2string(net.incidence))
    ok, lam_min = check_nondegeneracy(net)
    print(f"lambda_min(B^T C B) = {_fmt(lam_min)}")
    if not ok:
        print("validation: FAILED (B^T C B is not positive definite)")
        return EXIT_VALIDATION
    u, z = classical_solution(net)
    print(f"classical u = [{', '.join(_fmt(v) for v in u)}]")
    print(f"classical z = [{', '.join(_fmt(v) for v in z.flat)}]")
    E = constraint_subspace(net, ell=args.ell)
    print(f"dim E = {E.dim} (expected N = {net.n_edges})")
    try:
        dens = SlidingGaussianDensity.from_network(net, ell=args.ell)
        cert = check_transversality(dens, E, args.beta0)
    except TherminfError as exc:
        print(f"validation: FAILED (no transversality certificate: {exc})")
        return EXIT_VALIDATION
    print(
        f"transversality certificate: beta0={_fmt(cert.beta0)} c={_fmt(cert.c)} b={_fmt(cert.b)}"
    )
    print("validation: OK")
    return EXIT_OK


def cmd_discretize(args) -> int:
    net, dens, E = _density_pair(args)
    radius = _resolve_radius(args, dens, E)
    center = dens.minimizer_on(E)
    try:
        m = discretize(dens, args.eps, radius=radius, center=center)
    except GridCapError as exc:
        _err(f"{exc}; increase --eps or reduce --radius")
        return EXIT_USAGE
    write_dataset(m, args.out)
    print(f"wrote {m.n_points} grid points to {args.out} (total mass {_fmt(m.total_weight)})")
    _emit_record(
        args,
        "discretize",
        {
            "network": str(args.network),
            "eps": args.eps,
            "radius": radius,
            "ell": args.ell,
        },
        [args.out],
    )
    return EXIT_OK


def cmd_sample(args) -> int:
    net, dens, E = _density_pair(args)
    radius = _resolve_radius(args, dens, E)
    m = sample_empirical(dens, E, radius=radius, n=args.n, rng_seed=args.seed)
    write_dataset(m, args.out)
    print(f"wrote {m.n_points} sampled points to {args.out} (total mass {_fmt(m.total_weight)})")
    _emit_record(
        args,
        "sample",
        {
            "network": str(args.network),
            "n": args.n,
            "seed": args.seed,
            "radius": radius,
            "ell": args.ell,
        },
        [args.out],
    )
    return EXIT_OK


def cmd_expect(args) -> int:
    net, dens, E = _density_pair(args)
    m = read_dataset(args.dataset)
    qoi = parse_qoi(args.qoi, net.n_edges)
    res = expectation_h(qoi, m, E, args.beta, n_samples=args.mc_samples, seed=args.seed)
    print(f"E_h[{qoi.name}] = {_fmt(res.value)} +/- {_fmt(res.stderr)}")
    _emit_record(
        args,
        "expect",
        {
            "network": str(args.network),
            "dataset": str(args.dataset),
            "beta": args.beta,
            "qoi": args.qoi,
            "mc_samples": args.mc_samples,
            "seed": args.seed,
            "ell": args.ell,
            "value": res.value,
            "stderr": res.stderr,
        },
        [],
    )
    return EXIT_OK


def _load_recipe(path) -> dict:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    base = Path(path).resolve().parent
    if "network" in doc:
        doc["network"] = str((base / doc["network"]).resolve())
    if "out" in doc and not Path(doc["out"]).is_absolute():
        doc["out"] = str(base / doc["out"])
    return doc


def cmd_converge(args) -> int:
    recipe = _load_recipe(args.recipe) if args.recipe else {}
    network = args.network or recipe.get("network")
    if network is None:
        raise ValueError("a network is required (positional argument or recipe)")
    sched_cfg = recipe.get("schedule", {})
    eps_list = args.eps if args.eps is not None else sched_cfg.get("eps")
    if eps_list is None:
        raise ValueError("a schedule needs --eps (or a recipe with schedule.eps)")
    if args.beta is not None:
        schedule = Schedule(tuple(eps_list), tuple(args.beta))
    else:
        c = args.schedule_c if args.schedule_c is not None else sched_cfg.get("c")
        if c is None:
            raise ValueError("a schedule needs --schedule-c or --beta")
        schedule = make_schedule(eps_list, c)
    mc_cfg = recipe.get("mc", {})
    mc = {
        "k": args.mc_samples if args.mc_samples is not None else mc_cfg.get("k", 2000),
        "seeds": tuple(args.seeds) if args.seeds is not None else tuple(mc_cfg.get("seeds", (0, 1, 2))),
    }
    out = args.out or recipe.get("out")
    if out is None:
        raise ValueError("--out is required (or a recipe with out)")
    radius = args.radius if args.radius is not None else recipe.get("radius")
    net = load_network(network)
    rep = convergence_study(
        net, schedule, mc, radius=radius, n_threads=args.threads
    )
    stem = Path(str(out)).with_suffix("")
    csv_path, json_path = f"{stem}.csv", f"{stem}.json"
    rep.to_csv(csv_path)
    rep.to_json(json_path)
    print(f"{'eps_h':>10} {'beta_h':>10} {'fn_therm':>12} {'fn_approx':>12} {'fn_total':>12}")
    for row in rep.rows:
        print(
            f"{row['eps_h']:>10.4g} {row['beta_h']:>10.4g} "
            f"{row['fn_therm']:>12.6g} {row['fn_approx']:>12.6g} {row['fn_total']:>12.6g}"
        )
    for name, fit in rep.fits.items():
        lo, hi = fit["slope_ci"]
        print(f"{name}: slope {fit['slope']:.4g} (ci [{lo:.4g}, {hi:.4g}])")
    print(f"wrote {csv_path} and {json_path}")
    _emit_record(
        args,
        "converge",
        {
            "network": str(network),
            "eps": list(schedule.eps_list),
            "beta": list(schedule.beta_list),
            "rule": schedule.rule,
            "mc": {"k": mc["k"], "seeds": list(mc["seeds"])},
            "radius": rep.meta["radius"],
            "threads": args.threads,
        },
        [csv_path, json_path],
    )
    return EXIT_OK


def cmd_flatnorm(args) -> int:
    net = load_network(args.network)
    met = net.metric(ell=args.ell)
    ma = read_dataset(args.dataset_a)
    mb = read_dataset(args.dataset_b)
    config = {
        "network": str(args.network),
        "dataset_a": str(args.dataset_a),
        "dataset_b": str(args.dataset_b),
        "ell": args.ell,
        "beta": args.beta,
    }
    if args.beta is None:
        val = fn_distance(
            DiscreteSignedMeasure(ma.points, ma.weights, met),
            DiscreteSignedMeasure(mb.points, mb.weights, met),
        )
        print(f"flat norm distance = {_fmt(val)}")
        config["value"] = val
    else:
        E = constraint_subspace(net, ell=args.ell)
        ta = discrete_thermal_mass(ma, E, args.beta)
        tb = discrete_thermal_mass(mb, E, args.beta)
        seeds = tuple(args.seeds) if args.seeds is not None else (0, 1, 2)
        out = fn_distance_measures(
            lambda k, s: ta.realize(1, seed=int(s)),
            lambda k, s: tb.realize(1, seed=int(s)),
            k=args.mc_samples or 2000,
            seeds=seeds,
        )
        print(f"flat norm distance = {_fmt(out['value'])} +/- {_fmt(out['mc_error'])}")
        config.update({"value": out["value"], "mc_error": out["mc_error"], "seeds": list(seeds)})
    _emit_record(args, "flatnorm", config, [])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="therminf",
        description="Thermalized-measure inference on dissipative networks.",
    )
    p.add_argument("--version", action="version", version=f"therminf {__version__}")
    sub = p.add_subparsers(dest="command")

    def common(sp, record=True):
        sp.add_argument("--ell", type=float, default=1.0, help="flat-norm length scale")
        if record:
            sp.add_argument("--record", help="path for the JSON provenance record")

    v = sub.add_parser("validate", help="check a network file and its certificates")
    v.add_argument("network")
    v.add_argument("--beta0", type=float, default=1.0, help="certificate inverse temperature")
    common(v, record=False)
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("discretize", help="write a grid dataset CSV")
    d.add_argument("network")
    d.add_argument("--eps", type=float, required=True, help="grid scale")
    d.add_argument("--radius", type=float, help="truncation radius (default: certified)")
    d.add_argument("--out", required=True)
    common(d)
    d.set_defaults(func=cmd_discretize)

    s = sub.add_parser("sample", help="write an i.i.d. sample dataset CSV")
    s.add_argument("network")
    s.add_argument("-n", type=int, required=True, help="number of draws")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--radius", type=float, help="truncation radius (default: certified)")
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("expect", help="thermal expectation of a QoI on a dataset")
    e.add_argument("network")
    e.add_argument("--dataset", required=True)
    e.add_argument("--beta", type=float, required=True)
    e.add_argument(
        "--qoi",
        default="one",
        help="one | gap | sigma[e] | eps[e] | affine:c1,...,c2N[,const]",
    )
    e.add_argument("--mc-samples", type=int, default=10_000)
    e.add_argument("--seed", type=int, default=0)
    common(e)
    e.set_defaults(func=cmd_expect)

    c = sub.add_parser("converge", help="run a cooling-schedule convergence study")
    c.add_argument("network", nargs="?", help="network file (or use --recipe)")
    c.add_argument("--recipe", help="TOML recipe with network/schedule/mc settings")
    c.add_argument("--eps", type=_parse_floats, help="comma-separated grid scales")
    c.add_argument("--schedule-c", type=float, help="optimal rule constant beta = c/eps")
    c.add_argument("--beta", type=_parse_floats, help="explicit comma-separated betas")
    c.add_argument("--mc-samples", type=int, help="oracle cloud size per distance")
    c.add_argument("--seeds", type=_parse_ints, help="comma-separated MC seeds")
    c.add_argument("--radius", type=float, help="truncation radius (default: certified)")
    c.add_argument("--threads", type=int, default=1, help="parallel schedule levels")
    c.add_argument("--out", help="output stem for the report CSV/JSON")
    common(c)
    c.set_defaults(func=cmd_converge)

    f = sub.add_parser("flatnorm", help="flat-norm distance between two datasets")
    f.add_argument("dataset_a")
    f.add_argument("dataset_b")
    f.add_argument("--network", required=True, help="network providing the energy metric")
    f.add_argument("--beta", type=float, help="compare thermalized measures at this beta")
    f.add_argument("--mc-samples", type=int, help="cloud size for thermal comparison")
    f.add_argument("--seeds", type=_parse_ints, help="comma-separated MC seeds")
    common(f)
    f.set_defaults(func=cmd_flatnorm)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except json.JSONDecodeError as exc:
        _err(f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}")
        return EXIT_USAGE
    except GridCapError as exc:
        _err(f"{exc}; increase --eps or reduce --radius")
        return EXIT_USAGE
    except (FlatNormSolverError, ZeroMassError, NotFiniteError) as exc:
        _err(str(exc))
        return EXIT_NUMERICAL
    except (
        DatasetFormatError,
        ScheduleError,
        QoIParseError,
        TherminfError,
        ValueError,
        OSError,
    ) as exc:
        _err(str(exc))
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
