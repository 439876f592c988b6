"""Command-line experiment harness.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines (keys
are flag names without the leading dashes); flags on the command line win.
With ``--out DIR`` the report and data files are written there together with
``manifest.json``; the main report is always printed to stdout.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._pool import map_ordered
from ._seeding import derive_rng

SEED_MAX = 2**64 - 1
STATE_CAP = 2**24
PAIRING_CAP = 2_000_000
EXEC_KEYS = ("workers", "out", "config")


class ValidationError(Exception):
    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = violations


# ----------------------------------------------------------------------------
# argument parsing


def _add_common(sp):
    sp.add_argument("--config", help="key = value file; command-line flags win")
    sp.add_argument("--seed", type=int, help="64-bit master seed")
    sp.add_argument("--out", help="output directory for reports and manifest")
    sp.add_argument("--workers", type=int, help="worker processes")


def _phase_args(sp):
    sp.add_argument("--phase", choices=["para", "ferro"])
    sp.add_argument("--eps", type=float)
    sp.add_argument("--dominant", type=int, help="dominant colour (1-based) for the ferro phase")
    sp.add_argument("--ref-beta", type=float, help="inverse temperature of the reference fixed point")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pottsmeta", argument_default=argparse.SUPPRESS)
    ap.add_argument("--version", action="version", version=f"pottsmeta {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("thresholds", argument_default=argparse.SUPPRESS)
    sp.add_argument("--q", type=int)
    sp.add_argument("--d", type=int)
    _add_common(sp)

    sp = sub.add_parser("fixed-points", argument_default=argparse.SUPPRESS)
    sp.add_argument("--q", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--include-unstable", action="store_true")
    _add_common(sp)

    sp = sub.add_parser("simulate", argument_default=argparse.SUPPRESS)
    sp.add_argument("--chain", choices=["glauber", "sw"])
    sp.add_argument("--q", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--graph", help="fixed graph file instead of planted graphs")
    _phase_args(sp)
    sp.add_argument("--monitor-eps", type=float)
    sp.add_argument("--permutations", choices=["auto", "yes", "no"],
                    help="close the ferro monitor set under colour permutations (auto: SW only)")
    sp.add_argument("--sweeps", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--trace-trial", type=int, help="also write the CSV trace of this trial")
    _add_common(sp)

    sp = sub.add_parser("percolate", argument_default=argparse.SUPPRESS)
    sp.add_argument("--d", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--mode", choices=["binomial", "exact"])
    sp.add_argument("--p", type=float)
    sp.add_argument("--m", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--graph", help="fixed graph file instead of fresh random graphs")
    _add_common(sp)

    sp = sub.add_parser("broadcast", argument_default=argparse.SUPPRESS)
    sp.add_argument("--q", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--phase", choices=["para", "ferro"])
    sp.add_argument("--depth", type=int)
    sp.add_argument("--samples", type=int)
    _add_common(sp)

    sp = sub.add_parser("exact", argument_default=argparse.SUPPRESS)
    sp.add_argument("--graph")
    sp.add_argument("--q", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--check", choices=["partition", "kernel", "bottleneck", "nishimori"])
    _phase_args(sp)
    sp.add_argument("--tmax", type=int)
    _add_common(sp)

    sp = sub.add_parser("nishimori", argument_default=argparse.SUPPRESS)
    sp.add_argument("--n", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--q", type=int)
    sp.add_argument("--beta", type=float)
    _phase_args(sp)
    _add_common(sp)

    sp = sub.add_parser("identity-check", argument_default=argparse.SUPPRESS)
    sp.add_argument("--q", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--beta", type=float)
    _add_common(sp)
    return ap


DEFAULTS = {
    "thresholds": dict(q=3, d=3),
    "fixed-points": dict(q=3, d=3, beta=1.38, include_unstable=False),
    "simulate": dict(chain="glauber", q=3, d=3, beta=1.38, n=1000, graph=None, phase="para",
                     eps=0.02, dominant=1, ref_beta=None, monitor_eps=0.05, permutations="auto",
                     sweeps=100, trials=1, trace_trial=None),
    "percolate": dict(d=3, n=1000, mode="binomial", p=0.7, m=None, trials=1, graph=None),
    "broadcast": dict(q=3, d=3, beta=1.2, phase="para", depth=8, samples=10_000),
    "exact": dict(graph=None, q=3, beta=1.0, check="partition", phase="para", eps=0.5,
                  dominant=1, ref_beta=None, tmax=200),
    "nishimori": dict(n=2, d=3, q=3, beta=math.log(2), phase="para", eps=0.9, dominant=1,
                      ref_beta=None),
    "identity-check": dict(q=3, d=3, beta=1.38),
}
COMMON_DEFAULTS = dict(seed=0, out=None, workers=1)


def read_config_file(path) -> list[str]:
    """Translate ``key = value`` lines into command-line tokens."""
    tokens = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens.extend([flag, value])
    return tokens


def parse_config(argv) -> dict:
    """Merge defaults, the optional config file and the flags (in that order)."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    cmd = ns["command"]
    cfg = {"command": cmd, **COMMON_DEFAULTS, **DEFAULTS[cmd]}
    if ns.get("config"):
        file_ns = vars(parser.parse_args([cmd] + read_config_file(ns["config"])))
        cfg.update({k: v for k, v in file_ns.items() if k != "command"})
    cfg.update({k: v for k, v in ns.items() if k != "config"})
    if ns.get("config"):
        cfg["config"] = ns["config"]
    return cfg


# ----------------------------------------------------------------------------
# validation


def _beta_u(q, d):
    from .meanfield import thresholds

    return thresholds(q, d).beta_u


def validate(cfg: dict) -> list[str]:
    """Every violated precondition of the configuration, as readable strings."""
    out = []
    cmd = cfg.get("command")
    q, d, n = cfg.get("q"), cfg.get("d"), cfg.get("n")
    beta = cfg.get("beta")
    if q is not None and q < 3:
        out.append("q must be ≥ 3 (β_c formula undefined at q=2)")
    if d is not None and d < 3 and cmd != "exact":
        out.append("d must be ≥ 3")
    if beta is not None and not beta >= 0:
        out.append("β must be ≥ 0")
    if n is not None and n < 1:
        out.append("n must be ≥ 1")
    if n is not None and d is not None and (n * d) % 2 and not cfg.get("graph"):
        out.append("d·n must be even")
    seed = cfg.get("seed", 0)
    if not 0 <= seed <= SEED_MAX:
        out.append("seed must be a 64-bit unsigned integer")
    if cfg.get("workers", 1) < 1:
        out.append("workers must be ≥ 1")
    for key in ("trials", "sweeps"):
        if key in cfg and cfg[key] is not None and cfg[key] < 1:
            out.append(f"{key} must be ≥ 1")

    eps = cfg.get("eps")
    if eps is not None and not 0 < eps < 1:
        out.append("ε must lie in (0, 1)")
    if cmd == "simulate":
        meps = cfg.get("monitor_eps")
        if meps is not None and not 0 < meps < 1:
            out.append("monitor ε must lie in (0, 1)")
        if eps is not None and meps is not None and not meps > eps:
            out.append("monitor ε must exceed start ε")
    if cfg.get("phase") == "ferro" and cmd in ("simulate", "exact", "nishimori"):
        ref = cfg.get("ref_beta")
        b = ref if ref is not None else beta
        qq = q if q is not None else 3
        dd = d if d is not None else 3
        if qq >= 3 and dd >= 3 and b is not None and b >= 0 and b <= _beta_u(qq, dd):
            out.append("no ferromagnetic fixed point at this β; pass a larger --ref-beta")
        dom = cfg.get("dominant", 1)
        if q is not None and not 1 <= dom <= q:
            out.append("dominant colour must lie in 1..q")
    if cmd == "percolate":
        if cfg.get("mode") == "binomial":
            p = cfg.get("p")
            if p is None or not 0 <= p <= 1:
                out.append("p must lie in [0, 1]")
        else:
            m = cfg.get("m")
            if m is None or m < 0:
                out.append("exact mode needs m ≥ 0")
            elif n is not None and d is not None and m > n * d // 2:
                out.append("m exceeds the number of edges d·n/2")
    if cmd == "broadcast":
        if cfg.get("samples", 100) < 100:
            out.append("samples must be ≥ 100")
        if cfg.get("depth", 0) < 0:
            out.append("depth must be ≥ 0")
        if cfg.get("phase") == "ferro" and q and d and q >= 3 and d >= 3 and beta is not None \
                and beta <= _beta_u(q, d):
            out.append("no ferromagnetic fixed point at this β")
    if cmd == "exact":
        if not cfg.get("graph"):
            out.append("exact needs --graph")
        else:
            try:
                from .rgraph import read_graph

                g = read_graph(cfg["graph"])
                if q is not None and q >= 1 and q**g.n > STATE_CAP:
                    out.append(f"q^n = {q}^{g.n} exceeds the state cap {STATE_CAP}")
                if cfg.get("check") == "nishimori" and g.d is None:
                    out.append("nishimori check needs a regular graph")
            except (OSError, ValueError) as exc:
                out.append(f"cannot read graph: {exc}")
    if cmd == "nishimori" and n is not None and d is not None and n >= 1 and (n * d) % 2 == 0:
        from .gibbs_exact import double_factorial

        if double_factorial(n * d - 1) > PAIRING_CAP:
            out.append("(d·n−1)!! pairings exceed the enumeration cap")
        if q is not None and q >= 1 and q**n > STATE_CAP:
            out.append(f"q^n = {q}^{n} exceeds the state cap {STATE_CAP}")
    return out


# ----------------------------------------------------------------------------
# subcommands


def _params(cfg):
    from .meanfield import PottsParams

    return PottsParams(cfg["q"], cfg["d"], cfg["beta"])


def _phase(cfg, eps_key="eps", permutations=False):
    from .phases import PhaseSpec

    return PhaseSpec(cfg["phase"], cfg[eps_key], dominant=cfg.get("dominant", 1) - 1,
                     include_permutations=permutations, ref_beta=cfg.get("ref_beta"))


def _floats(x):
    return [float(v) for v in np.asarray(x).ravel()]


def cmd_thresholds(cfg):
    from .meanfield import thresholds

    t = thresholds(cfg["q"], cfg["d"])
    return {"beta_u": t.beta_u, "beta_c": t.beta_c, "beta_h": t.beta_h}, {}


def cmd_fixed_points(cfg):
    from .meanfield import solve_fixed_points

    reports = solve_fixed_points(_params(cfg), include_unstable=cfg["include_unstable"])
    return {"fixed_points": [
        {"kind": r.kind, "mu": _floats(r.mu), "residual": r.residual, "stable": r.stable,
         "jacobian_radius": r.jacobian_radius, "bethe_value": r.bethe_value}
        for r in reports
    ]}, {}


def cmd_simulate(cfg):
    from .dynamics import escape_experiment, escape_trace
    from .meanfield import PottsParams
    from .rgraph import read_graph

    graph = read_graph(cfg["graph"]) if cfg.get("graph") else None
    d = graph.d if graph is not None and graph.d else cfg["d"]
    p = PottsParams(cfg["q"], d, cfg["beta"])
    perms = cfg["permutations"]
    perms = (cfg["chain"] == "sw") if perms == "auto" else perms == "yes"
    start = _phase(cfg)
    monitor = _phase(cfg, "monitor_eps", permutations=perms and cfg["phase"] == "ferro")
    rep = escape_experiment(p, start, monitor, cfg["chain"], cfg["sweeps"], cfg["trials"],
                            cfg["seed"], n=cfg["n"], graph=graph, workers=cfg["workers"])
    files = {}
    if cfg.get("trace_trial") is not None:
        tr = escape_trace(graph, cfg["n"], p, start, monitor, cfg["chain"], cfg["sweeps"],
                          cfg["seed"], cfg["trace_trial"])
        files["trace.csv"] = tr.to_csv()
    return json.loads(rep.to_json()), files


def _percolate_trial(args):
    from .percolation import PercolationMode, percolate
    from .rgraph import read_graph, sample_regular

    cfg, t = args
    seed = cfg["seed"]
    g = read_graph(cfg["graph"]) if cfg.get("graph") else sample_regular(cfg["n"], cfg["d"], derive_rng(seed, t, 0))
    mode = PercolationMode(cfg["mode"], p=cfg.get("p"), m=cfg.get("m"))
    cs = percolate(g, mode, derive_rng(seed, t, 1))
    return t, cs.largest, int(cs.edges[0]) if len(cs.edges) else 0, cs.sum_squares_rest


def cmd_percolate(cfg):
    rows = map_ordered(_percolate_trial, [(cfg, t) for t in range(cfg["trials"])], cfg["workers"])
    lines = ["trial,c1,edges_c1,sum_sq_rest"] + [",".join(str(int(x)) for x in r) for r in rows]
    csv = "\n".join(lines) + "\n"
    c1 = np.array([r[1] for r in rows], dtype=float)
    n = cfg["n"] if not cfg.get("graph") else None
    summary = {"trials": cfg["trials"], "mean_c1": float(c1.mean())}
    if n:
        summary["mean_c1_fraction"] = float(c1.mean() / n)
    return summary, {"percolation.csv": csv}


def cmd_broadcast(cfg):
    from .broadcast import BroadcastSpec, nonrec_curve
    from .meanfield import ferro_mu

    p = _params(cfg)
    mu = np.full(p.q, 1.0 / p.q) if cfg["phase"] == "para" else ferro_mu(p)
    spec = BroadcastSpec(p, tuple(float(x) for x in mu), cfg["depth"], cfg["samples"])
    curve = nonrec_curve(spec, cfg["seed"], workers=cfg["workers"])
    report = {"depth": [int(k) for k in curve.depths], "distance": _floats(curve.distance),
              "stderr": _floats(curve.stderr), "samples": curve.samples}
    return report, {"broadcast.csv": curve.to_csv()}


def cmd_exact(cfg):
    from . import gibbs_exact as ge
    from .meanfield import PottsParams
    from .rgraph import read_graph

    g = read_graph(cfg["graph"])
    check = cfg["check"]
    if check == "nishimori":
        p = PottsParams(cfg["q"], g.d, cfg["beta"])
        return {"check": check, "n": g.n, "d": g.d,
                "tv": ge.nishimori_check(g.n, g.d, p, _phase(cfg))}, {}
    d = max(g.d or 3, 3)
    ctx = ge.ExactContext(g, PottsParams(cfg["q"], d, cfg["beta"]))
    if check == "partition":
        return {"check": check, "log_z": ge.partition_function(ctx),
                "energy_histogram": [int(x) for x in ge.energy_histogram(ctx)]}, {}
    P = ge.glauber_kernel(ctx)
    mu = ctx.probs
    if check == "kernel":
        flow = P.multiply(mu[:, None]).tocsr()
        return {"check": check,
                "row_sum_error": float(np.abs(np.asarray(P.sum(axis=1)).ravel() - 1).max()),
                "stationarity_error": float(np.abs(P.T @ mu - mu).max()),
                "detailed_balance_error": float(abs(flow - flow.T).max())}, {}
    S = _phase(cfg)
    phi = ge.bottleneck(ctx, S, P)
    tv = ge.tv_evolution(ctx, S, cfg["tmax"], P)
    slack = float(np.min(np.arange(len(tv)) * phi - tv))
    return {"check": check, "bottleneck": phi, "tv": _floats(tv), "min_slack": slack}, {}


def cmd_nishimori(cfg):
    from .gibbs_exact import nishimori_check

    return {"tv": nishimori_check(cfg["n"], cfg["d"], _params(cfg), _phase(cfg))}, {}


def cmd_identity_check(cfg):
    from .meanfield import first_moment_rate, marginal_map, product_tensor, second_moment_rate, solve_fixed_points
    from .percolation import giant_identity_residual

    p = _params(cfg)
    out = {}
    for r in solve_fixed_points(p):
        nu, rho = marginal_map(r.mu, p)
        f1 = first_moment_rate(nu, rho, p)
        out[r.kind] = {
            "bethe_vs_first_moment": abs(r.bethe_value - f1),
            "second_moment_product_point": abs(second_moment_rate(rho, product_tensor(rho), p) - 2 * f1),
        }
    if "ferro" in out:
        out["giant_identity"] = giant_identity_residual(p.q, p.d, p.beta)
    return out, {}


COMMANDS = {
    "thresholds": cmd_thresholds,
    "fixed-points": cmd_fixed_points,
    "simulate": cmd_simulate,
    "percolate": cmd_percolate,
    "broadcast": cmd_broadcast,
    "exact": cmd_exact,
    "nishimori": cmd_nishimori,
    "identity-check": cmd_identity_check,
}


def manifest(cfg: dict, files) -> dict:
    return {
        "tool": "pottsmeta",
        "version": __version__,
        "command": cfg["command"],
        "seed": cfg["seed"],
        "config": {k: v for k, v in cfg.items() if k not in EXEC_KEYS},
        "files": sorted(files),
    }


def run(cfg: dict) -> tuple[dict, dict]:
    """Validate and execute; returns the JSON report and extra data files."""
    bad = validate(cfg)
    if bad:
        raise ValidationError(bad)
    report, files = COMMANDS[cfg["command"]](cfg)
    report = {"manifest": manifest(cfg, files), **report}
    return report, files


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except (OSError, ValueError) as exc:
        sys.stdout.write(_dump({"error": "config", "violations": [str(exc)]}))
        return 2
    try:
        report, files = run(cfg)
    except ValidationError as exc:
        sys.stdout.write(_dump({"error": "validation", "violations": exc.violations}))
        return 2
    except (OSError, ValueError) as exc:
        sys.stdout.write(_dump({"error": "input", "violations": [str(exc)]}))
        return 2
    text = _dump(report)
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        name = cfg["command"].replace("-", "_")
        (out / f"{name}.json").write_text(text, newline="\n")
        for fname, content in files.items():
            (out / fname).write_text(content, newline="\n")
        (out / "manifest.json").write_text(_dump(report["manifest"]), newline="\n")
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
