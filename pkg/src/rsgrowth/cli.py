"""Command line entry point: ``rsgrowth {solve,verify,diagnose,sweep} --config FILE``.

Exit codes: 0 ok, 1 a reported check failed, 2 configuration error,
3 non-convergence, 4 contraction certificate failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import DomainError, ModelError, ShapeError
from .config import ConfigError, build_model, config_hash, load
from .diagnostics import contraction_certificate, gamma_sweep, rsc_upper_bound, sweep_checks
from .model import minorization_check, validate_growth
from .montecarlo import verify
from .solver import Discretization, solve

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_CERTIFICATE = 0, 1, 2, 3, 4
SCHEMA_VERSION = 1

log = logging.getLogger("rsgrowth")


class Writer:
    """Writes JSON documents and CSV tables stamped with the config hash and seed."""

    def __init__(self, cfg: dict):
        self.dir = Path(cfg["output"]["directory"])
        self.fmt = cfg["output"]["format"]
        self.hash = config_hash(cfg)
        self.seed = cfg["mc"]["seed"]
        self.dir.mkdir(parents=True, exist_ok=True)
        self.json_doc("resolved_config.json", cfg, stamp=False, force=True)

    def json_doc(self, name, payload, stamp=True, force=False):
        if not force and self.fmt == "csv":
            return
        doc = {"version": SCHEMA_VERSION, "config_hash": self.hash, "seed": self.seed,
               **payload} if stamp else payload
        with open(self.dir / name, "w", encoding="utf-8") as fh:
            json.dump(_plain(doc), fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")

    def table(self, name, columns, rows):
        if self.fmt == "json":
            return
        with open(self.dir / name, "w", encoding="utf-8", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["config_hash", "seed", *columns])
            for row in rows:
                out.writerow([self.hash, self.seed, *(_cell(row[c]) for c in columns)])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _solve(cfg, model, disc, threads):
    s = cfg["solver"]
    return solve(model, s["gamma"], anchor=s["anchor"], tol=s["tol"], max_iter=s["max_iter"],
                 clamp_threshold=s["clamp_threshold"], disc=disc, threads=threads)


def cmd_solve(cfg, threads=1) -> int:
    model = build_model(cfg)
    w = Writer(cfg)
    sol = _solve(cfg, model, Discretization(model), threads)
    nodes = sol.grid.nodes
    acts = sol.policy_actions()
    w.json_doc("solution.json", {
        "command": "solve", "model": model.name, **sol.to_dict(),
        "actions": model.actions.points, "policy": sol.policy, "nodes": nodes,
        "u": sol.u.values, "v": sol.v.values, "trace": sol.trace,
    })
    cols = ["node", *[f"x{j + 1}" for j in range(model.k)], "u", "v", "policy",
            *[f"h{i + 1}" for i in range(model.m)]]
    rows = ({"node": n, **{f"x{j + 1}": nodes[n, j] for j in range(model.k)},
             "u": sol.u.values[n], "v": sol.v.values[n], "policy": int(sol.policy[n]),
             **{f"h{i + 1}": acts[n, i] for i in range(model.m)}} for n in range(nodes.shape[0]))
    w.table("value.csv", cols, rows)
    w.table("trace.csv", ["iteration", "span_diff"],
            ({"iteration": i + 1, "span_diff": d} for i, d in enumerate(sol.trace)))
    w.table("solution.csv", ["key", "value"],
            ({"key": k, "value": v} for k, v in sol.to_dict().items() if k != "grid"))
    log.info("lambda = %.12g after %d iterations (converged=%s)", sol.lam, sol.n_iter, sol.converged)
    if sol.unreliable:
        log.warning("clamped successor fraction %.4f exceeds threshold", sol.clamp_fraction)
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_verify(cfg, threads=1) -> int:
    model = build_model(cfg)
    w = Writer(cfg)
    sol = _solve(cfg, model, Discretization(model), threads)
    if not sol.converged:
        log.error("solver did not converge; verification skipped")
        return EXIT_NONCONVERGED
    mc = cfg["mc"]
    rep = verify(model, sol, mc["horizons"], mc["paths"], mc["seed"], n_boot=mc["bootstrap"],
                 threads=threads)
    rows = list(rep.estimate_rows())
    w.json_doc("verification.json", {
        "command": "verify", "model": model.name, "gamma": rep.gamma, "lambda": rep.lam,
        "upper_bound": rep.upper_bound, "a1_bounded": model.a1_bounded,
        "excluded_paths": rep.excluded, "clamped_states": rep.clamp_count,
        "tail_min": rep.solved.tail_min, "estimates": rows, "checks": rep.checks, "ok": rep.ok,
    })
    w.table("verification.csv", ["policy", "t", "estimate", "ci_lower", "ci_upper", "mean", "taylor"], rows)
    w.table("verification_checks.csv", ["check", "value", "threshold", "passed", "gating"], rep.checks)
    for c in rep.checks:
        log.info("%s %s (value %.10g, threshold %.10g)", "PASS" if c["passed"] else "FAIL",
                 c["check"], c["value"], c["threshold"])
    return EXIT_OK if rep.ok else EXIT_CHECK


def cmd_diagnose(cfg, threads=1) -> int:
    model = build_model(cfg)
    w = Writer(cfg)
    d = cfg["diagnose"]
    disc = Discretization(model)
    growth = validate_growth(model, d["growth_samples"], seed=cfg["mc"]["seed"])
    cert = contraction_certificate(model, d["gamma_bar"], d["phi"], disc=disc,
                                   samples=d["samples"], r_margin=d["r_margin"],
                                   eps_min=d["eps_min"], n_noise=d["noise_draws"],
                                   cells_per_dim=d["cells_per_dim"], seed=cfg["mc"]["seed"])
    R = d["minorization_R"]
    if R is None:
        R = cert.R / 2.0 if np.isfinite(cert.R) else float(np.max(disc.omega))
    R = max(R, float(np.min(disc.omega)))  # C_R must contain a node
    minor = minorization_check(model, R, d["cells_per_dim"], seed=cfg["mc"]["seed"])
    notes = []
    if model.omega.is_zero:
        notes.append("omega is identically zero: C_R is the whole space and the minorisation "
                     "is a global Doeblin condition; beta only scales a constant weight")
    bound = rsc_upper_bound(model, d["gamma_bar"])
    doc = {"command": "diagnose", "model": model.name, "certificate": cert.to_dict(),
           "minorization": minor.to_dict(), "growth": growth.to_dict(),
           "rsc_upper_bound": bound, "notes": notes}
    w.json_doc("diagnostics.json", doc)
    flat = [{"section": s, "key": k, "value": v} for s in ("certificate", "minorization", "growth")
            for k, v in doc[s].items() if not isinstance(v, list)]
    flat.append({"section": "bound", "key": "rsc_upper_bound", "value": bound})
    w.table("diagnostics.csv", ["section", "key", "value"], flat)
    if not cert.ok:
        log.error("certificate failure: %s", cert.message)
        return EXIT_CERTIFICATE
    log.info("certificate: L = %.6g, beta = %.6g, gamma0 = %.6g", cert.L, cert.beta, cert.gamma0)
    return EXIT_OK


def cmd_sweep(cfg, threads=1) -> int:
    model = build_model(cfg)
    w = Writer(cfg)
    s = cfg["solver"]
    rows = gamma_sweep(model, cfg["sweep"]["gammas"], tol=s["tol"], max_iter=s["max_iter"])
    checks = sweep_checks(rows)
    table = [{"gamma": r.gamma, "lambda": r.lam, "span_u": r.span_u, "converged": r.converged,
              "n_iter": r.n_iter} for r in rows]
    assertion = {"check": "lambda nondecreasing in gamma", "passed": checks["nondecreasing"]}
    w.json_doc("sweep.json", {"command": "sweep", "model": model.name, "rows": table,
                              "lipschitz": checks["lipschitz"], "checks": [assertion]})
    w.table("sweep.csv", ["gamma", "lambda", "span_u", "converged", "n_iter"], table)
    w.table("sweep_checks.csv", ["check", "passed"], [assertion])
    if not all(r.converged for r in rows):
        return EXIT_NONCONVERGED
    return EXIT_OK if checks["nondecreasing"] else EXIT_CHECK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "diagnose": cmd_diagnose, "sweep": cmd_sweep}


def _gammas(text):
    items = [t for t in text.split(",") if t.strip()]
    try:
        return [float(t) for t in items]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsgrowth", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides config and RSGROWTH_OUT)")
        sp.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides RSGROWTH_SEED)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--format", choices=["json", "csv", "both"])
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            sp.add_argument("--gammas", type=_gammas, help="comma separated gammas; use the = form, e.g. --gammas=-2,-1,-0.5")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load(args.config, seed=args.seed, out=args.out, fmt=args.format)
        if getattr(args, "gammas", None) is not None:
            if not args.gammas:
                raise ConfigError("--gammas: empty gamma list")
            if any(g > 0 for g in args.gammas):
                raise ConfigError("--gammas: gamma must be <= 0")
            cfg["sweep"]["gammas"] = args.gammas
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, threads=args.threads)
    except (DomainError, ModelError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
