"""Command-line interface: ``pacbandit {simulate,estimate,bound,optimize,coverage,compare}``.

Exit codes: 0 success, 1 I/O or parse failure, 2 violated mathematical
precondition (the message on stderr names it).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

from . import bounds as B
from .core import history_to_jsonl, load_history
from .errors import FormatError, PreconditionError
from .estimators import estimate_report
from .experiments import compare_bounds, run_coverage
from .optimizer import Certificate, certify, optimize_policy, recheck
from .simulator import SimConfig, generate_history, replicate

log = logging.getLogger("pacbandit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc.msg}") from None


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _read_json_file(path):
    try:
        with open(path, encoding="utf-8") as fp:
            return json.load(fp)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON ({exc.msg})", f"{path}: line {exc.lineno}") from None


def _emit(text: str, out) -> None:
    if out:
        _write(out, text)
    else:
        sys.stdout.write(text)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _merged(args, names, config_path):
    """Flag values overridden by the JSON config file, when one is given."""
    d = {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}
    if config_path:
        cfg = _read_json_file(config_path)
        if not isinstance(cfg, dict):
            raise FormatError("config must be a JSON object", str(config_path))
        d.update(cfg)
    if "lambda" in d:
        d["lam"] = d.pop("lambda")
    return d


# --- subcommands ----------------------------------------------------------------

SIM_FLAGS = ("K", "t", "epsilon", "seed", "C", "reward_means", "reward_family",
             "logging_scheme", "logging_policies", "context_probs")


def cmd_simulate(args) -> int:
    config = SimConfig.from_dict(_merged(args, SIM_FLAGS, args.config))
    if args.replicates == 1:
        h, model = generate_history(config, args.index)
        _emit(history_to_jsonl(h), args.out)
        model_out = args.model_out or (f"{args.out}.model.json" if args.out else None)
        if model_out:
            _write(model_out, _dump(model.to_dict()))
        return 0
    if not args.out:
        raise FormatError("--replicates > 1 needs --out DIRECTORY")
    os.makedirs(args.out, exist_ok=True)
    for i, h in enumerate(replicate(config, args.replicates, workers=args.workers, start=args.index)):
        _write(os.path.join(args.out, f"history_{args.index + i:06d}.jsonl"), history_to_jsonl(h))
    _, model = generate_history(config, args.index)
    _write(args.model_out or os.path.join(args.out, "model.json"), _dump(model.to_dict()))
    return 0


def cmd_estimate(args) -> int:
    h = load_history(args.history)
    report = estimate_report(h, args.policy)
    if args.format == "csv":
        if h.contextual:
            rows = [
                [x, a, "" if report.counts[x] == 0 else repr(float(report.per_action[x, a]))]
                for x in range(h.C) for a in range(h.K)
            ]
            _emit(_rows_csv(["context", "action", "estimate"], rows), args.out)
        else:
            rows = [[a, repr(float(v))] for a, v in enumerate(report.per_action)]
            _emit(_rows_csv(["action", "estimate"], rows), args.out)
    else:
        _emit(_dump(report.to_dict()), args.out)
    return 0


def cmd_bound(args) -> int:
    if args.certificate:
        cert = Certificate.from_dict(_read_json_file(args.certificate))
        h = load_history(args.history) if args.history else None
        ok = recheck(cert, h)
        res = B.evaluate_bound(cert.bound_spec, cert.kl_to_prior, cert.t, cert.eps)
        out = res.to_dict()
        out["certificate_consistent"] = ok
        out["lower_bound"] = cert.is_estimate - res.value
    else:
        d = _merged(args, ("kind", "kl", "t", "eps", "beta", "lam", "grid"), args.config)
        for name in ("kind", "kl", "t", "eps", "beta"):
            if d.get(name) is None:
                raise FormatError(f"missing --{name}")
        grid = d.get("grid")
        if d["kind"] == "hoeffding-grid" and grid is None:
            grid = B.default_lambda_grid(d["t"], d["eps"], d["beta"], args.grid_size, args.grid_decades)
        spec = B.BoundSpec(d["kind"], d["beta"], d.get("lam"), None if grid is None else tuple(sorted(grid)))
        res = B.evaluate_bound(spec, d["kl"], d["t"], d["eps"])
        out = res.to_dict()
    if args.format == "csv":
        keys = list(out)
        _emit(_rows_csv(keys, [["" if out[k] is None else out[k] for k in keys]]), args.out)
    else:
        _emit(_dump(out), args.out)
    return 0


def cmd_optimize(args) -> int:
    h = load_history(args.history)
    prior = args.prior
    if args.kind != "auto":
        cert = optimize_policy(h, prior, args.beta, args.kind, args.lam, args.grid)
        _emit(_dump(cert.to_dict()), args.out)
        return 0
    # picking the better of two bounds after seeing the data costs a union
    # bound, so each candidate is run at beta/2
    half = args.beta / 2.0
    candidates = {}
    failure = None
    for kind in ("hoeffding-optimized", "bernstein-optimized"):
        try:
            candidates[kind] = optimize_policy(h, prior, half, kind)
        except PreconditionError as exc:
            log.info("%s skipped: %s", kind, exc)
            failure = exc
    if not candidates:
        raise failure
    best = max(candidates.values(), key=lambda c: c.lower_bound)
    out = best.to_dict()
    out["selection"] = {
        "rule": "larger certified lower bound, each bound at beta/2",
        "beta_total": args.beta,
        "candidates": {k: {"lower_bound": c.lower_bound, "bound_value": c.bound_value}
                       for k, c in candidates.items()},
    }
    _emit(_dump(out), args.out)
    return 0


def cmd_certify(args) -> int:
    h = load_history(args.history)
    cert = certify(args.policy, h, args.prior, args.beta, args.kind, args.lam, args.grid)
    _emit(_dump(cert.to_dict()), args.out)
    return 0


def cmd_coverage(args) -> int:
    cfg = _merged(args, SIM_FLAGS, args.config)
    config = SimConfig.from_dict(cfg)
    report = run_coverage(
        config, args.m, args.kind, args.beta, args.policy_mode,
        policy=args.policy, prior=args.prior, lam=args.lam, grid=args.grid, workers=args.workers,
    )
    s = report.summary()
    print(
        f"coverage: {s['violations']}/{s['m']} violations (rate {s['violation_rate']:.4f}, "
        f"allowance {s['allowance']:.1f}) -> {'PASS' if s['within_allowance'] else 'FAIL'}",
        file=sys.stderr,
    )
    if args.format == "csv":
        _emit(report.to_csv(), args.out)
    else:
        _emit(_dump(report.to_dict(with_records=not args.summary_only)), args.out)
    return 0


def cmd_compare(args) -> int:
    d = _merged(args, ("kl", "t", "eps", "beta", "lam", "grid"), args.config)
    for name in ("kl", "t", "eps", "beta"):
        if d.get(name) is None:
            raise FormatError(f"missing --{name}")
    table = compare_bounds(
        d["kl"], d["t"], d["eps"], d["beta"], d.get("lam"), d.get("grid"),
        args.grid_size, args.grid_decades, sweep=args.sweep,
    )
    _emit(table.to_csv() if args.format == "csv" else _dump(table.to_dict()), args.out)
    return 0


# --- parser -----------------------------------------------------------------------

def _add_common(p, formats=("json", "csv")):
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=formats, default="json")
    p.add_argument("--config", help="JSON file; its values override flags")


def _add_bound_choice(p, kinds, default):
    p.add_argument("--kind", choices=kinds, default=default)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--lambda", dest="lam", type=float, help="lambda for parametric kinds")
    p.add_argument("--grid", type=_float_list, help="comma-separated lambdas for hoeffding-grid")


def _add_sim_flags(p):
    p.add_argument("--K", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--C", type=int, help="number of contexts (omit for multi-armed)")
    p.add_argument("--means", dest="reward_means", type=_json_arg,
                   help='JSON vector/matrix of mean rewards, or "random"')
    p.add_argument("--family", dest="reward_family", choices=("bernoulli", "deterministic"))
    p.add_argument("--logging-scheme", dest="logging_scheme",
                   choices=("fixed-uniform", "fixed-policy", "round-robin-of-policies"))
    p.add_argument("--logging-policies", dest="logging_policies", type=_json_arg,
                   help="JSON list of logging policies")
    p.add_argument("--context-probs", dest="context_probs", type=_json_arg)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pacbandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate logged histories (JSONL) and the ground-truth sidecar")
    _add_sim_flags(p)
    p.add_argument("--out", help="history path (or directory when --replicates > 1)")
    p.add_argument("--config", help="SimConfig JSON; its values override flags")
    p.add_argument("--model-out", help="reward-model sidecar path (default: <out>.model.json)")
    p.add_argument("--index", type=int, default=0, help="first replicate substream index")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="importance-sampling estimates for a history")
    p.add_argument("--history", required=True)
    p.add_argument("--policy", type=_json_arg, help="JSON policy for the policy-level estimate")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bound", help="evaluate one bound, or re-verify a certificate")
    _add_common(p)
    p.add_argument("--kind", choices=B.KINDS)
    p.add_argument("--kl", type=float)
    p.add_argument("--t", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--grid", type=_float_list)
    p.add_argument("--grid-size", type=int, default=16)
    p.add_argument("--grid-decades", type=float, default=3.0)
    p.add_argument("--certificate", help="certificate JSON from `optimize` to re-verify")
    p.add_argument("--history", help="history the certificate was issued for")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("optimize", help="certified Gibbs policy for a history")
    p.add_argument("--history", required=True)
    p.add_argument("--prior", type=_json_arg, help="JSON prior policy (default uniform)")
    _add_bound_choice(p, ("auto",) + B.CERTIFYING_KINDS, "auto")
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("certify", help="certificate for a given policy (no optimization)")
    p.add_argument("--history", required=True)
    p.add_argument("--policy", type=_json_arg, required=True)
    p.add_argument("--prior", type=_json_arg)
    _add_bound_choice(p, B.CERTIFYING_KINDS, "hoeffding-optimized")
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("coverage", help="Monte Carlo coverage of a bound")
    _add_sim_flags(p)
    _add_common(p)
    _add_bound_choice(p, B.CERTIFYING_KINDS, "hoeffding-optimized")
    p.add_argument("--m", type=int, default=1000, help="number of replicates")
    p.add_argument("--policy-mode", choices=("fixed", "optimized"), default="optimized")
    p.add_argument("--policy", type=_json_arg, help="policy for --policy-mode fixed")
    p.add_argument("--prior", type=_json_arg)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--summary-only", action="store_true")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("compare", help="all bound kinds at the same (kl, t, eps, beta)")
    _add_common(p)
    p.add_argument("--kl", type=float)
    p.add_argument("--t", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--grid", type=_float_list)
    p.add_argument("--grid-size", type=int, default=16)
    p.add_argument("--grid-decades", type=float, default=3.0)
    p.add_argument("--sweep", action="store_true", help="include the grid-size tradeoff curve (JSON)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return 1
    except PreconditionError as exc:
        print(f"error: precondition violated: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TypeError as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
