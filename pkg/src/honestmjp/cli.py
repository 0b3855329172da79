"""
Command-line entry point: ``honestmjp {simulate,fit,summarize,validate,tpm}``.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines (keys
are long flag names without dashes); explicit flags win.  Output files carry
a ``#`` header line with the settings needed to rerun them, and a JSON
manifest is written next to each main output.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure/abort.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from scipy import stats

from . import __version__
from .ctmc_simulator import regular_grids, simulate_panel
from .mcmc_engine import (
    ChainAborted,
    ChainConfig,
    Prior,
    posterior_summary,
    read_chain_csv,
    run_chain,
    truncation_report,
    write_chain_csv,
    write_summary_csv,
)
from .panel_io import PanelFormatError, parse_panel_csv, validate_panel, visit_summary, write_panel_csv
from .rate_models import ChannelPair, RateParams
from .tpm_oracle import InitialDistribution, QuadratureError, tpm_closed_form_constant, tpm_quadrature

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_model_flags(p, with_values=True):
    p.add_argument("--model", choices=("constant", "weibull", "gompertz"), default="weibull")
    if with_values:
        p.add_argument("--gamma0", type=float, default=1.0)
        p.add_argument("--lambda0", type=float)
        p.add_argument("--gamma1", type=float, default=1.0)
        p.add_argument("--lambda1", type=float)


def build_parser():
    parser = _Parser(prog="honestmjp", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"honestmjp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a panel CSV")
    p.add_argument("--config")
    _add_model_flags(p)
    p.add_argument("--subjects", type=int)
    p.add_argument("--visits", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--grid", help="CSV with subject,time[,state] columns supplying visit times")
    p.add_argument("--init", type=float, default=0.5, help="probability of starting in state 0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="run the augmentation sampler on a panel CSV")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    _add_model_flags(p, with_values=False)
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--burnin", type=int, default=1000)
    p.add_argument("--prior-a", type=float, default=0.1)
    p.add_argument("--prior-b", type=float, default=0.1)
    p.add_argument("--prior-alpha", type=float, default=1.0)
    p.add_argument("--prior-beta", type=float, default=1.0)
    p.add_argument("--proposal-sd", type=float, default=0.1)
    p.add_argument("--adapt", action="store_true", help="tune the proposal sd during burn-in")
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--max-attempts", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("summarize", help="quantile summary and density grids from a chain CSV")
    p.add_argument("--config")
    p.add_argument("--chain", required=True)
    p.add_argument("--grid-points", type=int, default=512)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("validate", help="check a panel CSV and print visit statistics")
    p.add_argument("--config")
    p.add_argument("--data", required=True)

    p = sub.add_parser("tpm", help="print the transition probability matrix")
    p.add_argument("--config")
    _add_model_flags(p)
    p.add_argument("--from-time", type=float, required=True)
    p.add_argument("--to-time", type=float, required=True)
    p.add_argument("--method", choices=("closed", "quadrature"))
    p.add_argument("--rel-tol", type=float, default=1e-10)
    return parser


def _read_config(path):
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def parse_args(argv=None):
    """Parse flags, filling unset options from ``--config`` if given.

    Config values are inserted right after the subcommand, so later
    explicit flags override them and required options may come from the file.
    """
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not any(a == "--config" or a.startswith("--config=") for a in argv):
        return parser.parse_args(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return parser.parse_args(argv)
    try:
        cfg = _read_config(known.config)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    cmd_at = next((i for i, a in enumerate(argv) if a in COMMANDS), None)
    if cmd_at is None:
        return parser.parse_args(argv)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    actions = {a.dest: a for a in sub.choices[argv[cmd_at]]._actions}
    extra = []
    for key, val in cfg.items():
        if key == "config":
            continue
        if key not in actions or key == "help":
            raise UsageError(f"unknown config key {key!r}")
        flag = actions[key].option_strings[-1]
        if isinstance(actions[key], argparse._StoreTrueAction):
            if val.lower() in ("1", "true", "yes"):
                extra.append(flag)
            continue
        extra += [flag, val]
    return parser.parse_args(argv[:cmd_at + 1] + extra + argv[cmd_at + 1:])


def _manifest(args, outputs):
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    return {
        "tool": "honestmjp",
        "version": __version__,
        "subcommand": args.command,
        "flags": flags,
        "seed": flags.get("seed"),
        "outputs": outputs,
    }


def _header(args, keys):
    vals = " ".join(f"{k}={getattr(args, k)}" for k in keys if getattr(args, k, None) is not None)
    return f"honestmjp {__version__} {args.command} {vals}"


def _write_manifest(path, args, outputs):
    with open(path, "w") as fh:
        json.dump(_manifest(args, outputs), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _channels(args):
    if args.lambda0 is None or args.lambda1 is None:
        raise UsageError("--lambda0 and --lambda1 are required")
    try:
        if args.model == "constant":
            return ChannelPair(RateParams.constant(args.lambda0), RateParams.constant(args.lambda1))
        return ChannelPair(RateParams(args.model, args.gamma0, args.lambda0),
                           RateParams(args.model, args.gamma1, args.lambda1))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_grids(path):
    import csv

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    if not rows:
        raise DataError(f"{path}: empty grid file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["subject", "time"]:
        raise DataError(f"{path}: line 1: grid header must start with subject,time")
    if "state" in header:
        panel = parse_panel_csv(path)
        return [s.times for s in panel.subjects], [s.subject_id for s in panel.subjects]
    grids, order = {}, []
    for lineno, r in enumerate(rows[1:], start=2):
        try:
            sid, t = r[0].strip(), float(r[1])
        except (IndexError, ValueError):
            raise DataError(f"{path}: line {lineno}: malformed grid row") from None
        if sid not in grids:
            grids[sid] = []
            order.append(sid)
        grids[sid].append(t)
    return [np.sort(np.array(grids[s])) for s in order], order


def cmd_simulate(args):
    ch = _channels(args)
    regular = [args.subjects, args.visits, args.horizon]
    if args.grid is not None and any(v is not None for v in regular):
        raise UsageError("--grid conflicts with --subjects/--visits/--horizon")
    if args.grid is None:
        if any(v is None for v in regular):
            raise UsageError("need --subjects, --visits and --horizon, or --grid")
        try:
            grids = regular_grids(args.subjects, args.visits, args.horizon)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        ids = None
    else:
        grids, ids = _read_grids(args.grid)
    if not 0 <= args.init <= 1:
        raise UsageError("--init must be a probability")
    init = InitialDistribution(args.init, 1 - args.init)
    rng = np.random.default_rng(args.seed)
    try:
        panel = simulate_panel(ch, grids, init, rng, ids=ids)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    rep = validate_panel(panel)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    header = _header(args, ["model", "gamma0", "lambda0", "gamma1", "lambda1", "subjects", "visits",
                            "horizon", "grid", "init", "seed"])
    write_panel_csv(panel, args.out, comment=header)
    _write_manifest(args.out + ".manifest.json", args, {"panel": args.out})
    print(f"wrote {panel.n_observations} observations for {len(panel)} subjects to {args.out}")
    return EXIT_OK


def cmd_fit(args):
    try:
        panel = parse_panel_csv(args.data)
    except OSError as exc:
        raise DataError(f"cannot read {args.data}: {exc}") from None
    rep = validate_panel(panel)
    if rep.n_intervals == 0:
        raise DataError("panel has no observation intervals")
    try:
        cfg = ChainConfig(iterations=args.iters, burn_in=args.burnin, proposal_sd=args.proposal_sd,
                          seed=args.seed, thin=args.thin, max_attempts=args.max_attempts,
                          workers=args.threads, adapt=args.adapt)
        prior = Prior(args.prior_a, args.prior_b, args.prior_alpha, args.prior_beta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        chain = run_chain(panel, args.model, prior, cfg)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    header = _header(args, ["model", "seed", "iters", "burnin", "thin", "prior_a", "prior_b",
                            "prior_alpha", "prior_beta", "proposal_sd", "data"])
    chain_path = args.out_prefix + ".chain.csv"
    summary_path = args.out_prefix + ".summary.csv"
    write_chain_csv(chain, chain_path, comment=header)
    summary = posterior_summary(chain)
    write_summary_csv(summary, summary_path, comment=header)
    _write_manifest(args.out_prefix + ".manifest.json", args,
                    {"chain": chain_path, "summary": summary_path})
    _print_summary(summary)
    t0, t1 = truncation_report(chain)
    acc = chain.acceptance_rate()
    print(f"truncation fraction: channel0 {t0:.3f}, channel1 {t1:.3f}")
    print(f"acceptance: channel0 {acc[0]:.3f}, channel1 {acc[1]:.3f}")
    return EXIT_OK


def _print_summary(summary):
    print(f"{'parameter':<10s} {'median':>12s} {'lo95':>12s} {'hi95':>12s}")
    for name, s in summary.items():
        print(f"{name:<10s} {s.median:12.5g} {s.lo95:12.5g} {s.hi95:12.5g}")


def density_grid(x, points=512):
    """Gaussian KDE of a sample on a grid reaching four bandwidths past its range.

    Returns ``None`` for a sample without spread.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        return None
    kde = stats.gaussian_kde(x)
    bw = float(np.sqrt(kde.covariance[0, 0]))
    grid = np.linspace(x.min() - 4 * bw, x.max() + 4 * bw, points)
    return grid, kde(grid)


def cmd_summarize(args):
    if args.grid_points < 2:
        raise UsageError("--grid-points must be at least 2")
    try:
        chain = read_chain_csv(args.chain)
    except OSError as exc:
        raise DataError(f"cannot read {args.chain}: {exc}") from None
    except ValueError as exc:
        raise DataError(f"{args.chain}: {exc}") from None
    if chain.draws.shape[0] == 0:
        raise DataError(f"{args.chain}: no draws")
    summary = posterior_summary(chain)
    header = f"honestmjp {__version__} summarize chain={args.chain} " + " ".join(
        f"{k}={v}" for k, v in chain.meta.items() if k in ("model", "seed"))
    summary_path = args.out_prefix + ".summary.csv"
    density_path = args.out_prefix + ".density.csv"
    write_summary_csv(summary, summary_path, comment=header)
    degenerate = []
    with open(density_path, "w") as fh:
        fh.write(f"# {header}\n")
        fh.write("parameter,value,density\n")
        for j, name in enumerate(summary):
            dg = density_grid(chain.draws[:, j], args.grid_points)
            if dg is None:
                degenerate.append(name)
                continue
            for v, d in zip(*dg):
                fh.write(f"{name},{float(v)!r},{float(d)!r}\n")
    _write_manifest(args.out_prefix + ".manifest.json", args,
                    {"summary": summary_path, "density": density_path})
    _print_summary(summary)
    for name in degenerate:
        print(f"note: {name} has no spread (degenerate); no density grid written")
    return EXIT_OK


def cmd_validate(args):
    try:
        panel = parse_panel_csv(args.data)
    except OSError as exc:
        raise DataError(f"cannot read {args.data}: {exc}") from None
    rep = validate_panel(panel)
    print(f"subjects: {rep.n_subjects}  observations: {rep.n_observations}  "
          f"intervals: {rep.n_intervals}")
    for k in (0, 1):
        print(f"intervals starting in {k}: {rep.interval_counts[k]}  exposure: {rep.exposure[k]:.6g}  "
              f"transitions {k}->{1 - k}: {rep.transition_counts[(k, 1 - k)]}")
    if len(panel):
        print("visits per subject: " + visit_summary(panel).format())
    for w in rep.warnings:
        print(f"warning: {w}")
    for v in rep.violations:
        print(f"violation: {v}")
    return EXIT_OK if rep.ok else EXIT_DATA


def cmd_tpm(args):
    ch = _channels(args)
    method = args.method or ("closed" if ch.is_constant else "quadrature")
    if args.from_time > args.to_time or args.from_time < 0:
        raise UsageError("need 0 <= --from-time <= --to-time")
    if method == "closed":
        if not ch.is_constant:
            raise UsageError("closed form only exists for the constant model; use --method quadrature")
        P = tpm_closed_form_constant(ch.channel0.rate, ch.channel1.rate, args.from_time, args.to_time)
    else:
        P = tpm_quadrature(ch, args.from_time, args.to_time, rel_tol=args.rel_tol)
    print(json.dumps({"method": method, "s": args.from_time, "t": args.to_time,
                      "p00": P.p00, "p01": P.p01, "p10": P.p10, "p11": P.p11}))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "summarize": cmd_summarize,
    "validate": cmd_validate,
    "tpm": cmd_tpm,
}


def main(argv=None):
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PanelFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ChainAborted, QuadratureError, FloatingPointError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
