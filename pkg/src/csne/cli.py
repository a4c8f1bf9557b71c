"""Command line entry point: ``csne <subcommand> [options]``.

Every subcommand writes its outputs plus a ``run.meta`` file (resolved
``key = value`` settings, sorted by key) into ``--out``. Passing that file
back through ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import embedding as emb_mod
from . import evaluation, maxent
from .features import observed_statistics
from .graph import ParseError, load_graph, stats as graph_stats, write_edges

logger = logging.getLogger("csne")

# settings that describe where/how a run reports rather than what it computes
_NOT_META = {"config", "func", "verbose", "quiet"}


def read_config(path):
    """Parse a line-oriented ``key = value`` file (``#`` starts a comment)."""
    cfg = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _coerce(value, default):
    if isinstance(value, str) and default is not None and not isinstance(default, str):
        if isinstance(default, bool):
            return value.lower() in ("1", "true", "yes", "on")
        if isinstance(default, list):
            return value.split(",") if value else []
        return type(default)(value)
    return value


def write_meta(args, out):
    with open(os.path.join(out, "run.meta"), "w", encoding="utf-8") as fh:
        for key in sorted(vars(args)):
            if key in _NOT_META:
                continue
            value = getattr(args, key)
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(map(str, value))
            fh.write(f"{key} = {value}\n")


def _load_opts(args):
    return dict(fmt=args.format, policy=args.policy, lcc=not args.no_lcc,
                weighted=not args.strict_signs, header=args.header)


def _load(path, args):
    opts = _load_opts(args)
    if opts["fmt"] == "wiki-rfa":
        opts.pop("weighted")
        opts.pop("header")
    return load_graph(path, **opts)


def _prior_config(args, use_triangles):
    return maxent.MaxEntConfig(use_triangles=use_triangles, max_iter=args.max_iter, tol=args.tol, l2=args.l2)


def cmd_stats(args):
    g = _load(args.data, args)
    st = graph_stats(g)
    rows = st.rows()
    if args.triangles:
        c = st.census
        s = observed_statistics(g, use_triangles=True)
        rows += [("t_ppp", str(c.t_ppp)), ("t_ppm", str(c.t_ppm)), ("t_pmm", str(c.t_pmm)),
                 ("t_mmm", str(c.t_mmm)), ("t_total", str(c.t_total)),
                 ("c_pp", str(s.triangle[0])), ("c_pm", str(s.triangle[1])), ("c_mm", str(s.triangle[2]))]
    text = "".join(f"{k}\t{v}\n" for k, v in rows)
    with open(os.path.join(args.out, "stats.tsv"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)


def cmd_split(args):
    g = _load(args.data, args)
    split = evaluation.split_edges(g, args.train_frac, args.seed)
    with open(os.path.join(args.out, "train.edges"), "w", encoding="utf-8") as fh:
        write_edges(g, fh, split.train_ids)
    with open(os.path.join(args.out, "test.edges"), "w", encoding="utf-8") as fh:
        write_edges(g, fh, split.test_ids)
    print(f"split {g.m} edges: {len(split.train_ids)} train, {len(split.test_ids)} test -> {args.out}")


def cmd_fit_prior(args):
    g = _load(args.data, args)
    t0 = time.perf_counter()
    model = maxent.fit(g, config=_prior_config(args, args.triangles))
    elapsed = time.perf_counter() - t0
    path = os.path.join(args.out, "prior.model")
    with open(path, "w", encoding="utf-8") as fh:
        maxent.save_model(model, fh, header_extra=f" train={os.path.abspath(args.data)}")
    res = maxent.constraint_residuals(model)
    print(f"prior fit: {model.info.iterations} iterations, |grad|={model.info.grad_norm:.3g}, "
          f"max|residual|={np.max(np.abs(res)):.3g}, {elapsed:.2f}s -> {path}")


def _model_and_graph(args):
    with open(args.model, encoding="utf-8") as fh:
        header = fh.readline()
    opts = dict(tok.split("=", 1) for tok in header[2:].split()[1:] if "=" in tok)
    data = args.data or opts.get("train")
    if not data:
        raise ValueError("model file does not name its training graph; pass --data")
    g = _load(data, args)
    with open(args.model, encoding="utf-8") as fh:
        model = maxent.load_model(fh, g)
    return model, g


def cmd_fit_csne(args):
    args.model = args.prior
    prior, g = _model_and_graph(args)
    cfg = emb_mod.CsneConfig(dim=args.dim, sigma1=args.sigma1, sigma2=args.sigma2, iterations=args.iters,
                             lr=args.lr, seed=args.seed)
    t0 = time.perf_counter()
    emb = emb_mod.fit_csne(g, prior, cfg)
    elapsed = time.perf_counter() - t0
    path = os.path.join(args.out, "embedding.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        emb.save(fh)
    with open(os.path.join(args.out, "trace.tsv"), "w", encoding="utf-8") as fh:
        fh.write("iteration\tlog_likelihood\n")
        for it, ll in enumerate(emb.trace, start=1):
            fh.write(f"{it}\t{ll!r}\n")
    print(f"csne fit: {cfg.iterations} iterations, log-likelihood {emb.trace[-1]:.4f}, {elapsed:.2f}s -> {path}")


def _read_pairs(path, g):
    pairs, raw = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t") if "\t" in line else line.split()
            if len(fields) < 2:
                raise ParseError("expected u<TAB>v", lineno)
            u, v = fields[0], fields[1]
            pairs.append((g.node(u), g.node(v)))
            raw.append((u, v))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2), raw


def cmd_predict(args):
    model, g = _model_and_graph(args)
    pairs, raw = _read_pairs(args.pairs, g)
    if args.embedding:
        with open(args.embedding, encoding="utf-8") as fh:
            emb = emb_mod.Embedding.load(fh, g)
        probs = emb_mod.predict_pairs(emb, model, pairs)
    else:
        probs = model.probabilities(pairs)
    path = os.path.join(args.out, "predictions.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        for (u, v), p in zip(raw, probs):
            fh.write(f"{u}\t{v}\t{float(p)!r}\n")
    print(f"predicted {len(raw)} pairs -> {path}")


def cmd_eval(args):
    prior_cfg = _prior_config(args, True)
    csne_cfg = emb_mod.CsneConfig(dim=args.dim, sigma1=args.sigma1, sigma2=args.sigma2, iterations=args.iters,
                                  lr=args.lr, seed=args.seed)
    load_opts = _load_opts(args)
    if load_opts["fmt"] == "wiki-rfa":
        load_opts.pop("weighted")
        load_opts.pop("header")
    report = evaluation.run_experiment(args.data, args.method, args.repeats, args.train_frac, args.seed,
                                       prior_cfg, csne_cfg, dataset=args.dataset, parallel=args.parallel,
                                       **load_opts)
    text = report.format()
    with open(os.path.join(args.out, "report.tsv"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)


def cmd_export_viz(args):
    g = _load(args.data, args)
    with open(args.embedding, encoding="utf-8") as fh:
        emb = emb_mod.Embedding.load(fh, g)
    with open(os.path.join(args.out, "nodes.tsv"), "w", encoding="utf-8") as fh:
        fh.write("node\t" + "\t".join(f"x{k}" for k in range(emb.d)) + "\n")
        for lab, row in zip(g.labels, emb.X):
            fh.write(lab + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")
    with open(os.path.join(args.out, "edges.tsv"), "w", encoding="utf-8") as fh:
        write_edges(g, fh)
    print(f"exported {g.n} nodes and {g.m} edges -> {args.out}")


def _add_data(p, required=True):
    p.add_argument("--data", required=required, help="signed edge-list file")
    p.add_argument("--format", default="edges", choices=("edges", "wiki-rfa"))
    p.add_argument("--policy", default="sum", choices=("sum", "first", "drop"),
                   help="merge rule for several records on one node pair")
    p.add_argument("--strict-signs", action="store_true", help="sign column must be exactly -1 or 1")
    p.add_argument("--header", action="store_true", help="skip the first data line")
    p.add_argument("--no-lcc", action="store_true", help="keep all components")


def _add_prior(p):
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--l2", type=float, default=0.0)


def _add_csne(p):
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=2.0)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="key = value file; command-line flags take precedence")
    common.add_argument("-q", "--quiet", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="csne", description="MaxEnt sign priors and conditional signed embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[common], help="print dataset statistics")
    _add_data(p)
    p.add_argument("--triangles", action="store_true", help="also print the triangle census and targets")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", parents=[common], help="connected train/test edge split")
    _add_data(p)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("fit-prior", parents=[common], help="fit the MaxEnt sign prior")
    _add_data(p)
    _add_prior(p)
    p.add_argument("--triangles", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_fit_prior)

    p = sub.add_parser("fit-csne", parents=[common], help="learn a CSNE embedding on top of a prior")
    _add_data(p, required=False)
    _add_csne(p)
    p.add_argument("--prior", required=True, help="model file written by fit-prior")
    p.set_defaults(func=cmd_fit_csne)

    p = sub.add_parser("predict", parents=[common], help="sign probabilities for node pairs")
    _add_data(p, required=False)
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", required=True, help="file of u<TAB>v lines")
    p.add_argument("--embedding", help="embedding file; without it the prior alone is used")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="repeated sign-prediction experiment")
    _add_data(p)
    _add_prior(p)
    _add_csne(p)
    p.add_argument("--method", action="append", choices=evaluation.METHODS,
                   help="repeatable; default prior-pol-tri")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--dataset", help="name used in the report (default: file stem)")
    p.add_argument("--parallel", action="store_true", help="run repeats in worker processes")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-viz", parents=[common], help="write node coordinates and signed edges")
    _add_data(p)
    p.add_argument("--embedding", required=True)
    p.set_defaults(func=cmd_export_viz)
    return parser, sub


def parse_args(argv):
    parser, sub = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    cfg = {}
    if known.config:
        try:
            cfg = read_config(known.config)
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
        if not any(a in sub.choices for a in argv) and "command" in cfg:
            argv = [cfg["command"]] + list(argv)
    # a config file takes the place of defaults; explicit flags still win
    for name, sp in sub.choices.items():
        defaults = {}
        for action in sp._actions:
            if action.dest in cfg and action.dest not in _NOT_META:
                value = cfg[action.dest]
                action.required = False
                if isinstance(action, argparse._AppendAction):
                    defaults[action.dest] = [v.strip() for v in value.split(",") if v.strip()]
                else:
                    defaults[action.dest] = _coerce(value, action.default)
        sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.command == "eval" and not args.method:
        args.method = ["prior-pol-tri"]
    if hasattr(args, "sigma1") and not 0 < args.sigma1 < args.sigma2:
        sub.choices[args.command].error(f"need 0 < sigma1 < sigma2, got {args.sigma1} and {args.sigma2}")
    for flag in ("dim", "iters", "repeats"):
        if getattr(args, flag, 1) < 1:
            sub.choices[args.command].error(f"--{flag} must be at least 1")
    if getattr(args, "lr", 1.0) <= 0:
        sub.choices[args.command].error("--lr must be positive")
    for flag in ("data", "prior", "model", "pairs", "embedding"):
        path = getattr(args, flag, None)
        if path is not None and not os.path.isfile(path):
            sub.choices[args.command].error(f"--{flag}: no such file: {path}")
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        os.makedirs(args.out, exist_ok=True)
        write_meta(args, args.out)
        args.func(args)
    except (OSError, ValueError, KeyError, FloatingPointError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"csne {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
