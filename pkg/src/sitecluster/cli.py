"""Command-line front end.

Exit codes: 0 success, 1 bad flags or input files, 2 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import io
from .core import EmbeddingSet, SiteDictionary, SolveConfig
from .dictionary import generality_scores, parse_q_grid, quantile_keep_indices, sweep_quantiles
from .errors import InputError, SiteClusterError, SolverError
from .metrics import evaluate
from .solve import INIT_METHODS, SOLVERS, brute_force_oracle, solve

log = logging.getLogger("sitecluster")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _load(args) -> tuple[EmbeddingSet, SiteDictionary]:
    emb = io.read_embeddings(args.embeddings)
    sites = io.read_dictionary(args.dict, getattr(args, "dict_labels", None))
    if emb.dim != sites.dim:
        raise InputError(
            f"--embeddings has dimension {emb.dim} but --dict has dimension {sites.dim}"
        )
    if getattr(args, "normalize", False):
        emb, sites = emb.normalize(), sites.normalize()
    return emb, sites


def _truth(args, n: int) -> Optional[list[str]]:
    if not getattr(args, "truth", None):
        return None
    truth = io.read_labels(args.truth)
    if len(truth) != n:
        raise InputError(f"--truth has {len(truth)} labels for {n} points")
    return truth


def _config(args) -> SolveConfig:
    p = args.p
    if p is None and args.solver == "pam":
        p = 1
    return SolveConfig(
        k=args.k,
        swaps_p=p,
        max_iters=args.max_iters,
        oversize_factor=args.oversize_factor,
        seed=args.seed,
        normalize=args.normalize,
    )


def _resolved(args, cfg: Optional[SolveConfig] = None, **extra) -> dict:
    out = {k: v for k, v in vars(args).items() if k != "func"}
    if cfg is not None:
        out.update(p=cfg.swaps_p, max_iters=cfg.max_iters, seed=cfg.seed)
    out.update(extra)
    return out


def _centers(sites: SiteDictionary, indices) -> list[dict]:
    return [{"index": int(i), "label": sites.labels[int(i)]} for i in indices]


def _report(label: str, loss: float, centers: list[dict]) -> None:
    print(f"{label} loss: {loss!r}")
    print("centers: " + ", ".join(c["label"] for c in centers))


def cmd_cluster(args) -> int:
    emb, sites = _load(args)
    cfg = _config(args)
    truth = _truth(args, emb.n)
    kept = np.arange(sites.n)
    if args.q is not None:
        kept = quantile_keep_indices(generality_scores(sites).scores, args.q)
    if cfg.k > len(kept):
        raise InputError(f"-k {cfg.k} exceeds the {len(kept)} available dictionary sites")
    state, trace = solve(emb, sites.subset(kept), cfg, init=args.init, solver=args.solver)
    centers = _centers(sites, kept[state.centers])
    metrics = None
    if truth is not None:
        metrics = evaluate(state.assignment, truth, cfg.k, state.loss).to_dict()
    io.write_result(
        {
            "command": "cluster",
            "config": _resolved(args, cfg),
            "oracle": False,
            "centers": centers,
            "assignment": state.assignment.tolist(),
            "loss": state.loss,
            "metrics": metrics,
            "trace": trace.summary(),
        },
        args.out,
    )
    _report("final", state.loss, centers)
    if metrics:
        print(f"acc {metrics['acc']:.4f}  nmi {metrics['nmi']:.4f}  ari {metrics['ari']:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = parse_q_grid(args.q_grid)
    emb, sites = _load(args)
    cfg = _config(args)
    truth = _truth(args, emb.n)
    result = sweep_quantiles(emb, sites, cfg, grid, init=args.init, solver=args.solver)
    table = []
    print(f"{'q':>6} {'sites':>6} {'entropy':>9} {'loss':>12}" + ("   acc" if truth else ""))
    for rec in result.records:
        row = {"q": rec.q, "size": rec.size, "entropy": rec.entropy, "error": rec.error}
        if rec.state is None:
            print(f"{rec.q:6.3f} {rec.size:6d}   failed: {rec.error}")
            table.append(row)
            continue
        row["loss"] = rec.state.loss
        row["centers"] = _centers(sites, rec.site_indices)
        line = f"{rec.q:6.3f} {rec.size:6d} {rec.entropy:9.5f} {rec.state.loss:12.6f}"
        if truth is not None:
            row["metrics"] = evaluate(rec.state.assignment, truth, cfg.k, rec.state.loss).to_dict()
            line += f" {row['metrics']['acc']:.4f}"
        print(line)
        table.append(row)
    chosen = result.chosen
    state = chosen.state
    centers = _centers(sites, chosen.site_indices)
    metrics = None
    if truth is not None:
        metrics = evaluate(state.assignment, truth, cfg.k, state.loss).to_dict()
    io.write_result(
        {
            "command": "sweep",
            "config": _resolved(args, cfg, q_grid_values=grid),
            "oracle": False,
            "chosen_q": result.chosen_q,
            "centers": centers,
            "assignment": state.assignment.tolist(),
            "loss": state.loss,
            "metrics": metrics,
            "sweep": table,
        },
        args.out,
    )
    print(f"chosen q: {result.chosen_q}")
    _report("final", state.loss, centers)
    return EXIT_OK


def cmd_oracle(args) -> int:
    emb, sites = _load(args)
    if args.k < 1 or args.k > sites.n:
        raise InputError(f"-k {args.k} must lie in [1, {sites.n}]")
    state = brute_force_oracle(emb, sites, args.k)
    centers = _centers(sites, state.centers)
    io.write_result(
        {
            "command": "oracle",
            "config": _resolved(args),
            "oracle": True,
            "centers": centers,
            "assignment": state.assignment.tolist(),
            "loss": state.loss,
            "metrics": None,
        },
        args.out,
    )
    _report("optimal", state.loss, centers)
    return EXIT_OK


def _read_pred(path) -> list:
    if str(path).endswith(".json"):
        return io.read_result(path)["assignment"]
    return io.read_labels(path)


def cmd_eval(args) -> int:
    pred = _read_pred(args.pred)
    truth = io.read_labels(args.truth)
    report = evaluate(pred, truth)
    io.write_result({"command": "eval", "config": _resolved(args), "metrics": report.to_dict()}, args.out)
    print(f"acc {report.acc:.4f}  nmi {report.nmi:.4f}  ari {report.ari:.4f}  entropy {report.entropy:.4f}")
    return EXIT_OK


def cmd_gen(args) -> int:
    emb, sites, truth = io.gen_synthetic(
        args.k,
        args.points_per_cluster,
        args.n_sites,
        args.dim,
        args.sigma,
        general_site=args.general_site,
        seed=args.seed,
        attractor_pull=args.attractor_pull,
    )
    prefix = args.out_prefix
    io.write_embeddings(emb, f"{prefix}.emb")
    io.write_dictionary(sites, f"{prefix}.dict.emb", f"{prefix}.dict.txt")
    io.write_labels(truth.tolist(), f"{prefix}.truth.txt")
    print(f"wrote {prefix}.emb {prefix}.dict.emb {prefix}.dict.txt {prefix}.truth.txt")
    return EXIT_OK


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--dict-labels", required=True)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--p", type=int, default=None, help="swaps per iteration (default k//2; 1 for pam)")
    p.add_argument("--max-iters", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=INIT_METHODS, default="ward")
    p.add_argument("--solver", choices=SOLVERS, default="relaxed")
    p.add_argument("--oversize-factor", type=float, default=3.0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--truth")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sitecluster", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cluster", help="cluster with dictionary-constrained centers")
    _solver_flags(p)
    p.add_argument("--q", type=float, default=None, help="keep this fraction of least generic sites")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sweep", help="pick the filtering quantile by cluster-size entropy")
    _solver_flags(p)
    p.add_argument("--q-grid", default="0.05:1.0:0.05")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="exact optimum by enumeration (small instances)")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--dict-labels")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="ACC / NMI / ARI of a labeling")
    p.add_argument("--pred", required=True, help="label file or result JSON")
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="write a seeded synthetic instance")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--points-per-cluster", type=int, required=True)
    p.add_argument("--n-sites", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--general-site", action="store_true")
    p.add_argument("--attractor-pull", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(message)s")
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SiteClusterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
