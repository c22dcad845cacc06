"""Command-line front end: compile, ground, train, infer, eval.

Every artifact embeds a manifest (program hash, data hash, seed) so runs are
reproducible; all randomness flows from ``--seed`` through named streams.
Set ``RELGRAPH_LOG`` to control the log level.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import learning
from .datastore import load_data
from .dsl import compile_program, parse_program, validate
from .errors import RelgraphError
from .grounding import dump_factor_graph, ground
from .inference import dump_lp, k_best, solve_approx, solve_exact
from .learning import (
    TrainConfig,
    evaluate,
    predict_joint,
    predict_local,
    predict_map,
    train_global_crf,
    train_global_hinge,
    train_local,
)
from .rng import named_stream
from .scorers import (
    NetworkConfig,
    apply_checkpoint,
    build_scorers,
    load_checkpoint,
    save_checkpoint,
    score_graph,
)

log = logging.getLogger("relgraph")


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _sha256_dir(path: Path) -> str:
    digest = hashlib.sha256()
    for p in sorted(path.iterdir()):
        if p.is_file():
            digest.update(p.name.encode())
            digest.update(p.read_bytes())
    return digest.hexdigest()[:16]


def _manifest(args) -> dict:
    manifest = {"program": _sha256_file(Path(args.program))}
    if getattr(args, "data_dir", None):
        manifest["data"] = _sha256_dir(Path(args.data_dir))
    if getattr(args, "net_config", None):
        manifest["net_config"] = _sha256_file(Path(args.net_config))
    if hasattr(args, "seed"):
        manifest["seed"] = args.seed
    return manifest


def _load_program(args):
    return compile_program(Path(args.program).read_text())


def _pmap(jobs: int, fn, items):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_compile(args) -> int:
    program = validate(parse_program(Path(args.program).read_text()))
    report = {
        "entities": len(program.entities),
        "relations": len(program.relations),
        "open_relations": len(program.open_relations()),
        "weighted_templates": len(program.templates),
        "hard_constraints": len(program.constraints) + len(program.ariths),
        "template_ids": [t.template_id for t in program.templates],
        "manifest": _manifest(args),
    }
    print(f"program OK: {args.program}")
    print(f"  entities:             {report['entities']}")
    print(f"  relations:            {report['relations']} ({report['open_relations']} open)")
    print(f"  weighted templates:   {report['weighted_templates']} "
          f"({', '.join(report['template_ids'])})")
    print(f"  hard constraints:     {report['hard_constraints']}")
    if args.json:
        print(json.dumps(report, indent=2))
    return 0


def cmd_ground(args) -> int:
    program = _load_program(args)
    data = load_data(args.data_dir, program)
    graphs = ground(program, data)
    manifest = _manifest(args)
    total_pot = sum(len(g.potentials) for g in graphs)
    total_con = sum(len(g.constraints) for g in graphs)
    print(f"grounded {len(graphs)} factor graph(s): "
          f"{sum(g.num_variables for g in graphs)} variables, "
          f"{total_pot} potentials, {total_con} constraints")
    for g in graphs:
        print(f"  {g.instance_id}: variables={g.num_variables} "
              f"potentials={len(g.potentials)} constraints={len(g.constraints)}")
    if args.dump:
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            for g in graphs:
                (out / f"{g.instance_id}.fg").write_text(dump_factor_graph(g, manifest))
            print(f"dumps written to {out}")
        else:
            for g in graphs:
                sys.stdout.write(dump_factor_graph(g, manifest))
    return 0


def _split_folds(n_graphs: int, folds: int, seed: int):
    """Instance-level folds: (train, dev, test) index lists per fold."""
    order = list(named_stream(seed, "folds").permutation(n_graphs))
    if folds <= 1:
        return [(order, order, order)]
    chunks = [order[i::folds] for i in range(folds)]
    out = []
    for i in range(folds):
        test = chunks[i]
        rest = [g for j, c in enumerate(chunks) if j != i for g in c]
        n_dev = max(1, len(rest) // 5)
        out.append((rest[n_dev:], rest[:n_dev], test))
    return out


def _train_one_fold(program, data, graphs, net_config, args, fold_seed, train_idx, dev_idx):
    scorers = build_scorers(program, data, net_config, seed=fold_seed)
    train_graphs = [graphs[i] for i in train_idx]
    dev_graphs = [graphs[i] for i in dev_idx]
    local_cfg = TrainConfig(
        mode="local", lr=args.lr, epochs=args.epochs, patience=args.patience,
        optimizer=args.optimizer, seed=fold_seed, solver=args.solver,
        exact_cap=args.exact_cap,
    )
    if args.warm_start:
        apply_checkpoint(scorers, load_checkpoint(args.warm_start))
    else:
        train_local(train_graphs, scorers, data, local_cfg, dev_graphs)
    if args.mode in ("global-hinge", "global-crf"):
        global_cfg = TrainConfig(
            mode=args.mode, lr=args.global_lr if args.global_lr is not None else args.lr / 10,
            epochs=args.epochs, patience=args.patience, pool_size=args.pool,
            optimizer=args.optimizer, seed=fold_seed, solver=args.solver,
            freeze_encoders=args.freeze_encoders, exact_cap=args.exact_cap,
        )
        trainer = train_global_hinge if args.mode == "global-hinge" else train_global_crf
        trainer(train_graphs, scorers, data, global_cfg, dev_graphs)
    return scorers


def _predict_for_mode(mode, graphs, scorers, data, args):
    if mode == "local":
        return predict_local(graphs, scorers, data, exact_cap=args.exact_cap)
    if mode == "joint":
        return predict_joint(graphs, scorers, data, solver=args.solver,
                             exact_cap=args.exact_cap)
    return predict_map(graphs, scorers, data, normalize=False, solver=args.solver,
                       exact_cap=args.exact_cap)


def cmd_train(args) -> int:
    program = _load_program(args)
    data = load_data(args.data_dir, program)
    graphs = ground(program, data)
    net_config = NetworkConfig.load(args.net_config)
    manifest = _manifest(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    folds = _split_folds(len(graphs), args.folds, args.seed)
    fold_reports = []
    for i, (train_idx, dev_idx, test_idx) in enumerate(folds):
        fold_seed = args.seed + i
        scorers = _train_one_fold(
            program, data, graphs, net_config, args, fold_seed, train_idx, dev_idx
        )
        test_graphs = [graphs[j] for j in test_idx]
        preds = _predict_for_mode(args.mode, test_graphs, scorers, data, args)
        report = evaluate(test_graphs, preds)
        report["fold"] = i
        fold_reports.append(report)
        ckpt_path = out_dir / f"checkpoint_fold{i}.txt"
        save_checkpoint(scorers, ckpt_path, {**manifest, "fold": i})
        log.info("fold %d: %s", i, report["average"])

    metrics = {
        "manifest": manifest,
        "mode": args.mode,
        "folds": fold_reports,
        "average": {
            m: sum(r["average"][m] for r in fold_reports) / len(fold_reports)
            for m in fold_reports[0]["average"]
        },
    }
    metrics_path = Path(args.metrics_out) if args.metrics_out else out_dir / "metrics.json"
    metrics_path.write_text(json.dumps(metrics, indent=2) + "\n")
    print(f"mode={args.mode} folds={args.folds} "
          + " ".join(f"{m}={v:.4f}" for m, v in metrics["average"].items()))
    print(f"metrics written to {metrics_path}")
    return 0


def _atom_key(variable) -> str:
    return f"{variable.predicate}({','.join(variable.args)})"


def cmd_infer(args) -> int:
    program = _load_program(args)
    data = load_data(args.data_dir, program)
    graphs = ground(program, data)
    net_config = NetworkConfig.load(args.net_config)
    scorers = build_scorers(program, data, net_config, seed=args.seed)
    if args.checkpoint:
        apply_checkpoint(scorers, load_checkpoint(args.checkpoint))

    def solve_one(fg):
        tables = score_graph(scorers, fg, data)
        if args.dump_lp:
            sys.stdout.write(dump_lp(fg, tables))
        if args.pool > 1:
            pool = k_best(fg, tables, args.pool, cap=args.exact_cap)
            return pool.assignments
        if args.solver == "approx":
            return (solve_approx(fg, tables, seed=args.seed),)
        return (solve_exact(fg, tables, cap=args.exact_cap),)

    results = _pmap(args.jobs, solve_one, graphs)
    payload = {"manifest": _manifest(args), "assignments": {}, "pools": {}}
    for fg, pool in zip(graphs, results):
        best = pool[0]
        payload["assignments"][fg.instance_id] = {
            _atom_key(v): int(best.values[v.id]) for v in fg.variables
        }
        if args.pool > 1:
            payload["pools"][fg.instance_id] = [
                {"score": a.score, "values": {_atom_key(v): int(a.values[v.id])
                                              for v in fg.variables}}
                for a in pool
            ]
    if not payload["pools"]:
        del payload["pools"]
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"assignments written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    program = _load_program(args)
    data = load_data(args.data_dir, program)
    graphs = ground(program, data)
    payload = json.loads(Path(args.predictions).read_text())

    from .inference import Assignment

    predictions = []
    for fg in graphs:
        atom_values = payload["assignments"].get(fg.instance_id)
        if atom_values is None:
            raise RelgraphError(f"predictions file has no entry for {fg.instance_id}")
        values = tuple(atom_values[_atom_key(v)] for v in fg.variables)
        predictions.append(Assignment(values, 0.0))
    report = evaluate(graphs, predictions)
    report["manifest"] = _manifest(args)
    text = json.dumps(report, indent=2) + "\n"
    if args.metrics_out:
        Path(args.metrics_out).write_text(text)
        print(f"metrics written to {args.metrics_out}")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relgraph",
        description="Compile, ground, train and run inference for relational rule programs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, net=False):
        p.add_argument("--program", required=True, help="program file (.dr)")
        if data:
            p.add_argument("--data-dir", required=True, help="directory of .tsv/.feat/.vocab files")
        if net:
            p.add_argument("--net-config", required=True, help="network config (JSON)")
        p.add_argument("--seed", type=int, default=0, help="master random seed")
        p.add_argument("--exact-cap", type=int, default=40,
                       help="max free variables for the exact solver")

    p = sub.add_parser("compile", help="parse and validate a program")
    p.add_argument("--program", required=True, help="program file (.dr)")
    p.add_argument("--json", action="store_true", help="also print a JSON report")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("ground", help="ground a program against data")
    common(p)
    p.add_argument("--dump", action="store_true", help="emit factor-graph dumps")
    p.add_argument("--out", default=None, help="directory for dump files")
    p.set_defaults(fn=cmd_ground)

    p = sub.add_parser("train", help="train scorers and report fold metrics")
    common(p, net=True)
    p.add_argument("--mode", choices=learning.MODES, default="joint")
    p.add_argument("--solver", choices=("exact", "approx"), default="exact")
    p.add_argument("--pool", type=int, default=5, help="CRF solution-pool size")
    p.add_argument("--folds", type=int, default=1, help="instance-level folds")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--global-lr", type=float, default=None,
                   help="learning rate for the global phase (default lr/10)")
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    p.add_argument("--freeze-encoders", action="store_true",
                   help="freeze entity encoders during global training")
    p.add_argument("--warm-start", default=None, help="checkpoint to start from")
    p.add_argument("--metrics-out", default=None, help="metrics JSON path")
    p.add_argument("--out", default="runs", help="output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="MAP inference with trained scorers")
    common(p, net=True)
    p.add_argument("--checkpoint", default=None, help="scorer checkpoint to load")
    p.add_argument("--solver", choices=("exact", "approx"), default="exact")
    p.add_argument("--pool", type=int, default=1, help="emit a k-best pool per graph")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--dump-lp", action="store_true", help="print the linear program")
    p.add_argument("--out", default=None, help="assignments JSON path")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="score an assignments file against gold data")
    common(p)
    p.add_argument("--predictions", required=True, help="assignments JSON from infer")
    p.add_argument("--metrics-out", default=None, help="metrics JSON path")
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RELGRAPH_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except RelgraphError as err:
        error = {"error": type(err).__name__, "message": str(err)}
        if err.line is not None:
            error["line"] = err.line
            error["col"] = err.col
        print(json.dumps(error), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
