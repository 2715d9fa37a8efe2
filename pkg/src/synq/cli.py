"""Operator entry points: ingest, train, augment, predict, evaluate, serve-check.

Every run logs its effective configuration and seed; all randomness is
derived from the single --seed flag so identical invocations produce
identical artifacts. Config files are JSON with keys matching the long
flag names; explicit flags win over the config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .augment import (
    AugmentConfig,
    augment_data,
    case_state,
    derive_true_episode,
    gen_random_episodes,
)
from .chem import ChemError, write_canonical_smiles
from .chem.fingerprint import _hash_ints
from .dataio import (
    DataError,
    build_case,
    filter_reactions,
    load_bond_table,
    load_cases,
    load_checkpoint,
    load_episodes,
    load_predictions,
    load_reactions,
    save_bond_table,
    save_cases,
    save_checkpoint,
    save_episodes,
    save_predictions,
)
from .env import CompletionError, EnvError, bond_type_table
from .metrics import EvalTable, format_report, metric_report
from .qfunc import DEFAULT_LAYER_SIZES, FEATURE_DIM, TrainConfig, init_qparams
from .qfunc import train as fit_qparams
from .reward import (
    EXACT_ONLY,
    EXACT_THEN_FORWARD,
    ForwardClient,
    ForwardModelError,
    RewardOracle,
    exact_match,
    forward_reward,
)
from .search import SearchConfig, top_n_search

log = logging.getLogger("synq")


def derive_seed(seed: int, label: str) -> int:
    """Stable per-module seed fan-out from the single run seed."""
    return _hash_ints([seed] + [ord(c) for c in label]) % (2 ** 31)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synq", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--oracle", choices=["exact", "forward"], default="exact")
    common.add_argument("--forward-url", default=None)
    common.add_argument("--forward-timeout", type=float, default=10.0)
    common.add_argument("--top-k", type=int, default=5,
                        help="forward-model containment depth")
    common.add_argument("--beam-k", type=int, default=3)
    common.add_argument("--top-n", type=int, default=None)
    common.add_argument("--step-limit", type=int, default=3)
    common.add_argument("--checkpoint", type=Path, default=None)
    common.add_argument("--out-dir", type=Path, default=Path("out"))

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="filter a reaction TSV into a corpus")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--strict", action="store_true")

    p = sub.add_parser("train", parents=[common], help="fit the initial Q function")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--random-per-product", type=int, default=4)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch", type=int, default=10)
    p.add_argument("--hidden", default=",".join(str(s) for s in DEFAULT_LAYER_SIZES[1:-1]))
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--alpha", type=float, default=1e-5)
    p.add_argument("--dropout", type=float, default=0.7)
    p.add_argument("--dtype", choices=["float32", "float64"], default="float64")

    p = sub.add_parser("augment", parents=[common], help="run the data-augmentation loop")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--val-corpus", type=Path, required=True)
    p.add_argument("--episodes", type=Path, required=True,
                   help="initial episode file from 'train'")
    p.add_argument("--random-episodes", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch", type=int, default=10)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--max-iterations", type=int, default=None)

    p = sub.add_parser("predict", parents=[common], help="rank reactant pairs per product")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", parents=[common], help="score a prediction file")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--truth-corpus", type=Path, required=True)
    p.add_argument("--report", type=Path, default=None)

    p = sub.add_parser("serve-check", parents=[common], help="ping a forward-model service")
    return parser


def _apply_config(args: argparse.Namespace, argv: list[str]) -> None:
    if not args.config:
        return
    if not args.config.exists():
        raise DataError(f"config file not found: {args.config}")
    overrides = json.loads(args.config.read_text())
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise DataError(f"config key {key!r} is not a known flag")
        if f"--{key.replace('_', '-')}" in given:
            continue  # explicit flag wins
        setattr(args, attr, type(getattr(args, attr))(value)
                if getattr(args, attr) is not None else value)


def _log_config(args: argparse.Namespace) -> None:
    shown = {k: (str(v) if isinstance(v, Path) else v)
             for k, v in sorted(vars(args).items()) if k != "config"}
    log.info("effective config: %s", json.dumps(shown, default=str))


def _oracle_from_args(args: argparse.Namespace) -> RewardOracle:
    if args.oracle == "forward":
        if not args.forward_url:
            raise DataError("--oracle forward needs --forward-url")
        client = ForwardClient(args.forward_url, timeout=args.forward_timeout)
        return RewardOracle(EXACT_THEN_FORWARD, client, top_k=args.top_k)
    return RewardOracle(EXACT_ONLY, top_k=args.top_k)


def _cmd_ingest(args) -> int:
    reactions = load_reactions(args.input, strict=args.strict)
    kept = filter_reactions(reactions, args.step_limit)
    cases = [build_case(r, args.step_limit) for r in kept]
    table = bond_type_table(kept)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_cases(args.out_dir / "cases.jsonl", cases)
    save_bond_table(args.out_dir / "bond_table.json", table)
    log.info("ingested %d reactions, kept %d after filtering; %d bond types",
             len(reactions), len(kept), len(table))
    return 0


def _load_corpus(path: Path):
    cases = load_cases(path / "cases.jsonl")
    table_file = path / "bond_table.json"
    table = load_bond_table(table_file) if table_file.exists() else None
    return cases, table


def _cmd_train(args) -> int:
    cases, table = _load_corpus(args.corpus)
    if not cases:
        raise DataError("corpus has no cases")
    oracle = _oracle_from_args(args)
    dtype = np.float32 if args.dtype == "float32" else np.float64

    true_eps = []
    for case in cases:
        try:
            true_eps.append(derive_true_episode(case.synthons, case.reactants,
                                                case.product, args.step_limit))
        except CompletionError as exc:
            log.warning("skipping %s: %s", case.rid, exc)
    random_eps = []
    for idx, case in enumerate(cases):
        random_eps.extend(gen_random_episodes(
            case_state(case, args.step_limit), args.random_per_product, oracle,
            truth=case.reactants, seed=derive_seed(args.seed, f"random:{idx}"),
            bond_table=table))

    hidden = tuple(int(x) for x in str(args.hidden).split(",") if x)
    params = init_qparams((FEATURE_DIM,) + hidden + (1,),
                          gamma=args.gamma, alpha=args.alpha,
                          learning_rate=args.learning_rate, dropout_rate=args.dropout,
                          seed=derive_seed(args.seed, "init"), dtype=dtype)
    cfg = TrainConfig(batch_products=args.batch, epochs=args.epochs,
                      rng_seed=derive_seed(args.seed, "train"))
    losses: list[float] = []
    params = fit_qparams(true_eps + random_eps, cfg, params, loss_log=losses)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_episodes(args.out_dir / "episodes_true.jsonl", true_eps)
    save_episodes(args.out_dir / "episodes_random.jsonl", random_eps)
    save_checkpoint(args.out_dir / "checkpoint_init.npz", params)
    log.info("trained on %d true + %d random episodes; final epoch loss %.6f",
             len(true_eps), len(random_eps), losses[-1] if losses else float("nan"))
    return 0


def _cmd_augment(args) -> int:
    cases, table = _load_corpus(args.corpus)
    val_cases, _ = _load_corpus(args.val_corpus)
    if args.checkpoint is None:
        raise DataError("augment needs --checkpoint from 'train'")
    params0 = load_checkpoint(args.checkpoint)
    train_eps = load_episodes(args.episodes)
    random_eps = load_episodes(args.random_episodes)
    oracle = _oracle_from_args(args)
    top_n = args.top_n if args.top_n is not None else 5
    cfg = AugmentConfig(
        params0=params0,
        train_cfg=TrainConfig(batch_products=args.batch, epochs=args.epochs,
                              rng_seed=derive_seed(args.seed, "augment")),
        oracle=oracle,
        step_limit=args.step_limit,
        bond_table=table,
        state_dir=args.out_dir,
        resume=args.resume,
        max_iterations=args.max_iterations,
    )
    best = augment_data(train_eps, cases, random_eps, val_cases,
                        k=args.beam_k, n=top_n, cfg=cfg)
    save_checkpoint(args.out_dir / "checkpoint_final.npz", best)
    log.info("augmentation finished; best checkpoint at %s",
             args.out_dir / "checkpoint_final.npz")
    return 0


def _cmd_predict(args) -> int:
    cases, table = _load_corpus(args.corpus)
    if args.checkpoint is None:
        raise DataError("predict needs --checkpoint")
    params = load_checkpoint(args.checkpoint)
    top_n = args.top_n if args.top_n is not None else 10
    cfg = SearchConfig(k=args.beam_k, n=top_n)

    def run(case):
        preds = top_n_search(case_state(case, args.step_limit), params, cfg, table)
        return {
            "product": write_canonical_smiles(case.product),
            "predictions": [
                {"reactants": [write_canonical_smiles(m) for m in p.reactants],
                 "score": p.score, "reward": None}
                for p in preds
            ],
        }

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        rows = list(pool.map(run, cases))
    save_predictions(args.out, rows)
    log.info("wrote %d prediction records to %s", len(rows), args.out)
    return 0


def _cmd_evaluate(args) -> int:
    records = load_predictions(args.predictions)
    truth_cases, _ = _load_corpus(args.truth_corpus)
    truth_by_product = {write_canonical_smiles(c.product): c for c in truth_cases}
    oracle = _oracle_from_args(args)
    from .chem import parse_smiles

    scored = []
    for rec in records:
        case = truth_by_product.get(rec["product"])
        preds = []
        for p in rec["predictions"]:
            mols = tuple(parse_smiles(s) for s in p["reactants"])
            r = 0
            if case is not None and len(mols) == 2:
                r = exact_match(mols, case.reactants)
            if r == 0 and oracle.mode == EXACT_THEN_FORWARD and len(mols) == 2:
                product = parse_smiles(rec["product"])
                r = forward_reward(mols, product, oracle.forward_client, oracle.top_k)
            preds.append({"reactants": p["reactants"], "score": p.get("score", 0.0),
                          "reward": r})
        scored.append({"product": rec["product"], "predictions": preds})

    top_n = args.top_n if args.top_n is not None else 10
    table = EvalTable.from_prediction_records(scored, n_max=top_n)
    report = metric_report(table, n_values=range(1, top_n + 1))
    text = format_report(report)
    print(text)
    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(json.dumps(report, indent=2) + "\n" + text + "\n")
    return 0


def _cmd_serve_check(args) -> int:
    if not args.forward_url:
        raise DataError("serve-check needs --forward-url")
    client = ForwardClient(args.forward_url, timeout=args.forward_timeout)
    status = client.health()
    print(json.dumps(status))
    return 0 if status.get("ready") else 1


_COMMANDS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "augment": _cmd_augment,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "serve-check": _cmd_serve_check,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = _build_parser()
    raw_argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(raw_argv)
    try:
        _apply_config(args, raw_argv)
        _log_config(args)
        log.info("run seed: %d", args.seed)
        return _COMMANDS[args.command](args)
    except (DataError, ChemError, EnvError, CompletionError, ForwardModelError,
            ValueError, OSError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
