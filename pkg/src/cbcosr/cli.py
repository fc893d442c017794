"""Command-line front end: generate, train, eval, protocol, ablate.

Settings come from an optional JSON config file (``--config``); any flag
given on the command line overrides the file. Exit codes: 0 success,
2 usage error, 3 data error, 4 numeric abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import data as D
from . import evaluation as E
from . import experiment as X
from . import model as M
from . import openset as O
from .trainer import NumericAbort, TrainConfig, loss_log_csv, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _csv_ints(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _csv_strs(s: str) -> list[str]:
    return [v.strip() for v in s.split(",") if v.strip()]


def _add_synthetic_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic data")
    g.add_argument("--num-classes", type=int)
    g.add_argument("--dim", type=int)
    g.add_argument("--samples-per-class", type=int)
    g.add_argument("--spread", type=float, help="cluster standard deviation")
    g.add_argument("--separation", type=float, help="distance between cluster means")
    g.add_argument("--tier", choices=sorted(X.DIFFICULTY_TIERS),
                   help="set separation/spread to a named difficulty tier")
    g.add_argument("--data-seed", type=int)


def _add_model_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model and training")
    g.add_argument("--hidden-dims", type=_csv_ints)
    g.add_argument("--feature-dim", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float, dest="learning_rate")
    g.add_argument("--momentum", type=float)
    g.add_argument("--weight-decay", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--lambda-ent", type=float)
    g.add_argument("--open-loss", choices=["cbc", "bce", "none"])
    g.add_argument("--no-entropy", action="store_true", default=None, dest="no_entropy")
    g.add_argument("--run-seed", type=int)
    g.add_argument("--init-seed", type=int)


def _add_protocol_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--train-data", type=Path, help="training feature CSV (instead of synthetic)")
    p.add_argument("--test-data", type=Path, help="test feature CSV (instead of synthetic)")
    p.add_argument("--num-known", type=int)
    p.add_argument("--split-seeds", type=_csv_ints)
    p.add_argument("--split-seed", type=int, help="shorthand for a single split seed")
    p.add_argument("--runs-per-split", type=int, dest="run_seeds_per_split")
    p.add_argument("--methods", type=_csv_strs)
    p.add_argument("--gamma", type=float)
    p.add_argument("--threshold-quantile", type=float)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--out", type=Path, dest="output")
    _add_synthetic_flags(p)
    _add_model_train_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbcosr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic train/test feature files")
    _add_synthetic_flags(p)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, dest="seed_alias", help="alias for --data-seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("train", help="train one model on the known classes of a split")
    p.add_argument("--train-data", type=Path, required=True)
    p.add_argument("--num-known", type=int, required=True)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--config", type=Path, help="JSON experiment config (model/train sections)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_model_train_flags(p)

    p = sub.add_parser("eval", help="score a checkpoint on known and unknown test samples")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--test-data", type=Path, required=True)
    p.add_argument("--split", type=Path, help="split JSON (default: split.json next to checkpoint)")
    p.add_argument("--val-data", type=Path, help="known-class validation CSV for MSP/MLS thresholds")
    p.add_argument("--methods", type=_csv_strs, default=list(O.METHODS))
    p.add_argument("--gamma", type=float, default=O.DEFAULT_GAMMA)
    p.add_argument("--threshold-quantile", type=float, default=0.05)
    p.add_argument("--run-seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="report JSON path")

    p = sub.add_parser("protocol", help="repeated random splits x runs, aggregated")
    _add_protocol_flags(p)

    p = sub.add_parser("ablate", help="CBC / entropy-minimisation ablation grid")
    _add_protocol_flags(p)
    return parser


# ---------------------------------------------------------------------------
# flag -> config resolution
# ---------------------------------------------------------------------------

def _train_overrides(args) -> dict:
    keys = ["epochs", "learning_rate", "momentum", "weight_decay", "batch_size",
            "lambda_ent", "open_loss"]
    out = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if getattr(args, "no_entropy", None):
        out["use_entropy"] = False
    return out


def _synthetic_overrides(args, spread: float = 1.0) -> dict:
    mapping = {"num_classes": "num_classes", "dim": "dim",
               "samples_per_class": "samples_per_class", "spread": "cluster_spread",
               "separation": "separation", "data_seed": "seed"}
    out = {dst: getattr(args, src) for src, dst in mapping.items()
           if getattr(args, src, None) is not None}
    if getattr(args, "tier", None):
        spread = out.get("cluster_spread", spread)
        out["separation"] = X.DIFFICULTY_TIERS[args.tier] * spread
    return out


def resolve_config(args) -> X.ExperimentConfig:
    try:
        cfg = X.ExperimentConfig.load(args.config) if args.config else X.ExperimentConfig()
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    base = cfg.to_dict()
    if args.train_data or args.test_data:
        if not (args.train_data and args.test_data):
            raise UsageError("--train-data and --test-data must be given together")
        base["synthetic"] = None
        base["train_path"], base["test_path"] = str(args.train_data), str(args.test_data)
    spread = base["synthetic"]["cluster_spread"] if base["synthetic"] else 1.0
    syn = _synthetic_overrides(args, spread)
    if syn:
        if base["synthetic"] is None:
            raise UsageError("synthetic flags conflict with feature-file input")
        base["synthetic"].update(syn)
    if args.split_seed is not None and args.split_seeds is not None:
        raise UsageError("use either --split-seed or --split-seeds")
    if args.split_seed is not None:
        base["split_seeds"] = [args.split_seed]
    for key in ("num_known", "split_seeds", "run_seeds_per_split", "methods", "gamma",
                "threshold_quantile", "val_fraction", "run_seed", "init_seed",
                "hidden_dims", "feature_dim"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    if args.output is not None:
        base["output"] = str(args.output)
    base["train"].update(_train_overrides(args))
    try:
        return X.ExperimentConfig.from_dict(base)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    syn = _synthetic_overrides(args)
    if args.seed_alias is not None:
        syn["seed"] = args.seed_alias
    try:
        spec = D.SyntheticSpec(**syn)
        full = D.generate_synthetic(spec)
        tr, te = D.stratified_split(full, args.test_fraction, spec.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        D.save_features(tr, args.out / "train.csv")
        D.save_features(te, args.out / "test.csv")
    except OSError as exc:
        raise DataError(f"cannot write to {args.out}: {exc}") from None
    print(f"train: {len(tr)} samples -> {args.out / 'train.csv'}")
    print(f"test:  {len(te)} samples -> {args.out / 'test.csv'}")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        cfg = X.ExperimentConfig.load(args.config) if args.config else X.ExperimentConfig()
        tc = replace(cfg.train, **_train_overrides(args))
        if args.run_seed is not None:
            tc = replace(tc, run_seed=args.run_seed)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    train_set = _load(args.train_data)
    try:
        split = D.make_split(train_set.num_classes, args.num_known, args.split_seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    known, _ = D.apply_split(train_set, split)
    if args.val_fraction > 0:
        fit, val = D.stratified_split(known, args.val_fraction, split.seed)
    else:
        fit, val = known, None
    mc = M.ModelConfig(
        train_set.dim, split.num_known,
        tuple(args.hidden_dims if args.hidden_dims is not None else cfg.hidden_dims),
        args.feature_dim if args.feature_dim is not None else cfg.feature_dim,
        args.init_seed if args.init_seed is not None else cfg.init_seed,
    )
    params, state = train(fit, mc, tc)
    args.out.mkdir(parents=True, exist_ok=True)
    M.save_checkpoint(params, args.out / "model.npz")
    (args.out / "losses.csv").write_text(loss_log_csv(state, tc))
    (args.out / "split.json").write_text(json.dumps(split.to_dict(), indent=2) + "\n")
    if val is not None:
        # stored with original class ids so it reads like any other feature file
        inv = {v: k for k, v in split.remap.items()}
        D.save_features(D.LabeledSet(val.features, [inv[int(y)] for y in val.labels],
                                     train_set.num_classes), args.out / "val.csv")
    last = state.epoch_log[-1]
    print(f"trained {state.step} steps; final epoch ce={last['ce']:.4f} "
          f"{tc.open_loss}={last['open']:.4f} ent={last['ent']:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.checkpoint.exists():
        raise DataError(f"checkpoint not found: {args.checkpoint}")
    params = M.load_checkpoint(args.checkpoint)
    split_path = args.split or args.checkpoint.parent / "split.json"
    if not split_path.exists():
        raise DataError(f"split file not found: {split_path}")
    split = D.SplitSpec.from_dict(json.loads(split_path.read_text()))
    if split.num_known != params.config.num_known:
        raise DataError(f"split has {split.num_known} known classes but the model has "
                        f"{params.config.num_known}")
    if any(m not in O.METHODS for m in args.methods) or not args.methods:
        raise UsageError(f"--methods must be a subset of {','.join(O.METHODS)}")
    test = _load(args.test_data)
    val_path = args.val_data or (args.checkpoint.parent / "val.csv")
    val_raw = _load(val_path) if (args.val_data or val_path.exists()) else None
    num_classes = max([test.num_classes, max(split.known_ids + split.unknown_ids) + 1]
                      + ([val_raw.num_classes] if val_raw is not None else []))
    test = D.LabeledSet(test.features, test.labels, num_classes)
    val = None
    if val_raw is not None:
        val, _ = D.apply_split(D.LabeledSet(val_raw.features, val_raw.labels, num_classes), split)
    if test.dim != params.config.input_dim:
        raise DataError(f"test features have {test.dim} columns, model expects {params.config.input_dim}")
    known, unknown = D.apply_split(test, split)
    sd = X.SplitData(split, known, val, known, unknown)
    reports = X.evaluate_model(params, sd, args.methods, args.gamma, args.threshold_quantile,
                               args.run_seed, params.config.init_seed)
    E.write_report(reports, args.out)
    for r in reports:
        print(f"{r.method}: auroc={E.pct(r.auroc)} closed_acc={E.pct(r.closed_acc)} "
              f"open_acc={E.pct(r.open_acc)}")
    return EXIT_OK


def cmd_protocol(args) -> int:
    cfg = resolve_config(args)
    report, splits = X.run_protocol(cfg, _datasets(cfg))
    doc = X.protocol_document(cfg, report, splits)
    _write(cfg.output, E.dumps(doc))
    print(E.format_table(report))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    rows = X.run_ablation(cfg, _datasets(cfg))
    _write(cfg.output, E.dumps({"config": cfg.to_dict(), "rows": rows}))
    print(X.format_ablation(rows))
    return EXIT_OK


def _load(path: Path) -> D.LabeledSet:
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    return D.load_features(path)


def _datasets(cfg: X.ExperimentConfig):
    for p in (cfg.train_path, cfg.test_path):
        if p is not None and not Path(p).exists():
            raise DataError(f"data file not found: {p}")
    try:
        return X.load_dataset(cfg)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _write(path: str | None, text: str) -> None:
    if path is None:
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "protocol": cmd_protocol, "ablate": cmd_ablate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except (DataError, D.FeatureFileError, E.ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except json.JSONDecodeError as exc:
        print(f"error: malformed config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
