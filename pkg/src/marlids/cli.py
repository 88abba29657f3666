"""Command-line entry point: preprocess, train, evaluate, predict, adapt.

Exit status: 0 success, 1 validation error, 2 I/O error, 3 model/data
incompatibility.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import data as dp
from . import ensemble as en
from . import metrics, persist
from .config import RunConfig, dump_config, from_dict, load_config
from .errors import (ConfigError, ContainerError, IncompatibilityError, IngestionError,
                     MarlIdsError, ValidationError)

log = logging.getLogger("marlids")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INCOMPATIBLE = 0, 1, 2, 3


def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = yaml.safe_load(value)
    for name in ("seed", "threads", "episodes", "minibatch_size"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        data = cfg.to_dict()
        for key, value in overrides.items():
            section = next((s for s, keys in data.items() if key in keys), None)
            if section is None:
                raise ConfigError(f"unknown config key {key!r}")
            data[section][key] = value
        cfg = from_dict(data)
    return cfg


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# -- preprocess ------------------------------------------------------------------

def cmd_preprocess(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw = dp.load_flows(args.inputs, label_column=cfg.label_column)
    cleaned = dp.clean(raw)
    ds = cleaned
    n_benign = ds.label_counts.get(cfg.benign_label, 0)
    if cfg.benign_target is not None and cfg.benign_target < n_benign:
        ds = dp.downsample_benign(ds, cfg.benign_target, cfg.seed, cfg.benign_label)
    else:
        log.info("keeping all %d %s records (target %s)", n_benign, cfg.benign_label,
                 cfg.benign_target)
    # split and exclusion see the original labels, so a sub-class can be held
    # back from a group; grouping is applied to every part afterwards
    train, test = dp.split(ds, cfg.train_fraction, cfg.seed)
    new = None
    if cfg.exclude_labels:
        train, new = dp.exclude_labels(train, cfg.exclude_labels)
    stages = {"Total": raw, "Preprocessed": cleaned, "Training": train, "Testing": test}
    if new is not None:
        stages["Excluded"] = new
    if cfg.grouping:
        train, test = (dp.regroup_labels(d, cfg.grouping) for d in (train, test))
        if new is not None:
            new = dp.regroup_labels(new, cfg.grouping)
    z = dp.fit_zscore(train)
    table = dp.counts_table(stages)
    summary = {name: d.label_counts for name, d in stages.items()}
    summary["config"] = cfg.to_dict()
    summary["constant_features"] = [n for n, c in zip(z.feature_names, z.constant) if c]
    parts = {"train": train, "test": test}
    if new is not None:
        parts["new"] = new
    digests = {name: persist.save_dataset(dp.apply_zscore(d, z), out / f"{name}.mlds", z, summary)
               for name, d in parts.items()}
    _write_text(out / "summary.txt", table)
    _write_text(out / "config.yaml", dump_config(cfg))
    sys.stdout.write(table)
    for name, digest in digests.items():
        print(f"{name}: {digest}")
    return EXIT_OK


# -- train -----------------------------------------------------------------------

def _attack_labels(ds: dp.Dataset, benign: str) -> list[str]:
    return sorted(lab for lab in ds.label_counts if lab != benign)


def _write_log(path: Path, rows, append=False):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a" if append else "w") as fh:
        for row in rows:
            fh.write(json.dumps(row.as_dict(), sort_keys=True) + "\n")


def cmd_train(args, cfg: RunConfig) -> int:
    train, z, _ = persist.load_dataset(args.train)
    if not len(train):
        raise ValidationError("training container is empty")
    attacks = _attack_labels(train, cfg.benign_label)
    ens = en.build_ensemble(attacks, train.n_features, cfg, z)
    rows = en.train_all(ens, train)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    digest = persist.save_model(ens, out)
    _write_log(Path(args.log) if args.log else out.with_suffix(out.suffix + ".log.jsonl"), rows)
    print(f"model: {out} sha256={digest}")
    return EXIT_OK


# -- evaluate --------------------------------------------------------------------

def _check_compatible(ens: en.MarlEnsemble, ds: dp.Dataset):
    if ds.n_features != ens.feature_dim:
        raise IncompatibilityError(
            f"dataset has {ds.n_features} features, model expects {ens.feature_dim}")
    unknown = sorted(set(ds.label_counts) - set(ens.label_registry))
    if unknown:
        raise IncompatibilityError(f"dataset labels {unknown} are not in the model registry "
                                   f"{ens.label_registry}")


def evaluate_dataset(ens: en.MarlEnsemble, ds: dp.Dataset) -> metrics.EvaluationReport:
    _check_compatible(ens, ds)
    labels, q = en.predict_batch(ens, ds.features)
    return metrics.evaluate(ds.labels, labels, q, ens.label_registry)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    ens = persist.load_model(args.model)
    test, _, _ = persist.load_dataset(args.test)
    report = evaluate_dataset(ens, test)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = metrics.render_text(report)
    _write_text(out / "report.txt", text)
    _write_text(out / "report.json", report.to_json())
    _write_text(out / "confusion.txt", metrics.render_confusion(report.confusion))
    _write_text(out / "roc.csv", metrics.roc_csv(report))
    sys.stdout.write(text)
    return EXIT_OK


# -- predict ---------------------------------------------------------------------

def _iter_rows(args):
    if args.record is not None:
        yield 1, args.record.split(",")
        return
    import csv
    with open(args.input, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, row in enumerate(reader, start=1):
            if header is None and args.header:
                header = [h.strip() for h in row]
                continue
            if header and args.label_column in header:
                row = [v for h, v in zip(header, row) if h != args.label_column]
            yield lineno, row


def cmd_predict(args, cfg: RunConfig) -> int:
    ens = persist.load_model(args.model)
    out = open(args.out, "w") if args.out else sys.stdout
    failed = 0
    try:
        out.write(",".join(["row", "label"] + [f"q_{lab}" for lab in ens.label_registry]) + "\n")
        for lineno, cells in _iter_rows(args):
            try:
                x = np.array([float(c) for c in cells], dtype=float)
                if x.shape != (ens.feature_dim,):
                    raise ValidationError(f"expected {ens.feature_dim} features, got {len(x)}")
                if ens.normalization is not None:
                    x = dp.normalize(x, ens.normalization)
                label, q = en.predict(ens, x)
            except (ValueError, ValidationError) as exc:
                failed += 1
                print(f"row {lineno}: {exc}", file=sys.stderr)
                continue
            out.write(",".join([str(lineno), label] + [repr(float(v)) for v in q]) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_VALIDATION if failed else EXIT_OK


# -- adapt -----------------------------------------------------------------------

def cmd_adapt(args, cfg: RunConfig) -> int:
    ens = persist.load_model(args.model)
    # the model's own configuration governs training; CLI flags may override seeds/threads
    model_cfg = ens.config
    overrides = {k: getattr(cfg, k) for k in ("seed", "threads") if getattr(args, k) is not None}
    if overrides:
        ens.config = model_cfg.replace(**overrides)
    previous, _, _ = persist.load_dataset(args.train)
    new, _, _ = persist.load_dataset(args.new)
    _check_compatible(ens, previous)
    if new.n_features != ens.feature_dim:
        raise IncompatibilityError(
            f"new data has {new.n_features} features, model expects {ens.feature_dim}")
    unknown = sorted(set(args.affected) - set(ens.attack_labels))
    if unknown and not args.allow_new:
        raise ValidationError(f"affected labels {unknown} are not in the model; "
                              "use --allow-new to add agents for them")
    before = ens.agent_digests()
    episodes = args.episodes if args.episodes is not None else ens.config.adapt_episodes
    adapted, held_out, rows = en.adapt(ens, previous, new, args.affected, episodes=episodes,
                                       new_fraction=args.new_fraction, allow_new=args.allow_new)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    digest = persist.save_model(adapted, out)
    _write_log(out.with_suffix(out.suffix + ".log.jsonl"), rows)
    if args.held_out:
        persist.save_dataset(held_out, args.held_out, adapted.normalization)
    after = adapted.agent_digests()
    for name, d in after.items():
        state = "new" if name not in before else "changed" if before[name] != d else "unchanged"
        print(f"{name}: {state} {d[:16]}")
    print(f"model: {out} sha256={digest}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="marlids", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="YAML config (default: $MARLIDS_CONFIG)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int, help="worker processes for L1 agents")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key, e.g. --set k=8")
        sp.add_argument("--out", required=out_help is not None, help=out_help)

    sp = sub.add_parser("preprocess", help="clean, rebalance, split and normalize flow files")
    sp.add_argument("inputs", nargs="+")
    common(sp, "output directory")
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("train", help="train all agents on a training container")
    sp.add_argument("train")
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--minibatch-size", type=int, dest="minibatch_size")
    sp.add_argument("--log", help="training log path (JSON lines)")
    common(sp, "model file")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a model on a test container")
    sp.add_argument("model")
    sp.add_argument("test")
    common(sp, "report directory")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("predict", help="classify raw flow records")
    sp.add_argument("model")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--record", help="comma-separated raw feature values")
    src.add_argument("--input", help="CSV of raw feature rows")
    sp.add_argument("--no-header", dest="header", action="store_false")
    sp.add_argument("--label-column", default="Label")
    common(sp, None)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("adapt", help="retrain affected agents and the decider on new data")
    sp.add_argument("model")
    sp.add_argument("--train", required=True, help="previous training container")
    sp.add_argument("--new", required=True, help="container with the new data")
    sp.add_argument("--affected", action="append", required=True,
                    help="attack label whose agent is retrained (repeatable)")
    sp.add_argument("--allow-new", action="store_true",
                    help="create agents for affected labels the model does not know")
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--new-fraction", type=float, default=None)
    sp.add_argument("--held-out", help="write the unused part of the new data here")
    common(sp, "adapted model file")
    sp.set_defaults(func=cmd_adapt)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "adapt":
            # adapt trains with the model's stored config, not the default one
            cfg = _effective_config(args) if args.config else RunConfig()
        else:
            cfg = _effective_config(args)
        return args.func(args, cfg)
    except IncompatibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (ContainerError, IngestionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, MarlIdsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
