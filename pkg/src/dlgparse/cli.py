"""Command-line interface: train, parse, eval, stats.

Configuration precedence is command-line flags over config-file values over
defaults, and every run writes its fully resolved configuration to the
output directory before doing any work.  Exit codes: 0 success, 2 usage
error, 3 data error, 4 model/checkpoint error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .autodiff import CheckpointError, ShapeError
from .corpus import CorpusError, corpus_stats, load_dialogues
from .decoding import InfeasibleGraphError, greedy_decode, mst_decode
from .evaluation import AlignmentError, check_alignment, micro_f1
from .model import MODES, load_pretrained_embeddings
from .outputs import read_parse_file, to_dot, write_parse_file
from .parser import parse_dialogue, score_matrix, typed_tree_from_parents
from .training import (CONFIG_NAME, TrainConfig, load_bundle, save_bundle,
                       train)

USAGE_ERROR, DATA_ERROR, MODEL_ERROR = 2, 3, 4

# reference scores of the published full-corpus model, shown by `eval`
REFERENCE_LINK_F1 = 73.2
REFERENCE_LINKREL_F1 = 55.7

DEFAULTS: dict = {
    "seed": 0,
    "epochs": 40,
    "batch_size": 4,
    "learning_rate": 0.1,
    "lr_decay": 0.98,
    "dropout": 0.5,
    "mode": "full",
    "shared": False,
    "clip": None,
    "val_fraction": 0.1,
    "min_freq": 1,
    "word_dim": 100,
    "rel_dim": 100,
    "repr_dim": 256,
    "head_dim": 512,
    "decoder": "sequential",
    "edges": "forward",
    "gold_mode": "tree",
    "dot": False,
    "embeddings": None,
}


def build_arg_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="dlgparse",
                                  description="Deep sequential discourse dependency parser")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int)

    p_train = sub.add_parser("train", help="train a model and keep the best checkpoint")
    common(p_train)
    p_train.add_argument("--corpus", required=True, help="canonical corpus JSON file")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--embeddings", help="pretrained word embedding text file")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--lr", type=float, dest="learning_rate")
    p_train.add_argument("--lr-decay", type=float, dest="lr_decay")
    p_train.add_argument("--dropout", type=float)
    p_train.add_argument("--clip", type=float)
    p_train.add_argument("--val-fraction", type=float, dest="val_fraction")
    p_train.add_argument("--min-freq", type=int, dest="min_freq")
    p_train.add_argument("--mode", choices=MODES)
    p_train.add_argument("--shared", action="store_const", const=True)
    p_train.add_argument("--word-dim", type=int, dest="word_dim")
    p_train.add_argument("--rel-dim", type=int, dest="rel_dim")
    p_train.add_argument("--repr-dim", type=int, dest="repr_dim")
    p_train.add_argument("--head-dim", type=int, dest="head_dim")
    p_train.set_defaults(func=cmd_train)

    p_parse = sub.add_parser("parse", help="parse a corpus with a trained checkpoint")
    common(p_parse)
    p_parse.add_argument("--corpus", required=True)
    p_parse.add_argument("--checkpoint", required=True)
    p_parse.add_argument("--out", required=True)
    p_parse.add_argument("--mode", choices=MODES, help="override the trained mode")
    p_parse.add_argument("--decoder", choices=("sequential", "greedy", "mst"))
    p_parse.add_argument("--edges", choices=("forward", "all-pairs"))
    p_parse.add_argument("--dot", action="store_const", const=True,
                         help="also write one DOT graph per dialogue")
    p_parse.set_defaults(func=cmd_parse)

    p_eval = sub.add_parser("eval", help="score a parse-output file against gold")
    common(p_eval)
    p_eval.add_argument("--parses", required=True, help="parse-output JSON file")
    p_eval.add_argument("--corpus", required=True, help="gold corpus JSON file")
    p_eval.add_argument("--gold-mode", choices=("tree", "graph"), dest="gold_mode",
                        help="score against the gold parent tree (default) or the "
                             "full multi-parent relation graph")
    p_eval.add_argument("--out", help="optional output directory for the resolved config")
    p_eval.set_defaults(func=cmd_eval)

    p_stats = sub.add_parser("stats", help="corpus statistics")
    common(p_stats)
    p_stats.add_argument("--corpus", required=True)
    p_stats.add_argument("--out", help="optional output directory for the resolved config")
    p_stats.set_defaults(func=cmd_stats)
    return top


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags, plus the run's paths."""
    resolved = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CorpusError(f"cannot read config file {config_path}: {exc}") from exc
        unknown = set(file_values) - set(DEFAULTS)
        if unknown:
            raise CorpusError(f"config file {config_path} has unknown keys: {sorted(unknown)}")
        resolved.update(file_values)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    for key in ("command", "corpus", "checkpoint", "parses", "out"):
        if getattr(args, key, None) is not None:
            resolved[key] = getattr(args, key)
    return resolved


def write_resolved_config(resolved: dict, out_dir: str | None) -> None:
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, CONFIG_NAME), "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=1, sort_keys=True)


def cmd_train(args: argparse.Namespace) -> int:
    resolved = resolve_config(args)
    write_resolved_config(resolved, resolved["out"])
    dialogues = load_dialogues(resolved["corpus"])
    config = TrainConfig(**{k: resolved[k] for k in TrainConfig().to_json()})
    pretrained = None
    if resolved["embeddings"]:
        pretrained = load_pretrained_embeddings(resolved["embeddings"], config.word_dim)
    result = train(dialogues, config, pretrained=pretrained,
                   out_dir=resolved["out"], log=print)
    save_bundle(resolved["out"], result.params, result.vocab, resolved)
    print(f"best epoch {result.best_epoch}; artifacts written to {resolved['out']}")
    return 0


def cmd_parse(args: argparse.Namespace) -> int:
    resolved = resolve_config(args)
    params, vocab, run_config = load_bundle(resolved["checkpoint"])
    if getattr(args, "mode", None) is None and "mode" not in _config_file_keys(args):
        resolved["mode"] = run_config.get("mode", resolved["mode"])
    mode = resolved["mode"]
    decoder = resolved["decoder"]
    if decoder != "sequential" and mode != "ns":
        print("error: greedy/mst decoding needs structure-free scores "
              "(train and parse with --mode ns)", file=sys.stderr)
        return USAGE_ERROR
    write_resolved_config(resolved, resolved["out"])
    dialogues = load_dialogues(resolved["corpus"])

    trees = []
    for k, d in enumerate(dialogues):
        if decoder == "sequential":
            rng = (np.random.default_rng([resolved["seed"], k])
                   if mode == "random" else None)
            trees.append(parse_dialogue(d, vocab, params, mode=mode, rng=rng))
        else:
            scores = score_matrix(d, vocab, params, edges=resolved["edges"])
            parents = (greedy_decode(scores) if decoder == "greedy"
                       else mst_decode(scores, resolved["edges"]))
            trees.append(typed_tree_from_parents(d, vocab, params, parents, scores=scores))
    write_parse_file(os.path.join(resolved["out"], "parses.json"), trees)
    if resolved["dot"]:
        for d, t in zip(dialogues, trees):
            name = "".join(c if c.isalnum() or c in "-_." else "_" for c in d.id)
            with open(os.path.join(resolved["out"], f"{name}.dot"), "w",
                      encoding="utf-8") as fh:
                fh.write(to_dot(d, t))
    print(f"parsed {len(trees)} dialogues into {resolved['out']}")
    return 0


def _config_file_keys(args: argparse.Namespace) -> set[str]:
    config_path = getattr(args, "config", None)
    if not config_path:
        return set()
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            return set(json.load(fh))
    except (OSError, json.JSONDecodeError):
        return set()


def cmd_eval(args: argparse.Namespace) -> int:
    resolved = resolve_config(args)
    write_resolved_config(resolved, resolved.get("out"))
    trees = read_parse_file(resolved["parses"])
    dialogues = load_dialogues(resolved["corpus"])
    check_alignment([t.dialogue_id for t in trees], [d.id for d in dialogues])
    predicted = {t.dialogue_id: t.relations() for t in trees}
    if resolved["gold_mode"] == "tree":
        gold = {d.id: d.gold_tree_relations() for d in dialogues}
    else:
        gold = {d.id: d.gold_relations for d in dialogues}
    report = micro_f1(predicted, gold)
    print(report.as_text())
    print(f"reference (published deep sequential model, full STAC): "
          f"Link {REFERENCE_LINK_F1} / Link&Rel {REFERENCE_LINKREL_F1}")
    print(report.as_key_values())
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    resolved = resolve_config(args)
    write_resolved_config(resolved, resolved.get("out"))
    stats = corpus_stats(load_dialogues(resolved["corpus"]))
    print(f"dialogues={stats.n_dialogues}")
    print(f"edus={stats.n_edus}")
    print(f"relations={stats.n_relations}")
    print(f"multi_parent_edus={stats.n_multi_parent}")
    print(f"multi_parent_proportion={stats.multi_parent_proportion:.4f}")
    return 0


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, AlignmentError, InfeasibleGraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except (CheckpointError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return MODEL_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
