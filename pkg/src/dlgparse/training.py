"""Loss computation, the SGD training loop, and checkpointing.

Training is teacher-forced: the structured representations are grown from
the gold (parent, relation) of each EDU, never from model predictions, and
the relation loss conditions on the gold parent.  Mini-batches are realized
as gradient accumulation over `batch_size` dialogues followed by one SGD
step; the learning rate decays by a constant factor after each epoch.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import CheckpointError, Tape, Tensor, backward, sgd_step
from .corpus import Dialogue, Vocab, build_vocab
from .encoders import compute_representations, structured_step
from .evaluation import EvalReport, micro_f1
from .model import ModelConfig, ModelParams
from .parser import (build_input, classify_relation, draw_random_structure,
                     parse_dialogue, predict_link, repr_stacks)

CHECKPOINT_NAME = "model.ckpt"
VOCAB_NAME = "vocab.json"
CONFIG_NAME = "config.json"
METRICS_NAME = "metrics.tsv"


class TrainingAbort(RuntimeError):
    """Training stopped on a non-finite loss; message carries the location."""


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 4
    learning_rate: float = 0.1
    lr_decay: float = 0.98
    dropout: float = 0.5
    seed: int = 0
    mode: str = "full"
    shared: bool = False
    clip: float | None = None  # global gradient-norm threshold, off by default
    val_fraction: float = 0.1
    min_freq: int = 1
    word_dim: int = 100
    rel_dim: int = 100
    repr_dim: int = 256
    head_dim: int = 512

    def to_json(self) -> dict:
        return asdict(self)


def lr_schedule(config: TrainConfig, epoch: int) -> float:
    """Learning rate at a given epoch: initial rate times decay^epoch."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return config.learning_rate * config.lr_decay ** epoch


def compute_loss(tape: Tape, dialogue: Dialogue, vocab: Vocab,
                 params: ModelParams, *, mode: str | None = None,
                 dropout_p: float = 0.0, rng: np.random.Generator | None = None,
                 random_structure: tuple[list[int], list[int]] | None = None,
                 ) -> tuple[Tensor, Tensor, Tensor]:
    """Negative log-likelihood of the gold links and relations.

    Returns (link loss, relation loss, total) as scalars on the tape.  In
    random mode the encoded structure comes from `random_structure`
    (parents and relation-type ids per EDU).
    """
    mode = params.config.mode if mode is None else mode
    if mode == "random" and random_structure is None:
        raise ValueError("random mode needs a pre-drawn random structure")

    link_reprs = compute_representations(tape, dialogue, vocab, params, "link",
                                         mode=mode, dropout_p=dropout_p, rng=rng)
    rel_reprs = (link_reprs if params.config.shared else
                 compute_representations(tape, dialogue, vocab, params, "rel",
                                         mode=mode, dropout_p=dropout_p, rng=rng))

    l_link: Tensor | None = None
    l_rel: Tensor | None = None
    for i in range(1, len(dialogue.edus)):
        gold_parent, gold_rtype = dialogue.gold_parent[i - 1]
        inputs = [build_input(tape, link_reprs, dialogue, i, j, mode) for j in range(i)]
        link_probs, _ = predict_link(tape, params, inputs)
        step_link = tape.nll(link_probs, gold_parent)
        l_link = step_link if l_link is None else tape.add(l_link, step_link)

        h_rel = build_input(tape, rel_reprs, dialogue, i, gold_parent, mode)
        rel_probs, _ = classify_relation(tape, params, h_rel)
        step_rel = tape.nll(rel_probs, vocab.relation_id(gold_rtype))
        l_rel = step_rel if l_rel is None else tape.add(l_rel, step_rel)

        if mode == "ns":
            continue
        if mode == "random":
            step_parent, step_rtype = (random_structure[0][i - 1],
                                       random_structure[1][i - 1])
        else:
            step_parent, step_rtype = gold_parent, vocab.relation_id(gold_rtype)
        for reprs, which in repr_stacks(params, link_reprs, rel_reprs):
            structured_step(tape, reprs, dialogue, i, step_parent, step_rtype,
                            params.stack(which), shm=mode != "no-shm",
                            dropout_p=dropout_p, rng=rng)

    l_all = tape.add(l_link, l_rel)
    return l_link, l_rel, l_all


def accumulate_gradients(acc: dict[int, np.ndarray],
                         grads: dict[int, np.ndarray],
                         params: ModelParams) -> None:
    """Sum a dialogue's parameter gradients into the batch accumulator."""
    for t in params.parameters():
        g = grads.get(t.id)
        if g is None:
            continue
        if t.id in acc:
            acc[t.id] += g
        else:
            acc[t.id] = g.copy()


def clip_gradients(acc: dict[int, np.ndarray], threshold: float) -> None:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in acc.values()))
    if total > threshold:
        scale = threshold / total
        for g in acc.values():
            g *= scale


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    link_f1: float
    linkrel_f1: float

    def line(self) -> str:
        return (f"{self.epoch}\t{self.lr:.10g}\t{self.train_loss:.6f}"
                f"\t{self.link_f1:.4f}\t{self.linkrel_f1:.4f}")


@dataclass
class TrainResult:
    params: ModelParams
    vocab: Vocab
    model_config: ModelConfig
    metrics: list[EpochMetrics] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def metrics_text(self) -> str:
        return "".join(m.line() + "\n" for m in self.metrics)


def evaluate_model(dialogues: list[Dialogue], vocab: Vocab, params: ModelParams,
                   *, mode: str | None = None,
                   rng: np.random.Generator | None = None) -> EvalReport:
    """Parse every dialogue and score links against the gold parent trees."""
    predicted = {}
    gold = {}
    for d in dialogues:
        tree = parse_dialogue(d, vocab, params, mode=mode, rng=rng)
        predicted[d.id] = tree.relations()
        gold[d.id] = d.gold_tree_relations()
    return micro_f1(predicted, gold)


def split_validation(dialogues: list[Dialogue],
                     val_fraction: float) -> tuple[list[Dialogue], list[Dialogue]]:
    """Hold out the last fraction of dialogues, in file order."""
    n_val = int(len(dialogues) * val_fraction)
    if n_val == 0:
        return list(dialogues), []
    return list(dialogues[:-n_val]), list(dialogues[-n_val:])


def train(dialogues: list[Dialogue], config: TrainConfig, *,
          vocab: Vocab | None = None, params: ModelParams | None = None,
          pretrained: dict[str, np.ndarray] | None = None,
          out_dir: str | os.PathLike | None = None,
          log=None) -> TrainResult:
    """Train on the given dialogues, keeping the checkpoint that scores the
    best validation Link&Rel F1.

    The last `val_fraction` of the dialogues (file order) are held out for
    validation; with an empty validation split (val_fraction 0 or a tiny
    corpus) the training set itself is scored instead.  Fully deterministic
    for a fixed config: one seeded generator drives initialization,
    shuffling, dropout, and the random-structure ablation.
    """
    if not dialogues:
        raise ValueError("cannot train on an empty corpus")
    rng = np.random.default_rng(config.seed)
    train_set, val_set = split_validation(dialogues, config.val_fraction)
    eval_set = val_set if val_set else train_set

    if vocab is None:
        vocab = build_vocab(train_set, min_freq=config.min_freq)
    if params is None:
        model_config = ModelConfig(
            vocab_size=vocab.n_words, n_rel_types=vocab.n_relations,
            word_dim=config.word_dim, rel_dim=config.rel_dim,
            repr_dim=config.repr_dim, head_dim=config.head_dim,
            mode=config.mode, shared=config.shared)
        params = ModelParams.create(model_config, rng, pretrained=pretrained, vocab=vocab)
    result = TrainResult(params, vocab, params.config)

    param_list = params.parameters()
    best_score = -1.0
    best_state: dict[str, np.ndarray] | None = None
    metrics_path = os.path.join(out_dir, METRICS_NAME) if out_dir is not None else None
    metrics_fh = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for epoch in range(config.epochs):
            lr = lr_schedule(config, epoch)
            order = rng.permutation(len(train_set))
            epoch_loss = 0.0
            for start in range(0, len(order), config.batch_size):
                batch = order[start:start + config.batch_size]
                acc: dict[int, np.ndarray] = {}
                for idx in batch:
                    d = train_set[int(idx)]
                    tape = Tape()
                    random_structure = (draw_random_structure(d, vocab.n_relations, rng)
                                        if config.mode == "random" else None)
                    _, _, l_all = compute_loss(
                        tape, d, vocab, params, mode=config.mode,
                        dropout_p=config.dropout, rng=rng,
                        random_structure=random_structure)
                    loss_value = l_all.item()
                    if not math.isfinite(loss_value):
                        raise TrainingAbort(
                            f"non-finite loss at epoch {epoch}, dialogue {d.id!r}")
                    epoch_loss += loss_value
                    accumulate_gradients(acc, backward(tape, l_all), params)
                if config.clip is not None:
                    clip_gradients(acc, config.clip)
                sgd_step(param_list, acc, lr)

            report = evaluate_model(
                eval_set, vocab, params, mode=config.mode,
                rng=np.random.default_rng([config.seed, epoch]))
            m = EpochMetrics(epoch, lr, epoch_loss / len(train_set),
                             report.link_f1, report.linkrel_f1)
            result.metrics.append(m)
            if metrics_fh:
                metrics_fh.write(m.line() + "\n")
                metrics_fh.flush()
            if log:
                log(m.line())
            if report.linkrel_f1 > best_score:
                best_score = report.linkrel_f1
                result.best_epoch = epoch
                best_state = {name: t.data.copy() for name, t in params.named().items()}
                if out_dir is not None:
                    params.save(os.path.join(out_dir, CHECKPOINT_NAME))
    finally:
        if metrics_fh:
            metrics_fh.close()

    if best_state is not None:
        for name, t in params.named().items():
            t.data = best_state[name]
    return result


def save_bundle(out_dir: str | os.PathLike, params: ModelParams, vocab: Vocab,
                run_config: dict) -> None:
    """Write the checkpoint plus the sibling vocabulary and config files that
    a later `parse` needs to rebuild the model."""
    params.save(os.path.join(out_dir, CHECKPOINT_NAME))
    with open(os.path.join(out_dir, VOCAB_NAME), "w", encoding="utf-8") as fh:
        json.dump(vocab.to_json(), fh, ensure_ascii=False)
    with open(os.path.join(out_dir, CONFIG_NAME), "w", encoding="utf-8") as fh:
        json.dump(run_config, fh, indent=1, sort_keys=True)


def load_bundle(checkpoint_path: str | os.PathLike,
                ) -> tuple[ModelParams, Vocab, dict]:
    """Load a checkpoint with its sibling vocab.json and config.json."""
    base = os.path.dirname(os.path.abspath(checkpoint_path))
    vocab_path = os.path.join(base, VOCAB_NAME)
    config_path = os.path.join(base, CONFIG_NAME)
    for path, what in ((vocab_path, "vocabulary"), (config_path, "configuration")):
        if not os.path.exists(path):
            raise CheckpointError(f"missing {what} file {path} next to the checkpoint")
    with open(vocab_path, "r", encoding="utf-8") as fh:
        vocab = Vocab.from_json(json.load(fh))
    with open(config_path, "r", encoding="utf-8") as fh:
        run_config = json.load(fh)
    model_config = ModelConfig(
        vocab_size=vocab.n_words, n_rel_types=vocab.n_relations,
        word_dim=run_config["word_dim"], rel_dim=run_config["rel_dim"],
        repr_dim=run_config["repr_dim"], head_dim=run_config["head_dim"],
        mode=run_config["mode"], shared=run_config["shared"])
    params = ModelParams.load(checkpoint_path, model_config)
    return params, vocab, run_config
