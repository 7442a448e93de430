"""scikit-learn style estimator facade.

`DeepSequentialParser` exposes the parser as a fit/predict estimator over
lists of prepared :class:`~dlgparse.corpus.Dialogue` objects, so it composes
with the surrounding ecosystem (`get_params`/`set_params`, `clone`,
pipelines that pass opaque X).  Gold structure travels inside the dialogues,
so `y` is accepted but ignored, as in sklearn's clusterers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .corpus import Dialogue, DependencyTree
from .decoding import greedy_decode, mst_decode
from .evaluation import micro_f1
from .model import MODES, load_pretrained_embeddings
from .parser import parse_dialogue, score_matrix, typed_tree_from_parents
from .training import TrainConfig, load_bundle, save_bundle, train


def _validate_dialogues(X, *, require_gold: bool) -> list[Dialogue]:
    dialogues = list(X)
    if not dialogues:
        raise ValueError("X must contain at least one dialogue")
    for d in dialogues:
        if not isinstance(d, Dialogue):
            raise TypeError(f"X must contain prepared Dialogue objects, got {type(d).__name__}")
        if require_gold and len(d.gold_parent) != d.n_edus:
            raise ValueError(f"dialogue {d.id!r} has no derived gold parents; "
                             "run prepare_dialogue first")
    return dialogues


class DeepSequentialParser(BaseEstimator):
    """Joint link prediction and relation classification over dialogues.

    Parameters mirror the training configuration; `decoder` selects the
    inference strategy: "sequential" (the incremental parser, any mode) or
    the two-stage "greedy" / "mst" baselines, which require mode="ns".
    """

    def __init__(self, mode: str = "full", shared: bool = False, epochs: int = 40,
                 batch_size: int = 4, learning_rate: float = 0.1,
                 lr_decay: float = 0.98, dropout: float = 0.5, seed: int = 0,
                 min_freq: int = 1, val_fraction: float = 0.1,
                 word_dim: int = 100, rel_dim: int = 100, repr_dim: int = 256,
                 head_dim: int = 512, clip: float | None = None,
                 embeddings_path: str | None = None,
                 decoder: str = "sequential", edges: str = "forward"):
        self.mode = mode
        self.shared = shared
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.dropout = dropout
        self.seed = seed
        self.min_freq = min_freq
        self.val_fraction = val_fraction
        self.word_dim = word_dim
        self.rel_dim = rel_dim
        self.repr_dim = repr_dim
        self.head_dim = head_dim
        self.clip = clip
        self.embeddings_path = embeddings_path
        self.decoder = decoder
        self.edges = edges

    # -- sklearn plumbing -------------------------------------------------------

    def _train_config(self) -> TrainConfig:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.decoder not in ("sequential", "greedy", "mst"):
            raise ValueError(f"decoder must be sequential, greedy, or mst, got {self.decoder!r}")
        if self.decoder != "sequential" and self.mode != "ns":
            raise ValueError("greedy/mst decoding needs structure-free scores; use mode='ns'")
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, lr_decay=self.lr_decay,
            dropout=self.dropout, seed=self.seed, mode=self.mode,
            shared=self.shared, clip=self.clip, val_fraction=self.val_fraction,
            min_freq=self.min_freq, word_dim=self.word_dim, rel_dim=self.rel_dim,
            repr_dim=self.repr_dim, head_dim=self.head_dim)

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("this DeepSequentialParser instance is not fitted yet; "
                                 "call fit or load first")

    # -- estimator API ----------------------------------------------------------

    def fit(self, X, y=None) -> "DeepSequentialParser":
        """Train on prepared dialogues (gold structure travels inside X)."""
        dialogues = _validate_dialogues(X, require_gold=True)
        config = self._train_config()
        pretrained = (load_pretrained_embeddings(self.embeddings_path, self.word_dim)
                      if self.embeddings_path else None)
        result = train(dialogues, config, pretrained=pretrained)
        self.params_ = result.params
        self.vocab_ = result.vocab
        self.metrics_ = result.metrics
        self.best_epoch_ = result.best_epoch
        return self

    def predict(self, X) -> list[DependencyTree]:
        """One dependency tree per dialogue."""
        self._check_fitted()
        dialogues = _validate_dialogues(X, require_gold=False)
        trees = []
        for k, d in enumerate(dialogues):
            if self.decoder == "sequential":
                rng = (np.random.default_rng([self.seed, k])
                       if self.params_.config.mode == "random" else None)
                trees.append(parse_dialogue(d, self.vocab_, self.params_, rng=rng))
            else:
                scores = score_matrix(d, self.vocab_, self.params_, edges=self.edges)
                decode = greedy_decode if self.decoder == "greedy" else (
                    lambda s: mst_decode(s, self.edges))
                trees.append(typed_tree_from_parents(
                    d, self.vocab_, self.params_, decode(scores), scores=scores))
        return trees

    def score(self, X, y=None) -> float:
        """Micro-averaged Link&Rel F1 against the gold structure in X."""
        dialogues = _validate_dialogues(X, require_gold=True)
        trees = self.predict(dialogues)
        predicted = {t.dialogue_id: t.relations() for t in trees}
        gold = {d.id: d.gold_tree_relations() for d in dialogues}
        return micro_f1(predicted, gold).linkrel_f1

    # -- persistence ------------------------------------------------------------

    def save(self, out_dir) -> None:
        self._check_fitted()
        save_bundle(out_dir, self.params_, self.vocab_,
                    self._train_config().to_json())

    def load(self, checkpoint_path) -> "DeepSequentialParser":
        """Attach a trained bundle (checkpoint plus sibling files) to this
        estimator; hyperparameters are taken from the stored config."""
        params, vocab, run_config = load_bundle(checkpoint_path)
        known = set(self.get_params())
        self.set_params(**{k: v for k, v in run_config.items() if k in known})
        self.params_ = params
        self.vocab_ = vocab
        return self
