"""Deep sequential discourse dependency parsing for multi-party dialogues."""

from .corpus import (Dialogue, DependencyTree, Edu, RelationInstance, Vocab,
                     build_vocab, load_corpus, load_dialogues, prepare_dialogue,
                     tokenize)
from .estimator import DeepSequentialParser
from .evaluation import EvalReport, micro_f1
from .parser import parse_dialogue
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Dialogue", "DependencyTree", "Edu", "RelationInstance", "Vocab",
    "build_vocab", "load_corpus", "load_dialogues", "prepare_dialogue",
    "tokenize", "DeepSequentialParser", "EvalReport", "micro_f1",
    "parse_dialogue", "TrainConfig", "train", "__version__",
]
