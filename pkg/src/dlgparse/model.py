"""Model configuration and trainable parameters.

The parser uses a word-embedding table shared by two encoder stacks (one
feeding the link predictor, one the relation classifier; a single stack in
shared mode), plus two scoring heads.  Each stack holds a learned root
vector, a bidirectional local GRU, a unidirectional global GRU, the two
structured-encoder cells (highlighted / general speaker), and a relation
embedding table.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import (CheckpointError, GruCellParams, ShapeError, Tensor,
                       load_checkpoint, save_checkpoint)
from .corpus import Vocab

MODES = ("full", "ns", "random", "no-shm")

WEIGHT_SCALE = 0.08
EMBEDDING_SCALE = 0.1


@dataclass
class ModelConfig:
    vocab_size: int
    n_rel_types: int  # relation label count including ROOT
    word_dim: int = 100
    rel_dim: int = 100
    repr_dim: int = 256  # local and global discourse representations
    head_dim: int = 512  # hidden layer of the link / relation heads
    mode: str = "full"
    shared: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for name in ("vocab_size", "n_rel_types", "word_dim", "rel_dim",
                     "repr_dim", "head_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.repr_dim % 2:
            raise ValueError(f"repr_dim must be even (two bi-GRU halves), got {self.repr_dim}")

    @property
    def input_dim(self) -> int:
        """Dimension of the joint input vector: four concatenated blocks."""
        return 4 * self.repr_dim

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "ModelConfig":
        return cls(**doc)


@dataclass
class EncoderStack:
    """All encoder parameters of one representation stack."""

    root_local: Tensor
    local_fwd: GruCellParams
    local_bwd: GruCellParams
    global_cell: GruCellParams
    struct_hl: GruCellParams
    struct_gen: GruCellParams
    rel_emb: Tensor

    @classmethod
    def create(cls, config: ModelConfig, rng: np.random.Generator) -> "EncoderStack":
        half = config.repr_dim // 2
        struct_in = config.repr_dim + config.rel_dim
        return cls(
            root_local=Tensor(rng.uniform(-WEIGHT_SCALE, WEIGHT_SCALE, config.repr_dim),
                              requires_grad=True),
            local_fwd=GruCellParams.create(config.word_dim, half, rng),
            local_bwd=GruCellParams.create(config.word_dim, half, rng),
            global_cell=GruCellParams.create(config.repr_dim, config.repr_dim, rng),
            struct_hl=GruCellParams.create(struct_in, config.repr_dim, rng),
            struct_gen=GruCellParams.create(struct_in, config.repr_dim, rng),
            rel_emb=Tensor(rng.uniform(-EMBEDDING_SCALE, EMBEDDING_SCALE,
                                       (config.n_rel_types, config.rel_dim)),
                           requires_grad=True),
        )

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = [(f"{prefix}.root_local", self.root_local)]
        for cell_name in ("local_fwd", "local_bwd", "global_cell", "struct_hl", "struct_gen"):
            out.extend(getattr(self, cell_name).named(f"{prefix}.{cell_name}"))
        out.append((f"{prefix}.rel_emb", self.rel_emb))
        return out


@dataclass
class Head:
    """Two-layer scoring head: out = U·tanh(W·H + b) + b2."""

    w: Tensor
    b: Tensor
    u: Tensor
    b2: Tensor

    @classmethod
    def create(cls, in_dim: int, hidden_dim: int, out_dim: int,
               rng: np.random.Generator) -> "Head":
        u = rng.uniform
        return cls(
            w=Tensor(u(-WEIGHT_SCALE, WEIGHT_SCALE, (hidden_dim, in_dim)), requires_grad=True),
            b=Tensor(np.zeros(hidden_dim), requires_grad=True),
            u=Tensor(u(-WEIGHT_SCALE, WEIGHT_SCALE, (out_dim, hidden_dim)), requires_grad=True),
            b2=Tensor(np.zeros(out_dim), requires_grad=True),
        )

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b),
                (f"{prefix}.u", self.u), (f"{prefix}.b2", self.b2)]


class ModelParams:
    """Every trainable tensor of the parser, addressable by name."""

    def __init__(self, config: ModelConfig, word_emb: Tensor,
                 stacks: dict[str, EncoderStack], link_head: Head, rel_head: Head):
        self.config = config
        self.word_emb = word_emb
        self.stacks = stacks
        self.link_head = link_head
        self.rel_head = rel_head
        self._validate()

    def _validate(self) -> None:
        c = self.config
        if self.word_emb.shape != (c.vocab_size, c.word_dim):
            raise ShapeError(f"word_emb: expected {(c.vocab_size, c.word_dim)}, "
                             f"got {self.word_emb.shape}")
        for name, stack in self._distinct_stacks():
            if stack.rel_emb.shape != (c.n_rel_types, c.rel_dim):
                raise ShapeError(f"{name}.rel_emb: expected {(c.n_rel_types, c.rel_dim)}, "
                                 f"got {stack.rel_emb.shape}")
            if stack.root_local.shape != (c.repr_dim,):
                raise ShapeError(f"{name}.root_local: expected {(c.repr_dim,)}, "
                                 f"got {stack.root_local.shape}")
        if self.link_head.w.shape != (c.head_dim, c.input_dim):
            raise ShapeError(f"link_head.w: expected {(c.head_dim, c.input_dim)}, "
                             f"got {self.link_head.w.shape}")
        if self.rel_head.u.shape != (c.n_rel_types, c.head_dim):
            raise ShapeError(f"rel_head.u: expected {(c.n_rel_types, c.head_dim)}, "
                             f"got {self.rel_head.u.shape}")

    @classmethod
    def create(cls, config: ModelConfig, rng: np.random.Generator,
               pretrained: dict[str, np.ndarray] | None = None,
               vocab: Vocab | None = None) -> "ModelParams":
        emb = rng.uniform(-EMBEDDING_SCALE, EMBEDDING_SCALE,
                          (config.vocab_size, config.word_dim))
        if pretrained:
            if vocab is None:
                raise ValueError("pretrained embeddings need the vocabulary for alignment")
            for i, token in enumerate(vocab.words):
                vec = pretrained.get(token)
                if vec is not None:
                    emb[i] = vec
        word_emb = Tensor(emb, requires_grad=True)
        if config.shared:
            stack = EncoderStack.create(config, rng)
            stacks = {"link": stack, "rel": stack}
        else:
            stacks = {"link": EncoderStack.create(config, rng),
                      "rel": EncoderStack.create(config, rng)}
        link_head = Head.create(config.input_dim, config.head_dim, 1, rng)
        rel_head = Head.create(config.input_dim, config.head_dim, config.n_rel_types, rng)
        return cls(config, word_emb, stacks, link_head, rel_head)

    def stack(self, which: str) -> EncoderStack:
        return self.stacks[which]

    def _distinct_stacks(self) -> list[tuple[str, EncoderStack]]:
        if self.config.shared:
            return [("enc.shared", self.stacks["link"])]
        return [("enc.link", self.stacks["link"]), ("enc.rel", self.stacks["rel"])]

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {"word_emb": self.word_emb}
        for prefix, stack in self._distinct_stacks():
            out.update(stack.named(prefix))
        out.update(self.link_head.named("link_head"))
        out.update(self.rel_head.named("rel_head"))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named().values())

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(path, {name: t.data for name, t in self.named().items()})

    @classmethod
    def load(cls, path, config: ModelConfig) -> "ModelParams":
        """Rebuild parameters from a checkpoint, validating every shape."""
        arrays = load_checkpoint(path)
        params = cls.create(config, np.random.default_rng(0))
        named = params.named()
        missing = sorted(set(named) - set(arrays))
        if missing:
            raise CheckpointError(f"checkpoint {path} is missing parameter {missing[0]!r}")
        extra = sorted(set(arrays) - set(named))
        if extra:
            raise CheckpointError(f"checkpoint {path} has unexpected parameter {extra[0]!r}")
        for name, tensor in named.items():
            arr = arrays[name]
            if arr.shape != tensor.shape:
                raise CheckpointError(
                    f"checkpoint {path}: parameter {name!r} has shape {arr.shape}, "
                    f"model expects {tensor.shape}")
            tensor.data = arr
        return params


def load_pretrained_embeddings(path, dim: int) -> dict[str, np.ndarray]:
    """Read a text embedding file: token followed by `dim` reals per line."""
    table: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{ln}: expected a token and {dim} values, "
                                 f"got {len(parts)} fields")
            table[parts[0]] = np.array([float(v) for v in parts[1:]])
    return table
