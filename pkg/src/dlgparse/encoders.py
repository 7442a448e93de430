"""Discourse representation encoders.

Three layers of representation per dialogue:

* local: a bidirectional GRU over each EDU's words, final states of both
  directions concatenated; the token-less dummy root gets a learned vector.
* global (non-structured): a unidirectional GRU over the EDU sequence
  starting at the root.
* structured: one representation per (EDU, highlighted speaker), grown
  incrementally along the dependency path.  The cell that consumes a step is
  the highlighted cell when the EDU's speaker is the highlighted one, the
  general cell otherwise; with speaker highlighting disabled a single cell
  and a single representation (speaker key None) are used.

Dropout, when enabled, is applied to the input of every GRU cell invocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import GruCellParams, Tape, Tensor, gru_cell
from .corpus import Dialogue, Edu, Vocab
from .model import EncoderStack, ModelConfig, ModelParams

SpeakerKey = str | None


class SequencingError(RuntimeError):
    """A structured representation was requested before its parent's exists."""


@dataclass
class ReprSet:
    """Representations of one dialogue under one encoder stack."""

    local: list[Tensor]
    global_ns: list[Tensor]
    structured: dict[tuple[int, SpeakerKey], Tensor] = field(default_factory=dict)


def _maybe_dropout(tape: Tape, x: Tensor, dropout_p: float,
                   rng: np.random.Generator | None) -> Tensor:
    if dropout_p > 0.0:
        if rng is None:
            raise ValueError("dropout requires a random generator")
        return tape.dropout(x, dropout_p, rng)
    return x


def _run_gru(tape: Tape, inputs: list[Tensor], cell: GruCellParams,
             dropout_p: float, rng) -> list[Tensor]:
    state = Tensor(np.zeros(cell.hidden_size))
    states = []
    for x in inputs:
        state = gru_cell(tape, _maybe_dropout(tape, x, dropout_p, rng), state, cell)
        states.append(state)
    return states


def encode_local(tape: Tape, edu: Edu, vocab: Vocab, word_emb: Tensor,
                 stack: EncoderStack, *, dropout_p: float = 0.0,
                 rng: np.random.Generator | None = None) -> Tensor:
    """Local representation of one EDU: concatenated final bi-GRU states."""
    if edu.index == 0:
        return stack.root_local
    embs = [tape.lookup(word_emb, vocab.word_id(tok)) for tok in edu.tokens]
    fwd = _run_gru(tape, embs, stack.local_fwd, dropout_p, rng)
    bwd = _run_gru(tape, embs[::-1], stack.local_bwd, dropout_p, rng)
    return tape.concat([fwd[-1], bwd[-1]])


def encode_global(tape: Tape, local: list[Tensor], stack: EncoderStack, *,
                  dropout_p: float = 0.0,
                  rng: np.random.Generator | None = None) -> list[Tensor]:
    """Non-structured global representations: GRU states over the EDU sequence."""
    return _run_gru(tape, local, stack.global_cell, dropout_p, rng)


def init_structured(reprs: ReprSet, dialogue: Dialogue, config: ModelConfig,
                    shm: bool) -> None:
    """Seed the root's structured representations with zero vectors."""
    zero = Tensor(np.zeros(config.repr_dim))
    keys: list[SpeakerKey] = list(dialogue.speakers) if shm else [None]
    for a in keys:
        reprs.structured[(0, a)] = zero


def structured_step(tape: Tape, reprs: ReprSet, dialogue: Dialogue, i: int,
                    parent: int, rtype_id: int, stack: EncoderStack, *,
                    shm: bool = True, dropout_p: float = 0.0,
                    rng: np.random.Generator | None = None) -> None:
    """Extend the structured representations to EDU i once its parent and
    relation are decided."""
    if i <= 0 or parent >= i:
        raise SequencingError(f"structured step needs 0 <= parent < i, got i={i}, parent={parent}")
    h_i = reprs.local[i]
    rel = tape.lookup(stack.rel_emb, rtype_id)
    step_input = tape.concat([h_i, rel])
    speaker_i = dialogue.edus[i].speaker
    keys: list[SpeakerKey] = list(dialogue.speakers) if shm else [None]
    for a in keys:
        prev = reprs.structured.get((parent, a))
        if prev is None:
            raise SequencingError(
                f"dialogue {dialogue.id}: structured representation of parent "
                f"{parent} (speaker {a!r}) not computed yet")
        cell = stack.struct_hl if (not shm or speaker_i == a) else stack.struct_gen
        x = _maybe_dropout(tape, step_input, dropout_p, rng)
        reprs.structured[(i, a)] = gru_cell(tape, x, prev, cell)


def compute_representations(tape: Tape, dialogue: Dialogue, vocab: Vocab,
                            params: ModelParams, which: str, *,
                            mode: str | None = None, dropout_p: float = 0.0,
                            rng: np.random.Generator | None = None) -> ReprSet:
    """Local and global representations for a whole dialogue, plus the root
    entries of the structured store (filled step by step while parsing)."""
    mode = params.config.mode if mode is None else mode
    stack = params.stack(which)
    local = [encode_local(tape, e, vocab, params.word_emb, stack,
                          dropout_p=dropout_p, rng=rng) for e in dialogue.edus]
    global_ns = encode_global(tape, local, stack, dropout_p=dropout_p, rng=rng)
    reprs = ReprSet(local, global_ns)
    if mode != "ns":
        init_structured(reprs, dialogue, params.config, shm=mode != "no-shm")
    return reprs
