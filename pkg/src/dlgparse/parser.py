"""Link prediction, relation classification, and the sequential parse loop.

For the current EDU u_i every preceding u_j is scored from a joint input
vector (four concatenated representation blocks); a softmax over the
candidates gives the parent distribution.  The relation type of the chosen
pair comes from a second head.  Each decided (parent, relation) immediately
extends the structured representations, so later decisions see the structure
built so far.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor
from .corpus import Dialogue, DependencyTree, Vocab
from .encoders import (ReprSet, SequencingError, compute_representations,
                       structured_step)
from .model import MODES, Head, ModelParams


class OrderingError(ValueError):
    """A candidate parent at or after the current EDU was requested."""


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def build_input(tape: Tape, reprs: ReprSet, dialogue: Dialogue, i: int, j: int,
                mode: str) -> Tensor:
    """Joint input vector for the pair (u_i, candidate parent u_j).

    Structured modes concatenate the current EDU's local and global blocks
    with the candidate's global block and the candidate's structured
    representation highlighting the current speaker; ns mode replaces the
    structured block with the candidate's local/global pair.
    """
    if j >= i:
        raise OrderingError(f"candidate parent {j} must precede EDU {i}")
    h_i = reprs.local[i]
    g_i = reprs.global_ns[i]
    g_j = reprs.global_ns[j]
    if mode == "ns":
        return tape.concat([h_i, g_i, reprs.local[j], g_j])
    key = (j, None if mode == "no-shm" else dialogue.edus[i].speaker)
    g_s = reprs.structured.get(key)
    if g_s is None:
        raise SequencingError(
            f"dialogue {dialogue.id}: structured representation for parent {j} "
            f"highlighting {key[1]!r} not computed yet")
    return tape.concat([h_i, g_i, g_j, g_s])


def _head_logit(tape: Tape, head: Head, h: Tensor) -> Tensor:
    return tape.add(tape.matmul(head.u, tape.tanh(
        tape.add(tape.matmul(head.w, h), head.b))), head.b2)


def predict_link(tape: Tape, params: ModelParams,
                 inputs: list[Tensor]) -> tuple[Tensor, int]:
    """Distribution over candidate parents and its argmax (lowest index wins
    ties)."""
    logits = [_head_logit(tape, params.link_head, h) for h in inputs]
    probs = tape.softmax(tape.concat(logits))
    return probs, int(np.argmax(probs.data))


def classify_relation(tape: Tape, params: ModelParams,
                      h: Tensor) -> tuple[Tensor, int]:
    """Distribution over relation types and its argmax (lowest id wins ties)."""
    probs = tape.softmax(_head_logit(tape, params.rel_head, h))
    return probs, int(np.argmax(probs.data))


def draw_random_structure(dialogue: Dialogue, n_rel_types: int,
                          rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Uniform parent among preceding EDUs and uniform relation id per EDU."""
    parents = [int(rng.integers(0, i)) for i in range(1, len(dialogue.edus))]
    rtypes = [int(rng.integers(0, n_rel_types)) for _ in range(dialogue.n_edus)]
    return parents, rtypes


def repr_stacks(params: ModelParams, link_reprs: ReprSet,
                 rel_reprs: ReprSet) -> list[tuple[ReprSet, str]]:
    if rel_reprs is link_reprs:
        return [(link_reprs, "link")]
    return [(link_reprs, "link"), (rel_reprs, "rel")]


def parse_dialogue(dialogue: Dialogue, vocab: Vocab, params: ModelParams, *,
                   mode: str | None = None, rng: np.random.Generator | None = None,
                   link_logits_hook=None) -> DependencyTree:
    """Sequential parse: per EDU predict the parent, classify the relation,
    then grow the structured representations with the decision.

    ``rng`` is required in random mode (it draws the encoded structure).
    ``link_logits_hook(i) -> array`` replaces the computed link logits for
    EDU i; it exists for tests that need to force decisions.
    """
    mode = params.config.mode if mode is None else mode
    _check_mode(mode)
    if mode == "random" and rng is None:
        raise ValueError("random mode needs a random generator for the encoded structure")

    tape = Tape()
    link_reprs = compute_representations(tape, dialogue, vocab, params, "link", mode=mode)
    rel_reprs = (link_reprs if params.config.shared else
                 compute_representations(tape, dialogue, vocab, params, "rel", mode=mode))
    random_structure = (draw_random_structure(dialogue, params.config.n_rel_types, rng)
                        if mode == "random" else None)

    parents: list[int] = []
    rtypes: list[str] = []
    link_probs: list[float] = []
    rel_probs: list[float] = []
    for i in range(1, len(dialogue.edus)):
        if link_logits_hook is not None:
            logits = np.asarray(link_logits_hook(i), dtype=np.float64)
            e = np.exp(logits - logits.max())
            probs = e / e.sum()
            j_star = int(np.argmax(probs))
        else:
            inputs = [build_input(tape, link_reprs, dialogue, i, j, mode)
                      for j in range(i)]
            probs_t, j_star = predict_link(tape, params, inputs)
            probs = probs_t.data
        parents.append(j_star)
        link_probs.append(float(probs[j_star]))

        h_rel = build_input(tape, rel_reprs, dialogue, i, j_star, mode)
        rel_dist, k_star = classify_relation(tape, params, h_rel)
        rtypes.append(vocab.relation_label(k_star))
        rel_probs.append(float(rel_dist.data[k_star]))

        if mode == "ns":
            continue
        if mode == "random":
            step_parent, step_rtype = random_structure[0][i - 1], random_structure[1][i - 1]
        else:
            step_parent, step_rtype = j_star, k_star
        for reprs, which in repr_stacks(params, link_reprs, rel_reprs):
            structured_step(tape, reprs, dialogue, i, step_parent, step_rtype,
                            params.stack(which), shm=mode != "no-shm")

    return DependencyTree(dialogue.id, parents, rtypes, link_probs, rel_probs)


# -- static pairwise scores for the two-stage decoders -------------------------

def score_matrix(dialogue: Dialogue, vocab: Vocab, params: ModelParams, *,
                 edges: str = "forward") -> np.ndarray:
    """Log-probability matrix S[j, i] for links u_j → u_i from ns-mode
    (structure-free) representations.

    Entries outside the candidate set, the diagonal, and the whole root
    column are -inf.  With ``edges="all-pairs"`` each EDU's candidates are
    all other nodes, normalized per EDU.
    """
    if edges not in ("forward", "all-pairs"):
        raise ValueError(f"edges must be 'forward' or 'all-pairs', got {edges!r}")
    tape = Tape()
    reprs = compute_representations(tape, dialogue, vocab, params, "link", mode="ns")
    n = dialogue.n_edus
    scores = np.full((n + 1, n + 1), -np.inf)
    for i in range(1, n + 1):
        if edges == "forward":
            cands = list(range(i))
        else:
            cands = [j for j in range(n + 1) if j != i]
        inputs = [_pair_input(tape, reprs, i, j) for j in cands]
        probs, _ = predict_link(tape, params, inputs)
        for j, p in zip(cands, probs.data):
            scores[j, i] = np.log(p)
    return scores


def _pair_input(tape: Tape, reprs: ReprSet, i: int, j: int) -> Tensor:
    # ns-mode joint input for an arbitrary ordered pair, j after i allowed
    return tape.concat([reprs.local[i], reprs.global_ns[i],
                        reprs.local[j], reprs.global_ns[j]])


def typed_tree_from_parents(dialogue: Dialogue, vocab: Vocab, params: ModelParams,
                            parents: list[int],
                            scores: np.ndarray | None = None) -> DependencyTree:
    """Classify relation types for an externally decoded structure."""
    tape = Tape()
    reprs = compute_representations(tape, dialogue, vocab, params, "rel", mode="ns")
    rtypes: list[str] = []
    rel_probs: list[float] = []
    for i, p in enumerate(parents, start=1):
        dist, k_star = classify_relation(tape, params, _pair_input(tape, reprs, i, p))
        rtypes.append(vocab.relation_label(k_star))
        rel_probs.append(float(dist.data[k_star]))
    link_probs = None
    if scores is not None:
        link_probs = [float(np.exp(scores[p, i])) for i, p in enumerate(parents, start=1)]
    return DependencyTree(dialogue.id, parents, rtypes, link_probs, rel_probs)
