"""Shared test utilities: synthetic corpora and independent oracles."""

from __future__ import annotations

import json

import numpy as np

from dlgparse.corpus import parse_corpus, prepare_dialogue

SPEAKERS = ["A", "B", "C"]
ITEMS = ["wood", "clay", "sheep", "wheat", "ore"]
COUNTS = ["one", "two", "three", "four"]
NAMES = {"A": "alice", "B": "bob", "C": "carol"}


def make_synthetic_corpus(n_dialogues: int = 20, seed: int = 0) -> list[dict]:
    """Template-generated question/answer/acknowledgement dialogues.

    Three speakers; 4-8 EDUs per dialogue; the dialogue act is readable from
    the words and the gold parent follows fixed attachment rules (answers to
    the latest question, acknowledgements to the latest answer, follow-up
    questions to the previous question, comments to the previous EDU).
    """
    rng = np.random.default_rng(seed)
    corpus = []
    for d in range(n_dialogues):
        n_edus = int(rng.integers(4, 9))
        edus: list[dict] = []
        relations: list[dict] = []
        last_question = last_answer = 0

        asker = SPEAKERS[int(rng.integers(0, 3))]
        item = ITEMS[int(rng.integers(0, len(ITEMS)))]
        edus.append({"speaker": asker, "text": f"does anyone have {item} ?"})
        last_question = 1

        while len(edus) < n_edus:
            i = len(edus) + 1
            act = rng.choice(["answer", "ack", "followup", "comment"],
                             p=[0.4, 0.25, 0.2, 0.15])
            if act == "answer" or last_answer == 0 and act == "ack":
                speaker = _other(rng, asker)
                count = COUNTS[int(rng.integers(0, len(COUNTS)))]
                edus.append({"speaker": speaker, "text": f"i have {count} {item}"})
                relations.append({"x": str(last_question), "y": str(i), "type": "QAP"})
                last_answer = i
            elif act == "ack":
                responder = edus[last_answer - 1]["speaker"]
                edus.append({"speaker": asker, "text": f"ok thanks {NAMES[responder]}"})
                relations.append({"x": str(last_answer), "y": str(i), "type": "Ack"})
            elif act == "followup":
                edus.append({"speaker": asker, "text": "can you trade it ?"})
                relations.append({"x": str(last_question), "y": str(i), "type": "Q-Elab"})
                last_question = i
            else:
                speaker = SPEAKERS[int(rng.integers(0, 3))]
                edus.append({"speaker": speaker, "text": "that is a good deal"})
                relations.append({"x": str(i - 1), "y": str(i), "type": "Continuation"})
        corpus.append({"id": f"dlg{d:03d}", "edus": edus,
                       "relations": relations, "cdus": []})
    return corpus


def _other(rng: np.random.Generator, speaker: str) -> str:
    others = [s for s in SPEAKERS if s != speaker]
    return others[int(rng.integers(0, len(others)))]


def corpus_to_dialogues(corpus: list[dict]):
    return [prepare_dialogue(raw) for raw in parse_corpus(json.dumps(corpus))]


def write_corpus(path, corpus: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(corpus, fh)


# -- independent numeric oracles ------------------------------------------------

def finite_difference(loss_fn, arrays: list[np.ndarray], h: float = 1e-4) -> list[np.ndarray]:
    """Central finite differences of a scalar function of in-place arrays.

    `loss_fn()` must recompute the loss from the arrays' current contents.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_fn()
            flat[k] = orig - h
            down = loss_fn()
            flat[k] = orig
            gflat[k] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic: np.ndarray, numeric: np.ndarray,
                       rtol: float = 1e-3, atol: float = 1e-8) -> None:
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    bad = err > rtol * denom + atol
    if bad.any():
        worst = np.unravel_index(np.argmax(err - rtol * denom), analytic.shape)
        raise AssertionError(
            f"gradient mismatch at {worst}: analytic {analytic[worst]!r}, "
            f"numeric {numeric[worst]!r}")


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_reference(x, h_prev, p) -> np.ndarray:
    """Straight-line GRU step on raw arrays, independent of the tape code."""
    z = sigmoid(p.w_z.data @ x + p.u_z.data @ h_prev + p.b_z.data)
    r = sigmoid(p.w_r.data @ x + p.u_r.data @ h_prev + p.b_r.data)
    h_cand = np.tanh(p.w_h.data @ x + p.u_h.data @ (r * h_prev) + p.b_h.data)
    return (1.0 - z) * h_prev + z * h_cand
