"""Micro-averaged attachment evaluation.

Counts are pooled over the whole collection before computing precision,
recall, and F1.  A link match is an identical (source, target) pair within
the same dialogue; a link & relation match additionally requires the same
relation type.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .corpus import RelationInstance


class AlignmentError(Exception):
    """Predicted and gold dialogue collections do not cover the same ids."""


@dataclass
class EvalReport:
    link_precision: float
    link_recall: float
    link_f1: float
    linkrel_precision: float
    linkrel_recall: float
    linkrel_f1: float
    n_predicted: int
    n_gold: int

    def as_text(self) -> str:
        lines = [
            f"Link      F1: {100 * self.link_f1:.1f}   "
            f"(P {100 * self.link_precision:.1f} / R {100 * self.link_recall:.1f})",
            f"Link&Rel  F1: {100 * self.linkrel_f1:.1f}   "
            f"(P {100 * self.linkrel_precision:.1f} / R {100 * self.linkrel_recall:.1f})",
            f"relations: predicted {self.n_predicted}, gold {self.n_gold}",
        ]
        return "\n".join(lines)

    def as_key_values(self) -> str:
        items = [
            ("link_precision", self.link_precision),
            ("link_recall", self.link_recall),
            ("link_f1", self.link_f1),
            ("linkrel_precision", self.linkrel_precision),
            ("linkrel_recall", self.linkrel_recall),
            ("linkrel_f1", self.linkrel_f1),
        ]
        lines = [f"{k}={v:.6f}" for k, v in items]
        lines.append(f"n_predicted={self.n_predicted}")
        lines.append(f"n_gold={self.n_gold}")
        return "\n".join(lines)


def _f1(matches: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    p = matches / n_pred if n_pred else 0.0
    r = matches / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def micro_f1(predicted: Mapping[str, Iterable[RelationInstance]],
             gold: Mapping[str, Iterable[RelationInstance]]) -> EvalReport:
    """Micro-averaged link and link & relation F1 over keyed dialogues."""
    link_matches = full_matches = 0
    n_pred = n_gold = 0
    for did in set(predicted) | set(gold):
        pred = {(r.source, r.target, r.rtype) for r in predicted.get(did, ())}
        ref = {(r.source, r.target, r.rtype) for r in gold.get(did, ())}
        pred_links = {(s, t) for s, t, _ in pred}
        ref_links = {(s, t) for s, t, _ in ref}
        link_matches += len(pred_links & ref_links)
        full_matches += len(pred & ref)
        n_pred += len(pred)
        n_gold += len(ref)
    lp, lr, lf = _f1(link_matches, n_pred, n_gold)
    fp, fr, ff = _f1(full_matches, n_pred, n_gold)
    return EvalReport(lp, lr, lf, fp, fr, ff, n_pred, n_gold)


def check_alignment(predicted_ids: Iterable[str], gold_ids: Iterable[str]) -> None:
    pred, ref = set(predicted_ids), set(gold_ids)
    if pred != ref:
        offenders = sorted(pred ^ ref)
        side = "missing from gold" if offenders[0] in pred else "missing from predictions"
        raise AlignmentError(f"dialogue id {offenders[0]!r} {side} "
                             f"({len(offenders)} mismatched ids in total)")
