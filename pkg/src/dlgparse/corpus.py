"""Dialogue data model and corpus preparation.

The canonical corpus file is UTF-8 JSON: a top-level list of dialogues, each
``{"id": str, "edus": [{"speaker": str, "text": str}], "relations":
[{"x": id, "y": id, "type": str}], "cdus": [{"id": str, "members": [id]}]}``.
EDU ids are their 1-based positions as strings; CDU ids are arbitrary
strings.  Preparation collapses complex discourse units onto their head EDUs,
prepends a dummy root, attaches ROOT relations to orphan EDUs, and derives a
gold parent tree (earliest incoming source wins).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace

log = logging.getLogger(__name__)

ROOT_RELATION = "ROOT"
ROOT_SPEAKER = "<root>"
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_TOKEN_RE = re.compile(r"'\w+|\w+|[^\w\s]", re.UNICODE)


class CorpusError(Exception):
    """Malformed corpus data: bad syntax or broken referential integrity."""


@dataclass
class Edu:
    """One elementary discourse unit; index 0 is the dummy root."""

    index: int
    speaker: str
    text: str
    tokens: list[str]


@dataclass(frozen=True)
class RelationInstance:
    """A typed dependency link source → target over EDU indices."""

    source: int
    target: int
    rtype: str


@dataclass
class RawRelation:
    x: str  # source id: an EDU position string or a CDU id
    y: str  # target id
    rtype: str


@dataclass
class Cdu:
    id: str
    members: list[str]


@dataclass
class RawDialogue:
    """A dialogue as read from disk, before CDU elimination."""

    id: str
    edus: list[Edu]  # indices 1..n, no dummy root
    relations: list[RawRelation]
    cdus: list[Cdu]


@dataclass
class Dialogue:
    """A prepared dialogue: dummy root prepended, relations over EDUs only."""

    id: str
    edus: list[Edu]  # edus[0] is the dummy root
    gold_relations: list[RelationInstance]
    speakers: tuple[str, ...]
    gold_parent: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_edus(self) -> int:
        """Number of real EDUs (the dummy root not counted)."""
        return len(self.edus) - 1

    def gold_tree_relations(self) -> list[RelationInstance]:
        return [RelationInstance(p, i + 1, r)
                for i, (p, r) in enumerate(self.gold_parent)]


@dataclass
class DependencyTree:
    """Predicted (parent, relation) per EDU, rooted at the dummy node."""

    dialogue_id: str
    parents: list[int]  # entry i-1 is the parent of EDU i
    rtypes: list[str]
    link_probs: list[float] | None = None
    rel_probs: list[float] | None = None

    def relations(self) -> list[RelationInstance]:
        return [RelationInstance(p, i + 1, r)
                for i, (p, r) in enumerate(zip(self.parents, self.rtypes))]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach punctuation.

    Apostrophe contractions stay attached to the following letters
    ("it's" → ["it", "'s"]).  Empty or whitespace-only text maps to a single
    unknown-word token.
    """
    tokens = _TOKEN_RE.findall(text.lower())
    return tokens if tokens else [UNK_TOKEN]


# -- parsing ------------------------------------------------------------------

def _require(cond: bool, message: str) -> None:
    if not cond:
        raise CorpusError(message)


def parse_corpus(data: bytes | str) -> list[RawDialogue]:
    """Load dialogues from canonical JSON, validating referential integrity."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CorpusError(
            f"corpus syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    _require(isinstance(doc, list), "corpus top level must be a list of dialogues")

    dialogues = []
    for pos, entry in enumerate(doc):
        _require(isinstance(entry, dict), f"dialogue #{pos} is not an object")
        did = entry.get("id")
        _require(isinstance(did, str) and did != "", f"dialogue #{pos} has no id")
        edus = []
        for k, edu in enumerate(entry.get("edus", []), start=1):
            _require(isinstance(edu, dict) and isinstance(edu.get("text"), str)
                     and isinstance(edu.get("speaker"), str),
                     f"dialogue {did}: EDU #{k} needs string 'speaker' and 'text'")
            edus.append(Edu(k, edu["speaker"], edu["text"], tokenize(edu["text"])))
        _require(bool(edus), f"dialogue {did}: has no EDUs")

        edu_ids = {str(i) for i in range(1, len(edus) + 1)}
        cdus = []
        for c in entry.get("cdus", []):
            _require(isinstance(c, dict) and isinstance(c.get("id"), str)
                     and isinstance(c.get("members"), list) and c["members"],
                     f"dialogue {did}: malformed CDU entry")
            _require(c["id"] not in edu_ids, f"dialogue {did}: CDU id {c['id']!r} collides with an EDU id")
            cdus.append(Cdu(c["id"], [str(m) for m in c["members"]]))
        cdu_ids = {c.id for c in cdus}
        _require(len(cdu_ids) == len(cdus), f"dialogue {did}: duplicate CDU ids")

        known = edu_ids | cdu_ids
        for c in cdus:
            for m in c.members:
                _require(m in known, f"dialogue {did}: CDU {c.id!r} member {m!r} is undeclared")

        relations = []
        for r in entry.get("relations", []):
            _require(isinstance(r, dict) and isinstance(r.get("type"), str),
                     f"dialogue {did}: malformed relation entry")
            x, y = str(r.get("x")), str(r.get("y"))
            for end in (x, y):
                _require(end in known, f"dialogue {did}: relation endpoint {end!r} is undeclared")
            relations.append(RawRelation(x, y, r["type"]))

        raw = RawDialogue(did, edus, relations, cdus)
        _check_cdu_acyclic(raw)
        dialogues.append(raw)
    return dialogues


def _check_cdu_acyclic(raw: RawDialogue) -> None:
    members = {c.id: c.members for c in raw.cdus}
    state: dict[str, int] = {}  # 1 = visiting, 2 = done

    def visit(cid: str) -> None:
        if state.get(cid) == 2:
            return
        _require(state.get(cid) != 1, f"dialogue {raw.id}: CDU membership cycle at {cid!r}")
        state[cid] = 1
        for m in members[cid]:
            if m in members:
                visit(m)
        state[cid] = 2

    for cid in members:
        visit(cid)


def load_corpus(path) -> list[RawDialogue]:
    with open(path, "rb") as fh:
        return parse_corpus(fh.read())


# -- CDU elimination ----------------------------------------------------------

def _earliest_position(unit_id: str, members: dict[str, list[str]]) -> int:
    """Document position of a discourse unit: its own EDU index, or the
    smallest index of any EDU reachable inside a CDU."""
    if unit_id not in members:
        return int(unit_id)
    return min(_earliest_position(m, members) for m in members[unit_id])


def cdu_head(cdu_id: str, raw: RawDialogue) -> int:
    """Head EDU of a CDU: the earliest member without incoming relations,
    resolved recursively when that member is itself a CDU.

    When every member has an incoming relation the earliest member overall is
    used as a fallback (logged): the head definition assumes at least one
    member is not a target.
    """
    members = {c.id: c.members for c in raw.cdus}
    if cdu_id not in members:
        raise CorpusError(f"dialogue {raw.id}: unknown CDU id {cdu_id!r}")
    targets = {r.y for r in raw.relations}

    def resolve(cid: str) -> int:
        ms = sorted(members[cid], key=lambda m: _earliest_position(m, members))
        free = [m for m in ms if m not in targets]
        if not free:
            log.warning("dialogue %s: every member of CDU %r has an incoming relation; "
                        "falling back to the earliest member", raw.id, cid)
            free = ms[:1]
        head = free[0]
        return resolve(head) if head in members else int(head)

    return resolve(cdu_id)


def eliminate_cdus(raw: RawDialogue) -> RawDialogue:
    """Replace CDU relation endpoints with their head EDUs.

    Self-loops produced by the collapse are dropped; duplicate
    (source, target, type) triples keep their first occurrence.
    """
    if not raw.cdus:
        return raw
    heads = {c.id: str(cdu_head(c.id, raw)) for c in raw.cdus}
    seen: set[tuple[str, str, str]] = set()
    relations = []
    for r in raw.relations:
        x = heads.get(r.x, r.x)
        y = heads.get(r.y, r.y)
        if x == y:
            continue
        key = (x, y, r.rtype)
        if key in seen:
            continue
        seen.add(key)
        relations.append(RawRelation(x, y, r.rtype))
    return RawDialogue(raw.id, raw.edus, relations, [])


# -- root attachment and gold parents ------------------------------------------

def attach_root(raw: RawDialogue) -> Dialogue:
    """Prepend the dummy root and add a ROOT relation to every orphan EDU."""
    if raw.cdus:
        raise CorpusError(f"dialogue {raw.id}: eliminate CDUs before attaching the root")
    root = Edu(0, ROOT_SPEAKER, "", [])
    edus = [root] + [replace(e, index=i) for i, e in enumerate(raw.edus, start=1)]

    relations = []
    for r in raw.relations:
        x, y = int(r.x), int(r.y)
        if x == y:
            raise CorpusError(f"dialogue {raw.id}: self-loop on EDU {x}")
        if x > y:
            raise CorpusError(f"dialogue {raw.id}: backward relation {x} -> {y}")
        relations.append(RelationInstance(x, y, r.rtype))

    has_incoming = {r.target for r in relations}
    for i in range(1, len(edus)):
        if i not in has_incoming:
            relations.append(RelationInstance(0, i, ROOT_RELATION))

    speakers: list[str] = []
    for e in edus[1:]:
        if e.speaker not in speakers:
            speakers.append(e.speaker)
    return Dialogue(raw.id, edus, relations, tuple(speakers))


def gold_parents(dialogue: Dialogue) -> list[tuple[int, str]]:
    """Per-EDU (parent, relation type): the incoming relation with the
    smallest source index wins; an EDU with no incoming link gets
    (root, ROOT)."""
    incoming: dict[int, tuple[int, str]] = {}
    for r in dialogue.gold_relations:
        best = incoming.get(r.target)
        if best is None or r.source < best[0]:
            incoming[r.target] = (r.source, r.rtype)
    return [incoming.get(i, (0, ROOT_RELATION)) for i in range(1, len(dialogue.edus))]


def prepare_dialogue(raw: RawDialogue) -> Dialogue:
    """Full preparation pipeline: CDU elimination, root, gold parents."""
    d = attach_root(eliminate_cdus(raw))
    d.gold_parent = gold_parents(d)
    return d


def load_dialogues(path) -> list[Dialogue]:
    return [prepare_dialogue(raw) for raw in load_corpus(path)]


# -- serialization -------------------------------------------------------------

def to_canonical(dialogue: Dialogue) -> dict:
    """Dialogue → canonical JSON object (root EDU and ROOT links dropped)."""
    return {
        "id": dialogue.id,
        "edus": [{"speaker": e.speaker, "text": e.text} for e in dialogue.edus[1:]],
        "relations": [{"x": str(r.source), "y": str(r.target), "type": r.rtype}
                      for r in dialogue.gold_relations if r.rtype != ROOT_RELATION or r.source != 0],
        "cdus": [],
    }


def save_corpus(dialogues: list[Dialogue], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([to_canonical(d) for d in dialogues], fh, ensure_ascii=False, indent=1)


# -- vocabulary ----------------------------------------------------------------

@dataclass
class Vocab:
    """Deterministic word and relation-type id maps."""

    words: list[str]  # index = id; includes PAD and UNK at 0 and 1
    relations: list[str]  # index = id; ROOT at 0

    def __post_init__(self) -> None:
        self.word_to_id = {w: i for i, w in enumerate(self.words)}
        self.rel_to_id = {r: i for i, r in enumerate(self.relations)}

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def word_id(self, token: str) -> int:
        return self.word_to_id.get(token, self.word_to_id[UNK_TOKEN])

    def relation_id(self, rtype: str) -> int:
        if rtype not in self.rel_to_id:
            raise CorpusError(f"unknown relation type {rtype!r}")
        return self.rel_to_id[rtype]

    def relation_label(self, rid: int) -> str:
        return self.relations[rid]

    def to_json(self) -> dict:
        return {"words": self.words, "relations": self.relations}

    @classmethod
    def from_json(cls, doc: dict) -> "Vocab":
        return cls(list(doc["words"]), list(doc["relations"]))


def build_vocab(dialogues: list[Dialogue], min_freq: int = 1) -> Vocab:
    """Words with frequency ≥ min_freq, ids in order of first appearance."""
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")
    counts: dict[str, int] = {}
    order: list[str] = []
    rels: list[str] = [ROOT_RELATION]
    for d in dialogues:
        for e in d.edus[1:]:
            for tok in e.tokens:
                if tok not in counts:
                    order.append(tok)
                counts[tok] = counts.get(tok, 0) + 1
        for r in d.gold_relations:
            if r.rtype not in rels:
                rels.append(r.rtype)
    words = [PAD_TOKEN, UNK_TOKEN]
    words += [w for w in order if counts[w] >= min_freq and w not in (PAD_TOKEN, UNK_TOKEN)]
    return Vocab(words, rels)


# -- statistics ----------------------------------------------------------------

@dataclass
class CorpusStats:
    n_dialogues: int
    n_edus: int
    n_relations: int  # gold relations, ROOT attachments not counted
    n_multi_parent: int

    @property
    def multi_parent_proportion(self) -> float:
        return self.n_multi_parent / self.n_edus if self.n_edus else 0.0


def corpus_stats(dialogues: list[Dialogue]) -> CorpusStats:
    n_edus = 0
    n_rel = 0
    n_multi = 0
    for d in dialogues:
        n_edus += d.n_edus
        incoming: dict[int, int] = {}
        for r in d.gold_relations:
            if r.rtype == ROOT_RELATION and r.source == 0:
                continue
            n_rel += 1
            incoming[r.target] = incoming.get(r.target, 0) + 1
        n_multi += sum(1 for c in incoming.values() if c > 1)
    return CorpusStats(len(dialogues), n_edus, n_rel, n_multi)
