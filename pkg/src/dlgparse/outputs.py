"""Parse-output files and DOT export.

A parse-output file is JSON: a list of ``{"id": str, "links": [{"child",
"parent", "type", "link_prob", "rel_prob"}]}`` records, one per dialogue,
one link per EDU.
"""

from __future__ import annotations

import json

from .corpus import CorpusError, Dialogue, DependencyTree


def write_parse_file(path, trees: list[DependencyTree]) -> None:
    doc = []
    for t in trees:
        links = []
        for k, (parent, rtype) in enumerate(zip(t.parents, t.rtypes)):
            entry = {"child": k + 1, "parent": parent, "type": rtype}
            if t.link_probs is not None:
                entry["link_prob"] = t.link_probs[k]
            if t.rel_probs is not None:
                entry["rel_prob"] = t.rel_probs[k]
            links.append(entry)
        doc.append({"id": t.dialogue_id, "links": links})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=1)


def read_parse_file(path) -> list[DependencyTree]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"parse file syntax error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, list):
        raise CorpusError("parse file top level must be a list")
    trees = []
    for entry in doc:
        did = entry.get("id") if isinstance(entry, dict) else None
        try:
            links = sorted(entry.get("links", []), key=lambda l: l["child"])
            n = len(links)
            if [l["child"] for l in links] != list(range(1, n + 1)):
                raise CorpusError(f"parse record {did!r} must list each EDU exactly once")
            trees.append(DependencyTree(
                did,
                [int(l["parent"]) for l in links],
                [str(l["type"]) for l in links],
                [float(l["link_prob"]) for l in links]
                if all("link_prob" in l for l in links) else None,
                [float(l["rel_prob"]) for l in links]
                if all("rel_prob" in l for l in links) else None,
            ))
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"malformed parse record {did!r}: {exc}") from exc
    return trees


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(dialogue: Dialogue, tree: DependencyTree) -> str:
    """Render a predicted tree as a DOT digraph, one node per EDU."""
    lines = [f'digraph "{_dot_escape(dialogue.id)}" {{', "  node [shape=box];"]
    lines.append('  u0 [label="u0 <root>"];')
    for e in dialogue.edus[1:]:
        label = _dot_escape(f"u{e.index} {e.speaker}: {e.text}")
        lines.append(f'  u{e.index} [label="{label}"];')
    for k, (parent, rtype) in enumerate(zip(tree.parents, tree.rtypes)):
        lines.append(f'  u{parent} -> u{k + 1} [label="{_dot_escape(rtype)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
