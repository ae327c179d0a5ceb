"""FrameNet-lite data model: frames, lexical units and Inheritance relations.

A :class:`Lexicon` is immutable after construction. Frame ids are dense and
follow file order, so embeddings and indexes stay aligned across runs.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DataError

POS_TAGS = ("v", "n", "a", "adv", "prep", "num", "other")
INHERITANCE = "Inheritance"
SEPARATOR = "|"


@dataclass(frozen=True)
class Frame:
    id: int
    name: str
    definition: str


@dataclass(frozen=True, order=True)
class LemmaPos:
    lemma: str
    pos: str

    def __post_init__(self):
        if not self.lemma:
            raise DataError("empty lemma")
        if self.pos not in POS_TAGS:
            raise DataError(f"unknown POS {self.pos!r} for lemma {self.lemma!r}")
        if self.lemma != self.lemma.lower():
            object.__setattr__(self, "lemma", self.lemma.lower())

    @classmethod
    def parse(cls, text: str) -> "LemmaPos":
        lemma, sep, pos = text.rpartition(".")
        if not sep:
            raise DataError(f"expected 'lemma.pos', got {text!r}")
        return cls(lemma, pos)

    def __str__(self) -> str:
        return f"{self.lemma}.{self.pos}"


@dataclass(frozen=True)
class LexicalUnit:
    key: LemmaPos
    evoked: frozenset[int]


@dataclass(frozen=True)
class FrameRelation:
    kind: str
    sup: int
    sub: int


@dataclass(frozen=True)
class Lexicon:
    frames: tuple[Frame, ...]
    lexical_units: Mapping[LemmaPos, LexicalUnit]
    relations: tuple[FrameRelation, ...]
    sibling_map: Mapping[int, tuple[int, ...]] = field(repr=False)
    _by_name: Mapping[str, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.frames)

    def frame_id(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise DataError(f"unknown frame {name!r}") from None

    def frame(self, f: int) -> Frame:
        _check_frame(self, f)
        return self.frames[f]

    def inheritance(self) -> list[FrameRelation]:
        return [r for r in self.relations if r.kind == INHERITANCE]

    def parents_of(self, f: int) -> list[int]:
        return sorted({r.sup for r in self.relations if r.kind == INHERITANCE and r.sub == f})


def _check_frame(lex: Lexicon, f: int) -> None:
    if not isinstance(f, (int,)) or isinstance(f, bool) or not 0 <= f < len(lex.frames):
        raise DataError(f"unknown frame id {f!r}")


def build_lexicon(
    frames: Iterable[tuple[str, str]],
    lexical_units: Iterable[tuple[str, str, Iterable[str]]],
    relations: Iterable[tuple[str, str, str]] = (),
) -> Lexicon:
    """Validate raw (name-based) records and assemble a :class:`Lexicon`.

    ``frames`` yields ``(name, definition)``; ``lexical_units`` yields
    ``(lemma, pos, frame_names)``; ``relations`` yields ``(kind, sup, sub)``.
    """
    frame_objs: list[Frame] = []
    by_name: dict[str, int] = {}
    for name, definition in frames:
        if not name:
            raise DataError("frame with empty name")
        if name in by_name:
            raise DataError(f"duplicate frame name {name!r}")
        if not definition or not definition.strip():
            raise DataError(f"frame {name!r} has an empty definition")
        by_name[name] = len(frame_objs)
        frame_objs.append(Frame(len(frame_objs), name, definition))

    def resolve(name: str, where: str) -> int:
        if name not in by_name:
            raise DataError(f"{where} references unknown frame {name!r}")
        return by_name[name]

    lus: dict[LemmaPos, LexicalUnit] = {}
    for lemma, pos, names in lexical_units:
        key = LemmaPos(lemma, pos)
        if key in lus:
            raise DataError(f"duplicate lexical unit {key}")
        evoked = frozenset(resolve(n, f"lexical unit {key}") for n in names)
        if not evoked:
            raise DataError(f"lexical unit {key} evokes no frames")
        lus[key] = LexicalUnit(key, evoked)

    rels: list[FrameRelation] = []
    seen: set[tuple[str, int, int]] = set()
    for kind, sup_name, sub_name in relations:
        sup = resolve(sup_name, f"relation {kind}")
        sub = resolve(sub_name, f"relation {kind}")
        if sup == sub:
            raise DataError(f"self-inheritance on frame {sup_name!r}" if kind == INHERITANCE
                            else f"self-relation {kind} on frame {sup_name!r}")
        if (kind, sup, sub) in seen:
            raise DataError(f"duplicate relation {kind}({sup_name} -> {sub_name})")
        seen.add((kind, sup, sub))
        rels.append(FrameRelation(kind, sup, sub))

    _check_acyclic(rels, frame_objs)
    sibling_map = _siblings(rels, len(frame_objs))
    return Lexicon(tuple(frame_objs), lus, tuple(rels), sibling_map, by_name)


def _check_acyclic(rels: list[FrameRelation], frames: list[Frame]) -> None:
    children: dict[int, list[int]] = defaultdict(list)
    for r in rels:
        if r.kind == INHERITANCE:
            children[r.sup].append(r.sub)
    state = [0] * len(frames)  # 0 unvisited, 1 on stack, 2 done
    for root in range(len(frames)):
        if state[root]:
            continue
        stack = [(root, iter(children[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state[nxt] == 1:
                raise DataError(f"Inheritance cycle through frame {frames[nxt].name!r}")
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(children[nxt])))


def _siblings(rels: list[FrameRelation], n: int) -> dict[int, tuple[int, ...]]:
    children: dict[int, set[int]] = defaultdict(set)
    parents: dict[int, set[int]] = defaultdict(set)
    for r in rels:
        if r.kind == INHERITANCE:
            children[r.sup].add(r.sub)
            parents[r.sub].add(r.sup)
    out = {}
    for f in range(n):
        sibs: set[int] = set()
        for p in parents[f]:
            sibs |= children[p]
        sibs.discard(f)
        out[f] = tuple(sorted(sibs))
    return out


def load_lexicon(path: str | Path) -> Lexicon:
    """Read a ``lexicon.json`` file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return lexicon_from_dict(raw)


def lexicon_from_dict(raw: dict) -> Lexicon:
    try:
        frames = [(fr["name"], fr["definition"]) for fr in raw["frames"]]
        lus = [(lu["lemma"], lu["pos"], list(lu["frames"])) for lu in raw.get("lexical_units", [])]
        rels = [(r["kind"], r["sup"], r["sub"]) for r in raw.get("relations", [])]
    except (KeyError, TypeError) as exc:
        raise DataError(f"lexicon does not match schema: missing or bad field {exc}") from exc
    return build_lexicon(frames, lus, rels)


def lexicon_to_dict(lex: Lexicon) -> dict:
    name = [fr.name for fr in lex.frames]
    return {
        "frames": [{"name": fr.name, "definition": fr.definition} for fr in lex.frames],
        "lexical_units": [
            {"lemma": lu.key.lemma, "pos": lu.key.pos, "frames": [name[f] for f in sorted(lu.evoked)]}
            for lu in lex.lexical_units.values()
        ],
        "relations": [{"kind": r.kind, "sup": name[r.sup], "sub": name[r.sub]} for r in lex.relations],
    }


def save_lexicon(lex: Lexicon, path: str | Path) -> None:
    Path(path).write_text(json.dumps(lexicon_to_dict(lex), indent=1, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def candidates_for(lex: Lexicon, lu: LemmaPos) -> frozenset[int] | None:
    """Frames the lexical unit can evoke, or ``None`` when ``lu`` is unregistered."""
    entry = lex.lexical_units.get(lu)
    return None if entry is None else entry.evoked


def siblings_of(lex: Lexicon, f: int) -> list[int]:
    _check_frame(lex, f)
    return list(lex.sibling_map[f])


def frame_input_text(lex: Lexicon, f: int) -> str:
    """The frame encoder's input, ``name | definition``."""
    fr = lex.frame(f)
    return f"{fr.name} {SEPARATOR} {fr.definition}"
