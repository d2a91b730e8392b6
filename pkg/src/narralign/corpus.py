"""Parse, normalize, and segment books and film scripts into ordered
paragraph sequences with structural and dialog annotations.

Documents are modeled as flat paragraph lists. Scripts carry scene ids and
speaker attributions derived from slug lines and character cues; books carry
chapter ids, a quote-pair dialog flag, and optionally vocabulary-shift book
units. Everything is deterministic: same input text, same Document.

Screenplay conventions handled here:

* A slug line opens a scene: "INT.", "EXT.", "INT/EXT" or "I/E" after an
  optional scene number ("32B INT. KING'S CROSS 32B"), or an all-caps
  heading containing a " - " location/time separator.
* An all-caps short line (optionally with a trailing parenthetical such as
  "(O.S.)") is a character cue; the text that follows it, in the same block
  or the next one, is dialog spoken by that character.
* All-caps lines ending with ":" ("CUT TO:") are transitions and dropped.
* Content before the first slug line (title pages) is dropped.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

from .errors import EmptyInput, InvariantViolation, MalformedRecord, NoScenesFound

GENDER_TAGS = ("female", "male", "unknown")

_CONTROL_CHARS = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f]")
_WS_RUN = re.compile(r"\s+")

_SLUG_PREFIXES = ("INT.", "EXT.", "INT/EXT", "I/E")
_SCENE_NUMBER = re.compile(r"^\d+[A-Z]?\s+")
_CUE_SUFFIX = re.compile(r"\s*\([^)]*\)\s*$")
_CUE_NAME = re.compile(r"^[A-Z][A-Z0-9 .'/-]*$")

_DEFAULT_CHAPTER = re.compile(r"^(CHAPTER|Chapter)\b")
_WORD = re.compile(r"[a-z0-9]+")

# Small function-word list for the book-unit segmenter's content vocabulary.
_STOPWORDS = frozenset(
    """a an and are as at be but by for from had has have he her him his i in
    is it its me my not of on or she so that the their them they this to was
    we were what when which who will with you your""".split()
)


@dataclass(frozen=True)
class Paragraph:
    """One text unit of a document, with structural metadata."""

    index: int
    text: str
    chapter_id: int | None = None
    scene_id: int | None = None
    unit_id: int | None = None
    is_dialog: bool = False
    speaker: str | None = None


@dataclass(frozen=True)
class BookUnit:
    """A contiguous run of book paragraphs, as half-open [start, end)."""

    unit_id: int
    start: int
    end: int

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass
class Document:
    doc_id: str
    kind: str  # "book" | "script"
    paragraphs: tuple[Paragraph, ...]
    characters: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.characters = {k.upper(): v for k, v in self.characters.items()}
        validate_document(self)

    def __len__(self) -> int:
        return len(self.paragraphs)


def validate_document(doc: Document) -> None:
    """Raise InvariantViolation unless the document honors its contract."""
    if doc.kind not in ("book", "script"):
        raise InvariantViolation(f"unknown document kind {doc.kind!r}")
    prev_ordinals: dict[str, int] = {}
    for pos, par in enumerate(doc.paragraphs):
        if par.index != pos:
            raise InvariantViolation(
                f"paragraph index {par.index} at position {pos}: indices must be contiguous"
            )
        if not par.text.strip():
            raise InvariantViolation(f"paragraph {pos} has empty text")
        if doc.kind == "script" and par.scene_id is None:
            raise InvariantViolation(f"script paragraph {pos} lacks scene_id")
        if doc.kind == "book" and par.chapter_id is None:
            raise InvariantViolation(f"book paragraph {pos} lacks chapter_id")
        for name in ("chapter_id", "scene_id", "unit_id"):
            value = getattr(par, name)
            if value is None:
                continue
            if value < prev_ordinals.get(name, 0):
                raise InvariantViolation(f"{name} decreases at paragraph {pos}")
            prev_ordinals[name] = value
    for name, tag in doc.characters.items():
        if tag not in GENDER_TAGS:
            raise InvariantViolation(f"character {name!r} has bad gender tag {tag!r}")


def normalize_text(text: str) -> str:
    """Strip control characters and collapse whitespace runs to one space."""
    return _WS_RUN.sub(" ", _CONTROL_CHARS.sub("", text)).strip()


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens; shared by the lexical metrics."""
    return _WORD.findall(text.lower())


def _blocks(raw_text: str) -> list[list[str]]:
    """Split text into blocks of consecutive non-blank lines."""
    blocks: list[list[str]] = []
    current: list[str] = []
    for line in raw_text.splitlines():
        if line.strip():
            current.append(line.strip())
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    return blocks


def _is_all_caps(line: str) -> bool:
    letters = [c for c in line if c.isalpha()]
    return bool(letters) and all(c.isupper() for c in letters)


def is_slug_line(line: str) -> bool:
    s = line.strip()
    if not _is_all_caps(s):
        return False
    bare = _SCENE_NUMBER.sub("", s.upper())
    if any(bare.startswith(p) for p in _SLUG_PREFIXES):
        return True
    # all-caps location heading fallback, e.g. "KING'S CROSS - NIGHT"
    return " - " in s and len(s.split()) >= 2


def _is_transition(line: str) -> bool:
    return _is_all_caps(line) and line.rstrip().endswith(":")


def is_character_cue(line: str) -> bool:
    s = line.strip()
    if not _is_all_caps(s) or is_slug_line(s) or _is_transition(s):
        return False
    name = _CUE_SUFFIX.sub("", s)
    if not name or " - " in name or len(name) > 40 or not _CUE_NAME.match(name):
        return False
    return len(name.split()) <= 4


def cue_name(line: str) -> str:
    """Speaker name from a cue line, parenthetical suffix removed."""
    return _CUE_SUFFIX.sub("", line.strip()).strip()


def parse_script(raw_text: str, doc_id: str = "script") -> Document:
    """Parse screenplay text into a script Document.

    Paragraphs are blank-line blocks; slug lines advance the scene counter
    and are not paragraphs themselves. A block introduced by a character cue
    (either its first line, or a cue standing alone as the previous block)
    becomes a dialog paragraph with that speaker.

    Raises EmptyInput on blank input and NoScenesFound when no slug line is
    detected.
    """
    blocks = _blocks(raw_text)
    if not blocks:
        raise EmptyInput("script text is empty")
    if not any(is_slug_line(line) for block in blocks for line in block):
        raise NoScenesFound("no slug lines detected in script text")

    # split blocks at slug/transition lines so a slug glued to its action
    # text still opens a scene
    segments: list[tuple[int, list[str]]] = []  # (scene_id, lines)
    scene = -1
    for block in blocks:
        current: list[str] = []
        for line in block:
            if is_slug_line(line):
                if current and scene >= 0:
                    segments.append((scene, current))
                current = []
                scene += 1
            elif _is_transition(line):
                if current and scene >= 0:
                    segments.append((scene, current))
                current = []
            else:
                current.append(line)
        if current and scene >= 0:  # front matter before slug 1 is dropped
            segments.append((scene, current))

    paragraphs: list[Paragraph] = []
    pending_speaker: str | None = None
    last_scene = -1
    for seg_scene, lines in segments:
        if seg_scene != last_scene:
            pending_speaker = None
            last_scene = seg_scene
        speaker: str | None = None
        if is_character_cue(lines[0]):
            speaker = cue_name(lines[0])
            lines = lines[1:]
            if not lines:
                pending_speaker = speaker  # cue alone; dialog follows next
                continue
        elif pending_speaker is not None:
            speaker = pending_speaker
        pending_speaker = None
        text = normalize_text(" ".join(lines))
        if not text:
            continue
        paragraphs.append(
            Paragraph(
                index=len(paragraphs),
                text=text,
                scene_id=seg_scene,
                is_dialog=speaker is not None,
                speaker=speaker,
            )
        )
    if not paragraphs:
        raise EmptyInput("script contains no paragraphs after its slug lines")
    return Document(doc_id=doc_id, kind="script", paragraphs=tuple(paragraphs))


def has_quote_pair(text: str) -> bool:
    """True when the text contains a straight or curly double-quote pair."""
    return text.count('"') >= 2 or ("“" in text and "”" in text)


def _default_chapter_line(line: str) -> bool:
    if _DEFAULT_CHAPTER.match(line):
        return True
    return _is_all_caps(line) and len(line.split()) <= 8


def parse_book(
    raw_text: str,
    chapter_pattern: str | re.Pattern | None = None,
    doc_id: str = "book",
    characters: dict[str, str] | None = None,
) -> Document:
    """Parse plain book text into a book Document.

    Paragraphs are blank-line blocks. Chapter delimiters are lines matching
    `chapter_pattern`, defaulting to /^(CHAPTER|Chapter)\\b/ plus short
    all-caps lines; leading delimiter lines of a block are dropped. A book
    with no delimiters is a single chapter 0. A paragraph is dialog when it
    contains a double-quote pair.
    """
    if chapter_pattern is not None:
        pattern = re.compile(chapter_pattern)
        is_delimiter = lambda line: bool(pattern.match(line))  # noqa: E731
    else:
        is_delimiter = _default_chapter_line

    blocks = _blocks(raw_text)
    paragraphs: list[Paragraph] = []
    chapter = 0
    for block in blocks:
        lines = list(block)
        if lines and is_delimiter(lines[0]):
            if paragraphs:
                chapter += 1
            lines = lines[1:]
            while lines and is_delimiter(lines[0]):
                lines = lines[1:]  # heading block may carry an all-caps title
        if not lines:
            continue
        text = normalize_text(" ".join(lines))
        if not text:
            continue
        paragraphs.append(
            Paragraph(
                index=len(paragraphs),
                text=text,
                chapter_id=chapter,
                is_dialog=has_quote_pair(text),
            )
        )
    if not paragraphs:
        raise EmptyInput("book text is empty")
    return Document(
        doc_id=doc_id,
        kind="book",
        paragraphs=tuple(paragraphs),
        characters=characters or {},
    )


def _content_vocabulary(paragraphs: Sequence[Paragraph]) -> set[str]:
    vocab: set[str] = set()
    for par in paragraphs:
        vocab.update(t for t in tokenize(par.text) if t not in _STOPWORDS)
    return vocab


def _boundary_scores(book: Document, window: int) -> list[float]:
    """Vocabulary overlap (Jaccard over sets) at each interior boundary.

    Boundary b sits between paragraphs b-1 and b; scores[b] is the overlap
    of the `window` paragraphs on each side. Low scores mark context shifts.
    """
    pars = book.paragraphs
    scores = [0.0] * (len(pars) + 1)
    for b in range(1, len(pars)):
        left = _content_vocabulary(pars[max(0, b - window) : b])
        right = _content_vocabulary(pars[b : b + window])
        union = left | right
        scores[b] = len(left & right) / len(union) if union else 0.0
    return scores


def segment_book_units(
    book: Document, target_size: int = 8, window: int = 3
) -> list[BookUnit]:
    """Partition a book into units of roughly target_size paragraphs.

    Breakpoints are placed at local minima of the windowed vocabulary-overlap
    score, greedily from lowest overlap upward, accepting a split only while
    both resulting pieces keep at least ceil(target_size/2) paragraphs.
    Chapter boundaries are always breakpoints. Any piece still longer than
    2*target_size afterwards is force-split at its cheapest interior
    boundary.
    """
    if target_size < 2:
        raise ValueError("target_size must be >= 2")
    if window < 1:
        raise ValueError("window must be >= 1")
    n = len(book.paragraphs)
    if n == 0:
        raise EmptyInput("cannot segment an empty book")

    min_size = (target_size + 1) // 2
    max_size = 2 * target_size

    breakpoints = {0, n}
    for pos in range(1, n):
        prev = book.paragraphs[pos - 1].chapter_id
        cur = book.paragraphs[pos].chapter_id
        if prev is not None and cur is not None and cur != prev:
            breakpoints.add(pos)

    scores = _boundary_scores(book, window)
    candidates = []
    for b in range(1, n):
        if b in breakpoints:
            continue
        # local minimum with plateau guard: never higher than a neighbor,
        # strictly lower than at least one (flat runs are not minima)
        left_le = b == 1 or scores[b] <= scores[b - 1]
        right_le = b == n - 1 or scores[b] <= scores[b + 1]
        strict = (b > 1 and scores[b] < scores[b - 1]) or (
            b < n - 1 and scores[b] < scores[b + 1]
        )
        if left_le and right_le and strict:
            candidates.append(b)
    candidates.sort(key=lambda b: (scores[b], b))

    def span_of(b: int) -> tuple[int, int]:
        marks = sorted(breakpoints)
        lo = max(m for m in marks if m < b)
        hi = min(m for m in marks if m > b)
        return lo, hi

    for b in candidates:
        lo, hi = span_of(b)
        if b - lo >= min_size and hi - b >= min_size:
            breakpoints.add(b)

    # force-split anything still above the size ceiling
    changed = True
    while changed:
        changed = False
        marks = sorted(breakpoints)
        for lo, hi in zip(marks, marks[1:]):
            if hi - lo <= max_size:
                continue
            interior = range(lo + 1, hi)
            feasible = [b for b in interior if b - lo >= min_size and hi - b >= min_size]
            pool = feasible or list(interior)
            best = min(pool, key=lambda b: (scores[b], abs(2 * b - lo - hi), b))
            breakpoints.add(best)
            changed = True
            break

    marks = sorted(breakpoints)
    return [
        BookUnit(unit_id=k, start=lo, end=hi)
        for k, (lo, hi) in enumerate(zip(marks, marks[1:]))
    ]


def assign_units(book: Document, units: Sequence[BookUnit]) -> Document:
    """Return a copy of the book with unit_id stamped on each paragraph."""
    lookup = {}
    for unit in units:
        for i in range(unit.start, unit.end):
            lookup[i] = unit.unit_id
    if sorted(lookup) != list(range(len(book.paragraphs))):
        raise InvariantViolation("units do not partition the book's paragraphs")
    pars = tuple(replace(p, unit_id=lookup[p.index]) for p in book.paragraphs)
    return Document(book.doc_id, book.kind, pars, dict(book.characters))


def units_from_document(book: Document) -> list[BookUnit]:
    """Reconstruct BookUnits from per-paragraph unit_id annotations."""
    units: list[BookUnit] = []
    for par in book.paragraphs:
        if par.unit_id is None:
            raise InvariantViolation(f"paragraph {par.index} lacks unit_id")
        if units and par.unit_id == units[-1].unit_id:
            units[-1] = replace(units[-1], end=par.index + 1)
        elif par.unit_id == len(units):
            units.append(BookUnit(unit_id=par.unit_id, start=par.index, end=par.index + 1))
        else:
            raise InvariantViolation(f"unit_id jumps at paragraph {par.index}")
    return units


_PARAGRAPH_KEYS = {"index", "text", "chapter_id", "scene_id", "unit_id", "is_dialog", "speaker"}


def save_document(doc: Document, path: str) -> None:
    """Write a Document as paragraph JSONL (header line + one line per paragraph)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {"doc_id": doc.doc_id, "kind": doc.kind, "characters": doc.characters}
        fh.write(json.dumps(header, sort_keys=True, ensure_ascii=False) + "\n")
        for par in doc.paragraphs:
            record = {
                "index": par.index,
                "text": par.text,
                "chapter_id": par.chapter_id,
                "scene_id": par.scene_id,
                "unit_id": par.unit_id,
                "is_dialog": par.is_dialog,
                "speaker": par.speaker,
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def load_document(path: str) -> Document:
    """Read a paragraph JSONL file back into a Document.

    Raises MalformedRecord for unparseable lines or missing keys and
    InvariantViolation for structural problems (non-contiguous indices,
    missing ordinals, bad kind).
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise EmptyInput(f"{path} is empty")

    def parse_line(line_no: int, line: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise MalformedRecord(line_no, "record is not a JSON object")
        return obj

    header = parse_line(1, lines[0])
    for key in ("doc_id", "kind"):
        if key not in header:
            raise MalformedRecord(1, f"header missing {key!r}")

    paragraphs = []
    for line_no, line in enumerate(lines[1:], start=2):
        obj = parse_line(line_no, line)
        missing = {"index", "text", "is_dialog"} - obj.keys()
        if missing:
            raise MalformedRecord(line_no, f"record missing {sorted(missing)}")
        unknown = obj.keys() - _PARAGRAPH_KEYS
        if unknown:
            raise MalformedRecord(line_no, f"unknown keys {sorted(unknown)}")
        if (
            not isinstance(obj["index"], int)
            or not isinstance(obj["text"], str)
            or not isinstance(obj["is_dialog"], bool)
        ):
            raise MalformedRecord(line_no, "index/text/is_dialog have wrong types")
        paragraphs.append(Paragraph(**{k: obj.get(k) for k in _PARAGRAPH_KEYS}))

    return Document(
        doc_id=header["doc_id"],
        kind=header["kind"],
        paragraphs=tuple(paragraphs),
        characters=header.get("characters") or {},
    )


def render_script(doc: Document) -> str:
    """Emit canonical screenplay text whose parse reproduces `doc`.

    Used for round-trip checks and fixtures: one synthetic slug line per
    scene, dialog blocks preceded by their speaker cue.
    """
    out: list[str] = []
    scene = -1
    for par in doc.paragraphs:
        target = par.scene_id if par.scene_id is not None else 0
        while scene < target:
            scene += 1
            out.append(f"INT. SCENE {scene + 1} - DAY")
            out.append("")
        if par.is_dialog and par.speaker:
            out.append(par.speaker)
        out.append(par.text)
        out.append("")
    return "\n".join(out)
