"""Adaptation analytics derived from a paragraph-level alignment: retention
and faithfulness, chapter voting, dialog retention, narrative-order
monotonicity, and the Bechdel representation ratio.

Conventions: a book paragraph is retained when it appears in the alignment's
pair set; a book unit is removed only when strictly less than half of its
paragraphs are retained; all set cardinalities are paragraph counts.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Sequence

from .align import AlignmentResult, best_script_pair
from .corpus import BookUnit, Document
from .errors import InvariantViolation, MissingGenderData, UndefinedRatio
from .stats import auc_roc, lis_length, spearman_rho

MALE_PRONOUNS = frozenset({"he", "him", "his", "mr"})


@dataclass(frozen=True)
class RetentionReport:
    unit_flags: dict[int, bool]  # unit_id -> retained?
    retained_paragraphs: frozenset[int]
    book_size: int

    @property
    def retention_pct(self) -> float:
        return 100.0 * len(self.retained_paragraphs) / self.book_size


@dataclass(frozen=True)
class DialogReport:
    u_b: float
    v_b: float
    dialog_count: int
    retained_dialog: int
    nondialog_count: int
    retained_nondialog: int


@dataclass(frozen=True)
class BechdelReport:
    B: float
    prediction: str  # "pass" | "fail"
    dialog_count: int  # |d|
    retained_dialog: int  # |rd|
    female_only_dialog: int  # |d_{f,b}|
    retained_female_only: int  # |d_{f,b} ∩ rd|
    female_ratio: float | None
    male_ratio: float | None


@dataclass(frozen=True)
class OrderReport:
    sequence_length: int
    lis_length: int

    @property
    def expected_random(self) -> float:
        return 2.0 * math.sqrt(self.sequence_length)

    @property
    def upper_bound(self) -> int:
        return self.sequence_length


def retention(
    align: AlignmentResult, units: Sequence[BookUnit], book_size: int
) -> RetentionReport:
    """Per-paragraph and per-unit retention.

    A unit is retained when at least half of its paragraphs are aligned
    (the removal rule is "less than half", so exactly half stays retained).
    """
    covered = sorted(i for unit in units for i in range(unit.start, unit.end))
    if covered != list(range(book_size)):
        raise InvariantViolation("units do not partition the book")
    retained = frozenset(b for b, _ in align.pair_set)
    if retained and (min(retained) < 0 or max(retained) >= book_size):
        raise InvariantViolation("alignment references book indices outside the book")
    flags = {}
    for unit in units:
        aligned = sum(1 for i in range(unit.start, unit.end) if i in retained)
        flags[unit.unit_id] = aligned >= math.ceil(unit.size / 2)
    return RetentionReport(
        unit_flags=flags, retained_paragraphs=retained, book_size=book_size
    )


def chapter_vote(
    align: AlignmentResult, book: Document, script: Document
) -> dict[int, int]:
    """Scene -> chapter assignment by majority vote of aligned pairs.

    Every aligned (book, script) pair casts one vote for the book
    paragraph's chapter in the script paragraph's scene. Ties go to the
    chapter with the higher summed match score, then the lower chapter id.
    Scenes without any vote are absent from the result.
    """
    votes: dict[int, dict[int, list[float]]] = {}  # scene -> chapter -> [score, count]
    for match in align.matches:
        for b, s in match.pairs:
            chapter = book.paragraphs[b].chapter_id
            scene = script.paragraphs[s].scene_id
            if chapter is None or scene is None:
                continue
            tally = votes.setdefault(scene, {}).setdefault(chapter, [0.0, 0])
            tally[0] += match.score
            tally[1] += 1
    assignment = {}
    for scene, tallies in votes.items():
        best = min(tallies.items(), key=lambda kv: (-kv[1][1], -kv[1][0], kv[0]))
        assignment[scene] = best[0]
    return assignment


def dialog_ratio(ret: RetentionReport, book: Document) -> DialogReport:
    """Dialog retention ratio u_b and its non-dialog counterpart v_b.

    u_b = (|r ∩ d| / |d|) * (|b| / |r|): how over- or under-represented
    dialog paragraphs are among the retained ones. Raises UndefinedRatio
    when a denominator is zero.
    """
    dialog = {p.index for p in book.paragraphs if p.is_dialog}
    nondialog = {p.index for p in book.paragraphs if not p.is_dialog}
    r = ret.retained_paragraphs
    size = ret.book_size
    if not dialog:
        raise UndefinedRatio("book has no dialog paragraphs; u_b undefined")
    if not nondialog:
        raise UndefinedRatio("book has no non-dialog paragraphs; v_b undefined")
    if not r:
        raise UndefinedRatio("nothing retained; u_b and v_b undefined")
    rd = len(r & dialog)
    rn = len(r & nondialog)
    u = (rd / len(dialog)) * (size / len(r))
    v = (rn / len(nondialog)) * (size / len(r))
    return DialogReport(
        u_b=u,
        v_b=v,
        dialog_count=len(dialog),
        retained_dialog=rd,
        nondialog_count=len(nondialog),
        retained_nondialog=rn,
    )


def lis_order(align: AlignmentResult, all_pairs: bool = False) -> OrderReport:
    """Monotonicity of the alignment via the longest increasing subsequence.

    By default each aligned book paragraph contributes the script index of
    its highest-scoring pair, making the sequence a function of book order;
    `all_pairs=True` uses every pair instead.
    """
    if all_pairs:
        seq = [s for b, s in sorted(align.pair_set)]
    else:
        best = best_script_pair(align)
        seq = [best[b][0] for b in sorted(best)]
    return OrderReport(sequence_length=len(seq), lis_length=lis_length(seq))


@dataclass(frozen=True)
class GenderLexicon:
    """Supplementary name and pronoun lists for dialog gender attribution."""

    female_names: frozenset[str] = frozenset()
    male_names: frozenset[str] = frozenset()
    male_pronouns: frozenset[str] = MALE_PRONOUNS

    @classmethod
    def from_json(cls, path: str) -> "GenderLexicon":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(
            female_names=frozenset(n.upper() for n in obj.get("female_names", [])),
            male_names=frozenset(n.upper() for n in obj.get("male_names", [])),
            male_pronouns=frozenset(
                p.lower() for p in obj.get("male_pronouns", sorted(MALE_PRONOUNS))
            ),
        )


def _name_pattern(names: set[str]) -> re.Pattern | None:
    if not names:
        return None
    alternatives = "|".join(re.escape(n) for n in sorted(names, key=len, reverse=True))
    return re.compile(rf"\b({alternatives})\b", re.IGNORECASE)


def _attribute_speaker(
    book: Document, index: int, pattern: re.Pattern | None
) -> str | None:
    """Explicit speaker tag if present, else the nearest preceding character
    name within two paragraphs (the current one searched first, last mention
    wins since attributions trail the quote)."""
    par = book.paragraphs[index]
    if par.speaker:
        return par.speaker.upper()
    if pattern is None:
        return None
    for i in range(index, max(-1, index - 3), -1):
        hits = pattern.findall(book.paragraphs[i].text)
        if hits:
            return hits[-1].upper()
    return None


def bechdel_ratio(
    ret: RetentionReport, book: Document, gender_lexicon: GenderLexicon | None = None
) -> BechdelReport:
    """Bechdel representation ratio B over the book's dialog paragraphs.

    d is all dialog; rd the retained dialog; d_f the dialog attributed to a
    female character that mentions no male character and no male pronoun.
    B = (|d_f ∩ rd| / |d_f|) * (|d| / |rd|); B > 1 predicts a Bechdel pass.
    Female/male representation ratios use the same form without the
    male-mention filter.
    """
    lexicon = gender_lexicon or GenderLexicon()
    female = {n for n, tag in book.characters.items() if tag == "female"}
    male = {n for n, tag in book.characters.items() if tag == "male"}
    female |= lexicon.female_names
    male |= lexicon.male_names
    if not female and not male:
        raise MissingGenderData("no character carries a female/male gender tag")

    known_pattern = _name_pattern(female | male)
    male_pattern = _name_pattern(male)
    pronoun_pattern = re.compile(
        r"\b(" + "|".join(sorted(lexicon.male_pronouns)) + r")\b", re.IGNORECASE
    )

    dialog = [p for p in book.paragraphs if p.is_dialog]
    d = {p.index for p in dialog}
    rd = d & ret.retained_paragraphs
    female_attr: set[int] = set()
    male_attr: set[int] = set()
    female_only: set[int] = set()
    for par in dialog:
        speaker = _attribute_speaker(book, par.index, known_pattern)
        if speaker is None:
            continue
        if speaker in female:
            female_attr.add(par.index)
            mentions_male = bool(pronoun_pattern.search(par.text)) or bool(
                male_pattern and male_pattern.search(par.text)
            )
            if not mentions_male:
                female_only.add(par.index)
        elif speaker in male:
            male_attr.add(par.index)

    if not female_only:
        raise UndefinedRatio("no female-only dialog paragraphs; B undefined")
    if not rd:
        raise UndefinedRatio("no retained dialog; B undefined")

    def representation(subset: set[int]) -> float | None:
        if not subset:
            return None
        return (len(subset & rd) / len(subset)) * (len(d) / len(rd))

    b_value = (len(female_only & rd) / len(female_only)) * (len(d) / len(rd))
    return BechdelReport(
        B=b_value,
        prediction="pass" if b_value > 1.0 else "fail",
        dialog_count=len(d),
        retained_dialog=len(rd),
        female_only_dialog=len(female_only),
        retained_female_only=len(female_only & rd),
        female_ratio=representation(female_attr),
        male_ratio=representation(male_attr),
    )


def faithfulness_rank(
    reports: Sequence[RetentionReport], labels: Sequence[bool]
) -> dict[str, float]:
    """Spearman correlation and AUC of retention percentage against binary
    faithfulness labels."""
    if len(reports) != len(labels):
        raise ValueError("reports and labels must have equal length")
    scores = [r.retention_pct for r in reports]
    flags = [bool(v) for v in labels]
    spearman = spearman_rho(scores, [1.0 if v else 0.0 for v in flags])
    return {
        "spearman_rho": spearman["rho"],
        "p_value": spearman["p_value"],
        "auc": auc_roc(scores, flags),
    }


def heatmap_rows(align: AlignmentResult, book_size: int) -> list[tuple[int, int, float]]:
    """Plot-ready rows (book paragraph index, aligned flag, confidence),
    confidence being the best score among matches touching the paragraph."""
    best: dict[int, float] = {}
    for match in align.matches:
        for b, _ in match.pairs:
            if match.score > best.get(b, 0.0):
                best[b] = match.score
    return [(i, int(i in best), best.get(i, 0.0)) for i in range(book_size)]
