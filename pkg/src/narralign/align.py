"""Modified Smith-Waterman local alignment over paragraph similarities.

The recurrence differs from textbook Smith-Waterman in one way: a gap step
still earns the (clamped) similarity of the cell it lands on,

    H(i,j) = max( H(i-1,j-1) + S(i,j),
                  H(i-1,j)   + g + max(0, S(i,j)),
                  H(i,j-1)   + g + max(0, S(i,j)),
                  0 )

so one book paragraph can align with several consecutive script paragraphs
(and vice versa) while still paying the gap penalty g < 0 for the length
mismatch. Ties are broken diag > up > left > stop, fixed for determinism.

A full alignment is extracted greedily: all positive cells are visited in
descending score order, each unconsumed cell seeds a traceback that stops at
a zero cell or at the first already-consumed cell, and every visited cell is
consumed so no paragraph pair is reported twice.

Both fill strategies, the serial reference and the vectorized anti-diagonal
wavefront, perform identical float64 operations per cell and produce
bit-identical matrices.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import CapacityExceeded, InvariantViolation

STOP, DIAG, UP, LEFT = 0, 1, 2, 3

DEFAULT_GAP = -0.7
DEFAULT_CELL_BUDGET = 10**9

GAP_PAIR_MODES = ("script", "both", "none")

# np.argmax over rows stacked [diag, up, left, zero] -> move codes
_MOVE_OF_ARGMAX = np.array([DIAG, UP, LEFT, STOP], dtype=np.int8)


@dataclass
class ScoreMatrix:
    """Filled DP state: H and move are (m+1) x (n+1); S is the m x n
    similarity table the fill consumed (needed when extracting gap pairs)."""

    m: int
    n: int
    g: float
    H: np.ndarray
    move: np.ndarray
    S: np.ndarray


@dataclass(frozen=True)
class LocalMatch:
    """One independent local alignment: 0-based (book, script) paragraph
    pairs in traceback order, and the match's own score (H at its best cell,
    less any score inherited from a previously-extracted match)."""

    pairs: tuple[tuple[int, int], ...]
    score: float


@dataclass(frozen=True)
class AlignmentResult:
    matches: tuple[LocalMatch, ...]
    pair_set: frozenset[tuple[int, int]]
    params: dict = field(default_factory=dict, compare=False, hash=False)


def cell_budget_from_env(default: int = DEFAULT_CELL_BUDGET) -> int:
    raw = os.environ.get("NARRALIGN_CELL_BUDGET")
    return int(raw) if raw else default


def _score_table(model, m: int | None, n: int | None) -> np.ndarray:
    if isinstance(model, np.ndarray):
        S = np.asarray(model, dtype=np.float64)
        if S.ndim != 2:
            raise ValueError("similarity table must be 2-D")
    else:
        S = model.score_matrix()
    if m is not None or n is not None:
        S = S[: m if m is not None else S.shape[0], : n if n is not None else S.shape[1]]
    if S.shape[0] < 1 or S.shape[1] < 1:
        raise ValueError("need at least one paragraph on each side")
    if not np.all(np.isfinite(S)):
        raise InvariantViolation("similarity table has non-finite entries")
    return S


def sw_fill(
    model,
    m: int | None = None,
    n: int | None = None,
    g: float = DEFAULT_GAP,
    *,
    method: str = "wavefront",
    cell_budget: int | None = None,
) -> ScoreMatrix:
    """Fill the DP matrix for the first m book / n script paragraphs.

    `model` is a calibrated SimilarityModel or a precomputed m x n float
    table. Raises CapacityExceeded when m*n exceeds the cell budget
    (NARRALIGN_CELL_BUDGET overrides the default of 1e9).
    """
    if g >= 0:
        raise ValueError("gap penalty g must be negative")
    S = _score_table(model, m, n)
    m, n = S.shape
    budget = cell_budget if cell_budget is not None else cell_budget_from_env()
    if m * n > budget:
        raise CapacityExceeded(f"{m}x{n} = {m * n} cells exceeds budget {budget}")
    if method == "serial":
        H, move = _fill_serial(S, g)
    elif method == "wavefront":
        H, move = _fill_wavefront(S, g)
    else:
        raise ValueError(f"unknown fill method {method!r}")
    return ScoreMatrix(m=m, n=n, g=float(g), H=H, move=move, S=S)


def _fill_serial(S: np.ndarray, g: float) -> tuple[np.ndarray, np.ndarray]:
    m, n = S.shape
    H = np.zeros((m + 1, n + 1), dtype=np.float64)
    move = np.zeros((m + 1, n + 1), dtype=np.int8)
    for i in range(1, m + 1):
        row_s = S[i - 1]
        for j in range(1, n + 1):
            s = row_s[j - 1]
            cred = s if s > 0.0 else 0.0
            diag = H[i - 1, j - 1] + s
            up = H[i - 1, j] + g + cred
            left = H[i, j - 1] + g + cred
            best, mv = diag, DIAG
            if up > best:
                best, mv = up, UP
            if left > best:
                best, mv = left, LEFT
            if 0.0 > best:
                best, mv = 0.0, STOP
            H[i, j] = best
            move[i, j] = mv
    return H, move


def _fill_wavefront(S: np.ndarray, g: float) -> tuple[np.ndarray, np.ndarray]:
    """Anti-diagonal fill; every cell sees the same float ops as the serial
    version, so the result is bit-identical."""
    m, n = S.shape
    H = np.zeros((m + 1, n + 1), dtype=np.float64)
    move = np.zeros((m + 1, n + 1), dtype=np.int8)
    for k in range(2, m + n + 1):
        lo = max(1, k - n)
        hi = min(m, k - 1)
        if lo > hi:
            continue
        ii = np.arange(lo, hi + 1)
        jj = k - ii
        s = S[ii - 1, jj - 1]
        cred = np.maximum(0.0, s)
        diag = H[ii - 1, jj - 1] + s
        up = H[ii - 1, jj] + g + cred
        left = H[ii, jj - 1] + g + cred
        stacked = np.stack((diag, up, left, np.zeros_like(s)))
        H[ii, jj] = stacked.max(axis=0)
        move[ii, jj] = _MOVE_OF_ARGMAX[np.argmax(stacked, axis=0)]
    return H, move


def null_score_ceiling(
    model,
    m: int | None = None,
    n: int | None = None,
    g: float = DEFAULT_GAP,
    seed: int = 0,
    *,
    cell_budget: int | None = None,
) -> float:
    """Noise floor for extraction: the best local score on a seeded random
    shuffle of the similarity table.

    Shuffling all cells destroys every monotone correspondence while keeping
    the marginal score distribution, so the returned value is what chance
    alone achieves at this corpus size (it grows ~log(mn), in the spirit of
    alignment significance statistics). Matches below it are noise.
    """
    S = _score_table(model, m, n)
    rng = np.random.default_rng(seed)
    flat = S.ravel().copy()
    rng.shuffle(flat)
    return float(
        sw_fill(flat.reshape(S.shape), g=g, cell_budget=cell_budget).H.max()
    )


def verify_recurrence(sm: ScoreMatrix) -> None:
    """Recompute every cell from its stored neighbors; raise on any
    difference (the comparison is exact, not approximate)."""
    H, move, S, g = sm.H, sm.move, sm.S, sm.g
    if np.any(H[0, :] != 0.0) or np.any(H[:, 0] != 0.0):
        raise InvariantViolation("DP boundary row/column is not zero")
    for i in range(1, sm.m + 1):
        for j in range(1, sm.n + 1):
            s = S[i - 1, j - 1]
            cred = s if s > 0.0 else 0.0
            cands = (
                H[i - 1, j - 1] + s,
                H[i - 1, j] + g + cred,
                H[i, j - 1] + g + cred,
                0.0,
            )
            best = max(cands)
            if H[i, j] != best:
                raise InvariantViolation(f"H[{i},{j}]={H[i, j]} != recomputed {best}")
            expected_move = (DIAG, UP, LEFT, STOP)[cands.index(best)]
            if move[i, j] != expected_move:
                raise InvariantViolation(f"move[{i},{j}] breaks the tie order")
            if H[i, j] < 0.0:
                raise InvariantViolation(f"H[{i},{j}] is negative")


def extract_matches(
    sm: ScoreMatrix,
    min_score: float = 0.0,
    gap_pairs: str = "both",
    pair_floor: float | None = None,
) -> AlignmentResult:
    """Greedy extraction of independent local matches.

    Cells with H > min_score are visited in descending score order (ties by
    smaller i then j). Each unconsumed cell seeds a traceback that follows
    the stored moves until a zero cell or an already-consumed cell; all
    visited cells are consumed. A traceback with at least one diagonal step
    becomes a LocalMatch.

    A match is scored by its own evidence: the highest H on its path minus
    the H where the traceback stopped. For a full traceback (reaching a zero
    cell) that is exactly the classic local-alignment score; for a traceback
    truncated at a consumed cell it removes the score inherited from the
    previously-extracted match, so riders on a strong alignment's downstream
    plume cannot masquerade as strong matches. Matches must clear min_score
    on this own-evidence scale.

    `gap_pairs` controls which gap-step cells may be reported as aligned
    pairs alongside diagonal steps: "both" (default; up and left steps, so
    one paragraph can align with several counterparts), "script" (left steps
    only), or "none" (diagonal pairs only).

    With the default `pair_floor=None`, diagonal cells always become pairs
    and gap cells need S > 0. Passing a float requires S > pair_floor from
    every pair, diagonal or gap; feed it a corpus-scale significance level
    (see null_score_ceiling for the matching match-level idea) to keep
    chance-level cells on the traceback from being reported as alignments.
    """
    if gap_pairs not in GAP_PAIR_MODES:
        raise ValueError(f"gap_pairs must be one of {GAP_PAIR_MODES}")
    H, move, S = sm.H, sm.move, sm.S
    diag_floor = -np.inf if pair_floor is None else float(pair_floor)
    gap_floor = 0.0 if pair_floor is None else float(pair_floor)
    ii, jj = np.nonzero(H > min_score)
    order = np.lexsort((jj, ii, -H[ii, jj]))
    consumed = np.zeros_like(H, dtype=bool)

    matches: list[LocalMatch] = []
    all_pairs: set[tuple[int, int]] = set()
    for idx in order:
        i, j = int(ii[idx]), int(jj[idx])
        if consumed[i, j]:
            continue
        path: list[tuple[int, int]] = []
        base = 0.0
        while H[i, j] > 0.0:
            if consumed[i, j]:
                base = float(H[i, j])  # truncate at previously-selected cells
                break
            consumed[i, j] = True
            path.append((i, j))
            mv = move[i, j]
            if mv == DIAG:
                i, j = i - 1, j - 1
            elif mv == UP:
                i -= 1
            elif mv == LEFT:
                j -= 1
            else:  # pragma: no cover - H > 0 always records a real move
                break
        if not path:
            continue
        score = float(max(H[pi, pj] for pi, pj in path)) - base
        if score <= min_score:
            continue
        pairs: list[tuple[int, int]] = []
        has_diag = False
        for pi, pj in reversed(path):
            mv = move[pi, pj]
            s = S[pi - 1, pj - 1]
            if mv == DIAG:
                has_diag = True
                if s > diag_floor:
                    pairs.append((pi - 1, pj - 1))
            elif s > gap_floor and (
                (mv == LEFT and gap_pairs in ("script", "both"))
                or (mv == UP and gap_pairs == "both")
            ):
                pairs.append((pi - 1, pj - 1))
        if not has_diag or not pairs:
            continue
        matches.append(LocalMatch(pairs=tuple(pairs), score=score))
        all_pairs.update(pairs)
    matches.sort(key=lambda m: (-m.score, m.pairs))

    params = {
        "g": sm.g,
        "min_score": float(min_score),
        "gap_pairs": gap_pairs,
        "pair_floor": None if pair_floor is None else float(pair_floor),
    }
    return AlignmentResult(
        matches=tuple(matches), pair_set=frozenset(all_pairs), params=params
    )


def greedy_baseline(
    model, m: int | None = None, n: int | None = None, min_sim: float = 0.0
) -> AlignmentResult:
    """1-1 greedy matching baseline: accept pairs in decreasing similarity
    order while both paragraphs are unmatched and the score clears min_sim
    (default: any positive similarity)."""
    S = _score_table(model, m, n)
    m, n = S.shape
    flat_i, flat_j = (a.ravel() for a in np.indices(S.shape))
    flat_s = S.ravel()
    order = np.lexsort((flat_j, flat_i, -flat_s))
    used_book = np.zeros(m, dtype=bool)
    used_script = np.zeros(n, dtype=bool)
    matches = []
    for idx in order:
        s = float(flat_s[idx])
        if s <= min_sim:
            break
        i, j = int(flat_i[idx]), int(flat_j[idx])
        if used_book[i] or used_script[j]:
            continue
        used_book[i] = True
        used_script[j] = True
        matches.append(LocalMatch(pairs=((i, j),), score=s))
    return AlignmentResult(
        matches=tuple(matches),
        pair_set=frozenset(p for match in matches for p in match.pairs),
        params={"method": "greedy"},
    )


def length_baseline(book_chapters: Sequence[float], scene_count: int) -> dict[int, int]:
    """Assign scenes to chapters sequentially, proportionally to chapter
    word counts, using largest-remainder rounding."""
    if scene_count < 0:
        raise ValueError("scene_count must be non-negative")
    if not book_chapters:
        raise ValueError("need at least one chapter")
    weights = [float(w) for w in book_chapters]
    total = sum(weights)
    if total <= 0:
        quotas = [scene_count / len(weights)] * len(weights)
    else:
        quotas = [scene_count * w / total for w in weights]
    counts = [int(q) for q in quotas]
    remainder = scene_count - sum(counts)
    by_fraction = sorted(
        range(len(weights)), key=lambda c: (-(quotas[c] - counts[c]), c)
    )
    for c in by_fraction[:remainder]:
        counts[c] += 1
    assignment: dict[int, int] = {}
    scene = 0
    for chapter, count in enumerate(counts):
        for _ in range(count):
            assignment[scene] = chapter
            scene += 1
    return assignment


def alignment_to_dict(result: AlignmentResult) -> dict:
    """JSON-ready form: matches in descending score order, pairs as lists."""
    return {
        "params": dict(sorted(result.params.items())),
        "matches": [
            {"score": match.score, "pairs": [list(p) for p in match.pairs]}
            for match in result.matches
        ],
    }


def alignment_from_dict(obj: Mapping) -> AlignmentResult:
    matches = tuple(
        LocalMatch(
            pairs=tuple((int(b), int(s)) for b, s in entry["pairs"]),
            score=float(entry["score"]),
        )
        for entry in obj["matches"]
    )
    return AlignmentResult(
        matches=matches,
        pair_set=frozenset(p for match in matches for p in match.pairs),
        params=dict(obj.get("params", {})),
    )


def best_script_pair(result: AlignmentResult) -> dict[int, tuple[int, float]]:
    """For each aligned book paragraph: (script index, match score) of its
    highest-scoring pair; ties resolved toward the smaller script index."""
    best: dict[int, tuple[int, float]] = {}
    for match in result.matches:
        for b, s in match.pairs:
            cur = best.get(b)
            if cur is None or match.score > cur[1] or (match.score == cur[1] and s < cur[0]):
                best[b] = (s, match.score)
    return best
