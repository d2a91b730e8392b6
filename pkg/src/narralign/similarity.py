"""Calibrated pairwise similarity between book and script paragraphs.

Five interchangeable raw metrics (embedding cosine, Jaccard, TF-IDF, mean
word vector, chunked word overlap) feed one calibration scheme: the raw
score of a pair is converted to a z-score against the distribution of
random cross-document pairs, then squashed so that pairs below the z
threshold come out negative:

    S = 2 * sigmoid(Z - th_s) - 1

With th_s > 0 the expected score of two unrelated paragraphs is negative,
which is what makes the local alignment DP well behaved.

Raw metrics and the z/sigmoid transform are computed in float64. Calibration
uses a seeded generator and the population standard deviation, so repeat
runs are bit-identical.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .corpus import Document, tokenize
from .errors import DegenerateDistribution, InputError, InvariantViolation

METRICS = ("embedding_cosine", "jaccard", "tfidf", "glove_mean", "hamming")

# score_from_z never returns exactly +/-1 even when the sigmoid saturates
_OPEN_EPS = 2.0**-52


@dataclass(frozen=True)
class Calibration:
    mu: float
    sigma: float
    sample_count: int
    seed: int


@dataclass
class EmbeddingMatrix:
    """Dense per-paragraph vectors, row i <-> paragraph index i."""

    doc_id: str
    dim: int
    vectors: np.ndarray  # (count, dim) float32

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise InvariantViolation("embedding matrix shape does not match dim")
        if not np.all(np.isfinite(self.vectors)):
            raise InvariantViolation("embedding matrix has non-finite entries")

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])

    def zero_rows(self) -> set[int]:
        norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
        return {int(i) for i in np.nonzero(norms == 0.0)[0]}


def write_embeddings(matrix: EmbeddingMatrix, path: str) -> None:
    """Write the binary embedding format: JSON header line, then raw
    little-endian float32 rows with no padding."""
    header = {
        "doc_id": matrix.doc_id,
        "dim": matrix.dim,
        "count": matrix.count,
        "dtype": "f32le",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(matrix.vectors, dtype="<f4").tobytes())


def read_embeddings(path: str) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: bad embedding header: {exc}") from exc
    for key in ("doc_id", "dim", "count", "dtype"):
        if key not in header:
            raise InputError(f"{path}: embedding header missing {key!r}")
    if header["dtype"] != "f32le":
        raise InputError(f"{path}: unsupported dtype {header['dtype']!r}")
    dim, count = int(header["dim"]), int(header["count"])
    expected = 4 * dim * count
    if len(payload) != expected:
        raise InputError(
            f"{path}: embedding payload is {len(payload)} bytes, expected {expected}"
        )
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    return EmbeddingMatrix(doc_id=header["doc_id"], dim=dim, vectors=vectors.copy())


def load_word_vectors(path: str) -> dict[str, np.ndarray]:
    """Load a text word-vector table: one "word v1 v2 ... vD" line per word."""
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float32)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise InputError(f"{path}:{line_no}: inconsistent vector width")
            table[parts[0]] = vec
    if not table:
        raise InputError(f"{path}: no word vectors found")
    return table


def _sigmoid(t: float) -> float:
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def score_from_z(z, th_s: float = 0.6):
    """Map a z-score (scalar or array) to a similarity in the open (-1, 1).

    Sign equals sign(z - th_s); saturation is clamped one ulp inside +/-1.
    """
    if isinstance(z, np.ndarray):
        t = z.astype(np.float64) - th_s
        sig = np.empty_like(t)
        pos = t >= 0.0
        sig[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
        e = np.exp(t[~pos])
        sig[~pos] = e / (1.0 + e)
        return np.clip(2.0 * sig - 1.0, -1.0 + _OPEN_EPS, 1.0 - _OPEN_EPS)
    s = 2.0 * _sigmoid(float(z) - th_s) - 1.0
    return min(max(s, -1.0 + _OPEN_EPS), 1.0 - _OPEN_EPS)


def pair_significance_floor(m: int, n: int, th_s: float = 0.6) -> float:
    """Similarity a lone pair must beat to mean anything at corpus scale.

    Maps the z quantile that random pairs exceed about once per m*n grid
    (Sidak-style, treating the calibration distribution's tail as normal)
    through the scoring sigmoid. Pairs below this are what chance produces
    somewhere in a grid this large.
    """
    cells = m * n
    if cells < 2:
        return 0.0
    z_star = NormalDist().inv_cdf(1.0 - 1.0 / cells)
    return float(score_from_z(z_star, th_s))


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine in float64; either vector with zero norm gives 0.0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def raw_jaccard(a: str, b: str) -> float:
    """Multiset Jaccard over lowercase word tokens; empty union gives 0."""
    ca, cb = Counter(tokenize(a)), Counter(tokenize(b))
    inter = sum((ca & cb).values())
    union = sum((ca | cb).values())
    return inter / union if union else 0.0


def raw_hamming(a: str, b: str) -> float:
    """Chunked word-overlap similarity.

    The longer text (n words) is cut into m chunks, one per word of the
    shorter text; the score is the fraction of chunks containing their
    counterpart word. Roles are assigned by length, so argument order does
    not matter.
    """
    ta, tb = tokenize(a), tokenize(b)
    if not ta or not tb:
        return 0.0
    shorter, longer = (ta, tb) if len(ta) <= len(tb) else (tb, ta)
    m, n = len(shorter), len(longer)
    misses = 0
    for i, word in enumerate(shorter):
        chunk = longer[(i * n) // m : ((i + 1) * n) // m]
        if word not in chunk:
            misses += 1
    return 1.0 - misses / m


class _JaccardScorer:
    def __init__(self, book: Document, script: Document):
        self._book = [Counter(tokenize(p.text)) for p in book.paragraphs]
        self._script = [Counter(tokenize(p.text)) for p in script.paragraphs]

    def raw(self, x: int, y: int) -> float:
        ca, cb = self._book[x], self._script[y]
        inter = sum((ca & cb).values())
        union = sum((ca | cb).values())
        return inter / union if union else 0.0


class _HammingScorer:
    def __init__(self, book: Document, script: Document):
        self._book = [tokenize(p.text) for p in book.paragraphs]
        self._script = [tokenize(p.text) for p in script.paragraphs]

    def raw(self, x: int, y: int) -> float:
        ta, tb = self._book[x], self._script[y]
        if not ta or not tb:
            return 0.0
        shorter, longer = (ta, tb) if len(ta) <= len(tb) else (tb, ta)
        m, n = len(shorter), len(longer)
        misses = sum(
            1
            for i, word in enumerate(shorter)
            if word not in longer[(i * n) // m : ((i + 1) * n) // m]
        )
        return 1.0 - misses / m


class _TfidfScorer:
    """TF-IDF cosine over the concatenated book+script paragraph corpus.

    idf = ln((1+N)/(1+df)) + 1 with N the total paragraph count; tf is the
    raw in-paragraph count.
    """

    def __init__(self, book: Document, script: Document):
        texts = [p.text for p in book.paragraphs] + [p.text for p in script.paragraphs]
        token_lists = [tokenize(t) for t in texts]
        df = Counter()
        for tokens in token_lists:
            df.update(set(tokens))
        n_docs = len(texts)
        idf = {t: math.log((1 + n_docs) / (1 + d)) + 1.0 for t, d in df.items()}
        self._vecs = []
        self._norms = []
        for tokens in token_lists:
            vec = {t: c * idf[t] for t, c in Counter(tokens).items()}
            self._vecs.append(vec)
            self._norms.append(math.sqrt(sum(w * w for w in vec.values())))
        self._m = len(book.paragraphs)

    def raw(self, x: int, y: int) -> float:
        va, vb = self._vecs[x], self._vecs[self._m + y]
        na, nb = self._norms[x], self._norms[self._m + y]
        if na == 0.0 or nb == 0.0:
            return 0.0
        if len(vb) < len(va):
            va, vb = vb, va
        dot = sum(w * vb[t] for t, w in va.items() if t in vb)
        return dot / (na * nb)


class _GloveMeanScorer:
    def __init__(self, book: Document, script: Document, table: dict[str, np.ndarray]):
        self._book = [self._mean(p.text, table) for p in book.paragraphs]
        self._script = [self._mean(p.text, table) for p in script.paragraphs]

    @staticmethod
    def _mean(text: str, table: dict[str, np.ndarray]) -> np.ndarray | None:
        vecs = [table[t] for t in tokenize(text) if t in table]
        if not vecs:
            return None
        return np.mean(np.asarray(vecs, dtype=np.float64), axis=0)

    def raw(self, x: int, y: int) -> float:
        va, vb = self._book[x], self._script[y]
        if va is None or vb is None:
            return 0.0
        return cosine(va, vb)


class _EmbeddingScorer:
    def __init__(self, book_emb: EmbeddingMatrix, script_emb: EmbeddingMatrix):
        self._book = book_emb.vectors.astype(np.float64)
        self._script = script_emb.vectors.astype(np.float64)
        self._book_norms = np.linalg.norm(self._book, axis=1)
        self._script_norms = np.linalg.norm(self._script, axis=1)

    def raw(self, x: int, y: int) -> float:
        na, nb = self._book_norms[x], self._script_norms[y]
        if na == 0.0 or nb == 0.0:
            return 0.0
        return float(np.dot(self._book[x], self._script[y]) / (na * nb))


def raw_embedding_cosine(matrix_a: EmbeddingMatrix, a: int, matrix_b: EmbeddingMatrix, b: int) -> float:
    """Cosine between row a of one matrix and row b of another."""
    return cosine(matrix_a.vectors[a], matrix_b.vectors[b])


class SimilarityModel:
    """A calibrated pairwise scorer S(x, y) over paragraph indices.

    Immutable after calibration; `score` and `score_matrix` are pure.
    """

    def __init__(
        self,
        metric: str,
        book: Document,
        script: Document,
        *,
        book_embeddings: EmbeddingMatrix | None = None,
        script_embeddings: EmbeddingMatrix | None = None,
        word_vectors: dict[str, np.ndarray] | None = None,
        th_s: float = 0.6,
    ):
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
        if not math.isfinite(th_s):
            raise ValueError("th_s must be finite")
        self.metric = metric
        self.th_s = th_s
        self.m = len(book.paragraphs)
        self.n = len(script.paragraphs)
        self.calibration: Calibration | None = None
        self._usable_book = list(range(self.m))
        self._usable_script = list(range(self.n))

        if metric == "embedding_cosine":
            if book_embeddings is None or script_embeddings is None:
                raise InputError("embedding_cosine requires both embedding matrices")
            for emb, doc in ((book_embeddings, book), (script_embeddings, script)):
                if emb.count != len(doc.paragraphs):
                    raise InvariantViolation(
                        f"{emb.doc_id}: {emb.count} embedding rows for "
                        f"{len(doc.paragraphs)} paragraphs"
                    )
            self._usable_book = [
                i for i in self._usable_book if i not in book_embeddings.zero_rows()
            ]
            self._usable_script = [
                j for j in self._usable_script if j not in script_embeddings.zero_rows()
            ]
            self._scorer = _EmbeddingScorer(book_embeddings, script_embeddings)
        elif metric == "jaccard":
            self._scorer = _JaccardScorer(book, script)
        elif metric == "tfidf":
            self._scorer = _TfidfScorer(book, script)
        elif metric == "glove_mean":
            if word_vectors is None:
                raise InputError("glove_mean requires a word-vector table")
            self._scorer = _GloveMeanScorer(book, script, word_vectors)
        else:
            self._scorer = _HammingScorer(book, script)

    def raw(self, x: int, y: int) -> float:
        """Uncalibrated metric value for book paragraph x, script paragraph y."""
        return self._scorer.raw(x, y)

    def score(self, x: int, y: int) -> float:
        """Calibrated similarity in (-1, 1)."""
        cal = self._require_calibration()
        z = (self.raw(x, y) - cal.mu) / cal.sigma
        return float(score_from_z(z, self.th_s))

    def score_matrix(self) -> np.ndarray:
        """The full m x n matrix of calibrated scores (float64).

        Cell [i, j] is bit-identical to score(i, j).
        """
        cal = self._require_calibration()
        out = np.empty((self.m, self.n), dtype=np.float64)
        for i in range(self.m):
            raw_fn = self._scorer.raw
            for j in range(self.n):
                z = (raw_fn(i, j) - cal.mu) / cal.sigma
                out[i, j] = score_from_z(z, self.th_s)
        return out

    def _require_calibration(self) -> Calibration:
        if self.calibration is None:
            raise InvariantViolation("similarity model is not calibrated")
        return self.calibration


def summarize_scores(values) -> tuple[float, float]:
    """Sample mean and population standard deviation of raw scores."""
    arr = np.asarray(values, dtype=np.float64)
    mu = float(np.mean(arr))
    sigma = float(np.std(arr))
    if sigma < 1e-9:
        raise DegenerateDistribution(
            f"calibration sample has sigma={sigma}; scores are (nearly) constant"
        )
    return mu, sigma


def calibrate(model: SimilarityModel, sample_count: int = 10_000, seed: int = 0) -> Calibration:
    """Estimate mu/sigma of the raw metric over seeded random cross pairs.

    Samples uniform (book, script) index pairs from the usable paragraphs
    (zero-norm embedding rows are excluded). Stores the result on the model
    and returns it.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be >= 100")
    if len(model._usable_book) < 2 or len(model._usable_script) < 2:
        raise InputError("calibration needs at least 2 usable paragraphs per document")
    rng = np.random.default_rng(seed)
    xs = rng.integers(0, len(model._usable_book), size=sample_count)
    ys = rng.integers(0, len(model._usable_script), size=sample_count)
    values = [
        model.raw(model._usable_book[int(x)], model._usable_script[int(y)])
        for x, y in zip(xs, ys)
    ]
    mu, sigma = summarize_scores(values)
    model.calibration = Calibration(mu=mu, sigma=sigma, sample_count=sample_count, seed=seed)
    return model.calibration


def build_model(
    metric: str,
    book: Document,
    script: Document,
    *,
    book_embeddings: EmbeddingMatrix | None = None,
    script_embeddings: EmbeddingMatrix | None = None,
    word_vectors: dict[str, np.ndarray] | None = None,
    th_s: float = 0.6,
    sample_count: int = 10_000,
    seed: int = 0,
) -> SimilarityModel:
    """Construct and calibrate a SimilarityModel in one step."""
    model = SimilarityModel(
        metric,
        book,
        script,
        book_embeddings=book_embeddings,
        script_embeddings=script_embeddings,
        word_vectors=word_vectors,
        th_s=th_s,
    )
    calibrate(model, sample_count=sample_count, seed=seed)
    return model
