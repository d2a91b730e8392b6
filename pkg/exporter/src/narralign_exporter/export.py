"""Export paragraph embeddings to the binary matrix format the alignment
engine consumes: one JSON header line {"doc_id", "dim", "count", "dtype":
"f32le"} followed by count*dim little-endian float32 values, row-major, row
i corresponding to paragraph index i.

Model ids starting with "hash" (e.g. "hash", "hash:128") select a built-in
deterministic feature-hashing encoder that needs no downloads; anything else
is loaded through sentence-transformers. Inference is the only place any
model code runs; the alignment engine itself never sees it.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

DEFAULT_MODEL = "msmarco-distilbert-base-v3"
HEADER_KEYS = ("doc_id", "dim", "count", "dtype")


class ExporterError(Exception):
    pass


class ModelUnavailable(ExporterError):
    """The requested embedding model cannot be loaded."""


class DimensionMismatch(ExporterError):
    """An existing output file disagrees with the model's dimension."""


@dataclass
class ExportJob:
    input_path: str
    output_path: str
    model: str = DEFAULT_MODEL
    batch_size: int = 32
    normalize: bool = True


def read_paragraphs(path: str) -> tuple[str, list[str]]:
    """Read a paragraph JSONL file; returns (doc_id, texts in index order).

    Validates the contract the matrix relies on: contiguous 0-based indices.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ExporterError(f"{path} is empty")
    header = json.loads(lines[0])
    if "doc_id" not in header:
        raise ExporterError(f"{path}: first line is not a document header")
    texts: list[str] = []
    for line_no, line in enumerate(lines[1:], start=2):
        record = json.loads(line)
        if "index" not in record or "text" not in record:
            raise ExporterError(f"{path}:{line_no}: record missing index/text")
        if record["index"] != len(texts):
            raise ExporterError(
                f"{path}:{line_no}: index {record['index']} is not contiguous"
            )
        texts.append(record["text"])
    if not texts:
        raise ExporterError(f"{path} has no paragraph records")
    return header["doc_id"], texts


class HashingEncoder:
    """Deterministic offline encoder: signed token-count feature hashing.

    Not semantically meaningful, but stable across runs and machines, which
    is what format/round-trip testing needs.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ExporterError(f"hash encoder dim must be positive, got {dim}")
        self.dim = dim

    def encode(self, texts: list[str], batch_size: int) -> np.ndarray:
        rows = np.zeros((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            for token in text.lower().split():
                digest = hashlib.md5(token.encode("utf-8")).digest()
                value = int.from_bytes(digest[:8], "little")
                sign = 1.0 if digest[8] & 1 else -1.0
                rows[i, value % self.dim] += sign
        return rows


class SentenceTransformerEncoder:
    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ModelUnavailable(
                "sentence-transformers is not installed; use a 'hash' model or "
                "install the 'st' extra"
            ) from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise ModelUnavailable(f"cannot load model {model_id!r}: {exc}") from exc
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str], batch_size: int) -> np.ndarray:
        rows = self._model.encode(
            texts,
            batch_size=batch_size,
            convert_to_numpy=True,
            normalize_embeddings=False,
            show_progress_bar=False,
        )
        return np.asarray(rows, dtype=np.float32)


def make_encoder(model_id: str):
    if model_id == "hash":
        return HashingEncoder()
    if model_id.startswith("hash:"):
        return HashingEncoder(dim=int(model_id.split(":", 1)[1]))
    return SentenceTransformerEncoder(model_id)


def _read_header(path: str) -> dict:
    with open(path, "rb") as fh:
        header_line = fh.readline()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ExporterError(f"{path}: bad matrix header: {exc}") from exc
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise ExporterError(f"{path}: matrix header missing {missing}")
    return header


def export(job: ExportJob) -> dict:
    """Run the job and return the verification report of the written file.

    Rows are written in paragraph-index order, L2-normalized when the job
    says so (zero rows stay zero), in batches, to a temporary file that is
    atomically renamed at the end. If the output already exists with a
    different dimension than the model produces, DimensionMismatch is raised
    rather than silently mixing models.
    """
    doc_id, texts = read_paragraphs(job.input_path)
    encoder = make_encoder(job.model)
    if os.path.exists(job.output_path):
        existing = _read_header(job.output_path)
        if int(existing["dim"]) != encoder.dim:
            raise DimensionMismatch(
                f"{job.output_path} has dim {existing['dim']}, model produces {encoder.dim}"
            )

    chunks = []
    for start in range(0, len(texts), job.batch_size):
        chunks.append(encoder.encode(texts[start : start + job.batch_size], job.batch_size))
    rows = np.vstack(chunks).astype(np.float32)
    if rows.shape != (len(texts), encoder.dim):
        raise ExporterError(
            f"encoder returned shape {rows.shape}, expected {(len(texts), encoder.dim)}"
        )
    if job.normalize:
        norms = np.linalg.norm(rows.astype(np.float64), axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        rows = (rows / norms).astype(np.float32)

    header = {
        "doc_id": doc_id,
        "dim": encoder.dim,
        "count": len(texts),
        "dtype": "f32le",
    }
    tmp_path = job.output_path + ".tmp"
    with open(tmp_path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())
    os.replace(tmp_path, job.output_path)

    result = verify(job.output_path, job.input_path)
    if not result["ok"]:
        raise ExporterError(f"export self-check failed: {result['problems']}")
    return result


def verify(matrix_path: str, jsonl_path: str) -> dict:
    """Check a matrix file against its source JSONL.

    Returns {"ok": bool, "problems": [...], "count": int, "dim": int,
    "flagged_rows": [...]} where flagged rows carry non-finite values.
    Truncated or padded payloads and count mismatches are reported, not
    raised.
    """
    problems: list[str] = []
    header = _read_header(matrix_path)
    dim, count = int(header["dim"]), int(header["count"])
    if header["dtype"] != "f32le":
        problems.append(f"unsupported dtype {header['dtype']!r}")

    with open(matrix_path, "rb") as fh:
        header_len = len(fh.readline())
    payload_size = os.path.getsize(matrix_path) - header_len
    expected = 4 * dim * count
    if payload_size != expected:
        problems.append(f"payload is {payload_size} bytes, expected {expected}")

    flagged: list[int] = []
    if not problems:
        with open(matrix_path, "rb") as fh:
            fh.readline()
            rows = np.frombuffer(fh.read(), dtype="<f4").reshape(count, dim)
        finite = np.isfinite(rows).all(axis=1)
        flagged = [int(i) for i in np.nonzero(~finite)[0]]
        if flagged:
            problems.append(f"rows with non-finite values: {flagged[:10]}")

    _, texts = read_paragraphs(jsonl_path)
    if count != len(texts):
        problems.append(f"matrix count {count} != paragraph count {len(texts)}")

    return {
        "ok": not problems,
        "problems": problems,
        "count": count,
        "dim": dim,
        "flagged_rows": flagged,
    }
