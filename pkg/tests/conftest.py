"""Shared builders for synthetic books, scripts, and embeddings."""

from __future__ import annotations

import numpy as np

from narralign.corpus import Document, Paragraph, save_document, tokenize
from narralign.similarity import EmbeddingMatrix, write_embeddings

SCRIPT_FIXTURE = """\
THE MISSED TRAIN
An adaptation.

INT. KING'S CROSS - DAY

Harry and Ron push their trolleys toward the barrier.

RON
We better hurry.

Harry nods, leans into his trolley and hits the barrier.

EXT. STATION CAR PARK - NIGHT

CUT TO:

The enchanted car waits in the shadows.

HARRY
Maybe we should go wait by the car.

Ron grins and grabs his trunk.
"""


def make_book(
    chapter_sizes: list[int],
    dialog_every: int = 0,
    doc_id: str = "book",
    characters: dict[str, str] | None = None,
    vocab_of=None,
) -> Document:
    """Book with the given chapter sizes; every `dialog_every`-th paragraph
    is dialog. `vocab_of(index)` supplies extra per-paragraph words."""
    paragraphs = []
    index = 0
    for chapter, size in enumerate(chapter_sizes):
        for k in range(size):
            words = [f"word{index}", f"chapter{chapter}", "story", f"common{index % 5}"]
            if vocab_of is not None:
                words.extend(vocab_of(index))
            dialog = dialog_every > 0 and index % dialog_every == 0
            text = " ".join(words)
            if dialog:
                text = f'"{text}," said Someone.'
            paragraphs.append(
                Paragraph(
                    index=index, text=text, chapter_id=chapter, is_dialog=dialog
                )
            )
            index += 1
    return Document(
        doc_id=doc_id,
        kind="book",
        paragraphs=tuple(paragraphs),
        characters=characters or {},
    )


def make_script(scene_sizes: list[int], doc_id: str = "script", text_of=None) -> Document:
    paragraphs = []
    index = 0
    for scene, size in enumerate(scene_sizes):
        for _ in range(size):
            text = (
                text_of(index)
                if text_of
                else f"scene{scene} beat{index} action common{index % 3}"
            )
            paragraphs.append(Paragraph(index=index, text=text, scene_id=scene))
            index += 1
    return Document(doc_id=doc_id, kind="script", paragraphs=tuple(paragraphs))


def unit_vectors(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    vectors = rng.standard_normal((count, dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors.astype(np.float32)


def perturb(rows: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    noisy = rows.astype(np.float64) + sigma * rng.standard_normal(rows.shape)
    noisy /= np.linalg.norm(noisy, axis=1, keepdims=True)
    return noisy.astype(np.float32)


def planted_pair(
    book_size: int = 400,
    planted: int = 200,
    distractors: int = 100,
    dim: int = 50,
    sigma: float = 0.1,
    seed: int = 7,
):
    """A synthetic book/script pair with known ground truth.

    Mirrors an adaptation's shape: the book alternates retained and dropped
    runs (5-12 paragraphs each) until `planted` paragraphs are retained; the
    script carries the retained paragraphs in book order (noised and
    renormalized) with distractor runs of 2-6 unrelated paragraphs
    interleaved between retained runs.

    Returns (book_doc, script_doc, book_emb, script_emb,
    planted_book_indices, script_truth) where script_truth[j] is the source
    book index or None for distractors.
    """
    rng = np.random.default_rng(seed)
    book_vecs = unit_vectors(book_size, dim, rng)

    chosen: list[int] = []
    cursor = 0
    keep = bool(rng.integers(0, 2))
    while len(chosen) < planted and cursor < book_size:
        run = int(rng.integers(5, 13))
        if keep:
            run = min(run, planted - len(chosen), book_size - cursor)
            chosen.extend(range(cursor, cursor + run))
        cursor += run
        keep = not keep
    if len(chosen) < planted:  # top up from the unchosen tail
        unchosen = sorted(set(range(book_size)) - set(chosen))
        chosen.extend(unchosen[len(chosen) - planted :])
    chosen = sorted(chosen[:planted])

    kept_runs: list[list[int]] = []
    for b in chosen:
        if kept_runs and b == kept_runs[-1][-1] + 1:
            kept_runs[-1].append(b)
        else:
            kept_runs.append([b])

    noisy = {b: row for b, row in zip(chosen, perturb(book_vecs[chosen], sigma, rng))}
    remaining = distractors
    script_rows: list[np.ndarray] = []
    truth: list[int | None] = []
    for k, run in enumerate(kept_runs):
        for b in run:
            script_rows.append(noisy[b])
            truth.append(b)
        runs_left = len(kept_runs) - k - 1
        if remaining > 0 and runs_left > 0:
            insert = min(int(rng.integers(2, 7)), remaining - runs_left + 1)
            insert = max(insert, 0)
        elif runs_left == 0:
            insert = remaining
        else:
            insert = 0
        for _ in range(insert):
            script_rows.append(unit_vectors(1, dim, rng)[0])
            truth.append(None)
        remaining -= insert

    script_matrix = np.asarray(script_rows, dtype=np.float32)
    book_doc = make_book([book_size])
    script_doc = make_script([len(script_rows)])
    book_emb = EmbeddingMatrix(doc_id="book", dim=dim, vectors=book_vecs)
    script_emb = EmbeddingMatrix(doc_id="script", dim=dim, vectors=script_matrix)
    return book_doc, script_doc, book_emb, script_emb, set(chosen), truth


def cli_workspace(tmp_path, seed: int = 13):
    """Files for CLI tests: a 24-paragraph book, a 12-paragraph script whose
    even paragraphs copy book paragraphs 0,2,4,... (texts and embeddings),
    plus embedding and word-vector files covering both documents.

    Returns (paths dict, planted book indices).
    """
    rng = np.random.default_rng(seed)
    dim = 16
    book = make_book(
        [8, 8, 8],
        dialog_every=3,
        characters={"ALICE": "female", "BOB": "male"},
        vocab_of=lambda i: [f"topic{i // 8}a", f"topic{i // 8}b"],
    )
    planted = list(range(0, 24, 2))[:12]
    book_vecs = unit_vectors(len(book.paragraphs), dim, rng)
    script_rows = np.empty((12, dim), dtype=np.float32)
    script_pars = []
    for j in range(12):
        source = planted[j]
        text = book.paragraphs[source].text
        script_rows[j] = perturb(book_vecs[source : source + 1], 0.05, rng)[0]
        script_pars.append(Paragraph(index=j, text=text, scene_id=j // 3))
    script = Document(doc_id="script", kind="script", paragraphs=tuple(script_pars))

    vocab = set()
    for doc in (book, script):
        for par in doc.paragraphs:
            vocab.update(tokenize(par.text))
    word_rows = unit_vectors(len(vocab), 8, rng)
    words_path = tmp_path / "words.txt"
    with open(words_path, "w", encoding="utf-8") as fh:
        for word, row in zip(sorted(vocab), word_rows):
            fh.write(word + " " + " ".join(repr(float(v)) for v in row) + "\n")

    paths = {
        "book": tmp_path / "book.jsonl",
        "script": tmp_path / "script.jsonl",
        "book_emb": tmp_path / "book.f32",
        "script_emb": tmp_path / "script.f32",
        "words": words_path,
    }
    save_document(book, str(paths["book"]))
    save_document(script, str(paths["script"]))
    write_embeddings(EmbeddingMatrix("book", dim, book_vecs), str(paths["book_emb"]))
    write_embeddings(EmbeddingMatrix("script", dim, script_rows), str(paths["script_emb"]))
    return {k: str(v) for k, v in paths.items()}, set(planted)
