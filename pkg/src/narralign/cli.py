"""Command-line pipeline: parse -> segment -> align -> evaluate / analyze ->
report.

Each stage reads and writes plain files (paragraph JSONL, alignment JSON,
CSV) so stages are independently testable and cacheable. Every output embeds
the resolved run configuration and SHA-256 hashes of its inputs; identical
config and inputs produce byte-identical outputs.

Exit codes: 0 success, 2 input error, 3 invariant violation. Errors are
printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass

from . import align as al
from . import analysis as an
from . import corpus, similarity
from .errors import (
    InputError,
    InvariantViolation,
    MissingGenderData,
    MissingInput,
    NarralignError,
    UndefinedRatio,
)


@dataclass
class RunConfig:
    """Pipeline parameters; defaults follow the alignment defaults g = -0.7
    and th_s = +0.6.

    min_score and pair_floor default to "auto": the extraction threshold
    becomes the best local score a seeded shuffle of the similarity table
    achieves (what noise alone scores at this corpus size), and reported
    pairs must individually beat the once-per-grid significance floor.
    Either can be pinned to a number, and pair_floor to null for the
    unfiltered behavior.
    """

    metric: str = "embedding_cosine"
    aligner: str = "sw"  # "sw" | "greedy"
    g: float = al.DEFAULT_GAP
    th_s: float = 0.6
    seed: int = 0
    sample_count: int = 10_000
    min_score: float | str = "auto"
    pair_floor: float | str | None = "auto"
    gap_pairs: str = "both"
    fill_method: str = "wavefront"
    target_size: int = 8
    window: int = 3
    book: str | None = None
    script: str | None = None
    book_embeddings: str | None = None
    script_embeddings: str | None = None
    word_vectors: str | None = None
    gold: str | None = None
    lexicon: str | None = None
    out_dir: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def _load_config(args: argparse.Namespace) -> RunConfig:
    """Start from defaults, apply --config JSON, then explicit flags."""
    cfg = RunConfig()
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            try:
                overrides = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{config_path}: invalid config JSON: {exc}") from exc
        unknown = overrides.keys() - _CONFIG_FIELDS
        if unknown:
            raise InputError(f"{config_path}: unknown config keys {sorted(unknown)}")
        for key, value in overrides.items():
            setattr(cfg, key, value)
    for key in _CONFIG_FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _provenance(cfg: RunConfig, inputs: dict[str, str]) -> dict:
    return {
        "config": cfg.to_dict(),
        "input_hashes": {role: _sha256(path) for role, path in sorted(inputs.items())},
    }


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1))
        fh.write("\n")


def _write_csv(path: str, provenance: dict, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# provenance: " + json.dumps(provenance, sort_keys=True) + "\n")
        fh.write(buf.getvalue())


def _require(path: str | None, role: str) -> str:
    if not path:
        raise MissingInput(f"missing required input: {role}")
    if not os.path.exists(path):
        raise MissingInput(f"{role} file not found: {path}")
    return path


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc


def cmd_parse(args: argparse.Namespace) -> int:
    with open(_require(args.input, "input"), "r", encoding="utf-8") as fh:
        raw = fh.read()
    doc_id = args.doc_id or os.path.splitext(os.path.basename(args.input))[0]
    if args.kind == "script":
        doc = corpus.parse_script(raw, doc_id=doc_id)
    else:
        characters = _load_json(args.characters) if args.characters else None
        doc = corpus.parse_book(
            raw,
            chapter_pattern=args.chapter_pattern,
            doc_id=doc_id,
            characters=characters,
        )
    corpus.save_document(doc, args.output)
    return 0


def cmd_segment(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    book = corpus.load_document(_require(cfg.book, "book"))
    units = corpus.segment_book_units(
        book, target_size=cfg.target_size, window=cfg.window
    )
    corpus.save_document(corpus.assign_units(book, units), args.output)
    return 0


def _build_model(cfg: RunConfig, book: corpus.Document, script: corpus.Document):
    kwargs: dict = {}
    if cfg.metric == "embedding_cosine":
        kwargs["book_embeddings"] = similarity.read_embeddings(
            _require(cfg.book_embeddings, "book_embeddings")
        )
        kwargs["script_embeddings"] = similarity.read_embeddings(
            _require(cfg.script_embeddings, "script_embeddings")
        )
    elif cfg.metric == "glove_mean":
        kwargs["word_vectors"] = similarity.load_word_vectors(
            _require(cfg.word_vectors, "word_vectors")
        )
    return similarity.build_model(
        cfg.metric,
        book,
        script,
        th_s=cfg.th_s,
        sample_count=cfg.sample_count,
        seed=cfg.seed,
        **kwargs,
    )


def _alignment_inputs(cfg: RunConfig) -> dict[str, str]:
    inputs = {"book": cfg.book, "script": cfg.script}
    if cfg.metric == "embedding_cosine":
        inputs["book_embeddings"] = cfg.book_embeddings
        inputs["script_embeddings"] = cfg.script_embeddings
    elif cfg.metric == "glove_mean":
        inputs["word_vectors"] = cfg.word_vectors
    return {k: v for k, v in inputs.items() if v}


def _resolve_thresholds(cfg: RunConfig, model) -> tuple[float, float | None]:
    if cfg.min_score == "auto":
        min_score = al.null_score_ceiling(model, g=cfg.g, seed=cfg.seed)
    elif isinstance(cfg.min_score, (int, float)):
        min_score = float(cfg.min_score)
    else:
        raise InputError(f"min_score must be a number or 'auto', got {cfg.min_score!r}")
    if cfg.pair_floor == "auto":
        pair_floor = similarity.pair_significance_floor(model.m, model.n, cfg.th_s)
    elif cfg.pair_floor is None or cfg.pair_floor == "none":
        pair_floor = None
    elif isinstance(cfg.pair_floor, (int, float)):
        pair_floor = float(cfg.pair_floor)
    else:
        raise InputError(
            f"pair_floor must be a number, null, or 'auto', got {cfg.pair_floor!r}"
        )
    return min_score, pair_floor


def cmd_align(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    book = corpus.load_document(_require(cfg.book, "book"))
    script = corpus.load_document(_require(cfg.script, "script"))
    model = _build_model(cfg, book, script)
    min_score, pair_floor = _resolve_thresholds(cfg, model)

    if cfg.aligner == "greedy":
        result = al.greedy_baseline(model, min_sim=pair_floor or 0.0)
    elif cfg.aligner == "sw":
        matrix = al.sw_fill(model, g=cfg.g, method=cfg.fill_method)
        result = al.extract_matches(
            matrix, min_score=min_score, gap_pairs=cfg.gap_pairs, pair_floor=pair_floor
        )
    else:
        raise InputError(f"unknown aligner {cfg.aligner!r}")

    out_dir = cfg.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    provenance = _provenance(cfg, _alignment_inputs(cfg))
    payload = al.alignment_to_dict(result)
    payload["params"].update(
        {
            "metric": cfg.metric,
            "aligner": cfg.aligner,
            "g": cfg.g,
            "th_s": cfg.th_s,
            "seed": cfg.seed,
            "sample_count": cfg.sample_count,
            "min_score": min_score,
            "pair_floor": pair_floor,
            "calibration": dataclasses.asdict(model.calibration),
            "book_doc_id": book.doc_id,
            "script_doc_id": script.doc_id,
            "book_size": len(book),
            "script_size": len(script),
        }
    )
    payload.update(provenance)
    _write_json(os.path.join(out_dir, "alignment.json"), payload)
    _write_csv(
        os.path.join(out_dir, "heatmap.csv"),
        provenance,
        ["book_index", "aligned", "confidence"],
        [(i, flag, repr(conf)) for i, flag, conf in an.heatmap_rows(result, len(book))],
    )
    return 0


def _load_alignment(path: str) -> tuple[al.AlignmentResult, dict]:
    obj = _load_json(_require(path, "alignment"))
    if "matches" not in obj:
        raise InputError(f"{path}: not an alignment JSON (no 'matches' key)")
    return al.alignment_from_dict(obj), obj


def _book_units(book: corpus.Document, cfg: RunConfig) -> list[corpus.BookUnit]:
    if all(p.unit_id is not None for p in book.paragraphs):
        return corpus.units_from_document(book)
    units = corpus.segment_book_units(book, target_size=cfg.target_size, window=cfg.window)
    return units


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    result, _ = _load_alignment(args.alignment)
    book = corpus.load_document(_require(cfg.book, "book"))
    metrics: dict = {}

    if args.gold_retention:
        gold_raw = _load_json(_require(args.gold_retention, "gold_retention"))
        gold = {int(k): bool(v) for k, v in gold_raw.items()}
        units = _book_units(book, cfg)
        report = an.retention(result, units, len(book))
        missing = [u.unit_id for u in units if u.unit_id not in gold]
        if missing:
            raise InputError(f"gold retention labels missing unit ids {missing[:5]}...")
        predicted = [report.unit_flags[u.unit_id] for u in units]
        truth = [gold[u.unit_id] for u in units]
        from .stats import f1_score

        metrics["retention"] = f1_score(predicted, truth)
        metrics["retention"]["unit_count"] = len(units)
    elif args.gold_chapters:
        from .stats import alignment_accuracy

        script = corpus.load_document(_require(cfg.script, "script"))
        gold_raw = _load_json(_require(args.gold_chapters, "gold_chapters"))
        gold = {int(k): int(v) for k, v in gold_raw.items()}
        assigned = an.chapter_vote(result, book, script)
        metrics["chapter_accuracy"] = alignment_accuracy(assigned, gold)
        chapter_words: dict[int, int] = {}
        for par in book.paragraphs:
            chapter_words[par.chapter_id] = chapter_words.get(par.chapter_id, 0) + len(
                corpus.tokenize(par.text)
            )
        scene_count = max(p.scene_id for p in script.paragraphs) + 1
        chapters = sorted(chapter_words)
        by_position = al.length_baseline([chapter_words[c] for c in chapters], scene_count)
        baseline = {scene: chapters[pos] for scene, pos in by_position.items()}
        metrics["length_baseline_accuracy"] = alignment_accuracy(baseline, gold)
    else:
        raise MissingInput("evaluate needs --gold-retention or --gold-chapters")

    inputs = {"alignment": args.alignment, "book": cfg.book}
    if args.gold_retention:
        inputs["gold"] = args.gold_retention
    else:
        inputs["gold"] = args.gold_chapters
        inputs["script"] = cfg.script
    payload = {"metrics": metrics}
    payload.update(_provenance(cfg, inputs))
    _write_json(args.output, payload)
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    result, raw = _load_alignment(args.alignment)
    book = corpus.load_document(_require(cfg.book, "book"))
    units = _book_units(book, cfg)
    ret = an.retention(result, units, len(book))
    order = an.lis_order(result)

    analysis: dict = {
        "pair_id": f"{book.doc_id}--{raw.get('params', {}).get('script_doc_id', 'script')}",
        "book_size": len(book),
        "retention_pct": ret.retention_pct,
        "retained_paragraphs": len(ret.retained_paragraphs),
        "unit_count": len(units),
        "units_retained": sum(1 for v in ret.unit_flags.values() if v),
        "lis_length": order.lis_length,
        "lis_sequence_length": order.sequence_length,
        "lis_expected_random": order.expected_random,
        "u_b": None,
        "v_b": None,
        "bechdel_b": None,
        "bechdel_prediction": None,
        "female_ratio": None,
        "male_ratio": None,
    }
    try:
        dialog = an.dialog_ratio(ret, book)
        analysis["u_b"] = dialog.u_b
        analysis["v_b"] = dialog.v_b
        analysis["dialog_counts"] = {
            "dialog": dialog.dialog_count,
            "retained_dialog": dialog.retained_dialog,
            "nondialog": dialog.nondialog_count,
            "retained_nondialog": dialog.retained_nondialog,
        }
    except UndefinedRatio:
        pass
    try:
        lexicon = an.GenderLexicon.from_json(cfg.lexicon) if cfg.lexicon else None
        bechdel = an.bechdel_ratio(ret, book, lexicon)
        analysis["bechdel_b"] = bechdel.B
        analysis["bechdel_prediction"] = bechdel.prediction
        analysis["female_ratio"] = bechdel.female_ratio
        analysis["male_ratio"] = bechdel.male_ratio
        analysis["bechdel_counts"] = {
            "dialog": bechdel.dialog_count,
            "retained_dialog": bechdel.retained_dialog,
            "female_only_dialog": bechdel.female_only_dialog,
            "retained_female_only": bechdel.retained_female_only,
        }
    except (UndefinedRatio, MissingGenderData):
        pass  # bechdel fields stay null when the book lacks the data
    out_dir = cfg.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    inputs = {"alignment": args.alignment, "book": cfg.book}
    if cfg.lexicon:
        inputs["lexicon"] = cfg.lexicon
    provenance = _provenance(cfg, inputs)
    payload = {"analysis": analysis}
    payload.update(provenance)
    _write_json(os.path.join(out_dir, "analysis.json"), payload)
    _write_csv(
        os.path.join(out_dir, "analysis.csv"),
        provenance,
        _FLAT_COLUMNS,
        [_flat_row(analysis)],
    )
    return 0


_FLAT_COLUMNS = [
    "pair_id",
    "retention_pct",
    "u_b",
    "v_b",
    "lis_length",
    "lis_expected_random",
    "bechdel_b",
    "bechdel_prediction",
]


def _flat_row(analysis: dict) -> list:
    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return "" if v is None else v

    return [fmt(analysis.get(col)) for col in _FLAT_COLUMNS]


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    analyses = []
    for path in args.analyses:
        obj = _load_json(_require(path, "analysis"))
        if "analysis" not in obj:
            raise InputError(f"{path}: not an analysis JSON")
        analyses.append(obj["analysis"])
    out_dir = cfg.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    inputs = {f"analysis_{i}": p for i, p in enumerate(args.analyses)}

    metrics: dict = {"pairs": len(analyses)}
    if args.labels:
        labels_raw = _load_json(_require(args.labels, "labels"))
        inputs["labels"] = args.labels
        from .stats import auc_roc, spearman_rho

        scores, flags = [], []
        for entry in analyses:
            pair_id = entry["pair_id"]
            if pair_id in labels_raw:
                scores.append(float(entry["retention_pct"]))
                flags.append(bool(labels_raw[pair_id]))
        if len(scores) >= 2 and any(flags) and not all(flags):
            spearman = spearman_rho(scores, [1.0 if v else 0.0 for v in flags])
            metrics["faithfulness"] = {
                "labeled_pairs": len(scores),
                "spearman_rho": spearman["rho"],
                "p_value": spearman["p_value"],
                "auc": auc_roc(scores, flags),
            }
        else:
            metrics["faithfulness"] = {"labeled_pairs": len(scores)}

    provenance = _provenance(cfg, inputs)
    payload = {"metrics": metrics}
    payload.update(provenance)
    _write_json(os.path.join(out_dir, "report.json"), payload)
    _write_csv(
        os.path.join(out_dir, "report.csv"),
        provenance,
        _FLAT_COLUMNS,
        [_flat_row(a) for a in analyses],
    )
    return 0


def _float_or_auto(value: str):
    return "auto" if value == "auto" else float(value)


def _float_auto_or_none(value: str):
    if value == "auto":
        return "auto"
    if value.lower() in ("none", "null"):
        return "none"
    return float(value)


def _add_config_flags(parser: argparse.ArgumentParser, *, paths: bool = True) -> None:
    parser.add_argument("--config", help="JSON file with RunConfig overrides")
    parser.add_argument("--metric", choices=similarity.METRICS)
    parser.add_argument("--aligner", choices=("sw", "greedy"))
    parser.add_argument("--g", type=float, help="gap penalty (default -0.7)")
    parser.add_argument("--th-s", dest="th_s", type=float, help="z threshold (default +0.6)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--sample-count", dest="sample_count", type=int)
    parser.add_argument(
        "--min-score", dest="min_score", type=_float_or_auto,
        help="extraction threshold, a number or 'auto' (shuffled-null ceiling)",
    )
    parser.add_argument(
        "--pair-floor", dest="pair_floor", type=_float_auto_or_none,
        help="per-pair similarity floor: number, 'auto', or 'none'",
    )
    parser.add_argument("--gap-pairs", dest="gap_pairs", choices=al.GAP_PAIR_MODES)
    parser.add_argument("--fill-method", dest="fill_method", choices=("wavefront", "serial"))
    parser.add_argument("--target-size", dest="target_size", type=int)
    parser.add_argument("--window", type=int)
    if paths:
        parser.add_argument("--book")
        parser.add_argument("--script")
        parser.add_argument("--book-embeddings", dest="book_embeddings")
        parser.add_argument("--script-embeddings", dest="script_embeddings")
        parser.add_argument("--word-vectors", dest="word_vectors")
        parser.add_argument("--lexicon")
        parser.add_argument("--out-dir", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="narralign",
        description="Align books with film scripts and analyze the adaptation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="raw text -> paragraph JSONL")
    p.add_argument("--kind", choices=("book", "script"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--doc-id", dest="doc_id")
    p.add_argument("--chapter-pattern", dest="chapter_pattern")
    p.add_argument("--characters", help="JSON map of character name -> gender tag")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("segment", help="stamp book units onto a book JSONL")
    p.add_argument("--book")
    p.add_argument("--output", required=True)
    _add_config_flags(p, paths=False)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("align", help="book + script JSONL -> alignment JSON + heatmap CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("evaluate", help="score an alignment against gold labels")
    p.add_argument("--alignment", required=True)
    p.add_argument("--gold-retention", dest="gold_retention")
    p.add_argument("--gold-chapters", dest="gold_chapters")
    p.add_argument("--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="alignment + book -> analysis JSON/CSV")
    p.add_argument("--alignment", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="merge analyses into one CSV, optionally score faithfulness")
    p.add_argument("--analyses", nargs="+", required=True)
    p.add_argument("--labels", help="JSON map of pair_id -> faithful bool")
    _add_config_flags(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        _emit_error(exc)
        return 3
    except (InputError, NarralignError, OSError) as exc:
        _emit_error(exc)
        return 2


def _emit_error(exc: Exception) -> None:
    sys.stderr.write(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True)
        + "\n"
    )


if __name__ == "__main__":
    sys.exit(main())
