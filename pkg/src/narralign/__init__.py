"""narralign: local alignment of books with their film-script adaptations,
plus retention, dialog, narrative-order, and gender-representation analytics.
"""

from .align import (
    AlignmentResult,
    LocalMatch,
    ScoreMatrix,
    extract_matches,
    greedy_baseline,
    length_baseline,
    null_score_ceiling,
    sw_fill,
    verify_recurrence,
)
from .analysis import (
    BechdelReport,
    DialogReport,
    GenderLexicon,
    OrderReport,
    RetentionReport,
    bechdel_ratio,
    chapter_vote,
    dialog_ratio,
    faithfulness_rank,
    lis_order,
    retention,
)
from .corpus import (
    BookUnit,
    Document,
    Paragraph,
    assign_units,
    load_document,
    parse_book,
    parse_script,
    save_document,
    segment_book_units,
    units_from_document,
)
from .similarity import (
    Calibration,
    EmbeddingMatrix,
    SimilarityModel,
    build_model,
    calibrate,
    pair_significance_floor,
    raw_embedding_cosine,
    raw_hamming,
    raw_jaccard,
    read_embeddings,
    score_from_z,
    write_embeddings,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult",
    "BechdelReport",
    "BookUnit",
    "Calibration",
    "DialogReport",
    "Document",
    "EmbeddingMatrix",
    "GenderLexicon",
    "LocalMatch",
    "OrderReport",
    "Paragraph",
    "RetentionReport",
    "ScoreMatrix",
    "SimilarityModel",
    "assign_units",
    "bechdel_ratio",
    "build_model",
    "calibrate",
    "chapter_vote",
    "dialog_ratio",
    "extract_matches",
    "faithfulness_rank",
    "greedy_baseline",
    "length_baseline",
    "lis_order",
    "load_document",
    "null_score_ceiling",
    "pair_significance_floor",
    "parse_book",
    "parse_script",
    "raw_embedding_cosine",
    "raw_hamming",
    "raw_jaccard",
    "read_embeddings",
    "retention",
    "save_document",
    "score_from_z",
    "segment_book_units",
    "sw_fill",
    "units_from_document",
    "verify_recurrence",
    "write_embeddings",
]
