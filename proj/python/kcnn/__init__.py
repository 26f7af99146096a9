"""Patch-proposal Fisher-vector image retrieval."""

from ._kcnn import (
    Index,
    KcnnError,
    embed_image_global,
    embed_patch,
    evaluate,
    generate_corpus,
    propose,
    read_pgm,
    run_pipeline,
    write_pgm,
)

__all__ = [
    "Index",
    "KcnnError",
    "embed_image_global",
    "embed_patch",
    "evaluate",
    "generate_corpus",
    "propose",
    "read_pgm",
    "run_pipeline",
    "write_pgm",
]
