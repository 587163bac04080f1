"""Document storage, frozen embedding index, and exact top-K search.

The index is a plain (N, d) matrix of unit-norm document embeddings, row i
holding document id i. Search is an exact full scan of dot products; at desk
scale this is fast and keeps approximation noise out of the training signal.
Ties are broken toward the lower document id so retrieval is deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import PolicyParameters, TokenizerConfig, encode_document


@dataclass
class Document:
    id: int
    text: str


@dataclass
class EmbeddingIndex:
    """Frozen document embeddings; row i corresponds to document id i."""

    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass
class CandidatePool:
    """Top-K retrieval result: distinct doc ids with descending scores."""

    ids: list[int]
    scores: np.ndarray

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.ids) != self.scores.shape[0]:
            raise ValueError("ids and scores must have equal length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("pool ids must be distinct")
        if np.any(np.diff(self.scores) > 0):
            raise ValueError("pool scores must be descending")

    def __len__(self) -> int:
        return len(self.ids)


def load_corpus(path) -> list[Document]:
    """Read a JSON-lines corpus of {"id": int, "text": str} records.

    Ids must be dense in [0, N) and every text non-empty; documents are
    returned in id order regardless of file order.
    """
    docs: list[Document] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            doc_id = record["id"]
            text = record["text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed corpus line: {exc}") from exc
        if not isinstance(doc_id, int) or not isinstance(text, str):
            raise ValueError(f"{path}:{lineno}: id must be an integer and text a string")
        if not text:
            raise ValueError(f"{path}:{lineno}: document text must be non-empty")
        docs.append(Document(id=doc_id, text=text))
    docs.sort(key=lambda d: d.id)
    ids = [d.id for d in docs]
    if ids != list(range(len(docs))):
        raise ValueError(f"{path}: document ids must be dense in [0, {len(docs)}), got {ids[:10]}...")
    return docs


def build_index(params: PolicyParameters, cfg: TokenizerConfig, docs: list[Document]) -> EmbeddingIndex:
    """Embed every document with the frozen parameter snapshot."""
    if not docs:
        raise ValueError("cannot index an empty corpus")
    rows = [encode_document(params, cfg, doc.text)[0] for doc in docs]
    return EmbeddingIndex(matrix=np.vstack(rows))


def top_k_exact(index: EmbeddingIndex, state_vec: np.ndarray, k: int) -> CandidatePool:
    """Exact top-K by dot product over all rows, descending, id tie-break."""
    if k < 1:
        raise ValueError("K must be at least 1")
    vec = np.asarray(state_vec, dtype=np.float64).reshape(-1)
    if vec.shape[0] != index.matrix.shape[1]:
        raise ValueError("state vector dimension does not match the index")
    scores = index.matrix @ vec
    # lexsort: primary key -scores (descending), secondary key row id (ascending)
    order = np.lexsort((np.arange(index.size), -scores))[: min(k, index.size)]
    return CandidatePool(ids=[int(i) for i in order], scores=scores[order])
