"""Text encoders for the retriever.

The trainable state encoder and the frozen document encoder share one tiny
architecture: token-embedding lookup, mean pooling, a linear projection, and
unit normalization, so every similarity is a cosine in [-1, 1]. States are
rendered from the episode history into a flat string before encoding; the
``query_only`` rendering mode ignores the history entirely and is used by the
history ablation.

Tokenization is lowercase whitespace splitting against a fixed vocabulary with
an unknown-token fallback. The vocabulary file format is one token per line,
id = line number.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Graph

UNKNOWN_TOKEN = "<unk>"
QUERY_PREFIX = "q:"
OBSERVATION_PREFIX = "o:"
DEFAULT_SEPARATOR = "[SEP]"

HISTORY_AWARE = "history_aware"
QUERY_ONLY = "query_only"


@dataclass
class TokenizerConfig:
    """Vocabulary map plus the unknown id and the separator token string."""

    vocabulary: dict[str, int]
    unknown_id: int
    separator: str = DEFAULT_SEPARATOR

    @property
    def size(self) -> int:
        return len(self.vocabulary)


@dataclass
class PolicyParameters:
    """Trainable state-encoder weights: embedding table (V,d_e) and projection (d_e,d)."""

    token_embeddings: np.ndarray
    projection: np.ndarray

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(self.token_embeddings.copy(), self.projection.copy())


@dataclass
class StateRendering:
    """How an episode state is serialized into encoder input text."""

    mode: str = HISTORY_AWARE
    max_tokens: int = 64
    version: str = "v1"

    def __post_init__(self) -> None:
        if self.mode not in (HISTORY_AWARE, QUERY_ONLY):
            raise ValueError(f"unknown rendering mode {self.mode!r}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


def build_vocabulary(texts, extra_tokens: tuple[str, ...] = ()) -> TokenizerConfig:
    """Dense vocabulary over all whitespace tokens of ``texts`` plus template tokens."""
    tokens = set()
    for text in texts:
        tokens.update(text.lower().split())
    tokens.update(t.lower() for t in extra_tokens)
    tokens.update(
        (QUERY_PREFIX, OBSERVATION_PREFIX, DEFAULT_SEPARATOR.lower(), UNKNOWN_TOKEN)
    )
    ordered = sorted(tokens)
    vocab = {tok: i for i, tok in enumerate(ordered)}
    return TokenizerConfig(vocabulary=vocab, unknown_id=vocab[UNKNOWN_TOKEN])


def save_vocabulary(cfg: TokenizerConfig, path) -> None:
    lines = [""] * len(cfg.vocabulary)
    for tok, i in cfg.vocabulary.items():
        lines[i] = tok
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path) -> TokenizerConfig:
    tokens = Path(path).read_text(encoding="utf-8").splitlines()
    vocab = {tok: i for i, tok in enumerate(tokens)}
    if len(vocab) != len(tokens):
        raise ValueError("vocabulary file contains duplicate tokens")
    if UNKNOWN_TOKEN not in vocab:
        raise ValueError(f"vocabulary file is missing the {UNKNOWN_TOKEN} token")
    return TokenizerConfig(vocabulary=vocab, unknown_id=vocab[UNKNOWN_TOKEN])


def tokenize(cfg: TokenizerConfig, text: str) -> list[int]:
    """Lowercase whitespace split mapped through the vocabulary; OOV -> unknown id."""
    return [cfg.vocabulary.get(tok, cfg.unknown_id) for tok in text.lower().split()]


def render_state(
    history: list[tuple[str, str | None]],
    q_t: str,
    rendering: StateRendering,
    separator: str = DEFAULT_SEPARATOR,
) -> str:
    """Serialize (history, current sub-query) into encoder input text.

    ``history`` holds (sub-query, observation) pairs; entry 0 is the initial
    question with no observation. In ``history_aware`` mode the rendering is::

        q: <q0> [SEP] o: <o1> [SEP] q: <q1> ... [SEP] q: <q_t>

    When the whitespace-token budget is exceeded, the oldest completed
    (q_i, o_i) pairs are dropped first; the initial question and the current
    sub-query always survive, even if over budget on their own.
    """
    if not q_t:
        raise ValueError("current sub-query must be non-empty")
    if rendering.mode == QUERY_ONLY:
        return q_t

    pairs = list(history)
    head = None
    if pairs and pairs[0][1] is None:
        head = pairs[0][0]
        pairs = pairs[1:]

    def assemble(kept: list[tuple[str, str | None]]) -> str:
        segments = []
        if head is not None:
            segments.append(f"{QUERY_PREFIX} {head}")
        for sub_query, observation in kept:
            segments.append(f"{OBSERVATION_PREFIX} {observation}")
            segments.append(f"{QUERY_PREFIX} {sub_query}")
        segments.append(f"{QUERY_PREFIX} {q_t}")
        return f" {separator} ".join(segments)

    text = assemble(pairs)
    while pairs and len(text.split()) > rendering.max_tokens:
        pairs = pairs[1:]  # drop the oldest completed hop
        text = assemble(pairs)
    return text


def init_params(seed: int, vocab_size: int, embed_dim: int, out_dim: int) -> PolicyParameters:
    """Uniform [-0.1, 0.1] initialization from a seeded generator."""
    if min(vocab_size, embed_dim, out_dim) < 1:
        raise ValueError("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    return PolicyParameters(
        token_embeddings=rng.uniform(-0.1, 0.1, (vocab_size, embed_dim)),
        projection=rng.uniform(-0.1, 0.1, (embed_dim, out_dim)),
    )


def bind_parameters(graph: Graph, params: PolicyParameters) -> tuple[int, int]:
    """Insert the two parameter matrices as trainable leaves of ``graph``.

    Bind once per graph and reuse the returned node ids across encode_state
    calls so gradients from every state accumulate into the same leaves.
    """
    emb = graph.leaf(params.token_embeddings, requires_grad=True)
    proj = graph.leaf(params.projection, requires_grad=True)
    return emb, proj


def encode_state(
    params: PolicyParameters,
    cfg: TokenizerConfig,
    text: str,
    graph: Graph,
    param_nodes: tuple[int, int] | None = None,
) -> int:
    """Differentiable state embedding: gather -> mean pool -> project -> normalize.

    Returns the node id of a unit-norm (1,d) vector. Empty input maps to the
    unknown token alone.
    """
    if param_nodes is None:
        param_nodes = bind_parameters(graph, params)
    emb, proj = param_nodes
    ids = tokenize(cfg, text) or [cfg.unknown_id]
    pooled = graph.row_mean(graph.gather_rows(emb, ids))
    return graph.unit_normalize(graph.matmul(pooled, proj))


def encode_document(params: PolicyParameters, cfg: TokenizerConfig, text: str) -> np.ndarray:
    """Non-differentiable embedding with identical arithmetic to encode_state.

    Callers pass the frozen parameter snapshot taken at initialization, so
    document embeddings never move during training.
    """
    ids = tokenize(cfg, text) or [cfg.unknown_id]
    pooled = params.token_embeddings[np.asarray(ids, dtype=np.int64)].mean(axis=0, keepdims=True)
    vec = pooled @ params.projection
    norm = float(np.linalg.norm(vec))
    if norm <= 1e-12:
        raise ValueError("document embedding collapsed to (near-)zero norm")
    return vec / norm
