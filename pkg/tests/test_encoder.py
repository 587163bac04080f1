import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankrl.autodiff import Graph, finite_diff_check
from rankrl.encoder import (
    HISTORY_AWARE,
    QUERY_ONLY,
    PolicyParameters,
    StateRendering,
    TokenizerConfig,
    build_vocabulary,
    encode_document,
    encode_state,
    init_params,
    load_vocabulary,
    render_state,
    save_vocabulary,
    tokenize,
)


@pytest.fixture
def cfg():
    return build_vocabulary(["acme founder omega", "who founded acme"])


# ---------------------------------------------------------------------------
# tokenize
# ---------------------------------------------------------------------------


def test_tokenize_case_folds_and_repeats():
    cfg = TokenizerConfig(vocabulary={"paris": 3, "<unk>": 0}, unknown_id=0)
    assert tokenize(cfg, "Paris Paris") == [3, 3]


def test_tokenize_unknown_fallback(cfg):
    assert tokenize(cfg, "zzz-never-seen") == [cfg.unknown_id]


def test_tokenize_empty(cfg):
    assert tokenize(cfg, "") == []


# ---------------------------------------------------------------------------
# render_state
# ---------------------------------------------------------------------------


def test_render_base_case():
    r = StateRendering(mode=HISTORY_AWARE, max_tokens=64)
    assert render_state([], "who founded acme", r) == "q: who founded acme"


def test_render_initial_state_has_question_then_first_subquery():
    r = StateRendering(mode=HISTORY_AWARE, max_tokens=64)
    out = render_state([("who founded acme", None)], "acme", r)
    assert out == "q: who founded acme [SEP] q: acme"


def test_render_query_only_ignores_history():
    r = StateRendering(mode=QUERY_ONLY, max_tokens=64)
    history = [("q0", None), ("q1", "o1"), ("q2", "o2")]
    assert render_state(history, "qt", r) == "qt"


def test_render_full_history_order():
    r = StateRendering(mode=HISTORY_AWARE, max_tokens=64)
    history = [("q0", None), ("q1", "o1"), ("q2", "o2")]
    assert (
        render_state(history, "qt", r)
        == "q: q0 [SEP] o: o1 [SEP] q: q1 [SEP] o: o2 [SEP] q: q2 [SEP] q: qt"
    )


def test_render_truncation_drops_oldest_pairs_first():
    # Hand-derived word counts: full rendering of 3 single-word pairs is 23
    # tokens; dropping pairs oldest-first gives 17, 11, then 5 tokens.
    history = [("q0", None), ("q1", "o1"), ("q2", "o2"), ("q3", "o3")]
    tight = StateRendering(mode=HISTORY_AWARE, max_tokens=8)
    assert render_state(history, "qt", tight) == "q: q0 [SEP] q: qt"
    mid = StateRendering(mode=HISTORY_AWARE, max_tokens=12)
    assert render_state(history, "qt", mid) == "q: q0 [SEP] o: o3 [SEP] q: q3 [SEP] q: qt"


def test_render_rejects_empty_subquery():
    with pytest.raises(ValueError):
        render_state([], "", StateRendering())


def test_render_matches_query_only_up_to_prefix():
    aware = render_state([], "some question", StateRendering(mode=HISTORY_AWARE))
    only = render_state([], "some question", StateRendering(mode=QUERY_ONLY))
    assert aware == f"q: {only}"


_word = st.text(alphabet="abcdefg", min_size=1, max_size=4)


@given(
    st.lists(st.tuples(_word, _word), min_size=0, max_size=3),
    st.lists(st.tuples(_word, _word), min_size=0, max_size=3),
    _word,
)
def test_render_injective_on_distinct_histories(h1, h2, qt):
    r = StateRendering(mode=HISTORY_AWARE, max_tokens=512)
    hist1 = [("q0", None)] + list(h1)
    hist2 = [("q0", None)] + list(h2)
    if h1 != h2:
        assert render_state(hist1, qt, r) != render_state(hist2, qt, r)


# ---------------------------------------------------------------------------
# encode_state / encode_document
# ---------------------------------------------------------------------------


def test_encode_single_token_identity_projection(cfg):
    d = 4
    emb = np.zeros((cfg.size, d))
    tid = tokenize(cfg, "acme")[0]
    emb[tid] = [3.0, 4.0, 0.0, 0.0]
    params = PolicyParameters(emb, np.eye(d))
    g = Graph()
    out = encode_state(params, cfg, "acme", g)
    np.testing.assert_allclose(g.value(out), [[0.6, 0.8, 0.0, 0.0]], atol=1e-15)


def test_encode_is_order_free(cfg):
    params = init_params(0, cfg.size, 8, 6)
    g1, g2 = Graph(), Graph()
    a = g1.value(encode_state(params, cfg, "acme founder omega", g1))
    b = g2.value(encode_state(params, cfg, "omega acme founder", g2))
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_encode_empty_text_uses_unknown_token(cfg):
    params = init_params(0, cfg.size, 8, 6)
    g1, g2 = Graph(), Graph()
    a = g1.value(encode_state(params, cfg, "", g1))
    b = g2.value(encode_state(params, cfg, "tok-not-in-vocab", g2))
    np.testing.assert_array_equal(a, b)


def test_encode_gradient_matches_finite_differences(cfg):
    rng = np.random.default_rng(7)
    proj = rng.uniform(-0.3, 0.3, (5, 4))
    target = rng.standard_normal((1, 4))
    text = "acme founder acme"
    ids = tokenize(cfg, text)

    def wrt_embeddings(g: Graph, xid: int) -> int:
        pooled = g.row_mean(g.gather_rows(xid, ids))
        state = g.unit_normalize(g.matmul(pooled, g.leaf(proj)))
        return g.dot(state, g.leaf(target))

    emb = rng.uniform(-0.3, 0.3, (cfg.size, 5))
    assert finite_diff_check(wrt_embeddings, emb, h=1e-5) <= 1e-4

    def wrt_projection(g: Graph, xid: int) -> int:
        pooled = g.row_mean(g.gather_rows(g.leaf(emb), ids))
        state = g.unit_normalize(g.matmul(pooled, xid))
        return g.dot(state, g.leaf(target))

    assert finite_diff_check(wrt_projection, proj, h=1e-5) <= 1e-4


def test_document_encoder_matches_state_encoder_at_init(cfg):
    params = init_params(3, cfg.size, 8, 6)
    text = "acme founder omega"
    g = Graph()
    state_val = g.value(encode_state(params, cfg, text, g))
    doc_val = encode_document(params, cfg, text)
    assert state_val.tobytes() == doc_val.tobytes()


def test_document_embedding_is_a_pure_function_of_the_snapshot(cfg):
    params = init_params(3, cfg.size, 8, 6)
    frozen = params.copy()
    before = encode_document(frozen, cfg, "acme founder omega")
    params.token_embeddings += 100.0  # simulate many optimizer steps
    params.projection *= -2.0
    after = encode_document(frozen, cfg, "acme founder omega")
    assert before.tobytes() == after.tobytes()


# ---------------------------------------------------------------------------
# init_params / vocabulary files
# ---------------------------------------------------------------------------


def test_init_params_deterministic_per_seed():
    a = init_params(42, 50, 16, 16)
    b = init_params(42, 50, 16, 16)
    c = init_params(43, 50, 16, 16)
    assert a.token_embeddings.tobytes() == b.token_embeddings.tobytes()
    assert a.projection.tobytes() == b.projection.tobytes()
    assert a.token_embeddings.tobytes() != c.token_embeddings.tobytes()


def test_init_params_shapes():
    p = init_params(0, 50, 16, 16)
    assert p.token_embeddings.shape == (50, 16)
    assert p.projection.shape == (16, 16)
    assert np.all(np.abs(p.token_embeddings) <= 0.1)


def test_init_params_rejects_bad_dims():
    with pytest.raises(ValueError):
        init_params(0, 0, 4, 4)


def test_vocabulary_round_trip(tmp_path, cfg):
    path = tmp_path / "vocab.txt"
    save_vocabulary(cfg, path)
    loaded = load_vocabulary(path)
    assert loaded.vocabulary == cfg.vocabulary
    assert loaded.unknown_id == cfg.unknown_id
