"""Encoder/head shape contracts, span pointer gradients, decoding, training."""

import numpy as np
import pytest

from sketchsql.autograd import grad_check, ops
from sketchsql.corpus.config import GenConfig
from sketchsql.corpus.examples import Split
from sketchsql.corpus.generate import build_corpus
from sketchsql.errors import CheckpointError, ConfigError, ContractViolation
from sketchsql.model import (
    MAX_COND,
    MAX_SELECT,
    Resolver,
    TrainConfig,
    decode,
    decode_candidates,
    encode,
    load_checkpoint,
    new_model,
    predict_heads,
    predict_value_span,
    save_checkpoint,
    train,
)
from sketchsql.model.decoding import top_spans
from sketchsql.model.network import best_span
from sketchsql.model.training import example_loss, gold_cell_row, locate_gold_span
from sketchsql.sql import Agg, CondOp, Condition, Connector, Rejection, logic_form_equal, query
from sketchsql.tables import make_table


def small_model(seed=0, d=16):
    return new_model(TrainConfig(hidden_size=d, seed=seed))


def demo_table():
    return make_table(
        "t1",
        "demo",
        ["fabolo kema", "kolo", "datu rem"],
        ["text", "real", "text"],
        [["bakelo", 120.0, "hini"], ["damilo", 340.0, "ruwa"], ["bakelo", 90.0, "hini"]],
    )


# ------------------------------------------------------------- configuration


def test_train_config_round_trip_and_resolver_values():
    config = TrainConfig(hidden_size=24, resolver=Resolver.END2END)
    again = TrainConfig.from_json(config.to_json())
    assert again == config
    assert config.to_json()["resolver"] == "end2end"


@pytest.mark.parametrize(
    "kwargs",
    [
        {"hidden_size": 0},
        {"hidden_size": 7},
        {"epochs": 0},
        {"batch_size": 0},
        {"learning_rate": 0.0},
        {"alphabet": ""},
        {"alphabet": "aab"},
    ],
)
def test_train_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs).validate()


def test_train_config_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        TrainConfig.from_json({"hidden_sizes": 32})


# ------------------------------------------------------------------ encoding


def test_encode_shape_contract():
    model = small_model()
    table = demo_table()
    enc = encode("wat kolo wen fabolo iz bakelo", table, model)
    assert enc.h_q.shape == (6, 16)
    assert enc.h_att_q.shape == (16,)
    assert enc.h_col.shape == (3, 16)


def test_encode_single_column_single_char_question():
    model = small_model()
    table = make_table("t", "x", ["kolo"], ["real"], [[1.0], [2.0]])
    enc = encode("k", table, model)
    assert enc.h_q.shape == (1, 16)
    assert enc.h_col.shape == (1, 16)


def test_encode_rejects_empty_question():
    with pytest.raises(ContractViolation):
        encode("   ", demo_table(), small_model())


def test_encode_unknown_characters_fall_back_to_unk():
    model = small_model()
    enc = encode("Ω∆ kolo", demo_table(), model)
    assert np.isfinite(enc.h_q.data).all()


def test_encode_column_permutation_permutes_h_col_rows():
    model = small_model()
    t1 = demo_table()
    t2 = make_table(
        "t2",
        "demo",
        ["kolo", "datu rem", "fabolo kema"],
        ["real", "text", "text"],
        [[120.0, "hini", "bakelo"], [340.0, "ruwa", "damilo"], [90.0, "hini", "bakelo"]],
    )
    q = "wat kolo wen fabolo iz bakelo"
    e1 = encode(q, t1, model)
    e2 = encode(q, t2, model)
    assert np.allclose(e1.h_col.data[[1, 2, 0]], e2.h_col.data)
    assert np.allclose(e1.h_att_q.data, e2.h_att_q.data)


def test_zero_parameters_make_h_att_q_the_uniform_mean():
    model = small_model()
    for p in model.params.parameters():
        p.data[...] = 0.0
    enc = encode("wat kolo wen fabolo iz bakelo", demo_table(), model)
    assert np.allclose(enc.h_att_q.data, enc.h_q.data.mean(axis=0))


# --------------------------------------------------------------------- heads


def test_head_distributions_sum_to_one():
    model = small_model(seed=3)
    enc = encode("wat kolo wen fabolo iz bakelo", demo_table(), model)
    probs = predict_heads(enc, model).distributions()
    assert abs(probs["s_num"].sum() - 1.0) < 1e-9
    assert abs(probs["w_num"].sum() - 1.0) < 1e-9
    assert abs(probs["w_rel"].sum() - 1.0) < 1e-9
    assert abs(probs["rejection"].sum() - 1.0) < 1e-9
    assert np.abs(probs["s_agg"].sum(axis=1) - 1.0).max() < 1e-9
    assert np.abs(probs["w_op"].sum(axis=1) - 1.0).max() < 1e-9
    assert probs["s_num"].shape == (MAX_SELECT,)
    assert probs["w_num"].shape == (MAX_COND + 1,)


def test_head_shapes_track_column_count():
    model = small_model()
    table = make_table("t", "x", ["kolo"], ["real"], [[1.0]])
    probs = predict_heads(encode("k", table, model), model).distributions()
    assert probs["s_col"].shape == (1,)
    assert probs["s_agg"].shape == (1, 6)
    assert probs["w_op"].shape == (1, 4)


# ---------------------------------------------------------------------- span


def test_span_distributions_sum_to_one():
    model = small_model(seed=2)
    enc = encode("wat kolo wen fabolo iz bakelo", demo_table(), model)
    span = predict_value_span(enc, 0, CondOp.EQ, model)
    assert abs(span.start_probs.sum() - 1.0) < 1e-9
    assert abs(span.end_probs.sum() - 1.0) < 1e-9
    assert 0 <= span.start <= span.end < 6


def test_span_zero_projections_are_uniform():
    model = small_model()
    for name in ("u_start", "w_start", "u_end", "w_end"):
        model.params[name].data[...] = 0.0
    enc = encode("wat kolo wen fabolo iz bakelo", demo_table(), model)
    span = predict_value_span(enc, 1, CondOp.GT, model)
    assert np.allclose(span.start_probs, 1.0 / 6)
    assert np.allclose(span.end_probs, 1.0 / 6)
    assert (span.start, span.end) == (0, 0)


def test_span_out_of_range_column_rejected():
    model = small_model()
    enc = encode("wat kolo", demo_table(), model)
    with pytest.raises(ContractViolation):
        predict_value_span(enc, 9, CondOp.EQ, model)


def test_best_span_respects_ordering():
    start = np.array([0.1, 0.6, 0.3])
    end = np.array([0.7, 0.2, 0.1])
    # unconstrained argmax would be (1, 0); the constraint forces i <= j
    assert best_span(start, end) == (1, 1)


def test_top_spans_ranked_and_valid():
    start = np.array([0.5, 0.3, 0.2])
    end = np.array([0.2, 0.3, 0.5])
    pairs = top_spans(start, end, 3)
    assert pairs[0] == (0, 2)
    assert all(i <= j for i, j in pairs)
    joint = [start[i] * end[j] for i, j in pairs]
    assert joint == sorted(joint, reverse=True)


def test_span_gradients_match_finite_differences():
    # Cross-entropy of both pointer ends through H_n and its projections,
    # checked against central differences. Init-scale activations are tiny
    # (gradients ~1e-12 vanish under the finite-difference noise floor), so
    # the fixture redraws parameters at a working magnitude.
    model = small_model(seed=0, d=8)
    rng = np.random.default_rng(35)
    for p in model.params.parameters():
        p.data[...] = rng.uniform(-0.5, 0.5, p.data.shape)
    table = make_table("t", "x", ["ab", "cd"], ["text", "real"], [["aa", 1.0], ["bb", 2.0]])
    enc = encode("fa so la ti", table, model)
    params = model.params

    def build():
        span = predict_value_span(enc, 0, CondOp.EQ, model)
        return ops.add(
            ops.cross_entropy(span.start_logits, 1), ops.cross_entropy(span.end_logits, 2)
        )

    err = grad_check(
        build,
        [params["u_start"], params["w_start"], params["u_end"], params["w_end"],
         params["p_col"], params["p_op"], params["p_attq"], params["op_emb"]],
    )
    assert err < 1e-4


# ------------------------------------------------------------------ decoding


def test_decode_emits_prediction_with_sql():
    model = small_model(seed=4)
    pred = decode("wat kolo wen fabolo iz bakelo", demo_table(), model)
    assert pred.rejected or pred.sql is not None
    if not pred.rejected:
        assert 1 <= pred.select_number <= MAX_SELECT
        assert 0 <= pred.where_number <= MAX_COND
        assert pred.where_number == len(pred.sql.conditions)


def test_decode_rejection_is_gold_comparable():
    model = small_model(seed=4)
    model.params["b_rej"].data[...] = 50.0  # force the rejection head on
    pred = decode("wat kolo", demo_table(), model)
    assert pred.rejected
    assert pred.sql is None
    assert logic_form_equal(pred.label, Rejection())


def test_decode_span_only_value_is_question_substring():
    model = small_model(seed=4)
    question = "wat kolo wen fabolo iz bakelo"
    for seed in range(6):
        pred = decode(question, demo_table(), small_model(seed=seed))
        if pred.rejected:
            continue
        for cond in pred.sql.conditions:
            assert cond.value in question


def test_decode_is_deterministic():
    model = small_model(seed=7)
    question = "wat kolo wen fabolo iz bakelo"
    a = decode(question, demo_table(), model, Resolver.END2END)
    b = decode(question, demo_table(), model, Resolver.END2END)
    assert a.rejected == b.rejected
    assert a.sql == b.sql


def test_decode_offline_resolver_snaps_text_values_to_cells():
    table = demo_table()
    for seed in range(8):
        pred = decode("wat kolo wen fabolo iz bakelo", table, small_model(seed=seed),
                      Resolver.OFFLINE)
        if pred.rejected:
            continue
        for cond in pred.sql.conditions:
            if table.columns[cond.col_index].dtype.value == "text":
                assert cond.value in table.column_values(cond.col_index)


def test_decode_end2end_resolver_emits_cell_values_for_text_columns():
    table = demo_table()
    for seed in range(8):
        pred = decode("wat kolo wen fabolo iz bakelo", table, small_model(seed=seed),
                      Resolver.END2END)
        if pred.rejected:
            continue
        for cond in pred.sql.conditions:
            if table.columns[cond.col_index].dtype.value == "text":
                assert cond.value in table.column_values(cond.col_index)


def test_decode_connector_set_only_for_multiple_conditions():
    for seed in range(10):
        pred = decode("wat kolo wen fabolo iz bakelo", demo_table(), small_model(seed=seed))
        if pred.rejected:
            continue
        if len(pred.sql.conditions) <= 1:
            assert pred.sql.connector is Connector.NONE
        else:
            assert pred.sql.connector in (Connector.AND, Connector.OR)


def test_decode_candidates_never_reject_and_lead_with_base():
    model = small_model(seed=4)
    question = "wat kolo wen fabolo iz bakelo"
    table = demo_table()
    cands = decode_candidates(question, table, model, budget=8)
    assert 1 <= len(cands) <= 8
    assert all(not c.rejected for c in cands)
    base = decode(question, table, model)
    if not base.rejected:
        assert cands[0].sql == base.sql
    # pairwise distinct logic forms
    for i in range(len(cands)):
        for j in range(i + 1, len(cands)):
            assert not logic_form_equal(cands[i].sql, cands[j].sql)


def test_decode_candidates_even_when_rejection_head_fires():
    model = small_model(seed=4)
    model.params["b_rej"].data[...] = 50.0
    cands = decode_candidates("wat kolo", demo_table(), model, budget=4)
    assert cands and all(not c.rejected for c in cands)


# ------------------------------------------------------------------ training


@pytest.fixture(scope="module")
def tiny_corpus():
    return build_corpus(
        GenConfig(seed=9, n_tables=5, n_questions_per_table=24, entity_link_rate=0.25)
    )


def test_locate_gold_span_finds_verbatim_and_perturbed_values(tiny_corpus):
    checked_plain = checked_perturbed = 0
    for ex in tiny_corpus.examples:
        if not ex.answerable:
            continue
        for cond in ex.gold.conditions:
            start, end = locate_gold_span(ex, cond, tiny_corpus.lexicon)
            surface = " ".join(ex.tokens[start : end + 1])
            if surface == cond.value:
                checked_plain += 1
            else:
                assert tiny_corpus.lexicon.lookup(ex.table_id, surface) == cond.value
                checked_perturbed += 1
    assert checked_plain > 20
    assert checked_perturbed > 10


def test_locate_gold_span_missing_surface_raises(tiny_corpus):
    ex = next(e for e in tiny_corpus.examples if e.answerable)
    fake = Condition(0, CondOp.EQ, "zzzznotthere")
    with pytest.raises(ContractViolation):
        locate_gold_span(ex, fake, tiny_corpus.lexicon)


def test_gold_cell_row_rules():
    table = demo_table()
    assert gold_cell_row(table, Condition(0, CondOp.EQ, "damilo")) == 1
    assert gold_cell_row(table, Condition(0, CondOp.NEQ, "bakelo")) == 0
    assert gold_cell_row(table, Condition(1, CondOp.EQ, "120")) == 0
    assert gold_cell_row(table, Condition(1, CondOp.GT, "100")) is None
    assert gold_cell_row(table, Condition(1, CondOp.EQ, "777")) is None


def test_example_loss_finite_for_every_corpus_example(tiny_corpus):
    model = small_model(seed=1)
    for ex in tiny_corpus.examples:
        table = tiny_corpus.tables.get(ex.table_id)
        loss = example_loss(model, ex, table, tiny_corpus.lexicon, train_cell_head=True)
        assert np.isfinite(loss.data)
        assert loss.data > 0


def test_train_requires_nonempty_splits(tiny_corpus):
    import dataclasses

    empty = dataclasses.replace(
        tiny_corpus, examples=[e for e in tiny_corpus.examples if e.split is Split.TRAIN]
    )
    with pytest.raises(ConfigError):
        train(empty, TrainConfig(epochs=1))


def test_training_loss_decreases_over_three_epochs():
    corpus = build_corpus(
        GenConfig(seed=12, n_tables=14, n_questions_per_table=25, entity_link_rate=0.0)
    )
    config = TrainConfig(hidden_size=24, epochs=3, batch_size=16, learning_rate=3e-3, seed=0)
    _, history = train(corpus, config)
    losses = [h["train_loss"] for h in history]
    assert losses[0] > losses[1] > losses[2]


def test_training_is_byte_deterministic(tiny_corpus):
    config = TrainConfig(hidden_size=12, epochs=2, batch_size=8, seed=5)
    m1, h1 = train(tiny_corpus, config)
    m2, h2 = train(tiny_corpus, config)

    def strip_timing(history):
        return [{k: v for k, v in h.items() if k != "seconds"} for h in history]

    assert strip_timing(h1) == strip_timing(h2)
    for a, b in zip(m1.params.parameters(), m2.params.parameters()):
        assert a.data.tobytes() == b.data.tobytes()


def test_end2end_training_touches_cell_head(tiny_corpus):
    config = TrainConfig(hidden_size=12, epochs=1, batch_size=8, seed=5,
                         resolver=Resolver.END2END)
    model, _ = train(tiny_corpus, config)
    base = new_model(config)
    assert not np.allclose(model.params["w_row"].data, base.params["w_row"].data)


def test_span_only_training_leaves_cell_head_untouched(tiny_corpus):
    config = TrainConfig(hidden_size=12, epochs=1, batch_size=8, seed=5)
    model, _ = train(tiny_corpus, config)
    base = new_model(config)
    assert np.allclose(model.params["w_row"].data, base.params["w_row"].data)


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip_and_byte_stability(tmp_path):
    model = small_model(seed=6)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    assert loaded.params.names() == model.params.names()
    for a, b in zip(model.params.parameters(), loaded.params.parameters()):
        assert np.array_equal(a.data, b.data)
    again = tmp_path / "again.ckpt"
    save_checkpoint(again, loaded)
    assert path.read_bytes() == again.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    model = small_model(seed=6)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    clipped = tmp_path / "clipped.ckpt"
    clipped.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(CheckpointError):
        load_checkpoint(clipped)


def test_checkpoint_preserves_predictions(tmp_path):
    corpus = build_corpus(GenConfig(seed=13, n_tables=4, n_questions_per_table=12))
    config = TrainConfig(hidden_size=12, epochs=1, batch_size=8, seed=2)
    model, _ = train(corpus, config)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    for ex in corpus.split_examples(Split.VALID)[:10]:
        table = corpus.tables.get(ex.table_id)
        a = decode(ex.question, table, model, Resolver.OFFLINE)
        b = decode(ex.question, table, loaded, Resolver.OFFLINE)
        assert a.rejected == b.rejected and a.sql == b.sql
