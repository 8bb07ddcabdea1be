"""Generator calibration, perturbation contracts, and corpus persistence."""

import hashlib
import json
import os

import numpy as np
import pytest

from sketchsql.corpus import vocab as V
from sketchsql.corpus.config import GenConfig, config_hash, default_category_weights
from sketchsql.corpus.examples import (Category, Example, Lexicon, Split,
                                       example_from_json, load_examples, save_examples)
from sketchsql.corpus.generate import (build_corpus, load_corpus, make_unanswerable,
                                       realize_question, sample_query, sample_table,
                                       save_corpus)
from sketchsql.corpus.perturb import abbreviate, eligible_conditions, perturb
from sketchsql.errors import ConfigError, ContractViolation, InapplicablePerturbation
from sketchsql.executor import execute
from sketchsql.sql import REJECTED, Agg, Connector, CondOp, query, validate
from sketchsql.tables import ColType, make_table, table_to_json


def rng(seed=0):
    return np.random.default_rng(np.random.PCG64(seed))


CFG = GenConfig(seed=3, n_tables=9, n_questions_per_table=20)


# ------------------------------------------------------------------- config


def test_config_validates_defaults():
    GenConfig().validate()


@pytest.mark.parametrize("bad", [
    dict(unanswerable_rate=1.5),
    dict(split_fractions=(0.5, 0.5, 0.5)),
    dict(mean_conditions=4.0),
    dict(n_tables=2),
    dict(category_weights={Category.ALIAS: 1.5, Category.OTHER: -0.5}),
])
def test_config_rejects_bad_values(bad):
    with pytest.raises(ConfigError):
        GenConfig(**bad).validate()


def test_config_json_round_trip_and_unknown_field():
    cfg = GenConfig(seed=11, entity_link_rate=0.25)
    again = GenConfig.from_json(cfg.to_json())
    assert again == cfg
    assert config_hash(cfg.to_json()) == config_hash(again.to_json())
    with pytest.raises(ConfigError):
        GenConfig.from_json({"bogus_field": 1})


# ------------------------------------------------------------------- tables


def test_sample_table_deterministic():
    a = sample_table(rng(5), CFG, table_id="t")
    b = sample_table(rng(5), CFG, table_id="t")
    assert table_to_json(a) == table_to_json(b)


def test_sample_table_has_both_types_and_valid_reals():
    for seed in range(20):
        t = sample_table(rng(seed), CFG)
        dtypes = {c.dtype for c in t.columns}
        assert dtypes == {ColType.TEXT, ColType.REAL}
        for i, c in enumerate(t.columns):
            if c.dtype is ColType.REAL:
                assert all(isinstance(v, float) for v in t.column_values(i))


def test_sample_table_column_count_calibration():
    g = rng(123)
    counts = [sample_table(g, CFG).n_cols for _ in range(10_000)]
    assert abs(np.mean(counts) - 7.2) < 0.5


def test_sample_table_row_count_centered():
    g = rng(321)
    counts = [sample_table(g, CFG).n_rows for _ in range(2_000)]
    assert abs(np.mean(counts) - 41.5) < 1.5


# ------------------------------------------------------------------ queries


def test_sample_query_valid_and_satisfiable():
    g = rng(9)
    for seed in range(30):
        t = sample_table(rng(100 + seed), CFG)
        q = sample_query(t, g, CFG)
        assert validate(q, t) == []
        assert not execute(q, t).empty


def test_sample_query_condition_count_calibration():
    t = sample_table(rng(1), CFG)
    g = rng(2)
    counts = [len(sample_query(t, g, CFG).conditions) for _ in range(10_000)]
    assert abs(np.mean(counts) - 1.6) < 0.1


def test_sample_query_select_count_calibration():
    t = sample_table(rng(1), CFG)
    g = rng(3)
    counts = [len(sample_query(t, g, CFG).select) for _ in range(5_000)]
    assert abs(np.mean(counts) - 1.1) < 0.05


def test_multi_condition_queries_have_real_connector():
    t = sample_table(rng(1), CFG)
    g = rng(4)
    seen = set()
    for _ in range(300):
        q = sample_query(t, g, CFG)
        if len(q.conditions) > 1:
            assert q.connector is not Connector.NONE
            seen.add(q.connector)
    assert seen == {Connector.AND, Connector.OR}


# ---------------------------------------------------------------- questions


def test_realize_question_quotes_values_verbatim():
    t = sample_table(rng(1), CFG)
    g = rng(5)
    for _ in range(50):
        q = sample_query(t, g, CFG)
        text = realize_question(q, t, g, omission_rate=0.5)
        for cond in q.conditions:
            assert cond.value in text.split() or cond.value in text


def test_realize_question_schema_omission():
    t = _fixture_table()
    q = query([(1, Agg.NONE)], [(0, CondOp.EQ, "bakelori")])
    kept = realize_question(q, t, rng(7), omission_rate=0.0)
    dropped = realize_question(q, t, rng(7), omission_rate=1.0)
    assert t.header[0] in kept.split()
    assert t.header[0] not in dropped.split()
    assert "bakelori" in dropped  # the value survives omission


def test_realize_question_deterministic():
    t = sample_table(rng(1), CFG)
    q = sample_query(t, rng(8), CFG)
    assert realize_question(q, t, rng(9)) == realize_question(q, t, rng(9))


# ------------------------------------------------------------ perturbations


def _example_for(table, q, g, split=Split.TRAIN):
    text = realize_question(q, table, g, omission_rate=0.0)
    return Example(table.id, text, q, Category.NONE, split)


def _fixture_table():
    return make_table(
        "tfix", "fixture",
        ["dinola", "fika"],
        ["text", "real"],
        [["bakelori", 20000.0], ["bakufani", 3000.0], ["bakelori", 170000.0]],
    )


def test_abbreviate_is_initials_plus_final():
    assert abbreviate("bakelo") == "bklo"
    assert abbreviate("bakelori") == "bklri"


def test_perturb_each_text_category_hides_the_value():
    vocab = V.default_vocabulary()
    word = vocab.text_attrs[0].values[0]
    attr = vocab.text_attrs[0].name
    t = make_table("t1", "n", [attr, "fika"], ["text", "real"],
                   [[word, 5.0], [vocab.text_attrs[0].values[1], 7.0]])
    for cat in (Category.ABBREVIATION, Category.ALIAS, Category.ADAPTATION, Category.OTHER):
        lex = Lexicon()
        q = query([(1, Agg.NONE)], [(0, CondOp.EQ, word)])
        ex = _example_for(t, q, rng(1))
        out = perturb(ex, cat, rng(2), table=t, vocabulary=vocab, lexicon=lex)
        assert word not in out.question
        assert out.gold == ex.gold
        assert out.category is cat
        surfaces = lex.surfaces_for("t1", word)
        assert len(surfaces) == 1 and surfaces[0] in out.question


def test_perturb_alias_shares_no_letters():
    vocab = V.default_vocabulary()
    word = vocab.text_attrs[2].values[3]
    assert set(vocab.alias_of[word]) & set(word) == set()


def test_perturb_number_format_and_unit():
    vocab = V.default_vocabulary()
    t = _fixture_table()
    lex = Lexicon()
    q = query([(0, Agg.NONE)], [(1, CondOp.EQ, "170000")])
    ex = _example_for(t, q, rng(3))
    out = perturb(ex, Category.NUMBER_FORMAT, rng(4), table=t, vocabulary=vocab, lexicon=lex)
    assert "170000" not in out.question
    assert "170k" in out.question or "170,000" in out.question

    out2 = perturb(ex, Category.UNIT_MISMATCH, rng(5), table=t, vocabulary=vocab, lexicon=lex)
    assert "170000" not in out2.question
    assert f"17 {V.MYRIAD_WORD}" in out2.question
    assert lex.lookup("tfix", f"17 {V.MYRIAD_WORD}") == "170000"


def test_perturb_inapplicable_cases():
    vocab = V.default_vocabulary()
    t = _fixture_table()
    lex = Lexicon()
    text_q = query([(1, Agg.NONE)], [(0, CondOp.EQ, "bakelori")])
    ex_text = _example_for(t, text_q, rng(6))
    with pytest.raises(InapplicablePerturbation):
        perturb(ex_text, Category.NUMBER_FORMAT, rng(7), table=t, vocabulary=vocab, lexicon=lex)

    gt_q = query([(0, Agg.NONE)], [(1, CondOp.GT, "2999")])
    with pytest.raises(InapplicablePerturbation):
        perturb(_example_for(t, gt_q, rng(8)), Category.NUMBER_FORMAT, rng(9),
                table=t, vocabulary=vocab, lexicon=lex)

    unans = make_unanswerable(t, rng(10))
    with pytest.raises(InapplicablePerturbation):
        perturb(unans, Category.ALIAS, rng(11), table=t, vocabulary=vocab, lexicon=lex)


def test_eligible_conditions_respects_category_rules():
    t = _fixture_table()
    q = query([(0, Agg.NONE)],
              [(0, CondOp.EQ, "bakelori"), (1, CondOp.EQ, "20000")], Connector.AND)
    ex = _example_for(t, q, rng(12))
    assert eligible_conditions(ex, t, Category.ALIAS) == [0]
    assert eligible_conditions(ex, t, Category.NUMBER_FORMAT) == [1]
    assert eligible_conditions(ex, t, Category.UNIT_MISMATCH) == [1]


# -------------------------------------------------------------- unanswerable


def test_make_unanswerable_queries_absent_attribute():
    t = sample_table(rng(1), CFG)
    ex = make_unanswerable(t, rng(13))
    assert ex.gold is REJECTED
    asked = ex.question.split()[1]
    assert asked not in t.header
    assert asked in V.default_vocabulary().attr_names


def test_make_unanswerable_deterministic():
    t = sample_table(rng(1), CFG)
    assert make_unanswerable(t, rng(14)).question == make_unanswerable(t, rng(14)).question


# ------------------------------------------------------------- whole corpus


@pytest.fixture(scope="module")
def corpus():
    return build_corpus(CFG)


def test_splits_are_table_disjoint(corpus):
    ids = {s: {e.table_id for e in corpus.examples if e.split is s} for s in Split}
    assert ids[Split.TRAIN] and ids[Split.VALID] and ids[Split.TEST]
    assert not ids[Split.TRAIN] & ids[Split.VALID]
    assert not ids[Split.TRAIN] & ids[Split.TEST]
    assert not ids[Split.VALID] & ids[Split.TEST]


def test_corpus_rates_match_config(corpus):
    stats = corpus.stats
    assert abs(stats["unanswerable_rate"]["measured"] - CFG.unanswerable_rate) < 0.02
    assert abs(stats["entity_link_rate"]["measured"] - CFG.entity_link_rate) < 0.02
    shares = stats["category_share_of_linked"]
    for cat, weight in default_category_weights().items():
        assert abs(shares[cat.value] - weight) < 0.02


def test_corpus_answerable_examples_execute_nonempty(corpus):
    for e in corpus.examples:
        if e.answerable:
            assert not execute(e.gold, corpus.tables.get(e.table_id)).empty


def test_corpus_linking_invariid_verbatim_rule(corpus):
    for e in corpus.examples:
        if not e.answerable:
            continue
        verbatim = [c.value in e.question for c in e.gold.conditions]
        if e.category is Category.NONE:
            assert all(verbatim)
        else:
            assert not all(verbatim)


def test_corpus_lexicon_covers_perturbed_values(corpus):
    for e in corpus.examples:
        if e.category is Category.NONE or not e.answerable:
            continue
        hidden = [c.value for c in e.gold.conditions if c.value not in e.question]
        covered = False
        for value in hidden:
            for surface in corpus.lexicon.surfaces_for(e.table_id, value):
                if surface in e.question:
                    covered = True
        assert covered, e


def test_corpus_persistence_byte_identical(tmp_path):
    cfg = GenConfig(seed=21, n_tables=6, n_questions_per_table=10)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    save_corpus(build_corpus(cfg), d1)
    save_corpus(build_corpus(cfg), d2)
    for name in ("tables.jsonl", "examples.jsonl", "lexicon.json", "stats.json", "config.json"):
        h1 = hashlib.sha256((d1 / name).read_bytes()).hexdigest()
        h2 = hashlib.sha256((d2 / name).read_bytes()).hexdigest()
        assert h1 == h2, name


def test_corpus_load_round_trip(tmp_path, corpus):
    save_corpus(corpus, tmp_path / "c")
    loaded = load_corpus(tmp_path / "c")
    assert [e.to_json() for e in loaded.examples] == [e.to_json() for e in corpus.examples]
    assert sorted(loaded.tables.ids()) == sorted(corpus.tables.ids())
    assert loaded.config == corpus.config
    assert loaded.lexicon.to_json() == corpus.lexicon.to_json()


def test_example_json_round_trip(corpus):
    for e in corpus.examples[:50]:
        assert example_from_json(e.to_json()) == e


def test_example_json_rejects_contradiction():
    with pytest.raises(Exception):
        example_from_json({"table_id": "t", "question": "q", "answerable": True,
                           "sql": None, "category": "none", "split": "train"})


def test_build_corpus_rejects_overfull_rates():
    with pytest.raises(ConfigError):
        build_corpus(GenConfig(unanswerable_rate=0.6, entity_link_rate=0.6))
