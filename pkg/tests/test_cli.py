"""Command-line behaviour: exit codes, output formats, seed precedence."""

import json
import subprocess
import sys

import pytest

from sketchsql.cli import main
from sketchsql.corpus.generate import load_corpus
from sketchsql.model import load_checkpoint
from sketchsql.tables import save_tables, TableSet, make_table


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    code = main(["gen-corpus", "--out", str(out), "--seed", "5",
                 "--tables", "4", "--questions-per-table", "12"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def model_path(tmp_path_factory, corpus_dir):
    ckpt = tmp_path_factory.mktemp("model") / "model.ckpt"
    code = main(["train", "--corpus", str(corpus_dir), "--out", str(ckpt),
                 "--epochs", "2", "--hidden-size", "8", "--seed", "3"])
    assert code == 0
    return ckpt


def test_gen_corpus_writes_directory_and_stats(capsys, tmp_path):
    code, out, err = run(capsys, "gen-corpus", "--out", str(tmp_path / "c"),
                         "--seed", "2", "--tables", "3",
                         "--questions-per-table", "8")
    assert code == 0
    stats = json.loads(out)
    assert stats["n_examples"] == 24
    assert "gen-corpus seed=2" in err
    assert "config=" in err
    corpus = load_corpus(str(tmp_path / "c"))
    assert len(corpus.examples) == 24


def test_gen_corpus_is_byte_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert main(["gen-corpus", "--out", str(tmp_path / sub), "--seed", "9",
                     "--tables", "3", "--questions-per-table", "6"]) == 0
    for name in ("tables.jsonl", "examples.jsonl", "lexicon.json", "config.json"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, name


def test_bad_rate_exits_3_with_single_line_error(capsys, tmp_path):
    code, out, err = run(capsys, "gen-corpus", "--out", str(tmp_path / "c"),
                         "--entity-link-rate", "1.5")
    assert code == 3
    assert err.count("\n") == 1
    assert err.startswith("sketchsql: config:")


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_required_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["gen-corpus"])
    assert exc.value.code == 2


def test_env_seed_is_fallback(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("RNG_SEED", "123")
    code, _, err = run(capsys, "gen-corpus", "--out", str(tmp_path / "env"),
                       "--tables", "3", "--questions-per-table", "6")
    assert code == 0
    assert "seed=123" in err
    config = json.loads((tmp_path / "env" / "config.json").read_text())
    assert config["seed"] == 123


def test_flag_beats_config_file_beats_default(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("RNG_SEED", "999")
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"seed": 5, "n_tables": 3, "n_questions_per_table": 6}))
    code, _, err = run(capsys, "gen-corpus", "--out", str(tmp_path / "c1"),
                       "--config", str(cfg), "--seed", "7")
    assert code == 0 and "seed=7" in err
    code, _, err = run(capsys, "gen-corpus", "--out", str(tmp_path / "c2"),
                       "--config", str(cfg))
    assert code == 0 and "seed=5" in err  # config file wins over env


def test_bad_env_seed_is_a_config_error(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("RNG_SEED", "lots")
    code, _, err = run(capsys, "gen-corpus", "--out", str(tmp_path / "c"),
                       "--tables", "3", "--questions-per-table", "6")
    assert code == 3
    assert err.startswith("sketchsql: config:")


def test_train_writes_checkpoint_and_summary(capsys, corpus_dir, tmp_path):
    ckpt = tmp_path / "m.ckpt"
    history = tmp_path / "hist.json"
    code, out, err = run(capsys, "train", "--corpus", str(corpus_dir),
                         "--out", str(ckpt), "--history", str(history),
                         "--epochs", "2", "--hidden-size", "8", "--seed", "3")
    assert code == 0
    summary = json.loads(out)
    assert summary["epoch"] == 1
    assert "train_loss" in summary
    assert "seconds" not in summary  # wall clock stays out of comparable output
    model = load_checkpoint(str(ckpt))
    assert model.config.hidden_size == 8
    records = json.loads(history.read_text())
    assert len(records) == 2


def test_missing_corpus_dir_is_io_error(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--corpus", str(tmp_path / "nope"),
                       "--out", str(tmp_path / "m.ckpt"))
    assert code == 1
    assert "sketchsql: io:" in err


def test_predict_writes_gold_shaped_jsonl(capsys, corpus_dir, model_path, tmp_path):
    out_path = tmp_path / "preds.jsonl"
    code, _, err = run(capsys, "predict", "--corpus", str(corpus_dir),
                       "--model", str(model_path), "--split", "valid",
                       "--out", str(out_path))
    assert code == 0
    lines = out_path.read_text().strip().split("\n")
    corpus = load_corpus(str(corpus_dir))
    assert len(lines) == len([e for e in corpus.examples if e.split.value == "valid"])
    record = json.loads(lines[0])
    assert set(record) == {"table_id", "question", "answerable", "sql", "probabilities"}
    assert (record["sql"] is None) == (not record["answerable"])
    assert "s_col" in record["probabilities"]


def test_predict_resolver_flag_accepts_all_three(capsys, corpus_dir, model_path, tmp_path):
    for resolver in ("span", "offline", "end2end"):
        code, _, _ = run(capsys, "predict", "--corpus", str(corpus_dir),
                         "--model", str(model_path), "--split", "valid",
                         "--resolver", resolver,
                         "--out", str(tmp_path / f"{resolver}.jsonl"))
        assert code == 0


def test_eval_markdown_and_json(capsys, corpus_dir, model_path):
    code, out, _ = run(capsys, "eval", "--corpus", str(corpus_dir),
                       "--model", str(model_path), "--split", "valid")
    assert code == 0
    assert "| s_col |" in out and "| logic form |" in out
    code, out, _ = run(capsys, "eval", "--corpus", str(corpus_dir),
                       "--model", str(model_path), "--split", "valid", "--json")
    assert code == 0
    report = json.loads(out)
    assert 0.0 <= report["lf_accuracy"] <= 1.0
    assert set(report["subtasks"]) == {"s_num", "s_col", "s_agg",
                                       "w_num", "w_col", "w_op", "w_rel"}


def test_eval_egd_flag_runs(capsys, corpus_dir, model_path):
    code, out, _ = run(capsys, "eval", "--corpus", str(corpus_dir),
                       "--model", str(model_path), "--split", "valid",
                       "--egd", "--json")
    assert code == 0
    report = json.loads(out)
    # guided decoding never rejects, so it can only miss unanswerable golds
    assert report["rejection_recall"] == 0.0


def test_exec_prints_flattened_result(capsys, tmp_path):
    table = make_table("t9", "demo", ["name", "size"], ["text", "real"],
                       [["ada", 3.0], ["bix", 2.0]])
    path = tmp_path / "tables.jsonl"
    save_tables(TableSet([table]), str(path))
    q = {"sel": [1], "agg": [4], "cond_conn_op": 0, "conds": []}  # COUNT(size)
    code, out, _ = run(capsys, "exec", "--tables", str(path), "--table", "t9",
                       "--query", json.dumps(q))
    assert code == 0
    assert out.strip() == "[2]"


def test_exec_rows_flatten_in_row_order(capsys, tmp_path):
    table = make_table("t9", "demo", ["name", "size"], ["text", "real"],
                       [["ada", 3.0], ["bix", 2.0]])
    path = tmp_path / "tables.jsonl"
    save_tables(TableSet([table]), str(path))
    q = {"sel": [0, 1], "agg": [0, 0], "cond_conn_op": 0, "conds": []}
    code, out, _ = run(capsys, "exec", "--tables", str(path), "--table", "t9",
                       "--query", json.dumps(q))
    assert code == 0
    assert out.strip() == "[ada, 3, bix, 2]"


def test_exec_bad_query_json_is_single_line_error(capsys, tmp_path):
    table = make_table("t9", "demo", ["name"], ["text"], [["ada"]])
    path = tmp_path / "tables.jsonl"
    save_tables(TableSet([table]), str(path))
    code, _, err = run(capsys, "exec", "--tables", str(path), "--table", "t9",
                       "--query", "{not json")
    assert code == 1
    assert err.count("\n") == 1
    assert err.startswith("sketchsql: json:")


def test_grad_check_reports_three_passing_groups(capsys):
    code, out, _ = run(capsys, "grad-check")
    assert code == 0
    assert out.count("PASS") == 3
    assert "FAIL" not in out


def test_console_entry_point_round_trips(tmp_path):
    out = tmp_path / "c"
    proc = subprocess.run(
        [sys.executable, "-m", "sketchsql.cli", "gen-corpus", "--out", str(out),
         "--seed", "4", "--tables", "3", "--questions-per-table", "6"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["n_examples"] == 18
