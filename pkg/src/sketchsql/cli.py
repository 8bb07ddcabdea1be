"""Command-line front door: corpus generation, training, prediction, scoring,
query execution, and a gradient self-check.

Exit codes: 0 on success, 2 for usage errors (argparse), 3 for bad
configuration, 1 for anything else. Errors are a single machine-readable
line on stderr: `sketchsql: <kind>: <message>`.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from sketchsql.corpus.config import GenConfig, config_hash
from sketchsql.corpus.examples import Split
from sketchsql.corpus.generate import build_corpus, load_corpus, save_corpus
from sketchsql.errors import ConfigError, SketchSqlError
from sketchsql.evaluation import egd_decode, score
from sketchsql.executor import execute
from sketchsql.model import (
    Resolver,
    TrainConfig,
    decode,
    load_checkpoint,
    save_checkpoint,
    train,
)
from sketchsql.sql import render_number, sql_from_json, sql_to_json
from sketchsql.tables import load_tables

GRAD_TOL = 1e-4


def _log(*parts):
    print("sketchsql:", *parts, file=sys.stderr)


def _env_seed():
    raw = os.environ.get("RNG_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"RNG_SEED must be an integer, got {raw!r}")


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _resolver(name: str) -> Resolver:
    return Resolver(name)


def _split(name: str) -> Split:
    return Split(name)


# ------------------------------------------------------------- subcommands


def _build_gen_config(args) -> GenConfig:
    base = GenConfig.from_json(_load_json(args.config)) if args.config else GenConfig()
    overrides = {}
    for flag, field in (
        ("tables", "n_tables"),
        ("questions_per_table", "n_questions_per_table"),
        ("unanswerable_rate", "unanswerable_rate"),
        ("entity_link_rate", "entity_link_rate"),
        ("schema_omission_rate", "schema_omission_rate"),
        ("seed", "seed"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    if "seed" not in overrides and args.config is None:
        env = _env_seed()
        if env is not None:
            overrides["seed"] = env
    config = dataclasses.replace(base, **overrides)
    config.validate()
    return config


def cmd_gen_corpus(args) -> int:
    config = _build_gen_config(args)
    _log(f"gen-corpus seed={config.seed} config={config_hash(config.to_json())}")
    corpus = build_corpus(config)
    save_corpus(corpus, args.out)
    print(json.dumps(corpus.stats, sort_keys=True))
    return 0


def _build_train_config(args) -> TrainConfig:
    base = TrainConfig.from_json(_load_json(args.config)) if args.config else TrainConfig()
    overrides = {}
    for flag, field in (
        ("hidden_size", "hidden_size"),
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("learning_rate", "learning_rate"),
        ("seed", "seed"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    if args.resolver is not None:
        overrides["resolver"] = _resolver(args.resolver)
    if "seed" not in overrides and args.config is None:
        env = _env_seed()
        if env is not None:
            overrides["seed"] = env
    config = dataclasses.replace(base, **overrides)
    config.validate()
    return config


def cmd_train(args) -> int:
    config = _build_train_config(args)
    _log(f"train seed={config.seed} config={config_hash(config.to_json())}")
    corpus = load_corpus(args.corpus)
    model, history = train(corpus, config)
    save_checkpoint(args.out, model)
    if args.history:
        with open(args.history, "w", encoding="utf-8") as fh:
            json.dump(history, fh, sort_keys=True, indent=2)
            fh.write("\n")
    last = {k: v for k, v in history[-1].items() if k != "seconds"}
    print(json.dumps(last, sort_keys=True))
    return 0


def _decode_split(args, corpus, model):
    examples = corpus.split_examples(_split(args.split))
    resolver = _resolver(args.resolver)
    out = []
    for ex in examples:
        table = corpus.tables.get(ex.table_id)
        if args.egd:
            out.append(egd_decode(ex.question, table, model, resolver=resolver))
        else:
            out.append(decode(ex.question, table, model, resolver=resolver))
    return examples, out


def cmd_predict(args) -> int:
    corpus = load_corpus(args.corpus)
    model = load_checkpoint(args.model)
    examples, predictions = _decode_split(args, corpus, model)
    with open(args.out, "w", encoding="utf-8") as fh:
        for ex, pred in zip(examples, predictions):
            record = {
                "table_id": ex.table_id,
                "question": ex.question,
                "answerable": not pred.rejected,
                "sql": sql_to_json(pred.label),
                "probabilities": {
                    k: np.asarray(v).tolist() for k, v in pred.probabilities.items()
                },
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            fh.write("\n")
    _log(f"predict wrote {len(predictions)} records to {args.out}")
    return 0


def cmd_eval(args) -> int:
    corpus = load_corpus(args.corpus)
    model = load_checkpoint(args.model)
    examples, predictions = _decode_split(args, corpus, model)
    report = score(predictions, examples, corpus.tables)
    if args.json:
        print(json.dumps(dataclasses.asdict(report), sort_keys=True))
    else:
        print(report.markdown())
    return 0


def cmd_exec(args) -> int:
    tables = load_tables(args.tables)
    table = tables.get(args.table)
    raw = sys.stdin.read() if args.query == "-" else args.query
    label = sql_from_json(json.loads(raw))
    if label is None:
        raise ConfigError("cannot execute a rejection")
    result = execute(label, table)
    cells = [
        render_number(v) if isinstance(v, float) else str(v)
        for row in result.rows
        for v in row
    ]
    print("[" + ", ".join(cells) + "]")
    return 0


GRAD_GROUPS = {
    "span-pointer": ("u_start", "w_start", "u_end", "w_end",
                     "p_col", "p_op", "p_attq", "op_emb"),
    "cell-attention": ("w_row", "w_cellq"),
    "sketch-heads": ("w_scol", "a_scol", "b_scol", "w_wcol", "a_wcol", "a_cell",
                     "b_wcol", "w_rej_q", "w_rej_s", "w_rej_w", "w_rejatt",
                     "a_rej", "b_rej", "w_snum", "b_snum", "w_rel", "b_rel"),
}


def cmd_grad_check(args) -> int:
    """Differentiate one full training loss against central differences.

    The loss covers every head (sketch, rejection, span pointer, cell
    attention), so the three groups together certify the whole backward
    path at eps 1e-5 / tolerance 1e-4. Initialization-scale activations
    sit below the finite-difference noise floor, so parameters are redrawn
    at a working magnitude first.
    """
    from sketchsql.autograd.checking import grad_check
    from sketchsql.corpus.examples import Category, Example, Lexicon
    from sketchsql.model import new_model
    from sketchsql.model.training import example_loss
    from sketchsql.sql import Agg, CondOp, Condition, query
    from sketchsql.tables import make_table

    model = new_model(TrainConfig(hidden_size=8, seed=0))
    rng = np.random.default_rng(args.seed)
    for p in model.params.parameters():
        p.data[...] = rng.uniform(-0.5, 0.5, p.data.shape)
    table = make_table("t", "x", ["ab", "cd"], ["text", "real"],
                       [["aa", 1.0], ["bb", 2.0]])
    example = Example(
        table_id="t",
        question="wat ab wen ab iz aa",
        gold=query([(0, Agg.NONE)], [Condition(0, CondOp.EQ, "aa")]),
        category=Category.NONE,
        split=Split.TRAIN,
    )

    def build():
        return example_loss(model, example, table, Lexicon(), train_cell_head=True)

    failed = False
    for name, group in GRAD_GROUPS.items():
        err = grad_check(build, [model.params[p] for p in group])
        ok = err < GRAD_TOL
        failed |= not ok
        print(f"{name}: max rel err {err:.2e} "
              f"{'PASS' if ok else f'FAIL (tol {GRAD_TOL:g})'}")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sketchsql", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corpus", help="generate a synthetic corpus directory")
    g.add_argument("--out", required=True)
    g.add_argument("--config", help="JSON file of generation settings")
    g.add_argument("--seed", type=int)
    g.add_argument("--tables", type=int)
    g.add_argument("--questions-per-table", type=int, dest="questions_per_table")
    g.add_argument("--unanswerable-rate", type=float, dest="unanswerable_rate")
    g.add_argument("--entity-link-rate", type=float, dest="entity_link_rate")
    g.add_argument("--schema-omission-rate", type=float, dest="schema_omission_rate")
    g.set_defaults(fn=cmd_gen_corpus)

    t = sub.add_parser("train", help="fit a model on a corpus directory")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--history", help="write per-epoch history JSON here")
    t.add_argument("--config", help="JSON file of training settings")
    t.add_argument("--seed", type=int)
    t.add_argument("--hidden-size", type=int, dest="hidden_size")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--learning-rate", type=float, dest="learning_rate")
    t.add_argument("--resolver", choices=[r.value for r in Resolver])
    t.set_defaults(fn=cmd_train)

    for name, fn in (("predict", cmd_predict), ("eval", cmd_eval)):
        p = sub.add_parser(name)
        p.add_argument("--corpus", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--split", default="test", choices=[s.value for s in Split])
        p.add_argument("--resolver", default="span", choices=[r.value for r in Resolver])
        p.add_argument("--egd", action="store_true", help="execution-guided decoding")
        if name == "predict":
            p.add_argument("--out", required=True)
        else:
            p.add_argument("--json", action="store_true", help="JSON instead of markdown")
        p.set_defaults(fn=fn)

    e = sub.add_parser("exec", help="run one query against a stored table")
    e.add_argument("--tables", required=True, help="tables.jsonl path")
    e.add_argument("--table", required=True, help="table id")
    e.add_argument("--query", required=True, help="query JSON, or - for stdin")
    e.set_defaults(fn=cmd_exec)

    c = sub.add_parser("grad-check", help="finite-difference check of the loss")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_grad_check)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        _log(f"config: {exc}")
        return 3
    except FileNotFoundError as exc:
        _log(f"io: {exc}")
        return 1
    except json.JSONDecodeError as exc:
        _log(f"json: {exc}")
        return 1
    except SketchSqlError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
