"""Parameter registry, initialization, and byte-stable checkpoints.

A checkpoint is: magic, an 8-byte little-endian manifest length, a JSON
manifest (version, training config, parameter names/shapes in order), then
the raw float64 little-endian buffers concatenated in manifest order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from sketchsql.autograd import Parameter
from sketchsql.chars import CharVocab
from sketchsql.errors import CheckpointError, ContractViolation
from sketchsql.model.config import TrainConfig
from sketchsql.model.layers import LstmWeights

MAGIC = b"SKSQLCKPT1\n"
INIT_SCALE = 0.08

# Decode caps: the sketch heads are sized for at most this many select
# columns and conditions.
MAX_SELECT = 3
MAX_COND = 4

N_AGG = 6
N_OP = 4
N_REL = 3
N_DTYPE = 2


class ParamRegistry:
    """Ordered name -> Parameter map; each name registers exactly once."""

    def __init__(self):
        self._by_name = {}

    def add(self, name: str, data) -> Parameter:
        if name in self._by_name:
            raise ContractViolation(f"parameter {name!r} registered twice")
        param = Parameter(name, data)
        self._by_name[name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        try:
            return self._by_name[name]
        except KeyError:
            raise ContractViolation(f"unknown parameter {name!r}") from None

    def __contains__(self, name):
        return name in self._by_name

    def __len__(self):
        return len(self._by_name)

    def names(self) -> list:
        return list(self._by_name)

    def parameters(self) -> list:
        return list(self._by_name.values())

    def n_values(self) -> int:
        return sum(p.data.size for p in self._by_name.values())

    def lstm(self, prefix: str) -> LstmWeights:
        return LstmWeights(
            wx=self[f"{prefix}.wx"], wh=self[f"{prefix}.wh"], b=self[f"{prefix}.b"]
        )


def _add_lstm(reg: ParamRegistry, rng, prefix: str, n_in: int, hidden: int):
    reg.add(f"{prefix}.wx", rng.uniform(-INIT_SCALE, INIT_SCALE, (n_in, 4 * hidden)))
    reg.add(f"{prefix}.wh", rng.uniform(-INIT_SCALE, INIT_SCALE, (hidden, 4 * hidden)))
    bias = np.zeros(4 * hidden)
    bias[hidden : 2 * hidden] = 1.0  # open forget gates at the start
    reg.add(f"{prefix}.b", bias)


def build_params(config: TrainConfig) -> ParamRegistry:
    """All model parameters, uniform(-0.08, 0.08) init, seeded by config."""
    config.validate()
    d = config.hidden_size
    half = d // 2
    n_chars = CharVocab(config.alphabet).size
    rng = np.random.default_rng(config.seed)
    reg = ParamRegistry()

    def u(name, *shape):
        reg.add(name, rng.uniform(-INIT_SCALE, INIT_SCALE, shape))

    u("char_emb", n_chars, d)
    _add_lstm(reg, rng, "q_fwd", d, half)
    _add_lstm(reg, rng, "q_bwd", d, half)
    _add_lstm(reg, rng, "col_fwd", d, half)
    _add_lstm(reg, rng, "col_bwd", d, half)
    _add_lstm(reg, rng, "cell_fwd", d, half)
    _add_lstm(reg, rng, "cell_bwd", d, half)
    u("dtype_emb", N_DTYPE, d)
    u("w_att", d)

    # Column-question interaction feature f_c shared by the sketch heads.
    # Inputs: recurrent column state, attended question context, and the
    # question states at the column's lexical matches (position signals):
    # first and last name match, plus the best cell-content match.
    u("w_int", d, d)
    u("w_feat", d, 5 * d)

    u("w_scol", d)
    reg.add("a_scol", np.float64(2.0))  # lexical-overlap prior
    u("b_scol")
    u("w_wcol", d)
    reg.add("a_wcol", np.float64(2.0))
    reg.add("a_cell", np.float64(2.0))  # token-to-cell match prior
    u("b_wcol")
    u("w_agg", d, N_AGG)
    u("w_aggq", N_AGG, d)
    u("b_agg", N_AGG)
    u("w_opsel", d, N_OP)
    u("w_opq", N_OP, d)
    u("b_opsel", N_OP)
    u("w_snum", MAX_SELECT, d)
    u("b_snum", MAX_SELECT)
    u("w_wnum", MAX_COND + 1, d)
    u("b_wnum", MAX_COND + 1)
    u("w_rel", N_REL, d)
    u("b_rel", N_REL)
    u("w_rej_q", d)
    u("w_rej_s")
    u("w_rej_w")
    # Attended schema-groundedness: a learned attention over question tokens
    # pools each token's best name-cosine; a question asking about a column
    # that does not exist scores low exactly where the attention looks.
    u("w_rejatt", d)
    reg.add("a_rej", np.float64(-2.0))
    u("b_rej")

    # Span pointer over question tokens.
    u("op_emb", N_OP, d)
    u("p_col", d, d)
    u("p_op", d, d)
    u("p_attq", d, d)
    u("u_start", 4 * d, d)
    u("w_start", d)
    u("u_end", 4 * d, d)
    u("w_end", d)

    # Cell-attention value head.
    u("w_cellq", d, 4 * d)
    u("w_row", d)
    reg.add("a_value", np.float64(4.0))  # span-to-cell string-match prior
    return reg


@dataclass
class Model:
    """Parameters plus the config and character vocabulary they assume."""

    params: ParamRegistry
    config: TrainConfig
    vocab: CharVocab


def new_model(config: TrainConfig) -> Model:
    return Model(
        params=build_params(config),
        config=config,
        vocab=CharVocab(config.alphabet),
    )


def save_checkpoint(path, model: Model) -> None:
    manifest = {
        "version": 1,
        "config": model.config.to_json(),
        "params": [
            {"name": p.name, "shape": list(p.data.shape)}
            for p in model.params.parameters()
        ],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in model.params.parameters():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a model checkpoint")
    offset = len(MAGIC)
    if len(raw) < offset + 8:
        raise CheckpointError(f"{path}: truncated manifest length")
    (manifest_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    try:
        manifest = json.loads(raw[offset : offset + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad manifest: {exc}") from None
    offset += manifest_len
    if manifest.get("version") != 1:
        raise CheckpointError(f"{path}: unsupported version {manifest.get('version')!r}")

    config = TrainConfig.from_json(manifest["config"])
    reg = ParamRegistry()
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated data for {entry['name']!r}")
        data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        reg.add(entry["name"], data.reshape(shape).copy())
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return Model(params=reg, config=config, vocab=CharVocab(config.alphabet))
