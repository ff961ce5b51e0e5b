"""Multi-gate mixture-of-experts recommender, written directly in numpy.

Two feed-forward expert networks share their outputs between a confidence
tower (sigmoid head, weighted cross-entropy with a gate-entropy bonus) and
a ranking tower (linear head, margin plus pairwise-logistic loss), each
behind its own softmax gate. Gradients are analytic; training runs plain
seeded mini-batch gradient descent in two stages with hard parameter
freezing.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CheckpointError, TrainingDivergedError
from .util import atomic_write_bytes, derive_seed

CHECKPOINT_MAGIC = b"MGMOE\x01\n"
CHECKPOINT_VERSION = 1

TOWER_CONF = "conf"
TOWER_RANK = "rank"


@dataclass(frozen=True)
class ModelDims:
    input_dim: int
    expert_hidden_dim: int = 256
    expert_out_dim: int = 128
    tower_hidden_dim: int = 64


@dataclass(frozen=True)
class TrainConfig:
    n_experts: int = 3
    epochs_total: int = 100
    stage_boundary: int = 50
    lambda_entropy: float = 0.01
    lambda_auc: float = 0.5
    margin: float = 1.0
    learning_rate: float = 1e-2
    batch_size: int = 64
    seed: int = 0
    # The gate-entropy term rewards balanced expert usage by default;
    # flipping this turns it into a penalty for ablation runs.
    entropy_bonus: bool = True


@dataclass
class MmoeModel:
    dims: ModelDims
    n_experts: int
    params: dict[str, np.ndarray] = field(default_factory=dict)


def param_specs(dims: ModelDims, n_experts: int) -> list[tuple[str, tuple[int, ...], int, int]]:
    """(name, shape, fan_in, fan_out) for every parameter, in a fixed order."""
    specs: list[tuple[str, tuple[int, ...], int, int]] = []
    d, h, o, t = dims.input_dim, dims.expert_hidden_dim, dims.expert_out_dim, dims.tower_hidden_dim
    for i in range(n_experts):
        specs.append((f"expert{i}.w1", (h, d), d, h))
        specs.append((f"expert{i}.b1", (h,), d, h))
        specs.append((f"expert{i}.w2", (o, h), h, o))
        specs.append((f"expert{i}.b2", (o,), h, o))
    for tower in (TOWER_CONF, TOWER_RANK):
        specs.append((f"gate.{tower}.w", (n_experts, d), d, n_experts))
        specs.append((f"gate.{tower}.b", (n_experts,), d, n_experts))
    for tower in (TOWER_CONF, TOWER_RANK):
        specs.append((f"tower.{tower}.w1", (t, o), o, t))
        specs.append((f"tower.{tower}.b1", (t,), o, t))
        specs.append((f"tower.{tower}.w2", (t,), t, 1))
        specs.append((f"tower.{tower}.b2", (), t, 1))
    return specs


def parameter_count(dims: ModelDims, n_experts: int) -> int:
    return sum(int(np.prod(shape, dtype=np.int64)) for _, shape, _, _ in param_specs(dims, n_experts))


def init_model(dims: ModelDims, n_experts: int, seed: int) -> MmoeModel:
    """Seeded uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out))."""
    if n_experts < 1:
        raise ValueError("n_experts must be >= 1")
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape, fan_in, fan_out in param_specs(dims, n_experts):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-a, a, size=shape)
    return MmoeModel(dims=dims, n_experts=n_experts, params=params)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ForwardCache:
    x: np.ndarray                      # (B, d)
    expert_pre: list[np.ndarray]       # n x (B, h)
    expert_act: list[np.ndarray]       # n x (B, h)
    expert_out: list[np.ndarray]       # n x (B, o)
    gates: dict[str, np.ndarray]       # tower -> (B, n)
    mixed: dict[str, np.ndarray]       # tower -> (B, o)
    tower_pre: dict[str, np.ndarray]   # tower -> (B, t)
    tower_act: dict[str, np.ndarray]   # tower -> (B, t)
    conf_logit: np.ndarray             # (B,)
    confidence: np.ndarray             # (B,)
    rank_score: np.ndarray             # (B,)


def forward_batch(model: MmoeModel, x: np.ndarray) -> ForwardCache:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.dims.input_dim:
        raise ValueError(f"input dim {x.shape[1]} does not match model dim {model.dims.input_dim}")
    p = model.params
    expert_pre, expert_act, expert_out = [], [], []
    for i in range(model.n_experts):
        u = x @ p[f"expert{i}.w1"].T + p[f"expert{i}.b1"]
        a = np.maximum(u, 0.0)
        expert_pre.append(u)
        expert_act.append(a)
        expert_out.append(a @ p[f"expert{i}.w2"].T + p[f"expert{i}.b2"])
    stacked = np.stack(expert_out, axis=1)  # (B, n, o)

    gates, mixed, tower_pre, tower_act, heads = {}, {}, {}, {}, {}
    for tower in (TOWER_CONF, TOWER_RANK):
        g = _softmax(x @ p[f"gate.{tower}.w"].T + p[f"gate.{tower}.b"])
        m = np.einsum("bn,bno->bo", g, stacked)
        t_pre = m @ p[f"tower.{tower}.w1"].T + p[f"tower.{tower}.b1"]
        t_act = np.maximum(t_pre, 0.0)
        gates[tower] = g
        mixed[tower] = m
        tower_pre[tower] = t_pre
        tower_act[tower] = t_act
        heads[tower] = t_act @ p[f"tower.{tower}.w2"] + p[f"tower.{tower}.b2"]

    return ForwardCache(
        x=x,
        expert_pre=expert_pre,
        expert_act=expert_act,
        expert_out=expert_out,
        gates=gates,
        mixed=mixed,
        tower_pre=tower_pre,
        tower_act=tower_act,
        conf_logit=heads[TOWER_CONF],
        confidence=_sigmoid(heads[TOWER_CONF]),
        rank_score=heads[TOWER_RANK],
    )


def forward(model: MmoeModel, x: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Single-input forward: (confidence, ranking score, gate weights (2, n))."""
    cache = forward_batch(model, np.asarray(x, dtype=float).reshape(1, -1))
    gates = np.stack([cache.gates[TOWER_CONF][0], cache.gates[TOWER_RANK][0]])
    return float(cache.confidence[0]), float(cache.rank_score[0]), gates


def class_weights_from_labels(labels: np.ndarray) -> tuple[float, float]:
    """Inverse class frequency weights (w_negative, w_positive): N / (2 * N_c)."""
    labels = np.asarray(labels)
    n = labels.size
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("training labels must contain both classes")
    return n / (2.0 * n_neg), n / (2.0 * n_pos)


def gate_entropy(gates: np.ndarray) -> float:
    """Mean per-sample entropy of gate distributions, in nats."""
    g = np.clip(gates, 1e-300, None)
    return float(-(g * np.log(g)).sum(axis=1).mean())


def confidence_loss(
    model: MmoeModel,
    x: np.ndarray,
    labels: np.ndarray,
    class_weights: tuple[float, float],
    lambda_entropy: float,
    entropy_bonus: bool = True,
) -> float:
    loss, _ = _confidence_loss_grads(
        model, x, labels, class_weights, lambda_entropy, entropy_bonus, want_grads=False
    )
    return loss


def ranking_loss(
    model: MmoeModel,
    x: np.ndarray,
    pair_index: Sequence[tuple[int, int]],
    margin: float,
    lambda_auc: float,
) -> float:
    loss, _ = _ranking_loss_grads(model, x, pair_index, margin, lambda_auc, want_grads=False)
    return loss


def _zero_grads(model: MmoeModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in model.params.items()}


def _backprop_tower(
    model: MmoeModel, cache: ForwardCache, tower: str, d_head: np.ndarray, grads: dict[str, np.ndarray]
) -> np.ndarray:
    """Head gradient (B,) back to the mixed representation (B, o)."""
    p = model.params
    act = cache.tower_act[tower]
    grads[f"tower.{tower}.w2"] += act.T @ d_head
    grads[f"tower.{tower}.b2"] += d_head.sum()
    d_act = d_head[:, None] * p[f"tower.{tower}.w2"][None, :]
    d_pre = d_act * (cache.tower_pre[tower] > 0.0)
    grads[f"tower.{tower}.w1"] += d_pre.T @ cache.mixed[tower]
    grads[f"tower.{tower}.b1"] += d_pre.sum(axis=0)
    return d_pre @ p[f"tower.{tower}.w1"]


def _backprop_mixture(
    model: MmoeModel,
    cache: ForwardCache,
    tower: str,
    d_mixed: np.ndarray,
    grads: dict[str, np.ndarray],
    d_gate_logits_extra: np.ndarray | None = None,
) -> None:
    """Mixture gradient back through the gate and the experts."""
    g = cache.gates[tower]
    stacked = np.stack(cache.expert_out, axis=1)  # (B, n, o)
    d_g = np.einsum("bno,bo->bn", stacked, d_mixed)
    # Softmax Jacobian: dz_j = g_j * (dg_j - sum_i g_i dg_i).
    d_z = g * (d_g - (g * d_g).sum(axis=1, keepdims=True))
    if d_gate_logits_extra is not None:
        d_z = d_z + d_gate_logits_extra
    grads[f"gate.{tower}.w"] += d_z.T @ cache.x
    grads[f"gate.{tower}.b"] += d_z.sum(axis=0)

    for i in range(model.n_experts):
        d_out = g[:, i : i + 1] * d_mixed
        grads[f"expert{i}.w2"] += d_out.T @ cache.expert_act[i]
        grads[f"expert{i}.b2"] += d_out.sum(axis=0)
        d_act = d_out @ model.params[f"expert{i}.w2"]
        d_pre = d_act * (cache.expert_pre[i] > 0.0)
        grads[f"expert{i}.w1"] += d_pre.T @ cache.x
        grads[f"expert{i}.b1"] += d_pre.sum(axis=0)


def _confidence_loss_grads(
    model: MmoeModel,
    x: np.ndarray,
    labels: np.ndarray,
    class_weights: tuple[float, float],
    lambda_entropy: float,
    entropy_bonus: bool,
    want_grads: bool = True,
) -> tuple[float, dict[str, np.ndarray] | None]:
    cache = forward_batch(model, x)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if y.shape[0] != cache.x.shape[0]:
        raise ValueError("labels do not match the batch size")
    batch = y.shape[0]
    weights = np.where(y > 0.5, class_weights[1], class_weights[0])

    z = cache.conf_logit
    bce = (weights * (_softplus(z) - y * z)).mean()
    gates = cache.gates[TOWER_CONF]
    safe = np.clip(gates, 1e-300, None)
    per_sample_entropy = -(safe * np.log(safe)).sum(axis=1)
    entropy = per_sample_entropy.mean()
    entropy_sign = -1.0 if entropy_bonus else 1.0
    loss = float(bce + entropy_sign * lambda_entropy * entropy)
    if not want_grads:
        return loss, None

    grads = _zero_grads(model)
    d_logit = weights * (_sigmoid(z) - y) / batch
    d_mixed = _backprop_tower(model, cache, TOWER_CONF, d_logit, grads)
    # d(entropy)/d(gate logit_j) = -g_j * (log g_j + per-sample entropy).
    d_ent_logits = -safe * (np.log(safe) + per_sample_entropy[:, None])
    extra = entropy_sign * lambda_entropy * d_ent_logits / batch
    _backprop_mixture(model, cache, TOWER_CONF, d_mixed, grads, d_gate_logits_extra=extra)
    return loss, grads


def _ranking_loss_grads(
    model: MmoeModel,
    x: np.ndarray,
    pair_index: Sequence[tuple[int, int]],
    margin: float,
    lambda_auc: float,
    want_grads: bool = True,
) -> tuple[float, dict[str, np.ndarray] | None]:
    if not pair_index:
        raise ValueError("ranking loss requires at least one (positive, negative) pair")
    cache = forward_batch(model, x)
    s = cache.rank_score
    pos = np.fromiter((p for p, _ in pair_index), dtype=int, count=len(pair_index))
    neg = np.fromiter((q for _, q in pair_index), dtype=int, count=len(pair_index))
    diff = s[pos] - s[neg]
    hinge = np.maximum(0.0, margin - diff)
    logistic = _softplus(-diff)
    loss = float((1.0 - lambda_auc) * hinge.mean() + lambda_auc * logistic.mean())
    if not want_grads:
        return loss, None

    n_pairs = len(pair_index)
    d_diff = (
        -(1.0 - lambda_auc) * (diff < margin).astype(float) - lambda_auc * _sigmoid(-diff)
    ) / n_pairs
    d_s = np.zeros_like(s)
    np.add.at(d_s, pos, d_diff)
    np.add.at(d_s, neg, -d_diff)

    grads = _zero_grads(model)
    d_mixed = _backprop_tower(model, cache, TOWER_RANK, d_s, grads)
    _backprop_mixture(model, cache, TOWER_RANK, d_mixed, grads)
    return loss, grads


def parameter_groups(model: MmoeModel) -> dict[str, list[str]]:
    """Freezing granularity: experts, confidence head+gate, ranking head+gate."""
    groups = {"experts": [], TOWER_CONF: [], TOWER_RANK: []}
    for name in model.params:
        if name.startswith("expert"):
            groups["experts"].append(name)
        elif f".{TOWER_CONF}." in name:
            groups[TOWER_CONF].append(name)
        else:
            groups[TOWER_RANK].append(name)
    return groups


def active_parameters(model: MmoeModel, stage: int) -> set[str]:
    groups = parameter_groups(model)
    if stage == 1:
        return set(groups["experts"]) | set(groups[TOWER_CONF])
    if stage == 2:
        return set(groups[TOWER_RANK])
    raise ValueError(f"stage must be 1 or 2, got {stage}")


@dataclass
class Batch:
    features: np.ndarray
    labels: np.ndarray | None = None
    pair_index: list[tuple[int, int]] | None = None


def gradients(
    model: MmoeModel,
    batch: Batch,
    config: TrainConfig,
    stage: int,
    class_weights: tuple[float, float] | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic gradients for the given stage.

    Parameters outside the stage's active set come back as exact zeros.
    """
    if stage == 1:
        if batch.labels is None:
            raise ValueError("stage 1 needs labels")
        if class_weights is None:
            class_weights = class_weights_from_labels(batch.labels)
        loss, grads = _confidence_loss_grads(
            model, batch.features, batch.labels, class_weights,
            config.lambda_entropy, config.entropy_bonus,
        )
    elif stage == 2:
        if batch.pair_index is None:
            raise ValueError("stage 2 needs a pair index")
        loss, grads = _ranking_loss_grads(
            model, batch.features, batch.pair_index, config.margin, config.lambda_auc
        )
    else:
        raise ValueError(f"stage must be 1 or 2, got {stage}")

    active = active_parameters(model, stage)
    for name in grads:
        if name not in active:
            grads[name] = np.zeros_like(grads[name])
    return loss, grads


@dataclass
class TrainResult:
    model: MmoeModel
    loss_trace: list[dict]  # {"epoch": int, "stage": int, "loss": float}


def train_two_stage(
    model: MmoeModel,
    features: np.ndarray,
    labels: np.ndarray,
    pair_index: Sequence[tuple[int, int]],
    config: TrainConfig,
) -> TrainResult:
    """Stage 1 trains experts and the confidence head on labeled examples;
    stage 2 trains only the ranking head and its gate on score pairs.

    Frozen parameters are never touched by the update, so both freezing
    contracts hold bit-exactly.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float).reshape(-1)
    pair_index = [(int(p), int(q)) for p, q in pair_index]
    class_weights = class_weights_from_labels(labels)
    trace: list[dict] = []

    for epoch in range(1, config.epochs_total + 1):
        stage = 1 if epoch <= config.stage_boundary else 2
        rng = np.random.default_rng(derive_seed(config.seed, "epoch", str(epoch)))
        if stage == 1:
            order = rng.permutation(features.shape[0])
        else:
            order = rng.permutation(len(pair_index))
        active = active_parameters(model, stage)

        epoch_losses = []
        for start in range(0, order.size, config.batch_size):
            chunk = order[start : start + config.batch_size]
            if stage == 1:
                batch = Batch(features=features[chunk], labels=labels[chunk])
            else:
                selected = [pair_index[i] for i in chunk]
                rows = sorted({i for pair in selected for i in pair})
                remap = {row: k for k, row in enumerate(rows)}
                batch = Batch(
                    features=features[rows],
                    pair_index=[(remap[p], remap[q]) for p, q in selected],
                )
            loss, grads = gradients(model, batch, config, stage, class_weights=class_weights)
            if not np.isfinite(loss):
                trace.append({"epoch": epoch, "stage": stage, "loss": loss})
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}", [t["loss"] for t in trace]
                )
            for name in active:
                model.params[name] -= config.learning_rate * grads[name]
            epoch_losses.append(loss)
        trace.append({"epoch": epoch, "stage": stage, "loss": float(np.mean(epoch_losses))})
    return TrainResult(model=model, loss_trace=trace)


# -------------------------------------------------------------- checkpoints

def save_checkpoint(model: MmoeModel, config: TrainConfig, path: str | Path) -> None:
    """Versioned container; parameters stored as little-endian float64 bits."""
    names = [name for name, _, _, _ in param_specs(model.dims, model.n_experts)]
    header = {
        "version": CHECKPOINT_VERSION,
        "dims": asdict(model.dims),
        "n_experts": model.n_experts,
        "train_config": asdict(config),
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
    for name in names:
        blob += np.ascontiguousarray(model.params[name], dtype="<f8").tobytes()
    atomic_write_bytes(path, bytes(blob))


def load_checkpoint(path: str | Path, expected_n_experts: int | None = None) -> tuple[MmoeModel, TrainConfig]:
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a model checkpoint")
    body = data[len(CHECKPOINT_MAGIC):]
    newline = body.find(b"\n")
    if newline < 0:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(body[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    if expected_n_experts is not None and header["n_experts"] != expected_n_experts:
        raise CheckpointError(
            f"{path}: checkpoint has n_experts={header['n_experts']}, config expects {expected_n_experts}"
        )
    dims = ModelDims(**header["dims"])
    config = TrainConfig(**header["train_config"])
    model = MmoeModel(dims=dims, n_experts=int(header["n_experts"]), params={})
    offset = newline + 1
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        chunk = body[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated parameter data at {entry['name']}")
        model.params[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"{path}: trailing bytes after parameters")
    return model, config


def models_equal(a: MmoeModel, b: MmoeModel) -> bool:
    if a.dims != b.dims or a.n_experts != b.n_experts or a.params.keys() != b.params.keys():
        return False
    return all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
