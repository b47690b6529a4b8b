"""Score/correction MLP with manual backprop, Adam, and checkpoint I/O.

The network consumes [x || embed(sigma)] and outputs a vector field over the
ambient space.  Two conditioning embeddings: append log(sigma) (default), or
sin/cos features of log(sigma) at dyadic frequencies.  With `antisymmetrize`
the forward pass returns (f(x, e) - f(-x, e))/2, which is odd in x by
construction for every parameter value; the sigma embedding is never negated.

Training regresses sigma * output against a residual target (see diffusion):
loss = mean over rows of ||sigma f - target||^2, so at the optimum f is the
score itself (dsm) or the correction to the base score (mad).

Everything is plain numpy: forward caches per-layer pre-activations, backward
walks them in reverse, Adam is the standard bias-corrected update.  The final
layer initializes to zero so a fresh mad model starts exactly at the base
score.

Checkpoints are a small versioned binary container: magic, version, a JSON
header (config, layer shapes, caller extras), the raw little-endian float64
layer data, and a SHA-256 trailer over everything before it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointFormatError, TrainingDivergedError

__all__ = [
    "MlpConfig",
    "NetworkParams",
    "NetworkGrads",
    "init_params",
    "forward",
    "backward",
    "adam_step",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

_MAGIC = b"SCORENET"
_VERSION = 1


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dim: int = 128
    num_hidden_layers: int = 3
    activation: str = "silu"
    sigma_embedding: str = "log_sigma_concat"
    fourier_dim: int = 0
    antisymmetrize: bool = False

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1 or self.num_hidden_layers < 1:
            raise ValueError("input_dim, hidden_dim, num_hidden_layers must be >= 1")
        if self.activation not in ("relu", "silu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.sigma_embedding == "log_sigma_concat":
            if self.fourier_dim != 0:
                raise ValueError("fourier_dim only applies to the fourier embedding")
        elif self.sigma_embedding == "fourier":
            if self.fourier_dim < 2 or self.fourier_dim % 2 != 0:
                raise ValueError("fourier embedding needs a positive even fourier_dim")
        else:
            raise ValueError(f"unknown sigma_embedding {self.sigma_embedding!r}")

    @property
    def embed_dim(self) -> int:
        return 1 if self.sigma_embedding == "log_sigma_concat" else self.fourier_dim

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = (
            [self.input_dim + self.embed_dim]
            + [self.hidden_dim] * self.num_hidden_layers
            + [self.input_dim]
        )
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class NetworkParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)
    step: int = 0


@dataclass
class NetworkGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_params(config: MlpConfig, rng: np.random.Generator) -> NetworkParams:
    """Scaled-uniform init, except the final layer which starts at zero."""
    ws, bs = [], []
    shapes = config.layer_shapes()
    for i, (fan_in, fan_out) in enumerate(shapes):
        if i == len(shapes) - 1:
            ws.append(np.zeros((fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        else:
            bound = 1.0 / np.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            bs.append(rng.uniform(-bound, bound, fan_out))
    zeros = lambda: [np.zeros_like(a) for a in ws]
    zeros_b = lambda: [np.zeros_like(a) for a in bs]
    return NetworkParams(
        weights=ws, biases=bs, m_w=zeros(), v_w=zeros(), m_b=zeros_b(), v_b=zeros_b()
    )


def _embed_sigma(config: MlpConfig, sigma: np.ndarray, n: int) -> np.ndarray:
    sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (n,))
    if np.any(sig <= 0.0):
        raise ValueError("sigma must be positive")
    log_sig = np.log(sig)
    if config.sigma_embedding == "log_sigma_concat":
        return log_sig[:, None]
    # dyadic ladder starting at 1/8 so the slowest component stays injective
    # over schedules spanning up to ~25 e-folds of sigma
    freqs = 2.0 ** np.arange(config.fourier_dim // 2) / 8.0
    ang = log_sig[:, None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _act(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    sg = 1.0 / (1.0 + np.exp(-z))
    return z * sg


def _act_grad(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    sg = 1.0 / (1.0 + np.exp(-z))
    return sg * (1.0 + z * (1.0 - sg))


def _plain_forward(params: NetworkParams, config: MlpConfig, h: np.ndarray, keep: bool):
    """Run the raw MLP on pre-assembled input h; optionally keep caches."""
    pre = []
    post = [h] if keep else None
    n_layers = len(params.weights)
    for i in range(n_layers):
        z = h @ params.weights[i] + params.biases[i]
        if not np.all(np.isfinite(z)):
            raise TrainingDivergedError(f"non-finite activations at layer {i}")
        if i < n_layers - 1:
            if keep:
                pre.append(z)
            h = _act(config.activation, z)
            if keep:
                post.append(h)
        else:
            h = z
    return (h, pre, post) if keep else h


def _assemble(config: MlpConfig, x: np.ndarray, emb: np.ndarray) -> np.ndarray:
    return np.concatenate([x, emb], axis=1)


def forward(params: NetworkParams, config: MlpConfig, x, sigma) -> np.ndarray:
    """Network output for a batch; odd in x when antisymmetrize is set."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != config.input_dim:
        raise ValueError(f"expected input dim {config.input_dim}, got {x.shape[1]}")
    emb = _embed_sigma(config, sigma, x.shape[0])
    out = _plain_forward(params, config, _assemble(config, x, emb), keep=False)
    if config.antisymmetrize:
        out_neg = _plain_forward(params, config, _assemble(config, -x, emb), keep=False)
        out = 0.5 * (out - out_neg)
    return out


def _backprop_branch(params, config, pre, post, upstream, grads: NetworkGrads):
    """Accumulate parameter grads for one cached forward pass."""
    g = upstream
    for i in reversed(range(len(params.weights))):
        grads.weights[i] += post[i].T @ g
        grads.biases[i] += g.sum(axis=0)
        if i > 0:
            g = (g @ params.weights[i].T) * _act_grad(config.activation, pre[i - 1])


def backward(params: NetworkParams, config: MlpConfig, x, residual_target, sigma):
    """Loss mean ||sigma f - target||^2 over rows, and its parameter gradients."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.atleast_2d(np.asarray(residual_target, dtype=np.float64))
    if x.shape != t.shape or x.shape[1] != config.input_dim:
        raise ValueError("batch and targets must align with the network input dim")
    n = x.shape[0]
    emb = _embed_sigma(config, sigma, n)
    sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (n,))[:, None]

    out_pos, pre_pos, post_pos = _plain_forward(
        params, config, _assemble(config, x, emb), keep=True
    )
    if config.antisymmetrize:
        out_neg, pre_neg, post_neg = _plain_forward(
            params, config, _assemble(config, -x, emb), keep=True
        )
        out = 0.5 * (out_pos - out_neg)
    else:
        out = out_pos

    resid = sig * out - t
    loss = float(np.mean(np.sum(resid * resid, axis=1)))
    d_out = 2.0 * sig * resid / n

    grads = NetworkGrads(
        weights=[np.zeros_like(w) for w in params.weights],
        biases=[np.zeros_like(b) for b in params.biases],
    )
    if config.antisymmetrize:
        _backprop_branch(params, config, pre_pos, post_pos, 0.5 * d_out, grads)
        _backprop_branch(params, config, pre_neg, post_neg, -0.5 * d_out, grads)
    else:
        _backprop_branch(params, config, pre_pos, post_pos, d_out, grads)
    return loss, grads


def adam_step(
    params: NetworkParams,
    grads: NetworkGrads,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> NetworkParams:
    """Standard bias-corrected Adam; returns a new parameter object."""
    t = params.step + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t

    def upd(p, g, m, v):
        m2 = beta1 * m + (1.0 - beta1) * g
        v2 = beta2 * v + (1.0 - beta2) * g * g
        p2 = p - lr * (m2 / c1) / (np.sqrt(v2 / c2) + eps)
        return p2, m2, v2

    new_w, new_mw, new_vw = [], [], []
    for p, g, m, v in zip(params.weights, grads.weights, params.m_w, params.v_w):
        p2, m2, v2 = upd(p, g, m, v)
        new_w.append(p2)
        new_mw.append(m2)
        new_vw.append(v2)
    new_b, new_mb, new_vb = [], [], []
    for p, g, m, v in zip(params.biases, grads.biases, params.m_b, params.v_b):
        p2, m2, v2 = upd(p, g, m, v)
        new_b.append(p2)
        new_mb.append(m2)
        new_vb.append(v2)
    return NetworkParams(
        weights=new_w, biases=new_b, m_w=new_mw, v_w=new_vw, m_b=new_mb, v_b=new_vb, step=t
    )


def train(
    config: MlpConfig,
    loss_kind: str,
    dataset: np.ndarray,
    manifold,
    schedule,
    steps: int,
    batch_size: int,
    lr: float,
    seed: int,
):
    """Sequential Adam loop over perturbed minibatches; deterministic per seed.

    Each step: sample rows with replacement, draw one noise scale per row
    uniformly over the schedule's discrete levels, perturb, regress against
    the dsm or mad residual target.  Returns (params, per-step loss array).
    """
    from .diffusion import dsm_target, mad_target, perturb

    if loss_kind not in ("dsm", "mad"):
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.ndim != 2 or dataset.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (n, d) array")
    if dataset.shape[1] != config.input_dim:
        raise ValueError("dataset dimension does not match the network input_dim")
    rng = np.random.default_rng(seed)
    params = init_params(config, rng)
    curve = np.empty(steps)
    for step in range(steps):
        x0 = dataset[rng.integers(dataset.shape[0], size=batch_size)]
        sig = schedule.sigmas[rng.integers(schedule.num_scales, size=batch_size)]
        xt = perturb(x0, sig, rng)
        if loss_kind == "dsm":
            target = dsm_target(x0, xt, sig)
        else:
            target = mad_target(x0, xt, sig, manifold)
        loss, grads = backward(params, config, xt, target.residual_target, sig)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at step {step}", step=step)
        params = adam_step(params, grads, lr)
        curve[step] = loss
    return params, curve


def _config_to_json(config: MlpConfig) -> dict:
    return {
        "input_dim": config.input_dim,
        "hidden_dim": config.hidden_dim,
        "num_hidden_layers": config.num_hidden_layers,
        "activation": config.activation,
        "sigma_embedding": config.sigma_embedding,
        "fourier_dim": config.fourier_dim,
        "antisymmetrize": config.antisymmetrize,
    }


def save_checkpoint(path, params: NetworkParams, config: MlpConfig, extras: dict | None = None):
    """Write magic | version | header_len | JSON header | layer data | sha256."""
    header = {
        "config": _config_to_json(config),
        "layer_shapes": [list(s) for s in config.layer_shapes()],
        "extras": extras or {},
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<II", _VERSION, len(hdr))
    blob += hdr
    for w, b in zip(params.weights, params.biases):
        blob += np.ascontiguousarray(w, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path):
    """Read a checkpoint; returns (params, config, extras).

    Adam state is not persisted: loaded parameters carry fresh moments.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 8 + 32:
        raise CheckpointFormatError("checkpoint file is truncated")
    if blob[: len(_MAGIC)] != _MAGIC:
        raise CheckpointFormatError("bad magic; not a checkpoint file")
    digest = blob[-32:]
    if hashlib.sha256(blob[:-32]).digest() != digest:
        raise CheckpointFormatError("checksum mismatch; file corrupted")
    off = len(_MAGIC)
    version, hdr_len = struct.unpack_from("<II", blob, off)
    off += 8
    if version != _VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[off : off + hdr_len].decode("utf-8"))
        config = MlpConfig(**header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"invalid checkpoint header: {exc}") from exc
    off += hdr_len
    shapes = config.layer_shapes()
    if header.get("layer_shapes") != [list(s) for s in shapes]:
        raise CheckpointFormatError("layer shapes in header disagree with config")
    ws, bs = [], []
    for fan_in, fan_out in shapes:
        nbytes = fan_in * fan_out * 8
        if off + nbytes + fan_out * 8 > len(blob) - 32:
            raise CheckpointFormatError("layer data truncated")
        ws.append(np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_in, fan_out).copy())
        off += nbytes
        bs.append(np.frombuffer(blob, dtype="<f8", count=fan_out, offset=off).copy())
        off += fan_out * 8
    if off != len(blob) - 32:
        raise CheckpointFormatError("trailing bytes after layer data")
    params = NetworkParams(
        weights=ws,
        biases=bs,
        m_w=[np.zeros_like(w) for w in ws],
        v_w=[np.zeros_like(w) for w in ws],
        m_b=[np.zeros_like(b) for b in bs],
        v_b=[np.zeros_like(b) for b in bs],
    )
    return params, config, header.get("extras", {})
