"""Tracklet encoder: frame projection, learnable token, pre-norm attention blocks, projection head."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_MAGIC = "ntssl-checkpoint/1"


@dataclass(frozen=True)
class EncoderConfig:
    d_in: int
    L: int
    d_model: int = 32
    num_layers: int = 1
    num_heads: int = 4
    d_ff: int = 64
    dropout: float = 0.0
    proj_hidden: int = 32
    proj_out: int = 16

    def __post_init__(self):
        for f in ("d_in", "L", "d_model", "num_layers", "num_heads", "d_ff", "proj_hidden", "proj_out"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        if self.d_model % self.num_heads:
            raise ValueError("d_model must be divisible by num_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown encoder keys: {sorted(unknown)}")
        return cls(**d)


class ParamStore:
    """Named parameters (leaf tensors) with gradient accumulators."""

    def __init__(self, tensors: dict[str, np.ndarray] | None = None):
        self._params: dict[str, Tensor] = {}
        for name, value in (tensors or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grad(self, name: str) -> np.ndarray:
        t = self._params[name]
        return np.zeros_like(t.data) if t.grad is None else t.grad

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def copy(self) -> "ParamStore":
        return ParamStore({k: t.data.copy() for k, t in self._params.items()})

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._params.items()}

    def equal(self, other: "ParamStore") -> bool:
        if self.names() != other.names():
            return False
        return all(np.array_equal(self[k].data, other[k].data) for k in self)


def init_params(cfg: EncoderConfig, seed: int) -> ParamStore:
    """Fan-in scaled uniform weights, zero biases, unit norm gains, small normal token/positions."""
    rng = np.random.default_rng(seed)
    store = ParamStore()

    def linear(prefix: str, fan_in: int, fan_out: int, w: str = "W", b: str = "b"):
        bound = 1.0 / np.sqrt(fan_in)
        store.add(f"{prefix}.{w}", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        store.add(f"{prefix}.{b}", np.zeros(fan_out))

    def norm(prefix: str):
        store.add(f"{prefix}.g", np.ones(cfg.d_model))
        store.add(f"{prefix}.b", np.zeros(cfg.d_model))

    D = cfg.d_model
    linear("frame_proj", cfg.d_in, D)
    store.add("token", 0.02 * rng.standard_normal(D))
    store.add("pos", 0.02 * rng.standard_normal((cfg.L, D)))
    for layer in range(cfg.num_layers):
        p = f"layers.{layer}"
        norm(f"{p}.ln1")
        linear(f"{p}.attn", D, 3 * D, "Wqkv", "bqkv")
        linear(f"{p}.attn", D, D, "Wo", "bo")
        norm(f"{p}.ln2")
        linear(f"{p}.ff", D, cfg.d_ff, "W1", "b1")
        linear(f"{p}.ff", cfg.d_ff, D, "W2", "b2")
    norm("final_ln")
    linear("head", D, cfg.proj_hidden, "W1", "b1")
    linear("head", cfg.proj_hidden, cfg.proj_out, "W2", "b2")
    return store


def _attention(x: Tensor, params: ParamStore, prefix: str, cfg: EncoderConfig, rng) -> Tensor:
    B, T, D = x.shape
    H = cfg.num_heads
    dh = D // H
    qkv = x @ params[f"{prefix}.Wqkv"] + params[f"{prefix}.bqkv"]
    qkv = ad.transpose(qkv.reshape(B, T, 3, H, dh), (2, 0, 3, 1, 4))  # 3, B, H, T, dh
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = (q @ ad.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
    weights = ad.dropout(ad.softmax(scores, axis=-1), cfg.dropout, rng)
    ctx = ad.transpose(weights @ v, (0, 2, 1, 3)).reshape(B, T, D)
    return ctx @ params[f"{prefix}.Wo"] + params[f"{prefix}.bo"]


def encode_batch(
    frames: np.ndarray | Tensor,
    params: ParamStore,
    cfg: EncoderConfig,
    mode: Literal["train", "eval"] = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Encode a batch of tracklets ``(B, L, d_in)``.

    Returns ``(tracklet_hidden (B, d_model), frame_hiddens (B, L, d_model))``.
    """
    frames = ad.as_tensor(frames)
    if frames.ndim != 3 or frames.shape[1:] != (cfg.L, cfg.d_in):
        raise ValueError(f"expected frames of shape (B, {cfg.L}, {cfg.d_in}), got {frames.shape}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    drop_rng = rng if (mode == "train" and cfg.dropout > 0) else None
    B = frames.shape[0]
    D = cfg.d_model

    x = frames @ params["frame_proj.W"] + params["frame_proj.b"] + params["pos"]
    token = ad.broadcast_to(params["token"].reshape(1, 1, D), (B, 1, D))
    x = ad.concat([token, x], axis=1)
    for layer in range(cfg.num_layers):
        p = f"layers.{layer}"
        h = ad.layer_norm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        x = x + ad.dropout(_attention(h, params, f"{p}.attn", cfg, drop_rng), cfg.dropout, drop_rng)
        h = ad.layer_norm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        h = ad.gelu(h @ params[f"{p}.ff.W1"] + params[f"{p}.ff.b1"])
        h = ad.dropout(h, cfg.dropout, drop_rng) @ params[f"{p}.ff.W2"] + params[f"{p}.ff.b2"]
        x = x + ad.dropout(h, cfg.dropout, drop_rng)
    x = ad.layer_norm(x, params["final_ln.g"], params["final_ln.b"])
    return x[:, 0, :], x[:, 1:, :]


def encode(frames, params: ParamStore, cfg: EncoderConfig, mode="eval", rng=None) -> tuple[Tensor, Tensor]:
    """Single tracklet ``(L, d_in)`` -> ``(d_model,)``, ``(L, d_model)``."""
    frames = ad.as_tensor(frames)
    if frames.ndim != 2:
        raise ValueError(f"expected an (L, d_in) matrix, got shape {frames.shape}")
    tok, fr = encode_batch(frames.reshape(1, *frames.shape), params, cfg, mode, rng)
    return tok[0], fr[0]


def project(h, params: ParamStore, cfg: EncoderConfig) -> Tensor:
    """Shared MLP head (linear, ReLU, linear) over the last axis."""
    h = ad.as_tensor(h)
    if h.shape[-1] != cfg.d_model:
        raise ValueError(f"last dimension must be d_model={cfg.d_model}, got {h.shape[-1]}")
    squeeze = h.ndim == 1
    if squeeze:
        h = h.reshape(1, cfg.d_model)
    out = ad.relu(h @ params["head.W1"] + params["head.b1"]) @ params["head.W2"] + params["head.b2"]
    return out[0] if squeeze else out


# -- checkpoints ------------------------------------------------------------------

def save_checkpoint(path: str | Path, params: ParamStore, cfg: EncoderConfig, extra: dict | None = None) -> None:
    """8-byte little-endian manifest length, JSON manifest, then each tensor as little-endian f64."""
    entries, offset = [], 0
    for name, t in params.items():
        nbytes = t.data.size * 8
        entries.append({"name": name, "shape": list(t.data.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    manifest = {"format": CHECKPOINT_MAGIC, "encoder": cfg.to_dict(), "tensors": entries, "extra": extra or {}}
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for _, t in params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path: str | Path) -> tuple[ParamStore, EncoderConfig, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise CheckpointError("truncated checkpoint")
    (n,) = struct.unpack("<Q", raw[:8])
    try:
        manifest = json.loads(raw[8 : 8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad checkpoint manifest: {exc}") from None
    if manifest.get("format") != CHECKPOINT_MAGIC:
        raise CheckpointError("not an ntssl checkpoint")
    blob = raw[8 + n :]
    store = ParamStore()
    for e in manifest["tensors"]:
        chunk = blob[e["offset"] : e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise CheckpointError(f"truncated tensor {e['name']!r}")
        store.add(e["name"], np.frombuffer(chunk, dtype="<f8").reshape(e["shape"]).astype(np.float64))
    return store, EncoderConfig.from_dict(manifest["encoder"]), manifest.get("extra", {})
