"""Per-layer dynamic gate over pyramid blocks and prefix-bank assembly.

Feature tensors use the layout produced by ``map_pyramid``: a list of ``c``
tensors ``[..., d, h, w]``. For a whole visual bundle the inputs axis sits just
before ``d``: ``[..., m+1, d, h, w]`` with the global image at index 0.
"""

from __future__ import annotations

import math

import numpy as np

from . import diffmath as dm
from .config import FUSION_MODES
from .diffmath import Module, Tensor
from .errors import ConfigError, UsageError


class GateParams(Module):
    """One reduction map d -> c per transformer layer, shared by the m+1 inputs of that layer."""

    def __init__(self, d: int, num_blocks: int, num_layers: int, rng: np.random.Generator,
                 slope: float = 0.01):
        self.num_blocks = num_blocks
        self.num_layers = num_layers
        self.slope = slope
        self.w = [dm.init_normal(rng, (d, num_blocks)) for _ in range(num_layers)]
        self.b = [dm.init_zeros((num_blocks,)) for _ in range(num_layers)]


def _flatten(v: Tensor) -> Tensor:
    """[..., d, h, w] -> [..., h*w, d], row-major over (h, w)."""
    *lead, d, h, w = v.shape
    return dm.swapaxes(v.reshape(tuple(lead) + (d, h * w)), -1, -2)


def gate_logits(features: list[Tensor], layer: int, params: GateParams) -> Tensor:
    """leaky_relu(W_l(mean_i GAP(V_i)) + b_l); layer is 1-based."""
    if not 1 <= layer <= params.num_layers:
        raise UsageError(f"layer {layer} outside 1..{params.num_layers}")
    pooled = [v.mean(axis=(-2, -1)) for v in features]
    avg = pooled[0]
    for p in pooled[1:]:
        avg = avg + p
    avg = avg * (1.0 / len(pooled))
    z = dm.linear(avg, params.w[layer - 1], params.b[layer - 1])
    return dm.leaky_relu(z, params.slope)


def gate_probs(logits: Tensor) -> Tensor:
    return dm.softmax_rows(logits, axis=-1)


def aggregate(features: list[Tensor], probs: Tensor) -> Tensor:
    """Sum_i probs[..., i] * flatten(V_i) -> [..., h*w, d]."""
    c = len(features)
    if probs.shape[-1] != c:
        raise ConfigError(f"probs has {probs.shape[-1]} entries for {c} blocks")
    out = None
    for i, v in enumerate(features):
        wi = probs[..., i:i + 1].reshape(probs.shape[:-1] + (1, 1))
        term = dm.mul(_flatten(v), wi)
        out = term if out is None else out + term
    return out


def one_to_three_block(layer: int, num_layers: int, num_blocks: int) -> int:
    """1-based block feeding ``layer`` when each block serves L/c consecutive layers."""
    if num_layers % num_blocks:
        raise ConfigError(f"{num_layers} layers cannot be split evenly over {num_blocks} blocks")
    return math.ceil(layer / (num_layers // num_blocks))


def build_prefix_bank(features: list[Tensor], layer: int, params: GateParams, mode: str,
                      return_probs: bool = False):
    """Assemble one layer's visual prefix [..., len, d].

    ``features`` are bundle features [..., m+1, d, h, w] ordered
    (global, o_1, ..., o_m). Row count is h*w*(m+1), or h*w*m in only_obj mode.
    With ``return_probs`` the gate probabilities [..., inputs, c] are returned
    too (None for the ungated modes).
    """
    if mode not in FUSION_MODES:
        raise ConfigError(f"unknown fusion mode {mode!r}")
    if not 1 <= layer <= params.num_layers:
        raise UsageError(f"layer {layer} outside 1..{params.num_layers}")
    if mode == "only_obj":
        if features[0].shape[-4] < 2:
            raise ConfigError("only_obj needs at least one object crop in the bundle")
        features = [v[..., 1:, :, :, :] for v in features]

    probs = None
    if mode in ("hierarchical", "only_obj"):
        probs = gate_probs(gate_logits(features, layer, params))
        agg = aggregate(features, probs)
    elif mode == "flat":
        agg = _flatten(features[-1])
    else:
        block = one_to_three_block(layer, params.num_layers, len(features))
        agg = _flatten(features[block - 1])

    # agg: [..., inputs, hw, d] -> [..., inputs*hw, d]
    *lead, n_in, hw, d = agg.shape
    bank = agg.reshape(tuple(lead) + (n_in * hw, d))
    if return_probs:
        return bank, probs
    return bank


def stack_bundle(bundle_features: list[list[Tensor]]) -> list[Tensor]:
    """Turn m+1 per-image feature lists into per-block tensors [m+1, d, h, w]."""
    c = len(bundle_features[0])
    return [dm.stack([feats[i] for feats in bundle_features], axis=0) for i in range(c)]
