"""Transformer encoder whose self-attention keys/values are extended by a visual prefix.

At layer l the gated visual bank is projected by one full-width matrix into a
key half and a value half. Both halves are prepended to the text keys and
values; queries come from the text only, so the text length never changes.
"""

from __future__ import annotations

import math

import numpy as np

from . import diffmath as dm
from .config import ModelConfig
from .diffmath import Module, Tensor
from .errors import ConfigError, DimensionError, InputError


class EncoderLayer(Module):
    def __init__(self, d: int, ffn: int, rng: np.random.Generator):
        self.wq, self.bq = dm.init_normal(rng, (d, d)), dm.init_zeros((d,))
        self.wk, self.bk = dm.init_normal(rng, (d, d)), dm.init_zeros((d,))
        self.wv, self.bv = dm.init_normal(rng, (d, d)), dm.init_zeros((d,))
        self.wo, self.bo = dm.init_normal(rng, (d, d)), dm.init_zeros((d,))
        # visual prefix projection d -> 2d, [key half | value half]
        self.w_phi = dm.init_normal(rng, (d, 2 * d))
        self.ln1_g, self.ln1_b = dm.init_ones((d,)), dm.init_zeros((d,))
        self.w1, self.b1 = dm.init_normal(rng, (d, ffn)), dm.init_zeros((ffn,))
        self.w2, self.b2 = dm.init_normal(rng, (ffn, d)), dm.init_zeros((d,))
        self.ln2_g, self.ln2_b = dm.init_ones((d,)), dm.init_zeros((d,))


class Encoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.d = cfg.d
        self.heads = cfg.heads
        self.vocab_size = cfg.vocab_size
        self.max_len = cfg.max_len
        self.p_drop = cfg.dropout
        self.slope = cfg.leaky_slope
        self.tok_emb = dm.init_normal(rng, (cfg.vocab_size, cfg.d))
        self.pos_emb = dm.init_normal(rng, (cfg.max_len, cfg.d))
        self.emb_ln_g, self.emb_ln_b = dm.init_ones((cfg.d,)), dm.init_zeros((cfg.d,))
        self.layers = [EncoderLayer(cfg.d, cfg.ffn_width, rng) for _ in range(cfg.num_layers)]


def embed_tokens(tokens, enc: Encoder, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    """Token ids [..., n] -> [..., n, d]: token + position embedding, layer norm, dropout."""
    tokens = np.asarray(tokens, dtype=np.int64)
    n = tokens.shape[-1]
    if n > enc.max_len:
        raise InputError(f"sequence length {n} exceeds max_len {enc.max_len}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= enc.vocab_size):
        raise InputError(f"token id outside [0, {enc.vocab_size})")
    x = dm.embedding(enc.tok_emb, tokens) + enc.pos_emb[:n]
    x = dm.layer_norm(x, enc.emb_ln_g, enc.emb_ln_b)
    return dm.dropout(x, enc.p_drop, rng, training)


def project_prefix(bank: Tensor, layer: EncoderLayer) -> tuple[Tensor, Tensor]:
    """One multiply by W_phi, then split: (phi_k, phi_v), key half first."""
    d = layer.w_phi.shape[0]
    if bank.shape[-1] != d:
        raise DimensionError(f"prefix bank width {bank.shape[-1]} != model width {d}")
    both = dm.matmul(bank, layer.w_phi)
    return both[..., :d], both[..., d:]


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    return dm.swapaxes(x.reshape(tuple(lead) + (n, heads, d // heads)), -2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dh = x.shape
    return dm.swapaxes(x, -2, -3).reshape(tuple(lead) + (n, h * dh))


def prefix_attention(h_prev: Tensor, phi_k: Tensor | None, phi_v: Tensor | None,
                     layer: EncoderLayer, heads: int, training: bool = False,
                     rng: np.random.Generator | None = None, p_drop: float = 0.0,
                     record: list | None = None) -> Tensor:
    """softmax(Q [phi_k; K]^T / sqrt(d_head)) [phi_v; V], per head, then output projection.

    ``phi_k``/``phi_v`` of shape [..., len, d]; None (or len 0) gives plain
    self-attention. If ``record`` is a list, the attention weights
    [..., heads, n, len + n] are appended to it.
    """
    q = _split_heads(dm.linear(h_prev, layer.wq, layer.bq), heads)
    k = _split_heads(dm.linear(h_prev, layer.wk, layer.bk), heads)
    v = _split_heads(dm.linear(h_prev, layer.wv, layer.bv), heads)
    if phi_k is not None and phi_k.shape[-2] > 0:
        if phi_k.shape != phi_v.shape:
            raise DimensionError(f"phi_k {phi_k.shape} and phi_v {phi_v.shape} differ")
        k = dm.concat([_split_heads(phi_k, heads), k], axis=-2)
        v = dm.concat([_split_heads(phi_v, heads), v], axis=-2)
    dh = h_prev.shape[-1] // heads
    scores = dm.matmul(q, dm.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
    att = dm.softmax_rows(scores, axis=-1)
    if record is not None:
        record.append(att.data.copy())
    att = dm.dropout(att, p_drop, rng, training)
    ctx = _merge_heads(dm.matmul(att, v))
    return dm.linear(ctx, layer.wo, layer.bo)


def encoder_layer_forward(h_prev: Tensor, bank: Tensor | None, layer: EncoderLayer, enc: Encoder,
                          training: bool = False, rng: np.random.Generator | None = None,
                          record: list | None = None) -> Tensor:
    phi_k = phi_v = None
    if bank is not None and bank.shape[-2] > 0:
        phi_k, phi_v = project_prefix(bank, layer)
    a = prefix_attention(h_prev, phi_k, phi_v, layer, enc.heads, training, rng, enc.p_drop, record)
    h1 = dm.layer_norm(h_prev + dm.dropout(a, enc.p_drop, rng, training), layer.ln1_g, layer.ln1_b)
    f = dm.linear(dm.leaky_relu(dm.linear(h1, layer.w1, layer.b1), enc.slope), layer.w2, layer.b2)
    return dm.layer_norm(h1 + dm.dropout(f, enc.p_drop, rng, training), layer.ln2_g, layer.ln2_b)


def encoder_forward(tokens, banks: list[Tensor | None] | None, enc: Encoder,
                    training: bool = False, rng: np.random.Generator | None = None,
                    record: list | None = None, lead_rows: Tensor | None = None) -> list[Tensor]:
    """Run all layers; returns [H^0, ..., H^L], each [..., n, d].

    ``banks`` holds one prefix per layer (None entries or None overall mean no
    prefix). ``lead_rows`` [..., r, d] are extra input rows placed before the
    text at layer 0 and stripped from every returned state; only the
    naive-concatenation baseline uses them.
    """
    if banks is not None and len(banks) != len(enc.layers):
        raise ConfigError(f"{len(banks)} prefix banks for {len(enc.layers)} encoder layers")
    h = embed_tokens(tokens, enc, training, rng)
    n = h.shape[-2]
    r = 0
    if lead_rows is not None:
        r = lead_rows.shape[-2]
        h = dm.concat([lead_rows, h], axis=-2)
    states = [h[..., r:, :] if r else h]
    for i, layer in enumerate(enc.layers):
        bank = banks[i] if banks is not None else None
        h = encoder_layer_forward(h, bank, layer, enc, training, rng, record)
        states.append(h[..., r:, :] if r else h)
    assert states[-1].shape[-2] == n
    return states
