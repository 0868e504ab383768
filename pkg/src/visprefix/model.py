"""Full multimodal model: backbone -> gated prefix banks -> prefix encoder -> task head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffmath as dm
from .config import ModelConfig
from .diffmath import Module, Tensor
from .encoder import Encoder, encoder_forward
from .gating import GateParams, _flatten, build_prefix_bank
from .heads import CrfParams, ReParams, crf_nll, crf_viterbi, emissions, re_logits, re_loss
from .pyramid import Backbone, visual_features

HEAD_PREFIXES = ("crf.", "re.")


@dataclass
class Batch:
    """Equal-length examples stacked along axis 0."""

    ids: list[int]
    tokens: np.ndarray              # [B, n] int
    images: np.ndarray              # [B, m+1, 3, S, S]
    tags: np.ndarray | None = None  # [B, n]
    relations: np.ndarray | None = None  # [B]


@dataclass
class Trace:
    """Per-layer diagnostics captured during a forward pass."""

    gates: list = field(default_factory=list)      # per layer: [B, inputs, c] or None
    attention: list = field(default_factory=list)  # per layer: [B, heads, n, P + n]
    prefix_len: int = 0
    input_offset: int = 0                           # 1 in only_obj mode (global image dropped)


class HVPModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.backbone = Backbone(cfg, rng)
        self.gate = GateParams(cfg.d, cfg.num_blocks, cfg.num_layers, rng, cfg.leaky_slope)
        self.encoder = Encoder(cfg, rng)
        if cfg.task == "ner":
            self.crf = CrfParams(cfg.d, cfg.num_tags, rng)
        else:
            self.re = ReParams(cfg.d, cfg.num_relations, rng)
        self.name_params()

    def head_params(self) -> dict:
        return {k: p for k, p in self.named_params().items() if k.startswith(HEAD_PREFIXES)}

    def reinit_heads(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        if self.cfg.task == "ner":
            self.crf = CrfParams(self.cfg.d, self.cfg.num_tags, rng)
        else:
            self.re = ReParams(self.cfg.d, self.cfg.num_relations, rng)
        self.name_params()

    # ------------------------------------------------------------------ forward

    def encode(self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None,
               trace: Trace | None = None) -> Tensor:
        cfg = self.cfg
        banks = None
        lead = None
        att_record = trace.attention if trace is not None else None
        if cfg.mode != "text_only":
            feats = visual_features(batch.images, self.backbone)  # c x [B, m+1, d, h, w]
            if cfg.mode == "naive_concat":
                v = _flatten(feats[-1])  # [B, m+1, hw, d]
                *ld, n_in, hw, d = v.shape
                lead = v.reshape(tuple(ld) + (n_in * hw, d))
            else:
                banks = []
                for layer in range(1, cfg.num_layers + 1):
                    bank, probs = build_prefix_bank(feats, layer, self.gate, cfg.mode,
                                                    return_probs=True)
                    banks.append(bank)
                    if trace is not None:
                        trace.gates.append(None if probs is None else probs.data.copy())
                        trace.prefix_len = bank.shape[-2]
                        trace.input_offset = 1 if cfg.mode == "only_obj" else 0
        states = encoder_forward(batch.tokens, banks, self.encoder, training, rng,
                                 att_record, lead_rows=lead)
        if trace is not None and lead is not None:
            trace.prefix_len = lead.shape[-2]
        return states[-1]

    def loss(self, batch: Batch, training: bool = False,
             rng: np.random.Generator | None = None) -> Tensor:
        """Mean per-example loss over the batch."""
        h = self.encode(batch, training, rng)
        if self.cfg.task == "ner":
            per = crf_nll(emissions(h, self.crf), batch.tags, self.crf)
        else:
            per = re_loss(h, batch.relations, self.re)
        return per.mean()

    def predict(self, batch: Batch, trace: Trace | None = None):
        """NER: list of tag arrays. RE: (labels [B], probs [B, R])."""
        with dm.no_grad():
            h = self.encode(batch, training=False, trace=trace)
            if self.cfg.task == "ner":
                em = emissions(h, self.crf).data
                return [crf_viterbi(em[i], self.crf) for i in range(em.shape[0])]
            logits = re_logits(h, self.re).data
        z = logits - logits.max(axis=-1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=-1, keepdims=True)
        return np.argmax(logits, axis=-1), p
