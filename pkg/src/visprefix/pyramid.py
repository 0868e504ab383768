"""Pyramidal visual features.

A small strided conv backbone turns each image into ``c`` feature maps of
decreasing resolution. Every map is pooled to the resolution of the last block
and projected to the transformer width with a 1x1 convolution.
"""

from __future__ import annotations

import numpy as np

from . import diffmath as dm
from .config import ModelConfig
from .diffmath import Module, Tensor
from .errors import ConfigError, DimensionError


class Backbone(Module):
    """Stem + c stride-2 blocks + per-block 1x1 mapping to width d.

    One instance is shared by the global image and all object crops.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.image_size = cfg.image_size
        self.slope = cfg.leaky_slope
        self.stem_w = dm.init_kaiming(rng, (cfg.stem_channels, 3, 3, 3))
        self.stem_b = dm.init_zeros((cfg.stem_channels,))
        self.block_w, self.block_b = [], []
        prev = cfg.stem_channels
        for ch in cfg.block_channels:
            self.block_w.append(dm.init_kaiming(rng, (ch, prev, 3, 3)))
            self.block_b.append(dm.init_zeros((ch,)))
            prev = ch
        self.map_w = [dm.init_kaiming(rng, (cfg.d, ch, 1, 1)) for ch in cfg.block_channels]
        self.map_b = [dm.init_zeros((cfg.d,)) for _ in cfg.block_channels]


def backbone_forward(images, bb: Backbone) -> list[Tensor]:
    """Images [..., 3, S, S] -> c maps, block i shaped [..., C_i, h_i, w_i]."""
    images = dm.as_tensor(images)
    *lead, ch, s, s2 = images.shape
    if ch != 3 or s != bb.image_size or s2 != bb.image_size:
        raise DimensionError(f"expected images [..., 3, {bb.image_size}, {bb.image_size}], "
                             f"got {images.shape}")
    x = images.reshape((-1, 3, s, s2))
    x = dm.leaky_relu(dm.conv2d(x, bb.stem_w, bb.stem_b, stride=2, pad=1), bb.slope)
    maps = []
    for w, b in zip(bb.block_w, bb.block_b):
        x = dm.leaky_relu(dm.conv2d(x, w, b, stride=2, pad=1), bb.slope)
        maps.append(x.reshape(tuple(lead) + x.shape[1:]))
    return maps


def map_pyramid(maps: list[Tensor], bb: Backbone) -> list[Tensor]:
    """Pool every block to the last block's size, then 1x1-conv to width d.

    Returns c tensors shaped [..., d, h_c, w_c].
    """
    h, w = maps[-1].shape[-2:]
    out = []
    for i, (f, kw, kb) in enumerate(zip(maps, bb.map_w, bb.map_b)):
        if f.shape[-2] < h or f.shape[-1] < w:
            raise ConfigError(f"block {i + 1} is {f.shape[-2:]}, smaller than target {(h, w)}")
        if i < len(maps) - 1:
            f = dm.avg_pool2d(f, h, w)
        lead = f.shape[:-3]
        x = f.reshape((-1,) + f.shape[-3:])
        y = dm.conv2d(x, kw, kb, stride=1, pad=0)
        out.append(y.reshape(lead + y.shape[1:]))
    return out


def visual_features(images, bb: Backbone) -> list[Tensor]:
    return map_pyramid(backbone_forward(images, bb), bb)
