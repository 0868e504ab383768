from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

# Modes handled inside the gated aggregation step.
FUSION_MODES = ("hierarchical", "flat", "one_to_three", "only_obj")
# Full set of model variants, including the two baselines.
MODEL_MODES = FUSION_MODES + ("text_only", "naive_concat")
TASKS = ("ner", "re")


@dataclass
class ModelConfig:
    vocab_size: int = 200
    max_len: int = 32
    d: int = 64
    num_layers: int = 4
    heads: int = 4
    ffn_width: int = 256
    image_size: int = 32
    stem_channels: int = 8
    block_channels: tuple[int, ...] = (8, 16, 32, 64)
    num_objects: int = 2
    num_tags: int = 9
    num_relations: int = 6
    task: str = "ner"
    mode: str = "hierarchical"
    dropout: float = 0.1
    leaky_slope: float = 0.01

    def __post_init__(self):
        self.block_channels = tuple(self.block_channels)
        self.validate()

    @property
    def num_blocks(self) -> int:
        return len(self.block_channels)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.mode not in MODEL_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODEL_MODES}")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.num_blocks < 1:
            raise ConfigError("need at least one backbone block")
        if self.mode == "one_to_three" and self.num_layers % self.num_blocks:
            raise ConfigError(f"one_to_three needs num_layers ({self.num_layers}) divisible by "
                              f"the block count ({self.num_blocks})")
        if self.mode == "only_obj" and self.num_objects < 1:
            raise ConfigError("only_obj mode needs at least one object crop")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    def spatial_sizes(self) -> list[int]:
        """Side length after the stem and after each block (3x3, stride 2, pad 1)."""
        s = (self.image_size + 2 - 3) // 2 + 1
        sizes = [s]
        for _ in self.block_channels:
            s = (s + 2 - 3) // 2 + 1
            sizes.append(s)
        return sizes

    @property
    def prefix_hw(self) -> int:
        side = self.spatial_sizes()[-1]
        return side * side

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["block_channels"] = list(self.block_channels)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown ModelConfig fields: {sorted(unknown)}")
        return cls(**data)


def tiny_config(task: str = "ner", mode: str = "hierarchical", **overrides) -> ModelConfig:
    """Gradient-check configuration: d=16, L=2, 2 heads, c=4, hw=1, m=1, |Y|=5."""
    fields = dict(vocab_size=12, max_len=8, d=16, num_layers=2, heads=2, ffn_width=32,
                  image_size=32, stem_channels=3, block_channels=(4, 4, 4, 4),
                  num_objects=1, num_tags=5, num_relations=4, task=task, mode=mode,
                  dropout=0.0)
    fields.update(overrides)
    return ModelConfig(**fields)

