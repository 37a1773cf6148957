"""Run configuration: one JSON document, round-trippable."""
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, OvaibError
from .losses import LossConfig
from .synth_data import GeneratorSpec

OBJECTIVES = ("ovaib", "clip")
DEFAULT_SEEDS = (42, 0, 1)


@dataclass
class RunConfig:
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    n_samples: int = 4096
    splits: list = field(default_factory=lambda: [0.7, 0.15, 0.15])
    embed_dim: int = 32
    encoder_hidden: list = field(default_factory=lambda: [64])
    projector_hidden: list = field(default_factory=lambda: [64])
    loss: LossConfig = field(default_factory=LossConfig)
    objective: str = "ovaib"
    lr: float = 1e-3
    steps: int = 2000
    batch_size: int = 64
    seed: int = 42
    out_dir: str = "runs/default"
    beta_zero: bool = False
    mlp_projector: bool = False
    include_positive: bool = False
    retrieval_pool: int = 512
    smoothing_window: int = 50
    gradcheck_tau: float = 0.1

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.embed_dim < 1 or min(self.hidden_widths(0) + [1]) < 1:
            raise ConfigError("embedding and hidden widths must be positive")
        train_size = int(round(self.splits[0] * self.n_samples))
        if self.batch_size > train_size:
            raise ConfigError(f"batch_size {self.batch_size} exceeds the training split ({train_size})")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.gradcheck_tau <= 0:
            raise ConfigError("gradcheck_tau must be positive")

    def hidden_widths(self, m):
        """Hidden widths of modality ``m``'s encoder (a shared list or one per modality)."""
        h = self.encoder_hidden
        if h and isinstance(h[0], (list, tuple)):
            if len(h) != self.generator.M:
                raise ConfigError("per-modality encoder_hidden needs one entry per modality")
            return list(h[m])
        return list(h)

    def encoder_widths(self, m):
        return [self.generator.d_obs, *self.hidden_widths(m), self.embed_dim]

    def projector_widths(self):
        return [(self.generator.M - 1) * self.embed_dim, *self.projector_hidden, self.embed_dim]

    def effective_loss(self):
        """Loss config after applying the ablation switches."""
        cfg = self.loss
        if self.beta_zero:
            cfg = replace(cfg, beta=0.0)
        if self.mlp_projector:
            cfg = replace(cfg, scorer="mlp")
        if self.include_positive:
            cfg = replace(cfg, include_positive_in_denominator=True)
        return cfg

    def with_seed(self, seed):
        """Same config with both the run seed and the data seed set to ``seed``."""
        return replace(self, seed=int(seed), generator=replace(self.generator, seed=int(seed)))

    def to_dict(self):
        d = asdict(self)
        d["generator"] = self.generator.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "generator" in d:
                d["generator"] = GeneratorSpec.from_dict(d["generator"])
            if "loss" in d:
                d["loss"] = LossConfig(**d["loss"])
            return cls(**d)
        except OvaibError as exc:
            raise ConfigError(str(exc)) from exc
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_json(text)
