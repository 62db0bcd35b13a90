"""Training configuration."""

from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError

MODES = ("da", "dg")


@dataclass(frozen=True)
class TrainConfig:
    """Every tunable of a training run.

    Defaults are the full-scale settings (gamma = sigma = 0.1, lr 0.001,
    momentum 0.9, weight decay 5e-4, batch 128, 256-unit bottleneck,
    1024-unit discriminator). :meth:`desk` returns the smaller settings used
    for the synthetic experiments.
    """

    gamma: float = 0.1
    sigma: float = 0.1
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 128
    epochs: int = 50
    bottleneck_dim: int = 256
    extractor_hidden_dims: tuple = (64, 64)
    discriminator_hidden_dim: int = 1024
    head_init_std: float = 0.005
    seed: int = 0
    mode: str = "da"
    target_fraction: float = 1.0
    grl_ramp: bool = False
    target_init: str = "copy"
    eval_per_step: bool = False

    def __post_init__(self):
        object.__setattr__(self, "extractor_hidden_dims",
                           tuple(int(h) for h in self.extractor_hidden_dims))
        self.validate()

    def validate(self):
        for name in ("gamma", "sigma", "weight_decay", "head_init_std"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        dims = (self.bottleneck_dim, self.discriminator_hidden_dim) + self.extractor_hidden_dims
        if any(d < 1 for d in dims):
            raise ConfigError("layer widths must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.target_fraction <= 1:
            raise ConfigError("target_fraction must lie in (0, 1]")
        if self.target_init not in ("copy", "independent"):
            raise ConfigError("target_init must be 'copy' or 'independent'")

    @classmethod
    def desk(cls, **overrides):
        """Settings sized for 2-D synthetic tasks that train in about a second."""
        base = dict(batch_size=32, epochs=60, bottleneck_dim=16,
                    extractor_hidden_dims=(32, 32), discriminator_hidden_dim=64,
                    learning_rate=0.01)
        base.update(overrides)
        return cls(**base)

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["extractor_hidden_dims"] = list(self.extractor_hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)
