"""Configuration dataclasses and YAML loading.

Scene descriptions drive the synthetic data generator; model/loss/train
configs drive the network and training loop. All configs are plain
dataclasses so they serialize cleanly into clip metadata and checkpoints.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

SCENARIOS = ("diffusion", "ambient", "entangled")
SMOKE_TYPES = ("diffusion", "ambient")


@dataclass(frozen=True)
class SmokeSource:
    """A point smoke emitter (surgical tool tip position is an input here)."""

    x: float
    y: float
    start_frame: int = 0
    direction_deg: float = 0.0
    velocity_px_per_frame: float = 2.0
    emission_rate: float = 1.0


@dataclass(frozen=True)
class AmbientParams:
    base_density: float = 0.4
    drift_speed: float = 0.5
    noise_scale: float = 1.0


@dataclass(frozen=True)
class AugParams:
    motion_blur_enabled: bool = False
    blur_length_px: int = 0


@dataclass(frozen=True)
class SceneConfig:
    """Declarative description of one synthetic clip.

    A SceneConfig (including its seed) fully determines the generated clip:
    regenerating from the same config reproduces identical bytes.
    """

    clip_length: int = 8
    height: int = 96
    width: int = 96
    scenario: str = "diffusion"
    sources: tuple[SmokeSource, ...] = (SmokeSource(x=24.0, y=48.0),)
    ambient_params: AmbientParams = AmbientParams()
    omega_mode: str = "auto"  # "auto" or "fixed"
    omega_value: float = 0.5  # used only when omega_mode == "fixed"
    aug: AugParams = AugParams()
    seed: int = 0

    def __post_init__(self):
        if self.clip_length < 1:
            raise ConfigError(f"clip_length must be >= 1, got {self.clip_length}")
        if self.height < 1 or self.width < 1:
            raise ConfigError("frame dims must be positive")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.omega_mode not in ("auto", "fixed"):
            raise ConfigError(f"omega_mode must be 'auto' or 'fixed', got {self.omega_mode!r}")
        if self.omega_mode == "fixed" and not 0.0 <= self.omega_value <= 1.0:
            raise ConfigError(f"fixed omega must be in [0, 1], got {self.omega_value}")
        if self.aug.blur_length_px < 0:
            raise ConfigError("blur_length_px must be >= 0")
        if self.scenario in ("diffusion", "entangled") and not self.sources:
            raise ConfigError(f"{self.scenario} scenario needs at least one source")
        for s in self.sources:
            if not (0 <= s.x < self.width and 0 <= s.y < self.height):
                raise ConfigError(f"source ({s.x}, {s.y}) outside {self.width}x{self.height} frame")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        if "sources" in d:
            d["sources"] = tuple(SmokeSource(**s) for s in d["sources"])
        if "ambient_params" in d and isinstance(d["ambient_params"], dict):
            d["ambient_params"] = AmbientParams(**d["ambient_params"])
        if "aug" in d and isinstance(d["aug"], dict):
            d["aug"] = AugParams(**d["aug"])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"bad scene config: {e}") from e


@dataclass(frozen=True)
class ModelConfig:
    """Network hyperparameters (desk-scale defaults)."""

    backbone: str = "resnet18"
    pretrained_weights: str = ""  # optional path to a state dict for the encoder
    # channel widths for pyramid scales f1..f4 (coarse, stride 32 -> fine, stride 4)
    channels: tuple[int, int, int, int] = (96, 64, 48, 32)
    # spatio-temporal refinement
    attn_heads: int = 2
    attn_head_dim: int = 32
    attn_window: int = 7
    attn_points: int = 4
    # query-based soft segmentation
    num_queries: int = 100
    query_dim: int = 64
    # overlap disentanglement
    binarize_threshold: float = 0.5
    patch_size: int = 4
    patch_dim: int = 64
    refine_iters: int = 2
    # reconstruction
    mask_window: int = 3
    activation_threshold: float = 0.01

    def __post_init__(self):
        if self.num_queries < 2:
            raise ConfigError("num_queries must be >= 2")
        if self.query_dim <= 0:
            raise ConfigError("query_dim must be positive")
        if self.mask_window % 2 != 1:
            raise ConfigError("mask_window must be odd")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ConfigError("binarize_threshold must be in (0, 1)")


@dataclass(frozen=True)
class LossConfig:
    lambda_g: float = 2.0
    wing_omega: float = 0.1
    wing_epsilon: float = 0.01
    lambda_cls: float = 2.0
    lambda_bce: float = 5.0
    lambda_dice: float = 5.0
    lambda_rec: float = 1.0
    no_smoke_weight: float = 0.1  # class weight for queries matched to nothing

    def __post_init__(self):
        if self.lambda_g < 0:
            raise ConfigError("lambda_g must be >= 0")
        if self.wing_omega <= 0 or self.wing_epsilon <= 0:
            raise ConfigError("wing params must be > 0")
        for name in ("lambda_cls", "lambda_bce", "lambda_dice", "lambda_rec"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    crop_size: int = 96
    batch_size: int = 2
    lr: float = 1e-4
    weight_decay: float = 0.05
    grad_clip: float = 0.01
    total_iters: int = 2000
    poly_power: float = 0.9
    # photometric distortion half-ranges (brightness, contrast, saturation)
    photometric: tuple[float, float, float] = (0.2, 0.2, 0.2)
    seed: int = 0
    checkpoint_interval: int = 500
    log_interval: int = 50

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.total_iters < 0:
            raise ConfigError("total_iters must be >= 0")
        if self.crop_size % 32 != 0:
            raise ConfigError("crop_size must be divisible by 32")


@dataclass(frozen=True)
class RunConfig:
    """Top-level bundle parsed from a training config file."""

    model: ModelConfig = ModelConfig()
    loss: LossConfig = LossConfig()
    train: TrainConfig = TrainConfig()


def _build(cls, d: dict):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - fields
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    coerced = {}
    for f in dataclasses.fields(cls):
        if f.name not in d:
            continue
        v = d[f.name]
        if isinstance(v, list):
            v = tuple(v)
        coerced[f.name] = v
    return cls(**coerced)


def load_run_config(path: str | Path) -> RunConfig:
    """Parse a YAML file with optional model/loss/train sections."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    return RunConfig(
        model=_build(ModelConfig, raw.get("model", {})),
        loss=_build(LossConfig, raw.get("loss", {})),
        train=_build(TrainConfig, raw.get("train", {})),
    )


def load_scene_configs(path: str | Path) -> list[SceneConfig]:
    """Parse a YAML file describing one or more scenes.

    Accepts either a single mapping or a top-level `scenes:` list.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as f:
        raw = yaml.safe_load(f) or {}
    if isinstance(raw, dict) and "scenes" in raw:
        entries = raw["scenes"]
    elif isinstance(raw, dict):
        entries = [raw]
    elif isinstance(raw, list):
        entries = raw
    else:
        raise ConfigError(f"unrecognized scene config layout: {path}")
    return [SceneConfig.from_dict(e) for e in entries]
