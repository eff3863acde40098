"""Run configuration: dataclasses, JSON round-trip, and override precedence.

Config files are UTF-8 JSON with one object per module namespace
(``encoder``, ``sap``, ``decoder``, ``train``, ``eval``). CLI ``--set``
flags override file values with dotted keys; the ``GAVS_SEED`` environment
variable sits between the two (file < env < flag).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    image_size: int = 32
    patch_size: int = 4
    d_v: int = 64
    n_layers: int = 2
    n_heads: int = 4
    mlp_ratio: int = 4
    adapter_dim: int = 8
    adapters_enabled: bool = False
    d_m: int = 16
    audio_hidden: int = 32

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size


@dataclass
class SapConfig:
    enabled: bool = True
    d_n: int = 16
    noise_init: str = "uniform"  # or "zeros"


@dataclass
class DecoderConfig:
    n_layers: int = 2
    n_heads: int = 4
    mlp_ratio: int = 4
    cola_rank: int = 8
    adapter_rank: int = 8
    tuning_strategy: str = "cola"
    fusion_mode: str = "audio_prompt"
    feedback_enabled: bool = False


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 8
    steps: int = 1500
    pretrain_steps: int = 500
    margin: float = 0.5
    lambda_sem: float = 0.1
    seed: int = 0
    freeze_projection: bool = False
    symmetric_triplet: bool = False
    check_finite: bool = False


@dataclass
class EvalConfig:
    fscore_beta2: float = 0.3


_STRATEGIES = ("freeze", "finetune", "av_adapter", "va_adapter", "cola", "cola_av_va")
_FUSION_MODES = ("audio_prompt", "av_fusion")


@dataclass
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    sap: SapConfig = field(default_factory=SapConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self):
        e = self.encoder
        if e.image_size % e.patch_size != 0:
            raise ConfigError(
                f"image_size {e.image_size} not divisible by patch_size {e.patch_size}"
            )
        if e.d_v % 8 != 0:
            raise ConfigError(f"d_v {e.d_v} must be divisible by 8 (mask upscaling path)")
        if e.d_v % e.n_heads != 0 or e.d_v % self.decoder.n_heads != 0:
            raise ConfigError(f"d_v {e.d_v} must be divisible by the head counts")
        if e.adapter_dim >= e.d_v:
            raise ConfigError(f"adapter_dim {e.adapter_dim} must be < d_v {e.d_v}")
        if self.decoder.tuning_strategy not in _STRATEGIES:
            raise ConfigError(
                f"tuning_strategy {self.decoder.tuning_strategy!r} not in {_STRATEGIES}"
            )
        if self.decoder.fusion_mode not in _FUSION_MODES:
            raise ConfigError(
                f"fusion_mode {self.decoder.fusion_mode!r} not in {_FUSION_MODES}"
            )
        if self.sap.noise_init not in ("uniform", "zeros"):
            raise ConfigError(f"noise_init {self.sap.noise_init!r} unknown")
        if self.train.margin <= 0:
            raise ConfigError("margin must be > 0")
        if self.train.lambda_sem < 0:
            raise ConfigError("lambda_sem must be >= 0")
        return self

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        sections = {
            "encoder": EncoderConfig,
            "sap": SapConfig,
            "decoder": DecoderConfig,
            "train": TrainConfig,
            "eval": EvalConfig,
        }
        for section, section_cls in sections.items():
            values = d.get(section, {})
            known = {f.name: f for f in dataclasses.fields(section_cls)}
            for key in values:
                if key not in known:
                    raise ConfigError(f"unknown config key {section}.{key}")
            setattr(cfg, section, section_cls(**values))
        for key in d:
            if key not in sections:
                raise ConfigError(f"unknown config section {key!r}")
        return cfg.validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def apply_override(self, dotted_key: str, raw_value: str):
        """Set a single value from a 'section.key=value' CLI override."""
        try:
            section_name, key = dotted_key.split(".", 1)
        except ValueError:
            raise ConfigError(f"override key {dotted_key!r} must look like section.key")
        section = getattr(self, section_name, None)
        if section is None or not dataclasses.is_dataclass(section):
            raise ConfigError(f"unknown config section {section_name!r}")
        fields = {f.name: f for f in dataclasses.fields(section)}
        if key not in fields:
            raise ConfigError(f"unknown config key {dotted_key!r}")
        ftype = fields[key].type
        setattr(section, key, _coerce(raw_value, ftype, dotted_key))

    def copy(self) -> "RunConfig":
        return RunConfig.from_dict(self.to_dict())

    # -- presets -------------------------------------------------------------

    @classmethod
    def gradcheck_default(cls) -> "RunConfig":
        """Tiny model on the full 8x8 feature grid: small enough that central
        differences over every coordinate stay under the suite's time budget."""
        cfg = cls(
            encoder=EncoderConfig(
                image_size=32,
                patch_size=4,
                d_v=8,
                n_layers=1,
                n_heads=2,
                mlp_ratio=2,
                adapter_dim=2,
                adapters_enabled=True,
                d_m=4,
                audio_hidden=6,
            ),
            sap=SapConfig(enabled=True, d_n=4),
            decoder=DecoderConfig(
                n_layers=1,
                n_heads=2,
                mlp_ratio=2,
                cola_rank=2,
                adapter_rank=2,
                tuning_strategy="cola_av_va",
            ),
        )
        return cfg.validate()


def _coerce(raw: str, ftype, key: str):
    if ftype in ("bool", bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected boolean for {key}, got {raw!r}")
    if ftype in ("int", int):
        return int(raw)
    if ftype in ("float", float):
        return float(raw)
    return raw


def resolve_seed(cfg: RunConfig, flag_seed=None, env=os.environ) -> int:
    """Seed precedence: config file < GAVS_SEED env var < --seed flag."""
    seed = cfg.train.seed
    env_seed = env.get("GAVS_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"GAVS_SEED must be an integer, got {env_seed!r}")
    if flag_seed is not None:
        seed = flag_seed
    cfg.train.seed = seed
    return seed
