"""Pipeline configuration: flat ``section.key = value`` files.

Defaults are desk-scale except where a value is a training hyperparameter
with a published setting (Adam lr 1e-5, minibatch 4, MLM batch 8, 256-token
streams, 15% corruption rates); those keep the published value.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .corruptor import CorruptionSpec
from .model import ModelConfig
from .objectives import MlmSpec, NoiseSpec


class ConfigError(ValueError):
    """Bad key, bad value, or an inconsistent combination."""


@dataclass
class PathsConfig:
    news: str = ""  # empty: bundled desk corpus
    tweets: str = ""
    clauses: str = ""  # empty: templated merge corpus
    paraphrases: str = ""
    inputs: str = ""  # tweet groups for end-to-end inference


@dataclass
class BpeConfig:
    vocab_size: int = 2000


@dataclass
class PretrainConfig:
    steps: int = 40
    batch_size: int = 8
    stream_len: int = 256
    lr: float = 1e-5


@dataclass
class StyleConfig:
    dis: bool = False
    syn: bool = False
    cycles: int = 30
    batch_size: int = 4
    lr: float = 1e-5
    disc_lr: float = 0.0  # 0: same as lr
    disc_hidden: int = 64
    checkpoint_every: int = 0


@dataclass
class MergeConfig:
    cycles: int = 60
    batch_size: int = 4
    lr: float = 1e-5
    n_records: int = 300
    max_source_tokens: int = 512
    redundancy_p: float = 0.3


@dataclass
class EvalConfig:
    similarity_threshold: float = 0.2
    clusters: int = 4
    group_size: int = 4


@dataclass
class StagesConfig:
    transfer: bool = True
    merge: bool = True


def _model_defaults() -> ModelConfig:
    # room for a 512-token merge source plus BOS/EOS
    return ModelConfig(max_len=514)


@dataclass
class PipelineConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    bpe: BpeConfig = field(default_factory=BpeConfig)
    model: ModelConfig = field(default_factory=_model_defaults)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    mlm: MlmSpec = field(default_factory=MlmSpec)
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    style: StyleConfig = field(default_factory=StyleConfig)
    merge: MergeConfig = field(default_factory=MergeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    stages: StagesConfig = field(default_factory=StagesConfig)

    def validate(self) -> PipelineConfig:
        if self.pretrain.stream_len + 2 > self.model.max_len:
            raise ConfigError("pretrain.stream_len + 2 exceeds model.max_len")
        if self.merge.max_source_tokens + 2 > self.model.max_len:
            raise ConfigError("merge.max_source_tokens + 2 exceeds model.max_len")
        if self.eval.group_size < 1:
            raise ConfigError("eval.group_size must be >= 1")
        for name in ("pretrain", "style", "merge"):
            sec = getattr(self, name)
            if sec.batch_size < 1 or sec.lr <= 0:
                raise ConfigError(f"{name}: batch_size and lr must be positive")
        return self


# Ablation rows as stage toggles.
EXPERIMENTS = {
    "xlm-sty": dict(dis=False, syn=False, transfer=True, merge=False),
    "xlm-sty-dis-syn": dict(dis=True, syn=True, transfer=True, merge=False),
    "xlm-merge": dict(dis=False, syn=False, transfer=False, merge=True),
    "xlm-sty-dis-merge": dict(dis=True, syn=False, transfer=True, merge=True),
    "xlm-sty-syn-merge": dict(dis=False, syn=True, transfer=True, merge=True),
    "xlm-sty-dis-syn-merge": dict(dis=True, syn=True, transfer=True, merge=True),
}


def apply_experiment(cfg: PipelineConfig, name: str) -> PipelineConfig:
    try:
        t = EXPERIMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    cfg.style.dis, cfg.style.syn = t["dis"], t["syn"]
    cfg.stages.transfer, cfg.stages.merge = t["transfer"], t["merge"]
    return cfg


# ---------------------------------------------------------------- text form


def _parse_value(raw: str, current):
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, list):
        return [t.strip() for t in raw.split(",") if t.strip()]
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(value)
    return str(value)


def set_key(cfg: PipelineConfig, key: str, raw: str) -> None:
    """Assign one dotted key; sections are rebuilt so their own checks run."""
    parts = key.strip().split(".")
    if len(parts) == 1:
        if parts[0] != "seed":
            raise ConfigError(f"unknown key {key!r}")
        try:
            cfg.seed = int(raw)
        except ValueError:
            raise ConfigError(f"seed: expected an integer, got {raw!r}") from None
        return
    if len(parts) != 2 or not hasattr(cfg, parts[0]) or parts[0] == "seed":
        raise ConfigError(f"unknown key {key!r}")
    section = getattr(cfg, parts[0])
    names = {f.name for f in dataclasses.fields(section)}
    if parts[1] not in names:
        raise ConfigError(f"unknown key {key!r}")
    try:
        value = _parse_value(raw.strip(), getattr(section, parts[1]))
        setattr(cfg, parts[0], dataclasses.replace(section, **{parts[1]: value}))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Apply ``key = value`` lines; ``#`` starts a comment line."""
    cfg = base or PipelineConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        try:
            set_key(cfg, key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path=None, overrides=()) -> PipelineConfig:
    cfg = PipelineConfig()
    if path:
        cfg = parse_config(Path(path).read_text(encoding="utf-8"), cfg)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r}: expected key=value")
        set_key(cfg, key, value)
    return cfg.validate()


def dump_config(cfg: PipelineConfig) -> str:
    lines = [f"seed = {cfg.seed}"]
    for f in dataclasses.fields(cfg):
        if f.name == "seed":
            continue
        section = getattr(cfg, f.name)
        for sf in dataclasses.fields(section):
            lines.append(f"{f.name}.{sf.name} = {_format_value(getattr(section, sf.name))}")
    return "\n".join(lines) + "\n"
