"""Pipeline configuration file (YAML) shared by all subcommands.

Precedence is: command-line flags > config file values > built-in
defaults. The API key itself never lives in the file; the file names the
environment variable that holds it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml


class ConfigError(Exception):
    pass


@dataclass
class ProviderConfig:
    endpoint: str = ""
    model: str = "gpt-4-vision-preview"
    auth_env_var: str = "LVLM_API_KEY"
    temperature: float = 0.2
    max_tokens: int = 2048


@dataclass
class EmbeddingConfig:
    endpoint: str = ""
    model: str = "all-mpnet-base-v2"
    auth_env_var: str = ""
    dims: int = 768


@dataclass
class CurationConfig:
    min_dim: int = 512
    tau: float = 0.44
    blocklist: str = ""


@dataclass
class DistillConfig:
    concurrency: int = 4
    rpm: int = 600
    max_attempts: int = 3
    base_backoff_ms: float = 100.0

    def validate(self):
        if self.concurrency < 1:
            raise ConfigError("distill.concurrency must be >= 1")
        if self.rpm < 1:
            raise ConfigError("distill.rpm must be >= 1")


@dataclass
class PipelineConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    curation: CurationConfig = field(default_factory=CurationConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    work_dir: str = "."

    def api_key(self) -> str:
        key = os.environ.get(self.provider.auth_env_var, "")
        if not key:
            raise ConfigError(
                f"API key env var {self.provider.auth_env_var!r} is not set")
        return key


def _merge(dc, values: dict, section: str):
    for key, value in values.items():
        if not hasattr(dc, key):
            raise ConfigError(f"unknown config key {section}.{key}")
        setattr(dc, key, value)


def load_config(path: str | None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    sections = {"provider": cfg.provider, "embedding": cfg.embedding,
                "curation": cfg.curation, "distill": cfg.distill}
    for name, values in data.items():
        if name == "paths":
            cfg.work_dir = values.get("work_dir", cfg.work_dir)
        elif name in sections:
            _merge(sections[name], values or {}, name)
        else:
            raise ConfigError(f"unknown config section {name!r}")
    cfg.distill.validate()
    if cfg.curation.blocklist and not os.path.isfile(cfg.curation.blocklist):
        raise ConfigError(f"blocklist file not found: {cfg.curation.blocklist}")
    return cfg
