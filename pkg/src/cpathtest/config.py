"""Pipeline configuration: one JSON document, ``${ENV}`` interpolation, CLI overrides."""

from __future__ import annotations

import json
import os
import re
import shutil
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError

RUNTIME_DIR = Path(__file__).parent / "runtime"
SEED_POOL_DIR = Path(__file__).parent / "pool"

STAGES = ("ingest", "paths", "describe", "retrieve", "opmap", "synth", "validate", "merge", "coverage")


@dataclass
class RepairPolicy:
    max_iterations: int = 3
    repair_temperature: float = 0.1
    generation_temperature: float = 0.0
    per_test_timeout: float = 10.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        for t in (self.repair_temperature, self.generation_temperature):
            if not 0.0 <= t <= 1.0:
                raise ConfigError(f"temperature {t} outside [0, 1]")
        if self.per_test_timeout <= 0:
            raise ConfigError("per_test_timeout must be positive")


@dataclass
class ToolchainConfig:
    cc: str = "gcc"
    gcov: str = "gcov"
    cflags: list[str] = field(default_factory=lambda: ["-std=gnu11", "-g", "-O0", "-w"])
    sanitize_flags: list[str] = field(default_factory=lambda: ["-fsanitize=address", "-fno-omit-frame-pointer"])
    coverage_flags: list[str] = field(default_factory=lambda: ["--coverage"])
    ldflags: list[str] = field(default_factory=lambda: ["-lm"])
    unity_dir: str = str(RUNTIME_DIR)

    def resolve_cc(self) -> str | None:
        return shutil.which(self.cc)

    def resolve_gcov(self) -> str | None:
        return shutil.which(self.gcov)


@dataclass
class LlmConfig:
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "CPATHTEST_API_KEY"
    model: str = "deepseek-chat"
    max_output_tokens: int = 8192
    requests_per_minute: float = 60.0
    max_retries: int = 4
    timeout: float = 120.0


@dataclass
class EmbedderConfig:
    backend: str = "hash"  # hash | remote
    dim: int = 256
    base_url: str = ""
    api_key_env: str = "CPATHTEST_EMBED_KEY"
    model: str = ""


@dataclass
class PipelineConfig:
    project_root: str = "."
    artifacts_dir: str = "artifacts"
    toolchain: ToolchainConfig = field(default_factory=ToolchainConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    theta: float = 0.35
    loop_bound: int = 1
    max_paths: int = 256
    repair: RepairPolicy = field(default_factory=RepairPolicy)
    llm_parallelism: int = 4
    process_parallelism: int = max(1, os.cpu_count() or 1)
    exclude_patterns: list[str] = field(default_factory=lambda: [r"^main$", r"^test_"])
    exclude_io_only: bool = True
    include_dirs: list[str] = field(default_factory=list)
    helper_pool: str = str(SEED_POOL_DIR)
    std_allow_list: list[str] = field(default_factory=lambda: list(DEFAULT_STD_ALLOW))
    from_stage: str | None = None
    to_stage: str | None = None
    use_cache: bool = True
    mutation_command: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.theta < 1.0:
            raise ConfigError(f"theta must be in [0, 1), got {self.theta}")
        if self.loop_bound < 0:
            raise ConfigError("loop_bound must be >= 0")
        if self.max_paths < 1:
            raise ConfigError("max_paths must be >= 1")
        if self.llm_parallelism < 1 or self.process_parallelism < 1:
            raise ConfigError("parallelism limits must be >= 1")
        for stage in (self.from_stage, self.to_stage):
            if stage is not None and stage not in STAGES:
                raise ConfigError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
        for p in self.exclude_patterns:
            try:
                re.compile(p)
            except re.error as exc:
                raise ConfigError(f"bad exclusion pattern {p!r}: {exc}") from exc

    @property
    def project_name(self) -> str:
        return Path(self.project_root).resolve().name

    @property
    def out_dir(self) -> Path:
        return Path(self.artifacts_dir) / self.project_name

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        nested = {"toolchain": ToolchainConfig, "llm": LlmConfig, "embedder": EmbedderConfig, "repair": RepairPolicy}
        known = {f.name for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key in nested:
                sub = nested[key]
                sub_known = {f.name for f in fields(sub)}
                bad = set(value) - sub_known
                if bad:
                    raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
                kwargs[key] = sub(**value)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


DEFAULT_STD_ALLOW = (
    "malloc calloc realloc free memset memcpy memmove memcmp strlen strcmp strncmp strcpy strncpy "
    "strcat strdup strchr strstr snprintf sprintf abs"
).split()

_ENV = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


def _interpolate(value: Any) -> Any:
    if isinstance(value, str):
        def sub(m: re.Match) -> str:
            name, default = m.group(1), m.group(2)
            if name in os.environ:
                return os.environ[name]
            if default is not None:
                return default
            raise ConfigError(f"environment variable {name} is not set")
        return _ENV.sub(sub, value)
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    return value


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        data = _interpolate(data)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            head, tail = key.split(".", 1)
            data.setdefault(head, {})[tail] = value
        else:
            data[key] = value
    return PipelineConfig.from_dict(data)
