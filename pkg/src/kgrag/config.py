"""Engine configuration: one key-value text file, flag overrides on top.

Config lines are ``key = value``; '#' starts a comment. Credentials are
never stored in the file - only the name of the environment variable that
holds them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class EngineConfig:
    store_dir: str = "./store"
    ontology: str = ""
    vocab: str = ""  # empty: byte-only vocabulary
    templates_dir: str = ""  # empty: packaged defaults
    provider: str = "mock"  # mock | remote
    mock_lexicon: str = ""
    mock_script: str = ""
    remote_endpoint: str = ""
    remote_model: str = ""
    credentials_env: str = ""
    embedder: str = "deterministic"  # deterministic | remote
    embed_endpoint: str = ""
    embed_model: str = ""
    reference_kb: str = ""  # jsonl of {qid, label, text}
    listen: str = "127.0.0.1:8095"
    cors_origin: str = "*"
    k: int = 4
    n: int = 3
    level: str = "kg"
    concurrency: int = 4
    chunk_size: int = 512
    chunk_overlap: int = 64
    disambiguation_threshold: float = 0.35

    def merged(self, overrides: dict) -> "EngineConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in values:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
        return EngineConfig(**_coerce(values))


def _coerce(values: dict) -> dict:
    out = dict(values)
    for key in ("k", "n", "concurrency", "chunk_size", "chunk_overlap"):
        out[key] = int(out[key])
    out["disambiguation_threshold"] = float(out["disambiguation_threshold"])
    return out


def parse_config_file(path: str | Path) -> dict:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> EngineConfig:
    """defaults <- config file <- explicit overrides."""
    config = EngineConfig()
    if path:
        config = config.merged(parse_config_file(path))
    if overrides:
        config = config.merged(overrides)
    return config
