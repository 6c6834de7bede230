from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

import toml
from dotenv import load_dotenv

from ce_lab.models import Tolerances
from ce_lab.utils.log_util import configure_logger

log = configure_logger(__name__)

_ENV_LOADED_FLAG = "_CE_LAB_ENV_LOADED"
DEFAULT_CONFIG_FILE = "ce_lab.toml"


@dataclass(frozen=True)
class PipelineSettings:
    k_max: int = 4
    order_trials: int = 50
    ks_probes: int = 100
    words_per_length: int = 20
    word_lengths: Tuple[int, ...] = (1, 2, 3, 4, 5)
    isometry_trials: int = 20
    max_rounds: Optional[int] = None
    seed: int = 0


@dataclass(frozen=True)
class Settings:
    tolerances: Tolerances = field(default_factory=Tolerances)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)
    threads: Optional[int] = None


def load_environment() -> None:
    """Load a ``.env`` file once per process."""
    if not os.environ.get(_ENV_LOADED_FLAG):
        load_dotenv()
        os.environ[_ENV_LOADED_FLAG] = "1"


def _read_toml(path: Path) -> Dict[str, object]:
    try:
        return toml.load(path)
    except (OSError, toml.TomlDecodeError) as exc:
        log.warning("Ignoring unreadable config file %s: %s", path, exc)
        return {}


def load_settings(config_path: Optional[str] = None) -> Settings:
    """
    Resolve settings from defaults, the optional toml file and the environment.

    :param config_path: explicit toml path; falls back to ``CE_LAB_CONFIG`` then ``ce_lab.toml``.
    :return: frozen Settings.
    """
    load_environment()
    raw: Dict[str, object] = {}
    candidate = config_path or os.getenv("CE_LAB_CONFIG")
    if candidate:
        raw = _read_toml(Path(candidate))
    elif Path(DEFAULT_CONFIG_FILE).is_file():
        raw = _read_toml(Path(DEFAULT_CONFIG_FILE))

    tol_section = raw.get("tolerances", {}) if isinstance(raw.get("tolerances"), dict) else {}
    tolerances = Tolerances.from_mapping(tol_section)

    pipe_section = raw.get("pipeline", {}) if isinstance(raw.get("pipeline"), dict) else {}
    pipeline = PipelineSettings()
    known = {k: v for k, v in pipe_section.items() if k in PipelineSettings.__dataclass_fields__}
    if "word_lengths" in known:
        known["word_lengths"] = tuple(int(v) for v in known["word_lengths"])
    unknown = set(pipe_section) - set(known)
    if unknown:
        log.warning("Unknown [pipeline] keys ignored: %s", sorted(unknown))
    pipeline = replace(pipeline, **known)

    return Settings(tolerances=tolerances, pipeline=pipeline, threads=_threads_from_env())


def _threads_from_env() -> Optional[int]:
    value = os.getenv("CE_LAB_THREADS")
    if not value:
        return None
    try:
        threads = int(value)
    except ValueError:
        log.warning("CE_LAB_THREADS must be an integer, got %r", value)
        return None
    return max(1, threads)
