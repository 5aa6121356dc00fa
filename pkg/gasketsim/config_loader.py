"""Load packaged defaults, laws and run configurations.

Packaged defaults are searched in order:
1. Explicit path
2. Package data (installed via pip)
3. Repository root (development)
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional, TypeVar

import yaml
from pydantic import BaseModel

from gasketsim.errors import ConfigError
from gasketsim.types import HeightLaw, MassLaw, RotorLaw, RunConfig

DEFAULTS_NAME = "defaults.yaml"

LawT = TypeVar("LawT", RotorLaw, HeightLaw, MassLaw)


def load_defaults(path: Optional[str | Path] = None) -> dict[str, Any]:
    """Load the packaged defaults.

    Args:
        path: Optional explicit path to a defaults YAML file.

    Returns:
        The parsed mapping (sections ``experiment``, ``stabilize``, ``render``).

    Raises:
        FileNotFoundError: If no defaults file can be found.
    """
    # 1. Explicit path
    if path is not None:
        p = Path(path)
        if p.exists():
            return _parse_mapping(p.read_text(encoding="utf-8"), p)
        raise FileNotFoundError(f"{DEFAULTS_NAME} not found at: {path}")

    # 2. Package data (importlib.resources)
    try:
        import importlib.resources as resources

        ref = resources.files("gasketsim") / DEFAULTS_NAME
        if ref.is_file():
            return _parse_mapping(ref.read_text(encoding="utf-8"), DEFAULTS_NAME)
    except (ImportError, AttributeError, TypeError, FileNotFoundError):
        pass

    # 3. Repository root (walk up from this file)
    current = Path(__file__).resolve().parent
    for _ in range(5):
        candidate = current / DEFAULTS_NAME
        if candidate.exists():
            return _parse_mapping(candidate.read_text(encoding="utf-8"), candidate)
        current = current.parent

    raise FileNotFoundError(f"could not find {DEFAULTS_NAME}")


def _parse_mapping(text: str, source: Any) -> dict[str, Any]:
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping")
    return data


def load_structured(path: str | Path) -> Any:
    """Parse a JSON (``.json``) or YAML (anything else) file."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix.lower() == ".json":
            return json.loads(text)
        return yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse {p}: {e}") from e


def load_law(text: str, model: type[LawT]) -> LawT:
    """Parse a law given inline as JSON or as ``@file`` (JSON or YAML).

    Bare lists are accepted: four probabilities for a :class:`RotorLaw`,
    ``[[value, probability], ...]`` pairs for height and mass laws.

    Raises:
        ConfigError: If the text is not valid JSON or the file is unreadable.
        pydantic.ValidationError: If the data is not a valid law.
    """
    if text.startswith("@"):
        try:
            data = load_structured(text[1:])
        except OSError as e:
            raise ConfigError(f"cannot read law file {text[1:]}: {e}") from e
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"law is not valid JSON: {e}") from e
    if isinstance(data, list):
        data = {"probabilities": data} if model is RotorLaw else {"support": data}
    return model.model_validate(data)


def load_run_config(path: str | Path) -> RunConfig:
    """Load a full :class:`RunConfig` from JSON or YAML."""
    try:
        data = load_structured(path)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return RunConfig.model_validate(data)


def merged(base: dict[str, Any], *layers: Optional[dict[str, Any]]) -> dict[str, Any]:
    """Shallow merge; later layers win, ``None`` values are skipped."""
    out = dict(base)
    for layer in layers:
        if layer:
            out.update({k: v for k, v in layer.items() if v is not None})
    return out


def model_defaults(model: type[BaseModel], section: dict[str, Any]) -> dict[str, Any]:
    """The entries of a defaults section that ``model`` has fields for."""
    return {k: v for k, v in section.items() if k in model.model_fields}
