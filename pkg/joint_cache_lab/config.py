"""
Run configuration for Joint Cache Lab.

A RunConfig holds every tunable of a run. It is read from a flat
`key = value` file (one key per line, `#` comments) and can be overridden
from the command line. Unknown keys are errors.

Usage:
    from joint_cache_lab.config import RunConfig, load_config

    config = load_config("ablation.conf").with_overrides({"seed": "3"})
    print(config.digest())          # 12 hex chars, names the output directory
    print(config.to_text())         # canonical effective config
"""

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Tuple, Union

from joint_cache_lab.errors import ConfigError

logger = logging.getLogger(__name__)

# Fields restricted to a fixed set of spellings.
CHOICES: Dict[str, Tuple[str, ...]] = {
    "prefetch_target": ("global", "per_pc"),
    "pairing": ("same_set", "same_block"),
    "prefetcher": ("stride", "next_line", "none"),
    "prefetch_observe": ("all", "misses", "hits"),
}


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a simulation + training run."""

    # Features
    history_length: int = 16
    pair_window: int = 32
    negatives_per_positive: int = 4
    pc_min_count: int = 1
    page_min_count: int = 2
    prefetch_target: str = "global"
    pairing: str = "same_set"

    # Models / optimizer
    embed_dim: int = 32
    hidden_dim: int = 64
    shared_dim: int = 32
    projection_dim: int = 32
    temperature: float = 0.1
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_repl: float = 1.0
    lambda_pf: float = 1.0
    pos_weight: float = 1.0
    finetune: bool = False
    finetune_lr_scale: float = 0.1

    # Training schedule
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 5
    pretrain_epochs: int = 20
    seed: int = 0
    seeds: Tuple[int, ...] = field(default=(0, 1, 2, 3, 4))

    # Cache
    num_sets: int = 16
    associativity: int = 1
    block_size: int = 64
    page_size: int = 4096
    prefetcher: str = "stride"
    prefetch_degree: int = 1
    prefetch_observe: str = "all"

    # Evaluation
    evaluate_deployment: bool = False
    workers: int = 1

    def __post_init__(self):
        for name, allowed in CHOICES.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(
                    f"{name} must be one of {', '.join(allowed)}, got {getattr(self, name)!r}"
                )
        positive = (
            "history_length", "pair_window", "negatives_per_positive", "embed_dim",
            "hidden_dim", "shared_dim", "projection_dim", "batch_size", "max_epochs",
            "num_sets", "associativity", "block_size", "page_size", "workers",
            "pc_min_count", "page_min_count",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.patience < 0 or self.pretrain_epochs < 0 or self.prefetch_degree < 0:
            raise ConfigError("patience, pretrain_epochs and prefetch_degree must be >= 0")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")

    # ==========================================================================
    # Overrides and rendering
    # ==========================================================================

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Return a copy with `overrides` applied; string values are parsed."""
        if not overrides:
            return self
        known = {f.name: f for f in dataclasses.fields(self)}
        changes: Dict[str, Any] = {}
        for key, value in overrides.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, known[key].type, value) if isinstance(value, str) else value
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Canonical `key = value` rendering, sorted by key."""
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {_render(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """First 12 hex chars of SHA-256 over the canonical text."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:12]

    def run_name(self, seed: int) -> str:
        """Output directory name for one run: `<digest>-s<seed>`."""
        return f"{self.digest()}-s{seed}"


# ==============================================================================
# Parsing helpers
# ==============================================================================


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_seeds(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.replace(" ", "").split(",") if part)


_PARSERS: Dict[str, Callable[[str], Any]] = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str.strip,
}


def _coerce(key: str, annotation: Union[type, str], raw: str) -> Any:
    type_name = annotation if isinstance(annotation, str) else getattr(annotation, "__name__", "")
    try:
        if key == "seeds":
            return _parse_seeds(raw)
        return _PARSERS[str(type_name)](raw.strip())
    except (ValueError, KeyError) as e:
        raise ConfigError(f"invalid value for {key}: {raw!r} ({e})") from e


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    """Parse flat `key = value` text on top of `base`."""
    overrides: Dict[str, str] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' at line {number}: {raw_line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in overrides:
            raise ConfigError(f"duplicate config key {key!r} at line {number}")
        overrides[key] = value
    return base.with_overrides(overrides)


def load_config(path: Union[str, Path]) -> RunConfig:
    """Load a RunConfig from a flat config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    config = parse_config_text(text)
    logger.debug(f"Loaded config {path} (digest {config.digest()})")
    return config


def parse_overrides(pairs) -> Dict[str, str]:
    """Turn `["key=value", ...]` CLI arguments into a dict."""
    result: Dict[str, str] = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        result[key.strip()] = value.strip()
    return result
