import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Set, Tuple

from dotenv import load_dotenv

from models import (
    EvalConfig,
    GraphConfig,
    ModelConfig,
    Precision,
    PreprocessConfig,
    RetrievalConfig,
    TrainConfig,
)
from utils.errors import ConfigError

# Load environment variables
load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


class Settings:
    """Process-level settings loaded from environment variables."""

    def __init__(self):
        # Paths
        self.data_dir: str = os.getenv("CARES_DATA_DIR", "./data")
        self.log_dir: str = os.getenv("CARES_LOG_DIR", "./logs")

        # Runtime
        self.log_level: str = os.getenv("CARES_LOG_LEVEL", "INFO")
        self.threads: int = int(os.getenv("CARES_THREADS", "1"))
        self.progress: bool = _env_bool("CARES_PROGRESS", "true")

        self._validate()

    def _validate(self):
        """Validate settings."""
        if self.threads < 1:
            raise ConfigError("CARES_THREADS must be a positive integer")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise ConfigError(f"CARES_LOG_LEVEL {self.log_level!r} is not a log level")


@dataclass
class PathsConfig:
    """Artifact locations; empty strings resolve under the data directory."""

    input: str = ""
    dataset_dir: str = ""
    graph: str = ""
    checkpoint: str = ""
    reports_dir: str = ""


@dataclass
class RunConfig:
    """Every knob of a run, grouped by pipeline stage."""

    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    threads: int = 1
    deterministic: bool = False
    debug: bool = False
    variant: str = "cares"
    dataset_preset: str = ""
    # flat keys set by a config file or flag rather than left at their default
    explicit: Set[str] = field(default_factory=set)

    def resolve_paths(self, data_dir: str):
        """Fill unset artifact paths with defaults under ``data_dir``."""
        p = self.paths
        p.dataset_dir = p.dataset_dir or os.path.join(data_dir, "dataset")
        p.graph = p.graph or os.path.join(data_dir, "graph.bin")
        p.checkpoint = p.checkpoint or os.path.join(data_dir, "model.ckpt")
        p.reports_dir = p.reports_dir or os.path.join(data_dir, "reports")

    def to_flat(self) -> Dict[str, Any]:
        """Flat key -> value view, the same shape as a config file."""
        flat: Dict[str, Any] = {}
        for key, (section, name) in FLAT_KEYS.items():
            value = getattr(getattr(self, section), name) if section else getattr(self, name)
            flat[key] = value.value if isinstance(value, Precision) else value
        return flat

    def validate(self):
        """Raise ConfigError on out-of-range values."""
        pre, g, m, t, r = self.preprocess, self.graph, self.model, self.train, self.retrieval
        checks = [
            (pre.min_item_freq >= 1, "min_item_freq must be >= 1"),
            (pre.t_max >= 2, "t_max must be >= 2"),
            (pre.test_days > 0, "test_days must be positive"),
            (g.epsilon >= 1, "epsilon must be >= 1"),
            (g.top_n >= 1, "top_n must be >= 1"),
            (g.top_q >= 0, "top_q must be >= 0"),
            (0 < g.alpha <= 1, "alpha must be in (0, 1]"),
            (m.dim >= 1, "dim must be >= 1"),
            (m.layers >= 0, "layers must be >= 0"),
            (t.batch_size >= 1, "batch_size must be >= 1"),
            (t.lr > 0, "lr must be positive"),
            (0 < t.lr_decay <= 1, "lr_decay must be in (0, 1]"),
            (t.lr_decay_every >= 1, "lr_decay_every must be >= 1"),
            (t.l2 >= 0, "l2 must be >= 0"),
            (t.lambda_ >= 0, "lambda must be >= 0"),
            (t.epochs >= 0, "epochs must be >= 0"),
            (t.score_scale > 0, "score_scale must be positive"),
            (r.hash_dim >= 1, "hash_dim must be >= 1"),
            (r.hash_dim < m.dim, "hash_dim must be smaller than dim"),
            (r.pool_size >= 1, "pool_size must be >= 1"),
            (r.retrieve_k >= 1, "retrieve_k must be >= 1"),
            (self.eval.cutoff >= 1, "cutoff must be >= 1"),
            (self.threads >= 1, "threads must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)


def _build_flat_keys() -> Dict[str, Tuple[Optional[str], str]]:
    keys: Dict[str, Tuple[Optional[str], str]] = {}
    for section in ("preprocess", "graph", "model", "train", "retrieval", "eval", "paths"):
        section_type = {f.name: f for f in dataclasses.fields(RunConfig)}[section].default_factory
        for f in dataclasses.fields(section_type):
            key = "lambda" if f.name == "lambda_" else f.name
            if key in ("input", "graph", "checkpoint") and section == "paths":
                key = f"{key}_path"
            # fields present in two sections are set together, see apply_overrides
            keys.setdefault(key, (section, f.name))
    for name in ("threads", "deterministic", "debug", "variant", "dataset_preset"):
        keys[name] = (None, name)
    return keys


# flat config key -> (section attribute, field name)
FLAT_KEYS = _build_flat_keys()


def _coerce(current: Any, value: Any, key: str) -> Any:
    if isinstance(current, Precision):
        try:
            return Precision(value)
        except ValueError:
            raise ConfigError(f"{key} must be one of float32/float64, got {value!r}")
    if value is None or current is None:
        return value
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    return value


def apply_overrides(config: RunConfig, values: Dict[str, Any]) -> RunConfig:
    """Set flat keys on ``config``; unknown keys are rejected."""
    for key, value in values.items():
        if key not in FLAT_KEYS:
            raise ConfigError(f"Unknown config key: {key}")
        section, name = FLAT_KEYS[key]
        target = getattr(config, section) if section else config
        setattr(target, name, _coerce(getattr(target, name), value, key))
        if key == "use_side_info":
            config.model.use_side_info = config.graph.use_side_info
    return config


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a flat JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            values = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(values, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return values


def build_run_config(
    config_path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
    data_dir: Optional[str] = None,
) -> RunConfig:
    """File values first, then flag overrides, then presets and variants."""
    # imported here to keep config/ free of import cycles
    from config.presets import get_lambda
    from config.variants import apply_variant

    config = RunConfig()
    file_values = load_config_file(config_path) if config_path else {}
    apply_overrides(config, file_values)
    flag_values = {k: v for k, v in (overrides or {}).items() if v is not None}
    apply_overrides(config, flag_values)
    config.explicit = set(file_values) | set(flag_values)

    # a preset supplies lambda only when lambda was not set explicitly
    if config.dataset_preset and "lambda" not in file_values and "lambda" not in flag_values:
        config.train.lambda_ = get_lambda(config.dataset_preset)
    apply_variant(config, config.variant)

    if config.deterministic:
        config.threads = 1
    config.resolve_paths(data_dir or settings.data_dir)
    config.validate()
    return config


# Global settings instance
settings = Settings()
