"""Pipeline configuration.

The configuration file is INI text with one section per module::

    [pipeline]
    input = access.log
    output_dir = run
    seed = 0

    [fuzzy_clustering]
    variant = ppfcm
    c = 3

Every key is optional except ``input``; missing keys take the defaults of
the corresponding module. Command-line flags override file values.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from datetime import timedelta
from pathlib import Path

from .classification import RvmConfig, TrainConfig
from .feature_reduction import IcaConfig
from .fuzzy_clustering import VARIANTS, ClusterConfig
from .log_ingest import DEFAULT_BLOCKED_EXTENSIONS, DEFAULT_ROBOT_MARKERS, CleaningRules
from .sessionizer import NAVIGATION_ORIENTED, SessionPolicy

CLASSIFIERS = ("svm", "rvm", "both")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    inputs: list[Path] = field(default_factory=list)
    output_dir: Path = Path("run")
    truth: Path | None = None
    seed: int = 0
    dialect: str | None = None
    # log_ingest
    blocked_extensions: frozenset[str] = DEFAULT_BLOCKED_EXTENSIONS
    robot_markers: frozenset[str] = DEFAULT_ROBOT_MARKERS
    robots_txt_trigger: bool = True
    # sessionizer
    session_mode: str = NAVIGATION_ORIENTED
    timeout_minutes: float = 30.0
    hard_cap_hours: float = 24.0
    split_by_agent: bool = True
    # feature_reduction
    alpha: float = 1.0
    ica_max_iter: int = 200
    ica_tol: float = 1e-4
    nonlinearity: str = "logcosh"
    # fuzzy_clustering
    variant: str = "ppfcm"
    c: int = 3
    q: float = 2.0
    gamma: float = 0.5
    k_neighbors: int = 5
    cluster_tol: float = 1e-5
    cluster_max_iter: int = 100
    # classification
    classifier: str = "both"
    C: float = 1.0
    sigma: float | None = None
    cv_folds: int = 5
    cross_validate: bool = True
    test_fraction: float = 0.2
    rvm_alpha_init: float = 1e-2
    rvm_beta_init: float = 1.0
    rvm_prune_threshold: float = 1e6
    rvm_tol: float = 1e-3
    rvm_max_iter: int = 500
    rvm_beta_max: float = 100.0

    def validate(self) -> None:
        if not self.inputs:
            raise ConfigError("no input log given")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie strictly between 0 and 1")
        # building the module-level configs runs their own checks
        try:
            self.cleaning_rules(), self.session_policy(), self.ica_config()
            self.cluster_config(), self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def missing_paths(self) -> list[Path]:
        paths = list(self.inputs) + ([self.truth] if self.truth else [])
        return [p for p in paths if not Path(p).exists()]

    # module configs ---------------------------------------------------------
    def cleaning_rules(self) -> CleaningRules:
        return CleaningRules(blocked_extensions=frozenset(self.blocked_extensions),
                             robot_agent_markers=frozenset(self.robot_markers),
                             robots_txt_trigger=self.robots_txt_trigger)

    def session_policy(self) -> SessionPolicy:
        return SessionPolicy(self.session_mode, timedelta(minutes=self.timeout_minutes),
                             timedelta(hours=self.hard_cap_hours))

    def ica_config(self) -> IcaConfig:
        return IcaConfig(self.ica_max_iter, self.ica_tol, self.seed, self.nonlinearity)

    def cluster_config(self, c: int | None = None) -> ClusterConfig:
        return ClusterConfig(self.c if c is None else c, self.q, self.gamma, self.k_neighbors,
                             self.cluster_tol, self.cluster_max_iter, self.seed)

    def train_config(self) -> TrainConfig:
        rvm = RvmConfig(self.rvm_alpha_init, self.rvm_beta_init, self.rvm_prune_threshold,
                        self.rvm_tol, self.rvm_max_iter, self.rvm_beta_max)
        return TrainConfig(C=self.C, sigma=self.sigma, cv_folds=self.cv_folds, seed=self.seed, rvm=rvm)

    def snapshot(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = str(v)
            elif isinstance(v, (list, tuple)):
                v = [str(x) for x in v]
            elif isinstance(v, frozenset):
                v = sorted(v)
            out[f.name] = v
        return out


# ---------------------------------------------------------------------------
# INI files

def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _words(text: str) -> frozenset[str]:
    return frozenset(w.strip().lower().lstrip(".") for w in text.replace(",", " ").split() if w.strip())


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto", "median") else float(text)


def _paths(text: str) -> list[Path]:
    return [Path(p) for p in text.split()]


def _optional_path(text: str) -> Path | None:
    return Path(text) if text.strip() else None


def _optional_str(text: str) -> str | None:
    return text.strip() or None


# section -> key -> (attribute, parser)
SCHEMA = {
    "pipeline": {
        "input": ("inputs", _paths),
        "output_dir": ("output_dir", Path),
        "truth": ("truth", _optional_path),
        "seed": ("seed", int),
        "dialect": ("dialect", _optional_str),
    },
    "log_ingest": {
        "blocked_extensions": ("blocked_extensions", _words),
        "robot_markers": ("robot_markers", _words),
        "robots_txt_trigger": ("robots_txt_trigger", _bool),
    },
    "sessionizer": {
        "mode": ("session_mode", str),
        "timeout_minutes": ("timeout_minutes", float),
        "hard_cap_hours": ("hard_cap_hours", float),
        "split_by_agent": ("split_by_agent", _bool),
    },
    "feature_reduction": {
        "alpha": ("alpha", float),
        "max_iter": ("ica_max_iter", int),
        "tol": ("ica_tol", float),
        "nonlinearity": ("nonlinearity", str),
    },
    "fuzzy_clustering": {
        "variant": ("variant", str),
        "c": ("c", int),
        "q": ("q", float),
        "gamma": ("gamma", float),
        "k_neighbors": ("k_neighbors", int),
        "tol": ("cluster_tol", float),
        "max_iter": ("cluster_max_iter", int),
    },
    "classification": {
        "classifier": ("classifier", str),
        "C": ("C", float),
        "sigma": ("sigma", _optional_float),
        "cv_folds": ("cv_folds", int),
        "cross_validate": ("cross_validate", _bool),
        "test_fraction": ("test_fraction", float),
        "rvm_alpha_init": ("rvm_alpha_init", float),
        "rvm_beta_init": ("rvm_beta_init", float),
        "rvm_prune_threshold": ("rvm_prune_threshold", float),
        "rvm_tol": ("rvm_tol", float),
        "rvm_max_iter": ("rvm_max_iter", int),
        "rvm_beta_max": ("rvm_beta_max", float),
    },
}


def parse_config(text: str, base_dir: Path | None = None) -> PipelineConfig:
    """Parse INI text; relative paths are resolved against ``base_dir``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            attr, conv = SCHEMA[section][key]
            try:
                values[attr] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    cfg = PipelineConfig(**values)
    if base_dir is not None:
        cfg = replace(cfg,
                      inputs=[p if p.is_absolute() else base_dir / p for p in cfg.inputs],
                      output_dir=cfg.output_dir if cfg.output_dir.is_absolute() else base_dir / cfg.output_dir,
                      truth=cfg.truth if cfg.truth is None or cfg.truth.is_absolute() else base_dir / cfg.truth)
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path.parent)


def render_config(cfg: PipelineConfig) -> str:
    """INI text that :func:`parse_config` maps back to ``cfg``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, keys in SCHEMA.items():
        parser.add_section(section)
        for key, (attr, _) in keys.items():
            v = getattr(cfg, attr)
            if v is None:
                text = ""
            elif isinstance(v, frozenset):
                text = " ".join(sorted(v))
            elif isinstance(v, list):
                text = " ".join(str(p) for p in v)
            else:
                text = str(v)
            parser.set(section, key, text)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
