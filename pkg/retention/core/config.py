import logging
from pathlib import Path
from typing import Any, List, Literal, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from retention.core.errors import ConfigError
from retention.data.schema import CohortSpec

logger = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1

Modality = Literal["temporal", "static", "notes"]
ALL_MODALITIES: List[str] = ["temporal", "static", "notes"]


class Settings(BaseSettings):
    """Process-level settings from the environment / .env file."""

    ENVIRONMENT: str = "development"
    LOG_LEVEL: str = "INFO"

    # ── Sentry (optional) ────────────────────────────────────
    SENTRY_DSN: Optional[str] = None

    # ── Outputs ──────────────────────────────────────────────
    OUTPUT_DIR: str = "."

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()


# ── Run configuration ────────────────────────────────────────
class ModelDims(BaseModel):
    hidden_note: int = Field(32, ge=1)
    head_width: int = Field(32, ge=1)
    dropout_rate: float = Field(0.2, ge=0.0, lt=1.0)
    activation: Literal["relu", "tanh", "sigmoid", "identity"] = "relu"
    bn_epsilon: float = Field(1e-5, gt=0.0)
    bn_momentum: float = Field(0.9, ge=0.0, le=1.0)
    modalities: List[Modality] = Field(default_factory=lambda: list(ALL_MODALITIES))
    mask_rule_3: bool = False

    @field_validator("modalities")
    @classmethod
    def _modalities_nonempty(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one modality must be enabled")
        return sorted(set(v), key=ALL_MODALITIES.index)


class LrPhase(BaseModel):
    lr: float = Field(gt=0.0)
    iterations: int = Field(ge=0)


class ScheduleConfig(BaseModel):
    # learning rate 0.001 for 16k iterations, then 0.0001 for 5k
    lr_phases: List[LrPhase] = Field(
        default_factory=lambda: [
            LrPhase(lr=0.001, iterations=16_000),
            LrPhase(lr=0.0001, iterations=5_000),
        ]
    )
    scale: float = Field(50.0, gt=0.0)
    batch_size: int = Field(32, ge=1)
    momentum: float = Field(0.0, ge=0.0, lt=1.0)
    clip_norm: Optional[float] = Field(5.0, gt=0.0)
    log_every: int = Field(50, ge=1)

    def scaled_phases(self) -> List[LrPhase]:
        """Iteration counts divided by `scale` (16k+5k at scale 50 → 320+100)."""
        return [
            LrPhase(lr=p.lr, iterations=int(round(p.iterations / self.scale)))
            for p in self.lr_phases
        ]

    @property
    def total_iterations(self) -> int:
        return sum(p.iterations for p in self.scaled_phases())


class SplitConfig(BaseModel):
    mode: Literal["kfold", "holdout"] = "holdout"
    k: int = 10
    train_fraction: float = 0.75


class SmoteConfig(BaseModel):
    enabled: bool = False
    k: int = Field(5, ge=1)
    target_ratio: float = Field(1.0, gt=0.0)


class FairnessConfig(BaseModel):
    protected: Literal["gender"] = "gender"
    privileged: str = "male"
    favorable_label: int = Field(0, ge=0, le=1)
    mitigation: Literal["none", "reweigh", "regularizer"] = "none"
    eta: float = Field(1.0, ge=0.0)


class EmbedderConfig(BaseModel):
    # "hashing" or "precomputed:<path>"
    source: str = "hashing"
    dim: int = Field(64, ge=1)
    seed: int = 0

    @field_validator("source")
    @classmethod
    def _known_source(cls, v: str) -> str:
        if v != "hashing" and not v.startswith("precomputed:"):
            raise ValueError("embedder source must be 'hashing' or 'precomputed:<path>'")
        return v

    @property
    def precomputed_path(self) -> Optional[Path]:
        if self.source.startswith("precomputed:"):
            return Path(self.source.split(":", 1)[1])
        return None


class RunConfig(BaseModel):
    schema_version: int = CONFIG_SCHEMA_VERSION
    seed: int = 0
    cohort: CohortSpec = Field(default_factory=CohortSpec)
    model: ModelDims = Field(default_factory=ModelDims)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    split: SplitConfig = Field(default_factory=SplitConfig)
    smote: SmoteConfig = Field(default_factory=SmoteConfig)
    fairness: FairnessConfig = Field(default_factory=FairnessConfig)
    embedder: EmbedderConfig = Field(default_factory=EmbedderConfig)

    def validate_for_startup(self) -> None:
        """
        Collect every problem that would make a run fail later and raise
        once, listing all of them.
        """
        errors = []

        if self.split.mode == "kfold" and self.split.k < 2:
            errors.append(f"split.k must be >= 2 for k-fold runs (got {self.split.k})")
        if not 0.0 < self.split.train_fraction < 1.0:
            errors.append(
                f"split.train_fraction must lie in (0, 1) (got {self.split.train_fraction})"
            )
        path = self.embedder.precomputed_path
        if path is not None and not path.exists():
            errors.append(f"precomputed embedding file not found: {path}")

        if errors:
            for e in errors:
                logger.error(f"CONFIG VALIDATION FAILED: {e}")
            raise ConfigError(
                "invalid run configuration:\n" + "\n".join(f"  ✗ {e}" for e in errors),
                detail={"errors": errors},
            )


def _apply_override(tree: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    # YAML scalars give ints/floats/bools/lists the same typing as the file
    node[keys[-1]] = yaml.safe_load(raw)


def load_run_config(
    path: Optional[str | Path] = None,
    overrides: Optional[dict[str, str]] = None,
) -> RunConfig:
    """Read a YAML run config, apply dotted overrides, validate."""
    tree: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}", detail={"path": str(path)})
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            raise ConfigError(f"config file is not valid YAML: {e}", detail={"path": str(path)})
        tree = loaded or {}
        if not isinstance(tree, dict):
            raise ConfigError("config file must contain a mapping at top level")

    for dotted, raw in (overrides or {}).items():
        _apply_override(tree, dotted, raw)

    try:
        config = RunConfig.model_validate(tree)
    except ValidationError as e:
        problems = [
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        ]
        raise ConfigError(
            "invalid run configuration:\n" + "\n".join(f"  ✗ {p}" for p in problems),
            detail={"errors": problems},
        )

    config.validate_for_startup()
    return config


def dump_run_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(
        yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False),
        encoding="utf-8",
    )
