import logging
import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError

from .errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "RECALLAUDIT_"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EstimationSettings(_Section):
    confidence: float = Field(0.95, gt=0.0, lt=1.0)
    apply_fpc: bool = True
    squared_fpc: bool = False


class BinningSettings(_Section):
    method: Literal["equal-width", "quantile", "oracle"] = "quantile"
    num_bins: int = Field(8, ge=1)


class AllocationSettings(_Section):
    method: Literal["equal", "optimal", "pilot"] = "pilot"
    pilot_per_stratum: int = Field(50, ge=1)
    pseudocounts: bool = True
    reuse_pilot: bool = True


class PlanSettings(_Section):
    relative_halfwidth: float = Field(0.20, gt=0.0, lt=1.0)


class BootstrapSettings(_Section):
    replicates: int = Field(10_000, ge=1000)


class SimulationSettings(_Section):
    pool_size: int = Field(50_000, ge=1)
    prevalence: float = Field(0.041, gt=0.0, lt=1.0)
    separation: float = Field(4.0, ge=0.0)
    trials: int = Field(30, ge=1)
    seed: int = 0


class OutputSettings(_Section):
    format: Literal["json", "csv", "table"] = "json"
    significant_digits: int = Field(6, ge=1, le=17)


class LoggingSettings(_Section):
    level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"


class Settings(_Section):
    """Validated recallaudit configuration"""
    estimation: EstimationSettings = Field(default_factory=EstimationSettings)
    binning: BinningSettings = Field(default_factory=BinningSettings)
    allocation: AllocationSettings = Field(default_factory=AllocationSettings)
    plan: PlanSettings = Field(default_factory=PlanSettings)
    bootstrap: BootstrapSettings = Field(default_factory=BootstrapSettings)
    simulation: SimulationSettings = Field(default_factory=SimulationSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)


class ConfigManager:
    """Manages loading of configuration for recallaudit."""

    def __init__(self, config_file=None, environ: Optional[Dict[str, str]] = None):
        self.config_file: Optional[Path] = None
        self.config: Dict[str, Any] = {}
        self.settings = self._load_configuration(config_file, environ)

    def _load_configuration(self, config_file_override=None,
                            environ: Optional[Dict[str, str]] = None) -> Settings:
        """Load config from files with a defined precedence."""
        global_config_dir = Path.home() / '.config' / 'recallaudit'
        local_config_dir = Path.cwd()

        # load_dotenv never overrides existing variables, so the first one found wins
        if environ is None:
            load_dotenv(dotenv_path=(global_config_dir / '.env'))
            load_dotenv(dotenv_path=(local_config_dir / '.env'))
            environ = dict(os.environ)

        # explicit override, then global user config, then local project config
        if config_file_override:
            self.config_file = Path(config_file_override)
            if not self.config_file.is_file():
                raise ConfigError(f"Configuration file not found: {self.config_file}")
        else:
            candidates = (global_config_dir / 'config.yaml', local_config_dir / 'config' / 'default.yaml')
            for candidate in candidates:
                if candidate.is_file():
                    self.config_file = candidate
                    break

        if self.config_file is not None:
            try:
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    self.config = yaml.safe_load(f) or {}
            except (OSError, yaml.YAMLError) as e:
                raise ConfigError(f"Cannot load configuration {self.config_file}: {e}")
            if not isinstance(self.config, dict):
                raise ConfigError(f"Configuration {self.config_file} is not a mapping")
            logger.debug(f"Loaded configuration from {self.config_file}")
        else:
            logger.debug("No configuration file found; using packaged defaults")

        self._apply_environment(environ)
        try:
            return Settings.model_validate(self.config)
        except PydanticValidationError as e:
            problems = [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]
            raise ConfigError("Invalid configuration: " + "; ".join(problems))

    def _apply_environment(self, environ: Dict[str, str]) -> None:
        """RECALLAUDIT_SECTION__KEY=value overrides config[section][key]"""
        for name, raw in environ.items():
            if not name.startswith(ENV_PREFIX) or '__' not in name:
                continue
            section, _, key = name[len(ENV_PREFIX):].lower().partition('__')
            value = yaml.safe_load(raw) if raw.strip() else raw
            self.config.setdefault(section, {})
            if not isinstance(self.config[section], dict):
                raise ConfigError(f"Configuration section {section!r} is not a mapping")
            self.config[section][key] = value
            logger.debug(f"Environment override {section}.{key}")

    def get(self, key, default=None):
        """Get a configuration value by dotted path (``estimation.confidence``)."""
        node: Any = self.settings.model_dump()
        for part in key.split('.'):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node
