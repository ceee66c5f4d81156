"""State shared by the CLI group and its subcommands."""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click
import numpy as np

from indm_core.config import load_run_config
from indm_core.models.config import RunConfig
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import ScoreField
from indm_core.services.training_service import CHECKPOINT_NAME, load_trained
from indm_core.utils.validators import validate_output_dir


@dataclass
class CliContext:
    """Global flags and the environment settings of one invocation."""

    config_path: Optional[str] = None
    seed: Optional[int] = None
    out: Optional[str] = None
    settings: Dict[str, Any] = field(default_factory=dict)
    _config: Optional[RunConfig] = None

    def run_config(self) -> RunConfig:
        """The run config from ``--config`` (or defaults) with ``--seed``/``--out`` applied."""
        if self._config is None:
            out = self.out or (None if self.config_path else self.settings.get("output", {}).get("out_dir"))
            self._config = load_run_config(self.config_path, seed=self.seed, out_dir=out)
        return self._config

    def out_dir(self, config: Optional[RunConfig] = None) -> Path:
        config = config or self.run_config()
        return validate_output_dir(self.out or config.out_dir)

    def checkpoint_path(self, checkpoint: Optional[str]) -> Path:
        if checkpoint:
            return Path(checkpoint)
        return Path(self.out or self.run_config().out_dir) / CHECKPOINT_NAME

    def load(self, checkpoint: Optional[str]) -> Tuple[RunConfig, FlowTransform, ScoreField, int]:
        """Models and config of a trained checkpoint; ``--seed``/``--out`` override its config."""
        config, flow, score, step = load_trained(self.checkpoint_path(checkpoint))
        overrides: Dict[str, Any] = {}
        if self.seed is not None:
            overrides["seed"] = self.seed
        if self.out is not None:
            overrides["out_dir"] = self.out
        if overrides:
            config = dataclasses.replace(config, **overrides)
        return config, flow, score, step

    def rng(self, config: RunConfig, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([config.seed, stream])


pass_context = click.make_pass_decorator(CliContext)
