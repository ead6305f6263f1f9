import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from stdanet.exceptions import ConfigError

UI = {
    "title": "stdanet",
    "icon": "🎞️",
    "layout": "wide",
    "image_extensions": [".png"],
    "heatmap_width": 160,
}

MESSAGES = {
    "shape_mismatch": "{op}: shape mismatch, {detail}",
    "non_finite": "{op}: produced non-finite values",
    "not_scalar": "backward() needs a scalar loss, got shape {shape}",
    "normalization": "attention weights do not sum to 1 over (T, K): max deviation {dev:.3e}",
    "missing_flow": "no base flow for query frame {src} -> value frame {dst}",
    "incomplete_flows": "flow set is incomplete: {missing}",
    "unknown_key": "{path}:{line}: unknown config key '{key}'",
    "bad_value": "{path}:{line}: cannot parse '{value}' as {kind} for '{key}'",
    "malformed_line": "{path}:{line}: expected 'key = value', got '{text}'",
    "invalid_config": "invalid configuration: {detail}",
    "missing_image": "image not found: {path}",
    "bad_image": "cannot decode image {path}: {detail}",
    "blur_window": "blur window {window} must be odd and at most {limit} subframes",
    "crop": "crop {crop} does not fit frames {height}x{width} or is not divisible by 4",
    "missing_dataset": "dataset root not found: {path}",
    "bad_sequence": "sequence '{name}': {detail}",
    "too_few_frames": "need at least {need} frames, found {found} in {path}",
    "checkpoint_missing": "checkpoint not found: {path}",
    "checkpoint_mismatch": "checkpoint does not match model: {detail}",
    "checkpoint_version": "unsupported checkpoint format version {found} (expected {expected})",
    "diverged": "non-finite loss at step {step}: mse={mse} warp={warp}",
    "NO_LOG": "No metric log found in this run directory.",
    "NO_EVAL": "No evaluation table found in this run directory.",
    "NO_HEATMAPS": "No attention heatmaps found in this directory.",
    "LOG_SUMMARY": "Metric log with **{rows}** logged steps, last total loss **{last:.6f}**",
    "EVAL_SUMMARY": "Evaluation over **{count}** sequences",
    "RUN_DIR_PROMPT": "Run directory (checkpoint dir or inference output)",
    "CHART": "**Loss curves**",
}

CONFIG = {
    "version": "v0.3.0",
    "checkpoint_format": 1,
    "DEBUG_MODE": os.environ.get("STDANET_DEBUG", "0") in ("1", "true", "yes"),
    "SENTRY_DSN": os.environ.get("SENTRY_DSN", ""),
    # Tolerance for sum(A) == 1, keyed by dtype name.
    "normalization_tolerance": {"float64": 1e-6, "float32": 1e-6},
    "leaky_slope": 0.1,
    "metric_log_name": "metrics.log",
    "eval_table_name": "eval.csv",
    "heatmap_dir_name": "attention",
}

DEFAULTS = {
    "channels": 16,
    "heads": 4,
    "points": 12,
    "frames": 3,
    "residual_blocks": 3,
    "leaky_slope": 0.1,
    "use_flow": True,
    "use_mma": True,
    "use_msa": True,
    "stack": False,
    "share_stage_weights": True,
    "dtype": "float32",
    "gamma": 0.05,
    "lr": 1e-4,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "batch_size": 2,
    "crop": 64,
    "iterations": 2000,
    "seed": 0,
    "dataset_root": "data",
    "checkpoint_dir": "runs/default",
    "checkpoint_every": 500,
    "log_every": 1,
    "log_file": "metrics.log",
    "augment": True,
}

_TRUE = ("true", "1", "yes", "on")
_FALSE = ("false", "0", "no", "off")


@dataclass(frozen=True)
class NetworkConfig:
    """
    Topology of STDANet.

    :param channels: Bottleneck channel count C.
    :param heads: Attention heads M.
    :param points: Sampling points K per head and frame.
    :param frames: Frames per window T (3 for the base network).
    """

    channels: int = DEFAULTS["channels"]
    heads: int = DEFAULTS["heads"]
    points: int = DEFAULTS["points"]
    frames: int = DEFAULTS["frames"]
    residual_blocks: int = DEFAULTS["residual_blocks"]
    leaky_slope: float = DEFAULTS["leaky_slope"]
    use_flow: bool = DEFAULTS["use_flow"]
    use_mma: bool = DEFAULTS["use_mma"]
    use_msa: bool = DEFAULTS["use_msa"]
    share_stage_weights: bool = DEFAULTS["share_stage_weights"]
    dtype: str = DEFAULTS["dtype"]

    def validate(self) -> "NetworkConfig":
        problems = []
        if self.channels <= 0 or self.channels % 4:
            problems.append(f"channels={self.channels} must be a positive multiple of 4")
        if self.heads <= 0 or self.channels % max(self.heads, 1):
            problems.append(f"channels={self.channels} not divisible by heads={self.heads}")
        if self.points <= 0:
            problems.append(f"points={self.points} must be positive")
        if self.frames != 3:
            problems.append(f"frames={self.frames}, only 3-frame windows are supported")
        if self.residual_blocks < 0:
            problems.append("residual_blocks must be non-negative")
        if not 0.0 < self.leaky_slope < 1.0:
            problems.append(f"leaky_slope={self.leaky_slope} outside (0, 1)")
        if self.dtype not in ("float32", "float64"):
            problems.append(f"dtype={self.dtype} must be float32 or float64")
        if problems:
            raise ConfigError(MESSAGES["invalid_config"].format(detail="; ".join(problems)))
        return self


@dataclass(frozen=True)
class LossConfig:
    gamma: float = DEFAULTS["gamma"]

    def validate(self) -> "LossConfig":
        if self.gamma < 0:
            raise ConfigError(MESSAGES["invalid_config"].format(detail=f"gamma={self.gamma} < 0"))
        return self


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = DEFAULTS["lr"]
    beta1: float = DEFAULTS["beta1"]
    beta2: float = DEFAULTS["beta2"]
    eps: float = DEFAULTS["eps"]


@dataclass
class RunConfig:
    """
    Flat run configuration, one field per key of the ``key = value`` config file.

    The network, loss and optimizer views are derived from the flat fields so that the
    file format stays a single namespace.
    """

    channels: int = DEFAULTS["channels"]
    heads: int = DEFAULTS["heads"]
    points: int = DEFAULTS["points"]
    frames: int = DEFAULTS["frames"]
    residual_blocks: int = DEFAULTS["residual_blocks"]
    leaky_slope: float = DEFAULTS["leaky_slope"]
    use_flow: bool = DEFAULTS["use_flow"]
    use_mma: bool = DEFAULTS["use_mma"]
    use_msa: bool = DEFAULTS["use_msa"]
    stack: bool = DEFAULTS["stack"]
    share_stage_weights: bool = DEFAULTS["share_stage_weights"]
    dtype: str = DEFAULTS["dtype"]
    gamma: float = DEFAULTS["gamma"]
    lr: float = DEFAULTS["lr"]
    beta1: float = DEFAULTS["beta1"]
    beta2: float = DEFAULTS["beta2"]
    eps: float = DEFAULTS["eps"]
    batch_size: int = DEFAULTS["batch_size"]
    crop: int = DEFAULTS["crop"]
    iterations: int = DEFAULTS["iterations"]
    seed: int = DEFAULTS["seed"]
    dataset_root: str = DEFAULTS["dataset_root"]
    checkpoint_dir: str = DEFAULTS["checkpoint_dir"]
    checkpoint_every: int = DEFAULTS["checkpoint_every"]
    log_every: int = DEFAULTS["log_every"]
    log_file: str = DEFAULTS["log_file"]
    augment: bool = DEFAULTS["augment"]
    source: str = field(default="<defaults>", compare=False, repr=False)

    @property
    def network(self) -> NetworkConfig:
        names = {f.name for f in fields(NetworkConfig)}
        return NetworkConfig(**{k: getattr(self, k) for k in names})

    @property
    def loss(self) -> LossConfig:
        return LossConfig(gamma=self.gamma)

    @property
    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def validate(self) -> "RunConfig":
        self.network.validate()
        self.loss.validate()
        problems = []
        for name in ("batch_size", "crop", "iterations", "checkpoint_every", "log_every"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if self.crop % 4:
            problems.append(f"crop={self.crop} not divisible by 4")
        if self.seed < 0:
            problems.append("seed must be non-negative")
        for name in ("lr", "eps"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                problems.append(f"{name} must lie in [0, 1)")
        if problems:
            raise ConfigError(MESSAGES["invalid_config"].format(detail="; ".join(problems)))
        return self

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "source"]

    @classmethod
    def from_text(cls, text: str, path: str = "<string>") -> "RunConfig":
        """
        Parses the flat ``key = value`` format. Unknown keys are hard errors.

        :param text: Config file content.
        :type text: str
        :param path: Name used in diagnostics.
        :type path: str
        :raises ConfigError: On unknown keys, malformed lines or unparsable values.
        :return: A validated RunConfig.
        :rtype: RunConfig
        """
        types = {f.name: f.type for f in fields(cls) if f.name != "source"}
        values: dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    MESSAGES["malformed_line"].format(path=path, line=lineno, text=raw.strip())
                )
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ConfigError(MESSAGES["unknown_key"].format(path=path, line=lineno, key=key))
            values[key] = _coerce(value, types[key], key, path, lineno)
        return cls(**values, source=path).validate()

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(MESSAGES["invalid_config"].format(detail=f"no such file {path}"))
        return cls.from_text(path.read_text(encoding="utf-8"), str(path))

    def to_text(self) -> str:
        lines = []
        for key in self.keys():
            value = getattr(self, key)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(value: str, kind: Any, key: str, path: str, lineno: int) -> Any:
    kind_name = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind_name == "bool":
            lowered = value.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(value)
        if kind_name == "int":
            return int(value)
        if kind_name == "float":
            return float(value)
        return value
    except ValueError:
        raise ConfigError(
            MESSAGES["bad_value"].format(path=path, line=lineno, value=value, kind=kind_name, key=key)
        ) from None
