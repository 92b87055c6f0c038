"""Run configuration: flat ``key = value`` files merged with command-line flags."""

from __future__ import annotations

from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

from smallmort.dlm import DlmOptions
from smallmort.dynpoisson import DynPoissonConfig
from smallmort.fitting import MODELS, ModelParams


class ConfigError(ValueError):
    """Bad configuration; reported as a usage error."""


def data_path(name: str) -> Path:
    """Path of a file bundled in smallmort/data."""
    return Path(str(resources.files("smallmort") / "data" / name))


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(cast):
    def parse(text: str):
        return tuple(cast(v) for v in text.replace(" ", "").split(",") if v)

    return parse


def _size(text: str) -> float:
    v = float(text)
    return int(v) if v.is_integer() else v


# key -> parser; every RunConfig field that may appear in a config file.
KEY_TYPES = {
    "model": str,
    "data": str,
    "standard": str,
    "reference": str,
    "sex": str,
    "out": str,
    "timings": str,
    "seed": int,
    "seeds": _list(int),
    "threads": int,
    "sizes": _list(_size),
    "models": _list(str),
    "penalty_weight": float,
    "chains": int,
    "burn_in": int,
    "thin": int,
    "keep": int,
    "proposal_scale_beta": float,
    "proposal_scale_mu": float,
    "adapt": _bool,
    "prior_a": float,
    "prior_b": float,
    "init_precision": float,
    "dlm_regression": _bool,
}


def read_config(path) -> dict:
    """Parse a flat key-value file; '#' starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEY_TYPES:
            raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
        value = value.strip().strip('"').strip("'")
        try:
            out[key] = KEY_TYPES[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: bad value for {key}: {exc}") from None
    return out


@dataclass
class RunConfig:
    model: Optional[str] = None
    data: Optional[str] = None
    standard: Optional[str] = None
    reference: Optional[str] = None
    sex: str = "both"
    out: Optional[str] = None
    timings: Optional[str] = None
    seed: int = 0
    seeds: tuple = ()
    threads: int = 1
    sizes: tuple = ()
    models: tuple = MODELS
    penalty_weight: float = 1.0
    chains: int = 2
    burn_in: int = 100_000
    thin: int = 5000
    keep: int = 2000
    proposal_scale_beta: float = 0.1
    proposal_scale_mu: float = 0.05
    adapt: bool = True
    prior_a: float = 0.01
    prior_b: float = 0.01
    init_precision: float = 100.0
    dlm_regression: bool = True

    @classmethod
    def merge(cls, config_file: Optional[dict], flags: dict) -> "RunConfig":
        """Defaults, overridden by the config file, overridden by explicit flags."""
        names = {f.name for f in fields(cls)}
        values = {}
        for source in (config_file or {}, flags):
            for k, v in source.items():
                if k in names and v is not None:
                    values[k] = v
        return cls(**values)

    def validate(self, require: tuple = ()) -> None:
        for name in require:
            if getattr(self, name) in (None, ""):
                raise ConfigError(f"missing required --{name}")
        if self.model is not None and self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        for m in self.models:
            if m not in MODELS:
                raise ConfigError(f"unknown model {m!r}; choose from {', '.join(MODELS)}")
        if self.sex not in ("female", "male", "both"):
            raise ConfigError(f"unknown sex {self.sex!r}")
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")
        for name in ("data", "standard", "reference"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"--{name}: file not found: {p}")

    def model_params(self) -> ModelParams:
        try:
            dyn = DynPoissonConfig(
                chains=self.chains,
                burn_in=self.burn_in,
                thin=self.thin,
                keep=self.keep,
                seed=self.seed,
                proposal_scale_beta=self.proposal_scale_beta,
                proposal_scale_mu=self.proposal_scale_mu,
                adapt=self.adapt,
                prior_a=self.prior_a,
                prior_b=self.prior_b,
                init_precision=self.init_precision,
                threads=self.threads,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.penalty_weight < 0:
            raise ConfigError("--penalty-weight must be non-negative")
        return ModelParams(
            dyn_poisson=dyn,
            penalty_weight=self.penalty_weight,
            dlm=DlmOptions(regression=self.dlm_regression),
            threads=self.threads,
        )
