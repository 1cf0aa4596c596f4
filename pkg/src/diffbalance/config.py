"""Flat key=value run configuration with strict unknown-key rejection.

Precedence: built-in defaults < config file < command-line flags. The fully
resolved config is echoed into the output directory so every run carries its
own reproduction recipe.
"""

from dataclasses import dataclass, fields

from .diffusion import GuidanceConfig
from .errors import ConfigError


def _parse_bool(raw, key):
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")


@dataclass
class RunConfig:
    data: str = ""
    dm_checkpoint: str = ""
    out_dir: str = "run"
    mode: str = "ois_aas"
    epochs: int = 60
    k_total: int = -1                 # -1: default to 20% of |real train|
    guidance_scale: float = 1.5
    guidance_noise_scaled: bool = False
    diffusion_steps: int = 100
    beta_start: float = -1.0          # -1: canonical bounds rescaled to T
    beta_end: float = -1.0
    denoiser_hidden: str = "128,128"
    denoiser_time_dim: int = 32
    denoiser_epochs: int = 150
    denoiser_lr: float = 0.003
    denoiser_batch: int = 128
    classifier_hidden: str = "64,64"
    classifier_lr: float = 0.05
    classifier_momentum: float = 0.9
    classifier_batch: int = 32
    classifier_noise_std: float = 0.0
    seed: int = 0
    workers: int = 1
    dump_synthetic: bool = False

    # -- derived views -----------------------------------------------------

    def classifier_hidden_dims(self):
        return _dims(self.classifier_hidden, "classifier_hidden")

    def denoiser_hidden_dims(self):
        return _dims(self.denoiser_hidden, "denoiser_hidden")

    def guidance(self):
        return GuidanceConfig(scale=self.guidance_scale,
                              scale_by_noise_level=self.guidance_noise_scaled)

    def beta_bounds(self):
        """None means use the schedule's own defaults for diffusion_steps."""
        b0 = None if self.beta_start < 0 else self.beta_start
        b1 = None if self.beta_end < 0 else self.beta_end
        return b0, b1

    # -- parsing -----------------------------------------------------------

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}

    def apply(self, updates):
        """Apply a {key: raw-string-or-value} mapping with type coercion."""
        types = self.field_types()
        for key, raw in updates.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            ftype = types[key]
            if not isinstance(raw, str):
                setattr(self, key, raw)
                continue
            try:
                if ftype in ("bool", bool):
                    val = _parse_bool(raw, key)
                elif ftype in ("int", int):
                    val = int(raw)
                elif ftype in ("float", float):
                    val = float(raw)
                else:
                    val = raw
            except ValueError:
                raise ConfigError(
                    f"config key {key!r}: cannot parse {raw!r} as {ftype}") from None
            setattr(self, key, val)
        return self

    @classmethod
    def from_file(cls, path):
        cfg = cls()
        cfg.update_from_file(path)
        return cfg

    def update_from_file(self, path):
        updates = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, _, val = stripped.partition("=")
                updates[key.strip()] = val.strip()
        return self.apply(updates)

    def write(self, path):
        with open(path, "w") as fh:
            for f in fields(self):
                val = getattr(self, f.name)
                if isinstance(val, bool):
                    val = "true" if val else "false"
                fh.write(f"{f.name}={val}\n")


def _dims(raw, key):
    try:
        dims = tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"config key {key!r}: expected comma-separated ints") from None
    if not dims:
        raise ConfigError(f"config key {key!r}: need at least one layer width")
    return dims
