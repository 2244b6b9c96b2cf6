"""Plain-text ``key=value`` run configuration."""
from dataclasses import fields

from .errors import ConfigError
from .feedback import BaselineConfig
from .networks import TrainingConfig

# (key, default, comment); training and baseline keys are appended below
_BASE = [
    ("seed", 0, "root seed; every random stream derives from it"),
    ("resolution", 64, "frame side R, a power-of-two multiple of 8"),
    ("joints", 14, "joint count J"),
    ("half_extent", 150.0, "hand cube half extent in mm"),
    ("noise", "on", "sensor noise in generated data: on|off"),
    ("train_count", 2000, "training frames generated by pipeline"),
    ("test_count", 500, "held-out frames generated by pipeline"),
    ("iterations", 2, "feedback loop update steps"),
    ("baseline_frames", 0, "frames used by compare-baseline (0: all)"),
]

_SKIP_TRAINING = {"seed"}


def _defaults():
    table = list(_BASE)
    for f in fields(TrainingConfig):
        if f.name not in _SKIP_TRAINING:
            table.append((f.name, f.default, "training"))
    for f in fields(BaselineConfig):
        table.append((f"baseline_{f.name}", f.default, "baseline optimiser"))
    return table


DEFAULTS = {key: default for key, default, _ in _defaults()}


def _coerce(key, text):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return type(default)(text)
    except ValueError:
        raise ConfigError(f"value {text!r} for key {key!r} is not a valid "
                          f"{type(default).__name__}") from None


class RunConfig:
    """Resolved settings for one command; unknown keys are rejected."""

    def __init__(self, values=None):
        self.values = dict(DEFAULTS)
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value) if isinstance(value, str) else value
        if key == "noise" and self.values[key] not in ("on", "off"):
            raise ConfigError(f"value {value!r} for key 'noise' must be on or off")

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def parse(cls, text, source="<config>"):
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            cfg.set(key, value)
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.parse(fh.read(), source=path)

    def dump(self):
        """Every key with its resolved value, one per line, in a fixed order."""
        lines = []
        for key, _, comment in _defaults():
            value = self.values[key]
            lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
        return "\n".join(lines) + "\n"

    def training(self):
        kw = {f.name: self.values[f.name] for f in fields(TrainingConfig)
              if f.name not in _SKIP_TRAINING}
        try:
            return TrainingConfig(seed=self.values["seed"], **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def baseline(self):
        kw = {f.name: self.values[f"baseline_{f.name}"] for f in fields(BaselineConfig)}
        try:
            return BaselineConfig(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
