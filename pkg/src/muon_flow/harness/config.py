"""Experiment configuration and its flat ``key = value`` file format."""

from dataclasses import dataclass, field, fields, replace

from ..errors import InvalidConfig

PRESETS = ("exp1", "exp2", "eps_sweep", "chaos", "custom")
RULES = ("euclidean", "hard", "newton_schulz", "regularized")

# eps lists keyed by (preset, M, N); the first entry per preset is its default
EPS_TABLE = {
    ("exp1", 4, 32): (1.0, 1e-1, 1e-2, 1e-4),
    ("exp1", 1, 10): (1.0, 3e-2, 1e-3, 1e-8),
    ("exp2", 3, 12): (1e-1, 1e-3, 1e-4, 1e-5),
    ("exp2", 10, 10): (1e-1, 1e-3, 1e-5, 1e-7),
}

_BASE = dict(h=0.01, gamma=1.0, alpha=0.01, seed=0, record_stride=1, rules=RULES)

PRESET_DEFAULTS = {
    "exp1": dict(_BASE, M=4, N=32, iters=10000, rows=16, cols=8),
    "exp2": dict(_BASE, M=3, N=12, iters=2000),
    "eps_sweep": dict(
        _BASE, M=4, N=32, iters=1000, rows=16, cols=8, rules=("hard", "regularized"),
        eps_list=tuple(10.0 ** -k for k in range(1, 9)),
    ),
    "chaos": dict(_BASE, M=1, N=128, iters=0, rows=8, cols=4, rules=("regularized",), eps_list=(1.0,)),
    "custom": dict(_BASE, M=1, N=10, iters=1000, rows=16, cols=8, eps_list=(1.0,)),
}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "exp1"
    M: int = 4
    N: int = 32
    h: float = 0.01
    gamma: float = 1.0
    alpha: float = 0.01
    iters: int = 10000
    eps_list: tuple = ()
    rules: tuple = RULES
    seed: int = 0
    record_stride: int = 1
    out_dir: str = "runs"
    workers: int = 1
    ns_iters: int = 5
    # mean-match block shape (exp1, eps_sweep, chaos, custom)
    rows: int = 16
    cols: int = 8
    # teacher-student sizes (exp2)
    d: int = 10
    r: int = 6
    p: int = 4
    S: int = 320
    init_scale: float = 0.1
    # chaos study
    n_list: tuple = (8, 16, 32, 64, 128)
    n_ref: int = 1024
    t_end: float = 2.0
    h_ode: float = 0.01
    n_seeds: int = 8

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise InvalidConfig(f"unknown preset {self.preset!r}")
        rules = tuple(str(r).strip() for r in self.rules)
        bad = [r for r in rules if r not in RULES]
        if bad or not rules:
            raise InvalidConfig(f"unknown rules {bad}; choose from {RULES}")
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "eps_list", tuple(float(e) for e in self.eps_list))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if not (self.h > 0 and self.gamma > 0 and self.gamma * self.h < 1):
            raise InvalidConfig("need h > 0, gamma > 0 and gamma * h < 1")
        if self.alpha <= 0:
            raise InvalidConfig("alpha must be positive")
        if self.M < 1 or self.N < 1 or self.iters < 0:
            raise InvalidConfig("M, N must be positive and iters nonnegative")
        if self.record_stride < 1 or self.workers < 1:
            raise InvalidConfig("record_stride and workers must be >= 1")
        if any(e <= 0 for e in self.eps_list):
            raise InvalidConfig("eps values must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")

    @property
    def beta(self):
        return 1.0 - self.gamma * self.h


def preset_config(preset, **overrides):
    """Resolve preset defaults, then ``overrides``; eps lists follow (M, N)."""
    if preset not in PRESET_DEFAULTS:
        raise InvalidConfig(f"unknown preset {preset!r}")
    values = dict(PRESET_DEFAULTS[preset])
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "eps_list" not in overrides or overrides["eps_list"] is None:
        key = (preset, int(values["M"]), int(values["N"]))
        if key in EPS_TABLE:
            values["eps_list"] = EPS_TABLE[key]
        elif "eps_list" not in values:
            # unlisted particle counts fall back to the preset's main-figure list
            values["eps_list"] = next(v for k, v in EPS_TABLE.items() if k[0] == preset)
    return ExperimentConfig(preset=preset, **values)


def _field_types():
    return {f.name: f.default for f in fields(ExperimentConfig)}


def _parse(name, text, default):
    text = text.strip()
    try:
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if name in ("rules",):
                return tuple(items)
            if name in ("n_list",):
                return tuple(int(t) for t in items)
            return tuple(float(t) for t in items)
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise InvalidConfig(f"bad value for {name}: {text!r}") from exc
    return text


def parse_config_text(text):
    """Parse ``key = value`` lines into a dict of typed overrides."""
    defaults = _field_types()
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        out[key] = _parse(key, value, defaults[key])
    return out


def load_config(path, **overrides):
    """Read a config file; ``overrides`` (e.g. CLI flags) win over file values."""
    with open(path) as fh:
        values = parse_config_text(fh.read())
    values.update({k: v for k, v in overrides.items() if v is not None})
    preset = values.pop("preset", "custom")
    return preset_config(preset, **values)


def format_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def save_config(cfg, path):
    with open(path, "w") as fh:
        fh.write(format_config(cfg))


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
