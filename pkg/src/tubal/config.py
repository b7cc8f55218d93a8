"""Plain ``key = value`` run configuration."""

import dataclasses
from dataclasses import dataclass, fields

from .errors import ParseError, ValidationError

GRID_FIELDS = ("alpha_grid", "rank_grid")


@dataclass(frozen=True)
class RunConfig:
    n: int = 10
    k: int = 4
    r: int = 3
    R: int = 200
    m: int = 254
    mu: float = 1e-5
    alpha: float = 1e-7
    iters: int = 3500
    stride: int = 10
    seed: int = 0
    normalization: str = "spectral"
    tau: float = 0.1
    band: float = 0.05
    window: int = 500
    knee_window: int = 51
    knee_run: int = 10
    knee_min_drop: float = 0.0
    unimodal_tol: float = 1e-3
    alpha_grid: tuple = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9)
    alpha_seeds: int = 5
    rank_grid: tuple = (10, 50, 100, 200, 400)
    rank_seeds: int = 20
    rip_rank: int = 1
    trials: int = 500
    epsilon: float = 0.1
    workers: int = 1
    out: str = "out"

    def __post_init__(self):
        validate(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def items(self):
        """``(key, text)`` pairs in field order, as written to provenance headers."""
        return [(f.name, format_value(getattr(self, f.name))) for f in fields(self)]


_POSITIVE_INT = ("n", "k", "r", "R", "m", "iters", "stride", "window", "knee_window",
                 "knee_run", "alpha_seeds", "rank_seeds", "rip_rank", "workers")
_POSITIVE_REAL = ("mu", "alpha", "tau", "band", "epsilon")
_NONNEG = ("knee_min_drop", "unimodal_tol", "trials")


def validate(cfg):
    for name in _POSITIVE_INT:
        if getattr(cfg, name) < 1:
            raise ValidationError(name, "must be a positive integer")
    for name in _POSITIVE_REAL:
        if not getattr(cfg, name) > 0:
            raise ValidationError(name, "must be positive")
    for name in _NONNEG:
        if getattr(cfg, name) < 0:
            raise ValidationError(name, "must be non-negative")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ValidationError("seed", "must fit in an unsigned 64-bit integer")
    if cfg.r > cfg.n:
        raise ValidationError("r", f"r={cfg.r} exceeds n={cfg.n}")
    if cfg.R < cfg.r:
        raise ValidationError("R", f"R={cfg.R} is below r={cfg.r}")
    if cfg.rip_rank > cfg.n:
        raise ValidationError("rip_rank", f"exceeds n={cfg.n}")
    if cfg.normalization not in ("spectral", "frobenius"):
        raise ValidationError("normalization", "must be 'spectral' or 'frobenius'")
    if not cfg.alpha_grid or any(not a > 0 for a in cfg.alpha_grid):
        raise ValidationError("alpha_grid", "needs at least one positive value")
    if not cfg.rank_grid or any(v < cfg.r for v in cfg.rank_grid):
        raise ValidationError("rank_grid", f"every width must be >= r={cfg.r}")
    if not cfg.out:
        raise ValidationError("out", "must be a non-empty path")


def format_value(value):
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(name, kind, text):
    try:
        if name in GRID_FIELDS:
            item = float if name == "alpha_grid" else int
            parts = [p.strip() for p in text.split(",")]
            if any(not p for p in parts):
                raise ValueError("empty grid entry")
            return tuple(item(p) for p in parts)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ValidationError(name, f"cannot parse {text!r}: {exc}") from None


def _field_kinds():
    return {f.name: type(f.default) for f in fields(RunConfig)}


def parse_assignments(text):
    """Typed ``{key: value}`` from ``key = value`` lines, without cross-field checks."""
    kinds = _field_kinds()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in kinds:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ParseError(f"missing value for {key!r}", lineno)
        values[key] = _convert(key, kinds[key], value)
    return values


def parse_config(text, overrides=None):
    """Parse ``key = value`` lines (``#`` starts a comment) into a validated config.

    ``overrides`` (already typed) are applied after the file contents.
    """
    values = parse_assignments(text)
    for key, value in (overrides or {}).items():
        if key not in _field_kinds():
            raise ValidationError(key, "unknown configuration key")
        values[key] = value
    return RunConfig(**values)


def config_from_items(pairs):
    """Rebuild a config from ``(key, text)`` pairs (e.g. a CSV provenance header)."""
    return parse_config("\n".join(f"{k} = {v}" for k, v in pairs))
