"""Flat key=value run configuration with section prefixes.

Example::

    # bounding potential
    potential.family = power
    potential.alpha = 4
    sandwich.d = auto
    grid.N = 600
    iu.t_list = 0.25, 0.5, 1, T, 1.5T

Lines starting with '#' are comments; inline '#' comments are stripped.
Everything is validated before any computation starts.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError

FAMILIES = {"power": "PowerAlpha", "log": "LogPower", "loglog": "LogLogPower",
            "iterated": "GeneralIterated", "table": "Tabulated"}
Q_MODES = ("bounding", "harmonic")

KNOWN_KEYS = {
    "potential.family", "potential.alpha", "potential.l", "potential.table", "potential.q",
    "sandwich.d", "sandwich.k", "sandwich.m", "sandwich.r_max", "sandwich.log_r_max",
    "grid.n_dim", "grid.N", "grid.R_max",
    "spectrum.K",
    "rosen.eps_list",
    "iu.t_list", "iu.C_LS", "iu.neg_R_list",
    "tol.contraction", "tol.certificate", "tol.tail", "tol.ground_state",
    "output.dir",
}

_T_TOKEN = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*T\s*$")


@dataclass(frozen=True)
class TimeSpec:
    """A time either absolute or as a multiple of the horizon T."""

    value: float
    in_T: bool = False

    def resolve(self, T: float) -> float:
        return self.value * T if self.in_T else self.value

    def label(self) -> str:
        if not self.in_T:
            return repr(self.value)
        return "T" if self.value == 1.0 else f"{self.value!r}T"


@dataclass(frozen=True)
class RunConfig:
    family: str = "power"
    alpha: Optional[float] = 4.0
    l: int = 0
    table: Optional[str] = None
    q_mode: str = "bounding"
    d: Optional[float] = None  # None means auto
    k: Optional[float] = None  # None means family default
    m: Optional[int] = None
    r_max: float = 1e12
    log_r_max: Optional[float] = None
    n_dim: int = 3
    N: int = 600
    R_max: Optional[float] = None  # None means auto from the decay radius
    K: Optional[int] = None  # None means all N modes
    eps_list: tuple = (1.0, 0.3, 0.1, 0.03, 0.01)
    t_list: tuple = (TimeSpec(0.25), TimeSpec(0.5), TimeSpec(1.0), TimeSpec(1.0, True), TimeSpec(1.5, True))
    C_LS: Optional[float] = None  # None means calibrated
    neg_R_list: tuple = (6.0, 9.0, 12.0)
    tol_contraction: float = 1e-9
    tol_certificate: float = 1e-6
    tol_tail: float = 1e-8
    tol_ground_state: float = 1e-12
    out_dir: str = "iucert_out"

    def __post_init__(self):
        validate(self)

    # family-dependent defaults
    @property
    def depth(self) -> int:
        return {"power": 0, "log": 1, "loglog": 2}.get(self.family, self.l)

    @property
    def m_value(self) -> int:
        return self.m if self.m is not None else max(1, self.depth)

    @property
    def k_value(self) -> float:
        if self.k is not None:
            return self.k
        a = self.alpha if self.alpha is not None else 4.0
        if self.family == "power":
            k = min(2.0, a / 2.0)
        else:
            # k must lie in (1, alpha/2); close to 1 keeps R_m small
            k = 1.0 + (a / 2.0 - 1.0) / 5.0
        # for alpha <= 2 no k works; keep a valid k so the growth check itself reports the failure
        return k if k > 1.05 else 1.05

    def to_dict(self) -> dict:
        return {
            "potential": {"family": self.family, "alpha": self.alpha, "l": self.l, "table": self.table,
                          "q": self.q_mode},
            "sandwich": {"d": "auto" if self.d is None else self.d, "k": self.k_value, "m": self.m_value,
                         "r_max": self.r_max, "log_r_max": self.log_r_max},
            "grid": {"n_dim": self.n_dim, "N": self.N, "R_max": "auto" if self.R_max is None else self.R_max},
            "spectrum": {"K": "all" if self.K is None else self.K},
            "rosen": {"eps_list": list(self.eps_list)},
            "iu": {"t_list": [t.label() for t in self.t_list],
                   "C_LS": "calibrated" if self.C_LS is None else self.C_LS,
                   "neg_R_list": list(self.neg_R_list)},
            "tol": {"contraction": self.tol_contraction, "certificate": self.tol_certificate,
                    "tail": self.tol_tail, "ground_state": self.tol_ground_state},
        }


def validate(cfg: RunConfig):
    if cfg.family not in FAMILIES:
        raise ConfigError(f"potential.family must be one of {sorted(FAMILIES)}")
    if cfg.family == "table":
        if not cfg.table:
            raise ConfigError("potential.table is required for family=table")
    elif cfg.alpha is None or not math.isfinite(cfg.alpha) or cfg.alpha <= 0:
        raise ConfigError("potential.alpha must be a positive number")
    if cfg.family == "iterated" and cfg.l < 0:
        raise ConfigError("potential.l must be >= 0")
    if cfg.q_mode not in Q_MODES:
        raise ConfigError(f"potential.q must be one of {Q_MODES}")
    if cfg.d is not None and not 0 < cfg.d <= 1:
        raise ConfigError("sandwich.d must be 'auto' or lie in (0, 1]")
    if cfg.k is not None and not cfg.k > 1:
        raise ConfigError("sandwich.k must exceed 1")
    if cfg.m is not None and cfg.m < 1:
        raise ConfigError("sandwich.m must be >= 1")
    if not cfg.r_max > 0:
        raise ConfigError("sandwich.r_max must be positive")
    if cfg.n_dim < 3:
        raise ConfigError("grid.n_dim must be >= 3")
    if cfg.N < 3:
        raise ConfigError("grid.N must be >= 3")
    if cfg.R_max is not None and not cfg.R_max > 0:
        raise ConfigError("grid.R_max must be positive")
    if cfg.K is not None and not 1 <= cfg.K <= cfg.N:
        raise ConfigError("spectrum.K must lie in [1, N]")
    if not cfg.eps_list or any(not e > 0 for e in cfg.eps_list):
        raise ConfigError("rosen.eps_list must hold positive numbers")
    if not cfg.t_list or any(not t.value > 0 for t in cfg.t_list):
        raise ConfigError("iu.t_list must hold positive times")
    if not cfg.neg_R_list or any(not r > 0 for r in cfg.neg_R_list):
        raise ConfigError("iu.neg_R_list must hold positive radii")
    for name in ("tol_contraction", "tol_certificate", "tol_tail", "tol_ground_state"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name.replace('_', '.', 1)} must be positive")


# ---------------------------------------------------------------------------
# parsing

def _float(key, s):
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {s!r}") from None


def _int(key, s):
    try:
        v = float(s)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {s!r}") from None
    if v != int(v):
        raise ConfigError(f"{key}: expected an integer, got {s!r}")
    return int(v)


def _float_list(key, s):
    parts = [p for p in re.split(r"[,\s]+", s.strip()) if p]
    if not parts:
        raise ConfigError(f"{key}: empty list")
    return tuple(_float(key, p) for p in parts)


def parse_time(token: str) -> TimeSpec:
    m = _T_TOKEN.match(token)
    if m:
        coef = m.group(1)
        try:
            return TimeSpec(float(coef) if coef else 1.0, True)
        except ValueError:
            raise ConfigError(f"bad time token {token!r}") from None
    try:
        return TimeSpec(float(token))
    except ValueError:
        raise ConfigError(f"bad time token {token!r}") from None


def parse_time_list(s: str) -> tuple:
    parts = [p for p in re.split(r"[,\s]+", s.strip()) if p]
    if not parts:
        raise ConfigError("iu.t_list: empty list")
    return tuple(parse_time(p) for p in parts)


def parse_pairs(text: str) -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        pairs[key] = value
    return pairs


def config_from_pairs(pairs: dict, base_dir: Optional[Path] = None) -> RunConfig:
    kw = {}
    for key, v in pairs.items():
        if key == "potential.family":
            kw["family"] = v.lower()
        elif key == "potential.alpha":
            kw["alpha"] = _float(key, v)
        elif key == "potential.l":
            kw["l"] = _int(key, v)
        elif key == "potential.table":
            p = Path(v)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            kw["table"] = str(p)
        elif key == "potential.q":
            kw["q_mode"] = v.lower()
        elif key == "sandwich.d":
            kw["d"] = None if v.lower() == "auto" else _float(key, v)
        elif key == "sandwich.k":
            kw["k"] = _float(key, v)
        elif key == "sandwich.m":
            kw["m"] = _int(key, v)
        elif key == "sandwich.r_max":
            kw["r_max"] = _float(key, v)
        elif key == "sandwich.log_r_max":
            kw["log_r_max"] = _float(key, v)
        elif key == "grid.n_dim":
            kw["n_dim"] = _int(key, v)
        elif key == "grid.N":
            kw["N"] = _int(key, v)
        elif key == "grid.R_max":
            kw["R_max"] = None if v.lower() == "auto" else _float(key, v)
        elif key == "spectrum.K":
            kw["K"] = None if v.lower() == "all" else _int(key, v)
        elif key == "rosen.eps_list":
            kw["eps_list"] = _float_list(key, v)
        elif key == "iu.t_list":
            kw["t_list"] = parse_time_list(v)
        elif key == "iu.C_LS":
            kw["C_LS"] = None if v.lower() in ("auto", "calibrated") else _float(key, v)
        elif key == "iu.neg_R_list":
            kw["neg_R_list"] = _float_list(key, v)
        elif key.startswith("tol."):
            kw["tol_" + key[4:]] = _float(key, v)
        elif key == "output.dir":
            kw["out_dir"] = v
    if kw.get("family") == "table":
        kw.setdefault("alpha", None)
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_pairs(parse_pairs(text), base_dir=path.parent)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Copy with the given fields replaced (None values are ignored)."""
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg
