"""Run configuration: a flat ``key = value`` text file with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import InvalidMaterial, ParseError, ValidationError
from .tensor2d import build_catalog

PRESETS = ("A", "B", "C", "D", "E")


@dataclass(frozen=True)
class OptConfig:
    # geometry and loading
    width: float = 2.0
    height: float = 1.0
    nx: int = 160
    ny: int = 80
    support: str = "clamped"
    load_center: float = 0.5
    load_length: float = 0.1
    traction_x: float = 0.0
    traction_y: float = -1.0
    # materials (GPa; densities normalised)
    E_I: float = 80.0
    E_V: float = 0.01
    E_fib: float = 100.0
    E_back_ratio: float = 0.2
    nu_I: float = 0.3
    nu_V: float = 0.3
    nu_F: float = 0.3
    rho_V: float = 0.0
    rho_I: float = 1.0
    rho_F: float = 0.5
    # weight constraint; W_max defaults to W_max_fraction of the all-isotropic weight
    W_max: float | None = None
    W_max_fraction: float = 0.4
    # PID gains; each defaults to (20, 10, 2, 1) / W_max
    K_P: float | None = None
    K_D: float | None = None
    K_IP: float | None = None
    K_ID: float | None = None
    # design updates
    n_angles: int = 36
    step_levelset: float = 0.2
    alpha_theta: float = 0.2
    tau_levelset: float | None = None
    tau_theta: float | None = None
    w_m: float = 0.5
    eps_chi: float = 1e-3
    initial_design: str = "A"
    # loop control
    max_iters: int = 400
    conv_window: int = 10
    conv_rel_tol: float = 1e-4
    conv_field_tol: float = 1e-3
    feas_tol_fraction: float = 0.01
    snapshot_interval: int = 10
    output_dir: str = "out"
    table_cache: str = ""
    seed: int = 0

    def catalog(self):
        return build_catalog(E_I=self.E_I, E_V=self.E_V, E_fib=self.E_fib,
                             back_ratio=self.E_back_ratio, nu_I=self.nu_I, nu_V=self.nu_V,
                             nu_F=self.nu_F, rho_V=self.rho_V, rho_I=self.rho_I, rho_F=self.rho_F)

    @property
    def load_segment(self):
        half = 0.5 * self.load_length
        return (self.load_center - half, self.load_center + half)

    @property
    def traction(self):
        return (self.traction_x, self.traction_y)

    def resolved(self):
        """Copy with every derived default filled in."""
        W = self.W_max
        if W is None:
            W = self.W_max_fraction * self.rho_I * self.width * self.height
        if not W > 0:
            raise ValidationError("W_max", "must be positive")
        tau = 1e-4 * self.width ** 2
        return dataclasses.replace(
            self,
            W_max=W,
            K_P=20.0 / W if self.K_P is None else self.K_P,
            K_D=10.0 / W if self.K_D is None else self.K_D,
            K_IP=2.0 / W if self.K_IP is None else self.K_IP,
            K_ID=1.0 / W if self.K_ID is None else self.K_ID,
            tau_levelset=tau if self.tau_levelset is None else self.tau_levelset,
            tau_theta=tau if self.tau_theta is None else self.tau_theta,
        )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(OptConfig)}
_INT_KEYS = {"nx", "ny", "n_angles", "max_iters", "conv_window", "snapshot_interval", "seed"}
_STR_KEYS = {"support", "initial_design", "output_dir", "table_cache"}


def _coerce(key, text, line, col):
    if key in _STR_KEYS:
        if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
            return text[1:-1]
        return text
    if text.lower() in ("none", "default", ""):
        if _FIELDS[key].default is None:
            return None
        raise ValidationError(key, "a value is required")
    try:
        if key in _INT_KEYS:
            return int(text)
        return float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as a number for {key}", line, col) from None


def parse_config(text):
    """Parse config text into a validated, resolved :class:`OptConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            col = len(raw) - len(raw.lstrip()) + 1
            raise ParseError("expected 'key = value'", lineno, col)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        if not key.isidentifier():
            raise ParseError(f"invalid key {key!r}", lineno, raw.index(key_part.lstrip()[:1] or "=") + 1)
        if key not in _FIELDS:
            raise ValidationError(key, "unknown key")
        if key in values:
            raise ValidationError(key, "duplicate key")
        col = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        values[key] = _coerce(key, value_part.strip(), lineno, col)
    cfg = OptConfig(**values).resolved()
    validate(cfg)
    return cfg


def validate(cfg):
    try:
        cfg.catalog()
    except InvalidMaterial as exc:
        key = str(exc).split()[0]
        key = {"back_ratio": "E_back_ratio"}.get(key, key)
        raise ValidationError(key if key in _FIELDS else "materials", str(exc)) from None
    positive = ("width", "height", "load_length", "W_max", "step_levelset", "eps_chi",
                "conv_rel_tol", "conv_field_tol", "feas_tol_fraction")
    for key in positive:
        if not getattr(cfg, key) > 0:
            raise ValidationError(key, "must be positive")
    if cfg.nx < 2 or cfg.ny < 2:
        raise ValidationError("nx" if cfg.nx < 2 else "ny", "must be at least 2")
    if cfg.support not in ("clamped", "roller"):
        raise ValidationError("support", "must be 'clamped' or 'roller'")
    lo, hi = cfg.load_segment
    if lo < 0 or hi > cfg.height:
        raise ValidationError("load_center", "load segment must lie on the right edge")
    if cfg.n_angles < 8 or cfg.n_angles % 2:
        raise ValidationError("n_angles", "must be an even integer >= 8")
    if not 0 < cfg.alpha_theta <= 1:
        raise ValidationError("alpha_theta", "must lie in (0, 1]")
    if not 0 < cfg.w_m < 1:
        raise ValidationError("w_m", "must lie in (0, 1)")
    for key in ("tau_levelset", "tau_theta"):
        if getattr(cfg, key) < 0:
            raise ValidationError(key, "must be nonnegative")
    if cfg.max_iters < 0:
        raise ValidationError("max_iters", "must be nonnegative")
    if cfg.conv_window < 2:
        raise ValidationError("conv_window", "must be at least 2")
    if cfg.snapshot_interval < 0:
        raise ValidationError("snapshot_interval", "must be nonnegative")
    if cfg.initial_design not in PRESETS and not cfg.initial_design.endswith(".npz"):
        raise ValidationError("initial_design", f"must be one of {PRESETS} or an .npz file")


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("file is not valid UTF-8", 1, exc.start + 1) from None
    return parse_config(text)


def format_value(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg):
    """Text form of every field; ``parse_config(dump_config(c)) == c`` for resolved configs."""
    lines = ["# effective configuration"]
    for f in fields(cfg):
        lines.append(f"{f.name} = {format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def echo_config(cfg, directory):
    path = Path(directory) / "config.effective"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path
