"""Run configuration: flat TOML ``key = value`` files, presets and validation."""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import tomli
import tomli_w

from .expr import ExpressionError, StreamFunction, VectorExpression, default_stream_function
from .forms import CoefficientError, ModelCoefficients


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    preset: str = ""
    # model
    beta1: float = 0.1
    beta2: float = 0.1
    beta3: float = 4.0
    beta4: float = 0.0
    beta5: float = 1.0
    beta6: float = 0.0
    m: int = 1
    stream: str = ""            # stream function of the current; "" = default when beta6 > 0
    normalise_stream: bool = True
    # geometry
    dim: int = 1
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 8
    ny: int = 0                 # 0 = same as nx
    # time stepping
    scheme: str = "bdf2"
    k: float = 2e-5
    t_end: float = 2e-3
    linearisation: str = "lagged"
    cn_fallback: bool = False
    # data
    u0: tuple = ("exp(-t)*cos(pi*x)",)
    exact: tuple = ()           # exact solution; forcing is derived from it when set
    forcing: tuple = ()
    initializer: str = "interpolant"
    alpha: float = 1.0
    # numerics
    quad_degree: int = 10
    solver: str = "direct"
    solver_tol: float = 1e-10
    convection_form: str = "direct"
    # output
    out: str = "c1flow_out"
    cadence: int = 0            # 0 = every ceil(N_steps / 200) steps
    vtk: bool = True
    levels: int = 4
    deterministic: bool = False

    # -- derived objects -------------------------------------------------
    def stream_function(self) -> StreamFunction | None:
        if self.beta6 == 0 or self.dim != 2:
            return None
        if not self.stream:
            return default_stream_function(self.lx, self.ly)
        if self.normalise_stream:
            return StreamFunction.normalised(self.stream, self.lx, self.ly)
        return StreamFunction(self.stream)

    def coefficients(self) -> ModelCoefficients:
        return ModelCoefficients(self.beta1, self.beta2, self.beta3, self.beta4, self.beta5,
                                 self.beta6, self.m, self.stream_function())

    def initial_data(self) -> VectorExpression:
        return VectorExpression(list(self.u0), self.dim)

    def exact_solution(self) -> VectorExpression | None:
        return VectorExpression(list(self.exact), self.dim) if self.exact else None

    @property
    def n_steps(self) -> int:
        return max(0, int(math.floor(self.t_end / self.k + 1e-9)))

    @property
    def output_every(self) -> int:
        return self.cadence if self.cadence > 0 else max(1, math.ceil(self.n_steps / 200))

    def validate(self) -> "RunConfig":
        """Check every invariant before anything is allocated."""
        try:
            coeffs = self.coefficients()
            coeffs.check_dimension(self.dim)
        except (CoefficientError, ExpressionError) as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.dim in (1, 2), f"dim must be 1 or 2, got {self.dim}"),
            (self.lx > 0 and self.ly > 0, "domain lengths must be positive"),
            (self.nx >= 1 and self.ny >= 0, "mesh counts must be positive"),
            (self.scheme in ("euler", "bdf2"), f"scheme must be euler or bdf2, got {self.scheme!r}"),
            (self.k > 0, f"k must be positive, got {self.k}"),
            (self.t_end >= 0, f"t_end must be non-negative, got {self.t_end}"),
            (self.linearisation in ("lagged", "extrapolated"),
             f"linearisation must be lagged or extrapolated, got {self.linearisation!r}"),
            (self.initializer in ("interpolant", "elliptic_projection"),
             f"initializer must be interpolant or elliptic_projection, got {self.initializer!r}"),
            (self.solver in ("direct", "gmres"), f"solver must be direct or gmres, got {self.solver!r}"),
            (self.convection_form in ("direct", "divergence"),
             f"convection_form must be direct or divergence, got {self.convection_form!r}"),
            (1 <= self.quad_degree <= 14, "quad_degree must be in 1..14"),
            (len(self.u0) == self.m, f"u0 has {len(self.u0)} components, m = {self.m}"),
            (not self.exact or len(self.exact) == self.m, f"exact has {len(self.exact)} components"),
            (not self.forcing or len(self.forcing) == self.m,
             f"forcing has {len(self.forcing)} components"),
            (not (self.exact and self.forcing), "give either exact or forcing, not both"),
            (self.levels >= 2, "levels must be at least 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            self.initial_data()
            self.exact_solution()
            if self.forcing:
                VectorExpression(list(self.forcing), self.dim)
        except ExpressionError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return _coerce(replace(self, **kw))


# -- presets ---------------------------------------------------------------------

_EXP1_U0 = ("20*sin(pi*x)**2*sin(pi*y)**2", "30*sin(2*pi*x)**2*sin(pi*y)**2",
            "40*sin(pi*x)**2*sin(2*pi*y)**2")

PRESETS = {
    "experiment1": dict(beta1=0.1, beta2=0.2, beta3=0.2, beta4=0.1, beta5=0.2, beta6=0.0, m=3,
                        dim=2, lx=1.0, ly=1.0, nx=8, scheme="euler", k=1e-9, t_end=1e-8,
                        u0=_EXP1_U0),
    "experiment2": dict(beta1=0.5, beta2=1.0, beta3=0.2, beta4=2.0, beta5=0.2, beta6=0.01, m=3,
                        dim=2, lx=2.0, ly=2.0, nx=8, scheme="euler", k=1e-9, t_end=1e-8,
                        u0=("x*y", "2*x*y", "40*sin(2*pi*x)")),
    "experiment3": dict(beta1=0.1, beta2=0.1, beta3=4.0, beta4=0.0, beta5=1.0, beta6=0.02, m=1,
                        dim=2, lx=2.0, ly=2.0, nx=8, scheme="euler", k=1e-9, t_end=1e-8,
                        u0=("2*sin(2*pi*x)*sin(2*pi*y)",)),
    # beta1 < 0: the projection needs alpha > beta1^2 / beta2 = 4
    "swift_hohenberg": dict(beta1=-2.0, beta2=1.0, beta3=1.0, beta4=0.0, beta5=0.0, beta6=0.0, m=1,
                            dim=2, lx=2.0, ly=2.0, nx=8, scheme="bdf2", k=1e-3, t_end=0.1,
                            u0=("0.5*cos(pi*x)*cos(pi*y)",), alpha=5.0),
    "mms1d": dict(beta1=0.1, beta2=0.1, beta3=4.0, beta4=0.0, beta5=1.0, beta6=0.0, m=1,
                  dim=1, lx=1.0, nx=8, scheme="bdf2", k=2e-5, t_end=2e-3,
                  u0=("exp(-t)*cos(pi*x)",), exact=("exp(-t)*cos(pi*x)",)),
    "mms2d": dict(beta1=0.1, beta2=0.1, beta3=4.0, beta4=0.0, beta5=1.0, beta6=0.02, m=1,
                  dim=2, lx=1.0, ly=1.0, nx=4, scheme="bdf2", k=2e-5, t_end=2e-4,
                  u0=("exp(-t)*cos(pi*x)*cos(pi*y)",), exact=("exp(-t)*cos(pi*x)*cos(pi*y)",)),
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return _coerce(RunConfig(preset=name, **PRESETS[name])).validate()


# -- file I/O --------------------------------------------------------------------

_FIELDS = {f.name: f for f in fields(RunConfig)}
_TUPLE_KEYS = {"u0", "exact", "forcing"}


def _coerce(cfg: RunConfig) -> RunConfig:
    kw = {}
    for name, f in _FIELDS.items():
        v = getattr(cfg, name)
        default = f.default
        if name in _TUPLE_KEYS:
            v = (v,) if isinstance(v, str) else tuple(str(s) for s in v)
        elif isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{name} must be true or false, got {v!r}")
        elif isinstance(default, int):
            if (isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v)
                    or int(v) != v):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
            v = int(v)
        elif isinstance(default, float):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name} must be a number, got {v!r}")
            v = float(v)
        elif isinstance(default, str) and not isinstance(v, str):
            raise ConfigError(f"{name} must be a string, got {v!r}")
        kw[name] = v
    return RunConfig(**kw)


def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*{re.escape(key)}\s*=", line):
            return i
    return 0


def parse_config(text: str) -> RunConfig:
    """Parse config text; a ``preset`` key supplies defaults that the other
    keys override."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    for key, v in data.items():
        if isinstance(v, dict):
            raise ConfigError(f"line {_line_of(text, key) or '?'}: tables are not supported ([{key}])")
        if key not in _FIELDS:
            raise ConfigError(f"line {_line_of(text, key)}: unknown key {key!r}")
    base = preset(data["preset"]) if data.get("preset") else RunConfig()
    try:
        cfg = base.with_overrides(**data)
    except ConfigError as exc:
        raise ConfigError(f"line {_line_of(text, str(exc).split()[0])}: {exc}") from None
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Fully resolved config as TOML; ``parse_config`` reads it back unchanged."""
    data = asdict(cfg)
    data = {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}
    return "# resolved configuration\n" + tomli_w.dumps(data)


def write_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(dump_config(cfg))
    return path
