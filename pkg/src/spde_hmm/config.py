"""Run configuration: a flat ``key = value`` text format with dotted keys.

Grammar (one entry per line)::

    line    := blank | comment | entry
    comment := '#' anything
    entry   := key '=' value [ '#' comment ]
    key     := ident ('.' ident)*
    value   := scalar | scalar (',' scalar)+
    scalar  := decimal number with optional exponent, or a bare word

Keys are case sensitive. Repeating a key is an error. Unknown keys are
rejected so that typos surface at load time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigError
from .fast import FastProcessModel
from .forcing import CovarianceSpec
from .reaction import NonlinearitySpec
from .schemes import SCHEMES, HmmParams, Problem
from .spectral import eigenbasis

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")
_NUM = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _num(text: str, key: str):
    if not _NUM.match(text):
        raise ConfigError(f"{key}: expected a number, got {text!r}", {key: "not a number"})
    v = float(text)
    if not math.isfinite(v):
        raise ConfigError(f"{key}: value must be finite", {key: "not finite"})
    return v


def _int(text: str, key: str) -> int:
    v = _num(text, key)
    if v != int(v):
        raise ConfigError(f"{key}: expected an integer, got {text!r}", {key: "not an integer"})
    return int(v)


def _list(text, key, conv):
    return tuple(conv(p.strip(), key) for p in text.split(",") if p.strip())


def _bool(text, key):
    t = text.lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}", {key: "not a boolean"})


def _str(text, key):
    return text


def _fnum(text, key):
    return _num(text, key)


# key -> (attribute, parser, default)
SCHEMA = {
    "basis.n_modes": ("n_modes", _int, 32),
    "basis.n_grid": ("n_grid", _int, 0),
    "slow.covariance": ("slow_cov", _str, "powerlaw(1)"),
    "slow.delta": ("slow_delta", _fnum, 0.0),
    "slow.trace_class": ("slow_trace_class", _bool, False),
    "fast.covariance": ("fast_cov", _str, "powerlaw(1)"),
    "fast.gamma_max": ("gamma_max", _str, "auto"),
    "micro.tau": ("tau", _fnum, 0.1),
    "nonlinearity.family": ("family", _str, "cosine_y"),
    "nonlinearity.g": ("g", _str, "sin"),
    "nonlinearity.c": ("c", _fnum, 1.0),
    "initial.x0": ("x0", _str, "e1"),
    "initial.y0": ("y0", _str, "zero"),
    "scheme": ("scheme", _str, "averaged"),
    "epsilon": ("eps", _fnum, 0.125),
    "dt": ("dt", _fnum, 0.0625),
    "tau": ("tau_alias", _str, ""),
    "M": ("M", _int, 8),
    "Ma": ("Ma", _int, 8),
    "T": ("T", _fnum, 0.5),
    "delta": ("delta", _fnum, 0.0),
    "fine_ratio": ("fine_ratio", _int, 64),
    "regular_case": ("regular_case", _bool, False),
    "experiment.eps": ("eps_list", lambda t, k: _list(t, k, _num), (0.25, 0.125, 0.0625, 0.03125)),
    "experiment.replicas": ("replicas", _int, 128),
    "experiment.delta_policy": ("delta_policy", _str, "none"),
    "experiment.test_functional": ("test_functional", _str, "cos@e1"),
    "experiment.coupled": ("coupled", _bool, True),
    "experiment.Ma": ("Ma_list", lambda t, k: _list(t, k, _int), (4, 16, 64, 256)),
    "experiment.M_factor": ("M_factor", _int, 2),
    "experiment.chunk": ("chunk", _int, 256),
    "poisson.T_q": ("T_q", _fnum, 0.0),
    "poisson.gamma": ("poisson_gamma", _fnum, 0.2),
    "poisson.scales": ("poisson_scales", lambda t, k: _list(t, k, _num), (0.0, 1.0, 2.0, 4.0, 8.0)),
    "poisson.family": ("poisson_family", _str, "affine_y"),
    "mixing.c": ("mixing_c", _str, "auto"),
    "seed": ("seed", _int, 20240601),
    "threads": ("threads", _int, 1),
    "output.dir": ("out_dir", _str, "out"),
}
_ATTR_TO_KEY = {v[0]: k for k, v in SCHEMA.items()}


def parse_text(text: str) -> dict:
    """Raw ``key -> string`` mapping; syntax errors raise :class:`ConfigError`."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'", {f"line {lineno}": raw})
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(f"line {lineno}: bad key {key!r}", {f"line {lineno}": key})
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", {key: "duplicate"})
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}", {key: "empty"})
        out[key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated record of every config key (see :data:`SCHEMA`)."""

    n_modes: int = 32
    n_grid: int = 0
    slow_cov: str = "powerlaw(1)"
    slow_delta: float = 0.0
    slow_trace_class: bool = False
    fast_cov: str = "powerlaw(1)"
    gamma_max: str = "auto"
    tau: float = 0.1
    family: str = "cosine_y"
    g: str = "sin"
    c: float = 1.0
    x0: str = "e1"
    y0: str = "zero"
    scheme: str = "averaged"
    eps: float = 0.125
    dt: float = 0.0625
    tau_alias: str = ""
    M: int = 8
    Ma: int = 8
    T: float = 0.5
    delta: float = 0.0
    fine_ratio: int = 64
    regular_case: bool = False
    eps_list: tuple = (0.25, 0.125, 0.0625, 0.03125)
    replicas: int = 128
    delta_policy: str = "none"
    test_functional: str = "cos@e1"
    coupled: bool = True
    Ma_list: tuple = (4, 16, 64, 256)
    M_factor: int = 2
    chunk: int = 256
    T_q: float = 0.0
    poisson_gamma: float = 0.2
    poisson_scales: tuple = (0.0, 1.0, 2.0, 4.0, 8.0)
    poisson_family: str = "affine_y"
    mixing_c: str = "auto"
    seed: int = 20240601
    threads: int = 1
    out_dir: str = "out"

    def __post_init__(self):
        if self.tau_alias:
            # top-level ``tau`` is accepted as a synonym of ``micro.tau``
            object.__setattr__(self, "tau", _num(self.tau_alias, "tau"))
            object.__setattr__(self, "tau_alias", "")
        self.validate()

    # ---------------------------------------------------------------- build
    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        raw = parse_text(text)
        unknown = sorted(set(raw) - set(SCHEMA))
        if unknown:
            raise ConfigError("unknown config keys", {k: "unknown key" for k in unknown})
        if "tau" in raw and "micro.tau" in raw:
            raise ConfigError("tau given twice", {"tau": "use either tau or micro.tau"})
        kw = {}
        for key, value in raw.items():
            attr, conv, _ = SCHEMA[key]
            kw[attr] = conv(value, key)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}", {"config": str(path)})
        return cls.from_text(text)

    def to_text(self, runtime: bool = True) -> str:
        """Canonical serialization; ``from_text(to_text())`` is equal to ``self``.

        ``runtime=False`` drops ``threads`` and ``output.dir``, which never
        change results; reports embed that form.
        """
        lines = []
        skip = {"tau_alias"} if runtime else {"tau_alias", "threads", "out_dir"}
        for f in fields(self):
            if f.name in skip:
                continue
            v = getattr(self, f.name)
            lines.append(f"{_ATTR_TO_KEY[f.name]} = {_render(v)}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    # ---------------------------------------------------------------- validation
    def validate(self):
        bad = {}

        def need(cond, key, msg):
            if not cond:
                bad[key] = msg

        need(self.n_modes >= 1, "basis.n_modes", "must be >= 1")
        need(self.n_grid == 0 or self.n_grid >= self.n_modes, "basis.n_grid",
             "0 (auto) or >= n_modes")
        need(self.scheme in SCHEMES, "scheme", f"one of {', '.join(SCHEMES)}")
        need(self.delta_policy in ("none", "balanced"), "experiment.delta_policy",
             "none or balanced")
        need(self.replicas >= 2, "experiment.replicas", "must be >= 2")
        need(len(self.eps_list) >= 2 and all(0 < e <= 1 for e in self.eps_list),
             "experiment.eps", "at least two values in (0, 1]")
        need(len(self.Ma_list) >= 2 and all(m >= 1 for m in self.Ma_list),
             "experiment.Ma", "at least two positive integers")
        need(self.M_factor >= 1, "experiment.M_factor", "must be >= 1")
        need(self.chunk >= 1, "experiment.chunk", "must be >= 1")
        need(self.threads >= 1, "threads", "must be >= 1")
        need(0 <= self.seed < 2**64, "seed", "must fit in 64 unsigned bits")
        need(self.T_q >= 0, "poisson.T_q", "0 (auto) or positive")
        need(self.poisson_family in ("affine_y", "quadratic_y", "cosine_y"),
             "poisson.family", "a nonlinearity family")
        need(_parse_state(self.x0, 1) is not None, "initial.x0", "zero or e<k>[*scale]")
        need(_parse_state(self.y0, 1) is not None, "initial.y0", "zero or e<k>[*scale]")
        try:
            TestFunctionalSpec.parse(self.test_functional)
        except ConfigError:
            bad["experiment.test_functional"] = "form '<cos|tanh>@e<k>'"
        if self.gamma_max != "auto":
            try:
                _num(self.gamma_max, "fast.gamma_max")
            except ConfigError:
                bad["fast.gamma_max"] = "auto or a number in (0, 1/2]"
        if self.mixing_c != "auto":
            try:
                need(_num(self.mixing_c, "mixing.c") >= 0, "mixing.c", "auto or >= 0")
            except ConfigError:
                bad["mixing.c"] = "auto or a nonnegative number"
        if bad:
            raise ConfigError("invalid configuration", bad)
        # scheme parameters (M_a <= M, T/dt integral, ...) are checked by HmmParams
        HmmParams(eps=self.eps, dt=self.dt, tau=self.tau, M=self.M, Ma=self.Ma, T=self.T,
                  n_modes=self.n_modes, delta=self.delta, fine_ratio=self.fine_ratio)
        slow, fast = self.slow_covariance(), self.fast_covariance()
        NonlinearitySpec(self.family, self.g, self.c)
        gm = self.gamma_max_value(fast)
        if not 0 < gm <= 0.5:
            raise ConfigError("gamma_max out of range", {"fast.gamma_max": "must lie in (0, 1/2]"})
        if self.regular_case and not slow.alpha_max + gm > 1:
            raise ConfigError(
                "regular case needs alpha_max + gamma_max > 1",
                {"regular_case": f"alpha_max={slow.alpha_max:g}, gamma_max={gm:g}"},
            )

    # ---------------------------------------------------------------- derived objects
    def slow_covariance(self) -> CovarianceSpec:
        try:
            return CovarianceSpec.parse(self.slow_cov, self.slow_delta, self.slow_trace_class)
        except ConfigError as exc:
            raise ConfigError(str(exc), {"slow.covariance": self.slow_cov, **exc.fields})

    def fast_covariance(self) -> CovarianceSpec:
        try:
            return CovarianceSpec.parse(self.fast_cov)
        except ConfigError as exc:
            raise ConfigError(str(exc), {"fast.covariance": self.fast_cov, **exc.fields})

    def gamma_max_value(self, fast: CovarianceSpec | None = None) -> float:
        if self.gamma_max != "auto":
            return _num(self.gamma_max, "fast.gamma_max")
        basis = eigenbasis(1)
        return FastProcessModel(fast or self.fast_covariance(), basis).gamma_max

    def mixing_rate_constant(self) -> float:
        """``c`` of ``rho(t) = e^{-ct}``; ``auto`` is the spectral gap ``lambda_1``."""
        if self.mixing_c == "auto":
            return float(self.basis().eigenvalues[0])
        return _num(self.mixing_c, "mixing.c")

    def basis(self):
        return eigenbasis(self.n_modes, self.n_grid or None)

    def problem(self, family: str | None = None) -> Problem:
        b = self.basis()
        override = None if self.gamma_max == "auto" else _num(self.gamma_max, "fast.gamma_max")
        return Problem(
            basis=b,
            nonlinearity=NonlinearitySpec(family or self.family, self.g, self.c),
            slow_cov=self.slow_covariance(),
            fast=FastProcessModel(self.fast_covariance(), b, override),
        )

    def hmm_params(self) -> HmmParams:
        return HmmParams(eps=self.eps, dt=self.dt, tau=self.tau, M=self.M, Ma=self.Ma, T=self.T,
                         n_modes=self.n_modes, delta=self.delta, fine_ratio=self.fine_ratio)

    def initial_states(self):
        b = self.basis()
        return _state_field(self.x0, b, "initial.x0"), _state_field(self.y0, b, "initial.y0")

    def functional(self):
        from .harness import TestFunctional

        spec = TestFunctionalSpec.parse(self.test_functional)
        b = self.basis()
        if spec.mode > b.n_modes:
            raise ConfigError("test functional mode exceeds N",
                              {"experiment.test_functional": self.test_functional})
        return TestFunctional(b.unit(spec.mode), spec.phi)

    def setup(self, family: str | None = None):
        from .harness import ExperimentSetup

        x0, y0 = self.initial_states()
        return ExperimentSetup(
            problem=self.problem(family), x0=x0, y0=y0, dt=self.dt, T=self.T, tau=self.tau,
            fine_ratio=self.fine_ratio, delta=self.delta, delta_policy=self.delta_policy,
            seed=self.seed, threads=self.threads, chunk=self.chunk, snapshot=self.to_text(runtime=False),
        )


@dataclass(frozen=True)
class TestFunctionalSpec:
    __test__ = False

    phi: str
    mode: int

    @classmethod
    def parse(cls, text: str) -> "TestFunctionalSpec":
        m = re.match(r"^(cos|tanh)@e(\d+)$", text.strip())
        if not m or int(m.group(2)) < 1:
            raise ConfigError(f"bad test functional {text!r}")
        return cls(m.group(1), int(m.group(2)))


def _parse_state(text: str, n_modes: int | None):
    t = text.strip()
    if t == "zero":
        return (0, 0.0)
    m = re.match(r"^e(\d+)(?:\*(.+))?$", t)
    if not m or int(m.group(1)) < 1:
        return None
    scale = 1.0
    if m.group(2) is not None:
        if not _NUM.match(m.group(2)):
            return None
        scale = float(m.group(2))
    return int(m.group(1)), scale


def _state_field(text, basis, key):
    parsed = _parse_state(text, basis.n_modes)
    if parsed is None:
        raise ConfigError(f"{key}: cannot parse {text!r}", {key: text})
    k, s = parsed
    if k == 0:
        return basis.zeros()
    if k > basis.n_modes:
        raise ConfigError(f"{key}: mode {k} exceeds N={basis.n_modes}", {key: text})
    return basis.unit(k, s)


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_render(x) for x in v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
