"""TOML run configuration.

Physical quantities carry their unit in the key (``dt_s``, ``rate_per_s``,
``g_m_per_s2``).  Every run needs an explicit seed.  Errors name the line of
the offending key when it can be located.  See README.md for the schema.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .models import FrequencyMap
from .noise import JumpMeasureSpec, LevyTriplet, TimeGrid
from .sim import DOMAIN_POLICIES, SimConfig, SystemSpec


class _Locator:
    """Map ``section.key`` paths to the line where the key is written."""

    _header = re.compile(r"^\s*\[\s*([^\]]+?)\s*\]\s*(#.*)?$")
    _key = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")

    def __init__(self, text: str):
        self.lines: dict[str, int] = {}
        section = ""
        for no, line in enumerate(text.splitlines(), start=1):
            m = self._header.match(line)
            if m:
                section = m.group(1).replace(" ", "")
                self.lines.setdefault(section, no)
                continue
            m = self._key.match(line)
            if m:
                name = f"{section}.{m.group(1)}" if section else m.group(1)
                self.lines.setdefault(name, no)

    def line(self, path: str) -> Optional[int]:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0]
        return None


class _Reader:
    def __init__(self, data: dict, locator: _Locator, path: str = ""):
        self.data = data
        self.loc = locator
        self.path = path

    def _name(self, key):
        return f"{self.path}.{key}" if self.path else key

    def error(self, key, message):
        name = self._name(key)
        return ConfigError(f"{name}: {message}", self.loc.line(name))

    def has(self, key) -> bool:
        return key in self.data

    def section(self, key, required=True) -> Optional["_Reader"]:
        if key not in self.data:
            if required:
                raise ConfigError(f"missing section [{self._name(key)}]")
            return None
        value = self.data[key]
        if not isinstance(value, dict):
            raise self.error(key, "expected a table")
        return _Reader(value, self.loc, self._name(key))

    def get(self, key, kind=float, default=..., positive=False, nonneg=False):
        if key not in self.data:
            if default is ...:
                raise ConfigError(f"missing key {self._name(key)}",
                                  self.loc.line(self.path))
            return default
        value = self.data[key]
        try:
            if kind is float:
                if isinstance(value, bool):
                    raise TypeError
                value = float(value)
                if not math.isfinite(value):
                    raise ValueError
            elif kind is int:
                if isinstance(value, bool) or int(value) != value:
                    raise TypeError
                value = int(value)
            elif kind is bool:
                if not isinstance(value, bool):
                    raise TypeError
            elif kind is str:
                if not isinstance(value, str):
                    raise TypeError
            elif kind is list:
                value = [float(v) for v in np.atleast_1d(value)]
        except (TypeError, ValueError):
            raise self.error(key, f"expected {kind.__name__}, got {value!r}") from None
        if positive and not (np.all(np.asarray(value) > 0)):
            raise self.error(key, "must be positive")
        if nonneg and not (np.all(np.asarray(value) >= 0)):
            raise self.error(key, "must be non-negative")
        return value


@dataclass(frozen=True, eq=False)
class StatisticBlock:
    n: int
    delta: float
    replicas: int
    seed: int


@dataclass(frozen=True, eq=False)
class BirkhoffBlock:
    horizon: float
    replicas: int
    seed: Optional[int]


@dataclass(frozen=True)
class Tolerances:
    se_multiplier: float = 3.0
    ks_max: Optional[float] = None
    variance_min: Optional[float] = None
    variance_max: Optional[float] = None
    cf_sup_max: Optional[float] = None
    rank_one_factor: Optional[float] = None
    max_discard_fraction: float = 0.001


@dataclass(frozen=True, eq=False)
class LevyCheckBlock:
    triplet: LevyTriplet
    horizon: float
    dt: float
    replicas: int
    seed: int
    frequencies: int = 21
    u_max: float = 3.0
    sup_gap_max: float = 0.02
    interlace: bool = False


@dataclass(frozen=True, eq=False)
class RunConfig:
    raw: dict
    source: Optional[str]
    output_dir: Optional[Path]
    system: Optional[SystemSpec] = None
    sim: Optional[SimConfig] = None
    statistic: Optional[StatisticBlock] = None
    birkhoff: Optional[BirkhoffBlock] = None
    tolerance: Tolerances = field(default_factory=Tolerances)
    levy_check: Optional[LevyCheckBlock] = None
    seed: Optional[int] = None
    simulate_replicas: int = 1
    simulate_horizon: Optional[float] = None
    single_file: bool = False
    chart_cache: Optional[Path] = None

    def to_dict(self) -> dict:
        """Resolved configuration for embedding in reports."""
        out: dict[str, Any] = {"file": self.raw, "seed": self.seed}
        if self.system is not None:
            out["system"] = self.system.to_dict()
        if self.sim is not None:
            s = self.sim

            def noise(x):
                return x if isinstance(x, str) else {"levy": x.to_dict()}

            out["simulation"] = {
                "I0": s.I0.tolist(), "theta0": s.theta0.tolist(), "sigma": s.sigma,
                "zeta": s.zeta, "dt": s.grid.dt, "steps": s.grid.steps,
                "action_noise": noise(s.action_noise), "angle_noise": noise(s.angle_noise),
                "interlace": s.interlace, "domain_policy": s.domain_policy}
        if self.statistic is not None:
            st = self.statistic
            out["statistic"] = {"n": st.n, "delta": st.delta, "replicas": st.replicas,
                                "seed": st.seed}
        if self.birkhoff is not None:
            b = self.birkhoff
            out["birkhoff"] = {"horizon": b.horizon, "replicas": b.replicas, "seed": b.seed}
        out["tolerance"] = {k: v for k, v in vars(self.tolerance).items()}
        if self.levy_check is not None:
            lc = self.levy_check
            out["levy_check"] = {"triplet": lc.triplet.to_dict(), "horizon": lc.horizon,
                                 "dt": lc.dt, "replicas": lc.replicas, "seed": lc.seed,
                                 "frequencies": lc.frequencies, "u_max": lc.u_max,
                                 "sup_gap_max": lc.sup_gap_max, "interlace": lc.interlace}
        return out


def _jumps(r: Optional[_Reader]) -> JumpMeasureSpec:
    if r is None:
        return JumpMeasureSpec.none()
    kind = r.get("kind", str)
    try:
        if kind == "none":
            return JumpMeasureSpec.none()
        if kind == "uniform":
            return JumpMeasureSpec.uniform(r.get("lo"), r.get("hi"),
                                           r.get("rate_per_s", nonneg=True),
                                           r.get("symmetric", bool, False))
        if kind == "triangular":
            return JumpMeasureSpec.triangular(r.get("lo"), r.get("mode"), r.get("hi"),
                                              r.get("rate_per_s", nonneg=True),
                                              r.get("symmetric", bool, False))
        if kind == "tabulated":
            return JumpMeasureSpec.tabulated(r.get("abscissae", list),
                                             r.get("density_per_s", list))
    except ValueError as exc:
        raise r.error("kind", str(exc)) from None
    raise r.error("kind", f"unsupported jump measure {kind!r} "
                          "(none, uniform, triangular, tabulated)")


def _triplet(r: _Reader, dim: int) -> LevyTriplet:
    gamma = r.get("gamma_per_s", list, [0.0] * dim)
    if len(gamma) != dim:
        raise r.error("gamma_per_s", f"expected {dim} entries")
    try:
        return LevyTriplet(np.array(gamma), r.get("xi", nonneg=True, default=0.0),
                           _jumps(r.section("small_jumps", required=False)),
                           _jumps(r.section("large_jumps", required=False)))
    except ValueError as exc:
        raise r.error("small_jumps", str(exc)) from None


def _system(r: _Reader, cache_dir) -> SystemSpec:
    kind = r.get("kind", str)
    if kind == "pendulum":
        g = r.get("g_m_per_s2", positive=True)
        l = r.get("l_m", positive=True)
        return SystemSpec.pendulum_system(g, l, r.get("mass_kg", default=1.0))
    if kind == "oscillator":
        m = r.get("m", int)
        if m < 1:
            raise r.error("m", "must be >= 1")
        return SystemSpec.oscillator(m, r.get("chart_tol", positive=True, default=1e-10),
                                     cache_dir)
    if kind == "custom":
        fmap = r.get("map", str)
        if fmap == "constant":
            return SystemSpec.custom(FrequencyMap.constant_map(r.get("values_per_s", list)))
        if fmap == "sinusoidal":
            try:
                return SystemSpec.custom(FrequencyMap.sinusoidal(
                    r.get("base_per_s", list), r.get("amplitude_per_s", list)))
            except ValueError as exc:
                raise r.error("amplitude_per_s", str(exc)) from None
        raise r.error("map", f"unknown frequency map {fmap!r} (constant, sinusoidal)")
    raise r.error("kind", f"unknown system {kind!r} (pendulum, oscillator, custom)")


def parse_config(text: str, source: Optional[str] = None, overrides: Optional[dict] = None,
                 chart_cache=None) -> RunConfig:
    """Parse and validate a configuration document.

    ``overrides`` may hold ``seed``, ``replicas`` and ``out`` from the command
    line; they replace the file values before validation.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None) from None
    loc = _Locator(text)
    overrides = overrides or {}
    raw = _apply_overrides(raw, overrides)
    top = _Reader(raw, loc)

    out_dir = None
    if overrides.get("out") is not None:
        out_dir = Path(overrides["out"])
    elif top.has("output"):
        out_dir = Path(top.section("output").get("dir", str))

    kwargs: dict[str, Any] = {}
    sys_r = top.section("system", required=False)
    if sys_r is not None:
        system = _system(sys_r, chart_cache)
        kwargs["system"] = system
        kwargs.update(_simulation(top, system))
    lc = top.section("levy_check", required=False)
    if lc is not None:
        kwargs["levy_check"] = _levy_check(lc)
    tol = top.section("tolerance", required=False)
    if tol is not None:
        kwargs["tolerance"] = Tolerances(
            se_multiplier=tol.get("se_multiplier", positive=True, default=3.0),
            ks_max=tol.get("ks_max", positive=True, default=None),
            variance_min=tol.get("variance_min", default=None),
            variance_max=tol.get("variance_max", default=None),
            cf_sup_max=tol.get("cf_sup_max", positive=True, default=None),
            rank_one_factor=tol.get("rank_one_factor", positive=True, default=None),
            max_discard_fraction=tol.get("max_discard_fraction", nonneg=True, default=0.001))
    sim_r = top.section("simulate", required=False)
    if sim_r is not None:
        kwargs["simulate_replicas"] = sim_r.get("replicas", int, 1)
        if kwargs["simulate_replicas"] < 1:
            raise sim_r.error("replicas", "must be >= 1")
        kwargs["simulate_horizon"] = sim_r.get("horizon_s", positive=True, default=None)
        kwargs["single_file"] = sim_r.get("single_file", bool, False)
    return RunConfig(raw=raw, source=source, output_dir=out_dir,
                     chart_cache=Path(chart_cache) if chart_cache else None, **kwargs)


def _apply_overrides(raw: dict, overrides: dict) -> dict:
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    for block in ("statistic", "levy_check"):
        if block in raw:
            if overrides.get("seed") is not None:
                raw[block]["seed"] = overrides["seed"]
            if overrides.get("replicas") is not None:
                raw[block]["replicas"] = overrides["replicas"]
    if overrides.get("replicas") is not None and "simulate" in raw:
        raw["simulate"]["replicas"] = overrides["replicas"]
    if overrides.get("seed") is not None and "statistic" not in raw and "system" in raw:
        raw["statistic"] = {"seed": overrides["seed"]}
    return raw


def _seed(r: _Reader, key="seed"):
    if not r.has(key):
        raise ConfigError(f"missing key {r._name(key)} (runs are never seeded from the clock)",
                          r.loc.line(r.path))
    s = r.get(key, int)
    if not 0 <= s < 2 ** 64:
        raise r.error(key, "seed must be an unsigned 64-bit integer")
    return s


def _simulation(top: _Reader, system: SystemSpec) -> dict:
    dim = system.dim
    init = top.section("initial")
    I0 = init.get("action", list)
    th0 = init.get("angle_cycles", list, [0.0] * dim)
    for key, v in (("action", I0), ("angle_cycles", th0)):
        if len(v) != dim:
            raise init.error(key, f"expected {dim} entries for a {dim}-dimensional system")
    if system.kind == "oscillator" and I0[0] <= 0:
        raise init.error("action", "oscillator action must be positive")

    nz = top.section("noise")
    noises = {}
    for which in ("action", "angle"):
        kind = nz.get(which, str, "brownian")
        if kind == "brownian":
            noises[which] = "brownian"
        elif kind == "levy":
            noises[which] = _triplet(nz.section(f"{which}_levy"), dim)
        else:
            raise nz.error(which, f"unknown noise {kind!r} (brownian, levy)")
    policy = nz.get("domain_policy", str, "abort")
    if policy not in DOMAIN_POLICIES:
        raise nz.error("domain_policy", f"must be one of {DOMAIN_POLICIES}")

    grid_r = top.section("grid")
    dt = grid_r.get("dt_s", positive=True)

    st_r = top.section("statistic")
    out: dict[str, Any] = {}
    horizon = None
    if st_r.has("n") or st_r.has("delta_s"):
        n = st_r.get("n", int)
        if n < 1:
            raise st_r.error("n", "must be >= 1")
        delta = st_r.get("delta_s", positive=True)
        ratio = delta / dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise grid_r.error("dt_s", f"dt_s = {dt} does not divide "
                                       f"statistic.delta_s = {delta}")
        replicas = st_r.get("replicas", int, 1)
        if replicas < 2 and top.has("tolerance"):
            raise st_r.error("replicas", "verification needs at least 2 replicas")
        out["seed"] = _seed(st_r)
        out["statistic"] = StatisticBlock(n, delta, replicas, out["seed"])
        horizon = n * delta
    else:
        out["seed"] = _seed(st_r)
    sim_r = top.section("simulate", required=False)
    if sim_r is not None and sim_r.has("horizon_s"):
        horizon = sim_r.get("horizon_s", positive=True)
    if horizon is None:
        raise ConfigError("no horizon: set statistic.n/delta_s or simulate.horizon_s")
    try:
        grid = TimeGrid.covering(horizon, dt)
    except ValueError as exc:
        raise grid_r.error("dt_s", str(exc)) from None
    try:
        out["sim"] = SimConfig(
            I0=np.array(I0), theta0=np.array(th0), grid=grid,
            sigma=nz.get("sigma", default=0.0), zeta=nz.get("zeta", default=0.0),
            action_noise=noises["action"], angle_noise=noises["angle"],
            interlace=nz.get("interlace", bool, False), domain_policy=policy)
    except ValueError as exc:
        raise nz.error("sigma", str(exc)) from None

    b_r = top.section("birkhoff", required=False)
    if b_r is not None:
        out["birkhoff"] = BirkhoffBlock(b_r.get("horizon_s", positive=True),
                                        b_r.get("replicas", int, 200),
                                        _seed(b_r) if b_r.has("seed") else None)
    return out


def _levy_check(r: _Reader) -> LevyCheckBlock:
    dim = r.get("dim", int, 1)
    return LevyCheckBlock(
        triplet=_triplet(r.section("triplet"), dim),
        horizon=r.get("horizon_s", positive=True, default=1.0),
        dt=r.get("dt_s", positive=True, default=0.1),
        replicas=r.get("replicas", int, 100_000),
        seed=_seed(r),
        frequencies=r.get("frequencies", int, 21),
        u_max=r.get("u_max", positive=True, default=3.0),
        sup_gap_max=r.get("sup_gap_max", positive=True, default=0.02),
        interlace=r.get("interlace", bool, False))


def load_config(path, overrides: Optional[dict] = None, chart_cache=None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None
    return parse_config(text, str(p), overrides, chart_cache)
