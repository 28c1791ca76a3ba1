"""Concrete integrable systems in action-angle form.

* the oscillator ``x'' + x^(2m+1) = 0`` with Hamiltonian
  ``h(x, y) = y²/2 + x^(2m+2)/(2m+2)``, its reference orbit ``(C, S)`` through
  ``(1, 0)`` and the chart ``x = (cI)^α C(θT*)``, ``y = (cI)^β S(θT*)``;
* the small-angle pendulum, whose frequency ``sqrt(g/l)`` is constant;
* user supplied bounded frequency maps for d-dimensional systems.
"""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, IntegrationError

ODE_RTOL = 1e-13
ODE_ATOL = 1e-13
CHART_NODES = 4096
# safety horizon, in multiples of the period predicted by energy scaling
RETURN_HORIZON = 4.0


def _vector_field(m: int):
    p = 2 * m + 1

    def f(t, z):
        return np.array([z[1], -z[0] ** p])

    return f


def oscillator_energy(m: int, x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return 0.5 * y * y + x ** (2 * m + 2) / (2 * m + 2)


def _first_return(m: int, amplitude: float, horizon: float) -> float:
    """Time of first return of the orbit through ``(amplitude, 0)`` to ``{y=0, x>0}``."""
    solver = integrate.DOP853(_vector_field(m), 0.0, np.array([amplitude, 0.0]),
                              t_bound=horizon, rtol=ODE_RTOL, atol=ODE_ATOL * amplitude)
    while solver.status == "running":
        t_old, y_old = solver.t, solver.y[1]
        solver.step()
        if solver.status == "failed":
            break
        x_new, y_new = solver.y
        if y_old > 0 and y_new <= 0 and x_new > 0:
            dense = solver.dense_output()
            return optimize.brentq(lambda s: dense(s)[1], t_old, solver.t,
                                   xtol=1e-15, rtol=4 * np.finfo(float).eps)
    raise IntegrationError(f"orbit of amplitude {amplitude} did not return "
                           f"within t = {horizon}")


def _period_bound(m: int) -> float:
    # T* = 4 sqrt(m+1) ∫_0^1 (1 - x^(2m+2))^(-1/2) dx and the integral is below 1.5
    return 6.0 * math.sqrt(m + 1)


def measure_period(m: int, energy: float) -> float:
    """Period of the orbit with the given energy, by section return of the ODE."""
    if energy <= 0:
        raise DomainError("energy must be positive")
    amplitude = ((2 * m + 2) * energy) ** (1.0 / (2 * m + 2))
    # energy scaling: T(a) = T* a^(-m)
    horizon = RETURN_HORIZON * _period_bound(m) * amplitude ** (-m)
    return _first_return(m, amplitude, horizon)


def period_oracle(m: int) -> float:
    """Reference period ``4 sqrt(m+1) ∫_0^1 dx / sqrt(1 - x^(2m+2))`` by quadrature.

    The integrand is split as ``(1-x)^(-1/2) * (1 + x + ... + x^(2m+1))^(-1/2)``
    and the endpoint singularity handled by an algebraic weight.
    """
    p = 2 * m + 2

    def smooth(x):
        return 1.0 / math.sqrt(sum(x ** j for j in range(p)))

    val, err = integrate.quad(smooth, 0.0, 1.0, weight="alg", wvar=(0.0, -0.5),
                              epsabs=1e-14, epsrel=1e-14)
    return 4.0 * math.sqrt(m + 1) * val


@dataclass(frozen=True, eq=False)
class OscillatorChart:
    """Action-angle chart of ``x'' + x^(2m+1) = 0``.

    ``alpha = 1/(m+2)`` and ``beta = 1 - alpha``; ``c = 1/(T* alpha)``.
    ``C`` and ``S`` are cubic Hermite interpolants of the reference orbit
    sampled at ``CHART_NODES`` points per period.
    """

    m: int
    tol: float
    T_star: float
    nodes: np.ndarray
    x_nodes: np.ndarray
    y_nodes: np.ndarray
    energy_drift: float

    def __post_init__(self):
        p = 2 * self.m + 1
        object.__setattr__(self, "_spline", CubicHermiteSpline(
            self.nodes, np.vstack([self.x_nodes, self.y_nodes]).T,
            np.vstack([self.y_nodes, -self.x_nodes ** p]).T, axis=0))

    @property
    def alpha(self) -> float:
        return 1.0 / (self.m + 2)

    @property
    def beta(self) -> float:
        return 1.0 - self.alpha

    @property
    def c(self) -> float:
        return 1.0 / (self.T_star * self.alpha)

    def reference(self, t):
        """``(C(t), S(t))`` for arbitrary real ``t`` (periodic extension)."""
        t = np.mod(np.asarray(t, float), self.T_star)
        z = self._spline(t)
        return z[..., 0], z[..., 1]

    def C(self, t):
        return self.reference(t)[0]

    def S(self, t):
        return self.reference(t)[1]

    def reference_energy(self) -> float:
        return 1.0 / (2 * self.m + 2)

    def energy(self, I):
        """``h∘ψ(I, θ) = c^(2β) I^(2β) / (2m+2)``."""
        I = np.asarray(I, float)
        return (self.c * I) ** (2 * self.beta) / (2 * self.m + 2)


def build_oscillator_chart(m: int, tol: float = 1e-10) -> OscillatorChart:
    """Integrate the reference orbit from ``(1, 0)`` and build its chart.

    The minimal period is located by root finding on the first return to
    ``{y = 0, x > 0}``; the orbit is then resampled on a uniform grid over one
    period.  Raises :class:`IntegrationError` if the orbit does not return
    within the safety horizon or the energy drift exceeds ``tol``.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"m must be an integer >= 1, got {m}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    m = int(m)
    T_star = _first_return(m, 1.0, RETURN_HORIZON * _period_bound(m))
    nodes = np.linspace(0.0, T_star, CHART_NODES + 1)
    sol = integrate.solve_ivp(_vector_field(m), (0.0, T_star), [1.0, 0.0],
                              method="DOP853", t_eval=nodes, rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        raise IntegrationError(f"reference orbit integration failed: {sol.message}")
    x, y = sol.y
    # close the orbit exactly; the end point differs from (1, 0) by integrator error
    x[-1], y[-1] = 1.0, 0.0
    drift = float(np.max(np.abs(oscillator_energy(m, x, y) - 1.0 / (2 * m + 2))))
    if drift > tol:
        raise IntegrationError(f"energy drift {drift:.3g} exceeds tol {tol:.3g}",
                               residual=drift)
    return OscillatorChart(m=m, tol=tol, T_star=float(T_star), nodes=nodes,
                           x_nodes=x, y_nodes=y, energy_drift=drift)


def _require_positive_action(I):
    I = np.asarray(I, float)
    if np.any(~(I > 0)):
        raise DomainError("action must be positive")
    return I


def action_angle_to_cartesian(chart: OscillatorChart, I, theta):
    """``ψ(I, θ) = ((cI)^α C(θT*), (cI)^β S(θT*))``, θ taken mod 1."""
    I = _require_positive_action(I)
    theta = np.mod(np.asarray(theta, float), 1.0)
    C, S = chart.reference(theta * chart.T_star)
    cI = chart.c * I
    return cI ** chart.alpha * C, cI ** chart.beta * S


def oscillator_frequency(chart: OscillatorChart, I):
    """``ω(I) = β c^(2β) I^(2β-1) / (m+1)``."""
    I = _require_positive_action(I)
    b = chart.beta
    return b * chart.c ** (2 * b) * I ** (2 * b - 1) / (chart.m + 1)


# -- chart cache -----------------------------------------------------------

CACHE_MAGIC = b"STCHART\0"
CACHE_VERSION = 1
_HEADER = struct.Struct("<8sIIdddI")


def save_chart(chart: OscillatorChart, path) -> None:
    """Write ``chart`` in the versioned little-endian binary cache format."""
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, chart.m, chart.tol, chart.T_star,
                          chart.energy_drift, chart.nodes.size)
    body = np.stack([chart.nodes, chart.x_nodes, chart.y_nodes]).astype("<f8").tobytes()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(header + body)
    os.replace(tmp, path)


def load_chart(path) -> OscillatorChart:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated chart file")
    magic, version, m, tol, t_star, drift, npts = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise ValueError(f"{path}: not a version-{CACHE_VERSION} chart file")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 3 * npts:
        raise ValueError(f"{path}: chart body has {body.size} values, expected {3 * npts}")
    t, x, y = body.reshape(3, npts).astype(float)
    return OscillatorChart(m=m, tol=tol, T_star=t_star, nodes=t, x_nodes=x, y_nodes=y,
                           energy_drift=drift)


def chart_cache_path(cache_dir, m: int, tol: float) -> Path:
    return Path(cache_dir) / f"oscillator-m{m}-tol{tol:.6e}.chart"


def cached_chart(m: int, tol: float = 1e-10, cache_dir=None) -> OscillatorChart:
    """Chart for ``(m, tol)``, read from ``cache_dir`` when present, else built."""
    if cache_dir is None:
        return _chart_in_memory(int(m), float(tol))
    path = chart_cache_path(cache_dir, m, tol)
    if path.exists():
        try:
            chart = load_chart(path)
        except ValueError:
            chart = None  # unreadable or stale; rebuilt below
        if chart is not None and chart.m == m and chart.tol == tol:
            return chart
    chart = _chart_in_memory(int(m), float(tol))
    path.parent.mkdir(parents=True, exist_ok=True)
    save_chart(chart, path)
    return chart


@lru_cache(maxsize=16)
def _chart_in_memory(m: int, tol: float) -> OscillatorChart:
    return build_oscillator_chart(m, tol)


# -- pendulum --------------------------------------------------------------

@dataclass(frozen=True)
class PendulumParams:
    """Small-angle pendulum; the mass does not enter the dynamics."""

    g: float = 9.81
    l: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.g > 0 and self.l > 0):
            raise DomainError("pendulum needs g > 0 and l > 0")

    @property
    def omega(self) -> float:
        return math.sqrt(self.g / self.l)

    @property
    def period(self) -> float:
        return 2 * math.pi * math.sqrt(self.l / self.g)


def pendulum_frequency(params: PendulumParams) -> float:
    if not (params.g > 0 and params.l > 0):
        raise DomainError("pendulum needs g > 0 and l > 0")
    return math.sqrt(params.g / params.l)


def classify_pendulum_equilibria(n_range: Iterable[int]):
    """Classify the equilibria ``θ = nπ`` of ``θ' = x, x' = -sin θ``.

    Returns ``[(nπ, "center" | "saddle"), ...]`` from the eigenvalues of the
    linearisation ``[[0, 1], [-cos θ, 0]]``.
    """
    out = []
    for n in n_range:
        theta = n * math.pi
        jac = np.array([[0.0, 1.0], [-math.cos(theta), 0.0]])
        ev = np.linalg.eigvals(jac)
        kind = "center" if np.all(np.abs(ev.real) < 1e-12) else "saddle"
        out.append((theta, kind))
    return out


# -- d-dimensional frequency maps -----------------------------------------

@dataclass(frozen=True, eq=False)
class FrequencyMap:
    """Bounded continuous frequency map ``ω: R^d -> R^d``.

    ``omega`` is vectorised: it maps an array of shape ``(..., dim)`` to the
    same shape.
    """

    dim: int
    omega: Callable[[np.ndarray], np.ndarray]
    bound: float
    name: str = "custom"
    params: Optional[dict] = None
    constant: Optional[np.ndarray] = None

    def __call__(self, I):
        return self.omega(np.asarray(I, float))

    @classmethod
    def constant_map(cls, values) -> "FrequencyMap":
        v = np.atleast_1d(np.asarray(values, float))

        def omega(I):
            return np.broadcast_to(v, np.shape(I)).copy()

        return cls(dim=v.size, omega=omega, bound=float(np.max(np.abs(v))),
                   name="constant", params={"values": v.tolist()}, constant=v)

    @classmethod
    def sinusoidal(cls, base, amplitude) -> "FrequencyMap":
        """``ω_i(I) = base_i + amplitude_i sin(I_i)``."""
        b = np.atleast_1d(np.asarray(base, float))
        a = np.atleast_1d(np.asarray(amplitude, float))
        if a.shape != b.shape:
            raise ValueError("base and amplitude must have the same length")

        def omega(I):
            return b + a * np.sin(I)

        return cls(dim=b.size, omega=omega, bound=float(np.max(np.abs(b) + np.abs(a))),
                   name="sinusoidal", params={"base": b.tolist(), "amplitude": a.tolist()})

    def check(self, rng: np.random.Generator, probes: int = 200, scale: float = 10.0,
              step: float = 1e-6) -> None:
        """Probe boundedness and continuity at random points; raise on violation."""
        I = scale * rng.standard_normal((probes, self.dim))
        w = self(I)
        if w.shape != I.shape:
            raise ValueError(f"omega returned shape {w.shape}, expected {I.shape}")
        if np.any(np.abs(w) > self.bound * (1 + 1e-12)):
            raise ValueError("frequency map exceeds its declared bound")
        dI = step * rng.standard_normal(I.shape)
        jump = np.max(np.abs(self(I + dI) - w))
        if jump > 1e3 * step * max(1.0, self.bound):
            raise ValueError(f"frequency map looks discontinuous (jump {jump:.3g})")
