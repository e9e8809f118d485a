"""Experiment configuration, unit conversion and the cluster mobility model."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

log = logging.getLogger(__name__)

SERVICE_REGION = ((0.0, 400.0), (0.0, 400.0))


class ConfigError(ValueError):
    """Raised when a scenario description cannot be parsed or is invalid."""


class InfeasibleScenarioError(ValueError):
    """Raised when a scenario violates a physical constraint (e.g. a trace leaves the region)."""


def dbm_to_watts(level):
    watts = 10.0 ** ((np.asarray(level, dtype=float) - 30.0) / 10.0)
    return float(watts) if watts.ndim == 0 else watts


def db_to_linear(level):
    gain = 10.0 ** (np.asarray(level, dtype=float) / 10.0)
    return float(gain) if gain.ndim == 0 else gain


@dataclass(frozen=True)
class AdmmParams:
    """Penalties and stopping tolerances of the trajectory ADMM."""

    rho1: float
    rho2: float
    rho3: float
    eps_abs: float = 1e-4
    eps_rel: float = 1e-4
    max_iters: int = 2000

    def __post_init__(self):
        for name in ("rho1", "rho2", "rho3", "eps_abs", "eps_rel"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")


def default_penalties(num_sensors: int) -> AdmmParams:
    """Empirical penalty schedule: rho = (8, 8, 20) / sqrt(K)."""
    if num_sensors < 1:
        raise ConfigError("need at least one sensor")
    s = math.sqrt(num_sensors)
    return AdmmParams(8.0 / s, 8.0 / s, 20.0 / s)


@dataclass(frozen=True)
class SensorSpec:
    peak_power: float
    avg_power: float
    trace: np.ndarray  # (N, 2): horizontal position at slots n = 1..N

    def __post_init__(self):
        trace = np.array(self.trace, dtype=float)
        if trace.ndim != 2 or trace.shape[1] != 2:
            raise ConfigError("sensor trace must have shape (N, 2)")
        if not np.all(np.isfinite(trace)):
            raise ConfigError("sensor trace contains non-finite positions")
        if not 0.0 < self.avg_power < self.peak_power:
            raise ConfigError("sensor budgets must satisfy 0 < avg_power < peak_power")
        trace.setflags(write=False)
        object.__setattr__(self, "trace", trace)


@dataclass(frozen=True)
class ClusterTrace:
    """A cluster of sensors translating rigidly along a straight line.

    ``heading`` / ``speed`` left as ``None`` are drawn from U[0, pi] and
    U[1, 8] m/s when the scenario is built.
    """

    center0: tuple[float, float]
    radius: float
    member_count: int
    peak_power: float
    avg_power: float
    heading: float | None = None
    speed: float | None = None

    def __post_init__(self):
        if self.radius < 0:
            raise ConfigError("cluster radius must be >= 0")
        if self.speed is not None and self.speed < 0:
            raise ConfigError("cluster speed must be >= 0")
        if self.member_count < 1:
            raise ConfigError("cluster needs at least one member")


@dataclass(frozen=True)
class Scenario:
    slot_length: float
    num_slots: int
    uav_altitude: float
    uav_initial: np.ndarray
    uav_max_speed: float
    ref_channel_gain: float
    noise_power: float
    sensors: tuple[SensorSpec, ...]
    bcd_tolerance: float = 1e-3
    max_bcd_iters: int = 100
    admm: AdmmParams | None = None
    rng_seed: int = 0
    # derived arrays, filled in __post_init__
    positions: np.ndarray = field(init=False, repr=False, compare=False)
    peak_powers: np.ndarray = field(init=False, repr=False, compare=False)
    avg_powers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        q0 = np.array(self.uav_initial, dtype=float).reshape(2)
        if not np.all(np.isfinite(q0)):
            raise ConfigError("uav_initial must be finite")
        q0.setflags(write=False)
        object.__setattr__(self, "uav_initial", q0)
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if int(self.num_slots) != self.num_slots or self.num_slots < 1:
            raise ConfigError("num_slots must be a positive integer")
        for name in ("slot_length", "uav_altitude", "uav_max_speed", "ref_channel_gain", "noise_power", "bcd_tolerance"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and positive")
        if not self.sensors:
            raise ConfigError("scenario has no sensors")
        for s in self.sensors:
            if s.trace.shape[0] != self.num_slots:
                raise ConfigError(f"sensor trace length {s.trace.shape[0]} != num_slots {self.num_slots}")
        if self.slot_length * self.uav_max_speed > self.uav_altitude / 10:
            log.warning("slot_length * uav_max_speed = %.3g m is not << altitude %.3g m",
                        self.slot_length * self.uav_max_speed, self.uav_altitude)
        if self.admm is None:
            object.__setattr__(self, "admm", default_penalties(len(self.sensors)))

        positions = np.stack([s.trace for s in self.sensors])
        peaks = np.array([s.peak_power for s in self.sensors])
        avgs = np.array([s.avg_power for s in self.sensors])
        for arr in (positions, peaks, avgs):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "peak_powers", peaks)
        object.__setattr__(self, "avg_powers", avgs)

    @property
    def num_sensors(self) -> int:
        return len(self.sensors)

    @property
    def mission_duration(self) -> float:
        return self.num_slots * self.slot_length

    @property
    def max_step(self) -> float:
        """Largest horizontal displacement allowed within one slot."""
        return self.uav_max_speed * self.slot_length

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


def slots_for(mission_duration: float, slot_length: float) -> int:
    n = int(round(mission_duration / slot_length))
    if n < 1 or not math.isclose(n * slot_length, mission_duration, rel_tol=1e-9, abs_tol=0.0):
        raise ConfigError(f"mission duration {mission_duration} is not a multiple of slot length {slot_length}")
    return n


def _sample_disc(rng: np.random.Generator, center, radius, count):
    u = rng.random(count)
    v = rng.random(count)
    r = radius * np.sqrt(u)
    a = 2.0 * np.pi * v
    return np.asarray(center, dtype=float) + np.column_stack([r * np.cos(a), r * np.sin(a)])


def cluster_traces(clusters: Sequence[ClusterTrace], num_slots: int, slot_length: float,
                   rng: np.random.Generator) -> list[tuple[ClusterTrace, np.ndarray]]:
    """Rigid-translation traces, one ``(member_count, N, 2)`` array per cluster."""
    out = []
    steps = np.arange(1, num_slots + 1) * slot_length
    for c in clusters:
        heading = c.heading if c.heading is not None else rng.uniform(0.0, np.pi)
        speed = c.speed if c.speed is not None else rng.uniform(1.0, 8.0)
        start = _sample_disc(rng, c.center0, c.radius, c.member_count)
        velocity = speed * np.array([np.cos(heading), np.sin(heading)])
        traces = start[:, None, :] + steps[None, :, None] * velocity
        out.append((dataclasses.replace(c, heading=heading, speed=speed), traces))
    return out


def build_cluster_scenario(clusters: Sequence[ClusterTrace], *, slot_length: float, num_slots: int,
                           uav_altitude: float, uav_initial, uav_max_speed: float,
                           ref_channel_gain: float, noise_power: float, rng_seed: int = 0,
                           bcd_tolerance: float = 1e-3, max_bcd_iters: int = 100,
                           admm: AdmmParams | None = None,
                           bounds: tuple[tuple[float, float], tuple[float, float]] | None = None) -> Scenario:
    """Generate sensor traces from cluster descriptions and assemble a Scenario.

    Members start uniformly in their cluster disc and keep fixed offsets
    from the moving cluster center. With ``bounds`` set, a trace leaving the
    box raises :class:`InfeasibleScenarioError`.
    """
    if not clusters:
        raise ConfigError("need at least one cluster")
    rng = np.random.default_rng(rng_seed)
    sensors = []
    for c, traces in cluster_traces(clusters, num_slots, slot_length, rng):
        if bounds is not None:
            (x0, x1), (y0, y1) = bounds
            inside = ((traces[..., 0] >= x0) & (traces[..., 0] <= x1)
                      & (traces[..., 1] >= y0) & (traces[..., 1] <= y1))
            if not inside.all():
                raise InfeasibleScenarioError(f"cluster at {c.center0} leaves the service region")
        sensors.extend(SensorSpec(c.peak_power, c.avg_power, t) for t in traces)
    return Scenario(slot_length=slot_length, num_slots=num_slots, uav_altitude=uav_altitude,
                    uav_initial=uav_initial, uav_max_speed=uav_max_speed,
                    ref_channel_gain=ref_channel_gain, noise_power=noise_power,
                    sensors=tuple(sensors), bcd_tolerance=bcd_tolerance,
                    max_bcd_iters=max_bcd_iters, admm=admm, rng_seed=rng_seed)


def reference_clusters(num_sensors: int = 50, *, heading_a=None, speed_a=None,
                       heading_b=None, speed_b=None,
                       peak_a_dbm: float = 10.0, peak_b_dbm: float = 7.0) -> list[ClusterTrace]:
    """The two-cluster layout of the reference experiment (15/35 split for K=50)."""
    n_a = max(1, int(round(num_sensors * 15 / 50)))
    n_b = num_sensors - n_a
    if n_b < 1:
        raise ConfigError("need at least two sensors for the two-cluster layout")
    p_a, p_b = dbm_to_watts(peak_a_dbm), dbm_to_watts(peak_b_dbm)
    return [
        ClusterTrace((50.0, 100.0), 50.0, n_a, p_a, p_a / 2, heading_a, speed_a),
        ClusterTrace((350.0, 150.0), 50.0, n_b, p_b, p_b / 2, heading_b, speed_b),
    ]


def reference_scenario(seed: int = 0, *, num_sensors: int = 50, mission_duration: float = 50.0,
                       noise_dbm: float = -80.0, clusters: Sequence[ClusterTrace] | None = None,
                       **overrides) -> Scenario:
    """Default parameter table: H=100 m, V_max=20 m/s, q_I=(200, 0), beta0=-40 dB, delta=0.2 s."""
    slot_length = overrides.pop("slot_length", 0.2)
    params = dict(slot_length=slot_length, num_slots=slots_for(mission_duration, slot_length),
                  uav_altitude=100.0, uav_initial=(200.0, 0.0), uav_max_speed=20.0,
                  ref_channel_gain=db_to_linear(-40.0), noise_power=dbm_to_watts(noise_dbm),
                  rng_seed=seed, bcd_tolerance=1e-3)
    params.update(overrides)
    if clusters is None:
        clusters = reference_clusters(num_sensors)
    return build_cluster_scenario(clusters, **params)


def desk_scenario(seed: int = 0, **kwargs) -> Scenario:
    """Small instance used by the acceptance suite: K=10, T=20 s."""
    kwargs.setdefault("num_sensors", 10)
    kwargs.setdefault("mission_duration", 20.0)
    return reference_scenario(seed, **kwargs)


# -- config files -----------------------------------------------------------

def _take(cfg: dict, base: str, unit_map: dict, required=True, default=None):
    """Read ``base`` with an optional unit suffix and convert to SI."""
    hits = [(k, conv) for k, conv in unit_map.items() if f"{base}{k}" in cfg]
    if len(hits) > 1:
        raise ConfigError(f"{base} given more than once")
    if not hits:
        if required:
            raise ConfigError(f"missing key {base}")
        return default
    suffix, conv = hits[0]
    value = cfg.pop(f"{base}{suffix}")
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {base}{suffix}: {value!r}") from exc


_POWER = {"": float, "_w": float, "_dbm": dbm_to_watts}
_GAIN = {"": float, "_db": db_to_linear}
_LEN = {"": float, "_m": float}
_TIME = {"": float, "_s": float}
_SPEED = {"": float, "_mps": float, "_m_s": float}
_VEC = {"": lambda v: tuple(float(x) for x in v), "_m": lambda v: tuple(float(x) for x in v)}
_ANGLE = {"": float, "_rad": float, "_deg": math.radians}


def _parse_cluster(cfg: dict) -> ClusterTrace:
    cfg = dict(cfg)
    peak = _take(cfg, "peak_power", _POWER)
    avg = _take(cfg, "avg_power", _POWER, required=False)
    ratio = cfg.pop("avg_power_ratio", None)
    if avg is None:
        avg = peak * (0.5 if ratio is None else float(ratio))
    c = ClusterTrace(
        center0=_take(cfg, "center0", _VEC),
        radius=_take(cfg, "radius", _LEN),
        member_count=int(cfg.pop("member_count")),
        peak_power=peak, avg_power=avg,
        heading=_take(cfg, "heading", _ANGLE, required=False),
        speed=_take(cfg, "speed", _SPEED, required=False),
    )
    if cfg:
        raise ConfigError(f"unknown cluster keys: {sorted(cfg)}")
    return c


def scenario_from_dict(cfg: dict, seed: int | None = None, **overrides) -> Scenario:
    """Build a Scenario from a parsed config mapping.

    Keys follow the Scenario field names; unit suffixes (``_dbm``, ``_db``,
    ``_m``, ``_s``) select the conversion. Sensors are given either as
    ``clusters`` (generated traces) or ``sensors`` (explicit traces).
    ``overrides`` replace top-level SI values after parsing.
    """
    cfg = dict(cfg)
    try:
        slot_length = _take(cfg, "slot_length", _TIME)
        if "num_slots" in cfg:
            num_slots = int(cfg.pop("num_slots"))
        else:
            num_slots = slots_for(_take(cfg, "mission_duration", _TIME), slot_length)
        params = dict(
            slot_length=slot_length, num_slots=num_slots,
            uav_altitude=_take(cfg, "uav_altitude", _LEN),
            uav_initial=_take(cfg, "uav_initial", _VEC),
            uav_max_speed=_take(cfg, "uav_max_speed", _SPEED),
            ref_channel_gain=_take(cfg, "ref_channel_gain", _GAIN),
            noise_power=_take(cfg, "noise_power", _POWER),
            bcd_tolerance=float(cfg.pop("bcd_tolerance", 1e-3)),
            max_bcd_iters=int(cfg.pop("max_bcd_iters", 100)),
            rng_seed=int(cfg.pop("rng_seed", 0)) if seed is None else int(seed),
        )
        cfg.pop("seed", None)
        admm_cfg = cfg.pop("admm", None)
        if admm_cfg is not None:
            params["admm"] = AdmmParams(**admm_cfg)
        params.update(overrides)
        clusters = cfg.pop("clusters", None)
        sensors = cfg.pop("sensors", None)
        bounds = cfg.pop("bounds_m", cfg.pop("bounds", None))
        if cfg:
            raise ConfigError(f"unknown scenario keys: {sorted(cfg)}")
        if (clusters is None) == (sensors is None):
            raise ConfigError("give exactly one of 'clusters' or 'sensors'")
        if clusters is not None:
            bounds = None if bounds is None else tuple(tuple(float(v) for v in b) for b in bounds)
            return build_cluster_scenario([_parse_cluster(c) for c in clusters], bounds=bounds, **params)
        specs = []
        for s in sensors:
            s = dict(s)
            peak = _take(s, "peak_power", _POWER)
            avg = _take(s, "avg_power", _POWER)
            trace = np.asarray(s.pop("trace_m", s.pop("trace", None)), dtype=float)
            if s:
                raise ConfigError(f"unknown sensor keys: {sorted(s)}")
            specs.append(SensorSpec(peak, avg, trace))
        return Scenario(sensors=tuple(specs), **params)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed scenario: {exc}") from exc


def load_scenario(path: str | Path, seed: int | None = None, **overrides) -> Scenario:
    try:
        cfg = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("scenario file must hold a mapping")
    return scenario_from_dict(cfg, seed=seed, **overrides)
