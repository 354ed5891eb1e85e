"""Scenario configuration: JSON schema, shipped presets and construction of
robots, targets and cost fields from a validated document."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from ..control import BarrierSpec, BoxLimits, WeightedQPSpec, pole_place_keta
from ..trajopt import PruneParams, RobotSpec
from ..world import (
    CostField,
    Region,
    SensorModel,
    TargetModel,
    UnicycleState,
    double_integrator_target,
    primitive_grid,
    static_target,
)


class ConfigError(ValueError):
    """Scenario document failed validation."""


_num = {"type": "number"}
_box = {
    "type": "object",
    "required": ["xmin", "xmax", "ymin", "ymax"],
    "properties": {k: _num for k in ("xmin", "xmax", "ymin", "ymax")},
}

SCHEMA = {
    "type": "object",
    "required": ["name", "seed", "arena", "robots", "targets"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "arena": _box,
        "regions": {
            "type": "array",
            "items": {
                "allOf": [_box],
                "properties": {"kind": {"enum": ["mud", "wind"]}},
                "required": ["kind"],
            },
        },
        "robots": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["class"],
                "additionalProperties": False,
                "properties": {
                    "class": {"enum": ["ugv", "uav"]},
                    "pose": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                    "altitude": {"type": "number", "minimum": 0},
                    "speeds": {"type": "array", "items": _num, "minItems": 1},
                    "rates": {"type": "array", "items": _num, "minItems": 1},
                    "weight": {"type": "number", "minimum": 0},
                    "c_max": {"type": "number", "minimum": 0},
                    "sensor": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"enum": ["range", "bearing", "range-bearing"]},
                            "max_range": {"type": "number", "exclusiveMinimum": 0},
                            "fov_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 360},
                            "range_std": {"type": "number", "exclusiveMinimum": 0},
                            "bearing_std_deg": {"type": "number", "exclusiveMinimum": 0},
                        },
                    },
                },
            },
        },
        "spawn": {
            "type": "object",
            "properties": {
                "robots": {"enum": ["fixed", "random", "safe-random"]},
                "min_separation": {"type": "number", "minimum": 0},
            },
        },
        "targets": {
            "type": "object",
            "required": ["count", "motion"],
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 0},
                "motion": {"enum": ["static", "double-integrator", "linear"]},
                "q": {"type": "number", "minimum": 0},
                "speed": {"type": "number", "minimum": 0},
                "prior_std": {"type": "number", "exclusiveMinimum": 0},
                "positions": {"type": "array", "items": {"type": "array", "items": _num}},
            },
        },
        "planner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "algo": {"enum": ["dls", "cls", "cd"]},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "epsilon": {"type": "number", "minimum": 0},
                "delta": {"type": "number", "minimum": 0},
                "cap": {"type": "integer", "minimum": 1},
                "max_frontier": {"type": "integer", "minimum": 1},
                "horizon": {"type": "integer", "minimum": 1},
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "lazy": {"type": "boolean"},
                "warm_start": {"type": "boolean"},
                "cd_order": {"enum": ["index", "reverse", "weight-asc", "weight-desc"]},
                "energy_model": {"enum": ["table", "lqr"]},
            },
        },
        "network": {
            "type": "object",
            "properties": {"delay_ms": {"type": "number", "minimum": 0}},
        },
        "controller": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "order": {"enum": [1, 2]},
                "R": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                "D_s": {"type": "number", "exclusiveMinimum": 0},
                "c": {"type": "number", "exclusiveMinimum": 0},
                "poles": {"type": "array", "items": {"type": "number", "exclusiveMaximum": 0}},
                "beta": {"type": "number", "minimum": 0},
                "u_max": {"type": "number", "exclusiveMinimum": 0},
                "v_max": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "shares": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "mission": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "replan_every": {"type": "integer", "minimum": 1},
                "steps": {"type": "integer", "minimum": 1},
            },
        },
    },
}

DEFAULTS = {
    "regions": [],
    "spawn": {"robots": "fixed", "min_separation": 2.0},
    "planner": {
        "algo": "dls", "alpha": 1.0, "epsilon": 1.0, "delta": 2.0, "cap": 30,
        "max_frontier": 60, "horizon": 3, "tau": 0.5, "lazy": True, "warm_start": True,
        "cd_order": "index", "energy_model": "table",
    },
    "network": {"delay_ms": 0.0},
    "controller": {
        "order": 2, "R": [1.0, 1.0, 1.0], "D_s": 0.5, "c": 1.0, "poles": [-5.0, -5.1],
        "beta": 0.5, "u_max": 10.0, "dt": 0.01,
    },
    "mission": {"replan_every": 2, "steps": 8},
}

_UGV_SENSOR = {"kind": "range-bearing", "max_range": 15.0, "fov_deg": 160.0}
_UAV_SENSOR = {"kind": "range-bearing", "max_range": 20.0, "fov_deg": 360.0}
_FAST = {"speeds": [0.0, 8.0], "rates": [0.0, math.pi / 2, -math.pi / 2]}

PRESETS = {
    "sim1-dynamic-targets": {
        "name": "sim1-dynamic-targets",
        "seed": 1,
        "arena": {"xmin": 0, "xmax": 40, "ymin": 0, "ymax": 40},
        "spawn": {"robots": "random", "min_separation": 2.0},
        "robots": [
            {"class": "ugv", "weight": float(i), "sensor": dict(_UGV_SENSOR), **_FAST}
            for i in range(1, 4)
        ],
        "targets": {"count": 3, "motion": "double-integrator", "q": 0.1, "speed": 2.0, "prior_std": 1.0},
        "planner": {"horizon": 3, "epsilon": 1.0, "delta": 2.0},
        "controller": {"u_max": 100.0},
        "mission": {"replan_every": 2, "steps": 8},
    },
    "sim2-heterogeneous": {
        "name": "sim2-heterogeneous",
        "seed": 2,
        "arena": {"xmin": 0, "xmax": 40, "ymin": 0, "ymax": 40},
        "regions": [
            {"kind": "mud", "xmin": 20, "xmax": 40, "ymin": 0, "ymax": 40},
            {"kind": "wind", "xmin": 0, "xmax": 40, "ymin": 20, "ymax": 40},
        ],
        "spawn": {"robots": "random", "min_separation": 2.0},
        "robots": [
            {"class": "ugv", "weight": 0.2, "sensor": dict(_UGV_SENSOR), **_FAST},
            {"class": "ugv", "weight": 0.2, "sensor": dict(_UGV_SENSOR), **_FAST},
            {"class": "uav", "weight": 0.2, "altitude": 3.0, "sensor": dict(_UAV_SENSOR), **_FAST},
        ],
        "targets": {"count": 6, "motion": "static", "q": 0.0, "prior_std": 2.0},
        "planner": {"horizon": 4, "epsilon": 1.0, "delta": 4.0, "cap": 25},
        "controller": {"u_max": 100.0},
        "mission": {"replan_every": 2, "steps": 4},
    },
    "sphere-bench": {
        "name": "sphere-bench",
        "seed": 3,
        "arena": {"xmin": -6, "xmax": 6, "ymin": -6, "ymax": 6},
        "robots": [{"class": "uav"} for _ in range(3)],
        "targets": {"count": 0, "motion": "static"},
        "controller": {"beta": 0.5, "poles": [-5.0, -5.1], "D_s": 0.5, "c": 1.0, "u_max": 10.0},
    },
    "hil-net-bench": {
        "name": "hil-net-bench",
        "seed": 4,
        "arena": {"xmin": 0, "xmax": 40, "ymin": 0, "ymax": 40},
        "spawn": {"robots": "random", "min_separation": 2.0},
        "robots": [{"class": "ugv", "sensor": dict(_UGV_SENSOR), **_FAST} for _ in range(6)],
        "targets": {"count": 6, "motion": "double-integrator", "q": 0.1, "prior_std": 1.0},
        "planner": {"horizon": 2, "cap": 10},
        "network": {"delay_ms": 5.0},
    },
    "hw-analog": {
        "name": "hw-analog",
        "seed": 5,
        "arena": {"xmin": -6, "xmax": 6, "ymin": -6, "ymax": 6},
        "robots": [
            {"class": "ugv", "pose": [-4.0, -2.0, 0.0], "speeds": [0.0, 0.3, 0.6], "weight": 0.1,
             "rates": [0.0, 0.2, -0.2, 0.5, -0.5],
             "sensor": {"kind": "range", "max_range": 8.0, "range_std": 1.0}},
            {"class": "ugv", "pose": [-4.0, 2.0, 0.0], "speeds": [0.0, 0.3, 0.6], "weight": 0.1,
             "rates": [0.0, 0.2, -0.2, 0.5, -0.5],
             "sensor": {"kind": "range", "max_range": 8.0, "range_std": 1.0}},
            {"class": "uav", "pose": [-4.0, 0.0, 0.0], "altitude": 1.5, "speeds": [0.0, 0.3, 0.5, 0.8], "weight": 0.1,
             "rates": [0.0, 0.35, -0.35, 0.75, -0.75],
             "sensor": {"kind": "range", "max_range": 10.0, "range_std": 0.4}},
        ],
        "targets": {"count": 2, "motion": "linear", "speed": 0.15, "q": 0.001, "prior_std": 0.5,
                    "positions": [[0.0, -2.0], [0.0, 2.0]]},
        "planner": {"horizon": 2, "tau": 3.0, "delta": 0.5, "epsilon": 0.2, "cap": 15},
        "controller": {"poles": [-3.0, -3.1], "D_s": 1.0, "c": 1.0, "beta": 0.5, "u_max": 2.0, "v_max": 1.0},
        "mission": {"replan_every": 2, "steps": 6},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(doc: dict) -> dict:
    """Schema-check ``doc`` and fill defaults. Raises ConfigError."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {e.message}") from None
    cfg = _merge(DEFAULTS, doc)
    a = cfg["arena"]
    if a["xmin"] >= a["xmax"] or a["ymin"] >= a["ymax"]:
        raise ConfigError("arena bounds are empty")
    if cfg["mission"]["replan_every"] > cfg["planner"]["horizon"]:
        raise ConfigError("mission/replan_every cannot exceed planner/horizon")
    c = cfg["controller"]
    if len(c["poles"]) != c["order"]:
        raise ConfigError("controller/poles needs one pole per integrator order")
    t = cfg["targets"]
    if "positions" in t and len(t["positions"]) != t["count"]:
        raise ConfigError("targets/positions must list one position per target")
    shares = cfg["controller"].get("shares")
    if shares is not None and len(shares) != len(cfg["robots"]):
        raise ConfigError("controller/shares needs one entry per robot")
    return cfg


def load(source) -> dict:
    """Load a scenario from a preset name, a JSON path or a dict."""
    if isinstance(source, dict):
        return validate(source)
    name = str(source)
    if name in PRESETS:
        return validate(PRESETS[name])
    path = Path(name)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no scenario file or preset named {name!r}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{name}: invalid JSON ({e})") from None
    return validate(doc)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# construction


@dataclass
class World:
    robots: list[RobotSpec]
    target_model: TargetModel
    target_states: np.ndarray  # (n_t, d) true states
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    field: CostField
    prune: PruneParams
    weights: list
    c_max: list


def sensor_from(cfg_sensor: dict | None, robot_class: str) -> SensorModel:
    s = dict(_UAV_SENSOR if robot_class == "uav" else _UGV_SENSOR)
    s.update(cfg_sensor or {})
    return SensorModel(
        kind=s["kind"],
        max_range=s["max_range"],
        fov=math.radians(s.get("fov_deg", 360.0)),
        range_std_max=s.get("range_std", 0.1),
        bearing_std_max=math.radians(s.get("bearing_std_deg", 5.0)),
    )


def _spawn_positions(cfg, rng, n, regions):
    a = cfg["arena"]
    sep = cfg["spawn"].get("min_separation", 0.0)
    out = []
    for _ in range(10000):
        if len(out) == n:
            break
        x = rng.uniform(a["xmin"], 0.5 * (a["xmin"] + a["xmax"]))
        y = rng.uniform(a["ymin"], 0.5 * (a["ymin"] + a["ymax"]))
        if any(r.contains(x, y) for r in regions):
            continue
        if all(math.hypot(x - px, y - py) >= sep for px, py, _ in out):
            out.append((x, y, rng.uniform(-math.pi, math.pi)))
    if len(out) < n:
        raise ConfigError("could not place robots with the requested separation")
    return out


def build_world(cfg: dict, rng: np.random.Generator, weight_override=None) -> World:
    """Instantiate robots, targets and cost field. All randomness is drawn
    from ``rng`` in a fixed order."""
    regions = [Region(r["kind"], r["xmin"], r["xmax"], r["ymin"], r["ymax"]) for r in cfg["regions"]]
    field = CostField(regions)
    pl = cfg["planner"]
    n = len(cfg["robots"])
    spawn = cfg["spawn"].get("robots", "fixed")
    if spawn == "fixed":
        missing = [i for i, r in enumerate(cfg["robots"]) if "pose" not in r]
        if missing:
            raise ConfigError(f"robots {missing}: pose required with fixed spawning")
        poses = [tuple(r["pose"]) for r in cfg["robots"]]
    else:
        poses = _spawn_positions(cfg, rng, n, regions)

    robots, weights, c_max = [], [], []
    for i, r in enumerate(cfg["robots"]):
        cls_ = r["class"]
        w = r.get("weight", 1.0) if weight_override is None else weight_override
        start = UnicycleState(*poses[i], altitude=r.get("altitude", 3.0 if cls_ == "uav" else 0.0))
        prims = primitive_grid(r.get("speeds", _FAST["speeds"]), r.get("rates", _FAST["rates"]))
        cm = r.get("c_max", field.c_max(cls_, pl["horizon"]))
        robots.append(RobotSpec(i, cls_, start, prims, sensor_from(r.get("sensor"), cls_), w, pl["tau"], cm,
                                pl["energy_model"]))
        weights.append(w)
        c_max.append(cm)

    t = cfg["targets"]
    a = cfg["arena"]
    n_t = t["count"]
    if "positions" in t:
        pos = np.array(t["positions"], float).reshape(n_t, 2)
    else:
        pos = np.column_stack([rng.uniform(a["xmin"], a["xmax"], n_t), rng.uniform(a["ymin"], a["ymax"], n_t)])
    q = t.get("q", 0.0)
    if t["motion"] == "static":
        model = static_target(q)
        states = pos
    else:
        model = double_integrator_target(pl["tau"], q)
        speed = t.get("speed", 1.0)
        heading = rng.uniform(-math.pi, math.pi, n_t)
        vel = speed * np.column_stack([np.cos(heading), np.sin(heading)])
        if t["motion"] == "double-integrator":
            vel = vel * rng.uniform(0.0, 1.0, (n_t, 1))
        states = np.hstack([pos, vel]) if n_t else np.zeros((0, 4))
    d = model.d_y
    std = t.get("prior_std", 1.0)
    prior_mean = states + std * rng.normal(size=states.shape) if n_t else np.zeros((0, d))
    prior_cov = np.stack([std**2 * np.eye(d)] * n_t) if n_t else np.zeros((0, d, d))
    prune = PruneParams(pl["epsilon"], pl["delta"], pl["cap"], pl.get("max_frontier"))
    return World(robots, model, np.asarray(states, float).reshape(n_t, d), prior_mean, prior_cov,
                 field, prune, weights, c_max)


def controller_specs(cfg: dict):
    c = cfg["controller"]
    barrier = BarrierSpec(c["D_s"], c["c"], tuple(pole_place_keta(c["poles"])))
    box = BoxLimits(u_max=c.get("u_max"), v_max=c.get("v_max"))
    qp = WeightedQPSpec(c["beta"], tuple(tuple(row) for row in np.diag(c["R"])), box)
    return barrier, qp
