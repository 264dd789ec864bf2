"""Scenario construction from structured text configs.

A scenario file is YAML holding plain key-value sections and arrays; the
builders here turn one into a runnable ``sim.Scenario``: contact
primitives, tool geometry, the nominal waypoint trajectory, controller
baselines, estimator parameters, and the success predicate.  Unknown keys
anywhere are rejected.

Three kinds exist: ``waypoints`` (everything literal in the file),
``peg`` (peg-in-hole with per-seed hole offset and yaw), and
``parkour-data`` (randomized press/slide/tilt/yaw program over table,
wall, and ramp; used to generate training data).
"""

from __future__ import annotations

import importlib.resources
import math

import numpy as np
import yaml

from ..errors import ConfigError
from ..geom import Pose, quat_exp, quat_mul, quat_rotate
from ..impedance import damping_design
from ..sim import Box, CrossSection, ExtrudedHole, HalfSpace, Scene, Scenario, Tool
from ..stiffness import EstimatorParams
from ..zft import Trajectory, Waypoint, generate_zft

BUILTIN_SCENARIOS = ("free-space", "parkour", "parkour-data",
                     "peg-cylinder", "peg-square", "peg-star")

_TOP_KEYS = {"name", "kind", "dt", "controller", "estimator", "stops", "body",
             "model", "scene", "tool", "zft", "peg", "program", "success",
             "randomize"}
_SECTION_KEYS = {
    "controller": {"k_t_max", "k_r_max", "damping_ratio"},
    "estimator": {"kappa_t", "kappa_r", "gamma_t", "gamma_r", "f_thres",
                  "m_thres", "epsilon", "window", "rate_hz",
                  "translation_uses_velocity"},
    "stops": {"speed", "force"},
    "body": {"mass", "rot_inertia"},
    "model": {"szft_every", "inference_steps"},
    "scene": {"contact_stiffness", "contact_damping", "friction",
              "friction_viscous", "primitives"},
    "tool": {"type", "width", "length", "tip_radius"},
    "zft": {"waypoints", "durations"},
    "peg": {"section", "clearance", "length", "depth", "chamfer",
            "approach_tip_height", "hover_tip_height", "insertion_tip_depth",
            "retreat_tip_height", "success_tip_depth", "durations"},
    "program": {"hover_height", "press_depth", "slide_distance", "tilt_deg",
                "yaw_deg", "wall_press_depth", "phase_duration", "glide_speed"},
    "success": {"type", "tolerance"},
    "randomize": {"waypoint_jitter", "hole_offset", "hole_yaw_deg"},
}


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def load_scenario_config(name_or_path) -> dict:
    """Load a scenario config by built-in name or by file path."""
    name = str(name_or_path)
    if name in BUILTIN_SCENARIOS:
        ref = importlib.resources.files("zftlearn.scenarios") / f"{name}.yaml"
        text = ref.read_text(encoding="utf-8")
    else:
        try:
            with open(name, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError:
            raise ConfigError(
                f"scenario {name!r} is neither a built-in name "
                f"{BUILTIN_SCENARIOS} nor a readable file"
            )
    cfg = yaml.safe_load(text)
    if not isinstance(cfg, dict):
        raise ConfigError(f"scenario {name!r}: expected a mapping at top level")
    _check_keys(cfg, _TOP_KEYS, f"scenario {cfg.get('name', name)!r}")
    for section, allowed in _SECTION_KEYS.items():
        if section in cfg and isinstance(cfg[section], dict):
            _check_keys(cfg[section], allowed, f"section {section!r}")
    return cfg


def _build_primitive(d: dict):
    kind = d.get("type")
    if kind == "half_space":
        return HalfSpace(normal=np.asarray(d["normal"], dtype=float),
                         offset=float(d["offset"]))
    if kind == "box":
        quat = np.array([1.0, 0.0, 0.0, 0.0])
        if "axis" in d:
            axis = np.asarray(d["axis"], dtype=float)
            axis = axis / np.linalg.norm(axis)
            quat = quat_exp(axis * math.radians(float(d.get("angle_deg", 0.0))))
        return Box(center=np.asarray(d["center"], dtype=float),
                   half=np.asarray(d["half"], dtype=float), quat=quat)
    if kind == "hole":
        return ExtrudedHole(
            section=_build_section(d["section"]),
            center=np.asarray(d["center"], dtype=float),
            yaw=math.radians(float(d.get("yaw_deg", 0.0))),
            z_top=float(d["z_top"]), z_bottom=float(d["z_bottom"]),
            chamfer=float(d.get("chamfer", 0.0)),
        )
    raise ConfigError(f"unknown primitive type {kind!r}")


def _build_section(d: dict) -> CrossSection:
    kind = d.get("kind")
    if kind == "circle":
        return CrossSection(kind="circle", radius=float(d["radius"]))
    if kind == "square":
        return CrossSection(kind="square", radius=float(d["radius"]))
    if kind == "star":
        return CrossSection(kind="star", outer=float(d["outer"]),
                            inner=float(d["inner"]),
                            points=int(d.get("points", 5)))
    raise ConfigError(f"unknown cross-section kind {kind!r}")


def _build_scene(d: dict) -> Scene:
    return Scene(
        primitives=[_build_primitive(p) for p in d.get("primitives", [])],
        contact_stiffness=float(d.get("contact_stiffness", 1e4)),
        contact_damping=float(d.get("contact_damping", 50.0)),
        friction=float(d.get("friction", 0.3)),
        friction_viscous=float(d.get("friction_viscous", 1000.0)),
    )


def _build_tool(d: dict) -> Tool:
    if d.get("type") == "foot":
        return Tool.foot(width=float(d.get("width", 0.05)),
                         length=float(d.get("length", 0.10)),
                         tip_radius=float(d.get("tip_radius", 0.008)))
    raise ConfigError(f"unknown tool type {d.get('type')!r}")


def _estimator_params(cfg: dict, k_t_max, k_r_max, mass, rot_inertia,
                      damping_ratio) -> EstimatorParams:
    est = dict(cfg.get("estimator", {}))
    # Default damping coefficients follow the controller's time constants.
    lam_t, _ = damping_design(np.diag(k_t_max), mass * np.eye(3), damping_ratio)
    lam_r, _ = damping_design(np.diag(k_r_max), rot_inertia * np.eye(3),
                              damping_ratio)
    est.setdefault("gamma_t", est.get("kappa_t", 1.0) * lam_t)
    est.setdefault("gamma_r", est.get("kappa_r", 1.0) * lam_r)
    return EstimatorParams(**est)


def _common(cfg: dict, scene: Scene, tool: Tool, zft: Trajectory,
            success_fn=None, final_success_fn=None) -> Scenario:
    ctrl = cfg.get("controller", {})
    body = cfg.get("body", {})
    stops = cfg.get("stops", {})
    model = cfg.get("model", {})
    k_t_max = np.full(3, float(ctrl.get("k_t_max", 800.0)))
    k_r_max = np.full(3, float(ctrl.get("k_r_max", 150.0)))
    damping_ratio = float(ctrl.get("damping_ratio", 0.7))
    mass = float(body.get("mass", 4.0))
    rot_inertia = float(body.get("rot_inertia", 0.05))
    return Scenario(
        name=cfg.get("name", "scenario"),
        scene=scene, tool=tool, zft=zft, dt=float(cfg.get("dt", 0.005)),
        K_t_max=k_t_max, K_r_max=k_r_max, damping_ratio=damping_ratio,
        estimator=_estimator_params(cfg, k_t_max, k_r_max, mass, rot_inertia,
                                    damping_ratio),
        mass=mass, rot_inertia=rot_inertia,
        stop_speed=float(stops.get("speed", 0.24)),
        stop_force=float(stops.get("force", 20.0)),
        szft_every=int(model.get("szft_every", 2)),
        inference_steps=int(model.get("inference_steps", 6)),
        success_fn=success_fn, final_success_fn=final_success_fn,
    )


def _final_waypoint_success(tolerance: float):
    def check(state, scenario) -> bool:
        target = scenario.zft.positions[-1]
        return bool(np.linalg.norm(state.pose.p - target) < tolerance)

    return check


def _waypoints_from_cfg(zcfg: dict, dt: float, rng=None, jitter: float = 0.0):
    wps = []
    for w in zcfg["waypoints"]:
        p = np.asarray(w["p"], dtype=float)
        if rng is not None and jitter > 0.0:
            p = p + rng.uniform(-jitter, jitter, 3)
        wps.append(Waypoint(pose=Pose(p, np.asarray(w["q"], dtype=float)),
                            dwell=float(w.get("dwell", 0.0))))
    return generate_zft(wps, [float(d) for d in zcfg["durations"]], dt)


def build_scenario(cfg: dict | str, seed: int = 0) -> Scenario:
    """Build a runnable scenario; ``cfg`` is a config dict, a built-in
    name, or a file path.  ``seed`` drives per-episode randomization."""
    if isinstance(cfg, str):
        cfg = load_scenario_config(cfg)
    kind = cfg.get("kind")
    if kind == "waypoints":
        return _build_waypoints(cfg, seed)
    if kind == "peg":
        return _build_peg(cfg, seed)
    if kind == "parkour-data":
        return _build_parkour_data(cfg, seed)
    raise ConfigError(f"unknown scenario kind {kind!r}")


def _build_waypoints(cfg: dict, seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    jitter = float(cfg.get("randomize", {}).get("waypoint_jitter", 0.0))
    zft = _waypoints_from_cfg(cfg["zft"], float(cfg.get("dt", 0.005)),
                              rng, jitter)
    scene = _build_scene(cfg.get("scene", {}))
    tool = _build_tool(cfg["tool"])
    success = cfg.get("success", {})
    final_fn = None
    if success.get("type") == "final_waypoint":
        final_fn = _final_waypoint_success(float(success.get("tolerance", 0.005)))
    return _common(cfg, scene, tool, zft, final_success_fn=final_fn)


def _build_peg(cfg: dict, seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    peg = cfg["peg"]
    rnd = cfg.get("randomize", {})
    section = _build_section(peg["section"])
    clearance = float(peg["clearance"])
    length = float(peg["length"])
    depth = float(peg["depth"])

    max_off = float(rnd.get("hole_offset", 0.0))
    offset = rng.uniform(-max_off, max_off, 2)
    yaw_rng = rnd.get("hole_yaw_deg", 0.0)
    if isinstance(yaw_rng, (list, tuple)):
        lo, hi = float(yaw_rng[0]), float(yaw_rng[1])
        yaw = math.radians(rng.uniform(lo, hi)) * rng.choice([-1.0, 1.0])
    else:
        yaw = math.radians(rng.uniform(-float(yaw_rng), float(yaw_rng)))

    hole = ExtrudedHole(section=section, center=offset, yaw=yaw,
                        z_top=0.0, z_bottom=-depth,
                        chamfer=float(peg.get("chamfer", 0.004)))
    scene = _build_scene(cfg.get("scene", {}))
    scene.primitives = [hole]
    tool = Tool.peg(section, clearance, length)

    def tip_pose(tip_z):
        return Pose(np.array([0.0, 0.0, tip_z + length]),
                    np.array([1.0, 0.0, 0.0, 0.0]))

    wps = [
        Waypoint(tip_pose(float(peg["hover_tip_height"])), dwell=0.2),
        Waypoint(tip_pose(float(peg["approach_tip_height"]))),
        Waypoint(tip_pose(-float(peg["insertion_tip_depth"])), dwell=0.5),
        Waypoint(tip_pose(float(peg["retreat_tip_height"]))),
    ]
    zft = generate_zft(wps, [float(d) for d in peg["durations"]],
                       float(cfg.get("dt", 0.005)))

    success_depth = float(peg["success_tip_depth"])
    tip_local = np.array([0.0, 0.0, -length])

    def success(state, tick, scenario) -> bool:
        tip = state.pose.p + quat_rotate(state.pose.q, tip_local)
        lateral = np.linalg.norm(tip[:2] - offset)
        return bool(tip[2] < -success_depth and lateral < clearance)

    return _common(cfg, scene, tool, zft, success_fn=success)


def _build_parkour_data(cfg: dict, seed: int) -> Scenario:
    """Randomized contact course over table, wall, and ramp."""
    rng = np.random.default_rng(seed)
    prog = cfg["program"]
    tool_cfg = cfg["tool"]
    tip_len = float(tool_cfg.get("length", 0.10)) + float(
        tool_cfg.get("tip_radius", 0.008))

    def u(key):
        lo, hi = prog[key]
        return rng.uniform(float(lo), float(hi))

    hover = float(prog.get("hover_height", 0.16))
    glide_speed = float(prog.get("glide_speed", 0.12))
    table_z = tip_len  # wrist height at which tips touch the table
    ident = np.array([1.0, 0.0, 0.0, 0.0])

    wps: list[Waypoint] = []
    durations: list[float] = []

    def add(p, q=None, dwell=0.0, duration=None, speed=None):
        pose = Pose(np.asarray(p, dtype=float), ident if q is None else q)
        if wps:
            if duration is None:
                dist = np.linalg.norm(pose.p - wps[-1].pose.p)
                duration = max(u("phase_duration"), dist / glide_speed)
            durations.append(duration)
        wps.append(Waypoint(pose, dwell=dwell))

    x0, y0 = rng.uniform(-0.06, 0.0), rng.uniform(-0.05, 0.05)
    add([x0, y0, hover], dwell=0.1)

    # Table press, slide, and tilts.
    press = table_z - u("press_depth")
    x1, y1 = rng.uniform(0.0, 0.08), rng.uniform(-0.05, 0.05)
    add([x1, y1, hover * 0.6])
    add([x1, y1, press])
    x2 = x1 + u("slide_distance") * rng.choice([1.0, -0.5])
    y2 = y1 + u("slide_distance") * rng.choice([1.0, -1.0]) * 0.5
    add([x2, y2, press])
    for axis in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0])):
        ang = math.radians(u("tilt_deg")) * rng.choice([-1.0, 1.0])
        add([x2, y2, press], q=quat_exp(axis * ang), dwell=0.05)
        add([x2, y2, press], dwell=0.0)

    # Wall press and yaw twists (face at y = 0.35, toward -y).
    wx = rng.uniform(-0.1, 0.1)
    wz = 0.12
    add([wx, 0.26, wz])
    wall_y = 0.35 - 0.008 + u("wall_press_depth")
    add([wx, wall_y, wz])
    for _ in range(2):
        ang = math.radians(u("yaw_deg")) * rng.choice([-1.0, 1.0])
        add([wx, wall_y, wz], q=quat_exp(np.array([0, 0, 1.0]) * ang), dwell=0.05)
    add([wx, 0.26, wz])

    # Ramp press and slide (plate tilted -15 degrees about y around x=0.28).
    if rng.uniform() < 0.7:
        rx = rng.uniform(0.22, 0.30)
        ry = rng.uniform(-0.22, -0.14)
        ramp_axis = np.array([0.0, 1.0, 0.0])
        ramp_q = quat_exp(ramp_axis * math.radians(-15.0))
        surf = 0.02 + (rx - 0.28) * math.tan(math.radians(15.0))
        press_r = surf + tip_len * math.cos(math.radians(15.0)) - u("press_depth")
        add([rx, ry, press_r + 0.06], q=ramp_q)
        add([rx, ry, press_r], q=ramp_q)
        add([rx + 0.05, ry, press_r + 0.05 * math.tan(math.radians(15.0))],
            q=ramp_q, dwell=0.05)

    add([x0, y0, hover], dwell=0.1)

    zft = generate_zft(wps, durations, float(cfg.get("dt", 0.005)))
    scene = _build_scene(cfg.get("scene", {}))
    tool = _build_tool(tool_cfg)
    return _common(cfg, scene, tool, zft)
