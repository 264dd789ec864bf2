"""Quasi-static task-space contact simulator.

The end-effector is a rigid tool (a probe-point cloud attached to the
wrist frame) moving under the impedance controller's wrench plus penalty
contact forces from scene primitives.  Contact: penetration depth d > 0
produces a normal force ``k_c d + b_c max(0, -ddot)`` along the outward
surface normal, plus Coulomb-capped viscous friction opposing slip;
moments accumulate from the contact-point offsets about the wrist.

Integration is semi-implicit Euler on a block-diagonal rigid-body model
(isotropic mass and rotational inertia); orientation integrates through
the exponential map and renormalizes.  Everything is deterministic given
(scenario, seed, checkpoint).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import DenoiserParams, reconstruct_szft
from .errors import ConfigError, NumericalError
from .geom import (Pose, quat_canonical, quat_conj, quat_exp, quat_log,
                   quat_mul, quat_rotate)
from .impedance import (StiffnessState, Wrench, damping_design, elastic_wrench)
from .stiffness import (DirectionalFactors, EstimatorParams, StiffnessAdapter,
                        directional_factors)
from .zft import Trajectory

CONTROLLER_MODES = ("fixed", "adaptive-szft", "adaptive-zft", "uniform")


# -- cross sections ----------------------------------------------------------


@dataclass
class CrossSection:
    """2-D cross-section with a signed distance field (negative inside)."""

    kind: str  # "circle" | "square" | "star"
    radius: float = 0.0  # circle radius or square half-width
    outer: float = 0.0  # star outer radius
    inner: float = 0.0  # star inner radius
    points: int = 5  # star points

    def vertices(self) -> np.ndarray:
        """CCW boundary polygon (squares and stars; circles have none)."""
        if self.kind == "square":
            a = self.radius
            return np.array([[a, a], [-a, a], [-a, -a], [a, -a]])
        if self.kind == "star":
            n = 2 * self.points
            ang = np.pi / 2.0 + np.arange(n) * (np.pi / self.points)
            rad = np.where(np.arange(n) % 2 == 0, self.outer, self.inner)
            return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        raise ConfigError(f"no polygon for cross-section {self.kind!r}")

    def sdf(self, xy: np.ndarray):
        """Signed distance and outward gradient for points (..., 2)."""
        xy = np.asarray(xy, dtype=float)
        if self.kind == "circle":
            r = np.linalg.norm(xy, axis=-1)
            safe = np.where(r > 1e-12, r, 1.0)
            grad = np.where(
                (r > 1e-12)[..., None], xy / safe[..., None], np.array([1.0, 0.0])
            )
            return r - self.radius, grad
        return _polygon_sdf(xy, self.vertices())

    def boundary_samples(self, samples_per_edge: int = 2):
        """Boundary points and their outward normals (for peg probes)."""
        if self.kind == "circle":
            ang = np.arange(16) * (2.0 * np.pi / 16)
            n = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            return self.radius * n, n
        verts = self.vertices()
        nv = verts.shape[0]
        pts, normals = [], []
        for i in range(nv):
            a, b = verts[i], verts[(i + 1) % nv]
            e = b - a
            edge_n = np.array([e[1], -e[0]])
            edge_n /= np.linalg.norm(edge_n)
            for t in np.linspace(0.0, 1.0, samples_per_edge + 1)[:-1]:
                pts.append(a + t * e)
                if t == 0.0:
                    prev = verts[i - 1]
                    pn = np.array([(a - prev)[1], -(a - prev)[0]])
                    pn /= np.linalg.norm(pn)
                    vn = pn + edge_n
                    vn /= np.linalg.norm(vn)
                    normals.append(vn)
                else:
                    normals.append(edge_n)
        return np.asarray(pts), np.asarray(normals)


def _polygon_sdf(pts: np.ndarray, verts: np.ndarray):
    """Signed distance to a CCW polygon; even-odd rule decides the sign."""
    single = pts.ndim == 1
    p = pts[None] if single else pts.reshape(-1, 2)
    a = verts
    b = np.roll(verts, -1, axis=0)
    e = b - a  # (V, 2)
    diff = p[:, None, :] - a[None]  # (P, V, 2)
    ee = np.sum(e * e, axis=1)  # (V,)
    t = np.clip(np.sum(diff * e[None], axis=2) / ee[None], 0.0, 1.0)
    closest = a[None] + t[..., None] * e[None]
    dvec = p[:, None, :] - closest
    d2 = np.sum(dvec * dvec, axis=2)
    j = np.argmin(d2, axis=1)
    idx = np.arange(p.shape[0])
    d = np.sqrt(d2[idx, j])
    direction = dvec[idx, j]

    # Even-odd crossing count for the inside test.
    x, y = p[:, 0:1], p[:, 1:2]
    ay, by = a[:, 1][None], b[:, 1][None]
    ax, bx = a[:, 0][None], b[:, 0][None]
    cond = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_int = ax + (y - ay) * (bx - ax) / (by - ay)
    crossing = cond & (x < x_int)
    inside = np.sum(crossing, axis=1) % 2 == 1

    # Outward gradient: away from the boundary outside, toward it inside;
    # degenerate on-boundary points fall back to the closest edge normal.
    edge_n = np.stack([e[:, 1], -e[:, 0]], axis=1)
    edge_n /= np.linalg.norm(edge_n, axis=1, keepdims=True)
    small = d < 1e-12
    safe_d = np.where(small, 1.0, d)
    grad = direction / safe_d[:, None]
    grad = np.where(small[:, None], edge_n[j], grad)
    grad = np.where(inside[:, None], -grad, grad)
    grad = np.where(small[:, None], edge_n[j], grad)
    sdf = np.where(inside, -d, d)
    if single:
        return sdf[0], grad[0]
    return sdf.reshape(pts.shape[:-1]), grad.reshape(pts.shape)


# -- contact primitives ------------------------------------------------------


@dataclass
class HalfSpace:
    """Solid half-space: material where normal . p <= offset."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        self.normal = self.normal / np.linalg.norm(self.normal)

    def distance(self, pts: np.ndarray):
        d = pts @ self.normal - self.offset
        n = np.broadcast_to(self.normal, pts.shape).copy()
        return d, n


@dataclass
class Box:
    """Oriented solid box."""

    center: np.ndarray
    half: np.ndarray
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.half = np.asarray(self.half, dtype=float).reshape(3)
        self.quat = quat_canonical(np.asarray(self.quat, dtype=float).reshape(4))

    def distance(self, pts: np.ndarray):
        local = quat_rotate(quat_conj(self.quat), pts - self.center)
        aq = np.abs(local) - self.half
        outside = np.maximum(aq, 0.0)
        d_out = np.linalg.norm(outside, axis=-1)
        inner_max = np.max(aq, axis=-1)
        d = d_out + np.minimum(inner_max, 0.0)
        # Normal: toward the closest point outside, least-penetration face inside.
        sign = np.where(local >= 0.0, 1.0, -1.0)
        n_out = sign * outside
        axis = np.argmax(aq, axis=-1)
        n_in = np.zeros_like(local)
        np.put_along_axis(
            n_in, axis[..., None],
            np.take_along_axis(sign, axis[..., None], axis=-1), axis=-1,
        )
        use_out = (d_out > 1e-12)[..., None]
        n_local = np.where(use_out, n_out, n_in)
        norm = np.linalg.norm(n_local, axis=-1, keepdims=True)
        n_local = n_local / np.where(norm > 1e-12, norm, 1.0)
        return d, quat_rotate(self.quat, n_local)


@dataclass
class ExtrudedHole:
    """Infinite slab below ``z_top`` with a cross-section hole cut to
    ``z_bottom``, optionally chamfered (45 degrees) at the entrance."""

    section: CrossSection
    center: np.ndarray  # (2,) hole axis in the xy plane
    yaw: float  # hole rotation about +z, radians
    z_top: float
    z_bottom: float
    chamfer: float = 0.0  # lead-in width == depth

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(2)

    def distance(self, pts: np.ndarray):
        c, s = np.cos(-self.yaw), np.sin(-self.yaw)
        rel = pts[..., :2] - self.center
        local = np.stack(
            [c * rel[..., 0] - s * rel[..., 1], s * rel[..., 0] + c * rel[..., 1]],
            axis=-1,
        )
        s2d, g2d = self.section.sdf(local)
        z = pts[..., 2]
        if self.chamfer > 0.0:
            band = np.clip((z - (self.z_top - self.chamfer)) / self.chamfer, 0.0, 1.0)
            expand = band * self.chamfer
            slope = ((z > self.z_top - self.chamfer) & (z < self.z_top)).astype(float)
        else:
            expand = np.zeros_like(z)
            slope = np.zeros_like(z)
        s_eff = s2d - expand
        d_top = z - self.z_top
        escape = np.minimum(-s_eff, z - self.z_bottom)
        d = np.maximum(d_top, escape)

        # Rotate the 2-D gradient back to world.
        cw, sw = np.cos(self.yaw), np.sin(self.yaw)
        gx = cw * g2d[..., 0] - sw * g2d[..., 1]
        gy = sw * g2d[..., 0] + cw * g2d[..., 1]
        wall_n = np.stack([-gx, -gy, slope], axis=-1)
        wall_norm = np.linalg.norm(wall_n, axis=-1, keepdims=True)
        wall_n = wall_n / np.where(wall_norm > 1e-12, wall_norm, 1.0)
        up = np.zeros(pts.shape)
        up[..., 2] = 1.0
        top_branch = d_top >= escape
        wall_branch = (-s_eff) <= (z - self.z_bottom)
        n = np.where(
            top_branch[..., None], up, np.where(wall_branch[..., None], wall_n, up)
        )
        return d, n


@dataclass
class Scene:
    primitives: list
    contact_stiffness: float = 1e4  # N/m
    contact_damping: float = 50.0  # N s/m
    friction: float = 0.3  # Coulomb coefficient
    friction_viscous: float = 1000.0  # N s/m tangential viscosity


@dataclass
class Tool:
    """Probe-point cloud rigidly attached to the wrist frame."""

    points: np.ndarray  # (P, 3) local coordinates
    radii: np.ndarray  # (P,) probe sphere radii

    @staticmethod
    def foot(width: float = 0.03, length: float = 0.06,
             tip_radius: float = 0.008) -> "Tool":
        """Four-tip foot: generates moments about every axis in contact."""
        pts = np.array(
            [[width, 0, -length], [-width, 0, -length],
             [0, width, -length], [0, -width, -length]]
        )
        return Tool(points=pts, radii=np.full(4, tip_radius))

    @staticmethod
    def peg(section: CrossSection, clearance: float, length: float,
            ring_offsets=(0.0, 0.015)) -> "Tool":
        """Peg probes: boundary samples pulled inward by the clearance, at
        one or more heights above the tip, plus the tip center."""
        bpts, bnorm = section.boundary_samples()
        shrunk = bpts - clearance * bnorm
        pts = [np.array([0.0, 0.0, -length])]
        radii = [0.0]
        for dz in ring_offsets:
            ring = np.concatenate(
                [shrunk, np.full((shrunk.shape[0], 1), -length + dz)], axis=1
            )
            pts.extend(ring)
            radii.extend([0.0] * ring.shape[0])
        return Tool(points=np.asarray(pts), radii=np.asarray(radii))


@dataclass
class SimState:
    pose: Pose
    v: np.ndarray  # (3,) m/s
    omega: np.ndarray  # (3,) rad/s
    time: float
    mass: float = 4.0
    rot_inertia: float = 0.05  # kg m^2, isotropic

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)

    @property
    def inertia_t(self) -> np.ndarray:
        return self.mass * np.eye(3)

    @property
    def inertia_r(self) -> np.ndarray:
        return self.rot_inertia * np.eye(3)

    def kinetic_energy(self) -> float:
        return float(
            0.5 * self.mass * self.v @ self.v
            + 0.5 * self.rot_inertia * self.omega @ self.omega
        )


def contact_wrench(scene: Scene, pose: Pose, twist, tool: Tool) -> Wrench:
    """Environment wrench on the tool about the wrist, in the base frame.

    Exactly zero when no probe point penetrates any primitive.
    """
    v, omega = (np.asarray(x, dtype=float).reshape(3) for x in twist)
    world = pose.p + quat_rotate(pose.q, tool.points)
    arm = world - pose.p
    v_pts = v + np.cross(omega, arm)
    f_total = np.zeros(3)
    m_total = np.zeros(3)
    for prim in scene.primitives:
        d, n = prim.distance(world)
        pen = tool.radii - d
        mask = pen > 0.0
        if not np.any(mask):
            continue
        pen = pen[mask]
        n_m = n[mask]
        v_m = v_pts[mask]
        arm_m = arm[mask]
        approach = -np.sum(n_m * v_m, axis=1)  # > 0 when closing
        fn_mag = scene.contact_stiffness * pen + scene.contact_damping * np.maximum(
            0.0, approach
        )
        fn = fn_mag[:, None] * n_m
        v_t = v_m - np.sum(n_m * v_m, axis=1, keepdims=True) * n_m
        speed = np.linalg.norm(v_t, axis=1)
        cap = np.minimum(scene.friction * fn_mag, scene.friction_viscous * speed)
        safe = np.where(speed > 1e-12, speed, 1.0)
        ft = -cap[:, None] * v_t / safe[:, None]
        f_pts = fn + ft
        f_total += f_pts.sum(axis=0)
        m_total += np.cross(arm_m, f_pts).sum(axis=0)
    return Wrench(f=f_total, m=m_total)


def step(state: SimState, commanded: Wrench, scene: Scene, dt: float,
         tool: Tool, contact: Wrench | None = None) -> SimState:
    """One semi-implicit Euler step under commanded + contact wrenches."""
    if dt <= 0.0:
        raise ConfigError("dt must be > 0")
    if contact is None:
        contact = contact_wrench(scene, state.pose, (state.v, state.omega), tool)
    f_net = commanded.f + contact.f
    m_net = commanded.m + contact.m
    v_new = state.v + dt * f_net / state.mass
    omega_new = state.omega + dt * m_net / state.rot_inertia
    p_new = state.pose.p + dt * v_new
    dq = quat_exp(omega_new * dt)
    q_new = quat_mul(dq, state.pose.q)
    q_new = q_new / np.linalg.norm(q_new)
    if not (np.all(np.isfinite(p_new)) and np.all(np.isfinite(v_new))
            and np.all(np.isfinite(q_new)) and np.all(np.isfinite(omega_new))):
        raise NumericalError(f"non-finite state at t={state.time + dt:.4f}")
    return SimState(
        pose=Pose(p_new, q_new), v=v_new, omega=omega_new,
        time=state.time + dt, mass=state.mass, rot_inertia=state.rot_inertia,
    )


# -- episodes ----------------------------------------------------------------


@dataclass
class Scenario:
    """A runnable closed-loop setup (built by the scenarios module)."""

    name: str
    scene: Scene
    tool: Tool
    zft: Trajectory
    dt: float
    K_t_max: np.ndarray
    K_r_max: np.ndarray
    damping_ratio: float
    estimator: EstimatorParams
    mass: float = 4.0
    rot_inertia: float = 0.05
    stop_speed: float = 0.24  # m/s
    stop_force: float = 20.0  # N
    szft_every: int = 2  # ticks between equilibrium reconstructions
    inference_steps: int = 6  # reverse steps per reconstruction
    success_fn: object = None  # callable(state, tick, scenario) -> bool
    final_success_fn: object = None  # checked at trajectory end

    def __post_init__(self):
        self.K_t_max = np.asarray(self.K_t_max, dtype=float).reshape(3)
        self.K_r_max = np.asarray(self.K_r_max, dtype=float).reshape(3)


LOG_SCALARS = ["time"]
_VEC3 = ["p", "v", "omega", "p0", "szft_p", "f_ext", "m_ext", "e_t", "e_r",
         "psi_t", "psi_r", "rho_t", "rho_r", "kstar_t", "kstar_r",
         "K_t", "K_r", "B_t", "B_r"]
_VEC4 = ["q", "q0", "szft_q"]


def log_columns() -> list[str]:
    cols = list(LOG_SCALARS)
    cols += [f"p_{a}" for a in "xyz"] + [f"q_{a}" for a in "wxyz"]
    cols += [f"v_{a}" for a in "xyz"] + [f"omega_{a}" for a in "xyz"]
    cols += [f"p0_{a}" for a in "xyz"] + [f"q0_{a}" for a in "wxyz"]
    cols += [f"szft_p_{a}" for a in "xyz"] + [f"szft_q_{a}" for a in "wxyz"]
    cols += [f"f_ext_{a}" for a in "xyz"] + [f"m_ext_{a}" for a in "xyz"]
    cols += [f"e_t_{a}" for a in "xyz"] + [f"e_r_{a}" for a in "xyz"]
    for name in ("psi_t", "psi_r", "rho_t", "rho_r", "kstar_t", "kstar_r",
                 "K_t", "K_r", "B_t", "B_r"):
        cols += [f"{name}_{a}" for a in "xyz"]
    return cols


@dataclass
class EpisodeLog:
    outcome: str  # success | stop_force | stop_velocity | timeout
    columns: list[str]
    rows: np.ndarray  # (ticks, len(columns))
    max_force: float
    max_speed: float

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


def run_episode(scenario: Scenario, mode: str,
                params: DenoiserParams | None = None, seed: int = 0) -> EpisodeLog:
    """Tick the closed loop ZFT -> (reconstruction) -> estimator ->
    impedance -> plant until success, a stop condition, or timeout.

    Modes: ``fixed`` holds baseline stiffness; ``adaptive-szft`` adapts
    using model-reconstructed equilibria (requires a checkpoint);
    ``adaptive-zft`` adapts using the nominal trajectory as equilibrium;
    ``uniform`` adapts from nominal-trajectory errors without directional
    weighting.
    """
    if mode not in CONTROLLER_MODES:
        raise ConfigError(f"unknown controller mode {mode!r}")
    if mode == "adaptive-szft":
        if params is None:
            raise ConfigError("adaptive-szft requires a model checkpoint")
        if abs(params.config.dt - scenario.dt) > 1e-12:
            raise ConfigError(
                f"checkpoint dt {params.config.dt} != scenario dt {scenario.dt}"
            )

    zft = scenario.zft
    dt = scenario.dt
    state = SimState(
        pose=zft.pose(0), v=np.zeros(3), omega=np.zeros(3), time=0.0,
        mass=scenario.mass, rot_inertia=scenario.rot_inertia,
    )
    inertia_t = state.inertia_t
    inertia_r = state.inertia_r
    stiff = StiffnessState.from_baselines(
        scenario.K_t_max, scenario.K_r_max, inertia_t, inertia_r,
        scenario.damping_ratio,
    )
    adapter = StiffnessAdapter(scenario.estimator, scenario.K_t_max,
                               scenario.K_r_max)
    n_tok = params.config.tokens if params is not None else 0
    buf_p, buf_q, buf_w = [], [], []
    szft_pose: Pose | None = None
    prev_e_t = np.zeros(3)
    zero3 = np.zeros(3)
    unit3 = np.ones(3)

    rows = []
    outcome = "timeout"
    max_force = 0.0
    max_speed = 0.0

    for k in range(len(zft)):
        p0, q0 = zft.positions[k], zft.quats[k]
        zft_pose = Pose(p0, q0)
        f_ext = contact_wrench(scenario.scene, state.pose,
                               (state.v, state.omega), scenario.tool)

        if mode == "adaptive-szft":
            buf_p.append(state.pose.p.copy())
            buf_q.append(state.pose.q.copy())
            buf_w.append(f_ext.as_array())
            if len(buf_p) > n_tok:
                buf_p.pop(0), buf_q.pop(0), buf_w.pop(0)
            if len(buf_p) == n_tok and k % scenario.szft_every == 0:
                rp, rq = reconstruct_szft(
                    params, np.asarray(buf_p), np.asarray(buf_q),
                    np.asarray(buf_w), steps=scenario.inference_steps,
                )
                szft_pose = Pose(rp[-1], rq[-1])
            ref = szft_pose if szft_pose is not None else zft_pose
        else:
            ref = zft_pose

        # Estimator displacement: observed relative to the equilibrium
        # (rotational part is the axis-angle of q qref^-1, the
        # work-consistent convention).
        e_t = state.pose.p - ref.p
        e_r = quat_log(quat_mul(state.pose.q, quat_conj(ref.q)))

        if mode == "fixed":
            factors = DirectionalFactors(zero3, zero3, unit3, unit3)
            kstar_t = zero3
            kstar_r = zero3
            K_t, K_r = scenario.K_t_max, scenario.K_r_max
        else:
            if mode == "uniform":
                factors = DirectionalFactors(zero3, zero3, unit3, unit3)
            else:
                factors = directional_factors(e_t, e_r)
            if scenario.estimator.translation_uses_velocity:
                e_rate = state.v
            else:
                e_rate = (e_t - prev_e_t) / dt if k > 0 else zero3
            tick = adapter.windowed_update(
                e_t, e_r, e_rate, state.omega, f_ext.f, f_ext.m, factors
            )
            kstar_t, kstar_r = tick.k_t_star, tick.k_r_star
            K_t, K_r = tick.K_t, tick.K_r
            lam_t = (damping_design(np.diag(K_t), inertia_t, scenario.damping_ratio)[0]
                     if K_t.sum() > 1e-9 else 0.0)
            lam_r = (damping_design(np.diag(K_r), inertia_r, scenario.damping_ratio)[0]
                     if K_r.sum() > 1e-9 else 0.0)
            stiff = StiffnessState(
                K_t=K_t, K_r=K_r, K_t_max=scenario.K_t_max,
                K_r_max=scenario.K_r_max, lambda_t=lam_t, lambda_r=lam_r,
            )
        prev_e_t = e_t

        cmd = elastic_wrench(state.pose, zft_pose, (state.v, state.omega), stiff)
        log_ref = ref if mode == "adaptive-szft" else zft_pose
        rows.append(np.concatenate([
            [state.time], state.pose.p, state.pose.q, state.v, state.omega,
            p0, q0, log_ref.p, log_ref.q, f_ext.f, f_ext.m, e_t, e_r,
            factors.psi_t, factors.psi_r, factors.rho_t, factors.rho_r,
            kstar_t, kstar_r, K_t, K_r, stiff.B_t, stiff.B_r,
        ]))

        force_norm = float(np.linalg.norm(f_ext.f))
        max_force = max(max_force, force_norm)
        state = step(state, cmd, scenario.scene, dt, scenario.tool, contact=f_ext)
        speed = float(np.linalg.norm(state.v))
        max_speed = max(max_speed, speed)

        if force_norm > scenario.stop_force:
            outcome = "stop_force"
            break
        if speed > scenario.stop_speed:
            outcome = "stop_velocity"
            break
        if scenario.success_fn is not None and scenario.success_fn(state, k, scenario):
            outcome = "success"
            break

    if outcome == "timeout" and scenario.final_success_fn is not None:
        if scenario.final_success_fn(state, scenario):
            outcome = "success"

    return EpisodeLog(
        outcome=outcome, columns=log_columns(), rows=np.asarray(rows),
        max_force=max_force, max_speed=max_speed,
    )


def generate_dataset(build_scenario, episodes: int, seed: int):
    """Roll out fixed-impedance episodes and collect training samples.

    ``build_scenario(episode_seed)`` must return a (randomized) Scenario.
    Returns a dataio.Dataset with one record per tick: time, observed pose,
    equilibrium (nominal ZFT) pose, and external wrench.
    """
    from .dataio import Dataset

    if episodes < 1:
        raise ConfigError("need at least one episode")
    seeds = np.random.SeedSequence(seed).spawn(episodes)
    t_list, p_list, q_list, p0_list, q0_list, w_list, ep_list = (
        [], [], [], [], [], [], [])
    for ep in range(episodes):
        ep_seed = int(seeds[ep].generate_state(1)[0])
        scenario = build_scenario(ep_seed)
        log = run_episode(scenario, "fixed", seed=ep_seed)
        c = log.columns
        idx = {name: c.index(name) for name in c}

        def grab(prefix, axes):
            return log.rows[:, [idx[f"{prefix}_{a}"] for a in axes]]

        t_list.append(log.rows[:, idx["time"]])
        p_list.append(grab("p", "xyz"))
        q_list.append(grab("q", "wxyz"))
        p0_list.append(grab("p0", "xyz"))
        q0_list.append(grab("q0", "wxyz"))
        w_list.append(np.concatenate([grab("f_ext", "xyz"),
                                      grab("m_ext", "xyz")], axis=1))
        ep_list.append(np.full(log.rows.shape[0], ep, dtype=int))
    return Dataset(
        t=np.concatenate(t_list),
        p=np.concatenate(p_list),
        q=np.concatenate(q_list),
        p0=np.concatenate(p0_list),
        q0=np.concatenate(q0_list),
        wrench=np.concatenate(w_list),
        episode=np.concatenate(ep_list),
    )
