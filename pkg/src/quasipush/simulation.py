"""Scenario-driven rollouts of pushing and grasping.

A scenario fixes the object (outline, support, limit-surface model), the
pusher (point finger, two-point rig or parallel jaw), the initial object
poses, the motion script and optionally a stochastic perturbation of the
contact model.  Each rollout repeats: detect contacts, resolve them,
integrate object and fingers by dt.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, OverlapError
from .geometry import Finger, Pose, Shape, detect_contacts, integrate_pose, pose_deviation
from .limit_surface import (QuadraticLS, QuarticLS, fit_quadratic, lift_quadratic, limit_surface_from_dict,
                            load_limit_surface)
from .multi_contact import resolve_multi_contact
from .single_contact import ContactMode, resolve_single_contact
from .stochastic import StochasticConfig, sample_limit_surface, sample_mu_c
from .support_oracle import OracleLimitSurface, SupportModel, generate_pairs

COMPLETED, JAMMED, GRASPED, ESCAPED = "Completed", "Jammed", "Grasped", "Escaped"
STATUSES = (COMPLETED, JAMMED, GRASPED, ESCAPED)
# opposing-normal tolerance for calling a jam a grasp
GRASP_ANGLE = math.radians(10.0)
# overlap (mm) at which a step is cut short as a new impact
IMPACT_DEPTH = 0.02
# penetration repair: singular-value cutoff and largest displacement per unit of overlap
REPAIR_RCOND = 0.05
REPAIR_GAIN = 10.0


# ---------------------------------------------------------------------------
# scenario parsing


def _shape_from(doc) -> Shape:
    if isinstance(doc, list):
        return Shape(np.asarray(doc, dtype=float))
    kind = doc.get("type")
    rho = doc.get("rho")
    if kind == "rectangle":
        return Shape.rectangle(float(doc["width"]), float(doc["height"]), rho)
    if kind == "disc":
        return Shape.disc(float(doc["radius"]), int(doc.get("segments", 128)), rho)
    if kind == "butterfly":
        return Shape.butterfly(float(doc.get("long_diameter", 39.0)), float(doc.get("short_diameter", 28.6)),
                               rho=rho)
    if kind == "polygon":
        return Shape(np.asarray(doc["vertices"], dtype=float), rho)
    raise ConfigError(f"unknown shape type {kind!r}")


def _support_from(doc, shape: Shape, base: Path) -> SupportModel:
    kind = doc.get("type", "grid")
    if "file" in doc:
        return SupportModel.load(base / doc["file"])
    if kind == "grid":
        n = int(doc.get("n", 8))
        lo, hi = shape.vertices.min(axis=0), shape.vertices.max(axis=0)
        if len(shape.vertices) == 4 and np.allclose(lo, -hi):
            # axis-aligned centred rectangle: the grid fills it exactly
            return SupportModel.uniform_grid(hi[0] - lo[0], hi[1] - lo[1], n, int(doc.get("ny", n)))
        return SupportModel.shape_grid(shape, n)
    if kind == "boundary":
        return SupportModel.boundary(shape, int(doc.get("n", 100)))
    if kind == "points":
        return SupportModel(np.asarray(doc["points"], dtype=float), np.asarray(doc["weights"], dtype=float),
                            doc.get("rho"))
    raise ConfigError(f"unknown support type {kind!r}")


def build_limit_surface(model: str, support: SupportModel, n_pairs: int = 400, seed: int = 0):
    """Limit surface for a support model: 'oracle', or a fit from oracle pairs."""
    if model == "oracle":
        return OracleLimitSurface(support)
    F, V = generate_pairs(support, n_pairs, np.random.default_rng(seed))
    quad = fit_quadratic(F, V, normalization=support.normalization)
    if model == "quadratic":
        return quad
    if model == "quartic":
        return lift_quadratic(quad)
    raise ConfigError(f"unknown limit-surface model {model!r}")


@dataclass(frozen=True, eq=False)
class PoseSampler:
    center: tuple = (0.0, 0.0)
    radius: float = 0.0
    angle_range: tuple = (0.0, 0.0)  # radians

    def sample(self, n: int, rng) -> list:
        r = self.radius * np.sqrt(rng.uniform(size=n))
        phi = rng.uniform(0.0, 2 * math.pi, size=n)
        th = rng.uniform(self.angle_range[0], self.angle_range[1], size=n)
        return [Pose(self.center[0] + r[i] * math.cos(phi[i]), self.center[1] + r[i] * math.sin(phi[i]), th[i])
                for i in range(n)]


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated simulation setup.  Build with :meth:`from_dict` or :meth:`load`."""

    name: str
    shape: Shape
    limit_surface: object
    fingers: tuple
    finger_starts: tuple
    motion: str  # "push" or "squeeze"
    distance: float
    dt: float
    max_steps: int
    mu_c: float = 0.2
    stochastic: StochasticConfig | None = None
    poses: tuple | None = None
    sampler: PoseSampler | None = None
    seed: int = 0
    contact_tol: float = 0.1
    max_penetration: float = 1.0
    goal: tuple | None = None
    goal_relative_to_pusher: bool = False
    goal_threshold: float = 2.0
    goal_ignore_theta: bool = False
    doc: dict = field(default_factory=dict)

    @property
    def rho(self) -> float:
        return self.limit_surface.normalization.rho

    @property
    def speed(self) -> float:
        return float(max(np.linalg.norm(f.velocity) for f in self.fingers))

    def initial_poses(self, n: int | None = None) -> list:
        if self.poses is not None:
            poses = list(self.poses)
            if n is not None:
                poses = [poses[i % len(poses)] for i in range(n)]
            return poses
        n = 1 if n is None else n
        rng = np.random.default_rng(np.random.SeedSequence([int(self.seed), 1]))
        return self.sampler.sample(n, rng)

    def with_stochastic(self, cfg: StochasticConfig | None) -> "Scenario":
        return _replace(self, stochastic=cfg)

    def with_seed(self, seed: int) -> "Scenario":
        return _replace(self, seed=int(seed))

    # construction

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(doc, base=path.parent)

    @classmethod
    def from_dict(cls, doc: dict, base=".") -> "Scenario":
        try:
            return _scenario_from_dict(doc, Path(base))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"malformed scenario: {exc!r}") from exc


def _replace(sc: Scenario, **kw) -> Scenario:
    import dataclasses

    return dataclasses.replace(sc, **kw)


def _pusher_from(doc, motion_doc):
    kind = doc.get("type", "point")
    direction = np.asarray(doc.get("direction", [1.0, 0.0]), dtype=float)
    if not np.linalg.norm(direction) > 0:
        raise ConfigError("pusher direction must be non-zero")
    direction = direction / np.linalg.norm(direction)
    speed = float(motion_doc.get("speed", doc.get("speed", 10.0)))
    if not speed > 0:
        raise ConfigError("push speed must be positive")
    start = np.asarray(doc.get("start", [0.0, 0.0]), dtype=float)
    if kind == "point":
        return (Finger.point(speed * direction),), (Pose(*start, 0.0),)
    if kind == "two_point":
        sep = float(doc["separation"])
        if not sep > 0:
            raise ConfigError("separation must be positive")
        side = np.array([-direction[1], direction[0]]) * sep / 2
        f = Finger.point(speed * direction)
        return (f, f), (Pose(*(start + side), 0.0), Pose(*(start - side), 0.0))
    if kind == "parallel_jaw":
        length, thick = (float(x) for x in doc.get("finger_size", [20.0, 10.0]))
        opening = float(doc["opening"])
        if not (length > 0 and thick > 0 and opening > 0):
            raise ConfigError("finger size and opening must be positive")
        half = opening / 2 + thick / 2
        top = Finger.rectangle(length, thick, (0.0, -speed))
        bot = Finger.rectangle(length, thick, (0.0, speed))
        return (top, bot), (Pose(start[0], start[1] + half, 0.0), Pose(start[0], start[1] - half, 0.0))
    raise ConfigError(f"unknown pusher type {kind!r}")


def _scenario_from_dict(doc: dict, base: Path) -> Scenario:
    obj = doc["object"]
    shape = _shape_from(obj["shape"])
    ls_doc = obj.get("limit_surface", {"model": "quadratic"})
    if "file" in ls_doc:
        ls = load_limit_surface(base / ls_doc["file"])
    elif "inline" in ls_doc:
        ls = limit_surface_from_dict(ls_doc["inline"])
    else:
        support = _support_from(obj.get("support", {"type": "grid"}), shape, base)
        ls = build_limit_surface(ls_doc.get("model", "quadratic"), support, int(ls_doc.get("n_pairs", 400)),
                                 int(ls_doc.get("seed", 0)))

    motion_doc = doc.get("motion", {"type": "push"})
    fingers, starts = _pusher_from(doc.get("pusher", {}), motion_doc)
    motion = motion_doc.get("type", "push")
    if motion not in ("push", "squeeze"):
        raise ConfigError(f"unknown motion type {motion!r}")
    if motion == "squeeze" and doc.get("pusher", {}).get("type") != "parallel_jaw":
        raise ConfigError("squeeze motion needs a parallel_jaw pusher")
    distance = float(motion_doc.get("distance", 0.0))
    if motion == "push" and not distance > 0:
        raise ConfigError("push distance must be positive")

    dt = float(doc.get("dt", 0.1))
    if not dt > 0:
        raise ConfigError("dt must be positive")
    speed = max(np.linalg.norm(f.velocity) for f in fingers)
    default_steps = 4 * int(math.ceil(distance / (speed * dt))) + 20 if motion == "push" else 4000
    max_steps = int(doc.get("max_steps", default_steps))
    if max_steps < 1:
        raise ConfigError("max_steps must be at least 1")

    poses = sampler = None
    init = doc.get("initial_poses", {"poses": [[0.0, 0.0, 0.0]]})
    if "poses" in init:
        poses = tuple(Pose(*map(float, q)) for q in init["poses"])
        if not poses:
            raise ConfigError("initial pose list is empty")
    else:
        s = init["sampler"]
        lo, hi = (math.radians(float(a)) for a in s.get("angle_range_deg", [0.0, 0.0]))
        radius = float(s.get("radius", 0.0))
        if radius < 0 or hi < lo:
            raise ConfigError("pose sampler needs radius >= 0 and an ordered angle range")
        sampler = PoseSampler(tuple(map(float, s.get("center", [0.0, 0.0]))), radius, (lo, hi))

    stoch = doc.get("stochastic")
    cfg = StochasticConfig.from_dict(stoch) if stoch else None
    if cfg is not None and isinstance(ls, OracleLimitSurface):
        raise ConfigError("stochastic sampling needs a polynomial limit surface")
    mu_c = float(doc.get("mu_c", 0.2))
    if mu_c < 0:
        raise ConfigError("mu_c must be non-negative")
    seed = int(doc.get("seed", cfg.seed if cfg else 0))

    goal = doc.get("goal")
    kw = {}
    if goal is not None:
        kw = dict(goal=tuple(map(float, goal["pose"])), goal_relative_to_pusher=bool(goal.get("relative_to_pusher", False)),
                  goal_threshold=float(goal.get("threshold", 2.0)), goal_ignore_theta=bool(goal.get("ignore_theta", False)))
    return Scenario(
        name=str(doc.get("name", "scenario")), shape=shape, limit_surface=ls, fingers=tuple(fingers),
        finger_starts=tuple(starts), motion=motion, distance=distance, dt=dt, max_steps=max_steps, mu_c=mu_c,
        stochastic=cfg, poses=poses, sampler=sampler, seed=seed,
        contact_tol=float(doc.get("contact_tol", 0.1)), max_penetration=float(doc.get("max_penetration", 1.0)),
        doc=doc, **kw)


# ---------------------------------------------------------------------------
# rollouts


@dataclass(eq=False)
class RolloutRecord:
    """Per-step history of one rollout.

    Arrays have one row per recorded instant (the initial state included):
    ``object_poses`` (k, 3), ``finger_positions`` (k, n_fingers, 2),
    ``twists`` (k, 3) body twists in mm/s and rad/s, ``wrenches`` (k, 3)
    applied wrenches in unit coordinates, ``modes`` one string per instant.
    """

    index: int
    t: np.ndarray
    object_poses: np.ndarray
    finger_positions: np.ndarray
    twists: np.ndarray
    wrenches: np.ndarray
    modes: list
    status: str
    mu_c: float

    @property
    def initial_pose(self) -> Pose:
        return Pose.from_array(self.object_poses[0])

    @property
    def final_pose(self) -> Pose:
        return Pose.from_array(self.object_poses[-1])


def _mode_label(modes) -> str:
    return "|".join("jam" if m is None else ContactMode(m).value for m in modes)


def _opposed_fingers(contacts) -> bool:
    cos_lim = math.cos(GRASP_ANGLE)
    for i, a in enumerate(contacts):
        for b in contacts[i + 1:]:
            if a.finger != b.finger and float(a.normal @ b.normal) <= -cos_lim:
                return True
    return False


def _repair(sc: Scenario, pose: Pose, finger_poses, mu_c, step):
    """Move the object out of shallow penetration.

    Finds the smallest body displacement ``(dx, dy, rho dtheta)`` that
    clears every penetrating contact to first order and repeats a few
    times.  When the fingers pinch the object no displacement can clear
    all of them; the residual overlap is left in place as long as it
    stays within ``max_penetration``.
    """
    rho = sc.shape.rho
    for _ in range(5):
        try:
            contacts = detect_contacts(sc.shape, pose, sc.fingers, finger_poses, sc.contact_tol,
                                       sc.max_penetration, mu_c)
        except OverlapError as exc:
            exc.step = step
            raise
        deep = [c for c in contacts if c.depth > 1e-9]
        if not deep:
            break
        G = np.array([c.normal @ c.scaled(rho).jacobian for c in deep])
        d = np.array([c.depth + 1e-9 for c in deep])
        # opposed normals make G nearly rank deficient: drop those directions
        delta = np.linalg.lstsq(G, d, rcond=REPAIR_RCOND)[0]
        if np.linalg.norm(delta) > REPAIR_GAIN * max(d):
            break
        moved = integrate_pose(pose, (delta[0], delta[1], delta[2] / rho), 1.0)
        try:
            after = detect_contacts(sc.shape, moved, sc.fingers, finger_poses, sc.contact_tol, math.inf, mu_c)
        except OverlapError:
            break
        if max((c.depth for c in after), default=0.0) >= max(d) - 1e-9:
            break
        pose, contacts = moved, after
    return pose, contacts


def _jaw_gap(sc: Scenario, finger_poses) -> float:
    top, bot = finger_poses
    thick_top = np.ptp(sc.fingers[0].outline[:, 1])
    thick_bot = np.ptp(sc.fingers[1].outline[:, 1])
    return (top.y - thick_top / 2) - (bot.y + thick_bot / 2)


def _max_depth(sc: Scenario, pose: Pose, finger_poses) -> float:
    contacts = detect_contacts(sc.shape, pose, sc.fingers, finger_poses, 1e-12, math.inf)
    return max((c.depth for c in contacts), default=0.0)


def _advance(sc: Scenario, pose: Pose, finger_poses, body, h):
    new_pose = integrate_pose(pose, body, h)
    new_f = [Pose(p.x + f.velocity[0] * h, p.y + f.velocity[1] * h, p.theta)
             for p, f in zip(finger_poses, sc.fingers)]
    return new_pose, new_f


def _step_to_impact(sc: Scenario, pose, finger_poses, body, h, depth0=None):
    """Shorten a step that would drive a finger into the object.

    Within one step the twist is frozen, so a finger that was not touching
    can end up well inside the object.  Bisect on the step length for the
    first instant the overlap grows by IMPACT_DEPTH.
    """
    new_pose, new_f = _advance(sc, pose, finger_poses, body, h)
    if depth0 is None:
        depth0 = _max_depth(sc, pose, finger_poses)
    limit = depth0 + IMPACT_DEPTH
    if _max_depth(sc, new_pose, new_f) <= limit:
        return h, new_pose, new_f
    lo, hi = 0.0, h
    for _ in range(14):
        mid = 0.5 * (lo + hi)
        q, f = _advance(sc, pose, finger_poses, body, mid)
        if _max_depth(sc, q, f) <= limit:
            lo = mid
        else:
            hi = mid
    h = lo if lo > 0 else hi
    return (h, *_advance(sc, pose, finger_poses, body, h))


def run_rollout(sc: Scenario, initial_pose: Pose, rng=None, index: int = 0) -> RolloutRecord:
    """Roll one trajectory out from ``initial_pose``.

    ``rng`` is this rollout's own generator; it is only drawn from when the
    scenario is stochastic.  Steps are dt long except where a finger makes
    new contact, where the step is cut at the impact.  Raises OverlapError
    (with ``step`` set) on penetration deeper than the scenario allows.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    H, mu_c = sc.limit_surface, sc.mu_c
    cfg = sc.stochastic
    if cfg is not None:
        H, mu_c = sample_limit_surface(sc.limit_surface, cfg.n_df, rng), sample_mu_c(cfg, rng)
    rho = H.normalization.rho
    per_step = cfg is not None and cfg.redraw == "per_step"
    squeeze = sc.motion == "squeeze"
    min_width = sc.shape.min_width() if squeeze else None
    t_end = math.inf if squeeze else sc.distance / sc.speed

    pose = initial_pose
    fposes = list(sc.finger_starts)
    n_f = len(sc.fingers)
    t, poses, fpos = [0.0], [pose.as_array()], [[p.position for p in fposes]]
    Vs, Fs, modes = [np.zeros(3)], [np.zeros(3)], [""]
    status = COMPLETED
    F_hint = None
    now = 0.0

    for step in range(1, sc.max_steps + 1):
        if now >= t_end * (1 - 1e-12):
            break
        if per_step and step > 1:
            H, mu_c = sample_limit_surface(sc.limit_surface, cfg.n_df, rng), sample_mu_c(cfg, rng)
            F_hint = None
        pose, contacts = _repair(sc, pose, fposes, mu_c, step)
        poses[-1] = pose.as_array()
        if squeeze and not contacts and _jaw_gap(sc, fposes) < min_width:
            status = ESCAPED
            break
        V = F = np.zeros(3)
        label = ""
        if len(contacts) == 1:
            out = resolve_single_contact(H, contacts[0].scaled(rho), F_hint)
            V, F, label = out.V, out.F, out.mode.value
        elif contacts:
            out = resolve_multi_contact(H, [c.scaled(rho) for c in contacts], F_hint)
            if out.jammed:
                fingers_in_contact = {c.finger for c in contacts}
                status = GRASPED if len(fingers_in_contact) >= 2 and _opposed_fingers(contacts) else JAMMED
                modes[-1] = "jam"
                break
            V, F, label = out.V, out.F, _mode_label(out.modes)
        if np.linalg.norm(F) > 0:
            F_hint = F
        body = np.array([V[0], V[1], V[2] / rho])
        depth0 = max((c.depth for c in contacts), default=0.0)
        h, pose, fposes = _step_to_impact(sc, pose, fposes, body, min(sc.dt, t_end - now), depth0)
        now += h
        Vs[-1], Fs[-1], modes[-1] = body, F, label
        t.append(now)
        poses.append(pose.as_array())
        fpos.append([p.position for p in fposes])
        Vs.append(np.zeros(3))
        Fs.append(np.zeros(3))
        modes.append("")
        if squeeze and _jaw_gap(sc, fposes) <= 0:
            status = ESCAPED
            break
    if status == COMPLETED:
        pose, _ = _repair(sc, pose, fposes, mu_c, len(t))
        poses[-1] = pose.as_array()

    return RolloutRecord(index, np.array(t), np.array(poses), np.array(fpos).reshape(len(t), n_f, 2),
                         np.array(Vs), np.array(Fs), modes, status, float(mu_c))


def goal_pose(sc: Scenario, rec: RolloutRecord) -> Pose | None:
    if sc.goal is None:
        return None
    g = np.asarray(sc.goal, dtype=float)
    if sc.goal_relative_to_pusher:
        g = g + np.append(rec.finger_positions[-1].mean(axis=0), 0.0)
    return Pose.from_array(g)


def converged(sc: Scenario, rec: RolloutRecord) -> bool | None:
    g = goal_pose(sc, rec)
    if g is None:
        return None
    q = rec.final_pose
    if sc.goal_ignore_theta:
        q = Pose(q.x, q.y, g.theta)
    return pose_deviation(q, g, sc.shape.radius) < sc.goal_threshold


def _rollout_job(args):
    sc, pose, seed_seq, i = args
    return run_rollout(sc, pose, np.random.default_rng(seed_seq), i)


def run_batch(sc: Scenario, n: int, workers: int = 1):
    """Run n rollouts; returns ``(summary, records)``.

    Rollout i always uses initial pose i and the i-th child of the scenario
    seed, so results do not depend on ``workers``.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    poses = sc.initial_poses(n)
    seeds = np.random.SeedSequence([int(sc.seed), 2]).spawn(n)
    jobs = [(sc, poses[i], seeds[i], i) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(_rollout_job, jobs, chunksize=max(1, n // (4 * workers))))
    else:
        records = [_rollout_job(j) for j in jobs]
    return summarize(sc, records), records


def summarize(sc: Scenario, records) -> dict:
    finals = np.array([r.object_poses[-1] for r in records])
    deltas = finals - np.array([r.object_poses[0] for r in records])
    deltas[:, 2] = (deltas[:, 2] + math.pi) % (2 * math.pi) - math.pi
    counts = {s: 0 for s in STATUSES}
    for r in records:
        counts[r.status] += 1
    cov = np.cov(finals.T) if len(finals) > 1 else np.zeros((3, 3))
    summary = {
        "scenario": sc.name,
        "n": len(records),
        "seed": sc.seed,
        "final_pose_mean": finals.mean(axis=0).tolist(),
        "final_pose_cov": np.atleast_2d(cov).tolist(),
        "delta_mean": deltas.mean(axis=0).tolist(),
        "delta_std": deltas.std(axis=0).tolist(),
        "status_counts": counts,
    }
    flags = [converged(sc, r) for r in records]
    if flags and flags[0] is not None:
        summary["converged"] = [bool(f) for f in flags]
        frac = float(np.mean(flags))
        summary["converged_fraction"] = frac
        if sc.sampler is not None:
            summary["convergence_region_area_mm2"] = frac * math.pi * sc.sampler.radius ** 2
    return summary
