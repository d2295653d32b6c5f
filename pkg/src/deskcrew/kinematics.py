"""Simplified articulated arms: forward kinematics, position-only IK, collision checks.

Arm embodiment is a 4-DOF spatial chain: one yaw joint about the vertical axis
at the base, then three pitch joints. The shoulder pitch is coincident with the
yaw joint; the last link extends rigidly in the wrist direction. Each of the
four links is modeled as a capsule for collision purposes.

Composite configurations stack all arms' joint vectors into an (N, 4) array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    capsule_aabb_distance,
    capsule_capsule_distance,
    capsule_sphere_distance,
)

DEFAULT_LINK_LENGTHS = (0.30, 0.25, 0.20, 0.10)
DEFAULT_LINK_RADIUS = 0.04
# yaw, shoulder pitch, elbow pitch, wrist pitch
DEFAULT_JOINT_LIMITS = ((-np.pi, np.pi), (-1.4, 1.4), (-2.4, 2.4), (-2.4, 2.4))


@dataclass(frozen=True)
class Obstacle:
    """Static collision primitive: an axis-aligned box or a sphere."""

    kind: str  # "aabb" | "sphere"
    name: str = ""
    box_min: tuple[float, float, float] | None = None
    box_max: tuple[float, float, float] | None = None
    center: tuple[float, float, float] | None = None
    radius: float | None = None

    @staticmethod
    def aabb(box_min, box_max, name: str = "") -> "Obstacle":
        lo = tuple(float(v) for v in box_min)
        hi = tuple(float(v) for v in box_max)
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"aabb min must be < max componentwise: {lo} vs {hi}")
        return Obstacle(kind="aabb", name=name, box_min=lo, box_max=hi)

    @staticmethod
    def sphere(center, radius: float, name: str = "") -> "Obstacle":
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        return Obstacle(kind="sphere", name=name, center=tuple(float(v) for v in center), radius=float(radius))

    def to_dict(self) -> dict:
        if self.kind == "aabb":
            return {"kind": "aabb", "name": self.name, "min": list(self.box_min), "max": list(self.box_max)}
        return {"kind": "sphere", "name": self.name, "center": list(self.center), "radius": self.radius}

    @staticmethod
    def from_dict(d: dict) -> "Obstacle":
        if d["kind"] == "aabb":
            return Obstacle.aabb(d["min"], d["max"], d.get("name", ""))
        return Obstacle.sphere(d["center"], d["radius"], d.get("name", ""))


@dataclass(frozen=True)
class ArmModel:
    name: str
    base_pos: tuple[float, float, float] = (0.0, 0.0, 0.0)
    base_yaw: float = 0.0
    link_lengths: tuple[float, ...] = DEFAULT_LINK_LENGTHS
    joint_limits: tuple[tuple[float, float], ...] = DEFAULT_JOINT_LIMITS
    link_radius: float = DEFAULT_LINK_RADIUS

    def __post_init__(self):
        if len(self.link_lengths) != 4 or any(l <= 0 for l in self.link_lengths):
            raise ValueError("arm needs 4 positive link lengths")
        if len(self.joint_limits) != 4 or any(lo >= hi for lo, hi in self.joint_limits):
            raise ValueError("joint limits must be 4 pairs with lo < hi")

    @property
    def n_joints(self) -> int:
        return 4

    @property
    def total_length(self) -> float:
        return float(sum(self.link_lengths))

    def limits_lo(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits])

    def limits_hi(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_pos": list(self.base_pos),
            "base_yaw": self.base_yaw,
            "link_lengths": list(self.link_lengths),
            "joint_limits": [list(p) for p in self.joint_limits],
            "link_radius": self.link_radius,
        }

    @staticmethod
    def from_dict(d: dict) -> "ArmModel":
        return ArmModel(
            name=d["name"],
            base_pos=tuple(d["base_pos"]),
            base_yaw=float(d["base_yaw"]),
            link_lengths=tuple(d["link_lengths"]),
            joint_limits=tuple(tuple(p) for p in d["joint_limits"]),
            link_radius=float(d["link_radius"]),
        )


@dataclass(frozen=True)
class Capsule:
    a: np.ndarray
    b: np.ndarray
    radius: float
    label: str


@dataclass
class CollisionReport:
    """Every colliding pair at a composite configuration; empty means free."""

    pairs: list[tuple[str, str]] = field(default_factory=list)

    @property
    def free(self) -> bool:
        return not self.pairs

    def __bool__(self) -> bool:  # truthy when a collision exists
        return bool(self.pairs)


def within_limits(arm: ArmModel, q, tol: float = 1e-9) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.all(q >= arm.limits_lo() - tol) and np.all(q <= arm.limits_hi() + tol))


def _frame(arm: ArmModel, q: np.ndarray):
    psi = arm.base_yaw + q[0]
    xhat = np.array([np.cos(psi), np.sin(psi), 0.0])
    yhat = np.array([-np.sin(psi), np.cos(psi), 0.0])
    zhat = np.array([0.0, 0.0, 1.0])
    return xhat, yhat, zhat


def joint_points(arm: ArmModel, q) -> np.ndarray:
    """Chain points p0..p4 (base, three link ends, end effector), shape (5, 3)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError(f"expected 4 joint angles, got shape {q.shape}")
    xhat, _, zhat = _frame(arm, q)
    phi = np.cumsum(q[1:])
    dirs = [np.cos(a) * xhat + np.sin(a) * zhat for a in phi]
    dirs.append(dirs[-1])  # wrist link is rigid in the third pitch direction
    pts = np.empty((5, 3))
    pts[0] = np.asarray(arm.base_pos, dtype=float)
    for i, (length, d) in enumerate(zip(arm.link_lengths, dirs)):
        pts[i + 1] = pts[i] + length * d
    return pts


def forward_kinematics(arm: ArmModel, q) -> tuple[np.ndarray, list[Capsule]]:
    """End-effector position and one capsule per link.

    Raises ValueError if q violates the arm's joint limits.
    """
    q = np.asarray(q, dtype=float)
    if not within_limits(arm, q, tol=1e-6):
        raise ValueError(f"{arm.name}: joint config {q.tolist()} outside limits")
    pts = joint_points(arm, q)
    capsules = [
        Capsule(pts[i], pts[i + 1], arm.link_radius, f"{arm.name}/link{i}")
        for i in range(4)
    ]
    return pts[4].copy(), capsules


def jacobian(arm: ArmModel, q) -> np.ndarray:
    """Analytic 3x4 position Jacobian of the end effector."""
    q = np.asarray(q, dtype=float)
    pts = joint_points(arm, q)
    _, yhat, zhat = _frame(arm, q)
    ee = pts[4]
    J = np.empty((3, 4))
    J[:, 0] = np.cross(zhat, ee - pts[0])
    # pitch axes: rotation by +phi tilts the chain upward, generator is -yhat
    for i, origin in enumerate((pts[0], pts[1], pts[2])):
        J[:, i + 1] = np.cross(-yhat, ee - origin)
    return J


def _wrap_angle(a: float) -> float:
    return (a + np.pi) % (2 * np.pi) - np.pi


def _seed_guesses(arm: ArmModel, target: np.ndarray, keep: int = 6) -> list[np.ndarray]:
    """Near-solution starting points from the arm's planar decomposition.

    With the yaw aimed at the target azimuth, the rest of the chain is a
    planar 3R arm (the last two links act as one rigid segment). Sweeping the
    approach angle of that segment and solving the remaining two-link
    subproblem in closed form yields candidates that DLS only has to polish.
    """
    base = np.asarray(arm.base_pos, dtype=float)
    rel = target - base
    aim = _wrap_angle(np.arctan2(rel[1], rel[0]) - arm.base_yaw)
    r_h = float(np.hypot(rel[0], rel[1]))
    z = float(rel[2])
    A, B = arm.link_lengths[0], arm.link_lengths[1]
    C = arm.link_lengths[2] + arm.link_lengths[3]
    lo, hi = arm.limits_lo(), arm.limits_hi()

    scored: list[tuple[float, np.ndarray]] = []
    for phi3 in np.linspace(-np.pi, np.pi, 33)[:-1]:
        wr = r_h - C * np.cos(phi3)
        wz = z - C * np.sin(phi3)
        d = float(np.hypot(wr, wz))
        if d > A + B or d < abs(A - B) or d < 1e-9:
            continue
        gamma = np.arctan2(wz, wr)
        cos_alpha = np.clip((A * A + d * d - B * B) / (2 * A * d), -1.0, 1.0)
        alpha = np.arccos(cos_alpha)
        for elbow in (1.0, -1.0):
            phi1 = gamma + elbow * alpha
            phi2 = np.arctan2(wz - A * np.sin(phi1), wr - A * np.cos(phi1))
            q = np.array([aim, _wrap_angle(phi1), _wrap_angle(phi2 - phi1), _wrap_angle(phi3 - phi2)])
            clipped = np.clip(q, lo, hi)
            resid = float(np.linalg.norm(joint_points(arm, clipped)[4] - target))
            scored.append((resid, clipped))
    scored.sort(key=lambda t: t[0])
    guesses = [q for _, q in scored[:keep]]
    guesses.append(np.clip(np.array([aim, 0.4, -0.8, 0.4]), lo, hi))
    return guesses


def _dls_polish(
    arm: ArmModel,
    target: np.ndarray,
    q0: np.ndarray,
    tol: float,
    max_iters: int,
    damping: float,
    step_clamp: float,
) -> np.ndarray | None:
    """Damped-least-squares iteration from one start; None if it fails to converge."""
    lo, hi = arm.limits_lo(), arm.limits_hi()
    lam2 = damping * damping
    q = q0.copy()
    for _ in range(max_iters):
        pts = joint_points(arm, q)
        err = target - pts[4]
        if np.linalg.norm(err) <= tol:
            return q
        J = jacobian(arm, q)
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(3), err)
        dq = np.clip(dq, -step_clamp, step_clamp)
        q = np.clip(q + dq, lo, hi)
    if np.linalg.norm(target - joint_points(arm, q)[4]) <= tol:
        return q
    return None


def solve_ik(
    arm: ArmModel,
    target,
    seed: int = 0,
    tol: float = 1e-3,
    max_iters: int = 300,
    restarts: int = 10,
    damping: float = 0.1,
    step_clamp: float = 0.2,
) -> np.ndarray | None:
    """Position-only IK via damped least squares; None when unreachable.

    Deterministic for a given seed: attempts start from planar-decomposition
    candidates (usually already within tolerance), then fall back to uniform
    random restarts drawn from the seeded RNG.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (3,) or not np.all(np.isfinite(target)):
        raise ValueError("target must be a finite 3-vector")
    base = np.asarray(arm.base_pos, dtype=float)
    if np.linalg.norm(target - base) > arm.total_length + tol:
        return None

    rng = np.random.default_rng(seed)
    lo, hi = arm.limits_lo(), arm.limits_hi()
    guesses = _seed_guesses(arm, target)

    for attempt in range(len(guesses) + restarts):
        q0 = guesses[attempt] if attempt < len(guesses) else rng.uniform(lo, hi)
        q = _dls_polish(arm, target, q0, tol, max_iters, damping, step_clamp)
        if q is not None:
            return q
    return None


def iter_ik_solutions(
    arm: ArmModel,
    target,
    seed: int = 0,
    tol: float = 1e-3,
):
    """Yield distinct IK solutions (different elbow/approach branches) lazily.

    Deterministic per seed; the first yield matches solve_ik's preferred branch.
    """
    target = np.asarray(target, dtype=float)
    base = np.asarray(arm.base_pos, dtype=float)
    if np.linalg.norm(target - base) > arm.total_length + tol:
        return
    rng = np.random.default_rng(seed)
    lo, hi = arm.limits_lo(), arm.limits_hi()
    starts = _seed_guesses(arm, target, keep=16) + [rng.uniform(lo, hi) for _ in range(8)]
    seen: list[np.ndarray] = []
    for q0 in starts:
        q = _dls_polish(arm, target, q0, tol, 300, 0.1, 0.2)
        if q is None:
            continue
        if all(np.max(np.abs(q - prev)) > 0.05 for prev in seen):
            seen.append(q)
            yield q


def ik_solutions(
    arm: ArmModel,
    target,
    seed: int = 0,
    max_solutions: int = 12,
    tol: float = 1e-3,
) -> list[np.ndarray]:
    """Up to max_solutions distinct IK solutions, in discovery order."""
    out = []
    for q in iter_ik_solutions(arm, target, seed=seed, tol=tol):
        out.append(q)
        if len(out) >= max_solutions:
            break
    return out


def solve_ik_clear(
    arm: ArmModel,
    target,
    obstacles: list["Obstacle"] | None = None,
    seed: int = 0,
    tol: float = 1e-3,
) -> np.ndarray | None:
    """IK solution preferring configs whose links clear the given obstacles.

    Falls back to the first solution found when every branch grazes an
    obstacle (the collision stage will then report it).
    """
    first: np.ndarray | None = None
    for n, q in enumerate(iter_ik_solutions(arm, target, seed=seed, tol=tol)):
        if first is None:
            first = q
        if not obstacles:
            return q
        if not collides([arm], q[None], obstacles):
            return q
        if n >= 11:
            break
    return first


def arm_capsules(arms: list[ArmModel], composite) -> list[list[Capsule]]:
    composite = np.asarray(composite, dtype=float)
    if composite.shape != (len(arms), 4):
        raise ValueError(f"composite config must have shape ({len(arms)}, 4)")
    return [forward_kinematics(arm, q)[1] for arm, q in zip(arms, composite)]


def _capsule_obstacle_distance(cap: Capsule, ob: Obstacle) -> float:
    if ob.kind == "aabb":
        return capsule_aabb_distance(cap.a, cap.b, cap.radius, ob.box_min, ob.box_max)
    return capsule_sphere_distance(cap.a, cap.b, cap.radius, ob.center, ob.radius)


def collides(arms: list[ArmModel], composite, obstacles: list[Obstacle] | None = None) -> CollisionReport:
    """All colliding pairs at a composite config: cross-arm links and link-obstacle.

    Self-collision within one arm is intentionally not checked (links are
    chained and adjacent-link contact is geometry, not a fault).
    """
    obstacles = obstacles or []
    per_arm = arm_capsules(arms, composite)
    report = CollisionReport()
    for i in range(len(arms)):
        for j in range(i + 1, len(arms)):
            for ca in per_arm[i]:
                for cb in per_arm[j]:
                    if capsule_capsule_distance(ca.a, ca.b, ca.radius, cb.a, cb.b, cb.radius) <= 0.0:
                        report.pairs.append((ca.label, cb.label))
    for caps in per_arm:
        for cap in caps:
            for ob in obstacles:
                if _capsule_obstacle_distance(cap, ob) <= 0.0:
                    label = f"obstacle:{ob.name}" if ob.name else "obstacle"
                    report.pairs.append((cap.label, label))
    return report


def segment_free(
    arms: list[ArmModel],
    x_a,
    x_b,
    obstacles: list[Obstacle] | None = None,
    max_step: float = 0.05,
) -> bool:
    """True iff straight joint-space interpolation from x_a to x_b stays free.

    Discretized so no joint moves more than max_step radians between checks;
    both endpoints are checked too.
    """
    x_a = np.asarray(x_a, dtype=float)
    x_b = np.asarray(x_b, dtype=float)
    span = float(np.max(np.abs(x_b - x_a))) if x_a.size else 0.0
    n = max(1, int(np.ceil(span / max_step)))
    for k in range(n + 1):
        x = x_a + (x_b - x_a) * (k / n)
        if collides(arms, x, obstacles):
            return False
    return True


# ---------------------------------------------------------------------------
# Vectorized helpers for the sampling-based planner. These mirror the scalar
# collision path but evaluate a whole batch of composite configs at once and
# apply a small safety margin, so anything they accept also passes the exact
# scalar check.


def fk_points_batch(arm: ArmModel, Q: np.ndarray) -> np.ndarray:
    """Chain points for a batch of configs: (B, 4) -> (B, 5, 3)."""
    Q = np.asarray(Q, dtype=float)
    psi = arm.base_yaw + Q[:, 0]
    xhat = np.stack([np.cos(psi), np.sin(psi), np.zeros_like(psi)], axis=1)
    zhat = np.array([0.0, 0.0, 1.0])
    phi = np.cumsum(Q[:, 1:], axis=1)  # (B, 3)
    dirs = [
        np.cos(phi[:, k])[:, None] * xhat + np.sin(phi[:, k])[:, None] * zhat
        for k in range(3)
    ]
    dirs.append(dirs[-1])
    pts = np.empty((Q.shape[0], 5, 3))
    pts[:, 0] = np.asarray(arm.base_pos, dtype=float)
    for i, (length, d) in enumerate(zip(arm.link_lengths, dirs)):
        pts[:, i + 1] = pts[:, i] + length * d
    return pts


def _seg_seg_dist_batch(p0, p1, q0, q1) -> np.ndarray:
    """Closest distance between segment batches; inputs (B, 3), output (B,)."""
    u = p1 - p0
    v = q1 - q0
    w = p0 - q0
    a = np.einsum("ij,ij->i", u, u)
    b = np.einsum("ij,ij->i", u, v)
    c = np.einsum("ij,ij->i", v, v)
    d = np.einsum("ij,ij->i", u, w)
    e = np.einsum("ij,ij->i", v, w)
    denom = a * c - b * b
    s = np.where(denom > 1e-12, np.clip((b * e - c * d) / np.where(denom > 1e-12, denom, 1.0), 0.0, 1.0), 0.0)
    t_nom = b * s + e
    t = np.clip(np.where(c > 1e-12, t_nom / np.where(c > 1e-12, c, 1.0), 0.0), 0.0, 1.0)
    # re-derive s for the clamped t
    s = np.clip(np.where(a > 1e-12, (b * t - d) / np.where(a > 1e-12, a, 1.0), 0.0), 0.0, 1.0)
    diff = (p0 + s[:, None] * u) - (q0 + t[:, None] * v)
    return np.linalg.norm(diff, axis=1)


def _seg_aabb_dist_batch(p0, p1, lo, hi, iters: int = 48, cutoff: float | None = None) -> np.ndarray:
    """Min distance from segment batch to one AABB via vector golden-section.

    With a cutoff, rows whose cheap lower bound (segment bounding box vs the
    AABB) already exceeds it keep that lower bound instead of the exact value;
    callers comparing against the cutoff get the same verdict either way.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    smin = np.minimum(p0, p1)
    smax = np.maximum(p0, p1)
    gap = np.maximum(np.maximum(lo - smax, smin - hi), 0.0)
    lower = np.sqrt(np.einsum("ij,ij->i", gap, gap))
    if cutoff is not None:
        need = lower <= cutoff
        if not need.any():
            return lower
        exact = _seg_aabb_exact(p0[need], p1[need], lo, hi, iters)
        out = lower
        out[need] = exact
        return out
    return _seg_aabb_exact(p0, p1, lo, hi, iters)


def _seg_aabb_exact(p0, p1, lo, hi, iters: int) -> np.ndarray:
    seg = p1 - p0

    def f(t):
        p = p0 + t[:, None] * seg
        d = np.maximum(np.maximum(lo - p, 0.0), p - hi)
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    left = np.zeros(p0.shape[0])
    right = np.ones(p0.shape[0])
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = right - inv_phi * (right - left)
    x2 = left + inv_phi * (right - left)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        take = f1 <= f2
        right = np.where(take, x2, right)
        left = np.where(take, left, x1)
        x1 = right - inv_phi * (right - left)
        x2 = left + inv_phi * (right - left)
        f1, f2 = f(x1), f(x2)
    return np.minimum(np.minimum(f(left), f(right)), np.minimum(f1, f2))


def batch_free_mask(
    arms: list[ArmModel],
    composites: np.ndarray,
    obstacles: list[Obstacle] | None = None,
    margin: float = 1e-4,
) -> np.ndarray:
    """(B, N, 4) -> (B,) True where the composite config is collision-free."""
    composites = np.asarray(composites, dtype=float)
    B = composites.shape[0]
    obstacles = obstacles or []
    pts = [fk_points_batch(arm, composites[:, i]) for i, arm in enumerate(arms)]
    free = np.ones(B, dtype=bool)
    for i in range(len(arms)):
        for j in range(i + 1, len(arms)):
            rr = arms[i].link_radius + arms[j].link_radius + margin
            for k in range(4):
                for l in range(4):
                    d = _seg_seg_dist_batch(pts[i][:, k], pts[i][:, k + 1], pts[j][:, l], pts[j][:, l + 1])
                    free &= d > rr
    for i, arm in enumerate(arms):
        for k in range(4):
            p0, p1 = pts[i][:, k], pts[i][:, k + 1]
            for ob in obstacles:
                if ob.kind == "aabb":
                    d = _seg_aabb_dist_batch(
                        p0, p1, ob.box_min, ob.box_max, cutoff=arm.link_radius + margin
                    )
                else:
                    center = np.asarray(ob.center, dtype=float)
                    seg = p1 - p0
                    denom = np.einsum("ij,ij->i", seg, seg)
                    t = np.clip(
                        np.einsum("ij,ij->i", center - p0, seg) / np.where(denom > 1e-12, denom, 1.0),
                        0.0,
                        1.0,
                    )
                    d = np.linalg.norm(p0 + t[:, None] * seg - center, axis=1) - ob.radius
                free &= d > arm.link_radius + margin
    return free


def edge_free_fast(
    arms: list[ArmModel],
    x_a,
    x_b,
    obstacles: list[Obstacle] | None = None,
    max_step: float = 0.05,
    margin: float = 1e-4,
) -> bool:
    """Batched version of segment_free with a safety margin (used by the planner)."""
    x_a = np.asarray(x_a, dtype=float)
    x_b = np.asarray(x_b, dtype=float)
    span = float(np.max(np.abs(x_b - x_a)))
    n = max(1, int(np.ceil(span / max_step)))
    ts = np.linspace(0.0, 1.0, n + 1)
    batch = x_a[None] + ts[:, None, None] * (x_b - x_a)[None]
    return bool(batch_free_mask(arms, batch, obstacles, margin).all())
