"""Objects, obstacles, penalty contact, and quasi-static pull-out measurement.

Contact model: each link is sampled at its endpoints and midpoint; a sample
point penetrating the object or an obstacle produces a normal force
``N = k_contact * penetration`` along the outward normal.  Friction enters
only in the pull-out force balance, at the slipping limit (kinetic Coulomb),
opposing the prescribed object motion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import backend
from .model import TailModel, check_configuration, forward_kinematics
from .statics import (EquilibriumResult, WireInput, pull, ramp_displacements,
                      solve_equilibrium)

CIRCLE = "circle"
POLYGON = "polygon"

DEFAULT_CONTACT_STIFFNESS = 5.0e3  # N/m
DEFAULT_MU_PAD = 0.8
DEFAULT_MU_PLASTIC = 0.3
DEFAULT_WALL_RADIUS = 0.005  # m, half-thickness of obstacle segments
PULL_STEP = 5.0e-4  # m, object translation per quasi-static step
PULL_STOP_FRACTION = 0.01  # trace ends below this fraction of the running peak
_PEAK_FLOOR = 1e-6  # N, ignore the stop rule until the peak clears this


class NoContactError(RuntimeError):
    """Grasp ramp finished without touching the object."""


class EmptyGraspError(RuntimeError):
    """Pull-out requested from a configuration with no object contact."""


@dataclass(frozen=True)
class ShapeSpec:
    """A circle or regular polygon; ``diameter`` circumscribes polygons."""

    kind: str
    diameter: float  # m
    position: tuple[float, float]
    rotation: float = 0.0  # rad
    side_count: int | None = None

    def __post_init__(self):
        if self.kind not in (CIRCLE, POLYGON):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.kind == POLYGON:
            if self.side_count is None or self.side_count < 3:
                raise ValueError("polygons need side_count >= 3")
        if self.diameter <= 0:
            raise ValueError("diameter must be positive")

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter

    @property
    def side_length(self) -> float:
        """Edge length of the inscribed polygon, D*sin(pi/n)."""
        if self.kind != POLYGON:
            raise ValueError("side_length only defined for polygons")
        return self.diameter * math.sin(math.pi / self.side_count)

    def moved_to(self, position) -> "ShapeSpec":
        return replace(self, position=(float(position[0]), float(position[1])))

    def kernel_params(self) -> tuple[int, np.ndarray]:
        kind = 1 if self.kind == CIRCLE else 2
        nsides = float(self.side_count or 0)
        return kind, np.array([self.radius, self.rotation, nsides])


@dataclass(frozen=True)
class Obstacle:
    """Static wall segment, modelled as a capsule of small half-thickness."""

    p1: tuple[float, float]
    p2: tuple[float, float]
    radius: float = DEFAULT_WALL_RADIUS


@dataclass(frozen=True)
class GraspScene:
    """Object + obstacles + contact/friction parameters for one scenario."""

    object: ShapeSpec | None = None
    obstacles: tuple[Obstacle, ...] = ()
    contact_stiffness: float = DEFAULT_CONTACT_STIFFNESS
    mu_pad: float = DEFAULT_MU_PAD
    mu_plastic: float = DEFAULT_MU_PLASTIC
    pad_joint_range: tuple[int, int] = (16, 37)  # 0-based, inclusive
    object_free: bool = False

    def __post_init__(self):
        for mu in (self.mu_pad, self.mu_plastic):
            if not 0.0 <= mu <= 2.0:
                raise ValueError("friction coefficients must lie in [0, 2]")
        if self.contact_stiffness <= 0:
            raise ValueError("contact stiffness must be positive")

    def kernel_arrays(self):
        if self.object is not None:
            kind, params = self.object.kernel_params()
        else:
            kind, params = 0, np.zeros(3)
        if self.obstacles:
            rows = np.array([[o.p1[0], o.p1[1], o.p2[0], o.p2[1], o.radius]
                             for o in self.obstacles])
        else:
            rows = np.zeros((0, 5))
        return kind, params, rows, self.contact_stiffness

    def friction_for_link(self, link_index: int) -> float:
        lo, hi = self.pad_joint_range
        return self.mu_pad if lo <= link_index <= hi else self.mu_plastic

    def with_object_at(self, position) -> "GraspScene":
        if self.object is None:
            raise ValueError("scene has no object")
        return replace(self, object=self.object.moved_to(position))


@dataclass(frozen=True)
class Contact:
    """One penetrating link sample against the object or an obstacle."""

    link_index: int
    point: tuple[float, float]
    normal: tuple[float, float]  # outward from the contacted body
    penetration: float  # m, >= 0
    normal_force: float  # N = k_contact * penetration
    friction_coefficient: float
    body: int  # -1 = object, otherwise obstacle row index


ContactSet = tuple[Contact, ...]


@dataclass
class PullOutTrace:
    """Force-vs-displacement record of a quasi-static object extraction."""

    displacements: np.ndarray  # m along the pull direction
    forces: np.ndarray  # N restoring along the pull direction
    pull_direction: tuple[float, float]
    peak_force: float

    def samples(self) -> list[tuple[float, float]]:
        return [(float(s), float(f))
                for s, f in zip(self.displacements, self.forces)]

    def to_csv(self) -> str:
        lines = ["s_mm,force_N"]
        lines += [f"{s * 1000.0!r},{f!r}" for s, f in self.samples()]
        return "\n".join(lines) + "\n"


def signed_distance(shape: ShapeSpec, point) -> tuple[float, np.ndarray]:
    """Exact signed distance (negative inside) and outward normal."""
    from . import _kernels_numpy as ref  # single-point query, fallback is fine
    p = np.asarray(point, dtype=np.float64).reshape(1, 2)
    cx, cy = shape.position
    if shape.kind == CIRCLE:
        d, n = ref._sd_circle(p, cx, cy, shape.radius)
    else:
        d, n = ref._sd_polygon(p, cx, cy, shape.radius, shape.rotation,
                               shape.side_count)
    return float(d[0]), n[0]


def contact_forces(model: TailModel, q: np.ndarray, scene: GraspScene,
                   object_xy: np.ndarray | None = None) -> ContactSet:
    """All penalty contacts of the chain at configuration ``q``."""
    q = check_configuration(model, q)
    kind, params, obstacles, k_contact = scene.kernel_arrays()
    if kind == 0 and obstacles.shape[0] == 0:
        return ()
    xy = np.asarray(object_xy, dtype=np.float64) if object_xy is not None \
        else (np.asarray(scene.object.position) if scene.object is not None
              else np.zeros(2))
    links, px, py, nx, ny, pen, body = backend.kernels().contact_points(
        q, xy, model.link_lengths, model.base_rotation, kind, params, obstacles,
        model.tail_radius)
    return tuple(
        Contact(link_index=int(links[i]),
                point=(float(px[i]), float(py[i])),
                normal=(float(nx[i]), float(ny[i])),
                penetration=float(pen[i]),
                normal_force=float(k_contact * pen[i]),
                friction_coefficient=scene.friction_for_link(int(links[i])),
                body=int(body[i]))
        for i in range(links.shape[0]))


def object_contacts(contacts: ContactSet) -> ContactSet:
    return tuple(c for c in contacts if c.body == -1)


def contact_arc_span(contacts: ContactSet, center) -> float:
    """Angular span (rad) of object contacts as seen from ``center``."""
    obj = object_contacts(contacts)
    if len(obj) < 2:
        return 0.0
    ang = np.sort(np.array([
        math.atan2(c.point[1] - center[1], c.point[0] - center[0])
        for c in obj]))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2.0 * math.pi]]))
    return float(2.0 * math.pi - np.max(gaps))


@dataclass
class GraspResult:
    """Final wrap equilibrium plus the inputs re-issued as clamped."""

    equilibrium: EquilibriumResult
    contacts: ContactSet
    clamped_inputs: tuple[WireInput, ...]
    scene: GraspScene


def solve_grasp(model: TailModel, wire_inputs: Sequence[WireInput],
                scene: GraspScene, q0: np.ndarray | None = None,
                *, ramp_step: float = 0.002) -> GraspResult:
    """Wrap the tail around the scene object by ramping the commanded wires.

    Displacement commands are walked in ``ramp_step`` increments with warm
    starts; the returned inputs carry ``clamped=True``.  Raises
    :class:`NoContactError` if the finished wrap never touches the object.
    """
    if scene.object is None:
        raise ValueError("solve_grasp needs a scene with an object")
    targets = {}
    extra = []
    for inp in wire_inputs:
        if inp.mode == "displacement":
            targets[inp.wire_id] = inp.displacement
        else:
            extra.append(inp)
    if not targets:
        raise ValueError("solve_grasp needs at least one displacement command")
    results = ramp_displacements(model, targets, scene, q0,
                                 step=ramp_step, extra_inputs=extra)
    final = results[-1]
    contacts = contact_forces(model, final.q_star, scene)
    if not object_contacts(contacts):
        raise NoContactError(
            f"no contact with the object after ramping wires {sorted(targets)}")
    clamped = tuple(
        [pull(w, targets[w], clamped=True) for w in sorted(targets)] + extra)
    return GraspResult(equilibrium=final, contacts=contacts,
                       clamped_inputs=clamped, scene=scene)


def default_pull_direction(scene: GraspScene) -> np.ndarray:
    """From the tail base through the object center, pointing away."""
    center = np.asarray(scene.object.position, dtype=np.float64)
    norm = float(np.linalg.norm(center))
    if norm < 1e-12:
        return np.array([1.0, 0.0])
    return center / norm


def restoring_force(contacts: ContactSet, direction: np.ndarray) -> float:
    """Force the puller must apply along ``direction`` to hold the object.

    Normal terms resist where the object presses into the tail
    (``normal . direction > 0``); friction acts at the slipping limit and
    always opposes the motion.
    """
    total = 0.0
    for c in object_contacts(contacts):
        ndotd = c.normal[0] * direction[0] + c.normal[1] * direction[1]
        tangential = math.sqrt(max(0.0, 1.0 - ndotd * ndotd))
        total += c.normal_force * (ndotd + c.friction_coefficient * tangential)
    return total


def pull_out_force(model: TailModel, clamped_inputs: Sequence[WireInput],
                   scene: GraspScene, q_grasped: np.ndarray,
                   direction: np.ndarray | None = None,
                   *, step: float = PULL_STEP,
                   max_steps: int = 600) -> PullOutTrace:
    """Quasi-static extraction: translate the object along ``direction`` in
    ``step`` increments, re-solving the clamped tail each time, and record
    the restoring force.  The trace ends when the force falls below 1% of
    the running peak or all object contact is lost."""
    if scene.object is None:
        raise ValueError("pull_out_force needs a scene with an object")
    q = check_configuration(model, q_grasped)
    contacts = contact_forces(model, q, scene)
    if not object_contacts(contacts):
        raise EmptyGraspError("pull-out requested with no object contact")
    d = default_pull_direction(scene) if direction is None \
        else np.asarray(direction, dtype=np.float64)
    d = d / float(np.linalg.norm(d))

    center0 = np.asarray(scene.object.position, dtype=np.float64)
    displacements = [0.0]
    forces = [restoring_force(contacts, d)]
    peak = forces[0]

    for k in range(1, max_steps + 1):
        s = k * step
        center = center0 + s * d
        res = solve_equilibrium(model, clamped_inputs, scene, q,
                                object_xy=center)
        q = res.q_star
        contacts = contact_forces(model, q, scene, object_xy=center)
        force = restoring_force(contacts, d)
        displacements.append(s)
        forces.append(force)
        peak = max(peak, force)
        if not object_contacts(contacts):
            break
        if peak > _PEAK_FLOOR and force < PULL_STOP_FRACTION * peak:
            break

    return PullOutTrace(
        displacements=np.array(displacements),
        forces=np.array(forces),
        pull_direction=(float(d[0]), float(d[1])),
        peak_force=float(peak),
    )


def scene_from_config(config: dict) -> GraspScene:
    """Parse a scene JSON document (lengths in cm, explicit in field names)."""
    obj = None
    if config.get("object"):
        entry = config["object"]
        kind = entry["kind"]
        if kind not in (CIRCLE, POLYGON):
            raise ValueError(f"unknown object kind {kind!r}")
        obj = ShapeSpec(
            kind=kind,
            diameter=float(entry["diameter_cm"]) / 100.0,
            position=(float(entry["pose"]["x_cm"]) / 100.0,
                      float(entry["pose"]["y_cm"]) / 100.0),
            rotation=math.radians(float(entry["pose"].get("rot_deg", 0.0))),
            side_count=int(entry["sides"]) if entry.get("sides") else None,
        )
    obstacles = tuple(
        Obstacle(p1=(float(seg["x1_cm"]) / 100.0, float(seg["y1_cm"]) / 100.0),
                 p2=(float(seg["x2_cm"]) / 100.0, float(seg["y2_cm"]) / 100.0),
                 radius=float(seg.get("radius_cm", DEFAULT_WALL_RADIUS * 100.0)) / 100.0)
        for seg in config.get("obstacles", ()))
    friction = config.get("friction", {})
    pad = config.get("pad_joint_range", [16, 37])
    return GraspScene(
        object=obj,
        obstacles=obstacles,
        contact_stiffness=float(config.get("contact_stiffness_n_per_m",
                                           DEFAULT_CONTACT_STIFFNESS)),
        mu_pad=float(friction.get("mu_pad", DEFAULT_MU_PAD)),
        mu_plastic=float(friction.get("mu_plastic", DEFAULT_MU_PLASTIC)),
        pad_joint_range=(int(pad[0]), int(pad[1])),
        object_free=bool(config.get("object_free", False)),
    )


def scene_to_config(scene: GraspScene) -> dict:
    obj = None
    if scene.object is not None:
        obj = {
            "kind": scene.object.kind,
            "diameter_cm": scene.object.diameter * 100.0,
            "pose": {"x_cm": scene.object.position[0] * 100.0,
                     "y_cm": scene.object.position[1] * 100.0,
                     "rot_deg": math.degrees(scene.object.rotation)},
        }
        if scene.object.side_count:
            obj["sides"] = scene.object.side_count
    return {
        "object": obj,
        "obstacles": [
            {"x1_cm": o.p1[0] * 100.0, "y1_cm": o.p1[1] * 100.0,
             "x2_cm": o.p2[0] * 100.0, "y2_cm": o.p2[1] * 100.0,
             "radius_cm": o.radius * 100.0}
            for o in scene.obstacles],
        "friction": {"mu_pad": scene.mu_pad, "mu_plastic": scene.mu_plastic},
        "contact_stiffness_n_per_m": scene.contact_stiffness,
        "pad_joint_range": list(scene.pad_joint_range),
        "object_free": scene.object_free,
    }


def load_scene(path: str | Path) -> GraspScene:
    with open(path, encoding="utf-8") as f:
        return scene_from_config(json.load(f))
