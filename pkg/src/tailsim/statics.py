"""Total potential energy of the tail under wire inputs, and its minima.

Energy terms:

* joint springs: ``sum_i 1/2 k_i q_i^2``
* displacement-commanded wires: a stiff bilateral elastic coupling
  ``1/2 k_cable (L_w(q) - (L_w(0) - delta))^2`` so that pushing transmits
  compression as well
* tension-commanded wires: ``T_w * L_w(q)`` (pulling only)
* contact penalties from the grasp scene, when present

Equilibria are local minima found by a damped quasi-Newton descent:
a Gauss-Newton model assembled from first-derivative outer products
(springs, cable stretch, contact penetrations), backtracking line search
(Armijo c = 1e-4, initial step 1.0), and projection onto the joint angle
limits each step.  Trial steps are capped so penalty barriers cannot be
jumped in a single line-search probe.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import backend
from .model import TailModel, check_configuration, pack_wires, wire_lengths

if TYPE_CHECKING:
    from .grasp import GraspScene

DISPLACEMENT = "displacement"
TENSION = "tension"

GRADIENT_TOLERANCE = 1e-8  # N*m
MAX_ITERATIONS = 500
ARMIJO_C = 1e-4
RAMP_STEP = 0.002  # m, continuation increment for displacement ramps
MAX_CONTACT_STEP = 0.1  # rad, per-iteration cap when contacts are possible

_EMPTY_OBSTACLES = np.zeros((0, 5))
_NO_OBJECT_PARAMS = np.zeros(3)


class DuplicateWireInputError(ValueError):
    """More than one input given for the same wire."""


@dataclass(frozen=True)
class WireInput:
    """Command for one wire: a held displacement or a pulling tension."""

    wire_id: int
    mode: str = DISPLACEMENT
    displacement: float = 0.0  # m, positive = pull, negative = push
    tension: float = 0.0  # N, >= 0
    clamped: bool = False

    def __post_init__(self):
        if self.mode not in (DISPLACEMENT, TENSION):
            raise ValueError(f"unknown wire input mode {self.mode!r}")
        if self.mode == TENSION and self.tension < 0.0:
            raise ValueError("tension must be non-negative")


def pull(wire_id: int, displacement: float, clamped: bool = False) -> WireInput:
    return WireInput(wire_id=wire_id, mode=DISPLACEMENT,
                     displacement=displacement, clamped=clamped)


def tension(wire_id: int, force: float) -> WireInput:
    return WireInput(wire_id=wire_id, mode=TENSION, tension=force)


@dataclass
class EquilibriumResult:
    """Converged (or best-effort) configuration with diagnostics."""

    q_star: np.ndarray
    energy: float
    gradient_norm: float
    iterations: int
    converged: bool
    wire_lengths: np.ndarray
    wire_tensions: np.ndarray
    limit_saturated: np.ndarray
    object_xy: np.ndarray | None = None
    energy_trace: list[float] | None = None
    solve_seconds: float = 0.0

    def diagnostics(self) -> dict:
        """JSON-ready solver record."""
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "energy_j": float(self.energy),
            "gradient_norm_nm": float(self.gradient_norm),
            "limit_saturated_joints": [int(i) for i in np.flatnonzero(self.limit_saturated)],
            "energy_trace": None if self.energy_trace is None
            else [float(e) for e in self.energy_trace],
        }


@dataclass(frozen=True)
class Problem:
    """Model + inputs + scene packed into kernel-ready arrays."""

    link_lengths: np.ndarray
    joint_k: np.ndarray
    base_rotation: float
    anchor_len: float
    wire_side: np.ndarray
    wire_term: np.ndarray
    wire_offsets: np.ndarray
    in_mode: np.ndarray
    in_ref: np.ndarray
    in_tension: np.ndarray
    k_cable: np.ndarray
    obj_kind: int
    obj_params: np.ndarray
    obj_free: int
    obstacles: np.ndarray
    k_contact: float
    tail_radius: float

    def eval(self, q: np.ndarray, obj_xy: np.ndarray):
        return backend.kernels().energy_grad(
            q, obj_xy,
            self.link_lengths, self.joint_k, self.base_rotation, self.anchor_len,
            self.wire_side, self.wire_term, self.wire_offsets,
            self.in_mode, self.in_ref, self.in_tension, self.k_cable,
            self.obj_kind, self.obj_params, self.obj_free,
            self.obstacles, self.k_contact, self.tail_radius)

    @property
    def contact_possible(self) -> bool:
        return self.obj_kind != 0 or self.obstacles.shape[0] > 0


def rest_wire_lengths(model: TailModel) -> np.ndarray:
    """Wire lengths in the straight configuration (the delta datum)."""
    return wire_lengths(model, np.zeros(model.joint_count))


def _pack_inputs(model: TailModel, inputs: Sequence[WireInput]):
    nw = len(model.wires)
    in_mode = np.zeros(nw, dtype=np.int64)
    in_ref = np.zeros(nw)
    in_tension = np.zeros(nw)
    ids = {w.wire_id: i for i, w in enumerate(model.wires)}
    rest = None
    for inp in inputs:
        if inp.wire_id not in ids:
            raise KeyError(f"no wire with id {inp.wire_id}")
        idx = ids[inp.wire_id]
        if in_mode[idx] != 0:
            raise DuplicateWireInputError(f"wire {inp.wire_id} commanded twice")
        if inp.mode == DISPLACEMENT:
            if rest is None:
                rest = rest_wire_lengths(model)
            in_mode[idx] = 1
            in_ref[idx] = rest[idx] - inp.displacement
        else:
            in_mode[idx] = 2
            in_tension[idx] = inp.tension
    k_cable = np.full(nw, model.cable_stiffness)
    return in_mode, in_ref, in_tension, k_cable


def build_problem(model: TailModel, inputs: Sequence[WireInput] = (),
                  scene: "GraspScene | None" = None,
                  object_free: bool = False) -> Problem:
    side, term, offsets = pack_wires(model)
    in_mode, in_ref, in_tension, k_cable = _pack_inputs(model, inputs)
    if scene is not None:
        obj_kind, obj_params, obstacles, k_contact = scene.kernel_arrays()
    else:
        obj_kind, obj_params = 0, _NO_OBJECT_PARAMS
        obstacles, k_contact = _EMPTY_OBSTACLES, 0.0
    return Problem(
        link_lengths=model.link_lengths, joint_k=model.joint_stiffness,
        base_rotation=model.base_rotation, anchor_len=model.base_anchor_length,
        wire_side=side, wire_term=term, wire_offsets=offsets,
        in_mode=in_mode, in_ref=in_ref, in_tension=in_tension, k_cable=k_cable,
        obj_kind=obj_kind, obj_params=obj_params, obj_free=int(object_free),
        obstacles=obstacles, k_contact=k_contact, tail_radius=model.tail_radius)


def _scene_object_xy(scene: "GraspScene | None") -> np.ndarray:
    if scene is not None and scene.object is not None:
        return np.asarray(scene.object.position, dtype=np.float64)
    return np.zeros(2)


def elastic_energy(model: TailModel, q: np.ndarray) -> float:
    """Joint-spring energy ``sum_i 1/2 k_i q_i^2``."""
    q = check_configuration(model, q)
    return 0.5 * float(np.dot(model.joint_stiffness * q, q))


def total_energy(model: TailModel, q: np.ndarray,
                 inputs: Sequence[WireInput] = (),
                 scene: "GraspScene | None" = None,
                 object_position: np.ndarray | None = None) -> float:
    q = check_configuration(model, q)
    problem = build_problem(model, inputs, scene)
    obj_xy = _scene_object_xy(scene) if object_position is None \
        else np.asarray(object_position, dtype=np.float64)
    energy, _, _ = problem.eval(q, obj_xy)
    return float(energy)


def energy_gradient(model: TailModel, q: np.ndarray,
                    inputs: Sequence[WireInput] = (),
                    scene: "GraspScene | None" = None,
                    object_position: np.ndarray | None = None) -> np.ndarray:
    """Analytic d(total_energy)/d(q_i), one entry per joint."""
    q = check_configuration(model, q)
    problem = build_problem(model, inputs, scene)
    obj_xy = _scene_object_xy(scene) if object_position is None \
        else np.asarray(object_position, dtype=np.float64)
    _, grad, _ = problem.eval(q, obj_xy)
    return grad


def _projected_gradient(x, g, lower, upper):
    pg = g.copy()
    lo = x <= lower
    hi = x >= upper
    pg[lo] = np.minimum(g[lo], 0.0)
    pg[hi] = np.maximum(g[hi], 0.0)
    return pg


def _gauss_newton_matrix(problem: Problem, q: np.ndarray, obj_xy: np.ndarray,
                         object_free: bool) -> np.ndarray:
    """SPD curvature model from first-derivative outer products.

    Springs contribute their exact diagonal; each displacement cable adds
    ``k_cable * dL dL^T``; each active contact adds ``k_contact * J J^T``
    with ``J_j = n . rot90(x - p_j)`` (and ``-n`` in the object block for
    object contacts)."""
    kern = backend.kernels()
    n = q.shape[0]
    nvar = n + 2 if object_free else n
    bmat = np.zeros((nvar, nvar))
    bmat[:n, :n] = np.diag(problem.joint_k)

    lengths, dl = kern.wire_grads(
        q, problem.link_lengths, problem.base_rotation, problem.anchor_len,
        problem.wire_side, problem.wire_term, problem.wire_offsets)
    for w in range(problem.wire_side.shape[0]):
        if problem.in_mode[w] == 1:
            m = int(problem.wire_term[w]) + 1
            bmat[:m, :m] += problem.k_cable[w] * np.outer(dl[w, :m], dl[w, :m])

    if problem.contact_possible:
        links, px, py, nx, ny, _, body = kern.contact_points(
            q, obj_xy, problem.link_lengths, problem.base_rotation,
            problem.obj_kind, problem.obj_params, problem.obstacles,
            problem.tail_radius)
        if links.shape[0] > 0:
            pts, _ = kern.chain_state(q, problem.link_lengths,
                                      problem.base_rotation)
            jac = np.zeros(nvar)
            for c in range(links.shape[0]):
                i = int(links[c])
                jac[:] = 0.0
                jac[: i + 1] = (nx[c] * (pts[: i + 1, 1] - py[c])
                                + ny[c] * (px[c] - pts[: i + 1, 0]))
                if object_free and body[c] == -1:
                    jac[n] = -nx[c]
                    jac[n + 1] = -ny[c]
                bmat += problem.k_contact * np.outer(jac, jac)
        if object_free and problem.obj_kind == 1:
            for ob in range(problem.obstacles.shape[0]):
                x1, y1, x2, y2, rad = problem.obstacles[ob]
                from ._kernels_numpy import _sd_capsule
                d, nrm = _sd_capsule(obj_xy[None, :], x1, y1, x2, y2,
                                     rad + problem.obj_params[0])
                if d[0] < 0.0:
                    jac = np.zeros(nvar)
                    jac[n:] = nrm[0]
                    bmat += problem.k_contact * np.outer(jac, jac)

    if object_free:
        # keep the object block invertible when nothing touches the object
        ridge = max(problem.k_contact, 1.0) * 1e-9
        bmat[n, n] += ridge
        bmat[n + 1, n + 1] += ridge
    return bmat


def _fd_curvature(fun, x, g0, h=1e-7):
    """Forward-difference curvature of the analytic gradient (polish mode)."""
    n = x.shape[0]
    bmat = np.empty((n, n))
    for i in range(n):
        xp = x.copy()
        xp[i] += h
        _, gp = fun(xp)
        bmat[:, i] = (gp - g0) / h
    bmat = 0.5 * (bmat + bmat.T)
    # shift onto the SPD cone if the true curvature is indefinite here
    tau = 0.0
    bump = max(1e-9, 1e-9 * float(np.max(np.abs(np.diag(bmat)))))
    for _ in range(40):
        try:
            np.linalg.cholesky(bmat + tau * np.eye(n))
            break
        except np.linalg.LinAlgError:
            tau = bump if tau == 0.0 else 2.0 * tau
    if tau > 0.0:
        bmat += tau * np.eye(n)
    return bmat


def _minimize(fun, hess_fn, x0, lower, upper, max_iter, gtol, keep_trace,
              max_step=np.inf):
    """Projected damped quasi-Newton with Armijo backtracking.

    ``fun`` returns (energy, gradient); ``hess_fn(x)`` an SPD Gauss-Newton
    curvature model from first derivatives.  When that model stalls (its
    dropped second-order terms limit it to a linear rate), the loop
    switches to a finite-difference Newton polish.  The accepted-iterate
    energy sequence is non-increasing.
    """
    x = np.clip(x0, lower, upper)
    energy, g = fun(x)
    trace = [energy] if keep_trace else None
    iterations = 0
    gnorm = float(np.linalg.norm(_projected_gradient(x, g, lower, upper)))
    polish = False
    tried_steepest = False

    while gnorm > gtol and iterations < max_iter:
        iterations += 1
        bmat = _fd_curvature(fun, x, g) if polish else hess_fn(x)
        # solve in the free subspace: coordinates pinned at a limit with the
        # gradient pushing outward stay put this iteration
        pinned = ((x <= lower) & (g >= 0.0)) | ((x >= upper) & (g <= 0.0))
        free = ~pinned
        direction = np.zeros_like(x)
        try:
            direction[free] = -np.linalg.solve(
                bmat[np.ix_(free, free)], g[free])
        except np.linalg.LinAlgError:
            direction[free] = -g[free] / np.diag(bmat)[free]
        if float(g @ direction) >= 0.0:
            direction[:] = 0.0
            direction[free] = -g[free] / np.diag(bmat)[free]
        biggest = float(np.max(np.abs(direction)))
        if biggest > max_step:
            direction *= max_step / biggest

        alpha = 1.0
        accepted = False
        x_new = x
        e_new, g_new = energy, g
        # below this, a predicted decrease is smaller than the float64
        # resolution of the energy itself; fall back to plain non-increase
        eps_energy = 8.0 * np.finfo(np.float64).eps * max(1.0, abs(energy))
        for _ in range(60):
            x_try = np.clip(x + alpha * direction, lower, upper)
            step = x_try - x
            if float(np.max(np.abs(step))) < 1e-16:
                break
            e_try, g_try = fun(x_try)
            gs = float(g @ step)
            if gs < -eps_energy:
                ok = e_try <= energy + ARMIJO_C * gs
            else:
                ok = e_try <= energy or (
                    e_try <= energy + eps_energy
                    and float(np.linalg.norm(
                        _projected_gradient(x_try, g_try, lower, upper))) < gnorm)
            if ok:
                accepted = True
                x_new, e_new, g_new = x_try, e_try, g_try
                break
            alpha *= 0.5

        if not accepted:
            if not polish:
                polish = True
                continue
            if not tried_steepest:
                # curvature model unreliable (e.g. at a contact-activation
                # kink): probe straight down the projected gradient once
                tried_steepest = True
                pg = _projected_gradient(x, g, lower, upper)
                for expo in range(4, 40, 4):
                    x_try = np.clip(x - (2.0 ** -expo) * pg, lower, upper)
                    e_try, g_try = fun(x_try)
                    if e_try <= energy + eps_energy and float(np.linalg.norm(
                            _projected_gradient(x_try, g_try, lower, upper))) < gnorm:
                        x, energy, g = x_try, e_try, g_try
                        gnorm = float(np.linalg.norm(
                            _projected_gradient(x, g, lower, upper)))
                        break
                continue
            break  # no resolvable progress along a descent direction
        x, energy, g = x_new, e_new, g_new
        tried_steepest = False
        if keep_trace:
            trace.append(energy)
        gnorm = float(np.linalg.norm(_projected_gradient(x, g, lower, upper)))
        if not polish and gnorm <= 1e-4:
            polish = True  # quadratic cleanup once inside the basin

    return x, energy, g, gnorm, iterations, gnorm <= gtol, trace


def solve_equilibrium(model: TailModel,
                      inputs: Sequence[WireInput] = (),
                      scene: "GraspScene | None" = None,
                      q0: np.ndarray | None = None,
                      *,
                      object_free: bool = False,
                      object_xy: np.ndarray | None = None,
                      max_iterations: int = MAX_ITERATIONS,
                      gradient_tolerance: float = GRADIENT_TOLERANCE,
                      keep_trace: bool = False) -> EquilibriumResult:
    """Minimize the total energy from ``q0`` (straight tail by default).

    Returns the best iterate with ``converged=False`` instead of raising
    when the iteration cap is reached.  With ``object_free`` the scene
    object's position joins the unknowns (circles only), which lets a
    grasped object be carried by the tail.
    """
    n = model.joint_count
    q0 = np.zeros(n) if q0 is None else check_configuration(model, q0).copy()
    problem = build_problem(model, inputs, scene, object_free=object_free)
    start_xy = _scene_object_xy(scene) if object_xy is None \
        else np.asarray(object_xy, dtype=np.float64)
    if object_free and problem.obj_kind == 2:
        raise ValueError("free-object solves support circles only")

    limit = model.joint_angle_limit
    max_step = MAX_CONTACT_STEP if problem.contact_possible else np.inf

    t0 = time.perf_counter()
    if object_free and problem.obj_kind != 0:
        x0 = np.concatenate([q0, start_xy])
        lower = np.concatenate([np.full(n, -limit), np.full(2, -np.inf)])
        upper = np.concatenate([np.full(n, limit), np.full(2, np.inf)])

        def fun(x):
            energy, g_q, g_obj = problem.eval(x[:n], x[n:])
            return energy, np.concatenate([g_q, g_obj])

        def hess_fn(x):
            return _gauss_newton_matrix(problem, x[:n], x[n:], True)

        x, energy, _, gnorm, iters, converged, trace = _minimize(
            fun, hess_fn, x0, lower, upper, max_iterations,
            gradient_tolerance, keep_trace, max_step=max_step)
        q_star, final_xy = x[:n], x[n:]
    else:
        lower = np.full(n, -limit)
        upper = np.full(n, limit)

        def fun(q):
            energy, g_q, _ = problem.eval(q, start_xy)
            return energy, g_q

        def hess_fn(q):
            return _gauss_newton_matrix(problem, q, start_xy, False)

        q_star, energy, _, gnorm, iters, converged, trace = _minimize(
            fun, hess_fn, q0, lower, upper, max_iterations,
            gradient_tolerance, keep_trace, max_step=max_step)
        final_xy = start_xy

    lengths = wire_lengths(model, q_star)
    tensions = np.zeros(len(model.wires))
    for w in range(len(model.wires)):
        if problem.in_mode[w] == 1:
            tensions[w] = problem.k_cable[w] * (lengths[w] - problem.in_ref[w])
        elif problem.in_mode[w] == 2:
            tensions[w] = problem.in_tension[w]

    return EquilibriumResult(
        q_star=q_star,
        energy=float(energy),
        gradient_norm=gnorm,
        iterations=iters,
        converged=bool(converged),
        wire_lengths=lengths,
        wire_tensions=tensions,
        limit_saturated=np.abs(q_star) >= limit - 1e-12,
        object_xy=final_xy if (scene is not None and scene.object is not None) else None,
        energy_trace=trace,
        solve_seconds=time.perf_counter() - t0,
    )


def ramp_displacements(model: TailModel,
                       targets: dict[int, float],
                       scene: "GraspScene | None" = None,
                       q0: np.ndarray | None = None,
                       *,
                       start: dict[int, float] | None = None,
                       step: float = RAMP_STEP,
                       object_free: bool = False,
                       object_xy: np.ndarray | None = None,
                       extra_inputs: Sequence[WireInput] = ()) -> list[EquilibriumResult]:
    """Continuation: walk displacement targets in ``step`` increments.

    Each increment is solved warm-started from the previous equilibrium;
    returns the result of every increment (last one is the final state).
    """
    start = dict(start or {})
    for wid in targets:
        start.setdefault(wid, 0.0)
    largest = max((abs(targets[w] - start[w]) for w in targets), default=0.0)
    n_steps = max(1, math.ceil(largest / step - 1e-12))
    q = np.zeros(model.joint_count) if q0 is None else q0
    xy = object_xy
    results = []
    for k in range(1, n_steps + 1):
        frac = k / n_steps
        inputs = [pull(w, start[w] + frac * (targets[w] - start[w]))
                  for w in sorted(targets)]
        inputs.extend(extra_inputs)
        res = solve_equilibrium(model, inputs, scene, q,
                                object_free=object_free, object_xy=xy)
        q = res.q_star
        if object_free and res.object_xy is not None:
            xy = res.object_xy
        results.append(res)
    return results


def motion_signature(model: TailModel, result: EquilibriumResult) -> dict[str, float]:
    """Mean joint bend per region (rad); positive = ventral."""
    if not result.converged:
        raise ValueError("motion signature requires a converged result")
    out = {}
    for region in model.regions:
        sl = model.region_slice(region.name)
        out[region.name] = float(np.mean(result.q_star[sl]))
    return out
