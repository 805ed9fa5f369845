"""Quantitative studies: pull-out force sweeps, linear fitting, parameter
calibration, and scripted demonstration scenarios.

The sweep scenes place the object inside the pocket formed by the wire-3
curl and pull it out through the soft tip gate; pose, grasp depth, and pull
direction ship as scene-template data (see ``DEFAULT_SWEEP_TEMPLATE``).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import DEFAULT_MODEL_CONFIG, TailModel, model_from_config
from .statics import pull, ramp_displacements, solve_equilibrium
from .grasp import (CIRCLE, POLYGON, EmptyGraspError, GraspScene,
                    NoContactError, Obstacle, PullOutTrace, ShapeSpec,
                    contact_forces, object_contacts, pull_out_force,
                    scene_from_config, solve_grasp)

# Measured pull-force trend line: F [N] = REFERENCE_SLOPE * d [cm] + REFERENCE_INTERCEPT
REFERENCE_SLOPE = 0.461
REFERENCE_INTERCEPT = -2.057

SWEEP_DIAMETERS_CM = (4.9, 5.4, 5.8, 6.2, 6.6, 7.0)
SHAPE_SIDE_COUNTS = (3, 4, 5, None)  # None = circle
SHAPE_CIRCUMDIAMETER_CM = 9.0

# Object masses (g) recorded as metadata; weights act out of plane and are
# already subtracted from the measured forces, so they exert no force here.
CUP_MASSES_G = {4.9: 13.0, 5.4: 15.8, 5.8: 18.3, 6.2: 19.7, 6.6: 23.9, 7.0: 26.5}
SHAPE_MASSES_G = {3: 22.6, 4: 35.1, 5: 40.4, None: 55.2}

# Shared grasp policy for the sweeps.  Each condition records where the
# object was set down and how far wire 3 was pulled to complete the wrap
# (the placement table an operator would use); the pull leaves through the
# wrap mouth, which for the wire-3 curl faces down-left of the object.
DEFAULT_SWEEP_TEMPLATE = {
    "grasp_wire": 3,
    "pull_direction_deg": 215.0,
    "mu_pad": 0.8,
    "mu_plastic": 0.3,
    "conditions": {
        "circle_4.9": {"pose_cm": [58.0, 8.0], "delta_mm": 50.0},
        "circle_5.4": {"pose_cm": [46.0, 12.0], "delta_mm": 50.0},
        "circle_5.8": {"pose_cm": [46.0, 6.0], "delta_mm": 50.0},
        "circle_6.2": {"pose_cm": [50.0, 8.0], "delta_mm": 50.0},
        "circle_6.6": {"pose_cm": [62.0, 8.0], "delta_mm": 54.0},
        "circle_7": {"pose_cm": [60.0, 6.0], "delta_mm": 56.0},
        "circle_9": {"pose_cm": [58.0, 15.0], "delta_mm": 50.0},
        "polygon3_9": {"pose_cm": [50.0, 14.0], "delta_mm": 50.0},
        "polygon4_9": {"pose_cm": [50.0, 11.0], "delta_mm": 58.0},
        "polygon5_9": {"pose_cm": [50.0, 17.0], "delta_mm": 54.0},
    },
}

_CONDITION_ANCHORS = (4.9, 5.4, 5.8, 6.2, 6.6, 7.0, 9.0)


def condition_for(diameter_cm: float, side_count: int | None,
                  template: dict) -> dict:
    """Placement entry for one object; circles interpolate between anchors."""
    conditions = template["conditions"]
    if side_count is not None:
        key = f"polygon{side_count}_{diameter_cm:g}"
        if key in conditions:
            return conditions[key]
        # fall through to the circle policy of the same circumdiameter
    key = f"circle_{diameter_cm:g}"
    if key in conditions:
        return conditions[key]
    anchors = [a for a in _CONDITION_ANCHORS if f"circle_{a:g}" in conditions]
    if not anchors:
        raise KeyError("sweep template has no circle placement anchors")
    d = min(max(diameter_cm, anchors[0]), anchors[-1])
    hi = next((a for a in anchors if a >= d), anchors[-1])
    lo = next((a for a in reversed(anchors) if a <= d), anchors[0])
    clo, chi = conditions[f"circle_{lo:g}"], conditions[f"circle_{hi:g}"]
    t = 0.0 if hi == lo else (d - lo) / (hi - lo)
    return {
        "pose_cm": [clo["pose_cm"][0] + t * (chi["pose_cm"][0] - clo["pose_cm"][0]),
                    clo["pose_cm"][1] + t * (chi["pose_cm"][1] - clo["pose_cm"][1])],
        "delta_mm": clo["delta_mm"] + t * (chi["delta_mm"] - clo["delta_mm"]),
    }

DATA_DIR = Path(__file__).parent / "data"
SCENARIO_DIR = DATA_DIR / "scenarios"
DEFAULT_CALIBRATION_PATH = DATA_DIR / "calibration.json"


class DegenerateInputError(ValueError):
    """Fewer than two distinct abscissae for a line fit."""


@dataclass
class SweepRow:
    label: str
    value: float  # diameter (cm) or side count (0 = circle)
    force_n: float | None
    failed: bool = False
    error: str | None = None


@dataclass
class SweepResult:
    kind: str  # "diameter" | "shape"
    rows: list[SweepRow]
    metadata: dict

    def forces(self) -> list[float | None]:
        return [r.force_n for r in self.rows]

    def to_csv(self) -> str:
        head = "d_cm,F_N" if self.kind == "diameter" else "sides,F_N"
        lines = [head]
        for r in self.rows:
            val = f"{r.value!r}" if self.kind == "diameter" else f"{int(r.value)}"
            lines.append(f"{val},{'' if r.force_n is None else repr(r.force_n)}")
        return "\n".join(lines) + "\n"


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared: float

    def to_json(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r2": self.r_squared}


def linear_fit(points: Sequence[tuple[float, float]]) -> LinearFit:
    """Ordinary least squares through (d, F) points."""
    if len({round(p[0], 12) for p in points}) < 2:
        raise DegenerateInputError("need at least two distinct abscissae")
    x = np.array([p[0] for p in points], dtype=np.float64)
    y = np.array([p[1] for p in points], dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LinearFit(slope=slope, intercept=intercept, r_squared=r2)


def reference_force(diameter_cm: float) -> float:
    """The measured trend line evaluated at one diameter."""
    return REFERENCE_SLOPE * diameter_cm + REFERENCE_INTERCEPT


def default_polygon_rotation(side_count: int) -> float:
    """Flat side facing the negative-y direction (resting orientation)."""
    return -math.pi / 2.0 - math.pi / side_count


def sweep_object(diameter_cm: float, side_count: int | None,
                 template: dict) -> ShapeSpec:
    cond = condition_for(diameter_cm, side_count, template)
    pose = (cond["pose_cm"][0] / 100.0, cond["pose_cm"][1] / 100.0)
    if side_count is None:
        return ShapeSpec(CIRCLE, diameter_cm / 100.0, pose)
    return ShapeSpec(POLYGON, diameter_cm / 100.0, pose,
                     rotation=default_polygon_rotation(side_count),
                     side_count=side_count)


def sweep_scene(obj: ShapeSpec, template: dict) -> GraspScene:
    return GraspScene(object=obj, mu_pad=float(template["mu_pad"]),
                      mu_plastic=float(template["mu_plastic"]))


def pull_direction(template: dict) -> np.ndarray:
    ang = math.radians(float(template["pull_direction_deg"]))
    return np.array([math.cos(ang), math.sin(ang)])


def measure_pull_out(model: TailModel, scene: GraspScene,
                     template: dict) -> PullOutTrace:
    """Grasp per the template policy, clamp, and run the extraction."""
    obj = scene.object
    cond = condition_for(obj.diameter * 100.0,
                         obj.side_count if obj.kind == POLYGON else None,
                         template)
    delta = float(cond["delta_mm"]) / 1000.0
    wire = int(template["grasp_wire"])
    grasp = solve_grasp(model, [pull(wire, delta)], scene)
    return pull_out_force(model, grasp.clamped_inputs, scene,
                          grasp.equilibrium.q_star, pull_direction(template))


def _model_fingerprint(model: TailModel) -> str:
    import hashlib
    parts = [repr(model.link_lengths.tolist()),
             repr(model.joint_stiffness.tolist()),
             repr(model.kappa), repr(model.joint_angle_limit),
             repr(model.cable_stiffness), repr(model.tail_radius)]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


def _sweep(model: TailModel, kind: str, conditions, template, jobs: int):
    template = {**DEFAULT_SWEEP_TEMPLATE, **(template or {})}

    def run_one(cond):
        label, value, diameter_cm, side_count = cond
        obj = sweep_object(diameter_cm, side_count, template)
        scene = sweep_scene(obj, template)
        try:
            trace = measure_pull_out(model, scene, template)
            return SweepRow(label=label, value=value,
                            force_n=float(trace.peak_force))
        except (NoContactError, EmptyGraspError) as exc:
            return SweepRow(label=label, value=value, force_n=None,
                            failed=True, error=type(exc).__name__)

    if jobs > 1 and len(conditions) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(run_one, conditions))
    else:
        rows = [run_one(c) for c in conditions]

    metadata = {
        "kind": kind,
        "model_hash": _model_fingerprint(model),
        "kappa": model.kappa,
        "mu_pad": template["mu_pad"],
        "mu_plastic": template["mu_plastic"],
        "grasp_wire": template["grasp_wire"],
        "pull_direction_deg": template["pull_direction_deg"],
        "conditions": template["conditions"],
    }
    return SweepResult(kind=kind, rows=rows, metadata=metadata)


def sweep_diameter(model: TailModel,
                   diameters_cm: Sequence[float] = SWEEP_DIAMETERS_CM,
                   template: dict | None = None,
                   jobs: int = 1) -> SweepResult:
    """Pull-out force of circles across diameters (one row each)."""
    conditions = [(f"circle_{d}cm", float(d), float(d), None)
                  for d in diameters_cm]
    result = _sweep(model, "diameter", conditions, template, jobs)
    result.metadata["masses_g"] = [CUP_MASSES_G.get(float(d)) for d in diameters_cm]
    return result


def sweep_shape(model: TailModel,
                side_counts: Sequence[int | None] = SHAPE_SIDE_COUNTS,
                circumdiameter_cm: float = SHAPE_CIRCUMDIAMETER_CM,
                template: dict | None = None,
                jobs: int = 1) -> SweepResult:
    """Pull-out force for polygons and the circle at one circumdiameter."""
    conditions = []
    for n in side_counts:
        label = "circle" if n is None else f"{n}-gon"
        value = 0.0 if n is None else float(n)
        conditions.append((label, value, float(circumdiameter_cm), n))
    result = _sweep(model, "shape", conditions, template, jobs)
    result.metadata["circumdiameter_cm"] = float(circumdiameter_cm)
    result.metadata["masses_g"] = [SHAPE_MASSES_G.get(n) for n in side_counts]
    return result


def model_with_kappa(kappa: float, base_config: dict | None = None) -> TailModel:
    config = dict(base_config or DEFAULT_MODEL_CONFIG)
    config["kappa"] = float(kappa)
    return model_from_config(config)


@dataclass
class CalibrationResult:
    kappa: float
    mu_pad: float
    residual: float  # sum of squared force errors, N^2
    max_rel_error: float
    flagged: bool  # best fit still misses a target by > 15%
    history: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"kappa": self.kappa, "mu_pad": self.mu_pad,
                "residual": self.residual,
                "max_rel_error": self.max_rel_error,
                "flagged": self.flagged}


KAPPA_RANGE = (0.2, 5.0)
MU_PAD_RANGE = (0.2, 1.5)
FLAG_REL_ERROR = 0.15


def calibrate(targets: dict[float, float] | None = None,
              *,
              template: dict | None = None,
              base_config: dict | None = None,
              max_rounds: int = 3,
              grid: int = 5,
              jobs: int = 4) -> CalibrationResult:
    """Fit (kappa, mu_pad) so simulated pull-out matches the target forces.

    Grid search with shrinking refinement around the best cell; each
    evaluation is a full diameter sweep.  Reports the best pair found even
    when the residual stays large (then ``flagged`` is set).
    """
    if targets is None:
        targets = {d: reference_force(d) for d in SWEEP_DIAMETERS_CM}
    if any(v <= 0 for v in targets.values()):
        raise ValueError("target forces must be positive")
    diameters = sorted(targets)
    tvec = np.array([targets[d] for d in diameters])

    def evaluate(kappa: float, mu_pad: float) -> tuple[float, float]:
        model = model_with_kappa(kappa, base_config)
        tpl = {**(template or {}), "mu_pad": mu_pad}
        sweep = sweep_diameter(model, diameters, tpl, jobs=1)
        forces = sweep.forces()
        if any(f is None for f in forces):
            return float("inf"), float("inf")
        fvec = np.array(forces)
        residual = float(np.sum((fvec - tvec) ** 2))
        rel = float(np.max(np.abs(fvec - tvec) / tvec))
        return residual, rel

    lo_k, hi_k = KAPPA_RANGE
    lo_m, hi_m = MU_PAD_RANGE
    best = None
    history = []
    span_k = hi_k - lo_k
    span_m = hi_m - lo_m
    center = (math.sqrt(lo_k * hi_k), 0.5 * (lo_m + hi_m))

    for round_idx in range(max_rounds):
        if round_idx == 0:
            kappas = np.geomspace(lo_k, hi_k, grid)
            mus = np.linspace(lo_m, hi_m, grid)
        else:
            shrink = 3.0 ** round_idx
            kappas = np.clip(np.geomspace(center[0] / (span_k / shrink / 2 + 1),
                                          center[0] * (span_k / shrink / 2 + 1),
                                          grid), lo_k, hi_k)
            mus = np.clip(np.linspace(center[1] - span_m / shrink / 2,
                                      center[1] + span_m / shrink / 2, grid),
                          lo_m, hi_m)
        cells = [(float(k), float(mu)) for k in kappas for mu in mus]
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                scores = list(ex.map(lambda c: evaluate(*c), cells))
        else:
            scores = [evaluate(*c) for c in cells]
        for (k, mu), (res, rel) in zip(cells, scores):
            if best is None or res < best[0]:
                best = (res, rel, k, mu)
        center = (best[2], best[3])
        history.append({"round": round_idx, "best_residual": best[0],
                        "best_kappa": best[2], "best_mu_pad": best[3],
                        "cells": len(cells)})

    residual, rel, kappa, mu_pad = best
    return CalibrationResult(kappa=kappa, mu_pad=mu_pad, residual=residual,
                             max_rel_error=rel, flagged=rel > FLAG_REL_ERROR,
                             history=history)


def load_calibration(path: str | Path = DEFAULT_CALIBRATION_PATH) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


# --- scripted demonstration scenarios -----------------------------------

@dataclass
class ScenarioReport:
    name: str
    keyframes_run: int
    grasped: bool
    released: bool
    retrieved: bool
    object_displacement_m: float
    displacement_toward_base_m: float
    contact_history: list[int]
    final_object_xy: tuple[float, float] | None
    converged: bool = True

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "keyframes_run": self.keyframes_run,
            "flags": {"grasped": self.grasped, "released": self.released,
                      "retrieved": self.retrieved},
            "object_displacement_m": self.object_displacement_m,
            "displacement_toward_base_m": self.displacement_toward_base_m,
            "contact_history": self.contact_history,
            "final_object_xy": None if self.final_object_xy is None
            else list(self.final_object_xy),
            "converged": self.converged,
        }


def load_scenario(name_or_path: str | Path) -> dict:
    """Load a scenario script: a shipped name or a JSON file path."""
    path = Path(name_or_path)
    if not path.exists():
        candidate = SCENARIO_DIR / f"{name_or_path}.json"
        if candidate.exists():
            path = candidate
        else:
            raise FileNotFoundError(f"no scenario {name_or_path!r}")
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def run_scenario(script: dict | str | Path,
                 model: TailModel | None = None) -> ScenarioReport:
    """Execute a keyframe timeline of wire commands against a scene.

    Keyframes hold wire displacement targets (mm); targets are walked with
    2 mm continuation steps.  While the object is held it moves freely with
    the grasp (its position joins the solver unknowns).  Success flags:
    ``grasped`` when at least ``min_contacts`` object contacts persist
    through a keyframe span, ``released`` when contact returns to zero
    afterwards, ``retrieved`` when the object ends at least the scripted
    distance closer to the base.
    """
    if not isinstance(script, dict):
        script = load_scenario(script)
    if model is None:
        model = model_from_config(script["model"]) if isinstance(
            script.get("model"), dict) else model_from_config(DEFAULT_MODEL_CONFIG)
    scene = scene_from_config(script["scene"]) if script.get("scene") else GraspScene()
    success_cfg = script.get("success", {})
    min_contacts = int(success_cfg.get("min_contacts", 2))
    retrieve_threshold = float(success_cfg.get("retrieve_min_displacement_cm", 15.0)) / 100.0

    q = np.zeros(model.joint_count)
    obj_xy = np.asarray(scene.object.position) if scene.object is not None else None
    start_xy = None if obj_xy is None else obj_xy.copy()
    current: dict[int, float] = {}
    contact_history: list[int] = []
    grasped = False
    released = False
    all_converged = True
    frames = script.get("keyframes", [])

    def count_contacts() -> int:
        return len(object_contacts(
            contact_forces(model, q, scene, object_xy=obj_xy)))

    for frame in frames:
        # while "carry" is set the object rides with the grasp (its position
        # joins the unknowns); otherwise ground friction keeps it in place
        carry = bool(frame.get("carry", False)) and scene.object is not None
        targets = {int(k): float(v) / 1000.0
                   for k, v in frame.get("set_wires", {}).items()}
        merged = {**current, **targets}
        if merged:
            start = dict(current)
            for wid in merged:
                start.setdefault(wid, 0.0)
            largest = max(abs(merged[w] - start[w]) for w in merged)
            n_steps = max(1, math.ceil(largest / 0.002 - 1e-12))
            for k in range(1, n_steps + 1):
                frac = k / n_steps
                inputs = [pull(w, start[w] + frac * (merged[w] - start[w]))
                          for w in sorted(merged)]
                res = solve_equilibrium(model, inputs, scene, q,
                                        object_free=carry, object_xy=obj_xy)
                q = res.q_star
                if carry and res.object_xy is not None:
                    obj_xy = res.object_xy
                all_converged &= res.converged
            current = merged
        else:
            res = solve_equilibrium(model, [], scene, q,
                                    object_free=carry, object_xy=obj_xy)
            q = res.q_star
            if carry and res.object_xy is not None:
                obj_xy = res.object_xy
        n_contacts = count_contacts()
        contact_history.append(n_contacts)
        if n_contacts >= min_contacts:
            grasped = True
        if grasped and n_contacts == 0:
            released = True

    if obj_xy is not None and start_xy is not None:
        displacement = float(np.linalg.norm(obj_xy - start_xy))
        toward_base = float(np.linalg.norm(start_xy) - np.linalg.norm(obj_xy))
    else:
        displacement = 0.0
        toward_base = 0.0

    return ScenarioReport(
        name=str(script.get("name", "scenario")),
        keyframes_run=len(frames),
        grasped=grasped,
        released=released,
        retrieved=grasped and toward_base >= retrieve_threshold,
        object_displacement_m=displacement,
        displacement_toward_base_m=toward_base,
        contact_history=contact_history,
        final_object_xy=None if obj_xy is None else (float(obj_xy[0]), float(obj_xy[1])),
        converged=all_converged,
    )
