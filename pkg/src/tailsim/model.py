"""Tail geometry, stiffness grading, wire routing, and planar kinematics.

The tail is a serial chain of rigid links (vertebrae) joined by pin joints.
Four regions of decreasing rubber thickness give a stiffness profile that
falls from base to tip.  Five control wires route through process points
offset laterally from the backbone; pulling or pushing a wire bends the
joints it crosses.

Sign convention: positive joint angles bend toward the ventral side, which
is the +y half-plane when the undeflected tail lies along +x.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import backend

REGION_NAMES = ("proximal", "middle", "distal_pinned", "distal_tip")

VENTRAL = "ventral"
DORSAL = "dorsal"

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_MODEL_PATH = DATA_DIR / "default_tail.json"

TOTAL_LENGTH_TOL = 1e-9


@dataclass(frozen=True)
class Region:
    """One stiffness zone of the tail: a run of equal-length vertebrae."""

    name: str
    vertebra_count: int
    total_length: float  # m
    process_offset: float  # m, lateral distance from joint axis to wire routing point
    rubber_thickness: float  # m
    tape_multiplier: float = 1.0


@dataclass(frozen=True)
class WireSpec:
    """Routing of one control wire.

    ``termination_joint`` is the 1-based index of the last joint whose
    process the wire passes through; ``routing_offsets`` holds the lateral
    offset at each traversed joint (length == termination_joint).
    """

    wire_id: int
    side: str  # "ventral" | "dorsal"
    termination_joint: int
    routing_offsets: np.ndarray

    @property
    def side_sign(self) -> float:
        return 1.0 if self.side == VENTRAL else -1.0


@dataclass(frozen=True, eq=False)
class TailModel:
    """Immutable description of the chain: geometry, stiffness, wires.

    All quantities are SI (m, N, rad).  ``kappa`` maps rubber thickness in
    millimetres to torsional stiffness in N*m/rad; joint stiffness is
    ``kappa * thickness_mm * tape_multiplier`` for the joint's region.
    """

    regions: tuple[Region, ...]
    link_lengths: np.ndarray  # (n,) m
    joint_stiffness: np.ndarray  # (n,) N*m/rad
    kappa: float  # N*m/(rad*mm)
    wires: tuple[WireSpec, ...]
    joint_angle_limit: float  # rad
    cable_stiffness: float = 1.0e4  # N/m, wire-to-displacement coupling
    base_anchor_length: float = 0.05  # m, wire anchor distance behind joint 1
    base_rotation: float = 0.0  # rad, orientation of the fixed base link
    tail_radius: float = 0.008  # m, half-width of a link for contact purposes

    def __post_init__(self):
        self.link_lengths.flags.writeable = False
        self.joint_stiffness.flags.writeable = False

    @property
    def joint_count(self) -> int:
        return len(self.link_lengths)

    @property
    def total_length(self) -> float:
        return float(np.sum(self.link_lengths))

    def region_of_joint(self) -> np.ndarray:
        """Region index (0..3) for each joint."""
        out = np.empty(self.joint_count, dtype=np.int64)
        j = 0
        for ri, region in enumerate(self.regions):
            out[j : j + region.vertebra_count] = ri
            j += region.vertebra_count
        return out

    def region_slice(self, name: str) -> slice:
        j = 0
        for region in self.regions:
            if region.name == name:
                return slice(j, j + region.vertebra_count)
            j += region.vertebra_count
        raise KeyError(name)

    def wire(self, wire_id: int) -> WireSpec:
        for w in self.wires:
            if w.wire_id == wire_id:
                return w
        raise KeyError(f"no wire with id {wire_id}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, TailModel):
            return NotImplemented
        if self.regions != other.regions:
            return False
        scalar = ("kappa", "joint_angle_limit", "cable_stiffness",
                  "base_anchor_length", "base_rotation", "tail_radius")
        if any(getattr(self, f) != getattr(other, f) for f in scalar):
            return False
        if not (np.array_equal(self.link_lengths, other.link_lengths)
                and np.array_equal(self.joint_stiffness, other.joint_stiffness)):
            return False
        if len(self.wires) != len(other.wires):
            return False
        return all(
            a.wire_id == b.wire_id and a.side == b.side
            and a.termination_joint == b.termination_joint
            and np.array_equal(a.routing_offsets, b.routing_offsets)
            for a, b in zip(self.wires, other.wires)
        )

    __hash__ = object.__hash__


class ChainState(NamedTuple):
    """Joint positions and link orientations for one configuration."""

    points: np.ndarray  # (n+1, 2): joint positions, last row is the tip
    link_angles: np.ndarray  # (n,) absolute link orientations, rad

    @property
    def tip(self) -> np.ndarray:
        return self.points[-1]


@dataclass(frozen=True)
class Violation:
    """First model invariant that failed, with the indices involved."""

    rule: str
    message: str
    indices: tuple[int, ...] = ()


# Default model parameters.  The shipped data/default_tail.json must stay in
# sync with this dict (tested bit-for-bit).
DEFAULT_MODEL_CONFIG = {
    "name": "default graded-stiffness tail",
    "regions": [
        {"name": "proximal", "vertebra_count": 6, "length_cm": 19.0,
         "rubber_thickness_mm": 0.76, "taped": True},
        {"name": "middle", "vertebra_count": 10, "length_cm": 42.0,
         "rubber_thickness_mm": 0.51, "taped": False},
        {"name": "distal_pinned", "vertebra_count": 13, "length_cm": 21.0,
         "rubber_thickness_mm": 0.36, "taped": False},
        {"name": "distal_tip", "vertebra_count": 9, "length_cm": 11.0,
         "rubber_thickness_mm": 0.30, "taped": False},
    ],
    "kappa": 1.0,  # N*m/(rad*mm)
    "tape_multiplier": 1.5,
    "offsets_mm": [15.0, 10.0, 10.0, 3.2],
    "angle_limit_deg": 60.0,
    "cable_stiffness_n_per_m": 10000.0,
    "base_anchor_cm": 5.0,
}

# Wire layout: (wire_id, side, termination joint 1-based).
WIRE_LAYOUT = (
    (1, VENTRAL, 6),
    (2, VENTRAL, 16),
    (3, VENTRAL, 38),
    (4, DORSAL, 38),
    (5, DORSAL, 6),
)


def model_from_config(config: dict) -> TailModel:
    """Build a TailModel from a parsed configuration dict.

    Lengths in the config carry explicit unit suffixes (cm, mm, deg); the
    model itself is SI.
    """
    regions = []
    tape_multiplier = float(config["tape_multiplier"])
    offsets_mm = config["offsets_mm"]
    if len(offsets_mm) != len(config["regions"]):
        raise ValueError("offsets_mm must have one entry per region")
    for entry, offset_mm in zip(config["regions"], offsets_mm):
        regions.append(Region(
            name=entry["name"],
            vertebra_count=int(entry["vertebra_count"]),
            total_length=float(entry["length_cm"]) / 100.0,
            process_offset=float(offset_mm) / 1000.0,
            rubber_thickness=float(entry["rubber_thickness_mm"]) / 1000.0,
            tape_multiplier=tape_multiplier if entry.get("taped", False) else 1.0,
        ))
    regions = tuple(regions)

    link_lengths = np.concatenate([
        np.full(r.vertebra_count, r.total_length / r.vertebra_count)
        for r in regions
    ])
    kappa = float(config["kappa"])
    joint_stiffness = np.concatenate([
        np.full(r.vertebra_count, kappa * (r.rubber_thickness * 1000.0) * r.tape_multiplier)
        for r in regions
    ])

    joint_count = int(link_lengths.size)
    per_joint_offset = np.concatenate([
        np.full(r.vertebra_count, r.process_offset) for r in regions
    ])
    wires = tuple(
        WireSpec(wire_id=wid, side=side, termination_joint=term,
                 routing_offsets=per_joint_offset[:term].copy())
        for wid, side, term in WIRE_LAYOUT
        if term <= joint_count
    )
    for w in wires:
        w.routing_offsets.flags.writeable = False

    return TailModel(
        regions=regions,
        link_lengths=link_lengths,
        joint_stiffness=joint_stiffness,
        kappa=kappa,
        wires=wires,
        joint_angle_limit=math.radians(float(config["angle_limit_deg"])),
        cable_stiffness=float(config.get("cable_stiffness_n_per_m", 1.0e4)),
        base_anchor_length=float(config.get("base_anchor_cm", 5.0)) / 100.0,
        base_rotation=math.radians(float(config.get("base_rotation_deg", 0.0))),
        tail_radius=float(config.get("tail_radius_cm", 0.8)) / 100.0,
    )


def model_to_config(model: TailModel) -> dict:
    """Inverse of :func:`model_from_config` (region-uniform models only)."""
    taped = [r.tape_multiplier != 1.0 for r in model.regions]
    tape_multiplier = next(
        (r.tape_multiplier for r in model.regions if r.tape_multiplier != 1.0), 1.5)
    return {
        "name": "exported tail model",
        "regions": [
            {"name": r.name, "vertebra_count": r.vertebra_count,
             "length_cm": r.total_length * 100.0,
             "rubber_thickness_mm": r.rubber_thickness * 1000.0,
             "taped": t}
            for r, t in zip(model.regions, taped)
        ],
        "kappa": model.kappa,
        "tape_multiplier": tape_multiplier,
        "offsets_mm": [r.process_offset * 1000.0 for r in model.regions],
        "angle_limit_deg": math.degrees(model.joint_angle_limit),
        "cable_stiffness_n_per_m": model.cable_stiffness,
        "base_anchor_cm": model.base_anchor_length * 100.0,
        "base_rotation_deg": math.degrees(model.base_rotation),
        "tail_radius_cm": model.tail_radius * 100.0,
    }


def load_model(path: str | Path) -> TailModel:
    with open(path, encoding="utf-8") as f:
        return model_from_config(json.load(f))


def default_tail() -> TailModel:
    """The shipped 38-joint, 0.93 m tail with graded stiffness."""
    return model_from_config(DEFAULT_MODEL_CONFIG)


def check_configuration(model: TailModel, q: np.ndarray) -> np.ndarray:
    q = np.ascontiguousarray(q, dtype=np.float64)
    if q.shape != (model.joint_count,):
        raise ValueError(
            f"configuration has {q.shape} entries, model has {model.joint_count} joints")
    return q


def forward_kinematics(model: TailModel, q: np.ndarray) -> ChainState:
    """Joint positions and link orientations; base joint at the origin."""
    q = check_configuration(model, q)
    pts, phi = backend.kernels().chain_state(q, model.link_lengths, model.base_rotation)
    return ChainState(points=pts, link_angles=phi)


def wire_length(model: TailModel, q: np.ndarray, wire_id: int) -> float:
    """Polyline length of one wire through its routing points."""
    return float(wire_lengths(model, q)[_wire_index(model, wire_id)])


def wire_lengths(model: TailModel, q: np.ndarray) -> np.ndarray:
    """Lengths of all wires at configuration ``q``, in wire order."""
    q = check_configuration(model, q)
    side, term, offsets = pack_wires(model)
    return backend.kernels().wire_lengths(
        q, model.link_lengths, model.base_rotation, model.base_anchor_length,
        side, term, offsets)


def _wire_index(model: TailModel, wire_id: int) -> int:
    for i, w in enumerate(model.wires):
        if w.wire_id == wire_id:
            return i
    raise KeyError(f"no wire with id {wire_id}")


def pack_wires(model: TailModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Wire routing as flat arrays for the kernels.

    Returns (side_sign (W,), last routed vertebra 0-based (W,),
    per-joint offsets padded to (W, n)).
    """
    n = model.joint_count
    w = len(model.wires)
    side = np.empty(w)
    term = np.empty(w, dtype=np.int64)
    offsets = np.zeros((w, n))
    for i, spec in enumerate(model.wires):
        side[i] = spec.side_sign
        term[i] = spec.termination_joint - 1
        offsets[i, : spec.termination_joint] = spec.routing_offsets
    return side, term, offsets


def validate(model: TailModel) -> Violation | None:
    """Check model invariants; return the first violation, or None if ok."""
    n = model.joint_count
    for i, r in enumerate(model.regions):
        if r.vertebra_count <= 0 or r.total_length <= 0 or r.process_offset <= 0:
            return Violation("region positivity",
                             f"region {r.name} has non-positive count/length/offset", (i,))
        if r.tape_multiplier < 1.0:
            return Violation("tape multiplier", f"region {r.name} multiplier < 1", (i,))
    for i in range(len(model.regions) - 1):
        if model.regions[i + 1].rubber_thickness >= model.regions[i].rubber_thickness:
            return Violation(
                "thickness ordering",
                "rubber thickness must strictly decrease from base to tip",
                (i, i + 1))
    if sum(r.vertebra_count for r in model.regions) != n:
        return Violation("joint count", "region counts do not sum to joint count")
    region_total = sum(r.total_length for r in model.regions)
    if abs(model.total_length - region_total) > TOTAL_LENGTH_TOL:
        return Violation(
            "total length",
            f"link lengths sum to {model.total_length:.9f} m, regions claim "
            f"{region_total:.9f} m")
    if np.any(model.joint_stiffness <= 0):
        bad = int(np.argmax(model.joint_stiffness <= 0))
        return Violation("stiffness positivity", "non-positive joint stiffness", (bad,))
    diffs = np.diff(model.joint_stiffness)
    if np.any(diffs > 0):
        bad = int(np.argmax(diffs > 0))
        return Violation(
            "stiffness ordering",
            "joint stiffness must be weakly decreasing from base to tip",
            (bad, bad + 1))
    for w in model.wires:
        if not (1 <= w.termination_joint <= n):
            return Violation("wire termination",
                             f"wire {w.wire_id} terminates outside the chain",
                             (w.wire_id,))
        if len(w.routing_offsets) != w.termination_joint:
            return Violation("wire routing",
                             f"wire {w.wire_id} offset count != traversed joints",
                             (w.wire_id,))
    for a_id, b_id in ((1, 5), (3, 4)):
        try:
            a, b = model.wire(a_id), model.wire(b_id)
        except KeyError:
            continue
        if a.termination_joint == b.termination_joint and not np.array_equal(
                a.routing_offsets, b.routing_offsets):
            return Violation("wire symmetry",
                             f"wires {a_id} and {b_id} must share routing offsets",
                             (a_id, b_id))
    if model.joint_angle_limit <= 0:
        return Violation("angle limit", "joint angle limit must be positive")
    return None
