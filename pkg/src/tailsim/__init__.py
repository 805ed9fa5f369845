"""tailsim: planar statics and grasp analysis for a wire-driven robotic tail."""

from .model import (ChainState, Region, TailModel, WireSpec, default_tail,
                    forward_kinematics, load_model, validate, wire_length,
                    wire_lengths)
from .statics import (EquilibriumResult, WireInput, elastic_energy,
                      energy_gradient, motion_signature, pull,
                      solve_equilibrium, tension, total_energy)
from .grasp import (Contact, ContactSet, GraspScene, Obstacle, PullOutTrace,
                    ShapeSpec, contact_forces, load_scene, pull_out_force,
                    signed_distance, solve_grasp)

__version__ = "0.1.0"

__all__ = [
    "ChainState", "Region", "TailModel", "WireSpec", "default_tail",
    "forward_kinematics", "load_model", "validate", "wire_length",
    "wire_lengths",
    "EquilibriumResult", "WireInput", "elastic_energy", "energy_gradient",
    "motion_signature", "pull", "solve_equilibrium", "tension", "total_energy",
    "Contact", "ContactSet", "GraspScene", "Obstacle", "PullOutTrace",
    "ShapeSpec", "contact_forces", "load_scene", "pull_out_force",
    "signed_distance", "solve_grasp",
]
