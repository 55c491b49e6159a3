"""Adversarial bipartite entanglement detection on a dense density-matrix simulator."""

from .channels import build_rho_e, build_rho_s, build_state
from .circuits import GeneratorSpec, ParamCircuit, generate_state, preset_ansatz, validate_separability
from .game import Discriminator, GameConfig, detect, loss, train
from .linalg import Bipartition, DensityMatrix, fidelity, partial_trace, partial_transpose
from .oracles import WitnessOperator, confusion_matrix, ppt_verdict, random_mixed_state

__all__ = [
    "Bipartition",
    "DensityMatrix",
    "Discriminator",
    "GameConfig",
    "GeneratorSpec",
    "ParamCircuit",
    "WitnessOperator",
    "build_rho_e",
    "build_rho_s",
    "build_state",
    "confusion_matrix",
    "detect",
    "fidelity",
    "generate_state",
    "loss",
    "partial_trace",
    "partial_transpose",
    "ppt_verdict",
    "preset_ansatz",
    "random_mixed_state",
    "train",
    "validate_separability",
]
