"""Region-specific counterfactual image editing with a verifiable oracle denoiser."""

from .diffusion import BlobWorld, GuidanceScales, NoiseSchedule, OracleDenoiser
from .instruction import EditInstruction, FindingState, Operation, parse_instruction, render_instruction
from .maskreg import MaskRegistry
from .registration import RegistrationConfig, RigidTransform, register_rigid
from .rse import EditConfig, edit

__all__ = [
    "BlobWorld",
    "EditConfig",
    "EditInstruction",
    "FindingState",
    "GuidanceScales",
    "MaskRegistry",
    "NoiseSchedule",
    "Operation",
    "OracleDenoiser",
    "RegistrationConfig",
    "RigidTransform",
    "edit",
    "parse_instruction",
    "register_rigid",
    "render_instruction",
]
