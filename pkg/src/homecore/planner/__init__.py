"""GPSR-style task planning over a simulated home."""

from .backends import DONE, BackendContext, LlmBackend, expand, observe, rule_backend
from .executor import Outcome, Violation, execute_skill, validate_call
from .loop import STEP_LIMIT, Step, Transcript, plan_and_execute, replay
from .skills import SCHEMAS, Skill, SkillCall, parse_call, skill_listing
from .world import WorldState, apply_delta, demo_world, diff, load_world, world_from_dict

__all__ = [
    "DONE", "BackendContext", "LlmBackend", "expand", "observe", "rule_backend",
    "Outcome", "Violation", "execute_skill", "validate_call",
    "STEP_LIMIT", "Step", "Transcript", "plan_and_execute", "replay",
    "SCHEMAS", "Skill", "SkillCall", "parse_call", "skill_listing",
    "WorldState", "apply_delta", "demo_world", "diff", "load_world", "world_from_dict",
]
