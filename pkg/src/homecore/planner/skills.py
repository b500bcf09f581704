"""The closed skill set and its argument schemas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from ..errors import SchemaViolation


class Skill(str, Enum):
    FIND_OBJ = "find_obj"
    GRASP = "grasp"
    MOVE = "move"
    PLACE = "place"
    HAND_OVER = "hand_over"
    FIND_PERSON = "find_person"
    FOLLOW_PERSON = "follow_person"
    SPEAK = "speak"
    ASK = "ask"
    ANSWER = "answer"
    OPEN_DOOR = "open_door"
    WAIT = "wait"


@dataclass(frozen=True)
class Arg:
    kind: type
    description: str
    required: bool = True
    default: object = None


SCHEMAS: dict[Skill, dict[str, Arg]] = {
    Skill.FIND_OBJ: {"description": Arg(str, "what to look for, e.g. 'cup' or 'right-most object'")},
    Skill.GRASP: {"object": Arg(str, "name of an object reported by find_obj")},
    Skill.MOVE: {"location": Arg(str, "furniture, room or person to go to")},
    Skill.PLACE: {"location": Arg(str, "furniture to put the held object on")},
    Skill.HAND_OVER: {"person": Arg(str, "who receives the held object", False, "operator")},
    Skill.FIND_PERSON: {"name": Arg(str, "person to locate")},
    Skill.FOLLOW_PERSON: {"name": Arg(str, "person to follow")},
    Skill.SPEAK: {"text": Arg(str, "sentence to say")},
    Skill.ASK: {"person": Arg(str, "person to ask"),
                "question": Arg(str, "what to ask", False, "What is your question?")},
    Skill.ANSWER: {"question": Arg(str, "question to answer")},
    Skill.OPEN_DOOR: {"door": Arg(str, "door to open")},
    Skill.WAIT: {"seconds": Arg(float, "how long to wait")},
}

SUMMARIES = {
    Skill.FIND_OBJ: "detect objects at the current location matching a description",
    Skill.GRASP: "pick up an object within reach with an empty hand",
    Skill.MOVE: "navigate to a piece of furniture, a room or a person",
    Skill.PLACE: "put the held object on nearby furniture",
    Skill.HAND_OVER: "give the held object to a nearby person",
    Skill.FIND_PERSON: "report where a person is",
    Skill.FOLLOW_PERSON: "go to a person and stay with them",
    Skill.SPEAK: "say something",
    Skill.ASK: "ask a person a question and hear the reply",
    Skill.ANSWER: "answer a question aloud",
    Skill.OPEN_DOOR: "open a door",
    Skill.WAIT: "do nothing for a number of seconds",
}


def _check_args(skill: Skill, args) -> dict:
    if not isinstance(args, dict):
        raise SchemaViolation(f"{skill.value}: args must be an object", skill=skill.value)
    schema = SCHEMAS[skill]
    unknown = set(args) - set(schema)
    if unknown:
        raise SchemaViolation(f"{skill.value}: unknown argument(s) {sorted(unknown)}", skill=skill.value)
    out = {}
    for name, spec in schema.items():
        if name not in args:
            if spec.required:
                raise SchemaViolation(f"{skill.value}: missing argument {name!r}", skill=skill.value)
            out[name] = spec.default
            continue
        value = args[name]
        if spec.kind is str:
            if not isinstance(value, str) or not value.strip():
                raise SchemaViolation(f"{skill.value}.{name} must be a nonempty string", skill=skill.value)
            value = value.strip()
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)) \
                    or not math.isfinite(value) or value < 0:
                raise SchemaViolation(f"{skill.value}.{name} must be a nonnegative number",
                                      skill=skill.value)
            value = float(value)
        out[name] = value
    return out


@dataclass(frozen=True)
class SkillCall:
    skill: Skill
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            skill = Skill(self.skill)
        except ValueError:
            raise SchemaViolation(f"unknown skill {self.skill!r}", skill=str(self.skill)) from None
        object.__setattr__(self, "skill", skill)
        object.__setattr__(self, "args", _check_args(skill, self.args))

    def to_dict(self) -> dict:
        return {"skill": self.skill.value, "args": dict(self.args)}

    def __str__(self) -> str:
        inner = ", ".join(f"{v:g}" if isinstance(v, float) else str(v) for v in self.args.values())
        return f"{self.skill.value}({inner})"


def parse_call(obj) -> SkillCall:
    """Build a call from a decoded ``{"skill": ..., "args": {...}}`` object."""
    if not isinstance(obj, dict) or "skill" not in obj:
        raise SchemaViolation("expected an object with a 'skill' field")
    extra = set(obj) - {"skill", "args"}
    if extra:
        raise SchemaViolation(f"unexpected field(s) {sorted(extra)}")
    if not isinstance(obj["skill"], str):
        raise SchemaViolation("'skill' must be a string")
    return SkillCall(obj["skill"], obj.get("args", {}))


def skill_listing() -> str:
    lines = []
    for skill in Skill:
        args = ", ".join(f"{n}: {'string' if a.kind is str else 'number'}"
                         + ("" if a.required else " (optional)") for n, a in SCHEMAS[skill].items())
        lines.append(f"- {skill.value}({args}): {SUMMARIES[skill]}")
    return "\n".join(lines)
