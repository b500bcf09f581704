"""Simulated home: semantic map plus objects, people and the robot.

The mutable part of the world serializes to a plain dict (``state_dict``);
skill execution records changes as nested dict deltas over that form, which
is what makes transcripts replayable.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..errors import ParseError, ValidationError
from ..semantic_map import Pose2, SemanticMap, locate, map_from_dict, map_to_dict


@dataclass(frozen=True)
class WorldObject:
    name: str
    cls: str
    position: tuple[float, float, float]
    size: tuple[float, float, float] = (0.06, 0.06, 0.12)
    yaw: float = 0.0
    surface: str | None = None
    holder: str | None = None


@dataclass(frozen=True)
class Person:
    name: str
    position: tuple[float, float]
    question: str | None = None


@dataclass(frozen=True)
class Robot:
    pose: Pose2
    held: str | None = None
    at: str | None = None
    found: str | None = None


@dataclass(frozen=True)
class WorldState:
    map: SemanticMap
    objects: dict[str, WorldObject]
    persons: dict[str, Person]
    robot: Robot
    operator: str
    open_doors: tuple[str, ...] = ()
    knowledge: dict[str, str] = field(default_factory=dict)
    clock: float = 0.0

    def __post_init__(self):
        held = [o.name for o in self.objects.values() if o.holder == "robot"]
        if len(held) > 1:
            raise ValidationError(f"robot holds several objects: {held}", invariant="single-held")
        for o in self.objects.values():
            if o.surface is not None and self.map.furniture_named(o.surface) is None:
                raise ValidationError(f"object {o.name!r} rests on unknown furniture {o.surface!r}",
                                      invariant="object-surface-exists", name=o.name)
        if self.operator not in self.persons:
            raise ValidationError(f"operator {self.operator!r} is not a known person",
                                  invariant="operator-exists")

    @property
    def robot_room(self) -> str | None:
        return locate(self.map, self.robot.pose.position)

    def held_object(self) -> WorldObject | None:
        return self.objects.get(self.robot.held) if self.robot.held else None

    def resolve_person(self, name: str) -> Person | None:
        key = name_key(name)
        if key in ("operator", "me"):
            return self.persons[self.operator]
        return next((p for p in self.persons.values() if name_key(p.name) == key), None)

    def resolve_furniture(self, name: str):
        key = name_key(name)
        return next((f for f in self.map.furniture if name_key(f.name) == key), None)

    def resolve_room(self, name: str):
        key = name_key(name)
        return next((r for r in self.map.rooms if name_key(r.name) == key), None)

    def resolve_door(self, name: str):
        key = name_key(name)
        return next((d for d in self.map.doors if name_key(d.name) == key), None)

    def resolve_object(self, name: str) -> WorldObject | None:
        key = name_key(name)
        return next((o for o in self.objects.values() if name_key(o.name) == key), None)

    def state_dict(self) -> dict:
        return {
            "robot": {"pose": [self.robot.pose.x, self.robot.pose.y, self.robot.pose.yaw],
                      "held": self.robot.held, "at": self.robot.at, "found": self.robot.found},
            "objects": {o.name: {"class": o.cls, "position": list(o.position), "size": list(o.size),
                                 "yaw": o.yaw, "surface": o.surface, "holder": o.holder}
                        for o in self.objects.values()},
            "persons": {p.name: {"position": list(p.position), "question": p.question}
                        for p in self.persons.values()},
            "operator": self.operator,
            "open_doors": list(self.open_doors),
            "knowledge": dict(self.knowledge),
            "clock": self.clock,
        }

    def with_state(self, state: dict) -> "WorldState":
        return world_from_state(self.map, state)


def name_key(name: str) -> str:
    return " ".join(name.lower().replace("_", " ").replace("-", " ").split())


def world_from_state(smap: SemanticMap, state: dict) -> WorldState:
    r = state["robot"]
    robot = Robot(Pose2(*r["pose"]), r.get("held"), r.get("at"), r.get("found"))
    objects = {name: WorldObject(name, o["class"], tuple(o["position"]), tuple(o["size"]),
                                 o["yaw"], o["surface"], o["holder"])
               for name, o in state["objects"].items()}
    persons = {name: Person(name, tuple(p["position"]), p.get("question"))
               for name, p in state["persons"].items()}
    return WorldState(smap, objects, persons, robot, state["operator"],
                      tuple(state.get("open_doors", ())), dict(state.get("knowledge", {})),
                      float(state.get("clock", 0.0)))


def diff(before, after):
    """Nested delta turning ``before`` into ``after`` (dicts recurse, other values replace)."""
    delta = {}
    for key, new in after.items():
        old = before.get(key, _MISSING) if isinstance(before, dict) else _MISSING
        if isinstance(new, dict) and isinstance(old, dict):
            sub = diff(old, new)
            if sub:
                delta[key] = sub
        elif old is _MISSING or old != new:
            delta[key] = copy.deepcopy(new)
    return delta


_MISSING = object()


def apply_delta(state: dict, delta: dict) -> dict:
    out = copy.deepcopy(state)
    _merge(out, delta)
    return out


def _merge(target: dict, delta: dict) -> None:
    for key, value in delta.items():
        if isinstance(value, dict) and isinstance(target.get(key), dict):
            _merge(target[key], value)
        else:
            target[key] = copy.deepcopy(value)


def updated(world: WorldState, robot: Robot | None = None, objects: dict | None = None,
            **changes) -> WorldState:
    new_objects = dict(world.objects)
    new_objects.update(objects or {})
    return replace(world, robot=robot or world.robot, objects=new_objects, **changes)


# --------------------------------------------------------------------------- files


def world_from_dict(data: dict) -> WorldState:
    if not isinstance(data, dict):
        raise ParseError("world file must contain a JSON object")
    smap = map_from_dict({k: data.get(k, []) for k in ("rooms", "furniture", "doors")})
    try:
        objects = {}
        for i, o in enumerate(data.get("objects", [])):
            x, y, z = (list(o["position"]) + [0.0])[:3]
            objects[o["name"]] = WorldObject(
                o["name"], o.get("class", o["name"]), (float(x), float(y), float(z)),
                tuple(float(v) for v in o.get("size", (0.06, 0.06, 0.12))),
                float(o.get("yaw", 0.0)), o.get("surface"), o.get("holder"))
        persons = {p["name"]: Person(p["name"], (float(p["position"][0]), float(p["position"][1])),
                                     p.get("question"))
                   for p in data.get("persons", [])}
        r = data.get("robot", {})
        pose = r.get("pose", [0.0, 0.0, 0.0])
        held = r.get("held")
        robot = Robot(Pose2(float(pose[0]), float(pose[1]), float(pose[2]) if len(pose) > 2 else 0.0),
                      held, r.get("at"))
        operator = data.get("operator", "operator")
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed world section: {exc!r}") from exc
    if held is not None and held in objects:
        objects[held] = replace(objects[held], surface=None, holder="robot")
    knowledge = {name_key(q).rstrip("?").strip(): a for q, a in data.get("knowledge", {}).items()}
    return WorldState(smap, objects, persons, robot, operator,
                      tuple(data.get("open_doors", ())), knowledge)


def world_to_dict(world: WorldState) -> dict:
    out = map_to_dict(world.map)
    out["objects"] = [{"name": o.name, "class": o.cls, "position": list(o.position),
                       "size": list(o.size), "yaw": o.yaw, "surface": o.surface}
                      for o in world.objects.values()]
    out["persons"] = [{"name": p.name, "position": list(p.position),
                       **({"question": p.question} if p.question else {})}
                      for p in world.persons.values()]
    out["operator"] = world.operator
    out["robot"] = {"pose": [world.robot.pose.x, world.robot.pose.y, world.robot.pose.yaw],
                    "held": world.robot.held}
    out["knowledge"] = dict(world.knowledge)
    return out


def load_world(path) -> WorldState:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}", line=exc.lineno) from exc
    return world_from_dict(data)


def demo_world_path() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "demo_world.json"


def demo_world() -> WorldState:
    return load_world(demo_world_path())


def distance2(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])
