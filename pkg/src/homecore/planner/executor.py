"""Skill preconditions and simulated execution."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import HomecoreError, PreconditionFailed
from ..grasp import decide_grasp, pca_bbox
from ..semantic_map import (
    DEFAULT_STANDOFF,
    Pose2,
    contains_point,
    distance_to_boundary,
    locate,
    navigation_point,
)
from .skills import Skill, SkillCall
from .world import WorldState, diff, distance2, name_key, updated

REACH = 1.0
CAMERA_HEIGHT = 1.0


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class Outcome:
    ok: bool
    result: dict = field(default_factory=dict)
    error: str | None = None
    message: str = ""

    def to_dict(self) -> dict:
        out = {"ok": self.ok, "result": self.result}
        if not self.ok:
            out["error"] = self.error
            out["message"] = self.message
        return out


def _location_kind(world: WorldState, name: str):
    f = world.resolve_furniture(name)
    if f is not None:
        return "furniture", f
    r = world.resolve_room(name)
    if r is not None:
        return "room", r
    p = world.resolve_person(name)
    if p is not None:
        return "person", p
    return None, None


def _furniture_distance(world: WorldState, furniture) -> float:
    pos = world.robot.pose.position
    return 0.0 if contains_point(furniture.contour, pos) else distance_to_boundary(furniture.contour, pos)


def validate_call(call, world: WorldState) -> list[Violation]:
    """Schema, name and precondition checks; never mutates ``world``."""
    if not isinstance(call, SkillCall) or not isinstance(call.skill, Skill):
        return [Violation("BadCall", f"not a skill call from the closed set: {call!r}")]
    try:
        SkillCall(call.skill, call.args)
    except HomecoreError as exc:
        return [Violation("BadArguments", str(exc))]
    skill, args = call.skill, call.args
    out: list[Violation] = []
    robot = world.robot
    if skill is Skill.MOVE:
        kind, _ = _location_kind(world, args["location"])
        if kind is None:
            out.append(Violation("UnknownLocation", f"no location named {args['location']!r}"))
    elif skill is Skill.GRASP:
        obj = world.resolve_object(args["object"])
        if obj is None:
            out.append(Violation("UnknownObject", f"no object named {args['object']!r}"))
        else:
            if obj.holder is not None:
                out.append(Violation("ObjectUnavailable", f"{obj.name!r} is held by {obj.holder}"))
            elif distance2(robot.pose.position, obj.position) > REACH:
                out.append(Violation("OutOfReach", f"{obj.name!r} is more than {REACH} m away"))
        if robot.held is not None:
            out.append(Violation("HandOccupied", f"already holding {robot.held!r}"))
    elif skill is Skill.PLACE:
        f = world.resolve_furniture(args["location"])
        if f is None:
            out.append(Violation("UnknownLocation", f"no furniture named {args['location']!r}"))
        elif _furniture_distance(world, f) > REACH:
            out.append(Violation("OutOfReach", f"{f.name!r} is more than {REACH} m away"))
        if robot.held is None:
            out.append(Violation("NothingHeld", "hand is empty"))
    elif skill is Skill.HAND_OVER:
        person = world.resolve_person(args["person"])
        if person is None:
            out.append(Violation("UnknownPerson", f"no person named {args['person']!r}"))
        elif distance2(robot.pose.position, person.position) > REACH:
            out.append(Violation("OutOfReach", f"{person.name!r} is more than {REACH} m away"))
        if robot.held is None:
            out.append(Violation("NothingHeld", "hand is empty"))
    elif skill in (Skill.FIND_PERSON, Skill.FOLLOW_PERSON):
        if world.resolve_person(args["name"]) is None:
            out.append(Violation("UnknownPerson", f"no person named {args['name']!r}"))
    elif skill is Skill.ASK:
        if world.resolve_person(args["person"]) is None:
            out.append(Violation("UnknownPerson", f"no person named {args['person']!r}"))
    elif skill is Skill.OPEN_DOOR:
        if world.resolve_door(args["door"]) is None:
            out.append(Violation("UnknownDoor", f"no door named {args['door']!r}"))
    return out


# --------------------------------------------------------------------------- skill effects


def _interior_point(world: WorldState, room) -> tuple[float, float]:
    """Room centroid if it is free, else the free grid point farthest from walls and furniture."""
    blockers = [f.contour for f in world.map.furniture]

    def free(p):
        return contains_point(room.contour, p) and not any(contains_point(b, p) for b in blockers)

    c = room.contour.centroid
    if free(c):
        return c
    x0, y0, x1, y1 = room.contour.bounds
    best, best_d = c, -1.0
    for fx in np.linspace(0.05, 0.95, 19):
        for fy in np.linspace(0.05, 0.95, 19):
            p = (x0 + fx * (x1 - x0), y0 + fy * (y1 - y0))
            if free(p):
                d = min(distance_to_boundary(poly, p) for poly in [room.contour, *blockers])
                if d > best_d:
                    best, best_d = p, d
    return best


def _approach_person(world: WorldState, person) -> Pose2:
    rx, ry = world.robot.pose.position
    px, py = person.position
    dx, dy = rx - px, ry - py
    norm = math.hypot(dx, dy)
    if norm < 1e-9:
        dx, dy, norm = -1.0, 0.0, 1.0
    gx, gy = px + DEFAULT_STANDOFF * dx / norm, py + DEFAULT_STANDOFF * dy / norm
    return Pose2(gx, gy, math.atan2(py - gy, px - gx))


def _move(world, args):
    kind, target = _location_kind(world, args["location"])
    if kind == "furniture":
        try:
            pose = navigation_point(world.map, target.name, DEFAULT_STANDOFF)
        except HomecoreError as exc:
            return Outcome(False, error=exc.code, message=str(exc)), world
        name = target.name
    elif kind == "room":
        gx, gy = _interior_point(world, target)
        rx, ry = world.robot.pose.position
        yaw = math.atan2(gy - ry, gx - rx) if math.hypot(gx - rx, gy - ry) > 1e-9 else world.robot.pose.yaw
        pose, name = Pose2(gx, gy, yaw), target.name
    else:
        pose, name = _approach_person(world, target), target.name
    robot = replace(world.robot, pose=pose, at=name)
    return Outcome(True, {"location": name, "pose": pose.to_dict(),
                          "room": locate(world.map, pose.position)}), updated(world, robot)


_QUALIFIERS = {
    "right-most": "right", "rightmost": "right", "left-most": "left", "leftmost": "left",
    "closest": "closest", "nearest": "closest", "farthest": "farthest", "furthest": "farthest",
}
_FILLER = {"the", "a", "an", "object", "objects", "item", "thing", "one", "any", "some"}


def parse_description(description: str) -> tuple[str | None, list[str]]:
    words = re.findall(r"[a-z][a-z\-]*", description.lower())
    qualifier = next((_QUALIFIERS[w] for w in words if w in _QUALIFIERS), None)
    nouns = [w for w in words if w not in _QUALIFIERS and w not in _FILLER]
    return qualifier, nouns


def _matches(obj, nouns) -> bool:
    if not nouns:
        return True
    names = {obj.cls.lower(), obj.name.lower(), *obj.name.lower().replace("-", "_").split("_")}
    return all(n in names or n.rstrip("s") in names for n in nouns)


def _candidates(world: WorldState):
    at = world.robot.at
    if at is not None and world.resolve_furniture(at) is not None:
        surfaces = {world.resolve_furniture(at).name}
    else:
        room = world.robot_room
        surfaces = {f.name for f in world.map.furniture if f.room == room}
    return [o for o in world.objects.values() if o.surface in surfaces]


def right_projection(pose: Pose2, point) -> float:
    """Signed distance of ``point`` along the robot's right-hand axis."""
    return (point[0] - pose.x) * math.sin(pose.yaw) - (point[1] - pose.y) * math.cos(pose.yaw)


def _find_obj(world, args):
    qualifier, nouns = parse_description(args["description"])
    found = [o for o in _candidates(world) if _matches(o, nouns)]
    if not found:
        return Outcome(False, error="NotFound",
                       message=f"nothing matching {args['description']!r} here"), world
    pose = world.robot.pose
    if qualifier == "right":
        best = max(found, key=lambda o: (right_projection(pose, o.position), o.name))
    elif qualifier == "left":
        best = min(found, key=lambda o: (right_projection(pose, o.position), o.name))
    elif qualifier == "farthest":
        best = max(found, key=lambda o: (distance2(pose.position, o.position), o.name))
    else:
        best = min(found, key=lambda o: (distance2(pose.position, o.position), o.name))
    robot = replace(world.robot, found=best.name)
    return Outcome(True, {"found": best.name, "class": best.cls,
                          "candidates": sorted(o.name for o in found)}), updated(world, robot)


def object_cloud(world: WorldState, obj, per_face: int = 6) -> np.ndarray:
    """Surface samples of the object's box in the robot's head-camera frame (z forward, -y up)."""
    w, d, h = obj.size
    g = np.linspace(-0.5, 0.5, per_face)
    a, b = np.meshgrid(g, g)
    a, b = a.ravel(), b.ravel()
    faces = []
    for axis in range(3):
        for side in (-0.5, 0.5):
            pts = np.empty((len(a), 3))
            others = [i for i in range(3) if i != axis]
            pts[:, axis] = side
            pts[:, others[0]] = a
            pts[:, others[1]] = b
            faces.append(pts)
    local = np.unique(np.vstack(faces), axis=0) * np.array([w, d, h])
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    world_pts = local @ np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]).T
    world_pts += np.array([obj.position[0], obj.position[1], obj.position[2] + h / 2])
    pose = world.robot.pose
    rel = world_pts - np.array([pose.x, pose.y, CAMERA_HEIGHT])
    forward = np.array([math.cos(pose.yaw), math.sin(pose.yaw), 0.0])
    right = np.array([math.sin(pose.yaw), -math.cos(pose.yaw), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    return np.stack([rel @ right, rel @ down, rel @ forward], axis=1)


def _grasp(world, args):
    obj = world.resolve_object(args["object"])
    bbox = pca_bbox(object_cloud(world, obj))
    pose = decide_grasp(bbox)
    robot = replace(world.robot, held=obj.name)
    taken = replace(obj, surface=None, holder="robot")
    return Outcome(True, {"object": obj.name, "approach": pose.approach.value}), \
        updated(world, robot, {obj.name: taken})


PLACE_INSET = 0.1


def _drop_point(contour, robot_xy) -> tuple[float, float]:
    """Point on the surface nearest the robot, pulled ``PLACE_INSET`` toward the centroid."""
    rx, ry = robot_xy
    best, best_d = None, math.inf
    for (ax, ay), (bx, by) in contour.edges():
        dx, dy = bx - ax, by - ay
        t = max(0.0, min(1.0, ((rx - ax) * dx + (ry - ay) * dy) / (dx * dx + dy * dy)))
        qx, qy = ax + t * dx, ay + t * dy
        d = math.hypot(rx - qx, ry - qy)
        if d < best_d:
            best, best_d = (qx, qy), d
    cx, cy = contour.centroid
    gap = math.hypot(cx - best[0], cy - best[1])
    if gap <= PLACE_INSET:
        return cx, cy
    k = PLACE_INSET / gap
    return best[0] + k * (cx - best[0]), best[1] + k * (cy - best[1])


def _place(world, args):
    f = world.resolve_furniture(args["location"])
    obj = world.held_object()
    if contains_point(f.contour, world.robot.pose.position):
        cx, cy = world.robot.pose.position
    else:
        cx, cy = _drop_point(f.contour, world.robot.pose.position)
    placed = replace(obj, surface=f.name, holder=None, position=(cx, cy, obj.position[2]))
    robot = replace(world.robot, held=None)
    return Outcome(True, {"object": obj.name, "location": f.name}), updated(world, robot, {obj.name: placed})


def _hand_over(world, args):
    person = world.resolve_person(args["person"])
    obj = world.held_object()
    given = replace(obj, holder=person.name, surface=None)
    robot = replace(world.robot, held=None)
    return Outcome(True, {"object": obj.name, "person": person.name}), updated(world, robot, {obj.name: given})


def _find_person(world, args):
    person = world.resolve_person(args["name"])
    return Outcome(True, {"person": person.name, "position": list(person.position),
                          "room": locate(world.map, person.position)}), world


def _follow_person(world, args):
    person = world.resolve_person(args["name"])
    pose = _approach_person(world, person)
    robot = replace(world.robot, pose=pose, at=person.name)
    return Outcome(True, {"person": person.name, "pose": pose.to_dict()}), updated(world, robot)


def _speak(world, args):
    return Outcome(True, {"said": args["text"]}), world


def _ask(world, args):
    person = world.resolve_person(args["person"])
    reply = person.question or "Nothing, thank you."
    return Outcome(True, {"person": person.name, "asked": args["question"], "reply": reply}), world


def _answer(world, args):
    key = name_key(args["question"]).rstrip("?").strip()
    text = world.knowledge.get(key) or "I am sorry, I do not know the answer."
    return Outcome(True, {"question": args["question"], "said": text}), world


def _open_door(world, args):
    door = world.resolve_door(args["door"])
    doors = tuple(sorted(set(world.open_doors) | {door.name}))
    return Outcome(True, {"door": door.name}), updated(world, open_doors=doors)


def _wait(world, args):
    return Outcome(True, {"waited": args["seconds"]}), updated(world, clock=world.clock + args["seconds"])


_HANDLERS = {
    Skill.MOVE: _move, Skill.FIND_OBJ: _find_obj, Skill.GRASP: _grasp, Skill.PLACE: _place,
    Skill.HAND_OVER: _hand_over, Skill.FIND_PERSON: _find_person,
    Skill.FOLLOW_PERSON: _follow_person, Skill.SPEAK: _speak, Skill.ASK: _ask,
    Skill.ANSWER: _answer, Skill.OPEN_DOOR: _open_door, Skill.WAIT: _wait,
}


def execute_skill(call: SkillCall, world: WorldState) -> tuple[Outcome, WorldState, dict]:
    """Run one call. Returns the outcome, the new world, and the state delta.

    Raises PreconditionFailed when :func:`validate_call` reports violations.
    Runtime failures (nothing found, no reachable goal) come back as an
    unsuccessful outcome with an empty delta.
    """
    violations = validate_call(call, world)
    if violations:
        raise PreconditionFailed(f"{call}: " + "; ".join(map(str, violations)),
                                 skill=getattr(call.skill, "value", str(call.skill)),
                                 reasons=[v.code for v in violations])
    outcome, new_world = _HANDLERS[call.skill](world, call.args)
    if not outcome.ok:
        return outcome, world, {}
    return outcome, new_world, diff(world.state_dict(), new_world.state_dict())
