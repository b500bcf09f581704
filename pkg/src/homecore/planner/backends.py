"""Planner backends: a deterministic template grammar and an HTTP LLM client.

A backend is any callable ``backend(context) -> SkillCall | DONE``.
"""

from __future__ import annotations

import json
import logging
import os
import re
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from ..errors import BackendError, HttpError, SchemaViolation, Timeout, UnparsableCommand
from .skills import SkillCall, parse_call, skill_listing

log = logging.getLogger(__name__)

ROLE = (
    "You are the task planner of a domestic service robot. The user gives one command. "
    "Choose the next skill to run from the skill set, with its arguments, based on the "
    "command, the skills already executed and their results, and the current observation. "
    "Use object names exactly as reported by find_obj. When the command is complete, finish."
)

REPLY_FORMAT = (
    'Reply with exactly one JSON object and nothing else: {"skill": "<name>", "args": {...}} '
    'for the next skill, or {"done": true} when the command is complete.'
)


class _Done:
    def __repr__(self) -> str:
        return "DONE"


DONE = _Done()


@dataclass
class BackendContext:
    command: str
    observation: dict
    history: list = field(default_factory=list)
    role: str = ROLE
    skills: str = field(default_factory=skill_listing)

    def record(self, call: SkillCall, outcome) -> None:
        self.history.append((call, outcome))

    def to_dict(self) -> dict:
        return {"role": self.role, "command": self.command, "skills": self.skills,
                "history": [{"call": c.to_dict(), "outcome": o.to_dict()} for c, o in self.history],
                "observation": self.observation}

    def prompt(self) -> str:
        lines = [f"Command: {self.command}", "", "Skill set:", self.skills, "", "Executed so far:"]
        if not self.history:
            lines.append("(nothing yet)")
        for i, (call, outcome) in enumerate(self.history, 1):
            lines.append(f"{i}. {json.dumps(call.to_dict())} -> {json.dumps(outcome.to_dict())}")
        lines += ["", "Observation:", json.dumps(self.observation, sort_keys=True), "", REPLY_FORMAT]
        return "\n".join(lines)


def observe(world) -> dict:
    """Compact world summary handed to backends."""
    robot = world.robot
    return {
        "robot": {"room": world.robot_room, "at": robot.at, "held": robot.held,
                  "pose": [round(robot.pose.x, 3), round(robot.pose.y, 3), round(robot.pose.yaw, 3)]},
        "rooms": [r.name for r in world.map.rooms],
        "furniture": {f.name: f.room for f in world.map.furniture},
        "doors": [d.name for d in world.map.doors],
        "persons": sorted(world.persons),
        "operator": world.operator,
    }


# --------------------------------------------------------------------------- rule backend

_ART = r"(?:(?:the|a|an|my)\s+)?"
_FOUND = "<found>"
_REPLY = "<reply>"

TEMPLATES = [
    ("bring/fetch X from Y [to P]",
     re.compile(rf"(?:bring|fetch|get|grab|give)\s+(?:me\s+)?{_ART}(?P<obj>.+?)\s+(?:from|on|in|at)\s+"
                rf"{_ART}(?P<loc>.+?)(?:\s+(?:to|for)\s+{_ART}(?P<person>.+))?"),
     lambda m: [("move", {"location": m["loc"]}), ("find_obj", {"description": m["obj"]}),
                ("grasp", {"object": _FOUND}), ("move", {"location": m["person"] or "operator"}),
                ("hand_over", {"person": m["person"] or "operator"})]),
    ("take X from Y to Z",
     re.compile(rf"(?:take|put|carry|move|place)\s+{_ART}(?P<obj>.+?)\s+from\s+{_ART}(?P<src>.+?)\s+"
                rf"(?:to|on|onto|in|into)\s+{_ART}(?P<dst>.+)"),
     lambda m: [("move", {"location": m["src"]}), ("find_obj", {"description": m["obj"]}),
                ("grasp", {"object": _FOUND}), ("move", {"location": m["dst"]}),
                ("place", {"location": m["dst"]})]),
    ("go to Y",
     re.compile(rf"(?:go|move|navigate|head)\s+to\s+{_ART}(?P<loc>.+)"),
     lambda m: [("move", {"location": m["loc"]})]),
    ("find X in Y",
     re.compile(rf"(?:find|look\s+for|locate|search\s+for)\s+{_ART}(?P<obj>.+?)\s+(?:in|on|at)\s+{_ART}(?P<loc>.+)"),
     lambda m: [("move", {"location": m["loc"]}), ("find_obj", {"description": m["obj"]})]),
    ("find P",
     re.compile(r"(?:find|look\s+for|locate)\s+(?P<name>[a-z]+)"),
     lambda m: [("find_person", {"name": m["name"]}), ("move", {"location": m["name"]})]),
    ("greet P",
     re.compile(rf"(?:greet|say\s+hello\s+to)\s+{_ART}(?P<name>[a-z]+)"),
     lambda m: [("find_person", {"name": m["name"]}), ("move", {"location": m["name"]}),
                ("speak", {"text": f"Hello, {m['name'].capitalize()}!"})]),
    ("answer the question of P",
     re.compile(rf"answer\s+{_ART}question\s+(?:of|from)\s+{_ART}(?P<name>[a-z]+)"),
     lambda m: [("find_person", {"name": m["name"]}), ("move", {"location": m["name"]}),
                ("ask", {"person": m["name"]}), ("answer", {"question": _REPLY})]),
    ("follow P",
     re.compile(rf"follow\s+{_ART}(?P<name>[a-z]+)"),
     lambda m: [("find_person", {"name": m["name"]}), ("follow_person", {"name": m["name"]})]),
    ("open D",
     re.compile(rf"open\s+{_ART}(?P<door>.+)"),
     lambda m: [("open_door", {"door": m["door"]})]),
    ("wait N seconds",
     re.compile(r"wait\s+(?:for\s+)?(?P<n>\d+(?:\.\d+)?)\s+seconds?"),
     lambda m: [("wait", {"seconds": float(m["n"])})]),
    ("say TEXT",
     re.compile(r"(?:say|tell\s+everyone)\s+(?P<text>.+)"),
     lambda m: [("speak", {"text": m["text"]})]),
]


def normalize_command(text: str) -> str:
    text = " ".join(text.strip().lower().split())
    text = re.sub(r"^(?:please|robot|hey robot)[,\s]+", "", text)
    return text.rstrip(".!?").strip()


def expand(command: str) -> list[tuple[str, dict]]:
    """Canonical skill sequence (with placeholders) for a templated command."""
    text = normalize_command(command)
    for _, pattern, build in TEMPLATES:
        m = pattern.fullmatch(text)
        if m:
            return build(m)
    raise UnparsableCommand(f"command {command!r} matches no template; supported: "
                            + "; ".join(name for name, _, _ in TEMPLATES),
                            templates=[name for name, _, _ in TEMPLATES])


def _last_result(history, skill: str, key: str):
    for call, outcome in reversed(history):
        if call.skill.value == skill and key in outcome.result:
            return outcome.result[key]
    raise BackendError(f"no earlier {skill} result to refer to")


def rule_backend(context: BackendContext):
    plan = expand(context.command)
    step = len(context.history)
    if step >= len(plan):
        return DONE
    skill, args = plan[step]
    resolved = {}
    for key, value in args.items():
        if value == _FOUND:
            value = _last_result(context.history, "find_obj", "found")
        elif value == _REPLY:
            value = _last_result(context.history, "ask", "reply")
        resolved[key] = value
    return SkillCall(skill, resolved)


# --------------------------------------------------------------------------- LLM backend


def _reply_text(body) -> str:
    """Pull the assistant text out of common chat-completion response shapes."""
    if isinstance(body, dict):
        if "skill" in body or "done" in body:
            return json.dumps(body)
        content = body.get("content")
        if isinstance(content, str):
            return content
        if isinstance(content, list):
            return "".join(block.get("text", "") for block in content if isinstance(block, dict))
        choices = body.get("choices")
        if isinstance(choices, list) and choices:
            message = choices[0].get("message", {}) if isinstance(choices[0], dict) else {}
            if isinstance(message.get("content"), str):
                return message["content"]
        message = body.get("message")
        if isinstance(message, dict) and isinstance(message.get("content"), str):
            return message["content"]
    raise SchemaViolation("response body carries no reply text")


def interpret_reply(text: str):
    """Strictly decode one reply: a skill call object or ``{"done": true}``."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"reply is not valid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise SchemaViolation("reply must be a JSON object")
    if "done" in obj:
        if obj != {"done": True}:
            raise SchemaViolation('a finishing reply must be exactly {"done": true}')
        return DONE
    return parse_call(obj)


@dataclass
class LlmBackend:
    endpoint: str
    api_key: str | None = None
    timeout: float = 30.0
    retries: int = 2
    requests: int = 0

    @classmethod
    def from_env(cls, endpoint: str | None = None, **kwargs) -> "LlmBackend":
        endpoint = endpoint or os.environ.get("LLM_ENDPOINT")
        if not endpoint:
            raise BackendError("no LLM endpoint configured (use --endpoint or LLM_ENDPOINT)")
        return cls(endpoint, os.environ.get("LLM_API_KEY"), **kwargs)

    def _post(self, payload: dict):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        request = urllib.request.Request(self.endpoint, json.dumps(payload).encode(), headers, method="POST")
        self.requests += 1
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                raw = response.read()
        except urllib.error.HTTPError as exc:
            raise HttpError(f"LLM endpoint returned HTTP {exc.code}", status=exc.code) from None
        except (socket.timeout, TimeoutError) as exc:
            raise Timeout(f"LLM endpoint did not answer within {self.timeout} s") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                raise Timeout(f"LLM endpoint did not answer within {self.timeout} s") from exc
            raise HttpError(f"cannot reach LLM endpoint: {exc.reason}") from exc
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            return {"content": raw.decode("utf-8", "replace")}

    def __call__(self, context: BackendContext):
        messages = [{"role": "user", "content": context.prompt()}]
        last_error = None
        for attempt in range(self.retries + 1):
            body = self._post({"system": context.role, "messages": messages})
            try:
                text = _reply_text(body)
            except SchemaViolation as exc:
                text, last_error = json.dumps(body), exc
            else:
                try:
                    return interpret_reply(text.strip())
                except SchemaViolation as exc:
                    last_error = exc
            log.info("rejected LLM reply (attempt %d): %s", attempt + 1, last_error)
            messages += [{"role": "assistant", "content": text},
                         {"role": "user", "content": f"Your reply was rejected: {last_error}. {REPLY_FORMAT}"}]
        raise SchemaViolation(f"no valid reply after {self.retries} retries: {last_error}",
                              attempts=self.retries + 1)
