"""Sequential skill selection and execution until the command is done."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import BackendError, CommandError, StepLimitExceeded
from .backends import DONE, BackendContext, observe
from .executor import Outcome, execute_skill, validate_call
from .skills import SkillCall
from .world import WorldState, apply_delta, world_from_state

STEP_LIMIT = 20


@dataclass(frozen=True)
class Step:
    index: int
    call: SkillCall
    outcome: Outcome
    delta: dict

    def to_dict(self) -> dict:
        return {"index": self.index, "call": self.call.to_dict(),
                "outcome": self.outcome.to_dict(), "delta": self.delta}


@dataclass
class Transcript:
    command: str
    initial: dict
    steps: list[Step] = field(default_factory=list)
    status: str = "running"
    reason: str | None = None
    final: dict | None = None

    @property
    def done(self) -> bool:
        return self.status == "done"

    def calls(self) -> list[str]:
        return [str(s.call) for s in self.steps]

    def to_dict(self) -> dict:
        return {"command": self.command, "status": self.status, "reason": self.reason,
                "steps": [s.to_dict() for s in self.steps],
                "initial_state": self.initial, "final_state": self.final}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def plan_and_execute(command: str, world: WorldState, backend,
                     step_limit: int = STEP_LIMIT) -> tuple[Transcript, WorldState]:
    """Ask ``backend`` for one skill at a time and run it until done, failed, or out of steps."""
    text = command.strip() if isinstance(command, str) else ""
    if not text:
        raise CommandError("command is empty")
    transcript = Transcript(text, world.state_dict())
    context = BackendContext(text, observe(world))
    for index in range(step_limit):
        try:
            proposal = backend(context)
        except BackendError as exc:
            exc.context["step"] = index
            raise
        if proposal is DONE:
            transcript.status = "done"
            break
        violations = validate_call(proposal, world)
        if violations:
            if not isinstance(proposal, SkillCall):
                raise BackendError(f"backend proposed a non-skill value {proposal!r}", step=index)
            first = violations[0]
            outcome = Outcome(False, error=first.code, message="; ".join(map(str, violations)))
            transcript.steps.append(Step(index, proposal, outcome, {}))
            transcript.status, transcript.reason = "failed", first.code
            break
        outcome, world, delta = execute_skill(proposal, world)
        transcript.steps.append(Step(index, proposal, outcome, delta))
        if not outcome.ok:
            transcript.status, transcript.reason = "failed", outcome.error
            break
        context.record(proposal, outcome)
        context.observation = observe(world)
    else:
        transcript.status, transcript.reason = "failed", "StepLimitExceeded"
        transcript.final = world.state_dict()
        raise StepLimitExceeded(f"no completion within {step_limit} steps",
                                transcript=transcript.to_dict(), steps=step_limit)
    transcript.final = world.state_dict()
    return transcript, world


def replay(transcript: Transcript | dict, world: WorldState) -> tuple[dict, list[str]]:
    """Re-apply recorded deltas from the initial state, re-checking every executed step.

    Returns the reconstructed final state and a list of problems (empty when
    every successful step still validates at its point in the replay).
    """
    data = transcript.to_dict() if isinstance(transcript, Transcript) else transcript
    state = data["initial_state"]
    problems = []
    for step in data["steps"]:
        current = world_from_state(world.map, state)
        if not step["outcome"]["ok"]:
            continue
        try:
            call = SkillCall(step["call"]["skill"], step["call"]["args"])
        except Exception as exc:  # noqa: BLE001 - any schema error is a replay problem
            problems.append(f"step {step['index']}: {exc}")
            continue
        for v in validate_call(call, current):
            problems.append(f"step {step['index']}: {v}")
        state = apply_delta(state, step["delta"])
    if state != data["final_state"]:
        problems.append("replayed state differs from recorded final state")
    return state, problems
