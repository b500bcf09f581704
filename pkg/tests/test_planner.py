import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from homecore.errors import (
    BackendError,
    CommandError,
    HttpError,
    PreconditionFailed,
    SchemaViolation,
    StepLimitExceeded,
    Timeout,
    UnparsableCommand,
)
from homecore.planner import (
    DONE,
    STEP_LIMIT,
    BackendContext,
    LlmBackend,
    Skill,
    SkillCall,
    apply_delta,
    diff,
    execute_skill,
    expand,
    parse_call,
    plan_and_execute,
    replay,
    rule_backend,
    validate_call,
    world_from_dict,
)
from homecore.planner.backends import interpret_reply
from homecore.semantic_map import DEFAULT_STANDOFF, contains_point, navigation_point
from corpus import COMMANDS, PAPER_EXAMPLE
from oracles import MockLlm, chat, world_dict


def small_world(**kw):
    return world_from_dict(world_dict(**kw))


def call(skill, **args):
    return SkillCall(skill, args)


def codes(call_, world):
    return [v.code for v in validate_call(call_, world)]


def run(world, *calls):
    for c in calls:
        _, world, _ = execute_skill(c, world)
    return world


class TestSkills:
    def test_closed_set(self):
        assert [s.value for s in Skill] == [
            "find_obj", "grasp", "move", "place", "hand_over", "find_person", "follow_person",
            "speak", "ask", "answer", "open_door", "wait"]

    @pytest.mark.parametrize("obj", [
        {"skill": "teleport", "args": {"location": "kitchen"}},
        {"skill": "move"},
        {"skill": "move", "args": {"location": ""}},
        {"skill": "move", "args": {"location": "kitchen", "speed": 2}},
        {"skill": "wait", "args": {"seconds": -1}},
        {"skill": "wait", "args": {"seconds": True}},
        {"skill": "wait", "args": {"seconds": float("nan")}},
        {"skill": "move", "args": {"location": 3}},
        {"skill": "move", "args": ["kitchen"]},
        {"skill": "move", "args": {"location": "kitchen"}, "why": "because"},
        {"skill": ["move"]},
        ["move", "kitchen"],
    ])
    def test_schema_rejects(self, obj):
        with pytest.raises(SchemaViolation):
            parse_call(obj)

    def test_defaults_and_normalization(self):
        c = parse_call({"skill": "hand_over", "args": {}})
        assert c.args == {"person": "operator"}
        assert parse_call({"skill": "wait", "args": {"seconds": 2}}).args == {"seconds": 2.0}
        assert parse_call({"skill": "move", "args": {"location": "  kitchen "}}).args == {"location": "kitchen"}
        assert str(call("wait", seconds=2.5)) == "wait(2.5)"


class TestValidate:
    def test_clean_calls(self):
        w = small_world()
        for c in [call("move", location="counter"), call("move", location="Hall"), call("move", location="ann"),
                  call("find_person", name="ann"), call("speak", text="hi"), call("open_door", door="hall door"),
                  call("wait", seconds=0)]:
            assert codes(c, w) == []

    def test_name_checks(self):
        w = small_world()
        assert codes(call("move", location="garage"), w) == ["UnknownLocation"]
        assert codes(call("find_person", name="zoe"), w) == ["UnknownPerson"]
        assert codes(call("open_door", door="garage door"), w) == ["UnknownDoor"]
        assert codes(call("grasp", object="plate"), w) == ["UnknownObject"]

    def test_reach_and_hand(self):
        w = small_world(robot={"pose": [6.0, 2.0, 0.0]})
        assert codes(call("grasp", object="cup"), w) == ["OutOfReach"]
        assert codes(call("place", location="counter"), w) == ["OutOfReach", "NothingHeld"]
        assert codes(call("hand_over", person="ann"), w) == ["OutOfReach", "NothingHeld"]
        w = run(small_world(), call("move", location="counter"), call("grasp", object="cup"))
        assert codes(call("grasp", object="cup"), w) == ["ObjectUnavailable", "HandOccupied"]

    def test_not_a_call(self):
        assert codes({"skill": "move"}, small_world()) == ["BadCall"]

    def test_execute_refuses_violations(self):
        with pytest.raises(PreconditionFailed) as info:
            execute_skill(call("place", location="counter"), small_world())
        # robot at (2, 2) is 1.3 m from the counter edge
        assert info.value.context["reasons"] == ["OutOfReach", "NothingHeld"]


class TestExecute:
    def test_move_to_furniture_uses_navigation_point(self):
        w = small_world()
        outcome, after, delta = execute_skill(call("move", location="counter"), w)
        goal = navigation_point(w.map, "counter", DEFAULT_STANDOFF)
        assert after.robot.pose == goal and after.robot.at == "counter"
        assert delta["robot"]["pose"] == [goal.x, goal.y, goal.yaw]
        assert outcome.result["room"] == "kitchen"

    @pytest.mark.parametrize("room", ["kitchen", "living_room", "bedroom"])
    def test_move_to_room_lands_on_free_floor(self, demo, room):
        _, after, _ = execute_skill(call("move", location=room), demo)
        pos = after.robot.pose.position
        assert after.robot_room == room
        assert not any(contains_point(f.contour, pos) for f in demo.map.furniture)

    def test_move_to_person_stops_short(self):
        _, after, _ = execute_skill(call("move", location="ann"), small_world())
        d = math.dist(after.robot.pose.position, (1.0, 3.0))
        assert d == pytest.approx(DEFAULT_STANDOFF)
        px, py = after.robot.pose.position
        assert math.atan2(3.0 - py, 1.0 - px) == pytest.approx(after.robot.pose.yaw)

    @pytest.mark.parametrize("qualifier, expected", [("right-most", "b"), ("left-most", "a"),
                                                     ("closest", "c"), ("farthest", "b")])
    def test_qualifiers(self, qualifier, expected):
        # robot at (2, 2) facing +x: right projections 0.2, 0.5, 0.3
        objects = [{"name": n, "class": "thing", "position": [2.0 + dx, 2.0 - r, 0.9], "surface": "counter"}
                   for n, r, dx in (("a", 0.2, 0.6), ("b", 0.5, 0.7), ("c", 0.3, 0.1))]
        outcome, after, _ = execute_skill(call("find_obj", description=f"the {qualifier} object"),
                                          small_world(objects=objects))
        assert outcome.result["found"] == expected and after.robot.found == expected
        assert outcome.result["candidates"] == ["a", "b", "c"]

    @given(st.floats(-math.pi, math.pi), st.lists(st.tuples(st.floats(0.5, 3.5), st.floats(0.5, 3.5)),
                                                   min_size=1, max_size=6, unique=True))
    def test_right_most_oracle(self, yaw, points):
        objects = [{"name": f"o{i}", "class": "thing", "position": [x, y, 0.9], "surface": "counter"}
                   for i, (x, y) in enumerate(points)]
        w = small_world(objects=objects, robot={"pose": [2.0, 2.0, yaw]})
        found = execute_skill(call("find_obj", description="right-most object"), w)[0].result["found"]
        right = (math.sin(yaw), -math.cos(yaw))
        proj = {f"o{i}": (x - 2) * right[0] + (y - 2) * right[1] for i, (x, y) in enumerate(points)}
        assert proj[found] >= max(proj.values()) - 1e-12

    def test_class_filter_and_not_found(self):
        w = small_world()
        outcome, after, delta = execute_skill(call("find_obj", description="bowl"), w)
        assert not outcome.ok and outcome.error == "NotFound"
        assert after is w and delta == {}

    def test_grasp_place_hand_over(self):
        w = run(small_world(), call("move", location="counter"))
        outcome, w, delta = execute_skill(call("grasp", object="cup"), w)
        assert outcome.result["approach"] in ("top", "front")
        assert w.robot.held == "cup" and w.objects["cup"].holder == "robot"
        assert delta["objects"]["cup"] == {"surface": None, "holder": "robot"}
        w = run(w, call("move", location="table"), call("place", location="table"))
        assert w.objects["cup"].surface == "table" and w.robot.held is None
        cup_xy = w.objects["cup"].position[:2]
        assert contains_point(w.map.furniture_named("table").contour, cup_xy)
        assert math.dist(cup_xy, w.robot.pose.position) <= 1.0
        w = run(w, call("grasp", object="cup"), call("move", location="operator"),
                call("hand_over", person="operator"))
        assert w.objects["cup"].holder == "operator"

    def test_ask_and_answer(self):
        w = small_world()
        reply = execute_skill(call("ask", person="ann"), w)[0].result["reply"]
        assert reply == "What is two plus two?"
        assert execute_skill(call("answer", question=reply), w)[0].result["said"] == "Four."
        assert "do not know" in execute_skill(call("answer", question="Why?"), w)[0].result["said"]

    def test_delta_reconstructs_state(self, demo):
        w = demo
        for c in [call("move", location="counter"), call("grasp", object="mug"), call("wait", seconds=2),
                  call("open_door", door="kitchen_door"), call("move", location="operator")]:
            before = w.state_dict()
            _, w, delta = execute_skill(c, w)
            assert apply_delta(before, delta) == w.state_dict()


leaf = st.one_of(st.integers(), st.text(max_size=3), st.none(), st.lists(st.integers(), max_size=3))


@given(st.dictionaries(st.sampled_from("abcd"), st.one_of(leaf, st.dictionaries(st.sampled_from("xy"), leaf))),
       st.data())
def test_diff_apply_round_trip(before, data):
    after = {}
    for key, value in before.items():
        if isinstance(value, dict):
            after[key] = {k: data.draw(leaf) if data.draw(st.booleans()) else v for k, v in value.items()}
        else:
            after[key] = data.draw(leaf) if data.draw(st.booleans()) else value
    assert apply_delta(before, diff(before, after)) == after
    assert diff(after, after) == {}


class TestRuleBackend:
    def test_paper_example_sequence(self, demo):
        transcript, _ = plan_and_execute(PAPER_EXAMPLE, demo, rule_backend)
        assert transcript.done
        assert [s.call.skill.value for s in transcript.steps] == ["move", "find_obj", "grasp", "move", "hand_over"]
        assert transcript.calls() == ["move(counter)", "find_obj(right-most object)", "grasp(bottle)",
                                      "move(operator)", "hand_over(operator)"]

    @pytest.mark.parametrize("command", COMMANDS)
    def test_corpus_completes_and_replays(self, demo, command):
        transcript, _ = plan_and_execute(command, demo, rule_backend)
        assert transcript.done, (transcript.status, transcript.reason)
        state, problems = replay(json.loads(transcript.to_json()), demo)
        assert problems == [] and state == transcript.final

    def test_templates_are_normalized(self):
        assert expand("  PLEASE, go to   the Kitchen!! ") == [("move", {"location": "kitchen"})]

    def test_unparsable(self):
        with pytest.raises(UnparsableCommand) as info:
            expand("recite a poem")
        assert len(info.value.context["templates"]) >= 10

    @pytest.mark.parametrize("command", ["", "   ", None])
    def test_empty_command(self, demo, command):
        with pytest.raises(CommandError):
            plan_and_execute(command, demo, rule_backend)

    def test_unknown_location_fails_without_moving(self, demo):
        transcript, after = plan_and_execute("go to the piano", demo, rule_backend)
        assert transcript.status == "failed" and transcript.reason == "UnknownLocation"
        assert transcript.steps[0].delta == {} and after.state_dict() == demo.state_dict()

    def test_runtime_failure_stops(self, demo):
        transcript, _ = plan_and_execute("bring me the banana from the counter", demo, rule_backend)
        assert transcript.status == "failed" and transcript.reason == "NotFound"
        assert len(transcript.steps) == 2

    def test_deterministic_transcript(self, demo):
        a = plan_and_execute(PAPER_EXAMPLE, demo, rule_backend)[0].to_json()
        b = plan_and_execute(PAPER_EXAMPLE, demo, rule_backend)[0].to_json()
        assert a == b

    def test_replay_catches_tampering(self, demo):
        data = plan_and_execute(PAPER_EXAMPLE, demo, rule_backend)[0].to_dict()
        data["steps"][0]["delta"]["robot"]["pose"] = [9.0, 7.0, 0.0]
        _, problems = replay(data, demo)
        assert any("OutOfReach" in p for p in problems)
        data = plan_and_execute(PAPER_EXAMPLE, demo, rule_backend)[0].to_dict()
        data["steps"][1]["call"] = {"skill": "teleport", "args": {}}
        assert replay(data, demo)[1]


class TestLoop:
    def test_step_limit(self, demo):
        with pytest.raises(StepLimitExceeded) as info:
            plan_and_execute("wait forever", demo, lambda ctx: call("wait", seconds=1))
        assert len(info.value.context["transcript"]["steps"]) == STEP_LIMIT == 20
        with pytest.raises(StepLimitExceeded):
            plan_and_execute("wait forever", demo, lambda ctx: call("wait", seconds=1), step_limit=3)

    def test_backend_sees_history_and_observation(self, demo):
        seen = []

        def backend(ctx):
            seen.append((len(ctx.history), ctx.observation["robot"]["at"]))
            return call("move", location="counter") if not ctx.history else DONE

        plan_and_execute("anything", demo, backend)
        assert seen == [(0, None), (1, "counter")]

    def test_non_call_proposal(self, demo):
        with pytest.raises(BackendError):
            plan_and_execute("x", demo, lambda ctx: "move(kitchen)")

    def test_prompt_contents(self, demo):
        ctx = BackendContext(PAPER_EXAMPLE, {"robot": {}})
        text = ctx.prompt()
        assert PAPER_EXAMPLE in text and "hand_over(person: string (optional))" in text
        assert '{"done": true}' in text


FIRST = {"skill": "move", "args": {"location": "counter"}}


class TestLlmBackend:
    def test_valid_plan(self, demo):
        script = [chat(json.dumps(FIRST)), chat('{"skill": "find_obj", "args": {"description": "right-most object"}}'),
                  chat('{"skill": "grasp", "args": {"object": "bottle"}}'),
                  {"choices": [{"message": {"content": '{"skill": "move", "args": {"location": "operator"}}'}}]},
                  {"content": '{"skill": "hand_over", "args": {}}'}, {"done": True}]
        with MockLlm(script) as llm:
            transcript, _ = plan_and_execute(PAPER_EXAMPLE, demo, LlmBackend(llm.url, "k123", timeout=5))
        assert transcript.done and transcript.calls()[2] == "grasp(bottle)"
        assert len(llm.requests) == 6
        first = llm.requests[0]
        assert "task planner" in first["system"] and PAPER_EXAMPLE in first["messages"][0]["content"]
        assert llm.headers[0]["Authorization"] == "Bearer k123"
        assert "grasp" in llm.requests[3]["messages"][0]["content"]  # history carried forward

    def test_prose_then_valid(self, demo):
        with MockLlm([chat("Sure! First I will move to the counter."), chat(json.dumps(FIRST)),
                      chat('{"done": true}')]) as llm:
            transcript, _ = plan_and_execute("go to the counter", demo, LlmBackend(llm.url, timeout=5))
        assert transcript.done and transcript.calls() == ["move(counter)"]
        retry = llm.requests[1]["messages"]
        assert [m["role"] for m in retry] == ["user", "assistant", "user"]
        assert "rejected" in retry[2]["content"]
        assert "Authorization" not in llm.headers[0]

    @pytest.mark.parametrize("reply", [
        '{"skill": "teleport", "args": {"location": "kitchen"}}',
        '{"skill": "move", "args": {"location": "counter"',
        '[{"skill": "move"}]',
        '{"done": false}',
    ])
    def test_invalid_reply_never_executes(self, demo, reply):
        with MockLlm([chat(json.dumps(FIRST))] + [chat(reply)] * 3) as llm:
            with pytest.raises(SchemaViolation) as info:
                plan_and_execute("go to the counter", demo, LlmBackend(llm.url, timeout=5))
        assert info.value.context == {"attempts": 3, "step": 1}
        assert len(llm.requests) == 4

    def test_valid_schema_failed_precondition_recorded(self, demo):
        with MockLlm([chat('{"skill": "grasp", "args": {"object": "piano"}}')]) as llm:
            transcript, after = plan_and_execute("grab the piano", demo, LlmBackend(llm.url, timeout=5))
        assert transcript.status == "failed" and transcript.reason == "UnknownObject"
        assert transcript.steps[0].delta == {} and after is demo

    def test_timeout(self, demo):
        with MockLlm([("sleep", 5)]) as llm:
            with pytest.raises(Timeout) as info:
                plan_and_execute("go to the counter", demo, LlmBackend(llm.url, timeout=0.3))
        assert info.value.context["step"] == 0

    def test_http_error(self, demo):
        with MockLlm([("status", 500)]) as llm:
            with pytest.raises(HttpError) as info:
                plan_and_execute("go to the counter", demo, LlmBackend(llm.url, timeout=5))
        assert info.value.context["status"] == 500

    def test_unreachable(self):
        with pytest.raises(HttpError):
            LlmBackend("http://127.0.0.1:9/none", timeout=1)._post({})

    def test_from_env(self, monkeypatch):
        monkeypatch.delenv("LLM_ENDPOINT", raising=False)
        with pytest.raises(BackendError):
            LlmBackend.from_env()
        monkeypatch.setenv("LLM_ENDPOINT", "http://x")
        monkeypatch.setenv("LLM_API_KEY", "abc")
        backend = LlmBackend.from_env(timeout=3)
        assert (backend.endpoint, backend.api_key, backend.timeout) == ("http://x", "abc", 3)

    @pytest.mark.parametrize("text, expected", [
        ('{"done": true}', DONE),
        (' {"skill": "wait", "args": {"seconds": 1}} ', call("wait", seconds=1)),
    ])
    def test_interpret(self, text, expected):
        assert interpret_reply(text.strip()) == expected
