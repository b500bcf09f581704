import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.sparse.linalg import eigs

from homecore.errors import (
    ConfigError,
    DegenerateScale,
    DimensionMismatch,
    EmptyPatch,
    MissingClass,
    MissingJoint,
    ParseError,
    SingularSystem,
    UntrainedModel,
)
from homecore.reservoir import (
    FEATURE_DIM,
    EsnConfig,
    Label,
    LabeledSequence,
    classify,
    collect_states,
    evaluate,
    feature_vector,
    fingertip_energy,
    fit_readout,
    init_esn,
    load_model,
    normalize_skeleton,
    read_dataset,
    ridge_solve,
    run_states,
    save_model,
    score,
    synthetic_dataset,
    train,
    update,
    write_dataset,
)
from oracles import normal_equations

SKELETON = {"neck": (100, 50), "left_shoulder": (80, 60), "right_shoulder": (120, 60),
            "left_wrist": (70, 120), "right_wrist": (140, 20)}


class TestFeatures:
    def test_neck_is_origin_and_shoulders_unit_apart(self):
        v = normalize_skeleton(SKELETON).reshape(-1, 2)
        assert v[0].tolist() == [0.0, 0.0]
        assert np.linalg.norm(v[1] - v[2]) == pytest.approx(1.0)

    @given(st.floats(-500, 500), st.floats(-500, 500), st.floats(0.1, 20))
    def test_translation_and_scale_invariance(self, dx, dy, s):
        moved = {k: (s * x + dx, s * y + dy) for k, (x, y) in SKELETON.items()}
        assert np.allclose(normalize_skeleton(moved), normalize_skeleton(SKELETON), atol=1e-9)

    def test_missing_joint(self):
        joints = dict(SKELETON)
        del joints["right_wrist"]
        with pytest.raises(MissingJoint):
            normalize_skeleton(joints)

    def test_coincident_shoulders(self):
        with pytest.raises(DegenerateScale):
            normalize_skeleton({**SKELETON, "right_shoulder": SKELETON["left_shoulder"]})

    @pytest.mark.parametrize("patch, expected", [
        (np.zeros((4, 4)), 0.0),
        (np.ones((3, 5)), 1.0),
        (np.array([[1.0, 0.0], [0.0, 0.0]]), 0.25),
    ])
    def test_fingertip_energy(self, patch, expected):
        assert fingertip_energy(patch) == expected

    def test_empty_patch(self):
        with pytest.raises(EmptyPatch):
            fingertip_energy(np.zeros((0, 3)))

    def test_feature_layout(self):
        f = feature_vector(SKELETON, np.ones((2, 2)))
        assert f.shape == (FEATURE_DIM,) and f[-1] == 1.0


class TestReservoir:
    def test_deterministic(self):
        a, b = init_esn(EsnConfig(seed=5)), init_esn(EsnConfig(seed=5))
        assert np.array_equal(a.w_res, b.w_res) and np.array_equal(a.w_in, b.w_in)
        assert not np.array_equal(a.w_res, init_esn(EsnConfig(seed=6)).w_res)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("rho", [0.5, 0.9, 0.99])
    def test_spectral_radius_matches_arnoldi(self, seed, rho):
        esn = init_esn(EsnConfig(n_reservoir=200, spectral_radius=rho, seed=seed))
        top = eigs(esn.w_res, k=1, which="LM", return_eigenvectors=False, tol=1e-12)
        assert abs(abs(top[0]) - rho) < 1e-6

    @pytest.mark.parametrize("bad", [{"n_reservoir": 0}, {"spectral_radius": 1.0}, {"leak_rate": 0.0},
                                     {"connectivity": 0.0}, {"ridge": -1.0}, {"washout": -1}])
    def test_invalid_config(self, bad):
        with pytest.raises(ConfigError):
            EsnConfig(**bad)

    def test_unknown_config_key(self):
        with pytest.raises(ConfigError):
            EsnConfig.from_dict({"size": 10})

    def test_zero_input_stays_zero(self):
        esn = init_esn(EsnConfig())
        for _ in range(50):
            update(esn, np.zeros(FEATURE_DIM))
        assert not esn.state.any()

    def test_update_formula(self):
        esn = init_esn(EsnConfig(n_reservoir=30, seed=2))
        rng = np.random.default_rng(0)
        x, u = rng.uniform(-1, 1, 30), rng.uniform(-1, 1, FEATURE_DIM)
        a = esn.config.leak_rate
        expected = (1 - a) * x + a * np.tanh(esn.w_res @ x + esn.w_in @ u)
        assert np.allclose(update(esn, u, state=x), expected, atol=1e-15)
        assert not esn.state.any()  # explicit state leaves the model untouched

    def test_run_states_matches_update(self):
        esn = init_esn(EsnConfig(n_reservoir=40))
        frames = np.random.default_rng(1).normal(size=(30, FEATURE_DIM))
        states = run_states(esn, frames)
        for t, u in enumerate(frames):
            assert np.allclose(update(esn, u), states[t], atol=1e-14)

    def test_dimension_mismatch(self):
        esn = init_esn(EsnConfig())
        with pytest.raises(DimensionMismatch):
            update(esn, np.zeros(3))
        with pytest.raises(DimensionMismatch):
            run_states(esn, np.zeros((5, 3)))

    def test_constant_input_reaches_fixed_point(self):
        esn = init_esn(EsnConfig(leak_rate=1.0, seed=3))
        u = np.random.default_rng(3).uniform(-1, 1, FEATURE_DIM)
        states = run_states(esn, np.tile(u, (200, 1)))
        assert np.linalg.norm(states[-1] - states[-2]) < 1e-10
        assert np.allclose(np.tanh(esn.w_res @ states[-1] + esn.w_in @ u), states[-1], atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_initial_state_is_forgotten(self, seed):
        esn = init_esn(EsnConfig(seed=seed))
        rng = np.random.default_rng(seed)
        frames = rng.normal(size=(500, FEATURE_DIM))
        a = run_states(esn, frames, x0=rng.uniform(-1, 1, 100))
        b = run_states(esn, frames, x0=rng.uniform(-1, 1, 100))
        assert np.linalg.norm(a[-1] - b[-1]) < 1e-6

    @pytest.mark.parametrize("seed", range(20))
    def test_state_difference_decays_monotonically(self, seed):
        # two trajectories under zero input contract toward each other until round-off
        esn = init_esn(EsnConfig(seed=seed))
        rng = np.random.default_rng(100 + seed)
        frames = np.zeros((300, FEATURE_DIM))
        a = run_states(esn, frames, x0=rng.uniform(-1, 1, 100))
        b = run_states(esn, frames, x0=rng.uniform(-1, 1, 100))
        gap = np.linalg.norm(a - b, axis=1)
        live = gap > 1e-12
        assert np.all(np.diff(gap)[live[1:]] <= 0)


class TestReadout:
    @given(st.integers(0, 10_000), st.integers(8, 200), st.integers(1, 64))
    def test_svd_solution_matches_normal_equations(self, seed, rows, cols):
        rng = np.random.default_rng(seed)
        design = rng.normal(size=(rows, cols))
        targets = rng.choice([-1.0, 1.0], rows)
        ridge = 10 ** rng.uniform(-4, 1)
        got = ridge_solve(design, targets, ridge)
        assert np.allclose(got, normal_equations(design, targets, ridge), atol=1e-8)

    def test_unregularized_full_rank(self):
        rng = np.random.default_rng(0)
        design = rng.normal(size=(50, 5))
        targets = rng.normal(size=50)
        assert np.allclose(ridge_solve(design, targets, 0.0), np.linalg.lstsq(design, targets, rcond=None)[0])

    def test_unregularized_rank_deficient(self):
        with pytest.raises(SingularSystem):
            ridge_solve(np.ones((3, 10)), np.ones(3), 0.0)

    def test_design_has_bias_column(self):
        esn = init_esn(EsnConfig(n_reservoir=20, washout=5))
        seqs = synthetic_dataset(2, seed=0, n_frames=12)
        design, targets = collect_states(esn, seqs)
        assert design.shape == (14, 21) and np.all(design[:, -1] == 1)
        assert targets.tolist() == [1.0] * 7 + [-1.0] * 7

    def test_single_class(self):
        esn = init_esn(EsnConfig())
        seqs = [s for s in synthetic_dataset(6, seed=0, n_frames=30) if s.label is Label.WAVING]
        with pytest.raises(MissingClass):
            fit_readout(esn, seqs)

    def test_untrained(self):
        with pytest.raises(UntrainedModel):
            score(init_esn(EsnConfig()), np.zeros((30, FEATURE_DIM)))

    def test_threshold_at_zero(self):
        esn = init_esn(EsnConfig(n_reservoir=10, washout=0))
        esn.w_out = np.zeros(11)
        esn.w_out[-1] = 1e-9
        assert classify(esn, np.zeros((3, FEATURE_DIM))).label is Label.WAVING
        esn.w_out[-1] = 0.0
        assert classify(esn, np.zeros((3, FEATURE_DIM))).label is Label.NOT_WAVING

    def test_short_sequence_uses_all_frames(self):
        esn = init_esn(EsnConfig(n_reservoir=10, washout=20))
        esn.w_out = np.append(np.ones(10), 0.0)
        frames = np.random.default_rng(0).normal(size=(5, FEATURE_DIM))
        assert score(esn, frames) == pytest.approx(run_states(esn, frames).sum(axis=1).mean())


@pytest.fixture(scope="module")
def trained():
    return train(EsnConfig(seed=1), synthetic_dataset(200, seed=11))


class TestEndToEnd:
    def test_heldout_accuracy(self, trained):
        report = evaluate(trained, synthetic_dataset(200, seed=12))
        assert report["accuracy"] >= 0.95
        assert sum(map(sum, report["confusion"])) == 200

    def test_model_round_trip(self, trained, tmp_path):
        save_model(trained, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        frames = synthetic_dataset(1, seed=3)[0].frames
        assert score(back, frames) == score(trained, frames)

    def test_bad_model_file(self, tmp_path):
        (tmp_path / "m.json").write_text('{"format": "other"}')
        with pytest.raises(ParseError):
            load_model(tmp_path / "m.json")

    def test_dataset_round_trip(self, tmp_path):
        seqs = synthetic_dataset(4, seed=0, n_frames=10)
        write_dataset(tmp_path / "d.jsonl", seqs)
        back = read_dataset(tmp_path / "d.jsonl")
        assert [s.label for s in back] == [s.label for s in seqs]
        assert all(np.array_equal(a.frames, b.frames) for a, b in zip(back, seqs))

    def test_dataset_errors(self, tmp_path):
        (tmp_path / "d.jsonl").write_text('{"frames": [[0]]}\n')
        with pytest.raises(ParseError):
            read_dataset(tmp_path / "d.jsonl")
        assert len(read_dataset(tmp_path / "d.jsonl", require_labels=False)) == 1
        with pytest.raises(ValueError):
            LabeledSequence(np.zeros(3), Label.WAVING)

    def test_synthetic_is_seeded(self):
        a, b = synthetic_dataset(3, seed=9), synthetic_dataset(3, seed=9)
        assert all(np.array_equal(x.frames, y.frames) for x, y in zip(a, b))
        assert not math.isnan(a[0].frames.sum())


def test_extended_oracle_agrees_on_well_conditioned_system():
    from oracles import normal_equations, normal_equations_extended

    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(80, 12)), rng.normal(size=80)
    assert np.allclose(normal_equations_extended(x, y, 0.1), normal_equations(x, y, 0.1), atol=1e-12)
