"""Tests for the HTTP service, driven in-process through TestClient."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from reward_lens.audit import reward_payload, saliency_payload, transition_from_frames
from reward_lens.client import RewardLensApiError, RewardLensClient
from reward_lens.config import DATA_ROOT_ENV
from reward_lens.counterfactual import load_fixture, scenario_to_dict
from reward_lens.gridworld import EnvSpec, sample_transition
from reward_lens.interpret import OcclusionConfig
from reward_lens.reward_learning import checkpoint_id, save_checkpoint
from reward_lens.service import ServiceState, create_app
from tests.conftest import make_grid


@pytest.fixture
def frames():
    return make_grid((5, 5), [(0, 0)]), make_grid((4, 5), [(0, 0)])


@pytest.fixture
def empty_client():
    return TestClient(create_app())


@pytest.fixture
def quirk_state(quirk_oracle):
    state = ServiceState()
    state.set_model(quirk_oracle)
    return state


@pytest.fixture
def client(quirk_state):
    return TestClient(create_app(quirk_state))


def body(s, sp, **extra):
    return {"s": s.tolist(), "sp": sp.tolist(), **extra}


class TestNoModel:
    def test_model_is_null(self, empty_client):
        response = empty_client.get("/api/model")
        assert response.status_code == 200
        assert response.json() == {"checkpoint": None}

    @pytest.mark.parametrize(
        "path", ["/api/reward", "/api/saliency/gradient", "/api/saliency/occlusion"]
    )
    def test_evaluation_conflicts(self, empty_client, frames, path):
        response = empty_client.post(path, json=body(*frames))
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "NO_MODEL"

    def test_scenario_conflicts(self, empty_client):
        scenario = scenario_to_dict(load_fixture("goal_removed"))
        response = empty_client.post("/api/scenario", json=scenario)
        assert response.status_code == 409


class TestModelLoading:
    def test_load_by_absolute_path(self, empty_client, tmp_path, quirk_oracle):
        path = tmp_path / "quirk.json"
        save_checkpoint(quirk_oracle, path)
        response = empty_client.post("/api/model/load", json={"path": str(path)})
        assert response.status_code == 200
        assert response.json() == {"checkpoint": checkpoint_id(quirk_oracle)}
        assert empty_client.get("/api/model").json()["checkpoint"] == checkpoint_id(quirk_oracle)

    def test_relative_path_uses_data_root(self, empty_client, tmp_path, monkeypatch, score_oracle):
        save_checkpoint(score_oracle, tmp_path / "score.json")
        monkeypatch.setenv(DATA_ROOT_ENV, str(tmp_path))
        response = empty_client.post("/api/model/load", json={"path": "score.json"})
        assert response.json()["checkpoint"] == checkpoint_id(score_oracle)

    def test_missing_file(self, empty_client, tmp_path):
        response = empty_client.post("/api/model/load", json={"path": str(tmp_path / "no.json")})
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "FORMAT_ERROR"

    def test_path_required(self, empty_client):
        response = empty_client.post("/api/model/load", json={})
        assert response.status_code == 400

    def test_swap_changes_checkpoint(self, client, tmp_path, score_oracle, frames):
        save_checkpoint(score_oracle, tmp_path / "score.json")
        client.post("/api/model/load", json={"path": str(tmp_path / "score.json")})
        response = client.post("/api/reward", json=body(*frames))
        assert response.json()["checkpoint"] == checkpoint_id(score_oracle)


class TestEvaluation:
    def test_reward_matches_local(self, client, quirk_oracle, frames):
        response = client.post("/api/reward", json=body(*frames))
        assert response.status_code == 200
        expected = reward_payload(quirk_oracle, checkpoint_id(quirk_oracle), *frames)
        assert response.json() == expected
        assert response.json()["reward"] == 0.0

    def test_flat_grids_accepted(self, client, frames):
        s, sp = frames
        flat = {"s": s.ravel().tolist(), "sp": sp.ravel().tolist()}
        response = client.post("/api/reward", json=flat)
        assert response.status_code == 200

    def test_gradient_matches_local(self, client, quirk_oracle, frames):
        response = client.post("/api/saliency/gradient", json=body(*frames))
        expected = saliency_payload(
            quirk_oracle, checkpoint_id(quirk_oracle), transition_from_frames(*frames), "gradient"
        )
        assert response.json() == json.loads(json.dumps(expected))
        assert response.json()["mass_ratio"] == 1.0

    def test_signed_gradient(self, client, frames):
        response = client.post("/api/saliency/gradient", json=body(*frames, signed=True))
        assert np.asarray(response.json()["map_sprime"])[0, 0] == -4.0

    def test_occlusion_overrides(self, client, quirk_oracle, frames):
        response = client.post(
            "/api/saliency/occlusion", json=body(*frames, occlusion={"stride": 2})
        )
        assert response.status_code == 200
        expected = saliency_payload(
            quirk_oracle,
            checkpoint_id(quirk_oracle),
            transition_from_frames(*frames),
            "occlusion",
            OcclusionConfig(stride=2),
        )
        assert response.json() == json.loads(json.dumps(expected))
        assert not np.asarray(response.json()["map_s"]).any()

    def test_bad_override(self, client, frames):
        response = client.post(
            "/api/saliency/occlusion", json=body(*frames, occlusion={"stride": "two"})
        )
        assert response.status_code == 400

    def test_scenario_with_negative_seed(self, client):
        scenario = {"base": {"env": "coinflip", "seed": -5, "step": 0}, "edits_sp": []}
        response = client.post("/api/scenario", json=scenario)
        assert response.status_code == 200
        assert response.json()["delta"] == 0.0

    @pytest.mark.parametrize("fixture, expected", [("goal_removed", 1.0), ("many_goals", -8.0)])
    def test_scenario(self, client, quirk_oracle, fixture, expected):
        response = client.post("/api/scenario", json=scenario_to_dict(load_fixture(fixture)))
        assert response.status_code == 200
        report = response.json()
        assert report["counterfactual_reward"] == pytest.approx(expected, abs=1e-9)
        assert report["verdict"] == "pass"
        assert report["checkpoint"] == checkpoint_id(quirk_oracle)


class TestBadInput:
    def test_short_grid(self, client):
        short = {"s": np.zeros((10, 11)).tolist(), "sp": np.zeros((11, 11)).tolist()}
        response = client.post("/api/reward", json=short)
        assert response.status_code == 400
        error = response.json()["error"]
        assert error["code"] == "FORMAT_ERROR"
        assert "'s'" in error["message"]

    def test_missing_frame(self, client, frames):
        response = client.post("/api/reward", json={"s": frames[0].tolist()})
        assert response.status_code == 400
        assert "sp" in response.json()["error"]["message"]

    def test_out_of_range_values(self, client, frames):
        response = client.post("/api/reward", json=body(np.full((11, 11), 2.0), frames[1]))
        assert response.status_code == 400

    def test_not_an_object(self, client):
        response = client.post("/api/reward", json=[1, 2, 3])
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "FORMAT_ERROR"

    def test_malformed_scenario(self, client):
        response = client.post("/api/scenario", json={"base": {"env": "maze"}})
        assert response.status_code == 400

    @pytest.mark.parametrize("signed", ["false", 1, None])
    def test_signed_must_be_boolean(self, client, frames, signed):
        response = client.post("/api/saliency/gradient", json=body(*frames, signed=signed))
        assert response.status_code == 400
        error = response.json()["error"]
        assert error["code"] == "FORMAT_ERROR"
        assert "signed" in error["message"]

    @pytest.mark.parametrize("field", ["sigma_blur", "sigma_mask"])
    def test_infinite_sigma(self, client, frames, field):
        payload = body(*frames, occlusion={field: float("inf")})
        response = client.post(
            "/api/saliency/occlusion",
            content=json.dumps(payload),
            headers={"content-type": "application/json"},
        )
        assert response.status_code == 400
        assert field in response.json()["error"]["message"]


class TestEnvironments:
    def test_list(self, client):
        envs = client.get("/api/envs").json()["envs"]
        assert [e["name"] for e in envs] == [
            "coinflip",
            "twogoals",
            "goaldestroyer",
            "scoregoal",
            "scoregoal_nostrip",
        ]
        assert all(e["episode_cap"] == 30 for e in envs)

    def test_sample(self, client):
        response = client.post("/api/env/sample", json={"env": "twogoals", "seed": 4, "step": 0})
        assert response.status_code == 200
        record = response.json()
        t = sample_transition(EnvSpec("twogoals"), 4, 0)
        assert record["s"] == t.s.ravel().tolist()
        assert record["a"] == t.action

    def test_unknown_env(self, client):
        response = client.post("/api/env/sample", json={"env": "maze"})
        assert response.status_code == 400

    def test_seed_must_be_integer(self, client):
        response = client.post("/api/env/sample", json={"env": "coinflip", "seed": "x"})
        assert response.status_code == 400

    def test_negative_seed(self, client):
        request = {"env": "coinflip", "seed": -1, "step": 0}
        first = client.post("/api/env/sample", json=request)
        assert first.status_code == 200
        assert first.json() == client.post("/api/env/sample", json=request).json()
        t = sample_transition(EnvSpec("coinflip"), -1, 0)
        assert first.json()["sp"] == t.s_prime.ravel().tolist()


class TestTypedClient:
    def test_end_to_end(self, tmp_path, quirk_oracle):
        save_checkpoint(quirk_oracle, tmp_path / "quirk.json")
        client = RewardLensClient(http_client=TestClient(create_app()), max_retries=0)
        assert client.models.get() == {"checkpoint": None}
        assert client.models.load(str(tmp_path / "quirk.json"))["checkpoint"].startswith("sha256:")

        sample = client.envs.sample("coinflip", seed=7, step=0)
        result = client.rewards.evaluate(sample["s"], sample["sp"])
        assert result["reward"] in (0.0, 1.0)

        sal = client.saliency.occlusion(sample["s"], sample["sp"], stride=3)
        assert not np.asarray(sal["map_s"]).any()

        report = client.scenarios.run(load_fixture("covered_goal"))
        assert report["counterfactual_reward"] == pytest.approx(0.0, abs=1e-9)

    def test_errors_carry_status_and_code(self):
        client = RewardLensClient(http_client=TestClient(create_app()), max_retries=0)
        grid = np.zeros((11, 11))
        with pytest.raises(RewardLensApiError) as exc_info:
            client.rewards.evaluate(grid, grid)
        assert exc_info.value.status == 409
        assert exc_info.value.code == "NO_MODEL"
