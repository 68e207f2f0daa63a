"""Bridge contract tests: conformance corpus, determinism, engine smoke run."""
import base64
import io

import numpy as np
import pytest
import requests
from PIL import Image

from graft_sampler.conformance import assert_conformance, run_conformance
from graft_sampler.detector import GraftPolicy, window_bounds
from graft_sampler.engine import Condition, ConditionTriple, SamplerConfig, sample
from graft_sampler.remote import RemoteBackend, RemoteConfig, RemoteScorer
from graft_sampler.wire import (DECODE_PATH, HEALTH_PATH, PNG_MAGIC, SIMILARITY_PATH,
                                VELOCITY_PATH, decode_array, encode_array)

from diffusion_bridge import (BridgeConfig, BridgeInBackground, ToyAdapter,
                              create_app, load_adapter)

DIM = 4


@pytest.fixture(scope="module")
def toy_url():
    adapter, err = load_adapter(BridgeConfig(model="toy", latent_shape=(DIM,)))
    assert err is None
    with BridgeInBackground(create_app(adapter)) as bridge:
        yield bridge.url


def post(url, path, body):
    return requests.post(url + path, json=body, timeout=10)


class TestHealth:
    def test_contract(self, toy_url):
        body = requests.get(toy_url + HEALTH_PATH, timeout=10).json()
        assert body == {"ok": True, "latent_shape": [DIM], "concurrent_safe": False}

    def test_load_failure_reports_not_ok(self):
        adapter, err = load_adapter(BridgeConfig(model="no/such-checkpoint"))
        assert adapter is None and err
        with BridgeInBackground(create_app(adapter, err)) as bridge:
            body = requests.get(bridge.url + HEALTH_PATH, timeout=10).json()
            assert body["ok"] is False
            assert body["error"]
            r = post(bridge.url, VELOCITY_PATH, {})
            assert r.status_code == 503
            assert "error" in r.json()

    def test_advertised_shape_must_match_model(self):
        adapter, err = load_adapter(BridgeConfig(model="toy", latent_shape=(2, 3)))
        assert adapter is None
        assert "shape" in err


class TestVelocity:
    def test_three_conditions_three_vectors(self, toy_url):
        body = {
            "step": 0, "t": 0.25, "state": encode_array(np.zeros(DIM)),
            "conditions": [{"id": "uncond", "text": ""},
                           {"id": "target", "text": "sushi on a tray"},
                           {"id": "negative", "text": "empty tray"}],
        }
        r = post(toy_url, VELOCITY_PATH, body)
        assert r.status_code == 200
        entries = r.json()["velocities"]
        assert [e["id"] for e in entries] == ["uncond", "target", "negative"]
        for e in entries:
            assert decode_array(e).shape == (DIM,)

    def test_matches_point_mass_flow(self, toy_url):
        adapter = ToyAdapter(dim=DIM)
        x = np.linspace(-1.0, 1.0, DIM)
        t = 0.5
        body = {"step": 3, "t": t, "state": encode_array(x),
                "conditions": [{"id": "c", "text": "sushi on a tray"}]}
        got = decode_array(post(toy_url, VELOCITY_PATH, body).json()["velocities"][0])
        # f32 transport on both legs
        x32 = x.astype("<f4").astype(np.float64)
        want = (adapter.embed("sushi on a tray") - x32) / (1.0 - t)
        assert np.allclose(got, want, atol=1e-5)

    def test_identical_requests_identical_bytes(self, toy_url):
        body = {"step": 5, "t": 0.4, "state": encode_array(np.ones(DIM)),
                "conditions": [{"id": "c", "text": "soup in a bowl"}]}
        first = post(toy_url, VELOCITY_PATH, body).json()["velocities"][0]["data_b64"]
        second = post(toy_url, VELOCITY_PATH, body).json()["velocities"][0]["data_b64"]
        assert first == second

    def test_t_one_is_structured_400(self, toy_url):
        body = {"step": 0, "t": 1.0, "state": encode_array(np.zeros(DIM)),
                "conditions": [{"id": "c", "text": "x"}]}
        r = post(toy_url, VELOCITY_PATH, body)
        assert r.status_code == 400
        assert "error" in r.json()

    def test_wrong_state_shape_400(self, toy_url):
        body = {"step": 0, "t": 0.5, "state": encode_array(np.zeros(DIM + 1)),
                "conditions": [{"id": "c", "text": "x"}]}
        r = post(toy_url, VELOCITY_PATH, body)
        assert r.status_code == 400
        assert str(DIM) in r.json()["error"]

    def test_malformed_json_400(self, toy_url):
        r = requests.post(toy_url + VELOCITY_PATH, data=b"{broken",
                          headers={"Content-Type": "application/json"}, timeout=10)
        assert r.status_code == 400
        assert "error" in r.json()


class TestSimilarityAndDecode:
    def test_score_in_range_and_peaks_at_embedding(self, toy_url):
        adapter = ToyAdapter(dim=DIM)
        at_e = post(toy_url, SIMILARITY_PATH,
                    {"state": encode_array(adapter.embed("soup")), "text": "soup"})
        far = post(toy_url, SIMILARITY_PATH,
                   {"state": encode_array(adapter.embed("soup") + 5.0),
                    "text": "soup"})
        assert at_e.json()["score"] == pytest.approx(1.0, abs=1e-6)
        assert 0.0 <= far.json()["score"] < at_e.json()["score"]

    def test_decode_yields_decodable_png(self, toy_url):
        r = post(toy_url, DECODE_PATH, {"state": encode_array(np.zeros(DIM))})
        blob = base64.b64decode(r.json()["image_png_b64"])
        assert blob.startswith(PNG_MAGIC)
        image = Image.open(io.BytesIO(blob))
        image.load()
        assert image.size == (64, 64)


class TestConformance:
    def test_passes_stub_corpus(self, toy_url):
        assert_conformance(toy_url)

    def test_every_check_green(self, toy_url):
        results = run_conformance(toy_url)
        assert results and all(r.ok for r in results), [
            (r.name, r.message) for r in results if not r.ok]


class TestEndToEndSmoke:
    def test_engine_drives_bridge_for_28_steps(self, toy_url):
        backend = RemoteBackend(RemoteConfig(endpoint=toy_url, timeout=30.0))
        conditions = ConditionTriple(
            layout=Condition(id="layout", text="a photo of a tray"),
            target=Condition(id="target", text="a photo of sushi on a tray"),
            negative=Condition(id="negative", text="empty tray"),
        )
        cfg = SamplerConfig(total_steps=28, dim=DIM, omega=2.0, seed=0)
        policy = GraftPolicy()
        scorer = RemoteScorer(backend, conditions.layout.text)
        traj = sample(cfg, conditions, backend, scorer, policy)

        assert len(traj.states) == 29
        t_min, t_max = window_bounds(policy, cfg.total_steps)
        assert t_min <= traj.graft_step <= t_max
        assert np.all(np.isfinite(traj.terminal))

        blob = backend.decode(traj.terminal)
        image = Image.open(io.BytesIO(blob))
        image.load()
        assert image.size == (64, 64)

    def test_smoke_is_deterministic(self, toy_url):
        backend = RemoteBackend(RemoteConfig(endpoint=toy_url, timeout=30.0))
        conditions = ConditionTriple(
            layout=Condition(id="layout", text="a photo of a tray"),
            target=Condition(id="target", text="a photo of sushi on a tray"),
            negative=Condition(id="negative", text="empty tray"),
        )
        cfg = SamplerConfig(total_steps=28, dim=DIM, omega=2.0, seed=0)
        runs = [sample(cfg, conditions, backend, None, GraftPolicy.fixed(4))
                for _ in range(2)]
        assert np.array_equal(runs[0].terminal, runs[1].terminal)
