import io
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from printid.classify import classify_image
from printid.encoders import PixelEncoder
from printid.geometry import ViewpointSpec, save_stl
from printid.prototypes import SamplingStrategy, build_set, save_set
from printid.renderer import RenderConfig, render
from printid.sandbox import sandbox_meshes
from printid.service import create_app

CFG = RenderConfig(image_size_px=32)


@pytest.fixture(scope="module")
def encoder():
    return PixelEncoder(32)


@pytest.fixture(scope="module")
def meshes():
    return sandbox_meshes()


@pytest.fixture(scope="module")
def cset(meshes, encoder):
    return build_set(meshes, SamplingStrategy("uniform", 24), encoder, CFG, set_id="sandbox")


@pytest.fixture(scope="module")
def set_bytes(cset, tmp_path_factory):
    path = save_set(cset, tmp_path_factory.mktemp("sets") / "sandbox.protoset")
    return path.read_bytes()


@pytest.fixture()
def client(encoder, set_bytes):
    app = create_app(encoder=encoder)
    client = TestClient(app)
    resp = client.post("/sets", files={"file": ("sandbox.protoset", set_bytes)})
    assert resp.status_code == 200, resp.text
    return client


def _png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return buf.getvalue()


def _query_png(mesh, azimuth=15.0, elevation=30.0) -> bytes:
    return _png_bytes(render(mesh, ViewpointSpec(azimuth, elevation), CFG).pixels)


class TestHealthAndSets:
    def test_healthz(self, client):
        data = client.get("/healthz").json()
        assert data["status"] == "ok"
        assert data["encoder_loaded"] is True

    def test_list_and_detail(self, client):
        sets = client.get("/sets").json()
        assert [s["set_id"] for s in sets] == ["sandbox"]
        detail = client.get("/sets/sandbox").json()
        assert len(detail["objects"]) == 10
        assert all(o["K"] == 24 for o in detail["objects"])
        assert detail["dim"] == 3072

    def test_unknown_set_404(self, client):
        assert client.get("/sets/nope").status_code == 404

    def test_bad_set_upload_400(self, client):
        resp = client.post("/sets", files={"file": ("junk.protoset", b"garbage bytes")})
        assert resp.status_code == 400


class TestSessionFlow:
    def test_classify_confirm_shrinks_pool(self, client, meshes):
        session = client.post("/sessions", json={"set_id": "sandbox"}).json()
        sid = session["session_id"]
        assert session["remaining"] == 10

        target = meshes[0]
        resp = client.post(
            f"/sessions/{sid}/classify",
            files=[("images", ("q.png", _query_png(target), "image/png"))],
        )
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert body["candidates"][0]["object_id"] == target.object_id

        confirm = client.post(f"/sessions/{sid}/confirm", json={"object_id": target.object_id})
        assert confirm.status_code == 200
        assert confirm.json()["remaining"] == 9

        again = client.post(
            f"/sessions/{sid}/classify",
            files=[("images", ("q.png", _query_png(target), "image/png"))],
        ).json()
        ids = [c["object_id"] for c in again["candidates"]]
        assert target.object_id not in ids

    def test_two_object_contraction_to_one_candidate(self, encoder, meshes):
        pair = meshes[:2]
        small = build_set(pair, SamplingStrategy("uniform", 8), encoder, CFG, set_id="pair")
        app = create_app(encoder=encoder)
        client = TestClient(app)
        import tempfile, pathlib

        with tempfile.TemporaryDirectory() as td:
            path = save_set(small, pathlib.Path(td) / "pair.protoset")
            client.post("/sets", files={"file": ("pair.protoset", path.read_bytes())})
        sid = client.post("/sessions", json={"set_id": "pair"}).json()["session_id"]
        first = client.post(
            f"/sessions/{sid}/classify",
            files=[("images", ("q.png", _query_png(pair[0]), "image/png"))],
        ).json()
        top1 = first["candidates"][0]["object_id"]
        client.post(f"/sessions/{sid}/confirm", json={"object_id": top1})
        second = client.post(
            f"/sessions/{sid}/classify",
            files=[("images", ("q.png", _query_png(pair[1]), "image/png"))],
        ).json()
        assert len(second["candidates"]) == 1

    def test_confirm_twice_409(self, client, meshes):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        oid = meshes[3].object_id
        assert client.post(f"/sessions/{sid}/confirm", json={"object_id": oid}).status_code == 200
        assert client.post(f"/sessions/{sid}/confirm", json={"object_id": oid}).status_code == 409

    def test_confirm_unknown_object_409(self, client):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        assert client.post(f"/sessions/{sid}/confirm", json={"object_id": "ghost"}).status_code == 409

    def test_undo_restores_exactly(self, client, meshes):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        before = client.get(f"/sessions/{sid}").json()["remaining_ids"]
        oid = meshes[5].object_id
        client.post(f"/sessions/{sid}/confirm", json={"object_id": oid})
        client.post(f"/sessions/{sid}/undo")
        after = client.get(f"/sessions/{sid}").json()
        assert after["remaining_ids"] == before
        assert after["history"] == []

    def test_undo_empty_history_409(self, client):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        assert client.post(f"/sessions/{sid}/undo").status_code == 409

    def test_pool_conservation(self, client, meshes):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        for mesh in meshes[:4]:
            client.post(f"/sessions/{sid}/confirm", json={"object_id": mesh.object_id})
            state = client.get(f"/sessions/{sid}").json()
            assert state["remaining"] + len(state["history"]) == 10

    def test_unknown_session_404(self, client):
        assert client.post("/sessions/zzz/undo").status_code == 404
        assert client.get("/sessions/zzz").status_code == 404

    def test_session_listing(self, client, meshes):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        client.post(f"/sessions/{sid}/confirm", json={"object_id": meshes[0].object_id})
        listing = client.get("/sessions").json()
        entry = next(s for s in listing if s["session_id"] == sid)
        assert entry["set_id"] == "sandbox"
        assert entry["remaining"] == 9
        assert entry["confirmed"] == 1

    def test_bad_image_422(self, client):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        resp = client.post(
            f"/sessions/{sid}/classify",
            files=[("images", ("bad.png", b"not an image", "image/png"))],
        )
        assert resp.status_code == 422

    def test_session_for_unknown_set_404(self, client):
        assert client.post("/sessions", json={"set_id": "ghost"}).status_code == 404


class TestRestrictionSoundness:
    def test_session_ranking_is_filtered_full_ranking(self, client, encoder, cset, meshes):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        confirmed = [m.object_id for m in meshes[:3]]
        for oid in confirmed:
            client.post(f"/sessions/{sid}/confirm", json={"object_id": oid})
        query = render(meshes[4], ViewpointSpec(25, 60), CFG).pixels
        resp = client.post(
            f"/sessions/{sid}/classify",
            files=[("images", ("q.png", _png_bytes(query), "image/png"))],
            data={"top_k": "10"},
        ).json()
        got = [(c["object_id"], c["score"]) for c in resp["candidates"]]
        full = classify_image(query, cset, encoder)
        expected = [
            (oid, full.scores[oid]) for oid in full.ranked_ids if oid not in confirmed
        ]
        assert [g[0] for g in got] == [e[0] for e in expected]
        for (_, a), (_, b) in zip(got, expected):
            assert abs(a - b) < 1e-9

    def test_full_set_flag_ignores_pool(self, client, meshes):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        oid = meshes[0].object_id
        client.post(f"/sessions/{sid}/confirm", json={"object_id": oid})
        resp = client.post(
            f"/sessions/{sid}/classify",
            files=[("images", ("q.png", _query_png(meshes[0]), "image/png"))],
            data={"full_set": "true", "top_k": "10"},
        ).json()
        assert oid in [c["object_id"] for c in resp["candidates"]]


class TestMultiViewClassify:
    def test_multiple_images_aggregate(self, client, meshes):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        target = meshes[6]
        files = [
            ("images", (f"q{k}.png", _query_png(target, azimuth=15 + 30 * k), "image/png"))
            for k in range(3)
        ]
        resp = client.post(
            f"/sessions/{sid}/classify", files=files, data={"agg_method": "score_average"}
        ).json()
        assert resp["n_views"] == 3
        assert resp["method"] == "score_average"
        assert resp["candidates"][0]["object_id"] == target.object_id


class TestEncoderStates:
    def test_no_encoder_503(self, set_bytes):
        app = create_app(encoder=None)
        client = TestClient(app)
        client.post("/sets", files={"file": ("s.protoset", set_bytes)})
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        resp = client.post(
            f"/sessions/{sid}/classify",
            files=[("images", ("q.png", b"\x89PNG", "image/png"))],
        )
        assert resp.status_code == 503

    def test_encoder_set_mismatch_503(self, set_bytes):
        app = create_app(encoder=PixelEncoder(32, encoder_id="other-encoder"))
        client = TestClient(app)
        client.post("/sets", files={"file": ("s.protoset", set_bytes)})
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        resp = client.post(
            f"/sessions/{sid}/classify",
            files=[("images", ("q.png", _png_bytes(np.zeros((32, 32, 3), np.uint8)), "image/png"))],
        )
        assert resp.status_code == 503


class TestAuthAndPersistence:
    def test_bearer_token(self, encoder, set_bytes):
        app = create_app(encoder=encoder, token="sekrit")
        client = TestClient(app)
        assert client.get("/healthz").status_code == 200  # healthz open
        assert client.get("/sets").status_code == 401
        ok = client.get("/sets", headers={"Authorization": "Bearer sekrit"})
        assert ok.status_code == 200

    def test_sessions_survive_restart(self, encoder, set_bytes, tmp_path):
        state = tmp_path / "sessions.sqlite"
        sets_dir = tmp_path / "sets"
        sets_dir.mkdir()
        app1 = create_app(encoder=encoder, sets_dir=str(sets_dir), state_path=str(state))
        c1 = TestClient(app1)
        c1.post("/sets", files={"file": ("s.protoset", set_bytes)})
        sid = c1.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        c1.post(f"/sessions/{sid}/confirm", json={"object_id": "sphere"})

        app2 = create_app(encoder=encoder, sets_dir=str(sets_dir), state_path=str(state))
        c2 = TestClient(app2)
        resumed = c2.get(f"/sessions/{sid}")
        assert resumed.status_code == 200
        assert resumed.json()["remaining"] == 9


class TestThumbnails:
    def test_lazy_render_from_meshes(self, encoder, set_bytes, meshes, tmp_path):
        mesh_dir = tmp_path / "meshes"
        for mesh in meshes:
            save_stl(mesh, mesh_dir / f"{mesh.object_id}.stl")
        app = create_app(encoder=encoder, meshes_dir=str(mesh_dir))
        client = TestClient(app)
        client.post("/sets", files={"file": ("s.protoset", set_bytes)})
        resp = client.get("/thumbnails/sandbox/sphere.png")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"

    def test_missing_thumbnail_source_404(self, client):
        assert client.get("/thumbnails/sandbox/sphere.png").status_code == 404

    def test_unknown_object_404(self, encoder, set_bytes, tmp_path):
        app = create_app(encoder=encoder, meshes_dir=str(tmp_path))
        client = TestClient(app)
        client.post("/sets", files={"file": ("s.protoset", set_bytes)})
        assert client.get("/thumbnails/sandbox/ghost.png").status_code == 404


class TestConcurrency:
    def test_parallel_confirms_remain_consistent(self, client, meshes):
        sid = client.post("/sessions", json={"set_id": "sandbox"}).json()["session_id"]
        ids = [m.object_id for m in meshes]
        errors = []

        def confirm(oid):
            resp = client.post(f"/sessions/{sid}/confirm", json={"object_id": oid})
            if resp.status_code not in (200, 409):
                errors.append(resp.status_code)

        threads = [threading.Thread(target=confirm, args=(oid,)) for oid in ids * 2]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        state = client.get(f"/sessions/{sid}").json()
        assert state["remaining"] == 0
        assert len(state["history"]) == 10
