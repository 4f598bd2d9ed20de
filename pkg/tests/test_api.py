import time

import pytest
from fastapi.testclient import TestClient

from app.core.consensus import Validator, ValidatorSet, run_consensus_round
from app.core.ledger import append_block, build_block, export_line, new_chain
from app.core.model import ModelWeights
from app.main import app
from app.routes import simulations
from app.services.runs import RunManager
from tests.conftest import SMALL_FLAT

OPERATOR_KEY = "chave-de-teste"


@pytest.fixture
def client(monkeypatch, tmp_path):
    monkeypatch.setenv("FLBCID_OPERATOR_KEY", OPERATOR_KEY)
    monkeypatch.setenv("FLBCID_JWT_SECRET", "segredo-de-teste-com-32-bytes-ok")
    monkeypatch.setenv("FLBCID_OUTPUT_DIR", str(tmp_path))
    monkeypatch.setattr(simulations, "run_manager", RunManager(str(tmp_path)))
    with TestClient(app) as c:
        yield c


@pytest.fixture
def auth(client):
    r = client.post("/api/auth/login", json={"key": OPERATOR_KEY})
    assert r.status_code == 200
    return {"Authorization": f"Bearer {r.json()['jwt']}"}


def _export_bytes(blocks: int = 3) -> bytes:
    vset = ValidatorSet((Validator(0),))
    chain = new_chain(ModelWeights.zeros(2))
    for t in range(1, blocks + 1):
        block = build_block(chain, t, [], ModelWeights([0.1 * t, 0.0, -0.1]))
        chain = append_block(chain, block, run_consensus_round(vset, block))
    return "".join(export_line(b, h) + "\n" for b, h in zip(chain.blocks, chain.hashes)).encode()


def test_healthz(client):
    assert client.get("/healthz").json() == {"ok": True}


def test_login(client):
    assert client.post("/api/auth/login", json={"key": "errada"}).status_code == 401
    r = client.post("/api/auth/login", json={"key": OPERATOR_KEY, "label": "ana"})
    assert r.status_code == 200 and r.json()["jwt"]


def test_login_disabled_without_key(client, monkeypatch):
    monkeypatch.delenv("FLBCID_OPERATOR_KEY")
    assert client.post("/api/auth/login", json={"key": "x"}).status_code == 503


def test_routes_require_token(client):
    assert client.get("/api/config/defaults").status_code in (401, 403)
    bad = {"Authorization": "Bearer nao-e-um-jwt"}
    assert client.get("/api/config/defaults", headers=bad).status_code == 401


def test_defaults(client, auth):
    r = client.get("/api/config/defaults", headers=auth)
    assert r.status_code == 200
    body = r.json()
    assert body["simulation.nodes"] == "10" and body["dp.noise_scale"] == "1.0"


def test_ledger_verify(client, auth):
    raw = _export_bytes()
    r = client.post("/api/ledger/verify", headers=auth, files={"file": ("ledger.export", raw)})
    assert r.json() == {"valid": True, "height": 3, "cause": None}

    tampered = raw.replace(b'"timestamp":2', b'"timestamp":7')
    r = client.post("/api/ledger/verify", headers=auth, files={"file": ("ledger.export", tampered)})
    body = r.json()
    assert body["valid"] is False and body["height"] == 2

    r = client.post("/api/ledger/verify", headers=auth, files={"file": ("ledger.export", b"")})
    assert r.status_code == 400


def test_simulation_lifecycle(client, auth):
    assert client.get("/api/simulations/nada", headers=auth).status_code == 404
    assert client.post("/api/simulations", headers=auth, json={"simulation.nodez": 1}).status_code == 400

    r = client.post("/api/simulations", headers=auth, json={**SMALL_FLAT, "contract.enabled": True})
    assert r.status_code == 202
    run_id = r.json()["id"]

    deadline = time.monotonic() + 60
    while True:
        state = client.get(f"/api/simulations/{run_id}", headers=auth).json()
        if state["status"] in ("done", "error") or time.monotonic() > deadline:
            break
        time.sleep(0.1)
    assert state["status"] == "done", state.get("error")
    assert state["chain_height"] == 3
    assert state["config"]["contract.enabled"] == "true"

    rounds = client.get(f"/api/simulations/{run_id}/rounds", headers=auth).json()
    assert [row["round"] for row in rounds] == ["1", "2", "3"]
    listed = client.get("/api/simulations", headers=auth).json()
    assert [s["id"] for s in listed] == [run_id]
