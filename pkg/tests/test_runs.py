import asyncio

import pytest
from fastapi import HTTPException

from app.services.runs import RunManager
from tests.conftest import SMALL_FLAT


def test_run_lifecycle(tmp_path):
    async def scenario():
        mgr = RunManager(str(tmp_path))
        state = await mgr.start_run(SMALL_FLAT)
        with pytest.raises(HTTPException) as exc:
            mgr.rounds(state.run_id)
        assert exc.value.status_code == 409
        return mgr, await mgr.wait(state.run_id)

    mgr, state = asyncio.run(scenario())
    assert state.status == "done" and state.error is None
    summary = state.summary()
    assert summary["rounds"] == 3 and summary["chain_height"] == 3
    assert summary["config"]["simulation.nodes"] == "4"
    assert len(mgr.rounds(state.run_id)) == 3
    assert (tmp_path / state.run_id / "metrics.csv").is_file()
    assert [s.run_id for s in mgr.list()] == [state.run_id]


def test_failed_run_records_error(tmp_path):
    async def scenario():
        mgr = RunManager(str(tmp_path))
        state = await mgr.start_run({**SMALL_FLAT, "data.source": str(tmp_path / "missing.csv")})
        return await mgr.wait(state.run_id)

    state = asyncio.run(scenario())
    assert state.status == "error"
    assert "missing.csv" in state.error
    assert state.finished_at is not None


def test_bad_overrides_and_unknown_run(tmp_path):
    mgr = RunManager(str(tmp_path))
    with pytest.raises(HTTPException) as exc:
        asyncio.run(mgr.start_run({"simulation.nodez": "3"}))
    assert exc.value.status_code == 400
    with pytest.raises(HTTPException) as exc:
        mgr.get("nada")
    assert exc.value.status_code == 404


def test_history_is_capped_and_keeps_only_summaries(tmp_path):
    async def scenario():
        mgr = RunManager(str(tmp_path), max_kept=2)
        ids = []
        for seed in (1, 2, 3):
            state = await mgr.start_run({**SMALL_FLAT, "simulation.seed": str(seed), "simulation.rounds": "1"})
            await mgr.wait(state.run_id)
            ids.append(state.run_id)
        return mgr, ids

    mgr, ids = asyncio.run(scenario())
    assert [s.run_id for s in mgr.list()] == ids[1:]
    with pytest.raises(HTTPException) as exc:
        mgr.get(ids[0])
    assert exc.value.status_code == 404
    state = mgr.get(ids[2])
    assert not hasattr(state, "result")
    assert state.summary()["chain_height"] == 1
    assert len(mgr.rounds(ids[2])) == 1
