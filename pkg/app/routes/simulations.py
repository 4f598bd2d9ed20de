# app/routes/simulations.py
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Union

from fastapi import APIRouter, Body, Depends

from app.auth import get_current_user
from app.services.runs import run_manager

router = APIRouter()
log = logging.getLogger("uvicorn.error")

Scalar = Union[str, int, float, bool, None]


def _as_text(v: Scalar) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


@router.post("", status_code=202)
async def start_simulation(
    overrides: Optional[Dict[str, Scalar]] = Body(None),
    user: Dict[str, Any] = Depends(get_current_user),
) -> Dict[str, Any]:
    """
    Corpo: chaves planas da configuração (`secao.campo`) sobre os padrões.
    Ex.: {"simulation.rounds": 10, "attack.poisoned_nodes": "0,1"}
    """
    flat = {k: _as_text(v) for k, v in (overrides or {}).items()}
    state = await run_manager.start_run(flat)
    log.info("[RUNS] %s criada por %s", state.run_id, user.get("sub"))
    return {"id": state.run_id, "status": state.status}


@router.get("")
async def list_simulations(user: Dict[str, Any] = Depends(get_current_user)) -> List[Dict[str, Any]]:
    return [
        {"id": s.run_id, "status": s.status, "created_at": s.created_at.isoformat()}
        for s in run_manager.list()
    ]


@router.get("/{run_id}")
async def get_simulation(run_id: str, user: Dict[str, Any] = Depends(get_current_user)) -> Dict[str, Any]:
    return run_manager.get(run_id).summary()


@router.get("/{run_id}/rounds")
async def get_rounds(run_id: str, user: Dict[str, Any] = Depends(get_current_user)) -> List[Dict[str, str]]:
    return run_manager.rounds(run_id)
