# app/routes/ledger.py
from __future__ import annotations

import logging
from typing import Any, Dict

from fastapi import APIRouter, Depends, File, HTTPException, UploadFile

from app.auth import get_current_user
from app.core.ledger import verify_export

router = APIRouter()
log = logging.getLogger("uvicorn.error")

MAX_EXPORT_BYTES = 64 * 1024 * 1024


@router.post("/verify")
async def verify_ledger(
    file: UploadFile = File(...),
    user: Dict[str, Any] = Depends(get_current_user),
) -> Dict[str, Any]:
    """Verifica um ledger.export enviado (sem arquivo lateral: só hashes e elos)."""
    content = await file.read()
    if not content:
        raise HTTPException(status_code=400, detail="Arquivo vazio")
    if len(content) > MAX_EXPORT_BYTES:
        raise HTTPException(status_code=413, detail="Export grande demais")
    result = verify_export(content)
    log.info("[LEDGER] verificação de %s: %s", file.filename, "ok" if result.valid else result.cause)
    return {"valid": result.valid, "height": result.height, "cause": result.cause or None}
