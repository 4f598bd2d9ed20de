from __future__ import annotations

import logging
import os
from pathlib import Path

from dotenv import load_dotenv
from fastapi import FastAPI

# Carregar .env ANTES de tudo
env_path = Path(__file__).parent.parent / ".env"
load_dotenv(env_path)

from .auth import jwt_secret, operator_key, router as auth_router  # noqa: E402
from .config import output_dir  # noqa: E402
from .routes import ledger, meta, simulations  # noqa: E402

app = FastAPI(title="FL-BCID Simulator", version="1.0.0")


# --------------------------- Startup ----------------------------------- #
@app.on_event("startup")
async def _startup():
    logger = logging.getLogger("uvicorn.error")
    logger.info("Inicializando simulador FL-BCID.")

    if not operator_key():
        logger.warning("⚠️ FLBCID_OPERATOR_KEY não configurada: login desabilitado.")
    else:
        logger.info("✅ FLBCID_OPERATOR_KEY configurada")

    if jwt_secret() == "change-me":
        logger.warning("⚠️ FLBCID_JWT_SECRET usando valor padrão. Configure no .env.")
    else:
        logger.info("✅ FLBCID_JWT_SECRET configurado")

    out = output_dir()
    try:
        os.makedirs(out, exist_ok=True)
        logger.info("✅ Diretório de saída: %s", out)
    except OSError:
        logger.exception("❌ Não foi possível criar o diretório de saída %s", out)


# ---------------------------- Rotas ------------------------------------ #
app.include_router(auth_router,        prefix="/api/auth",        tags=["auth"])
app.include_router(meta.router,        prefix="/api/config",      tags=["config"])
app.include_router(simulations.router, prefix="/api/simulations", tags=["simulations"])
app.include_router(ledger.router,      prefix="/api/ledger",      tags=["ledger"])


# Healthcheck simples
@app.get("/healthz")
async def healthz():
    return {"ok": True}
