from __future__ import annotations

import hmac
from datetime import datetime, timedelta, timezone
from typing import Any, Dict

import jwt  # PyJWT
from fastapi import APIRouter, Depends, HTTPException
from fastapi.security import HTTPAuthorizationCredentials, HTTPBearer
from pydantic import BaseModel

from app.config import _get_env_int, _get_env_str

router = APIRouter()
security = HTTPBearer(auto_error=True)

JWT_ALGORITHM = "HS256"


def jwt_secret() -> str:
    return _get_env_str("FLBCID_JWT_SECRET", default="change-me")


def jwt_expire_minutes() -> int:
    return _get_env_int("FLBCID_JWT_EXPIRE_MINUTES", 720)  # 12 h


def operator_key() -> str:
    return _get_env_str("FLBCID_OPERATOR_KEY")


# --------- MODELOS ---------
class LoginIn(BaseModel):
    key: str
    label: str = "operator"


class LoginOut(BaseModel):
    jwt: str
    expires_at: str


# --------- JWT helpers ---------
def _jwt_encode(payload: dict) -> str:
    try:
        return jwt.encode(payload, jwt_secret(), algorithm=JWT_ALGORITHM)
    except Exception as e:
        raise HTTPException(status_code=500, detail=f"Falha ao assinar JWT: {e}")


def _jwt_decode(token: str) -> dict:
    try:
        return jwt.decode(token, jwt_secret(), algorithms=[JWT_ALGORITHM])
    except jwt.ExpiredSignatureError:
        raise HTTPException(status_code=401, detail="JWT expirado")
    except jwt.InvalidTokenError as e:
        raise HTTPException(status_code=401, detail=f"JWT inválido: {e}")


def get_current_user(credentials: HTTPAuthorizationCredentials = Depends(security)) -> Dict[str, Any]:
    tok = credentials.credentials or ""
    if not tok:
        raise HTTPException(status_code=401, detail="Sem credenciais")
    payload = _jwt_decode(tok)
    if not str(payload.get("sub", "")).startswith("operator:"):
        raise HTTPException(status_code=401, detail="Token não é de operador")
    return payload


# --------- ROTAS ---------
@router.post("/login", response_model=LoginOut)
def login(body: LoginIn) -> LoginOut:
    """Troca a chave de operador (FLBCID_OPERATOR_KEY) por um JWT."""
    expected = operator_key()
    if not expected:
        raise HTTPException(status_code=503, detail="FLBCID_OPERATOR_KEY não configurada")
    given = (body.key or "").strip()
    if not given or not hmac.compare_digest(given.encode(), expected.encode()):
        raise HTTPException(status_code=401, detail="Chave de operador inválida")

    exp = datetime.now(timezone.utc) + timedelta(minutes=jwt_expire_minutes())
    token = _jwt_encode({"sub": f"operator:{body.label}", "exp": exp})
    return LoginOut(jwt=token, expires_at=exp.isoformat())
