from fastapi import APIRouter, Depends

from app.auth import get_current_user
from app.config import SimulationConfig, to_flat

router = APIRouter()


@router.get("/defaults")
async def config_defaults(user=Depends(get_current_user)):
    return to_flat(SimulationConfig())
