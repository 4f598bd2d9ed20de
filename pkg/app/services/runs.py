import asyncio
import logging
import os
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Mapping, Optional

from fastapi import HTTPException

from app.config import SimulationConfig, output_dir, to_flat, with_overrides
from app.core.errors import ConfigError
from app.services.reports import metrics_row, write_outputs
from app.services.simulation import SimulationResult, run_simulation

log = logging.getLogger("uvicorn.error")

MAX_CONCURRENT_RUNS = 2
MAX_KEPT_RUNS = 100


def _now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass
class RunState:
    run_id: str
    config: SimulationConfig
    out_dir: str
    status: str = "queued"  # queued | running | done | error
    created_at: datetime = field(default_factory=_now)
    finished_at: Optional[datetime] = None
    error: Optional[str] = None
    # só o resumo e as linhas por rodada sobrevivem ao fim da execução
    outcome: Optional[Dict[str, Any]] = None
    round_rows: Optional[List[Dict[str, str]]] = None

    def keep(self, result: SimulationResult) -> None:
        rep = result.report
        fm = rep.final_metrics
        self.outcome = {
            "rounds": len(rep.rounds),
            "final_accuracy": fm.accuracy,
            "final_f1": fm.f1,
            "rounds_to_convergence": rep.rounds_to_convergence,
            "chain_height": result.chain.height,
            "chain_tip": result.chain.tip_hash.hex(),
            "events": list(rep.events),
        }
        self.round_rows = [metrics_row(r) for r in rep.rounds]

    @property
    def finished(self) -> bool:
        return self.status in ("done", "error")

    def summary(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "id": self.run_id,
            "status": self.status,
            "created_at": self.created_at.isoformat(),
            "finished_at": self.finished_at.isoformat() if self.finished_at else None,
            "out_dir": self.out_dir,
            "error": self.error,
            "config": to_flat(self.config),
        }
        if self.outcome is not None:
            out.update(self.outcome)
        return out


class RunManager:
    """Execuções em background: uma task asyncio por run, simulação em thread."""

    def __init__(self, base_dir: Optional[str] = None, max_concurrent: int = MAX_CONCURRENT_RUNS,
                 max_kept: int = MAX_KEPT_RUNS) -> None:
        self.base_dir = base_dir
        self._max_kept = max_kept
        self._runs: Dict[str, RunState] = {}
        self._tasks: Dict[str, asyncio.Task] = {}
        self._slots: Optional[asyncio.Semaphore] = None
        self._max_concurrent = max_concurrent
        self._lock = asyncio.Lock()

    def _semaphore(self) -> asyncio.Semaphore:
        if self._slots is None:
            self._slots = asyncio.Semaphore(self._max_concurrent)
        return self._slots

    def is_running(self, run_id: str) -> bool:
        task = self._tasks.get(run_id)
        return task is not None and not task.done()

    async def start_run(self, overrides: Mapping[str, Any]) -> RunState:
        try:
            config = with_overrides(SimulationConfig(), overrides)
        except ConfigError as e:
            raise HTTPException(status_code=400, detail=str(e))
        run_id = uuid.uuid4().hex[:12]
        out_dir = os.path.join(self.base_dir or output_dir(), run_id)
        state = RunState(run_id, config, out_dir)
        async with self._lock:
            self._evict_finished()
            self._runs[run_id] = state
            self._tasks[run_id] = asyncio.create_task(self._run(state))
        return state

    def _evict_finished(self) -> None:
        """Abre espaço descartando as execuções finalizadas mais antigas."""
        finished = [s for s in self.list() if s.finished]
        while len(self._runs) >= self._max_kept and finished:
            dropped = finished.pop(0)
            del self._runs[dropped.run_id]
            log.info("[RUNS] histórico cheio, descartando %s", dropped.run_id)

    async def wait(self, run_id: str) -> RunState:
        task = self._tasks.get(run_id)
        if task is not None:
            await task
        return self.get(run_id)

    def get(self, run_id: str) -> RunState:
        state = self._runs.get(run_id)
        if state is None:
            raise HTTPException(status_code=404, detail="Execução não encontrada")
        return state

    def list(self) -> List[RunState]:
        return sorted(self._runs.values(), key=lambda s: s.created_at)

    def rounds(self, run_id: str) -> List[Dict[str, str]]:
        state = self.get(run_id)
        if state.round_rows is None:
            raise HTTPException(status_code=409, detail=f"Execução em estado {state.status}")
        return list(state.round_rows)

    async def _run(self, state: RunState) -> None:
        async with self._semaphore():
            state.status = "running"
            log.info("[RUNS] iniciando %s em %s", state.run_id, state.out_dir)
            try:
                archive = os.path.join(state.out_dir, "archive")
                result = await asyncio.to_thread(run_simulation, state.config, archive)
                await asyncio.to_thread(write_outputs, result, state.out_dir)
                state.keep(result)
                state.status = "done"
            except Exception as exc:  # noqa: BLE001
                log.exception("[RUNS] falha na execução %s", state.run_id)
                state.status = "error"
                state.error = str(exc)
            finally:
                state.finished_at = _now()
                async with self._lock:
                    self._tasks.pop(state.run_id, None)
                log.info("[RUNS] %s finalizada (%s)", state.run_id, state.status)


run_manager = RunManager()
