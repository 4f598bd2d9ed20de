# app/core/contract.py
"""
Regras do smart contract: aceita/rejeita cada LocalUpdate contra limiares
de divergência e anomalia, e mantém as reputações Rᵢ.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import InvalidParameterError, UnknownNodeError
from app.core.model import LocalUpdate, ModelWeights
from app.core.numerics import l2_norm


class ContractPolicy(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = True
    max_divergence: float = Field(5.0, gt=0)
    max_anomaly: float = Field(0.5, gt=0, le=1)
    reputation_step: float = Field(1.0, gt=0)
    # κ: rejeita se Dᵢ > κ·mediana das divergências da rodada (None = desligado)
    max_relative_divergence: Optional[float] = Field(None, gt=0)


class VerdictReason(str, Enum):
    OK = "ok"
    DIVERGENCE_EXCEEDED = "divergence_exceeded"
    ANOMALY_EXCEEDED = "anomaly_exceeded"
    MALFORMED = "malformed"


@dataclass(frozen=True)
class Verdict:
    decision: int
    reason: VerdictReason

    def __post_init__(self) -> None:
        if (self.decision == 1) != (self.reason is VerdictReason.OK):
            raise InvalidParameterError(f"veredito inconsistente: {self.decision}/{self.reason.value}")

    @property
    def accepted(self) -> bool:
        return self.decision == 1

    @classmethod
    def ok(cls) -> "Verdict":
        return cls(1, VerdictReason.OK)

    @classmethod
    def reject(cls, reason: VerdictReason) -> "Verdict":
        return cls(0, reason)


def is_well_formed(update: LocalUpdate, reference_global: ModelWeights) -> bool:
    w = getattr(update.weights, "w", None)
    if w is None or np.shape(w) != reference_global.w.shape:
        return False
    a = update.anomaly_score
    return bool(np.all(np.isfinite(w))) and np.isfinite(a) and 0.0 <= a <= 1.0


def validate_update(
    update: LocalUpdate,
    reference_global: ModelWeights,
    policy: ContractPolicy,
    round_median_divergence: Optional[float] = None,
) -> Verdict:
    """
    1 sse divergência ≤ D_max E aᵢ ≤ a_max E pesos finitos (limiares
    inclusivos). Update malformado vira Verdict(0, malformed), nunca exceção.
    """
    try:
        if not is_well_formed(update, reference_global):
            return Verdict.reject(VerdictReason.MALFORMED)
        if not policy.enabled:
            return Verdict.ok()
        dist = l2_norm(np.asarray(update.weights.w) - reference_global.w)
        if not np.isfinite(dist) or dist > policy.max_divergence:
            return Verdict.reject(VerdictReason.DIVERGENCE_EXCEEDED)
        kappa = policy.max_relative_divergence
        if kappa is not None and round_median_divergence is not None and round_median_divergence > 0:
            if dist > kappa * round_median_divergence:
                return Verdict.reject(VerdictReason.DIVERGENCE_EXCEEDED)
        if update.anomaly_score > policy.max_anomaly:
            return Verdict.reject(VerdictReason.ANOMALY_EXCEEDED)
        return Verdict.ok()
    except Exception:  # noqa: BLE001
        return Verdict.reject(VerdictReason.MALFORMED)


@dataclass(frozen=True)
class ReputationLedger:
    """Rᵢ ≥ 0, só cresce. Começa em zero para todos os nós."""
    scores: Mapping[int, float]
    history: Tuple[Mapping[int, Verdict], ...] = field(default=())

    @classmethod
    def initial(cls, node_ids: Iterable[int]) -> "ReputationLedger":
        return cls(MappingProxyType({int(i): 0.0 for i in sorted(set(node_ids))}))

    def __getitem__(self, node_id: int) -> float:
        if node_id not in self.scores:
            raise UnknownNodeError(f"nó desconhecido: {node_id}")
        return self.scores[node_id]

    def as_dict(self) -> Dict[int, float]:
        return dict(self.scores)

    def record_round(self, verdicts: Mapping[int, Verdict]) -> "ReputationLedger":
        return replace(self, history=self.history + (MappingProxyType(dict(verdicts)),))


def update_reputation(ledger: ReputationLedger, node_id: int, verdict: Verdict,
                      delta: float) -> ReputationLedger:
    """Rᵢ(t+1) = Rᵢ(t) + δ·Valid(wᵢ)."""
    if not delta > 0:
        raise InvalidParameterError(f"δ precisa ser positivo: {delta}")
    if node_id not in ledger.scores:
        raise UnknownNodeError(f"nó desconhecido: {node_id}")
    if not verdict.accepted:
        return ledger
    scores = dict(ledger.scores)
    scores[node_id] = scores[node_id] + delta
    return replace(ledger, scores=MappingProxyType(scores))
