# app/core/aggregation.py
"""
Síntese do modelo global: FedAvg, divergência, pesos de confiança e
agregação ponderada por confiança.

Toda soma é feita em ordem crescente de node_id, então a ordem de entrada
das contribuições nunca altera o resultado.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Literal, Mapping, Sequence

import numpy as np

from app.core.errors import AggregationError, DimensionMismatchError, InvalidParameterError
from app.core.model import ModelWeights
from app.core.numerics import check_same_dim, l2_norm

AggregationMode = Literal["plain", "trust"]


@dataclass(frozen=True)
class WeightedContribution:
    node_id: int
    weights: ModelWeights
    sample_count: int
    accepted: bool = True

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise InvalidParameterError(f"sample_count inválido para nó {self.node_id}")


@dataclass(frozen=True)
class TrustVector:
    trust: Mapping[int, float]

    def __getitem__(self, node_id: int) -> float:
        return self.trust.get(node_id, 0.0)

    def total(self) -> float:
        return float(sum(self.trust[k] for k in sorted(self.trust)))


def _accepted(contribs: Iterable[WeightedContribution]) -> List[WeightedContribution]:
    acc = sorted((c for c in contribs if c.accepted), key=lambda c: c.node_id)
    if not acc:
        raise AggregationError("nenhuma contribuição aceita")
    dim = acc[0].weights.dim
    for c in acc:
        if c.weights.dim != dim:
            raise DimensionMismatchError(f"nó {c.node_id}: dim {c.weights.dim} != {dim}")
    return acc


def combine(contribs: Sequence[WeightedContribution], raw_weights: Mapping[int, float]) -> ModelWeights:
    """
    Média coordenada a coordenada com coeficientes raw/Σraw, somada em ordem
    de node_id e presa ao envelope [min, max] das contribuições.

    Também é usada pela auditoria do ledger: os mesmos pesos brutos
    reproduzem o mesmo agregado bit a bit.
    """
    acc = _accepted(contribs)
    total = 0.0
    for c in acc:
        total += float(raw_weights.get(c.node_id, 0.0))
    if not total > 0:
        raise AggregationError("soma dos pesos de agregação é zero")

    out = np.zeros(acc[0].weights.dim, dtype=np.float64)
    for c in acc:
        coef = float(raw_weights.get(c.node_id, 0.0)) / total
        out = out + coef * c.weights.w

    stack = np.vstack([c.weights.w for c in acc])
    out = np.clip(out, stack.min(axis=0), stack.max(axis=0))
    return ModelWeights(out)


def plain_weights(contribs: Iterable[WeightedContribution]) -> Dict[int, float]:
    return {c.node_id: float(c.sample_count) for c in _accepted(contribs)}


def trust_raw_weights(contribs: Iterable[WeightedContribution], trust: TrustVector) -> Dict[int, float]:
    return {c.node_id: trust[c.node_id] * float(c.sample_count) for c in _accepted(contribs)}


def fed_avg(contribs: Sequence[WeightedContribution]) -> ModelWeights:
    return combine(contribs, plain_weights(contribs))


def trust_weighted_avg(contribs: Sequence[WeightedContribution], trust: TrustVector) -> ModelWeights:
    """Pesos ∝ Tᵢ·|𝒟ᵢ| renormalizados sobre os aceitos."""
    return combine(contribs, trust_raw_weights(contribs, trust))


def divergence(w_i: ModelWeights, w_bar: ModelWeights) -> float:
    check_same_dim(w_i.w, w_bar.w)
    return l2_norm(w_i.w - w_bar.w)


def trust_weights(reputations: Mapping[int, float]) -> TrustVector:
    """Tᵢ = Rᵢ / Σⱼ Rⱼ."""
    if not reputations:
        raise AggregationError("sem reputações")
    for node_id, r in reputations.items():
        if r < 0 or not np.isfinite(r):
            raise InvalidParameterError(f"reputação inválida para nó {node_id}: {r}")
    ordered = sorted(reputations)
    total = 0.0
    for k in ordered:
        total += float(reputations[k])
    if not total > 0:
        raise AggregationError("todas as reputações são zero")
    return TrustVector({k: float(reputations[k]) / total for k in ordered})


def uniform_trust(node_ids: Iterable[int]) -> TrustVector:
    ids = sorted(set(node_ids))
    if not ids:
        raise AggregationError("sem nós")
    return TrustVector({k: 1.0 / len(ids) for k in ids})
