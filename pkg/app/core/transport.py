# app/core/transport.py
"""
Codificação de updates no fio (valores float32, índices uint32), contagem
exata de bytes, esparsificação top-k e custo de update (α·Size + β·Latency).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import DimensionMismatchError, InvalidParameterError
from app.core.numerics import RealVector

DEFAULT_HEADER_BYTES = 16
VALUE_BYTES = 4
INDEX_BYTES = 4


class EncodingKind(str, Enum):
    DENSE = "dense"
    SPARSE = "sparse"


@dataclass(frozen=True)
class UpdateEncoding:
    kind: EncodingKind
    dim: int
    values: npt.NDArray[np.float32] = field(repr=False)
    indices: npt.NDArray[np.uint32] = field(default_factory=lambda: np.zeros(0, dtype=np.uint32), repr=False)
    header_bytes: int = DEFAULT_HEADER_BYTES

    @property
    def count(self) -> int:
        return int(self.values.shape[0])


class TransportSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sparsity_rho: float = Field(1.0, gt=0, le=1)
    update_every: int = Field(1, ge=1)
    header_bytes: int = Field(DEFAULT_HEADER_BYTES, ge=0)


class CostParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(1.0, ge=0)
    beta: float = Field(0.0, ge=0)
    default_latency: float = Field(0.0, ge=0)
    latency: Dict[int, float] = Field(default_factory=dict)

    def latency_for(self, node_id: int) -> float:
        value = self.latency.get(node_id, self.default_latency)
        if value < 0:
            raise InvalidParameterError(f"latência negativa para nó {node_id}")
        return value


def encode_dense(v: RealVector, header_bytes: int = DEFAULT_HEADER_BYTES) -> UpdateEncoding:
    values = np.asarray(v, dtype=np.float64).astype(np.float32)  # round-to-nearest
    return UpdateEncoding(EncodingKind.DENSE, int(values.shape[0]), values, header_bytes=header_bytes)


def topk_count(rho: float, dim: int) -> int:
    if not 0 < rho <= 1:
        raise InvalidParameterError(f"rho fora de (0,1]: {rho}")
    # round: 0.3*100 = 30.000000000000004 não pode virar 31
    return max(1, min(dim, math.ceil(round(rho * dim, 9))))


def sparsify_topk(delta: RealVector, rho: float,
                  header_bytes: int = DEFAULT_HEADER_BYTES) -> UpdateEncoding:
    """Mantém as ⌈ρ·dim⌉ maiores magnitudes; empate favorece o menor índice."""
    d = np.asarray(delta, dtype=np.float64).reshape(-1)
    k = topk_count(rho, d.shape[0])
    order = np.lexsort((np.arange(d.shape[0]), -np.abs(d)))
    kept = np.sort(order[:k])
    return UpdateEncoding(
        EncodingKind.SPARSE,
        int(d.shape[0]),
        d[kept].astype(np.float32),
        kept.astype(np.uint32),
        header_bytes,
    )


def densify(enc: UpdateEncoding, dim: int) -> RealVector:
    if enc.kind is EncodingKind.DENSE:
        if enc.count != dim:
            raise DimensionMismatchError(f"dense com {enc.count} valores, esperado {dim}")
        return enc.values.astype(np.float64)
    if enc.indices.shape[0] != enc.count:
        raise InvalidParameterError("índices e valores com tamanhos diferentes")
    if enc.count and int(enc.indices.max()) >= dim:
        raise InvalidParameterError(f"índice fora do intervalo para dim={dim}")
    out = np.zeros(dim, dtype=np.float64)
    out[enc.indices.astype(np.int64)] = enc.values.astype(np.float64)
    return out


def payload_bytes(enc: UpdateEncoding) -> int:
    if enc.kind is EncodingKind.DENSE:
        return enc.header_bytes + VALUE_BYTES * enc.dim
    return enc.header_bytes + (INDEX_BYTES + VALUE_BYTES) * enc.count


def update_cost(size_bytes: int, latency: float, params: CostParams) -> float:
    if size_bytes < 0 or latency < 0:
        raise InvalidParameterError("tamanho/latência negativos")
    return params.alpha * size_bytes + params.beta * latency
