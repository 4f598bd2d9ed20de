# app/core/numerics.py
"""
Substrato numérico determinístico: vetores reais (float64), PRNG semeado
e amostragem gaussiana.

O gerador é o Philox (baseado em contador) da numpy, inicializado por
SeedSequence(seed, spawn_key=(stream_id,)). Cada par (seed, stream_id)
produz um fluxo independente e reprodutível.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List

import numpy as np
import numpy.typing as npt
from numpy.random import Generator, Philox, SeedSequence

from app.core.errors import DimensionMismatchError, InvalidParameterError

RealVector = npt.NDArray[np.float64]

_MAX_SEED = 2**64 - 1
# |vᵢ|² representável sem perder precisão nesta faixa
_NORM_SAFE_LOW = 1e-150
_NORM_SAFE_HIGH = 1e150


def as_vector(values: Iterable[float] | npt.ArrayLike) -> RealVector:
    """Cópia float64 1-D, somente leitura. Rejeita vazio e NaN/Inf."""
    v = np.array(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise InvalidParameterError("vetor vazio (dim deve ser positivo)")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError("vetor com entradas não finitas")
    v.setflags(write=False)
    return v


def zeros(dim: int) -> RealVector:
    if dim <= 0:
        raise InvalidParameterError(f"dim inválido: {dim}")
    v = np.zeros(dim, dtype=np.float64)
    v.setflags(write=False)
    return v


def check_same_dim(a: RealVector, b: RealVector) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimensões diferentes: {a.shape[0]} != {b.shape[0]}")


@dataclass
class RngState:
    """
    Gerador de um único dono (um nó lógico). Nunca compartilhar entre nós.
    """
    seed: int
    stream_id: int
    seed_seq: SeedSequence = field(repr=False)
    generator: Generator = field(repr=False)

    def spawn(self, n: int) -> List["RngState"]:
        """Filhos independentes; chamadas sucessivas geram filhos distintos."""
        children = self.seed_seq.spawn(n)
        return [
            RngState(self.seed, self.stream_id, ss, Generator(Philox(ss)))
            for ss in children
        ]

    def uniform(self, size: int) -> RealVector:
        return self.generator.random(size)

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        return self.generator.permutation(n)


def seeded_rng(seed: int, stream_id: int = 0) -> RngState:
    if not 0 <= int(seed) <= _MAX_SEED:
        raise InvalidParameterError(f"seed fora de 64 bits: {seed}")
    if int(stream_id) < 0:
        raise InvalidParameterError(f"stream_id negativo: {stream_id}")
    ss = SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return RngState(int(seed), int(stream_id), ss, Generator(Philox(ss)))


def gaussian_sample(rng: RngState, mean: float, std: float, dim: int) -> RealVector:
    """
    dim amostras i.i.d. de Normal(mean, std²) pela transformação de Box–Muller.
    std == 0 devolve o vetor constante sem consumir o gerador.
    """
    if std < 0 or not np.isfinite(std):
        raise InvalidParameterError(f"desvio padrão inválido: {std}")
    if dim <= 0:
        raise InvalidParameterError(f"dim inválido: {dim}")
    if std == 0:
        v = np.full(dim, float(mean), dtype=np.float64)
        v.setflags(write=False)
        return v

    pairs = (dim + 1) // 2
    u = rng.uniform(2 * pairs).reshape(pairs, 2)
    # 1 - U em (0, 1]: log nunca recebe zero
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty(2 * pairs, dtype=np.float64)
    z[0::2] = radius * np.cos(theta)
    z[1::2] = radius * np.sin(theta)
    out = mean + std * z[:dim]
    out.setflags(write=False)
    return out


def l2_norm(v: RealVector) -> float:
    """‖v‖₂ sem estouro nem underflow: fora da faixa segura reescala pelo maior |vᵢ|."""
    a = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return 0.0
    m = float(np.max(np.abs(a)))
    if m == 0.0 or not np.isfinite(m) or _NORM_SAFE_LOW <= m <= _NORM_SAFE_HIGH:
        return float(np.linalg.norm(a))
    return m * float(np.linalg.norm(a / m))
