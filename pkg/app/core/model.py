# app/core/model.py
"""
Modelo leve de detecção de intrusão: regressão logística binária
(ataque vs benigno), com o viés dobrado na última coordenada de w.

Inclui a rodada local de treino com tratamento de privacidade diferencial
(clipping + ruído gaussiano) e o anomaly score aᵢ = 1 − acurácia local.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal, Optional

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from app.core.data import LabeledDataset
from app.core.errors import DimensionMismatchError, EmptyDatasetError
from app.core.numerics import RealVector, RngState, as_vector, gaussian_sample, l2_norm, zeros

if TYPE_CHECKING:
    from app.core.transport import UpdateEncoding

DEFAULT_THRESHOLD = 0.5

# p nunca encosta em 0 ou 1
_P_MIN = float(np.nextafter(0.0, 1.0))
_P_MAX = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class ModelWeights:
    w: RealVector

    def __post_init__(self) -> None:
        object.__setattr__(self, "w", as_vector(self.w))

    @property
    def dim(self) -> int:
        return int(self.w.shape[0])

    @property
    def feature_dim(self) -> int:
        return self.dim - 1

    @classmethod
    def zeros(cls, feature_dim: int) -> "ModelWeights":
        return cls(zeros(feature_dim + 1))


class DpConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    clip_norm: float = Field(1.0, gt=0)
    noise_scale: float = Field(1.0, ge=0)
    # em que granularidade o ruído é sorteado; clipping é sempre por passo
    granularity: Literal["step", "epoch", "round"] = "step"


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(0.01, gt=0)
    local_epochs: int = Field(3, gt=0)
    batch_size: int = Field(64, gt=0)


@dataclass(frozen=True)
class NodeState:
    node_id: int
    train: LabeledDataset
    holdout: LabeledDataset
    rng: RngState
    behavior: Literal["honest", "poisoner"] = "honest"

    @property
    def eval_set(self) -> LabeledDataset:
        # holdout vazio (fração 0): avalia no próprio treino
        return self.holdout if len(self.holdout) else self.train


@dataclass(frozen=True)
class LocalUpdate:
    node_id: int
    weights: ModelWeights
    anomaly_score: float
    round_index: int
    sample_count: int
    payload: Optional["UpdateEncoding"] = None


# ---------------------------------------------------------------- forward

def _augment(x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.hstack([x, np.ones((x.shape[0], 1))])


def _sigmoid(z: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _P_MIN, _P_MAX)


def _check_dims(weights: ModelWeights, feature_dim: int) -> None:
    if feature_dim + 1 != weights.dim:
        raise DimensionMismatchError(
            f"features dim {feature_dim} incompatível com pesos dim {weights.dim}"
        )


def predict_proba(weights: ModelWeights, features: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    _check_dims(weights, x.shape[1])
    return _sigmoid(_augment(x) @ weights.w)


def predict(weights: ModelWeights, features: RealVector) -> float:
    x = np.asarray(features, dtype=np.float64).reshape(-1)
    return float(predict_proba(weights, x[None, :])[0])


def classify(weights: ModelWeights, features: npt.NDArray[np.float64],
             threshold: float = DEFAULT_THRESHOLD) -> npt.NDArray[np.int8]:
    # empate (p == threshold) conta como positivo
    return (predict_proba(weights, features) >= threshold).astype(np.int8)


# ---------------------------------------------------------------- perda

def local_loss(weights: ModelWeights, dataset: LabeledDataset) -> float:
    """Entropia cruzada binária média sobre o dataset."""
    if len(dataset) == 0:
        raise EmptyDatasetError("dataset vazio para local_loss")
    p = predict_proba(weights, dataset.features)
    y = dataset.labels.astype(np.float64)
    losses = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(np.mean(losses))


def loss_gradient(weights: ModelWeights, batch: LabeledDataset) -> RealVector:
    if len(batch) == 0:
        raise EmptyDatasetError("batch vazio para loss_gradient")
    xa = _augment(batch.features)
    _check_dims(weights, batch.dim)
    residual = _sigmoid(xa @ weights.w) - batch.labels.astype(np.float64)
    return (residual @ xa) / len(batch)


# ---------------------------------------------------------------- DP

def clip_gradient(g: RealVector, clip_norm: float) -> RealVector:
    """g / max(1, ‖g‖₂/C). Abaixo do limiar devolve g sem alteração."""
    g = np.asarray(g, dtype=np.float64)
    norm = l2_norm(g)
    if norm <= clip_norm:
        return g.copy()
    return g / (norm / clip_norm)


def add_dp_noise(g: RealVector, dp: DpConfig, rng: RngState) -> RealVector:
    g = np.asarray(g, dtype=np.float64)
    if dp.noise_scale == 0:
        return g.copy()
    return g + gaussian_sample(rng, 0.0, dp.noise_scale * dp.clip_norm, g.shape[0])


# ---------------------------------------------------------------- avaliação

def anomaly_score(weights: ModelWeights, eval_set: LabeledDataset,
                  threshold: float = DEFAULT_THRESHOLD) -> float:
    """aᵢ = 1 − acurácia local."""
    if len(eval_set) == 0:
        raise EmptyDatasetError("conjunto de avaliação vazio")
    hits = int(np.count_nonzero(classify(weights, eval_set.features, threshold) == eval_set.labels))
    n = len(eval_set)
    return (n - hits) / n


# ---------------------------------------------------------------- rodada local

def local_training_round(
    node: NodeState,
    global_w: ModelWeights,
    train: TrainConfig,
    dp: DpConfig,
    rng: RngState,
    round_index: int = 0,
    threshold: float = DEFAULT_THRESHOLD,
) -> LocalUpdate:
    """
    Parte de global_w e faz local_epochs passadas sobre o treino do nó, em
    minibatches (o último pode ser menor) numa ordem embaralhada semeada.
    Cada passo: gradiente → clip → ruído → w -= η·ĝ.

    O rng é dividido em dois filhos (embaralhamento, ruído) para que a
    ordem dos batches não dependa de σ.
    """
    data = node.train
    data.require_nonempty(f"treino do nó {node.node_id}")
    _check_dims(global_w, data.dim)

    shuffle_rng, noise_rng = rng.spawn(2)
    eta = train.learning_rate
    n = len(data)
    w = np.array(global_w.w, dtype=np.float64)

    for _epoch in range(train.local_epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, train.batch_size):
            batch = data.subset(order[start:start + train.batch_size])
            g = loss_gradient(ModelWeights(w), batch)
            g = clip_gradient(g, dp.clip_norm)
            if dp.granularity == "step":
                g = add_dp_noise(g, dp, noise_rng)
            w = w - eta * g
        if dp.granularity == "epoch":
            w = w - eta * add_dp_noise(np.zeros_like(w), dp, noise_rng)
    if dp.granularity == "round":
        w = w - eta * add_dp_noise(np.zeros_like(w), dp, noise_rng)

    final = ModelWeights(w)
    return LocalUpdate(
        node_id=node.node_id,
        weights=final,
        anomaly_score=anomaly_score(final, node.eval_set, threshold),
        round_index=round_index,
        sample_count=n,
    )
