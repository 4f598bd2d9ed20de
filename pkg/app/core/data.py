# app/core/data.py
"""
Datasets rotulados (0 = benigno, 1 = ataque): leitura de CSV genérico
(exports estilo ToN-IoT / N-BaIoT), geração sintética e partição entre nós.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import DataError, EmptyDatasetError, InvalidParameterError
from app.core.numerics import RngState, gaussian_sample


@dataclass(frozen=True)
class LabeledDataset:
    features: npt.NDArray[np.float64]  # linhas × dim
    labels: npt.NDArray[np.int8]       # {0, 1}
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        x = np.array(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise DataError("matriz de features precisa ser 2-D")
        y = np.array(self.labels).reshape(-1)
        if y.shape[0] != x.shape[0]:
            raise DataError(f"linhas não batem: {x.shape[0]} features vs {y.shape[0]} rótulos")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("rótulos precisam ser binários (0/1)")
        if not np.all(np.isfinite(x)):
            raise DataError("features com valores não finitos")
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError("quantidade de nomes de features diferente de dim")
        x.setflags(write=False)
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def positive_rate(self) -> float:
        return float(self.labels.mean()) if len(self) else 0.0

    def subset(self, rows: Sequence[int] | npt.NDArray[np.int64]) -> "LabeledDataset":
        idx = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.feature_names)

    def require_nonempty(self, what: str = "dataset") -> None:
        if len(self) == 0:
            raise EmptyDatasetError(f"{what} vazio")

    @staticmethod
    def concat(parts: Iterable["LabeledDataset"]) -> "LabeledDataset":
        parts = list(parts)
        if not parts:
            raise EmptyDatasetError("nada para concatenar")
        return LabeledDataset(
            np.vstack([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            parts[0].feature_names,
        )


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    samples: int = Field(10000, gt=0)
    feature_dim: int = Field(20, gt=0)
    class_balance: float = Field(0.5, gt=0, lt=1)
    margin: float = Field(0.5, gt=0)
    noise_std: float = Field(0.0, ge=0)


class PartitionSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    node_count: int = Field(10, ge=1)
    mode: Literal["iid", "label_skew"] = "iid"
    concentration: float = Field(1.0, gt=0)
    holdout_fraction: float = Field(0.2, ge=0, lt=1)


@dataclass(frozen=True)
class NodePartition:
    node_id: int
    train: LabeledDataset
    holdout: LabeledDataset


# ---------------------------------------------------------------- CSV

def load_csv(
    path: str,
    label_column: str,
    positive_labels: Iterable[str],
    normalize: bool = True,
) -> LabeledDataset:
    """
    Colunas numéricas viram features; rótulo = 1 se o texto estiver em
    positive_labels. Nunca descarta linhas em silêncio.
    """
    if not os.path.isfile(path):
        raise DataError(f"arquivo não encontrado: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError(f"arquivo sem cabeçalho: {path}")
    except Exception as e:
        raise DataError(f"falha ao ler CSV {path}: {e}")

    if label_column not in df.columns:
        raise DataError(f"coluna de rótulo ausente: {label_column!r}")
    if df.empty:
        raise DataError(f"CSV sem linhas de dados: {path}")

    positives = {str(p).strip() for p in positive_labels}
    labels = df[label_column].map(lambda s: 1 if s.strip() in positives else 0).to_numpy(np.int8)

    feature_cols = [c for c in df.columns if c != label_column]
    if not feature_cols:
        raise DataError("CSV sem colunas de features")

    columns: List[npt.NDArray[np.float64]] = []
    for col in feature_cols:
        raw = df[col].str.strip()
        parsed = pd.to_numeric(raw, errors="coerce")
        bad = parsed.isna().to_numpy() | ~np.isfinite(parsed.to_numpy(dtype=np.float64, na_value=np.nan))
        if bad.all():
            raise DataError(f"coluna não numérica: {col!r}")
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            # +2: cabeçalho é a linha 1 do arquivo
            raise DataError(
                f"valor não numérico na linha {row + 2}, coluna {col!r}: {df[col].iloc[row]!r}"
            )
        columns.append(parsed.to_numpy(dtype=np.float64))

    ds = LabeledDataset(np.column_stack(columns), labels, tuple(feature_cols))
    if len(ds) != len(df):
        raise DataError("contagem de linhas divergente após leitura")
    return min_max_normalize(ds) if normalize else ds


def min_max_normalize(ds: LabeledDataset) -> LabeledDataset:
    """Cada coluna para [0,1]; colunas constantes viram 0."""
    x = ds.features
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (x - lo) / safe, 0.0)
    return LabeledDataset(np.clip(out, 0.0, 1.0), ds.labels, ds.feature_names)


def write_csv(ds: LabeledDataset, path: str, label_column: str = "label",
              label_names: Tuple[str, str] = ("normal", "attack")) -> None:
    """Mesmo esquema aceito por load_csv."""
    df = pd.DataFrame(ds.features, columns=list(ds.feature_names))
    df[label_column] = [label_names[int(y)] for y in ds.labels]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")


# ---------------------------------------------------------------- sintético

def generate_synthetic(spec: SyntheticSpec, rng: RngState) -> LabeledDataset:
    """
    Tráfego sintético linearmente estruturado.

    w* unitário oculto; x ~ N(0, I). O score w*·x (+ ruído gaussiano de
    noise_std) é cortado no quantil que dá class_balance positivos; depois
    cada ponto é afastado do hiperplano em margin/2 na direção do seu rótulo.
    Com noise_std = 0 o conjunto é separável com folga `margin`.
    """
    n, d = spec.samples, spec.feature_dim
    w_star = np.asarray(gaussian_sample(rng, 0.0, 1.0, d))
    norm = float(np.linalg.norm(w_star))
    w_star = w_star / norm if norm > 0 else np.eye(d)[0]

    x = np.asarray(gaussian_sample(rng, 0.0, 1.0, n * d)).reshape(n, d)
    score = x @ w_star
    if spec.noise_std > 0:
        score = score + np.asarray(gaussian_sample(rng, 0.0, spec.noise_std, n))

    # busca do viés: quantil do score
    bias = float(np.quantile(score, 1.0 - spec.class_balance))
    y = (score >= bias).astype(np.int8)

    signs = 2.0 * y - 1.0
    x = x + (spec.margin / 2.0) * signs[:, None] * w_star[None, :]
    names = tuple(f"f{i}" for i in range(d))
    return LabeledDataset(x, y, names)


# ---------------------------------------------------------------- partição

def split_holdout(ds: LabeledDataset, fraction: float, rng: RngState) -> Tuple[LabeledDataset, LabeledDataset]:
    """(restante, holdout) com ⌊fraction·n⌋ linhas sorteadas para holdout."""
    if not 0 <= fraction < 1:
        raise InvalidParameterError(f"fração inválida: {fraction}")
    n = len(ds)
    k = int(math.floor(fraction * n))
    perm = rng.permutation(n)
    hold = np.sort(perm[:k])
    rest = np.sort(perm[k:])
    return ds.subset(rest), ds.subset(hold)


def partition(ds: LabeledDataset, spec: PartitionSpec, rng: RngState) -> List[NodePartition]:
    n = len(ds)
    if spec.node_count > n:
        raise DataError(f"mais nós ({spec.node_count}) que linhas ({n})")

    if spec.mode == "iid":
        shares = _iid_shares(n, spec.node_count, rng)
    else:
        shares = _label_skew_shares(ds.labels, spec.node_count, spec.concentration, rng)

    out: List[NodePartition] = []
    for node_id, rows in enumerate(shares):
        rows = np.asarray(rows, dtype=np.int64)
        k = int(math.floor(spec.holdout_fraction * rows.size))
        order = rng.permutation(rows.size)
        hold = np.sort(rows[order[:k]])
        train = np.sort(rows[order[k:]])
        out.append(NodePartition(node_id, ds.subset(train), ds.subset(hold)))
    return out


def _iid_shares(n: int, nodes: int, rng: RngState) -> List[npt.NDArray[np.int64]]:
    perm = rng.permutation(n)
    # array_split: tamanhos diferem no máximo em 1
    return [np.asarray(s, dtype=np.int64) for s in np.array_split(perm, nodes)]


def _label_skew_shares(labels: npt.NDArray[np.int8], nodes: int, concentration: float,
                       rng: RngState) -> List[npt.NDArray[np.int64]]:
    """
    Para cada rótulo, proporções ~ Dirichlet(concentration·N, ..., concentration·N)
    entre os N nós. A parcela de cada nó varia com coeficiente de variação
    ≈ 1/√(concentration·N): 100 fica próximo do iid, 0.1 concentra rótulos.
    """
    buckets: List[List[int]] = [[] for _ in range(nodes)]
    for label in (0, 1):
        rows = np.flatnonzero(labels == label)
        if rows.size == 0:
            continue
        rows = rows[rng.permutation(rows.size)]
        props = rng.generator.dirichlet(np.full(nodes, concentration * nodes))
        cuts = np.floor(np.cumsum(props)[:-1] * rows.size).astype(np.int64)
        for node_id, chunk in enumerate(np.split(rows, cuts)):
            buckets[node_id].extend(int(r) for r in chunk)

    # nenhum nó pode ficar vazio: empresta uma linha do maior
    for node_id in range(nodes):
        if not buckets[node_id]:
            donor = max(range(nodes), key=lambda j: (len(buckets[j]), -j))
            buckets[node_id].append(buckets[donor].pop())
    return [np.asarray(sorted(b), dtype=np.int64) for b in buckets]
