# app/services/baselines.py
"""
Comparação com linhas de base (mesmos dados, mesma seed, mesmas T rodadas):

  fl_bcid      a configuração dada
  standard_fl  contrato desligado, FedAvg simples, denso, toda rodada
  centralized  um único modelo treinado sobre os dados de todos os nós
  local_only   cada nó treina sozinho; média das acurácias no teste global
"""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.config import SimulationConfig, with_overrides
from app.core.data import LabeledDataset
from app.core.model import ModelWeights, NodeState, local_training_round
from app.core.numerics import seeded_rng
from app.services.simulation import (
    STREAM_NODE_BASE,
    ClassificationMetrics,
    build_nodes,
    compute_metrics,
    prepare_data,
    run_simulation,
)

log = logging.getLogger("uvicorn.error")

COMPARISON_COLUMNS = ("baseline", "accuracy", "precision", "recall", "f1", "uplink_bytes", "ledger_bytes")

STANDARD_FL_OVERRIDES = {
    "contract.enabled": "false",
    "aggregation.mode": "plain",
    "transport.sparsity_rho": "1.0",
    "transport.update_every": "1",
}


@dataclass(frozen=True)
class BaselineResult:
    name: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    uplink_bytes: int = 0
    ledger_bytes: int = 0


def _from_metrics(name: str, m: ClassificationMetrics, uplink: int = 0, ledger: int = 0) -> BaselineResult:
    return BaselineResult(name, m.accuracy, m.precision, m.recall, m.f1, uplink, ledger)


def _federated(name: str, config: SimulationConfig) -> BaselineResult:
    result = run_simulation(config)
    rounds = result.report.rounds
    return _from_metrics(
        name,
        result.report.final_metrics,
        sum(r.uplink_bytes for r in rounds),
        sum(r.ledger_bytes for r in rounds),
    )


def _train_alone(node: NodeState, config: SimulationConfig) -> ModelWeights:
    w = ModelWeights.zeros(node.train.dim)
    for t in range(1, config.simulation.rounds + 1):
        w = local_training_round(node, w, config.train, config.dp, node.rng, t, config.model.threshold).weights
    return w


def centralized(config: SimulationConfig) -> BaselineResult:
    test, parts = prepare_data(config)
    pooled = NodeState(
        node_id=0,
        train=LabeledDataset.concat(p.train for p in parts),
        holdout=LabeledDataset.concat(p.holdout for p in parts),
        rng=seeded_rng(config.simulation.seed, STREAM_NODE_BASE),
    )
    return _from_metrics("centralized", compute_metrics(_train_alone(pooled, config), test, config.model.threshold))


def local_only(config: SimulationConfig) -> BaselineResult:
    test, parts = prepare_data(config)
    per_node = [
        compute_metrics(_train_alone(node, config), test, config.model.threshold)
        for node in build_nodes(config, parts)
    ]
    return BaselineResult(
        "local_only",
        float(np.mean([m.accuracy for m in per_node])),
        float(np.mean([m.precision for m in per_node])),
        float(np.mean([m.recall for m in per_node])),
        float(np.mean([m.f1 for m in per_node])),
    )


def compare(config: SimulationConfig) -> List[BaselineResult]:
    out = [
        _federated("fl_bcid", config),
        _federated("standard_fl", with_overrides(config, STANDARD_FL_OVERRIDES)),
        centralized(config),
        local_only(config),
    ]
    for b in out:
        log.info("[SIM] baseline %s: acc=%.4f f1=%.4f", b.name, b.accuracy, b.f1)
    return out


def write_comparison(results: List[BaselineResult], out_dir: str, filename: Optional[str] = None) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, filename or "comparison.csv")
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COMPARISON_COLUMNS)
        for b in results:
            writer.writerow([b.name, repr(b.accuracy), repr(b.precision), repr(b.recall), repr(b.f1),
                             b.uplink_bytes, b.ledger_bytes])
    return path
