# app/services/simulation.py
"""
Driver do FL-BCID: executa o laço de rodadas de ponta a ponta.

Por rodada:
  broadcast de w̄ → treino local (paralelizável) → veneno (nós atacantes)
  → codificação/transporte → validação do contrato → agregação
  → reputações → arquivo lateral → bloco → consenso → commit → métricas.

Treino é a única etapa paralela; validação, agregação, consenso e commit
formam uma barreira serial em ordem crescente de node_id.
"""
from __future__ import annotations

import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from app.config import SimulationConfig
from app.core.aggregation import (
    WeightedContribution,
    combine,
    divergence,
    plain_weights,
    trust_raw_weights,
    trust_weights,
    uniform_trust,
)
from app.core.consensus import ConsensusResult, ValidatorSet, build_validator_set, run_consensus_round
from app.core.contract import ReputationLedger, Verdict, VerdictReason, update_reputation, validate_update
from app.core.data import (
    LabeledDataset,
    NodePartition,
    generate_synthetic,
    load_csv,
    partition,
    split_holdout,
)
from app.core.errors import AggregationError, DataError, EmptyDatasetError, InvalidParameterError
from app.core.ledger import (
    Block,
    Chain,
    LedgerRecord,
    append_block,
    build_block,
    gas_cost,
    new_chain,
    weights_digest,
)
from app.core.model import (
    LocalUpdate,
    ModelWeights,
    NodeState,
    anomaly_score,
    classify,
    local_loss,
    local_training_round,
)
from app.core.numerics import seeded_rng
from app.core.transport import (
    UpdateEncoding,
    densify,
    encode_dense,
    payload_bytes,
    sparsify_topk,
    update_cost,
)
from app.services.archive import UpdateArchive

log = logging.getLogger("uvicorn.error")

# namespaces de stream do PRNG
STREAM_DATA = 1
STREAM_TEST_SPLIT = 2
STREAM_PARTITION = 3
STREAM_VALIDATORS = 4
STREAM_NODE_BASE = 100


# ---------------------------------------------------------------- métricas

@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int


def compute_metrics(weights: ModelWeights, test: LabeledDataset, threshold: float = 0.5) -> ClassificationMetrics:
    """Métricas da matriz de confusão; precisão/recall = 0 se o denominador for 0."""
    if len(test) == 0:
        raise EmptyDatasetError("conjunto de teste vazio")
    pred = classify(weights, test.features, threshold)
    y = test.labels
    tp = int(np.count_nonzero((pred == 1) & (y == 1)))
    fp = int(np.count_nonzero((pred == 1) & (y == 0)))
    tn = int(np.count_nonzero((pred == 0) & (y == 0)))
    fn = int(np.count_nonzero((pred == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassificationMetrics((tp + tn) / len(test), precision, recall, f1, tp, fp, tn, fn)


def rounds_to_convergence(accuracies: Sequence[float], target: float, sustain: int = 3) -> Optional[int]:
    """Primeira rodada (1-based) que atinge o alvo e o mantém por `sustain` rodadas."""
    for start in range(len(accuracies) - sustain + 1):
        if all(a >= target for a in accuracies[start:start + sustain]):
            return start + 1
    return None


# ---------------------------------------------------------------- relatório

@dataclass
class RoundReport:
    round_index: int
    metrics: ClassificationMetrics
    mean_local_loss: float
    uplink_bytes: int
    downlink_bytes: int
    ledger_bytes: int
    gas: float
    update_cost: float
    transmitting: List[int]
    verdicts: Dict[int, Verdict]
    divergences: Dict[int, float]
    anomaly_scores: Dict[int, float]
    reputations: Dict[int, float]
    consensus: ConsensusResult
    aggregated: bool
    trust_fallback: bool
    chain_height: int

    @property
    def committed(self) -> bool:
        return self.consensus.committed

    @property
    def accepted(self) -> List[int]:
        return [i for i in sorted(self.verdicts) if self.verdicts[i].accepted]


@dataclass
class SimulationReport:
    initial_metrics: ClassificationMetrics
    initial_loss: float
    rounds: List[RoundReport] = field(default_factory=list)
    rounds_to_convergence: Optional[int] = None
    events: List[str] = field(default_factory=list)

    @property
    def final_metrics(self) -> ClassificationMetrics:
        return self.rounds[-1].metrics if self.rounds else self.initial_metrics

    @property
    def accuracies(self) -> List[float]:
        return [r.metrics.accuracy for r in self.rounds]


@dataclass
class SimulationResult:
    config: SimulationConfig
    report: SimulationReport
    chain: Chain
    archive: UpdateArchive
    final_global: ModelWeights
    validators: ValidatorSet


# ---------------------------------------------------------------- preparação

def prepare_data(config: SimulationConfig) -> Tuple[LabeledDataset, List[NodePartition]]:
    """(conjunto de teste global, partições por nó). Teste é separado antes da partição."""
    seed = config.simulation.seed
    src = config.data.source
    if src == "synthetic":
        ds = generate_synthetic(config.synthetic, seeded_rng(seed, STREAM_DATA))
    else:
        ds = load_csv(src, config.data.label_column, config.data.positive_labels, config.data.normalize)
    log.info("[DATA] %s: %d linhas, dim=%d, positivos=%.3f", src, len(ds), ds.dim, ds.positive_rate)
    rest, test = split_holdout(ds, config.data.test_fraction, seeded_rng(seed, STREAM_TEST_SPLIT))
    test.require_nonempty("conjunto de teste")
    parts = partition(rest, config.partition_spec(), seeded_rng(seed, STREAM_PARTITION))
    return test, parts


def build_nodes(config: SimulationConfig, parts: Sequence[NodePartition]) -> List[NodeState]:
    poisoned = set(config.attack.poisoned_nodes)
    return [
        NodeState(
            node_id=p.node_id,
            train=p.train,
            holdout=p.holdout,
            rng=seeded_rng(config.simulation.seed, STREAM_NODE_BASE + p.node_id),
            behavior="poisoner" if p.node_id in poisoned else "honest",
        )
        for p in parts
    ]


def transmits(node_id: int, round_index: int, update_every: int) -> bool:
    """Agenda escalonada: nó i envia na rodada t sse (t − 1 + i) mod p == 0."""
    return (round_index - 1 + node_id) % update_every == 0


# ---------------------------------------------------------------- ataque

def inject_poison(update: LocalUpdate, scale: float, prev_global: ModelWeights,
                  holdout: LabeledDataset, threshold: float = 0.5) -> LocalUpdate:
    """w ← w̄_prev + scale·(w − w̄_prev); anomaly recalculado honestamente."""
    poisoned = ModelWeights(prev_global.w + scale * (update.weights.w - prev_global.w))
    return replace(update, weights=poisoned, anomaly_score=anomaly_score(poisoned, holdout, threshold))


# ---------------------------------------------------------------- transporte

def encode_update_payload(weights: ModelWeights, prev_global: ModelWeights, rho: float,
                          header_bytes: int) -> UpdateEncoding:
    # estouro em float32 vira inf; decode_update_payload rejeita
    with np.errstate(over="ignore", invalid="ignore"):
        if rho >= 1:
            return encode_dense(weights.w, header_bytes)
        return sparsify_topk(weights.w - prev_global.w, rho, header_bytes)


def decode_update_payload(enc: UpdateEncoding, prev_global: ModelWeights) -> ModelWeights:
    values = densify(enc, prev_global.dim)
    if enc.kind.value == "dense":
        return ModelWeights(values)
    return ModelWeights(prev_global.w + values)


# ---------------------------------------------------------------- auditoria

def audit_block(block: Block, archive: UpdateArchive) -> bool:
    """
    Recalcula o agregado a partir dos registros aceitos e dos pesos no
    arquivo; precisa bater com aggregate_digest do bloco. Sem aceitos, o
    agregado tem de ser o global vigente na rodada anterior.
    """
    accepted = [r for r in block.records if r.verdict.accepted]
    if not accepted:
        try:
            return weights_digest(archive.global_at(block.timestamp - 1)) == block.aggregate_digest
        except DataError:
            return False
    contribs = []
    for r in accepted:
        upd = archive.load_update(r.weights_digest)
        if weights_digest(upd.weights) != r.weights_digest:
            return False
        contribs.append(WeightedContribution(r.node_id, upd.weights, r.sample_count))
    raw = {r.node_id: r.aggregation_weight for r in accepted}
    return weights_digest(combine(contribs, raw)) == block.aggregate_digest


# ---------------------------------------------------------------- driver

class SimulationRunner:
    def __init__(self, config: SimulationConfig, archive_dir: Optional[str] = None) -> None:
        self.config = config
        self.archive = UpdateArchive(archive_dir)
        self.test, parts = prepare_data(config)
        self.nodes = build_nodes(config, parts)
        self.feature_dim = self.test.dim
        self.validators = build_validator_set(
            config.validator_count,
            config.consensus.adversarial_fraction,
            config.consensus.silent_fraction,
            seeded_rng(config.simulation.seed, STREAM_VALIDATORS),
        )
        self.global_w = ModelWeights.zeros(self.feature_dim)
        self.chain = new_chain(self.global_w, config.ledger.epoch)
        self.archive.store_model(self.global_w, config.ledger.epoch)
        self.reputation = ReputationLedger.initial(n.node_id for n in self.nodes)
        self._held: Dict[int, Optional[ModelWeights]] = {n.node_id: None for n in self.nodes}
        self.events: List[str] = []

    # ------------------------------------------------------------ helpers
    def _event(self, message: str) -> None:
        log.warning("[SIM] %s", message)
        self.events.append(message)

    def _mean_loss(self, weights: ModelWeights) -> float:
        return float(np.mean([local_loss(weights, n.train) for n in self.nodes]))

    def _train(self, node: NodeState, round_index: int, prev: ModelWeights) -> LocalUpdate:
        start = self._held[node.node_id] or prev
        cfg = self.config
        return local_training_round(node, start, cfg.train, cfg.dp, node.rng, round_index,
                                    cfg.model.threshold)

    def _train_all(self, round_index: int, prev: ModelWeights) -> Dict[int, LocalUpdate]:
        workers = self.config.runtime.workers
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {n.node_id: pool.submit(self._train, n, round_index, prev) for n in self.nodes}
                return {i: futures[i].result() for i in sorted(futures)}
        return {n.node_id: self._train(n, round_index, prev) for n in self.nodes}

    # ------------------------------------------------------------ rodada
    def step(self, t: int) -> RoundReport:
        cfg = self.config
        prev = self.global_w
        header = cfg.transport.header_bytes
        threshold = cfg.model.threshold
        downlink = len(self.nodes) * payload_bytes(encode_dense(prev.w, header))

        trained = self._train_all(t, prev)

        received: Dict[int, LocalUpdate] = {}
        malformed: Set[int] = set()
        for node in self.nodes:
            upd = trained[node.node_id]
            if not transmits(node.node_id, t, cfg.transport.update_every):
                self._held[node.node_id] = upd.weights
                continue
            self._held[node.node_id] = None
            if node.behavior == "poisoner":
                upd = inject_poison(upd, cfg.attack.poison_scale, prev, node.eval_set, threshold)
            enc = encode_update_payload(upd.weights, prev, cfg.transport.sparsity_rho, header)
            try:
                wire = decode_update_payload(enc, prev)
            except InvalidParameterError:
                # estourou float32 no fio: vai ao bloco como malformado, fora da agregação
                malformed.add(node.node_id)
                wire = upd.weights
            received[node.node_id] = replace(upd, weights=wire, payload=enc)

        ids = sorted(received)
        divs = {i: divergence(received[i].weights, prev) for i in ids}
        valid_divs = [divs[i] for i in ids if i not in malformed]
        median = statistics.median(valid_divs) if valid_divs else None
        verdicts = {
            i: Verdict.reject(VerdictReason.MALFORMED) if i in malformed
            else validate_update(received[i], prev, cfg.contract, median)
            for i in ids
        }
        for i in sorted(malformed):
            self._event(f"rodada {t}: update do nó {i} não representável no fio, rejeitado")

        contribs = [
            WeightedContribution(i, received[i].weights, received[i].sample_count, verdicts[i].accepted)
            for i in ids
        ]
        accepted = [c for c in contribs if c.accepted]
        raw: Dict[int, float] = {}
        trust_fallback = False
        if accepted:
            if cfg.aggregation.mode == "plain":
                raw = plain_weights(accepted)
            else:
                try:
                    trust = trust_weights(self.reputation.as_dict())
                except AggregationError:
                    # partida a frio: todas as reputações zeradas
                    trust = uniform_trust(n.node_id for n in self.nodes)
                raw = trust_raw_weights(accepted, trust)
                if not sum(raw.values()) > 0:
                    trust_fallback = True
                    self._event(f"rodada {t}: aceitos sem confiança, usando FedAvg simples")
                    raw = plain_weights(accepted)
            new_global = combine(accepted, raw)
        else:
            new_global = prev
            if ids:
                self._event(f"rodada {t}: todos os updates rejeitados, modelo anterior mantido")

        for i in ids:
            self.reputation = update_reputation(self.reputation, i, verdicts[i], cfg.contract.reputation_step)
        self.reputation = self.reputation.record_round(verdicts)

        records = []
        uplink = 0
        cost = 0.0
        for i in ids:
            upd = received[i]
            size = payload_bytes(upd.payload)  # type: ignore[arg-type]
            uplink += size
            cost += update_cost(size, cfg.cost.latency_for(i), cfg.cost)
            records.append(LedgerRecord(
                node_id=i,
                weights_digest=self.archive.store_update(upd),
                anomaly_score=upd.anomaly_score,
                verdict=verdicts[i],
                payload_bytes=size,
                divergence=divs[i],
                sample_count=upd.sample_count,
                aggregation_weight=float(raw.get(i, 0.0)),
            ))
        self.archive.store_model(new_global, cfg.ledger.epoch + t)

        block = build_block(self.chain, cfg.ledger.epoch + t, records, new_global, cfg.ledger.block_size_cap)
        consensus = run_consensus_round(self.validators, block)
        self.chain = append_block(self.chain, block, consensus)
        if consensus.committed:
            gas = gas_cost(block, cfg.ledger.gas_per_byte)
        else:
            gas = 0.0
            self._event(
                f"rodada {t}: consenso falhou ({consensus.approvals}/{consensus.total}), bloco descartado"
            )

        self.global_w = new_global
        metrics = compute_metrics(new_global, self.test, threshold)
        log.info(
            "[SIM] rodada %d: acc=%.4f aceitos=%d/%d bloco=%s altura=%d",
            t, metrics.accuracy, len(accepted), len(ids),
            "ok" if consensus.committed else "descartado", self.chain.height,
        )
        return RoundReport(
            round_index=t,
            metrics=metrics,
            mean_local_loss=self._mean_loss(self.global_w),
            uplink_bytes=uplink,
            downlink_bytes=downlink,
            ledger_bytes=block.size_bytes,
            gas=gas,
            update_cost=cost,
            transmitting=ids,
            verdicts=verdicts,
            divergences=divs,
            anomaly_scores={i: received[i].anomaly_score for i in ids},
            reputations=self.reputation.as_dict(),
            consensus=consensus,
            aggregated=bool(accepted),
            trust_fallback=trust_fallback,
            chain_height=self.chain.height,
        )

    def run(self) -> SimulationResult:
        cfg = self.config
        report = SimulationReport(
            initial_metrics=compute_metrics(self.global_w, self.test, cfg.model.threshold),
            initial_loss=self._mean_loss(self.global_w),
        )
        log.info("[SIM] iniciando: N=%d, T=%d, seed=%d, modo=%s",
                 len(self.nodes), cfg.simulation.rounds, cfg.simulation.seed, cfg.aggregation.mode)
        for t in range(1, cfg.simulation.rounds + 1):
            report.rounds.append(self.step(t))
        report.rounds_to_convergence = rounds_to_convergence(
            report.accuracies, cfg.metrics.target_accuracy, cfg.metrics.sustain_rounds
        )
        report.events = list(self.events)
        log.info("[SIM] fim: acc final=%.4f, convergência=%s, altura=%d",
                 report.final_metrics.accuracy, report.rounds_to_convergence, self.chain.height)
        return SimulationResult(cfg, report, self.chain, self.archive, self.global_w, self.validators)


def run_simulation(config: SimulationConfig, archive_dir: Optional[str] = None) -> SimulationResult:
    return SimulationRunner(config, archive_dir).run()
