# app/core/ledger.py
"""
Ledger permissionado encadeado por hash.

Cada bloco guarda registros (vᵢ, digest(wᵢ), aᵢ, veredito, ...) e o digest
do modelo global comprometido; os pesos completos ficam no arquivo lateral
(services/archive.py), ligados aqui pelo digest SHA-256.

Codificação canônica (versão 1), big-endian:
  u8 versão | u64 altura | 32B prev_hash | i64 timestamp | 32B aggregate_digest
  | u32 nº de registros | registros...
registro:
  u32 node_id | 32B weights_digest | f64 anomaly | f64 divergence
  | u8 decision | u8 reason | u32 payload_bytes | u32 sample_count
  | f64 aggregation_weight
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.contract import Verdict, VerdictReason
from app.core.errors import BlockTooLargeError, ChainLinkError, InvalidParameterError
from app.core.model import LocalUpdate, ModelWeights

ENCODING_VERSION = 1
DIGEST_BYTES = 32
ZERO_HASH = bytes(DIGEST_BYTES)
DEFAULT_BLOCK_CAP = 2 * 1024 * 1024

_HEADER = struct.Struct(">BQ32sq32sI")
_RECORD = struct.Struct(">I32sddBBIId")
_REASONS: Tuple[VerdictReason, ...] = tuple(VerdictReason)

# ordem das chaves do export = ordem da codificação canônica
EXPORT_RECORD_FIELDS = (
    "node_id", "weights_digest", "anomaly_score", "divergence", "decision",
    "reason", "payload_bytes", "sample_count", "aggregation_weight",
)
EXPORT_BLOCK_FIELDS = (
    "version", "height", "prev_hash", "timestamp", "aggregate_digest",
    "records", "size_bytes", "hash",
)


class LedgerSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gas_per_byte: float = Field(1.0, gt=0)
    block_size_cap: int = Field(DEFAULT_BLOCK_CAP, gt=0)
    epoch: int = Field(0, ge=0)


# ---------------------------------------------------------------- pesos / updates

def encode_weights(weights: ModelWeights) -> bytes:
    w = np.asarray(weights.w, dtype=">f8")
    return struct.pack(">BI", ENCODING_VERSION, w.shape[0]) + w.tobytes()


def decode_weights(raw: bytes) -> ModelWeights:
    version, dim = struct.unpack_from(">BI", raw, 0)
    if version != ENCODING_VERSION or len(raw) != 5 + 8 * dim:
        raise InvalidParameterError("codificação de pesos inválida")
    return ModelWeights(np.frombuffer(raw, dtype=">f8", offset=5).astype(np.float64))


def weights_digest(weights: ModelWeights) -> bytes:
    return hashlib.sha256(encode_weights(weights)).digest()


def encode_update(update: LocalUpdate) -> bytes:
    head = struct.pack(">BIqdI", ENCODING_VERSION, update.node_id, update.round_index,
                       update.anomaly_score, update.sample_count)
    return head + encode_weights(update.weights)


def decode_update(raw: bytes) -> LocalUpdate:
    size = struct.calcsize(">BIqdI")
    version, node_id, round_index, anomaly, samples = struct.unpack_from(">BIqdI", raw, 0)
    if version != ENCODING_VERSION:
        raise InvalidParameterError(f"versão desconhecida: {version}")
    return LocalUpdate(
        node_id=node_id,
        weights=decode_weights(raw[size:]),
        anomaly_score=anomaly,
        round_index=round_index,
        sample_count=samples,
    )


# ---------------------------------------------------------------- tipos

@dataclass(frozen=True)
class LedgerRecord:
    node_id: int
    weights_digest: bytes
    anomaly_score: float
    verdict: Verdict
    payload_bytes: int
    divergence: float = 0.0
    sample_count: int = 1
    aggregation_weight: float = 0.0


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    timestamp: int
    records: Tuple[LedgerRecord, ...]
    aggregate_digest: bytes

    @cached_property
    def size_bytes(self) -> int:
        return len(canonical_encode(self))


@dataclass(frozen=True)
class Chain:
    """Blocos a partir do gênese, com o hash comprometido de cada um."""
    blocks: Tuple[Block, ...]
    hashes: Tuple[bytes, ...]

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def tip_hash(self) -> bytes:
        return self.hashes[-1]

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    def __len__(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class ChainVerification:
    valid: bool
    height: Optional[int] = None
    cause: str = ""


# ---------------------------------------------------------------- codificação

def canonical_encode(block: Block) -> bytes:
    parts = [
        _HEADER.pack(
            ENCODING_VERSION, block.height, block.prev_hash, block.timestamp,
            block.aggregate_digest, len(block.records),
        )
    ]
    for r in block.records:
        parts.append(_RECORD.pack(
            r.node_id, r.weights_digest, r.anomaly_score, r.divergence,
            r.verdict.decision, _REASONS.index(r.verdict.reason),
            r.payload_bytes, r.sample_count, r.aggregation_weight,
        ))
    return b"".join(parts)


def canonical_decode(raw: bytes) -> Block:
    if len(raw) < _HEADER.size:
        raise InvalidParameterError("bloco truncado")
    version, height, prev, ts, agg, count = _HEADER.unpack_from(raw, 0)
    if version != ENCODING_VERSION:
        raise InvalidParameterError(f"versão desconhecida: {version}")
    if len(raw) != _HEADER.size + count * _RECORD.size:
        raise InvalidParameterError("tamanho do bloco não bate com nº de registros")
    records = []
    for i in range(count):
        (node_id, digest, anomaly, div, decision, reason_idx,
         payload, samples, agg_w) = _RECORD.unpack_from(raw, _HEADER.size + i * _RECORD.size)
        if reason_idx >= len(_REASONS):
            raise InvalidParameterError(f"motivo desconhecido: {reason_idx}")
        records.append(LedgerRecord(
            node_id=node_id,
            weights_digest=digest,
            anomaly_score=anomaly,
            verdict=Verdict(decision, _REASONS[reason_idx]),
            payload_bytes=payload,
            divergence=div,
            sample_count=samples,
            aggregation_weight=agg_w,
        ))
    return Block(height, prev, ts, tuple(records), agg)


def block_hash(block: Block) -> bytes:
    return hashlib.sha256(canonical_encode(block)).digest()


def gas_cost(block: Block, gamma: float) -> float:
    if not gamma > 0:
        raise InvalidParameterError(f"γ precisa ser positivo: {gamma}")
    return gamma * block.size_bytes


# ---------------------------------------------------------------- cadeia

def genesis_block(initial_global: ModelWeights, epoch: int = 0) -> Block:
    return Block(0, ZERO_HASH, epoch, (), weights_digest(initial_global))


def new_chain(initial_global: ModelWeights, epoch: int = 0) -> Chain:
    g = genesis_block(initial_global, epoch)
    return Chain((g,), (block_hash(g),))


def build_block(chain: Chain, timestamp: int, records: Sequence[LedgerRecord],
                aggregate: ModelWeights, size_cap: int = DEFAULT_BLOCK_CAP) -> Block:
    block = Block(
        height=chain.height + 1,
        prev_hash=chain.tip_hash,
        timestamp=timestamp,
        records=tuple(sorted(records, key=lambda r: r.node_id)),
        aggregate_digest=weights_digest(aggregate),
    )
    if block.size_bytes > size_cap:
        raise BlockTooLargeError(f"bloco com {block.size_bytes} bytes excede o limite {size_cap}")
    return block


def append_block(chain: Chain, block: Block, consensus: Any) -> Chain:
    """
    Anexa sse consensus.committed; senão devolve a cadeia inalterada.
    Altura/prev_hash errados são bug do simulador: falha imediata.
    """
    if block.height != chain.height + 1:
        raise ChainLinkError(f"altura {block.height} não segue a ponta {chain.height}")
    if block.prev_hash != chain.tip_hash:
        raise ChainLinkError(f"prev_hash não confere na altura {block.height}")
    if not consensus.committed:
        return chain
    return Chain(chain.blocks + (block,), chain.hashes + (block_hash(block),))


def block_problems(block: Block) -> Optional[str]:
    """Invariantes internos do bloco (None = ok)."""
    ids = [r.node_id for r in block.records]
    if ids != sorted(ids) or len(set(ids)) != len(ids):
        return "registros fora de ordem ou duplicados"
    for r in block.records:
        if len(r.weights_digest) != DIGEST_BYTES:
            return f"digest inválido no nó {r.node_id}"
        if not (np.isfinite(r.anomaly_score) and 0.0 <= r.anomaly_score <= 1.0):
            return f"anomaly fora de [0,1] no nó {r.node_id}"
        if not np.isfinite(r.divergence) or r.divergence < 0:
            return f"divergência inválida no nó {r.node_id}"
        if not r.verdict.accepted and r.aggregation_weight != 0.0:
            return f"registro rejeitado com peso de agregação no nó {r.node_id}"
    return None


def verify_chain(chain: Chain, archive: Any = None) -> ChainVerification:
    """
    Por bloco, em ordem: invariantes e digests dos registros (contra o
    arquivo, se houver), hash recomputado vs comprometido, e só então o
    elo com o bloco anterior. Devolve a primeira falha.
    """
    if not chain.blocks:
        return ChainVerification(False, 0, "cadeia vazia")
    if len(chain.blocks) != len(chain.hashes):
        return ChainVerification(False, 0, "hashes comprometidos incompletos")
    for pos, (block, committed) in enumerate(zip(chain.blocks, chain.hashes)):
        if block.height != pos:
            return ChainVerification(False, pos, f"altura {block.height} na posição {pos}")
        problem = block_problems(block)
        if problem:
            return ChainVerification(False, block.height, problem)
        if archive is not None:
            for r in block.records:
                if not archive.has_update(r.weights_digest):
                    return ChainVerification(False, block.height, f"update do nó {r.node_id} ausente no arquivo")
                if weights_digest(archive.load_update(r.weights_digest).weights) != r.weights_digest:
                    return ChainVerification(False, block.height, f"digest do nó {r.node_id} não confere")
        if block_hash(block) != committed:
            return ChainVerification(False, block.height, "hash do bloco não confere")
        if pos == 0:
            if block.prev_hash != ZERO_HASH:
                return ChainVerification(False, 0, "gênese com prev_hash não nulo")
        elif block.prev_hash != chain.hashes[pos - 1]:
            return ChainVerification(False, block.height, "elo prev_hash quebrado")
    return ChainVerification(True, chain.height)


# ---------------------------------------------------------------- export

def export_line(block: Block, committed_hash: bytes) -> str:
    """Uma linha JSON por bloco, chaves na ordem da codificação canônica."""
    payload: Dict[str, Any] = {
        "version": ENCODING_VERSION,
        "height": block.height,
        "prev_hash": block.prev_hash.hex(),
        "timestamp": block.timestamp,
        "aggregate_digest": block.aggregate_digest.hex(),
        "records": [
            {
                "node_id": r.node_id,
                "weights_digest": r.weights_digest.hex(),
                "anomaly_score": r.anomaly_score,
                "divergence": r.divergence,
                "decision": r.verdict.decision,
                "reason": r.verdict.reason.value,
                "payload_bytes": r.payload_bytes,
                "sample_count": r.sample_count,
                "aggregation_weight": r.aggregation_weight,
            }
            for r in block.records
        ],
        "size_bytes": block.size_bytes,
        "hash": committed_hash.hex(),
    }
    return json.dumps(payload, separators=(",", ":"), allow_nan=False)


def parse_export_line(line: str) -> Tuple[Block, bytes]:
    data = json.loads(line)
    if list(data) != list(EXPORT_BLOCK_FIELDS):
        raise InvalidParameterError("campos do bloco fora do formato")
    if data["version"] != ENCODING_VERSION:
        raise InvalidParameterError(f"versão desconhecida: {data['version']}")
    records = []
    for r in data["records"]:
        if list(r) != list(EXPORT_RECORD_FIELDS):
            raise InvalidParameterError("campos do registro fora do formato")
        records.append(LedgerRecord(
            node_id=int(r["node_id"]),
            weights_digest=bytes.fromhex(r["weights_digest"]),
            anomaly_score=float(r["anomaly_score"]),
            verdict=Verdict(int(r["decision"]), VerdictReason(r["reason"])),
            payload_bytes=int(r["payload_bytes"]),
            divergence=float(r["divergence"]),
            sample_count=int(r["sample_count"]),
            aggregation_weight=float(r["aggregation_weight"]),
        ))
    block = Block(
        height=int(data["height"]),
        prev_hash=bytes.fromhex(data["prev_hash"]),
        timestamp=int(data["timestamp"]),
        records=tuple(records),
        aggregate_digest=bytes.fromhex(data["aggregate_digest"]),
    )
    if len(block.prev_hash) != DIGEST_BYTES or len(block.aggregate_digest) != DIGEST_BYTES:
        raise InvalidParameterError("digest com tamanho inválido")
    if int(data["size_bytes"]) != block.size_bytes:
        raise InvalidParameterError("size_bytes não confere")
    committed = bytes.fromhex(data["hash"])
    # forma canônica estrita: qualquer variação textual conta como adulteração
    if export_line(block, committed) != line:
        raise InvalidParameterError("linha fora da forma canônica")
    return block, committed


def write_export(chain: Chain, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for block, h in zip(chain.blocks, chain.hashes):
            f.write(export_line(block, h) + "\n")


def read_export(raw: bytes) -> Tuple[Optional[Chain], ChainVerification]:
    """
    Lê o export a partir dos bytes. Uma linha ilegível já é falha de
    verificação naquela altura (posição da linha).
    """
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines = lines[:-1]
    blocks: List[Block] = []
    hashes: List[bytes] = []
    for pos, line in enumerate(lines):
        try:
            block, committed = parse_export_line(line.decode("utf-8"))
        except Exception as e:  # noqa: BLE001
            return None, ChainVerification(False, pos, f"linha ilegível: {e}")
        blocks.append(block)
        hashes.append(committed)
    if not blocks:
        return None, ChainVerification(False, 0, "export vazio")
    return Chain(tuple(blocks), tuple(hashes)), ChainVerification(True)


def verify_export(raw: bytes, archive: Any = None) -> ChainVerification:
    chain, parsed = read_export(raw)
    if chain is None:
        return parsed
    return verify_chain(chain, archive)
