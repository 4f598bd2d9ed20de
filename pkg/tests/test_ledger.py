import hashlib
import os
from dataclasses import replace

import numpy as np
import pytest

from app.core.consensus import Behavior, Validator, ValidatorSet, run_consensus_round
from app.core.contract import Verdict, VerdictReason
from app.core.errors import BlockTooLargeError, ChainLinkError
from app.core.ledger import (
    ZERO_HASH,
    Chain,
    LedgerRecord,
    append_block,
    block_hash,
    build_block,
    canonical_decode,
    canonical_encode,
    gas_cost,
    new_chain,
    read_export,
    verify_chain,
    verify_export,
    weights_digest,
    write_export,
)
from app.core.model import LocalUpdate, ModelWeights
from app.services.archive import UpdateArchive

ONE_HONEST = ValidatorSet((Validator(0),))
HEADER_BYTES = 85
RECORD_BYTES = 70


def _record(gen, node_id, archive=None):
    w = ModelWeights(gen.normal(size=4))
    accepted = bool(gen.random() < 0.7)
    if archive is not None:
        archive.store_update(LocalUpdate(node_id, w, 0.1, 1, 20))
    return LedgerRecord(
        node_id=node_id,
        weights_digest=weights_digest(w),
        anomaly_score=float(gen.uniform(0, 1)),
        verdict=Verdict.ok() if accepted else Verdict.reject(VerdictReason.ANOMALY_EXCEEDED),
        payload_bytes=32,
        divergence=float(gen.uniform(0, 3)),
        sample_count=20,
        aggregation_weight=float(gen.uniform(0.1, 1)) if accepted else 0.0,
    )


def _chain(blocks: int, seed: int = 0, archive=None) -> Chain:
    gen = np.random.default_rng(seed)
    chain = new_chain(ModelWeights.zeros(3))
    for t in range(1, blocks + 1):
        records = [_record(gen, i, archive) for i in range(3)]
        block = build_block(chain, t, records, ModelWeights(gen.normal(size=4)))
        chain = append_block(chain, block, run_consensus_round(ONE_HONEST, block))
    return chain


def test_sha256_reference_vector():
    assert hashlib.sha256(b"").hexdigest() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_encoding_deterministic_and_injective():
    block = _chain(1).tip
    assert canonical_encode(block) == canonical_encode(block)
    rec = replace(block.records[0], anomaly_score=block.records[0].anomaly_score / 2)
    other = replace(block, records=(rec,) + block.records[1:])
    assert canonical_encode(other) != canonical_encode(block)
    assert block_hash(other) != block_hash(block)


def test_decode_inverts_encode():
    for seed in range(10):
        for block in _chain(3, seed).blocks:
            assert canonical_decode(canonical_encode(block)) == block


def test_single_byte_flip_changes_hash():
    block = _chain(1).tip
    raw = bytearray(canonical_encode(block))
    base = hashlib.sha256(raw).digest()
    gen = np.random.default_rng(3)
    for _ in range(100):
        pos = int(gen.integers(0, len(raw)))
        flipped = bytearray(raw)
        flipped[pos] ^= 1 << int(gen.integers(0, 8))
        assert hashlib.sha256(flipped).digest() != base


def test_sizes_and_gas():
    genesis = new_chain(ModelWeights.zeros(2)).tip
    assert genesis.size_bytes == HEADER_BYTES
    assert gas_cost(genesis, 1.0) == HEADER_BYTES
    block = _chain(1).tip
    assert block.size_bytes == HEADER_BYTES + 3 * RECORD_BYTES
    assert gas_cost(block, 2.0) == 2 * block.size_bytes


def test_gas_arithmetic():
    class _Sized:
        def __init__(self, size):
            self.size_bytes = size

    assert gas_cost(_Sized(100), 2.0) == 200.0
    assert gas_cost(_Sized(2 * 1024 * 1024), 1.0) == 2097152.0
    assert gas_cost(_Sized(200), 1.5) == 2 * gas_cost(_Sized(100), 1.5)


def test_block_cap_enforced():
    chain = new_chain(ModelWeights.zeros(3))
    gen = np.random.default_rng(0)
    with pytest.raises(BlockTooLargeError):
        build_block(chain, 1, [_record(gen, i) for i in range(3)], ModelWeights.zeros(3), size_cap=HEADER_BYTES + 10)


def test_records_sorted_by_node():
    gen = np.random.default_rng(0)
    chain = new_chain(ModelWeights.zeros(3))
    block = build_block(chain, 1, [_record(gen, 2), _record(gen, 0), _record(gen, 1)], ModelWeights.zeros(3))
    assert [r.node_id for r in block.records] == [0, 1, 2]


def test_append_semantics():
    chain = new_chain(ModelWeights.zeros(3))
    block = build_block(chain, 1, [], ModelWeights.zeros(3))
    grown = append_block(chain, block, run_consensus_round(ONE_HONEST, block))
    assert len(grown) == 2 and grown.height == 1

    silent = ValidatorSet((Validator(0, Behavior.SILENT),))
    assert append_block(chain, block, run_consensus_round(silent, block)) is chain

    bad = replace(block, prev_hash=b"\x01" * 32)
    with pytest.raises(ChainLinkError):
        append_block(chain, bad, run_consensus_round(ONE_HONEST, bad))
    with pytest.raises(ChainLinkError):
        append_block(chain, replace(block, height=5), run_consensus_round(ONE_HONEST, block))


def test_genesis_only_chain_is_valid():
    chain = new_chain(ModelWeights.zeros(3))
    assert chain.tip.prev_hash == ZERO_HASH
    assert verify_chain(chain).valid


def test_tampered_record_detected_at_its_height():
    chain = _chain(10)
    assert verify_chain(chain).valid
    blocks = list(chain.blocks)
    rec = replace(blocks[4].records[1], payload_bytes=blocks[4].records[1].payload_bytes + 1)
    blocks[4] = replace(blocks[4], records=(blocks[4].records[0], rec) + blocks[4].records[2:])
    result = verify_chain(Chain(tuple(blocks), chain.hashes))
    assert not result.valid and result.height == 4


def test_reordered_blocks_detected():
    chain = _chain(5)
    blocks = list(chain.blocks)
    hashes = list(chain.hashes)
    blocks[2], blocks[3] = blocks[3], blocks[2]
    hashes[2], hashes[3] = hashes[3], hashes[2]
    assert not verify_chain(Chain(tuple(blocks), tuple(hashes))).valid


def test_export_roundtrip_and_archive_check(tmp_path):
    archive = UpdateArchive(str(tmp_path / "archive"))
    chain = _chain(6, archive=archive)
    path = tmp_path / "ledger.export"
    write_export(chain, str(path))
    raw = path.read_bytes()
    parsed, status = read_export(raw)
    assert status.valid and parsed == chain
    assert verify_export(raw, archive).valid

    victim = chain.blocks[3].records[0].weights_digest
    os.remove(tmp_path / "archive" / "updates" / f"{victim.hex()}.bin")
    result = verify_export(raw, UpdateArchive(str(tmp_path / "archive")))
    assert not result.valid and result.height == 3


def test_export_single_byte_mutations(tmp_path):
    chain = _chain(50, seed=9)
    path = tmp_path / "ledger.export"
    write_export(chain, str(path))
    raw = path.read_bytes()
    line_starts = [0] + [i + 1 for i, b in enumerate(raw) if b == ord("\n")]
    gen = np.random.default_rng(77)
    for _ in range(100):
        pos = int(gen.integers(0, len(raw)))
        mutated = bytearray(raw)
        mutated[pos] = (mutated[pos] + int(gen.integers(1, 256))) % 256
        height = max(i for i, s in enumerate(line_starts) if s <= pos)
        result = verify_export(bytes(mutated))
        assert not result.valid
        assert result.height is not None and result.height >= min(height, 50)
