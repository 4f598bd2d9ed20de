# app/core/consensus.py
"""
PBFT simplificado: as fases pre-prepare/prepare/commit viram um único voto
síncrono por rodada, e o bloco é comprometido sse a maioria estrita dos
validadores aprova (abstenção conta contra).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import InvalidParameterError
from app.core.ledger import Block, block_hash, block_problems
from app.core.numerics import RngState


class Behavior(str, Enum):
    HONEST = "honest"
    SILENT = "silent"
    ADVERSARIAL = "adversarial"


class Vote(str, Enum):
    APPROVE = "approve"
    REJECT = "reject"
    ABSTAIN = "abstain"


class ConsensusSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    validators: Optional[int] = Field(None, ge=1)  # None → N (todo nó valida)
    adversarial_fraction: float = Field(0.0, ge=0, le=1)
    silent_fraction: float = Field(0.0, ge=0, le=1)

    @model_validator(mode="after")
    def _fractions_fit(self) -> "ConsensusSettings":
        if self.adversarial_fraction + self.silent_fraction > 1:
            raise ValueError("adversarial_fraction + silent_fraction > 1")
        return self


@dataclass(frozen=True)
class Validator:
    validator_id: int
    behavior: Behavior = Behavior.HONEST


@dataclass(frozen=True)
class ValidatorSet:
    validators: Tuple[Validator, ...]

    def __post_init__(self) -> None:
        if not self.validators:
            raise InvalidParameterError("conjunto de validadores vazio")
        ordered = tuple(sorted(self.validators, key=lambda v: v.validator_id))
        object.__setattr__(self, "validators", ordered)

    def __len__(self) -> int:
        return len(self.validators)

    def count(self, behavior: Behavior) -> int:
        return sum(1 for v in self.validators if v.behavior is behavior)


@dataclass(frozen=True)
class ConsensusResult:
    approvals: int
    total: int
    committed: bool
    votes: Dict[int, Vote]


def build_validator_set(count: int, adversarial_fraction: float, silent_fraction: float,
                        rng: RngState) -> ValidatorSet:
    """Comportamentos sorteados uma vez por execução (config + seed)."""
    if count < 1:
        raise InvalidParameterError("precisa de ao menos 1 validador")
    n_adv = int(math.floor(adversarial_fraction * count))
    n_silent = min(count - n_adv, int(math.floor(silent_fraction * count)))
    order = rng.permutation(count)
    roles: Dict[int, Behavior] = {}
    for rank, vid in enumerate(int(i) for i in order):
        if rank < n_adv:
            roles[vid] = Behavior.ADVERSARIAL
        elif rank < n_adv + n_silent:
            roles[vid] = Behavior.SILENT
        else:
            roles[vid] = Behavior.HONEST
    return ValidatorSet(tuple(Validator(vid, roles[vid]) for vid in range(count)))


def validator_vote(validator: Validator, block: Block, expected_hash: bytes) -> Vote:
    if validator.behavior is Behavior.SILENT:
        return Vote.ABSTAIN
    matches = block_hash(block) == expected_hash
    if validator.behavior is Behavior.ADVERSARIAL:
        # rejeita o bloco legítimo, aprova o adulterado
        return Vote.REJECT if matches else Vote.APPROVE
    if matches and block_problems(block) is None:
        return Vote.APPROVE
    return Vote.REJECT


def run_consensus_round(validators: ValidatorSet, block: Block,
                        expected_hash: Optional[bytes] = None) -> ConsensusResult:
    """
    expected_hash é o hash anunciado pelo proponente; sem ele, o bloco
    recebido é tomado como o proposto.
    """
    expected = block_hash(block) if expected_hash is None else expected_hash
    votes = {v.validator_id: validator_vote(v, block, expected) for v in validators.validators}
    approvals = sum(1 for vid in sorted(votes) if votes[vid] is Vote.APPROVE)
    total = len(votes)
    return ConsensusResult(approvals, total, 2 * approvals > total, votes)
