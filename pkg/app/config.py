# app/config.py
"""
Configuração da simulação.

Arquivo texto plano `chave = valor` (chaves `secao.campo`, `#` comenta).
Chave desconhecida é erro explícito. Os valores são validados pelos modelos
pydantic de cada módulo; os padrões são os do experimento de referência
(N=10, η=0.01, 3 épocas, batch 64, σ=1.0, bloco 2 MB, PBFT, T=50).

Variáveis de ambiente (carregadas do .env):
  FLBCID_OUTPUT_DIR, FLBCID_LOG_LEVEL, FLBCID_JWT_SECRET,
  FLBCID_JWT_EXPIRE_MINUTES, FLBCID_OPERATOR_KEY
"""
from __future__ import annotations

import os
from typing import Any, Dict, List, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.consensus import ConsensusSettings
from app.core.contract import ContractPolicy
from app.core.data import PartitionSpec, SyntheticSpec
from app.core.errors import ConfigError
from app.core.ledger import LedgerSettings
from app.core.model import DpConfig, TrainConfig
from app.core.transport import CostParams, TransportSettings


# --------- ENV helpers ---------
def _get_env_str(*keys: str, default: str = "") -> str:
    for k in keys:
        v = os.getenv(k)
        if v is not None and str(v).strip() != "":
            return str(v).strip()
    return default


def _get_env_int(key: str, default: int) -> int:
    v = os.getenv(key)
    if v and v.strip().isdigit():
        return int(v)
    return default


def output_dir() -> str:
    return _get_env_str("FLBCID_OUTPUT_DIR", default="runs")


def log_level() -> str:
    return _get_env_str("FLBCID_LOG_LEVEL", default="INFO").upper()


def _split_csv(v: Any) -> Any:
    if isinstance(v, str):
        return [x.strip() for x in v.split(",") if x.strip()]
    return v


# --------- SEÇÕES ---------
class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SimulationSettings(_Section):
    nodes: int = Field(10, ge=1)
    rounds: int = Field(50, ge=0)
    seed: int = Field(42, ge=0, lt=2**64)


class ModelSettings(_Section):
    threshold: float = Field(0.5, gt=0, lt=1)


class AggregationSettings(_Section):
    mode: Literal["plain", "trust"] = "trust"


class DataSettings(_Section):
    source: str = "synthetic"  # "synthetic" ou caminho de CSV
    label_column: str = "label"
    positive_labels: List[str] = Field(default_factory=lambda: ["attack"])
    normalize: bool = True  # só se aplica a CSV; o sintético já sai padronizado
    test_fraction: float = Field(0.2, gt=0, lt=1)

    @field_validator("positive_labels", mode="before")
    @classmethod
    def split_labels(cls, v: Any) -> Any:
        return _split_csv(v)


class PartitionSettings(_Section):
    mode: Literal["iid", "label_skew"] = "iid"
    concentration: float = Field(1.0, gt=0)
    holdout_fraction: float = Field(0.2, ge=0, lt=1)


class AttackSettings(_Section):
    poisoned_nodes: List[int] = Field(default_factory=list)
    poison_scale: float = Field(-5.0, allow_inf_nan=False)

    @field_validator("poisoned_nodes", mode="before")
    @classmethod
    def split_nodes(cls, v: Any) -> Any:
        return _split_csv(v)


class MetricsSettings(_Section):
    target_accuracy: float = Field(0.95, gt=0, le=1)
    sustain_rounds: int = Field(3, ge=1)


class RuntimeSettings(_Section):
    workers: int = Field(1, ge=1)


class SimulationConfig(_Section):
    simulation: SimulationSettings = Field(default_factory=SimulationSettings)
    train: TrainConfig = Field(default_factory=TrainConfig)
    dp: DpConfig = Field(default_factory=DpConfig)
    model: ModelSettings = Field(default_factory=ModelSettings)
    aggregation: AggregationSettings = Field(default_factory=AggregationSettings)
    contract: ContractPolicy = Field(default_factory=ContractPolicy)
    ledger: LedgerSettings = Field(default_factory=LedgerSettings)
    consensus: ConsensusSettings = Field(default_factory=ConsensusSettings)
    transport: TransportSettings = Field(default_factory=TransportSettings)
    cost: CostParams = Field(default_factory=CostParams)
    data: DataSettings = Field(default_factory=DataSettings)
    synthetic: SyntheticSpec = Field(default_factory=SyntheticSpec)
    partition: PartitionSettings = Field(default_factory=PartitionSettings)
    attack: AttackSettings = Field(default_factory=AttackSettings)
    metrics: MetricsSettings = Field(default_factory=MetricsSettings)
    runtime: RuntimeSettings = Field(default_factory=RuntimeSettings)

    @model_validator(mode="after")
    def _nodes_consistent(self) -> "SimulationConfig":
        n = self.simulation.nodes
        bad = [i for i in self.attack.poisoned_nodes if not 0 <= i < n]
        if bad:
            raise ValueError(f"attack.poisoned_nodes fora de [0, {n}): {bad}")
        bad = [i for i in self.cost.latency if not 0 <= i < n]
        if bad:
            raise ValueError(f"cost.latency para nós inexistentes: {bad}")
        return self

    @property
    def validator_count(self) -> int:
        return self.consensus.validators or self.simulation.nodes

    def partition_spec(self) -> PartitionSpec:
        return PartitionSpec(node_count=self.simulation.nodes, **self.partition.model_dump())


# --------- PARSE ---------
def parse_flat(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"linha {lineno}: esperado 'chave = valor'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"linha {lineno}: chave vazia")
        if key in out:
            raise ConfigError(f"linha {lineno}: chave repetida {key!r}")
        out[key] = value
    return out


def _nested(flat: Mapping[str, Any]) -> Dict[str, Dict[str, Any]]:
    sections = SimulationConfig.model_fields
    nested: Dict[str, Dict[str, Any]] = {}
    for key, value in flat.items():
        parts = key.split(".")
        if len(parts) < 2 or parts[0] not in sections:
            raise ConfigError(f"chave desconhecida: {key!r}")
        section, fld = parts[0], parts[1]
        model = sections[section].annotation
        if fld not in model.model_fields:  # type: ignore[union-attr]
            raise ConfigError(f"chave desconhecida: {key!r}")
        if isinstance(value, str) and value.lower() in ("", "none", "null"):
            value = None
        bucket = nested.setdefault(section, {})
        if section == "cost" and fld == "latency" and len(parts) == 3:
            try:
                node_id = int(parts[2])
            except ValueError:
                raise ConfigError(f"chave desconhecida: {key!r}")
            bucket.setdefault("latency", {})[node_id] = value
        elif len(parts) == 2:
            if value is None and model.model_fields[fld].is_required():  # type: ignore[union-attr]
                raise ConfigError(f"valor obrigatório em {key!r}")
            if value is not None or model.model_fields[fld].default is None:  # type: ignore[union-attr]
                bucket[fld] = value
        else:
            raise ConfigError(f"chave desconhecida: {key!r}")
    return nested


def config_from_flat(flat: Mapping[str, Any]) -> SimulationConfig:
    try:
        return SimulationConfig.model_validate(_nested(flat))
    except ValidationError as e:
        raise ConfigError(f"configuração inválida: {e}") from e


def load_config(path: str, overrides: Optional[Mapping[str, Any]] = None) -> SimulationConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            flat: Dict[str, Any] = parse_flat(f.read())
    except FileNotFoundError:
        raise ConfigError(f"arquivo de configuração não encontrado: {path}")
    flat.update(overrides or {})
    return config_from_flat(flat)


def with_overrides(config: SimulationConfig, overrides: Mapping[str, Any]) -> SimulationConfig:
    flat: Dict[str, Any] = dict(to_flat(config))
    flat.update(overrides)
    return config_from_flat(flat)


def to_flat(config: SimulationConfig) -> Dict[str, str]:
    """Inverso de parse_flat (ordem estável: seções e campos na ordem declarada)."""
    out: Dict[str, str] = {}
    for section in SimulationConfig.model_fields:
        values = getattr(config, section).model_dump()
        for fld, value in values.items():
            if section == "cost" and fld == "latency":
                for node_id in sorted(value):
                    out[f"cost.latency.{node_id}"] = repr(float(value[node_id]))
                continue
            if value is None:
                out[f"{section}.{fld}"] = "none"
            elif isinstance(value, bool):
                out[f"{section}.{fld}"] = "true" if value else "false"
            elif isinstance(value, list):
                out[f"{section}.{fld}"] = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                out[f"{section}.{fld}"] = repr(value)
            else:
                out[f"{section}.{fld}"] = str(value)
    return out


def render_config(config: SimulationConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in to_flat(config).items())
