# app/core/errors.py
from __future__ import annotations


class SimulationError(Exception):
    """Erro base do simulador"""
    pass


class InvalidParameterError(SimulationError, ValueError):
    pass


class DimensionMismatchError(SimulationError, ValueError):
    pass


class EmptyDatasetError(SimulationError, ValueError):
    pass


class AggregationError(SimulationError):
    """Nenhuma contribuição utilizável para agregar"""
    pass


class UnknownNodeError(SimulationError, KeyError):
    pass


class ChainLinkError(SimulationError):
    """Bloco não encaixa na ponta da cadeia (bug do simulador)"""
    pass


class BlockTooLargeError(SimulationError):
    pass


class DataError(SimulationError):
    """Falha ao ler/validar dados de entrada (CSV, partição)"""
    pass


class ConfigError(SimulationError):
    pass
