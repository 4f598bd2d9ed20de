# app/services/archive.py
"""
Arquivo lateral endereçado por conteúdo: os pesos completos ficam aqui e
o ledger guarda só o digest.

  <root>/updates/<digest>.bin  -> codificação canônica do LocalUpdate
  <root>/models/<digest>.bin   -> codificação canônica do modelo global
  <root>/globals/<timestamp>   -> digest (hex) do global vigente após a rodada

Updates são endereçados pelos pesos: dois nós com pesos idênticos dividem a
mesma entrada e o primeiro a gravar fica com os metadados. Quem audita usa
só os pesos daqui; nó, amostras e veredito vêm do registro no ledger.

Sem root, guarda em memória (testes / comparações).
"""
from __future__ import annotations

import os
from typing import Dict, Optional

from app.core.errors import DataError
from app.core.ledger import (
    decode_update,
    decode_weights,
    encode_update,
    encode_weights,
    weights_digest,
)
from app.core.model import LocalUpdate, ModelWeights

_KINDS = ("updates", "models", "globals")


class UpdateArchive:
    def __init__(self, root: Optional[str] = None) -> None:
        self.root = root
        self._mem: Dict[str, bytes] = {}
        if root:
            for kind in _KINDS:
                os.makedirs(os.path.join(root, kind), exist_ok=True)

    # ------------------------------------------------------------ interno
    def _path(self, kind: str, name: str) -> str:
        return os.path.join(self.root or "", kind, name)

    def _put(self, kind: str, name: str, raw: bytes, overwrite: bool = False) -> None:
        if not self.root:
            if overwrite:
                self._mem[f"{kind}/{name}"] = raw
            else:
                self._mem.setdefault(f"{kind}/{name}", raw)
            return
        path = self._path(kind, name)
        if not overwrite and os.path.exists(path):
            return  # mesma chave = mesmo conteúdo
        tmp = path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(raw)
        os.replace(tmp, path)

    def _get(self, kind: str, name: str) -> bytes:
        if not self.root:
            try:
                return self._mem[f"{kind}/{name}"]
            except KeyError:
                raise DataError(f"{kind} {name} ausente no arquivo")
        try:
            with open(self._path(kind, name), "rb") as f:
                return f.read()
        except FileNotFoundError:
            raise DataError(f"{kind} {name} ausente no arquivo")

    def _has(self, kind: str, name: str) -> bool:
        if not self.root:
            return f"{kind}/{name}" in self._mem
        return os.path.exists(self._path(kind, name))

    # ------------------------------------------------------------ updates
    def store_update(self, update: LocalUpdate) -> bytes:
        digest = weights_digest(update.weights)
        self._put("updates", f"{digest.hex()}.bin", encode_update(update))
        return digest

    def has_update(self, digest: bytes) -> bool:
        return self._has("updates", f"{digest.hex()}.bin")

    def load_update(self, digest: bytes) -> LocalUpdate:
        return decode_update(self._get("updates", f"{digest.hex()}.bin"))

    # ------------------------------------------------------------ modelos
    def store_model(self, weights: ModelWeights, timestamp: Optional[int] = None) -> bytes:
        """Guarda o global; com timestamp, também o marca como vigente naquela rodada."""
        digest = weights_digest(weights)
        self._put("models", f"{digest.hex()}.bin", encode_weights(weights))
        if timestamp is not None:
            self._put("globals", str(int(timestamp)), digest.hex().encode("ascii"), overwrite=True)
        return digest

    def load_model(self, digest: bytes) -> ModelWeights:
        return decode_weights(self._get("models", f"{digest.hex()}.bin"))

    def global_at(self, timestamp: int) -> ModelWeights:
        """Global vigente após a rodada `timestamp`; confere o digest do conteúdo."""
        try:
            digest = bytes.fromhex(self._get("globals", str(int(timestamp))).decode("ascii"))
        except ValueError:
            raise DataError(f"índice de global corrompido em {timestamp}")
        weights = self.load_model(digest)
        if weights_digest(weights) != digest:
            raise DataError(f"modelo {digest.hex()} não confere com o digest")
        return weights
