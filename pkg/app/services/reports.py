# app/services/reports.py
"""
Artefatos de uma execução, todos em lote:

  metrics.csv    uma linha por rodada (colunas em METRICS_COLUMNS)
  summary.txt    configuração efetiva + resumo final + eventos
  ledger.export  JSON-lines da cadeia comprometida
  accuracy.svg   acurácia global por rodada
  bytes.svg      bytes de uplink/downlink/ledger por rodada
  confusion.svg  matriz de confusão do modelo final

Floats saem com repr() e os SVG sem data/ids aleatórios, para que a mesma
(config, seed) produza arquivos idênticos.
"""
from __future__ import annotations

import csv
import logging
import os
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from app.config import render_config  # noqa: E402
from app.core.ledger import write_export  # noqa: E402
from app.services.simulation import RoundReport, SimulationResult  # noqa: E402

log = logging.getLogger("uvicorn.error")

METRICS_COLUMNS = (
    "round",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "mean_local_loss",
    "uplink_bytes",
    "downlink_bytes",
    "ledger_bytes",
    "gas",
    "update_cost",
    "transmitting",
    "accepted",
    "rejected",
    "committed",
    "chain_height",
)

plt.rcParams["svg.hashsalt"] = "flbcid"


def _fmt(v: object) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_row(r: RoundReport) -> Dict[str, str]:
    m = r.metrics
    accepted = len(r.accepted)
    values = (
        r.round_index, m.accuracy, m.precision, m.recall, m.f1, r.mean_local_loss,
        r.uplink_bytes, r.downlink_bytes, r.ledger_bytes, r.gas, r.update_cost,
        len(r.transmitting), accepted, len(r.transmitting) - accepted,
        r.committed, r.chain_height,
    )
    return {k: _fmt(v) for k, v in zip(METRICS_COLUMNS, values)}


def write_metrics_csv(result: SimulationResult, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRICS_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in result.report.rounds:
            writer.writerow(metrics_row(r))


def render_summary(result: SimulationResult) -> str:
    rep = result.report
    fm = rep.final_metrics
    rounds = rep.rounds
    lines: List[str] = ["# configuração", render_config(result.config).rstrip("\n"), "", "# resumo"]
    lines.append(f"rounds = {len(rounds)}")
    lines.append(f"initial_accuracy = {rep.initial_metrics.accuracy!r}")
    lines.append(f"initial_loss = {rep.initial_loss!r}")
    lines.append(f"final_accuracy = {fm.accuracy!r}")
    lines.append(f"final_precision = {fm.precision!r}")
    lines.append(f"final_recall = {fm.recall!r}")
    lines.append(f"final_f1 = {fm.f1!r}")
    lines.append(f"rounds_to_convergence = {rep.rounds_to_convergence if rep.rounds_to_convergence else 'none'}")
    lines.append(f"chain_height = {result.chain.height}")
    lines.append(f"chain_tip = {result.chain.tip_hash.hex()}")
    lines.append(f"uplink_bytes_total = {sum(r.uplink_bytes for r in rounds)}")
    lines.append(f"downlink_bytes_total = {sum(r.downlink_bytes for r in rounds)}")
    lines.append(f"ledger_bytes_total = {sum(r.ledger_bytes for r in rounds)}")
    lines.append(f"gas_total = {sum(r.gas for r in rounds)!r}")
    lines.append(f"update_cost_total = {sum(r.update_cost for r in rounds)!r}")
    lines.append(f"confusion = tp:{fm.tp} fp:{fm.fp} tn:{fm.tn} fn:{fm.fn}")
    lines.append("")
    lines.append("# eventos")
    lines.extend(rep.events or ["(nenhum)"])
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- gráficos

def _save(fig: "plt.Figure", path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_accuracy(result: SimulationResult, path: str) -> None:
    rounds = [r.round_index for r in result.report.rounds]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([0] + rounds, [result.report.initial_metrics.accuracy] + result.report.accuracies, marker="o", ms=3)
    target = result.config.metrics.target_accuracy
    ax.axhline(target, color="grey", ls="--", lw=0.8, label=f"alvo {target:g}")
    ax.set_xlabel("rodada")
    ax.set_ylabel("acurácia global (teste)")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    _save(fig, path)


def plot_bytes(result: SimulationResult, path: str) -> None:
    rep = result.report.rounds
    rounds = [r.round_index for r in rep]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rounds, [r.uplink_bytes for r in rep], label="uplink")
    ax.plot(rounds, [r.downlink_bytes for r in rep], label="downlink")
    ax.plot(rounds, [r.ledger_bytes for r in rep], label="ledger")
    ax.set_xlabel("rodada")
    ax.set_ylabel("bytes")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)


def plot_confusion(result: SimulationResult, path: str) -> None:
    m = result.report.final_metrics
    grid = [[m.tn, m.fp], [m.fn, m.tp]]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(grid, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(grid[i][j]), ha="center", va="center")
    ax.set_xticks([0, 1], labels=["normal", "ataque"])
    ax.set_yticks([0, 1], labels=["normal", "ataque"])
    ax.set_xlabel("previsto")
    ax.set_ylabel("real")
    _save(fig, path)


def write_outputs(result: SimulationResult, out_dir: str, plots: bool = True) -> Dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "metrics": os.path.join(out_dir, "metrics.csv"),
        "summary": os.path.join(out_dir, "summary.txt"),
        "ledger": os.path.join(out_dir, "ledger.export"),
    }
    write_metrics_csv(result, paths["metrics"])
    with open(paths["summary"], "w", encoding="utf-8", newline="\n") as f:
        f.write(render_summary(result))
    write_export(result.chain, paths["ledger"])
    if plots:
        for name, fn in (("accuracy", plot_accuracy), ("bytes", plot_bytes), ("confusion", plot_confusion)):
            paths[name] = os.path.join(out_dir, f"{name}.svg")
            fn(result, paths[name])
    log.info("[RUNS] artefatos gravados em %s", out_dir)
    return paths
