# app/cli.py
"""
Linha de comando:

  python -m app.cli simulate --config run.conf [--seed S] [--out DIR] [--no-plots]
  python -m app.cli gen-data --spec data.conf --out data.csv
  python -m app.cli verify-chain runs/x/ledger.export [--archive runs/x/archive]
  python -m app.cli compare --config run.conf [--seed S] [--out DIR]

Saída 0 em sucesso; 1 em falha de verificação; 2 em erro de entrada.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

from app.config import SimulationConfig, config_from_flat, load_config, log_level, output_dir
from app.core.data import generate_synthetic, write_csv
from app.core.errors import SimulationError
from app.core.ledger import verify_export
from app.core.numerics import seeded_rng
from app.services.archive import UpdateArchive
from app.services.baselines import compare, write_comparison
from app.services.reports import write_outputs
from app.services.simulation import STREAM_DATA, run_simulation

log = logging.getLogger("uvicorn.error")


def _load(args: argparse.Namespace) -> SimulationConfig:
    overrides: Dict[str, str] = {}
    if args.seed is not None:
        overrides["simulation.seed"] = str(args.seed)
    if args.config:
        return load_config(args.config, overrides)
    return config_from_flat(overrides)


def _out_dir(args: argparse.Namespace, config: SimulationConfig) -> str:
    return args.out or os.path.join(output_dir(), f"seed-{config.simulation.seed}")


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    result = run_simulation(config, archive_dir=os.path.join(out, "archive"))
    write_outputs(result, out, plots=not args.no_plots)
    fm = result.report.final_metrics
    print(f"acc={fm.accuracy:.4f} f1={fm.f1:.4f} altura={result.chain.height} saída={out}")
    return 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = load_config(args.spec)
    ds = generate_synthetic(config.synthetic, seeded_rng(config.simulation.seed, STREAM_DATA))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, args.out, label_column=config.data.label_column)
    print(f"{len(ds)} linhas, dim={ds.dim} -> {args.out}")
    return 0


def cmd_verify_chain(args: argparse.Namespace) -> int:
    try:
        raw = Path(args.export).read_bytes()
    except FileNotFoundError:
        print(f"arquivo não encontrado: {args.export}", file=sys.stderr)
        return 2
    archive = UpdateArchive(args.archive) if args.archive else None
    result = verify_export(raw, archive)
    if result.valid:
        print("ok")
        return 0
    print(f"falha na altura {result.height}: {result.cause}")
    return 1


def cmd_compare(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    path = write_comparison(compare(config), out)
    print(f"comparação -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flbcid", description="Simulador FL-BCID")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="executa uma simulação completa")
    p.add_argument("--config", type=str, default=None, help="arquivo chave = valor")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-data", help="gera um CSV sintético")
    p.add_argument("--spec", type=str, required=True, help="arquivo com chaves synthetic.*")
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("verify-chain", help="verifica um ledger.export")
    p.add_argument("export", type=str)
    p.add_argument("--archive", type=str, default=None)
    p.set_defaults(func=cmd_verify_chain)

    p = sub.add_parser("compare", help="compara com as linhas de base")
    p.add_argument("--config", type=str, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(level=log_level(), format="%(asctime)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except (SimulationError, ValueError) as e:
        log.error("%s", e)
        print(f"erro: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
