"""report: one text digest of the manifests, summaries and registry of an output directory."""
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from .. import io
from ..database import REGISTRY_FILENAME, make_engine, registry_url, session_scope
from ..errors import ConfigError
from ..repositories import RunRepository
from ..schemas import RunSummary
from . import MANIFEST_NAME

logger = logging.getLogger(__name__)

REPORT_FILE = "report.txt"


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("report", help="Render manifests, summaries and registry into a text digest")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="Configuration whose output_dir is reported")
    source.add_argument("--output-dir", type=Path, help="Output directory to report on")
    parser.add_argument("--limit", type=int, default=10, help="Registry runs to list")
    parser.set_defaults(handler=handle)


def _section(title: str) -> List[str]:
    return ["", title, "=" * len(title)]


def _manifest_lines(path: Path) -> List[str]:
    manifest = io.read_manifest(path)
    lines = _section(f"{manifest.command} ({path.parent.name})")
    lines.append(f"status: {manifest.status}   seed: {manifest.seed}   version: {manifest.version}")
    lines.append(f"created: {manifest.created_at.isoformat()}")
    for stage, seconds in manifest.stage_seconds.items():
        lines.append(f"  stage {stage:<12} {seconds:9.3f}s")
    for name, digest in manifest.artifacts.items():
        ok = (path.parent / name).exists() and io.file_digest(path.parent / name) == digest
        lines.append(f"  {name:<32} {digest[:16]}  {'ok' if ok else 'MODIFIED OR MISSING'}")
    return lines


def _inference_lines(directory: Path) -> List[str]:
    lines = []
    summary_path = directory / "summary.csv"
    if summary_path.exists():
        summary = pd.read_csv(summary_path)
        hyper = summary[~summary["parameter"].str.contains(r"\[")]
        lines += _section("posterior hyperparameters")
        for row in hyper.itertuples():
            lines.append(
                f"  {row.parameter:<12} mean {row.mean:8.3f}  HDI [{row.hdi_lower:7.3f}, {row.hdi_upper:7.3f}]"
                f"  r_hat {row.r_hat:6.3f}  ess {row.ess:8.1f}"
            )
        worst = summary["r_hat"].max()
        lines.append(f"  max r_hat over {len(summary)} parameters: {worst:.3f}")
    rates_path = directory / "coverage_rates.csv"
    if rates_path.exists():
        lines += _section("HDI coverage")
        for row in pd.read_csv(rates_path).itertuples():
            lines.append(f"  {row.family:<16} {row.coverage:6.1%}")
    return lines


def _heatmap_lines(directory: Path) -> List[str]:
    lines = []
    for name in ("alpha_entropy.csv", "beta_entropy.csv"):
        path = directory / name
        if not path.exists():
            continue
        agents, questions, matrix = io.read_heatmap(path)
        lines += _section(f"{name[:-4]} (rows: agents, columns: questions)")
        lines.append("  " + " " * 8 + "".join(f"{q:>8}" for q in questions))
        for n, row in zip(agents, matrix):
            cells = "".join(f"{v:8.3f}" if np.isfinite(v) else f"{'-':>8}" for v in row)
            lines.append(f"  {n:>8}{cells}")
    return lines


def _registry_lines(root: Path, url: Optional[str], limit: int) -> List[str]:
    if url is None and not (root / REGISTRY_FILENAME).exists():
        return []
    engine = make_engine(registry_url(root, url))
    try:
        with session_scope(engine) as db:
            runs = [RunSummary.model_validate(r) for r in RunRepository(db).list_recent(limit)]
    finally:
        engine.dispose()
    lines = _section("run registry")
    for run in runs:
        lines.append(
            f"  {run.created_at:%Y-%m-%d %H:%M:%S}  {run.command:<12} seed {run.seed:<8} "
            f"{run.status:<8} exit {run.exit_code}  config {run.config_sha[:12]}"
        )
    return lines


def render_report(root: Path, registry: Optional[str] = None, limit: int = 10) -> str:
    root = Path(root)
    if not root.exists():
        raise ConfigError(f"output directory does not exist: {root}")
    lines = [f"Report for {root}"]
    for manifest in sorted(root.glob(f"*/{MANIFEST_NAME}")):
        lines += _manifest_lines(manifest)
    lines += _inference_lines(root / "inference")
    lines += _heatmap_lines(root / "robustness")
    lines += _registry_lines(root, registry, limit)
    return "\n".join(lines) + "\n"


def handle(args) -> int:
    if args.config is not None:
        cfg = io.load_config(args.config)
        root, registry = Path(cfg.output_dir), (cfg.registry.url if cfg.registry.enabled else None)
    else:
        root, registry = args.output_dir, None
    text = render_report(root, registry, args.limit)
    (root / REPORT_FILE).write_text(text)
    print(text, end="")
    return 0
