"""
Subcommands and the run bookkeeping they share.

Each subcommand module exposes ``add_parser(subparsers)`` and a handler set
as the parser default ``handler``. Run subcommands write their files through
a ``RunContext`` which records digests in a manifest and in the run registry.
"""
import hashlib
import json
import logging
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Iterator, Optional

import pandas as pd

from .. import __version__, io
from ..database import make_engine, registry_url, session_scope
from ..errors import ConfigError, SimulatorError
from ..events import log_event
from ..repositories import ArtifactRepository, RunRepository
from ..schemas import AppConfig, RunManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def add_config_arguments(parser) -> None:
    """--config / --from-manifest pair shared by the run subcommands."""
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="YAML configuration document")
    source.add_argument("--from-manifest", type=Path, help="Re-run with the config snapshot stored in a manifest")


def resolve_config(args) -> AppConfig:
    if getattr(args, "from_manifest", None):
        manifest = io.read_manifest(args.from_manifest)
        return io.config_from_dict(manifest.config, args.from_manifest.parent.resolve())
    return io.load_config(args.config)


def config_digest(snapshot: dict) -> str:
    return hashlib.sha256(json.dumps(snapshot, sort_keys=True, default=str).encode()).hexdigest()


class RunContext:
    """
    Output directory, stage timings, manifest and registry record of one run.

    Usage:
        with RunContext("generate", cfg, "dataset") as run:
            with run.stage("write"):
                run.write_table(frame, "observable.csv")
    """

    def __init__(self, command: str, cfg: AppConfig, subdir: str):
        self.command = command
        self.cfg = cfg
        self.root = Path(cfg.output_dir)
        self.directory = self.root / subdir
        self.snapshot = cfg.model_dump(mode="json")
        self.artifacts: Dict[str, str] = {}
        self.stage_seconds: Dict[str, float] = {}
        self.status = "ok"
        self.run_id: Optional[str] = None
        self._engine = None
        self._current_stage: Optional[str] = None

    def __enter__(self) -> "RunContext":
        self.directory.mkdir(parents=True, exist_ok=True)
        if self.cfg.registry.enabled:
            self._engine = make_engine(registry_url(self.root, self.cfg.registry.url))
            with session_scope(self._engine) as db:
                run = RunRepository(db).start(
                    self.command, self.cfg.seed, config_digest(self.snapshot), str(self.directory)
                )
                self.run_id = run.run_id
        log_event("run_started", {"command": self.command, "seed": self.cfg.seed, "run_id": self.run_id})
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is None:
            self._write_manifest()
            self._finish(self.status, 5 if self.status == "partial" else 0, None)
        else:
            exit_code = exc.exit_code if isinstance(exc, SimulatorError) else 1
            detail = exc.detail if isinstance(exc, SimulatorError) else str(exc)
            self._finish("failed", exit_code, detail)
        if self._engine is not None:
            self._engine.dispose()
        return False

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        self._current_stage = name
        try:
            yield
        finally:
            self.stage_seconds[name] = self.stage_seconds.get(name, 0.0) + time.perf_counter() - start
            self._current_stage = None

    def path(self, relative: str) -> Path:
        return self.directory / relative

    def record(self, relative: str, digest: Optional[str] = None) -> str:
        """Register a file written under the run directory."""
        path = self.path(relative)
        digest = digest or io.file_digest(path)
        self.artifacts[relative] = digest
        if self._engine is not None:
            with session_scope(self._engine) as db:
                ArtifactRepository(db).add(
                    self.run_id, relative, digest, path.stat().st_size, stage=self._current_stage
                )
        log_event("artifact_written", {"path": relative, "sha256": digest})
        return digest

    def write_table(self, frame: pd.DataFrame, relative: str) -> str:
        return self.record(relative, io.write_table(frame, self.path(relative)))

    def write_with(self, relative: str, writer: Callable[[Path], object]) -> str:
        """Let ``writer`` produce a file at the given path, then record it."""
        path = self.path(relative)
        path.parent.mkdir(parents=True, exist_ok=True)
        writer(path)
        return self.record(relative)

    def _write_manifest(self) -> None:
        manifest = RunManifest(
            command=self.command,
            version=__version__,
            seed=self.cfg.seed,
            created_at=datetime.now(timezone.utc),
            config=self.snapshot,
            artifacts=dict(sorted(self.artifacts.items())),
            stage_seconds=self.stage_seconds,
            status=self.status,
        )
        io.write_manifest(manifest, self.path(MANIFEST_NAME))

    def _finish(self, status: str, exit_code: int, detail: Optional[str]) -> None:
        log_event("run_finished", {
            "command": self.command, "status": status, "exit_code": exit_code, "stage_seconds": self.stage_seconds,
        })
        if self._engine is None:
            return
        try:
            with session_scope(self._engine) as db:
                RunRepository(db).finish(self.run_id, status, exit_code, self.stage_seconds, detail)
        except Exception as e:
            logger.error(f"Could not record run outcome in the registry: {e}")


def require(value, field: str):
    """Config value that must be set for the current subcommand."""
    if value is None:
        raise ConfigError(f"{field}: required by this subcommand")
    return value
