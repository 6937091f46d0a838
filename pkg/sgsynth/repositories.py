"""Repository pattern for run registry operations."""
import uuid
from datetime import datetime, timezone
from typing import Dict, List, Optional

from sqlalchemy import select, update
from sqlalchemy.orm import Session

from .models import Artifact, Run


class RunRepository:
    """Repository for Run database operations."""

    def __init__(self, db: Session):
        self.db = db

    def get_by_id(self, run_id: str) -> Optional[Run]:
        """Get run by ID."""
        return self.db.execute(select(Run).where(Run.run_id == run_id)).scalar_one_or_none()

    def list_recent(self, limit: int = 20, command: Optional[str] = None) -> List[Run]:
        """Most recent runs first, optionally for one subcommand."""
        query = select(Run).order_by(Run.created_at.desc()).limit(limit)
        if command is not None:
            query = query.where(Run.command == command)
        return list(self.db.execute(query).scalars().all())

    def start(self, command: str, seed: int, config_sha: str, output_dir: str) -> Run:
        """Record a run that has just started."""
        run = Run(
            run_id=str(uuid.uuid4()),
            command=command,
            seed=seed,
            config_sha=config_sha,
            output_dir=output_dir,
            status="running",
            stage_seconds={},
        )
        self.db.add(run)
        self.db.flush()
        return run

    def finish(
        self,
        run_id: str,
        status: str,
        exit_code: int,
        stage_seconds: Optional[Dict[str, float]] = None,
        detail: Optional[str] = None,
    ) -> Optional[Run]:
        """Close a run with its outcome."""
        values = {
            "status": status,
            "exit_code": exit_code,
            "detail": detail,
            "finished_at": datetime.now(timezone.utc),
        }
        if stage_seconds is not None:
            values["stage_seconds"] = stage_seconds
        self.db.execute(update(Run).where(Run.run_id == run_id).values(**values))
        self.db.flush()
        return self.get_by_id(run_id)


class ArtifactRepository:
    """Repository for Artifact database operations."""

    def __init__(self, db: Session):
        self.db = db

    def add(self, run_id: str, path: str, sha256: str, size: int, stage: Optional[str] = None) -> Artifact:
        artifact = Artifact(run_id=run_id, path=path, sha256=sha256, size=size, stage=stage)
        self.db.add(artifact)
        self.db.flush()
        return artifact

