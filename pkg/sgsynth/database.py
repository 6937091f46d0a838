"""Run registry connection and session management."""
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, sessionmaker

from .models import Base

REGISTRY_FILENAME = "registry.sqlite"


def registry_url(output_dir: Path, url: Optional[str] = None) -> str:
    """
    Registry URL for a run.

    Supports two modes:
    1. explicit URL (config ``registry.url``)
    2. SQLite file inside the run's output directory
    """
    if url:
        return url
    return f"sqlite:///{(Path(output_dir) / REGISTRY_FILENAME).resolve()}"


def make_engine(url: str) -> Engine:
    """Create the engine and make sure the registry tables exist."""
    if url.startswith("sqlite:///"):
        Path(url[len("sqlite:///"):]).parent.mkdir(parents=True, exist_ok=True)
    engine = create_engine(
        url,
        echo=os.getenv("SGSYNTH_SQL_ECHO", "false").lower() == "true",
        pool_pre_ping=True,  # Verify connections before using
    )
    init_db(engine)
    return engine


def init_db(engine: Engine) -> None:
    """Create registry tables if missing."""
    Base.metadata.create_all(engine)


@contextmanager
def session_scope(engine: Engine) -> Iterator[Session]:
    """Session that commits on success and rolls back on error."""
    factory = sessionmaker(engine, expire_on_commit=False, autoflush=False)
    session = factory()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()
