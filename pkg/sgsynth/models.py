"""Database models of the run registry."""
from sqlalchemy import JSON, TIMESTAMP, Column, ForeignKey, Index, Integer, String, Text
from sqlalchemy.orm import declarative_base, relationship
from sqlalchemy.sql import func

Base = declarative_base()


class Run(Base):
    """One subcommand invocation."""

    __tablename__ = 'runs'

    run_id = Column(String(36), primary_key=True, comment="UUID4 of the invocation")
    command = Column(String(50), nullable=False, comment="Subcommand: train-bn|generate|infer|robustness|make-survey")
    seed = Column(Integer, nullable=False, comment="Master seed")
    config_sha = Column(String(64), nullable=False, comment="sha256 of the config snapshot")
    status = Column(String(20), default='running', nullable=False, comment="running|ok|partial|failed")
    exit_code = Column(Integer, default=0, nullable=False)
    stage_seconds = Column(JSON, default=dict, nullable=False, comment="Wall-clock per stage")
    output_dir = Column(Text, nullable=False)
    detail = Column(Text, comment="Error detail of a failed run")
    created_at = Column(TIMESTAMP(timezone=True), server_default=func.now(), nullable=False)
    finished_at = Column(TIMESTAMP(timezone=True))

    artifacts = relationship("Artifact", back_populates="run", cascade="all, delete-orphan")

    __table_args__ = (
        Index('idx_runs_command', 'command'),
        Index('idx_runs_config_sha', 'config_sha'),
    )

    def __repr__(self):
        return f"<Run(run_id='{self.run_id}', command='{self.command}', status='{self.status}')>"


class Artifact(Base):
    """A file written by a run, with its digest."""

    __tablename__ = 'artifacts'

    artifact_id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String(36), ForeignKey('runs.run_id', ondelete='CASCADE'), nullable=False)
    path = Column(Text, nullable=False, comment="Path relative to the output directory")
    sha256 = Column(String(64), nullable=False)
    size = Column(Integer, nullable=False, comment="Bytes")
    stage = Column(String(50), comment="Pipeline stage that produced the file")

    run = relationship("Run", back_populates="artifacts")

    __table_args__ = (
        Index('idx_artifacts_run_id', 'run_id'),
        Index('idx_artifacts_sha256', 'sha256'),
    )

    def __repr__(self):
        return f"<Artifact(path='{self.path}', sha256='{self.sha256[:12]}')>"
