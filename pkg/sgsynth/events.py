"""Logging setup and structured pipeline events."""

import json
import logging

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger("sgsynth.events")


def configure_logging(level: str = "INFO") -> None:
    """Configure root logging for command-line runs."""
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT)


def log_event(event: str, data: dict) -> None:
    """Log a pipeline event with structured data."""
    logger.info(f"EVENT: {json.dumps({'event': event, **data}, default=str, sort_keys=True)}")
