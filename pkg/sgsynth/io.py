"""
File formats: structured-text documents (YAML) and delimiter-separated tables.

All tables are comma-separated with a header row; empty cells mean missing
or unanswered. Writers are deterministic so that digests are reproducible.
"""
import hashlib
import logging
import os
import re
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

from .errors import ConfigError, DataError, InvalidInputError
from .graphical_model import (
    MISSING,
    BayesianNetwork,
    Dag,
    dag_from_definition,
    network_from_definition,
    network_to_definition,
    topological_order,
)
from .irt_engine import UNANSWERED, ResponseDataset
from .schemas import AppConfig, EnvironmentDefinition, NetworkDefinition, RunManifest

logger = logging.getLogger(__name__)

SEED_ENV = "SGSYNTH_SEED"
OUTPUT_DIR_ENV = "SGSYNTH_OUTPUT_DIR"

QUESTION_COLUMN = re.compile(r"^Q(\d+)$")

TRUTH_AGENTS = "truth_agents.csv"
TRUTH_QUESTIONS = "truth_questions.csv"
TRUTH_HYPERPARAMS = "truth_hyperparams.csv"


def load_yaml(path: Path) -> dict:
    """Read a YAML document into a mapping."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return data


def dump_yaml(data: dict, path: Path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=False, default_flow_style=None)


def format_validation_error(error: ValidationError, prefix: str = "") -> str:
    """Render pydantic errors as 'field.path: message' lines."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        lines.append(f"{prefix}{location}: {item['msg']}")
    return "; ".join(lines)


def _resolve(path: Optional[Path], base_dir: Path) -> Optional[Path]:
    if path is None:
        return None
    path = Path(path)
    return path if path.is_absolute() else (base_dir / path).resolve()


def config_from_dict(data: dict, base_dir: Path) -> AppConfig:
    """
    Validate a config mapping, apply environment overrides and resolve file references.

    Only the seed and the output directory can be overridden from the
    environment.
    """
    data = dict(data)
    if os.getenv(SEED_ENV):
        try:
            data["seed"] = int(os.getenv(SEED_ENV))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {os.getenv(SEED_ENV)!r}")
    if os.getenv(OUTPUT_DIR_ENV):
        data["output_dir"] = str(Path(os.getenv(OUTPUT_DIR_ENV)).resolve())
    try:
        cfg = AppConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e))
    cfg.output_dir = _resolve(cfg.output_dir, base_dir)
    cfg.network.path = _resolve(cfg.network.path, base_dir)
    cfg.network.structure_path = _resolve(cfg.network.structure_path, base_dir)
    cfg.network.survey_path = _resolve(cfg.network.survey_path, base_dir)
    cfg.environment.path = _resolve(cfg.environment.path, base_dir)
    return cfg


def load_config(path: Path) -> AppConfig:
    """Load the single configuration document shared by all subcommands."""
    path = Path(path)
    return config_from_dict(load_yaml(path), path.parent.resolve())


def _network_definition(path: Path) -> NetworkDefinition:
    try:
        return NetworkDefinition.model_validate(load_yaml(path))
    except ValidationError as e:
        raise ConfigError(f"{path}: {format_validation_error(e)}")


def load_network(path: Path) -> BayesianNetwork:
    """Read a network file with explicit CPTs and validate it."""
    definition = _network_definition(path)
    if not definition.cpts:
        raise ConfigError(f"{path} has no CPTs; train it with train-bn first")
    return network_from_definition(definition)


def load_structure(path: Path) -> Dag:
    """Read the DAG part of a network file (CPTs, if any, are ignored)."""
    dag = dag_from_definition(_network_definition(path))
    try:
        topological_order(dag)
    except InvalidInputError as e:
        raise ConfigError(f"{path}: {e.detail}")
    for parent, child in dag.edges:
        if parent not in dag.names or child not in dag.names:
            raise ConfigError(f"{path}: edge {parent} -> {child} references an unknown variable")
    return dag


def save_network(net: BayesianNetwork, path: Path, description: Optional[str] = None) -> None:
    dump_yaml(network_to_definition(net, description).model_dump(mode="json"), path)


def load_environment_definition(path: Path) -> EnvironmentDefinition:
    try:
        return EnvironmentDefinition.model_validate(load_yaml(path))
    except ValidationError as e:
        raise ConfigError(f"{path}: {format_validation_error(e)}")


# Tables

def read_table(path: Path) -> pd.DataFrame:
    """Read a delimited table keeping every cell as text; empty cells become ''."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    return pd.read_csv(path, dtype=str, keep_default_na=False)


def write_table(frame: pd.DataFrame, path: Path) -> str:
    """Write a table deterministically and return its sha256 digest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return file_digest(path)


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def read_survey(path: Path, dag: Dag) -> np.ndarray:
    """
    Read survey rows into a code table aligned with the DAG's variables.

    Raises:
        DataError: On header/DAG mismatch (naming the offending column) or unknown labels
    """
    frame = read_table(path)
    for column in frame.columns:
        if column not in dag.names:
            raise DataError("survey column is not a network variable", column=column)
    for name in dag.names:
        if name not in frame.columns:
            raise DataError("network variable has no survey column", column=name)
    codes = np.full((len(frame), len(dag.names)), MISSING, dtype=np.int64)
    for col, name in enumerate(dag.names):
        states = dag.variable(name).states
        for row, label in enumerate(frame[name]):
            label = label.strip()
            if label == "":
                continue
            if label not in states:
                raise DataError(f"unknown state '{label}' (expected one of {list(states)})", row=row + 1, column=name)
            codes[row, col] = states.index(label)
    logger.info(f"Read {len(frame)} survey rows, {int((codes == MISSING).sum())} missing cells")
    return codes


def read_observable(path: Path) -> ResponseDataset:
    """
    Read the observable dataset: agent ids and Q-columns (attributes are ignored).

    Raises:
        DataError: If a response cell is not 0, 1 or empty
    """
    frame = read_table(path)
    question_columns = [c for c in frame.columns if QUESTION_COLUMN.match(c)]
    if "agent_id" not in frame.columns:
        raise DataError("observable dataset has no agent_id column", column="agent_id")
    answers = np.full((len(frame), len(question_columns)), UNANSWERED, dtype=np.int8)
    for col, name in enumerate(question_columns):
        for row, cell in enumerate(frame[name]):
            cell = cell.strip()
            if cell == "":
                continue
            if cell not in ("0", "1"):
                raise DataError(f"response cell must be 0, 1 or empty, got '{cell}'", row=row + 1, column=name)
            answers[row, col] = int(cell)
    try:
        agent_ids = [int(v) for v in frame["agent_id"]]
    except ValueError:
        raise DataError("agent_id values must be integers", column="agent_id")
    question_ids = [int(QUESTION_COLUMN.match(c).group(1)) for c in question_columns]
    return ResponseDataset(answers=answers, agent_ids=agent_ids, question_ids=question_ids, betas=None)


def read_truth_tables(directory: Path) -> Optional[Tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]]:
    """Ground-truth tables of a generated dataset, or None when absent."""
    directory = Path(directory)
    paths = [directory / TRUTH_AGENTS, directory / TRUTH_QUESTIONS, directory / TRUTH_HYPERPARAMS]
    if not all(p.exists() for p in paths):
        return None
    return tuple(pd.read_csv(p) for p in paths)


def heatmap_frame(matrix: np.ndarray, agent_counts: Sequence[int], question_counts: Sequence[int]) -> pd.DataFrame:
    """Matrix with an axis header row (question counts) and a row-label column (agent counts)."""
    frame = pd.DataFrame(matrix, columns=[str(q) for q in question_counts])
    frame.insert(0, "agents", list(agent_counts))
    return frame


def read_heatmap(path: Path) -> Tuple[List[int], List[int], np.ndarray]:
    frame = pd.read_csv(path)
    agent_counts = [int(v) for v in frame["agents"]]
    question_counts = [int(c) for c in frame.columns[1:]]
    return agent_counts, question_counts, frame.iloc[:, 1:].to_numpy(dtype=float)


def write_histogram(path: Path, name: str, entropy: float, edges: np.ndarray, counts: np.ndarray) -> str:
    """Bin table of one posterior, with the parameter name and its entropy in a header comment."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"bin_lower": edges[:-1], "bin_upper": edges[1:], "count": counts})
    with open(path, "w", newline="\n") as f:
        f.write(f"# parameter={name} entropy={entropy:.6f}\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    return file_digest(path)


def read_histogram(path: Path) -> Tuple[str, float, np.ndarray, np.ndarray]:
    with open(path) as f:
        header = f.readline().lstrip("#").split()
    fields = dict(item.split("=", 1) for item in header)
    frame = pd.read_csv(path, comment="#")
    edges = np.append(frame["bin_lower"].to_numpy(dtype=float), frame["bin_upper"].iloc[-1])
    return fields["parameter"], float(fields["entropy"]), edges, frame["count"].to_numpy(dtype=np.int64)


def write_manifest(manifest: RunManifest, path: Path) -> None:
    Path(path).write_text(manifest.model_dump_json(indent=2) + "\n")


def read_manifest(path: Path) -> RunManifest:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    try:
        return RunManifest.model_validate_json(path.read_text())
    except ValidationError as e:
        raise ConfigError(f"{path}: {format_validation_error(e)}")
