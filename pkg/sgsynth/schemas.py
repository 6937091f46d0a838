"""Pydantic schemas for configuration and structured-text documents."""
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


# Network definition schemas
class VariableDefinition(BaseModel):
    """One discrete variable with ordered state labels."""
    name: str = Field(..., min_length=1)
    states: List[str] = Field(..., description="Ordered category labels")


class CptDefinition(BaseModel):
    """Explicit conditional probability table.

    Rows enumerate joint parent configurations in row-major order over
    ``parents`` (last parent varies fastest); each row is a distribution
    over the child's states.
    """
    parents: List[str] = Field(default_factory=list)
    table: List[List[float]]


class NetworkDefinition(BaseModel):
    """Structured-text network file: variables, edges and optional CPTs."""
    name: str = "network"
    description: Optional[str] = None
    variables: List[VariableDefinition]
    edges: List[Tuple[str, str]] = Field(default_factory=list)
    cpts: Dict[str, CptDefinition] = Field(default_factory=dict)


# Environment schemas
class BetaPrior(BaseModel):
    """Shape parameters of the Beta distribution question parameters are drawn from."""
    a: float = Field(1.0, gt=0)
    b: float = Field(1.0, gt=0)


class QuestionDefinition(BaseModel):
    """A question node; ``beta`` is drawn from the prior when omitted."""
    id: int = Field(..., ge=1)
    beta: Optional[float] = Field(None, ge=0.0, le=1.0)
    branches: Dict[int, int] = Field(default_factory=dict, description="answer value -> next question id")

    @field_validator("branches")
    @classmethod
    def answers_are_binary(cls, value: Dict[int, int]) -> Dict[int, int]:
        for answer in value:
            if answer not in (0, 1):
                raise ValueError(f"branch key must be an answer value 0 or 1, got {answer}")
        return value


class EnvironmentDefinition(BaseModel):
    """Questions of the simulated game, linear or tree-shaped."""
    mode: Literal["linear", "tree"] = "linear"
    n_questions: Optional[int] = Field(None, ge=1)
    beta_prior: BetaPrior = Field(default_factory=BetaPrior)
    questions: List[QuestionDefinition] = Field(default_factory=list)
    root: Optional[int] = None

    @model_validator(mode="after")
    def check_layout(self) -> "EnvironmentDefinition":
        if self.mode == "tree":
            if not self.questions:
                raise ValueError("tree mode requires an explicit question list")
            if self.root is None:
                raise ValueError("tree mode requires a root question id")
        elif not self.questions and self.n_questions is None:
            self.n_questions = 15
        if self.questions and self.n_questions is not None and self.n_questions != len(self.questions):
            raise ValueError("n_questions disagrees with the explicit question list")
        return self


# Model parameter schemas
class MixtureHyperparams(BaseModel):
    """Gaussian parameters of the safe and risky profile groups."""
    mu_safe: float = -2.0
    sigma_safe: float = Field(0.7, gt=0)
    mu_risky: float = 0.5
    sigma_risky: float = Field(1.2, gt=0)


class HierarchicalModelSpec(BaseModel):
    """Priors of the hierarchical model used for parameter recovery."""
    mu_safe_mean: float = -1.0
    mu_safe_sd: float = Field(2.0, gt=0)
    mu_risky_mean: float = 1.0
    mu_risky_sd: float = Field(2.0, gt=0)
    sigma_rate: float = Field(1.0, gt=0)
    group_prior: float = Field(0.5, gt=0, lt=1)
    beta_a: float = Field(1.0, gt=0)
    beta_b: float = Field(1.0, gt=0)


class McmcConfig(BaseModel):
    """Metropolis-within-Gibbs sampler settings."""
    chains: int = Field(4, ge=1)
    draws: int = Field(2000, ge=1)
    burn_in: int = Field(2000, ge=0)
    thin: int = Field(1, ge=1)
    alpha_step: float = Field(0.5, gt=0)
    beta_step: float = Field(0.5, gt=0, description="random-walk scale on the logit of beta")
    sigma_step: float = Field(0.2, gt=0, description="random-walk scale on log sigma")
    mu_step: float = Field(0.2, gt=0, description="used by the marginalized mode only")
    adapt_window: int = Field(50, ge=1)
    target_acceptance: Tuple[float, float] = (0.2, 0.4)
    marginalize_groups: bool = False
    seed: Optional[int] = None

    @field_validator("target_acceptance")
    @classmethod
    def band_is_ordered(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not 0 < low < high < 1:
            raise ValueError("target_acceptance must satisfy 0 < low < high < 1")
        return value


class EntropyConfig(BaseModel):
    """Histogram settings for normalized posterior entropy."""
    bins: int = Field(50, ge=2)
    alpha_range: Tuple[float, float] = (-6.0, 6.0)
    beta_range: Tuple[float, float] = (0.0, 1.0)

    @field_validator("alpha_range", "beta_range")
    @classmethod
    def range_is_ordered(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if not value[0] < value[1]:
            raise ValueError("range lower bound must be below the upper bound")
        return value


# Configuration sections
class NetworkSection(BaseModel):
    """Where the network comes from and how it is trained."""
    path: Optional[Path] = Field(None, description="Trained network file used by generate")
    structure_path: Optional[Path] = Field(None, description="DAG file used by train-bn")
    survey_path: Optional[Path] = None
    method: Literal["mle", "em"] = "mle"
    smoothing: float = Field(1.0, ge=0)
    max_iter: int = Field(200, ge=1)
    tol: float = Field(1e-6, gt=0)


class PopulationSection(BaseModel):
    """Synthetic agent population settings."""
    n_agents: int = Field(500, ge=1)
    target: str = "ExperiencedCyberbullying"
    risky_state: str = "Yes"
    hyperparams: MixtureHyperparams = Field(default_factory=MixtureHyperparams)
    evidence: Dict[str, str] = Field(default_factory=dict)


class EnvironmentSection(EnvironmentDefinition):
    """Inline environment, or a reference to an environment file."""
    path: Optional[Path] = None


class InferenceSection(BaseModel):
    """Hierarchical model priors, sampler and report settings."""
    model: HierarchicalModelSpec = Field(default_factory=HierarchicalModelSpec)
    mcmc: McmcConfig = Field(default_factory=McmcConfig)
    hdi_mass: float = Field(0.94, gt=0, lt=1)
    entropy: EntropyConfig = Field(default_factory=EntropyConfig)
    write_trace: bool = True
    histogram_parameters: List[str] = Field(default_factory=lambda: ["alpha[1]", "alpha[2]"])


FULL_AGENT_AXIS = [5, 10, 25, 50, 100, 250, 500, 1000]
FULL_QUESTION_AXIS = [1, 2, 5, 10, 15, 25, 50]
DESK_AGENT_AXIS = [5, 50, 500]
DESK_QUESTION_AXIS = [1, 5, 15]


class RobustnessSection(BaseModel):
    """Agents x questions grid of the robustness experiment."""
    preset: Literal["full", "desk", "custom"] = "desk"
    agent_counts: Optional[List[int]] = None
    question_counts: Optional[List[int]] = None
    repeats: Optional[int] = Field(None, ge=1)
    mcmc: Optional[McmcConfig] = None
    entropy: EntropyConfig = Field(default_factory=EntropyConfig)

    @field_validator("agent_counts", "question_counts")
    @classmethod
    def counts_are_positive(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None:
            if not value:
                raise ValueError("axis must not be empty")
            if any(count < 1 for count in value):
                raise ValueError("axis counts must be positive")
        return value

    def axes(self) -> Tuple[List[int], List[int], int]:
        """Resolve the preset into (agent_counts, question_counts, repeats)."""
        if self.preset == "full":
            agents, questions, repeats = FULL_AGENT_AXIS, FULL_QUESTION_AXIS, 5
        elif self.preset == "desk":
            agents, questions, repeats = DESK_AGENT_AXIS, DESK_QUESTION_AXIS, 2
        else:
            agents, questions, repeats = [], [], 1
        agents = self.agent_counts or agents
        questions = self.question_counts or questions
        if not agents or not questions:
            raise ValueError("custom preset requires agent_counts and question_counts")
        return list(agents), list(questions), self.repeats or repeats


class RegistrySection(BaseModel):
    """Run registry database."""
    enabled: bool = True
    url: Optional[str] = Field(None, description="SQLAlchemy URL; default sqlite file in output_dir")


class AppConfig(BaseModel):
    """Single configuration document shared by all subcommands."""
    seed: int = 2023
    workers: int = Field(1, ge=1)
    output_dir: Path = Path("runs/default")
    network: NetworkSection = Field(default_factory=NetworkSection)
    population: PopulationSection = Field(default_factory=PopulationSection)
    environment: EnvironmentSection = Field(default_factory=EnvironmentSection)
    inference: InferenceSection = Field(default_factory=InferenceSection)
    robustness: RobustnessSection = Field(default_factory=RobustnessSection)
    registry: RegistrySection = Field(default_factory=RegistrySection)

    class Config:
        extra = "forbid"


# Run artifacts
class FitReport(BaseModel):
    """Outcome of network parameter learning."""
    method: Literal["mle", "em"]
    rows: int
    missing_cells: int
    smoothing: float
    log_likelihood: float
    iterations: int
    converged: bool


class RunManifest(BaseModel):
    """Config snapshot, seed and output digests of one subcommand run."""
    command: str
    version: str
    seed: int
    created_at: datetime
    config: dict
    artifacts: Dict[str, str] = Field(default_factory=dict, description="relative path -> sha256")
    stage_seconds: Dict[str, float] = Field(default_factory=dict)
    status: str = "ok"


class RunSummary(BaseModel):
    """Registry row as shown by the report command."""
    run_id: str
    command: str
    seed: int
    config_sha: str
    status: str
    exit_code: int
    output_dir: str
    created_at: datetime

    class Config:
        from_attributes = True
