# plapkit/schemas.py
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field

from .config import SCHEMA_VERSION, VERSION
from .harness import ComparisonReport
from .knr import KnrReport
from .model import ParabolicityVerdict

Vector = Union[float, List[float]]


# ---- Graphs & Fields ----
class NodeIn(BaseModel):
    id: int
    measure: float = 1.0
    boundary: bool = False
    coords: Optional[List[int]] = None


class EdgeIn(BaseModel):
    tail: int
    head: int
    weight: float = 1.0


class GraphIn(BaseModel):
    nodes: List[NodeIn]
    edges: List[EdgeIn]
    root: Optional[int] = None


class FieldIn(BaseModel):
    values: Dict[int, Vector]


# ---- Problems ----
class ProblemIn(BaseModel):
    graph: Union[GraphIn, str]
    p: float = Field(ge=2.0)
    source: Optional[Dict[int, Vector]] = None
    dirichlet: Dict[int, Vector] = {}
    gauge: Optional[Tuple[int, Vector]] = None
    tol: Optional[float] = None
    max_iter: Optional[int] = None


# ---- Outputs ----
class OutBase(BaseModel):
    schema_version: str = SCHEMA_VERSION
    version: str = VERSION


class InequalityRowOut(BaseModel):
    p: float
    samples: int
    min_lindqvist_rel: float
    min_mhck_rel: float
    max_symmetrization_rel: float
    min_classical_gap: float
    max_p2_rel: Optional[float] = None


class InequalitySummaryOut(OutBase):
    seed: int
    dims: List[int]
    tolerance: float
    passed: bool
    rows: List[InequalityRowOut]


class ParabolicityOut(OutBase, ParabolicityVerdict):
    profile: str


class PlapOut(OutBase):
    p: float
    energy: float
    values: Dict[int, Vector]


class SolveReportOut(OutBase):
    p: float
    iterations: int
    residual: float
    energy: float
    objective: float
    converged: bool
    tolerance: float
    objective_history: List[float]
    solution: Dict[int, Vector]


class KnrReportOut(OutBase, KnrReport):
    recipe: str


class ComparisonReportOut(OutBase, ComparisonReport):
    pass


class CapacityOut(OutBase):
    family: str
    p: float
    rows: List[Tuple[int, float]]
    scaled: List[float]
    trend: Literal["vanishing", "non-vanishing"]


class DiagnosticOut(OutBase):
    command: str
    exit_code: int
    error_type: str
    message: str
