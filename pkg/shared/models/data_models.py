from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


@dataclass
class Dataset:
    """Regression data: n observations of m input variables plus a target"""
    X: np.ndarray
    y: np.ndarray
    columns: List[str]
    target: str = "y"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        if self.X.ndim != 2:
            raise ValueError("X must be a two-dimensional matrix")
        if self.X.shape[0] < 1:
            raise ValueError("Dataset must contain at least one observation")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]} entries")
        if len(self.columns) != self.X.shape[1]:
            raise ValueError(f"{len(self.columns)} column names for {self.X.shape[1]} input columns")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("Dataset entries must be finite")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


@dataclass
class FitOptions:
    """Levenberg-Marquardt settings"""
    tol_f: float = 1e-10
    tol_x: float = 1e-8
    max_iters: int = 200
    grad_tol: float = 1e-12


@dataclass
class ProfileOptions:
    """Likelihood-profile sampling settings.

    tau_max overrides the cut-off derived from tau_max_level when set.
    """
    step: float = 8.0
    k_max: int = 30
    tau_max_level: float = 0.01
    max_restarts: int = 10
    tau_max: Optional[float] = None

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.k_max < 2:
            raise ValueError(f"k_max must be at least 2, got {self.k_max}")
        if not 0 < self.tau_max_level < 1:
            raise ValueError(f"tau_max_level must lie in (0, 1), got {self.tau_max_level}")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be nonnegative")


@dataclass
class ReportWarning:
    """Advisory condition attached to a report, keyed by a machine-readable code"""
    code: str
    message: str
    context: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "context": self.context}


@dataclass
class AnalysisConfig:
    """Everything one CLI run needs"""
    expression: Optional[str] = None
    expression_file: Optional[str] = None
    data_path: Optional[str] = None
    target: Optional[str] = None
    variables: List[str] = field(default_factory=list)
    target_transform: str = "none"
    alphas: List[float] = field(default_factory=lambda: [0.05])
    profile: ProfileOptions = field(default_factory=ProfileOptions)
    optimizer: FitOptions = field(default_factory=FitOptions)
    points: Optional[str] = None
    contour_alphas: List[float] = field(default_factory=lambda: [0.2, 0.5])
    contour_steps: int = 100
    pairs: Optional[List[Tuple[int, int]]] = None
    output_dir: str = "output"
    output_formats: List[str] = field(default_factory=lambda: ["json", "csv"])
    max_workers: int = 4
    log_level: str = "INFO"
    seed: Optional[int] = None


@dataclass
class ParameterRow:
    """One line of the parameter table"""
    index: int
    estimate: float
    se: float
    linear_lower: Optional[float] = None
    linear_upper: Optional[float] = None
    profile_lower: Optional[float] = None
    profile_upper: Optional[float] = None
    bounded_lower: bool = True
    bounded_upper: bool = True


@dataclass
class Report:
    """Fit summary in the maximum-likelihood fit-report layout"""
    model: str
    parameterized_model: str
    n: int
    p: int
    ssr: float
    s2: float
    converged: bool
    iterations: int
    parameters: List[ParameterRow] = field(default_factory=list)
    correlation: List[List[float]] = field(default_factory=list)
    fixed_constants: List[Tuple[int, float]] = field(default_factory=list)
    warnings: List[ReportWarning] = field(default_factory=list)
    files: List[str] = field(default_factory=list)
    intervals: List[Dict[str, Any]] = field(default_factory=list)
    unavailable_contours: List[Dict[str, Any]] = field(default_factory=list)

    def warn(self, code: str, message: str, **context) -> ReportWarning:
        warning = ReportWarning(code, message, dict(context))
        self.warnings.append(warning)
        return warning
