"""
Parameterized models: literal-to-parameter rewriting, identifiability
diagnostics and the re-parameterization used for prediction intervals
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

from shared.models.data_models import Dataset
from . import expr_core as ec
from .errors import ExprError, ReparameterizationError
from .expr_core import BINARY, CONST, PARAM, UNARY, VAR, Expr

if TYPE_CHECKING:
    from .nls_fit import FitResult

logger = logging.getLogger(__name__)

HIGH_CORRELATION = 0.999
LARGE_RELATIVE_SE = 1e3
RANK_DEFICIENT_MESSAGE = "rank-deficient Jacobian: model over-parameterized"


@dataclass(frozen=True, eq=False)
class ParamModel:
    """An expression whose parameters theta[0..p-1] are to be estimated.

    fixed_constants lists (literal position, value) for literals kept as
    numbers; positions count numeric literals left to right.
    """
    expr: Expr
    theta0: np.ndarray
    n_vars: int
    fixed_constants: Tuple[Tuple[int, float], ...] = ()
    variable_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        theta0 = np.asarray(self.theta0, dtype=float).reshape(-1)
        object.__setattr__(self, "theta0", theta0)
        if not np.all(np.isfinite(theta0)):
            raise ExprError("Initial parameter values must be finite")
        expected = set(range(theta0.shape[0]))
        if set(self.expr.param_set) != expected:
            raise ExprError(f"Parameter indices {sorted(self.expr.param_set)} do not match "
                            f"0..{theta0.shape[0] - 1}")
        if self.expr.var_set and max(self.expr.var_set) >= self.n_vars:
            raise ExprError(f"Expression uses x{max(self.expr.var_set)} but model has {self.n_vars} variables")

    @property
    def n_params(self) -> int:
        return int(self.theta0.shape[0])

    @property
    def is_zero_parameter(self) -> bool:
        return self.n_params == 0

    @cached_property
    def predictor(self) -> ec.Compiled:
        return ec.compile_expr(self.expr)

    @cached_property
    def gradient_functions(self) -> List[ec.Compiled]:
        return ec.gradient_functions(self.expr, self.n_params)

    def predict(self, theta: Sequence[float], X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return np.broadcast_to(self.predictor(np.asarray(theta, dtype=float), X), (X.shape[0],))

    def jacobian_at(self, theta: Sequence[float], X: np.ndarray) -> np.ndarray:
        """Jacobian on raw inputs without the finiteness check"""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return ec.jacobian_matrix(self.gradient_functions, np.asarray(theta, dtype=float), X)

    def with_expr(self, expr: Expr, theta0: Sequence[float]) -> "ParamModel":
        return ParamModel(expr, np.asarray(theta0, dtype=float), self.n_vars,
                          self.fixed_constants, self.variable_names)

    def to_string(self) -> str:
        return ec.to_string(self.expr, self.variable_names)

    def substituted(self, theta: Optional[Sequence[float]] = None) -> Expr:
        """The expression with parameters replaced by numeric values"""
        values = self.theta0 if theta is None else np.asarray(theta, dtype=float)
        return substitute(self.expr, params={i: float(v) for i, v in enumerate(values)})


def substitute(expr: Expr, params: Optional[Dict[int, float]] = None,
               variables: Optional[Dict[int, float]] = None) -> Expr:
    """Replace parameter and/or variable nodes by constants"""
    params = params or {}
    variables = variables or {}

    def walk(node: Expr) -> Expr:
        if node.kind == PARAM and node.index in params:
            return Expr.const(params[node.index])
        if node.kind == VAR and node.index in variables:
            return Expr.const(variables[node.index])
        if node.children:
            return Expr(node.kind, op=node.op, children=tuple(walk(c) for c in node.children))
        return node

    return walk(expr)


# ---------------------------------------------------------------------------
# Literal rewriting
# ---------------------------------------------------------------------------

def _carries_literal_scale(term: Expr) -> bool:
    if term.is_const:
        return True
    if term.kind == UNARY and term.op == "neg":
        return _carries_literal_scale(term.children[0])
    if term.kind == BINARY and term.op in ("mul", "div"):
        left, right = term.children
        if left.is_const or right.is_const:
            return True
        if term.op == "mul":
            return _carries_literal_scale(left) or _carries_literal_scale(right)
        return _carries_literal_scale(left)
    return False


def _additive_terms(node: Expr) -> List[Expr]:
    if node.kind == BINARY and node.op in ("add", "sub"):
        return _additive_terms(node.children[0]) + _additive_terms(node.children[1])
    if node.kind == UNARY and node.op == "neg":
        return _additive_terms(node.children[0])
    return [node]


def _is_scaled_sum(node: Expr) -> bool:
    if not (node.kind == BINARY and node.op in ("add", "sub")):
        return False
    return all(_carries_literal_scale(term) for term in _additive_terms(node))


def mul_add_pattern(node: Expr) -> bool:
    """True for literal * (sum of literal-scaled terms), or the same with /.

    Parameterizing the outer literal would only add a redundant scale.
    """
    if node.kind != BINARY or node.op not in ("mul", "div"):
        return False
    left, right = node.children
    if left.is_const and _is_scaled_sum(right):
        return True
    return right.is_const and _is_scaled_sum(left)


def parameterize(expr: Expr, variable_names: Optional[Sequence[str]] = None,
                 n_vars: Optional[int] = None) -> ParamModel:
    """Replace numeric literals by parameters theta[0..p-1] left to right.

    Literals kept as numbers: the literal child of a mul_add_pattern node
    (recorded in fixed_constants) and integer exponents of ^.
    """
    if expr.param_set:
        raise ExprError("Expression already contains parameters")

    values: List[float] = []
    fixed: List[Tuple[int, float]] = []
    literal_position = [0]

    def rewrite(node: Expr, can_replace: bool) -> Expr:
        if node.kind == CONST:
            position = literal_position[0]
            literal_position[0] += 1
            if can_replace:
                values.append(node.value)
                return Expr.param(len(values) - 1)
            fixed.append((position, node.value))
            return node
        if node.kind in (VAR, PARAM):
            return node
        if node.has_int_exponent:
            base = rewrite(node.children[0], True)
            literal_position[0] += 1
            return Expr.binary("pow", base, node.children[1])
        suppress = mul_add_pattern(node)
        children = tuple(rewrite(child, not (child.is_const and suppress)) for child in node.children)
        return Expr(node.kind, op=node.op, children=children)

    rewritten = rewrite(expr, True)
    if n_vars is None:
        n_vars = len(variable_names) if variable_names is not None else max(expr.var_set, default=-1) + 1
    model = ParamModel(rewritten, np.asarray(values, dtype=float), n_vars, tuple(fixed),
                       tuple(variable_names) if variable_names is not None else None)
    if model.is_zero_parameter:
        logger.warning("Expression has no numeric literals to parameterize")
    for position, value in fixed:
        logger.info(f"Literal #{position} ({value}) kept fixed: scales an already parameterized sum")
    return model


# ---------------------------------------------------------------------------
# Identifiability diagnostics
# ---------------------------------------------------------------------------

@dataclass
class IdentifiabilityReport:
    relative_se: np.ndarray
    corr: np.ndarray
    high_correlation: List[Tuple[int, int, float]] = field(default_factory=list)
    large_relative_se: List[int] = field(default_factory=list)
    zero_estimates: List[int] = field(default_factory=list)
    rank_deficient: bool = False
    deficient_params: List[int] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def suspicious(self) -> bool:
        return bool(self.high_correlation or self.large_relative_se or self.rank_deficient)


def check_identifiability(model: ParamModel, data: Dataset,
                          fit: Optional["FitResult"] = None) -> IdentifiabilityReport:
    """Advisory check for redundant parameters based on se and correlations"""
    if fit is None:
        from .nls_fit import fit as run_fit
        fit = run_fit(model, data, model.theta0)

    theta = fit.theta_hat
    with np.errstate(divide="ignore", invalid="ignore"):
        relative = np.where(theta != 0, fit.se / np.abs(theta), np.inf)
    report = IdentifiabilityReport(relative_se=relative, corr=fit.corr.copy())

    for i in range(fit.p):
        if theta[i] == 0.0:
            report.zero_estimates.append(i)
        elif relative[i] > LARGE_RELATIVE_SE:
            report.large_relative_se.append(i)
        for j in range(i):
            c = fit.corr[i, j]
            if np.isfinite(c) and abs(c) > HIGH_CORRELATION:
                report.high_correlation.append((j, i, float(c)))

    if fit.rank_deficient:
        report.rank_deficient = True
        report.deficient_params = list(fit.deficient_params)
        report.error = RANK_DEFICIENT_MESSAGE
        logger.warning(f"{RANK_DEFICIENT_MESSAGE} (parameters {report.deficient_params})")
    for j, i, c in report.high_correlation:
        logger.warning(f"theta[{j}] and theta[{i}] are strongly correlated (corr={c:.6f})")
    for i in report.large_relative_se:
        logger.warning(f"theta[{i}] has a standard error {relative[i]:.3g} times its estimate")
    return report


# ---------------------------------------------------------------------------
# Re-parameterization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Reparameterization:
    """Model rewritten so that theta'[pivot] is the prediction at x0"""
    base: ParamModel
    pivot_parameter: int
    anchor_point: np.ndarray
    new_expr: Expr
    theta_prime0: np.ndarray
    pivot_solution: Expr

    def base_theta(self, theta_prime: Sequence[float]) -> np.ndarray:
        """Original parameter vector matching a re-parameterized one"""
        theta_prime = np.asarray(theta_prime, dtype=float)
        theta = theta_prime.copy()
        row = np.zeros((1, max(self.base.n_vars, 1)))
        theta[self.pivot_parameter] = ec.evaluate_batch(self.pivot_solution, theta_prime, row)[0]
        return theta

    @cached_property
    def model(self) -> ParamModel:
        return self.base.with_expr(self.new_expr, self.theta_prime0)


_PURE_OPS = {"add", "sub", "mul", "div", "neg"}
_INVERTIBLE_UNARY = {"neg", "exp", "log", "sqrt", "cube", "cbrt"}


def _occurrences(expr: Expr) -> Dict[int, int]:
    counts: Dict[int, int] = {}

    def walk(node: Expr) -> None:
        if node.kind == PARAM:
            counts[node.index] = counts.get(node.index, 0) + 1
        for child in node.children:
            walk(child)

    walk(expr)
    return counts


def _path_to(expr: Expr, index: int) -> List[Tuple[Expr, int]]:
    """(node, child position) pairs from the root down to theta[index]"""
    path = []
    node = expr
    while node.kind != PARAM:
        for position, child in enumerate(node.children):
            if index in child.param_set:
                path.append((node, position))
                node = child
                break
    return path


def _step_invertible(node: Expr, position: int) -> bool:
    if node.kind == UNARY:
        return node.op in _INVERTIBLE_UNARY
    if node.op == "pow":
        exponent = node.children[1]
        if position == 0:
            return exponent.is_const and exponent.value == 3.0
        return True
    return True


def _invert(path: List[Tuple[Expr, int]], target: Expr, x0: Dict[int, float]) -> Expr:
    """Solve node(...) = target for the pivot leaf by peeling the path"""
    for node, position in path:
        if node.kind == UNARY:
            op = node.op
            if op == "neg":
                target = ec.neg(target)
            elif op == "exp":
                target = Expr.unary("log", target)
            elif op == "log":
                target = Expr.unary("exp", target)
            elif op == "sqrt":
                target = Expr.binary("pow", target, Expr.const(2.0))
            elif op == "cube":
                target = Expr.unary("cbrt", target)
            else:
                target = Expr.unary("cube", target)
            continue

        sibling = substitute(node.children[1 - position], variables=x0)
        op = node.op
        if op == "add":
            target = ec.sub(target, sibling)
        elif op == "sub":
            target = ec.add(target, sibling) if position == 0 else ec.sub(sibling, target)
        elif op == "mul":
            target = ec.div(target, sibling)
        elif op == "div":
            target = ec.mul(target, sibling) if position == 0 else ec.div(sibling, target)
        elif position == 0:
            target = Expr.unary("cbrt", target)
        else:
            target = ec.div(Expr.unary("log", target), Expr.unary("log", sibling))
    return target


def _replace_param(expr: Expr, index: int, replacement: Expr) -> Expr:
    if expr.kind == PARAM and expr.index == index:
        return replacement
    if index not in expr.param_set:
        return expr
    return Expr(expr.kind, op=expr.op,
                children=tuple(_replace_param(c, index, replacement) for c in expr.children))


def _candidates(model: ParamModel) -> List[Tuple[int, List[Tuple[Expr, int]]]]:
    ranked = []
    for index, count in _occurrences(model.expr).items():
        if count != 1:
            continue
        path = _path_to(model.expr, index)
        if not all(_step_invertible(node, position) for node, position in path):
            continue
        pure = all(node.op in _PURE_OPS for node, _ in path)
        ranked.append(((0 if pure else 1, len(path), index), index, path))
    ranked.sort(key=lambda item: item[0])
    return [(index, path) for _, index, path in ranked]


def _close(a: float, b: float, tol: float) -> bool:
    return np.isfinite(a) and abs(a - b) <= tol * max(1.0, abs(b))


def reparameterize(model: ParamModel, theta_hat: Sequence[float], x0: Sequence[float]) -> Reparameterization:
    """Rewrite the model so one parameter equals its prediction at x0.

    The pivot keeps its index; the other parameters keep their values.
    Raises ReparameterizationError when no parameter can be isolated.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    anchor = {k: float(v) for k, v in enumerate(x0)}
    y_hat = float(model.predict(theta_hat, x0.reshape(1, -1))[0])
    if not np.isfinite(y_hat):
        raise ReparameterizationError(f"no extractable parameter: prediction at {x0.tolist()} is not finite")

    for pivot, path in _candidates(model):
        try:
            solution = _invert(path, Expr.param(pivot), anchor)
            new_expr = _replace_param(model.expr, pivot, solution)
        except ExprError:
            continue
        theta_prime = theta_hat.copy()
        theta_prime[pivot] = y_hat

        recovered = ec.evaluate_batch(solution, theta_prime, np.zeros((1, max(model.n_vars, 1))))[0]
        if not _close(float(recovered), float(theta_hat[pivot]), 1e-8):
            continue
        at_anchor = float(ec.evaluate_batch(new_expr, theta_prime, x0.reshape(1, -1))[0])
        if not _close(at_anchor, y_hat, 1e-10):
            continue
        logger.debug(f"Pivot theta[{pivot}] at x0={x0.tolist()}")
        return Reparameterization(model, pivot, x0, new_expr, theta_prime, solution)

    raise ReparameterizationError()
