"""
Expression trees for regression models: parsing, printing, evaluation and
symbolic differentiation
"""
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from shared.models.data_models import Dataset
from .errors import (
    EvaluationIndexError,
    ExprError,
    ExprSyntaxError,
    JacobianError,
    NonDifferentiableError,
    UnknownFunctionError,
    UnknownIdentifierError,
)

CONST = "const"
VAR = "var"
PARAM = "param"
UNARY = "unary"
BINARY = "binary"

BINARY_OPS = ("add", "sub", "mul", "div", "pow")


@dataclass(frozen=True)
class Expr:
    """Immutable expression node.

    kind is one of const/var/param/unary/binary. Variables and parameters
    carry an index (x_k, theta_i); unary and binary nodes carry an op name
    and their children.
    """
    kind: str
    op: Optional[str] = None
    value: float = 0.0
    index: int = -1
    children: Tuple["Expr", ...] = ()
    param_set: FrozenSet[int] = field(default=frozenset(), init=False, compare=False, repr=False)
    var_set: FrozenSet[int] = field(default=frozenset(), init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == CONST:
            if not math.isfinite(self.value):
                raise ExprError(f"Constants must be finite, got {self.value}")
        elif self.kind in (VAR, PARAM):
            if self.index < 0:
                raise ExprError(f"{self.kind} index must be nonnegative, got {self.index}")
        elif self.kind == UNARY:
            if self.op != "neg" and self.op not in FUNCTIONS:
                raise ExprError(f"Unknown unary operator '{self.op}'")
            if len(self.children) != 1:
                raise ExprError("Unary node needs exactly one child")
        elif self.kind == BINARY:
            if self.op not in BINARY_OPS:
                raise ExprError(f"Unknown binary operator '{self.op}'")
            if len(self.children) != 2:
                raise ExprError("Binary node needs exactly two children")
        else:
            raise ExprError(f"Unknown node kind '{self.kind}'")

        params = frozenset([self.index]) if self.kind == PARAM else frozenset()
        variables = frozenset([self.index]) if self.kind == VAR else frozenset()
        for child in self.children:
            params |= child.param_set
            variables |= child.var_set
        object.__setattr__(self, "param_set", params)
        object.__setattr__(self, "var_set", variables)

    # constructors
    @staticmethod
    def const(value: float) -> "Expr":
        return Expr(CONST, value=float(value))

    @staticmethod
    def var(index: int) -> "Expr":
        return Expr(VAR, index=int(index))

    @staticmethod
    def param(index: int) -> "Expr":
        return Expr(PARAM, index=int(index))

    @staticmethod
    def unary(op: str, child: "Expr") -> "Expr":
        return Expr(UNARY, op=op, children=(child,))

    @staticmethod
    def binary(op: str, left: "Expr", right: "Expr") -> "Expr":
        return Expr(BINARY, op=op, children=(left, right))

    @property
    def is_const(self) -> bool:
        return self.kind == CONST

    @property
    def has_int_exponent(self) -> bool:
        """True for pow nodes whose exponent is an integer-valued constant"""
        if self.kind != BINARY or self.op != "pow":
            return False
        exponent = self.children[1]
        return exponent.is_const and float(exponent.value).is_integer()

    def __str__(self) -> str:
        return to_string(self)


# ---------------------------------------------------------------------------
# Function registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionSpec:
    """A named elementary function.

    outer_derivative(u, node) returns f'(u) as an Expr; None marks the
    function as non-differentiable.
    """
    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    outer_derivative: Optional[Callable[[Expr, Expr], Expr]]


FUNCTIONS: Dict[str, FunctionSpec] = {}


def register_function(name: str, evaluate: Callable[[np.ndarray], np.ndarray],
                      outer_derivative: Optional[Callable[[Expr, Expr], Expr]]) -> None:
    FUNCTIONS[name] = FunctionSpec(name, evaluate, outer_derivative)


register_function("exp", np.exp, lambda u, node: node)
register_function("log", np.log, lambda u, node: div(Expr.const(1.0), u))
register_function("sqrt", np.sqrt, lambda u, node: div(Expr.const(1.0), mul(Expr.const(2.0), node)))
register_function("sin", np.sin, lambda u, node: Expr.unary("cos", u))
register_function("cos", np.cos, lambda u, node: neg(Expr.unary("sin", u)))
register_function("cube", lambda a: a * a * a, lambda u, node: mul(Expr.const(3.0), power(u, Expr.const(2.0))))
register_function("cbrt", np.cbrt,
                  lambda u, node: div(Expr.const(1.0), mul(Expr.const(3.0), power(node, Expr.const(2.0)))))
register_function("abs", np.abs, None)


# ---------------------------------------------------------------------------
# Node builders with identity/annihilator folding
# ---------------------------------------------------------------------------

def _is_value(node: Expr, value: float) -> bool:
    return node.is_const and node.value == value


def _fold(op: Callable[[float, float], float], a: Expr, b: Expr) -> Optional[Expr]:
    if a.is_const and b.is_const:
        with np.errstate(all="ignore"):
            result = float(op(np.float64(a.value), np.float64(b.value)))
        if math.isfinite(result):
            return Expr.const(result)
    return None


def add(a: Expr, b: Expr) -> Expr:
    if _is_value(a, 0.0):
        return b
    if _is_value(b, 0.0):
        return a
    return _fold(lambda x, y: x + y, a, b) or Expr.binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_value(b, 0.0):
        return a
    if _is_value(a, 0.0):
        return neg(b)
    return _fold(lambda x, y: x - y, a, b) or Expr.binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_value(a, 0.0) or _is_value(b, 0.0):
        return Expr.const(0.0)
    if _is_value(a, 1.0):
        return b
    if _is_value(b, 1.0):
        return a
    return _fold(lambda x, y: x * y, a, b) or Expr.binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_value(b, 1.0):
        return a
    if _is_value(a, 0.0) and not _is_value(b, 0.0):
        return Expr.const(0.0)
    return _fold(lambda x, y: x / y, a, b) or Expr.binary("div", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _is_value(b, 1.0):
        return a
    if _is_value(b, 0.0):
        return Expr.const(1.0)
    return _fold(lambda x, y: x ** y, a, b) or Expr.binary("pow", a, b)


def neg(a: Expr) -> Expr:
    if a.is_const:
        return Expr.const(-a.value)
    return Expr.unary("neg", a)


_BUILDERS = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": power}


# ---------------------------------------------------------------------------
# Parsing (precedence climbing)
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^()\[\],])
""", re.VERBOSE)

_BINARY_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_RIGHT_ASSOC = {"^"}
_UNARY_PREC = 3
_OP_NAMES = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}
_PARAM_SHORT_RE = re.compile(r"^t(\d+)$")
_DEFAULT_VAR_RE = re.compile(r"^x(\d+)$")
_NAMED_CONSTANTS = {"pi": math.pi}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def tokenize(source: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise ExprSyntaxError(f"Unexpected character '{source[pos]}'", pos, source)
        kind = match.lastgroup
        text = match.group(kind)
        if kind != "ws":
            if text == "**":
                text = "^"
            tokens.append(_Token(kind, text, pos))
        pos = match.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: Optional[Sequence[str]]):
        self.source = source
        self.tokens = tokenize(source)
        self.idx = 0
        self.variables = {name: k for k, name in enumerate(variables)} if variables is not None else None

    def peek(self) -> _Token:
        return self.tokens[self.idx]

    def advance(self) -> _Token:
        token = self.tokens[self.idx]
        self.idx += 1
        return token

    def expect(self, text: str) -> _Token:
        token = self.advance()
        if token.text != text:
            found = token.text or "end of input"
            raise ExprSyntaxError(f"Expected '{text}' but found '{found}'", token.pos, self.source)
        return token

    def parse(self) -> Expr:
        expr = self.expression(0)
        token = self.peek()
        if token.kind != "end":
            raise ExprSyntaxError(f"Unexpected token '{token.text}'", token.pos, self.source)
        return expr

    def expression(self, min_prec: int) -> Expr:
        left = self.prefix()
        while True:
            token = self.peek()
            if token.kind != "op" or token.text not in _BINARY_PREC:
                return left
            prec = _BINARY_PREC[token.text]
            if prec < min_prec:
                return left
            self.advance()
            next_min = prec if token.text in _RIGHT_ASSOC else prec + 1
            right = self.expression(next_min)
            left = Expr.binary(_OP_NAMES[token.text], left, right)

    def prefix(self) -> Expr:
        token = self.advance()
        if token.text == "-":
            operand = self.expression(_UNARY_PREC)
            return neg(operand) if operand.is_const else Expr.unary("neg", operand)
        if token.text == "+":
            return self.expression(_UNARY_PREC)
        if token.kind == "num":
            return Expr.const(float(token.text))
        if token.text == "(":
            inner = self.expression(0)
            self.expect(")")
            return inner
        if token.kind == "ident":
            return self.identifier(token)
        found = token.text or "end of input"
        raise ExprSyntaxError(f"Unexpected token '{found}'", token.pos, self.source)

    def identifier(self, token: _Token) -> Expr:
        name = token.text
        nxt = self.peek()
        if nxt.text == "(":
            if name not in FUNCTIONS:
                raise UnknownFunctionError(name, token.pos)
            self.advance()
            argument = self.expression(0)
            self.expect(")")
            return Expr.unary(name, argument)
        if name == "theta" and nxt.text == "[":
            self.advance()
            index_token = self.advance()
            if index_token.kind != "num" or not index_token.text.isdigit():
                raise ExprSyntaxError("Parameter index must be a nonnegative integer",
                                      index_token.pos, self.source)
            self.expect("]")
            return Expr.param(int(index_token.text))
        if self.variables is not None and name in self.variables:
            return Expr.var(self.variables[name])
        short = _PARAM_SHORT_RE.match(name)
        if short:
            return Expr.param(int(short.group(1)))
        if self.variables is None:
            default_var = _DEFAULT_VAR_RE.match(name)
            if default_var:
                return Expr.var(int(default_var.group(1)))
        if name in _NAMED_CONSTANTS:
            return Expr.const(_NAMED_CONSTANTS[name])
        raise UnknownIdentifierError(name, token.pos)


def parse(source: str, variables: Optional[Sequence[str]] = None) -> Expr:
    """Parse an infix expression.

    Identifiers in `variables` become variable nodes (by position); without a
    variable list, x0, x1, ... are variables. theta[i] and t{i} are
    parameters. ^ and ** both mean power.
    """
    return _Parser(source, variables).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PRINT_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_PRINT_SYMBOL = {"add": " + ", "sub": " - ", "mul": "*", "div": "/", "pow": "^"}
_ATOM_PREC = 5


def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _prec(node: Expr) -> int:
    if node.kind == CONST:
        return _UNARY_PREC if node.value < 0 or str(node.value).startswith("-") else _ATOM_PREC
    if node.kind == BINARY:
        return _PRINT_PREC[node.op]
    if node.kind == UNARY and node.op == "neg":
        return _PRINT_PREC["neg"]
    return _ATOM_PREC


def to_string(expr: Expr, variable_names: Optional[Sequence[str]] = None) -> str:
    """Canonical infix text in the same grammar parse() accepts"""

    def render(node: Expr) -> str:
        if node.kind == CONST:
            return _format_number(node.value)
        if node.kind == VAR:
            if variable_names is not None and node.index < len(variable_names):
                return variable_names[node.index]
            return f"x{node.index}"
        if node.kind == PARAM:
            return f"theta[{node.index}]"
        if node.kind == UNARY:
            child = node.children[0]
            if node.op == "neg":
                text = render(child)
                return f"-({text})" if _prec(child) <= _UNARY_PREC else f"-{text}"
            return f"{node.op}({render(child)})"

        left, right = node.children
        prec = _PRINT_PREC[node.op]
        left_text, right_text = render(left), render(right)
        if node.op == "pow":
            wrap_left = _prec(left) <= prec
            wrap_right = _prec(right) < prec
        else:
            wrap_left = _prec(left) < prec
            wrap_right = _prec(right) <= prec
        if wrap_left:
            left_text = f"({left_text})"
        if wrap_right:
            right_text = f"({right_text})"
        return f"{left_text}{_PRINT_SYMBOL[node.op]}{right_text}"

    return render(expr)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

Compiled = Callable[[np.ndarray, np.ndarray], np.ndarray]


def compile_expr(expr: Expr) -> Compiled:
    """Build a vectorized evaluator f(theta, X) -> values for every row of X.

    Domain violations produce NaN/Inf instead of raising.
    """

    def build(node: Expr) -> Compiled:
        if node.kind == CONST:
            value = node.value
            return lambda theta, X: np.full(X.shape[0], value)
        if node.kind == VAR:
            k = node.index
            return lambda theta, X: X[:, k]
        if node.kind == PARAM:
            i = node.index
            return lambda theta, X: np.full(X.shape[0], theta[i])
        if node.kind == UNARY:
            inner = build(node.children[0])
            if node.op == "neg":
                return lambda theta, X: -inner(theta, X)
            fn = FUNCTIONS[node.op].evaluate
            return lambda theta, X: fn(inner(theta, X))
        left, right = build(node.children[0]), build(node.children[1])
        if node.op == "add":
            return lambda theta, X: left(theta, X) + right(theta, X)
        if node.op == "sub":
            return lambda theta, X: left(theta, X) - right(theta, X)
        if node.op == "mul":
            return lambda theta, X: left(theta, X) * right(theta, X)
        if node.op == "div":
            return lambda theta, X: left(theta, X) / right(theta, X)
        return lambda theta, X: np.power(left(theta, X), right(theta, X))

    body = build(expr)
    max_param = max(expr.param_set, default=-1)
    max_var = max(expr.var_set, default=-1)

    def evaluator(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if max_param >= theta.shape[0]:
            raise EvaluationIndexError(
                f"Parameter theta[{max_param}] out of bounds for vector of length {theta.shape[0]}")
        if max_var >= X.shape[1]:
            raise EvaluationIndexError(
                f"Variable x{max_var} out of bounds for {X.shape[1]} input columns")
        with np.errstate(all="ignore"):
            return np.asarray(body(theta, X), dtype=float)

    return evaluator


def evaluate_batch(expr: Expr, theta: Sequence[float], X: np.ndarray) -> np.ndarray:
    return compile_expr(expr)(np.asarray(theta, dtype=float), X)


def evaluate(expr: Expr, theta: Sequence[float], x_row: Sequence[float]) -> float:
    """f(x_row, theta) for a single input row"""
    row = np.asarray(x_row, dtype=float).reshape(1, -1)
    if row.shape[1] == 0:
        row = np.zeros((1, 0))
    return float(compile_expr(expr)(np.asarray(theta, dtype=float), row)[0])


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

def differentiate(expr: Expr, wrt_parameter: int) -> Expr:
    """Exact symbolic partial derivative with respect to theta[wrt_parameter]"""
    i = wrt_parameter

    def d(node: Expr) -> Expr:
        if i not in node.param_set:
            return Expr.const(0.0)
        if node.kind == PARAM:
            return Expr.const(1.0)
        if node.kind == UNARY:
            u = node.children[0]
            du = d(u)
            if node.op == "neg":
                return neg(du)
            spec = FUNCTIONS[node.op]
            if spec.outer_derivative is None:
                raise NonDifferentiableError(
                    f"'{node.op}' is not differentiable (theta[{i}] appears inside it)")
            return mul(spec.outer_derivative(u, node), du)

        u, v = node.children
        if node.op in ("add", "sub"):
            return _BUILDERS[node.op](d(u), d(v))
        if node.op == "mul":
            return add(mul(d(u), v), mul(u, d(v)))
        if node.op == "div":
            du, dv = d(u), d(v)
            if dv.is_const and dv.value == 0.0:
                return div(du, v)
            return sub(div(du, v), div(mul(u, dv), power(v, Expr.const(2.0))))
        # pow
        if i not in v.param_set:
            if v.is_const:
                outer = mul(Expr.const(v.value), power(u, Expr.const(v.value - 1.0)))
            else:
                outer = mul(v, power(u, sub(v, Expr.const(1.0))))
            return mul(outer, d(u))
        if i not in u.param_set:
            return mul(mul(node, Expr.unary("log", u)), d(v))
        return mul(node, add(mul(d(v), Expr.unary("log", u)), div(mul(v, d(u)), u)))

    return d(expr)


class SupportsGradients(Protocol):
    n_params: int

    @property
    def gradient_functions(self) -> List[Compiled]:
        ...


def gradient_functions(expr: Expr, n_params: int) -> List[Compiled]:
    return [compile_expr(differentiate(expr, j)) for j in range(n_params)]


def jacobian_matrix(gradients: Sequence[Compiled], theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    n = X.shape[0]
    J = np.empty((n, len(gradients)))
    for j, grad in enumerate(gradients):
        J[:, j] = np.broadcast_to(grad(theta, X), (n,))
    return J


def jacobian(model: SupportsGradients, data: Dataset, theta: Sequence[float]) -> np.ndarray:
    """n x p matrix of d f(x_k, theta) / d theta_j (derivative of the prediction)"""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] != model.n_params:
        raise EvaluationIndexError(
            f"Model has {model.n_params} parameters but theta has length {theta.shape[0]}")
    J = jacobian_matrix(model.gradient_functions, theta, data.X)
    bad = np.argwhere(~np.isfinite(J))
    if bad.size:
        raise JacobianError([(int(r), int(c)) for r, c in bad])
    return J
