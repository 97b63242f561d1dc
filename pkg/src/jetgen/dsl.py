"""Expression language for defining smooth maps on open boxes.

Grammar (EBNF, whitespace-insensitive)::

    program  = "map" "(" varlist ")" [ "on" boxspec ] "->" "(" exprlist ")" ;
    varlist  = IDENT { "," IDENT } ;
    boxspec  = clause { "," clause } ;
    clause   = ( IDENT | "all" ) "in" "(" bound "," bound ")" ;
    bound    = NUMBER | "-inf" | "inf" | "+inf" ;
    exprlist = expr { "," expr } ;
    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = ("-" | "+") unary | power ;
    power    = atom [ "^" [ "-" ] INT ] ;
    atom     = NUMBER | IDENT | FUNC "(" expr ")" | "(" expr ")" ;
    FUNC     = "sin" | "cos" | "exp" | "log" | "sqrt" ;

Every parseable map is smooth on its (open box) domain; partial primitives
(division, log, sqrt) raise at evaluation time on bad inputs and are rejected
at parse time when their argument is a constant that is invalid everywhere.
Evaluation is overloaded: points (or batches of points) give values, jet
inputs give truncated Taylor expansions of the map.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .errors import DomainError, DslSyntaxError, EvaluationError, ShapeError
from .jets import JetPoly, JetTuple, identity_jets

__all__ = ["Box", "MapProgram", "parse_map", "pretty", "compose", "program_from_exprs",
           "Num", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Call"]

FUNCS = ("sin", "cos", "exp", "log", "sqrt")

_JET_FUNCS = {
    "sin": jets.jet_sin,
    "cos": jets.jet_cos,
    "exp": jets.jet_exp,
    "log": jets.jet_log,
    "sqrt": jets.jet_sqrt,
}

_NUM_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
}


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class Sub:
    left: object
    right: object


@dataclass(frozen=True)
class Mul:
    left: object
    right: object


@dataclass(frozen=True)
class Div:
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Box:
    """Product of open intervals; +-inf entries mean unbounded."""

    bounds: tuple

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not lo < hi:
                raise DomainError(f"empty interval ({lo}, {hi})")

    @property
    def n(self):
        return len(self.bounds)

    @classmethod
    def unbounded(cls, n):
        return cls(tuple((-math.inf, math.inf) for _ in range(n)))

    def is_unbounded(self):
        return all(lo == -math.inf and hi == math.inf for lo, hi in self.bounds)

    def contains(self, point):
        point = np.asarray(point, dtype=float)
        for i, (lo, hi) in enumerate(self.bounds):
            if not np.all((point[i] > lo) & (point[i] < hi)):
                return False
        return True

    def contains_closed_box(self, rect):
        """True iff the closed box ``rect`` (list of (lo, hi)) lies inside."""
        if len(rect) != self.n:
            return False
        for (lo, hi), (blo, bhi) in zip(rect, self.bounds):
            if not (lo > blo and hi < bhi and lo <= hi):
                return False
        return True


# ---------------------------------------------------------------------------
# tokenizer


_TOKEN_RE = re.compile(r"""
    (?P<num>(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>->|[-+*/^(),])
  | (?P<ws>\s+)
  | (?P<bad>.)
""", re.VERBOSE)


def _tokenize(text):
    line, col = 1, 1
    out = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        tok = m.group()
        if kind == "bad":
            raise DslSyntaxError(f"unexpected character {tok!r}", line, col)
        if kind != "ws":
            out.append((kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
    out.append(("eof", "", line, col))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0
        self.var_index = {}

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg, tok=None):
        kind, text, line, col = tok or self.peek()
        shown = text if text else "end of input"
        raise DslSyntaxError(f"{msg}, found {shown!r}", line, col)

    def expect(self, text):
        kind, tok, line, col = self.peek()
        if tok != text:
            self.fail(f"expected {text!r}")
        return self.next()

    def accept(self, text):
        if self.peek()[1] == text:
            self.next()
            return True
        return False

    # -- grammar ---------------------------------------------------------

    def program(self):
        kind, tok, line, col = self.peek()
        if tok != "map":
            self.fail("expected 'map'")
        self.next()
        self.expect("(")
        names = [self.ident("variable name")]
        while self.accept(","):
            names.append(self.ident("variable name"))
        self.expect(")")
        for i, name in enumerate(names):
            if name in self.var_index:
                self.fail(f"duplicate variable {name!r}")
            if name in FUNCS or name == "map":
                kind, _, line, col = self.toks[self.i - 1]
                raise DslSyntaxError(f"{name!r} is reserved", line, col)
            self.var_index[name] = i

        bounds = {i: (-math.inf, math.inf) for i in range(len(names))}
        if self.accept("on"):
            self.box_clause(bounds, names)
            while self.accept(","):
                self.box_clause(bounds, names)
        self.expect("->")
        self.expect("(")
        exprs = [self.expr()]
        while self.accept(","):
            exprs.append(self.expr())
        self.expect(")")
        kind, tok, line, col = self.peek()
        if kind != "eof":
            self.fail("unexpected trailing input")
        box = Box(tuple(bounds[i] for i in range(len(names))))
        return tuple(names), box, tuple(exprs)

    def ident(self, what):
        kind, tok, line, col = self.peek()
        if kind != "ident":
            self.fail(f"expected {what}")
        self.next()
        return tok

    def box_clause(self, bounds, names):
        kind, tok, line, col = self.peek()
        name = self.ident("variable name or 'all'")
        if name != "all" and name not in self.var_index:
            raise DslSyntaxError(f"unknown variable {name!r} in domain clause", line, col)
        kw = self.ident("'in'")
        if kw != "in":
            raise DslSyntaxError("expected 'in' after domain variable", line, col)
        self.expect("(")
        lo = self.bound()
        self.expect(",")
        hi = self.bound()
        self.expect(")")
        if not lo < hi:
            raise DslSyntaxError(f"empty interval ({lo}, {hi})", line, col)
        targets = range(len(names)) if name == "all" else [self.var_index[name]]
        for t in targets:
            bounds[t] = (lo, hi)

    def bound(self):
        sign = 1.0
        if self.accept("-"):
            sign = -1.0
        elif self.accept("+"):
            sign = 1.0
        kind, tok, line, col = self.peek()
        if kind == "ident" and tok == "inf":
            self.next()
            return sign * math.inf
        if kind != "num":
            self.fail("expected a number or 'inf'")
        self.next()
        return sign * float(tok)

    def expr(self):
        node = self.term()
        while True:
            if self.accept("+"):
                node = Add(node, self.term())
            elif self.accept("-"):
                node = Sub(node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            if self.accept("*"):
                node = Mul(node, self.unary())
            elif self.accept("/"):
                node = Div(node, self.unary())
            else:
                return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self):
        node = self.atom()
        if self.accept("^"):
            sign = -1 if self.accept("-") else 1
            kind, tok, line, col = self.peek()
            if kind != "num" or not re.fullmatch(r"\d+", tok):
                self.fail("expected an integer exponent after '^'")
            self.next()
            node = Pow(node, sign * int(tok))
        return node

    def atom(self):
        kind, tok, line, col = self.peek()
        if kind == "num":
            self.next()
            return Num(float(tok))
        if kind == "ident":
            self.next()
            if tok in FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok, arg)
            if tok in self.var_index:
                return Var(self.var_index[tok], tok)
            raise DslSyntaxError(f"unknown identifier {tok!r}", line, col)
        if tok == "(":
            self.next()
            node = self.expr()
            self.expect(")")
            return node
        self.fail("expected a number, variable, function call, or '('")


# ---------------------------------------------------------------------------
# static checks: constant subexpressions that are undefined everywhere


def _const_value(node):
    """Value of a constant expression, or None if it involves variables."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return None
    if isinstance(node, Neg):
        v = _const_value(node.arg)
        return None if v is None else -v
    if isinstance(node, (Add, Sub, Mul, Div)):
        a, b = _const_value(node.left), _const_value(node.right)
        if isinstance(node, Div) and b is not None and b == 0.0:
            raise DslSyntaxError("division by the constant 0", 1, 1)
        if a is None or b is None:
            return None
        if isinstance(node, Add):
            return a + b
        if isinstance(node, Sub):
            return a - b
        if isinstance(node, Mul):
            return a * b
        return a / b
    if isinstance(node, Pow):
        v = _const_value(node.base)
        if v is None:
            return None
        if v == 0.0 and node.exponent < 0:
            raise DslSyntaxError("zero raised to a negative power", 1, 1)
        return v ** node.exponent
    if isinstance(node, Call):
        v = _const_value(node.arg)
        if v is None:
            return None
        if node.func == "log" and v <= 0.0:
            raise DslSyntaxError("log of a non-positive constant", 1, 1)
        if node.func == "sqrt" and v < 0.0:
            raise DslSyntaxError("sqrt of a negative constant", 1, 1)
        return float(_NUM_FUNCS[node.func](v))
    raise TypeError(f"not an AST node: {node!r}")


def _check_statically_defined(node):
    if isinstance(node, (Num, Var)):
        return
    if isinstance(node, Neg):
        _check_statically_defined(node.arg)
    elif isinstance(node, (Add, Sub, Mul, Div)):
        _check_statically_defined(node.left)
        _check_statically_defined(node.right)
    elif isinstance(node, Pow):
        _check_statically_defined(node.base)
    elif isinstance(node, Call):
        _check_statically_defined(node.arg)
    _const_value(node)  # raises on constant-undefined subtrees


# ---------------------------------------------------------------------------
# evaluation


def _eval_node(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.index]
    if isinstance(node, Neg):
        return -_eval_node(node.arg, env)
    if isinstance(node, Add):
        return _eval_node(node.left, env) + _eval_node(node.right, env)
    if isinstance(node, Sub):
        return _eval_node(node.left, env) - _eval_node(node.right, env)
    if isinstance(node, Mul):
        return _eval_node(node.left, env) * _eval_node(node.right, env)
    if isinstance(node, Div):
        num = _eval_node(node.left, env)
        den = _eval_node(node.right, env)
        if isinstance(den, JetPoly):
            return num / den  # raises EvaluationError on zero constant term
        den = np.asarray(den, dtype=float)
        if np.any(den == 0.0):
            raise EvaluationError("division by zero")
        return num / den
    if isinstance(node, Pow):
        base = _eval_node(node.base, env)
        if isinstance(base, JetPoly):
            return base ** node.exponent
        base = np.asarray(base, dtype=float)
        if node.exponent < 0 and np.any(base == 0.0):
            raise EvaluationError("zero raised to a negative power")
        return base ** node.exponent
    if isinstance(node, Call):
        arg = _eval_node(node.arg, env)
        if isinstance(arg, JetPoly):
            return _JET_FUNCS[node.func](arg)
        arg = np.asarray(arg, dtype=float)
        if node.func == "log" and np.any(arg <= 0.0):
            raise EvaluationError("log of a non-positive value")
        if node.func == "sqrt" and np.any(arg < 0.0):
            raise EvaluationError("sqrt of a negative value")
        return _NUM_FUNCS[node.func](arg)
    raise TypeError(f"not an AST node: {node!r}")


# ---------------------------------------------------------------------------
# MapProgram


@dataclass(frozen=True)
class MapProgram:
    """Compiled evaluator of a smooth map on an open box domain.

    ``constraints`` carries domain conditions inherited through composition:
    expressions over this program's variables that must land in the recorded
    open interval for a point to be admissible.
    """

    var_names: tuple
    domain: Box
    exprs: tuple
    constraints: tuple = field(default=())

    def __post_init__(self):
        if self.domain.n != len(self.var_names):
            raise ShapeError("domain arity does not match variable list")
        for e in self.exprs:
            _check_statically_defined(e)

    @property
    def n_in(self):
        return len(self.var_names)

    @property
    def n_out(self):
        return len(self.exprs)

    # -- domain ----------------------------------------------------------

    def _check_point(self, point):
        if not self.domain.contains(point):
            raise DomainError(
                f"point outside the open domain of map({', '.join(self.var_names)})")
        for expr, lo, hi in self.constraints:
            v = _eval_node(expr, point)
            if not np.all((v > lo) & (v < hi)):
                raise DomainError("point violates a composed domain constraint")

    # -- evaluation ------------------------------------------------------

    def __call__(self, point):
        """Value at a single point (shape (n_in,)); returns shape (n_out,)."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.n_in,):
            raise ShapeError(f"expected a point of shape ({self.n_in},)")
        self._check_point(point)
        return np.array([_eval_node(e, point) for e in self.exprs], dtype=float)

    def eval_batch(self, points):
        """Values at many points; ``points`` has shape (B, n_in)."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.n_in:
            raise ShapeError(f"expected points of shape (B, {self.n_in})")
        env = points.T
        self._check_point(env)
        cols = [np.broadcast_to(np.asarray(_eval_node(e, env), dtype=float),
                                (points.shape[0],))
                for e in self.exprs]
        return np.stack(cols, axis=1)

    def eval_jets(self, jt: JetTuple) -> JetTuple:
        """Jet of the map composed with the input jets."""
        if jt.n_out != self.n_in:
            raise ShapeError(f"expected {self.n_in} input jet components")
        self._check_point(jt.values())
        comps = []
        for e in self.exprs:
            v = _eval_node(e, jt.components)
            if not isinstance(v, JetPoly):
                v = jets.constant_jet(v, jt.n_vars, jt.order, jt.base_point,
                                      batch_shape=jt.batch_shape)
            comps.append(v)
        return JetTuple(comps)

    def jet_at(self, point, order) -> JetTuple:
        """r-jet of the map at a point (or at a batch of points (n, B))."""
        return self.eval_jets(identity_jets(point, order))

    def jacobian(self, point):
        """Derivative matrix at one point or a batch (n, B) of points."""
        jt = self.jet_at(point, 1)
        return jets.derivative_matrix(jt)

    # -- presentation ------------------------------------------------------

    def pretty(self):
        return pretty(self)


def parse_map(src: str) -> MapProgram:
    """Parse DSL source into a MapProgram.

    Raises DslSyntaxError (with line/column) on malformed input, unknown
    identifiers, or constant subexpressions undefined on the whole domain.
    """
    names, box, exprs = _Parser(src).program()
    return MapProgram(names, box, exprs)


def program_from_exprs(var_names, exprs, domain=None, constraints=()):
    """Construct a MapProgram directly from AST expressions."""
    var_names = tuple(var_names)
    domain = Box.unbounded(len(var_names)) if domain is None else domain
    return MapProgram(var_names, domain, tuple(exprs), tuple(constraints))


# ---------------------------------------------------------------------------
# pretty printer (canonical form; reparses to a structurally equal program)


_PREC = {"add": 1, "mul": 2, "unary": 3, "pow": 4, "atom": 5}


def _fmt_num(v):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _print_expr(node, parent_prec=0):
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        if node.value < 0 and parent_prec > _PREC["add"]:
            return f"({s})"
        return s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = _print_expr(node.arg, _PREC["unary"])
        s = f"-{inner}"
        return f"({s})" if parent_prec > _PREC["add"] else s
    if isinstance(node, (Add, Sub)):
        # right operand printed one level tighter so the parse tree of the
        # output always matches the tree being printed
        op = "+" if isinstance(node, Add) else "-"
        left = _print_expr(node.left, _PREC["add"])
        right = _print_expr(node.right, _PREC["add"] + 1)
        s = f"{left} {op} {right}"
        return f"({s})" if parent_prec > _PREC["add"] else s
    if isinstance(node, (Mul, Div)):
        op = "*" if isinstance(node, Mul) else "/"
        left = _print_expr(node.left, _PREC["mul"])
        right = _print_expr(node.right, _PREC["mul"] + 1)
        s = f"{left}{op}{right}"
        return f"({s})" if parent_prec > _PREC["mul"] else s
    if isinstance(node, Pow):
        base = _print_expr(node.base, _PREC["pow"] + 1)
        exp = node.exponent if node.exponent >= 0 else f"-{-node.exponent}"
        s = f"{base}^{exp}"
        return f"({s})" if parent_prec > _PREC["pow"] else s
    if isinstance(node, Call):
        return f"{node.func}({_print_expr(node.arg, 0)})"
    raise TypeError(f"not an AST node: {node!r}")


def pretty(program: MapProgram) -> str:
    """Canonical source text for a program (ignores composition constraints)."""
    head = f"map ({', '.join(program.var_names)})"
    clauses = []
    for name, (lo, hi) in zip(program.var_names, program.domain.bounds):
        if lo != -math.inf or hi != math.inf:
            clauses.append(f"{name} in ({_fmt_num(lo)}, {_fmt_num(hi)})")
    on = f" on {', '.join(clauses)}" if clauses else ""
    body = ", ".join(_print_expr(e, 0) for e in program.exprs)
    return f"{head}{on} -> ({body})"


# ---------------------------------------------------------------------------
# composition (AST substitution)


def _substitute(node, replacements):
    if isinstance(node, Num):
        return node
    if isinstance(node, Var):
        return replacements[node.index]
    if isinstance(node, Neg):
        return Neg(_substitute(node.arg, replacements))
    if isinstance(node, Add):
        return Add(_substitute(node.left, replacements), _substitute(node.right, replacements))
    if isinstance(node, Sub):
        return Sub(_substitute(node.left, replacements), _substitute(node.right, replacements))
    if isinstance(node, Mul):
        return Mul(_substitute(node.left, replacements), _substitute(node.right, replacements))
    if isinstance(node, Div):
        return Div(_substitute(node.left, replacements), _substitute(node.right, replacements))
    if isinstance(node, Pow):
        return Pow(_substitute(node.base, replacements), node.exponent)
    if isinstance(node, Call):
        return Call(node.func, _substitute(node.arg, replacements))
    raise TypeError(f"not an AST node: {node!r}")


def compose(outer: MapProgram, inner: MapProgram) -> MapProgram:
    """outer o inner as a single program on inner's domain.

    Bounded coordinate intervals of the outer domain become evaluation-time
    constraints on the substituted expressions, so domain honesty survives
    composition.
    """
    if outer.n_in != inner.n_out:
        raise ShapeError(
            f"cannot compose: outer expects {outer.n_in} inputs, "
            f"inner produces {inner.n_out}")
    repl = inner.exprs
    exprs = tuple(_substitute(e, repl) for e in outer.exprs)
    constraints = list(inner.constraints)
    for i, (lo, hi) in enumerate(outer.domain.bounds):
        if lo != -math.inf or hi != math.inf:
            constraints.append((inner.exprs[i], lo, hi))
    for expr, lo, hi in outer.constraints:
        constraints.append((_substitute(expr, repl), lo, hi))
    return MapProgram(inner.var_names, inner.domain, exprs, tuple(constraints))
