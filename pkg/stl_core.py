"""Signal Temporal Logic over sampled signals.

Formulas are immutable trees over affine predicates mu(x) = a.x + c. The
monitor maps every interval onto sample indices of a uniformly spaced signal
and evaluates spatial robustness with the usual max/min recursion.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import SpecError, SpecSyntaxError

logger = logging.getLogger(__name__)

# --- Node kinds ---
TRUE = "true"
PRED = "pred"
NOT = "not"
AND = "and"
OR = "or"
UNTIL = "until"
EVENTUALLY = "eventually"
ALWAYS = "always"

TEMPORAL_KINDS = (UNTIL, EVENTUALLY, ALWAYS)

# Slack used when interval endpoints are divided by the sample period.
WINDOW_EPS = 1e-9
UNIFORM_RTOL = 1e-9


@dataclass(frozen=True)
class Predicate:
    """Affine predicate mu(x) = a.x + c, satisfied when mu(x) >= 0."""

    a: tuple
    c: float
    label: str = field(default="", compare=False)

    def __post_init__(self):
        a = tuple(float(v) for v in np.ravel(self.a))
        c = float(self.c)
        if not a or not all(math.isfinite(v) for v in a) or not math.isfinite(c):
            raise SpecError(f"predicate '{self.label}' has non-finite coefficients")
        if not any(a):
            raise SpecError(f"predicate '{self.label}' has an all-zero coefficient vector")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)

    @property
    def dimension(self):
        return len(self.a)

    def value(self, x):
        return np.asarray(x, dtype=float) @ np.asarray(self.a) + self.c

    def negated(self):
        return Predicate(tuple(-v for v in self.a), -self.c, label=f"!{self.label}")


@dataclass(frozen=True)
class Formula:
    kind: str
    children: tuple = ()
    interval: tuple | None = None
    predicate: Predicate | None = None

    def __post_init__(self):
        if self.kind in TEMPORAL_KINDS:
            if self.interval is None or len(self.interval) != 2:
                raise SpecError(f"{self.kind} needs an interval [t1, t2]")
            t1, t2 = (float(v) for v in self.interval)
            if not (math.isfinite(t1) and math.isfinite(t2)) or t1 < 0 or t2 < t1:
                raise SpecError(f"interval [{t1}, {t2}] must satisfy 0 <= t1 <= t2 < inf")
            object.__setattr__(self, "interval", (t1, t2))
        object.__setattr__(self, "children", tuple(self.children))

    def __str__(self):
        return print_spec(self)


# --- Constructors ---

def true_():
    return Formula(TRUE)


def pred(predicate):
    return Formula(PRED, predicate=predicate)


def neg(f):
    return Formula(NOT, (f,))


def conj(children):
    children = tuple(children)
    if not children:
        raise SpecError("conjunction needs at least one operand")
    return children[0] if len(children) == 1 else Formula(AND, children)


def disj(children):
    children = tuple(children)
    if not children:
        raise SpecError("disjunction needs at least one operand")
    return children[0] if len(children) == 1 else Formula(OR, children)


def until(left, right, interval):
    return Formula(UNTIL, (left, right), interval)


def eventually(interval, f):
    return Formula(EVENTUALLY, (f,), interval)


def always(interval, f):
    return Formula(ALWAYS, (f,), interval)


def box_formula(center, widths, dims, signal_dims, name="box"):
    """Conjunction of the 2n half-spaces of an axis-aligned box.

    `dims` names the constrained dimensions, `signal_dims` the full signal
    layout the coefficient vectors are expressed in.
    """
    if not (len(center) == len(widths) == len(dims)):
        raise SpecError(f"region '{name}': center, widths and dims differ in length")
    n = len(signal_dims)
    faces = []
    for value, width, dim in zip(center, widths, dims):
        if dim not in signal_dims:
            raise SpecError(f"region '{name}': unknown signal dimension '{dim}'")
        if width <= 0:
            raise SpecError(f"region '{name}': width along '{dim}' must be positive")
        i = signal_dims.index(dim)
        a = np.zeros(n)
        a[i] = 1.0
        faces.append(pred(Predicate(a, -(value - width / 2.0), label=f"{name}.{dim}_lo")))
        faces.append(pred(Predicate(-a, value + width / 2.0, label=f"{name}.{dim}_hi")))
    return conj(faces)


# --- Structure queries ---

def predicates(f):
    """Yield every predicate in the tree, depth first."""
    if f.kind == PRED:
        yield f.predicate
    for child in f.children:
        yield from predicates(child)


def dims_used(f, signal_dims):
    """Names of the signal dimensions some predicate actually reads."""
    used = set()
    for p in predicates(f):
        used.update(signal_dims[i] for i, v in enumerate(p.a) if v != 0.0)
    return [d for d in signal_dims if d in used]


def horizon(f):
    """Time span after the anchor that robustness at the anchor depends on."""
    if f.kind in (TRUE, PRED):
        return 0.0
    if f.kind in (NOT, AND, OR):
        return max(horizon(c) for c in f.children)
    return f.interval[1] + max(horizon(c) for c in f.children)


def time_scale(f, factor):
    """Scale every temporal interval by `factor`."""
    factor = float(factor)
    if not math.isfinite(factor) or factor <= 0:
        raise SpecError(f"time scale factor must be finite and positive, got {factor}")
    if f.kind in (TRUE, PRED):
        return f
    children = tuple(time_scale(c, factor) for c in f.children)
    interval = None
    if f.interval is not None:
        interval = (f.interval[0] * factor, f.interval[1] * factor)
    return Formula(f.kind, children, interval, f.predicate)


# --- Signals ---

@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled signal; values has one row per timestamp."""

    times: np.ndarray
    values: np.ndarray
    dims: tuple = ()

    def __post_init__(self):
        times = np.array(self.times, dtype=float).ravel()
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if times.size == 0 or values.shape[0] != times.size:
            raise SpecError("signal needs one sample row per timestamp")
        if times.size > 1:
            steps = np.diff(times)
            if np.any(steps <= 0):
                raise SpecError("signal timestamps must be strictly increasing")
            if np.any(np.abs(steps - steps[0]) > UNIFORM_RTOL * max(abs(steps[0]), 1.0)):
                raise SpecError("signal timestamps must be uniformly spaced")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dims", tuple(self.dims))

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 1.0

    def __len__(self):
        return self.times.size

    def index_of(self, t):
        k = int(round((t - self.times[0]) / self.dt))
        if k < 0 or k >= len(self) or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise SpecError(f"t = {t} is not a sample time of the signal")
        return k


# --- Discrete-time semantics ---

def window_indices(interval, dt, kind):
    """Map [t1, t2] to an inclusive sample-index window (lo, hi).

    Eventually and Until round inward, Always rounds outward, so a sampled
    verdict never grants more than the continuous-time formula would.
    """
    t1, t2 = interval
    if kind == ALWAYS:
        return math.floor(t1 / dt + WINDOW_EPS), math.ceil(t2 / dt - WINDOW_EPS)
    return math.ceil(t1 / dt - WINDOW_EPS), math.floor(t2 / dt + WINDOW_EPS)


def _nonempty_window(f, dt):
    lo, hi = window_indices(f.interval, dt, f.kind)
    if lo > hi:
        raise SpecError(
            f"{f.kind} interval [{f.interval[0]}, {f.interval[1]}] rounds to an empty window at dt = {dt}"
        )
    return lo, hi


def index_horizon(f, dt):
    """Number of samples past the anchor that the formula reads."""
    if f.kind in (TRUE, PRED):
        return 0
    if f.kind in (NOT, AND, OR):
        return max(index_horizon(c, dt) for c in f.children)
    if f.kind == ALWAYS:
        lo, hi = window_indices(f.interval, dt, ALWAYS)
        if lo > hi:
            return index_horizon(f.children[0], dt)
        return hi + index_horizon(f.children[0], dt)
    _, hi = _nonempty_window(f, dt)
    return hi + max(index_horizon(c, dt) for c in f.children)


def _trace(f, values, dt):
    """Robustness at every anchor index whose window fits in `values`."""
    T = values.shape[0]
    if f.kind == TRUE:
        return np.full(T, np.inf)
    if f.kind == PRED:
        return values @ np.asarray(f.predicate.a) + f.predicate.c
    if f.kind == NOT:
        return -_trace(f.children[0], values, dt)
    if f.kind in (AND, OR):
        traces = [_trace(c, values, dt) for c in f.children]
        length = min(len(t) for t in traces)
        stacked = np.vstack([t[:length] for t in traces])
        return stacked.min(axis=0) if f.kind == AND else stacked.max(axis=0)

    if f.kind == ALWAYS:
        lo, hi = window_indices(f.interval, dt, ALWAYS)
        child = _trace(f.children[0], values, dt)
        if lo > hi:
            return np.full(len(child), np.inf)
        length = len(child) - hi
        if length <= 0:
            return np.empty(0)
        return sliding_window_view(child[lo:], hi - lo + 1)[:length].min(axis=1)

    lo, hi = _nonempty_window(f, dt)
    if f.kind == EVENTUALLY:
        child = _trace(f.children[0], values, dt)
        length = len(child) - hi
        if length <= 0:
            return np.empty(0)
        return sliding_window_view(child[lo:], hi - lo + 1)[:length].max(axis=1)

    left = _trace(f.children[0], values, dt)
    right = _trace(f.children[1], values, dt)
    length = min(len(left), len(right)) - hi
    if length <= 0:
        return np.empty(0)
    out = np.empty(length)
    for k in range(length):
        running = np.minimum.accumulate(left[k:k + hi + 1])
        out[k] = np.minimum(right[k + lo:k + hi + 1], running[lo:]).max()
    return out


def _check_dimensions(f, n):
    for p in predicates(f):
        if p.dimension != n:
            raise SpecError(
                f"predicate '{p.label}' has {p.dimension} coefficients but the signal has {n} dimensions"
            )


def robustness_trace(f, s):
    """Robustness at every sample time that still covers the formula horizon."""
    _check_dimensions(f, s.values.shape[1])
    return _trace(f, s.values, s.dt)


def robustness(f, s, t=0.0):
    """Spatial robustness of `f` on signal `s` anchored at sample time `t`."""
    _check_dimensions(f, s.values.shape[1])
    k0 = s.index_of(t)
    need = index_horizon(f, s.dt)
    if k0 + need > len(s) - 1:
        raise SpecError(
            f"signal too short: formula needs samples up to index {k0 + need}, signal has {len(s)}"
        )
    return float(_trace(f, s.values[k0:k0 + need + 1], s.dt)[0])


@dataclass(frozen=True)
class RobustnessVerdict:
    rho: float
    satisfied: bool
    boundary: bool


def evaluate(f, s, t=0.0):
    rho = robustness(f, s, t)
    if rho == 0.0:
        logger.warning("[STL] robustness is exactly zero at t=%s; reporting boundary satisfaction", t)
    return RobustnessVerdict(rho=rho, satisfied=rho >= 0.0, boundary=rho == 0.0)


def satisfies(f, s, t=0.0):
    return robustness(f, s, t) >= 0.0


# --- Concrete syntax ---

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>>=|<=|≥|≤|[!&|()\[\],+\-*])
    """,
    re.VERBOSE,
)

_OP_ALIASES = {"≥": ">=", "≤": "<="}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            line, column = _line_col(text, pos)
            raise SpecSyntaxError(f"unexpected character '{text[pos]}'", line, column)
        kind = match.lastgroup
        if kind != "ws":
            value = _OP_ALIASES.get(match.group(), match.group())
            tokens.append(_Token(kind, value, pos))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


def _line_col(text, pos):
    line = text.count("\n", 0, pos) + 1
    column = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, column


class _Parser:
    def __init__(self, text, dims, bindings):
        self.text = text
        self.dims = tuple(dims)
        self.bindings = dict(bindings or {})
        self.tokens = _tokenize(text)
        self.i = 0

    # -- token helpers --
    def peek(self, offset=0):
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at_op(self, text, offset=0):
        tok = self.peek(offset)
        return tok.kind == "op" and tok.text == text

    def error(self, message, tok=None):
        tok = tok or self.peek()
        line, column = _line_col(self.text, tok.pos)
        return SpecSyntaxError(message, line, column)

    def expect_op(self, text):
        if not self.at_op(text):
            found = self.peek().text or "end of input"
            raise self.error(f"expected '{text}' but found '{found}'")
        return self.advance()

    # -- grammar --
    def parse(self):
        f = self.or_expr()
        if self.peek().kind != "end":
            raise self.error(f"unexpected '{self.peek().text}' after complete formula")
        return f

    def or_expr(self):
        items = [self.and_expr()]
        while self.at_op("|"):
            self.advance()
            items.append(self.and_expr())
        return disj(items)

    def and_expr(self):
        items = [self.until_expr()]
        while self.at_op("&"):
            self.advance()
            items.append(self.until_expr())
        return conj(items)

    def until_expr(self):
        left = self.unary()
        tok = self.peek()
        if tok.kind == "name" and tok.text == "U" and self.at_op("[", 1):
            self.advance()
            interval = self.interval()
            return until(left, self.until_expr(), interval)
        return left

    def unary(self):
        tok = self.peek()
        if self.at_op("!"):
            self.advance()
            return neg(self.unary())
        if tok.kind == "name" and tok.text in ("F", "G") and self.at_op("[", 1):
            self.advance()
            interval = self.interval()
            child = self.unary()
            return eventually(interval, child) if tok.text == "F" else always(interval, child)
        return self.atom()

    def atom(self):
        tok = self.peek()
        if self.at_op("("):
            self.advance()
            f = self.or_expr()
            self.expect_op(")")
            return f
        if tok.kind == "name" and tok.text == "true":
            self.advance()
            return true_()
        if tok.kind == "name" and tok.text == "in_box":
            self.advance()
            name = self.advance()
            if name.kind != "name" or name.text not in self.bindings:
                raise self.error(f"unknown region '{name.text}'", name)
            return self.bindings[name.text]
        if tok.kind == "number" or self.at_op("-") or (tok.kind == "name" and tok.text in self.dims):
            return self.comparison()
        if tok.kind == "name" and tok.text in self.bindings:
            self.advance()
            return self.bindings[tok.text]
        if tok.kind == "name":
            raise self.error(f"unknown name '{tok.text}': not a signal dimension or bound predicate")
        raise self.error(f"unexpected '{tok.text or 'end of input'}'")

    def interval(self):
        start = self.expect_op("[")
        t1 = self.signed_number()
        self.expect_op(",")
        t2 = self.signed_number()
        self.expect_op("]")
        if t1 < 0 or t2 < t1:
            raise self.error(f"interval [{t1}, {t2}] must satisfy 0 <= t1 <= t2", start)
        return (t1, t2)

    def signed_number(self):
        sign = 1.0
        if self.at_op("-"):
            self.advance()
            sign = -1.0
        tok = self.advance()
        if tok.kind != "number":
            raise self.error(f"expected a number but found '{tok.text or 'end of input'}'", tok)
        return sign * float(tok.text)

    def comparison(self):
        start = self.peek()
        lhs_coeffs, lhs_const = self.linexpr()
        op = self.peek()
        if not (self.at_op(">=") or self.at_op("<=")):
            raise self.error("expected '>=' or '<=' in predicate", op)
        self.advance()
        rhs_coeffs, rhs_const = self.linexpr()
        a = np.zeros(len(self.dims))
        for name, value in lhs_coeffs.items():
            a[self.dims.index(name)] += value
        for name, value in rhs_coeffs.items():
            a[self.dims.index(name)] -= value
        c = lhs_const - rhs_const
        if op.text == "<=":
            a, c = -a, -c
        if not np.any(a):
            raise self.error("predicate does not reference any signal dimension", start)
        label = self.text[start.pos:self.peek().pos].strip()
        return pred(Predicate(a, c, label=label))

    def linexpr(self):
        coeffs = {}
        const = 0.0
        sign = 1.0
        if self.at_op("-"):
            self.advance()
            sign = -1.0
        elif self.at_op("+"):
            self.advance()
        while True:
            name, value = self.term()
            if name is None:
                const += sign * value
            else:
                coeffs[name] = coeffs.get(name, 0.0) + sign * value
            if self.at_op("+"):
                sign = 1.0
            elif self.at_op("-"):
                sign = -1.0
            else:
                return coeffs, const
            self.advance()

    def term(self):
        tok = self.advance()
        if tok.kind == "number":
            value = float(tok.text)
            if self.at_op("*"):
                self.advance()
                return self.dimension_name(), value
            return None, value
        if tok.kind == "name" and tok.text in self.dims:
            return tok.text, 1.0
        if tok.kind == "name":
            raise self.error(f"unknown signal dimension '{tok.text}'", tok)
        raise self.error(f"expected a number or dimension but found '{tok.text or 'end of input'}'", tok)

    def dimension_name(self):
        tok = self.advance()
        if tok.kind != "name" or tok.text not in self.dims:
            raise self.error(f"unknown signal dimension '{tok.text}'", tok)
        return tok.text


def parse_spec(text, dims=(), bindings=None):
    """Parse the specification grammar into a Formula.

    :param text: specification source, e.g. "F[20,25] A & G[0,5] x >= 1"
    :param dims: signal dimension names usable in inline predicates
    :param bindings: name -> Formula for named predicates / regions
    """
    if not isinstance(text, str):
        raise SpecError("specification must be text")
    return _Parser(text, dims, bindings).parse()


def _format_predicate(p, dims):
    names = list(dims) if dims else [f"s{i}" for i in range(p.dimension)]
    parts = []
    for coef, name in zip(p.a, names):
        if coef == 0.0:
            continue
        magnitude = abs(coef)
        body = name if magnitude == 1.0 else f"{magnitude!r}*{name}"
        if not parts:
            parts.append(body if coef > 0 else f"-{body}")
        else:
            parts.append(f"+ {body}" if coef > 0 else f"- {body}")
    return f"({' '.join(parts)} >= {-p.c!r})"


def _format_interval(interval):
    return f"[{interval[0]!r},{interval[1]!r}]"


def print_spec(f, dims=()):
    """Canonical text for `f`; parse_spec(print_spec(f, dims), dims) == f."""
    if f.kind == TRUE:
        return "true"
    if f.kind == PRED:
        return _format_predicate(f.predicate, dims)
    if f.kind == NOT:
        return "!" + print_spec(f.children[0], dims)
    if f.kind == AND:
        return "(" + " & ".join(print_spec(c, dims) for c in f.children) + ")"
    if f.kind == OR:
        return "(" + " | ".join(print_spec(c, dims) for c in f.children) + ")"
    if f.kind == UNTIL:
        left, right = (print_spec(c, dims) for c in f.children)
        return f"({left} U{_format_interval(f.interval)} {right})"
    op = "F" if f.kind == EVENTUALLY else "G"
    return f"{op}{_format_interval(f.interval)} {print_spec(f.children[0], dims)}"
