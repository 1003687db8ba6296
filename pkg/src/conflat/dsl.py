"""Expression language and immersion specifications.

Grammar (recursive descent, standard precedence with right-associative ``^``
binding tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | atom ('^' factor)?
    atom   := number | ident | ident '(' expr ')' | '(' expr (',' expr)* ')'

A parenthesized comma list at top level is the vector constructor.  The
function whitelist is fixed to the elementary jet functions; any other
identifier is a domain variable (``u1``, ``u2``, ``u3``) or a named parameter
bound by the spec.

Immersion documents are line oriented::

    name = "cone_clifford"
    domain_dim = 3
    ambient = EUC4
    components = "(u1*a*cos(u2), u1*a*sin(u2), u1*b*cos(u3), u1*b*sin(u3))"
    box = [0.8, 1.2; 0.1, 1.3; 0.1, 1.3]
    params = {a: 0.7071067811865476, b: 0.7071067811865476}
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .errors import JetDomainError, ParseError, SpecError

AMBIENTS = {"EUC3": 3, "SPH3": 4, "HYP3": 3, "EUC4": 4}

_VAR_NAMES = ("u1", "u2", "u3")


# --- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Var:
    index: int  # 0-based


@dataclass(frozen=True)
class Unary:
    func: str  # elementary function name or "neg"
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^
    lhs: "Expr"
    rhs: "Expr"


Expr = Const | Param | Var | Unary | Binary


# --- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
  | (?P<ws>\s+)
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | end
    text: str
    line: int
    col: int


def tokenize(text):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            tokens.append(Token(kind, tok, line, col))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
    tokens.append(Token("end", "", line, col))
    return tokens


# --- parser -------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        self.i += 1

    def expect(self, text, expected):
        if self.tok.kind == "op" and self.tok.text == text:
            self.advance()
            return
        raise ParseError(f"unexpected token {self.tok.text or 'end of input'!r}",
                         self.tok.line, self.tok.col, expected)

    def parse_vector(self):
        """Top-level entry: a vector constructor or a single expression."""
        if self.tok.kind == "op" and self.tok.text == "(":
            # look ahead: a paren list with commas at depth 1 is a vector
            depth = 0
            has_comma = False
            for t in self.tokens[self.i:]:
                if t.kind == "op" and t.text == "(":
                    depth += 1
                elif t.kind == "op" and t.text == ")":
                    depth -= 1
                    if depth == 0:
                        break
                elif t.kind == "op" and t.text == "," and depth == 1:
                    has_comma = True
            if has_comma:
                self.advance()
                comps = [self.parse_expr()]
                while self.tok.kind == "op" and self.tok.text == ",":
                    self.advance()
                    comps.append(self.parse_expr())
                self.expect(")", (")", ","))
                self.finish()
                return comps
        comps = [self.parse_expr()]
        self.finish()
        return comps

    def finish(self):
        if self.tok.kind != "end":
            raise ParseError(f"trailing input {self.tok.text!r}",
                             self.tok.line, self.tok.col, ("end of input",))

    def parse_expr(self):
        node = self.parse_term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.advance()
            node = Binary(op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.advance()
            node = Binary(op, node, self.parse_factor())
        return node

    def parse_factor(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Unary("neg", self.parse_factor())
        node = self.parse_atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return Binary("^", node, self.parse_factor())
        return node

    def parse_atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Const(float(t.text))
        if t.kind == "ident":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                if t.text not in jets.FUNCTIONS:
                    raise ParseError(f"unknown function {t.text!r}",
                                     t.line, t.col,
                                     tuple(sorted(jets.FUNCTIONS)))
                self.advance()
                arg = self.parse_expr()
                self.expect(")", (")",))
                return Unary(t.text, arg)
            if t.text in _VAR_NAMES:
                return Var(_VAR_NAMES.index(t.text))
            if re.fullmatch(r"u\d+", t.text):
                raise ParseError(f"unbound variable {t.text!r}", t.line, t.col,
                                 _VAR_NAMES)
            return Param(t.text)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect(")", (")",))
            return node
        raise ParseError(f"unexpected token {t.text or 'end of input'!r}",
                         t.line, t.col, ("number", "identifier", "("))


def parse_expression(text):
    p = _Parser(tokenize(text))
    node = p.parse_expr()
    p.finish()
    return node


def parse_components(text):
    """Parse a vector constructor (or single expression) into a list of ASTs."""
    return _Parser(tokenize(text)).parse_vector()


# --- printing / traversal -----------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def format_expr(e, parent_prec=0):
    if isinstance(e, Const):
        s = repr(e.value)
        return s[:-2] if s.endswith(".0") else s
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Var):
        return _VAR_NAMES[e.index]
    if isinstance(e, Unary):
        if e.func == "neg":
            inner = format_expr(e.arg, _PREC["neg"])
            s = f"-{inner}"
            return f"({s})" if parent_prec > _PREC["neg"] else s
        return f"{e.func}({format_expr(e.arg)})"
    if isinstance(e, Binary):
        prec = _PREC[e.op]
        # left-assoc except ^; emit parens whenever the child binds no tighter
        lhs = format_expr(e.lhs, prec if e.op != "^" else prec + 1)
        rhs = format_expr(e.rhs, prec + 1 if e.op != "^" else prec)
        s = f"{lhs} {e.op} {rhs}" if e.op != "^" else f"{lhs}{e.op}{rhs}"
        return f"({s})" if prec < parent_prec else s
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e):
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Unary):
        return free_variables(e.arg)
    if isinstance(e, Binary):
        return free_variables(e.lhs) | free_variables(e.rhs)
    return set()


def free_parameters(e):
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, Unary):
        return free_parameters(e.arg)
    if isinstance(e, Binary):
        return free_parameters(e.lhs) | free_parameters(e.rhs)
    return set()


def substitute(e, mapping):
    """Replace ``Var(i)`` nodes by expressions, ``{index: Expr}``."""
    if isinstance(e, Var):
        return mapping.get(e.index, e)
    if isinstance(e, Unary):
        return Unary(e.func, substitute(e.arg, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.lhs, mapping),
                      substitute(e.rhs, mapping))
    return e


def shift_variables(e, offset):
    """Renumber every variable index by ``offset`` (for product builders)."""
    if isinstance(e, Var):
        return Var(e.index + offset)
    if isinstance(e, Unary):
        return Unary(e.func, shift_variables(e.arg, offset))
    if isinstance(e, Binary):
        return Binary(e.op, shift_variables(e.lhs, offset),
                      shift_variables(e.rhs, offset))
    return e


# --- evaluation ----------------------------------------------------------------

def _eval(e, env):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Param):
        try:
            return env["params"][e.name]
        except KeyError:
            raise SpecError(f"unbound parameter {e.name!r}")
    if isinstance(e, Var):
        try:
            return env["vars"][e.index]
        except IndexError:
            raise SpecError(f"variable u{e.index + 1} exceeds domain dimension")
    if isinstance(e, Unary):
        v = _eval(e.arg, env)
        if e.func == "neg":
            return -v
        return jets.elementary(e.func, v)
    if isinstance(e, Binary):
        a = _eval(e.lhs, env)
        b = _eval(e.rhs, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
        if e.op == "^":
            if isinstance(b, jets.Jet):
                if np.any(b.c[1:] != 0.0):
                    # genuinely variable exponent: a^b = exp(b log a)
                    return jets.exp(b * jets.log(a))
                b = b.value
            # constant integer exponents keep negative bases legal
            if _is_int(b):
                return jets.pow_int(a, int(b)) if isinstance(a, jets.Jet) \
                    else float(a) ** int(b)
            return jets.pow_real(a, b)
    raise TypeError(f"not an expression node: {e!r}")


def _is_int(x):
    return float(x).is_integer()


def evaluate_expr_jet(e, point, order, params=None, nvars=None):
    point = np.asarray(point, dtype=float)
    nvars = nvars or len(point)
    env = {
        "vars": [jets.make_variable(i, point[i], nvars, order)
                 for i in range(nvars)],
        "params": dict(params or {}),
    }
    out = _eval(e, env)
    if not isinstance(out, jets.Jet):
        out = jets.make_constant(out, nvars, order)
    return out


def evaluate_expr_value(e, point, params=None):
    env = {"vars": list(np.asarray(point, dtype=float)),
           "params": dict(params or {})}
    return float(_eval(e, env))


# --- immersion specs -----------------------------------------------------------

@dataclass(frozen=True)
class ImmersionSpec:
    """Validated description of a parametrized immersion."""

    name: str
    domain_dim: int
    ambient: str
    components: tuple
    box: tuple  # ((lo, hi), ...) one interval per variable
    params: dict = field(default_factory=dict)

    @property
    def n_components(self):
        return len(self.components)

    def component_texts(self):
        return tuple(format_expr(c) for c in self.components)


@dataclass(frozen=True)
class DomainViolation:
    point: tuple
    reason: str


def make_immersion(name, domain_dim, ambient, components, box, params=None,
                   validate=True):
    """Build and validate a spec; ``components`` may be text or a list of ASTs."""
    if isinstance(components, str):
        comps = parse_components(components)
    else:
        comps = list(components)
    params = dict(params or {})
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if ambient not in AMBIENTS:
        raise SpecError(f"unknown ambient {ambient!r}; one of "
                        f"{sorted(AMBIENTS)}")
    if domain_dim not in (2, 3):
        raise SpecError(f"domain_dim must be 2 or 3, got {domain_dim}")
    if len(comps) != AMBIENTS[ambient]:
        raise SpecError(
            f"{ambient} needs {AMBIENTS[ambient]} components, got {len(comps)}")
    if len(box) != domain_dim:
        raise SpecError(f"box needs {domain_dim} intervals, got {len(box)}")
    for lo, hi in box:
        if not lo < hi:
            raise SpecError(f"empty box interval [{lo}, {hi}]")
    for c in comps:
        fv = free_variables(c)
        if fv and max(fv) >= domain_dim:
            raise SpecError(
                f"unbound variable u{max(fv) + 1} in component "
                f"{format_expr(c)!r} (domain_dim = {domain_dim})")
        missing = free_parameters(c) - set(params)
        if missing:
            raise SpecError(f"unbound parameters {sorted(missing)} in "
                            f"component {format_expr(c)!r}")
    spec = ImmersionSpec(name, domain_dim, ambient, tuple(comps), box, params)
    if validate:
        _validate_ambient(spec)
    return spec


def _sample_grid(spec, n=5):
    axes = [np.linspace(lo, hi, n) for lo, hi in spec.box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _validate_ambient(spec):
    if spec.ambient == "SPH3":
        for p in _sample_grid(spec):
            vals = [evaluate_expr_value(c, p, spec.params)
                    for c in spec.components]
            norm2 = sum(v * v for v in vals)
            if abs(norm2 - 1.0) > 1e-10:
                raise SpecError(
                    f"SPH3 image leaves the unit sphere at {tuple(p)}: "
                    f"|u|^2 = {norm2!r}")
    elif spec.ambient == "HYP3":
        for p in _sample_grid(spec):
            x3 = evaluate_expr_value(spec.components[2], p, spec.params)
            if x3 <= 0.0:
                raise SpecError(
                    f"HYP3 image leaves the upper half space at {tuple(p)}: "
                    f"x3 = {x3!r}")


def validate_domain(spec, point):
    """Check box membership and ambient constraints at one point.

    Returns ``None`` when valid, otherwise a :class:`DomainViolation`.
    """
    point = tuple(float(x) for x in point)
    if len(point) != spec.domain_dim:
        return DomainViolation(point, "point dimension mismatch")
    for x, (lo, hi) in zip(point, spec.box):
        if not lo <= x <= hi:
            return DomainViolation(point,
                                   f"coordinate {x!r} outside [{lo}, {hi}]")
    try:
        if spec.ambient == "SPH3":
            vals = [evaluate_expr_value(c, point, spec.params)
                    for c in spec.components]
            norm2 = sum(v * v for v in vals)
            if abs(norm2 - 1.0) > 1e-10:
                return DomainViolation(point, f"|u|^2 = {norm2!r} != 1")
        elif spec.ambient == "HYP3":
            x3 = evaluate_expr_value(spec.components[2], point, spec.params)
            if x3 <= 0.0:
                return DomainViolation(point, f"x3 = {x3!r} <= 0")
    except (JetDomainError, SpecError) as exc:
        return DomainViolation(point, str(exc))
    return None


def evaluate_jets(spec, point, order):
    """One jet per component, expanded at ``point``."""
    point = np.asarray(point, dtype=float)
    violation = validate_domain(spec, point)
    if violation is not None:
        raise SpecError(f"invalid evaluation point: {violation.reason}")
    out = []
    for idx, comp in enumerate(spec.components):
        try:
            out.append(evaluate_expr_jet(comp, point, order, spec.params,
                                         nvars=spec.domain_dim))
        except JetDomainError as exc:
            raise JetDomainError(
                exc.func, exc.value,
                f"component {idx}: {exc}") from exc
    return out


def evaluate_values(spec, point):
    return np.array([evaluate_expr_value(c, point, spec.params)
                     for c in spec.components])


# --- document format -------------------------------------------------------------

_KEY_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(.+?)\s*$")


def parse_immersion(text):
    """Parse a line-oriented key/value immersion document."""
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _KEY_RE.match(line)
        if m is None:
            raise ParseError("expected 'key = value'", lineno, 1)
        fields[m.group(1)] = m.group(2)
    missing = {"name", "domain_dim", "ambient", "components", "box"} - set(fields)
    if missing:
        raise SpecError(f"immersion document missing keys: {sorted(missing)}")

    def unquote(s):
        s = s.strip()
        if len(s) >= 2 and s[0] == '"' and s[-1] == '"':
            return s[1:-1]
        return s

    name = unquote(fields["name"])
    domain_dim = int(fields["domain_dim"])
    ambient = unquote(fields["ambient"])
    comp_text = unquote(fields["components"])

    box_text = fields["box"].strip()
    if not (box_text.startswith("[") and box_text.endswith("]")):
        raise SpecError(f"box must look like [lo,hi; lo,hi]: {box_text!r}")
    box = []
    for part in box_text[1:-1].split(";"):
        nums = [float(x) for x in part.split(",")]
        if len(nums) != 2:
            raise SpecError(f"box interval needs two endpoints: {part!r}")
        box.append(tuple(nums))

    params = {}
    if "params" in fields:
        ptext = fields["params"].strip()
        if not (ptext.startswith("{") and ptext.endswith("}")):
            raise SpecError(f"params must look like {{a: 0.5}}: {ptext!r}")
        body = ptext[1:-1].strip()
        if body:
            for item in body.split(","):
                key, _, val = item.partition(":")
                if not _:
                    raise SpecError(f"bad params entry {item!r}")
                params[key.strip()] = float(val)

    return make_immersion(name, domain_dim, ambient, comp_text, box, params)


def spec_to_text(spec):
    lines = [
        f'name = "{spec.name}"',
        f"domain_dim = {spec.domain_dim}",
        f"ambient = {spec.ambient}",
        f'components = "({", ".join(spec.component_texts())})"',
        "box = [" + "; ".join(f"{lo!r}, {hi!r}" for lo, hi in spec.box) + "]",
    ]
    if spec.params:
        inner = ", ".join(f"{k}: {v!r}" for k, v in sorted(spec.params.items()))
        lines.append("params = {" + inner + "}")
    return "\n".join(lines) + "\n"


def load_spec(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_immersion(fh.read())
