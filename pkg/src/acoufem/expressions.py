"""Analytic expression mini-language for boundary/load/initial data.

Grammar: reals, + - * / ^ (right-assoc), unary minus, parentheses, the
functions sin cos tan exp sqrt abs, the constant pi, and the variables
x y z t f.  Precedence: ^  >  unary -  >  * /  >  + -.  Parsing is a
plain recursive descent; every diagnostic carries a character offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ExpressionDomainError, ExpressionParseError

FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "sqrt": math.sqrt,
    "abs": abs,
}
CONSTANTS = {"pi": math.pi}
VARIABLES = ("x", "y", "z", "t", "f")

# AST nodes: ("num", v) ("var", name) ("neg", a) ("bin", op, a, b)
# ("call", fname, a)


@dataclass(frozen=True)
class Expression:
    """Compiled expression over the variables x, y, z, t, f."""

    source: str
    root: tuple

    def __call__(self, **bindings) -> float:
        return evaluate_expression(self, **bindings)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str, offset: int | None = None):
        raise ExpressionParseError(
            message, self.pos if offset is None else offset
        )

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> tuple:
        self.skip_ws()
        if self.pos >= len(self.text):
            self.error("empty expression")
        node = self.sum_expr()
        self.skip_ws()
        if self.pos < len(self.text):
            self.error(f"unexpected '{self.text[self.pos]}'")
        return node

    def sum_expr(self) -> tuple:
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            node = ("bin", op, node, self.term())
        return node

    def term(self) -> tuple:
        node = self.unary()
        while self.peek() in ("*", "/"):
            op = self.text[self.pos]
            self.pos += 1
            node = ("bin", op, node, self.unary())
        return node

    def unary(self) -> tuple:
        if self.peek() == "-":
            self.pos += 1
            return ("neg", self.unary())
        return self.power()

    def power(self) -> tuple:
        node = self.atom()
        if self.peek() == "^":
            self.pos += 1
            # right-associative; unary allowed in the exponent
            return ("bin", "^", node, self.unary())
        return node

    def atom(self) -> tuple:
        ch = self.peek()
        if not ch:
            self.error("unexpected end of expression")
        if ch == "(":
            open_at = self.pos
            self.pos += 1
            node = self.sum_expr()
            if self.peek() != ")":
                self.error("unbalanced parenthesis", open_at)
            self.pos += 1
            return node
        if ch.isdigit() or ch == ".":
            return self.number()
        if ch.isalpha():
            return self.identifier()
        self.error(f"unexpected '{ch}'")

    def number(self) -> tuple:
        start = self.pos
        text = self.text
        while self.pos < len(text) and (text[self.pos].isdigit() or text[self.pos] == "."):
            self.pos += 1
        if self.pos < len(text) and text[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(text) and text[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(text) and text[self.pos].isdigit():
                while self.pos < len(text) and text[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark  # bare 'e' is not an exponent
        try:
            return ("num", float(text[start : self.pos]))
        except ValueError:
            self.error(f"bad number '{text[start:self.pos]}'", start)

    def identifier(self) -> tuple:
        start = self.pos
        text = self.text
        while self.pos < len(text) and (text[self.pos].isalnum() or text[self.pos] == "_"):
            self.pos += 1
        name = text[start : self.pos]
        if name in CONSTANTS:
            return ("num", CONSTANTS[name])
        if name in VARIABLES:
            return ("var", name)
        if name in FUNCTIONS:
            if self.peek() != "(":
                self.error(f"function '{name}' needs an argument list", start)
            self.pos += 1
            arg = self.sum_expr()
            if self.peek() != ")":
                self.error("unbalanced parenthesis", start)
            self.pos += 1
            return ("call", name, arg)
        self.error(f"unknown identifier '{name}'", start)


def parse_expression(text: str) -> Expression:
    """Compile ``text``; raises :class:`ExpressionParseError` with the
    character offset of the problem."""
    return Expression(text, _Parser(text).parse())


def _eval(node: tuple, env: dict[str, float]) -> float:
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return env[node[1]]
    if tag == "neg":
        return -_eval(node[1], env)
    if tag == "call":
        arg = _eval(node[2], env)
        try:
            return FUNCTIONS[node[1]](arg)
        except ValueError as err:
            raise ExpressionDomainError(
                f"{node[1]}({arg:g}) is undefined"
            ) from err
        except OverflowError as err:
            raise ExpressionDomainError(
                f"{node[1]}({arg:g}) overflows"
            ) from err
    op = node[1]
    a = _eval(node[2], env)
    b = _eval(node[3], env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise ExpressionDomainError(f"division by zero ({a:g}/0)")
        return a / b
    # op == "^"
    try:
        out = a**b
    except (OverflowError, ZeroDivisionError) as err:
        raise ExpressionDomainError(f"{a:g}^{b:g} is undefined") from err
    if isinstance(out, complex):
        raise ExpressionDomainError(f"{a:g}^{b:g} is not real")
    return out


def evaluate_expression(
    e: Expression,
    x: float = 0.0,
    y: float = 0.0,
    z: float = 0.0,
    t: float = 0.0,
    f: float = 0.0,
) -> float:
    """Evaluate at the given variable bindings; always returns a finite
    float or raises :class:`ExpressionDomainError` naming the bindings."""
    env = {"x": x, "y": y, "z": z, "t": t, "f": f}
    try:
        value = float(_eval(e.root, env))
    except ExpressionDomainError as err:
        raise ExpressionDomainError(
            f"{err} in '{e.source}' at "
            + ", ".join(f"{k}={v:g}" for k, v in env.items())
        ) from err
    if not math.isfinite(value):
        raise ExpressionDomainError(
            f"'{e.source}' is not finite at "
            + ", ".join(f"{k}={v:g}" for k, v in env.items())
        )
    return value
