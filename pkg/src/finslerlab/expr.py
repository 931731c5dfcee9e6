r"""Minimal arithmetic expression grammar for config fields.

Hand-written tokenizer and recursive-descent parser; no external expression
engine.  Grammar:

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          (right-associative)
    atom   := NUMBER | FUNC '(' expr ')' | NAME | '(' expr ')'

with FUNC in {sin, cos, exp, ln}, NAME in {pi, x1, x2, x3, y1, y2, y3}.
Compiled expressions evaluate on jets or plain numpy arrays alike, so the
same config field supplies values and every derivative order downstream.
"""

from __future__ import annotations

import numpy as np

from . import jets
from .errors import ConfigError

_FUNCS = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp, "ln": jets.log}
_NAMES = ("pi", "x1", "x2", "x3", "y1", "y2", "y3")


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_e = False
            while j < n and (text[j].isdigit() or text[j] == "." or text[j] in "eE"
                             or (seen_e and text[j] in "+-" and text[j - 1] in "eE")):
                if text[j] in "eE":
                    seen_e = True
                j += 1
            try:
                val = float(text[i:j])
            except ValueError:
                raise ConfigError(f"bad numeric literal {text[i:j]!r} at column {i + 1}")
            tokens.append(("num", val, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        raise ConfigError(f"unexpected character {c!r} at column {i + 1} of {text!r}")
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            raise ConfigError(
                f"expected {kind!r} but found {tok[1]!r} at column {tok[2] + 1} of {self.text!r}"
            )
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ConfigError(
                f"unexpected trailing {tok[1]!r} at column {tok[2] + 1} of {self.text!r}"
            )
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            rhs = self.unary()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self):
        if self.peek()[0] == "-":
            self.take()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            expo = self.unary()
            return ("pow", base, expo)
        return base

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            return ("num", tok[1])
        if tok[0] == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if tok[0] == "name":
            self.take()
            name = tok[1]
            if name in _FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return ("call", name, arg)
            if name in _NAMES:
                return ("var", name)
            raise ConfigError(
                f"unknown name {name!r} at column {tok[2] + 1} of {self.text!r} "
                f"(allowed: {', '.join(_NAMES)}, {', '.join(_FUNCS)})"
            )
        raise ConfigError(
            f"unexpected {tok[1]!r} at column {tok[2] + 1} of {self.text!r}"
        )


def parse_expression(text):
    """Parse to an AST; raises ConfigError with column diagnostics."""
    return _Parser(text).parse()


def _const_value(node):
    if node[0] == "num":
        return node[1]
    if node[0] == "neg":
        v = _const_value(node[1])
        return None if v is None else -v
    if node[0] == "var" and node[1] == "pi":
        return np.pi
    return None


def evaluate(node, env):
    """Evaluate an AST against env mapping x1..y3 to jets or arrays."""
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        if node[1] == "pi":
            return np.pi
        return env[node[1]]
    if kind == "neg":
        return -evaluate(node[1], env)
    if kind == "add":
        return evaluate(node[1], env) + evaluate(node[2], env)
    if kind == "sub":
        return evaluate(node[1], env) - evaluate(node[2], env)
    if kind == "mul":
        return evaluate(node[1], env) * evaluate(node[2], env)
    if kind == "div":
        return evaluate(node[1], env) / evaluate(node[2], env)
    if kind == "pow":
        base = evaluate(node[1], env)
        cv = _const_value(node[2])
        if cv is not None and float(cv).is_integer() and cv >= 0:
            if isinstance(base, jets.Jet):
                return base ** int(cv)
            return base ** int(cv)
        expo = cv if cv is not None else evaluate(node[2], env)
        return jets.power(base, expo)
    if kind == "call":
        return _FUNCS[node[1]](evaluate(node[2], env))
    raise ConfigError(f"bad AST node {kind!r}")


def compile_expression(text, uses_direction=None):
    """Compile to fn(xs, ys) plus a flag telling whether y-names occur."""
    ast = parse_expression(text)
    names = set()

    def scan(node):
        if node[0] == "var":
            names.add(node[1])
        for child in node[1:]:
            if isinstance(child, tuple):
                scan(child)

    scan(ast)
    direction_dependent = any(n in names for n in ("y1", "y2", "y3"))

    def fn(xs, ys=None):
        env = {"x1": xs[0], "x2": xs[1], "x3": xs[2]}
        if ys is not None:
            env.update({"y1": ys[0], "y2": ys[1], "y3": ys[2]})
        elif direction_dependent:
            raise ConfigError(f"expression {text!r} needs a direction argument")
        return evaluate(ast, env)

    return fn, direction_dependent
