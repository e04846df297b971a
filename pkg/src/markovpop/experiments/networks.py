"""Custom reaction networks from a small text format.

::

    classes = S, I
    params = beta, gamma
    reaction = -1, 1 : beta * S * I
    reaction = 0, -1 : gamma * I

Each reaction line gives the count change per class, then a rate
expression in the class proportions, the parameters and ``t``. Expressions
may use ``+ - * / **``, numbers, and ``exp``, ``log``, ``sqrt``; nothing
else is evaluated. Jacobians come from finite differences.
"""
from __future__ import annotations

import ast
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..model import ReactionNetwork

FUNCTIONS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Name, ast.Load, ast.Constant, ast.Call,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def compile_rate(expr: str, names: set[str]):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse rate {expr!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ConfigError(f"rate {expr!r}: {type(node).__name__} is not allowed")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"rate {expr!r}: only numeric constants are allowed")
        if isinstance(node, ast.Call) and not (
            isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS and not node.keywords
        ):
            raise ConfigError(f"rate {expr!r}: only {sorted(FUNCTIONS)} may be called")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in FUNCTIONS:
            raise ConfigError(f"rate {expr!r}: unknown name {node.id!r}")
    return compile(tree, "<rate>", "eval")


def parse_network(text: str, name: str = "custom") -> ReactionNetwork:
    classes = params = None
    reactions, codes = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        where = f"line {lineno}"
        if not sep:
            raise ConfigError(f"{where}: expected 'key = value'")
        if key == "classes":
            classes = tuple(s.strip() for s in value.split(","))
        elif key == "params":
            params = tuple(s.strip() for s in value.split(","))
        elif key == "reaction":
            if classes is None or params is None:
                raise ConfigError(f"{where}: declare classes and params before reactions")
            change, colon, expr = value.partition(":")
            if not colon:
                raise ConfigError(f"{where}: reaction needs 'changes : rate'")
            try:
                vec = [int(c) for c in change.split(",")]
            except ValueError:
                raise ConfigError(f"{where}: count changes must be integers") from None
            if len(vec) != len(classes):
                raise ConfigError(f"{where}: {len(vec)} changes for {len(classes)} classes")
            try:
                codes.append(compile_rate(expr.strip(), {*classes, *params, "t"}))
            except ConfigError as exc:
                raise ConfigError(f"{where}: {exc}") from None
            reactions.append(vec)
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
    if not reactions:
        raise ConfigError("network has no reactions")

    def rates(x, theta, t):
        x = np.asarray(x, dtype=float)
        env = {c: x[..., j] for j, c in enumerate(classes)}
        env.update(zip(params, np.asarray(theta, dtype=float)))
        env.update(FUNCTIONS, t=t)
        shape = x.shape[:-1]
        return np.stack(
            [np.broadcast_to(eval(code, {"__builtins__": {}}, env), shape) for code in codes],
            axis=-1,
        )

    return ReactionNetwork(
        class_names=classes,
        param_names=params,
        reactions=reactions,
        rates=rates,
        name=name,
    )


def load_network(path) -> ReactionNetwork:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read network file {path}: {exc}") from None
    try:
        return parse_network(text, path.stem)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
