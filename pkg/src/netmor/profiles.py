"""Closed-form input profiles encoded as small JSON expression trees.

Grammar::

    expr := number | "t"
          | {"op": "add"|"sub"|"mul"|"div"|"mod"|"min"|"max", "args": [expr, ...]}
          | {"op": "exp"|"cos"|"sin"|"abs"|"neg", "arg": expr}
          | {"op": "piecewise", "breaks": [b1, ..., bk], "pieces": [expr0, ..., exprk]}

``piecewise`` selects ``pieces[i]`` on ``[b_i, b_{i+1})`` with ``b_0 = -inf``
and ``b_{k+1} = +inf``. Binary ``sub``/``div``/``mod`` fold left over their
arguments. ``mod`` follows the sign convention of :func:`numpy.mod`.
"""
from __future__ import annotations

import math

import numpy as np


class ProfileError(ValueError):
    """Malformed profile expression."""


_NARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "mod": np.mod,
    "min": np.minimum,
    "max": np.maximum,
}
_UNARY = {"exp": np.exp, "cos": np.cos, "sin": np.sin, "abs": np.abs, "neg": np.negative}


def validate_profile(expr) -> None:
    """Raise :class:`ProfileError` if ``expr`` does not follow the grammar."""
    if isinstance(expr, bool):
        raise ProfileError("booleans are not valid profile expressions")
    if isinstance(expr, (int, float)):
        if not math.isfinite(expr):
            raise ProfileError("non-finite constant")
        return
    if expr == "t":
        return
    if not isinstance(expr, dict) or "op" not in expr:
        raise ProfileError(f"cannot interpret {expr!r}")
    op = expr["op"]
    if op in _NARY:
        args = expr.get("args")
        if not isinstance(args, list) or len(args) < (1 if op in ("add", "mul", "min", "max") else 2):
            raise ProfileError(f"{op!r} needs a list of arguments")
        for a in args:
            validate_profile(a)
    elif op in _UNARY:
        if "arg" not in expr:
            raise ProfileError(f"{op!r} needs an 'arg'")
        validate_profile(expr["arg"])
    elif op == "piecewise":
        breaks, pieces = expr.get("breaks"), expr.get("pieces")
        if not isinstance(breaks, list) or not isinstance(pieces, list):
            raise ProfileError("piecewise needs 'breaks' and 'pieces' lists")
        if len(pieces) != len(breaks) + 1:
            raise ProfileError("piecewise needs len(pieces) == len(breaks) + 1")
        if any(b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
            raise ProfileError("piecewise breaks must be strictly increasing")
        for p in pieces:
            validate_profile(p)
    else:
        raise ProfileError(f"unknown operator {op!r}")


def evaluate_profile(expr, t):
    """Evaluate ``expr`` at time(s) ``t`` (same unit as the breaks/constants)."""
    t = np.asarray(t, dtype=float)
    return _eval(expr, t) + np.zeros_like(t)


def _eval(expr, t):
    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        return np.float64(expr)
    if expr == "t":
        return t
    op = expr["op"]
    if op in _NARY:
        vals = [_eval(a, t) for a in expr["args"]]
        out = vals[0]
        for v in vals[1:]:
            out = _NARY[op](out, v)
        return out
    if op in _UNARY:
        return _UNARY[op](_eval(expr["arg"], t))
    if op == "piecewise":
        idx = np.searchsorted(np.asarray(expr["breaks"], dtype=float), t, side="right")
        pieces = [_eval(p, t) + np.zeros_like(t) for p in expr["pieces"]]
        return np.choose(idx, pieces)
    raise ProfileError(f"unknown operator {op!r}")


class Profile:
    """A validated expression with a time unit (seconds per unit of ``t``)."""

    def __init__(self, expr, time_unit_seconds: float = 1.0):
        validate_profile(expr)
        if not time_unit_seconds > 0:
            raise ProfileError("time unit must be positive")
        self.expr = expr
        self.time_unit = float(time_unit_seconds)

    def __call__(self, t_seconds):
        return evaluate_profile(self.expr, np.asarray(t_seconds, dtype=float) / self.time_unit)


# helpers for building expressions in code

def add(*a):
    return {"op": "add", "args": list(a)}


def sub(*a):
    return {"op": "sub", "args": list(a)}


def mul(*a):
    return {"op": "mul", "args": list(a)}


def div(*a):
    return {"op": "div", "args": list(a)}


def mod(*a):
    return {"op": "mod", "args": list(a)}


def unary(op, a):
    return {"op": op, "arg": a}


def piecewise(breaks, pieces):
    return {"op": "piecewise", "breaks": list(breaks), "pieces": list(pieces)}
