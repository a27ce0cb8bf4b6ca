"""Parser for one-sided-additive model formulas such as ``s ~ l + x1``.

Grammar (whitespace-insensitive)::

    formula    := name "~" rhs
    rhs        := "1" | name ("+" name)*
    name       := [a-z_][a-z0-9_]*

An intercept is always included.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import DuplicatePredictorError, FormulaSyntaxError, ResponseInPredictorsError

__all__ = ["ModelSpec", "parse_formula"]

_TOKEN = re.compile(r"\s*(?:(?P<name>[a-z_][a-z0-9_]*)|(?P<one>1)|(?P<op>[~+]))")


@dataclass(frozen=True)
class ModelSpec:
    response: str
    predictors: tuple = ()
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        if len(set(self.predictors)) != len(self.predictors):
            dup = sorted({p for p in self.predictors if self.predictors.count(p) > 1})
            raise DuplicatePredictorError(f"predictor(s) listed twice: {', '.join(dup)}")
        if self.response in self.predictors:
            raise ResponseInPredictorsError(f"response {self.response!r} also appears as a predictor")

    @property
    def columns(self) -> tuple:
        return (self.response,) + self.predictors

    def __str__(self):
        rhs = " + ".join(self.predictors) if self.predictors else "1"
        return f"{self.response} ~ {rhs}"


def _tokens(text):
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            return
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = len(text) - len(text[pos:].lstrip())
            raise FormulaSyntaxError(text, start, f"unexpected character {text[start]!r}")
        kind = m.lastgroup
        yield kind, m.group(kind), m.start(kind)
        pos = m.end()


def parse_formula(text: str) -> ModelSpec:
    toks = list(_tokens(text))
    end = len(text.rstrip())

    def expect(i, kind, what):
        if i >= len(toks):
            raise FormulaSyntaxError(text, end, f"expected {what}, got end of input")
        k, value, pos = toks[i]
        if k != kind or (kind == "op" and value != what.strip("'")):
            raise FormulaSyntaxError(text, pos, f"expected {what}, got {value!r}")
        return value

    response = expect(0, "name", "a response name")
    expect(1, "op", "'~'")
    if len(toks) > 2 and toks[2][0] == "one":
        if len(toks) > 3:
            raise FormulaSyntaxError(text, toks[3][2], "nothing may follow an intercept-only '1'")
        return ModelSpec(response, ())
    predictors = [expect(2, "name", "a predictor name")]
    i = 3
    while i < len(toks):
        expect(i, "op", "'+'")
        predictors.append(expect(i + 1, "name", "a predictor name"))
        i += 2
    return ModelSpec(response, tuple(predictors))
