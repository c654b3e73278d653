"""Plain-text rendering of fitted rule lists, and the inverse parser.

The table layout mirrors the model structure: a header with the response
mean and intercept, then one row per rule with its occurrence frequency,
condition, both outputs, and weight.  Frequencies, weights, and rule
outputs are shown with two significant digits; cut values print at full
shortest-repr precision so a rendered table parses back to the exact rule
set.
"""

from __future__ import annotations

import re

from .aggregation import SirusModel

_ROW = re.compile(
    r"^\s*(?P<freq>\S+)\s+if\s+(?P<cond>.+?)\s+then\s+(?P<resp1>.+?)\s*=\s*(?P<yin>\S+)"
    r"\s+else\s+(?P<resp2>.+?)\s*=\s*(?P<yout>\S+)\s+w\s*=\s*(?P<weight>\S+)\s*$"
)
_CLAUSE = re.compile(r"^(?P<name>.+?)\s*(?P<op><|>=)\s*(?P<cut>\S+)$")


def sig2(value: float) -> str:
    """Two-significant-digit decimal rendering (no exponent notation)."""
    if value == 0:
        return "0"
    text = f"{value:.2g}"
    if "e" in text or "E" in text:
        text = f"{float(text):.10f}".rstrip("0")
        if text.endswith("."):
            text = text[:-1]
    return text


def render_rule_table(model: SirusModel) -> str:
    """Human-readable rule list; empty models render the header alone."""
    response = model.response_name
    lines = [
        f"Average {response} = {sig2(model.response_mean)}    "
        f"Intercept = {sig2(model.intercept)}",
        "",
        "Frequency | Rule | Weight",
    ]
    order = sorted(
        range(len(model.rules)),
        key=lambda i: (-model.frequencies[i], model.rules[i].path),
    )
    for i in order:
        rule, weight = model.rules[i], model.weights[i]
        clauses = " & ".join(
            f"{model.feature_names[f]} {'<' if s == 'L' else '>='} "
            f"{model.grid.cut_value(f, r)!r}"
            for f, r, s in rule.path
        )
        lines.append(
            f"{sig2(model.frequencies[i])} | if {clauses} "
            f"then {response} = {sig2(rule.y_in)} "
            f"else {response} = {sig2(rule.y_out)} | w = {sig2(float(weight))}"
        )
    if not model.rules:
        lines.append("(no rules selected)")
    return "\n".join(lines) + "\n"


def parse_rule_table(text: str, feature_names: tuple[str, ...]) -> set:
    """Recover the rule set (conditions, not outputs) from a rendered table.

    Returns a set of tuples of (feature index, side, cut value); the
    feature name map must match the one used at render time.
    """
    index = {name: i for i, name in enumerate(feature_names)}
    rules = set()
    for line in text.splitlines():
        if "|" not in line or line.startswith("Frequency"):
            continue
        freq_part, rule_part, weight_part = [p.strip() for p in line.split("|")]
        match = _ROW.match(f"{freq_part} {rule_part} {weight_part}")
        if match is None:
            raise ValueError(f"unparseable rule row: {line!r}")
        constraints = []
        for clause in match.group("cond").split(" & "):
            parsed = _CLAUSE.match(clause.strip())
            if parsed is None:
                raise ValueError(f"unparseable condition: {clause!r}")
            name = parsed.group("name").strip()
            if name not in index:
                raise ValueError(f"unknown feature {name!r}")
            side = "L" if parsed.group("op") == "<" else "R"
            constraints.append((index[name], side, float(parsed.group("cut"))))
        rules.add(tuple(sorted(constraints)))
    return rules


def model_condition_set(model: SirusModel) -> set:
    """The model's rule set in the same identity space as the parser."""
    out = set()
    for rule in model.rules:
        out.add(
            tuple(
                sorted(
                    (f, s, model.grid.cut_value(f, r)) for f, r, s in rule.path
                )
            )
        )
    return out
