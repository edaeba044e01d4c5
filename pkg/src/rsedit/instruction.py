"""Edit-instruction grammar: parsing, rendering and longitudinal diffing.

Canonical clause forms (lowercase ASCII, clauses joined by ``" and then "``)::

    add [severity] [location] <finding>
    remove [severity] [location] <finding>
    change the level of [location] <finding> to <severity>

Multi-word tokens are written with spaces and stored snake_case.
"""

from __future__ import annotations

import enum
import re
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Optional


class Operation(enum.Enum):
    ADD = "add"
    REMOVE = "remove"
    CHANGE_LEVEL = "change_level"


OP_ORDER = {Operation.ADD: 0, Operation.REMOVE: 1, Operation.CHANGE_LEVEL: 2}

SEVERITIES = ("minimal", "small", "mild", "moderate", "severe", "large")
LOCATIONS = (
    "left",
    "right",
    "bilateral",
    "left_lower_lobe",
    "left_upper_lobe",
    "right_lower_lobe",
    "right_upper_lobe",
    "right_base",
    "left_base",
    "cardiac_region",
)
# closed vocabulary; anything else is accepted verbatim as an open finding
FINDINGS = (
    "atelectasis",
    "cardiomegaly",
    "consolidation",
    "edema",
    "enlarged_cardiac_silhouette",
    "fracture",
    "hernia",
    "lung_lesion",
    "lung_opacity",
    "pleural_effusion",
    "pleural_other",
    "pneumonia",
    "pneumothorax",
    "support_devices",
)

CLAUSE_SEP = " and then "
_SPLIT_RE = re.compile(r"(?:^|\s+)and\s+then(?:\s+|$)|\s*;\s*")
_CHANGE_PREFIX = ("change", "the", "level", "of")


class ParseError(ValueError):
    """An instruction clause could not be matched against the grammar."""

    def __init__(self, message: str, clause: str = ""):
        super().__init__(message)
        self.clause = clause


@dataclass(frozen=True)
class EditInstruction:
    operation: Operation
    finding: str
    location: Optional[str] = None
    severity: Optional[str] = None

    def __post_init__(self):
        if not self.finding:
            raise ValueError("finding must be non-empty")
        if self.operation is Operation.CHANGE_LEVEL and self.severity is None:
            raise ValueError("a level change must name a target severity")

    @property
    def key(self) -> tuple[Operation, str, Optional[str]]:
        return (self.operation, self.finding, self.location)

    def to_dict(self) -> dict:
        return {
            "op": self.operation.value,
            "finding": self.finding,
            "location": self.location,
            "severity": self.severity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EditInstruction":
        return cls(Operation(d["op"]), d["finding"], d.get("location"), d.get("severity"))


@dataclass(frozen=True)
class FindingState:
    finding: str
    location: Optional[str] = None
    severity: Optional[str] = None

    def __post_init__(self):
        if not self.finding:
            raise ValueError("finding must be non-empty")

    @classmethod
    def from_dict(cls, d: dict) -> "FindingState":
        return cls(d["finding"], d.get("location"), d.get("severity"))

    def to_dict(self) -> dict:
        return {"finding": self.finding, "location": self.location, "severity": self.severity}


InstructionSet = tuple  # tuple[EditInstruction, ...]


def instruction_set(instrs: Iterable[EditInstruction]) -> tuple[EditInstruction, ...]:
    """Freeze ``instrs`` into a tuple, rejecting duplicate (op, finding, location)."""
    out = tuple(instrs)
    seen = set()
    for ins in out:
        if ins.key in seen:
            raise ValueError(f"duplicate instruction for {ins.key}")
        seen.add(ins.key)
    return out


def _words(token: str) -> list[str]:
    return token.split("_")


# longest phrases first so "left lower lobe" wins over "left"
_LOCATION_PHRASES = sorted(
    ((tuple(_words(loc)), loc) for loc in LOCATIONS), key=lambda p: -len(p[0])
)
_FINDING_PHRASES = sorted(
    ((tuple(_words(f)), f) for f in FINDINGS), key=lambda p: -len(p[0])
)


def _match_location(words: list[str]) -> tuple[Optional[str], list[str]]:
    for phrase, token in _LOCATION_PHRASES:
        if tuple(words[: len(phrase)]) == phrase:
            return token, words[len(phrase):]
    return None, words


def _match_finding(words: list[str]) -> Optional[str]:
    # a known finding at the tail absorbs unknown modifiers in front of it
    for phrase, token in _FINDING_PHRASES:
        if len(words) >= len(phrase) and tuple(words[-len(phrase):]) == phrase:
            return token
    if not words:
        return None
    return "_".join(words)


def _parse_target(words: list[str], clause: str, allow_severity: bool):
    severity = None
    if allow_severity and words and words[0] in SEVERITIES:
        severity, words = words[0], words[1:]
    location, words = _match_location(words)
    finding = _match_finding(words)
    if finding is None:
        raise ParseError(f"no finding named in clause {clause!r}", clause)
    return finding, location, severity


def _parse_clause(clause: str) -> EditInstruction:
    words = clause.split()
    if not words:
        raise ParseError("empty clause", clause)
    head = words[0]
    if head in ("add", "remove"):
        finding, location, severity = _parse_target(words[1:], clause, allow_severity=True)
        op = Operation.ADD if head == "add" else Operation.REMOVE
        return EditInstruction(op, finding, location, severity)
    if tuple(words[:4]) == _CHANGE_PREFIX:
        rest = words[4:]
        if "to" not in rest:
            raise ParseError(f"level change without target in clause {clause!r}", clause)
        cut = len(rest) - 1 - rest[::-1].index("to")
        target = rest[cut + 1:]
        if len(target) != 1 or target[0] not in SEVERITIES:
            raise ParseError(f"unknown target severity in clause {clause!r}", clause)
        finding, location, _ = _parse_target(rest[:cut], clause, allow_severity=False)
        return EditInstruction(Operation.CHANGE_LEVEL, finding, location, target[0])
    raise ParseError(f"no operation keyword in clause {clause!r}", clause)


def parse_instruction(text: str) -> tuple[EditInstruction, ...]:
    """Parse an instruction string into an instruction set.

    Raises ``ParseError`` (and nothing else) on any input the grammar
    rejects; the error names the offending clause.
    """
    if not isinstance(text, str):
        raise ParseError(f"expected a string, got {type(text).__name__}")
    norm = " ".join(text.lower().split())
    clauses = [c.strip() for c in _SPLIT_RE.split(norm)]
    if not norm or any(not c for c in clauses):
        raise ParseError(f"empty clause in {text!r}", text)
    instrs = [_parse_clause(c) for c in clauses]
    try:
        return instruction_set(instrs)
    except ValueError as exc:
        raise ParseError(str(exc), text) from None


def _phrase(token: Optional[str]) -> list[str]:
    return _words(token) if token else []


def render_clause(ins: EditInstruction) -> str:
    if ins.operation is Operation.CHANGE_LEVEL:
        words = list(_CHANGE_PREFIX) + _phrase(ins.location) + _phrase(ins.finding)
        words += ["to", ins.severity]
    else:
        words = [ins.operation.value] + _phrase(ins.severity) + _phrase(ins.location)
        words += _phrase(ins.finding)
    return " ".join(words)


def render_instruction(instrs: Iterable[EditInstruction]) -> str:
    return CLAUSE_SEP.join(render_clause(i) for i in instrs)


def _index(states: Iterable[FindingState]) -> dict:
    table = {}
    for s in states:
        key = (s.finding, s.location)
        if key in table:
            raise ValueError(f"duplicate finding state for {key}")
        table[key] = s.severity
    return table


def sort_key(ins: EditInstruction):
    return (OP_ORDER[ins.operation], ins.finding, ins.location or "")


def generate_instructions(
    past: Iterable[FindingState], current: Iterable[FindingState]
) -> tuple[EditInstruction, ...]:
    """Diff two finding sets into Add / Remove / ChangeLevel instructions.

    Keys are ``(finding, location)``. A severity change at the same key is a
    ChangeLevel to the current severity; when either side leaves severity
    unspecified there is no level to compare and nothing is emitted.
    """
    before, after = _index(past), _index(current)
    out = []
    for key, sev in after.items():
        if key not in before:
            out.append(EditInstruction(Operation.ADD, key[0], key[1], sev))
        elif before[key] is not None and sev is not None and before[key] != sev:
            out.append(EditInstruction(Operation.CHANGE_LEVEL, key[0], key[1], sev))
    for key, sev in before.items():
        if key not in after:
            out.append(EditInstruction(Operation.REMOVE, key[0], key[1], sev))
    return instruction_set(sorted(out, key=sort_key))


def mentioned_findings(instrs: Iterable[EditInstruction]) -> list[str]:
    return sorted({i.finding for i in instrs})
