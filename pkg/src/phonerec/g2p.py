"""Rule-based orthography-to-phone transliteration.

The engine applies context-free string rewrites: at each input position the
longest matching rule source wins.  That is enough for mostly phonemic
orthographies (the mapping tables this ships with are examples, not vetted
linguistic resources); context-sensitive rules are out of scope.

Rules file: UTF-8, one `source<TAB>target` pair per line, `#` starts a
comment line.  Input text is lowercased before matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import PhonerecError
from .phoneset import normalize_symbol


class RuleError(PhonerecError):
    """Malformed rules file."""


class DuplicateSource(RuleError):
    """Two rules share one source grapheme string."""


class EmptyRuleSet(RuleError):
    """Rules file contains no rules."""


class ParseError(RuleError):
    """Unparseable rules file line."""

    def __init__(self, line_no: int, line: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: expected 'source<TAB>target', got {line!r}")


class UnmappableInput(PhonerecError):
    """Input characters no rule covers; collects every offender in one pass."""

    def __init__(self, positions: list[int], fragments: list[str]):
        self.positions = positions
        self.fragments = fragments
        listing = ", ".join(
            f"{f!r}@{p}" for p, f in zip(positions[:10], fragments[:10])
        )
        more = "" if len(positions) <= 10 else f" (+{len(positions) - 10} more)"
        super().__init__(f"unmappable input: {listing}{more}")


@dataclass(frozen=True)
class RuleSet:
    """Ordered grapheme -> phone-string rewrite rules with unique sources."""

    rules: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.rules:
            raise EmptyRuleSet("rule set must contain at least one rule")
        seen = set()
        for source, _ in self.rules:
            if not source:
                raise RuleError("rule sources must be non-empty")
            if source in seen:
                raise DuplicateSource(f"duplicate rule source {source!r}")
            seen.add(source)

    @property
    def sources(self) -> list[str]:
        return [s for s, _ in self.rules]


def compile_rules(path: str | Path) -> RuleSet:
    """Parse a rules file into a RuleSet, preserving file order."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise RuleError(f"cannot read rules file {path}: {exc}") from exc
    rules: list[tuple[str, str]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise ParseError(line_no, line)
        source = normalize_symbol(parts[0].strip())
        target = normalize_symbol(parts[1].strip())
        if not source:
            raise ParseError(line_no, line)
        rules.append((source, target))
    return RuleSet(tuple(rules))


def transliterate(text: str, rules: RuleSet) -> str:
    """Rewrite orthographic text into a phone string.

    Left-to-right scan applying the longest matching source at each position
    (sources are unique, so there are no ties).  Whitespace passes through
    unchanged so word boundaries survive.  If any character is uncovered the
    whole input is scanned first and UnmappableInput reports every offender.
    """
    by_length = sorted(rules.rules, key=lambda r: len(r[0]), reverse=True)
    text = normalize_symbol(text).lower()
    out: list[str] = []
    bad_positions: list[int] = []
    bad_fragments: list[str] = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            out.append(text[pos])
            pos += 1
            continue
        for source, target in by_length:
            if text.startswith(source, pos):
                out.append(target)
                pos += len(source)
                break
        else:
            bad_positions.append(pos)
            bad_fragments.append(text[pos])
            pos += 1
    if bad_positions:
        raise UnmappableInput(bad_positions, bad_fragments)
    return "".join(out)
