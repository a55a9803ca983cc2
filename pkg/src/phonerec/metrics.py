"""Phone error rate, edit alignment, and baseline-vs-finetuned corrections.

PER is reported at the corpus level: edit counts are pooled over utterances
and divided by the total reference length (the standard convention), so the
result equals the length-weighted combination of per-utterance counts and is
invariant to utterance order.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import PhonerecError

MATCH = "match"
SUB = "sub"
DEL = "del"
INS = "ins"


class EmptyReference(PhonerecError):
    """align requires a non-empty reference sequence."""


class LengthMismatch(PhonerecError):
    """Corpora have different utterance counts or ids."""


class EmptyCorpus(PhonerecError):
    """No utterances, or total reference length is zero."""


@dataclass(frozen=True)
class EditOp:
    """One alignment step; ref/hyp are None when the op does not touch them."""

    kind: str  # match | sub | del | ins
    ref: str | None = None
    hyp: str | None = None


@dataclass(frozen=True)
class Alignment:
    ops: tuple[EditOp, ...]

    @property
    def cost(self) -> int:
        return sum(1 for op in self.ops if op.kind != MATCH)

    def counts(self) -> tuple[int, int, int]:
        subs = sum(1 for op in self.ops if op.kind == SUB)
        dels = sum(1 for op in self.ops if op.kind == DEL)
        ins = sum(1 for op in self.ops if op.kind == INS)
        return subs, dels, ins

    def ref_side(self) -> list[str]:
        return [op.ref for op in self.ops if op.kind in (MATCH, SUB, DEL)]

    def hyp_side(self) -> list[str]:
        return [op.hyp for op in self.ops if op.kind in (MATCH, SUB, INS)]


@dataclass(frozen=True)
class PerReport:
    substitutions: int
    deletions: int
    insertions: int
    ref_length: int
    num_utterances: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def per(self) -> float:
        return 100.0 * self.errors / self.ref_length

    def to_dict(self) -> dict:
        return {
            "per": self.per,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_length": self.ref_length,
            "num_utterances": self.num_utterances,
        }


def align(ref: list[str], hyp: list[str]) -> Alignment:
    """Minimal-cost Levenshtein alignment with unit costs.

    Backtrace ties prefer match > substitution > deletion > insertion, so
    alignments (not just their costs) are deterministic.
    """
    if not ref:
        raise EmptyReference("reference sequence must be non-empty")
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        ref_sym = ref[i - 1]
        row = cost[i]
        prev = cost[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (ref_sym != hyp[j - 1])
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)

    ops: list[EditOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = cost[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == cost[i - 1][j - 1]:
            ops.append(EditOp(MATCH, ref[i - 1], hyp[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and here == cost[i - 1][j - 1] + 1:
            ops.append(EditOp(SUB, ref[i - 1], hyp[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and here == cost[i - 1][j] + 1:
            ops.append(EditOp(DEL, ref=ref[i - 1]))
            i -= 1
        else:
            ops.append(EditOp(INS, hyp=hyp[j - 1]))
            j -= 1
    ops.reverse()
    return Alignment(tuple(ops))


def per(refs: list[list[str]], hyps: list[list[str]]) -> PerReport:
    """Corpus-level phone error rate from parallel token sequences."""
    if len(refs) != len(hyps):
        raise LengthMismatch(f"{len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise EmptyCorpus("no utterances")
    total_ref = sum(len(r) for r in refs)
    if total_ref < 1:
        raise EmptyCorpus("total reference length is zero")
    subs = dels = ins = 0
    for ref, hyp in zip(refs, hyps):
        if not ref:
            ins += len(hyp)  # empty reference: every hypothesis token is an insertion
            continue
        s, d, i = align(ref, hyp).counts()
        subs += s
        dels += d
        ins += i
    return PerReport(
        substitutions=subs,
        deletions=dels,
        insertions=ins,
        ref_length=total_ref,
        num_utterances=len(refs),
    )


def _ref_ops(alignment: Alignment) -> list[EditOp]:
    """The ops that consume a reference token, in reference order."""
    return [op for op in alignment.ops if op.kind in (MATCH, SUB, DEL)]


def corrections(
    refs: list[list[str]],
    baseline_hyps: list[list[str]],
    finetuned_hyps: list[list[str]],
) -> Counter:
    """Count baseline mistakes that fine-tuning fixed, keyed by (ref, baseline).

    Both hypothesis sets are aligned to the shared reference independently;
    a correction is a reference position where the baseline substituted (or
    deleted) the token and the fine-tuned output matches it.  Deletions the
    fine-tuned model fixed appear under (ref, None).  Positions where both
    systems err are not corrections.
    """
    if not (len(refs) == len(baseline_hyps) == len(finetuned_hyps)):
        raise LengthMismatch(
            f"{len(refs)} refs vs {len(baseline_hyps)} baseline vs "
            f"{len(finetuned_hyps)} finetuned"
        )
    fixed: Counter = Counter()
    for ref, base, fine in zip(refs, baseline_hyps, finetuned_hyps):
        if not ref:
            continue
        base_ops = _ref_ops(align(ref, base))
        fine_ops = _ref_ops(align(ref, fine))
        for base_op, fine_op in zip(base_ops, fine_ops):
            if fine_op.kind != MATCH:
                continue
            if base_op.kind == SUB:
                fixed[(base_op.ref, base_op.hyp)] += 1
            elif base_op.kind == DEL:
                fixed[(base_op.ref, None)] += 1
    return fixed


def sorted_corrections(fixed: Counter) -> list[tuple[tuple[str, str | None], int]]:
    """Descending by count; key order breaks ties deterministically."""
    return sorted(fixed.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1] or ""))


def read_transcripts(path: str | Path) -> list[tuple[str, list[str]]]:
    """Read a `utt_id<TAB>space-separated tokens` file, preserving order."""
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2 or not parts[0].strip():
            raise PhonerecError(f"{path}:{line_no}: expected 'utt_id<TAB>tokens'")
        out.append((parts[0].strip(), parts[1].split()))
    return out


def write_transcripts(entries: list[tuple[str, list[str]]], path: str | Path) -> None:
    lines = [f"{utt_id}\t{' '.join(tokens)}" for utt_id, tokens in entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def pair_by_utterance(
    refs: list[tuple[str, list[str]]], hyps: list[tuple[str, list[str]]]
) -> tuple[list[list[str]], list[list[str]]]:
    """Match transcript files by utterance id (reference order wins)."""
    hyp_map = dict(hyps)
    if len(hyp_map) != len(hyps):
        raise PhonerecError("duplicate utterance ids in hypothesis file")
    ref_ids = [utt_id for utt_id, _ in refs]
    if len(set(ref_ids)) != len(ref_ids):
        raise PhonerecError("duplicate utterance ids in reference file")
    missing = [utt_id for utt_id in ref_ids if utt_id not in hyp_map]
    extra = [utt_id for utt_id in hyp_map if utt_id not in set(ref_ids)]
    if missing or extra:
        raise LengthMismatch(
            f"utterance ids differ (missing from hyp: {missing[:5]}, extra: {extra[:5]})"
        )
    return [tokens for _, tokens in refs], [hyp_map[utt_id] for utt_id in ref_ids]


def report_to_json(report: PerReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True)
