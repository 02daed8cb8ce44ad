"""Dataset directory ingestion with referential-integrity validation.

A dataset is five UTF-8 CSV files with headers:

    interactions.csv: student_id,question_id,timestamp_ms,response,elapsed_ms,lag_ms
    questions.csv:    question_id,type,difficulty,discrimination,activity,text
    concepts.csv:     concept_id,area,content_type,text
    edges_cc.csv:     src_concept_id,dst_concept_id,relation
    edges_cq.csv:     concept_id,question_id

elapsed_ms/lag_ms and the optional categorical columns may be empty.
Every malformed row raises DataError carrying file and line.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import DataError
from .schema import ConceptMeta, InteractionRecord, QuestionMeta

INTERACTIONS = "interactions.csv"
QUESTIONS = "questions.csv"
CONCEPTS = "concepts.csv"
EDGES_CC = "edges_cc.csv"
EDGES_CQ = "edges_cq.csv"

_HEADERS = {
    INTERACTIONS: ["student_id", "question_id", "timestamp_ms", "response", "elapsed_ms", "lag_ms"],
    QUESTIONS: ["question_id", "type", "difficulty", "discrimination", "activity", "text"],
    CONCEPTS: ["concept_id", "area", "content_type", "text"],
    EDGES_CC: ["src_concept_id", "dst_concept_id", "relation"],
    EDGES_CQ: ["concept_id", "question_id"],
}


@dataclass
class Dataset:
    """Immutable loaded dataset; freely shareable across threads."""

    path: str
    interactions: list[InteractionRecord]
    questions: dict[str, QuestionMeta]
    concepts: dict[str, ConceptMeta]
    edges_cc: list[tuple[str, str, str]]
    edges_cq: list[tuple[str, str]]

    def by_student(self) -> dict[str, list[InteractionRecord]]:
        """Records per student, time-sorted with file order as the stable tie-break."""
        groups: dict[str, list[InteractionRecord]] = {}
        for rec in self.interactions:
            groups.setdefault(rec.student_id, []).append(rec)
        return {sid: sorted(records, key=lambda r: r.timestamp_ms) for sid, records in groups.items()}

    def correct_rate(self) -> float:
        if not self.interactions:
            return float("nan")
        return sum(r.response for r in self.interactions) / len(self.interactions)

    def summary(self) -> dict:
        return {
            "students": len({r.student_id for r in self.interactions}),
            "questions": len(self.questions),
            "concepts": len(self.concepts),
            "interactions": len(self.interactions),
            "correct_rate": self.correct_rate(),
            "cc_edges": len(self.edges_cc),
            "cq_edges": len(self.edges_cq),
        }


def _open_rows(directory: Path, name: str):
    path = directory / name
    if not path.exists():
        raise DataError("missing dataset file", file=str(path))
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file (no header)", file=str(path), line=1) from None
        if header != _HEADERS[name]:
            raise DataError(
                f"bad header: expected {','.join(_HEADERS[name])}, got {','.join(header)}",
                file=str(path),
                line=1,
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, got {len(row)}", file=str(path), line=lineno)
            rows.append((lineno, row))
    return str(path), rows


def _int_field(value: str, what: str, file: str, line: int, optional: bool = False) -> int | None:
    if value == "":
        if optional:
            return None
        raise DataError(f"missing required integer field {what}", file=file, line=line)
    try:
        parsed = int(value)
    except ValueError:
        raise DataError(f"unparsable integer {what}={value!r}", file=file, line=line) from None
    if parsed < 0:
        raise DataError(f"negative {what}={parsed}", file=file, line=line)
    return parsed


def load_dataset(directory) -> Dataset:
    """Load and validate the five-file dataset layout."""
    directory = Path(directory)

    cpath, crows = _open_rows(directory, CONCEPTS)
    concepts: dict[str, ConceptMeta] = {}
    for line, (cid, area, ctype, text) in crows:
        if cid == "":
            raise DataError("empty concept_id", file=cpath, line=line)
        if cid in concepts:
            raise DataError(f"duplicate concept_id {cid!r}", file=cpath, line=line)
        concepts[cid] = ConceptMeta(cid, area, ctype, text)

    qpath, qrows = _open_rows(directory, QUESTIONS)
    question_lines: dict[str, int] = {}
    raw_questions: dict[str, tuple] = {}
    for line, (qid, qtype, diff, disc, act, text) in qrows:
        if qid == "":
            raise DataError("empty question_id", file=qpath, line=line)
        if qid in raw_questions:
            raise DataError(f"duplicate question_id {qid!r}", file=qpath, line=line)
        raw_questions[qid] = (qtype, diff, disc, act, text)
        question_lines[qid] = line

    cq_path, cq_rows = _open_rows(directory, EDGES_CQ)
    linked: dict[str, list[str]] = {qid: [] for qid in raw_questions}
    edges_cq: list[tuple[str, str]] = []
    for line, (cid, qid) in cq_rows:
        if cid not in concepts:
            raise DataError(f"edge references unknown concept {cid!r}", file=cq_path, line=line)
        if qid not in raw_questions:
            raise DataError(f"edge references unknown question {qid!r}", file=cq_path, line=line)
        if cid not in linked[qid]:
            linked[qid].append(cid)
        edges_cq.append((cid, qid))

    questions: dict[str, QuestionMeta] = {}
    for qid, (qtype, diff, disc, act, text) in raw_questions.items():
        if not linked[qid]:
            raise DataError(f"question {qid!r} has no linked concepts", file=qpath, line=question_lines[qid])
        questions[qid] = QuestionMeta(qid, qtype, diff, disc, act, text, tuple(linked[qid]))

    cc_path, cc_rows = _open_rows(directory, EDGES_CC)
    edges_cc: list[tuple[str, str, str]] = []
    for line, (src, dst, rel) in cc_rows:
        if src not in concepts:
            raise DataError(f"edge references unknown concept {src!r}", file=cc_path, line=line)
        if dst not in concepts:
            raise DataError(f"edge references unknown concept {dst!r}", file=cc_path, line=line)
        edges_cc.append((src, dst, rel))

    ipath, irows = _open_rows(directory, INTERACTIONS)
    interactions: list[InteractionRecord] = []
    for line, (sid, qid, ts, resp, elapsed, lag) in irows:
        if sid == "":
            raise DataError("empty student_id", file=ipath, line=line)
        if qid not in questions:
            raise DataError(f"interaction references unknown question {qid!r}", file=ipath, line=line)
        ts_v = _int_field(ts, "timestamp_ms", ipath, line)
        resp_v = _int_field(resp, "response", ipath, line)
        if resp_v not in (0, 1):
            raise DataError(f"response must be 0 or 1, got {resp_v}", file=ipath, line=line)
        elapsed_v = _int_field(elapsed, "elapsed_ms", ipath, line, optional=True)
        lag_v = _int_field(lag, "lag_ms", ipath, line, optional=True)
        interactions.append(InteractionRecord(sid, qid, ts_v, resp_v, elapsed_v, lag_v))

    return Dataset(
        path=str(directory),
        interactions=interactions,
        questions=questions,
        concepts=concepts,
        edges_cc=edges_cc,
        edges_cq=edges_cq,
    )


@dataclass
class AccessLog:
    """Ids touched through a LoggedRecords view; proves what training saw."""

    students: set = field(default_factory=set)
    questions: set = field(default_factory=set)


class LoggedRecords:
    """Sequence view over interaction records that logs every access."""

    def __init__(self, records, log: AccessLog | None = None):
        self._records = list(records)
        self.log = log if log is not None else AccessLog()

    def _touch(self, rec: InteractionRecord) -> InteractionRecord:
        self.log.students.add(rec.student_id)
        self.log.questions.add(rec.question_id)
        return rec

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, i):
        item = self._records[i]
        if isinstance(i, slice):
            return [self._touch(r) for r in item]
        return self._touch(item)

    def __iter__(self):
        for rec in self._records:
            yield self._touch(rec)
