#!/usr/bin/env python3
"""Convert the published DBE-KT22 tables into the five-file dataset layout.

The public distribution ships one CSV per relational table. This script maps
them onto the layout that ``pickt.data.loader`` ingests:

    Transaction / interactions table  -> interactions.csv
        student id, question id, answer start time, correctness; elapsed time
        comes from an explicit column when present, otherwise end - start.
        Lag time is the gap between a student's consecutive starts.
    Questions table                   -> questions.csv
        id, type, expert difficulty label, question text (HTML stripped).
        Discrimination and activity are not published, so they stay empty
        and load as UNK.
    KCs / knowledge-components table  -> concepts.csv
        id and text (name plus description). Area and content type are not
        published; empty columns load as UNK.
    KC relationship table             -> edges_cc.csv
    Question-KC relationship table    -> edges_cq.csv

File and column names in the wild differ between dataset versions, so both
are resolved through alias lists; run with --list to see what this script
found in your copy before converting. Questions without any concept link
cannot be ingested (the model requires a concept stream per position) and
are dropped together with their interactions; the drop counts are printed.

Usage:
    python3 scripts/convert_dbe_kt22.py --in-dir <published-tables> --out-dir data/dbe-kt22
"""

from __future__ import annotations

import argparse
import csv
import html
import io
import re
import sys
from datetime import datetime, timezone
from html.parser import HTMLParser
from pathlib import Path

# file aliases, newest distribution names first
TABLE_FILES = {
    "transactions": ["Transaction.csv", "Transactions.csv", "transaction.csv",
                     "transactions.csv", "Interactions.csv", "interactions_raw.csv"],
    "questions": ["Questions.csv", "Question.csv", "questions.csv", "question.csv"],
    "concepts": ["KCs.csv", "KC.csv", "KnowledgeComponents.csv", "kcs.csv",
                 "Knowledge_Components.csv", "concepts_raw.csv"],
    "edges_cc": ["KC_Relationships.csv", "KCRelationships.csv",
                 "KC_Relationship.csv", "kc_relationships.csv"],
    "edges_cq": ["Question_KC_Relationships.csv", "QuestionKCRelationships.csv",
                 "Question_KC_Relationship.csv", "question_kc_relationships.csv"],
}

COLUMN_ALIASES = {
    "student": ["student_id", "user_id", "stu_id", "student"],
    "question": ["question_id", "item_id", "question"],
    "start": ["start_time", "starttime", "created_at", "start_timestamp", "timestamp"],
    "end": ["end_time", "endtime", "finish_time", "end_timestamp"],
    "correct": ["answer_state", "correct", "is_correct", "correctness", "answer_correct"],
    "elapsed": ["elapsed_ms", "elapsed_time", "time_taken", "duration_ms", "duration"],
    "qid": ["id", "question_id"],
    "qtype": ["type", "question_type", "qtype"],
    "difficulty": ["difficulty", "difficulty_level", "expert_difficulty"],
    "qtext": ["question_rich_text", "question_text", "text", "body", "description"],
    "cid": ["id", "kc_id", "concept_id"],
    "cname": ["name", "kc_name", "title"],
    "cdesc": ["description", "kc_description", "desc"],
    "cc_src": ["from_kc_id", "source_kc_id", "src_kc_id", "kc_from", "prerequisite_id",
               "from_knowledgecomponent_id"],
    "cc_dst": ["to_kc_id", "target_kc_id", "dst_kc_id", "kc_to", "dependent_id",
               "to_knowledgecomponent_id"],
    "cc_rel": ["relationship_type", "relation", "relationship", "rel_type", "type"],
    "cq_kc": ["kc_id", "knowledgecomponent_id", "concept_id", "kc"],
    "cq_q": ["question_id", "item_id", "question"],
}

TRUE_WORDS = {"1", "true", "t", "yes", "y", "correct"}
FALSE_WORDS = {"0", "false", "f", "no", "n", "wrong", "incorrect"}


class _TextExtractor(HTMLParser):
    """Collects text nodes, skipping script/style bodies."""

    def __init__(self):
        super().__init__()
        self.parts = []
        self._skip = 0

    def handle_starttag(self, tag, attrs):
        if tag in ("script", "style"):
            self._skip += 1

    def handle_endtag(self, tag):
        if tag in ("script", "style") and self._skip:
            self._skip -= 1

    def handle_data(self, data):
        if not self._skip:
            self.parts.append(data)


def strip_html(raw: str) -> str:
    if "<" not in raw and "&" not in raw:
        return " ".join(raw.split())
    parser = _TextExtractor()
    parser.feed(raw)
    parser.close()
    return " ".join(html.unescape(" ".join(parser.parts)).split())


def parse_timestamp_ms(raw: str) -> int | None:
    """Epoch milliseconds from ISO datetime strings or numeric epochs."""
    raw = raw.strip()
    if not raw:
        return None
    if re.fullmatch(r"\d+(\.\d+)?", raw):
        value = float(raw)
        if value > 1e12:  # already milliseconds
            return int(value)
        return int(value * 1000.0)
    for candidate in (raw, raw.replace("Z", "+00:00"), raw.split("+")[0].strip()):
        try:
            dt = datetime.fromisoformat(candidate)
        except ValueError:
            continue
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp() * 1000.0)
    for fmt in ("%Y-%m-%d %H:%M:%S.%f", "%Y-%m-%d %H:%M:%S", "%d/%m/%Y %H:%M",
                "%m/%d/%Y %H:%M:%S"):
        try:
            dt = datetime.strptime(raw, fmt).replace(tzinfo=timezone.utc)
        except ValueError:
            continue
        return int(dt.timestamp() * 1000.0)
    return None


def parse_response(raw: str) -> int | None:
    word = raw.strip().lower()
    if word in TRUE_WORDS:
        return 1
    if word in FALSE_WORDS:
        return 0
    return None


def find_file(in_dir: Path, role: str) -> Path:
    lookup = {p.name.lower(): p for p in in_dir.iterdir() if p.is_file()}
    for name in TABLE_FILES[role]:
        hit = lookup.get(name.lower())
        if hit is not None:
            return hit
    known = ", ".join(sorted(lookup)) or "(directory is empty)"
    sys.exit(f"error: no {role} table in {in_dir} (tried {', '.join(TABLE_FILES[role])}; "
             f"found: {known})")


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            sys.exit(f"error: {path} is empty")
        rows = [row for row in reader if row]
    return header, rows


def col(header: list[str], role: str, path: Path, required: bool = True) -> int | None:
    lowered = [h.lower() for h in header]
    for name in COLUMN_ALIASES[role]:
        if name in lowered:
            return lowered.index(name)
    if required:
        sys.exit(f"error: {path} has no column for {role!r} "
                 f"(tried {COLUMN_ALIASES[role]}; header is {header})")
    return None


def cell(row: list[str], idx: int | None) -> str:
    if idx is None or idx >= len(row):
        return ""
    return row[idx].strip()


def convert(in_dir: Path, out_dir: Path) -> dict:
    q_path = find_file(in_dir, "questions")
    header, rows = read_table(q_path)
    i_qid = col(header, "qid", q_path)
    i_qtype = col(header, "qtype", q_path, required=False)
    i_diff = col(header, "difficulty", q_path, required=False)
    i_qtext = col(header, "qtext", q_path)
    questions: dict[str, dict] = {}
    for row in rows:
        qid = cell(row, i_qid)
        if not qid or qid in questions:
            continue
        questions[qid] = {
            "type": cell(row, i_qtype),
            "difficulty": cell(row, i_diff),
            "text": strip_html(cell(row, i_qtext)),
        }

    c_path = find_file(in_dir, "concepts")
    header, rows = read_table(c_path)
    i_cid = col(header, "cid", c_path)
    i_name = col(header, "cname", c_path, required=False)
    i_desc = col(header, "cdesc", c_path, required=False)
    concepts: dict[str, str] = {}
    for row in rows:
        cid = cell(row, i_cid)
        if not cid or cid in concepts:
            continue
        text = " ".join(part for part in
                        (strip_html(cell(row, i_name)), strip_html(cell(row, i_desc)))
                        if part)
        concepts[cid] = text

    cq_path = find_file(in_dir, "edges_cq")
    header, rows = read_table(cq_path)
    i_kc = col(header, "cq_kc", cq_path)
    i_q = col(header, "cq_q", cq_path)
    edges_cq: list[tuple[str, str]] = []
    seen_cq = set()
    dangling_cq = 0
    for row in rows:
        cid, qid = cell(row, i_kc), cell(row, i_q)
        if cid not in concepts or qid not in questions:
            dangling_cq += 1
            continue
        if (cid, qid) not in seen_cq:
            seen_cq.add((cid, qid))
            edges_cq.append((cid, qid))

    linked = {qid for _, qid in edges_cq}
    unlinked = sorted(q for q in questions if q not in linked)
    for qid in unlinked:
        del questions[qid]

    cc_path = find_file(in_dir, "edges_cc")
    header, rows = read_table(cc_path)
    i_src = col(header, "cc_src", cc_path)
    i_dst = col(header, "cc_dst", cc_path)
    i_rel = col(header, "cc_rel", cc_path, required=False)
    edges_cc: list[tuple[str, str, str]] = []
    seen_cc = set()
    dangling_cc = 0
    for row in rows:
        src, dst = cell(row, i_src), cell(row, i_dst)
        if src not in concepts or dst not in concepts:
            dangling_cc += 1
            continue
        rel = cell(row, i_rel)
        if (src, dst, rel) not in seen_cc:
            seen_cc.add((src, dst, rel))
            edges_cc.append((src, dst, rel))

    t_path = find_file(in_dir, "transactions")
    header, rows = read_table(t_path)
    i_sid = col(header, "student", t_path)
    i_q = col(header, "question", t_path)
    i_start = col(header, "start", t_path)
    i_end = col(header, "end", t_path, required=False)
    i_corr = col(header, "correct", t_path)
    i_elapsed = col(header, "elapsed", t_path, required=False)
    parsed: list[tuple[str, str, int, int, int | None]] = []
    skipped = {"unknown question": 0, "bad timestamp": 0, "bad response": 0}
    for row in rows:
        sid, qid = cell(row, i_sid), cell(row, i_q)
        if qid not in questions:
            skipped["unknown question"] += 1
            continue
        start = parse_timestamp_ms(cell(row, i_start))
        if start is None or start < 0:
            skipped["bad timestamp"] += 1
            continue
        response = parse_response(cell(row, i_corr))
        if response is None:
            skipped["bad response"] += 1
            continue
        elapsed = None
        raw_elapsed = cell(row, i_elapsed)
        if raw_elapsed:
            try:
                elapsed = max(0, int(float(raw_elapsed)))
            except ValueError:
                elapsed = None
        if elapsed is None:
            end = parse_timestamp_ms(cell(row, i_end))
            if end is not None and end >= start:
                elapsed = end - start
        parsed.append((sid, qid, start, response, elapsed))

    # lag is the gap between one student's consecutive starts; first is unknown
    parsed.sort(key=lambda r: (r[0], r[2]))
    records = []
    prev: dict[str, int] = {}
    for sid, qid, start, response, elapsed in parsed:
        lag = start - prev[sid] if sid in prev else None
        if lag is not None and lag < 0:
            lag = None
        prev[sid] = start
        records.append((sid, qid, start, response, elapsed, lag))

    out_dir.mkdir(parents=True, exist_ok=True)

    def write(name: str, header_row: list[str], body) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header_row)
        writer.writerows(body)
        (out_dir / name).write_text(buf.getvalue(), encoding="utf-8")

    write("interactions.csv",
          ["student_id", "question_id", "timestamp_ms", "response", "elapsed_ms", "lag_ms"],
          [(sid, qid, ts, resp,
            "" if elapsed is None else elapsed, "" if lag is None else lag)
           for sid, qid, ts, resp, elapsed, lag in records])
    write("questions.csv",
          ["question_id", "type", "difficulty", "discrimination", "activity", "text"],
          [(qid, meta["type"], meta["difficulty"], "", "", meta["text"])
           for qid, meta in sorted(questions.items())])
    write("concepts.csv",
          ["concept_id", "area", "content_type", "text"],
          [(cid, "", "", text) for cid, text in sorted(concepts.items())])
    write("edges_cc.csv", ["src_concept_id", "dst_concept_id", "relation"], sorted(edges_cc))
    write("edges_cq.csv", ["concept_id", "question_id"], sorted(edges_cq))

    n_correct = sum(r[3] for r in records)
    return {
        "questions": len(questions),
        "questions dropped (no concept link)": len(unlinked),
        "concepts": len(concepts),
        "cc edges": len(edges_cc),
        "cq edges": len(edges_cq),
        "dangling cq rows": dangling_cq,
        "dangling cc rows": dangling_cc,
        "interactions": len(records),
        "interactions skipped": dict(skipped),
        "students": len({r[0] for r in records}),
        "correct rate": round(n_correct / len(records), 4) if records else None,
    }


def list_tables(in_dir: Path) -> None:
    for role in TABLE_FILES:
        lookup = {p.name.lower(): p for p in in_dir.iterdir() if p.is_file()}
        hit = next((lookup[n.lower()] for n in TABLE_FILES[role] if n.lower() in lookup), None)
        if hit is None:
            print(f"{role:12s} MISSING (tried {', '.join(TABLE_FILES[role])})")
        else:
            header, rows = read_table(hit)
            print(f"{role:12s} {hit.name} ({len(rows)} rows): {', '.join(header)}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--in-dir", required=True, help="directory with the published tables")
    parser.add_argument("--out-dir", help="dataset directory to write (five CSV files)")
    parser.add_argument("--list", action="store_true",
                        help="show which tables and columns were recognised, then exit")
    args = parser.parse_args(argv)
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        sys.exit(f"error: {in_dir} is not a directory")
    if args.list:
        list_tables(in_dir)
        return 0
    if not args.out_dir:
        sys.exit("error: --out-dir is required unless --list is given")
    summary = convert(in_dir, Path(args.out_dir))
    for key, value in summary.items():
        print(f"{key}: {value}")

    from pickt.data.loader import load_dataset  # verify the output ingests cleanly

    loaded = load_dataset(args.out_dir)
    print(f"verified: {loaded.summary()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
