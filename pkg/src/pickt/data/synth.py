"""Deterministic synthetic dataset generator.

Builds a concept DAG, question-concept links, and per-student interaction
logs whose responses follow a 2-parameter logistic model over an evolving
latent mastery. Question difficulty has two parts: a base part binned into
the coarse metadata level, and a hidden part that surfaces only through the
tier token in the text column, so text carries item signal the categoricals
cannot.

Same seed -> byte-identical output directory.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

from ..errors import ParameterError
from ..numeric import Rng

AREAS = ["algebra", "geometry", "calculus", "statistics"]
CONTENT_TYPES = ["video", "worksheet", "quiz"]
QUESTION_TYPES = ["choice", "numeric", "proof", "match"]
TOPIC_WORDS = [
    "fractions", "vectors", "limits", "angles", "primes", "graphs", "series",
    "matrices", "ratios", "surfaces", "integrals", "symmetry", "logic",
    "probability", "sequences", "roots", "curves", "sets", "bounds", "maps",
]

# mastery-model constants, frozen after calibrating the overall correct rate
# into the 0.70-0.80 band (see scripts/calibrate_synth.py)
ABILITY_MEAN = 1.15
ABILITY_STD = 1.0
CONCEPT_JITTER_STD = 0.4
LEARN_RATE = 0.12
LEARN_CAP = 2.5
DISCRIMINATION_LEVELS = {"dlow": 0.6, "dmid": 1.0, "dhigh": 1.4}
COARSE_EDGES = [-1.2, -0.4, 0.4, 1.2]  # 5 difficulty levels
BASE_DIFF_STD = 0.15
HIDDEN_DIFF_STD = 0.989  # total difficulty std stays ~1.0
N_TIERS = 15
TIER_WORDS = [
    "featherlight", "effortless", "gentle", "breezy", "plain", "steady",
    "moderate", "workmanlike", "firm", "demanding", "knotty", "thorny",
    "gruelling", "punishing", "brutal",
]

_EPOCH_MS = 1_600_000_000_000


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _coarse_level(b: float) -> int:
    level = 1
    for edge in COARSE_EDGES:
        if b > edge:
            level += 1
    return level


def _tier(b: float) -> int:
    # fine-grained difficulty bucket, exposed only through the text column
    t = int((b + 2.5) / 5.0 * N_TIERS)
    return min(max(t, 0), N_TIERS - 1)


def synth_generate(
    n_students: int,
    n_questions: int,
    n_concepts: int,
    seed: int,
    out_dir,
    interactions_per_student: tuple[int, int] = (40, 60),
    discrimination_scale: float = 1.0,
    plain_items: bool = False,
) -> Path:
    """Write a complete dataset directory; returns its path.

    With plain_items the categorical question columns (type, level,
    discrimination, activity) are constant, so the text column is the only
    place item-level signal survives. That isolates the text pathway for
    cold-start measurements; the response model itself is unchanged apart
    from discrimination, which collapses to its middle value.
    """
    if min(n_students, n_questions, n_concepts) <= 0:
        raise ParameterError("synth_generate needs positive sizes")
    lo, hi = interactions_per_student
    if not (0 < lo <= hi):
        raise ParameterError(f"bad interactions_per_student range ({lo}, {hi})")

    structure = Rng(seed).child(1)
    behaviour = Rng(seed).child(2)

    # concepts and prerequisite DAG (edges always point forward in index order)
    concept_ids = [f"c{i:03d}" for i in range(n_concepts)]
    concept_topic = {
        cid: f"{TOPIC_WORDS[i % len(TOPIC_WORDS)]}{i:02d}" for i, cid in enumerate(concept_ids)
    }
    concepts = [
        (cid, AREAS[i % len(AREAS)], CONTENT_TYPES[i % len(CONTENT_TYPES)],
         f"concept {concept_topic[cid]} in {AREAS[i % len(AREAS)]}")
        for i, cid in enumerate(concept_ids)
    ]
    edges_cc = []
    for i in range(1, n_concepts):
        if structure.uniform(()) < 0.6:
            j = int(structure.integers(0, i))
            edges_cc.append((concept_ids[j], concept_ids[i], "prereq"))
        if i >= 2 and structure.uniform(()) < 0.25:
            j = int(structure.integers(0, i))
            edges_cc.append((concept_ids[j], concept_ids[i], "prereq"))

    # questions: 2PL parameters. The metadata level bins only the base part
    # of the difficulty; the hidden part reaches the files solely through
    # the tier token in the text, which bins the total. Difficulties are
    # re-centered to exact mean 0 so the overall correct rate stays inside
    # its band even for small question pools.
    question_ids = [f"q{i:04d}" for i in range(n_questions)]
    drafts = []
    for i, qid in enumerate(question_ids):
        primary = int(structure.integers(0, n_concepts))
        linked = [concept_ids[primary]]
        if n_concepts > 1 and structure.uniform(()) < 0.3:
            extra = int(structure.integers(0, n_concepts))
            if concept_ids[extra] != linked[0]:
                linked.append(concept_ids[extra])
        b_base = float(structure.normal((), std=BASE_DIFF_STD))
        b_hidden = float(structure.normal((), std=HIDDEN_DIFF_STD))
        disc_name = ["dlow", "dmid", "dhigh"][int(structure.integers(0, 3))]
        qtype = QUESTION_TYPES[int(structure.integers(0, len(QUESTION_TYPES)))]
        activity = f"act{int(structure.integers(0, 6))}"
        if plain_items:
            b_base = 0.0
            disc_name = "dmid"
            qtype = QUESTION_TYPES[0]
            activity = "act0"
        drafts.append((qid, linked, b_base, b_hidden, disc_name, qtype, activity))
    b_mean = sum(d[2] + d[3] for d in drafts) / len(drafts)

    q_rows = []
    edges_cq = []
    q_params = {}
    q_primary = {}
    by_concept: dict[str, list[str]] = {cid: [] for cid in concept_ids}
    for qid, linked, b_base, b_hidden, disc_name, qtype, activity in drafts:
        b = max(-2.5, min(2.5, b_base + b_hidden - b_mean))
        a = DISCRIMINATION_LEVELS[disc_name] * discrimination_scale
        level = _coarse_level(b - b_hidden)
        tier = _tier(b)
        # text is deliberately a function of (level, tier) alone, so many
        # distinct questions share one text. A text column unique per question
        # would act as an id surrogate and let a model memorise items instead
        # of reading the difficulty tier out of the wording.
        text = (f"drill level lvl{level} "
                f"tier{tier:02d} {TIER_WORDS[tier]} {TIER_WORDS[tier]}")
        q_rows.append((qid, qtype, f"lvl{level}", disc_name, activity, text))
        for c in linked:
            edges_cq.append((c, qid))
        q_params[qid] = (a, b)
        q_primary[qid] = linked[0]
        by_concept[linked[0]].append(qid)

    # every concept keeps at least one question so graphs stay connected-ish
    orphan_fix = [cid for cid in concept_ids if not by_concept[cid]]
    for cid in orphan_fix:
        qid = question_ids[int(structure.integers(0, n_questions))]
        edges_cq.append((cid, qid))

    # students: latent mastery per concept, growing with practice.
    # Abilities are re-centered to exact mean ABILITY_MEAN for the same
    # band-stability reason as difficulties above.
    thetas = [
        float(behaviour.child(s).normal((), mean=ABILITY_MEAN, std=ABILITY_STD))
        for s in range(n_students)
    ]
    theta_shift = ABILITY_MEAN - sum(thetas) / len(thetas)

    interactions = []
    for s in range(n_students):
        sid = f"s{s:04d}"
        srng = behaviour.child(s)
        theta = float(srng.normal((), mean=ABILITY_MEAN, std=ABILITY_STD)) + theta_shift
        mastery = {
            cid: theta + float(srng.normal((), std=CONCEPT_JITTER_STD)) for cid in concept_ids
        }
        growth = {cid: 0.0 for cid in concept_ids}
        target = int(srng.integers(lo, hi + 1))
        ts = _EPOCH_MS + s * 7_200_000
        first = True
        count = 0
        while count < target:
            cid = concept_ids[int(srng.integers(0, n_concepts))]
            pool = by_concept[cid] or question_ids
            session = min(int(srng.integers(3, 8)), target - count)
            for _ in range(session):
                qid = pool[int(srng.integers(0, len(pool)))]
                a, b = q_params[qid]
                pc = q_primary[qid]
                p = _sigmoid(a * (mastery[pc] + growth[pc] - b))
                r = 1 if float(srng.uniform(())) < p else 0
                growth[pc] = min(growth[pc] + LEARN_RATE, LEARN_CAP)
                elapsed = int(1000.0 * math.exp(float(srng.normal((), mean=math.log(25.0) + 0.25 * b, std=0.6))))
                elapsed = max(2_000, min(elapsed, 600_000))
                lag = int(60_000.0 * math.exp(float(srng.normal((), mean=math.log(8.0), std=1.2))))
                lag = max(30_000, min(lag, 86_400_000))
                ts += lag + elapsed
                elapsed_out = None if float(srng.uniform(())) < 0.02 else elapsed
                lag_out = None if first or float(srng.uniform(())) < 0.03 else lag
                interactions.append((sid, qid, ts, r, elapsed_out, lag_out))
                first = False
                count += 1

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "concepts.csv", ["concept_id", "area", "content_type", "text"], concepts)
    _write_csv(
        out / "questions.csv",
        ["question_id", "type", "difficulty", "discrimination", "activity", "text"],
        q_rows,
    )
    _write_csv(out / "edges_cc.csv", ["src_concept_id", "dst_concept_id", "relation"], edges_cc)
    _write_csv(out / "edges_cq.csv", ["concept_id", "question_id"], edges_cq)
    _write_csv(
        out / "interactions.csv",
        ["student_id", "question_id", "timestamp_ms", "response", "elapsed_ms", "lag_ms"],
        [
            (sid, qid, ts, r, "" if e is None else e, "" if g is None else g)
            for sid, qid, ts, r, e, g in interactions
        ],
    )
    return out


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
