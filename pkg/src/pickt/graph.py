"""Knowledge map: heterogeneous concept/question graph and its meta-paths.

Meta-paths (target <- sources):
    CC  : concept <- directly linked concepts (symmetrized) + self
    CQC : concept <- concepts sharing at least one question + self
    QC  : question <- its linked concepts (length-1 cross-type path) + self
    QCQ : question <- questions sharing at least one concept + self

Adjacency is precomputed at build time and immutable afterwards; every
target keeps a self-loop so no neighbor list is empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data.loader import Dataset
from .embeddings import EmbeddingTable
from .errors import DataError, DimensionError

CC = "CC"
CQC = "CQC"
QC = "QC"
QCQ = "QCQ"
CONCEPT_PATHS = (CC, CQC)
QUESTION_PATHS = (QC, QCQ)
ALL_PATHS = CONCEPT_PATHS + QUESTION_PATHS


@dataclass
class MetaPathAdjacency:
    tag: str
    n_targets: int
    n_sources: int
    neighbors: list[list[int]]  # per target, source indices including self
    mask: np.ndarray = field(init=False)  # dense (n_targets, n_sources) float32 0/1

    def __post_init__(self):
        mask = np.zeros((self.n_targets, self.n_sources), dtype=np.float32)
        for i, neigh in enumerate(self.neighbors):
            if not neigh:
                raise DataError(f"{self.tag}: empty neighbor list at target {i} (self-loop missing)")
            mask[i, neigh] = 1.0
        self.mask = mask


@dataclass
class HeteroGraph:
    concept_ids: list[str]
    question_ids: list[str]
    cc_edges: list[tuple[int, int]]  # directed concept->concept index pairs
    cq_edges: list[tuple[int, int]]  # (concept index, question index)
    concept_features: np.ndarray  # (n_c, k)
    question_features: np.ndarray  # (n_q, k)

    def __post_init__(self):
        n_c, n_q = len(self.concept_ids), len(self.question_ids)
        if self.concept_features.shape[0] != n_c or self.question_features.shape[0] != n_q:
            raise DimensionError(
                f"feature rows ({self.concept_features.shape[0]}, {self.question_features.shape[0]}) "
                f"do not match node counts ({n_c}, {n_q})"
            )
        if self.concept_features.shape[1] != self.question_features.shape[1]:
            raise DimensionError("concept and question feature widths differ")
        for s, d in self.cc_edges:
            if not (0 <= s < n_c and 0 <= d < n_c):
                raise DataError(f"C-C edge ({s},{d}) out of range")
        for c, q in self.cq_edges:
            if not (0 <= c < n_c and 0 <= q < n_q):
                raise DataError(f"C-Q edge ({c},{q}) out of range")

    @property
    def n_concepts(self) -> int:
        return len(self.concept_ids)

    @property
    def n_questions(self) -> int:
        return len(self.question_ids)

    @property
    def feature_dim(self) -> int:
        return self.concept_features.shape[1]

    def concept_index(self) -> dict[str, int]:
        return {cid: i for i, cid in enumerate(self.concept_ids)}

    def question_index(self) -> dict[str, int]:
        return {qid: i for i, qid in enumerate(self.question_ids)}


def graph_from_dataset(
    dataset: Dataset,
    concept_table: EmbeddingTable,
    question_table: EmbeddingTable,
) -> HeteroGraph:
    """Node order follows the dataset tables; features looked up by id."""
    concept_ids = list(dataset.concepts)
    question_ids = list(dataset.questions)
    c_rows = {cid: i for i, cid in enumerate(concept_table.ids)}
    q_rows = {qid: i for i, qid in enumerate(question_table.ids)}
    missing_c = [c for c in concept_ids if c not in c_rows]
    missing_q = [q for q in question_ids if q not in q_rows]
    if missing_c or missing_q:
        raise DataError(
            f"embedding tables missing {len(missing_c)} concept and {len(missing_q)} question rows "
            f"(first: {(missing_c + missing_q)[0]!r})"
        )
    c_idx = {cid: i for i, cid in enumerate(concept_ids)}
    q_idx = {qid: i for i, qid in enumerate(question_ids)}
    cc = [(c_idx[s], c_idx[d]) for s, d, _rel in dataset.edges_cc]
    cq = sorted({(c_idx[c], q_idx[q]) for c, q in dataset.edges_cq})
    return HeteroGraph(
        concept_ids=concept_ids,
        question_ids=question_ids,
        cc_edges=cc,
        cq_edges=cq,
        concept_features=np.stack([concept_table.matrix[c_rows[c]] for c in concept_ids]),
        question_features=np.stack([question_table.matrix[q_rows[q]] for q in question_ids]),
    )


def build_metapaths(graph: HeteroGraph) -> dict[str, MetaPathAdjacency]:
    n_c, n_q = graph.n_concepts, graph.n_questions

    cc_sets = [{i} for i in range(n_c)]  # self-loops first
    for s, d in graph.cc_edges:
        cc_sets[s].add(d)
        cc_sets[d].add(s)  # relation labels ignored; edges symmetrized

    concepts_of_question: list[set[int]] = [set() for _ in range(n_q)]
    questions_of_concept: list[set[int]] = [set() for _ in range(n_c)]
    for c, q in graph.cq_edges:
        concepts_of_question[q].add(c)
        questions_of_concept[c].add(q)

    cqc_sets = [{i} for i in range(n_c)]
    for cs in concepts_of_question:
        for a in cs:
            cqc_sets[a].update(cs)

    qcq_sets = [{i} for i in range(n_q)]
    for qs in questions_of_concept:
        for a in qs:
            qcq_sets[a].update(qs)

    # QC sources are the concatenation [questions ; concepts]: the self-loop
    # points into the question block, linked concepts into the concept block.
    qc_lists = [[i] + sorted(n_q + c for c in concepts_of_question[i]) for i in range(n_q)]

    return {
        CC: MetaPathAdjacency(CC, n_c, n_c, [sorted(s) for s in cc_sets]),
        CQC: MetaPathAdjacency(CQC, n_c, n_c, [sorted(s) for s in cqc_sets]),
        QC: MetaPathAdjacency(QC, n_q, n_q + n_c, qc_lists),
        QCQ: MetaPathAdjacency(QCQ, n_q, n_q, [sorted(s) for s in qcq_sets]),
    }
