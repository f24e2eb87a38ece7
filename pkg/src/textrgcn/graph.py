"""Heterogeneous text graph construction and relation adjacencies.

Nodes are documents (global indices ``0..D-1``) followed by vocabulary
words (``D..D+V-1``). Three base relations connect them:

* word co-occurrence, weighted by positive sliding-window PMI,
* document similarity, weighted by token-set Jaccard,
* document -> word frequency, weighted by TF-IDF.

The symmetric relations are stored once per unordered pair. Lowering to
per-relation adjacency matrices materializes both directions of the
symmetric relations, adds a distinct inverse channel for the directed
relation, and an identity self-loop channel; rows are normalized by
neighbor count or by weighted degree.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .corpus import TokenizedDocument, Vocabulary
from .errors import (
    ConfigError,
    DanglingEdge,
    DuplicateEdge,
    GraphFormatError,
    ZeroMarginal,
)
from .sparse import CSRMatrix

Edge = tuple[int, int, float]


class Relation(enum.Enum):
    WORD_COOCCURRENCE = "word_cooccurrence"
    DOC_SIMILARITY = "doc_similarity"
    DOC_WORD_FREQUENCY = "doc_word_frequency"
    INVERSE_DOC_WORD_FREQUENCY = "inverse_doc_word_frequency"
    SELF_LOOP = "self_loop"

    @property
    def is_base(self) -> bool:
        return self in BASE_RELATIONS


BASE_RELATIONS = (
    Relation.WORD_COOCCURRENCE,
    Relation.DOC_SIMILARITY,
    Relation.DOC_WORD_FREQUENCY,
)

# Channels that carry their own weight matrix in the model, in declared
# order. The self-loop channel is handled by the model's self weight.
MESSAGE_CHANNELS = (
    Relation.WORD_COOCCURRENCE.value,
    Relation.DOC_SIMILARITY.value,
    Relation.DOC_WORD_FREQUENCY.value,
    Relation.INVERSE_DOC_WORD_FREQUENCY.value,
)

NORMALIZATIONS = ("count", "weighted-degree")


@dataclass
class SlidingWindowStats:
    """Window totals and per-token / per-pair window counts.

    Pair counts are stored for unordered pairs ``(i, j)`` with ``i < j``
    and are symmetric by construction.
    """

    window_size: int
    total_windows: int
    token_counts: np.ndarray  # int64 per vocabulary index
    pair_i: np.ndarray
    pair_j: np.ndarray
    pair_window_counts: np.ndarray

    def __post_init__(self):
        self._pair_lookup = {
            (int(i), int(j)): int(c)
            for i, j, c in zip(self.pair_i, self.pair_j, self.pair_window_counts)
        }

    def token_count(self, i: int) -> int:
        return int(self.token_counts[i])

    def pair_count(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return self._pair_lookup.get((i, j), 0)


def collect_window_stats(
    docs: Iterable[Sequence[str]], vocab: Vocabulary, window_size: int
) -> SlidingWindowStats:
    """Slide a stride-1 window over each document and count occurrences.

    A document shorter than the window contributes exactly one window.
    Tokens and unordered pairs are counted at most once per window.
    """
    if window_size < 2:
        raise ConfigError("window_size must be >= 2")
    index = vocab.token_to_index
    encoded = []
    for tokens in docs:
        try:
            encoded.append(
                np.array([index[t] for t in tokens], dtype=np.int32)
            )
        except KeyError as exc:
            raise ValueError(f"token {exc.args[0]!r} not in vocabulary") from exc
    total, token_counts, pair_i, pair_j, pair_counts = kernels.window_counts(
        encoded, window_size, len(vocab)
    )
    return SlidingWindowStats(
        window_size=window_size,
        total_windows=int(total),
        token_counts=token_counts,
        pair_i=pair_i,
        pair_j=pair_j,
        pair_window_counts=pair_counts,
    )


def pmi(stats: SlidingWindowStats, i: int, j: int) -> float:
    """Pointwise mutual information of a token pair under window counts.

    Natural log of the joint window probability over the product of the
    marginals; ``-inf`` when the pair never co-occurs.
    """
    ci = stats.token_count(i)
    cj = stats.token_count(j)
    if ci == 0 or cj == 0:
        raise ZeroMarginal(f"token {i if ci == 0 else j} appears in no window")
    cij = stats.pair_count(i, j)
    if cij == 0:
        return float("-inf")
    return math.log(cij * stats.total_windows / (ci * cj))


def build_word_word_edges(stats: SlidingWindowStats) -> list[Edge]:
    """Word pairs with strictly positive PMI, weight = PMI value."""
    edges = []
    total = stats.total_windows
    counts = stats.token_counts
    for i, j, cij in zip(stats.pair_i, stats.pair_j, stats.pair_window_counts):
        weight = math.log(int(cij) * total / (int(counts[i]) * int(counts[j])))
        if weight > 0.0:
            edges.append((int(i), int(j), weight))
    return edges


def jaccard(tokens_a, tokens_b) -> float:
    """Intersection over union of two token sets; 0 when both are empty."""
    a, b = set(tokens_a), set(tokens_b)
    union = len(a) + len(b) - len(a & b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def build_doc_doc_edges(
    docs: Sequence[Iterable[str]],
    threshold: float = 0.0,
    max_degree: int | None = None,
) -> list[Edge]:
    """Document pairs with Jaccard similarity >= threshold (and > 0).

    With ``max_degree`` set, an edge survives only if it ranks within the
    top ``max_degree`` heaviest edges of both endpoints (ties broken toward
    the lower partner index), so no document exceeds that degree.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError("threshold must be in [0, 1]")
    if max_degree is not None and max_degree < 1:
        raise ConfigError("max_degree must be >= 1")
    interned: dict[str, int] = {}
    doc_sets = []
    for tokens in docs:
        ids = {interned.setdefault(t, len(interned)) for t in tokens}
        doc_sets.append(np.array(sorted(ids), dtype=np.int32))
    src, dst, wts = kernels.jaccard_pairs(doc_sets, threshold)
    edges = [(int(i), int(j), float(w)) for i, j, w in zip(src, dst, wts)]
    if max_degree is None:
        return edges
    incident: dict[int, list[tuple[float, int, int]]] = {}
    for e, (i, j, w) in enumerate(edges):
        incident.setdefault(i, []).append((-w, j, e))
        incident.setdefault(j, []).append((-w, i, e))
    # an edge survives only inside the top list of both endpoints, so the
    # degree cap is a guarantee rather than a hint
    keep_sets = {
        node: {e for _, _, e in sorted(entries)[:max_degree]}
        for node, entries in incident.items()
    }
    return [
        edge
        for e, edge in enumerate(edges)
        if e in keep_sets[edge[0]] and e in keep_sets[edge[1]]
    ]


def tfidf(term_count_in_doc: int, doc_length: int, num_docs: int, df: int) -> float:
    """Term frequency times natural-log inverse document frequency."""
    if doc_length <= 0:
        raise ValueError("doc_length must be positive")
    if not 1 <= df <= num_docs:
        raise ValueError("df must satisfy 1 <= df <= num_docs")
    return (term_count_in_doc / doc_length) * math.log(num_docs / df)


def build_doc_word_edges(
    docs: Sequence[TokenizedDocument], vocab: Vocabulary
) -> list[Edge]:
    """Directed document -> word edges for every positive TF-IDF score."""
    num_docs = len(docs)
    edges = []
    for d_idx, doc in enumerate(docs):
        if not doc.tokens:
            continue
        counts = Counter(doc.tokens)
        length = len(doc.tokens)
        for token, count in counts.items():
            try:
                w_idx = vocab.index(token)
            except KeyError as exc:
                raise ValueError(f"token {token!r} not in vocabulary") from exc
            score = tfidf(count, length, num_docs, int(vocab.doc_frequency[w_idx]))
            if score > 0.0:
                edges.append((d_idx, w_idx, score))
    return edges


@dataclass
class HeteroTextGraph:
    """Typed nodes (documents then words) with per-relation edge lists.

    Edges are stored with global node indices; the symmetric relations keep
    one record per unordered pair with ``src < dst``.
    """

    num_docs: int
    num_words: int
    nodes: list[tuple[str, str]]  # (type "d"|"w", key)
    edges: dict[Relation, list[Edge]]

    @property
    def num_nodes(self) -> int:
        return self.num_docs + self.num_words

    def node_type(self, i: int) -> str:
        return self.nodes[i][0]

    def node_key(self, i: int) -> str:
        return self.nodes[i][1]

    def edge_counts(self) -> dict[str, int]:
        return {rel.value: len(self.edges[rel]) for rel in BASE_RELATIONS}


def _check_pair_edges(
    edges: Iterable[Edge], n: int, offset: int, relation: Relation
) -> list[Edge]:
    seen = set()
    out = []
    for i, j, w in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise DanglingEdge(f"{relation.value}: endpoint ({i},{j}) out of range")
        if i == j:
            raise ValueError(f"{relation.value}: self edge at node {i}")
        if w <= 0 or not math.isfinite(w):
            raise ValueError(f"{relation.value}: weight must be finite and > 0")
        a, b = (i, j) if i < j else (j, i)
        if (a, b) in seen:
            raise DuplicateEdge(f"{relation.value}: duplicate pair ({a},{b})")
        seen.add((a, b))
        out.append((a + offset, b + offset, float(w)))
    return out


def assemble_graph(
    word_word: Iterable[Edge],
    doc_doc: Iterable[Edge],
    doc_word: Iterable[Edge],
    vocab: Vocabulary,
    docs: Sequence[TokenizedDocument],
) -> HeteroTextGraph:
    """Combine edge lists into a graph over documents then words.

    Edge lists use local indices (document position, vocabulary index);
    this is where they are mapped to global node indices.
    """
    num_docs = len(docs)
    num_words = len(vocab)
    nodes = [("d", d.id) for d in docs]
    nodes.extend(("w", t) for t in vocab.index_to_token)

    ww = _check_pair_edges(word_word, num_words, num_docs, Relation.WORD_COOCCURRENCE)
    dd = _check_pair_edges(doc_doc, num_docs, 0, Relation.DOC_SIMILARITY)

    dw = []
    seen = set()
    for d, w_idx, w in doc_word:
        if not (0 <= d < num_docs and 0 <= w_idx < num_words):
            raise DanglingEdge(
                f"{Relation.DOC_WORD_FREQUENCY.value}: endpoint ({d},{w_idx}) out of range"
            )
        if w <= 0 or not math.isfinite(w):
            raise ValueError("doc_word_frequency: weight must be finite and > 0")
        if (d, w_idx) in seen:
            raise DuplicateEdge(
                f"{Relation.DOC_WORD_FREQUENCY.value}: duplicate pair ({d},{w_idx})"
            )
        seen.add((d, w_idx))
        dw.append((d, num_docs + w_idx, float(w)))

    return HeteroTextGraph(
        num_docs=num_docs,
        num_words=num_words,
        nodes=nodes,
        edges={
            Relation.WORD_COOCCURRENCE: ww,
            Relation.DOC_SIMILARITY: dd,
            Relation.DOC_WORD_FREQUENCY: dw,
        },
    )


def build_graph(
    docs: Sequence[TokenizedDocument],
    vocab: Vocabulary,
    window_size: int = 20,
    jaccard_threshold: float = 0.0,
    max_degree: int | None = None,
) -> HeteroTextGraph:
    """End-to-end graph construction from a tokenized corpus."""
    stats = collect_window_stats((d.tokens for d in docs), vocab, window_size)
    word_word = build_word_word_edges(stats)
    doc_doc = build_doc_doc_edges(
        [d.tokens for d in docs], jaccard_threshold, max_degree
    )
    doc_word = build_doc_word_edges(docs, vocab)
    return assemble_graph(word_word, doc_doc, doc_word, vocab, docs)


# ---------------------------------------------------------------------------
# serialization: versioned plain-text graph file

_TYPE_CODES = {"d": "d", "w": "w"}


def save_graph(graph: HeteroTextGraph, path) -> None:
    """Write the versioned text format.

    Header ``HTG v1 <docs> <words>``, then ``N <index> <d|w> <key>`` node
    records and ``E <relation> <src> <dst> <weight>`` edge records. Weights
    use 17 significant digits, so the round trip is bit-faithful. Keys may
    contain spaces but not newlines.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"HTG v1 {graph.num_docs} {graph.num_words}\n")
        for i, (ntype, key) in enumerate(graph.nodes):
            if "\n" in key:
                raise ValueError("node keys must not contain newlines")
            fh.write(f"N {i} {ntype} {key}\n")
        for rel in BASE_RELATIONS:
            for src, dst, w in graph.edges[rel]:
                fh.write(f"E {rel.value} {src} {dst} {w:.17g}\n")


def load_graph(path) -> HeteroTextGraph:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split(" ")
        if len(parts) != 4 or parts[0] != "HTG" or parts[1] != "v1":
            raise GraphFormatError(f"{path}: bad header {header!r}")
        try:
            num_docs, num_words = int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise GraphFormatError(f"{path}: bad header counts") from exc
        n_nodes = num_docs + num_words
        nodes: list[tuple[str, str] | None] = [None] * n_nodes
        edges: dict[Relation, list[Edge]] = {rel: [] for rel in BASE_RELATIONS}
        by_name = {rel.value: rel for rel in BASE_RELATIONS}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("N "):
                fields = line.split(" ", 3)
                if len(fields) != 4 or fields[2] not in _TYPE_CODES:
                    raise GraphFormatError(f"{path}: line {lineno}: bad node record")
                idx = int(fields[1])
                if not 0 <= idx < n_nodes or nodes[idx] is not None:
                    raise GraphFormatError(
                        f"{path}: line {lineno}: node index {idx} invalid or repeated"
                    )
                expected = "d" if idx < num_docs else "w"
                if fields[2] != expected:
                    raise GraphFormatError(
                        f"{path}: line {lineno}: node {idx} has type "
                        f"{fields[2]!r}, expected {expected!r}"
                    )
                nodes[idx] = (fields[2], fields[3])
            elif line.startswith("E "):
                fields = line.split(" ")
                if len(fields) != 5:
                    raise GraphFormatError(f"{path}: line {lineno}: bad edge record")
                rel = by_name.get(fields[1])
                if rel is None:
                    raise GraphFormatError(
                        f"{path}: line {lineno}: unknown relation {fields[1]!r}"
                    )
                try:
                    src, dst, w = int(fields[2]), int(fields[3]), float(fields[4])
                except ValueError as exc:
                    raise GraphFormatError(
                        f"{path}: line {lineno}: bad edge fields"
                    ) from exc
                edges[rel].append((src, dst, w))
            else:
                raise GraphFormatError(f"{path}: line {lineno}: unknown record type")
        if any(n is None for n in nodes):
            raise GraphFormatError(f"{path}: missing node records")
    return HeteroTextGraph(
        num_docs=num_docs, num_words=num_words, nodes=nodes, edges=edges
    )


# ---------------------------------------------------------------------------
# relation adjacency

CHANNELS = MESSAGE_CHANNELS + (Relation.SELF_LOOP.value,)


@dataclass
class RelationAdjacency:
    """Normalized per-channel sparse adjacencies over all nodes.

    ``matrices[name][i, j]`` is nonzero when node ``j`` sends a message to
    node ``i`` along the channel, normalized per receiving row. Transposes
    are precomputed for the backward pass. The self-loop channel is the
    identity pattern and is consumed by the model's self weight.
    """

    num_nodes: int
    channel_names: tuple[str, ...]
    matrices: dict[str, CSRMatrix]
    transposes: dict[str, CSRMatrix]
    neighbor_counts: dict[str, np.ndarray]
    self_loop: CSRMatrix


def _normalize(coo, n: int, normalization: str) -> CSRMatrix:
    rows, cols, data = coo
    mat = CSRMatrix.from_coo(rows, cols, data, (n, n))
    if normalization == "count":
        factors = mat.row_nnz().astype(np.float64)
    else:
        factors = mat.row_sums()
    safe = np.where(factors > 0, factors, 1.0)
    return mat.scale_rows(1.0 / safe)


def to_relation_adjacency(
    graph: HeteroTextGraph,
    normalization: str = "weighted-degree",
    use_edge_weights: bool = True,
    ablate_channels: Iterable[str] = (),
) -> RelationAdjacency:
    """Lower the graph to normalized per-channel sparse matrices.

    Symmetric relations materialize both directions; the directed relation
    gains an inverse channel; a self-loop identity channel is added. Entry
    ``(i, j)`` of channel ``r`` is ``w_ij / c_ir`` with ``c_ir`` the
    receiving row's neighbor count (``count``) or weight sum
    (``weighted-degree``); with ``use_edge_weights`` off all weights are 1.
    Channels named in ``ablate_channels`` are emptied (their weight
    matrices then receive no messages and no gradient).
    """
    if normalization not in NORMALIZATIONS:
        raise ConfigError(
            f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}"
        )
    ablate = set(ablate_channels)
    unknown = ablate - set(CHANNELS)
    if unknown:
        raise ConfigError(f"unknown ablation channels: {sorted(unknown)}")

    n = graph.num_nodes
    coos: dict[str, tuple[list[int], list[int], list[float]]] = {}

    def add(name: str, i: int, j: int, w: float) -> None:
        rows, cols, data = coos.setdefault(name, ([], [], []))
        rows.append(i)
        cols.append(j)
        data.append(w if use_edge_weights else 1.0)

    for src, dst, w in graph.edges[Relation.WORD_COOCCURRENCE]:
        add(Relation.WORD_COOCCURRENCE.value, src, dst, w)
        add(Relation.WORD_COOCCURRENCE.value, dst, src, w)
    for src, dst, w in graph.edges[Relation.DOC_SIMILARITY]:
        add(Relation.DOC_SIMILARITY.value, src, dst, w)
        add(Relation.DOC_SIMILARITY.value, dst, src, w)
    for src, dst, w in graph.edges[Relation.DOC_WORD_FREQUENCY]:
        # the word endpoint receives along the edge direction
        add(Relation.DOC_WORD_FREQUENCY.value, dst, src, w)
        add(Relation.INVERSE_DOC_WORD_FREQUENCY.value, src, dst, w)

    matrices = {}
    transposes = {}
    neighbor_counts = {}
    for name in MESSAGE_CHANNELS:
        if name in ablate or name not in coos:
            mat = CSRMatrix.empty((n, n))
        else:
            mat = _normalize(coos[name], n, normalization)
        matrices[name] = mat
        transposes[name] = mat.transpose()
        neighbor_counts[name] = mat.row_nnz()

    self_loop = CSRMatrix.identity(n)
    if Relation.SELF_LOOP.value in ablate:
        self_loop = CSRMatrix.empty((n, n))
    return RelationAdjacency(
        num_nodes=n,
        channel_names=MESSAGE_CHANNELS,
        matrices=matrices,
        transposes=transposes,
        neighbor_counts=neighbor_counts,
        self_loop=self_loop,
    )
