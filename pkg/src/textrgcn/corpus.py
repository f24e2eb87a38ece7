"""Corpus ingestion, text preprocessing, vocabulary and split handling.

Input corpora are JSON Lines files, one object per line with fields
``id`` (string), ``text`` (string) and optional ``label`` (0-based int).
Preprocessing is a configurable pipeline: lowercase, URL/HTML stripping,
emoji stripping, punctuation and digit stripping, whitespace tokenization,
an optional token substitution table (chat-word / spelling hook), stopword
removal, and a named lemmatizer strategy. Corpus-frequency filtering
happens in :func:`build_vocabulary`; documents emptied by the pipeline are
kept as degenerate so node indices stay stable downstream.
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AllTokensFiltered,
    ConfigError,
    CorpusParseError,
    EmptyClass,
    UnlabeledDocuments,
)
from .rng import substream_rng

SPLITS = ("train", "validation", "test", "unlabeled")

_URL_RE = re.compile(r"https?://\S+|www\.\S+")
_HTML_RE = re.compile(r"<[^>]+>")
_EMOJI_RE = re.compile(
    "["
    "\U0001f300-\U0001faff"  # pictographs, emoticons, transport, supplemental
    "\U00002600-\U000027bf"  # misc symbols and dingbats
    "\U0001f1e6-\U0001f1ff"  # regional indicators
    "\U0000fe0f"  # variation selector
    "]+"
)


def _suffix_strip(token: str) -> str:
    # Tiny English suffix stripper. Each rule's output never re-triggers a
    # rule, which keeps the whole pipeline idempotent.
    if len(token) >= 5 and token.endswith("sses"):
        return token[:-2]
    if len(token) >= 5 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) >= 6 and token.endswith("ing"):
        return token[:-3]
    if len(token) >= 5 and token.endswith("ed"):
        return token[:-2]
    if (
        len(token) >= 4
        and token.endswith("s")
        and not token.endswith(("ss", "us", "is"))
    ):
        return token[:-1]
    return token


LEMMATIZERS = {
    "identity": lambda token: token,
    "suffix": _suffix_strip,
}


@dataclass(frozen=True)
class RawDocument:
    id: str
    text: str
    label: int | None = None


@dataclass(frozen=True)
class PreprocessConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    strip_numbers: bool = True
    strip_urls_html: bool = True
    strip_emoji: bool = True
    stopwords: frozenset[str] = frozenset()
    min_token_frequency: int = 1
    lemmatizer: str = "identity"
    substitutions: Mapping[str, str] | None = None

    def __post_init__(self):
        if self.min_token_frequency < 1:
            raise ConfigError("min_token_frequency must be >= 1")
        if self.lemmatizer not in LEMMATIZERS:
            raise ConfigError(
                f"unknown lemmatizer {self.lemmatizer!r}; "
                f"choose from {sorted(LEMMATIZERS)}"
            )


@dataclass
class TokenizedDocument:
    id: str
    tokens: list[str]
    label: int | None = None
    split: str = "unlabeled"
    degenerate: bool = False


class Vocabulary:
    """Dense 0-based token index in first-occurrence order.

    Tracks corpus frequency and document frequency per retained token.
    """

    def __init__(self, tokens: Sequence[str], frequency, doc_frequency):
        self.index_to_token = list(tokens)
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise ValueError("duplicate token in vocabulary")
        self.frequency = np.asarray(frequency, dtype=np.int64)
        self.doc_frequency = np.asarray(doc_frequency, dtype=np.int64)
        if not (
            len(self.index_to_token)
            == self.frequency.shape[0]
            == self.doc_frequency.shape[0]
        ):
            raise ValueError("vocabulary arrays must align")

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def index(self, token: str) -> int:
        return self.token_to_index[token]

    def token(self, idx: int) -> str:
        return self.index_to_token[idx]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, token in enumerate(self.index_to_token):
                fh.write(
                    f"{token}\t{int(self.frequency[i])}\t{int(self.doc_frequency[i])}\n"
                )

    @staticmethod
    def load(path) -> "Vocabulary":
        tokens, freq, df = [], [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise CorpusParseError(
                        f"{path}: line {lineno}: expected 3 tab-separated fields"
                    )
                tokens.append(parts[0])
                freq.append(int(parts[1]))
                df.append(int(parts[2]))
        return Vocabulary(tokens, freq, df)


def preprocess_text(text: str, config: PreprocessConfig) -> list[str]:
    """Run the character pipeline and tokenize; order of survivors is kept."""
    if config.lowercase:
        text = text.lower()
    if config.strip_urls_html:
        text = _URL_RE.sub(" ", text)
        text = _HTML_RE.sub(" ", text)
    if config.strip_emoji:
        text = _EMOJI_RE.sub(" ", text)
    if config.strip_punctuation:
        text = "".join(
            " " if unicodedata.category(ch).startswith("P") else ch for ch in text
        )
    if config.strip_numbers:
        text = "".join(" " if ch.isdigit() else ch for ch in text)
    tokens = text.split()
    if config.substitutions:
        tokens = [config.substitutions.get(t, t) for t in tokens]
    if config.stopwords:
        tokens = [t for t in tokens if t not in config.stopwords]
    lemmatize = LEMMATIZERS[config.lemmatizer]
    return [lemmatize(t) for t in tokens]


def build_vocabulary(
    docs: Iterable[Sequence[str]], min_token_frequency: int
) -> Vocabulary:
    """Vocabulary of tokens with corpus frequency >= ``min_token_frequency``.

    Indices are dense, in first-occurrence order over the document
    sequence. Document frequency counts distinct documents containing the
    token.
    """
    if min_token_frequency < 1:
        raise ConfigError("min_token_frequency must be >= 1")
    freq: dict[str, int] = {}
    df: dict[str, int] = {}
    for tokens in docs:
        for t in tokens:
            freq[t] = freq.get(t, 0) + 1
        for t in set(tokens):
            df[t] = df.get(t, 0) + 1
    kept = [t for t in freq if freq[t] >= min_token_frequency]
    if not kept:
        raise AllTokensFiltered(
            f"no token reaches corpus frequency {min_token_frequency}"
        )
    return Vocabulary(kept, [freq[t] for t in kept], [df[t] for t in kept])


def tokenize_corpus(
    raw_docs: Sequence[RawDocument], config: PreprocessConfig
) -> tuple[list[TokenizedDocument], Vocabulary]:
    """Preprocess a corpus, build its vocabulary, and drop rare tokens.

    Documents left without tokens are retained and flagged degenerate.
    """
    token_lists = [preprocess_text(d.text, config) for d in raw_docs]
    vocab = build_vocabulary(token_lists, config.min_token_frequency)
    docs = []
    for raw, tokens in zip(raw_docs, token_lists):
        kept = [t for t in tokens if t in vocab]
        docs.append(
            TokenizedDocument(
                id=raw.id,
                tokens=kept,
                label=raw.label,
                degenerate=not kept,
            )
        )
    return docs, vocab


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    exact = [n * r for r in ratios]
    counts = [math.floor(e) for e in exact]
    remainder = n - sum(counts)
    by_fraction = sorted(
        range(len(ratios)), key=lambda k: (-(exact[k] - counts[k]), k)
    )
    for k in by_fraction[:remainder]:
        counts[k] += 1
    return counts


def assign_splits(
    docs: Sequence[TokenizedDocument],
    ratios: tuple[float, float, float],
    seed: int,
) -> Sequence[TokenizedDocument]:
    """Stratified train/validation/test assignment for labeled documents.

    Per-class counts follow the ratios within one document (largest
    remainder). Unlabeled documents get the ``unlabeled`` split. The
    assignment is a pure function of (docs, ratios, seed).
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {sum(ratios)!r}")
    labeled = [i for i, d in enumerate(docs) if d.label is not None]
    for i, d in enumerate(docs):
        if d.label is None:
            d.split = "unlabeled"
    if not labeled:
        return docs
    num_classes = max(docs[i].label for i in labeled) + 1
    rng = substream_rng(seed, "splits")
    for c in range(num_classes):
        members = [i for i in labeled if docs[i].label == c]
        if not members:
            raise EmptyClass(f"class {c} has no labeled documents")
        order = rng.permutation(len(members))
        counts = _largest_remainder(len(members), ratios)
        bounds = np.cumsum(counts)
        for pos, k in enumerate(order):
            if pos < bounds[0]:
                split = "train"
            elif pos < bounds[1]:
                split = "validation"
            else:
                split = "test"
            docs[members[k]].split = split
    return docs


def balance_dataset(
    docs: Sequence[TokenizedDocument], target_class: int, seed: int
) -> list[TokenizedDocument]:
    """Rebalance class counts to the target class's original count.

    Smaller classes are oversampled with replacement (duplicates appended
    after the originals); larger classes are undersampled by uniform
    removal. Document ids are kept as-is, so oversampled ids repeat.
    """
    if any(d.label is None for d in docs):
        raise UnlabeledDocuments("balance_dataset requires every document labeled")
    by_class: dict[int, list[int]] = {}
    for i, d in enumerate(docs):
        by_class.setdefault(d.label, []).append(i)
    if target_class not in by_class:
        raise EmptyClass(f"target class {target_class} absent from labels")
    target_count = len(by_class[target_class])
    rng = substream_rng(seed, "balance")
    keep = np.zeros(len(docs), dtype=bool)
    extras: list[TokenizedDocument] = []
    for c in sorted(by_class):
        members = by_class[c]
        n = len(members)
        if n > target_count:
            chosen = rng.choice(n, size=target_count, replace=False)
            for k in np.sort(chosen):
                keep[members[k]] = True
        else:
            for i in members:
                keep[i] = True
            if n < target_count:
                drawn = rng.choice(n, size=target_count - n, replace=True)
                for k in drawn:
                    source = docs[members[k]]
                    extras.append(
                        dataclasses.replace(source, tokens=list(source.tokens))
                    )
    balanced = [d for i, d in enumerate(docs) if keep[i]]
    balanced.extend(extras)
    return balanced


def class_counts(docs: Iterable[TokenizedDocument]) -> Counter:
    return Counter(d.label for d in docs)


# ---------------------------------------------------------------------------
# file formats


def read_corpus_jsonl(path) -> list[RawDocument]:
    """Parse a JSON Lines corpus; errors carry 1-based line numbers."""
    docs = []
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"{path}: line {lineno}: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise CorpusParseError(f"{path}: line {lineno}: expected an object")
            doc_id = record.get("id")
            text = record.get("text")
            label = record.get("label")
            if not isinstance(doc_id, str) or not doc_id:
                raise CorpusParseError(
                    f"{path}: line {lineno}: 'id' must be a nonempty string"
                )
            if "\n" in doc_id:
                raise CorpusParseError(
                    f"{path}: line {lineno}: 'id' must not contain newlines"
                )
            if not isinstance(text, str):
                raise CorpusParseError(f"{path}: line {lineno}: 'text' must be a string")
            if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
                raise CorpusParseError(
                    f"{path}: line {lineno}: 'label' must be an integer"
                )
            if label is not None and label < 0:
                raise CorpusParseError(
                    f"{path}: line {lineno}: 'label' must be >= 0"
                )
            if doc_id in seen_ids:
                raise CorpusParseError(
                    f"{path}: line {lineno}: duplicate id {doc_id!r}"
                )
            seen_ids.add(doc_id)
            docs.append(RawDocument(id=doc_id, text=text, label=label))
    return docs


def write_tokenized_jsonl(docs: Iterable[TokenizedDocument], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            record = {"id": d.id, "tokens": d.tokens, "label": d.label, "split": d.split}
            fh.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def read_tokenized_jsonl(path) -> list[TokenizedDocument]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"{path}: line {lineno}: {exc.msg}") from exc
            try:
                tokens = list(record["tokens"])
                docs.append(
                    TokenizedDocument(
                        id=record["id"],
                        tokens=tokens,
                        label=record.get("label"),
                        split=record.get("split", "unlabeled"),
                        degenerate=not tokens,
                    )
                )
            except (KeyError, TypeError) as exc:
                raise CorpusParseError(
                    f"{path}: line {lineno}: malformed tokenized record"
                ) from exc
            if docs[-1].split not in SPLITS:
                raise CorpusParseError(
                    f"{path}: line {lineno}: unknown split {docs[-1].split!r}"
                )
    return docs


def read_stopwords(path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip() for line in fh if line.strip())


def read_substitutions(path) -> dict[str, str]:
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusParseError(
                    f"{path}: line {lineno}: expected two tab-separated columns"
                )
            table[parts[0]] = parts[1]
    return table
