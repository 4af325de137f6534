"""Feature pipeline: tagged-transcript records to the two feature-class
matrices (tag counts and utterance embeddings), plus dataset splitting,
class weights, corpus file I/O, and a synthetic corpus generator.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestionError

# The 36 Penn Treebank part-of-speech tags, canonical order.
PENN_TREEBANK_TAGS = (
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS",
    "MD", "NN", "NNS", "NNP", "NNPS", "PDT", "POS", "PRP", "PRP$", "RB",
    "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG", "VBN",
    "VBP", "VBZ", "WDT", "WP", "WP$", "WRB",
)

EMBEDDING_PROVIDERS = ("precomputed", "hash-projection")

DEFAULT_UTTERANCE_BUDGET = 17
DEFAULT_SPLIT_FRACTIONS = (0.81, 0.09, 0.10)


class Label(IntEnum):
    CONTROL = 0
    PATIENT = 1


@dataclass(frozen=True)
class TagVocabulary:
    """Fixed, ordered 36-tag vocabulary with a bijective tag/index map."""

    tags: tuple[str, ...] = PENN_TREEBANK_TAGS

    def __post_init__(self):
        if len(self.tags) != 36 or len(set(self.tags)) != 36:
            raise ConfigError(f"tag vocabulary must hold 36 distinct tags, got {len(self.tags)}")
        object.__setattr__(self, "_index", {tag: i for i, tag in enumerate(self.tags)})

    def __len__(self) -> int:
        return len(self.tags)

    def index(self, tag: str) -> int:
        try:
            return self._index[tag]
        except KeyError:
            raise IngestionError(f"unknown part-of-speech tag {tag!r}") from None

    def __contains__(self, tag: str) -> bool:
        return tag in self._index


@dataclass
class Record:
    """One transcript: a label plus utterances of (token, tag) pairs and,
    optionally, one precomputed embedding vector per utterance."""

    id: str
    label: int
    utterances: list[list[tuple[str, str]]]
    embeddings: list[np.ndarray] | None = None

    def utterance_text(self, index: int) -> str:
        return " ".join(token for token, _ in self.utterances[index])


@dataclass
class ClassWeights:
    """Per-class loss weights, normalized to sum to one (control first)."""

    control: float = 0.7
    patient: float = 0.3

    def __post_init__(self):
        if self.control <= 0 or self.patient <= 0:
            raise ConfigError(
                f"class weights must be positive, got ({self.control}, {self.patient})"
            )
        total = self.control + self.patient
        self.control /= total
        self.patient /= total

    def for_label(self, label: int) -> float:
        return self.patient if label == Label.PATIENT else self.control


def fix_length(record: Record, budget: int = DEFAULT_UTTERANCE_BUDGET) -> Record:
    """Return a copy with exactly `budget` utterances.

    Longer records keep their first `budget` utterances; shorter ones gain
    empty utterances (and zero embedding rows when embeddings are present).
    """
    if budget < 1:
        raise ConfigError(f"utterance budget must be positive, got {budget}")
    utterances = [list(u) for u in record.utterances[:budget]]
    embeddings = None
    if record.embeddings is not None:
        embeddings = [np.asarray(e, dtype=np.float64) for e in record.embeddings[:budget]]
    pad = budget - len(utterances)
    if pad > 0:
        utterances.extend([] for _ in range(pad))
        if embeddings is not None and record.embeddings:
            dim = len(record.embeddings[0])
            embeddings.extend(np.zeros(dim) for _ in range(pad))
    return replace(record, utterances=utterances, embeddings=embeddings)


def build_pos_matrix(
    record: Record,
    vocab: TagVocabulary | None = None,
    budget: int = DEFAULT_UTTERANCE_BUDGET,
) -> np.ndarray:
    """Tag-count matrix [36 x budget]: entry (t, u) counts tag t in utterance u."""
    vocab = vocab or TagVocabulary()
    fixed = fix_length(record, budget)
    matrix = np.zeros((len(vocab), budget))
    for u, utterance in enumerate(fixed.utterances):
        for _, tag in utterance:
            if tag not in vocab:
                raise IngestionError(
                    f"unknown part-of-speech tag {tag!r} in record {record.id!r}"
                )
            matrix[vocab.index(tag), u] += 1.0
    return matrix


def _token_vector(token: str, dim: int, seed: int, cache: dict) -> np.ndarray:
    vec = cache.get(token)
    if vec is None:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng((int.from_bytes(digest, "big"), seed))
        vec = rng.standard_normal(dim)
        cache[token] = vec
    return vec


def embed(
    record: Record,
    provider: str = "hash-projection",
    budget: int = DEFAULT_UTTERANCE_BUDGET,
    dim: int = 64,
    seed: int = 0,
) -> np.ndarray:
    """Embedding matrix [budget x dim], one row per utterance, zeros for padding.

    "precomputed" reads the record's own embeddings; "hash-projection" builds a
    deterministic fallback by summing seeded per-token vectors over each
    utterance's token multiset and L2-normalizing the result.
    """
    if provider not in EMBEDDING_PROVIDERS:
        raise ConfigError(
            f"unknown embedding provider {provider!r}; expected one of {EMBEDDING_PROVIDERS}"
        )
    fixed = fix_length(record, budget)
    matrix = np.zeros((budget, dim))
    if provider == "precomputed":
        if fixed.embeddings is None:
            raise IngestionError(
                f"record {record.id!r} has no precomputed embeddings"
            )
        for i, vec in enumerate(fixed.embeddings):
            if vec.shape != (dim,):
                raise IngestionError(
                    f"record {record.id!r} embedding {i} has dim {vec.shape}, expected ({dim},)"
                )
            matrix[i] = vec
        return matrix
    cache: dict[str, np.ndarray] = {}
    for i, utterance in enumerate(fixed.utterances):
        if not utterance:
            continue
        total = np.zeros(dim)
        for token, _ in utterance:
            total += _token_vector(token, dim, seed, cache)
        norm = np.linalg.norm(total)
        if norm > 0:
            matrix[i] = total / norm
    return matrix


@dataclass
class RecordFeatures:
    """Model-ready features for one record."""

    record_id: str
    label: int
    pos: np.ndarray | None
    emb: np.ndarray | None


def featurize(
    records: list[Record],
    need_pos: bool,
    need_emb: bool,
    vocab: TagVocabulary | None = None,
    budget: int = DEFAULT_UTTERANCE_BUDGET,
    provider: str = "hash-projection",
    dim: int = 64,
    seed: int = 0,
) -> list[RecordFeatures]:
    """Build the requested feature matrices for every record."""
    vocab = vocab or TagVocabulary()
    out = []
    for record in records:
        out.append(
            RecordFeatures(
                record_id=record.id,
                label=int(record.label),
                pos=build_pos_matrix(record, vocab, budget) if need_pos else None,
                emb=embed(record, provider, budget, dim, seed) if need_emb else None,
            )
        )
    return out


@dataclass
class DatasetSplits:
    train: list[Record]
    validation: list[Record]
    test: list[Record]


def split_sizes(total: int, fractions=DEFAULT_SPLIT_FRACTIONS) -> list[int]:
    """Largest-remainder apportionment of `total` across the fractions."""
    exact = [total * f for f in fractions]
    base = [int(np.floor(v)) for v in exact]
    leftover = total - sum(base)
    by_remainder = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in by_remainder[:leftover]:
        base[i] += 1
    return base


def split_dataset(
    records: list[Record], seed: int, fractions=DEFAULT_SPLIT_FRACTIONS
) -> DatasetSplits:
    """Deterministic seeded shuffle, then an exact 81/9/10-style partition."""
    if len(records) < 10:
        raise ConfigError(f"need at least 10 records to split, got {len(records)}")
    order = np.random.default_rng(seed).permutation(len(records))
    shuffled = [records[i] for i in order]
    n_train, n_val, _ = split_sizes(len(records), fractions)
    return DatasetSplits(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
    )


# -- synthetic corpus ---------------------------------------------------------

# Rough English tag frequencies; only the relative ordering matters.
_BASE_TAG_WEIGHTS = {
    "NN": 0.13, "IN": 0.10, "DT": 0.09, "PRP": 0.055, "JJ": 0.06,
    "NNS": 0.06, "RB": 0.05, "VBD": 0.05, "VB": 0.04, "CC": 0.04,
    "VBZ": 0.035, "VBG": 0.03, "TO": 0.025, "VBP": 0.025, "VBN": 0.02,
    "CD": 0.02, "UH": 0.02, "NNP": 0.02, "MD": 0.015, "PRP$": 0.015,
    "RP": 0.01, "WRB": 0.008, "WP": 0.006, "EX": 0.005, "WDT": 0.005,
    "JJR": 0.005, "POS": 0.004, "JJS": 0.003, "RBR": 0.003, "NNPS": 0.002,
    "PDT": 0.002, "RBS": 0.002, "FW": 0.001, "LS": 0.001, "SYM": 0.001,
    "WP$": 0.001,
}

# Tags whose rate rises for the patient class as signal strength grows.
PATIENT_BOOSTED_TAGS = ("PRP", "MD", "EX", "NNPS")
_NOUN_TAGS = ("NN", "NNS", "NNP")


def _class_tag_weights(signal_strength: float, patient: bool) -> np.ndarray:
    weights = np.array([_BASE_TAG_WEIGHTS[t] for t in PENN_TREEBANK_TAGS])
    if patient and signal_strength > 0:
        for tag in PATIENT_BOOSTED_TAGS:
            weights[PENN_TREEBANK_TAGS.index(tag)] *= 1.0 + 8.0 * signal_strength
        for tag in _NOUN_TAGS:
            weights[PENN_TREEBANK_TAGS.index(tag)] *= 1.0 - 0.5 * signal_strength
    return weights / weights.sum()


def generate_synthetic_corpus(
    n_records: int,
    patient_fraction: float = 0.85,
    signal_strength: float = 0.8,
    seed: int = 0,
    embedding_dim: int = 64,
) -> list[Record]:
    """Seeded stand-in corpus with a tunable class signal.

    Patients draw tags from a distribution shifted toward pronoun-family tags
    and carry embeddings displaced along a fixed direction; at signal strength
    zero both classes are identically distributed.
    """
    if n_records < 1:
        raise ConfigError(f"n_records must be positive, got {n_records}")
    if not 0.0 < patient_fraction < 1.0:
        raise ConfigError(f"patient_fraction must be in (0, 1), got {patient_fraction}")
    if not 0.0 <= signal_strength <= 1.0:
        raise ConfigError(f"signal_strength must be in [0, 1], got {signal_strength}")

    rng = np.random.default_rng(seed)
    class_direction = rng.standard_normal(embedding_dim)
    class_direction /= np.linalg.norm(class_direction)
    weights = {
        False: _class_tag_weights(signal_strength, patient=False),
        True: _class_tag_weights(signal_strength, patient=True),
    }

    records = []
    for i in range(n_records):
        patient = bool(rng.random() < patient_fraction)
        n_utterances = max(1, int(rng.poisson(17)))
        utterances = []
        embeddings = []
        for _ in range(n_utterances):
            n_tokens = int(rng.integers(3, 12))
            tag_ids = rng.choice(36, size=n_tokens, p=weights[patient])
            utterances.append(
                [
                    (f"{PENN_TREEBANK_TAGS[t].lower()}{rng.integers(0, 40)}", PENN_TREEBANK_TAGS[t])
                    for t in tag_ids
                ]
            )
            vec = rng.standard_normal(embedding_dim)
            if patient:
                vec = vec + 2.5 * signal_strength * class_direction
            embeddings.append(vec / np.linalg.norm(vec))
        records.append(
            Record(
                id=f"syn-{i:05d}",
                label=int(Label.PATIENT if patient else Label.CONTROL),
                utterances=utterances,
                embeddings=embeddings,
            )
        )
    return records


# -- corpus files (JSON Lines, one record per line) ---------------------------


def record_to_json_dict(record: Record) -> dict:
    doc = {
        "id": record.id,
        "label": int(record.label),
        "utterances": [[[token, tag] for token, tag in u] for u in record.utterances],
    }
    if record.embeddings is not None:
        doc["embeddings"] = [[float(v) for v in vec] for vec in record.embeddings]
    return doc


def record_from_json_dict(doc: dict) -> Record:
    if not isinstance(doc, dict):
        raise IngestionError("record must be a JSON object")
    for key in ("id", "label", "utterances"):
        if key not in doc:
            raise IngestionError(f"record is missing required key {key!r}")
    unknown = set(doc) - {"id", "label", "utterances", "embeddings"}
    if unknown:
        raise IngestionError(f"record has unknown keys {sorted(unknown)}")
    if not isinstance(doc["id"], str):
        raise IngestionError("record id must be a string")
    if doc["label"] not in (0, 1):
        raise IngestionError(f"record label must be 0 or 1, got {doc['label']!r}")
    utterances = []
    for u in doc["utterances"]:
        pairs = []
        for item in u:
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise IngestionError(f"utterance entries must be [token, tag] pairs, got {item!r}")
            token, tag = item
            if not isinstance(token, str) or not isinstance(tag, str):
                raise IngestionError(f"token and tag must be strings, got {item!r}")
            pairs.append((token, tag))
        utterances.append(pairs)
    embeddings = None
    if "embeddings" in doc:
        embeddings = [np.asarray(vec, dtype=np.float64) for vec in doc["embeddings"]]
        if len(embeddings) != len(utterances):
            raise IngestionError(
                f"{len(embeddings)} embeddings for {len(utterances)} utterances"
            )
    return Record(id=doc["id"], label=int(doc["label"]), utterances=utterances, embeddings=embeddings)


def save_corpus(records: list[Record], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json_dict(record), sort_keys=True))
            fh.write("\n")


def load_corpus(path: str | Path) -> list[Record]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                records.append(record_from_json_dict(doc))
            except (json.JSONDecodeError, IngestionError) as exc:
                raise IngestionError(f"{path}, line {lineno}: {exc}") from None
    return records
