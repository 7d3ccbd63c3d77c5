"""Mention corpora, vocabularies, fixed word embeddings, and MIML bags.

Mention files are JSON lines, one object per line:

    {"tokens": [...], "span": [start, end], "labels": [...]}   typing
    {"tokens": [...], "span": [start, end], "entity": "id",
     "labels": [...]}                                          linking / bags

``span`` is a half-open token range. Embedding files are whitespace-separated
text, ``word v1 ... v_dw`` per line; vectors are frozen during training and
out-of-vocabulary words map to the zero row.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, ParseError, SpanError

POSITION_CLIP = 50  # matches the 50-token sentence cap of the training setup


@dataclass
class Mention:
    tokens: list[str]
    span: tuple[int, int]
    labels: frozenset = frozenset()   # type names (typing / distant supervision)
    entity: str | None = None         # entity id (linking)

    def __post_init__(self):
        if not self.tokens:
            raise SpanError("mention has no tokens")
        start, end = self.span
        if not (0 <= start < end <= len(self.tokens)):
            raise SpanError(f"span [{start},{end}) invalid for "
                            f"{len(self.tokens)} tokens")
        self.span = (int(start), int(end))
        self.labels = frozenset(self.labels)

    @property
    def surface(self):
        start, end = self.span
        return " ".join(self.tokens[start:end])


@dataclass(eq=False)
class Bag:
    """All mentions of one entity plus its entity-level label vector."""

    entity: str
    mentions: list[Mention]
    label_vec: np.ndarray

    def __post_init__(self):
        if not self.mentions:
            raise DataError(f"bag for {self.entity!r} has no mentions")
        if not self.label_vec.any():
            raise DataError(f"bag for {self.entity!r} has empty label vector")


@dataclass(eq=False)
class WordEmbeddings:
    vocab: dict            # word -> row index
    matrix: np.ndarray     # (|V|, d_w)
    frozen: bool = True

    @property
    def dim(self):
        return self.matrix.shape[1]

    def rows(self, tokens):
        """Vectors for a token sequence; unknown words get the zero vector."""
        out = np.zeros((len(tokens), self.dim))
        for i, tok in enumerate(tokens):
            idx = self.vocab.get(tok)
            if idx is not None:
                out[i] = self.matrix[idx]
        return out


def position_features(s, span, clip=POSITION_CLIP):
    """Signed distance to the span: 0 inside, negative left, positive right.

    Values are clipped to +/-clip so the position-embedding table stays
    finite.
    """
    start, end = span
    if not (0 <= start < end <= s):
        raise SpanError(f"span [{start},{end}) invalid for sentence length {s}")
    pos = np.zeros(s, dtype=np.int64)
    left = np.arange(start)
    pos[:start] = left - start
    right = np.arange(end, s)
    pos[end:] = right - (end - 1)
    return np.clip(pos, -clip, clip)


def _parse_record(obj, task, lineno):
    for key in ("tokens", "span"):
        if key not in obj:
            raise ParseError(f"missing field {key!r}", line=lineno)
    if task == "typing" and "labels" not in obj:
        raise ParseError("typing record missing 'labels'", line=lineno)
    if task == "linking" and "entity" not in obj:
        raise ParseError("linking record missing 'entity'", line=lineno)
    span = obj["span"]
    if (not isinstance(span, (list, tuple)) or len(span) != 2
            or not all(isinstance(v, int) for v in span)):
        raise ParseError(f"span must be [start, end], got {span!r}", line=lineno)
    try:
        return Mention(tokens=list(obj["tokens"]), span=(span[0], span[1]),
                       labels=frozenset(obj.get("labels", [])),
                       entity=obj.get("entity"))
    except SpanError as exc:
        raise SpanError(f"line {lineno}: {exc}") from None


def load_mentions(path, task):
    """Read a JSON-lines mention file; task is 'typing' or 'linking'."""
    if task not in ("typing", "linking"):
        raise ValueError(f"task must be 'typing' or 'linking', got {task!r}")
    mentions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON ({exc.msg})", line=lineno) from None
            mentions.append(_parse_record(obj, task, lineno))
    return mentions


def save_mentions(mentions, path):
    with open(path, "w", encoding="utf-8") as fh:
        for m in mentions:
            obj = {"tokens": m.tokens, "span": list(m.span)}
            if m.labels:
                obj["labels"] = sorted(m.labels)
            if m.entity is not None:
                obj["entity"] = m.entity
            fh.write(json.dumps(obj) + "\n")


def build_vocab(mentions):
    vocab = set()
    for m in mentions:
        vocab.update(m.tokens)
    return vocab


def build_bags(mentions, onto, use_closure=False):
    """Group mentions by entity into MIML bags.

    The bag label vector is the union of the mentions' distant-supervision
    type sets, expanded through the ontology closure when requested. Bags
    come out in first-appearance entity order.
    """
    by_entity = {}
    for m in mentions:
        if m.entity is None:
            raise DataError("mention without entity id cannot join a bag")
        by_entity.setdefault(m.entity, []).append(m)
    bags = []
    for entity, ms in by_entity.items():
        label_ids = {onto.id_of(name) for m in ms for name in m.labels}
        if not label_ids:
            raise DataError(f"entity {entity!r} has no type labels")
        if use_closure:
            label_ids = onto.expand_labels(label_ids)
        vec = np.zeros(len(onto), dtype=np.float64)
        vec[sorted(label_ids)] = 1.0
        bags.append(Bag(entity=entity, mentions=ms, label_vec=vec))
    return bags


def sample_bag_mentions(bag, k, rng):
    """Subsample k mentions from a bag, with replacement when it is short."""
    n = len(bag.mentions)
    if n >= k:
        idx = rng.choice(n, size=k, replace=False)
    else:
        idx = rng.choice(n, size=k, replace=True)
    return [bag.mentions[int(i)] for i in idx]


def load_embeddings(path, vocab, dim=300):
    """Load fixed pretrained vectors for vocab; OOV words get zero rows."""
    words = sorted(vocab)
    index = {w: i for i, w in enumerate(words)}
    matrix = np.zeros((len(words), dim))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DimensionError(
                    f"line {lineno}: expected {dim} values for {word!r}, "
                    f"got {len(values)}")
            if word in index:
                matrix[index[word]] = [float(v) for v in values]
    return WordEmbeddings(vocab=index, matrix=matrix, frozen=True)


def save_embeddings(emb, path):
    """Write vectors as text with full float64 round-trip precision."""
    order = sorted(emb.vocab, key=emb.vocab.get)
    with open(path, "w", encoding="utf-8") as fh:
        for word in order:
            row = emb.matrix[emb.vocab[word]]
            fh.write(word + " " + " ".join(f"{v:.17g}" for v in row) + "\n")
