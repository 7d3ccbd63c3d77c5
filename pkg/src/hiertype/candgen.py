"""Alias-table candidate generation: character n-gram TFIDF over canonical
entity names, cosine similarity to mention strings, top-k retrieval.

N-grams (sizes 1..5) are taken over the whole preprocessed string including
spaces so cross-token character patterns contribute. IDF is the smooth
ln(1 + N/df). Row vectors are L2 normalized, so cosine is a dot product.
The on-disk index is a versioned little-endian binary whose bytes depend
only on the input name map.
"""

import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ParseError

# Fixed stop list bundled for reproducibility (classic English list).
STOP_WORDS = frozenset("""
a about above after again against all am an and any are aren't as at be
because been before being below between both but by can't cannot could
couldn't did didn't do does doesn't doing don't down during each few for
from further had hadn't has hasn't have haven't having he he'd he'll he's
her here here's hers herself him himself his how how's i i'd i'll i'm i've
if in into is isn't it it's its itself let's me more most mustn't my myself
no nor not of off on once only or other ought our ours ourselves out over
own same shan't she she'd she'll she's should shouldn't so some such than
that that's the their theirs them themselves then there there's these they
they'd they'll they're they've this those through to too under until up
very was wasn't we we'd we'll we're we've were weren't what what's when
when's where where's which while who who's whom why why's with won't would
wouldn't you you'd you'll you're you've your yours yourself yourselves
""".split())

MAGIC = b"HTIX0001"
DEFAULT_MAX_FEATURES = 100_000
DEFAULT_TOP_K = 100


def preprocess(s):
    """Lowercase, drop stop words, normalize whitespace."""
    return " ".join(w for w in s.lower().split() if w not in STOP_WORDS)


def char_ngrams(s, n_min=1, n_max=5):
    """All character n-grams of sizes n_min..n_max, spaces included."""
    out = []
    for n in range(n_min, min(n_max, len(s)) + 1):
        out.extend(s[i:i + n] for i in range(len(s) - n + 1))
    return out


@dataclass(eq=False)
class NgramIndex:
    feature_map: dict          # ngram -> column
    idf: np.ndarray            # (F,)
    matrix: sp.csr_matrix      # (|E|, F), unit L2 rows (or all-zero)
    entity_ids: list[str]
    entity_names: list[str]
    n_min: int = 1
    n_max: int = 5

    @property
    def n_entities(self):
        return len(self.entity_ids)


@dataclass
class CandidateSet:
    """Top-k candidate entities for one mention string, csim descending."""

    mention_id: str | None
    entries: list                   # [(entity_id, csim)], sorted
    gold_in_set: bool | None = None

    @property
    def entity_ids(self):
        return [eid for eid, _ in self.entries]


def _tf_counts(s, n_min, n_max):
    return Counter(char_ngrams(s, n_min, n_max))


def build_index(names, max_features=DEFAULT_MAX_FEATURES, n_min=1, n_max=5):
    """Build the TFIDF index from an entity-id -> canonical-name mapping.

    Feature selection keeps the top max_features n-grams by total count,
    ties broken lexicographically, so rebuilds are bit-identical.
    """
    if not names:
        raise ParseError("cannot build an index from an empty name map")
    entity_ids = list(names)
    entity_names = [names[eid] for eid in entity_ids]
    docs = [preprocess(name) for name in entity_names]

    coll_freq = Counter()
    doc_freq = Counter()
    per_doc = []
    for doc in docs:
        tf = _tf_counts(doc, n_min, n_max)
        per_doc.append(tf)
        coll_freq.update(tf)
        doc_freq.update(tf.keys())

    ranked = sorted(coll_freq, key=lambda g: (-coll_freq[g], g))[:max_features]
    feature_map = {g: i for i, g in enumerate(ranked)}
    n_docs = len(docs)
    idf = np.array([np.log(1.0 + n_docs / doc_freq[g]) for g in ranked])

    indptr = [0]
    indices = []
    data = []
    for tf in per_doc:
        cols = sorted(feature_map[g] for g in tf if g in feature_map)
        row = np.array([tf[ranked[c]] * idf[c] for c in cols])
        norm = np.linalg.norm(row)
        if norm > 0:
            row = row / norm
        indices.extend(cols)
        data.extend(row.tolist())
        indptr.append(len(indices))
    matrix = sp.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64),
         np.asarray(indptr, dtype=np.int64)),
        shape=(n_docs, len(ranked)))
    return NgramIndex(feature_map=feature_map, idf=idf, matrix=matrix,
                      entity_ids=entity_ids, entity_names=entity_names,
                      n_min=n_min, n_max=n_max)


def ngram_vector(s, index):
    """TFIDF unit vector of a string over the index features (dense, (F,))."""
    tf = _tf_counts(preprocess(s), index.n_min, index.n_max)
    vec = np.zeros(len(index.feature_map))
    for gram, count in tf.items():
        col = index.feature_map.get(gram)
        if col is not None:
            vec[col] = count * index.idf[col]
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def candidates(mention_string, index, k=DEFAULT_TOP_K, gold=None,
               mention_id=None):
    """Top-k entities by cosine; ties broken by entity id ascending."""
    q = ngram_vector(mention_string, index)
    sims = index.matrix @ q
    ids = np.asarray(index.entity_ids)
    order = np.lexsort((ids, -sims))[:k]
    entries = [(index.entity_ids[i], float(np.clip(sims[i], 0.0, 1.0)))
               for i in order]
    gold_in_set = None
    if gold is not None:
        gold_in_set = any(eid == gold for eid, _ in entries)
    return CandidateSet(mention_id=mention_id, entries=entries,
                        gold_in_set=gold_in_set)


def candidates_batch(strings, index, k=DEFAULT_TOP_K, golds=None):
    """Candidate sets for many mention strings; parallel when
    HIERTYPE_THREADS allows, with output order preserved either way."""
    from concurrent.futures import ThreadPoolExecutor

    from .util import worker_count

    golds = golds if golds is not None else [None] * len(strings)
    jobs = list(zip(strings, golds))
    workers = worker_count()
    if workers == 1 or len(jobs) < 2:
        return [candidates(s, index, k=k, gold=g) for s, g in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: candidates(job[0], index, k=k,
                                                    gold=job[1]), jobs))


# --- persistence --------------------------------------------------------------

def _write_str(fh, s):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh):
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def save_index(index, path):
    m = index.matrix
    features = sorted(index.feature_map, key=index.feature_map.get)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", index.n_min, index.n_max))
        fh.write(struct.pack("<I", len(features)))
        for gram in features:
            _write_str(fh, gram)
        fh.write(np.ascontiguousarray(index.idf, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", index.n_entities))
        for eid, name in zip(index.entity_ids, index.entity_names):
            _write_str(fh, eid)
            _write_str(fh, name)
        fh.write(np.ascontiguousarray(m.indptr, dtype="<i8").tobytes())
        fh.write(struct.pack("<Q", m.nnz))
        fh.write(np.ascontiguousarray(m.indices, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(m.data, dtype="<f8").tobytes())


def load_index(path):
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ParseError(f"{path} is not a candidate index")
        n_min, n_max = struct.unpack("<BB", fh.read(2))
        (n_feat,) = struct.unpack("<I", fh.read(4))
        features = [_read_str(fh) for _ in range(n_feat)]
        idf = np.frombuffer(fh.read(8 * n_feat), dtype="<f8").copy()
        (n_ent,) = struct.unpack("<I", fh.read(4))
        entity_ids, entity_names = [], []
        for _ in range(n_ent):
            entity_ids.append(_read_str(fh))
            entity_names.append(_read_str(fh))
        indptr = np.frombuffer(fh.read(8 * (n_ent + 1)), dtype="<i8").copy()
        (nnz,) = struct.unpack("<Q", fh.read(8))
        indices = np.frombuffer(fh.read(8 * nnz), dtype="<i8").copy()
        data = np.frombuffer(fh.read(8 * nnz), dtype="<f8").copy()
    matrix = sp.csr_matrix((data, indices, indptr), shape=(n_ent, n_feat))
    return NgramIndex(feature_map={g: i for i, g in enumerate(features)},
                      idf=idf, matrix=matrix, entity_ids=entity_ids,
                      entity_names=entity_names, n_min=n_min, n_max=n_max)


def load_names_tsv(path):
    """Read an ``entity_id<TAB>canonical name`` file into an ordered dict."""
    names = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected entity_id<TAB>name", line=lineno)
            if parts[0] in names:
                raise ParseError(f"duplicate entity id {parts[0]!r}", line=lineno)
            names[parts[0]] = parts[1]
    return names


def save_names_tsv(names, path):
    with open(path, "w", encoding="utf-8") as fh:
        for eid, name in names.items():
            fh.write(f"{eid}\t{name}\n")
