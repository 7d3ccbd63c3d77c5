"""Concept hierarchy over types or entities: a DAG of IS-A edges.

Edges run child -> parent (specific -> general). Ancestor queries are lazy
BFS with per-node memoization; the cache is dropped on mutation. Negative
link sampling corrupts the parent slot only.

File formats:
  edge list  - UTF-8 text, one ``child<TAB>parent`` edge per line; a line
               with a single name registers an isolated concept; ``#``
               starts a comment.
  leaf mask  - one concept name per line; listed concepts are the "leaf
               task labels" ranking metrics are restricted to.
"""

from dataclasses import dataclass, field

from .errors import CycleError, Degenerate, ParseError, UnknownConcept


@dataclass
class LinkSample:
    """One positive IS-A link plus its parent-corrupted negatives."""

    positive: tuple[int, int]
    negatives: list[tuple[int, int]] = field(default_factory=list)


class Ontology:
    def __init__(self):
        self.names = []
        self._ids = {}
        self._parents = []      # parents[c] = list of parent ids, insertion order
        self._edge_list = []    # (child, parent) in insertion order
        self._edge_set = set()
        self.leaf_mask = []
        self._anc_cache = {}

    # construction ----------------------------------------------------------
    def add_concept(self, name, leaf=False):
        """Register a concept; returns its dense id. Re-adding is an error."""
        if name in self._ids:
            raise ParseError(f"concept {name!r} registered twice")
        cid = len(self.names)
        self.names.append(name)
        self._ids[name] = cid
        self._parents.append([])
        self.leaf_mask.append(bool(leaf))
        self._anc_cache.clear()
        return cid

    def ensure_concept(self, name):
        """Return the id for name, registering it if new."""
        if name in self._ids:
            return self._ids[name]
        return self.add_concept(name)

    def id_of(self, name):
        try:
            return self._ids[name]
        except KeyError:
            raise UnknownConcept(f"unknown concept {name!r}") from None

    def _check_id(self, c):
        if not 0 <= c < len(self.names):
            raise UnknownConcept(f"unknown concept id {c}")

    def __len__(self):
        return len(self.names)

    @property
    def edges(self):
        return self._edge_set

    @property
    def edge_list(self):
        return list(self._edge_list)

    def add_edge(self, child, parent):
        """Insert child -> parent, rejecting self-loops, duplicates, cycles."""
        self._check_id(child)
        self._check_id(parent)
        if child == parent:
            raise CycleError(f"self-loop on {self.names[child]!r}",
                             path=[child, child])
        if (child, parent) in self._edge_set:
            raise ParseError(f"duplicate edge {self.names[child]!r} -> "
                             f"{self.names[parent]!r}")
        path = self._path_up(parent, child)
        if path is not None:
            raise CycleError(
                "edge closes a cycle: "
                + " -> ".join(self.names[c] for c in [child] + path),
                path=[child] + path)
        self._parents[child].append(parent)
        self._edge_list.append((child, parent))
        self._edge_set.add((child, parent))
        self._anc_cache.clear()

    def _path_up(self, start, goal):
        """Upward path start -> ... -> goal, or None; used for cycle reports."""
        if start == goal:
            return [start]
        prev = {start: None}
        frontier = [start]
        while frontier:
            nxt = []
            for c in frontier:
                for p in self._parents[c]:
                    if p not in prev:
                        prev[p] = c
                        if p == goal:
                            path = [p]
                            while path[-1] is not None and prev[path[-1]] is not None:
                                path.append(prev[path[-1]])
                            path.reverse()
                            return path
                        nxt.append(p)
            frontier = nxt
        return None

    # queries ----------------------------------------------------------------
    def parents(self, c):
        self._check_id(c)
        return list(self._parents[c])

    def ancestors(self, c):
        """All concepts reachable from c via child->parent edges, excluding c."""
        self._check_id(c)
        cached = self._anc_cache.get(c)
        if cached is not None:
            return cached
        seen = set()
        frontier = list(self._parents[c])
        while frontier:
            nxt = []
            for p in frontier:
                if p not in seen:
                    seen.add(p)
                    nxt.extend(self._parents[p])
            frontier = nxt
        result = frozenset(seen)
        self._anc_cache[c] = result
        return result

    def expand_labels(self, labels):
        """Transitive closure of a label set: labels plus all their ancestors."""
        out = set()
        for c in labels:
            self._check_id(c)
            out.add(c)
            out |= self.ancestors(c)
        return out

    def sample_links(self, n, rng):
        """Draw one uniform positive edge and n parent-corrupted negatives.

        Each negative resamples the parent uniformly over all concepts until
        the pair is not a true edge; deterministic given the rng state.
        """
        if not self._edge_list:
            raise Degenerate("ontology has no edges to sample")
        if n < 1:
            raise ValueError(f"need n >= 1 negatives, got {n}")
        child, parent = self._edge_list[rng.integers(len(self._edge_list))]
        n_concepts = len(self.names)
        negatives = []
        for _ in range(n):
            for _attempt in range(1000 * n_concepts):
                cand = int(rng.integers(n_concepts))
                if (child, cand) not in self._edge_set:
                    negatives.append((child, cand))
                    break
            else:
                raise Degenerate(
                    f"every corruption of {self.names[child]!r} is a true edge")
        return LinkSample(positive=(child, parent), negatives=negatives)

    # persistence -------------------------------------------------------------
    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# child<TAB>parent per line; single name = isolated concept\n")
            in_edges = {c for edge in self._edge_list for c in edge}
            for cid, name in enumerate(self.names):
                if cid not in in_edges:
                    fh.write(f"{name}\n")
            for child, parent in self._edge_list:
                fh.write(f"{self.names[child]}\t{self.names[parent]}\n")

    @classmethod
    def load(cls, path):
        onto = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) == 1:
                    onto.ensure_concept(parts[0])
                elif len(parts) == 2:
                    child = onto.ensure_concept(parts[0])
                    parent = onto.ensure_concept(parts[1])
                    try:
                        onto.add_edge(child, parent)
                    except (CycleError, ParseError) as exc:
                        raise type(exc)(f"line {lineno}: {exc}") from exc
                else:
                    raise ParseError("expected 1 or 2 tab-separated fields",
                                     line=lineno)
        return onto

    def save_leaf_mask(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for cid, name in enumerate(self.names):
                if self.leaf_mask[cid]:
                    fh.write(f"{name}\n")

    def load_leaf_mask(self, path):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                name = line.strip()
                if not name or name.startswith("#"):
                    continue
                try:
                    self.leaf_mask[self.id_of(name)] = True
                except UnknownConcept:
                    raise ParseError(f"leaf-mask concept {name!r} not in ontology",
                                     line=lineno) from None
