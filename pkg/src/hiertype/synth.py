"""Synthetic hierarchies and corpora for self-contained experiments.

The typing world is a balanced type tree whose concepts each own a few
signature context words. A mention of an entity carries signature words
drawn from its leaf type's ancestor chain; with probability ``noise`` the
chain is truncated to a coarse prefix, so the mention is ambiguous below
some level. Entities are assigned to leaves with a skewed (rank-weighted)
distribution so some leaf types are rare, which is where hierarchy-aware
training is expected to pay off. Splits are by entity.
"""

import os
from dataclasses import dataclass

import numpy as np

from .candgen import build_index, save_names_tsv
from .corpus import Mention, WordEmbeddings, save_embeddings, save_mentions
from .ontology import Ontology
from .trainer import TaskData


@dataclass(eq=False)
class SynthWorld:
    onto: Ontology
    word_emb: WordEmbeddings
    data: TaskData
    names: dict | None = None   # entity id -> canonical name (linking)


def make_type_tree(branching=(4, 3, 2)):
    """Balanced tree: root plus one level per branching factor; the deepest
    level is the leaf mask."""
    onto = Ontology()
    root = onto.add_concept("entity")
    frontier = [root]
    for level, fanout in enumerate(branching, start=1):
        is_leaf = level == len(branching)
        nxt = []
        for parent in frontier:
            for j in range(fanout):
                name = f"t{level}_{onto.names[parent]}_{j}" if level > 1 \
                    else f"t1_{j}"
                child = onto.add_concept(name, leaf=is_leaf)
                onto.add_edge(child, parent)
                nxt.append(child)
        frontier = nxt
    return onto


def _ancestor_chain(onto, leaf):
    """Leaf's ancestors ordered root-first, excluding the root, plus leaf."""
    chain = []
    node = leaf
    while onto.parents(node):
        node = onto.parents(node)[0]
        chain.append(node)
    chain = [c for c in chain if onto.names[c] != "entity"]
    return list(reversed(chain)) + [leaf]


def _embeddings_for(vocab, d_w, rng):
    words = sorted(vocab)
    matrix = rng.normal(0.0, 1.0 / np.sqrt(d_w), size=(len(words), d_w))
    return WordEmbeddings(vocab={w: i for i, w in enumerate(words)},
                          matrix=matrix, frozen=True)


def make_typing_world(n_entities=200, mentions_per_entity=10, noise=0.4,
                      d_w=24, branching=(4, 3, 2), sig_per_type=2,
                      n_fillers=40, fillers_per_mention=3, eval_frac=0.15,
                      seed=0):
    rng = np.random.default_rng([seed, 0x51D])
    onto = make_type_tree(branching)
    leaves = [c for c in range(len(onto)) if onto.leaf_mask[c]]
    chains = {leaf: _ancestor_chain(onto, leaf) for leaf in leaves}

    sig = {c: [f"sig_{onto.names[c]}_{j}" for j in range(sig_per_type)]
           for c in range(len(onto))}
    fillers = [f"filler_{j}" for j in range(n_fillers)]

    # Rank-weighted leaf assignment: some leaves get many entities, some few.
    shuffled = rng.permutation(leaves)
    weights = 1.0 / (1.0 + np.arange(len(shuffled)))
    weights /= weights.sum()
    entity_leaf = {}
    for i in range(n_entities):
        if i < len(leaves):
            leaf = int(shuffled[i])       # every leaf owns at least one entity
        else:
            leaf = int(rng.choice(shuffled, p=weights))
        entity_leaf[f"ent{i}"] = leaf

    mentions = []
    for eid, leaf in entity_leaf.items():
        chain = chains[leaf]
        for _ in range(mentions_per_entity):
            if rng.random() < noise:
                depth = int(rng.integers(1, len(chain)))  # coarse-only mention
            else:
                depth = len(chain)
            ctx = [sig[c][int(rng.integers(len(sig[c])))] for c in chain[:depth]]
            ctx += [fillers[int(rng.integers(n_fillers))]
                    for _ in range(fillers_per_mention)]
            ctx = [ctx[int(k)] for k in rng.permutation(len(ctx))]
            pos = int(rng.integers(len(ctx) + 1))
            tokens = ctx[:pos] + [eid] + ctx[pos:]
            mentions.append(Mention(tokens=tokens, span=(pos, pos + 1),
                                    labels=frozenset({onto.names[leaf]}),
                                    entity=eid))

    # entity name tokens stay out of the embedding vocabulary (zero rows):
    # names are unique per entity, and giving them their own vectors lets the
    # model memorize training entities through the surface-form path instead
    # of learning from context
    vocab = {w for m in mentions for w in m.tokens} - set(entity_leaf)
    word_emb = _embeddings_for(vocab, d_w, rng)

    entity_order = rng.permutation(sorted(entity_leaf))
    n_dev = max(1, int(n_entities * eval_frac))
    dev_set = set(entity_order[:n_dev].tolist())
    test_set = set(entity_order[n_dev:2 * n_dev].tolist())
    splits = {"train": [], "dev": [], "test": []}
    for m in mentions:
        split = ("dev" if m.entity in dev_set
                 else "test" if m.entity in test_set else "train")
        splits[split].append(m)
    data = TaskData(train=splits["train"], dev=splits["dev"],
                    test=splits["test"])
    return SynthWorld(onto=onto, word_emb=word_emb, data=data)


_NAME_ALPHA = "abcdefghijklmnopqrstuvwxyz"


def _random_word(rng, lo=5, hi=9):
    n = int(rng.integers(lo, hi + 1))
    return "".join(_NAME_ALPHA[int(rng.integers(26))] for _ in range(n))


def random_name(rng, n_words=2):
    return " ".join(_random_word(rng) for _ in range(n_words))


def make_linking_world(n_entities=30, n_groups=5, mentions_per_entity=4,
                       perturb=0.3, d_w=16, n_fillers=20,
                       fillers_per_mention=2, seed=0):
    """Entity-linking world: entities under group concepts, mentions whose
    span is the (sometimes perturbed) canonical name."""
    rng = np.random.default_rng([seed, 0x11AC])
    onto = Ontology()
    root = onto.add_concept("umls_root")
    groups = [onto.add_concept(f"group{g}") for g in range(n_groups)]
    for g in groups:
        onto.add_edge(g, root)

    names = {}
    entity_group = {}
    for i in range(n_entities):
        eid = f"E{i:04d}"
        cid = onto.add_concept(eid, leaf=True)
        g = groups[i % n_groups]
        onto.add_edge(cid, g)
        names[eid] = random_name(rng)
        entity_group[eid] = g

    sig = {g: [f"gsig_{onto.names[g]}_{j}" for j in range(3)] for g in groups}
    fillers = [f"filler_{j}" for j in range(n_fillers)]

    mentions = []
    for eid, name in names.items():
        words = name.split()
        g = entity_group[eid]
        for _ in range(mentions_per_entity):
            span_words = list(words)
            if rng.random() < perturb:
                w = int(rng.integers(len(span_words)))
                chars = list(span_words[w])
                chars[int(rng.integers(len(chars)))] = _NAME_ALPHA[
                    int(rng.integers(26))]
                span_words[w] = "".join(chars)
            ctx = [sig[g][int(rng.integers(3))]]
            ctx += [fillers[int(rng.integers(n_fillers))]
                    for _ in range(fillers_per_mention)]
            pos = int(rng.integers(len(ctx) + 1))
            tokens = ctx[:pos] + span_words + ctx[pos:]
            mentions.append(Mention(tokens=tokens,
                                    span=(pos, pos + len(span_words)),
                                    entity=eid))

    vocab = {w for m in mentions for w in m.tokens}
    vocab.update(w for name in names.values() for w in name.split())
    word_emb = _embeddings_for(vocab, d_w, rng)

    order = rng.permutation(sorted(names))
    n_dev = max(1, n_entities // 6)
    dev_set = set(order[:n_dev].tolist())
    splits = {"train": [], "dev": []}
    for m in mentions:
        splits["dev" if m.entity in dev_set else "train"].append(m)
    data = TaskData(train=splits["train"], dev=splits["dev"],
                    index=build_index(names))
    return SynthWorld(onto=onto, word_emb=word_emb, data=data, names=names)


def save_world(world, outdir):
    """Write a world as the file formats the CLI consumes."""
    os.makedirs(outdir, exist_ok=True)
    world.onto.save(os.path.join(outdir, "edges.tsv"))
    world.onto.save_leaf_mask(os.path.join(outdir, "leaves.txt"))
    save_embeddings(world.word_emb, os.path.join(outdir, "embeddings.txt"))
    save_mentions(world.data.train, os.path.join(outdir, "train.jsonl"))
    save_mentions(world.data.dev, os.path.join(outdir, "dev.jsonl"))
    if world.data.test:
        save_mentions(world.data.test, os.path.join(outdir, "test.jsonl"))
    if world.names is not None:
        save_names_tsv(world.names, os.path.join(outdir, "names.tsv"))
