"""Scoring functions and losses.

Type/entity scores are inner products against embedding rows; the bilinear
hierarchy variant inserts the shared relation matrix A before scoring, and
the complex variant scores with the real part of a Hermitian product. All
BCE losses run on logits through the stable softplus identities
``-log sigma(y) = softplus(-y)`` and ``-log(1 - sigma(y)) = softplus(y)``.
"""

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .encoder import glorot
from .errors import ShapeError


@dataclass(eq=False)
class TypeEmbeddings:
    """Embedding rows for types or entities; imag present for complex models."""

    real: nc.Tensor
    imag: nc.Tensor | None = None

    @property
    def count(self):
        return self.real.shape[0]

    def named(self, prefix="types"):
        out = {f"{prefix}.real": self.real}
        if self.imag is not None:
            out[f"{prefix}.imag"] = self.imag
        return out


@dataclass(eq=False)
class HierarchyParams:
    """Structure-loss parameters: exactly one of A (real bilinear) or the
    complex relation vector (r_real, r_imag) is active."""

    A: nc.Tensor | None = None
    r_real: nc.Tensor | None = None
    r_imag: nc.Tensor | None = None
    gamma: float = 0.5

    def __post_init__(self):
        has_a = self.A is not None
        has_r = self.r_real is not None and self.r_imag is not None
        if has_a == has_r:
            raise ShapeError("exactly one of A or r_isa must be set")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")

    def named(self, prefix="hier"):
        if self.A is not None:
            return {f"{prefix}.A": self.A}
        return {f"{prefix}.r_real": self.r_real, f"{prefix}.r_imag": self.r_imag}


@dataclass(eq=False)
class LinkerParams:
    """Learned linear combination of embedding score and string similarity."""

    alpha: nc.Tensor
    beta: nc.Tensor
    entity_embeddings: TypeEmbeddings

    def named(self, prefix="link"):
        out = {f"{prefix}.alpha": self.alpha, f"{prefix}.beta": self.beta}
        out.update(self.entity_embeddings.named(f"{prefix}.entities"))
        return out


def init_type_embeddings(rng, count, dim, complex_emb=False):
    return TypeEmbeddings(
        real=glorot(rng, (count, dim)),
        imag=glorot(rng, (count, dim)) if complex_emb else None,
    )


def init_hierarchy_params(rng, dim, complex_emb=False, gamma=0.5):
    if complex_emb:
        return HierarchyParams(r_real=glorot(rng, (dim,)),
                               r_imag=glorot(rng, (dim,)), gamma=gamma)
    return HierarchyParams(A=glorot(rng, (dim, dim)), gamma=gamma)


def init_linker_params(rng, n_entities, dim, complex_emb=False):
    return LinkerParams(
        alpha=nc.Tensor(1.0, requires_grad=True),
        beta=nc.Tensor(1.0, requires_grad=True),
        entity_embeddings=init_type_embeddings(rng, n_entities, dim, complex_emb),
    )


# --- type / entity scoring -------------------------------------------------

def type_logits(v, types, hier=None):
    """Scores of one mention against every type row.

    Flat real: t_j . m; bilinear hierarchy: t_j . (A m); complex:
    Re(m) . Re(t_j) + Im(m) . Im(t_j), the real part of the Hermitian product.
    """
    if types.imag is not None:
        if v.imag is None:
            raise ShapeError("complex type embeddings need a complex mention")
        return (nc.matmul(types.real, v.real) + nc.matmul(types.imag, v.imag))
    target = v.real
    if hier is not None and hier.A is not None:
        target = nc.matmul(hier.A, target)
    return nc.matmul(types.real, target)


def type_logits_matrix(v_real, v_imag, types, hier=None):
    """Batched type_logits: (k,d) mention rows -> (k,|T|) logit rows."""
    if types.imag is not None:
        if v_imag is None:
            raise ShapeError("complex type embeddings need complex mentions")
        return (nc.matmul(v_real, nc.transpose(types.real))
                + nc.matmul(v_imag, nc.transpose(types.imag)))
    if hier is not None and hier.A is not None:
        v_real = nc.matmul(v_real, nc.transpose(hier.A))
    return nc.matmul(v_real, nc.transpose(types.real))


def mention_typing_loss(logits, gold):
    """Multi-label BCE on logits against a binary gold vector."""
    gold = np.asarray(gold, dtype=np.float64)
    if gold.shape != logits.shape:
        raise ShapeError(f"gold {gold.shape} vs logits {logits.shape}")
    return nc.tsum(nc.mul(nc.softplus(nc.mul(logits, -1.0)), gold)
                   + nc.mul(nc.softplus(logits), 1.0 - gold))


def bag_logits(per_mention):
    """Elementwise LogSumExp pooling of k mention logit rows."""
    if per_mention.ndim != 2:
        raise ShapeError(f"expected (k,|T|) logits, got {per_mention.shape}")
    return nc.logsumexp(per_mention, axis=0)


def entity_typing_loss(pooled_logits, gold):
    """Entity-level MIML BCE; pooled logits are still logits, so same form."""
    return mention_typing_loss(pooled_logits, gold)


# --- linking -----------------------------------------------------------------

def linking_scores(v, cand_rows, csim, linker, hier=None):
    """phi(m,e) = alpha * (e . m) + beta * csim for each candidate row."""
    csim = np.asarray(csim, dtype=np.float64)
    if len(cand_rows) != csim.shape[0]:
        raise ShapeError("candidate ids and csim lengths differ")
    ents = linker.entity_embeddings
    E = nc.gather_rows(ents.real, cand_rows)
    if ents.imag is not None:
        if v.imag is None:
            raise ShapeError("complex entity embeddings need a complex mention")
        dots = nc.matmul(E, v.real) + nc.matmul(nc.gather_rows(ents.imag, cand_rows),
                                                v.imag)
    else:
        target = v.real
        if hier is not None and hier.A is not None:
            target = nc.matmul(hier.A, target)
        dots = nc.matmul(E, target)
    return nc.mul(dots, linker.alpha) + nc.mul(nc.Tensor(csim), linker.beta)


def linking_loss(scores, gold_index):
    """Multinomial cross entropy over the candidate set."""
    if not 0 <= gold_index < scores.shape[0]:
        raise ShapeError(f"gold index {gold_index} outside {scores.shape[0]} "
                         "candidates")
    return nc.logsumexp(scores) - nc.take(scores, gold_index)


# --- hierarchical structure ---------------------------------------------------

def bilinear_struct_score(c1, c2, A):
    """Real bilinear link score c1^T A c2; one shared table on both sides."""
    return nc.matmul(c1, nc.matmul(A, c2))


def complex_struct_score(c1, c2, r):
    """Re(<c1, r, conj(c2)>) expanded into its four real trilinear terms.

    c1, c2, r are (real, imag) tensor pairs. Antisymmetric in (c1, c2)
    when r is purely imaginary.
    """
    c1r, c1i = c1
    c2r, c2i = c2
    rr, ri = r
    terms = (nc.mul(nc.mul(c1r, rr), c2r)
             + nc.mul(nc.mul(c1r, ri), c2i)
             + nc.mul(nc.mul(c1i, rr), c2i)
             - nc.mul(nc.mul(c1i, ri), c2r))
    return nc.tsum(terms)

def struct_scores(children, parents, embeddings, hier):
    """Link scores for aligned child/parent id arrays (batched)."""
    children = np.asarray(children, dtype=np.intp)
    parents = np.asarray(parents, dtype=np.intp)
    C1 = nc.gather_rows(embeddings.real, children)
    C2 = nc.gather_rows(embeddings.real, parents)
    if hier.A is not None:
        return nc.tsum(nc.mul(C1, nc.matmul(C2, nc.transpose(hier.A))), axis=1)
    if embeddings.imag is None:
        raise ShapeError("complex structure score needs complex embeddings")
    C1i = nc.gather_rows(embeddings.imag, children)
    C2i = nc.gather_rows(embeddings.imag, parents)
    terms = (nc.mul(nc.mul(C1, hier.r_real), C2)
             + nc.mul(nc.mul(C1, hier.r_imag), C2i)
             + nc.mul(nc.mul(C1i, hier.r_real), C2i)
             - nc.mul(nc.mul(C1i, hier.r_imag), C2))
    return nc.tsum(terms, axis=1)


def struct_loss(sample, embeddings, hier):
    """BCE on one positive link against its sampled negatives."""
    pos = struct_scores([sample.positive[0]], [sample.positive[1]],
                        embeddings, hier)
    loss = nc.tsum(nc.softplus(nc.mul(pos, -1.0)))
    if sample.negatives:
        neg = struct_scores([c for c, _ in sample.negatives],
                            [p for _, p in sample.negatives],
                            embeddings, hier)
        loss = loss + nc.tsum(nc.softplus(neg))
    return loss


def joint_loss(task_loss, structure_loss, gamma):
    """L = L_task + gamma * L_struct."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return task_loss + nc.mul(structure_loss, gamma)
