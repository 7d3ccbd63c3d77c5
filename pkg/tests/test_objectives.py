"""Scores and losses: hand arithmetic cases, algebraic identities, gradient
checks against finite differences."""

import math

import numpy as np
import pytest

import hiertype.numcore as nc
from hiertype import objectives as obj
from hiertype.encoder import MentionVector
from hiertype.errors import ShapeError
from hiertype.ontology import LinkSample


def vec(x, grad=False):
    return nc.Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad)


def mention(real, imag=None):
    return MentionVector(real=vec(real),
                         imag=vec(imag) if imag is not None else None)


def rand_types(rng, n, d, complex_emb=False, grad=True, scale=0.5):
    real = nc.Tensor(rng.normal(scale=scale, size=(n, d)), requires_grad=grad)
    imag = (nc.Tensor(rng.normal(scale=scale, size=(n, d)), requires_grad=grad)
            if complex_emb else None)
    return obj.TypeEmbeddings(real=real, imag=imag)


class TestTypeLogits:
    def test_orthogonal_type_scores_zero(self):
        types = obj.TypeEmbeddings(real=vec([[1.0, 0.0]]))
        out = obj.type_logits(mention([0.0, 2.0]), types)
        assert out.data[0] == 0.0

    def test_identity_bilinear_equals_flat(self):
        rng = np.random.default_rng(3)
        types = rand_types(rng, 7, 4)
        hier = obj.HierarchyParams(A=vec(np.eye(4)))
        v = mention(rng.normal(size=4))
        flat = obj.type_logits(v, types).data
        mapped = obj.type_logits(v, types, hier).data
        np.testing.assert_allclose(mapped, flat, atol=1e-12)

    def test_hand_dot_products(self):
        types = obj.TypeEmbeddings(real=vec([[1.0, 2.0], [0.5, -1.0]]))
        out = obj.type_logits(mention([3.0, -1.0]), types).data
        np.testing.assert_allclose(out, [1.0, 2.5])

    def test_complex_uses_hermitian_real_part(self):
        # Re(sum m_k conj(t_k)) = Re(m).Re(t) + Im(m).Im(t)
        types = obj.TypeEmbeddings(real=vec([[2.0]]), imag=vec([[3.0]]))
        out = obj.type_logits(mention([5.0], imag=[7.0]), types).data
        np.testing.assert_allclose(out, [2.0 * 5.0 + 3.0 * 7.0])

    def test_complex_requires_complex_mention(self):
        types = obj.TypeEmbeddings(real=vec([[1.0]]), imag=vec([[1.0]]))
        with pytest.raises(ShapeError):
            obj.type_logits(mention([1.0]), types)

    def test_matrix_form_matches_per_mention(self):
        rng = np.random.default_rng(5)
        types = rand_types(rng, 6, 3, complex_emb=True)
        reals = rng.normal(size=(4, 3))
        imags = rng.normal(size=(4, 3))
        batched = obj.type_logits_matrix(vec(reals), vec(imags), types).data
        for i in range(4):
            single = obj.type_logits(mention(reals[i], imags[i]), types).data
            np.testing.assert_allclose(batched[i], single, atol=1e-12)


class TestMentionTypingLoss:
    def test_zero_logits_give_ln2_per_type(self):
        loss = obj.mention_typing_loss(vec(np.zeros(7)), np.zeros(7))
        np.testing.assert_allclose(loss.item(), 7 * math.log(2), atol=1e-12)

    def test_confident_correct_logit(self):
        loss = obj.mention_typing_loss(vec([20.0]), np.ones(1))
        np.testing.assert_allclose(loss.item(), math.log1p(math.exp(-20.0)),
                                   atol=1e-15)
        assert loss.item() < 2.2e-9

    def test_nonnegative_on_random_inputs(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            logits = vec(rng.normal(scale=5, size=9))
            gold = (rng.random(9) < 0.4).astype(float)
            assert obj.mention_typing_loss(logits, gold).item() >= 0.0

    def test_gradient(self):
        rng = np.random.default_rng(13)
        logits = nc.Tensor(rng.normal(size=8), requires_grad=True)
        gold = (rng.random(8) < 0.5).astype(float)
        err = nc.grad_check(lambda: obj.mention_typing_loss(logits, gold),
                            [logits])
        assert err < 1e-4


class TestBagPooling:
    def test_single_row_identity(self):
        row = np.array([[0.3, -1.2, 4.0]])
        np.testing.assert_array_equal(obj.bag_logits(vec(row)).data, row[0])

    def test_two_identical_rows_shift_by_ln2(self):
        row = np.array([0.5, -2.0, 1.0])
        out = obj.bag_logits(vec(np.stack([row, row]))).data
        np.testing.assert_allclose(out, row + math.log(2), atol=1e-12)

    def test_random_matrix_vs_direct_oracle(self):
        rng = np.random.default_rng(17)
        mat = rng.normal(size=(3, 4))
        out = obj.bag_logits(vec(mat)).data
        ref = np.log(np.exp(mat).sum(axis=0))
        np.testing.assert_allclose(out, ref, atol=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(19)
        for _ in range(100):
            k = int(rng.integers(1, 8))
            mat = rng.normal(scale=6, size=(k, 5))
            out = obj.bag_logits(vec(mat)).data
            assert np.all(out >= mat.max(axis=0) - 1e-12)
            assert np.all(out <= mat.max(axis=0) + math.log(k) + 1e-12)

    def test_single_mention_bag_reduces_to_mention_loss(self):
        rng = np.random.default_rng(23)
        logits = rng.normal(size=(1, 6))
        gold = (rng.random(6) < 0.5).astype(float)
        bag = obj.entity_typing_loss(obj.bag_logits(vec(logits)), gold).item()
        single = obj.mention_typing_loss(vec(logits[0]), gold).item()
        np.testing.assert_allclose(bag, single, atol=1e-12)

    def test_pooled_logit_monotone_in_bag_size(self):
        base = np.full((1, 1), 2.0)
        prev = obj.bag_logits(vec(base)).data[0]
        for k in (2, 4, 8):
            cur = obj.bag_logits(vec(np.full((k, 1), 2.0))).data[0]
            assert cur > prev
            prev = cur

    def test_entity_loss_gradient(self):
        rng = np.random.default_rng(29)
        logits = nc.Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        gold = (rng.random(5) < 0.5).astype(float)
        err = nc.grad_check(
            lambda: obj.entity_typing_loss(obj.bag_logits(logits), gold),
            [logits])
        assert err < 1e-4


def toy_linker(rng, n_entities=6, d=3, complex_emb=False, alpha=1.0, beta=1.0):
    linker = obj.init_linker_params(rng, n_entities, d, complex_emb=complex_emb)
    linker.alpha.data = np.asarray(alpha, dtype=np.float64)
    linker.beta.data = np.asarray(beta, dtype=np.float64)
    return linker


class TestLinking:
    def test_alpha_zero_ranks_by_csim(self):
        rng = np.random.default_rng(31)
        linker = toy_linker(rng, alpha=0.0, beta=1.0)
        csim = np.array([0.1, 0.9, 0.4])
        scores = obj.linking_scores(mention(rng.normal(size=3)),
                                    np.array([0, 1, 2]), csim, linker).data
        assert np.argmax(scores) == np.argmax(csim)
        np.testing.assert_allclose(scores, csim, atol=1e-12)

    def test_beta_zero_orthogonal_embeddings(self):
        rng = np.random.default_rng(37)
        linker = toy_linker(rng, beta=0.0)
        linker.entity_embeddings.real.data[:] = 0.0
        linker.entity_embeddings.real.data[0, 0] = 1.0
        scores = obj.linking_scores(mention([0.0, 1.0, 0.0]),
                                    np.array([0, 1]), np.array([0.5, 0.5]),
                                    linker).data
        np.testing.assert_allclose(scores, [0.0, 0.0], atol=1e-12)

    def test_hand_combination(self):
        rng = np.random.default_rng(41)
        linker = toy_linker(rng, alpha=1.0, beta=2.0)
        linker.entity_embeddings.real.data[0] = [1.0, 0.0, 0.0]
        linker.entity_embeddings.real.data[1] = [0.0, 1.0, 0.0]
        scores = obj.linking_scores(mention([3.0, -1.0, 0.0]),
                                    np.array([0, 1]), np.array([0.25, 0.5]),
                                    linker).data
        np.testing.assert_allclose(scores, [3.0 + 0.5, -1.0 + 1.0])

    def test_single_gold_candidate_loss_zero(self):
        loss = obj.linking_loss(vec([4.2]), 0)
        np.testing.assert_allclose(loss.item(), 0.0, atol=1e-12)

    def test_uniform_hundred_candidates(self):
        loss = obj.linking_loss(vec(np.zeros(100)), 17)
        np.testing.assert_allclose(loss.item(), math.log(100), atol=1e-12)

    def test_argmax_invariant_to_constant_shift(self):
        rng = np.random.default_rng(43)
        scores = rng.normal(size=12)
        assert np.argmax(scores) == np.argmax(scores + 123.45)

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(44)
        for _ in range(50):
            scores = vec(rng.normal(scale=4, size=7))
            assert obj.linking_loss(scores, int(rng.integers(7))).item() >= 0.0

    def test_gradient_through_scores(self):
        rng = np.random.default_rng(47)
        linker = toy_linker(rng)
        v = MentionVector(real=nc.Tensor(rng.normal(size=3),
                                         requires_grad=True))
        csim = rng.random(4)
        params = [v.real, linker.alpha, linker.beta,
                  linker.entity_embeddings.real]

        def loss():
            scores = obj.linking_scores(v, np.array([0, 2, 3, 5]), csim, linker)
            return obj.linking_loss(scores, 1)

        assert nc.grad_check(loss, params) < 1e-4


class TestBilinearStruct:
    def test_zero_matrix(self):
        assert obj.bilinear_struct_score(vec([1.0, 2.0]), vec([3.0, 4.0]),
                                         vec(np.zeros((2, 2)))).item() == 0.0

    def test_identity_matrix_is_dot(self):
        a, b = [1.0, 2.0], [3.0, -1.0]
        out = obj.bilinear_struct_score(vec(a), vec(b), vec(np.eye(2))).item()
        np.testing.assert_allclose(out, 1.0)
        flipped = obj.bilinear_struct_score(vec(b), vec(a), vec(np.eye(2))).item()
        np.testing.assert_allclose(out, flipped)

    def test_hand_arithmetic_d2(self):
        A = np.array([[1.0, 2.0], [0.0, -1.0]])
        c1, c2 = np.array([1.0, 3.0]), np.array([-2.0, 0.5])
        expected = c1 @ A @ c2
        out = obj.bilinear_struct_score(vec(c1), vec(c2), vec(A)).item()
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(53)
        emb = rand_types(rng, 8, 4)
        hier = obj.HierarchyParams(A=nc.Tensor(rng.normal(size=(4, 4)),
                                               requires_grad=True))
        children = [0, 3, 5]
        parents = [1, 2, 7]
        batched = obj.struct_scores(children, parents, emb, hier).data
        for i, (c, p) in enumerate(zip(children, parents)):
            single = obj.bilinear_struct_score(
                vec(emb.real.data[c]), vec(emb.real.data[p]), hier.A).item()
            np.testing.assert_allclose(batched[i], single, atol=1e-12)


class TestComplexStruct:
    def test_d1_hand_expansion(self):
        # c1 = 1+2i, r = i, c2 = 3+0i -> -6
        out = obj.complex_struct_score((vec([1.0]), vec([2.0])),
                                       (vec([3.0]), vec([0.0])),
                                       (vec([0.0]), vec([1.0]))).item()
        np.testing.assert_allclose(out, -6.0, atol=1e-12)

    def test_real_reduction(self):
        rng = np.random.default_rng(59)
        c1, c2, r = rng.normal(size=(3, 4))
        zero = np.zeros(4)
        out = obj.complex_struct_score((vec(c1), vec(zero)),
                                       (vec(c2), vec(zero)),
                                       (vec(r), vec(zero))).item()
        np.testing.assert_allclose(out, np.sum(c1 * r * c2), atol=1e-12)

    def test_antisymmetric_with_pure_imaginary_relation(self):
        rng = np.random.default_rng(61)
        r = (vec(np.zeros(5)), vec(rng.normal(size=5)))
        for _ in range(200):
            a = (vec(rng.normal(size=5)), vec(rng.normal(size=5)))
            b = (vec(rng.normal(size=5)), vec(rng.normal(size=5)))
            sab = obj.complex_struct_score(a, b, r).item()
            sba = obj.complex_struct_score(b, a, r).item()
            assert abs(sab + sba) < 1e-9

    def test_batched_matches_single(self):
        rng = np.random.default_rng(67)
        emb = rand_types(rng, 6, 3, complex_emb=True)
        hier = obj.HierarchyParams(
            r_real=nc.Tensor(rng.normal(size=3), requires_grad=True),
            r_imag=nc.Tensor(rng.normal(size=3), requires_grad=True))
        children, parents = [0, 4], [2, 1]
        batched = obj.struct_scores(children, parents, emb, hier).data
        for i, (c, p) in enumerate(zip(children, parents)):
            single = obj.complex_struct_score(
                (vec(emb.real.data[c]), vec(emb.imag.data[c])),
                (vec(emb.real.data[p]), vec(emb.imag.data[p])),
                (hier.r_real, hier.r_imag)).item()
            np.testing.assert_allclose(batched[i], single, atol=1e-12)


class TestStructLoss:
    def sample(self):
        return LinkSample(positive=(0, 1), negatives=[(0, 2), (0, 3)])

    def test_saturation_drives_loss_to_zero(self):
        emb = obj.TypeEmbeddings(real=vec([[50.0], [1.0], [-1.0], [-1.0]],
                                          grad=True))
        hier = obj.HierarchyParams(A=vec(np.eye(1), grad=True))
        loss = obj.struct_loss(self.sample(), emb, hier).item()
        assert loss < 1e-9

    def test_all_zero_scores(self):
        emb = obj.TypeEmbeddings(real=vec(np.zeros((4, 2)), grad=True))
        hier = obj.HierarchyParams(A=vec(np.eye(2), grad=True))
        sample = LinkSample(positive=(0, 1), negatives=[(0, 2)])
        np.testing.assert_allclose(obj.struct_loss(sample, emb, hier).item(),
                                   2 * math.log(2), atol=1e-12)

    def test_bilinear_gradient(self):
        rng = np.random.default_rng(71)
        emb = rand_types(rng, 5, 3)
        hier = obj.HierarchyParams(A=nc.Tensor(rng.normal(scale=0.5,
                                                          size=(3, 3)),
                                               requires_grad=True))
        sample = LinkSample(positive=(0, 1), negatives=[(0, 2), (0, 4)])
        err = nc.grad_check(lambda: obj.struct_loss(sample, emb, hier),
                            [emb.real, hier.A])
        assert err < 1e-4

    def test_complex_gradient(self):
        rng = np.random.default_rng(73)
        emb = rand_types(rng, 5, 3, complex_emb=True)
        hier = obj.HierarchyParams(
            r_real=nc.Tensor(rng.normal(scale=0.5, size=3), requires_grad=True),
            r_imag=nc.Tensor(rng.normal(scale=0.5, size=3), requires_grad=True))
        sample = LinkSample(positive=(1, 2), negatives=[(1, 0), (1, 4)])
        err = nc.grad_check(lambda: obj.struct_loss(sample, emb, hier),
                            [emb.real, emb.imag, hier.r_real, hier.r_imag])
        assert err < 1e-4


class TestJointLoss:
    def test_gamma_zero(self):
        out = obj.joint_loss(vec(1.5), vec(99.0), 0.0)
        np.testing.assert_allclose(out.item(), 1.5)

    def test_gamma_one_plain_sum(self):
        out = obj.joint_loss(vec(1.5), vec(0.25), 1.0)
        np.testing.assert_allclose(out.item(), 1.75)

    def test_hand_weighted(self):
        out = obj.joint_loss(vec(1.0), vec(0.4), 0.5)
        np.testing.assert_allclose(out.item(), 1.2)

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            obj.joint_loss(vec(1.0), vec(1.0), -0.1)


class TestHierarchyParams:
    def test_exactly_one_parameterization(self):
        with pytest.raises(ShapeError):
            obj.HierarchyParams()
        with pytest.raises(ShapeError):
            obj.HierarchyParams(A=vec(np.eye(2)), r_real=vec([1.0]),
                                r_imag=vec([0.0]))
