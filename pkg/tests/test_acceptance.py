"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``. The two experiment
criteria (overfit sanity, hierarchy benefit) train real models and dominate
the runtime; everything else is property- or oracle-based and fast.
"""

import dataclasses
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

import hiertype.numcore as nc
from hiertype import candgen
from hiertype import objectives as obj
from hiertype.corpus import Mention, WordEmbeddings, build_bags
from hiertype.encoder import encode_mention, init_encoder_params
from hiertype.metrics import (figer_decode, linking_accuracy, macro_f1,
                              mean_average_precision, micro_f1,
                              strict_accuracy)
from hiertype.numcore.tensor import _sigmoid
from hiertype.ontology import LinkSample
from hiertype.synth import make_typing_world
from hiertype.trainer import (Adam, Model, TrainConfig, evaluate_model,
                              prepare_typing_examples, train,
                              _typing_batch_loss)

GRAD_TOL = 1e-4
GRAD_EPS = 1e-3


@contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {number} ({name}): FAIL")
        raise
    print(f"[acceptance] criterion {number} ({name}): PASS")


# --- criterion 1: gradient oracle --------------------------------------------

def toy_setup(seed=0, complex_proj=False, n_types=4):
    rng = np.random.default_rng(seed)
    words = ["alpha", "beta", "gamma"]
    emb = WordEmbeddings(vocab={w: i for i, w in enumerate(words)},
                         matrix=rng.normal(scale=0.5, size=(3, 3)))
    params = init_encoder_params(rng, d_w=3, d_p=2, d=3, conv_width=5,
                                 s_max=4, complex_proj=complex_proj)
    types = obj.init_type_embeddings(rng, n_types, 3, complex_emb=complex_proj)
    mention = Mention(tokens=["alpha", "beta"], span=(0, 1))
    return rng, emb, params, types, mention


def test_criterion_1_gradient_oracle():
    with criterion(1, "gradient oracle on every loss"):
        start = time.monotonic()

        # mention-level BCE through the full encoder
        _, emb, params, types, mention = toy_setup(seed=1)
        gold = np.array([1.0, 0.0, 1.0, 0.0])

        def mention_loss():
            v = encode_mention(mention, emb, params)
            return obj.mention_typing_loss(obj.type_logits(v, types), gold)

        tensors = list(params.named().values()) + [types.real]
        assert nc.grad_check(mention_loss, tensors, eps=GRAD_EPS) < GRAD_TOL

        # entity-level MIML BCE with LogSumExp pooling over a 2-mention bag
        _, emb2, params2, types2, _ = toy_setup(seed=2)
        bag = [Mention(tokens=["alpha", "beta"], span=(0, 1)),
               Mention(tokens=["gamma", "alpha", "beta"], span=(1, 3))]

        def miml_loss():
            rows = nc.stack([encode_mention(m, emb2, params2).real
                             for m in bag])
            logits = obj.type_logits_matrix(rows, None, types2)
            return obj.entity_typing_loss(obj.bag_logits(logits), gold)

        tensors = list(params2.named().values()) + [types2.real]
        assert nc.grad_check(miml_loss, tensors, eps=GRAD_EPS) < GRAD_TOL

        # linking multinomial CE with the learned linear combination
        rng, emb3, params3, _, mention3 = toy_setup(seed=3)
        linker = obj.init_linker_params(rng, 5, 3)
        csim = rng.random(3)

        def link_loss():
            v = encode_mention(mention3, emb3, params3)
            scores = obj.linking_scores(v, np.array([0, 2, 4]), csim, linker)
            return obj.linking_loss(scores, 1)

        tensors = (list(params3.named().values())
                   + [linker.alpha, linker.beta, linker.entity_embeddings.real])
        assert nc.grad_check(link_loss, tensors, eps=GRAD_EPS) < GRAD_TOL

        # bilinear structure BCE
        rng4 = np.random.default_rng(4)
        emb_t = obj.init_type_embeddings(rng4, 5, 3)
        hier = obj.init_hierarchy_params(rng4, 3)
        sample = LinkSample(positive=(0, 1), negatives=[(0, 2), (0, 4)])

        def bilinear_loss():
            return obj.struct_loss(sample, emb_t, hier)

        assert nc.grad_check(bilinear_loss, [emb_t.real, hier.A],
                             eps=GRAD_EPS) < GRAD_TOL

        # complex structure BCE
        rng5 = np.random.default_rng(5)
        emb_c = obj.init_type_embeddings(rng5, 5, 3, complex_emb=True)
        hier_c = obj.init_hierarchy_params(rng5, 3, complex_emb=True)

        def complex_loss():
            return obj.struct_loss(sample, emb_c, hier_c)

        assert nc.grad_check(complex_loss,
                             [emb_c.real, emb_c.imag, hier_c.r_real,
                              hier_c.r_imag], eps=GRAD_EPS) < GRAD_TOL

        # joint loss with shared A between classification and structure
        _, emb6, params6, types6, mention6 = toy_setup(seed=6)
        hier6 = obj.init_hierarchy_params(np.random.default_rng(7), 3,
                                          gamma=0.5)
        sample6 = LinkSample(positive=(0, 1), negatives=[(0, 2), (0, 3)])

        def joint():
            v = encode_mention(mention6, emb6, params6)
            task = obj.mention_typing_loss(
                obj.type_logits(v, types6, hier6), gold)
            struct = obj.struct_loss(sample6, types6, hier6)
            return obj.joint_loss(task, struct, hier6.gamma)

        tensors = list(params6.named().values()) + [types6.real, hier6.A]
        assert nc.grad_check(joint, tensors, eps=GRAD_EPS) < GRAD_TOL

        elapsed = time.monotonic() - start
        assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"


# --- criterion 2: ComplEx antisymmetry -----------------------------------------

def test_criterion_2_complex_antisymmetry():
    with criterion(2, "ComplEx antisymmetry, purely imaginary relation"):
        rng = np.random.default_rng(42)
        d = 8
        r = (nc.Tensor(np.zeros(d)), nc.Tensor(rng.normal(size=d)))
        worst = 0.0
        for _ in range(1000):
            a = (nc.Tensor(rng.normal(size=d)), nc.Tensor(rng.normal(size=d)))
            b = (nc.Tensor(rng.normal(size=d)), nc.Tensor(rng.normal(size=d)))
            sab = obj.complex_struct_score(a, b, r).item()
            sba = obj.complex_struct_score(b, a, r).item()
            worst = max(worst, abs(sab + sba))
        assert worst < 1e-9, f"max |s(a,b)+s(b,a)| = {worst}"


# --- criterion 3: bilinear collapse --------------------------------------------

def test_criterion_3_bilinear_identity_collapse():
    with criterion(3, "A=identity collapses to flat scoring"):
        rng, emb, params, types, _ = toy_setup(seed=8, n_types=9)
        hier = obj.HierarchyParams(A=nc.Tensor(np.eye(3)))
        vocab = list(emb.vocab)
        for _ in range(100):
            n_tok = int(rng.integers(1, 6))
            tokens = [vocab[int(rng.integers(3))] for _ in range(n_tok)]
            start = int(rng.integers(n_tok))
            end = int(rng.integers(start + 1, n_tok + 1))
            m = Mention(tokens=tokens, span=(start, end))
            v = encode_mention(m, emb, params)
            flat = obj.type_logits(v, types).data
            mapped = obj.type_logits(v, types, hier).data
            assert np.max(np.abs(flat - mapped)) < 1e-12


# --- criterion 4: closure oracle -----------------------------------------------

def test_criterion_4_closure_vs_bfs_oracle():
    with criterion(4, "transitive closure equals BFS reachability"):
        from test_ontology import bfs_reachable, random_dag

        rng = np.random.default_rng(1234)
        for _ in range(50):
            n = int(rng.integers(2, 101))
            onto, edges = random_dag(rng, n, int(rng.integers(1, 3 * n)))
            for c in range(n):
                assert onto.ancestors(c) == bfs_reachable(edges, c)
                labels = {c}
                expanded = onto.expand_labels(labels)
                assert expanded == {c} | bfs_reachable(edges, c)


# --- criterion 5: LogSumExp pooling ----------------------------------------------

def test_criterion_5_logsumexp_pooling_bounds():
    with criterion(5, "LSE pooling bounds and k=1 identity"):
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            k = int(rng.integers(1, 9))
            mat = rng.normal(scale=8.0, size=(k, 5))
            pooled = obj.bag_logits(nc.Tensor(mat)).data
            hi = mat.max(axis=0)
            assert np.all(pooled >= hi - 1e-12)
            assert np.all(pooled <= hi + math.log(k) + 1e-12)
        row = rng.normal(size=(1, 7))
        assert np.array_equal(obj.bag_logits(nc.Tensor(row)).data, row[0])


# --- criterion 6: overfit sanity ---------------------------------------------------

def test_criterion_6_overfit_sanity():
    with criterion(6, "64-mention overfit within 500 Adam steps"):
        start = time.monotonic()
        world = make_typing_world(n_entities=16, mentions_per_entity=4,
                                  noise=0.3, d_w=12, branching=(2, 2), seed=0)
        mentions = world.data.train + world.data.dev + world.data.test
        assert len(mentions) == 64
        config = dataclasses.replace(
            TrainConfig(), task="mention-typing", d_w=12, d_p=4, d=10,
            s_max=12, dropout_keep=1.0, l2=0.0, lr=0.01, batch_size=32, seed=0)
        onto = world.onto
        examples = prepare_typing_examples(mentions, onto, use_closure=False)
        model = Model(config, len(onto), world.word_emb,
                      np.random.default_rng(0))
        opt = Adam(model.named_parameters(), lr=config.lr, l2=config.l2)
        rng = np.random.default_rng(1)
        steps = 0
        final_loss = None
        while steps < 500:
            order = rng.permutation(len(examples))
            for lo in range(0, len(order), config.batch_size):
                batch = [examples[int(i)] for i in order[lo:lo + 32]]
                loss = _typing_batch_loss(model, batch, rng)
                opt.zero_grad()
                loss.backward()
                opt.step()
                final_loss = loss.item()
                steps += 1
                if steps >= 500:
                    break
        preds, golds = [], []
        for m, _vec in examples:
            logits = obj.type_logits(model.encode(m), model.types)
            preds.append(figer_decode(_sigmoid(logits.data)))
            golds.append({onto.id_of(n) for n in m.labels})
        accuracy = strict_accuracy(preds, golds)
        elapsed = time.monotonic() - start
        print(f"    overfit: loss {final_loss:.5f}, strict {accuracy:.3f}, "
              f"{elapsed:.1f}s")
        assert final_loss < 0.01
        assert accuracy == 1.0
        assert elapsed < 120.0


# --- criterion 7: hierarchy benefit -------------------------------------------------

def _directional_run(seed, hierarchical):
    world = make_typing_world(n_entities=200, mentions_per_entity=10,
                              noise=0.4, d_w=24, branching=(4, 3, 2),
                              seed=seed)
    config = dataclasses.replace(
        TrainConfig(), task="entity-typing", use_closure=hierarchical,
        use_hierarchy=hierarchical, gamma=0.5, d_w=24, d_p=6, d=24, s_max=16,
        dropout_keep=0.8, l2=1e-5, lr=3e-3, n_negatives=16, batch_size=8,
        struct_samples_per_batch=2, max_epochs=30, patience=99, seed=seed)
    ckpt = train(config, world.data, world.onto, world.word_emb)
    model = ckpt.build_model(world.word_emb)
    test_bags = build_bags(world.data.test, world.onto, use_closure=False)
    value, _ = evaluate_model(model, test_bags, world.onto, config)
    return value


def test_criterion_7_hierarchy_benefit():
    with criterion(7, "closure+hierarchy beats flat on synthetic MAP"):
        start = time.monotonic()
        flat, hier = [], []
        for seed in range(5):
            flat.append(_directional_run(seed, hierarchical=False))
            hier.append(_directional_run(seed, hierarchical=True))
            print(f"    seed {seed}: flat MAP {flat[-1]:.4f}, "
                  f"+closure+hierarchy MAP {hier[-1]:.4f}")
        elapsed = time.monotonic() - start
        gaps = [h - f for f, h in zip(flat, hier)]
        print(f"    mean flat {np.mean(flat):.4f}, mean hier "
              f"{np.mean(hier):.4f}, positive gaps {sum(g > 0 for g in gaps)}"
              f"/5, {elapsed:.0f}s")
        assert np.mean(hier) >= np.mean(flat)
        assert sum(g > 0 for g in gaps) >= 4
        assert elapsed < 600.0


# --- criterion 8: FIGER decode ------------------------------------------------------

def test_criterion_8_figer_decode_rule():
    with criterion(8, "FIGER decode rule"):
        assert figer_decode([0.4, 0.3]) == {0}
        assert figer_decode([0.6, 0.7, 0.2]) == {1, 0}
        assert figer_decode([0.5, 0.5, 0.5]) == {0}
        assert figer_decode([0.2, 0.9, 0.51]) == {1, 2}
        assert figer_decode([0.1]) == {0}
        rng = np.random.default_rng(11)
        for _ in range(500):
            probs = rng.random(int(rng.integers(1, 12)))
            decoded = figer_decode(probs)
            assert decoded, "decode must never be empty"
            assert int(np.argmax(probs)) in decoded
            for j in decoded:
                assert probs[j] > 0.5 or j == int(np.argmax(probs))


# --- criterion 9: candidate generation ------------------------------------------------

def _toy_kb(rng, n=1000):
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    names = {}
    seen = set()
    while len(names) < n:
        words = []
        for _ in range(2):
            length = int(rng.integers(5, 9))
            words.append("".join(alphabet[int(c)]
                                 for c in rng.integers(26, size=length)))
        name = " ".join(words)
        if name in seen:
            continue
        seen.add(name)
        names[f"E{len(names):04d}"] = name
    return names


def test_criterion_9_candidate_generation():
    with criterion(9, "candidate generation on a 1000-name toy KB"):
        rng = np.random.default_rng(2024)
        names = _toy_kb(rng)
        index = candgen.build_index(names)

        # exact-name mentions: gold first with csim 1.0
        for eid, name in names.items():
            cs = candgen.candidates(name, index, k=1, gold=eid)
            assert cs.entries[0][0] == eid
            assert abs(cs.entries[0][1] - 1.0) < 1e-9
            assert cs.gold_in_set

        # single-character edits: gold inside the top 100
        alphabet = "abcdefghijklmnopqrstuvwxyz"
        for eid, name in names.items():
            chars = list(name)
            while True:
                pos = int(rng.integers(len(chars)))
                if chars[pos] != " ":
                    break
            replacement = alphabet[int(rng.integers(26))]
            chars[pos] = replacement if replacement != chars[pos] else "q"
            perturbed = "".join(chars)
            cs = candgen.candidates(perturbed, index, k=100, gold=eid)
            assert cs.gold_in_set, f"{perturbed!r} lost {name!r}"

        # rebuild determinism, byte for byte
        import tempfile, os
        with tempfile.TemporaryDirectory() as tmp:
            p1, p2 = os.path.join(tmp, "a.bin"), os.path.join(tmp, "b.bin")
            candgen.save_index(candgen.build_index(names), p1)
            candgen.save_index(candgen.build_index(dict(names)), p2)
            with open(p1, "rb") as f1, open(p2, "rb") as f2:
                assert f1.read() == f2.read()


# --- criterion 10: metric oracles -------------------------------------------------------

def test_criterion_10_metric_fixtures():
    with criterion(10, "metric oracles on fixed fixtures"):
        # fixture A: typing sets
        preds = [{0, 1}, {0}, {1, 2}]
        golds = [{0, 1}, {0, 1}, {2}]
        assert strict_accuracy(preds, golds) == pytest.approx(1 / 3)
        assert macro_f1(preds, golds) == pytest.approx((1 + 2 / 3 + 2 / 3) / 3)
        assert micro_f1(preds, golds) == pytest.approx(0.8)

        # fixture B: MAP over masked leaf types
        scores = np.array([[3.0, 5.0], [2.0, 9.0], [1.0, 1.0]])
        gold = np.array([[1, 0], [0, 1], [1, 0]], dtype=bool)
        value, per_type = mean_average_precision(scores, gold, [True, False])
        assert per_type[0] == pytest.approx(5 / 6)
        assert value == pytest.approx(5 / 6)

        # fixture C: linking accuracy with alias misses
        link_golds = [f"e{i}" for i in range(10)]
        link_preds = link_golds[:6] + ["wrong"] * 4
        in_set = [True] * 8 + [False] * 2
        original, normalized = linking_accuracy(link_preds, link_golds, in_set)
        assert original == pytest.approx(0.6)
        assert normalized == pytest.approx(0.75)

        # property: normalized >= original on random outcomes
        rng = np.random.default_rng(17)
        for _ in range(300):
            n = int(rng.integers(1, 25))
            golds_n = [f"e{i}" for i in range(n)]
            hits = (rng.random(n) < 0.7).tolist()
            preds_n = [g if (h and rng.random() < 0.5) else "x"
                       for g, h in zip(golds_n, hits)]
            orig, norm = linking_accuracy(preds_n, golds_n, hits)
            assert norm >= orig - 1e-12


# --- criterion 11: determinism -----------------------------------------------------------

def test_criterion_11_train_determinism(tmp_path):
    with criterion(11, "identical seeds give identical checkpoints/reports"):
        world = make_typing_world(n_entities=24, mentions_per_entity=4,
                                  noise=0.3, d_w=8, branching=(2, 2), seed=1)
        config = dataclasses.replace(
            TrainConfig(), task="entity-typing", use_closure=True,
            use_hierarchy=True, gamma=0.5, d_w=8, d_p=3, d=6, s_max=12,
            dropout_keep=0.8, n_negatives=4, batch_size=8, max_epochs=3,
            patience=99, seed=9)
        paths, reports = [], []
        for run_id in range(2):
            ckpt = train(config, world.data, world.onto, world.word_emb)
            path = tmp_path / f"run{run_id}.ckpt"
            ckpt.save(path)
            paths.append(path)
            model = ckpt.build_model(world.word_emb)
            test_bags = build_bags(world.data.dev, world.onto,
                                   use_closure=False)
            _, report = evaluate_model(model, test_bags, world.onto, config)
            reports.append(report.to_json())
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert reports[0] == reports[1]
