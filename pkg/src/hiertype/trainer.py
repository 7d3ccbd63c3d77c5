"""Training loop and model wiring.

Variants compose three switches on top of the CNN encoder: complex
(Hermitian) scoring, transitive-closure label expansion, and the explicit
hierarchy loss. One bag or mention is one training example; bags resample
their k mentions on every visit. Everything is deterministic given
(seed, config, data).
"""

import itertools
import json
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import numcore as nc
from . import objectives as obj
from .corpus import Mention, build_bags, sample_bag_mentions
from .encoder import encode_mention, init_encoder_params
from .errors import ConfigError, GoldMissing, UnknownConcept
from .metrics import (EvalReport, figer_decode, linking_accuracy, macro_f1,
                      mean_average_precision, micro_f1, strict_accuracy)
from .numcore.tensor import _sigmoid

TASKS = ("mention-typing", "entity-typing", "linking")

GAMMA_GRID = (0.1, 0.5, 0.8, 1.0, 2.0, 4.0)
NEGATIVE_GRID = (16, 32, 64, 128, 256)
DROPOUT_GRID = (0.5, 0.75, 0.8)
L2_GRID = (1e-5, 5e-5, 1e-4)


@dataclass
class TrainConfig:
    task: str = "mention-typing"
    use_complex: bool = False
    use_closure: bool = False
    use_hierarchy: bool = False
    d_w: int = 300
    d_p: int = 25
    d: int = 300
    conv_width: int = 5
    s_max: int = 50
    lr: float = 1e-3
    dropout_keep: float = 0.8
    l2: float = 1e-5
    n_negatives: int = 16
    gamma: float = 0.5
    bag_k_train: int = 10
    bag_k_test: int = 20
    batch_size: int = 32
    struct_samples_per_batch: int = 1
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0

    @property
    def variant(self):
        name = "cnn"
        if self.use_complex:
            name += "+complex"
        if self.use_hierarchy:
            name += "+hier"
        if self.use_closure:
            name += "+closure"
        return name

    def to_dict(self):
        return asdict(self)


def parse_variant(name):
    """'cnn[+complex][+hier][+closure]' -> the three variant switches."""
    flags = {"use_complex": False, "use_hierarchy": False, "use_closure": False}
    tokens = name.lower().split("+")
    if not tokens or tokens[0] != "cnn":
        raise ConfigError(f"variant must start with 'cnn', got {name!r}")
    for tok in tokens[1:]:
        if tok == "complex":
            flags["use_complex"] = True
        elif tok in ("hier", "hierarchy"):
            flags["use_hierarchy"] = True
        elif tok in ("closure", "transitive"):
            flags["use_closure"] = True
        else:
            raise ConfigError(f"unknown variant token {tok!r} in {name!r}")
    return flags


_BOOL_STRINGS = {"true": True, "1": True, "yes": True,
                 "false": False, "0": False, "no": False}


def config_from_dict(values, base=None):
    """Build a TrainConfig from string-or-typed key/value pairs."""
    config = base or TrainConfig()
    fields = {f.name: f.type for f in config.__dataclass_fields__.values()}
    updates = {}
    for key, raw in values.items():
        if key == "variant":
            updates.update(parse_variant(str(raw)))
            continue
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        kind = fields[key]
        if isinstance(kind, str):  # stringified annotations
            kind = {"bool": bool, "int": int, "float": float}.get(kind, str)
        try:
            if kind is bool:
                updates[key] = (raw if isinstance(raw, bool)
                                else _BOOL_STRINGS[str(raw).lower()])
            elif kind is int:
                updates[key] = int(raw)
            elif kind is float:
                updates[key] = float(raw)
            else:
                updates[key] = str(raw)
        except (KeyError, ValueError):
            raise ConfigError(f"bad value {raw!r} for config key {key!r}") from None
    return replace(config, **updates)


def load_config_file(path):
    """Flat ``key = value`` text config; '#' comments, blank lines ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def validate_config(config, onto=None):
    if config.task not in TASKS:
        raise ConfigError(f"unknown task {config.task!r}")
    if not 0.0 < config.dropout_keep <= 1.0:
        raise ConfigError(f"dropout_keep must be in (0,1], got {config.dropout_keep}")
    if config.lr < 0:
        raise ConfigError("lr must be >= 0")
    if config.gamma < 0:
        raise ConfigError("gamma must be >= 0")
    if config.conv_width % 2 == 0 or config.conv_width < 1:
        raise ConfigError("conv_width must be odd and >= 1")
    if min(config.d, config.d_w, config.d_p, config.s_max) < 1:
        raise ConfigError("dimensions must be >= 1")
    if min(config.bag_k_train, config.bag_k_test, config.batch_size) < 1:
        raise ConfigError("bag sizes and batch size must be >= 1")
    if config.n_negatives < 1:
        raise ConfigError("n_negatives must be >= 1")
    if config.use_hierarchy and onto is not None and not onto.edge_list:
        raise ConfigError("hierarchy loss needs an ontology with edges")


class Model:
    """Encoder plus task heads for one configuration."""

    def __init__(self, config, n_labels, word_emb, rng):
        if word_emb.dim != config.d_w:
            raise ConfigError(f"word embeddings are {word_emb.dim}-d but config "
                              f"says d_w={config.d_w}")
        self.config = config
        self.word_emb = word_emb
        self.n_labels = n_labels
        self.encoder = init_encoder_params(
            rng, d_w=config.d_w, d_p=config.d_p, d=config.d,
            conv_width=config.conv_width, s_max=config.s_max,
            complex_proj=config.use_complex)
        if config.task == "linking":
            self.types = None
            self.linker = obj.init_linker_params(rng, n_labels, config.d,
                                                 complex_emb=config.use_complex)
        else:
            self.types = obj.init_type_embeddings(rng, n_labels, config.d,
                                                  complex_emb=config.use_complex)
            self.linker = None
        self.hier = None
        if config.use_hierarchy:
            self.hier = obj.init_hierarchy_params(rng, config.d,
                                                  complex_emb=config.use_complex,
                                                  gamma=config.gamma)

    @property
    def struct_embeddings(self):
        return self.types if self.types is not None else self.linker.entity_embeddings

    def named_parameters(self):
        params = dict(self.encoder.named())
        if self.types is not None:
            params.update(self.types.named("types"))
        if self.linker is not None:
            params.update(self.linker.named("link"))
        if self.hier is not None:
            params.update(self.hier.named("hier"))
        return params

    def state_arrays(self):
        return {name: t.data.copy() for name, t in self.named_parameters().items()}

    def load_state(self, arrays):
        params = self.named_parameters()
        if set(arrays) != set(params):
            missing = set(params) ^ set(arrays)
            raise ConfigError(f"checkpoint/model parameter mismatch: {sorted(missing)}")
        for name, tensor in params.items():
            if arrays[name].shape != tensor.data.shape:
                raise ConfigError(f"shape mismatch for {name}: "
                                  f"{arrays[name].shape} vs {tensor.data.shape}")
            tensor.data = np.array(arrays[name], dtype=np.float64)

    def encode(self, mention, training=False, rng=None):
        return encode_mention(mention, self.word_emb, self.encoder,
                              training=training,
                              dropout_keep=self.config.dropout_keep,
                              rng=rng, complex_proj=self.config.use_complex)

    def encode_batch(self, mentions, training=False, rng=None):
        """Stack mention vectors: (k,d) real rows and imag rows when complex."""
        vs = [self.encode(m, training=training, rng=rng) for m in mentions]
        real = nc.stack([v.real for v in vs])
        imag = nc.stack([v.imag for v in vs]) if self.config.use_complex else None
        return real, imag

    def batch_type_logits(self, mentions, training=False, rng=None):
        real, imag = self.encode_batch(mentions, training=training, rng=rng)
        return obj.type_logits_matrix(real, imag, self.types, self.hier)


class Adam:
    """Adam with L2 added to gradients; frozen word vectors never enter."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, l2=0.0):
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps, self.l2 = lr, beta1, beta2, eps, l2
        self.t = 0
        self.m = {k: np.zeros_like(t.data) for k, t in self.params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in self.params.items()}

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def step(self):
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.l2:
                g = g + self.l2 * p.data
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


@dataclass(eq=False)
class LinkingExample:
    mention: Mention
    cand_rows: np.ndarray      # entity-table row per candidate
    csim: np.ndarray
    entity_ids: list
    gold_pos: int              # index of gold among candidates, -1 if absent
    gold_in_set: bool


@dataclass(eq=False)
class TaskData:
    """Raw mentions per split; linking additionally carries the alias index."""

    train: list
    dev: list
    test: list | None = None
    index: object | None = None


def prepare_typing_examples(mentions, onto, use_closure):
    """(mention, label_vec) pairs; closure expands training labels only."""
    out = []
    for m in mentions:
        ids = {onto.id_of(name) for name in m.labels}
        if not ids:
            raise UnknownConcept(f"mention {m.surface!r} has no labels")
        if use_closure:
            ids = onto.expand_labels(ids)
        vec = np.zeros(len(onto))
        vec[sorted(ids)] = 1.0
        out.append((m, vec))
    return out


def prepare_linking_examples(mentions, index, onto, k=100, training=False):
    """Attach candidate sets; training drops mentions whose gold is missed."""
    from .candgen import candidates_batch

    sets = candidates_batch([m.surface for m in mentions], index, k=k,
                            golds=[m.entity for m in mentions])
    out = []
    for m, cs in zip(mentions, sets):
        rows = np.array([onto.id_of(eid) for eid in cs.entity_ids], dtype=np.intp)
        csim = np.array([score for _, score in cs.entries])
        gold_pos = next((i for i, eid in enumerate(cs.entity_ids)
                         if eid == m.entity), -1)
        example = LinkingExample(mention=m, cand_rows=rows, csim=csim,
                                 entity_ids=cs.entity_ids, gold_pos=gold_pos,
                                 gold_in_set=gold_pos >= 0)
        if training and gold_pos < 0:
            continue
        out.append(example)
    return out


def _typing_batch_loss(model, batch, rng_drop):
    mentions = [m for m, _ in batch]
    logits = model.batch_type_logits(mentions, training=True, rng=rng_drop)
    gold = np.stack([vec for _, vec in batch])
    return nc.mul(obj.mention_typing_loss(logits, gold), 1.0 / len(batch))


def _bag_batch_loss(model, batch, config, rng_bag, rng_drop):
    total = None
    for bag in batch:
        sampled = sample_bag_mentions(bag, config.bag_k_train, rng_bag)
        logits = model.batch_type_logits(sampled, training=True, rng=rng_drop)
        loss = obj.entity_typing_loss(obj.bag_logits(logits), bag.label_vec)
        total = loss if total is None else total + loss
    return nc.mul(total, 1.0 / len(batch))


def _linking_batch_loss(model, batch, rng_drop):
    total = None
    for ex in batch:
        if ex.gold_pos < 0:
            raise GoldMissing(f"gold entity missing from candidates for "
                              f"{ex.mention.surface!r}")
        v = model.encode(ex.mention, training=True, rng=rng_drop)
        scores = obj.linking_scores(v, ex.cand_rows, ex.csim, model.linker,
                                    model.hier)
        loss = obj.linking_loss(scores, ex.gold_pos)
        total = loss if total is None else total + loss
    return nc.mul(total, 1.0 / len(batch))


def _eval_rng(config):
    return np.random.default_rng([config.seed, 0xE7A1])


def evaluate_model(model, mentions_or_examples, onto, config):
    """Task metric plus full report on a prepared evaluation split."""
    task = config.task
    if task == "mention-typing":
        preds, golds, dump = [], [], []
        for m in mentions_or_examples:
            logits = obj.type_logits(model.encode(m), model.types, model.hier)
            pred = figer_decode(_sigmoid(logits.data))
            gold = {onto.id_of(name) for name in m.labels}
            preds.append(pred)
            golds.append(gold)
            dump.append((m.surface,
                         ",".join(sorted(onto.names[j] for j in pred)),
                         ",".join(sorted(onto.names[j] for j in gold))))
        scores = {"strict_accuracy": strict_accuracy(preds, golds),
                  "macro_f1": macro_f1(preds, golds),
                  "micro_f1": micro_f1(preds, golds)}
        return scores["strict_accuracy"], EvalReport(
            task=task, scores=scores, predictions=dump)

    if task == "entity-typing":
        rng = _eval_rng(config)
        bags = mentions_or_examples
        score_rows, gold_rows, dump = [], [], []
        for bag in bags:
            sampled = sample_bag_mentions(bag, config.bag_k_test, rng)
            logits = model.batch_type_logits(sampled)
            pooled = obj.bag_logits(logits).data
            score_rows.append(pooled)
            gold_rows.append(bag.label_vec)
            top = np.argsort(-pooled)[:5]
            dump.append((bag.entity, ",".join(onto.names[j] for j in top)))
        mask = np.asarray(onto.leaf_mask, dtype=bool)
        value, per_type = mean_average_precision(
            np.stack(score_rows), np.stack(gold_rows), mask)
        return value, EvalReport(
            task=task, scores={"map": value},
            per_type_ap={onto.names[t]: ap for t, ap in per_type.items()},
            predictions=dump)

    if task == "linking":
        preds, golds, in_set, dump = [], [], [], []
        for ex in mentions_or_examples:
            if len(ex.entity_ids) == 0:
                pred = None
            else:
                v = model.encode(ex.mention)
                scores = obj.linking_scores(v, ex.cand_rows, ex.csim,
                                            model.linker, model.hier)
                pred = ex.entity_ids[int(np.argmax(scores.data))]
            preds.append(pred)
            golds.append(ex.mention.entity)
            in_set.append(ex.gold_in_set)
            dump.append((ex.mention.surface, pred, ex.mention.entity))
        original, normalized = linking_accuracy(preds, golds, in_set)
        scores = {"original_accuracy": original, "normalized_accuracy": normalized}
        return normalized, EvalReport(task=task, scores=scores, predictions=dump)

    raise ConfigError(f"unknown task {task!r}")


def _prepare_splits(config, data, onto):
    """Training examples (closure applies) and dev examples (raw gold)."""
    if config.task == "mention-typing":
        train = prepare_typing_examples(data.train, onto, config.use_closure)
        dev = data.dev
    elif config.task == "entity-typing":
        train = build_bags(data.train, onto, use_closure=config.use_closure)
        dev = build_bags(data.dev, onto, use_closure=False)
    else:
        if data.index is None:
            raise ConfigError("linking needs a candidate index in TaskData")
        train = prepare_linking_examples(data.train, data.index, onto,
                                         training=True)
        dev = prepare_linking_examples(data.dev, data.index, onto)
    return train, dev


@dataclass(eq=False)
class Checkpoint:
    params: dict
    config: TrainConfig
    dev_metric: float
    epoch: int
    n_labels: int

    def save(self, path):
        meta = {"config": json.dumps(self.config.to_dict(), sort_keys=True),
                "dev_metric": json.dumps(self.dev_metric),
                "epoch": str(self.epoch),
                "n_labels": str(self.n_labels)}
        nc.save_tensors(path, self.params, meta=meta)

    @classmethod
    def load(cls, path):
        arrays, meta = nc.load_tensors(path)
        config = config_from_dict(json.loads(meta["config"]))
        return cls(params=arrays, config=config,
                   dev_metric=json.loads(meta["dev_metric"]),
                   epoch=int(meta["epoch"]), n_labels=int(meta["n_labels"]))

    def build_model(self, word_emb):
        rng = np.random.default_rng(0)  # immediately overwritten
        model = Model(self.config, self.n_labels, word_emb, rng)
        model.load_state(self.params)
        return model


def train(config, data, onto, word_emb, log_file=None):
    """Run the full loop and return the best-dev checkpoint.

    Per batch: task loss (mean over examples), plus gamma times the structure
    loss on freshly sampled links when the hierarchy switch is on. Early
    stopping tracks the task dev metric with the configured patience.
    """
    validate_config(config, onto)
    streams = np.random.SeedSequence(config.seed).spawn(5)
    rng_init, rng_shuffle, rng_bag, rng_drop, rng_struct = map(
        np.random.default_rng, streams)

    train_examples, dev_examples = _prepare_splits(config, data, onto)
    if not train_examples:
        raise ConfigError("no training examples after preparation")
    model = Model(config, len(onto), word_emb, rng_init)
    optimizer = Adam(model.named_parameters(), lr=config.lr, l2=config.l2)

    best = None
    bad_epochs = 0
    for epoch in range(1, config.max_epochs + 1):
        tick = time.monotonic()
        order = rng_shuffle.permutation(len(train_examples))
        task_total = struct_total = 0.0
        n_batches = 0
        for lo in range(0, len(order), config.batch_size):
            batch = [train_examples[int(i)] for i in order[lo:lo + config.batch_size]]
            if config.task == "mention-typing":
                loss = _typing_batch_loss(model, batch, rng_drop)
            elif config.task == "entity-typing":
                loss = _bag_batch_loss(model, batch, config, rng_bag, rng_drop)
            else:
                loss = _linking_batch_loss(model, batch, rng_drop)
            task_total += loss.item()
            if model.hier is not None:
                samples = [onto.sample_links(config.n_negatives, rng_struct)
                           for _ in range(config.struct_samples_per_batch)]
                struct = obj.struct_loss(samples[0], model.struct_embeddings,
                                         model.hier)
                for extra in samples[1:]:
                    struct = struct + obj.struct_loss(
                        extra, model.struct_embeddings, model.hier)
                struct = nc.mul(struct, 1.0 / len(samples))
                struct_total += struct.item()
                loss = obj.joint_loss(loss, struct, config.gamma)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            n_batches += 1

        dev_metric, _ = evaluate_model(model, dev_examples, onto, config)
        record = {"epoch": epoch,
                  "task_loss": task_total / n_batches,
                  "struct_loss": struct_total / n_batches if model.hier else 0.0,
                  "dev_metric": dev_metric,
                  "seconds": round(time.monotonic() - tick, 3)}
        if log_file is not None:
            log_file.write(json.dumps(record) + "\n")
            log_file.flush()

        if best is None or dev_metric > best.dev_metric:
            best = Checkpoint(params=model.state_arrays(), config=config,
                              dev_metric=dev_metric, epoch=epoch,
                              n_labels=len(onto))
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break
    return best


def grid_search(config, grid, data, onto, word_emb, log_file=None):
    """Train every cell of the grid; select the best dev metric.

    grid maps config field names to value lists; the report records every
    cell exactly once, in deterministic order.
    """
    keys = sorted(grid)
    best = None
    report = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cell = dict(zip(keys, combo))
        ckpt = train(config_from_dict(cell, base=config), data, onto, word_emb,
                     log_file=log_file)
        report.append({**cell, "dev_metric": ckpt.dev_metric,
                       "epoch": ckpt.epoch})
        if best is None or ckpt.dev_metric > best.dev_metric:
            best = ckpt
    return best, report
