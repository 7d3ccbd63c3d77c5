"""Command-line interface: the whole pipeline as batch subcommands.

Exit codes: 0 success, 2 usage error (argparse), 3 data error, 4 internal
error. Every run logs its resolved configuration to stderr. All randomness
flows from --seed, and primary outputs (reports, closures, indices,
checkpoints) are byte-identical across reruns with the same inputs.
"""

import argparse
import json
import logging
import sys

from . import candgen
from .corpus import build_vocab, load_embeddings, load_mentions
from .errors import DataError, HierTypeError, InternalError
from .ontology import Ontology
from .trainer import (Checkpoint, TaskData, TrainConfig, config_from_dict,
                      evaluate_model, load_config_file,
                      prepare_linking_examples, train)

log = logging.getLogger("hiertype")


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--task", choices=("mention-typing", "entity-typing",
                                      "linking"))
    p.add_argument("--variant", help="cnn[+complex][+hier][+closure]")
    p.add_argument("--gamma", type=float)
    p.add_argument("--negatives", type=int, dest="n_negatives")
    p.add_argument("--dropout", type=float, dest="dropout_keep")
    p.add_argument("--l2", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--bag-k", type=int, dest="bag_k_train")
    p.add_argument("--bag-k-test", type=int, dest="bag_k_test")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--d-w", type=int, dest="d_w")
    p.add_argument("--d-p", type=int, dest="d_p")
    p.add_argument("--s-max", type=int, dest="s_max")
    p.add_argument("--seed", type=int)


_CONFIG_KEYS = ("task", "variant", "gamma", "n_negatives", "dropout_keep",
                "l2", "lr", "bag_k_train", "bag_k_test", "batch_size",
                "max_epochs", "patience", "d", "d_w", "d_p", "s_max", "seed")


def _resolve_config(args):
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    config = config_from_dict(values, base=TrainConfig())
    log.info("resolved config: %s",
             json.dumps(config.to_dict(), sort_keys=True))
    return config


def _load_ontology(args):
    onto = Ontology.load(args.edges)
    if getattr(args, "leaves", None):
        onto.load_leaf_mask(args.leaves)
    return onto


def _load_linking_index(args, onto):
    if getattr(args, "index", None):
        index = candgen.load_index(args.index)
    elif getattr(args, "names", None):
        index = candgen.build_index(candgen.load_names_tsv(args.names))
    else:
        raise DataError("linking needs --index or --names")
    for eid in index.entity_ids:
        onto.ensure_concept(eid)
    return index


def _require_leaf_mask(config, onto):
    # MAP evaluation is restricted to leaf task labels
    if config.task == "entity-typing" and not any(onto.leaf_mask):
        raise DataError("entity-typing needs a leaf mask; pass --leaves")


def _load_task_inputs(args, config, splits):
    """Ontology, embeddings, and mention splits shared by train/eval/predict."""
    onto = _load_ontology(args)
    index = None
    if config.task == "linking":
        index = _load_linking_index(args, onto)
    task_kind = "linking" if config.task == "linking" else "typing"
    mentions = {name: load_mentions(getattr(args, name), task_kind)
                for name in splits}
    vocab = set()
    for ms in mentions.values():
        vocab |= build_vocab(ms)
    word_emb = load_embeddings(args.embeddings, vocab, dim=config.d_w)
    return onto, index, mentions, word_emb


# --- subcommand handlers -----------------------------------------------------

def cmd_ontology(args):
    if args.action == "check":
        onto = Ontology.load(args.edges)
        print(f"ok: {len(onto)} concepts, {len(onto.edge_list)} edges, acyclic")
        return 0
    onto = Ontology.load(args.edges)
    lines = []
    for cid, name in enumerate(onto.names):
        anc = sorted(onto.names[a] for a in onto.ancestors(cid))
        lines.append(f"{name}\t{','.join(anc)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _usage(message):
    print(f"usage error: {message}", file=sys.stderr)
    return 2


def cmd_index(args):
    if args.action == "build":
        if not args.names or not args.out:
            return _usage("index build needs --names and --out")
        names = candgen.load_names_tsv(args.names)
        index = candgen.build_index(names, max_features=args.max_features)
        candgen.save_index(index, args.out)
        print(f"indexed {index.n_entities} entities, "
              f"{len(index.feature_map)} features -> {args.out}")
        return 0
    if not args.index or args.string is None:
        return _usage("index query needs --index and --string")
    index = candgen.load_index(args.index)
    cs = candgen.candidates(args.string, index, k=args.k)
    for eid, score in cs.entries:
        print(json.dumps({"entity": eid, "csim": round(score, 6)}))
    return 0


def cmd_synth(args):
    from .synth import make_linking_world, make_typing_world, save_world

    if args.task == "typing":
        branching = tuple(int(b) for b in args.branching.split(","))
        world = make_typing_world(n_entities=args.entities,
                                  mentions_per_entity=args.mentions_per_entity,
                                  noise=args.noise, d_w=args.dim,
                                  branching=branching, seed=args.seed)
    else:
        world = make_linking_world(n_entities=args.entities,
                                   mentions_per_entity=args.mentions_per_entity,
                                   d_w=args.dim, seed=args.seed)
    save_world(world, args.out)
    print(f"wrote synthetic {args.task} world to {args.out}")
    return 0


def cmd_train(args):
    config = _resolve_config(args)
    onto, index, mentions, word_emb = _load_task_inputs(
        args, config, ("train", "dev"))
    _require_leaf_mask(config, onto)
    data = TaskData(train=mentions["train"], dev=mentions["dev"], index=index)
    log_file = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        ckpt = train(config, data, onto, word_emb, log_file=log_file)
    finally:
        if log_file:
            log_file.close()
    ckpt.save(args.out)
    print(json.dumps({"dev_metric": ckpt.dev_metric, "epoch": ckpt.epoch,
                      "checkpoint": args.out}, sort_keys=True))
    return 0


def _restore(args, splits):
    ckpt = Checkpoint.load(args.checkpoint)
    config = ckpt.config
    log.info("resolved config: %s",
             json.dumps(config.to_dict(), sort_keys=True))
    onto, index, mentions, word_emb = _load_task_inputs(args, config, splits)
    model = ckpt.build_model(word_emb)
    return ckpt, config, onto, index, mentions, model


def _prepared_eval_split(config, mentions, index, onto):
    from .corpus import build_bags

    if config.task == "entity-typing":
        return build_bags(mentions, onto, use_closure=False)
    if config.task == "linking":
        return prepare_linking_examples(mentions, index, onto)
    return mentions


def cmd_eval(args):
    _, config, onto, index, mentions, model = _restore(args, ("test",))
    _require_leaf_mask(config, onto)
    examples = _prepared_eval_split(config, mentions["test"], index, onto)
    metric, report = evaluate_model(model, examples, onto, config)
    text = report.to_json(include_predictions=not args.no_predictions)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.dump_tsv:
        report.dump_tsv(args.dump_tsv)
    return 0


def cmd_predict(args):
    from .metrics import figer_decode
    from .numcore.tensor import _sigmoid
    from . import objectives as obj

    _, config, onto, _, mentions, model = _restore(args, ("input",))
    if config.task == "linking":
        raise DataError("use the 'link' subcommand for linking checkpoints")
    out = sys.stdout if not args.out else open(args.out, "w", encoding="utf-8")
    try:
        for m in mentions["input"]:
            logits = obj.type_logits(model.encode(m), model.types, model.hier)
            pred = figer_decode(_sigmoid(logits.data))
            out.write(json.dumps({"surface": m.surface,
                                  "types": sorted(onto.names[j] for j in pred)})
                      + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_link(args):
    _, config, onto, index, mentions, model = _restore(args, ("input",))
    if config.task != "linking":
        raise DataError("checkpoint was not trained for linking")
    examples = prepare_linking_examples(mentions["input"], index, onto)
    _, report = evaluate_model(model, examples, onto, config)
    out = sys.stdout if not args.out else open(args.out, "w", encoding="utf-8")
    try:
        for surface, pred, gold in report.predictions:
            out.write(json.dumps({"surface": surface, "entity": pred,
                                  "gold": gold}) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


# --- parser ---------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="hiertype",
        description="Hierarchy-aware entity typing and linking pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ontology", help="validate or expand a concept DAG")
    p.add_argument("action", choices=("check", "closure"))
    p.add_argument("--edges", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_ontology)

    p = sub.add_parser("index", help="build or query the candidate index")
    p.add_argument("action", choices=("build", "query"))
    p.add_argument("--names", help="entity_id<TAB>name file (build)")
    p.add_argument("--out", help="index output path (build)")
    p.add_argument("--index", help="index path (query)")
    p.add_argument("--string", help="mention string (query)")
    p.add_argument("--k", type=int, default=candgen.DEFAULT_TOP_K)
    p.add_argument("--max-features", type=int,
                   default=candgen.DEFAULT_MAX_FEATURES)
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("synth", help="generate a synthetic world")
    p.add_argument("--task", choices=("typing", "linking"), default="typing")
    p.add_argument("--out", required=True)
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--mentions-per-entity", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.4)
    p.add_argument("--branching", default="4,3,2")
    p.add_argument("--dim", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model variant")
    _add_config_flags(p)
    p.add_argument("--edges", required=True)
    p.add_argument("--leaves")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--index")
    p.add_argument("--names")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--leaves")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--index")
    p.add_argument("--names")
    p.add_argument("--out")
    p.add_argument("--dump-tsv")
    p.add_argument("--no-predictions", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="typing predictions for a mention file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--leaves")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("link", help="linking predictions for a mention file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--leaves")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--index")
    p.add_argument("--names")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_link)
    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except HierTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
