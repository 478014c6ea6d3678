"""Command line entry point.

Every subcommand resolves one configuration tree (preset, then an optional
JSON file, then ``--set section.key=value`` and the convenience flags, later
sources winning) before doing any work, and writes it into its output.
"""

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import asdict

import numpy as np
import torch

from . import __version__
from .exceptions import (CapacityExceededError, DegenerateSplitError, InvalidArgumentError,
                         NumericError, ShapeError, StateError)
from .glyphsynth import CorpusConfig, add_split, generate_corpus, read_corpus, write_corpus
from .model.cola import CoLaNet
from .model.checkpoint import load_model, save_model
from .model.config import ModelConfig
from .presets import preset
from .trainer import TrainConfig, train, train_teacher_on_split

ROOT_ENV = "COLALAB_ROOT"
DEFAULT_ROOT = "colalab-runs"
EXIT_CODES = {InvalidArgumentError: 2, ShapeError: 2, CapacityExceededError: 2,
              DegenerateSplitError: 2, StateError: 3, NumericError: 4, FileExistsError: 5}

# convenience flag -> dotted path
FLAG_PATHS = {
    "classes": "corpus.num_classes",
    "primitives": "corpus.num_primitives",
    "seed": "seed",
    "canvas": "corpus.canvas",
    "lam": "train.lam",
    "steps": "train.total_steps",
    "trials": "eval.trials",
    "templates": "eval.n_templates",
    "batch_size": "eval.batch_size",
    "k": "eval.k",
}


class RunDir:
    """Timestamped output directory guarded by a lockfile."""

    def __init__(self, root, command):
        stamp = time.strftime("%Y%m%d-%H%M%S") + f"-{time.time_ns() % 1_000_000:06d}"
        self.path = os.path.join(root, "runs", f"{stamp}-{command}")
        os.makedirs(self.path)
        self.lock = os.path.join(self.path, ".lock")
        fd = os.open(self.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)

    def file(self, name):
        return os.path.join(self.path, name)

    def release(self):
        if os.path.exists(self.lock):
            os.remove(self.lock)


def acquire_dir_lock(path):
    os.makedirs(os.path.dirname(os.path.abspath(path)) or ".", exist_ok=True)
    lock = os.path.abspath(path).rstrip(os.sep) + ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StateError(f"{path} is locked by another process ({lock})") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    return lock


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(tree, dotted, value):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise InvalidArgumentError(f"unknown config section in {dotted!r}")
        node = node[k]
    if keys[-1] not in node:
        raise InvalidArgumentError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


def deep_merge(base, update, prefix=""):
    for k, v in update.items():
        if k not in base:
            raise InvalidArgumentError(f"unknown config key {prefix + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            deep_merge(base[k], v, prefix + k + ".")
        else:
            base[k] = v
    return base


def resolve_config(args):
    """Preset, then file, then flags. Returns the validated tree."""
    tree = preset(args.preset)
    tree["seed"] = 0
    origin = {"preset": args.preset, "file": None, "overrides": []}
    if args.config:
        with open(args.config) as f:
            file_tree = json.load(f)
        file_tree.pop("origin", None)
        deep_merge(tree, file_tree)
        origin["file"] = os.path.abspath(args.config)
    overrides = []
    for flag, path in FLAG_PATHS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append((path, value))
    if getattr(args, "split", None) and args.command == "synth":
        overrides.append(("corpus.splits", list(args.split)))
    for item in args.set or []:
        if "=" not in item:
            raise InvalidArgumentError(f"--set expects section.key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides.append((k, parse_value(v)))
    for path, value in overrides:
        set_path(tree, path, value)
        origin["overrides"].append(f"{path}={json.dumps(value)}")
    seed = int(tree["seed"])
    tree["corpus"]["seed"] = seed
    tree["train"]["seed"] = seed
    # validate every section before any work starts
    corpus_cfg = dict(tree["corpus"])
    corpus_cfg["splits"] = tuple(corpus_cfg["splits"])
    CorpusConfig(**corpus_cfg)
    ModelConfig.from_dict(tree["model"])
    TrainConfig.from_dict(tree["train"])
    tree["origin"] = origin
    tree["resolved_seed"] = seed
    return tree


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True, default=str)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def provenance(extra=None):
    return {
        "argv": sys.argv,
        "colalab": __version__,
        "torch": torch.__version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "platform": platform.platform(),
        **(extra or {}),
    }


def latest_artifact(root, command, name):
    runs = os.path.join(root, "runs")
    if os.path.isdir(runs):
        for d in sorted(os.listdir(runs), reverse=True):
            if d.endswith("-" + command) and os.path.exists(os.path.join(runs, d, name)):
                return os.path.join(runs, d, name)
    return None


def require(path, what, root, command, name):
    path = path or latest_artifact(root, command, name)
    if not path or not os.path.exists(path):
        raise StateError(f"missing prerequisite: {what}; no `{command}` run under {root} "
                         "and no path given")
    return path


def load_corpus(args, root):
    path = args.corpus or os.path.join(root, "corpus")
    if not os.path.exists(os.path.join(path, "classes.json")):
        raise StateError(f"missing prerequisite: corpus at {path} (run `synth` first)")
    return read_corpus(path), path


def get_split(corpus, text):
    # manifests are a pure function of the charset, so rebuilding matches any stored copy
    return add_split(corpus, text)


def cmd_synth(args, tree, root):
    out = args.out or os.path.join(root, "corpus")
    if os.path.exists(out) and os.listdir(out) and not args.force:
        raise FileExistsError(f"{out} exists; pass --force to overwrite")
    lock = acquire_dir_lock(out)
    try:
        cfg = dict(tree["corpus"])
        cfg["splits"] = tuple(cfg["splits"])
        corpus = generate_corpus(CorpusConfig(**cfg))
        write_corpus(corpus, out, force=args.force)
        write_json(os.path.join(out, "run_config.json"), {**tree, "provenance": provenance()})
    finally:
        os.remove(lock)
    summary = {
        "corpus": os.path.abspath(out),
        "classes": len(corpus.charset),
        "primitives": len(corpus.bank.primitives),
        "digest": corpus.digest(),
        "splits": {n: {"train": len(m.train_classes), "test": len(m.test_classes)}
                   for n, m in corpus.splits.items()},
    }
    print(json.dumps(summary, indent=1))
    return summary


def _split_arg(args, tree):
    if args.split:
        return args.split[0]
    return tree["corpus"]["splits"][0]


def cmd_train_teacher(args, tree, root, run):
    corpus, path = load_corpus(args, root)
    split = get_split(corpus, _split_arg(args, tree))
    tc = TrainConfig.from_dict(tree["train"])
    torch.manual_seed(tc.seed)
    model = CoLaNet(ModelConfig.from_dict(tree["model"]))
    acc = train_teacher_on_split(model, corpus, split, tc)
    out = run.file("teacher.pt")
    save_model(out, model, teacher_record={"split": split.name, "train_accuracy": acc,
                                           "classes": list(split.train_classes)})
    result = {"teacher": out, "split": split.name, "train_accuracy": acc}
    write_json(run.file("result.json"), result)
    return result


def cmd_train(args, tree, root, run):
    teacher_path = require(args.teacher, "trained teacher checkpoint (teacher.pt)", root,
                           "train-teacher", "teacher.pt")
    corpus, path = load_corpus(args, root)
    split = get_split(corpus, _split_arg(args, tree))
    teacher_model, _ = load_model(teacher_path)
    if not teacher_model.teacher.is_frozen:
        raise StateError(f"teacher in {teacher_path} is not trained")
    tc = TrainConfig.from_dict(tree["train"])
    torch.manual_seed(tc.seed)
    model = CoLaNet(ModelConfig.from_dict(tree["model"]))
    model.teacher.load_state_dict(teacher_model.teacher.state_dict())
    model.teacher.freeze()
    tree.setdefault("inputs", {})["teacher_sha256"] = file_sha256(teacher_path)
    train(corpus, split, model, tc, run_dir=run.path)
    manifest = {"config": tree["train"], "corpus_digest": corpus.digest(), "split": split.name}
    write_json(run.file("training_manifest.json"), manifest)
    return {"checkpoint": run.file("checkpoint.pt"), "split": split.name}


def _checkpoint(args, root):
    path = require(args.checkpoint, "trained model checkpoint (checkpoint.pt)", root, "train",
                   "checkpoint.pt")
    model, _ = load_model(path)
    return model, path


def cmd_eval(args, tree, root, run):
    from .evalkit import zero_shot_eval

    model, ckpt = _checkpoint(args, root)
    corpus, _ = load_corpus(args, root)
    split = get_split(corpus, _split_arg(args, tree))
    ev = tree["eval"]
    report = zero_shot_eval(model, corpus, split, n_templates=ev["n_templates"],
                            trials=ev["trials"], sampled=ev["sampled"], seed=tree["seed"])
    report.save(run.file("eval_report.json"))
    print(json.dumps({"split": report.split_name, "top1_accuracy": report.top1_accuracy,
                      "chance_level": report.chance_level, "trials": report.trials}))
    return report.to_json()


def _pick(corpus, args):
    class_id = corpus.class_ids[0] if args.class_id is None else args.class_id
    if class_id not in corpus.images:
        raise InvalidArgumentError(f"class {class_id} is not in the corpus")
    imgs = corpus.images[class_id]
    if not 0 <= args.index < len(imgs):
        raise InvalidArgumentError(f"class {class_id} has {len(imgs)} samples; index {args.index} is out of range")
    return imgs[args.index].astype(np.float32) / 255.0, class_id


def cmd_viz(args, tree, root, run):
    from .evalkit import visualize_components

    model, _ = _checkpoint(args, root)
    corpus, _ = load_corpus(args, root)
    image, class_id = _pick(corpus, args)
    out = run.file(f"components_{class_id}_{args.index}.png")
    visualize_components(model, image, out)
    return {"panel": out, "slots": model.config.n_slots}


def cmd_retrieve(args, tree, root, run):
    from .evalkit import retrieval_panel
    from .matcher import retrieve_topk

    model, _ = _checkpoint(args, root)
    corpus, _ = load_corpus(args, root)
    query, class_id = _pick(corpus, args)
    x, y = corpus.samples(corpus.class_ids)
    rng = np.random.default_rng(tree["seed"])
    pool = np.sort(rng.choice(len(x), size=min(args.candidates, len(x)), replace=False))
    ranked = retrieve_topk(query, x[pool], model, k=tree["eval"]["k"])
    hits = [{"sample": int(pool[i]), "class_id": int(y[pool[i]]), "score": s} for i, s in ranked]
    retrieval_panel(query, x[pool], ranked, run.file("retrieval.png"))
    result = {"query_class": class_id, "query_index": args.index, "hits": hits}
    write_json(run.file("retrieval.json"), result)
    return result


def cmd_time(args, tree, root, run):
    from .evalkit import make_batches, timing_harness
    from .matcher import encode_templates

    model, _ = _checkpoint(args, root)
    corpus, _ = load_corpus(args, root)
    split = get_split(corpus, _split_arg(args, tree))
    test = list(split.test_classes)
    eps = model.slot_init(sample=False)
    bank = encode_templates(corpus.template_images(test), model, eps, test)
    x, _ = corpus.samples(test)
    bs = tree["eval"]["batch_size"]
    report = timing_harness(model, bank, make_batches(x, bs, args.num_batches), batch_size=bs)
    report.save(run.file("timing_report.json"))
    print(json.dumps(asdict(report)))
    return asdict(report)


COMMANDS = {
    "train-teacher": cmd_train_teacher,
    "train": cmd_train,
    "eval": cmd_eval,
    "viz": cmd_viz,
    "retrieve": cmd_retrieve,
    "time": cmd_time,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--root", help=f"output root (default ${ROOT_ENV} or ./{DEFAULT_ROOT})")
    common.add_argument("--config", help="JSON config file with corpus/model/train/eval sections")
    common.add_argument("--preset", default="desk", help="desk or paper-scale")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int)
    common.add_argument("--corpus", help="corpus directory (default ROOT/corpus)")
    common.add_argument("--split", action="append", help="char:M:K or comp:N")

    p = argparse.ArgumentParser(prog="colalab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a glyph corpus")
    s.add_argument("--out")
    s.add_argument("--force", action="store_true")
    s.add_argument("--classes", type=int)
    s.add_argument("--primitives", type=int)
    s.add_argument("--canvas", type=int)

    sub.add_parser("train-teacher", parents=[common], help="pretrain and freeze the teacher")

    t = sub.add_parser("train", parents=[common], help="train the component model")
    t.add_argument("--teacher", help="teacher.pt (default: latest train-teacher run)")
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--steps", type=int)

    for name, helptext in (("eval", "zero-shot evaluation"), ("viz", "component heatmaps"),
                           ("retrieve", "top-k latent retrieval"), ("time", "inference timing")):
        q = sub.add_parser(name, parents=[common], help=helptext)
        q.add_argument("--checkpoint", help="checkpoint.pt (default: latest train run)")
        if name == "eval":
            q.add_argument("--trials", type=int)
            q.add_argument("--templates", type=int)
        if name in ("viz", "retrieve"):
            q.add_argument("--class-id", type=int)
            q.add_argument("--index", type=int, default=0)
        if name == "retrieve":
            q.add_argument("--k", type=int)
            q.add_argument("--candidates", type=int, default=500)
        if name == "time":
            q.add_argument("--batch-size", type=int)
            q.add_argument("--num-batches", type=int, default=10)
    return p


def error_record(exc):
    code = next((c for t, c in EXIT_CODES.items() if isinstance(exc, t)), 1)
    return {"status": "error", "error": type(exc).__name__, "message": str(exc), "exit_code": code}


def main(argv=None):
    args = build_parser().parse_args(argv)
    root = args.root or os.environ.get(ROOT_ENV) or DEFAULT_ROOT
    run = None
    try:
        tree = resolve_config(args)
        if args.command == "synth":
            cmd_synth(args, tree, root)
            return 0
        run = RunDir(root, args.command)
        write_json(run.file("config.json"), {**tree, "provenance": provenance()})
        result = COMMANDS[args.command](args, tree, root, run)
        # rewrite so input hashes added during the run are recorded
        write_json(run.file("config.json"), {**tree, "provenance": provenance()})
        write_json(run.file("status.json"), {"status": "ok", "result": result})
        print(json.dumps({"status": "ok", "run_dir": run.path}))
        return 0
    except (InvalidArgumentError, ShapeError, StateError, NumericError, CapacityExceededError,
            DegenerateSplitError, FileExistsError, FileNotFoundError, ValueError) as exc:
        record = error_record(exc)
        if run is not None:
            write_json(run.file("status.json"), record)
        print(json.dumps(record), file=sys.stderr)
        return record["exit_code"]
    finally:
        if run is not None:
            run.release()


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
