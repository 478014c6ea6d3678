"""Whole-corpus synthesis and the on-disk corpus layout.

Layout::

    corpus/
      classes.json              [{class_id, tree, component_multiset}, ...]
      primitives.json
      meta.json                 generation parameters
      splits/{name}.json        SplitManifest fields
      images/{class_id}/{sample_id}.png
      templates/{class_id}/{n}.png
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from ..exceptions import InvalidArgumentError
from .grammar import GlyphSpec, build_charset
from .primitives import PrimitiveBank, make_primitive_bank
from .render import DEFAULT_CANVAS, render, render_templates, sample_style
from .splits import SplitManifest, make_split


@dataclass
class CorpusConfig:
    num_classes: int = 200
    num_primitives: int = 20
    seed: int = 0
    canvas: int = DEFAULT_CANVAS
    train_samples: int = 50
    test_samples: int = 20
    num_templates: int = 10
    splits: tuple = ("char:120:80", "comp:3")
    rare_fraction: float = 0.6
    heavy_style: bool = False


@dataclass
class Corpus:
    config: CorpusConfig
    bank: PrimitiveBank
    charset: list
    splits: dict
    images: dict  # class_id -> uint8 array (n, canvas, canvas)
    templates: np.ndarray  # uint8 (classes, N, canvas, canvas), indexed by class_id
    meta: dict = field(default_factory=dict)

    @property
    def class_ids(self):
        return [spec.class_id for spec in self.charset]

    def samples(self, class_ids):
        """Float images and labels for ``class_ids``, in class then sample order."""
        xs, ys = [], []
        for c in class_ids:
            imgs = self.images[c]
            xs.append(imgs)
            ys.append(np.full(len(imgs), c, dtype=np.int64))
        if not xs:
            return np.empty((0, self.config.canvas, self.config.canvas), np.float32), np.empty(0, np.int64)
        return to_float(np.concatenate(xs)), np.concatenate(ys)

    def template_images(self, class_ids):
        return to_float(self.templates[list(class_ids)])

    @property
    def charset_id(self):
        """Hash identifying the charset and primitive bank, independent of samples."""
        h = hashlib.sha256()
        h.update(json.dumps([s.to_json() for s in self.charset], sort_keys=True).encode())
        h.update(json.dumps(self.bank.to_json(), sort_keys=True).encode())
        return h.hexdigest()[:16]

    def digest(self):
        h = hashlib.sha256()
        h.update(json.dumps([s.to_json() for s in self.charset], sort_keys=True).encode())
        for c in sorted(self.images):
            h.update(self.images[c].tobytes())
        h.update(self.templates.tobytes())
        return h.hexdigest()


def to_float(images):
    return np.asarray(images, dtype=np.float32) / 255.0


def to_uint8(image):
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def render_samples(bank, spec, count, seed, canvas=DEFAULT_CANVAS, heavy=False):
    """``count`` jittered renderings of one class, deterministic in ``seed``."""
    out = np.empty((count, canvas, canvas), dtype=np.uint8)
    for j in range(count):
        rng = np.random.default_rng([seed, spec.class_id, j])
        style = sample_style(rng, heavy=heavy)
        out[j] = to_uint8(render(bank, spec, style, canvas, seed=[seed, spec.class_id, j, 1]))
    return out


def generate_corpus(config=None, **overrides):
    """Synthesize a full corpus in memory."""
    config = config or CorpusConfig()
    for k, v in overrides.items():
        setattr(config, k, v)
    bank = make_primitive_bank(config.seed, config.num_primitives)
    charset = build_charset(bank, config.num_classes, config.seed, rare_fraction=config.rare_fraction)
    splits = {}
    for text in config.splits:
        manifest = make_split(charset, text, generator_seed=config.seed)
        splits[manifest.name] = manifest
    trained_somewhere = set()
    for m in splits.values():
        trained_somewhere.update(m.train_classes)
    images = {}
    for spec in charset:
        many = not splits or spec.class_id in trained_somewhere
        count = config.train_samples if many else config.test_samples
        images[spec.class_id] = render_samples(bank, spec, count, config.seed, config.canvas,
                                               config.heavy_style)
    templates = to_uint8(render_templates(bank, charset, config.num_templates, config.canvas))
    return Corpus(config, bank, charset, splits, images, templates)


def add_split(corpus, text):
    manifest = make_split(corpus.charset, text, generator_seed=corpus.config.seed)
    corpus.splits[manifest.name] = manifest
    return manifest


def _save_png(path, array):
    Image.fromarray(array, mode="L").save(path, optimize=False)


def write_corpus(corpus, root, force=False):
    if os.path.exists(root) and os.listdir(root) and not force:
        raise FileExistsError(f"{root} exists; pass force=True to overwrite")
    os.makedirs(os.path.join(root, "splits"), exist_ok=True)
    with open(os.path.join(root, "classes.json"), "w") as f:
        json.dump([s.to_json() for s in corpus.charset], f, indent=1)
    with open(os.path.join(root, "primitives.json"), "w") as f:
        json.dump(corpus.bank.to_json(), f)
    meta = dict(vars(corpus.config))
    meta["splits"] = list(meta["splits"])
    with open(os.path.join(root, "meta.json"), "w") as f:
        json.dump({"config": meta, "digest": corpus.digest()}, f, indent=1)
    for name, manifest in corpus.splits.items():
        with open(os.path.join(root, "splits", f"{name}.json"), "w") as f:
            json.dump(manifest.to_json(), f, indent=1)
    for c, imgs in corpus.images.items():
        d = os.path.join(root, "images", str(c))
        os.makedirs(d, exist_ok=True)
        for j, img in enumerate(imgs):
            _save_png(os.path.join(d, f"{j}.png"), img)
    for c in corpus.class_ids:
        d = os.path.join(root, "templates", str(c))
        os.makedirs(d, exist_ok=True)
        for n, img in enumerate(corpus.templates[c]):
            _save_png(os.path.join(d, f"{n}.png"), img)


def _load_dir(d):
    names = sorted((int(os.path.splitext(n)[0]) for n in os.listdir(d) if n.endswith(".png")))
    return np.stack([np.asarray(Image.open(os.path.join(d, f"{n}.png"))) for n in names])


def read_corpus(root):
    if not os.path.exists(os.path.join(root, "classes.json")):
        raise InvalidArgumentError(f"{root} is not a corpus directory")
    with open(os.path.join(root, "classes.json")) as f:
        charset = [GlyphSpec.from_json(r) for r in json.load(f)]
    with open(os.path.join(root, "primitives.json")) as f:
        bank = PrimitiveBank.from_json(json.load(f))
    with open(os.path.join(root, "meta.json")) as f:
        meta = json.load(f)
    cfg = dict(meta["config"])
    cfg["splits"] = tuple(cfg["splits"])
    config = CorpusConfig(**cfg)
    splits = {}
    split_dir = os.path.join(root, "splits")
    for name in sorted(os.listdir(split_dir)):
        with open(os.path.join(split_dir, name)) as f:
            manifest = SplitManifest.from_json(json.load(f))
        splits[os.path.splitext(name)[0]] = manifest
    images = {s.class_id: _load_dir(os.path.join(root, "images", str(s.class_id))) for s in charset}
    templates = np.stack([_load_dir(os.path.join(root, "templates", str(s.class_id))) for s in charset])
    return Corpus(config, bank, charset, splits, images, templates, meta)
