"""Zero-shot evaluation, inference timing, retrieval and component heatmaps."""

import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from matplotlib import colormaps
from PIL import Image

from .exceptions import InvalidArgumentError
from .matcher import encode_latents, encode_templates, predict, rank_by_distance

CANDIDATE_SET_NOTE = "test-charset templates only"
OVERLAY_ALPHA = 0.6
COLORMAP = "viridis"


@dataclass
class EvalReport:
    split_name: str
    top1_accuracy: float
    per_class_accuracy: dict
    per_class_counts: dict
    n_samples: int
    chance_level: float
    seed: int
    trials: list
    sampled_eval: bool = False
    candidate_set: str = CANDIDATE_SET_NOTE

    def to_json(self):
        d = asdict(self)
        d["per_class_accuracy"] = {str(k): v for k, v in self.per_class_accuracy.items()}
        d["per_class_counts"] = {str(k): v for k, v in self.per_class_counts.items()}
        return d

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1)


@dataclass
class TimingReport:
    batch_size: int
    num_batches: int
    avg_ms_per_batch: float
    hardware_note: str = field(default_factory=lambda: f"{platform.processor() or platform.machine()}, "
                                                       f"torch threads={torch.get_num_threads()}")

    def save(self, path):
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=1)


def check_zero_shot(model, corpus, split):
    """Refuse splits whose test classes were seen when training ``model``."""
    record = getattr(model, "training_record", None)
    if not record or record.get("charset_id") != corpus.charset_id:
        return
    seen = set(record["classes"]) & set(split.test_classes)
    if seen:
        raise InvalidArgumentError(
            f"zero-shot violation: {len(seen)} test classes were used in training, e.g. {sorted(seen)[:5]}"
        )


def zero_shot_eval(model, corpus, split, n_templates=None, trials=3, sampled=False, seed=0,
                   batch_size=256):
    """Accuracy on ``split.test_classes`` matched against their templates only.

    With ``sampled`` off every trial uses the learned slot-init mean and
    latent means, so trials are identical; with it on each trial draws a
    fresh slot init and samples latents.
    """
    check_zero_shot(model, corpus, split)
    test = list(split.test_classes)
    if not test:
        raise InvalidArgumentError("split has no test classes")
    templates = corpus.template_images(test)
    if n_templates is not None:
        templates = templates[:, :n_templates]
    if templates.shape[1] == 0:
        raise InvalidArgumentError("test classes have no templates")
    x, y = corpus.samples(test)
    model.eval()
    correct = {c: 0 for c in test}
    counts = {c: 0 for c in test}
    trial_acc = []
    for t in range(trials):
        gen = torch.Generator().manual_seed(seed * 1000 + t)
        eps = model.slot_init(gen, sample=sampled)
        bank = encode_templates(templates, model, eps, test, batch_size, gen, sample=sampled)
        pred = predict(x, bank, model, batch_size=batch_size, generator=gen, sample=sampled)
        hits = pred == y
        trial_acc.append(float(hits.mean()))
        for c in test:
            mask = y == c
            correct[c] += int(hits[mask].sum())
            counts[c] += int(mask.sum())
    total = sum(counts.values())
    return EvalReport(
        split_name=split.name,
        top1_accuracy=sum(correct.values()) / total,
        per_class_accuracy={c: correct[c] / counts[c] for c in test},
        per_class_counts=counts,
        n_samples=len(y),
        chance_level=1.0 / len(test),
        seed=seed,
        trials=trial_acc,
        sampled_eval=sampled,
    )


def timing_harness(model, bank, batches, batch_size=32, warmup=3):
    """Mean wall-clock milliseconds per predicted batch, after ``warmup`` untimed runs."""
    batches = [np.asarray(b) for b in batches]
    if not batches:
        raise InvalidArgumentError("timing needs at least one batch")
    model.eval()
    for i in range(warmup):
        predict(batches[i % len(batches)], bank, model, batch_size=batch_size)
    times = []
    for b in batches:
        t0 = time.perf_counter()
        predict(b, bank, model, batch_size=batch_size)
        times.append(time.perf_counter() - t0)
    return TimingReport(batch_size, len(batches), 1000.0 * float(np.mean(times)))


def make_batches(images, batch_size, num_batches):
    images = np.asarray(images)
    out = []
    for i in range(num_batches):
        idx = np.arange(i * batch_size, (i + 1) * batch_size) % len(images)
        out.append(images[idx])
    return out


def attention_maps(model, image, eps=None):
    """Final-round slot attention upsampled to the image size, ``(K, H, W)``."""
    eps = eps if eps is not None else model.slot_init(sample=False)
    x = torch.as_tensor(np.asarray(image)[None], dtype=model.eps_mu.dtype)
    model.eval()
    with torch.no_grad():
        attn = model.encode(x, eps.detach()).attention[0]
    g = model.config.grid
    maps = attn.reshape(1, -1, g, g)
    # bilinear weights sum to one, so the per-pixel slot sum stays 1
    up = F.interpolate(maps, size=tuple(x.shape[-2:]), mode="bilinear", align_corners=False)
    return up[0].double().numpy()


def overlay(image, heat, alpha=OVERLAY_ALPHA):
    """Blend a [0,1] heatmap over a grayscale glyph (ink drawn dark)."""
    base = np.repeat((1.0 - np.clip(image, 0, 1))[..., None], 3, axis=-1)
    rng = heat.max() - heat.min()
    norm = (heat - heat.min()) / rng if rng > 0 else np.zeros_like(heat)
    colored = colormaps[COLORMAP](norm)[..., :3]
    return (1 - alpha) * base + alpha * colored


def _to_png(rgb, path):
    Image.fromarray(np.round(np.clip(rgb, 0, 1) * 255).astype(np.uint8)).save(path)


def visualize_components(model, image, out_path=None, eps=None):
    """Per-slot attention overlays plus a panel ``[input | slot 1 | ... | slot K]``."""
    image = np.asarray(image, dtype=np.float64)
    maps = attention_maps(model, image, eps)
    overlays = [overlay(image, m) for m in maps]
    base = np.repeat((1.0 - image)[..., None], 3, axis=-1)
    sep = np.ones((image.shape[0], 2, 3))
    pieces = [base]
    for o in overlays:
        pieces += [sep, o]
    panel = np.concatenate(pieces, axis=1)
    if out_path:
        root, ext = os.path.splitext(out_path)
        _to_png(panel, out_path)
        for k, o in enumerate(overlays):
            _to_png(o, f"{root}_slot{k}{ext or '.png'}")
    return {"maps": maps, "overlays": overlays, "panel": panel}


def retrieval_panel(query, candidates, ranked, out_path=None):
    """Query image followed by its ranked neighbours."""
    tiles = [1.0 - np.asarray(query)] + [1.0 - np.asarray(candidates[i]) for i, _ in ranked]
    h = tiles[0].shape[0]
    sep = np.full((h, 2), 0.5)
    row = []
    for i, t in enumerate(tiles):
        row += ([sep] if i else []) + [t]
    panel = np.concatenate(row, axis=1)
    if out_path:
        _to_png(np.repeat(panel[..., None], 3, axis=-1), out_path)
    return panel


def cross_style_eval(model, alt_corpus, k=10, n_queries=4, max_candidates=500, out_dir=None,
                     seed=0):
    """Transfer check on a corpus built from a different primitive bank.

    Emits decomposition and top-``k`` retrieval panels for a few queries and
    an EvalReport matching alt samples against all alt templates.
    """
    from .glyphsynth.splits import CHARACTER_ZEROSHOT, SplitManifest

    eps = model.slot_init(sample=False)
    x, y = alt_corpus.samples(alt_corpus.class_ids)
    rng = np.random.default_rng(seed)
    pool = np.sort(rng.choice(len(x), size=min(max_candidates, len(x)), replace=False))
    candidates = x[pool]
    if k > len(candidates):
        raise InvalidArgumentError(f"k={k} exceeds {len(candidates)} candidates")
    lat = encode_latents(model, candidates, eps)
    results = []
    for qi in range(min(n_queries, len(candidates))):
        order, d = rank_by_distance(lat[qi], lat)
        ranked = [(int(i), -float(d[i])) for i in order[:k]]
        paths = (None, None)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            paths = (os.path.join(out_dir, f"decomp_{qi}.png"), os.path.join(out_dir, f"retrieval_{qi}.png"))
        visualize_components(model, candidates[qi], paths[0], eps)
        retrieval_panel(candidates[qi], candidates, ranked, paths[1])
        results.append({"query": int(pool[qi]), "ranked": [(int(pool[i]), s) for i, s in ranked]})
    alt_split = SplitManifest((), tuple(alt_corpus.class_ids), CHARACTER_ZEROSHOT,
                              {"m": 0, "k": len(alt_corpus.class_ids)}, alt_corpus.config.seed)
    report = zero_shot_eval(model, alt_corpus, alt_split, trials=1)
    report.split_name = "cross-style"
    return results, report
