"""Template banks, the Gaussian-mixture class posterior and latent retrieval."""

from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import InvalidArgumentError, ShapeError
from .model.cola import SlotInit

DEFAULT_BLOCK = 1024


@dataclass
class TemplateBank:
    """Encoded templates of a charset.

    ``latents`` is ``(C, N, K, D)`` and ``centroids`` its mean over ``N``.
    Immutable by convention once built.
    """

    class_ids: tuple
    latents: torch.Tensor
    centroids: torch.Tensor
    eps_used: SlotInit
    sampled: bool = False
    model_hash: str = ""

    def __len__(self):
        return len(self.class_ids)

    def index_of(self, labels):
        lookup = {c: i for i, c in enumerate(self.class_ids)}
        out = []
        for y in np.asarray(labels).tolist():
            if y not in lookup:
                raise InvalidArgumentError(f"label {y} is not in the template bank")
            out.append(lookup[y])
        return torch.as_tensor(out, dtype=torch.long)

    def save(self, path):
        torch.save(
            {
                "class_ids": list(self.class_ids),
                "centroids": self.centroids,
                "latents": self.latents,
                "eps_used": self.eps_used.values,
                "eps_source": self.eps_used.source,
                "sampled": self.sampled,
                "model_hash": self.model_hash,
            },
            path,
        )

    @classmethod
    def load(cls, path):
        d = torch.load(path, weights_only=False)
        return cls(tuple(d["class_ids"]), d["latents"], d["centroids"],
                   SlotInit(d["eps_used"], d["eps_source"]), d["sampled"], d["model_hash"])


@dataclass
class ClassPosterior:
    log_probs: torch.Tensor  # (B, C)
    class_ids: tuple

    @property
    def probs(self):
        return self.log_probs.exp()

    def argmax(self):
        # torch.argmax returns the first maximum, i.e. the lowest class id
        return self.log_probs.argmax(dim=-1)

    def predicted_classes(self):
        ids = np.asarray(self.class_ids)
        return ids[self.argmax().cpu().numpy()]


def encode_latents(model, images, eps, batch_size=256, generator=None, sample=False):
    """Encode images without building a graph. Returns means, or samples if asked."""
    images = torch.as_tensor(np.asarray(images), dtype=model.eps_mu.dtype)
    outs = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            comps = model.encode(images[start:start + batch_size], eps.detach(),
                                 generator=generator, eval_mode=not sample)
            outs.append(comps.sample)
    if not outs:
        k, d = model.config.n_slots, model.config.slot_dim
        return torch.empty((0, k, d), dtype=model.eps_mu.dtype)
    return torch.cat(outs)


def encode_templates(template_images, model, eps, class_ids=None, batch_size=256,
                     generator=None, sample=False):
    """Encode ``(C, N, H, W)`` template images into a TemplateBank.

    Runs under ``no_grad`` so nothing flows back through the template path.
    Classes are stored in ascending ``class_ids`` order.
    """
    template_images = np.asarray(template_images)
    if template_images.ndim != 4:
        raise ShapeError(f"templates must be (C, N, H, W), got {template_images.shape}")
    n_classes, n_templates = template_images.shape[:2]
    if n_templates == 0:
        raise InvalidArgumentError("every class needs at least one template")
    if class_ids is None:
        class_ids = tuple(range(n_classes))
    class_ids = tuple(int(c) for c in class_ids)
    if len(class_ids) != n_classes:
        raise ShapeError("class_ids length does not match templates")
    order = np.argsort(class_ids, kind="stable")
    template_images = template_images[order]
    class_ids = tuple(class_ids[i] for i in order)
    flat = template_images.reshape(n_classes * n_templates, *template_images.shape[2:])
    lat = encode_latents(model, flat, eps, batch_size, generator, sample)
    lat = lat.reshape(n_classes, n_templates, *lat.shape[1:])
    return TemplateBank(class_ids, lat, lat.mean(dim=1), eps.detach(), sample, model_hash(model))


def model_hash(model):
    import hashlib

    h = hashlib.sha256()
    for name, t in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()[:16]


def squared_distances(latents, centroids, block=None):
    """Squared Frobenius distances ``(B, C)`` between ``(B, K, D)`` and ``(C, K, D)``."""
    if latents.shape[1:] != centroids.shape[1:]:
        raise ShapeError(
            f"latent shape {tuple(latents.shape[1:])} != centroid shape {tuple(centroids.shape[1:])}"
        )
    block = block or centroids.shape[0] or 1
    parts = []
    for start in range(0, centroids.shape[0], block):
        c = centroids[start:start + block]
        diff = latents[:, None] - c[None]
        parts.append(diff.pow(2).sum(dim=(-1, -2)))
    return torch.cat(parts, dim=1)


def class_posterior(latents, bank_or_centroids, sigma, block=None):
    """Posterior over classes of an equal-weight isotropic Gaussian mixture.

    ``log_probs = log_softmax(-||S - centroid_i||^2 / (2 sigma^2))``.
    ``latents`` may be one ``(K, D)`` matrix or a batch ``(B, K, D)``.
    """
    if isinstance(bank_or_centroids, TemplateBank):
        centroids, class_ids = bank_or_centroids.centroids, bank_or_centroids.class_ids
    else:
        centroids = bank_or_centroids
        class_ids = tuple(range(centroids.shape[0]))
    if centroids.shape[0] < 1:
        raise InvalidArgumentError("the class set is empty")
    single = latents.dim() == 2
    if single:
        latents = latents[None]
    if latents.dim() != 3:
        raise ShapeError(f"latents must be (K, D) or (B, K, D), got {tuple(latents.shape)}")
    logits = -squared_distances(latents, centroids.to(latents.dtype), block) / (2.0 * sigma ** 2)
    log_probs = torch.log_softmax(logits, dim=-1)
    if single:
        log_probs = log_probs[0]
    return ClassPosterior(log_probs, class_ids)


def predict(images, bank, model, sigma=None, batch_size=256, generator=None, sample=False):
    """Most probable class id per image, using the bank's slot init."""
    if len(bank) == 0:
        raise InvalidArgumentError("template bank is empty")
    sigma = sigma or model.config.sigma
    images = np.asarray(images)
    single = images.ndim == 2
    if single:
        images = images[None]
    lat = encode_latents(model, images, bank.eps_used, batch_size, generator, sample)
    out = class_posterior(lat, bank, sigma).predicted_classes()
    return out[0] if single else out


def rank_by_distance(query, candidates):
    """Stable ascending ranking of candidates by squared distance to ``query``."""
    d = (candidates - query[None]).pow(2).sum(dim=(-1, -2))
    order = torch.sort(d, stable=True).indices
    return order, d


def retrieve_topk(query_image, candidate_images, model, k=10, eps=None, batch_size=256):
    """Top-``k`` candidates by latent similarity as ``[(index, score)]``.

    Score is the negative squared Frobenius distance of eval-mode latents.
    """
    candidate_images = np.asarray(candidate_images)
    if k > len(candidate_images):
        raise InvalidArgumentError(f"k={k} exceeds {len(candidate_images)} candidates")
    eps = eps if eps is not None else model.slot_init(sample=False)
    q = encode_latents(model, np.asarray(query_image)[None], eps, batch_size)[0]
    cands = encode_latents(model, candidate_images, eps, batch_size)
    order, d = rank_by_distance(q, cands)
    return [(int(i), -float(d[i])) for i in order[:k]]
