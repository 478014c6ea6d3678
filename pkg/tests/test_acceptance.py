"""End-to-end acceptance checks, one test per criterion.

The trained-model criteria share four desk-preset trainings built once per
session (roughly an hour on a single CPU core). Each test records a PASS or
FAIL line that the terminal summary prints.
"""

import copy
import math
import time

import mpmath
import numpy as np
import pytest
import torch
from torch.distributions import Normal, kl_divergence

from colalab.evalkit import TimingReport, make_batches, timing_harness, zero_shot_eval
from colalab.exceptions import InvalidArgumentError
from colalab.glyphsynth import CorpusConfig, generate_corpus
from colalab.glyphsynth.splits import SplitManifest
from colalab.matcher import class_posterior, encode_latents, encode_templates, retrieve_topk
from colalab.model import DESK_MODEL, TINY_MODEL, CoLaNet, SlotAttention
from colalab.model.teacher import teacher_features
from colalab.presets import DESK_TRAIN
from colalab.trainer import TrainConfig, loss, train, train_teacher_on_split

pytestmark = pytest.mark.slow

SIGMA = math.sqrt(2) / 2
RESULTS = []

# pinned tolerances
CHAR_MIN_ACC = 0.25
CHAR_MAX_MINUTES = 60
COMP_MIN_CHANCE_MULTIPLE = 10
POSTERIOR_ATOL = 1e-10
GRAD_MAX_REL = 1e-4
ELBO_CONST_TOL = 1e-8
TRIALS = 3
SPLITS = ("char:120:80", "comp:3", "char:80:40", "char:160:40")


def record(number, title, ok, detail):
    line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def corpus():
    # every split whose training classes get the full per-class sample count
    return generate_corpus(CorpusConfig(splits=SPLITS))


class Trained:
    def __init__(self, model, split, seconds):
        self.model, self.split, self.seconds = model, split, seconds


def _train(corpus, split):
    cfg = copy.deepcopy(DESK_TRAIN)
    torch.manual_seed(cfg.seed)
    model = CoLaNet(DESK_MODEL)
    t0 = time.time()
    train_teacher_on_split(model, corpus, split, cfg)
    train(corpus, split, model, cfg)
    return Trained(model.eval(), split, time.time() - t0)


@pytest.fixture(scope="session")
def trained(corpus):
    cache = {}

    def get(split_text):
        if split_text not in cache:
            cache[split_text] = _train(corpus, corpus.splits[split_text.replace(":", "-")])
        return cache[split_text]

    return get


# trained-model criteria

def test_c1_character_zero_shot(corpus, trained):
    run = trained("char:120:80")
    rep = zero_shot_eval(run.model, corpus, run.split, n_templates=10, trials=TRIALS)
    minutes = run.seconds / 60
    ok = rep.top1_accuracy >= CHAR_MIN_ACC and minutes <= CHAR_MAX_MINUTES
    record(1, "character zero-shot char-120-80", ok,
           f"acc={rep.top1_accuracy:.4f} (need >= {CHAR_MIN_ACC}, chance {rep.chance_level:.4f}, "
           f"{rep.top1_accuracy / rep.chance_level:.1f}x), trials={[round(t, 4) for t in rep.trials]}, "
           f"train time {minutes:.1f} min (limit {CHAR_MAX_MINUTES})")


def test_c2_component_zero_shot(corpus, trained):
    run = trained("comp:3")
    rep = zero_shot_eval(run.model, corpus, run.split, n_templates=10, trials=TRIALS)
    need = COMP_MIN_CHANCE_MULTIPLE * rep.chance_level
    record(2, "component zero-shot comp-3", rep.top1_accuracy >= need,
           f"acc={rep.top1_accuracy:.4f} over {len(run.split.test_classes)} test classes "
           f"(need >= {need:.4f} = {COMP_MIN_CHANCE_MULTIPLE}x chance)")


def test_c3_accuracy_rises_with_m(corpus, trained):
    small, large = trained("char:80:40"), trained("char:160:40")
    assert small.split.test_classes == large.split.test_classes
    a = zero_shot_eval(small.model, corpus, small.split, trials=TRIALS).top1_accuracy
    b = zero_shot_eval(large.model, corpus, large.split, trials=TRIALS).top1_accuracy
    record(3, "trend over m on the last 40 classes", b >= a, f"m=80 acc={a:.4f}, m=160 acc={b:.4f}")


# exactness criteria

def test_c4_posterior_oracle():
    rng = np.random.default_rng(0)
    mpmath.mp.dps = 50
    worst = 0.0
    for i in range(1000):
        scale = 0.05 if i % 2 else 1.0
        centroids = rng.normal(size=(50, 3, 128)) * scale
        latent = centroids[rng.integers(50)] + rng.normal(size=(3, 128)) * scale
        got = class_posterior(torch.tensor(latent), torch.tensor(centroids), SIGMA).probs.numpy()
        d = ((latent[None] - centroids) ** 2).sum(axis=(1, 2))
        w = [mpmath.exp(-mpmath.mpf(float(x)) / (2 * mpmath.mpf(SIGMA) ** 2)) for x in d]
        z = mpmath.fsum(w)
        naive = np.array([float(v / z) for v in w])
        worst = max(worst, float(np.abs(got - naive).max()))
    record(4, "posterior vs explicit exponentials", worst <= POSTERIOR_ATOL,
           f"max abs error {worst:.2e} over 1000 instances (tol {POSTERIOR_ATOL:.0e})")


def _tiny(seed=0):
    torch.manual_seed(seed)
    m = CoLaNet(TINY_MODEL).double()
    m.teacher.freeze()
    return m


def _tiny_data(n=12, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 16, 16))
    y = np.repeat([0, 1, 2], n // 3)
    t = rng.random((3, 2, 16, 16))
    return x, y, t


def test_c5_gradient_check():
    m = _tiny()
    x, y, t = _tiny_data()
    bank = encode_templates(t, m, m.slot_init(sample=False))
    params = list(m.encoder_parameters()) + list(m.decoder_parameters())

    def objective():
        gen = torch.Generator().manual_seed(7)
        return loss(m, x[:4], y[:4], bank, TrainConfig(lam=1.0), gen, m.slot_init(gen)).total

    m.zero_grad()
    objective().backward()
    analytic = [p.grad.detach().clone() for p in params]
    h, worst, count = 1e-6, 0.0, 0
    with torch.no_grad():
        for p, g in zip(params, analytic):
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = objective().item()
                flat[i] = orig - h
                down = objective().item()
                flat[i] = orig
                num = (up - down) / (2 * h)
                a = g.view(-1)[i].item()
                worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-3))
                count += 1
    record(5, "float64 gradient check", worst < GRAD_MAX_REL,
           f"max relative error {worst:.2e} over {count} parameters (tol {GRAD_MAX_REL:.0e})")


def test_c6_invariant_suite(corpus):
    failures = []

    def check(name, cond):
        if not cond:
            failures.append(name)

    g = torch.Generator().manual_seed(0)
    sa = SlotAttention(DESK_MODEL).double()
    h = torch.randn(4, 30, DESK_MODEL.feat_dim, generator=g, dtype=torch.float64)
    init = torch.randn(3, DESK_MODEL.slot_dim, generator=g, dtype=torch.float64)
    _, attn = sa(h, init)
    check("attention sums to 1 over slots", torch.allclose(attn.sum(1), torch.ones(4, 30, dtype=torch.float64)))
    w = attn / attn.sum(2, keepdim=True)
    check("assignment weights sum to 1 over positions", torch.allclose(w.sum(2), torch.ones(4, 3, dtype=torch.float64)))

    m = CoLaNet(DESK_MODEL).double()
    m.teacher.freeze()
    out = m.decoder(torch.randn(2, 3, DESK_MODEL.slot_dim, dtype=torch.float64))
    check("decoder masks sum to 1 over slots", torch.allclose(out.masks.sum(1), torch.ones_like(out.masks[:, 0])))

    lat = torch.randn(6, 3, 16, generator=g, dtype=torch.float64)
    cen = torch.randn(11, 3, 16, generator=g, dtype=torch.float64)
    post = class_posterior(lat, cen, SIGMA)
    check("pi sums to 1", torch.allclose(post.probs.sum(1), torch.ones(6, dtype=torch.float64)))
    perm = torch.randperm(11, generator=g)
    check("pi permutes with centroid rows", torch.allclose(class_posterior(lat, cen[perm], SIGMA).probs, post.probs[:, perm]))
    check("argmax invariant to sigma", all(torch.equal(class_posterior(lat, cen, s).argmax(), post.argmax())
                                           for s in (0.1, 1.0, 7.0)))

    tm = _tiny()
    x, y, t = _tiny_data()
    bank = encode_templates(t, tm, tm.slot_init(sample=False))
    for lam in (0.0, 0.01, 1.0):
        r = loss(tm, x[:6], y[:6], bank, TrainConfig(lam=lam), torch.Generator().manual_seed(1))
        check(f"kl terms exactly 0 (lam={lam})", r.kl_input.item() == 0.0 and r.kl_temp.item() == 0.0)
        check(f"total == recon + lam*pred exactly (lam={lam})", torch.equal(r.total, r.recon + lam * r.pred))

    for s in corpus.splits.values():
        check(f"{s.name} disjoint", not set(s.train_classes) & set(s.test_classes))
    try:
        SplitManifest((1, 2), (2, 3), "character_zeroshot", {"m": 2, "k": 2})
        check("overlapping manifest rejected", False)
    except InvalidArgumentError:
        pass
    seen = CoLaNet(DESK_MODEL)
    seen.teacher.freeze()
    split = corpus.splits["char-120-80"]
    seen.training_record = {"charset_id": corpus.charset_id, "classes": [split.test_classes[0]]}
    try:
        zero_shot_eval(seen, corpus, split, trials=1)
        check("evaluator refuses seen test classes", False)
    except InvalidArgumentError:
        pass
    record(6, "invariant suite", not failures, "all checks hold" if not failures else f"failed: {failures}")


def test_c7_elbo_equivalence():
    m = _tiny()
    x, y, t = _tiny_data(n=60, seed=2)
    bank = encode_templates(t, m, m.slot_init(sample=False))
    rng = np.random.default_rng(3)
    consts = []
    for b in range(10):
        idx = rng.choice(len(x), size=8, replace=False)
        eps = m.slot_init(sample=False)
        r = loss(m, x[idx], y[idx], bank, TrainConfig(lam=1.0), torch.Generator().manual_seed(b), eps)
        gen = torch.Generator().manual_seed(b)
        images = torch.as_tensor(x[idx])
        target = teacher_features(m.teacher, images)
        comps = m.encode(images, eps, gen, eval_mode=False)
        recon = m.decode(comps.sample).mu_d
        log_lik = Normal(recon, SIGMA).log_prob(target).sum(dim=(1, 2, 3))
        comp_ll = Normal(bank.centroids[None], SIGMA).log_prob(comps.sample[:, None]).sum(dim=(2, 3))
        yi = torch.as_tensor(y[idx])
        log_pi = comp_ll[torch.arange(len(yi)), yi] - torch.logsumexp(comp_ll, 1)
        kl = kl_divergence(Normal(comps.mean, SIGMA), Normal(comps.mean, SIGMA)).sum(dim=(1, 2))
        elbo = (log_lik + log_pi - 2 * kl).mean()
        consts.append((r.total + elbo).item())
    spread = max(consts) - min(consts)
    record(7, "loss = -ELBO_MC + const", spread < ELBO_CONST_TOL,
           f"constant {consts[0]:.10f}, spread {spread:.2e} over 10 batches (tol {ELBO_CONST_TOL:.0e})")


def test_c8_determinism(corpus, trained):
    again = generate_corpus(CorpusConfig(splits=SPLITS))
    same_corpus = again.digest() == corpus.digest()
    run = trained("char:120:80")
    a = zero_shot_eval(run.model, corpus, run.split, trials=TRIALS)
    b = zero_shot_eval(run.model, corpus, run.split, trials=TRIALS)
    record(8, "determinism", same_corpus and a == b,
           f"corpus digests equal={same_corpus}, EvalReports equal={a == b}")


def test_c9_retrieval(corpus, trained):
    model = copy.deepcopy(trained("char:120:80").model).double()
    x, _ = corpus.samples(corpus.class_ids)
    pool = np.sort(np.random.default_rng(0).choice(len(x), 500, replace=False))
    cands = x[pool].astype(np.float64)
    eps = model.slot_init(sample=False)
    lat = encode_latents(model, cands, eps).numpy()
    ok_all, self_first = True, True
    for qi in (0, 17, 250, 499):
        got = [i for i, _ in retrieve_topk(cands[qi], cands, model, k=500, eps=eps)]
        q = encode_latents(model, cands[qi][None], eps).numpy()[0]
        d = [float(((lat[i] - q) ** 2).sum()) for i in range(500)]
        ok_all &= got == sorted(range(500), key=lambda i: (d[i], i))
        self_first &= got[0] == qi
    record(9, "retrieval equals exhaustive sort", ok_all and self_first,
           f"exact order match on 500 candidates={ok_all}, self ranked first={self_first}")


def test_c10_timing_report(corpus, trained):
    run = trained("char:120:80")
    test = list(run.split.test_classes)
    bank = encode_templates(corpus.template_images(test), run.model, run.model.slot_init(sample=False), test)
    x, _ = corpus.samples(test)
    rep = timing_harness(run.model, bank, make_batches(x, 32, 10), batch_size=32)
    ok = (isinstance(rep, TimingReport) and rep.batch_size == 32 and rep.num_batches == 10
          and rep.avg_ms_per_batch >= 0 and bool(rep.hardware_note))
    record(10, "timing harness", ok, f"{rep.avg_ms_per_batch:.1f} ms per batch of 32 ({rep.hardware_note})")
