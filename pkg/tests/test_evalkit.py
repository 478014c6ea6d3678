import dataclasses
import json
import math

import numpy as np
import pytest
import torch

from colalab.evalkit import (EvalReport, TimingReport, attention_maps, cross_style_eval,
                             make_batches, timing_harness, visualize_components, zero_shot_eval)
from colalab.exceptions import InvalidArgumentError
from colalab.glyphsynth import generate_corpus
from colalab.matcher import encode_templates
from colalab.model import DESK_MODEL, CoLaNet

from conftest import small_corpus_config


@pytest.fixture(scope="module")
def desk_model():
    torch.manual_seed(0)
    m = CoLaNet(DESK_MODEL)
    m.teacher.freeze()
    return m.eval()


def test_templates_as_samples_give_perfect_accuracy(small_corpus, desk_model):
    split = small_corpus.splits["char-24-16"]
    # every test sample is one of its class templates, so latent == centroid
    images = dict(small_corpus.images)
    for c in split.test_classes:
        images[c] = small_corpus.templates[c][:1]
    toy = dataclasses.replace(small_corpus, images=images)
    report = zero_shot_eval(desk_model, toy, split, n_templates=1, trials=1)
    assert report.top1_accuracy == 1.0


def test_uninformative_model_scores_chance(small_corpus):
    torch.manual_seed(1)
    m = CoLaNet(DESK_MODEL)
    m.teacher.freeze()
    with torch.no_grad():
        # constant backbone output: latent means no longer depend on the image
        m.backbone.mlp[-1].weight.zero_()
    split = small_corpus.splits["char-24-16"]
    report = zero_shot_eval(m, small_corpus, split, trials=20, sampled=True)
    n = report.n_samples * 20
    p = report.chance_level
    assert abs(report.top1_accuracy - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_report_fields_and_aggregation(small_corpus, desk_model):
    split = small_corpus.splits["comp-3"]
    r = zero_shot_eval(desk_model, small_corpus, split, trials=3)
    assert r.chance_level == 1 / len(split.test_classes)
    assert 0 <= r.top1_accuracy <= 1 and len(r.trials) == 3
    weighted = sum(r.per_class_accuracy[c] * r.per_class_counts[c] for c in split.test_classes)
    assert weighted / sum(r.per_class_counts.values()) == pytest.approx(r.top1_accuracy, abs=1e-12)
    assert "test" in r.candidate_set
    assert json.loads(json.dumps(r.to_json()))["split_name"] == "comp-3"


def test_eval_deterministic(small_corpus, desk_model):
    split = small_corpus.splits["char-24-16"]
    a = zero_shot_eval(desk_model, small_corpus, split, trials=2)
    b = zero_shot_eval(desk_model, small_corpus, split, trials=2)
    assert a == b


def test_refuses_seen_test_classes(small_corpus):
    m = CoLaNet(DESK_MODEL)
    m.teacher.freeze()
    split = small_corpus.splits["char-24-16"]
    m.training_record = {"charset_id": small_corpus.charset_id, "classes": [split.test_classes[0]]}
    with pytest.raises(InvalidArgumentError, match="zero-shot"):
        zero_shot_eval(m, small_corpus, split, trials=1)


def test_missing_templates_rejected(small_corpus, desk_model):
    with pytest.raises(InvalidArgumentError):
        zero_shot_eval(desk_model, small_corpus, small_corpus.splits["char-24-16"], n_templates=0)


def test_timing_report(small_corpus, desk_model):
    x, _ = small_corpus.samples(small_corpus.class_ids[:20])
    bank = encode_templates(small_corpus.template_images(range(10)), desk_model,
                            desk_model.slot_init(sample=False), range(10))
    rep = timing_harness(desk_model, bank, make_batches(x, 32, 4), batch_size=32)
    assert isinstance(rep, TimingReport)
    assert rep.batch_size == 32 and rep.num_batches == 4 and rep.avg_ms_per_batch > 0
    assert rep.hardware_note
    with pytest.raises(InvalidArgumentError):
        timing_harness(desk_model, bank, [], batch_size=32)


def test_timing_stable_under_more_batches(small_corpus, desk_model):
    x, _ = small_corpus.samples(small_corpus.class_ids[:20])
    bank = encode_templates(small_corpus.template_images(range(10)), desk_model,
                            desk_model.slot_init(sample=False), range(10))
    ratios = []
    for _ in range(3):
        short = timing_harness(desk_model, bank, make_batches(x, 32, 5)).avg_ms_per_batch
        long = timing_harness(desk_model, bank, make_batches(x, 32, 10)).avg_ms_per_batch
        ratios.append(abs(long - short) / short)
    # best of three to ride out scheduler noise on a shared machine
    assert min(ratios) < 0.2


def test_attention_maps_partition_pixels(small_corpus, desk_model):
    img = small_corpus.images[0][0] / 255.0
    maps = attention_maps(desk_model, img)
    assert maps.shape == (3, 80, 80)
    np.testing.assert_allclose(maps.sum(0), 1.0, atol=1e-5)


def test_visualize_components_outputs(tmp_path, small_corpus, desk_model):
    img = small_corpus.images[3][0] / 255.0
    out = visualize_components(desk_model, img, str(tmp_path / "panel.png"))
    assert len(out["overlays"]) == 3
    assert (tmp_path / "panel.png").exists()
    assert len(list(tmp_path.glob("panel_slot*.png"))) == 3
    blank = visualize_components(desk_model, np.zeros((80, 80)))
    assert all(np.isfinite(o).all() for o in blank["overlays"])


def test_cross_style_eval(tmp_path, desk_model):
    alt = generate_corpus(small_corpus_config(seed=5, heavy_style=True, num_classes=30,
                                              splits=()))
    results, report = cross_style_eval(desk_model, alt, k=10, n_queries=2, max_candidates=50,
                                       out_dir=tmp_path)
    assert isinstance(report, EvalReport) and report.split_name == "cross-style"
    for r in results:
        assert len(r["ranked"]) == 10
        assert r["ranked"][0][0] == r["query"]
    assert len(list(tmp_path.glob("retrieval_*.png"))) == 2
