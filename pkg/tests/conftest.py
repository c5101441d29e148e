import numpy as np
import pytest

from feedsynth.data import Comment, Sample
from feedsynth.model import ModelConfig
from feedsynth.regions import BoundingBox, RegionFeatureSet
from feedsynth.training import TrainConfig


def _region_set(ref: str, rng: np.random.Generator, n_regions: int = 4, dim: int = 8) -> RegionFeatureSet:
    feats = rng.normal(0.0, 1.0, (n_regions, dim)).astype(np.float32)
    boxes = [BoundingBox(j, j, j + 20, j + 15) for j in range(n_regions)]
    return RegionFeatureSet(ref, boxes, feats)


OVERFIT_TEXTS = [
    "the city opened a new bridge over the river",
    "a storm swept the northern coast last night",
    "the team won the final match in extra time",
    "scientists found water on a distant planet",
    "the museum unveiled a rare painting today",
    "voters lined up early across the capital",
    "a chef opened a tiny bakery downtown",
    "the old library finally got its roof fixed",
]

OVERFIT_COMMENTS = [
    "what a beautiful bridge",
    "stay safe everyone",
    "incredible win for the team",
    "science keeps amazing us",
    "i want to see this painting",
    "democracy in action",
    "those pastries look delicious",
    "good news for book lovers",
]


@pytest.fixture(scope="session")
def overfit_corpus():
    """Eight one-comment articles plus region features; built once per session."""
    rng = np.random.default_rng(42)
    samples, regions = [], {}
    for i, (text, comment) in enumerate(zip(OVERFIT_TEXTS, OVERFIT_COMMENTS)):
        ref = f"img{i}"
        samples.append(
            Sample(id=f"art{i}", title=f"story {i}", text=text, image_ref=ref,
                   comments=[Comment(comment, likes=i + 1)])
        )
        regions[ref] = _region_set(ref, rng)
    return samples, regions


@pytest.fixture()
def small_corpus():
    """Three articles with multiple liked comments for pipeline/metric tests."""
    rng = np.random.default_rng(7)
    samples = [
        Sample(id="a0", title="flood", text="heavy rain flooded the old town square",
               image_ref="p0",
               comments=[Comment("hope everyone is safe", 9),
                         Comment("terrible news", 4),
                         Comment("the square looked lovely last year", 1)]),
        Sample(id="a1", title="launch", text="the rocket launch was delayed again",
               image_ref="p1",
               comments=[Comment("space is hard", 5),
                         Comment("so disappointing", 2)]),
        Sample(id="a2", title="derby", text="the derby ended in a late draw",
               image_ref="p2",
               comments=[Comment("what a finish", 7),
                         Comment("refs missed a clear penalty", 7),
                         Comment("great game", 0)]),
    ]
    regions = {f"p{i}": _region_set(f"p{i}", rng, n_regions=3, dim=6) for i in range(3)}
    return samples, regions


@pytest.fixture()
def tiny_model_config():
    return ModelConfig(d_model=16, n_heads=2, n_layers_enc=1, n_layers_dec=1,
                       d_ffn_hidden=32, d_visual=6, dropout=0.0,
                       max_text_len=64, max_gen_len=10, ablation="TVAR")


@pytest.fixture()
def fast_train_config():
    return TrainConfig(batch_size=4, lr=5e-4, epochs=2, seed=0)


OVERFIT_MODEL = dict(d_model=32, n_heads=4, n_layers_enc=2, n_layers_dec=2,
                     d_ffn_hidden=64, dropout=0.0, max_text_len=64, max_gen_len=12,
                     ablation="TVAR")

OVERFIT_TRAIN = dict(batch_size=2, lr=5e-4, epochs=500, seed=0, target_loss=0.04)
