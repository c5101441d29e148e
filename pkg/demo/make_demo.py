"""Regenerate the demo corpus, region features, and run config.

Everything is seeded, so the committed files are reproducible:

    python3 demo/make_demo.py
"""

import json
from pathlib import Path

import numpy as np

from feedsynth.data import Comment, Sample, write_records
from feedsynth.regions import BoundingBox, RegionFeatureSet, write_region_features

HERE = Path(__file__).parent

ARTICLES = [
    ("storm batters the northern coast overnight",
     [("stay safe out there", 14), ("the waves look terrifying", 6), ("hope the boats are ok", 2)]),
    ("city council approves the new riverside park",
     [("great news for families", 9), ("about time we got more green space", 4)]),
    ("local team clinches the title in extra time",
     [("what a finish", 22), ("never doubted them", 8), ("the keeper won us the cup", 5)]),
    ("researchers map the deepest part of the ocean trench",
     [("science keeps amazing us", 11), ("imagine what lives down there", 7)]),
    ("museum unveils a lost painting after restoration",
     [("the colors are stunning", 10), ("i want to see this in person", 3)]),
    ("voters queue from dawn across the capital",
     [("democracy in action", 13), ("longest line i have ever seen", 2)]),
    ("tiny bakery wins the national bread award",
     [("those loaves look delicious", 8), ("well deserved", 4), ("queue starts tomorrow", 1)]),
    ("library reopens with a restored reading room",
     [("good news for book lovers", 7), ("the ceiling is gorgeous", 5)]),
    ("drought forces farmers to change crops",
     [("hard times for the valley", 6), ("we need better water planning", 9)]),
    ("new bridge cuts the commute in half",
     [("finally no more detours", 12), ("the view from the top is great", 3)]),
    ("volunteers clean up the harbor beach",
     [("proud of this town", 15), ("count me in next month", 4)]),
    ("night market returns for the summer season",
     [("best food stalls in the city", 10), ("see you there friday", 6)]),
]


def main():
    rng = np.random.default_rng(2024)
    samples, region_sets = [], []
    for i, (text, comments) in enumerate(ARTICLES):
        ref = f"demo-img-{i:02d}"
        samples.append(Sample(
            id=f"demo-{i:02d}",
            title=text.split()[0],
            text=text,
            image_ref=ref,
            comments=[Comment(t, likes) for t, likes in comments],
        ))
        n_regions = int(rng.integers(3, 7))
        feats = rng.normal(0.0, 1.0, (n_regions, 16)).astype(np.float32)
        boxes = []
        for _ in range(n_regions):
            x1, y1 = rng.uniform(0, 300, 2)
            w, h = rng.uniform(20, 200, 2)
            boxes.append(BoundingBox(x1, y1, x1 + w, y1 + h))
        region_sets.append(RegionFeatureSet(ref, boxes, feats))

    write_records(samples, HERE / "records.jsonl")
    write_region_features(region_sets, HERE / "regions.jsonl")

    run_config = {
        "corpus": "demo/records.jsonl",
        "region_features": "demo/regions.jsonl",
        "out_dir": "demo/run",
        "seed": 0,
        "ablation": "TVAR",
        "split_mode": "holdout80_20",
        "model": {
            "d_model": 32,
            "n_heads": 4,
            "n_layers_enc": 2,
            "n_layers_dec": 2,
            "d_ffn_hidden": 64,
            "dropout": 0.1,
            "max_text_len": 64,
            "max_gen_len": 12,
        },
        "train": {"batch_size": 8, "lr": 5e-4, "epochs": 5},
    }
    (HERE / "run.json").write_text(json.dumps(run_config, indent=2) + "\n")
    print(f"wrote {len(samples)} articles, {len(region_sets)} region sets, run.json")


if __name__ == "__main__":
    main()
