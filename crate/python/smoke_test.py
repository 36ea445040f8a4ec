"""Smoke test for the `distractor` Python extension.

Uses an installed module if present (`pip install ./crates/python`),
otherwise the library built by `cargo build -p distractor-py [--release]`.
"""

import importlib
import json
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    try:
        return importlib.import_module("distractor")
    except ImportError:
        pass
    suffix = {"darwin": "dylib", "win32": "dll"}.get(sys.platform, "so")
    prefix = "" if sys.platform == "win32" else "lib"
    built = [ROOT / "target" / p / f"{prefix}distractor.{suffix}" for p in ("release", "debug")]
    built = [p for p in built if p.exists()]
    if not built:
        sys.exit("distractor extension not found; run `cargo build -p distractor-py` first")
    lib = max(built, key=lambda p: p.stat().st_mtime)
    tmp = Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / ("distractor.pyd" if sys.platform == "win32" else "distractor.so"))
    sys.path.insert(0, str(tmp))
    return importlib.import_module("distractor")


TINY = {
    "synth": {"topics": 3, "questions_per_topic": 12},
    "split": [24, 6, 6],
    "baseline": {"resources": {"w2v": {"dim": 8, "epochs": 1}, "glove": {"dim": 8, "epochs": 1}}, "negatives": 10},
    "train": {
        "batch": 8,
        "epochs": 2,
        "merges": 100,
        "encoder": {"d_model": 16, "layers": 1, "heads": 2, "ffn": 32, "max_len": 24, "d_out": 8},
    },
    "run_depth": 20,
}


def main():
    d = load_module()

    assert d.normalize_surface("  New   YORK ") == "new york"
    p = d.fisher_exact(1, 9, 11, 3)
    assert abs(p - 0.002759456185220088) < 1e-12, p
    m = d.query_metrics([3, 1, 2], [1], k=2)
    assert m["R@2"] == 1.0 and m["RR"] == 0.5, m

    corpus = d.Corpus.synthetic(topics=2, questions_per_topic=5, seed=1)
    assert len(corpus) == 10
    assert set(corpus.items()[0]) >= {"id", "stem", "key", "distractors"}
    assert len(corpus.pool()) > 0

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp)
        report = d.run_pipeline(str(out), seed=42, params=json.dumps(TINY))
        assert set(report["models"]) == {"baseline", "dsim", "qsim", "dqsim"}
        again = d.run_pipeline(str(out / "again"), seed=42, params=json.dumps(TINY))
        assert again["models"] == report["models"]

        models = out / "models"
        engine = d.Engine(
            str(out / "pool.txt"),
            baseline=str(models / "baseline"),
            dsim=str(models / "dsim"),
            qsim=str(models / "qsim"),
            alpha=report["fusion"]["alpha"],
        )
        assert engine.available() == ["baseline", "dsim", "qsim", "dqsim"]
        test = d.Corpus.load(str(out / "test.jsonl"))
        item = test.items()[0]
        for kind in engine.available():
            top = engine.rank(kind, item["stem"], item["key"], k=5)
            assert len(top) == 5
            assert all(s != d.normalize_surface(item["key"]) for s, _ in top)

        pool = d.Pool.load(str(out / "pool.txt"))
        n = engine.rank_corpus("dsim", test, str(out / "dsim_again.jsonl"), depth=20, seed=42)
        assert n == len(test)
        metrics = d.evaluate(str(out / "dsim_again.jsonl"), test, pool)
        assert metrics == report["models"]["dsim"], (metrics, report["models"]["dsim"])

        try:
            engine.rank("nope", "q", "a")
        except d.DistractorError as e:
            assert "invalid_config" in str(e), e
        else:
            raise AssertionError("unknown model accepted")

        small = d.Engine(str(out / "pool.txt"), dsim=str(models / "dsim"))
        try:
            small.rank("qsim", "q", "a")
        except d.DistractorError as e:
            assert "model_not_loaded" in str(e), e
        else:
            raise AssertionError("missing model accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
