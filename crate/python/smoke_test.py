"""Smoke test for the topicfuse Python extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/topicfuse-*.whl
"""

import json
import tempfile

import topicfuse_py as tf


def main() -> None:
    rules = tf.RuleSet.reference()
    assert len(rules) == 27
    assert rules.tag("the weather was nice") == [27]
    ids = rules.tag("I was transferred three times")
    assert 1 <= len(ids) <= 7 and 27 not in ids, ids
    assert rules.classify("lovely weather today") == [tf.EMERGING_TOPIC]

    assert abs(100 * tf.relative_improvement(0.53, 0.64) - 20.75) < 0.005
    try:
        tf.relative_improvement(0.0, 0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("zero base should raise")

    corpus = tf.generate_corpus(size=60, seed=3)
    assert len(corpus) == 60
    doc_id, text, labels = corpus[0]
    assert isinstance(text, str) and labels

    gold = [labels for _, _, labels in corpus]
    weighted, micro = tf.metrics(gold, gold)
    assert weighted["f1"] == 1.0 and micro["f1"] == 1.0

    config = json.dumps({
        "encoder": {"d_model": 16, "max_seq_len": 64, "layers": 1, "heads": 2},
        "fusion": {"heads": 2},
        "train": {"max_epochs": 3},
    })
    model = tf.Model.train(corpus, variant=5, config=config)
    assert model.variant == 5
    probs = model.probabilities(text)
    assert len(probs) == 27 and all(0.0 < p < 1.0 for p in probs)
    topics, emerging = model.predict(text, threshold=0.5)
    assert emerging == (len(topics) == 0)

    with tempfile.TemporaryDirectory() as d:
        model.save(d)
        again = tf.Model.load(d)
        assert again.probabilities(text) == probs

    rules_only = tf.Model.train(corpus, variant=1)
    topics, _ = rules_only.predict("I was transferred three times")
    assert all(p == 1.0 for _, p in topics)

    summary = json.loads(tf.run_ablation(corpus, config=config))
    assert summary["test_size"] == 18
    assert len(summary["comparison"]["rows"]) == 5

    off = tf.generate_off_topic(5, seed=1)
    assert all(labels == [] for _, _, labels in off)
    print("python smoke test passed")


if __name__ == "__main__":
    main()
