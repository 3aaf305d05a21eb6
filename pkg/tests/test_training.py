import math

import numpy as np
import pytest

from deepemo.audio import read_wav
from deepemo.dataset import EMOTIONS
from deepemo.errors import EmptyEvalSet, EmptyTrainSet, NonFiniteLoss
from deepemo.features import batch_inputs, bilinear_resize, to_model_input
from deepemo.nn import build_resnet_tiny
from deepemo.nn import functional as F
from deepemo.nn.optim import Adam
from deepemo.training import (
    EpochMetrics,
    TrainConfig,
    evaluate,
    format_metrics_csv,
    predict_topk,
    read_metrics_csv,
    train,
    write_metrics_csv,
)


def test_bilinear_resize_reference():
    img = np.arange(4.0).reshape(2, 2)
    out = bilinear_resize(img, 4, 4)
    # half-pixel sampling: source coords -0.25, 0.25, 0.75, 1.25 clamped to [0, 1]
    row = [0.0, 0.25, 0.75, 1.0]
    expected = np.array([[2 * r + c for c in row] for r in row])
    np.testing.assert_allclose(out, expected, atol=1e-12)
    np.testing.assert_array_equal(bilinear_resize(img, 2, 2), img)


def test_model_input_layout(tone_examples):
    spec = tone_examples[0].features
    x = to_model_input(spec, 64)
    assert x.shape == (3, 64, 64) and x.dtype == np.float32
    np.testing.assert_array_equal(x[0], x[2])
    assert batch_inputs([spec, spec], 32).shape == (2, 3, 32, 32)


def test_epochs_zero(tone_split):
    model = build_resnet_tiny(8, seed=2)
    before = {k: v.copy() for k, v in model.state_dict().items()}
    result = train(model, tone_split.train, tone_split.validation, TrainConfig(epochs=0))
    assert result.metrics == []
    for name, value in before.items():
        assert result.checkpoint.params[name].tobytes() == value.tobytes()


def test_training_deterministic(tone_split):
    runs = []
    for _ in range(2):
        model = build_resnet_tiny(8, seed=7)
        runs.append(train(model, tone_split.train, tone_split.validation,
                          TrainConfig(epochs=3, batch_size=4, lr=1e-3, seed=7)).metrics)
    assert runs[0] == runs[1]


def test_overfit_fixture(trained_tiny):
    _, result = trained_tiny
    metrics = result.metrics
    assert metrics[-1].train_accuracy == 1.0
    assert metrics[-1].train_accuracy >= metrics[0].train_accuracy
    for m in metrics:
        assert 0 <= m.train_accuracy <= 1 and 0 <= m.val_accuracy <= 1
        assert m.mean_loss >= 0 and math.isfinite(m.mean_loss)
    assert [m.epoch for m in metrics] == list(range(1, 61))


def test_evaluate_converged_is_diagonal(trained_tiny, tone_split):
    model, _ = trained_tiny
    result = evaluate(model, tone_split.train)
    assert result.accuracy == 1.0
    assert np.array_equal(result.confusion, np.diag(np.diag(result.confusion)))
    assert result.confusion.sum() == len(tone_split.train)


def test_evaluate_counts(trained_tiny, tone_examples):
    model, _ = trained_tiny
    result = evaluate(model, tone_examples)
    counts = np.bincount([e.label.index for e in tone_examples], minlength=8)
    np.testing.assert_array_equal(result.confusion.sum(axis=1), counts)
    assert result.accuracy == np.trace(result.confusion) / result.confusion.sum()
    header = result.confusion_csv().splitlines()[0]
    assert header == "true\\pred," + ",".join(EMOTIONS)


def test_constant_logits_tie_break(tone_examples):
    model = build_resnet_tiny(8, seed=0)
    model.fc.params["weight"][...] = 0
    result = evaluate(model, tone_examples)
    assert result.confusion[:, 0].sum() == len(tone_examples)
    assert result.confusion[:, 1:].sum() == 0
    assert result.mean_loss == pytest.approx(math.log(8), abs=1e-6)


def test_evaluate_empty():
    with pytest.raises(EmptyEvalSet):
        evaluate(build_resnet_tiny(8, seed=0), [])


def test_train_empty(tone_split):
    with pytest.raises(EmptyTrainSet):
        train(build_resnet_tiny(8, seed=0), [], tone_split.validation, TrainConfig(epochs=1))


def test_non_finite_loss_aborts(tone_split):
    model = build_resnet_tiny(8, seed=0)
    model.fc.params["bias"][0] = np.inf
    with pytest.raises(NonFiniteLoss, match="epoch 1, batch 0"):
        train(model, tone_split.train, tone_split.validation, TrainConfig(epochs=1))


def test_checkpoint_retention(tone_split, tmp_path):
    model = build_resnet_tiny(8, seed=0)
    train(model, tone_split.train, tone_split.validation, TrainConfig(epochs=2, lr=1e-3),
          out_dir=tmp_path, metadata={"note": "x"})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["best.demo", "last.demo"]


def test_loss_decreases_on_fixed_batch(tone_split):
    from deepemo.features import batch_inputs

    x = batch_inputs([e.features for e in tone_split.train], 64)
    y = np.array([e.label.index for e in tone_split.train])
    for seed in range(3):
        model = build_resnet_tiny(8, seed=seed).train()
        opt = Adam(model, lr=3e-5)
        losses = []
        for _ in range(11):
            opt.zero_grad()
            logits = model.forward(x)
            losses.append(F.cross_entropy(logits, y))
            model.backward(F.cross_entropy_backward(logits, y))
            opt.step()
        assert all(b < a for a, b in zip(losses, losses[1:])), losses


def test_predict_topk(trained_tiny, tone_split, tmp_path):
    model, _ = trained_tiny
    happy = next(e for e in tone_split.train if e.label.name == "happy")
    clip = read_wav(happy.path)
    full = predict_topk(model, clip, k=8, image_path=tmp_path / "h.pgm", source=str(happy.path))
    probs = [p for _, p in full.entries]
    assert abs(sum(probs) - 1) < 1e-6
    assert probs == sorted(probs, reverse=True)
    assert sorted(label for label, _ in full.entries) == sorted(EMOTIONS)
    assert full.entries[0][0] == "happy" and full.entries[0][1] > 0.9
    assert (tmp_path / "h.pgm").read_bytes().startswith(b"P5")
    top1 = predict_topk(model, clip, k=1)
    assert top1.entries[0][0] == EMOTIONS[int(np.argmax(full.probabilities))]
    text = full.to_text().splitlines()
    assert text[0] == "rank,label,probability" and text[1].startswith("1,happy,")
    assert text[-1] == f"spectrogram,{tmp_path / 'h.pgm'}"
    import json
    assert json.loads(full.to_json())["top"][0]["label"] == "happy"


def test_predict_ties_are_stable(tone_split):
    model = build_resnet_tiny(8, seed=0)
    model.fc.params["weight"][...] = 0
    report = predict_topk(model, read_wav(tone_split.train[0].path), k=8)
    assert [label for label, _ in report.entries] == list(EMOTIONS)


def test_predict_k_range(trained_tiny, tone_split):
    model, _ = trained_tiny
    with pytest.raises(ValueError):
        predict_topk(model, read_wav(tone_split.train[0].path), k=9)


def test_metrics_csv_round_trip(trained_tiny, tmp_path):
    _, result = trained_tiny
    write_metrics_csv(tmp_path / "m.csv", result.metrics)
    assert read_metrics_csv(tmp_path / "m.csv") == result.metrics
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_acc,loss,val_acc"
    assert len(lines[1].split(",")[1].split(".")[1]) == 6


def test_metrics_csv_table_rows():
    rows = [EpochMetrics(10, 0.88, 0.470, 0.970), EpochMetrics(42, 1.0, 0.009, 1.0)]
    assert format_metrics_csv(rows) == ("epoch,train_acc,loss,val_acc\n"
                                        "10,0.880000,0.470000,0.970000\n"
                                        "42,1.000000,0.009000,1.000000\n")
