import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deepemo.audio import AudioClip, encode_wav  # noqa: E402

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prior = _ACCEPTANCE.get(number, (title, True))
        _ACCEPTANCE[number] = (title, prior[1] and report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def wav_bytes(samples, rate=22050):
    return encode_wav(AudioClip(np.asarray(samples, dtype=np.float64), rate))


@pytest.fixture(scope="session")
def tone_corpus(tmp_path_factory):
    from deepemo.synth import write_tone_corpus

    root = tmp_path_factory.mktemp("tones")
    write_tone_corpus(root / "data", per_class=2)
    return root


@pytest.fixture(scope="session")
def tone_examples(tone_corpus):
    from deepemo.dataset import build_feature_cache, scan_dataset
    from deepemo.dsp import SpectrogramConfig

    return build_feature_cache(scan_dataset(tone_corpus / "data"), SpectrogramConfig(),
                               tone_corpus / "cache")


@pytest.fixture(scope="session")
def tone_split(tone_examples):
    from deepemo.dataset import stratified_split

    return stratified_split(tone_examples, 0.5, seed=0)


@pytest.fixture(scope="session")
def trained_tiny(tone_split):
    from deepemo.nn import build_resnet_tiny
    from deepemo.training import TrainConfig, train

    model = build_resnet_tiny(8, seed=0)
    result = train(model, tone_split.train, tone_split.validation,
                   TrainConfig(epochs=60, batch_size=16, lr=1e-3, seed=0))
    return model, result
