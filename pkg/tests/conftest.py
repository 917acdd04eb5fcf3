import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, d, cond=None):
    """SPD matrix with random eigenvectors; log-uniform spectrum spanning ``cond``."""
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    if cond is None:
        w = rng.uniform(0.5, 2.0, d)
    else:
        w = np.exp(np.linspace(0, np.log(cond), d))
        rng.shuffle(w)
    a = (q * w) @ q.T
    return 0.5 * (a + a.T)


def random_symmetric(rng, d, scale=1.0):
    a = rng.normal(scale=scale, size=(d, d))
    return 0.5 * (a + a.T)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """3 classes x 4 videos x 12 frames at 32x24, two actor groups."""
    from covact.synth import SynthSpec, generate

    out = tmp_path_factory.mktemp("tiny")
    generate(SynthSpec(videos_per_class=4, frames=12, width=32, height=24, groups=2, seed=3), out)
    return out


# one (criterion, passed, detail) entry per acceptance check, printed after the run
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
