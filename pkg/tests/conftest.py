import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mcmult.config import MODALITIES  # noqa: E402
from mcmult.data import MultimodalSample, SyntheticSpec, generate_synthetic  # noqa: E402


def random_sample(rng, lengths=(4, 6, 5), dims=(8, 6, 4), label=0):
    arrays = [rng.standard_normal((T, d)) for T, d in zip(lengths, dims)]
    return MultimodalSample.from_arrays(*arrays, label=label)


def randomize(model, rng, spread=0.5):
    """Redraw every parameter, layer-norm gains and biases included."""
    state = {}
    for k, v in model.state_dict().items():
        if k.endswith("_g"):
            state[k] = 1.0 + spread * rng.standard_normal(v.shape)
        else:
            state[k] = spread * rng.standard_normal(v.shape)
    model.load_state_dict(state)
    return state


def sample_arrays(sample):
    return {m.value: sample[m].data for m in MODALITIES}


@pytest.fixture(scope="session")
def small_synthetic():
    spec = SyntheticSpec(n_samples=60, seed=11)
    return spec, generate_synthetic(spec)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
