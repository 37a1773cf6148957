import numpy as np
import pytest

from ovaib.info_oracle import DiscreteJoint


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def copy_triple():
    """X = Y = Z uniform binary."""
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = p[1, 1, 1] = 0.5
    return DiscreteJoint(p)


def independent_triple():
    return DiscreteJoint(np.full((2, 2, 2), 1 / 8))


def hat_matrix(A, lam):
    """Explicit d x d ridge hat matrix by direct inversion."""
    k = A.shape[1]
    return A @ np.linalg.inv(A.T @ A + lam * np.eye(k)) @ A.T


def tiny_config(**overrides):
    """Seconds-scale run configuration for plumbing tests."""
    from ovaib.config import RunConfig
    from ovaib.synth_data import GeneratorSpec

    base = dict(
        generator=GeneratorSpec(d_essence=4, d_nuisance=4, d_obs=12),
        n_samples=600, embed_dim=8, encoder_hidden=[16], projector_hidden=[16],
        steps=30, batch_size=32, retrieval_pool=64, smoothing_window=5, lr=3e-3,
    )
    base.update(overrides)
    return RunConfig(**base)


LEAKAGE_SEEDS = (42, 0, 1, 2, 3)
_ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    """Remember one acceptance line; printed in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def beta_ablation(tmp_path_factory):
    """Default-protocol beta=1 / beta=0 runs (geometric scorer) on five seeds.

    Shared by the leakage test and the acceptance suite so each cell is
    trained once per session.
    """
    from ovaib import runs
    from ovaib.config import RunConfig

    out = tmp_path_factory.mktemp("beta_ablation")
    summary = runs.run_ablation(RunConfig(), out, seeds=LEAKAGE_SEEDS, arms=runs.ARMS[:2])
    return summary, runs.read_jsonl(out / "ablation.jsonl")
