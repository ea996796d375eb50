import numpy as np
import pytest

from aemr import GeneticMap, HaplotypePair, MeiosisModel


def random_map(rng, p, max_cm=60.0, inf_at=()):
    gaps = rng.uniform(0.0, max_cm, size=p)
    gaps[0] = 0.0
    for k in inf_at:
        gaps[k - 1] = np.inf
    ids = tuple(f"s{j}" for j in range(1, p + 1))
    return GeneticMap(ids=ids, dist_from_prev_cm=gaps)


def random_parent_child(rng, model):
    """A random parent and a child haplotype actually drawn from the model,
    so the observation has positive probability even at epsilon = 0."""
    p = model.p
    parent = HaplotypePair(
        rng.integers(0, 2, size=p, dtype=np.uint8),
        rng.integers(0, 2, size=p, dtype=np.uint8),
    )
    from aemr.meiosis import _sample_unconditional_batch

    child = _sample_unconditional_batch(
        model, parent.maternal[None, :], parent.paternal[None, :], rng
    )[0]
    return parent, child


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
