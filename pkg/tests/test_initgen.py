import itertools

import numpy as np
import pytest

from hyobscure.dataset import synth_population
from hyobscure.initgen import (
    GenConstraints,
    GeneralizationFn,
    InfeasibleConstraintsError,
    feasibility_check,
    init_generalization,
    single_group,
    singleton_groups,
)

from conftest import random_dataset


def brute_force_feasible(counts, cons):
    """Every contiguous K-partition of the observed values, checked directly."""
    m = len(counts)
    for cuts in itertools.combinations(range(1, m), cons.n_groups - 1):
        b = (0,) + cuts + (m,)
        ok = all(cons.k <= sum(counts[a:c]) <= cons.alpha and cons.l <= c - a <= cons.beta
                 for a, c in zip(b, b[1:]))
        if ok:
            return True
    return False


def test_constraints_validation():
    with pytest.raises(ValueError):
        GenConstraints(5, 4, 1, 2, 2)
    with pytest.raises(ValueError):
        GenConstraints(1, 4, 3, 2, 2)
    with pytest.raises(ValueError):
        GenConstraints(0, 4, 1, 2, 2)


def test_generalization_fn_helpers():
    gen = GeneralizationFn((0, 2, 5), (10, 20, 30, 40, 50))
    assert gen.n_groups == 2
    assert gen.labels == ["[10,20]", "[30,50]"]
    assert gen.assignment(30) == 1
    np.testing.assert_array_equal(gen.users_per_group([1, 2, 3, 4, 5]), [3, 12])
    with pytest.raises(ValueError):
        GeneralizationFn((0, 2, 2, 5), (1, 2, 3, 4, 5))
    assert single_group((1, 2, 3)).n_groups == 1
    assert singleton_groups((1, 2, 3)).n_groups == 3


def test_counting_infeasibility_reported():
    ds = synth_population(100, 2, 6, 0.5, seed=0)
    cons = GenConstraints(40, 100, 1, 6, 3)
    rep = feasibility_check(ds, cons)
    assert not rep.ok and "k=40" in rep.reasons[0]
    with pytest.raises(InfeasibleConstraintsError):
        init_generalization(ds, cons, seed=0)


def test_output_satisfies_constraints_on_random_instances():
    rng = np.random.default_rng(3)
    checked = 0
    for trial in range(60):
        m = int(rng.integers(4, 10))
        n = int(rng.integers(m * 3, 120))
        ds = random_dataset(rng, n, m)
        K = int(rng.integers(2, 4))
        k = int(rng.integers(1, n // K + 1))
        alpha = int(rng.integers(k, n + 1))
        l = int(rng.integers(1, m // K + 1))
        beta = int(rng.integers(l, m + 1))
        cons = GenConstraints(k, alpha, l, beta, K)
        try:
            gen = init_generalization(ds, cons, seed=trial)
        except InfeasibleConstraintsError:
            # raising is only allowed when the requested K has no solution
            assert not brute_force_feasible(list(ds.value_counts), cons)
            continue
        assert gen.satisfies(ds.value_counts, cons), gen.violations(ds.value_counts, cons)
        assert gen.n_groups >= K
        checked += 1
    assert checked > 20


def test_deterministic_given_seed():
    ds = synth_population(500, 5, 16, 0.7, seed=1)
    cons = GenConstraints(50, 200, 2, 8, 4)
    a = init_generalization(ds, cons, seed=7)
    b = init_generalization(ds, cons, seed=7)
    assert a.bounds == b.bounds
