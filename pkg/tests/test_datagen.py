import math

import numpy as np
import pytest

from mdmkit.core import Grouping, Structure, structure_of, validate
from mdmkit.datagen import (GeneratorConfig, distinct_weights, gen_collection, gen_mdm, gen_mnl,
                            kendall_tau, perturb, solve_mdm_assortment, spawn)
from mdmkit.errors import BisectionBracketFailure, InfeasibleConfig, OverflowRisk
from mdmkit.represent import ExponentialCDF, MarginalSpec, PiecewiseLinearCDF, check_gmdm


def test_exponential_pair_closed_form():
    spec = MarginalSpec([ExponentialCDF(1.0), ExponentialCDF(1.0)], [math.log(2), 0.0])
    assert solve_mdm_assortment(spec, [1, 2]) == pytest.approx([2 / 3, 1 / 3], abs=1e-9)


def test_equal_utilities_split_evenly():
    spec = MarginalSpec([ExponentialCDF(2.0)] * 4, [0.3] * 4)
    assert solve_mdm_assortment(spec, [1, 2, 3, 4]) == pytest.approx([0.25] * 4, abs=1e-9)


def test_exponential_mdm_is_mnl():
    # identical exponential marginals give logit probabilities
    rng = np.random.default_rng(1)
    nu = rng.uniform(0, 1, size=5)
    spec = MarginalSpec([ExponentialCDF(1.0)] * 5, nu)
    w = np.exp(nu)
    assert solve_mdm_assortment(spec, range(1, 6)) == pytest.approx(w / w.sum(), abs=1e-8)


def test_bracket_failure():
    cdf = PiecewiseLinearCDF([0.0, 0.1], [0.0, 1.0])
    spec = MarginalSpec([cdf, cdf], [0.0, 0.0])
    assert solve_mdm_assortment(spec, [1, 2]) == pytest.approx([0.5, 0.5])
    with pytest.raises(BisectionBracketFailure):
        solve_mdm_assortment(MarginalSpec([DefectiveCDF(), DefectiveCDF()], [0.0, 0.0]), [1, 2])


class DefectiveCDF:
    """Never reaches one inside its claimed support."""
    support = (0.0, 1.0)

    def __call__(self, x):
        return 0.0


def test_distinct_weights():
    assert distinct_weights(3) == [2, 4, 8]
    assert distinct_weights(3, "product") == [2, 4, 24]
    with pytest.raises(OverflowRisk):
        distinct_weights(13, "product")


@pytest.mark.parametrize("variant", ["pow2", "product"])
def test_distinct_weights_have_distinct_subset_sums(variant):
    xs = distinct_weights(6, variant)
    sums = [sum(x for b, x in zip(range(6), xs) if mask >> b & 1) for mask in range(1, 64)]
    assert len(set(sums)) == len(sums)


def test_kendall_tau():
    assert kendall_tau([1, 2, 3], [3, 2, 1]) == 3
    assert kendall_tau([1, 2, 3], [2, 1, 3]) == 1
    assert kendall_tau([1, 2, 3], [1, 2, 3]) == 0


def test_collection_variants():
    nested = gen_collection(GeneratorConfig(7, 4, variant="nested", seed=2))
    assert structure_of([frozenset(S) for S in nested]) == Structure.NESTED
    laminar = gen_collection(GeneratorConfig(7, 5, variant="laminar", seed=2))
    assert structure_of([frozenset(S) for S in laminar]) in (Structure.NESTED, Structure.LAMINAR)
    plain = gen_collection(GeneratorConfig(7, 20, seed=2))
    assert len({tuple(S) for S in plain}) == 20
    assert all(len(S) in (2, 3) for S in plain)


def test_infeasible_configs():
    with pytest.raises(InfeasibleConfig):
        gen_collection(GeneratorConfig(3, 5, sizes=(2,)))
    with pytest.raises(InfeasibleConfig):
        gen_collection(GeneratorConfig(4, 4, variant="nested"))
    with pytest.raises(InfeasibleConfig):
        GeneratorConfig(4, 2, alpha=1.5)


def test_generators_are_deterministic():
    a = gen_collection(GeneratorConfig(7, 10, seed=5))
    b = gen_collection(GeneratorConfig(7, 10, seed=5))
    assert a == b
    ds1, _, _ = gen_mdm(7, a, seed=9)
    ds2, _, _ = gen_mdm(7, a, seed=9)
    assert ds1 == ds2
    r1, r2 = spawn(3, 2)
    assert r1.random() != r2.random()


def test_perturbation_keeps_rows_normalized():
    coll = gen_collection(GeneratorConfig(6, 8, seed=1))
    ds = gen_mnl(6, coll, np.linspace(0, 1, 6))
    for row, orig in zip(perturb(ds, 0.0, 0.5, 1).probs, ds.probs):
        assert row == pytest.approx(orig, abs=1e-15)
    noisy = perturb(ds, 1.0, 0.5, 1)
    assert validate(noisy) == []
    assert noisy != ds


@pytest.mark.parametrize("seed", range(5))
def test_grouped_ground_truth_is_representable(seed):
    truth = Grouping([1, 1, 2, 2, 2, 1])
    coll = gen_collection(GeneratorConfig(6, 10, seed=seed))
    ds, g, spec = gen_mdm(6, coll, truth, seed=seed)
    assert g == truth and validate(ds) == []
    assert check_gmdm(ds, truth) is not None
