import numpy as np
import pytest

from mdmkit.core import WEIGHTED_L1, ChoiceDataset, Grouping, LossSpec
from mdmkit.datagen import GeneratorConfig, gen_collection, gen_mdm, gen_mnl, perturb, uniform_probs
from mdmkit.errors import CollectionTooLarge, TooManyProducts
from mdmkit.limit import (fit_mnl_mle, limit_gmdm, limit_mdm, limit_milp, limit_ranking_enum,
                          limit_rum, limit_structured, mnl_gradient, mnl_loglik, recover_delta_optimal)
from mdmkit.represent import check_apu, check_gmdm, check_mdm, check_regular

import fixtures as fx
from oracles import limit_by_order_enumeration

TOL = 1e-6


def uniform_instance(seed, n, m, variant="random"):
    rng = np.random.default_rng(seed)
    return uniform_probs(n, gen_collection(GeneratorConfig(n, m, variant=variant, seed=seed)), rng)


def test_kemeny_examples():
    for method in ("milp", "enum"):
        assert limit_mdm(fx.KEMENY_FEASIBLE, method=method).loss == pytest.approx(0.0, abs=TOL)
        assert limit_mdm(fx.KEMENY_INFEASIBLE, method=method).loss == pytest.approx(2 / 9, abs=TOL)
    assert limit_milp(fx.KEMENY_INFEASIBLE, formulation="pairwise").loss == pytest.approx(2 / 9, abs=TOL)


@pytest.mark.parametrize("seed", range(30))
def test_formulations_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(4, 7)), int(rng.integers(2, 6))
    ds = uniform_instance(seed, n, m)
    truth = limit_by_order_enumeration(ds)
    assert limit_milp(ds).loss == pytest.approx(truth, abs=TOL)
    assert limit_milp(ds, formulation="pairwise").loss == pytest.approx(truth, abs=TOL)
    assert limit_ranking_enum(ds).loss == pytest.approx(truth, abs=TOL)


@pytest.mark.parametrize("seed", range(5))
def test_native_and_highs_backends_agree(seed):
    ds = uniform_instance(40 + seed, 5, 4)
    native = limit_milp(ds, backend="native", formulation="pairwise").loss
    assert limit_milp(ds, backend="highs").loss == pytest.approx(native, abs=TOL)


def test_fitted_probabilities_carry_the_loss():
    ds = uniform_instance(3, 6, 5)
    res = limit_mdm(ds, method="milp")
    fitted = res.fitted_dataset(ds)
    assert WEIGHTED_L1(ds, res.fitted) == pytest.approx(res.loss, abs=1e-12)
    assert check_mdm(fitted) is not None or res.loss > 0
    for row in res.fitted:
        assert sum(row) == pytest.approx(1.0)
    assert set(res.to_dict()) == {"loss", "fitted", "lambda", "method"}


@pytest.mark.parametrize("seed", range(10))
def test_representable_data_has_zero_limit(seed):
    n = 5
    coll = gen_collection(GeneratorConfig(n, 8, seed=seed))
    ds, _, _ = gen_mdm(n, coll, seed=seed)
    assert limit_mdm(ds, method="milp").loss == pytest.approx(0.0, abs=TOL)


@pytest.mark.parametrize("variant", ["nested", "laminar"])
@pytest.mark.parametrize("seed", range(8))
def test_structured_lp_matches_milp(variant, seed):
    ds = uniform_instance(seed, 7, 4, variant)
    structured = limit_structured(ds)
    assert structured.loss == pytest.approx(limit_milp(ds).loss, abs=TOL)
    assert limit_mdm(ds).method == "StructuredLP"
    # regular data on such collections sits in the closure
    assert (structured.loss <= TOL) == check_regular(ds)


def test_auto_dispatch_and_caps():
    assert limit_mdm(uniform_instance(1, 6, 5)).method == "RankingEnum"
    big = uniform_instance(1, 7, 9)
    with pytest.raises(CollectionTooLarge):
        limit_ranking_enum(big)
    with pytest.raises(ValueError):
        limit_mdm(big, loss=LossSpec("kl"))
    with pytest.raises(ValueError):
        limit_milp(big, formulation="unknown")


def test_time_limited_solve_reports_bounds():
    ds = uniform_instance(0, 7, 20)
    res = limit_mdm(ds, method="milp", time_limit=0.5)
    if not res.exact:
        assert 0 <= res.bound <= res.loss + TOL
        assert res.to_dict()["exact"] is False
    assert WEIGHTED_L1(ds, res.fitted) == pytest.approx(res.loss, abs=1e-9)


@pytest.mark.parametrize("seed", range(15))
def test_zero_loss_equivalence(seed):
    rng = np.random.default_rng(100 + seed)
    n = 5
    coll = gen_collection(GeneratorConfig(n, 5, seed=seed))
    ds, _, _ = gen_mdm(n, coll, seed=rng)
    if seed % 2:
        ds = perturb(ds, 0.5, 0.1, rng)
    res = limit_mdm(ds, method="milp")
    rec = recover_delta_optimal(ds, res, 1e-6)
    assert check_mdm(rec.fitted) is not None
    assert rec.loss <= res.loss + 1e-6 + 1e-9
    assert (res.loss <= TOL) == (check_mdm(ds) is not None)


def test_recovery_on_kemeny_example():
    lim = limit_mdm(fx.KEMENY_INFEASIBLE, method="milp")
    tight = recover_delta_optimal(fx.KEMENY_INFEASIBLE, lim, 1e-4)
    assert check_mdm(tight.fitted) is not None
    assert tight.loss <= 2 / 9 + 1e-4 + 1e-9
    loose = recover_delta_optimal(fx.KEMENY_INFEASIBLE, lim, 0.5)
    assert loose.margin > tight.margin
    with pytest.raises(ValueError):
        recover_delta_optimal(fx.KEMENY_INFEASIBLE, lim, 0.0)


def test_recovery_from_structured_limit():
    ds = uniform_instance(5, 7, 4, "nested")
    rec = recover_delta_optimal(ds, limit_structured(ds), 1e-3)
    assert check_mdm(rec.fitted) is not None


# --------------------------------------------------------------------------
# grouped limit


@pytest.mark.parametrize("seed", range(6))
def test_singleton_groups_match_mdm_limit(seed):
    ds = uniform_instance(200 + seed, 4, 3)
    grouped = limit_gmdm(ds, Grouping.singletons(ds.n))
    assert grouped.loss == pytest.approx(limit_mdm(ds, method="milp").loss, abs=TOL)


@pytest.mark.parametrize("seed", range(6))
def test_grouped_limits_are_nested(seed):
    ds = uniform_instance(300 + seed, 4, 3)
    coarse = limit_gmdm(ds, Grouping.single(4)).loss
    fine = limit_gmdm(ds, Grouping([1, 1, 2, 2])).loss
    plain = limit_mdm(ds, method="milp").loss
    assert coarse >= fine - TOL
    assert fine >= plain - TOL
    assert plain >= 0


def test_grouped_limit_zero_iff_representable():
    assert limit_gmdm(fx.APU_P, Grouping.single(3)).loss == pytest.approx(0.0, abs=TOL)
    # the tie in the second assortment is only reachable as a limit of strict orders
    assert check_apu(fx.APU_R) is None
    assert limit_gmdm(fx.APU_R, Grouping.single(3)).loss == pytest.approx(0.0, abs=TOL)
    assert limit_gmdm(fx.GROUP_TABLE, fx.GROUP_TABLE_SPLIT).loss == pytest.approx(0.0, abs=TOL)
    assert check_gmdm(fx.GROUP_TABLE, Grouping.single(4)) is None
    assert limit_gmdm(fx.GROUP_TABLE, Grouping.single(4)).loss > TOL


# --------------------------------------------------------------------------
# MNL maximum likelihood


def test_mle_recovers_generating_utilities():
    nu = np.array([0.4, -0.3, 0.9, 0.1, 0.0])
    coll = gen_collection(GeneratorConfig(5, 10, seed=4))
    ds = gen_mnl(5, coll, nu)
    fit = fit_mnl_mle(ds)
    got = np.array(fit.nu)
    assert got - got[-1] == pytest.approx(nu - nu[-1], abs=1e-5)
    assert fit.loss(ds) == pytest.approx(0.0, abs=1e-5)


def test_mle_on_uniform_data_is_flat():
    coll = [[1, 2], [1, 2, 3], [2, 3], [1, 3]]
    ds = ChoiceDataset(3, coll, [[1 / len(S)] * len(S) for S in coll])
    assert fit_mnl_mle(ds).nu == pytest.approx((0.0, 0.0, 0.0), abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    ds = uniform_instance(seed, 6, 8)
    nu = rng.standard_normal(6)
    h = 1e-6
    numeric = np.array([(mnl_loglik(nu + h * e, ds) - mnl_loglik(nu - h * e, ds)) / (2 * h)
                        for e in np.eye(6)])
    assert mnl_gradient(nu, ds) == pytest.approx(numeric, abs=1e-5)


@pytest.mark.parametrize("seed", range(8))
def test_mnl_loss_never_beats_the_mdm_limit(seed):
    ds = uniform_instance(500 + seed, 6, 5)
    assert fit_mnl_mle(ds).loss(ds) >= limit_mdm(ds).loss - TOL


# --------------------------------------------------------------------------
# RUM limit


def test_rum_limit_examples():
    assert limit_rum(fx.NOT_MDM_N3).loss == pytest.approx(0.0, abs=TOL)
    assert limit_rum(fx.N4_CASE3).loss > TOL
    assert limit_mdm(fx.N4_CASE3).loss == pytest.approx(0.0, abs=TOL)
    assert limit_mdm(fx.NOT_MDM_N3).loss > TOL
    with pytest.raises(TooManyProducts):
        limit_rum(uniform_instance(0, 7, 3))


@pytest.mark.parametrize("seed", range(5))
def test_rum_limit_never_exceeds_mnl_loss(seed):
    ds = uniform_instance(600 + seed, 4, 5)
    assert limit_rum(ds).loss <= fit_mnl_mle(ds).loss(ds) + TOL
