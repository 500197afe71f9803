import math

import numpy as np
import pytest

from mdmkit.core import ChoiceDataset, Grouping, MdmCertificate
from mdmkit.datagen import (GeneratorConfig, gen_collection, gen_mdm, gen_mnl, gen_mnl_distinct,
                            perturb, solve_mdm_assortment, uniform_probs)
from mdmkit.errors import CertificateInvalid, InvalidDataset, InvalidGrouping, TooManyProducts
from mdmkit.represent import (check_apu, check_gmdm, check_mdm, check_mnl, check_regular, check_rum,
                              synthesize_marginals)

import fixtures as fx
from oracles import mdm_by_order_enumeration, mnl_by_least_squares, rum_by_full_lp


@pytest.mark.parametrize("engine", ["graph", "lp"])
def test_three_product_table_not_mdm(engine):
    assert check_mdm(fx.NOT_MDM_N3, engine) is None


def test_three_product_table_is_rum():
    assert check_rum(fx.NOT_MDM_N3)
    assert rum_by_full_lp(fx.NOT_MDM_N3)


def test_three_product_ranking_weights_reproduce_table():
    for k, S in enumerate(fx.NOT_MDM_N3.assortments):
        for i, p in zip(S, fx.NOT_MDM_N3.probs[k]):
            mass = sum(w for perm, w in fx.NOT_MDM_N3_RANKINGS.items()
                       if min(S, key=perm.index) == i)
            assert mass == pytest.approx(p, abs=1e-12)


def test_four_product_tables():
    assert check_rum(fx.N4_CASE2) and check_mdm(fx.N4_CASE2) is None
    assert not check_rum(fx.N4_CASE3) and check_mdm(fx.N4_CASE3) is not None
    assert rum_by_full_lp(fx.N4_CASE2) and not rum_by_full_lp(fx.N4_CASE3)


@pytest.mark.parametrize("engine", ["graph", "lp"])
def test_mixture_example(engine):
    x = check_mdm(fx.MIX_X, engine)
    assert x is not None
    lam_a, lam_b, lam_c = x.lam
    assert lam_a > lam_b > lam_c
    assert check_mdm(fx.MIX_Y, engine) is not None
    assert check_mdm(fx.MIX_W, engine) is None


def test_mixture_is_the_stated_combination():
    for k in range(3):
        mix = 0.4 * np.array(fx.MIX_X.probs[k]) + 0.6 * np.array(fx.MIX_Y.probs[k])
        assert mix == pytest.approx(fx.MIX_W.probs[k], abs=1e-12)


def test_grouping_table():
    assert check_gmdm(fx.GROUP_TABLE, Grouping.single(4)) is None
    cert = check_gmdm(fx.GROUP_TABLE, fx.GROUP_TABLE_SPLIT)
    assert cert is not None and cert.verify(fx.GROUP_TABLE, fx.GROUP_TABLE_SPLIT)


def test_single_group_mixture_example():
    assert check_apu(fx.APU_P) is not None
    assert check_apu(fx.APU_Q) is not None
    assert check_apu(fx.APU_R) is None
    for k in range(3):
        mix = 0.6 * np.array(fx.APU_P.probs[k]) + 0.4 * np.array(fx.APU_Q.probs[k])
        assert mix == pytest.approx(fx.APU_R.probs[k], abs=1e-12)


def test_singleton_groups_reduce_to_mdm():
    for ds in (fx.NOT_MDM_N3, fx.N4_CASE2, fx.N4_CASE3, fx.MIX_X, fx.MIX_W, fx.GROUP_TABLE):
        plain = check_mdm(ds) is not None
        grouped = check_gmdm(ds, Grouping.singletons(ds.n)) is not None
        assert plain == grouped


def test_invalid_inputs():
    bad = ChoiceDataset(2, [[1, 2]], [[0.5, 0.4]])
    with pytest.raises(InvalidDataset):
        check_mdm(bad)
    with pytest.raises(InvalidGrouping):
        check_gmdm(fx.MIX_X, Grouping([1, 1]))
    with pytest.raises(TooManyProducts):
        check_rum(ChoiceDataset(8, [list(range(1, 9))], [[1 / 8] * 8]))


def random_dataset(rng, n_max=8, m_max=12, kind=None):
    n = int(rng.integers(3, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    coll = gen_collection(GeneratorConfig(n, min(m, 2 ** n - n - 1), inclusion=0.5,
                                          seed=int(rng.integers(1 << 30))))
    kind = kind or rng.choice(["uniform", "mnl", "perturbed", "ties"])
    if kind == "uniform":
        return uniform_probs(n, coll, rng)
    nu = rng.standard_normal(n)
    ds = gen_mnl(n, coll, nu)
    if kind == "perturbed":
        return perturb(ds, 0.5, 0.05, rng)
    if kind == "ties":
        # coarse rounding creates exact ties and zeros
        rows = []
        for row in ds.probs:
            r = np.round(np.array(row) * 4) / 4
            r[-1] = 1 - r[:-1].sum()
            if r[-1] < 0:
                r = np.full(len(row), 1 / len(row))
            rows.append(r.tolist())
        return ds.with_probs(rows)
    return ds


@pytest.mark.parametrize("seed", range(60))
def test_engines_agree(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng)
    g = check_mdm(ds, "graph")
    lp = check_mdm(ds, "lp")
    assert (g is None) == (lp is None)
    for cert in (g, lp):
        if cert is not None:
            assert cert.verify(ds)
            assert all(0 <= v <= 1 for v in cert.lam)


@pytest.mark.parametrize("seed", range(40))
def test_mdm_matches_order_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    ds = random_dataset(rng, n_max=5, m_max=5)
    assert (check_mdm(ds) is not None) == mdm_by_order_enumeration(ds)


def test_graph_epsilon_matches_collection_size():
    cert = check_mdm(fx.MIX_X)
    assert cert.epsilon == pytest.approx(1 / 7)


@pytest.mark.parametrize("seed", range(20))
def test_regularity_is_necessary(seed):
    rng = np.random.default_rng(200 + seed)
    ds = random_dataset(rng, n_max=6, m_max=8)
    if check_mdm(ds) is not None:
        assert check_regular(ds)


def test_regularity_examples():
    assert not check_regular(ChoiceDataset(3, [[1, 2], [1, 2, 3]], [[0.3, 0.7], [0.4, 0.3, 0.3]]))
    assert check_regular(ChoiceDataset(4, [[1, 2], [3, 4]], [[0.3, 0.7], [0.4, 0.6]]))


@pytest.mark.parametrize("seed", range(15))
def test_coarser_grouping_implies_finer(seed):
    rng = np.random.default_rng(300 + seed)
    n = 5
    coll = gen_collection(GeneratorConfig(n, 6, seed=seed))
    truth = Grouping([1, 1, 1, 2, 2])
    ds, _, _ = gen_mdm(n, coll, truth, seed=rng)
    assert check_gmdm(ds, truth) is not None
    assert check_gmdm(ds, Grouping([1, 2, 1, 3, 3])) is not None  # refinement
    assert check_mdm(ds) is not None
    if check_apu(ds) is not None:
        assert check_gmdm(ds, truth) is not None


@pytest.mark.parametrize("seed", range(20))
def test_mnl_check_matches_least_squares(seed):
    rng = np.random.default_rng(400 + seed)
    ds = random_dataset(rng, n_max=7, m_max=10, kind=rng.choice(["mnl", "perturbed", "uniform"]))
    assert (check_mnl(ds) is not None) == mnl_by_least_squares(ds)


def test_mnl_examples():
    coll = [[1, 2], [1, 2, 3], [2, 3]]
    nu = [0.3, -0.2, 0.0]
    ds = gen_mnl(3, coll, nu)
    fitted = check_mnl(ds)
    assert fitted is not None
    assert np.array(fitted) - fitted[-1] == pytest.approx(np.array(nu) - nu[-1], abs=1e-7)
    assert check_mnl(fx.NOT_MDM_N3) is None


@pytest.mark.parametrize("seed", range(10))
def test_rum_check_matches_full_enumeration(seed):
    rng = np.random.default_rng(500 + seed)
    ds = random_dataset(rng, n_max=4, m_max=6, kind=rng.choice(["uniform", "mnl", "ties"]))
    assert check_rum(ds) == rum_by_full_lp(ds)


def test_synthesis_single_assortment():
    ds = ChoiceDataset(2, [[1, 2]], [[0.6, 0.4]])
    spec = synthesize_marginals(ds, MdmCertificate((0.5,), 0.1))
    assert float(spec.cdfs[0](0.5)) == pytest.approx(0.4)
    assert float(spec.cdfs[1](0.5)) == pytest.approx(0.6)
    assert solve_mdm_assortment(spec, [1, 2]) == pytest.approx([0.6, 0.4], abs=1e-9)


def test_synthesis_zero_probability_tail():
    ds = ChoiceDataset(3, [[1, 2], [1, 2, 3], [1, 3]], [[0.6, 0.4], [0.3, 0.0, 0.7], [0.3, 0.7]])
    cert = check_mdm(ds)
    assert cert is not None
    spec = synthesize_marginals(ds, cert)
    # product 2 reaches F = 1 at the assortment where it has probability zero
    assert spec.cdfs[1].support[1] == pytest.approx(cert.lam[1])
    for k, S in enumerate(ds.assortments):
        assert solve_mdm_assortment(spec, S) == pytest.approx(ds.probs[k], abs=1e-6)


def test_synthesis_rejects_bad_certificate():
    with pytest.raises(CertificateInvalid):
        synthesize_marginals(fx.MIX_X, MdmCertificate((0.0, 0.5, 1.0), 0.1))


@pytest.mark.parametrize("engine", ["graph", "lp"])
def test_round_trip_mixture_example(engine):
    cert = check_mdm(fx.MIX_X, engine)
    spec = synthesize_marginals(fx.MIX_X, cert)
    for k, S in enumerate(fx.MIX_X.assortments):
        assert solve_mdm_assortment(spec, S) == pytest.approx(fx.MIX_X.probs[k], abs=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_round_trip_random(seed):
    rng = np.random.default_rng(600 + seed)
    ds = random_dataset(rng, kind=rng.choice(["mnl", "ties"]))
    cert = check_mdm(ds)
    if cert is None:
        return
    spec = synthesize_marginals(ds, cert)
    for k, S in enumerate(ds.assortments):
        assert solve_mdm_assortment(spec, S) == pytest.approx(ds.probs[k], abs=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_distinct_mnl_survives_small_perturbation(seed):
    rng = np.random.default_rng(700 + seed)
    n = 5
    nu = gen_mnl_distinct(n)
    coll = gen_collection(GeneratorConfig(n, 10, inclusion=0.6, seed=seed))
    ds = gen_mnl(n, coll, nu)
    values = sorted({round(p, 15) for row in ds.probs for p in row})
    gap = min(b - a for a, b in zip(values, values[1:]))
    rows = []
    for row in ds.probs:
        noise = rng.uniform(-0.49 * gap / 2, 0.49 * gap / 2, size=len(row))
        noise -= noise.mean()
        rows.append((np.array(row) + noise).tolist())
    assert check_mdm(ds.with_probs(rows)) is not None


@pytest.mark.parametrize("seed", range(5))
def test_product_weights_survive_perturbation_with_one_group(seed):
    rng = np.random.default_rng(800 + seed)
    n = 4
    nu = gen_mnl_distinct(n, "product")
    coll = gen_collection(GeneratorConfig(n, 6, inclusion=0.7, seed=seed))
    ds = gen_mnl(n, coll, nu)
    values = sorted(p for row in ds.probs for p in row)
    gap = min(b - a for a, b in zip(values, values[1:]))
    assert gap > 1e-6
    rows = []
    for row in ds.probs:
        noise = rng.uniform(-0.2 * gap, 0.2 * gap, size=len(row))
        noise -= noise.mean()
        rows.append((np.array(row) + noise).tolist())
    assert check_apu(ds.with_probs(rows)) is not None
