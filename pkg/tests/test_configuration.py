import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ugmt.configuration import (CollisionError, Configuration, MCEstimate, SetSpec,
                                add, brute_force_distance, hungarian,
                                quotient_distance, restrict, sample_poisson,
                                sample_poisson_batch, section_set)
from ugmt.geometry import BoxDomain, DomainError, interval

UNIT = interval(0.0, 1.0)


def conf(window, *pts):
    return Configuration(window=window, points=np.array(pts, dtype=float))


def test_configuration_invariants():
    with pytest.raises(DomainError):
        conf(UNIT, [0.2], [0.2])
    with pytest.raises(DomainError):
        conf(UNIT, [1.5])
    c = conf(UNIT, [0.8], [0.2])
    assert np.allclose(c.points.ravel(), [0.2, 0.8])  # canonical order
    assert c == conf(UNIT, [0.2], [0.8])
    assert hash(c) == hash(conf(UNIT, [0.2], [0.8]))


def test_poisson_count_intensity():
    window = interval(0.0, 2.0)
    counts = [g.count for g in sample_poisson_batch(window, seed=11, n=20_000)]
    mean = np.mean(counts)
    se = np.std(counts, ddof=1) / np.sqrt(len(counts))
    assert abs(mean - 2.0) <= 3 * se


def test_poisson_void_probability():
    window = BoxDomain((0.0, 0.0), (1.0, 1.0))
    gams = sample_poisson_batch(window, seed=5, n=20_000)
    p0 = np.mean([g.count == 0 for g in gams])
    se = np.sqrt(p0 * (1 - p0) / len(gams))
    assert abs(p0 - np.exp(-1)) <= 3 * se + 1e-9


def test_sampler_reproducible():
    a = sample_poisson(UNIT, seed=42, stream=3)
    b = sample_poisson(UNIT, seed=42, stream=3)
    assert a == b
    assert a != sample_poisson(UNIT, seed=42, stream=4) or a.count == 0


def test_restriction_and_sum():
    g = conf(UNIT, [0.2], [0.8])
    r = restrict(g, interval(0.0, 0.5))
    assert np.allclose(r.points.ravel(), [0.2])
    assert restrict(g, UNIT) == g
    # nested restriction composes to the intersection
    r2 = restrict(restrict(g, interval(0.0, 0.5)), interval(0.0, 0.3))
    assert r2 == restrict(g, interval(0.0, 0.3))

    left = conf(interval(0.0, 0.5), [0.2])
    right = conf(interval(0.5, 1.0), [0.8])
    s = add(left, right)
    assert np.allclose(s.points.ravel(), [0.2, 0.8])
    empty = Configuration(window=interval(0.5, 1.0), points=np.zeros((0, 1)))
    assert np.allclose(add(left, empty).points, left.points)
    assert restrict(s, left.window) == left  # sectioning inverts the sum
    with pytest.raises(DomainError):
        add(conf(UNIT, [0.2]), conf(UNIT, [0.8]))


def test_quotient_distance_examples():
    g = conf(interval(0.0, 2.0), [0.0], [1.0])
    h = conf(interval(0.0, 2.0), [0.5], [1.5])
    assert quotient_distance(g, h) == pytest.approx(np.sqrt(0.5), abs=1e-12)
    assert quotient_distance(g, g) == 0.0
    assert quotient_distance(g, conf(interval(0.0, 2.0), [0.1], [0.2], [0.3])) == np.inf


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_distance_matches_brute_force(k, seed):
    rng = np.random.default_rng(seed)
    w = BoxDomain((0.0, 0.0), (1.0, 1.0))
    a = Configuration(window=w, points=rng.uniform(0, 1, (k, 2)))
    b = Configuration(window=w, points=rng.uniform(0, 1, (k, 2)))
    assert quotient_distance(a, b) == pytest.approx(brute_force_distance(a, b), abs=1e-12)


def test_triangle_inequality():
    rng = np.random.default_rng(3)
    w = interval(0.0, 1.0)
    for _ in range(300):
        k = rng.integers(1, 7)
        a, b, c = (Configuration(window=w, points=rng.uniform(0, 1, (k, 1)))
                   for _ in range(3))
        assert quotient_distance(a, c) <= (quotient_distance(a, b)
                                           + quotient_distance(b, c) + 1e-10)


def test_hungarian_against_known():
    cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    col = hungarian(cost)
    assert cost[np.arange(3), col].sum() == pytest.approx(5.0)


def test_restricted_sampling_law():
    # restriction of the window sampler has the law of the sub-window sampler
    window = interval(0.0, 2.0)
    sub = interval(0.0, 0.75)
    a = [restrict(g, sub).count for g in sample_poisson_batch(window, seed=1, n=4000)]
    b = [g.count for g in sample_poisson_batch(sub, seed=2, n=4000)]
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_section_set_basics():
    A = SetSpec.count_at_least(UNIT, 1)
    empty_out = Configuration(window=interval(1.0, 2.0), points=np.zeros((0, 1)))
    sec = section_set(A, empty_out, UNIT)
    assert sec.contains(conf(UNIT, [0.4]))
    assert not sec.contains(Configuration(window=UNIT, points=np.zeros((0, 1))))

    # locality inside the box: section independent of the outside pattern
    Aloc = SetSpec.count_at_least(interval(0.2, 0.4), 1)
    eta = conf(interval(0.5, 1.0), [0.7])
    sec2 = section_set(Aloc, eta, interval(0.0, 0.45))
    sec3 = section_set(Aloc, Configuration(window=interval(0.5, 1.0),
                                           points=np.zeros((0, 1))), interval(0.0, 0.45))
    for x in (0.25, 0.35, 0.1):
        g = conf(interval(0.0, 0.45), [x])
        assert sec2.contains(g) == sec3.contains(g)

    # region not contained in the box, outside pattern already fills it
    Q = interval(0.5, 0.9)
    Afull = SetSpec.count_at_least(Q, 1)
    eta2 = conf(interval(0.45, 1.0), [0.7])
    sec4 = section_set(Afull, eta2, interval(0.0, 0.4))
    assert sec4.contains(Configuration(window=interval(0.0, 0.4), points=np.zeros((0, 1))))

    with pytest.raises(DomainError):
        section_set(A, conf(UNIT, [0.2]), UNIT)


def test_locality_spot_check():
    # membership must not depend on points outside the declared locality
    loc = interval(0.3, 0.7)
    A = SetSpec.predicate(lambda g: g.count_in(loc) >= 1, locality=loc)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        k_in = rng.integers(0, 3)
        inside = rng.uniform(0.3, 0.7, (k_in, 1))
        out1 = rng.uniform(0.0, 0.29, (rng.integers(0, 3), 1))
        out2 = rng.uniform(0.71, 1.0, (rng.integers(0, 3), 1))
        g1 = Configuration(window=UNIT, points=np.vstack([inside, out1]))
        g2 = Configuration(window=UNIT, points=np.vstack([inside, out2]))
        assert A.contains(g1) == A.contains(g2)


def test_serialization_round_trip():
    g = conf(BoxDomain((0.0, 0.0), (2.0, 1.0)), [0.5, 0.25], [1.5, 0.75])
    assert Configuration.deserialize(g.serialize()) == g
    empty = Configuration(window=UNIT, points=np.zeros((0, 1)))
    assert Configuration.deserialize(empty.serialize()) == empty
    A = SetSpec.count_at_least(interval(0.25, 0.5), 2)
    B = SetSpec.from_descriptor(A.descriptor())
    assert B.region == A.region and B.threshold == A.threshold


def test_mc_estimate_contract():
    with pytest.raises(ValueError):
        MCEstimate(mean=0.0, std_err=-1.0, n_samples=10, seed=0)
    est = MCEstimate(mean=1.0, std_err=0.1, n_samples=100, seed=1)
    assert est.within(1.2, 3.0)
    assert not est.within(1.5, 3.0)
