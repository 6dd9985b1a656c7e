import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from stvecchia.covariance import CovarianceParams, simulate
from stvecchia.data import make_dataset
from stvecchia.errors import DomainError, InputError
from stvecchia.neighbors import (
    ConditioningPolicy, ConditioningSets, DistanceSpec, build_conditioning_sets, default_kappa_grid, distance,
    estimate_kappa, idw_loo_rmse, metric_coords, nearest_predecessors,
)
from stvecchia.ordering import make_ordering

SPECS = [DistanceSpec("spatial"), DistanceSpec("temporal"), DistanceSpec("st", 16.0)]


def brute_sets(ds, perm, M, spec, policy):
    """O(n^2) scan with the (distance, position) tie rule."""
    pts = metric_coords(ds.coords[perm], spec)
    sensor = ds.sensor[perm]
    out = []
    for k in range(len(perm)):
        cand = sorted(range(k), key=lambda j: (float(np.linalg.norm(pts[j] - pts[k])), j))
        if policy == "any_sensor":
            out.append(sorted(cand[:M]))
        else:
            same = [j for j in cand if sensor[j] == sensor[k]][:M]
            other = [j for j in cand if sensor[j] != sensor[k]][: min(M, k) - len(same)]
            out.append(sorted(same + other))
    return out


def cloud(n, seed, sensors=3):
    rng = np.random.default_rng(seed)
    return make_dataset(
        rng.uniform(0, 1000, n), rng.uniform(0, 1000, n), rng.uniform(0, 300, n), rng.integers(1, sensors + 1, n)
    )


class TestDistance:
    def test_pythagoras(self):
        for kappa in (0.1, 1.0, 50.0):
            assert distance((0, 0, 0), (3, 4, 0), DistanceSpec("st", kappa)) == 5.0
        assert distance((0, 0, 0), (3, 4, 0), DistanceSpec("spatial")) == 5.0

    def test_kappa(self):
        assert distance((0, 0, 0), (0, 0, 1), DistanceSpec("st", 4.0)) == 2.0

    def test_temporal_ignores_space(self):
        assert distance((0, 0, 0), (100, 100, 7), DistanceSpec("temporal")) == 7.0

    def test_tokens(self):
        assert DistanceSpec("st").kind == "spatiotemporal"
        assert DistanceSpec("spatiotemporal").token == "st"
        assert ConditioningPolicy("same_sensor").kind == "sensor_dependent"
        with pytest.raises(DomainError):
            DistanceSpec("manhattan")
        with pytest.raises(DomainError):
            DistanceSpec("st", 0.0)
        with pytest.raises(DomainError):
            ConditioningPolicy("other_sensor")

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-1e4, 1e4), min_size=9, max_size=9),
        st.sampled_from(["spatial", "temporal", "st"]),
        st.floats(1e-3, 1e3),
    )
    def test_metric_axioms(self, v, kind, kappa):
        a, b, c = v[0:3], v[3:6], v[6:9]
        spec = DistanceSpec(kind, kappa)
        dab, dba = distance(a, b, spec), distance(b, a, spec)
        assert dab == dba >= 0
        assert distance(a, c, spec) <= dab + distance(b, c, spec) + 1e-9 * (1 + dab)


class TestConditioningSets:
    def test_first_two(self):
        ds = cloud(10, 0)
        sets = build_conditioning_sets(ds, np.arange(10), 3, DistanceSpec("spatial"))
        assert len(sets[0]) == 0
        np.testing.assert_array_equal(sets[1], [0])

    @pytest.mark.parametrize("policy", ["any_sensor", "same_sensor"])
    @pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.token)
    def test_saturation(self, spec, policy):
        ds = cloud(25, 1)
        sets = build_conditioning_sets(ds, make_ordering(ds, "random", seed=2), 24, spec, policy)
        assert sets.is_full()
        for k in range(25):
            assert sorted(sets[k]) == list(range(k))

    @pytest.mark.parametrize("policy", ["any_sensor", "same_sensor"])
    @pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.token)
    def test_brute_force(self, spec, policy):
        ds = cloud(30, 3)
        perm = make_ordering(ds, "random", seed=4)
        sets = build_conditioning_sets(ds, perm, 5, spec, policy)
        expect = brute_sets(ds, perm, 5, spec, policy)
        assert [sorted(s.tolist()) for s in sets.sets] == expect

    def test_ties_break_by_position(self):
        # every point at the same place: nearest are the earliest predecessors
        ds = make_dataset(np.zeros(8), np.zeros(8), np.zeros(8), np.ones(8))
        sets = build_conditioning_sets(ds, np.arange(8), 3, DistanceSpec("st", 1.0))
        np.testing.assert_array_equal(sets[7], [0, 1, 2])

    def test_large_tree_path_matches_brute(self):
        # more than one search block, with duplicated coordinates
        rng = np.random.default_rng(9)
        pts = np.round(rng.uniform(0, 20, size=(700, 2)))
        got = nearest_predecessors(pts, 6, block=128)
        for k in rng.choice(700, 40, replace=False):
            d = np.linalg.norm(pts[:k] - pts[k], axis=1)
            expect = np.lexsort((np.arange(k), d))[:6]
            np.testing.assert_array_equal(got[k][: len(expect)], expect)

    def test_sizes(self):
        ds = cloud(40, 5)
        for policy in ("any_sensor", "same_sensor"):
            sets = build_conditioning_sets(ds, np.arange(40), 7, DistanceSpec("st", 2.0), policy)
            np.testing.assert_array_equal(sets.sizes, np.minimum(np.arange(40), 7))
            for k, s in enumerate(sets.sets):
                assert len(set(s.tolist())) == len(s) and np.all(s < k)

    def test_same_sensor_prefers_own(self):
        ds = cloud(40, 6)
        perm = np.arange(40)
        sets = build_conditioning_sets(ds, perm, 4, DistanceSpec("st", 2.0), "same_sensor")
        sensor = ds.sensor[perm]
        for k, s in enumerate(sets.sets):
            own = int(np.sum(sensor[:k] == sensor[k]))
            assert np.sum(sensor[s] == sensor[k]) == min(own, 4)

    def test_bad_M(self):
        with pytest.raises(DomainError):
            build_conditioning_sets(cloud(5, 0), np.arange(5), 0, DistanceSpec("st"))

    def test_from_lists(self):
        cs = ConditioningSets.from_lists([[], [0], [1, 0]])
        assert cs.m == 2
        np.testing.assert_array_equal(cs.sizes, [0, 1, 2])
        assert cs.is_full()


@settings(max_examples=30, deadline=None)
@given(
    st.integers(5, 60), st.integers(1, 8), st.sampled_from(["spatial", "temporal", "st"]),
    st.sampled_from(["any_sensor", "same_sensor"]), st.integers(0, 1000),
)
def test_nested_in_M(n, M, kind, policy, seed):
    ds = cloud(n, seed)
    perm = make_ordering(ds, "random", seed=seed)
    spec = DistanceSpec(kind, 3.0)
    a = build_conditioning_sets(ds, perm, M, spec, policy)
    b = build_conditioning_sets(ds, perm, M + 1, spec, policy)
    for sa, sb in zip(a.sets, b.sets):
        assert set(sa.tolist()) <= set(sb.tolist())


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(1, 10), st.integers(0, 1000))
def test_exact_nearest(n, M, seed):
    ds = cloud(n, seed)
    spec = DistanceSpec("st", 5.0)
    perm = make_ordering(ds, "random", seed=seed)
    sets = build_conditioning_sets(ds, perm, M, spec)
    pts = metric_coords(ds.coords[perm], spec)
    for k in range(1, n):
        s = sets[k]
        rest = np.setdiff1d(np.arange(k), s)
        if len(rest):
            far = np.linalg.norm(pts[s] - pts[k], axis=1).max()
            assert np.linalg.norm(pts[rest] - pts[k], axis=1).min() >= far


class TestKappa:
    def test_default_grid(self):
        g = default_kappa_grid()
        assert len(g) == 13
        np.testing.assert_allclose(g[[0, -1]], [1e-4, 1e8])

    def test_single_candidate(self):
        ds = cloud(50, 0).with_values(np.random.default_rng(0).normal(size=50))
        assert estimate_kappa(ds, subsample_size=50, grid=[3.5]) == 3.5

    def test_temporal_dominant(self):
        # huge spatial range, short temporal range: time carries all the structure
        rng = np.random.default_rng(1)
        n = 400
        ds = make_dataset(rng.uniform(0, 5e4, n), rng.uniform(0, 5e4, n), rng.uniform(0, 3600, n), rng.integers(1, 5, n))
        p = CovarianceParams(sigma2=1.0, theta1=1e9, theta2=60.0, tau2=1e-3, gamma=0.0)
        ds = ds.with_values(simulate(ds, p, seed=2))
        grid = default_kappa_grid()
        got = estimate_kappa(ds, subsample_size=400, seed=3)
        # exhaustive oracle over the same subsample
        idx = np.sort(np.random.default_rng(3).choice(n, size=400, replace=False))
        scores = [idw_loo_rmse(ds.coords[idx], ds.value[idx], k) for k in grid]
        assert got == grid[int(np.argmin(scores))]
        assert got == grid[-1]

    def test_duplicate_location_zero_error(self):
        coords = np.array([[0.0, 0, 0], [0.0, 0, 0], [50.0, 0, 0], [0, 80.0, 0]])
        z = np.array([2.0, 2.0, 7.0, -3.0])
        # two co-located equal values predict each other exactly; the others do not
        r_all = idw_loo_rmse(coords, z, 1.0, neighbors=3)
        errs_far = []
        for i in (2, 3):
            others = [j for j in range(4) if j != i]
            d = np.linalg.norm(coords[others] - coords[i], axis=1)
            w = d ** -2.0
            errs_far.append((w @ z[others]) / w.sum() - z[i])
        np.testing.assert_allclose(r_all, np.sqrt(np.sum(np.square(errs_far)) / 4))

    def test_deterministic(self):
        ds = cloud(200, 4).with_values(np.random.default_rng(4).normal(size=200))
        assert estimate_kappa(ds, 100, seed=7) == estimate_kappa(ds, 100, seed=7)

    def test_too_small(self):
        ds = cloud(8, 0)
        with pytest.raises(InputError):
            estimate_kappa(ds, subsample_size=8, idw_neighbors=10)

    def test_bad_grid(self):
        with pytest.raises(InputError):
            estimate_kappa(cloud(50, 0), grid=[1.0, -2.0])
