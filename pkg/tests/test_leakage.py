"""Leakage detection tests against brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest

from helpers import (
    BENIGN,
    MALICIOUS,
    bfv,
    dataset,
    emb,
    planted_calibration_data,
    random_binary_dataset,
    random_embedding_dataset,
    representation_pool,
    sample,
)
from leakguard.core import Dataset, Schema, SchemaMismatchError
from leakguard.leakage import (
    LeakageReport,
    LeakMatch,
    calibrate_threshold,
    cosine_similarity,
    duplicate_groups,
    exact_leak_set,
    iou,
    leak_report,
    leakage_decay,
    near_leak_set,
    threshold_grid,
    union_leak,
)


def brute_force_exact(train: Dataset, test: Dataset) -> dict[str, list[str]]:
    """O(train x test) pairwise comparison; no hashing involved."""
    def canon(s):
        rep = s.representation
        if rep.kind == "binary":
            return (rep.dim, rep.indices)
        return (rep.dim, rep.values.tobytes())

    train_reps = [(s.id, canon(s)) for s in train.samples]
    out: dict[str, list[str]] = {}
    for t in test.samples:
        mine = canon(t)
        hits = [tid for tid, rep in train_reps if rep == mine]
        if hits:
            out[t.id] = hits
    return out


class TestExactLeakSet:
    def test_two_by_two_fixture(self):
        train = dataset(sample("A", bfv(5, 1, 3)), sample("B", bfv(5, 2)))
        test = dataset(sample("X", bfv(5, 1, 3), ts="2020-02"),
                       sample("Y", bfv(5, 4), ts="2020-02"))
        report = exact_leak_set(train, test)
        assert report.leak_ids == {"X"}
        assert report.matches == (LeakMatch("X", ("A",), "exact", 1.0),)
        assert report.ratio == 0.5

    def test_empty_test_set(self):
        train = dataset(sample("A", bfv(5, 1)))
        report = exact_leak_set(train, Dataset([], Schema("binary", 5)))
        assert report.leak_ids == frozenset() and report.ratio == 0.0

    def test_test_identical_to_train(self):
        train = dataset(sample("A", bfv(5, 1)), sample("B", bfv(5, 2)))
        test = dataset(sample("X", bfv(5, 1), ts="2021-01"),
                       sample("Y", bfv(5, 2), ts="2021-01"))
        assert exact_leak_set(train, test).ratio == 1.0

    def test_schema_mismatch(self):
        train = dataset(sample("A", bfv(5, 1)))
        test = dataset(sample("X", emb(1.0, 0.0, 0.0, 0.0, 0.0)))
        with pytest.raises(SchemaMismatchError):
            exact_leak_set(train, test)

    @pytest.mark.parametrize("kind", ["binary", "embedding"])
    def test_matches_brute_force_on_random_data(self, kind):
        rng = np.random.default_rng(100 if kind == "binary" else 101)
        make = random_binary_dataset if kind == "binary" else random_embedding_dataset
        for trial in range(12):
            pool = representation_pool(rng, size=int(rng.integers(3, 20)),
                                       dim=12, kind=kind)
            train = make(rng, int(rng.integers(1, 120)), dim=12, pool=pool, prefix="tr")
            test = make(rng, int(rng.integers(1, 120)), dim=12, pool=pool, prefix="te")
            report = exact_leak_set(train, test)
            oracle = brute_force_exact(train, test)
            assert report.leak_ids == set(oracle)
            for m in report.matches:
                assert list(m.train_ids) == oracle[m.test_id]

    def test_multiple_matching_train_ids(self):
        train = dataset(sample("A", bfv(4, 1)), sample("B", bfv(4, 1)),
                        sample("C", bfv(4, 2)))
        test = dataset(sample("X", bfv(4, 1), ts="2020-03"))
        assert exact_leak_set(train, test).matches[0].train_ids == ("A", "B")


class TestCosineSimilarity:
    def test_identity(self):
        assert cosine_similarity(emb(1, 0), emb(1, 0)) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity(emb(1, 0), emb(0, 1)) == 0.0

    def test_hand_computed_value(self):
        assert cosine_similarity(emb(1, 1, 0), emb(1, 0, 0)) == \
            pytest.approx(0.7071067811865475, abs=1e-15)

    def test_zero_norm_is_zero_with_warning(self, caplog):
        with caplog.at_level("WARNING", logger="leakguard.leakage"):
            assert cosine_similarity(emb(0, 0), emb(1, 0)) == 0.0
        assert "zero-norm" in caplog.text

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            a = emb(*rng.standard_normal(6))
            b = emb(*rng.standard_normal(6))
            ab, ba = cosine_similarity(a, b), cosine_similarity(b, a)
            assert ab == ba
            assert abs(ab) <= 1.0 + 1e-12

    def test_scale_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            v = rng.standard_normal(5)
            c = float(rng.uniform(0.01, 100.0))
            assert cosine_similarity(emb(*v), emb(*(c * v))) == \
                pytest.approx(1.0, abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity(emb(1, 0), emb(1, 0, 0))


class TestNearLeakSet:
    def test_bit_identical_leaks_at_threshold_one(self):
        rng = np.random.default_rng(14)
        v = rng.standard_normal(7)
        train = dataset(sample("A", emb(*v)))
        test = dataset(sample("X", emb(*v), ts="2020-02"),
                       sample("Y", emb(*rng.standard_normal(7)), ts="2020-02"))
        report = near_leak_set(train, test, 1.0)
        assert report.leak_ids == {"X"}
        assert report.matches[0].best_similarity == 1.0

    def test_similar_but_below_threshold(self):
        train = dataset(sample("A", emb(1.0, 0.0)))
        test = dataset(sample("X", emb(1.0, 1.0), ts="2020-02"))
        assert near_leak_set(train, test, 0.8).leak_ids == frozenset()
        assert near_leak_set(train, test, 0.7).leak_ids == {"X"}

    def test_threshold_out_of_range(self):
        ds = dataset(sample("A", emb(1.0, 0.0)))
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                near_leak_set(ds, ds, bad)

    def test_requires_embeddings(self):
        ds = dataset(sample("A", bfv(4, 1)))
        with pytest.raises(SchemaMismatchError):
            near_leak_set(ds, ds, 0.9)

    def test_monotonicity_on_random_data(self):
        rng = np.random.default_rng(15)
        for trial in range(6):
            pool = representation_pool(rng, 10, dim=10, kind="embedding")
            train = random_embedding_dataset(rng, 60, dim=10, pool=pool, prefix="tr")
            test = random_embedding_dataset(rng, 60, dim=10, pool=pool, prefix="te")
            previous = None
            for m in threshold_grid(0.05, 1.0, 0.05):
                current = near_leak_set(train, test, min(m, 1.0)).leak_ids
                if previous is not None:
                    assert current <= previous
                previous = current

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(16)
        train = random_embedding_dataset(rng, 40, dim=6, prefix="tr")
        test = random_embedding_dataset(rng, 30, dim=6, prefix="te")
        m = 0.75
        report = near_leak_set(train, test, m)
        got = {match.test_id: set(match.train_ids) for match in report.matches}
        want: dict[str, set[str]] = {}
        for t in test.samples:
            hits = {s.id for s in train.samples
                    if cosine_similarity(s.representation, t.representation) >= m}
            if hits:
                want[t.id] = hits
        assert got == want

    def test_workers_do_not_change_results(self):
        rng = np.random.default_rng(17)
        pool = representation_pool(rng, 8, dim=6, kind="embedding")
        train = random_embedding_dataset(rng, 600, dim=6, pool=pool, prefix="tr")
        test = random_embedding_dataset(rng, 600, dim=6, pool=pool, prefix="te")
        base = near_leak_set(train, test, 0.9, workers=1)
        for workers in (2, 4):
            other = near_leak_set(train, test, 0.9, workers=workers)
            assert other.matches == base.matches

    def test_exact_duplicates_always_near_leak(self):
        rng = np.random.default_rng(18)
        pool = representation_pool(rng, 6, dim=8, kind="embedding")
        train = random_embedding_dataset(rng, 50, dim=8, pool=pool, prefix="tr")
        test = random_embedding_dataset(rng, 50, dim=8, pool=pool, prefix="te")
        exact_ids = exact_leak_set(train, test).leak_ids
        for m in (0.5, 0.9, 1.0):
            assert exact_ids <= near_leak_set(train, test, m).leak_ids


class TestUnionLeak:
    def rep(self, kind, *ids, test_size=4, threshold=None):
        matches = tuple(LeakMatch(i, (f"t-{i}",), kind, 1.0 if kind == "exact" else 0.95)
                        for i in ids)
        return LeakageReport(kind, threshold, test_size, matches)

    def test_simple_union(self):
        u = union_leak([self.rep("exact", "X"), self.rep("near", "Y", threshold=0.9)], 4)
        assert u.leak_ids == {"X", "Y"}
        assert u.kind == "union" and u.threshold == 0.9

    def test_identity_with_empty(self):
        r = self.rep("exact", "X", "Y")
        u = union_leak([r, LeakageReport("near", 0.9, 4, ())], 4)
        assert u.leak_ids == r.leak_ids and u.ratio == r.ratio

    def test_idempotent_commutative_associative(self):
        a = self.rep("exact", "X", "Y")
        b = self.rep("near", "Y", "Z", threshold=0.9)
        c = self.rep("exact", "W")
        assert union_leak([a, a], 4).leak_ids == a.leak_ids
        assert union_leak([a, b], 4).leak_ids == union_leak([b, a], 4).leak_ids
        left = union_leak([union_leak([a, b], 4), c], 4)
        right = union_leak([a, union_leak([b, c], 4)], 4)
        assert left.leak_ids == right.leak_ids == {"W", "X", "Y", "Z"}

    def test_groups_train_ids_by_test_id(self):
        a = LeakageReport("exact", None, 4, (LeakMatch("X", ("t1",), "exact", 1.0),))
        b = LeakageReport("near", 0.9, 4, (LeakMatch("X", ("t1", "t2"), "near", 0.97),))
        u = union_leak([a, b], 4)
        assert u.matches == (LeakMatch("X", ("t1", "t2"), "exact", 1.0),)

    def test_inconsistent_test_size(self):
        with pytest.raises(ValueError, match="test_size"):
            union_leak([self.rep("exact", "X", test_size=4)], 5)


class TestIoU:
    def test_examples(self):
        assert iou({"a"}, {"a"}) == 1.0
        assert iou({"a"}, {"b"}) == 0.0
        assert iou({"a", "b", "c"}, {"b", "c", "d"}) == 0.5

    def test_both_empty_is_one(self):
        assert iou(set(), set()) == 1.0

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(19)
        universe = [f"s{i}" for i in range(30)]
        for _ in range(100):
            a = {x for x in universe if rng.random() < 0.4}
            b = {x for x in universe if rng.random() < 0.4}
            v = iou(a, b)
            assert v == iou(b, a)
            assert 0.0 <= v <= 1.0
            assert iou(a, a) == 1.0


class TestThresholdGrid:
    def test_default_grid_has_21_points(self):
        grid = threshold_grid(0.8, 1.0, 0.01)
        assert len(grid) == 21
        assert grid[0] == 0.8 and grid[-1] == 1.0

    def test_index_arithmetic_no_drift(self):
        grid = threshold_grid(0.0, 1.0, 0.1)
        assert len(grid) == 11
        for k, value in enumerate(grid):
            assert value == 0.0 + k * 0.1

    def test_rejects_bad_ranges(self):
        with pytest.raises(ValueError):
            threshold_grid(1.0, 0.8, 0.01)
        with pytest.raises(ValueError):
            threshold_grid(0.8, 1.0, 0.0)


class TestCalibration:
    def literal_scan(self, leak_fv, train, test, lo, hi, step):
        """Fresh near_leak_set per grid point, same tie rule."""
        grid = threshold_grid(lo, hi, step)
        if grid[-1] > 1.0 and grid[-1] < 1.0 + 1e-9:
            grid = grid[:-1] + (1.0,)
        best_m, best_iou, curve = None, -1.0, []
        for m in grid:
            leak_emb = near_leak_set(train, test, m).leak_ids
            score = iou(leak_fv, leak_emb)
            curve.append((m, score))
            if score >= best_iou:
                best_iou, best_m = score, m
        return best_m, best_iou, tuple(curve)

    def test_planted_fixture_recovery(self):
        train, test, leak_fv = planted_calibration_data(seed=11)
        calibration = calibrate_threshold(leak_fv, train, test, 0.8, 1.0, 0.01)
        assert calibration.max_iou == 1.0
        assert 0.94 - 1e-9 <= calibration.chosen_m <= 0.97 + 1e-9
        assert len(calibration.grid) == 21

    def test_cached_equals_literal_rescan(self):
        train, test, leak_fv = planted_calibration_data(seed=23)
        calibration = calibrate_threshold(leak_fv, train, test, 0.8, 1.0, 0.01)
        m, v, curve = self.literal_scan(leak_fv, train, test, 0.8, 1.0, 0.01)
        assert calibration.chosen_m == m
        assert calibration.max_iou == v
        assert calibration.iou_curve == curve

    def test_all_ties_choose_largest_threshold(self):
        # every leaked pair is an exact copy (similarity snapped to 1.0),
        # so Leak_emb(M) equals leak_fv on the whole grid
        rng = np.random.default_rng(24)
        train_vecs = [rng.standard_normal(6) for _ in range(10)]
        train = dataset(*[sample(f"tr{i}", emb(*v)) for i, v in enumerate(train_vecs)])
        test_samples = [sample(f"le{i}", emb(*train_vecs[i]), ts="2020-02")
                        for i in range(4)]
        test_samples += [sample(f"fa{i}", emb(*rng.standard_normal(6)), ts="2020-02")
                         for i in range(6)]
        test = dataset(*test_samples)
        leak_fv = {f"le{i}" for i in range(4)}
        calibration = calibrate_threshold(leak_fv, train, test, 0.8, 1.0, 0.01)
        assert calibration.max_iou == 1.0
        assert calibration.chosen_m == 1.0

    def test_grid_validation(self):
        train, test, leak_fv = planted_calibration_data(seed=11, n_train=5,
                                                        n_leak=2, n_miss=0, n_far=2)
        with pytest.raises(ValueError):
            calibrate_threshold(leak_fv, train, test, 0.9, 0.8, 0.01)
        with pytest.raises(ValueError):
            calibrate_threshold(leak_fv, train, test, 0.5, 1.2, 0.1)


class TestDuplicateGroups:
    def test_all_distinct(self):
        ds = dataset(sample("a", bfv(4, 1)), sample("b", bfv(4, 2)))
        assert duplicate_groups(ds) == []

    def test_exact_grouping(self):
        ds = dataset(sample("A", bfv(4, 1)), sample("B", bfv(4, 1)),
                     sample("C", bfv(4, 2)))
        groups = duplicate_groups(ds)
        assert len(groups) == 1
        assert groups[0].member_ids == ("A", "B")

    def test_label_conflict_flag(self):
        ds = dataset(sample("A", bfv(4, 1), BENIGN), sample("B", bfv(4, 1), MALICIOUS))
        group = duplicate_groups(ds)[0]
        assert group.benign == 1 and group.malicious == 1
        assert group.label_conflict

    def test_near_grouping_connected_components(self):
        base = np.array([1.0, 0.0, 0.0, 0.0])
        chain = [base,
                 np.array([1.0, 0.12, 0.0, 0.0]),
                 np.array([1.0, 0.24, 0.0, 0.0])]
        ds = dataset(
            *[sample(f"c{i}", emb(*v)) for i, v in enumerate(chain)],
            sample("z", emb(0.0, 0.0, 1.0, 0.0)),
        )
        # c0~c1 and c1~c2 pass 0.99; c0~c2 alone does not, but the
        # component is transitive
        groups = duplicate_groups(ds, m=0.99)
        assert len(groups) == 1
        assert set(groups[0].member_ids) == {"c0", "c1", "c2"}

    def test_mode_validation(self):
        binary = dataset(sample("a", bfv(4, 1)))
        embedding = dataset(sample("a", emb(1.0, 0.0)))
        with pytest.raises(ValueError):
            duplicate_groups(binary, m=0.9)
        with pytest.raises(ValueError):
            duplicate_groups(embedding)


class TestLeakageDecay:
    def test_disjoint_streams_are_zero(self):
        train = dataset(sample("a", bfv(8, 1)))
        tests = [dataset(sample(f"t{i}", bfv(8, 2 + i), ts=f"2020-0{i + 2}"))
                 for i in range(3)]
        assert leakage_decay(train, tests) == [(0, 0.0), (1, 0.0), (2, 0.0)]

    def test_rejects_unordered_tests(self):
        train = dataset(sample("a", bfv(8, 1)))
        tests = [dataset(sample("x", bfv(8, 2), ts="2020-05")),
                 dataset(sample("y", bfv(8, 3), ts="2020-03"))]
        with pytest.raises(ValueError, match="ordered"):
            leakage_decay(train, tests)


class TestLeakReportDispatch:
    def test_modes(self):
        rng = np.random.default_rng(25)
        v = rng.standard_normal(5)
        train = dataset(sample("A", emb(*v)))
        test = dataset(sample("X", emb(*v), ts="2020-02"))
        assert leak_report(train, test, "exact").kind == "exact"
        assert leak_report(train, test, "near", 0.9).kind == "near"
        union = leak_report(train, test, "union", 0.9)
        assert union.kind == "union" and union.leak_ids == {"X"}
        with pytest.raises(ValueError):
            leak_report(train, test, "near")
        with pytest.raises(ValueError):
            leak_report(train, test, "sideways")

    def test_serialization_shape(self):
        train = dataset(sample("A", bfv(4, 1)))
        test = dataset(sample("X", bfv(4, 1), ts="2020-02"))
        payload = exact_leak_set(train, test).to_json_dict()
        assert list(payload) == ["kind", "threshold", "test_size", "ratio", "matches"]
        assert payload["matches"][0] == {"test_id": "X", "train_ids": ["A"],
                                         "best_similarity": 1.0}
