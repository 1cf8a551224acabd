import math
from collections import Counter

import numpy as np
import pytest

from edgewise.oracle import naive_truncated_sums
from edgewise.runtime import spawn
from edgewise.varset import popcount_array
from edgewise.zeta import (downward_zeta_parallel, downward_zeta_serial, gather, scatter,
                           upward_zeta_parallel, upward_zeta_serial)


def close(a, b, tol=1e-10):
    fa, fb = np.isfinite(a), np.isfinite(b)
    assert np.array_equal(fa, fb)
    assert np.all(np.abs(a[fa] - b[fb]) <= tol * np.maximum(1.0, np.abs(b[fb])))


def cards(n):
    return popcount_array(np.arange(1 << n, dtype=np.int64))


class TestUpwardSerial:
    def test_indicator_of_empty(self):
        for d in range(5):
            s = np.full(16, -np.inf)
            s[0] = 0.0
            assert np.all(upward_zeta_serial(s, 4, d) == 0.0)

    def test_power_set_count(self):
        t = upward_zeta_serial(np.zeros(1 << 5), 5, 5)
        assert np.allclose(t, cards(5) * math.log(2), rtol=0, atol=1e-12)

    def test_random_against_naive(self, rng):
        s = rng.normal(size=1 << 10)
        close(upward_zeta_serial(s, 10, 3), naive_truncated_sums(s, 3, "up"))

    def test_guard_audit(self, rng):
        for d in range(7):
            ops = Counter()
            upward_zeta_serial(rng.normal(size=64), 6, d, ops=ops, audit=True)
            assert ops["guard_reads"] == 0

    def test_bad_bound(self):
        with pytest.raises(ValueError):
            upward_zeta_serial(np.zeros(4), 2, 3)


class TestDownwardSerial:
    def test_superset_count(self):
        t = downward_zeta_serial(np.zeros(1 << 5), 5, 5)
        assert np.allclose(t, (5 - cards(5)) * math.log(2), rtol=0, atol=1e-12)

    def test_indicator_of_full_set(self):
        s = np.full(16, -np.inf)
        s[15] = 0.0
        assert np.all(downward_zeta_serial(s, 4, 4) == 0.0)

    def test_random_against_naive(self, rng):
        s = rng.normal(size=1 << 10)
        close(downward_zeta_serial(s, 10, 4), naive_truncated_sums(s, 4, "down"))

    def test_exclude(self, rng):
        n, v = 6, 3
        s = rng.normal(size=1 << n)
        S = np.arange(1 << n)
        masked = np.where(S & (1 << (v - 1)), -np.inf, s)
        for d in (0, 2, 6):
            close(downward_zeta_serial(s, n, d, exclude=v), naive_truncated_sums(masked, d, "down"))

    def test_d_zero_full_sum(self, rng):
        s = rng.normal(size=32)
        t = downward_zeta_serial(s, 5, 0)
        assert t[0] == pytest.approx(np.logaddexp.reduce(s), rel=1e-12)
        assert np.all(np.isneginf(t[1:]))


class TestParallel:
    @pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
    def test_upward_bitwise(self, rng, k):
        n, d = 6, 2
        s = rng.normal(size=1 << n)
        out = upward_zeta_parallel(spawn(k), scatter(s, n, k), n, d)
        assert np.array_equal(gather(out, n, k), upward_zeta_serial(s, n, d))

    def test_upward_n4_k2(self, rng):
        s = rng.normal(size=16)
        out = upward_zeta_parallel(spawn(2), scatter(s, 4, 2), 4, 2)
        assert np.array_equal(gather(out, 4, 2), upward_zeta_serial(s, 4, 2))

    def test_downward_superset_count_per_worker(self):
        n, k = 4, 2
        fab = spawn(k)
        out = downward_zeta_parallel(fab, scatter(np.zeros(16), n, k), n, 4)
        assert np.allclose(gather(out, n, k), (n - cards(n)) * math.log(2), atol=1e-12)

    def test_downward_n12_k3_bitwise(self, rng):
        n, k, d = 12, 3, 3
        s = rng.normal(size=1 << n)
        fab = spawn(k)
        out = downward_zeta_parallel(fab, scatter(s, n, k), n, d)
        assert np.array_equal(gather(out, n, k), downward_zeta_serial(s, n, d))
        assert fab.locality_violations() == []

    @pytest.mark.parametrize("v", [1, 2, 5])
    def test_downward_exclude_bitwise(self, rng, v):
        n, k, d = 6, 2, 3
        s = rng.normal(size=1 << n)
        out = downward_zeta_parallel(spawn(k), scatter(s, n, k), n, d, exclude=v)
        assert np.array_equal(gather(out, n, k), downward_zeta_serial(s, n, d, exclude=v))

    def test_threaded_backend_bitwise(self, rng):
        n, k, d = 7, 2, 3
        s = rng.normal(size=1 << n)
        out = upward_zeta_parallel(spawn(k, "par"), scatter(s, n, k), n, d)
        assert np.array_equal(gather(out, n, k), upward_zeta_serial(s, n, d))

    def test_scatter_gather_roundtrip(self, rng):
        s = rng.normal(size=64)
        for mirror in (False, True):
            assert np.array_equal(gather(scatter(s, 6, 3, mirror), 6, 3, mirror), s)


def test_downward_work_includes_fabric_passes(rng):
    """Worker 0 pays one full sweep per fabric dimension on top of the local ones."""
    n = 12
    s = rng.normal(size=1 << n)
    base = {}
    for d in (1, 3):
        for k in range(4):
            fab = spawn(k)
            downward_zeta_parallel(fab, scatter(s, n, k), n, d)
            adds = max(ep.ops["down_adds"] for ep in fab.endpoints)
            if k == 0:
                base[d] = adds / (d * 2 ** n)
            assert adds <= base[d] * (d + k) * 2 ** (n - k)
