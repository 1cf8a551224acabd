import math

import numpy as np
import pytest

from edgewise.lattice import LatticeSchedule, compute_F, compute_R, forward_program, required_bytes, serial_F_R
from edgewise.runtime import spawn
from edgewise.varset import popcount_array, worker_masks


def dense_to_blocks(A, n, k):
    return [A[:, worker_masks(n, k, r)] for r in range(1 << k)]


def reassemble(blocks, n, k, mirror=False):
    out = np.empty(1 << n)
    for r, b in enumerate(blocks):
        out[worker_masks(n, k, r, mirror)] = b
    return out


def reference_F_R(A):
    """Plain per-set recursion with Python floats."""
    n = A.shape[0]
    full = (1 << n) - 1
    F, R = {0: 0.0}, {0: 0.0}
    for S in sorted(range(1, 1 << n), key=lambda s: (bin(s).count("1"), s)):
        tf, tr = [], []
        for i in range(1, n + 1):
            b = 1 << (i - 1)
            if S & b:
                tf.append(A[i - 1, S ^ b] + F[S ^ b])
                tr.append(A[i - 1, full ^ S] + R[S ^ b])
        F[S] = np.logaddexp.reduce(tf)
        R[S] = np.logaddexp.reduce(tr)
    return np.array([F[s] for s in range(1 << n)]), np.array([R[s] for s in range(1 << n)])


class TestSerial:
    def test_order_count(self):
        n = 6
        F, R = serial_F_R(np.zeros((n, 1 << n)))
        want = np.array([math.lgamma(c + 1) for c in popcount_array(np.arange(1 << n))])
        assert np.allclose(F, want, atol=1e-12)
        assert np.allclose(R, want, atol=1e-12)

    def test_single_variable(self):
        F, _ = serial_F_R(np.array([[-1.5, -np.inf]]))
        assert F[1] == -1.5

    def test_two_variable_expansion(self):
        a1, a2, b1, b2 = -0.3, -1.1, -2.0, -0.7
        A = np.array([[a1, -np.inf, b1, -np.inf], [a2, b2, -np.inf, -np.inf]])
        F, _ = serial_F_R(A)
        assert F[3] == pytest.approx(np.logaddexp(a2 + b1, a1 + b2), rel=1e-14)

    def test_matches_reference(self, rng):
        A = rng.normal(size=(5, 32))
        F, R = serial_F_R(A)
        rf, rr = reference_F_R(A)
        assert np.allclose(F, rf, rtol=1e-12)
        assert np.allclose(R, rr, rtol=1e-12)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            serial_F_R(np.zeros((3, 4)))


class TestFabric:
    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    @pytest.mark.parametrize("granularity", ["level", "block"])
    def test_bitwise_against_serial(self, rng, k, granularity):
        n = 6
        A = rng.normal(size=(n, 1 << n))
        F, R = serial_F_R(A)
        blocks = dense_to_blocks(A, n, k)
        fab = spawn(k)
        assert np.array_equal(reassemble(compute_F(fab, blocks, n, granularity), n, k), F)
        assert np.array_equal(reassemble(compute_R(fab, blocks, n, granularity), n, k, mirror=True), R)
        assert fab.locality_violations() == []

    def test_full_set_on_all_ones_worker(self, rng):
        n, k = 5, 2
        A = rng.normal(size=(n, 1 << n))
        F_blocks = compute_F(spawn(k), dense_to_blocks(A, n, k), n)
        assert F_blocks[3][-1] == serial_F_R(A)[0][-1]

    def test_R_collocated_with_complement_F(self, rng):
        n, k = 5, 2
        full = (1 << n) - 1
        for r in range(1 << k):
            f_sets = worker_masks(n, k, r)
            r_sets = worker_masks(n, k, r, mirror=True)
            assert np.array_equal(np.sort(full ^ f_sets), np.sort(r_sets))


class TestSchedule:
    @pytest.mark.parametrize("n,k", [(4, 2), (6, 3), (5, 0)])
    def test_block_depth(self, n, k):
        sched = LatticeSchedule(n, k, "block")
        assert sched.depth == 2 ** (n - k) + k
        assert sum(1 for _ in sched.groups()) == 2 ** (n - k)

    def test_level_depth(self):
        assert LatticeSchedule(8, 3).depth == 8 - 3 + 1 + 3

    def test_predecessors_activate_first(self):
        sched = LatticeSchedule(6, 2, "block")
        for h in range(16):
            for w in range(4):
                for i in range(2):
                    if w >> i & 1:
                        assert sched.activation_step(h, w ^ (1 << i)) < sched.activation_step(h, w)
                for i in range(4):
                    if h >> i & 1:
                        assert sched.activation_step(h ^ (1 << i), w) < sched.activation_step(h, w)

    def test_logged_steps_follow_pipeline(self, rng):
        n, k = 5, 2
        A = rng.normal(size=(n, 1 << n))
        sched = LatticeSchedule(n, k, "block")
        logs = {r: [] for r in range(4)}
        spawn(k).run(forward_program, n=n, granularity="block",
                     per_worker=[{"A": b, "log": logs[r]} for r, b in enumerate(dense_to_blocks(A, n, k))])
        for r, entries in logs.items():
            assert [g[0] for _, g in entries] == list(sched.prefixes)
            for step, (h,) in entries:
                assert step == sched.activation_step(h, r)
        last = max(step for entries in logs.values() for step, _ in entries)
        assert last + 1 == sched.depth

    def test_bad_args(self):
        with pytest.raises(ValueError):
            LatticeSchedule(3, 4)
        with pytest.raises(ValueError):
            LatticeSchedule(3, 1, "row")


def test_required_bytes_halves():
    for n in (14, 16):
        for k in range(5):
            assert required_bytes(n, k) == 2 * required_bytes(n, k + 1)
