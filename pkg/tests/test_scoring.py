import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgewise.oracle import dirichlet_multinomial_loglik
from edgewise.scoring import (BlockScorer, DataError, DataMatrix, PriorSpec, build_family_scores,
                              load_csv, local_marginal_loglik)
from edgewise.varset import from_vars, popcount

from conftest import random_data


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        data = load_csv(write(tmp_path, "a,b\n0,0\n0,1\n1,1\n"))
        assert (data.m, data.n, data.arity) == (3, 2, (2, 2))
        assert data.names == ("a", "b")

    def test_integer_columns_coded_by_value(self, tmp_path):
        data = load_csv(write(tmp_path, "a,b\n3,x\n1,y\n2,x\n"))
        assert data.cells[:, 0].tolist() == [2, 0, 1]
        assert data.cells[:, 1].tolist() == [0, 1, 0]

    def test_width_mismatch(self, tmp_path):
        with pytest.raises(DataError, match="row width mismatch at line 3"):
            load_csv(write(tmp_path, "a,b\n0,1\n1\n"))

    def test_constant_column(self, tmp_path):
        with pytest.raises(DataError, match="constant column"):
            load_csv(write(tmp_path, "a,b\n0,1\n1,1\n"))

    def test_empty(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write(tmp_path, ""))


class TestPriorSpec:
    def test_parse(self):
        assert PriorSpec.parse("k2").kind == "k2"
        assert PriorSpec.parse("bdeu:2.5").ess == 2.5
        with pytest.raises(ValueError):
            PriorSpec.parse("bic")

    def test_log_rho_uniform(self):
        assert PriorSpec().log_rho(5, 2) == pytest.approx(-math.log(6))
        assert PriorSpec(rho="one").log_rho(5, 2) == 0.0


class TestLocalScore:
    def test_k2_closed_form_single_node(self):
        data = DataMatrix.from_codes([[0], [1]])
        assert local_marginal_loglik(data, 1, 0, PriorSpec(kind="k2")) == pytest.approx(math.log(1 / 6))

    def test_k2_closed_form_counts(self, rng):
        col = rng.integers(0, 3, size=40)
        col[:3] = [0, 1, 2]
        data = DataMatrix.from_codes(col[:, None])
        c = np.bincount(col, minlength=3)
        r, m = 3, len(col)
        expected = (math.lgamma(r) + sum(math.lgamma(x + 1) for x in c) - math.lgamma(m + r))
        assert local_marginal_loglik(data, 1, 0, PriorSpec(kind="k2")) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("kind", ["bdeu", "k2"])
    def test_matches_independent_oracle(self, rng, kind):
        data = random_data(rng, 3, m=80)
        prior = PriorSpec(kind=kind)
        for i in range(1, 4):
            for G in range(8):
                if G & (1 << (i - 1)):
                    continue
                parents = tuple(p for p in range(1, 4) if G & (1 << (p - 1)))
                ours = local_marginal_loglik(data, i, G, prior)
                ref = dirichlet_multinomial_loglik(data, i, parents, prior)
                assert abs(ours - ref) <= 1e-10 * max(1.0, abs(ref))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_row_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        data = random_data(rng, 3, m=30)
        shuffled = DataMatrix(data.cells[rng.permutation(data.m)], data.arity)
        for G in (0, 0b10, 0b110):
            a = local_marginal_loglik(data, 1, G, PriorSpec())
            b = local_marginal_loglik(shuffled, 1, G, PriorSpec())
            assert a == pytest.approx(b, rel=1e-12, abs=1e-12)

    def test_config_cap(self, rng):
        data = random_data(rng, 4, m=20, max_arity=3)
        with pytest.raises(ValueError):
            local_marginal_loglik(data, 1, 0b1110, PriorSpec(config_cap=2))


class TestFamilyTables:
    def test_trivial_full_table(self, rng):
        data = random_data(rng, 5)
        table = build_family_scores(data, 2, 4, PriorSpec())
        assert np.isfinite(table.scores).sum() == 2 ** 4
        assert 0b10 not in table

    def test_edge_feature_indicator(self, rng):
        data = random_data(rng, 4)
        table = build_family_scores(data, 3, 2, PriorSpec(), feature=(1, 3))
        for G, s in zip(table.masks.tolist(), table.scores):
            assert np.isneginf(s) == (not G & 1)

    def test_feature_elsewhere_untouched(self, rng):
        data = random_data(rng, 4)
        base = build_family_scores(data, 2, 2, PriorSpec())
        feat = build_family_scores(data, 2, 2, PriorSpec(), feature=(1, 3))
        assert np.array_equal(base.scores, feat.scores)

    def test_block_scorer_agrees(self, rng):
        data = random_data(rng, 4)
        prior = PriorSpec(kind="k2")
        masks = np.arange(16, dtype=np.int64)
        out = BlockScorer(data, prior, 2).scores(masks)
        for i in range(1, 5):
            dense = build_family_scores(data, i, 2, prior).dense()
            assert np.array_equal(out[i - 1], dense)
            assert all(np.isneginf(out[i - 1, G]) for G in range(16) if popcount(G) > 2)

    def test_bad_indegree(self, rng):
        with pytest.raises(ValueError):
            build_family_scores(random_data(rng, 3), 1, 3, PriorSpec())


def test_from_vars_used_in_scores(chain):
    assert local_marginal_loglik(chain, 3, from_vars([2]), PriorSpec(kind="k2")) > \
        local_marginal_loglik(chain, 3, 0, PriorSpec(kind="k2"))
