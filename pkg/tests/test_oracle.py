import math

import numpy as np
import pytest

from edgewise.lattice import serial_F_R
from edgewise.oracle import (OracleTooLarge, all_edge_joints, naive_truncated_sums,
                             posterior_by_order_enumeration)
from edgewise.posterior import edge_posteriors
from edgewise.scoring import DataMatrix, PriorSpec, family_score

from conftest import random_data


def test_single_variable():
    data = DataMatrix.from_codes([[0], [1], [1]])
    prior = PriorSpec(kind="k2")
    log_pd, p = posterior_by_order_enumeration(data, prior, 0)
    assert log_pd == pytest.approx(family_score(data, 1, 0, prior), rel=1e-12)
    assert p == 1.0


def test_two_variables_unit_scores():
    # with every family scoring log 1 the count is 2 orders x 2 parent choices
    A = np.array([[0.0, -np.inf, math.log(2), -np.inf], [0.0, math.log(2), -np.inf, -np.inf]])
    F, _ = serial_F_R(A)
    assert math.exp(F[3]) == pytest.approx(4.0)


def test_evidence_matches_dp(rng):
    data = random_data(rng, 5, m=40)
    log_pd, _ = posterior_by_order_enumeration(data, PriorSpec(), 2)
    assert edge_posteriors(data, PriorSpec(), 2).log_evidence == pytest.approx(log_pd, rel=1e-9)


def test_feature_is_a_fraction(rng):
    data = random_data(rng, 4)
    log_pf, p = posterior_by_order_enumeration(data, PriorSpec(), 3, feature=(1, 2))
    assert 0 < p < 1 and log_pf < all_edge_joints(data, PriorSpec(), 3, [])[None]


def test_limits(rng):
    with pytest.raises(OracleTooLarge):
        all_edge_joints(random_data(rng, 9, m=20))
    with pytest.raises(ValueError):
        naive_truncated_sums(np.zeros(6), 1, "up")
    with pytest.raises(ValueError):
        naive_truncated_sums(np.zeros(8), 1, "sideways")
