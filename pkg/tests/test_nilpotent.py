from fractions import Fraction

import numpy as np
import pytest

from srgeo.builtins import make_structure
from srgeo.errors import NotPrivilegedError
from srgeo.fields import PolyVectorField
from srgeo.grammar import parse_vector_field
from srgeo.nilpotent import (
    Grading,
    dilate,
    dilation_rescale,
    field_order_range,
    homogeneous_decompose,
    monomial_field_order,
    nilpotency_check,
    remainder_rescale,
    truncate,
)
from srgeo.poly import Polynomial
from srgeo.structure import SubRiemannianStructure


def test_grading_validation():
    Grading((1, 1, 2))
    with pytest.raises(ValueError):
        Grading((2, 2))
    with pytest.raises(ValueError):
        Grading((1, 3, 2))


def test_monomial_field_order_examples():
    assert monomial_field_order((0, 0, 0), 0, Grading((1, 1, 2))) == -1
    assert monomial_field_order((1, 0), 1, Grading((1, 2))) == -1
    assert monomial_field_order((0, 1, 0), 2, Grading((1, 1, 2))) == -1
    assert monomial_field_order((0, 0, 2), 2, Grading((1, 1, 2))) == 2


def test_homogeneous_decompose():
    X = parse_vector_field("d1 + x1*x1*d2", 2)
    parts = homogeneous_decompose(X, Grading((1, 2)))
    assert [s for s, _ in parts] == [-1, 0]
    assert parts[0][1] == parse_vector_field("d1", 2)
    assert parts[1][1] == parse_vector_field("x1*x1*d2", 2)
    total = PolyVectorField.zero(2)
    for _, part in parts:
        total = total + part
    assert total == X
    assert homogeneous_decompose(PolyVectorField.zero(2), Grading((1, 2))) == []
    single = homogeneous_decompose(parse_vector_field("x1*d2", 2), Grading((1, 2)))
    assert len(single) == 1


def test_truncate_singruppo(singruppo):
    NA = truncate(singruppo, Grading((1, 1, 2)))
    heis = make_structure("heisenberg")
    assert NA.truncated_frame[0] == heis.frame[0]
    assert NA.truncated_frame[1] == heis.frame[1]
    assert NA.truncated_frame[2].is_zero
    assert NA.remainders[2] == parse_vector_field("x3*x3*d3", 3)
    assert NA.Q == 4


def test_truncate_heisenberg_identity(heisenberg):
    NA = truncate(heisenberg, Grading((1, 1, 2)))
    for X_hat, X in zip(NA.truncated_frame, heisenberg.frame):
        assert X_hat == X
    for R in NA.remainders:
        assert R.is_zero


def test_truncate_grushin_identity(grushin):
    NA = truncate(grushin, Grading((1, 2)))
    for X_hat, X in zip(NA.truncated_frame, grushin.frame):
        assert X_hat == X


def test_truncate_derives_grading_from_flag(singruppo):
    NA = truncate(singruppo)
    assert NA.grading.weights == (1, 1, 2)


def test_truncate_rejects_non_privileged():
    # declaring weight 2 for x2 while the frame reaches d2 directly gives
    # the monomial d2 weighted order -2: the coordinates are not privileged
    bad = SubRiemannianStructure(
        2,
        [
            PolyVectorField.coordinate(0, 2),
            PolyVectorField.coordinate(1, 2),
        ],
    )
    with pytest.raises(NotPrivilegedError) as err:
        truncate(bad, Grading((1, 2)))
    assert err.value.order <= -2


def test_truncation_reconstructs_exactly(singruppo):
    NA = truncate(singruppo, Grading((1, 1, 2)))
    for X_hat, R, X in zip(NA.truncated_frame, NA.remainders, singruppo.frame):
        assert X_hat + R == X
        lo, _hi = field_order_range(R, NA.grading)
        assert lo is None or lo >= 0


def test_dilate():
    g = Grading((1, 1, 2))
    assert np.allclose(dilate([1, 1, 1], g, 2.0), [2, 2, 4])
    z = np.array([0.3, -0.7, 0.2])
    assert np.allclose(dilate(z, g, 1.0), z)
    assert np.allclose(dilate(dilate(z, g, 2.0), g, 3.0), dilate(z, g, 6.0))
    with pytest.raises(ValueError):
        dilate(z, g, 0.0)


def test_dilation_jacobian_is_lambda_Q():
    g = Grading((1, 1, 2))
    lam = 1.7
    jac = np.prod([lam**w for w in g.weights])
    assert jac == pytest.approx(lam**g.Q)
    assert g.Q == 4


def test_remainder_rescale_exact():
    g = Grading((1, 1, 2))
    R3 = parse_vector_field("x3*x3*d3", 3)
    Y = remainder_rescale(R3, g, Fraction(1, 2))
    assert Y == parse_vector_field("1/8*x3*x3*d3", 3)
    Yr = remainder_rescale(R3, g, 0.25)
    assert Yr.coeffs[2].coefficient((0, 0, 2)) == Fraction(1, 64)


def test_remainder_rescale_order0():
    g = Grading((1, 2))
    X = parse_vector_field("x1*d1", 2)
    Y = remainder_rescale(X, g, Fraction(1, 2))
    assert Y == parse_vector_field("1/2*x1*d1", 2)


def test_remainder_rescale_rejects_negative_order():
    g = Grading((1, 1, 2))
    with pytest.raises(ValueError):
        remainder_rescale(parse_vector_field("d1", 3), g, 0.5)


def test_truncated_field_homogeneity(heisenberg):
    # r (delta_{1/r})_* X_hat = X_hat, exactly on monomials
    NA = truncate(heisenberg, Grading((1, 1, 2)))
    for X_hat in NA.truncated_frame:
        assert dilation_rescale(X_hat, NA.grading, Fraction(3, 7)) == X_hat


def test_remainder_rescale_sup_norm_linear_in_r(singruppo):
    # sup over the unit weighted box of |Y^r| <= C r, C fitted at r = 1/2
    NA = truncate(singruppo, Grading((1, 1, 2)))
    R = NA.remainders[2]
    box_pts = np.random.default_rng(0).uniform(-1, 1, (500, 3))
    sups = {}
    for r in (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)):
        Y = remainder_rescale(R, NA.grading, r)
        sups[r] = float(np.max(np.abs(Y.eval_batch(box_pts))))
    C = sups[Fraction(1, 2)] / 0.5
    for r, sup in sups.items():
        assert sup <= C * float(r) + 1e-12


def test_nilpotency_check(heisenberg, singruppo):
    NA = truncate(heisenberg, Grading((1, 1, 2)))
    rep = nilpotency_check(NA, 2, original=heisenberg)
    assert rep.nilpotent and rep.growth_match
    NA2 = truncate(singruppo, Grading((1, 1, 2)))
    rep2 = nilpotency_check(NA2, 2, original=singruppo)
    assert rep2.passed
    assert rep2.growth_truncated == (2, 3)


def test_nilpotency_check_euclidean():
    S = make_structure("euclidean:3")
    NA = truncate(S, Grading((1, 1, 1)))
    rep = nilpotency_check(NA, 1, original=S)
    assert rep.passed


def test_nilpotency_check_failure_witness(heisenberg):
    NA = truncate(heisenberg, Grading((1, 1, 2)))
    rep = nilpotency_check(NA, 1)  # Heisenberg is not step 1
    assert not rep.nilpotent
    assert len(rep.witness_word) == 2
