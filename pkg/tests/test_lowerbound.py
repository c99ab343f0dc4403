import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from mechlab.core import DiscountSequence
from mechlab.direct_mech import DirectMechanism, audit_payment_bound, check_ic_pir
from mechlab.errors import DomainError, StructureError
from mechlab.lowerbound import (
    EQ,
    GE,
    LE,
    LinearProgram,
    LPStatus,
    TwoTypeInstance,
    closed_form_bound,
    ic_pir_program,
    optimal_two_type_regret,
    regret_decomposition,
    solve_lp,
)
from oracles import scipy_two_type


def test_lp_examples():
    lp = LinearProgram(np.array([-1.0, -1.0]))
    lp.add([1, 1], LE, 1)
    res = solve_lp(lp)
    assert res.status is LPStatus.OPTIMAL and res.value == pytest.approx(-1.0, abs=1e-12)
    assert res.x.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.count_nonzero(np.abs(res.x) > 1e-12) == 1  # basic: one positive coordinate

    lp = LinearProgram(np.array([1.0]))
    lp.add([1], GE, 3)
    assert solve_lp(lp).value == pytest.approx(3.0, abs=1e-12)

    lp = LinearProgram(np.array([0.0]))
    lp.add([1], LE, -1)
    assert solve_lp(lp).status is LPStatus.INFEASIBLE


def test_lp_unbounded_and_free():
    lp = LinearProgram(np.array([-1.0, 0.0]))
    lp.add([1, -1], LE, 1)
    assert solve_lp(lp).status is LPStatus.UNBOUNDED
    lp = LinearProgram(np.array([1.0]), free=frozenset({0}))
    lp.add([1], GE, -2.5)
    res = solve_lp(lp)
    assert res.value == pytest.approx(-2.5, abs=1e-12) and res.x[0] == pytest.approx(-2.5, abs=1e-12)


def test_lp_equality_and_redundant_rows():
    lp = LinearProgram(np.array([1.0, 2.0, 0.0]))
    lp.add([1, 1, 1], EQ, 2)
    lp.add([2, 2, 2], EQ, 4)  # duplicate
    lp.add([0, 1, 0], GE, 0.5)
    res = solve_lp(lp)
    assert res.status is LPStatus.OPTIMAL and res.value == pytest.approx(1.0, abs=1e-12)


def test_lp_validation():
    with pytest.raises(StructureError):
        LinearProgram(np.array([1.0, 2.0]), [(np.array([1.0]), LE, 1.0)])
    lp = LinearProgram(np.array([1.0]))
    with pytest.raises(StructureError):
        lp.add([1], "<", 1)


@given(st.integers(0, 100_000))
def test_lp_matches_scipy_on_random_programs(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 6)), int(rng.integers(1, 7))
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    b = rng.integers(-2, 6, size=m).astype(float)
    c = rng.integers(-3, 4, size=n).astype(float)
    lp = LinearProgram(c)
    for row, rhs in zip(A, b):
        lp.add(row, LE, rhs)
    lp.add(np.ones(n), LE, 10.0)  # keeps every feasible program bounded
    ours = solve_lp(lp)
    ref = linprog(c, A_ub=np.vstack([A, np.ones(n)]), b_ub=np.append(b, 10.0), method="highs")
    if ref.status == 2:
        assert ours.status is LPStatus.INFEASIBLE
    else:
        assert ref.status == 0
        assert ours.status is LPStatus.OPTIMAL
        assert ours.value == pytest.approx(ref.fun, abs=1e-7)


def test_two_type_examples():
    R, mech = optimal_two_type_regret(TwoTypeInstance(0.5, 1.0, DiscountSequence((1.0, 1.0))))
    assert R == pytest.approx(0.5, abs=1e-9)
    R, _ = optimal_two_type_regret(TwoTypeInstance(0.5, 1.0, DiscountSequence((1.0, 0.5))))
    assert R >= 0.375 - 1e-6
    assert R == pytest.approx(scipy_two_type(0.5, 1.0, (1.0, 0.5)), abs=1e-7)
    R, _ = optimal_two_type_regret(TwoTypeInstance(0.5, 1.0, DiscountSequence((1.0,))))
    assert R >= 0.25 - 1e-6


def test_instance_validation():
    for lo, hi in [(0.0, 0.5), (0.6, 0.5), (0.5, 0.5), (0.5, 1.2)]:
        with pytest.raises(DomainError):
            TwoTypeInstance(lo, hi, DiscountSequence((1.0,)))


def test_closed_form_examples():
    assert closed_form_bound(0.5, 1.0, 2.0) == 0.5
    assert closed_form_bound(0.5, 1.0, 1.5) == 0.375
    assert closed_form_bound(1e-12, 1.0, 3.0) == pytest.approx(0.0, abs=1e-10)
    assert closed_form_bound(0.0, 1.0, 3.0) == 0.0
    with pytest.raises(DomainError):
        closed_form_bound(0.6, 0.5, 1.0)


CASES = [
    (0.5, 1.0, (1.0, 1.0)),
    (0.3, 0.9, (1.0, 1.0, 1.0)),
    (0.2, 0.5, (0.8, 0.64, 0.512)),
    (0.6, 0.7, tuple(0.8 ** t for t in range(1, 6))),
    (0.1, 1.0, (1.0, 0.5, 0.25, 0.125)),
]


@pytest.mark.parametrize("v_lo,v_hi,gamma", CASES)
def test_lp_against_independent_model(v_lo, v_hi, gamma):
    seq = DiscountSequence(gamma)
    R, mech = optimal_two_type_regret(TwoTypeInstance(v_lo, v_hi, seq))
    assert R == pytest.approx(scipy_two_type(v_lo, v_hi, gamma), abs=1e-7)
    assert R >= closed_form_bound(v_lo, v_hi, seq.t_gamma) - 1e-6
    assert check_ic_pir(mech, seq).compliant
    assert all(s >= -1e-9 for _, s in audit_payment_bound(mech, seq))
    worst = max(len(seq) * v - mech.pay[i].sum() for i, v in enumerate(mech.types))
    assert worst <= R + 1e-9


@pytest.mark.parametrize("v_lo,v_hi,T", [(0.5, 1.0, 2), (0.3, 0.9, 3), (0.2, 0.5, 4), (0.6, 0.7, 5)])
def test_tight_at_constant_weights(v_lo, v_hi, T):
    seq = DiscountSequence((1.0,) * T)
    R, mech = optimal_two_type_regret(TwoTypeInstance(v_lo, v_hi, seq))
    assert R == pytest.approx(closed_form_bound(v_lo, v_hi, T), abs=1e-6)
    reg_lo = T * v_lo - mech.pay[0].sum()
    reg_hi = T * v_hi - mech.pay[1].sum()
    assert reg_lo / v_lo + reg_hi / (v_hi - v_lo) == pytest.approx(T, abs=1e-6)
    ineff, rent = regret_decomposition(mech, seq)
    assert ineff / v_lo + rent / (v_hi - v_lo) == pytest.approx(T, abs=1e-9)


def test_program_layout():
    seq = DiscountSequence((1.0, 0.5))
    lp = ic_pir_program((0.5, 1.0), seq, np.zeros(8))
    assert lp.n_vars == 8
    # allocation caps, suffix participation and the deviation family
    assert len(lp.constraints) == 2 * 2 + 2 * 2 + 2 * 1 * 3
    with pytest.raises(StructureError):
        regret_decomposition(DirectMechanism((0.5,), np.ones((1, 2)), np.zeros((1, 2))), seq)
