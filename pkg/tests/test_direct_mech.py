import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mechlab.core import DiscountSequence
from mechlab.direct_mech import (
    DirectMechanism,
    audit_payment_bound,
    check_ic_pir,
    prefix_utility_table,
    random_compliant_mechanism,
    revenue_per_type,
)
from mechlab.errors import DomainError, StructureError
from oracles import brute_slacks


def _agree_with_brute(mech, seq, report):
    brute = brute_slacks(mech.types, seq.gamma, mech.alloc.tolist(), mech.pay.tolist())
    for (i, j, t), s in brute.items():
        assert report.slacks[i, j, t] == pytest.approx(s, abs=1e-12)


def test_compliant_example(two_type):
    mech, seq = two_type
    rep = check_ic_pir(mech, seq)
    assert rep.compliant
    assert rep.min_slack == pytest.approx(0.0, abs=1e-12)
    assert rep.slacks.shape == (2, 2, 3)
    _agree_with_brute(mech, seq, rep)


def test_pir_violation_example(two_type):
    mech, seq = two_type
    bad = mech.with_payments([[0.4, 0.6], [2 / 3, 2 / 3]])
    rep = check_ic_pir(bad, seq)
    hit = [x for x in rep.violations if (x.v, x.v_hat, x.t) == (0.5, 0.5, 1)]
    assert hit and hit[0].kind == "PIR"
    # truthful full horizon 0.1 - 0.3 = -0.2 against the one-round prefix 0.1
    assert hit[0].slack == pytest.approx(-0.3, abs=1e-12)
    _agree_with_brute(bad, seq, rep)


def test_ic_violation_example(two_type):
    mech, seq = two_type
    bad = mech.with_payments([[0.5, 0.0], [0.9, 0.9]])
    rep = check_ic_pir(bad, seq)
    ic = [x for x in rep.violations if x.kind == "IC"]
    assert ic
    # truthful 0.15 against reporting 0.5 for both rounds: 1 - 0.5 = 0.5
    full = [x for x in ic if (x.v, x.v_hat, x.t) == (1.0, 0.5, 2)]
    assert full[0].slack == pytest.approx(0.15 - 0.5, abs=1e-12)
    _agree_with_brute(bad, seq, rep)


def test_dimension_mismatch(two_type):
    mech, _ = two_type
    with pytest.raises(StructureError):
        check_ic_pir(mech, DiscountSequence((1.0,)))
    with pytest.raises(StructureError):
        audit_payment_bound(mech, DiscountSequence((1.0, 1.0, 1.0)))


@pytest.mark.parametrize(
    "types,alloc,pay,err",
    [
        ((), np.zeros((0, 1)), np.zeros((0, 1)), DomainError),
        ((0.5, 0.5), np.zeros((2, 1)), np.zeros((2, 1)), DomainError),
        ((0.7, 0.5), np.zeros((2, 1)), np.zeros((2, 1)), DomainError),
        ((1.2,), np.zeros((1, 1)), np.zeros((1, 1)), DomainError),
        ((0.5,), np.zeros((1, 2)), np.zeros((1, 3)), StructureError),
        ((0.5,), np.full((1, 1), 1.5), np.zeros((1, 1)), DomainError),
        ((0.5,), np.zeros((1, 1)), np.full((1, 1), -0.1), DomainError),
    ],
)
def test_mechanism_validation(types, alloc, pay, err):
    with pytest.raises(err):
        DirectMechanism(types, alloc, pay)


def test_tiny_rounding_is_clipped():
    m = DirectMechanism((0.5,), np.array([[1 + 1e-12]]), np.array([[-1e-13]]))
    assert m.alloc[0, 0] == 1.0 and m.pay[0, 0] == 0.0
    with pytest.raises(ValueError):
        m.pay[0, 0] = 1.0


def test_revenue_examples(two_type):
    mech, _ = two_type
    assert revenue_per_type(mech, 1) == pytest.approx(4 / 3, abs=1e-15)
    assert revenue_per_type(mech, 0) == 0.5
    zero = DirectMechanism((0.5, 1.0), np.zeros((2, 2)), np.zeros((2, 2)))
    assert revenue_per_type(zero, 0) == 0.0
    with pytest.raises(DomainError):
        revenue_per_type(mech, 2)


def test_payment_bound_examples(two_type):
    mech, seq = two_type
    (v0, s0), (v1, s1) = audit_payment_bound(mech, seq)
    assert (v0, v1) == (0.5, 1.0)
    assert s0 == 0.0 and s1 == pytest.approx(2 / 3, abs=1e-15)
    zero = DirectMechanism((0.5, 1.0), np.zeros((2, 2)), np.zeros((2, 2)))
    assert [s for _, s in audit_payment_bound(zero, seq)] == [0.0, 0.0]


def test_prefix_table_layout(two_type):
    mech, seq = two_type
    U = prefix_utility_table(mech, seq)
    # type 1.0 reporting 0.5 for one round: 1.0 - 0.5
    assert U[0, 1, 1] == pytest.approx(0.5, abs=1e-15)
    assert np.all(U[:, :, 0] == 0.0)


def test_single_type_generator():
    seq = DiscountSequence.geometric(0.8, 4)
    m = random_compliant_mechanism([0.6], seq, seed=3)
    assert check_ic_pir(m, seq).compliant
    trivial = DirectMechanism((0.6,), np.ones((1, 4)), np.full((1, 4), 0.6))
    rep = check_ic_pir(trivial, seq)
    assert rep.compliant and rep.min_slack == pytest.approx(0.0, abs=1e-12)


def test_generator_is_deterministic():
    seq = DiscountSequence((1.0, 1.0))
    a = random_compliant_mechanism([0.5, 1.0], seq, seed=11)
    b = random_compliant_mechanism([0.5, 1.0], seq, seed=11)
    assert np.array_equal(a.alloc, b.alloc) and np.array_equal(a.pay, b.pay)
    assert check_ic_pir(a, seq).compliant


@pytest.mark.parametrize("seed", range(12))
def test_generated_mechanisms_pass_checker_and_audit(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(2, 6))
    T = int(rng.integers(1, 5))
    types = np.sort(rng.choice(np.arange(1, 11) / 10, size=n, replace=False))
    seq = DiscountSequence.geometric(float(rng.uniform(0.4, 1.0)), T)
    mech = random_compliant_mechanism(types, seq, seed)
    rep = check_ic_pir(mech, seq)
    assert rep.compliant
    _agree_with_brute(mech, seq, rep)
    assert all(s >= -1e-9 for _, s in audit_payment_bound(mech, seq))


@given(st.integers(0, 10_000), st.floats(1e-6, 0.5))
def test_payment_damage_is_exact(seed, x):
    """Raising pay[i, t] by x lowers exactly the slacks of true type i that count round t."""
    rng = np.random.default_rng(seed)
    seq = DiscountSequence.geometric(0.8, 3)
    types = (0.3, 0.6, 0.9)
    mech = random_compliant_mechanism(types, seq, seed)
    rep = check_ic_pir(mech, seq)
    i, t = int(rng.integers(3)), int(rng.integers(3))
    affected = np.concatenate(
        [rep.slacks[i, j, :].ravel() for j in range(3) if j != i] + [rep.slacks[i, i, : t + 1]]
    )
    pay = mech.pay.copy()
    pay[i, t] += x
    after = check_ic_pir(mech.with_payments(pay), seq)
    drop = seq.gamma[t] * x
    if drop > affected.min() + 2e-9:
        assert not after.compliant
    elif drop < affected.min() - 2e-9:
        assert after.compliant


def test_global_min_slack_does_not_decide_damage():
    # high type's deviation to the low report binds (global min slack 0), yet raising
    # the low type's first payment only makes that deviation less attractive
    seq = DiscountSequence((1.0, 1.0))
    mech = DirectMechanism((0.5, 1.0), np.array([[1.0, 0.0], [1.0, 1.0]]), np.array([[0.4, 0.0], [0.7, 0.7]]))
    rep = check_ic_pir(mech, seq)
    assert rep.compliant and rep.min_slack == pytest.approx(0.0, abs=1e-12)
    pay = mech.pay.copy()
    pay[0, 0] += 0.05
    assert check_ic_pir(mech.with_payments(pay), seq).compliant
    pay[0, 0] += 0.1
    assert not check_ic_pir(mech.with_payments(pay), seq).compliant
