import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aoii.errors import AdmissibilityViolation, ParamError, RangeError
from aoii.model import Action, PenaltySpec, check_penalty, transition_distribution, validate

probs = st.floats(0.01, 1.0)


def test_reference_derived_quantities():
    p = validate(0.2, 0.9, 0.8)
    assert p.a == pytest.approx(0.26)
    assert p.p_f == pytest.approx(0.2)
    assert p.vartheta == pytest.approx(0.8 / 1.54)


@pytest.mark.parametrize("kw", [
    dict(alpha=0.0, beta=0.9, p_s=0.8), dict(alpha=1.0, beta=0.9, p_s=0.8),
    dict(alpha=0.2, beta=0.0, p_s=0.8), dict(alpha=0.2, beta=1.2, p_s=0.8),
    dict(alpha=0.2, beta=0.9, p_s=0.0), dict(alpha=0.2, beta=0.9, p_s=0.8, delta=0.0),
    dict(alpha=0.2, beta=0.9, p_s=0.8, delta=1.01), dict(alpha=math.nan, beta=0.9, p_s=0.8),
])
def test_out_of_range(kw):
    with pytest.raises(RangeError):
        validate(**kw)


def test_inadmissible_when_sending_does_not_help():
    # a = p_f beta + (1-beta) p_s >= beta as soon as p_s is small next to 1-beta
    with pytest.raises(AdmissibilityViolation):
        validate(0.2, 0.4, 0.3)


def test_beta_one_limit_is_admissible():
    p = validate(0.2, 1.0, 1.0)
    assert p.a == 0.0
    assert p.vartheta == pytest.approx(0.8 / 1.8)


@given(probs, probs, probs)
def test_kernel_rows_are_distributions(alpha, beta, p_s):
    try:
        p = validate(min(alpha, 0.99), beta, p_s)
    except AdmissibilityViolation:
        return
    for S in (0, 1, 7):
        for psi in Action:
            row = transition_distribution(S, psi, p)
            assert math.isclose(sum(pr for _, pr in row), 1.0)
            assert {n for n, _ in row} <= {0, S + 1} | ({1} if S == 0 else set())


def test_action_irrelevant_in_sync_state(ref_params):
    assert transition_distribution(0, Action.IDLE, ref_params) == transition_distribution(0, Action.TRANSMIT, ref_params)
    assert dict(transition_distribution(0, 1, ref_params))[1] == pytest.approx(0.8)


def test_transmit_growth_is_a(ref_params):
    assert dict(transition_distribution(4, Action.TRANSMIT, ref_params))[5] == pytest.approx(0.26)
    assert dict(transition_distribution(4, Action.IDLE, ref_params))[5] == pytest.approx(0.9)


def test_penalty_truncation_and_vectorization():
    spec = PenaltySpec.bounded_by(lambda S: np.minimum(np.asarray(S, float), 5.0), level=5.0,
                                  epsilon=0.5, name="clip")
    assert spec.s_thresh == 5 and spec.bounded and spec.kind == "bounded"
    assert spec(100) == 5.0
    assert list(spec.values([0, 3, 9])) == [0.0, 3.0, 5.0]


def test_scalar_only_function_is_vectorized_by_fallback():
    spec = PenaltySpec.unbounded(lambda S: math.log1p(S), k_probe=50)
    assert spec.values(np.arange(3)) == pytest.approx([0.0, math.log(2), math.log(3)])


def test_rejects_decreasing_or_negative_penalty():
    with pytest.raises(ParamError):
        PenaltySpec.unbounded(lambda S: -np.asarray(S, float), k_probe=10)
    with pytest.raises(ParamError):
        check_penalty(PenaltySpec(lambda S: np.sin(np.asarray(S, float)) + 2), k_probe=10)


def test_bounded_requires_level_or_thresh():
    with pytest.raises(ParamError):
        PenaltySpec.bounded_by(lambda S: S, level=None)
    with pytest.raises(ParamError):
        PenaltySpec.bounded_by(lambda S: 0.0 * S, level=1.0, search_limit=20)
