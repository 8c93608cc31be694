import numpy as np
import pytest

from atpo.core import (AtpoError, DifficultyCurves, RolloutTrace, SequenceState, StepRecord,
                       TrainConfig, Vocab, validate_plan, validate_prob)


def test_default_vocab_layout():
    v = Vocab()
    assert v.size == 14 and v.mask_id == 0 and v.pad_id == 1
    assert v.encode("0123456789") == list(range(2, 12))
    assert v.encode("+>") == [12, 13]
    assert v.decode([2, 3, 1, 0]) == "01_"


@pytest.mark.parametrize("kw", [dict(size=3), dict(mask_id=1, pad_id=1), dict(size=6)])
def test_bad_vocab(kw):
    with pytest.raises(AtpoError):
        Vocab(**kw)


def test_validate_prob():
    p = validate_prob([0.25] * 4)
    assert p.sum() == 1.0
    with pytest.raises(AtpoError) as e:
        validate_prob([0.5, 0.5, 0.1, -0.1])
    assert e.value.code == "NEGATIVE_ENTRY"
    with pytest.raises(AtpoError) as e:
        validate_prob([0.5, 0.4, 0.2, 0.0])
    assert e.value.code == "SUM_OUT_OF_TOLERANCE"


def test_validate_plan():
    plan = validate_plan([0, 4, 8], 8, 2)
    assert plan.num_segments == 2
    for bad, code in [(([0, 4, 4, 8], 8, 3), "NOT_STRICTLY_INCREASING"),
                      (([1, 4, 8], 8, 3), "BAD_ENDPOINTS"),
                      (([0, 2, 4, 8], 8, 2), "TOO_MANY_SEGMENTS")]:
        with pytest.raises(AtpoError) as e:
            validate_plan(*bad)
        assert e.value.code == code


def test_sequence_state_rejects_mask_in_prompt():
    with pytest.raises(AtpoError):
        SequenceState(np.array([0, 2]), np.array([0, 0]))
    s = SequenceState(np.array([2, 13]), np.array([0, 5, 0]))
    assert list(s.masked_positions) == [0, 2]


def _trace(L=4):
    steps = (StepRecord(1, 4, (0, 2), 1.0, 2.0), StepRecord(2, 2, (1, 3), 0.5, 1.5))
    return RolloutTrace(0, 0, 2, L, steps, (5, 6, 7, 8), (2, 13))


def test_trace_invariants():
    tr = _trace()
    assert list(tr.commit_step()) == [1, 2, 1, 2]
    assert list(tr.entering_masked(2)) == [1, 3]
    assert tr.entering_masked(3).size == 0
    with pytest.raises(AtpoError):
        RolloutTrace(0, 0, 2, 4, (StepRecord(1, 4, (0, 2), 1.0, 2.0),
                                  StepRecord(2, 2, (1, 2), 0.5, 1.5)), (5, 6, 7, 8))
    with pytest.raises(AtpoError):
        RolloutTrace(0, 0, 2, 4, (StepRecord(1, 4, (0,), 1.0, 2.0),
                                  StepRecord(2, 3, (1,), 0.5, 1.5)), (5, 6, 7, 8))
    with pytest.raises(AtpoError):  # inverse margin below 1
        RolloutTrace(0, 0, 1, 1, (StepRecord(1, 1, (0,), 1.0, 0.5),), (5,))


def test_curves_from_means_and_validation():
    c = DifficultyCurves.from_means([1.0, 1.5, 0.9], [1, 2, 3])
    np.testing.assert_allclose(c.roec, [0, 0.5, 0.6])
    with pytest.raises(AtpoError):
        DifficultyCurves([1.0], [1.0], [-1.0])
    with pytest.raises(AtpoError):
        DifficultyCurves([1.0, np.inf], [1.0, 1.0], [0, 0])


def test_config_validation_and_round_trip():
    c = TrainConfig()
    assert TrainConfig.from_dict(c.to_dict()) == c
    with pytest.raises(AtpoError) as e:
        TrainConfig.from_dict({"bogus": 1})
    assert e.value.code == "UNKNOWN_KEYS"
    for bad in (dict(N=5, T=4), dict(T=20, L=16), dict(group_size=1), dict(policy="x"), dict(clip_eps=0)):
        with pytest.raises(AtpoError):
            TrainConfig(**bad)
