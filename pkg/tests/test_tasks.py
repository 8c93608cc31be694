import pytest
from hypothesis import given, strategies as st

from atpo.core import AtpoError, Vocab
from atpo.tasks import EVAL_OFFSET, generate, is_correct, make_instance, reward

V = Vocab()


def test_sort_and_sum_examples():
    inst = make_instance("sort", 0, "351204", "012345", 16, 8, V)
    assert inst.gold[:6] == tuple(V.encode("012345")) and set(inst.gold[6:]) == {V.pad_id}
    s = make_instance("sum", 0, "12+34", "046", 16, 8, V)
    assert V.decode(s.gold[:3]) == "046"


def test_generated_gold_is_correct():
    for inst in generate("sort", 50, 16, 0):
        digits = inst.prompt_text
        assert inst.gold_text == "".join(sorted(digits))
    for inst in generate("sum", 50, 16, 0):
        a, b = inst.prompt_text.split("+")
        assert int(inst.gold_text) == int(a) + int(b) and len(inst.gold_text) == 3
    for inst in generate("copy", 50, 16, 0):
        assert inst.gold_text == inst.prompt_text and len(inst.gold) == 16
        assert V.mask_id not in inst.prompt + inst.gold


def test_determinism_and_disjoint_ranges():
    assert generate("copy", 10, 16, 3) == generate("copy", 10, 16, 3)
    assert generate("copy", 10, 16, 3) != generate("copy", 10, 16, 4)
    a = generate("copy", 5, 16, 3, start=5)
    assert a == generate("copy", 10, 16, 3)[5:]
    assert generate("copy", 1, 16, 3, start=EVAL_OFFSET)[0].index == EVAL_OFFSET


def test_errors():
    with pytest.raises(AtpoError) as e:
        generate("copy", 1, 5, 0)
    assert e.value.code == "L_TOO_SMALL"
    with pytest.raises(AtpoError):
        generate("bogus", 1, 16, 0)


def test_reward_examples():
    inst = make_instance("sort", 0, "351204", "012345", 16, 8, V)
    assert reward(inst, inst.gold) == 1.0 and is_correct(inst, inst.gold)
    four = list(inst.gold)
    four[0], four[1] = four[1], four[0]
    assert reward(inst, four) == pytest.approx(0.5 * 4 / 6)
    assert not is_correct(inst, four)
    assert reward(inst, [V.encode("9")[0]] * 16) == 0.0


@given(st.lists(st.integers(0, 13), min_size=16, max_size=16))
def test_reward_range(comp):
    inst = generate("copy", 1, 16, 0)[0]
    r = reward(inst, comp)
    assert 0 <= r <= 1
    assert (r == 1.0) == is_correct(inst, comp)
