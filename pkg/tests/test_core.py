import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmrl.core import (
    AlphabetMode,
    Episode,
    Label,
    SymbolEncoder,
    Trace,
    TraceStore,
    Transition,
    read_abbadingo,
    record_step,
    write_abbadingo,
)


def closed(symbols, fires=()):
    t = Trace(list(symbols), [(i, 0) for i in fires])
    return t


def test_record_step_base_case():
    t = record_step(Trace(), 0, ())
    assert t.symbols == [0] and t.label(0) is Label.UNKNOWN


def test_record_step_positive_after_pattern():
    t = Trace([0, 0, 0, 0])
    record_step(t, 2, (0,))
    assert len(t) == 5 and t.label(0) is Label.POSITIVE
    assert t.firings(0) == (5,)


def test_filtered_step_leaves_trace():
    t = Trace([3, 3])
    record_step(t, None, ())
    assert t.symbols == [3, 3]


def test_prefix_labels():
    t = closed([0, 0, 0, 0, 2], fires=(5,))
    assert t.prefix_label(0, 5) is Label.POSITIVE
    assert all(t.prefix_label(0, n) is Label.NEGATIVE for n in range(1, 5))
    assert t.prefix_label(0, 6) is Label.UNKNOWN


def test_store_positive_and_prefix_rule():
    s = TraceStore(1)
    s.close_episode(closed([0, 0, 0, 0, 2], fires=(5,)))
    assert s.positives[0] == {(0, 0, 0, 0, 2): 1}
    assert not s.negatives[0]
    samples = s.samples(0)
    assert samples == [((0, 0, 0, 0, 2), True, 1)]


def test_duplicate_negative_gets_weight():
    s = TraceStore(1)
    s.close_episode(closed([1, 2]))
    s.close_episode(closed([1, 2]))
    assert len(s.negatives[0]) == 1
    assert s.samples(0) == [((1, 2), False, 2)]


def test_negative_fifo_eviction():
    s = TraceStore(1, neg_capacity=1000)
    for i in range(1001):
        s.close_episode(closed([i % 3] * (i // 3 + 1) + [i]))
    assert len(s.negatives[0]) == 1000
    assert (0, 0) not in s.negatives[0]  # the very first word was evicted
    with pytest.raises(ValueError):
        TraceStore(1, neg_capacity=0)


def test_truncated_negative_skips_firing_prefix():
    s = TraceStore(1)
    s.close_episode(closed([0, 0, 0, 0, 2, 1, 1], fires=(5,)))
    assert s.samples(0, max_neg_len=5) == [((0, 0, 0, 0, 2), True, 1)]
    got = sorted(s.samples(0, max_neg_len=3))
    assert ((0, 0, 0), False, 1) in got


def test_episode_add_records_trace():
    ep = Episode()
    ep.add(Transition(0, 1, -1.0, (), None, 0, False))
    ep.add(Transition(0, 2, -1.0, (0,), 2, 1, False))
    assert ep.trace.symbols == [2] and ep.trace.rewards == [(1, 0)]
    s = TraceStore(1)
    s.close_episode(ep)
    assert len(s.replay) == 1 and s.positives[0] == {(2,): 1}


def test_encoder_modes():
    e = SymbolEncoder(AlphabetMode.ACTION_STATE, 3, 4)
    assert e.n_symbols == 12 and e.decode(e.encode(2, 3)) == (2, 3)
    a = SymbolEncoder(AlphabetMode.ACTION_ONLY, 3, 4)
    assert a.encode(2, 3) == 2 and a.decode(2) == (2, None)
    with pytest.raises(ValueError):
        SymbolEncoder(AlphabetMode.ACTION_STATE, 7, 10**6)


sample_sets = st.lists(
    st.tuples(st.lists(st.integers(0, 2), max_size=6).map(tuple), st.booleans(), st.integers(1, 3)),
    max_size=12,
).map(lambda xs: list({(w, lab): (w, lab, n) for w, lab, n in xs}.values()))


@given(sample_sets)
def test_abbadingo_round_trip(samples):
    buf = io.StringIO()
    write_abbadingo(samples, 3, buf)
    buf.seek(0)
    back, k = read_abbadingo(buf)
    assert k == 3 and sorted(back) == sorted(samples)


@pytest.mark.parametrize("text", ["", "2 3\n1 1 0\n", "1 3\n1 2 0\n", "1 3\n2 1 0\n", "1 2\n1 1 5\n"])
def test_abbadingo_rejects_malformed(text):
    with pytest.raises(ValueError):
        read_abbadingo(io.StringIO(text))
