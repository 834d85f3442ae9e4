import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmrl.automata import equivalent
from nmrl.core import Trace, TraceStore
from nmrl.edsm import (
    InconsistentSample,
    MergeState,
    build_pta,
    consistent_with,
    edsm_run,
    edsm_score,
    preprocess_and_learn,
    reference_fold,
    try_merge,
)
from nmrl.envs import ground_truth_dfa

S1 = ground_truth_dfa("S1")


def node(pta, word):
    return pta.words.index(tuple(word))


def complete_sample(dfa, max_len):
    return [(w, dfa.accepts(w), 1) for n in range(max_len + 1)
            for w in itertools.product(range(dfa.n_symbols), repeat=n)]


def random_samples(rng, n_symbols=3, n_words=12, max_len=7):
    """A labelled sample drawn from a random target, so it is always consistent."""
    from nmrl.automata import random_dfa

    target = random_dfa(rng.randint(1, 6), n_symbols, rng)
    words = {tuple(rng.randrange(n_symbols) for _ in range(rng.randint(0, max_len))) for _ in range(n_words)}
    return [(w, target.accepts(w), rng.randint(1, 2)) for w in sorted(words)]


def test_pta_small():
    pta = build_pta([((0, 2), True, 1), ((0,), False, 1), ((2,), False, 1)], 3)
    assert pta.n_nodes == 4
    assert pta.label(node(pta, (0, 2))) is True
    assert pta.label(node(pta, (0,))) is False


def test_pta_of_complete_s1_sample():
    pta = build_pta(complete_sample(S1, 6), 3)
    assert pta.n_nodes == sum(3 ** i for i in range(7)) == 1093


def test_pta_weights_and_prefix_negatives():
    pta = build_pta([((1, 1), False, 2)], 3)
    assert pta.neg[node(pta, (1, 1))] == 2
    assert pta.neg[node(pta, (1,))] == 2 and pta.neg[0] == 2
    no_prefix = build_pta([((1, 1), False, 2)], 3, prefix_negative=False)
    assert no_prefix.neg[node(no_prefix, (1,))] == 0


def test_pta_errors():
    with pytest.raises(InconsistentSample):
        build_pta([((1,), True, 1), ((1,), False, 1)], 3)
    with pytest.raises(ValueError):
        build_pta([((5,), True, 1)], 3)
    with pytest.raises(ValueError):
        build_pta([((1,), True, 0)], 3)


def test_merge_folds_grandchild_into_loop():
    pta = build_pta([((0, 0), False, 1)], 2)
    ms = MergeState(pta)
    assert ms.merge(0, node(pta, (0,)))
    aa = node(pta, (0, 0))
    assert ms.find(aa) == ms.find(0) == 0
    assert ms.to_dfa().step(0, 0) == 0


def test_incompatible_merge_is_transactional():
    pta = build_pta([((1,), True, 1), ((0,), False, 1)], 2)
    ms = MergeState(pta)
    before = ms.snapshot()
    assert ms.score(0, node(pta, (1,))) is None
    assert not ms.merge(0, node(pta, (1,)))
    assert ms.snapshot() == before
    assert try_merge(ms, 0, node(pta, (1,))) is None
    with pytest.raises(ValueError):
        try_merge(ms, 1, 2)


def test_score_counts_agreeing_pairs():
    # blue subtree mirrors the red side: 3 accepting and 2 rejecting pairs coincide
    words = []
    for tail, lab in [((0,), True), ((1,), True), ((0, 0), True), ((1, 1), False), ((0, 1), False)]:
        words.append(((0,) + tail, lab, 1))
        words.append(((1,) + tail, lab, 1))
    pta = build_pta(words, 2, prefix_negative=False)
    ms = MergeState(pta)
    ms.promote(node(pta, (0,)))
    assert edsm_score(ms, node(pta, (0,)), node(pta, (1,))) == 5


def test_score_zero_without_overlap():
    pta = build_pta([((0, 0), True, 1), ((1, 1), False, 1)], 2, prefix_negative=False)
    ms = MergeState(pta)
    assert ms.score(0, node(pta, (0,))) == 0


def test_weight_equals_duplicate_copies():
    one = [((0, 1), False, 2), ((0, 0), True, 1), ((1,), True, 1)]
    two = [((0, 1), False, 1), ((0, 1), False, 1), ((0, 0), True, 1), ((1,), True, 1)]
    a, b = MergeState(build_pta(one, 2)), MergeState(build_pta(two, 2))
    for blue in a.blue():
        assert a.score(0, blue) == b.score(0, blue)


def test_single_positive_word():
    d = edsm_run([((0, 1), True, 1)], 2)
    assert d.n_states == 3
    assert d.accepts((0, 1)) and d.accepts((1,)) and d.accepts((0, 0, 1))
    assert not d.accepts((0,)) and not d.accepts((0, 1, 1))


def test_only_empty_word_positive():
    d = edsm_run([((), True, 1)], 2)
    # one red state; the completion adds a rejecting sink for unseen moves
    assert d.accepts(()) and not d.accepts((0,)) and not d.accepts((1, 1))
    assert len(d.accepting) == 1


@pytest.mark.parametrize("scheme,length", [("S3", 7), ("S1", 10)])
def test_complete_sample_recovers_monitor(scheme, length):
    target = ground_truth_dfa(scheme)
    d = edsm_run(complete_sample(target, length), 3)
    assert equivalent(d, target) is None


def test_fold_matches_reference_on_random_ptas():
    rng = random.Random(7)
    checked = 0
    for _ in range(1000):
        pta = build_pta(random_samples(rng), 3, prefix_negative=rng.random() < 0.5)
        ms = MergeState(pta)
        blues = ms.blue()
        if not blues:
            continue
        b = rng.choice(blues)
        ref = reference_fold(pta, [[i] for i in range(pta.n_nodes)], 0, b)
        got = ms.merge(0, b)
        if ref is None:
            assert not got
            continue
        classes = {}
        for x in range(pta.n_nodes):
            classes.setdefault(ms.find(x), set()).add(x)
        assert sorted((frozenset(c) for c in classes.values()), key=min) == ref
        checked += 1
    assert checked > 100


@given(st.integers(0, 10**6))
def test_strong_consistency(seed):
    samples = random_samples(random.Random(seed))
    d = edsm_run(samples, 3, prefix_negative=False)
    assert consistent_with(d, samples, prefix_negative=False)


def noisy_store():
    """Short positives ending in arm 3 twice plus long negatives that never fire."""
    rng = random.Random(1)
    store = TraceStore(1)
    for n in range(2, 5):
        for w in itertools.product(range(3), repeat=n):
            if w[-2:] == (2, 2):
                store.close_episode(Trace(list(w), [(n, 0)]))
    for _ in range(300):
        store.close_episode(Trace([rng.randrange(3) for _ in range(48)], []))
    return store


def test_retry_halves_negative_cap_until_small():
    out = preprocess_and_learn(noisy_store(), 0, 3, max_states=5)
    assert out.ok and out.dfa.n_states <= 5
    assert out.limits == [48, 24, 12, 6, 3]
    assert all(s > 5 for s in out.sizes[:-1])


def test_retry_gives_up():
    out = preprocess_and_learn(noisy_store(), 0, 3, max_states=2, max_fail=3)
    assert not out.ok and out.attempts == 3 and out.limits == [48, 24, 12]
    floor = preprocess_and_learn(noisy_store(), 0, 3, max_states=2, max_fail=20)
    # the cap stops at the shortest positive length, well before 20 failures
    assert not floor.ok and floor.limits == [48, 24, 12, 6, 3, 2]


def test_small_result_returned_immediately():
    store = TraceStore(1)
    for w in ([0, 0, 0, 0, 2], [1, 0, 0, 0, 0, 2]):
        store.close_episode(Trace(w, [(len(w), 0)]))
    store.close_episode(Trace([0, 1, 2], []))
    out = preprocess_and_learn(store, 0, 3)
    assert out.ok and out.attempts == 1
