from collections import Counter

import numpy as np

import pytest

from vinstruct.data.rules import pairs_to_turns
from vinstruct.data.schema import Conversation, ImageRef
from vinstruct.sampling.batching import plan_batches


def make_mixture(n_visual: int, n_text: int) -> list:
    img = ImageRef(ref="x.jpg", width=10, height=10)
    convs = [
        Conversation(id=f"v{i}", source="vis", modality="visual", image=img,
                     turns=pairs_to_turns([("q", "a")]))
        for i in range(n_visual)
    ]
    convs += [
        Conversation(id=f"t{i}", source="txt", modality="text",
                     turns=pairs_to_turns([("q", "a")]))
        for i in range(n_text)
    ]
    return convs


def test_batches_are_modality_homogeneous():
    mixture = make_mixture(7, 5)
    modality = {c.id: c.modality for c in mixture}
    plan = plan_batches(mixture, batch_size=4, seed=0)
    for b in plan.batches:
        assert {modality[i] for i in b.ids} == {b.modality}


def test_batch_counts_follow_ceiling_division():
    plan = plan_batches(make_mixture(7, 5), batch_size=4, seed=0)
    counts = Counter(b.modality for b in plan.batches)
    assert counts == {"visual": 2, "text": 2}
    assert len(plan) == 4


def test_every_id_appears_exactly_once():
    mixture = make_mixture(53, 31)
    plan = plan_batches(mixture, batch_size=8, seed=11)
    assert sorted(plan.ids()) == sorted(c.id for c in mixture)
    assert [b.index for b in plan.batches] == list(range(len(plan)))


def test_random_mixtures_partition_into_homogeneous_batches():
    rng = np.random.default_rng(12)
    for n in range(1_000):
        n_visual, n_text = (int(x) for x in rng.integers(0, 61, size=2))
        if n_visual + n_text == 0:
            n_visual = 1
        batch_size = int(rng.integers(1, 17))
        mixture = make_mixture(n_visual, n_text)
        modality = {c.id: c.modality for c in mixture}

        plan = plan_batches(mixture, batch_size=batch_size, seed=n)
        for b in plan.batches:
            assert 1 <= len(b.ids) <= batch_size
            assert {modality[i] for i in b.ids} == {b.modality}
        assert sorted(plan.ids()) == sorted(modality)
        assert len(plan) == -(-n_visual // batch_size) + -(-n_text // batch_size)


def test_only_last_batch_of_each_modality_may_be_short():
    plan = plan_batches(make_mixture(53, 31), batch_size=8, seed=11)
    for modality in ("visual", "text"):
        sizes = [len(b.ids) for b in plan.batches if b.modality == modality]
        assert all(s == 8 for s in sizes[:-1])
        assert 1 <= sizes[-1] <= 8


def test_plan_is_deterministic_per_seed():
    mixture = make_mixture(40, 40)
    a = plan_batches(mixture, batch_size=4, seed=5)
    b = plan_batches(mixture, batch_size=4, seed=5)
    c = plan_batches(mixture, batch_size=4, seed=6)
    assert a == b
    assert a.batches != c.batches


def test_interleaving_mixes_modalities():
    plan = plan_batches(make_mixture(400, 400), batch_size=4, seed=0)
    order = [b.modality for b in plan.batches]
    # a sequential plan would switch modality exactly once
    switches = sum(1 for x, y in zip(order, order[1:]) if x != y)
    assert switches > 20


def test_single_modality_mixture():
    plan = plan_batches(make_mixture(0, 9), batch_size=4, seed=0)
    assert [len(b.ids) for b in plan.batches] == [4, 4, 1]
    assert {b.modality for b in plan.batches} == {"text"}


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        plan_batches(make_mixture(1, 1), batch_size=0, seed=0)
    with pytest.raises(ValueError):
        plan_batches([], batch_size=4, seed=0)
