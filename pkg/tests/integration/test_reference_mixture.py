import pytest

from vinstruct.data.datastore import content_hash, read_manifest, read_records, write_records
from vinstruct.data.mixture import compile_mixture, stats, subsample
from vinstruct.data.synthetic import REFERENCE_SIZES, scaled_size, write_reference_fixture
from vinstruct.sampling.batching import plan_batches


@pytest.fixture(scope="module")
def small_fixture(tmp_path_factory):
    return write_reference_fixture(tmp_path_factory.mktemp("reference"), scale=0.01, seed=0)


@pytest.fixture(scope="module")
def small_result(small_fixture):
    return compile_mixture(read_manifest(small_fixture.manifest_path))


def test_fixture_targets_follow_scale(small_fixture):
    for name, base in REFERENCE_SIZES.items():
        assert small_fixture.expected[name] == scaled_size(base, 0.01)
    assert small_fixture.total == sum(scaled_size(b, 0.01) for b in REFERENCE_SIZES.values())


def test_per_dataset_counts_are_exact(small_fixture, small_result):
    emitted = {d.name: d.emitted for d in small_result.datasets}
    assert emitted == small_fixture.expected
    assert small_result.total == small_fixture.total


def test_rules_actually_fire(small_result):
    rep = {d.name: d for d in small_result.datasets}
    assert rep["ocrvqa"].capped_away > 0
    assert rep["sharegpt"].filtered > 0
    assert rep["sharegpt"].truncated > 0
    assert rep["sharegpt"].dropped_by_truncation > 0
    assert rep["aokvqa"].emitted > rep["aokvqa"].raw_records
    assert rep["vqav2"].emitted < rep["vqav2"].raw_records


def test_compiled_records_survive_the_datastore(tmp_path, small_result):
    path = tmp_path / "mix.jsonl"
    digest = write_records(small_result.conversations, path)
    convs = read_records(path)
    assert convs == small_result.conversations
    assert content_hash(convs) == digest


def test_compile_hash_is_independent_of_jobs(small_fixture, small_result):
    manifest = read_manifest(small_fixture.manifest_path)
    parallel = compile_mixture(manifest, n_jobs=4)
    assert content_hash(parallel.conversations) == content_hash(small_result.conversations)


def test_stats_batches_and_subsample_on_compiled_mixture(small_fixture, small_result):
    convs = small_result.conversations
    st = stats(convs)
    assert st.per_source == dict(sorted(small_fixture.expected.items()))
    assert st.per_modality["text"] == small_fixture.expected["sharegpt"]

    plan = plan_batches(convs, batch_size=128, seed=0)
    assert sorted(plan.ids()) == sorted(c.id for c in convs)

    half = subsample(convs, 0.5, seed=0)
    assert len(half) == (len(convs) + 1) // 2


@pytest.mark.slow
def test_full_size_mixture_totals_665k(tmp_path):
    fixture = write_reference_fixture(tmp_path, scale=1.0, seed=0)
    result = compile_mixture(read_manifest(fixture.manifest_path), n_jobs=4)
    assert {d.name: d.emitted for d in result.datasets} == REFERENCE_SIZES
    assert result.total == 665_000
