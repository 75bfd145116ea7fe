import json
from pathlib import Path

import pytest

from vinstruct.cli import main
from vinstruct.data.datastore import read_records, write_records
from vinstruct.data.rules import pairs_to_turns
from vinstruct.data.schema import Conversation, ImageRef

ROOT = Path(__file__).resolve().parents[2]
CI_MANIFEST = ROOT / "configs" / "mixture_ci.yaml"

VIZWIZ = (
    "When the provided information is insufficient, respond with `Unanswerable'. "
    "Answer the question using a single word or phrase."
)


def run(capsys, *argv: str):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json(stdout: str) -> dict:
    return json.loads(stdout.strip().splitlines()[-1])


@pytest.fixture
def compiled(tmp_path, capsys) -> Path:
    out = tmp_path / "mix.jsonl"
    code, _, _ = run(capsys, "compile", "--manifest", str(CI_MANIFEST), "--out", str(out),
                     "--seed", "42")
    assert code == 0
    return out


def make_records(tmp_path: Path, n_visual: int, n_text: int) -> Path:
    img = ImageRef(ref="x.jpg", width=1000, height=600)
    convs = [
        Conversation(id=f"v{i}", source="vis", modality="visual", image=img,
                     turns=pairs_to_turns([("q", "a")]))
        for i in range(n_visual)
    ] + [
        Conversation(id=f"t{i}", source="txt", modality="text",
                     turns=pairs_to_turns([("q", "a")]))
        for i in range(n_text)
    ]
    path = tmp_path / "records.jsonl"
    write_records(convs, path)
    return path


# ---- plan ----


def test_plan_prints_table_and_record(capsys):
    code, out, _ = run(capsys, "plan", "--width", "1000", "--height", "600")
    assert code == 0
    assert "total tokens" in out
    rec = last_json(out)
    assert rec["tiling"]["grid"] == {"rows": 2, "cols": 3}
    assert rec["layout"]["total_tokens"] == 1726


def test_plan_single_tile(capsys):
    code, out, _ = run(capsys, "plan", "--width", "224", "--height", "224")
    assert code == 0
    rec = last_json(out)
    assert rec["tiling"]["grid"] == {"rows": 1, "cols": 1}
    assert rec["layout"]["total_tokens"] == 528


@pytest.mark.parametrize("argv", [
    ["plan", "--width", "0", "--height", "600"],
    ["plan", "--width", "abc", "--height", "600"],
    ["plan", "--width", "100", "--height", "100", "--tile-side", "100"],
    ["compile", "--manifest", "m.yaml", "--out", "o.jsonl"],
    ["frobnicate"],
])
def test_usage_errors_exit_1(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 1
    assert out == ""
    assert "error" in err


# ---- compile / stats ----


def test_compile_ci_manifest(tmp_path, capsys):
    out = tmp_path / "mix.jsonl"
    code, stdout, _ = run(capsys, "compile", "--manifest", str(CI_MANIFEST), "--out", str(out),
                          "--seed", "42")
    assert code == 0
    assert "total: 20" in stdout.splitlines()
    assert len(read_records(out)) == 20


def test_compile_is_reproducible(tmp_path, capsys):
    outputs = []
    for name in ("a.jsonl", "b.jsonl"):
        _, stdout, _ = run(capsys, "compile", "--manifest", str(CI_MANIFEST),
                           "--out", str(tmp_path / name), "--seed", "7", "--jobs", "2")
        outputs.append(stdout)
    assert outputs[0] == outputs[1]
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_compile_writes_report(tmp_path, capsys):
    report = tmp_path / "report.json"
    code, out, _ = run(capsys, "compile", "--manifest", str(CI_MANIFEST),
                       "--out", str(tmp_path / "mix.jsonl"), "--seed", "1", "--report", str(report))
    assert code == 0
    data = json.loads(report.read_text())
    assert data["total"] == 20
    sharegpt = next(d for d in data["datasets"] if d["name"] == "sharegpt")
    counts = (sharegpt["filtered"], sharegpt["truncated"], sharegpt["dropped_by_truncation"])
    assert counts == (1, 1, 1)
    assert f"sha256: {data['sha256']}" in out.splitlines()


def test_compile_bad_dataset_path_exits_2(tmp_path, capsys):
    manifest = tmp_path / "m.yaml"
    manifest.write_text(
        "seed: 1\ndatasets:\n  - name: x\n    kind: caption\n    path: missing.jsonl\n",
        encoding="utf-8",
    )
    code, out, _ = run(capsys, "compile", "--manifest", str(manifest),
                       "--out", str(tmp_path / "o.jsonl"), "--seed", "1")
    assert code == 2
    assert out == ""


def test_compile_schema_error_exits_2(tmp_path, capsys):
    manifest = tmp_path / "m.yaml"
    manifest.write_text("seed: 1\ndatasets: []\n", encoding="utf-8")
    code, _, err = run(capsys, "compile", "--manifest", str(manifest),
                       "--out", str(tmp_path / "o.jsonl"), "--seed", "1")
    assert code == 2
    assert "datasets" in err


def test_stats_reports_total(compiled, capsys):
    code, out, _ = run(capsys, "stats", "--in", str(compiled))
    assert code == 0
    lines = out.splitlines()
    assert "total: 20" in lines
    assert "visual: 17" in lines
    assert "text: 3" in lines
    assert last_json(out)["per_source"]["aokvqa"] == 7


def test_stats_output_is_stable(compiled, capsys):
    _, first, _ = run(capsys, "stats", "--in", str(compiled))
    _, second, _ = run(capsys, "stats", "--in", str(compiled))
    assert first == second


# ---- batches / subsample / budget / validate ----


def test_batches_on_twelve_records(tmp_path, capsys):
    path = make_records(tmp_path, 7, 5)
    code, out, _ = run(capsys, "batches", "--in", str(path), "--batch-size", "4", "--seed", "0")
    assert code == 0
    lines = out.splitlines()
    assert lines[-1] == "batches: 4 (visual=2, text=2)"
    batches = [json.loads(line) for line in lines[:-1]]
    assert sorted(i for b in batches for i in b["ids"]) == sorted(
        [f"v{i}" for i in range(7)] + [f"t{i}" for i in range(5)]
    )


def test_batches_requires_seed(tmp_path, capsys):
    path = make_records(tmp_path, 2, 2)
    code, _, _ = run(capsys, "batches", "--in", str(path), "--batch-size", "4")
    assert code == 1


def test_subsample_half(tmp_path, capsys):
    path = make_records(tmp_path, 600, 400)
    out = tmp_path / "half.jsonl"
    code, stdout, _ = run(capsys, "subsample", "--in", str(path), "--ratio", "0.5",
                          "--seed", "3", "--out", str(out))
    assert code == 0
    assert "kept: 500 of 1000" in stdout.splitlines()
    assert len(read_records(out)) == 500


def test_subsample_rejects_bad_ratio(tmp_path, capsys):
    path = make_records(tmp_path, 2, 2)
    code, _, _ = run(capsys, "subsample", "--in", str(path), "--ratio", "0",
                     "--seed", "3", "--out", str(tmp_path / "o.jsonl"))
    assert code == 1


def test_budget_counts_visual_records(tmp_path, capsys):
    path = make_records(tmp_path, 3, 2)
    per_record = tmp_path / "budget.jsonl"
    code, out, _ = run(capsys, "budget", "--in", str(path), "--out", str(per_record))
    assert code == 0
    summary = last_json(out)
    assert summary["images"] == 3
    assert summary["total_tokens"] == 3 * 1726
    assert len(per_record.read_text(encoding="utf-8").splitlines()) == 3


def test_validate_compiled_mixture(compiled, capsys):
    code, out, _ = run(capsys, "validate", "--in", str(compiled))
    assert code == 0
    assert out.splitlines()[-1] == "passed: true"


def test_validate_flags_duplicates(tmp_path, capsys):
    path = make_records(tmp_path, 2, 0)
    text = path.read_text(encoding="utf-8")
    path.write_text(text + text, encoding="utf-8")
    code, out, _ = run(capsys, "validate", "--in", str(path))
    assert code == 2
    assert out.splitlines()[-1] == "passed: false"


# ---- eval-prompt ----


def test_eval_prompt_vizwiz_verbatim(capsys):
    code, out, _ = run(capsys, "eval-prompt", "--benchmark", "VizWiz")
    assert code == 0
    assert out == VIZWIZ + "\n"


def test_eval_prompt_without_prompt_prints_nothing(capsys):
    code, out, _ = run(capsys, "eval-prompt", "--benchmark", "MM-Vet")
    assert code == 0
    assert out == ""


def test_eval_prompt_applies_to_question(capsys):
    code, out, _ = run(capsys, "eval-prompt", "--benchmark", "MMBench", "--question", "Which?")
    assert code == 0
    assert out == "Which?\nAnswer with the option's letter from the given choices directly.\n"


def test_eval_prompt_unknown_benchmark_exits_2(capsys):
    code, _, err = run(capsys, "eval-prompt", "--benchmark", "ImageNet")
    assert code == 2
    assert "ImageNet" in err


def test_eval_prompt_shipped_registry_matches_builtin(tmp_path, capsys):
    exported = tmp_path / "prompts.yaml"
    code, _, _ = run(capsys, "eval-prompt", "--list", "--export", str(exported))
    assert code == 0
    code, out, _ = run(capsys, "eval-prompt", "--benchmark", "VizWiz",
                       "--registry", str(ROOT / "configs" / "eval_prompts.yaml"))
    assert code == 0
    assert out == VIZWIZ + "\n"
