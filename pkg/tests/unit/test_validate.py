import json

from vinstruct.data.rules import pairs_to_turns
from vinstruct.data.schema import Conversation, ImageRef, Turn
from vinstruct.data.validate import (
    chat_errors,
    conversation_errors,
    validate_records,
    write_report,
)


def make_valid_convs() -> list:
    img = ImageRef(ref="coco/1.jpg", width=640, height=480)
    return [
        Conversation(id="a1", source="vqav2", modality="visual", image=img,
                     turns=pairs_to_turns([("What is it?", "A dog.")])),
        Conversation(id="a2", source="sharegpt", modality="text",
                     turns=pairs_to_turns([("hi", "hello")])),
        Conversation(id="a3", source="textcaps", modality="visual", image=img,
                     turns=pairs_to_turns([("Caption?", "A bus.")])),
    ]


def test_valid_records_pass():
    result = validate_records(make_valid_convs(), dataset_name="sample")
    assert result.passed is True
    assert result.errors == []
    assert result.stats["records_total"] == 3
    assert result.stats["records_visual"] == 2
    assert result.stats["records_text"] == 1
    assert result.stats["id_unique"] is True


def test_duplicate_ids_fail():
    convs = make_valid_convs()
    convs.append(convs[0])
    result = validate_records(convs)
    assert result.passed is False
    assert result.stats["id_unique"] is False


def test_structural_errors_are_reported_per_record():
    bad = Conversation(id="b1", source="s", modality="text",
                       turns=(Turn(role="assistant", text="x"), Turn(role="human", text="y")))
    result = validate_records(make_valid_convs() + [bad])
    assert result.passed is False
    assert result.stats["invalid_records"] == 1
    assert result.errors[0].startswith("b1: turns:")


def test_conversation_errors_cover_each_rule():
    one_turn = Conversation(id="x", source="s", modality="text",
                            turns=(Turn(role="human", text="q"),))
    odd = Conversation(id="x", source="s", modality="text",
                       turns=pairs_to_turns([("q", "a")]) + (Turn(role="human", text="q2"),))
    no_image = Conversation(id="x", source="s", modality="visual",
                            turns=pairs_to_turns([("q", "a")]))
    assert conversation_errors(one_turn)
    assert conversation_errors(odd)
    assert not chat_errors(odd)
    assert [f for f, _ in conversation_errors(no_image)] == ["modality"]


def test_chat_errors_skip_only_the_parity_rule():
    odd = Conversation(id="x", source="s", modality="text",
                       turns=pairs_to_turns([("q", "a")]) + (Turn(role="human", text="q2"),))
    assert [f for f, _ in conversation_errors(odd)] == ["turns"]
    assert conversation_errors(odd, require_even=False) == []

    reply_first = Conversation(id="y", source="s", modality="text",
                               turns=(Turn(role="assistant", text="a"),
                                      Turn(role="human", text="q"),
                                      Turn(role="assistant", text="b")))
    assert chat_errors(reply_first) == [("turns", "first turn must be from human")]


def test_report_is_written(tmp_path):
    path = tmp_path / "reports" / "validation.json"
    validate_records(make_valid_convs(), dataset_name="sample", report_path=path)
    report = json.loads(path.read_text())
    assert report["passed"] is True
    assert report["meta"]["dataset_name"] == "sample"


def test_write_report_creates_parents(tmp_path):
    path = tmp_path / "a" / "b" / "report.json"
    write_report({"total": 3, "datasets": [{"name": "x", "emitted": 3}]}, path)
    assert json.loads(path.read_text()) == {"total": 3, "datasets": [{"name": "x", "emitted": 3}]}
