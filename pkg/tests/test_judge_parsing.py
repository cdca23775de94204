import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvcot import BBox, JudgeVerdict
from gvcot.core import INSTRUCTION_CATEGORIES
from gvcot.errors import ParseFailure, UnknownCategory
from gvcot.judge import parse_box_response, parse_instruction_response, parse_score_response, serialize_verdict

from fuzzing import run_parser


def test_score_plain():
    v = parse_score_response('{"score": [7, 9], "reasoning": "ok"}')
    assert (v.score1, v.score2, v.reasoning) == (7, 9, "ok")
    assert v.diagnostics == ()


def test_score_fenced_and_prose():
    plain = parse_score_response('{"score": [7, 9], "reasoning": "ok"}')
    fenced = parse_score_response('Here you go:\n```json\n{"score": [7, 9], "reasoning": "ok"}\n```\nThanks.')
    assert fenced == plain


def test_score_clamped():
    v = parse_score_response('{"score": [12, -1], "reasoning": "too much"}')
    assert (v.score1, v.score2) == (10, 0)
    assert [d.code for d in v.diagnostics] == ["Clamped"]


def test_score_skips_objects_without_the_keys():
    v = parse_score_response('{"note": 1} {"score": [1, 2, 3], "reasoning": "x"} {"score": [4, 5], "reasoning": "y"}')
    assert (v.score1, v.score2, v.reasoning) == (4, 5, "y")


@pytest.mark.parametrize("text", [
    "", "no json here", '{"score": [7, 8], "reasoning": ""}', '{"score": [7, "8"], "reasoning": "x"}',
    '{"score": [true, 8], "reasoning": "x"}', '{"score": [7, 8]}', '{"score": [7, 8], "reasoning": "x"',
    '{"score": [NaN, 8], "reasoning": "x"}',
])
def test_score_failures_keep_text(text):
    with pytest.raises(ParseFailure) as info:
        parse_score_response(text)
    assert info.value.text == text


def test_score_non_text():
    with pytest.raises(ParseFailure):
        parse_score_response(None)


score_value = st.floats(0, 10, allow_nan=False) | st.integers(0, 10)


@settings(max_examples=300, deadline=None)
@given(score_value, score_value, st.text(min_size=1).filter(lambda s: s.strip()))
def test_score_serialize_round_trip(s1, s2, reasoning):
    v = JudgeVerdict(float(s1), float(s2), reasoning)
    back = parse_score_response(serialize_verdict(v))
    assert (back.score1, back.score2, back.reasoning) == (v.score1, v.score2, v.reasoning)
    assert back.diagnostics == ()


def _xml(t, i="Add a cat", r="Remove the cat"):
    return f"<result>\n<type> {t} </type>\n<instruction>\n{i}\n</instruction><reverse>{r}</reverse></result>"


def test_instruction_well_formed():
    t = parse_instruction_response("Sure.\n" + _xml("Add/Remove Object"))
    assert (t.edit_type, t.instruction, t.reverse) == ("Add/Remove Object", "Add a cat", "Remove the cat")


@pytest.mark.parametrize("cat", INSTRUCTION_CATEGORIES)
def test_instruction_all_categories(cat):
    assert parse_instruction_response(_xml(cat)).edit_type == cat


def test_instruction_whitespace_and_case_tolerant_category():
    assert parse_instruction_response(_xml("add / remove   object")).edit_type == "Add/Remove Object"


def test_instruction_entities_unescaped():
    t = parse_instruction_response(_xml("Color/Style Adjustment", "Make the cup &amp; plate blue", "undo"))
    assert t.instruction == "Make the cup & plate blue"


def test_instruction_missing_reverse():
    with pytest.raises(ParseFailure):
        parse_instruction_response("<result><type>Add/Remove Object</type><instruction>x</instruction></result>")


def test_instruction_unknown_category():
    with pytest.raises(UnknownCategory):
        parse_instruction_response(_xml("Style Transfer"))


@pytest.mark.parametrize("text", ["", "<result>", _xml("Add/Remove Object", i=" "), "<type>x</type>"])
def test_instruction_failures(text):
    with pytest.raises(ParseFailure):
        parse_instruction_response(text)


def test_boxes_single():
    boxes, diags = parse_box_response("[[0, 0, 100, 100]]", 100, 100)
    assert boxes == [BBox(0, 0, 100, 100)] and diags == []


def test_boxes_two():
    boxes, _ = parse_box_response("[[10,10,50,50],[60,60,90,90]]", 100, 100)
    assert boxes == [BBox(10, 10, 50, 50), BBox(60, 60, 90, 90)]


def test_boxes_bad_arity():
    boxes, diags = parse_box_response("[[10,10,50]]", 100, 100)
    assert boxes == [] and [d.code for d in diags] == ["MalformedEntry"]


def test_boxes_empty_list_allowed():
    assert parse_box_response("The answer is [].", 64, 64) == ([], [])


def test_boxes_decimals_truncated_and_normalized():
    boxes, _ = parse_box_response("```\n[[50.9, 40.2, 10.7, 5.99]]\n```", 64, 64)
    assert boxes == [BBox(10, 5, 50, 40)]


def test_boxes_flat_single_box():
    assert parse_box_response("[1, 2, 3, 4]", 64, 64)[0] == [BBox(1, 2, 3, 4)]


def test_boxes_mixed_entries_skip_and_report():
    boxes, diags = parse_box_response('[[1,2,3,4], "x", [1,2,3,"4"], [5,5,9,9]]', 64, 64)
    assert boxes == [BBox(1, 2, 3, 4), BBox(5, 5, 9, 9)]
    assert [d.code for d in diags] == ["MalformedEntry", "MalformedEntry"]


def test_boxes_out_of_frame_flagged():
    boxes, diags = parse_box_response("[[0, 0, 80, 10]]", 64, 64)
    assert boxes == [BBox(0, 0, 80, 10)] and [d.code for d in diags] == ["OutOfFrame"]


@pytest.mark.parametrize("text", ["", "none", "[[1, 2", "{}"])
def test_boxes_failures(text):
    with pytest.raises(ParseFailure):
        parse_box_response(text, 64, 64)


@pytest.mark.parametrize("fn", [parse_score_response, parse_instruction_response,
                                lambda t: parse_box_response(t, 64, 64)])
def test_fuzz_small(fn):
    tally = run_parser(fn, 3000, seed=1)
    assert tally["ok"] + tally["error"] == 3000
    assert tally["ok"] > 0 and tally["error"] > 0


@settings(max_examples=500, deadline=None)
@given(st.text())
def test_hypothesis_only_structured_errors(text):
    for fn in (parse_score_response, parse_instruction_response, lambda t: parse_box_response(t, 64, 64)):
        try:
            fn(text)
        except ParseFailure:
            pass


def test_deeply_nested_input_is_a_structured_error():
    text = "[" * 100000
    with pytest.raises(ParseFailure):
        parse_box_response(text, 64, 64)
    with pytest.raises(ParseFailure):
        parse_score_response("{" * 5000)
