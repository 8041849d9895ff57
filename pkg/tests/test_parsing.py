"""Structured-output parsers: reference fixtures, edge cases, fuzz oracle."""

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from editloop.backends.parsing import (
    format_string_array,
    parse_consensus_text,
    parse_critique,
    parse_string_array,
)
from editloop.errors import ParseFailure

TEACUP_ANSWER = """[

"The colour of the teacup is changed to black.",

"The person's right hand makes a yay pose.",

"The environment is changed to a green meadow",

"Add a teapot",

"delete the clouds in the sky",

"add a rainbow in the sky"

]"""

CRITIQUE_EXAMPLES = [
    (
        '{\n    "score": 5,\n    "negative_prompt": "background changed",\n'
        '    "positive_prompt": "remove the dog clearly while keep other unchanged"\n}',
        5.0, "background changed", "remove the dog clearly while keep other unchanged",
    ),
    (
        '{\n    "score": 3,\n    "negative_prompt": "sun",\n'
        '    "positive_prompt": "add clouds in sky while keep other unchanged"\n}',
        3.0, "sun", "add clouds in sky while keep other unchanged",
    ),
    (
        '{\n    "score": 0,\n    "negative_prompt": "chrysanthemums",\n'
        '    "positive_prompt": "add some flowers in background in particular ornamental flower"\n}',
        0.0, "chrysanthemums", "add some flowers in background in particular ornamental flower",
    ),
]

AGGREGATOR_ANSWER = '{\n    "prompt": "shoes\'s must be red and not too large"\n}'


class TestStringArray:
    def test_reference_decomposition_block(self):
        items = parse_string_array(TEACUP_ANSWER)
        assert len(items) == 6
        assert items[0] == "The colour of the teacup is changed to black."
        assert items[-1] == "add a rainbow in the sky"

    def test_singleton(self):
        assert parse_string_array('["a"]') == ["a"]

    def test_prose_wrapped(self):
        assert parse_string_array('ok: ["x", "y"] thanks') == ["x", "y"]

    def test_empty_array_is_wellformed(self):
        assert parse_string_array("[]") == []

    def test_empty_element_rejected(self):
        with pytest.raises(ParseFailure):
            parse_string_array('["a", ""]')

    def test_no_array_rejected(self):
        with pytest.raises(ParseFailure):
            parse_string_array("no array here")

    def test_skips_malformed_candidates(self):
        assert parse_string_array('[1, 2] then ["real"]') == ["real"]

    def test_escaped_quotes(self):
        assert parse_string_array('["say \\"hi\\""]') == ['say "hi"']


def _reference_scan(text: str) -> list[str] | None:
    """Independent bracket-matching oracle for the array grammar."""
    for start, char in enumerate(text):
        if char != "[":
            continue
        i = start + 1
        items: list[str] = []
        ok = True
        expecting_item = False
        while True:
            while i < len(text) and text[i].isspace():
                i += 1
            if i >= len(text):
                ok = False
                break
            if text[i] == "]" and not (items and expecting_item):
                break
            if text[i] != '"':
                ok = False
                break
            piece = []
            i += 1
            closed = False
            while i < len(text):
                if text[i] == "\\" and i + 1 < len(text):
                    nxt = text[i + 1]
                    piece.append({"n": "\n", "t": "\t", "r": "\r"}.get(nxt, nxt))
                    i += 2
                    continue
                if text[i] == '"':
                    closed = True
                    i += 1
                    break
                piece.append(text[i])
                i += 1
            if not closed:
                ok = False
                break
            items.append("".join(piece))
            expecting_item = False
            while i < len(text) and text[i].isspace():
                i += 1
            if i < len(text) and text[i] == ",":
                i += 1
                expecting_item = False
                continue
            if i < len(text) and text[i] == "]":
                break
            ok = False
            break
        if ok and i < len(text):
            return items
    return None


def _fuzz_case(rng: random.Random) -> str:
    """Prose with zero or more array-ish regions, some malformed."""
    words = ["plan", "steps", "output", "tasks", "note", "ok", "->"]
    parts: list[str] = []
    for _ in range(rng.randint(0, 4)):
        parts.append(rng.choice(words))
    for _ in range(rng.randint(0, 2)):
        if rng.random() < 0.4:  # malformed fragment
            parts.append(rng.choice(["[broken", "[1, 2]", '["a",', "[]x"]))
        n = rng.randint(0, 3)
        items = [
            '"%s"' % "".join(rng.choice("abc xyz") for _ in range(rng.randint(1, 5)))
            for _ in range(n)
        ]
        sep = rng.choice([", ", ",\n ", " , "])
        parts.append("[" + sep.join(items) + "]")
        parts.append(rng.choice(words))
    return " ".join(parts)


def test_fuzz_corpus_matches_reference_scanner():
    rng = random.Random(20259)
    checked = 0
    for _ in range(50):
        text = _fuzz_case(rng)
        expected = _reference_scan(text)
        if expected is None or any(not e.strip() for e in expected):
            with pytest.raises(ParseFailure):
                parse_string_array(text)
        else:
            assert parse_string_array(text) == expected
        checked += 1
    assert checked == 50


@given(
    st.lists(
        st.text(
            alphabet=st.characters(blacklist_characters='"\\', min_codepoint=32, max_codepoint=126),
            min_size=1,
        ).filter(lambda s: s.strip()),
        min_size=0,
        max_size=8,
    )
)
def test_roundtrip_canonical_serializer(items):
    assert parse_string_array(format_string_array(items)) == items


class TestCritique:
    @pytest.mark.parametrize("text,score,negative,positive", CRITIQUE_EXAMPLES)
    def test_reference_examples(self, text, score, negative, positive):
        critique = parse_critique(text)
        assert critique.score == score
        assert critique.negative == negative
        assert critique.positive == positive
        assert not critique.score_clamped

    def test_minimal_object(self):
        critique = parse_critique('{"score":0,"negative_prompt":"x","positive_prompt":"y"}')
        assert (critique.score, critique.negative, critique.positive) == (0.0, "x", "y")

    def test_none_negative_maps_to_empty(self):
        critique = parse_critique('{"score":9,"negative_prompt":"None","positive_prompt":"good"}')
        assert critique.negative == ""

    def test_overrange_score_clamped_with_flag(self):
        critique = parse_critique('{"score":12,"negative_prompt":"x","positive_prompt":"y"}')
        assert critique.score == 10.0
        assert critique.score_clamped

    def test_negative_score_clamped(self):
        critique = parse_critique('{"score":-3,"negative_prompt":"x","positive_prompt":"y"}')
        assert critique.score == 0.0
        assert critique.score_clamped

    def test_prose_wrapped_object(self):
        text = "Here is my verdict:\n" + CRITIQUE_EXAMPLES[0][0] + "\nthanks"
        assert parse_critique(text).score == 5.0

    def test_missing_key_rejected(self):
        with pytest.raises(ParseFailure):
            parse_critique('{"score": 5, "negative_prompt": "x"}')

    def test_numeric_string_score_accepted(self):
        assert parse_critique('{"score":"7","negative_prompt":"","positive_prompt":""}').score == 7.0

    def test_no_object_rejected(self):
        with pytest.raises(ParseFailure):
            parse_critique("score: 5/10, looks fine")


class TestConsensus:
    def test_reference_example(self):
        assert parse_consensus_text(AGGREGATOR_ANSWER) == "shoes's must be red and not too large"

    def test_empty_prompt_accepted(self):
        assert parse_consensus_text('{"prompt":""}') == ""

    def test_prose_wrapped(self):
        text = "Summary follows. " + json.dumps({"prompt": "keep it red"}) + " done."
        assert parse_consensus_text(text) == "keep it red"

    def test_missing_prompt_rejected(self):
        with pytest.raises(ParseFailure):
            parse_consensus_text('{"answer": "x"}')

    def test_fuzz_prose_wrapping(self):
        rng = random.Random(7)
        for _ in range(50):
            payload = "".join(rng.choice("abc def") for _ in range(rng.randint(0, 12)))
            noise = "".join(rng.choice("{[ ok}") for _ in range(rng.randint(0, 6)))
            text = f"{noise} result {json.dumps({'prompt': payload})} tail"
            assert parse_consensus_text(text) == payload
