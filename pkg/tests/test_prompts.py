"""Prompt construction is part of the wire contract: snapshot-tested."""

from __future__ import annotations

from pathlib import Path

import pytest

from ground3d import prompts
from ground3d.geometry import Box2D

GOLDEN_DIR = Path(__file__).parent / "golden" / "prompts"

SAMPLE_QUERY = "find the black table that is surrounded by four chairs"
SAMPLE_CATEGORIES = ["bed", "chair", "desk", "lamp", "monitor", "shelf",
                     "sofa", "stool", "table", "trash can"]
SAMPLE_ANCHORS = prompts.format_anchor_descriptions(
    [("A0", "chair", Box2D(12.0, 34.0, 56.0, 78.0)),
     ("A1", "lamp", Box2D(100.2, 5.7, 140.9, 60.1))]
)

CASES = {
    "category_parse.txt": lambda: prompts.build_category_parse_prompt(SAMPLE_QUERY, SAMPLE_CATEGORIES),
    "presence.txt": lambda: prompts.build_presence_prompt(SAMPLE_QUERY, SAMPLE_ANCHORS),
    "point.txt": lambda: prompts.build_point_prompt(SAMPLE_QUERY, SAMPLE_ANCHORS),
    "verify.txt": lambda: prompts.build_verify_prompt(SAMPLE_QUERY, SAMPLE_ANCHORS),
    "choice.txt": lambda: prompts.build_choice_prompt(SAMPLE_QUERY, 3),
    "invalid_id.txt": lambda: prompts.build_invalid_id_prompt(7),
    "wrong_format.txt": lambda: prompts.WRONG_FORMAT_PROMPT,
    "reflection.txt": lambda: prompts.REFLECTION_PROMPT,
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_prompt_matches_golden(name, regen_goldens):
    text = CASES[name]()
    path = GOLDEN_DIR / name
    if regen_goldens:
        GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        pytest.skip("golden regenerated")
    assert path.exists(), f"golden {name} missing; run pytest --regen-goldens"
    assert text == path.read_text()


def test_construction_is_byte_stable():
    for build in CASES.values():
        assert build() == build()


def test_substitutions_land():
    text = prompts.build_category_parse_prompt(SAMPLE_QUERY, SAMPLE_CATEGORIES)
    assert f"Query sentence: {SAMPLE_QUERY}" in text
    assert "Object category list: " + ", ".join(SAMPLE_CATEGORIES) in text
    choice = prompts.build_choice_prompt(SAMPLE_QUERY, 3)
    assert "images of 3 possible objects" in choice
    invalid = prompts.build_invalid_id_prompt(7)
    assert "The image_id 7 you selected does not exist" in invalid


def test_anchor_descriptions_formatting():
    assert SAMPLE_ANCHORS == "A0: chair at [12, 34, 56, 78]; A1: lamp at [100, 6, 141, 60]"
    assert prompts.format_anchor_descriptions([]) == ""
