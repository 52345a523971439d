"""Prompt templates for the external LLM/VLM services.

These texts are part of the wire contract: construction must be
byte-stable, and the test suite pins every rendered prompt against golden
files. Edit only together with the goldens.
"""

from __future__ import annotations

CATEGORY_PARSE_PROMPT = """You are given a query sentence describing a target object in a 3D scene and a predefined Object category list.
Your task is to identify the target object category and select the top 10 most relevant object categories from the provided Object category list that best match the target object described in the query.

Instructions:
1. Target category
    A. Extract the single most accurate target object category from the query.
    B. The target category must appear exactly in the Object category list.
2. Spatial references
    A. Extract object categories that are mentioned only as spatial reference objects in the query (e.g., "to the left of the lamp").
    B. Store them as a list under spatial_refs.
    C. Do not treat spatial reference objects as target objects.
3. Top category candidates
    A. Select exactly 10 unique categories from the Object category list.
    B. Do not include duplicate categories, even if they appear multiple times in the list.
    C. Rank categories from highest to lowest relevance based on:
        - Semantic similarity to the target object
        - Common furniture taxonomy (parent / sibling categories)
        - Typical usage and visual similarity
    D. Categories must be chosen strictly from the Object category list. Do not invent, rename, or paraphrase categories.

Output format (STRICT):
1. Output only a valid JSON object.
2. Use exactly the following keys and structure:
- query (string)
- target_category (string)
- spatial_refs (list of strings)
- top_categories (list of 10 strings, ordered by relevance)
3. Do not add explanations, comments, or extra fields.

Output JSON Template:
{{
  "query": "<original query sentence>",
  "target_category": "<single category from Object category list>",
  "spatial_refs": ["<category_1>", "<category_2>", "..."],
  "top_categories": [
    "<category_1>",
    "<category_2>",
    "<category_3>",
    "<category_4>",
    "<category_5>",
    "<category_6>",
    "<category_7>",
    "<category_8>",
    "<category_9>",
    "<category_10>"
  ]
}}
Query sentence: {query}

Object category list: {obj_list}
"""

PRESENCE_PROMPT = """You are a JSON generator.
Return exactly ONE JSON object and nothing else (no markdown, no explanation).

Constraints:
- Presence must be exactly "Yes" or "No".
- If Presence == "No": point must be null.
- If Presence == "Yes": point must be [x, y] with integers (pixel coordinates of the object center).
- confidence must be a number between 0 and 1.
- Output must contain ONLY these 4 keys: Presence, point, confidence, Reasoning.

Query: {query}

Anchor IDs (may be empty): {object_ids_description}

Output JSON (example structure, fill with real values):
{{
  "Presence": "No",
  "point": null,
  "confidence": 0.0,
  "Reasoning": ""
}}
"""

POINT_PROMPT = """You are a precise Visual Grounding engine.
Your goal is to identify the TARGET and provide three distinct feedback points to define its spatial extent and boundaries.

Constraints:
- Presence: Exactly "Yes" or "No".
- Points Definition (If Presence == "Yes"):
    1. Positive Point 1 [x1, y1]: The GEOMETRIC CENTER of the target.
    2. Positive Point 2 [x2, y2]: A corner or boundary point (e.g., top-left) that defines the scale of the target.
    3. Negative Point [x3, y3]: A point clearly OUTSIDE the target's boundary, typically on a nearby distracting object or background, used to clarify the target's limits.
- Coordinates: Use NORMALIZED COORDINATES [0-1000] (where [0,0] is top-left and [1000,1000] is bottom-right).
- Confidence: A float between 0.0 and 1.0.
- Reasoning: You MUST first describe the visual appearance and surrounding context of the target to ensure you haven't confused it with similar nearby objects.

Query: {query}

Anchor IDs: {object_ids_description}

Return exactly ONE JSON object:
{{
  "Presence": "Yes",
  "positive_points": [[x1, y1], [x2, y2]],
  "negative_points": [[x3, y3]],
  "confidence": 0.95,
  "Reasoning": "Identified the [Target Name] based on its [Color/Shape]. Point 1 is the center, Point 2 is the top-left corner. The negative point is placed on the [Distractor Object] to distinguish the target from its background."
}}
"""

VERIFY_PROMPT = """Role: You are a visual reasoning assistant specializing in object verification and spatial relationships.
Task: Analyze the provided image and determine if the area marked by the green dots matches the user's query description.
Query: {query}

Anchor IDs: {object_ids_description}

Instructions:
- Identify the Surface: Determine what specific object or surface the green dots are physically touching (e.g., wall, floor, specific furniture).
- Evaluate Context: Check if the location matches the spatial clues in the query (e.g., "by the desk").
- Verify Object Type: Compare the material and function of the target object to the query (e.g., "wooden" vs. "plaster").
- Logical Consistency: Even if the location is correct, if the object type is missing or different, it is a mismatch.
Output Requirements: Provide a brief reasoning and a final JSON response.
Example:
{{
  "query_match": false,
  "target_object": "wall",
  "reasoning": "The green dots are placed on a plain white wall surface. While the location is adjacent to a desk/monitor area, there is no small wooden bookshelf visible at the coordinates indicated by the dots."
}}
"""

CHOICE_PROMPT = """Imagine you are in a room and you are asked to find one object.
Given a series of images and a query describing a specific object in the room, you need to analyze the images, and find an image that best fits the query.
Please note:
1. Each input image is a composite:
  - The left side displays perspective camera views from a sequence, where the target object is highlighted by a red rectangle.
  - The right side displays the BEV (Bird's-Eye View) map of the room, which represents the top-down spatial layout of the room.
2. Understanding the BEV Map: The red dots and arrows in the BEV map represent the camera's spatial position and its viewing direction (orientation) at the moment the left image was captured.
3. Spatial Correspondence: The red marker or arrow in the BEV map on the right corresponds to the specific object shown in the red boxes on the left.
4. Your Task: You must combine the visual appearance (from the left sub-images) with the spatial context (from the right BEV map, e.g., location in the room, proximity to walls or other furniture) to make your selection.

Your response should be in the following format, and it should not include code block markers such as ``` ***.

{{
  "process": "Explain the process of how you identified the room's features and located the target object",
  "image_id": 1 # Replace with the actual index based on the input order of images, starting from 0.
}}

Here is an example for you.

```
Input:
Query: Find the black table that is surrounded by four chairs.
Here are the images of 3 possible objects.
[image_0, image_1, image_2]

Output:
{{
  "process": "After carefully examining all the input images, I found only the tables in image_1, image_2 are black, but only the tables in image_2 is surrounded by four chairs. So the correct object is the table in image_2",
  "image_id": 2
}}

```

Here are some tips:
# Please follow the format of the example strictly
# If none match perfectly, choose the most plausible one.
# Only if the types of all objects are completely irrelevant with the query, output -1 in the value of image_id.

Query: {query}

Here are the images of {n_images} possible objects.
"""

IMAGE_ID_INVALID_PROMPT = (
    "The image_id {images_id} you selected does not exist. Did you perhaps see it "
    "incorrectly? Please reconsider and select another image. Remember to reply using "
    'JSON format with the two keys "process", "image_id" as required before.'
)

WRONG_FORMAT_PROMPT = (
    "The answer contains extra characters. Please follow the format of the example strictly."
)

REFLECTION_PROMPT = """Wait. You concluded that no image matches based on strict criteria.
However, object descriptions (especially shapes like 'trapezoidal prism') can be subjective or distorted by camera angles.

Please RE-EVALUATE the images with a slightly relaxed constraint:
1. Focus more on the **Object Category** (e.g., is it a trash can?) and **Color/Texture**.
2. Focus on the **Spatial Location** (e.g., right of the door).
3. Be tolerant of minor shape discrepancies.
If there is an image that is a STRONG match for category and location, select it even if the shape isn't perfect.
If you still strictly believe none match, return -1."""


def format_object_list(categories) -> str:
    return ", ".join(categories)


def format_anchor_descriptions(descriptions) -> str:
    """Render (label, category, box2d) anchor triples for the prompt slot.

    Boxes are rounded to whole pixels; an empty anchor list renders as an
    empty string (the prompts mark the slot as possibly empty).
    """
    parts = []
    for label, category, box in descriptions:
        coords = ", ".join(str(int(round(v))) for v in (box.x_min, box.y_min, box.x_max, box.y_max))
        parts.append(f"{label}: {category} at [{coords}]")
    return "; ".join(parts)


def build_category_parse_prompt(query: str, categories) -> str:
    return CATEGORY_PARSE_PROMPT.format(query=query, obj_list=format_object_list(categories))


def build_presence_prompt(query: str, anchor_text: str) -> str:
    return PRESENCE_PROMPT.format(query=query, object_ids_description=anchor_text)


def build_point_prompt(query: str, anchor_text: str) -> str:
    return POINT_PROMPT.format(query=query, object_ids_description=anchor_text)


def build_verify_prompt(query: str, anchor_text: str) -> str:
    return VERIFY_PROMPT.format(query=query, object_ids_description=anchor_text)


def build_choice_prompt(query: str, n_images: int) -> str:
    return CHOICE_PROMPT.format(query=query, n_images=n_images)


def build_invalid_id_prompt(images_id: int) -> str:
    return IMAGE_ID_INVALID_PROMPT.format(images_id=images_id)
