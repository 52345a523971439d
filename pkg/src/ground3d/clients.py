"""Typed clients for the four external model roles.

One wire contract serves every role: ``POST <base>/v1/<role>`` with a JSON
body, images as base64 PNG, masks run-length encoded (see
:mod:`ground3d.masks`). Roles are ``parser`` (query parsing LLM),
``embedder`` (text/image encoder), ``segmenter`` (2D segmentation), and
``vlm`` (visual reasoning).

Backends come in two flavors selected by ``MCM_BACKEND``:

* ``live`` - HTTP via the per-role URLs ``MCM_PARSER_URL``,
  ``MCM_EMBEDDER_URL``, ``MCM_SEGMENTER_URL``, ``MCM_VLM_URL`` (optional
  bearer token ``MCM_API_TOKEN``).
* ``mock:<fixtures-dir>`` - a directory of JSON files keyed by the SHA-256
  of the canonicalized request (sorted keys, no whitespace). Unknown keys
  yield role-specific defaults, so mock runs are pure functions of the
  request stream.

Same-request retries after malformed replies carry an ``attempt`` counter
in the body so scripted mocks can answer each attempt differently.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from . import prompts
from .errors import (
    DimensionDrift,
    InvalidInput,
    OutOfBoundsPoint,
    ParseFailure,
    RefusalOrExhausted,
    ServiceError,
)
from .geometry import Box2D
from .masks import decode_rle
from .rendering import encode_png

ROLE_PARSER = "parser"
ROLE_EMBEDDER = "embedder"
ROLE_SEGMENTER = "segmenter"
ROLE_VLM = "vlm"

PARSE_RETRIES = 1  # extra attempts after a malformed JSON reply
INVALID_ID_RETRIES = 2
WRONG_FORMAT_RETRIES = 2
REFLECTION_RETRIES = 1
TRANSPORT_ATTEMPTS = 3
TRANSPORT_BACKOFF = (0.5, 1.0)  # seconds before attempt 2 and 3
DEFAULT_INFLIGHT_CAP = 4
MOCK_EMBEDDING_DIM = 16


def canonical_json(body: dict) -> str:
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def request_key(body: dict) -> str:
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


def image_b64(img: np.ndarray) -> str:
    return base64.b64encode(encode_png(img)).decode("ascii")


# --- result types -------------------------------------------------------------

@dataclass(frozen=True)
class QueryParse:
    query: str
    target_category: str
    spatial_refs: tuple[str, ...]
    top_categories: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "query": self.query,
            "target_category": self.target_category,
            "spatial_refs": list(self.spatial_refs),
            "top_categories": list(self.top_categories),
        }


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class Detection2D:
    box: Box2D
    score: float
    mask: np.ndarray | None = None


@dataclass(frozen=True)
class PresenceResult:
    presence: bool
    point: tuple[float, float] | None
    confidence: float
    reasoning: str


@dataclass(frozen=True)
class PointPromptResult:
    presence: bool
    positive_points: tuple[tuple[float, float], ...]
    negative_points: tuple[tuple[float, float], ...]
    confidence: float
    reasoning: str


@dataclass(frozen=True)
class VerifyResult:
    query_match: bool
    target_object: str
    reasoning: str


@dataclass(frozen=True)
class ChoiceResult:
    process: str
    image_id: int


@dataclass(frozen=True)
class ChoiceOutcome:
    result: ChoiceResult
    retries: dict
    exchanges: tuple[dict, ...]


# --- request builders (shared with tests that author fixtures) ----------------

def parse_query_request(query: str, categories, attempt: int = 0) -> dict:
    return {
        "op": "parse_query",
        "prompt": prompts.build_category_parse_prompt(query, categories),
        "attempt": attempt,
    }


def embed_text_request(text: str) -> dict:
    return {"op": "embed_text", "text": text}


def embed_image_request(image: np.ndarray) -> dict:
    return {"op": "embed_image", "image_png": image_b64(image)}


def segment_by_text_request(image: np.ndarray, text_prompt: str) -> dict:
    return {"op": "segment_by_text", "image_png": image_b64(image), "text_prompt": text_prompt}


def segment_by_points_request(image, positive_points, negative_points) -> dict:
    return {
        "op": "segment_by_points",
        "image_png": image_b64(image),
        "positive_points": [[float(x), float(y)] for x, y in positive_points],
        "negative_points": [[float(x), float(y)] for x, y in negative_points],
    }


def vlm_single_request(op: str, prompt: str, image: np.ndarray, attempt: int = 0) -> dict:
    return {"op": op, "prompt": prompt, "images_png": [image_b64(image)], "attempt": attempt}


def choose_image_request(images_b64: list[str], messages: list[dict]) -> dict:
    return {"op": "choose_image", "images_png": images_b64, "messages": messages}


# --- transports ----------------------------------------------------------------

class Transport:
    """Posts a JSON body to a role endpoint and returns the JSON reply.

    Keeps a simple per-role request counter for cost bookkeeping.
    """

    def __init__(self):
        self.request_counts: dict[str, int] = {}

    def count(self, role: str) -> None:
        self.request_counts[role] = self.request_counts.get(role, 0) + 1

    def post(self, role: str, body: dict) -> dict:
        raise NotImplementedError


class LiveTransport(Transport):
    def __init__(self, urls: dict, token: str | None = None,
                 timeout: float = 60.0, inflight_cap: int = DEFAULT_INFLIGHT_CAP):
        super().__init__()
        self.urls = dict(urls)
        self.token = token
        self.timeout = timeout
        self._slots = threading.Semaphore(inflight_cap)

    def post(self, role: str, body: dict) -> dict:
        self.count(role)
        base = self.urls.get(role)
        if not base:
            raise ServiceError(f"no URL configured for role {role!r}")
        url = f"{base.rstrip('/')}/v1/{role}"
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        payload = canonical_json(body)
        last_error = None
        with self._slots:
            for attempt in range(TRANSPORT_ATTEMPTS):
                if attempt > 0:
                    time.sleep(TRANSPORT_BACKOFF[attempt - 1])
                try:
                    resp = requests.post(url, data=payload, headers=headers, timeout=self.timeout)
                except requests.RequestException as exc:
                    last_error = exc
                    continue
                if resp.status_code >= 500:
                    last_error = ServiceError(f"{role}: HTTP {resp.status_code}")
                    continue
                if resp.status_code != 200:
                    raise ServiceError(f"{role}: HTTP {resp.status_code}")
                try:
                    reply = resp.json()
                except ValueError as exc:
                    raise ServiceError(f"{role}: non-JSON reply") from exc
                if not isinstance(reply, dict):
                    raise ServiceError(f"{role}: reply is not a JSON object")
                return reply
        raise ServiceError(f"{role}: transport failed after {TRANSPORT_ATTEMPTS} attempts") from (
            last_error if isinstance(last_error, Exception) else None
        )


class FixtureStore:
    """Read/write access to a mock fixtures directory."""

    def __init__(self, root):
        self.root = Path(root)

    def get(self, body: dict) -> dict | None:
        path = self.root / f"{request_key(body)}.json"
        if not path.exists():
            return None
        with open(path) as fh:
            return json.load(fh)

    def put(self, body: dict, response: dict) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / f"{request_key(body)}.json"
        with open(path, "w") as fh:
            json.dump(response, fh, sort_keys=True)
        return path


def _mock_embedding(body: dict) -> dict:
    seed = int(request_key(body)[:16], 16)
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(MOCK_EMBEDDING_DIM)
    vec = vec / np.linalg.norm(vec)
    return {"dimension": MOCK_EMBEDDING_DIM, "values": [float(x) for x in vec]}


_NO_PRESENCE = json.dumps(
    {"Presence": "No", "point": None, "confidence": 0.0, "Reasoning": ""}
)
_NO_POINTS = json.dumps(
    {"Presence": "No", "positive_points": [], "negative_points": [], "confidence": 0.0, "Reasoning": ""}
)
_NO_MATCH = json.dumps({"query_match": False, "target_object": "", "reasoning": ""})
_PICK_FIRST = json.dumps({"process": "", "image_id": 0})


def default_mock_response(role: str, body: dict) -> dict:
    """Answer for a request with no recorded fixture."""
    op = body.get("op", "")
    if role == ROLE_PARSER:
        return {"content": ""}
    if role == ROLE_EMBEDDER:
        return _mock_embedding(body)
    if role == ROLE_SEGMENTER:
        return {"detections": []}
    if role == ROLE_VLM:
        if op == "presence_check":
            return {"content": _NO_PRESENCE}
        if op == "point_prompt":
            return {"content": _NO_POINTS}
        if op == "verify_points":
            return {"content": _NO_MATCH}
        if op == "choose_image":
            return {"content": _PICK_FIRST}
    raise ServiceError(f"mock backend has no default for role {role!r} op {op!r}")


class MockTransport(Transport):
    def __init__(self, fixtures_dir):
        super().__init__()
        self.store = FixtureStore(fixtures_dir)

    def post(self, role: str, body: dict) -> dict:
        self.count(role)
        recorded = self.store.get(body)
        if recorded is not None:
            return recorded
        return default_mock_response(role, body)


def transport_from_env(environ=None) -> Transport:
    env = os.environ if environ is None else environ
    backend = env.get("MCM_BACKEND", "live")
    if backend == "live":
        urls = {
            ROLE_PARSER: env.get("MCM_PARSER_URL", ""),
            ROLE_EMBEDDER: env.get("MCM_EMBEDDER_URL", ""),
            ROLE_SEGMENTER: env.get("MCM_SEGMENTER_URL", ""),
            ROLE_VLM: env.get("MCM_VLM_URL", ""),
        }
        return LiveTransport(urls, token=env.get("MCM_API_TOKEN"))
    if backend.startswith("mock:"):
        fixtures = backend.split(":", 1)[1]
        if not fixtures:
            raise ValueError("MCM_BACKEND=mock:<fixtures-dir> needs a directory")
        return MockTransport(fixtures)
    raise ValueError(f"unsupported MCM_BACKEND value: {backend!r}")


# --- role clients ----------------------------------------------------------------

def _reply_content(reply: dict, role: str) -> str:
    content = reply.get("content")
    if not isinstance(content, str):
        raise ServiceError(f"{role}: reply lacks a string 'content' field")
    return content


def _strict_json_object(text: str) -> dict:
    try:
        obj = json.loads(text)
    except (ValueError, TypeError) as exc:
        raise ParseFailure(f"reply is not valid JSON: {text[:80]!r}") from exc
    if not isinstance(obj, dict):
        raise ParseFailure("reply JSON is not an object")
    return obj


class QueryParserClient:
    def __init__(self, transport: Transport):
        self.transport = transport

    def parse_query(self, query: str, category_list) -> QueryParse:
        """Extract target/anchor/top-10 categories from a free-form query."""
        categories = list(category_list)
        if not categories:
            raise InvalidInput("category list must be non-empty")
        last = None
        for attempt in range(PARSE_RETRIES + 1):
            body = parse_query_request(query, categories, attempt)
            reply = self.transport.post(ROLE_PARSER, body)
            try:
                return self._validate(query, categories, _reply_content(reply, ROLE_PARSER))
            except ParseFailure as exc:
                last = exc
        raise ParseFailure(f"query parse failed after retry: {last}")

    @staticmethod
    def _validate(query: str, categories, content: str) -> QueryParse:
        obj = _strict_json_object(content)
        for key in ("target_category", "spatial_refs", "top_categories"):
            if key not in obj:
                raise ParseFailure(f"reply missing {key!r}")
        top = obj["top_categories"]
        if not isinstance(top, list) or len(top) != 10:
            raise ParseFailure("top_categories must hold exactly 10 entries")
        if len(set(top)) != 10:
            raise ParseFailure("top_categories contains duplicates")
        known = set(categories)
        for cat in top:
            if cat not in known:
                raise ParseFailure(f"top category {cat!r} not in the supplied list")
        refs = obj["spatial_refs"]
        if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
            raise ParseFailure("spatial_refs must be a list of strings")
        return QueryParse(
            query=query,
            target_category=str(obj["target_category"]),
            spatial_refs=tuple(refs),
            top_categories=tuple(str(c) for c in top),
        )


class EmbedderClient:
    def __init__(self, transport: Transport):
        self.transport = transport
        self._dimension: int | None = None
        self._lock = threading.Lock()

    def _finish(self, reply: dict) -> EmbeddingVector:
        values = np.asarray(reply.get("values", []), dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ServiceError("embedder reply lacks a flat 'values' vector")
        if not np.all(np.isfinite(values)):
            raise ServiceError("embedding contains non-finite values")
        declared = reply.get("dimension", values.size)
        if int(declared) != values.size:
            raise ServiceError("embedding length differs from declared dimension")
        with self._lock:
            if self._dimension is None:
                self._dimension = values.size
            elif self._dimension != values.size:
                raise DimensionDrift(
                    f"embedding dimension changed from {self._dimension} to {values.size}"
                )
        return EmbeddingVector(values)

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            raise InvalidInput("cannot embed empty text")
        return self._finish(self.transport.post(ROLE_EMBEDDER, embed_text_request(text)))

    def embed_image(self, crop: np.ndarray) -> EmbeddingVector:
        crop = np.asarray(crop)
        if crop.size == 0:
            raise InvalidInput("cannot embed an empty crop")
        return self._finish(self.transport.post(ROLE_EMBEDDER, embed_image_request(crop)))


def _parse_detections(reply: dict, image_shape, mask_required: bool) -> list[Detection2D]:
    raw = reply.get("detections")
    if not isinstance(raw, list):
        raise ServiceError("segmenter reply lacks a 'detections' list")
    detections = []
    for entry in raw:
        try:
            x0, y0, x1, y1 = (float(v) for v in entry["box"])
            score = float(entry["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ServiceError(f"malformed detection entry: {entry!r}") from exc
        if not 0.0 <= score <= 1.0:
            raise ServiceError(f"detection score {score} outside [0, 1]")
        mask = None
        if entry.get("mask_rle") is not None:
            try:
                mask = decode_rle(entry["mask_rle"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ServiceError("malformed detection mask RLE") from exc
            if mask.shape != tuple(image_shape):
                raise ServiceError(
                    f"detection mask {mask.shape} differs from image {tuple(image_shape)}"
                )
        elif mask_required:
            raise ServiceError("point-prompted detection is missing its mask")
        detections.append(Detection2D(Box2D(x0, y0, x1, y1), score, mask))
    return detections


class SegmenterClient:
    def __init__(self, transport: Transport):
        self.transport = transport

    def segment_by_text(self, image: np.ndarray, text_prompt: str) -> list[Detection2D]:
        """Open-vocabulary detection; an empty list is a valid answer."""
        reply = self.transport.post(ROLE_SEGMENTER, segment_by_text_request(image, text_prompt))
        return _parse_detections(reply, image.shape[:2], mask_required=False)

    def segment_by_points(self, image: np.ndarray, positive_points, negative_points=()) -> list[Detection2D]:
        """Point-prompted segmentation; every detection carries a mask."""
        height, width = image.shape[:2]
        positive = [tuple(p) for p in positive_points]
        negative = [tuple(p) for p in negative_points]
        if not positive:
            raise InvalidInput("at least one positive point is required")
        for x, y in positive + negative:
            # inclusive upper edge: normalized 1000 maps exactly onto (W, H)
            if not (0.0 <= x <= width and 0.0 <= y <= height):
                raise OutOfBoundsPoint(f"point ({x}, {y}) outside {width}x{height} image")
        body = segment_by_points_request(image, positive, negative)
        reply = self.transport.post(ROLE_SEGMENTER, body)
        return _parse_detections(reply, image.shape[:2], mask_required=True)


class VlmClient:
    def __init__(self, transport: Transport):
        self.transport = transport

    def _single(self, op: str, prompt: str, image: np.ndarray, parse):
        last = None
        for attempt in range(PARSE_RETRIES + 1):
            body = vlm_single_request(op, prompt, image, attempt)
            reply = self.transport.post(ROLE_VLM, body)
            try:
                return parse(_reply_content(reply, ROLE_VLM))
            except ParseFailure as exc:
                last = exc
        raise ParseFailure(f"{op} failed after retry: {last}")

    def presence_check(self, image: np.ndarray, query: str, anchor_text: str) -> PresenceResult:
        prompt = prompts.build_presence_prompt(query, anchor_text)

        def parse(content: str) -> PresenceResult:
            obj = _strict_json_object(content)
            if set(obj.keys()) != {"Presence", "point", "confidence", "Reasoning"}:
                raise ParseFailure(f"presence reply keys {sorted(obj)} != expected 4")
            presence = obj["Presence"]
            if presence not in ("Yes", "No"):
                raise ParseFailure(f"Presence must be Yes/No, got {presence!r}")
            point = obj["point"]
            if presence == "No" and point is not None:
                raise ParseFailure("Presence No must carry a null point")
            parsed_point = None
            if point is not None:
                parsed_point = (float(point[0]), float(point[1]))
            return PresenceResult(
                presence == "Yes", parsed_point, float(obj["confidence"]), str(obj["Reasoning"])
            )

        return self._single("presence_check", prompt, image, parse)

    def point_prompt(self, image: np.ndarray, query: str, anchor_text: str) -> PointPromptResult:
        prompt = prompts.build_point_prompt(query, anchor_text)
        height, width = image.shape[:2]

        def rescale(pairs) -> tuple[tuple[float, float], ...]:
            return tuple((float(x) / 1000.0 * width, float(y) / 1000.0 * height) for x, y in pairs)

        def parse(content: str) -> PointPromptResult:
            obj = _strict_json_object(content)
            required = {"Presence", "positive_points", "negative_points", "confidence", "Reasoning"}
            if set(obj.keys()) != required:
                raise ParseFailure(f"point reply keys {sorted(obj)} unexpected")
            presence = obj["Presence"]
            if presence not in ("Yes", "No"):
                raise ParseFailure(f"Presence must be Yes/No, got {presence!r}")
            pos, neg = obj["positive_points"], obj["negative_points"]
            if presence == "No" and (pos or neg):
                raise ParseFailure("Presence No must carry empty point lists")
            if len(pos) > 2 or len(neg) > 1:
                raise ParseFailure("too many prompt points (max 2 positive, 1 negative)")
            return PointPromptResult(
                presence == "Yes", rescale(pos), rescale(neg),
                float(obj["confidence"]), str(obj["Reasoning"]),
            )

        return self._single("point_prompt", prompt, image, parse)

    def verify_points(self, image: np.ndarray, query: str, anchor_text: str) -> VerifyResult:
        prompt = prompts.build_verify_prompt(query, anchor_text)

        def parse(content: str) -> VerifyResult:
            obj = _strict_json_object(content)
            for key in ("query_match", "target_object", "reasoning"):
                if key not in obj:
                    raise ParseFailure(f"verify reply missing {key!r}")
            if not isinstance(obj["query_match"], bool):
                raise ParseFailure("query_match must be a boolean")
            return VerifyResult(obj["query_match"], str(obj["target_object"]), str(obj["reasoning"]))

        return self._single("verify_points", prompt, image, parse)

    def choose_image(self, images, query: str) -> ChoiceOutcome:
        """Run the multiple-choice protocol over composite images.

        Reprompts on invalid ids, malformed replies, and a first -1 (the
        relaxed re-evaluation); raises RefusalOrExhausted once a budget
        runs out or the -1 stands after re-evaluation.
        """
        images = list(images)
        if not images:
            raise InvalidInput("choose_image needs at least one image")
        images_png = [image_b64(img) for img in images]
        messages = [{"role": "user", "text": prompts.build_choice_prompt(query, len(images))}]
        retries = {"invalid_id": 0, "wrong_format": 0, "reflection": 0}
        exchanges = []

        def reprompt(kind: str, budget: int, reply_text: str, prompt_text: str) -> bool:
            if retries[kind] >= budget:
                return False
            retries[kind] += 1
            messages.append({"role": "assistant", "text": reply_text})
            messages.append({"role": "user", "text": prompt_text})
            return True

        while True:
            body = choose_image_request(images_png, list(messages))
            reply = self.transport.post(ROLE_VLM, body)
            content = _reply_content(reply, ROLE_VLM)
            exchanges.append({"n_messages": len(messages), "reply": content})

            image_id = None
            try:
                obj = _strict_json_object(content)
                if set(obj.keys()) != {"process", "image_id"}:
                    raise ParseFailure("choice reply must hold exactly process and image_id")
                if isinstance(obj["image_id"], bool) or not isinstance(obj["image_id"], int):
                    raise ParseFailure("image_id must be an integer")
                image_id = obj["image_id"]
            except ParseFailure:
                if reprompt("wrong_format", WRONG_FORMAT_RETRIES, content, prompts.WRONG_FORMAT_PROMPT):
                    continue
                raise RefusalOrExhausted("malformed choice replies exhausted the retry budget",
                                         exchanges=exchanges)

            if 0 <= image_id < len(images):
                return ChoiceOutcome(
                    ChoiceResult(str(obj["process"]), image_id), retries, tuple(exchanges)
                )
            if image_id == -1:
                if reprompt("reflection", REFLECTION_RETRIES, content, prompts.REFLECTION_PROMPT):
                    continue
                raise RefusalOrExhausted("no image matched after re-evaluation", exchanges=exchanges)
            if reprompt("invalid_id", INVALID_ID_RETRIES, content,
                        prompts.build_invalid_id_prompt(image_id)):
                continue
            raise RefusalOrExhausted("invalid image ids exhausted the retry budget",
                                     exchanges=exchanges)


@dataclass
class ModelServices:
    """The four role clients over one shared transport."""

    parser: QueryParserClient
    embedder: EmbedderClient
    segmenter: SegmenterClient
    vlm: VlmClient
    transport: Transport = field(repr=False, default=None)

    @classmethod
    def over(cls, transport: Transport) -> "ModelServices":
        return cls(
            parser=QueryParserClient(transport),
            embedder=EmbedderClient(transport),
            segmenter=SegmenterClient(transport),
            vlm=VlmClient(transport),
            transport=transport,
        )

    @classmethod
    def from_env(cls, environ=None) -> "ModelServices":
        return cls.over(transport_from_env(environ))

    @classmethod
    def mock(cls, fixtures_dir) -> "ModelServices":
        return cls.over(MockTransport(fixtures_dir))
