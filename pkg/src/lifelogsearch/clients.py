"""External model clients: captioners, embedders, and rerankers.

All model backends sit behind small client interfaces so the pipeline can
run against hosted services or against seeded deterministic mocks. The mock
captioner understands ``[[scene: ...]]`` markers embedded in image bytes
(plain text stubs or PNG text chunks both work), which makes end-to-end
behaviour controllable in tests and demos.

HTTP wire formats (all JSON POST, optional ``Authorization: Bearer`` header):
    captioner:       {"prompt", "images": [base64, ...], "max_tokens"} -> {"text"}
    vision embedder: {"image": base64} -> {"vector": [float, ...]}
    text embedder:   {"text": str} -> {"vector": [float, ...]}
    reranker:        {"query", "candidates": [{"id", "text"}], "out_count"}
                     -> {"ids": [str, ...]}
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

logger = logging.getLogger(__name__)


class TransportError(RuntimeError):
    """A client call failed at the transport level (retryable)."""


# ---------------------------------------------------------------------------
# Interfaces
# ---------------------------------------------------------------------------


class CaptionerClient:
    """Generates caption text for one image or an image sequence."""

    supports_single_image: bool = True
    supports_multi_image: bool = False
    model_name: str = "captioner"

    def describe_image(self, prompt: str, image_path: str | Path) -> str:
        raise NotImplementedError

    def describe_frames(self, prompt: str, image_paths: list[str | Path]) -> str:
        raise NotImplementedError


class VisionEmbedderClient:
    """Embeds one image into a fixed-dimension raw vector."""

    dimension: int = 0
    model_name: str = "vision-embedder"

    def embed_image(self, image_path: str | Path) -> np.ndarray:
        raise NotImplementedError


class TextEmbedderClient:
    """Embeds text into a fixed-dimension raw vector."""

    dimension: int = 0
    model_name: str = "text-embedder"

    def embed_text(self, text: str) -> np.ndarray:
        raise NotImplementedError


class RerankerClient:
    """Orders candidate captions by relevance to a topic description."""

    model_name: str = "reranker"

    def rerank(
        self, topic_description: str, candidates: list[tuple[str, str]], out_count: int
    ) -> list[str]:
        """Return up to ``out_count`` candidate ids, most relevant first."""
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Seeded deterministic mocks
# ---------------------------------------------------------------------------

_SCENE_RE = re.compile(rb"\[\[scene:(.*?)\]\]", re.S)

_VOCAB = (
    "table kitchen street screen office window corridor garden market "
    "platform cup notebook jacket bicycle doorway shelf counter staircase "
    "terminal escalator"
).split()


def _read_bytes(image_path: str | Path) -> bytes:
    return Path(image_path).read_bytes()


def extract_scene(data: bytes) -> str | None:
    """Pull a ``[[scene: ...]]`` marker out of raw image bytes, if present."""
    match = _SCENE_RE.search(data)
    if match is None:
        return None
    return match.group(1).decode("utf-8", errors="replace").strip()


def _digest_words(seed: int, data: bytes, salt: str, count: int) -> list[str]:
    digest = hashlib.sha256(f"{seed}:{salt}:".encode() + data).digest()
    return [_VOCAB[b % len(_VOCAB)] for b in digest[:count]]


@dataclass
class ClientCall:
    """One recorded mock invocation, for assertions on prompts."""

    kind: str
    prompt: str
    image_count: int


class MockCaptionerClient(CaptionerClient):
    """Deterministic captioner driven by scene markers in the image bytes.

    Frames that carry the same ``[[scene: ...]]`` marker get identical
    single-caption text, so retrieval behaviour can be planted precisely.
    Frames without a marker get stable pseudo-captions derived from a hash
    of their bytes. Merged-method prompts (detected by the structured-output
    marker ``"fine_grained"``) yield a JSON document grouping frames in runs
    of ``group_size``.
    """

    supports_single_image = True
    supports_multi_image = True

    def __init__(self, seed: int = 0, group_size: int = 5, model_name: str = "mock-captioner"):
        self.seed = seed
        self.group_size = group_size
        self.model_name = model_name
        self.calls: list[ClientCall] = []

    def _scene_or_words(self, data: bytes) -> str:
        scene = extract_scene(data)
        if scene is not None:
            return scene
        w1, w2 = _digest_words(self.seed, data, "scene", 2)
        return f"standing by the {w1} near the {w2}"

    def describe_image(self, prompt: str, image_path: str | Path) -> str:
        self.calls.append(ClientCall("single", prompt, 1))
        scene = self._scene_or_words(_read_bytes(image_path))
        return (
            f"The individual is {scene} at this moment, attending to the activity "
            f"at hand while the camera records the surroundings from a first-person "
            f"point of view."
        )

    def _window_scenes(self, image_paths: list[str | Path], cap: int = 3) -> str:
        scenes: list[str] = []
        for path in image_paths:
            scene = self._scene_or_words(_read_bytes(path))
            if not scenes or scenes[-1] != scene:
                scenes.append(scene)
        joined = "; then ".join(scenes[:cap])
        if len(scenes) > cap:
            joined += ", and more besides"
        return joined

    def describe_frames(self, prompt: str, image_paths: list[str | Path]) -> str:
        if "fine_grained" in prompt:
            self.calls.append(ClientCall("merged", prompt, len(image_paths)))
            return self._merged_document(image_paths)
        self.calls.append(ClientCall("collective", prompt, len(image_paths)))
        joined = self._window_scenes(image_paths)
        return (
            f"Over this stretch of time the individual is {joined}, moving steadily "
            f"through the sequence of captured moments while the wearable camera "
            f"records each of the places passed through and the activities carried "
            f"out along the way."
        )

    def _merged_document(self, image_paths: list[str | Path]) -> str:
        scenes = [self._scene_or_words(_read_bytes(p)) for p in image_paths]
        fine = [
            {"image": i + 1, "caption": f"The individual is {scene} in frame {i + 1}."}
            for i, scene in enumerate(scenes)
        ]
        groups = []
        for start in range(0, len(scenes), self.group_size):
            members = list(range(start + 1, min(start + self.group_size, len(scenes)) + 1))
            group_scenes: list[str] = []
            for i in members:
                if not group_scenes or group_scenes[-1] != scenes[i - 1]:
                    group_scenes.append(scenes[i - 1])
            groups.append(
                {
                    "images": members,
                    "caption": "The individual spends this stretch "
                    + "; then ".join(group_scenes)
                    + ".",
                }
            )
        distinct: list[str] = []
        for scene in scenes:
            if not distinct or distinct[-1] != scene:
                distinct.append(scene)
        joined = "; then ".join(distinct[:2])
        if len(distinct) > 2:
            joined += ", and more besides"
        summary = (
            f"Across these frames the individual is {joined}, moving through the "
            f"day from one of those moments to the next."
        )
        return json.dumps({"fine_grained": fine, "summary": summary, "groups": groups})


class MockVisionEmbedderClient(VisionEmbedderClient):
    """Hash-based image embedder; same scene marker means near-duplicate.

    Frames sharing a scene marker embed close together (cosine well above
    0.9), frames without markers embed near-orthogonally, so the
    near-duplicate filter behaves realistically on synthetic corpora.
    """

    def __init__(self, dimension: int = 128, seed: int = 0, model_name: str = "mock-vision-embedder"):
        self.dimension = dimension
        self.seed = seed
        self.model_name = model_name

    def _rng(self, salt: str, data: bytes) -> np.random.Generator:
        digest = hashlib.sha256(f"{self.seed}:{salt}:".encode() + data).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def embed_image(self, image_path: str | Path) -> np.ndarray:
        data = _read_bytes(image_path)
        scene = extract_scene(data)
        if scene is None:
            return self._rng("bytes", data).standard_normal(self.dimension)
        base = self._rng("scene", scene.encode()).standard_normal(self.dimension)
        base /= np.linalg.norm(base)
        noise = self._rng("noise", data).standard_normal(self.dimension)
        noise /= np.linalg.norm(noise)
        return base + 0.15 * noise


class MockTextEmbedderClient(TextEmbedderClient):
    """Seeded bag-of-tokens embedder: shared words raise cosine similarity.

    Each lowercase token maps to a fixed Gaussian vector (seeded hash); the
    text embedding is the token-vector sum. Identical texts embed
    identically, overlapping texts score high, unrelated texts score near 0.
    """

    def __init__(self, dimension: int = 256, seed: int = 0, model_name: str = "mock-text-embedder"):
        self.dimension = dimension
        self.seed = seed
        self.model_name = model_name
        self.calls: list[str] = []
        self._token_cache: dict[str, np.ndarray] = {}

    _TOKEN_RE = re.compile(r"[a-z0-9']+")

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.dimension)
            self._token_cache[token] = vec
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        self.calls.append(text)
        tokens = self._TOKEN_RE.findall(text.lower())
        if not tokens:
            raise ValueError("cannot embed text with no tokens")
        out = np.zeros(self.dimension)
        for token in tokens:
            out += self._token_vector(token)
        return out


class MockRerankerClient(RerankerClient):
    """Rerank by a fixed rule: keep the given order or reverse it."""

    def __init__(self, order: str = "identity", model_name: str = "mock-reranker"):
        if order not in ("identity", "reverse"):
            raise ValueError(f"unknown order {order!r}")
        self.order = order
        self.model_name = model_name

    def rerank(self, topic_description, candidates, out_count):
        ids = [cid for cid, _ in candidates]
        if self.order == "reverse":
            ids = ids[::-1]
        return ids[:out_count]


class StaticRerankerClient(RerankerClient):
    """Always returns a fixed id list; for contract tests (out-of-pool ids)."""

    def __init__(self, ids: list[str]):
        self.ids = list(ids)
        self.model_name = "static-reranker"

    def rerank(self, topic_description, candidates, out_count):
        return self.ids[:out_count]


# ---------------------------------------------------------------------------
# HTTP-backed clients
# ---------------------------------------------------------------------------


def _resize_for_upload(data: bytes, max_side: int = 768) -> bytes:
    """Downscale an image before upload; pass through anything unreadable."""
    try:
        from PIL import Image

        with Image.open(io.BytesIO(data)) as img:
            if max(img.size) <= max_side:
                return data
            img.thumbnail((max_side, max_side))
            buf = io.BytesIO()
            img.save(buf, format="JPEG", quality=90)
            return buf.getvalue()
    except Exception:
        return data


@dataclass
class HttpClientBase:
    endpoint: str
    api_key: str | None = None
    timeout: float = 60.0
    session: requests.Session = field(default_factory=requests.Session, repr=False)

    def _post(self, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self.session.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
            response.raise_for_status()
            return response.json()
        except (requests.RequestException, ValueError) as exc:
            raise TransportError(f"POST {self.endpoint} failed: {exc}") from exc


class HttpCaptionerClient(HttpClientBase, CaptionerClient):
    supports_single_image = True
    supports_multi_image = True

    def __init__(self, endpoint, model_name="captioner", api_key=None, max_tokens=256, timeout=60.0):
        super().__init__(endpoint=endpoint, api_key=api_key, timeout=timeout)
        self.model_name = model_name
        self.max_tokens = max_tokens

    def _encode(self, image_path: str | Path) -> str:
        data = _resize_for_upload(_read_bytes(image_path))
        return base64.b64encode(data).decode("ascii")

    def describe_image(self, prompt, image_path):
        body = self._post(
            {"prompt": prompt, "images": [self._encode(image_path)], "max_tokens": self.max_tokens}
        )
        return str(body["text"])

    def describe_frames(self, prompt, image_paths):
        body = self._post(
            {
                "prompt": prompt,
                "images": [self._encode(p) for p in image_paths],
                "max_tokens": self.max_tokens,
            }
        )
        return str(body["text"])


class HttpVisionEmbedderClient(HttpClientBase, VisionEmbedderClient):
    def __init__(self, endpoint, dimension, model_name="vision-embedder", api_key=None, timeout=60.0):
        super().__init__(endpoint=endpoint, api_key=api_key, timeout=timeout)
        self.dimension = dimension
        self.model_name = model_name

    def embed_image(self, image_path):
        data = _resize_for_upload(_read_bytes(image_path))
        body = self._post({"image": base64.b64encode(data).decode("ascii")})
        return np.asarray(body["vector"], dtype=np.float64)


class HttpTextEmbedderClient(HttpClientBase, TextEmbedderClient):
    def __init__(self, endpoint, dimension, model_name="text-embedder", api_key=None, timeout=60.0):
        super().__init__(endpoint=endpoint, api_key=api_key, timeout=timeout)
        self.dimension = dimension
        self.model_name = model_name

    def embed_text(self, text):
        body = self._post({"text": text})
        return np.asarray(body["vector"], dtype=np.float64)


class HttpRerankerClient(HttpClientBase, RerankerClient):
    def __init__(self, endpoint, model_name="reranker", api_key=None, timeout=120.0):
        super().__init__(endpoint=endpoint, api_key=api_key, timeout=timeout)
        self.model_name = model_name

    def rerank(self, topic_description, candidates, out_count):
        body = self._post(
            {
                "query": topic_description,
                "candidates": [{"id": cid, "text": text} for cid, text in candidates],
                "out_count": out_count,
            }
        )
        return [str(cid) for cid in body["ids"]]
