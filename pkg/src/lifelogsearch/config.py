"""Pipeline configuration: TOML file with environment-variable credentials.

Relative paths resolve against the config file's directory. Credentials
never live in the file: each client section names an environment variable
(api_key_env) that is read at client construction time. A client endpoint
of "mock" (optionally "mock:SEED") selects the seeded deterministic mock
backend instead of an HTTP service.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import clients


class ConfigError(ValueError):
    """The configuration file is malformed or out of documented ranges."""


@dataclass
class ClientSpec:
    endpoint: str = "mock"
    model: str = ""
    dimension: int = 0
    api_key_env: str = ""

    @property
    def is_mock(self) -> bool:
        return self.endpoint == "mock" or self.endpoint.startswith("mock:")

    def mock_seed(self) -> int:
        if ":" in self.endpoint:
            try:
                return int(self.endpoint.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad mock endpoint {self.endpoint!r}; use mock:<seed>") from None
        return 0

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) if self.api_key_env else None


@dataclass
class Paths:
    manifest: Path = Path("data/manifest.jsonl")
    caption_store: Path = Path("artifacts/captions")
    frame_embeddings: Path = Path("artifacts/frame_embeddings.vemb")
    filtered_frames: Path = Path("artifacts/filtered_frames.json")
    index_dir: Path = Path("artifacts/index")
    qrels: Path = Path("data/qrels.txt")
    topics: Path = Path("data/topics.json")
    runs_dir: Path = Path("artifacts/runs")
    thumbnails_dir: Path = Path("artifacts/thumbnails")


@dataclass
class Params:
    window_size: int = 8
    merged_batch_size: int = 10
    filter_threshold: float = 0.8
    k: int = 10
    rerank_pool: int = 100
    query_prefix: bool = True
    fusion_weight: float = 0.5
    combination: tuple[str, str] = ("single", "collective")
    rerank_channel: str = "fine"

    def validate(self) -> None:
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.merged_batch_size < 1:
            raise ConfigError("merged_batch_size must be >= 1")
        if not 0.0 <= self.filter_threshold <= 1.0:
            raise ConfigError("filter_threshold must be in [0, 1]")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.rerank_pool < self.k:
            raise ConfigError("rerank_pool must be >= k")
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ConfigError("fusion_weight must be in [0, 1]")
        valid_channels = {"single", "collective", "fine", "coarse"}
        if len(self.combination) != 2 or not set(self.combination) <= valid_channels:
            raise ConfigError(f"combination must name two of {sorted(valid_channels)}")
        if self.rerank_channel not in valid_channels:
            raise ConfigError(f"rerank_channel must be one of {sorted(valid_channels)}")


@dataclass
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    captioner: ClientSpec = field(default_factory=ClientSpec)
    vision_embedder: ClientSpec = field(default_factory=lambda: ClientSpec(dimension=128))
    text_embedder: ClientSpec = field(default_factory=lambda: ClientSpec(dimension=256))
    reranker: ClientSpec = field(default_factory=ClientSpec)
    params: Params = field(default_factory=Params)
    prompt_dir: Path | None = None


def _section(data: dict, name: str) -> dict:
    section = data.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    return section


def _client_spec(data: dict, name: str, default_dim: int = 0) -> ClientSpec:
    section = _section(data, name)
    known = {f.name for f in fields(ClientSpec)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"[{name}]: unknown keys {sorted(unknown)}")
    spec = ClientSpec(**section)
    if not spec.dimension:
        spec.dimension = default_dim
    return spec


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with path.open("rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path.name}: {exc}") from None

    base = path.parent.resolve()
    paths = Paths()
    for key, value in _section(data, "paths").items():
        if not hasattr(paths, key):
            raise ConfigError(f"[paths]: unknown key {key!r}")
        setattr(paths, key, Path(value))
    for f in fields(Paths):
        current: Path = getattr(paths, f.name)
        if not current.is_absolute():
            setattr(paths, f.name, base / current)

    client_data = _section(data, "clients")
    params_data = _section(data, "params")
    known_params = {f.name for f in fields(Params)}
    unknown = set(params_data) - known_params
    if unknown:
        raise ConfigError(f"[params]: unknown keys {sorted(unknown)}")
    if "combination" in params_data:
        params_data["combination"] = tuple(params_data["combination"])
    params = Params(**params_data)
    params.validate()

    prompt_dir = data.get("prompt_dir")
    config = PipelineConfig(
        paths=paths,
        captioner=_client_spec(client_data, "captioner"),
        vision_embedder=_client_spec(client_data, "vision_embedder", default_dim=128),
        text_embedder=_client_spec(client_data, "text_embedder", default_dim=256),
        reranker=_client_spec(client_data, "reranker"),
        params=params,
        prompt_dir=(base / prompt_dir) if prompt_dir else None,
    )
    return config


# ---------------------------------------------------------------------------
# Client factories
# ---------------------------------------------------------------------------


def make_captioner(config: PipelineConfig) -> clients.CaptionerClient:
    spec = config.captioner
    if spec.is_mock:
        return clients.MockCaptionerClient(seed=spec.mock_seed())
    return clients.HttpCaptionerClient(
        endpoint=spec.endpoint, model_name=spec.model or "captioner", api_key=spec.api_key()
    )


def make_vision_embedder(config: PipelineConfig) -> clients.VisionEmbedderClient:
    spec = config.vision_embedder
    if spec.is_mock:
        return clients.MockVisionEmbedderClient(dimension=spec.dimension or 128, seed=spec.mock_seed())
    return clients.HttpVisionEmbedderClient(
        endpoint=spec.endpoint,
        dimension=spec.dimension,
        model_name=spec.model or "vision-embedder",
        api_key=spec.api_key(),
    )


def make_text_embedder(config: PipelineConfig) -> clients.TextEmbedderClient:
    spec = config.text_embedder
    if spec.is_mock:
        return clients.MockTextEmbedderClient(dimension=spec.dimension or 256, seed=spec.mock_seed())
    return clients.HttpTextEmbedderClient(
        endpoint=spec.endpoint,
        dimension=spec.dimension,
        model_name=spec.model or "text-embedder",
        api_key=spec.api_key(),
    )


def make_reranker(config: PipelineConfig) -> clients.RerankerClient:
    spec = config.reranker
    if spec.is_mock:
        return clients.MockRerankerClient()
    return clients.HttpRerankerClient(
        endpoint=spec.endpoint, model_name=spec.model or "reranker", api_key=spec.api_key()
    )
