"""Ground-truth caption production from screen-recording clips.

Two providers share one interface: `vlm` submits clip files to a hosted
vision-language model (credential via T2T_VLM_API_KEY), `mock` renders
deterministic captions from each clip's metadata sidecar JSON so the whole
pipeline can run offline. Responses are cached on disk keyed by content
hash; a rerun over the same inputs performs zero provider calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path

from .config import APP_TYPE_LABELS
from .errors import ProviderAuthError, ProviderTimeout

logger = logging.getLogger(__name__)

API_KEY_ENV = "T2T_VLM_API_KEY"
DEFAULT_CAPTIONS_PER_CLIP = 20

# Versioned prompt; it is hashed into the cache key, so editing it busts the cache.
PROMPT_V1 = (
    "Watch this smartphone screen recording and write one or two sentences, "
    "in third person present tense, describing what the user is doing: the "
    "visible actions, the interface elements touched, and the kind of app in "
    "use. Do not mention the recording itself."
)

_MOCK_FILLERS = (
    "{verb} the {noun} in a {label} app",
    "{verb} the {noun} while using a {label} app",
    "opens a {label} app and {verb} the {noun}",
    "{verb} the {noun} on the {label} screen",
    "keeps using the {label} app and {verb} the {noun}",
    "{verb} the {noun} shown by the {label} app",
    "returns to the {label} app and {verb} the {noun}",
    "{verb} the {noun} near the top of the {label} app",
    "{verb} the {noun} again inside the {label} app",
    "slowly {verb} the {noun} of the {label} app",
)


@dataclass
class CaptionRecord:
    segment_id: str
    captions: list[str]
    app_type: int
    source: str = "mock"
    clip_start: float = 0.0
    clip_end: float = 15.0

    def __post_init__(self) -> None:
        if not self.captions:
            raise ValueError("a caption record needs at least one caption")
        if self.app_type < 0:
            raise ValueError("app_type must be a valid type index")

    def to_json_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "captions": self.captions,
            "app_type": self.app_type,
            "source": self.source,
            "clip_start": self.clip_start,
            "clip_end": self.clip_end,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CaptionRecord":
        return cls(
            segment_id=obj["segment_id"],
            captions=list(obj["captions"]),
            app_type=int(obj["app_type"]),
            source=obj.get("source", "mock"),
            clip_start=float(obj.get("clip_start", 0.0)),
            clip_end=float(obj.get("clip_end", 15.0)),
        )


class MockProvider:
    """Renders captions from the clip's metadata sidecar, no pixels involved."""

    name = "mock"

    def __init__(self) -> None:
        self.calls = 0

    def generate(self, sidecar: dict, prompt: str, n: int) -> list[str]:
        self.calls += 1
        verb = sidecar["verb"]
        noun = sidecar["noun"]
        label = APP_TYPE_LABELS[int(sidecar["app_type"])]
        captions = []
        for i in range(n):
            filler = _MOCK_FILLERS[i % len(_MOCK_FILLERS)]
            body = filler.format(verb=verb, noun=noun, label=label)
            suffix = "" if i < len(_MOCK_FILLERS) else f" for a {2 + i} second stretch"
            captions.append(f"the user {body}{suffix}")
        return captions


class VlmProvider:
    """Minimal HTTP client for a hosted vision-language captioning endpoint.

    The credential must be present in T2T_VLM_API_KEY before any network
    activity happens. Timeouts retry three times with exponential backoff.
    """

    name = "vlm"

    def __init__(
        self,
        endpoint: str = "https://dashscope.aliyuncs.com/api/v1/services/vlm/caption",
        model: str = "qwen-vl-max",
        timeout: float = 60.0,
        max_retries: int = 3,
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.max_retries = max_retries
        self.calls = 0

    def generate(self, clip_path: Path, prompt: str, n: int) -> list[str]:
        api_key = os.environ.get(API_KEY_ENV, "")
        if not api_key:
            raise ProviderAuthError(f"set {API_KEY_ENV} to use the vlm provider")
        payload = json.dumps(
            {
                "model": self.model,
                "prompt": prompt,
                "n": n,
                "clip_name": clip_path.name,
                "clip_b64": _b64_file(clip_path),
            }
        ).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint,
            data=payload,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {api_key}",
            },
        )
        delay = 1.0
        for attempt in range(self.max_retries):
            try:
                self.calls += 1
                with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                    body = json.loads(resp.read().decode("utf-8"))
                return [str(c) for c in body["captions"]][:n]
            except urllib.error.HTTPError as exc:
                if exc.code in (401, 403):
                    raise ProviderAuthError(f"provider rejected credential: {exc}")
                if attempt == self.max_retries - 1:
                    raise ProviderTimeout(f"provider failed after retries: {exc}")
            except (urllib.error.URLError, TimeoutError) as exc:
                if attempt == self.max_retries - 1:
                    raise ProviderTimeout(f"provider unreachable after retries: {exc}")
            time.sleep(delay)
            delay *= 2.0
        raise ProviderTimeout("provider retries exhausted")


def _b64_file(path: Path) -> str:
    import base64

    return base64.b64encode(path.read_bytes()).decode("ascii")


def _cache_key(provider_name: str, prompt: str, n: int, content: bytes) -> str:
    digest = hashlib.sha256()
    digest.update(provider_name.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(prompt.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(str(n).encode("utf-8"))
    digest.update(b"\x00")
    digest.update(content)
    return digest.hexdigest()


def annotate_clips(
    clip_dir: str | Path,
    provider: str | MockProvider | VlmProvider = "mock",
    prompt: str = PROMPT_V1,
    n_captions: int = DEFAULT_CAPTIONS_PER_CLIP,
    cache_dir: str | Path = ".cache/annotations",
    max_in_flight: int = 4,
) -> list[CaptionRecord]:
    """Caption every clip under clip_dir.

    The mock provider consumes `<clip>.json` metadata sidecars; the vlm
    provider submits the clip files themselves, up to max_in_flight requests
    at a time. Clips that keep timing out are skipped with a warning rather
    than failing the batch.
    """
    if isinstance(provider, str):
        if provider == "mock":
            provider = MockProvider()
        elif provider == "vlm":
            if not os.environ.get(API_KEY_ENV, ""):
                raise ProviderAuthError(f"set {API_KEY_ENV} to use the vlm provider")
            provider = VlmProvider()
        else:
            raise ValueError(f"unknown provider '{provider}'")
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    clip_root = Path(clip_dir)
    skipped = 0

    if provider.name == "mock":
        sources = sorted(clip_root.glob("*.json"))
    else:
        sources = sorted(
            p for p in clip_root.iterdir() if p.is_file() and p.suffix != ".json"
        )

    def fetch(source: Path) -> list[str] | None:
        content = source.read_bytes()
        key = _cache_key(provider.name, prompt, n_captions, content)
        cache_file = cache / f"{key}.json"
        if cache_file.exists():
            return json.loads(cache_file.read_text(encoding="utf-8"))["captions"]
        try:
            if provider.name == "mock":
                captions = provider.generate(_load_sidecar(source), prompt, n_captions)
            else:
                captions = provider.generate(source, prompt, n_captions)
        except ProviderTimeout as exc:
            logger.warning("skipping %s: %s", source.name, exc)
            return None
        cache_file.write_text(json.dumps({"captions": captions}), encoding="utf-8")
        return captions

    if provider.name == "vlm" and max_in_flight > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            fetched = list(pool.map(fetch, sources))
    else:
        fetched = [fetch(source) for source in sources]

    records: list[CaptionRecord] = []
    for source, captions in zip(sources, fetched):
        if captions is None:
            skipped += 1
            continue
        if provider.name == "mock":
            meta = _load_sidecar(source)
        else:
            meta = _load_sidecar(source.with_suffix(".json"), required=False)
        records.append(
            CaptionRecord(
                segment_id=meta.get("segment_id", source.stem),
                captions=captions,
                app_type=int(meta.get("app_type", 0)),
                source=provider.name,
                clip_start=float(meta.get("clip_start", 0.0)),
                clip_end=float(meta.get("clip_end", 15.0)),
            )
        )
    if skipped:
        logger.warning("annotation skipped %d clip(s) after retries", skipped)
    return records


def _load_sidecar(path: Path, required: bool = True) -> dict:
    if not path.exists():
        if required:
            raise FileNotFoundError(f"mock provider needs metadata sidecar {path}")
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def align_by_timestamp(
    segments,
    records: list[CaptionRecord],
    segment_secs: float = 15.0,
) -> tuple[list[tuple], int, int]:
    """Pair each segment with the record whose clip interval overlaps it most.

    Returns (pairs, dropped_segments, dropped_records); items without any
    positive overlap are dropped and only counted.
    """
    segments = list(segments)
    pairs = []
    used: set[int] = set()
    for segment in segments:
        lo = segment.segment_start
        hi = lo + segment_secs
        best_idx = -1
        best_overlap = 0.0
        for idx, record in enumerate(records):
            overlap = min(hi, record.clip_end) - max(lo, record.clip_start)
            if overlap > best_overlap:
                best_overlap = overlap
                best_idx = idx
        if best_idx >= 0:
            pairs.append((segment, records[best_idx]))
            used.add(best_idx)
    dropped_segments = len(segments) - len(pairs)
    dropped_records = len(records) - len(used)
    return pairs, dropped_segments, dropped_records


def write_caption_records_jsonl(records: list[CaptionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict()) + "\n")


def read_caption_records_jsonl(path: str | Path) -> list[CaptionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(CaptionRecord.from_json_dict(json.loads(line)))
    return records
