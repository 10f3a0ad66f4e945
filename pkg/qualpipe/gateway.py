"""All traffic to the evaluator model.

Requests go to an OpenAI-compatible chat-completion endpoint through a
`Gateway`, which can serve them from a content-addressed cache on disk:

* `live`: always call the endpoint, cache the response
* `cached`: serve cache hits, call the endpoint on a miss
* `replay`: serve cache hits, fail on a miss
"""

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Self

from requests import RequestException, Response, Session
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from qualpipe.errors import (
    ConfigError,
    EvaluatorError,
    RateLimitedError,
    ReplayMissError,
    UpstreamError,
)

logger = logging.getLogger(__package__)
logger.addHandler(logging.StreamHandler())

API_KEY_ENV = "QUALPIPE_API_KEY"
TIMEOUT = int(os.environ.get("QUALPIPE_TIMEOUT", "120"))
DEFAULT_MODEL = "gpt-3.5-turbo"
DEFAULT_TEMPERATURE = 0.9
MAX_ATTEMPTS = 5
RETRY_STATUSES = (429, 500, 502, 503, 504)
CACHE_HEADER = "# qualpipe cache v1"


class GatewayMode(StrEnum):
    """How requests are served."""

    LIVE = "live"
    CACHED = "cached"
    REPLAY = "replay"


@dataclass(frozen=True)
class ChatRequest:
    """A single chat-completion request to the evaluator."""

    prompt: str
    model: str = DEFAULT_MODEL
    system: None | str = None
    temperature: float = DEFAULT_TEMPERATURE
    seed: None | int = None

    def __post_init__(self) -> None:
        """Check the prompt and the temperature."""
        if not self.prompt.strip():
            msg = "empty prompt"
            raise ValueError(msg)
        if not 0.0 <= self.temperature <= 2.0:  # noqa: PLR2004
            msg = f"temperature must be in [0, 2], got {self.temperature}"
            raise ValueError(msg)

    def canonical(self) -> bytes:
        """Byte-defined serialization of every field."""
        fields = {
            "model": self.model,
            "prompt": self.prompt,
            "seed": self.seed,
            "system": self.system,
            "temperature": repr(float(self.temperature)),
        }
        text = json.dumps(fields, sort_keys=True, separators=(",", ":"))
        return text.encode("ascii")


@dataclass(frozen=True)
class CacheKey:
    """SHA-256 digest of a canonical request."""

    digest: str

    @classmethod
    def of(cls, req: ChatRequest) -> Self:
        """Key of `req`."""
        return cls(hashlib.sha256(req.canonical()).hexdigest())

    def path(self, cache_dir: Path) -> Path:
        """Location of the entry under `cache_dir`."""
        return cache_dir / self.digest[:2] / f"{self.digest}.txt"


class ResponseCache:
    """One plain text file per request, written once.

    A file starts with a few `#`-prefixed header lines, then an empty line and
    the response text as is.
    """

    def __init__(self, directory: Path) -> None:
        """Use (and create when writing) `directory`."""
        self.directory = directory

    def get(self, key: CacheKey) -> None | str:
        """Cached response text, or `None` on a miss."""
        path = key.path(self.directory)
        if not path.is_file():
            return None
        content = path.read_bytes().decode("utf-8")
        _, sep, text = content.partition("\n\n")
        if not sep:
            logger.warning("ignoring cache entry without header: %s", path)
            return None
        return text

    def put(self, key: CacheKey, req: ChatRequest, text: str) -> None:
        """Store `text` unless an entry for `key` already exists."""
        path = key.path(self.directory)
        if path.exists():
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        header = [
            CACHE_HEADER,
            f"# digest: {key.digest}",
            f"# model: {req.model}",
            f"# temperature: {req.temperature!r}",
        ]
        content = "\n".join(header) + "\n\n" + text
        with tempfile.NamedTemporaryFile(
            "wb", dir=path.parent, delete=False, suffix=".tmp"
        ) as f:
            f.write(content.encode("utf-8"))
        tmp = Path(f.name)
        try:
            # the first writer wins, identical concurrent writes are harmless
            os.link(tmp, path)
        except FileExistsError:
            pass
        finally:
            tmp.unlink()


Transport = Callable[[ChatRequest], str]


def init_session(max_retries: int = MAX_ATTEMPTS - 1) -> Session:
    """Initialize a session retrying with exponential backoff and jitter.

    `Retry-After` headers are honored. After the retries are spent the last
    response is returned as is, so that its status can be reported.
    """
    retry = Retry(
        total=max_retries,
        backoff_factor=0.5,
        backoff_jitter=0.25,
        status_forcelist=RETRY_STATUSES,
        allowed_methods=frozenset({"POST"}),
        respect_retry_after_header=True,
        raise_on_status=False,
    )
    s = Session()
    adapter = HTTPAdapter(max_retries=retry)
    s.mount("https://", adapter)
    s.mount("http://", adapter)
    return s


def _raise_for_status(resp: Response) -> None:
    """Turn an error response into an `UpstreamError` holding the body."""
    if resp.status_code == 429:  # noqa: PLR2004
        raise RateLimitedError(resp.text)
    if resp.status_code >= 400:  # noqa: PLR2004
        raise UpstreamError(resp.status_code, resp.text)


class HttpTransport:
    """Chat completions over HTTP."""

    def __init__(
        self,
        base_url: str,
        api_key: None | str = None,
        session: None | Session = None,
        timeout: int = TIMEOUT,
    ) -> None:
        """Talk to `base_url`, the key defaults to `$QUALPIPE_API_KEY`."""
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.session = session if session is not None else init_session()
        self.timeout = timeout

    def __call__(self, req: ChatRequest) -> str:
        """Send `req` and return the message content."""
        if not self.api_key:
            msg = f"{API_KEY_ENV} is not set"
            raise ConfigError(msg)
        messages = []
        if req.system is not None:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.prompt})
        body: dict[str, object] = {
            "model": req.model,
            "messages": messages,
            "temperature": req.temperature,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        headers = {"Authorization": f"Bearer {self.api_key}"}
        try:
            resp = self.session.post(
                self.url, json=body, headers=headers, timeout=self.timeout
            )
        except RequestException as e:
            raise UpstreamError(None, str(e)) from e
        _raise_for_status(resp)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            err = UpstreamError(resp.status_code, resp.text)
            err.add_note("response is not a chat completion")
            raise err from e


class ScriptedTransport:
    """Transport answering from a script instead of the network.

    `responder` is either a function of the request or a sequence of responses
    served in order. A response that is an exception is raised instead. Calls
    and the highest number of concurrent calls are recorded.
    """

    def __init__(
        self,
        responder: Callable[[ChatRequest], str | Exception] | Iterable[str | Exception],
        delay: float = 0.0,
    ) -> None:
        """Initialize with the script and an optional per-call delay in seconds."""
        self._responder = responder if callable(responder) else None
        self._script: None | Iterator[str | Exception] = (
            None if callable(responder) else iter(responder)
        )
        self.delay = delay
        self.calls: list[ChatRequest] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        """Number of requests received."""
        return len(self.calls)

    def __call__(self, req: ChatRequest) -> str:
        """Answer `req` from the script."""
        with self._lock:
            self.calls.append(req)
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            if self._responder is None and self._script is not None:
                answer = next(self._script, UpstreamError(None, "script exhausted"))
            else:
                answer = None
        try:
            if self.delay:
                time.sleep(self.delay)
            if answer is None and self._responder is not None:
                answer = self._responder(req)
            if isinstance(answer, Exception):
                raise answer
            return str(answer)
        finally:
            with self._lock:
                self.in_flight -= 1


class Gateway:
    """Single entry point for evaluator requests."""

    def __init__(  # noqa: PLR0913
        self,
        mode: GatewayMode,
        cache: None | ResponseCache = None,
        transport: None | Transport = None,
        parallelism: int = 1,
        model: str = DEFAULT_MODEL,
        temperature: float = DEFAULT_TEMPERATURE,
        seed: None | int = None,
    ) -> None:
        """Check that `mode` has what it needs."""
        if mode is not GatewayMode.REPLAY and transport is None:
            msg = f"gateway mode '{mode}' needs a transport"
            raise ConfigError(msg)
        if mode is not GatewayMode.LIVE and cache is None:
            msg = f"gateway mode '{mode}' needs a cache directory"
            raise ConfigError(msg)
        if parallelism < 1:
            msg = f"parallelism must be at least 1, got {parallelism}"
            raise ConfigError(msg)
        self.mode = mode
        self.cache = cache
        self.transport = transport
        self.parallelism = parallelism
        self.model = model
        self.temperature = temperature
        self.seed = seed

    def request(self, prompt: str, system: None | str = None) -> ChatRequest:
        """Build a request with the gateway's model settings."""
        return ChatRequest(prompt, self.model, system, self.temperature, self.seed)

    def complete(self, req: ChatRequest) -> str:
        """Response text for `req`."""
        key = CacheKey.of(req)
        if self.mode is not GatewayMode.LIVE and self.cache is not None:
            if (text := self.cache.get(key)) is not None:
                return text
            if self.mode is GatewayMode.REPLAY:
                raise ReplayMissError(key.digest)
        if self.transport is None:
            raise ReplayMissError(key.digest)
        text = self.transport(req)
        if self.cache is not None:
            self.cache.put(key, req, text)
        return text

    def complete_batch(
        self, reqs: Sequence[ChatRequest], parallelism: None | int = None
    ) -> list[str | EvaluatorError]:
        """Complete all of `reqs`, at most `parallelism` at a time.

        The results are aligned with `reqs`. A failing request leaves its error
        in its position and does not stop the others.
        """
        workers = self.parallelism if parallelism is None else parallelism
        if workers < 1:
            msg = f"parallelism must be at least 1, got {workers}"
            raise ConfigError(msg)
        if not reqs:
            return []

        def run(req: ChatRequest) -> str | EvaluatorError:
            try:
                return self.complete(req)
            except EvaluatorError as e:
                return e

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, reqs))
        failed = sum(isinstance(r, EvaluatorError) for r in results)
        logger.info("completed %s requests (%s failed)", len(reqs), failed)
        return results
