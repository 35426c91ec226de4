"""Service contracts: completion clients, code executors, the framed
execution wire protocol, and a bounded-parallel batch driver.

The executor protocol is deliberately tiny so any interpreter wrapper
can implement it: the parent writes one request to the child's stdin as
a 4-byte big-endian length followed by that many bytes of UTF-8 JSON,
and reads one result framed the same way from the child's stdout.
Request keys: code, files (list of [name, content] pairs), timeout_ms.
Result keys: status (ok | error | timeout), stdout, stderr, duration_ms.
"""

from __future__ import annotations

import ast
import json
import re
import struct
import subprocess
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

DEFAULT_TIMEOUT_MS = 10_000
DEFAULT_COMPLETION_RETRIES = 2
DEFAULT_EXECUTOR_RETRIES = 0
EXEC_STATUSES = ("ok", "error", "timeout")
CLIENT_ERROR_KINDS = ("network", "quota", "malformed")

# Single-table requests mount the data at data.csv; merge requests use
# data1.csv and data2.csv.
SINGLE_TABLE_FILENAME = "data.csv"
PAIR_TABLE_FILENAMES = ("data1.csv", "data2.csv")


class ClientError(RuntimeError):
    def __init__(self, kind: str, message: str, attempts: int = 1):
        if kind not in CLIENT_ERROR_KINDS:
            raise ValueError(f"unknown client error kind {kind!r}")
        super().__init__(f"{kind}: {message} (attempts={attempts})")
        self.kind = kind
        self.attempts = attempts


class ExecutorUnavailable(RuntimeError):
    pass


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    n_samples: int = 1
    temperature: float | None = None
    max_tokens: int | None = None
    tag: str = ""

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be at least 1, got {self.n_samples}")


@dataclass(frozen=True)
class BatchPolicy:
    max_in_flight: int = 4
    per_call_timeout_ms: int = DEFAULT_TIMEOUT_MS
    retries: int = DEFAULT_COMPLETION_RETRIES
    retry_backoff_ms: int = 100

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        if self.retries < 0 or self.retry_backoff_ms < 0:
            raise ValueError("retries and backoff must be nonnegative")


class CompletionClient(Protocol):
    def complete(self, request: CompletionRequest) -> list[str]: ...


class Executor(Protocol):
    def execute(self, request: "ExecutionRequest") -> "ExecutionResult": ...


def complete(
    client: CompletionClient,
    request: CompletionRequest,
    policy: BatchPolicy | None = None,
) -> list[str]:
    """Call a client with retry on ClientError, exponential backoff.

    The result always holds exactly request.n_samples strings; anything
    else from the client surfaces as a malformed ClientError.
    """
    policy = policy or BatchPolicy()
    attempts = policy.retries + 1
    last: ClientError | None = None
    for attempt in range(attempts):
        if attempt and policy.retry_backoff_ms:
            time.sleep(policy.retry_backoff_ms * (2 ** (attempt - 1)) / 1000.0)
        try:
            samples = client.complete(request)
        except ClientError as err:
            last = err
            continue
        if len(samples) != request.n_samples:
            raise ClientError(
                "malformed",
                f"client returned {len(samples)} samples, wanted {request.n_samples}",
                attempts=attempt + 1,
            )
        return list(samples)
    assert last is not None
    raise ClientError(last.kind, str(last), attempts=attempts)


class StubCompletionClient:
    """Deterministic client with canned completions keyed by exact prompt.

    When a prompt has fewer canned completions than n_samples the list
    is cycled, so one canned answer can stand in for a whole sample set.
    Thread-safe because it never mutates after construction.
    """

    def __init__(
        self,
        responses: Mapping[str, Sequence[str]] | None = None,
        default: Sequence[str] | None = None,
    ):
        self._responses = {k: list(v) for k, v in (responses or {}).items()}
        self._default = list(default) if default is not None else None

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "StubCompletionClient":
        responses: dict[str, list[str]] = {}
        default: list[str] | None = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec.get("default"):
                    default = list(rec["completions"])
                else:
                    responses[rec["prompt"]] = list(rec["completions"])
        return cls(responses, default)

    def complete(self, request: CompletionRequest) -> list[str]:
        canned = self._responses.get(request.prompt, self._default)
        if canned is None or not canned:
            raise ClientError(
                "malformed", f"no canned completions for prompt (tag={request.tag!r})"
            )
        return [canned[i % len(canned)] for i in range(request.n_samples)]


class RecordingClient:
    """Wraps a client and appends (prompt, completions) records to a file.

    Useful for capturing live traffic into replayable stub fixtures.
    """

    def __init__(self, inner: CompletionClient, path: str | Path):
        self._inner = inner
        self._path = Path(path)
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> list[str]:
        samples = self._inner.complete(request)
        rec = json.dumps(
            {"prompt": request.prompt, "completions": samples},
            sort_keys=True,
            ensure_ascii=False,
        )
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(rec + "\n")
        return samples


_CLIENT_FACTORIES: dict[str, Callable[[], CompletionClient]] = {}


def register_client_factory(name: str, factory: Callable[[], CompletionClient]) -> None:
    """Register a live-client constructor under a name usable from the CLI."""
    _CLIENT_FACTORIES[name] = factory


def registered_client(name: str) -> CompletionClient:
    if name not in _CLIENT_FACTORIES:
        raise ClientError(
            "network",
            f"no client factory registered under {name!r}; "
            "register one with register_client_factory",
        )
    return _CLIENT_FACTORIES[name]()


@dataclass(frozen=True)
class ExecutionRequest:
    code: str
    files: tuple[tuple[str, str], ...] = ()
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "files", tuple((str(n), str(c)) for n, c in self.files)
        )
        if len(self.files) > 2:
            raise ValueError("an execution request carries at most two files")
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be positive")


@dataclass(frozen=True)
class ExecutionResult:
    status: str
    stdout: str = ""
    stderr: str = ""
    duration_ms: int = 0

    def __post_init__(self) -> None:
        if self.status not in EXEC_STATUSES:
            raise ValueError(f"unknown execution status {self.status!r}")


def frame_message(payload: dict) -> bytes:
    data = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return struct.pack(">I", len(data)) + data


def read_framed(stream) -> dict:
    header = stream.read(4)
    if len(header) != 4:
        raise ProtocolError("stream ended before the length header")
    (length,) = struct.unpack(">I", header)
    data = stream.read(length)
    if len(data) != length:
        raise ProtocolError(f"stream ended at {len(data)} of {length} payload bytes")
    try:
        return json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ProtocolError(f"payload is not UTF-8 JSON: {err}") from err


def unframe_message(blob: bytes) -> dict:
    if len(blob) < 4:
        raise ProtocolError("message shorter than the length header")
    (length,) = struct.unpack(">I", blob[:4])
    if len(blob) - 4 < length:
        raise ProtocolError(f"message holds {len(blob) - 4} of {length} payload bytes")
    try:
        return json.loads(blob[4 : 4 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ProtocolError(f"payload is not UTF-8 JSON: {err}") from err


def encode_request(request: ExecutionRequest) -> bytes:
    return frame_message(
        {
            "code": request.code,
            "files": [[n, c] for n, c in request.files],
            "timeout_ms": request.timeout_ms,
        }
    )


def request_from_payload(payload: dict) -> ExecutionRequest:
    try:
        return ExecutionRequest(
            code=payload["code"],
            files=tuple((n, c) for n, c in payload.get("files", [])),
            timeout_ms=payload.get("timeout_ms", DEFAULT_TIMEOUT_MS),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ProtocolError(f"bad request payload: {err}") from err


def decode_request(blob: bytes) -> ExecutionRequest:
    return request_from_payload(unframe_message(blob))


def encode_result(result: ExecutionResult) -> bytes:
    return frame_message(
        {
            "status": result.status,
            "stdout": result.stdout,
            "stderr": result.stderr,
            "duration_ms": result.duration_ms,
        }
    )


def decode_result(blob: bytes) -> ExecutionResult:
    payload = unframe_message(blob)
    try:
        return ExecutionResult(
            status=payload["status"],
            stdout=payload.get("stdout", ""),
            stderr=payload.get("stderr", ""),
            duration_ms=int(payload.get("duration_ms", 0)),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ProtocolError(f"bad result payload: {err}") from err


def execution_request_for(
    code: str,
    tables_text: Sequence[str],
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> ExecutionRequest:
    """Build a request with the conventional file names for 1 or 2 tables."""
    if len(tables_text) == 1:
        files = ((SINGLE_TABLE_FILENAME, tables_text[0]),)
    elif len(tables_text) == 2:
        files = tuple(zip(PAIR_TABLE_FILENAMES, tables_text))
    else:
        raise ValueError(f"expected 1 or 2 tables, got {len(tables_text)}")
    return ExecutionRequest(code=code, files=files, timeout_ms=timeout_ms)


# Grace period on top of the request timeout before the parent kills a
# child, so a well-behaved child can frame its own timeout result.
_PARENT_GRACE_S = 5.0


@dataclass
class SubprocessExecutor:
    """Runs each request in a fresh child speaking the framed protocol."""

    command: tuple[str, ...] = (sys.executable, "-m", "tabforge.pyexec")

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                list(self.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
        except OSError as err:
            raise ExecutorUnavailable(f"cannot spawn {self.command}: {err}") from err
        try:
            out, err_bytes = proc.communicate(
                encode_request(request),
                timeout=request.timeout_ms / 1000.0 + _PARENT_GRACE_S,
            )
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.communicate()
            elapsed = int((time.monotonic() - start) * 1000)
            return ExecutionResult(
                status="timeout",
                stderr="child did not answer within the timeout",
                duration_ms=max(elapsed, request.timeout_ms),
            )
        if not out:
            raise ProtocolError(
                f"child produced no result (exit {proc.returncode}, "
                f"stderr: {err_bytes.decode('utf-8', 'replace')[:500]})"
            )
        return decode_result(out)


class MapExecutor:
    """Stub executor with canned results keyed by exact code text."""

    def __init__(self, results: Mapping[str, ExecutionResult] | None = None):
        self._results = dict(results or {})

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MapExecutor":
        results: dict[str, ExecutionResult] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                results[rec["code"]] = ExecutionResult(
                    status=rec.get("status", "ok"),
                    stdout=rec.get("stdout", ""),
                    stderr=rec.get("stderr", ""),
                    duration_ms=int(rec.get("duration_ms", 0)),
                )
        return cls(results)

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        result = self._results.get(request.code)
        if result is None:
            return ExecutionResult(status="error", stderr="no canned result for code")
        return result


_PRINT_LITERAL = re.compile(
    r"print\((\"(?:[^\"\\]|\\.)*\"|'(?:[^'\\]|\\.)*')\)"
)


class EchoExecutor:
    """Stub executor that 'runs' code by echoing its last print literal."""

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        matches = _PRINT_LITERAL.findall(request.code)
        if not matches:
            return ExecutionResult(status="error", stderr="no print literal found")
        text = ast.literal_eval(matches[-1])
        return ExecutionResult(status="ok", stdout=text + "\n", duration_ms=1)


class SleepExecutor:
    """Stub executor standing in for code that runs longer than allowed.

    required_ms=None means it would never finish; any request whose
    timeout falls short reports a timeout without actually sleeping.
    """

    def __init__(self, required_ms: int | None = None):
        self.required_ms = required_ms

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        if self.required_ms is None or request.timeout_ms < self.required_ms:
            return ExecutionResult(
                status="timeout",
                stderr="execution exceeded the wall clock budget",
                duration_ms=request.timeout_ms,
            )
        return ExecutionResult(status="ok", stdout="", duration_ms=self.required_ms)


def execute(executor: Executor, request: ExecutionRequest) -> ExecutionResult:
    """Single execution, no retries: failed runs are data, not transport noise."""
    return executor.execute(request)


@dataclass(frozen=True)
class JobResult:
    ok: bool
    value: Any = None
    error: Exception | None = None


def drive_batch(
    jobs: Sequence[Any],
    policy: BatchPolicy,
    worker: Callable[[Any], Any],
) -> list[JobResult]:
    """Run worker over jobs with at most max_in_flight in parallel.

    Results come back in job order. A worker exception is captured in
    that job's slot and never aborts the rest of the batch. With a pure
    worker the output is identical for any max_in_flight.
    """
    results: list[JobResult] = [JobResult(ok=False)] * len(jobs)
    if not jobs:
        return results

    def run(idx_job: tuple[int, Any]) -> tuple[int, JobResult]:
        idx, job = idx_job
        try:
            return idx, JobResult(ok=True, value=worker(job))
        except Exception as err:  # failure is isolated per job
            return idx, JobResult(ok=False, error=err)

    with ThreadPoolExecutor(max_workers=policy.max_in_flight) as pool:
        for idx, result in pool.map(run, enumerate(jobs)):
            results[idx] = result
    return results
