"""Reference execution child for the framed wire protocol.

Reads one framed request from stdin, materializes the request files in
a scratch directory, runs the code there with an isolated interpreter
(python -I), and writes one framed result to stdout. The wrapper owns
whatever sandboxing the deployment needs; this reference version only
isolates the working directory and enforces the wall-clock timeout.

Run as: python -m tabforge.pyexec
"""

from __future__ import annotations

import subprocess
import sys
import tempfile
import time
import traceback
from pathlib import Path

from .gateway import (
    ExecutionResult,
    ProtocolError,
    encode_result,
    read_framed,
    request_from_payload,
)


def run_request(payload: dict) -> ExecutionResult:
    request = request_from_payload(payload)
    start = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="tabforge-exec-") as work:
        for name, content in request.files:
            target = Path(work) / name
            if target.parent != Path(work):
                return ExecutionResult(status="error", stderr=f"bad file name {name!r}")
            target.write_text(content, encoding="utf-8")
        try:
            proc = subprocess.run(
                [sys.executable, "-I", "-c", request.code],
                cwd=work,
                capture_output=True,
                text=True,
                timeout=request.timeout_ms / 1000.0,
            )
        except subprocess.TimeoutExpired:
            elapsed = int((time.monotonic() - start) * 1000)
            return ExecutionResult(
                status="timeout",
                stderr="code exceeded the wall clock budget",
                duration_ms=max(elapsed, request.timeout_ms),
            )
    elapsed = int((time.monotonic() - start) * 1000)
    return ExecutionResult(
        status="ok" if proc.returncode == 0 else "error",
        stdout=proc.stdout,
        stderr=proc.stderr,
        duration_ms=elapsed,
    )


def main() -> int:
    try:
        payload = read_framed(sys.stdin.buffer)
        result = run_request(payload)
    except ProtocolError as err:
        result = ExecutionResult(status="error", stderr=f"protocol: {err}")
    except Exception:
        result = ExecutionResult(status="error", stderr=traceback.format_exc())
    sys.stdout.buffer.write(encode_result(result))
    sys.stdout.buffer.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
