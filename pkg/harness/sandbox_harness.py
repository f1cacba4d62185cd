#!/usr/bin/env python3
"""In-sandbox shim: run one candidate program against assertion tests.

Reads exactly one JSON job from stdin:
    {"code": str, "tests": [str], "entry_point": str|null}
and writes exactly one JSON report to stdout:
    {"status": "ok"|"syntax_error"|"load_error", "results": [bool], "error": str}
then exits 0. One job per process lifetime; the parent owns timeouts and
kills. Candidate prints are redirected to a capped buffer so generated
code can never wedge the pipe, and best-effort guards disable network and
file writes. The guards are a robustness measure, not a security boundary.
"""
from __future__ import annotations

import builtins
import io
import json
import sys

CAPTURE_LIMIT = 4096


class CappedBuffer(io.TextIOBase):
    """Write sink keeping only the first CAPTURE_LIMIT characters."""

    def __init__(self):
        self.chunks: list[str] = []
        self.size = 0

    def write(self, text: str) -> int:
        if self.size < CAPTURE_LIMIT:
            keep = text[: CAPTURE_LIMIT - self.size]
            self.chunks.append(keep)
            self.size += len(keep)
        return len(text)

    def flush(self) -> None:
        pass

    def getvalue(self) -> str:
        return "".join(self.chunks)


def install_guards() -> None:
    """Best-effort: block sockets and file writes for candidate code."""

    def blocked(*args, **kwargs):
        raise PermissionError("disabled inside the sandbox")

    real_open = builtins.open

    def guarded_open(file, mode="r", *args, **kwargs):
        if any(flag in str(mode) for flag in ("w", "a", "x", "+")):
            blocked()
        return real_open(file, mode, *args, **kwargs)

    builtins.open = guarded_open
    try:
        import socket

        socket.socket = blocked
        socket.create_connection = blocked
    except ImportError:
        pass


def parse_job(raw: str):
    try:
        job = json.loads(raw)
        code = job["code"]
        tests = job["tests"]
    except (ValueError, TypeError, KeyError):
        return None
    if not isinstance(code, str) or not isinstance(tests, list):
        return None
    if not all(isinstance(t, str) for t in tests):
        return None
    return code, tests


def run_job(raw: str) -> dict:
    parsed = parse_job(raw)
    if parsed is None:
        return {"status": "load_error", "results": [], "error": "bad job"}
    code, tests = parsed

    try:
        compiled = compile(code, "<candidate>", "exec")
    except SyntaxError as exc:
        return {"status": "syntax_error", "results": [], "error": str(exc)}

    capture = CappedBuffer()
    namespace: dict = {"__name__": "__candidate__"}
    saved_out, saved_err = sys.stdout, sys.stderr
    sys.stdout = sys.stderr = capture
    install_guards()
    try:
        try:
            exec(compiled, namespace)
        except BaseException as exc:
            return {
                "status": "load_error",
                "results": [],
                "error": f"{type(exc).__name__}: {exc}",
            }
        results = []
        for test in tests:
            # every assertion runs, in declaration order, even after failures
            try:
                exec(compile(test, "<test>", "exec"), namespace)
                results.append(True)
            except BaseException:
                results.append(False)
    finally:
        sys.stdout, sys.stderr = saved_out, saved_err
    return {"status": "ok", "results": results, "error": capture.getvalue()}


def main() -> int:
    stdout = sys.stdout
    report = run_job(sys.stdin.read())
    stdout.write(json.dumps(report) + "\n")
    stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
