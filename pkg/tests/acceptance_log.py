"""Collects one line per acceptance criterion for the end-of-run summary."""

LINES: list[str] = []


def record(number: int, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {detail}"
    LINES.append(line)
    print(line)
