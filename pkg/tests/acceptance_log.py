"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    LINES[number] = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} | {detail}"
    print(LINES[number])
    return ok
