"""Collects one PASS/FAIL line per acceptance criterion for the run summary."""

ACCEPTANCE_LINES: dict[int, str] = {}


def acceptance_line(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line
