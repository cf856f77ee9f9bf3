"""Shared test helpers."""
from rspose.simgen import random_motion


def random_draw(rng, rig):
    """A random (motion, rows) draw at the default experiment scale."""
    m = random_motion(rng, rng.uniform(0.05, 0.6), rng.uniform(0.1, 1.5))
    u_a, u_b = rng.uniform(0, rig.n_rows, 2)
    return m, u_a, u_b


# acceptance outcomes, printed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def report_info(number: int, detail: str) -> None:
    line = f"criterion {number} info: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
