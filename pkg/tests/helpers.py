import numpy as np

from brunovsky.core import brunovsky_target, validate_system


def random_controllable(rng, n, m):
    """Gaussian pair; controllable with probability one."""
    return validate_system(rng.standard_normal((n, n)), rng.standard_normal((n, m)))


def target_system(mu):
    t = brunovsky_target(mu)
    return validate_system(t.A_b, t.B_b)


def partitions(max_n=50, max_parts=None):
    """Hypothesis strategy for descending positive-integer partitions with sum <= max_n."""
    from hypothesis import strategies as st

    max_parts = max_parts or max_n

    def build(parts):
        parts = sorted(parts, reverse=True)
        out, total = [], 0
        for p in parts:
            if total + p > max_n:
                break
            out.append(p)
            total += p
        return out or [1]

    return st.lists(st.integers(1, max_n), min_size=1, max_size=max_parts).map(build)


ACCEPTANCE_LINES: list[str] = []


def report(number, title, ok, detail):
    """Record and print one pass/fail line for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
