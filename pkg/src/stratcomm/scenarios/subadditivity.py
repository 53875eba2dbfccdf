"""Sub-additivity of finite-horizon values: ``(n+m) D^{n+m} <= n D^n + m D^m``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping


@dataclass
class SubadditivityReport:
    ok: bool
    checked: list[tuple[int, int]] = field(default_factory=list)
    violations: list[tuple[int, int, float, float]] = field(default_factory=list)  # (n, m, lhs, rhs)

    def __bool__(self) -> bool:
        return self.ok


def subadditivity_check(values: Mapping[int, float], slack: float = 1e-9) -> SubadditivityReport:
    """Check every pair ``n <= m`` whose sum also has a value."""
    report = SubadditivityReport(True)
    keys = sorted(values)
    for i, n in enumerate(keys):
        for m in keys[i:]:
            if n + m not in values:
                continue
            lhs = (n + m) * values[n + m]
            rhs = n * values[n] + m * values[m]
            report.checked.append((n, m))
            if lhs > rhs + slack:
                report.ok = False
                report.violations.append((n, m, lhs, rhs))
    return report
