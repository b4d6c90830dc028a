"""Test outcome container shared by both goodness-of-fit tests."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .limitlaws import LimitLawSample, critical_value, p_value


@dataclass
class TestResult:
    __test__ = False

    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    alpha: float
    metadata: dict = field(default_factory=dict)

    def to_json(self, **kwargs) -> str:
        return json.dumps(asdict(self), **kwargs)


def decide(statistic: float, alpha: float, limit_sample: LimitLawSample, metadata=None) -> TestResult:
    """Reject when ``statistic`` exceeds the simulated ``1 - alpha`` quantile."""
    crit = critical_value(limit_sample, alpha)
    meta = {"limit_law": limit_sample.identity()}
    meta.update(metadata or {})
    return TestResult(float(statistic), crit, p_value(statistic, limit_sample),
                      bool(statistic > crit), float(alpha), meta)
