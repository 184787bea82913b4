"""2状態チェーンでのチーム平均報酬推定の統合テスト

1ノードが定数パラメータを送り続けるK4上で、射影型とトリム平均型の推定を比べます。
"""

from __future__ import annotations

import numpy as np
import pytest

from resilient_consensus_ac.harness import RunMetrics, run_example1

STEPS = 20_000


def _tail_means(metrics: RunMetrics, steps: int) -> tuple[float, float]:
    """最後の25%のステップにおける協調エージェント全体の r̂(0), r̂(1) の平均"""
    start = int(0.75 * steps)
    tail = np.array([row[2:] for row in metrics.example1 if row[0] >= start])
    return float(tail[:, 0].mean()), float(tail[:, 1].mean())


@pytest.mark.integration
@pytest.mark.slow
class TestExample1Estimation:
    def test_projection_stays_within_cooperative_rewards(self) -> None:
        metrics = run_example1(
            p=0.5, alpha=0.05, method="projection", trim=1, steps=STEPS
        )
        r0, r1 = _tail_means(metrics, STEPS)
        assert 1.0 <= r0 <= 3.0
        assert -3.0 <= r1 <= -1.0
        assert metrics.containment_checks == 3 * STEPS
        assert metrics.containment_violations == 0

    def test_trimmed_mean_is_pulled_by_the_constant_sender(self) -> None:
        metrics = run_example1(
            p=0.5, alpha=0.05, method="trimmed_mean", trim=1, steps=STEPS
        )
        r0, _ = _tail_means(metrics, STEPS)
        assert r0 > 3.0

    def test_without_adversary_recovers_team_average(self) -> None:
        metrics = run_example1(
            p=0.5, alpha=0.05, method="projection", trim=0, steps=STEPS, adversary=False
        )
        r0, r1 = _tail_means(metrics, STEPS)
        assert r0 == pytest.approx(2.0, abs=0.1)
        assert r1 == pytest.approx(-2.0, abs=0.1)
        for _, lam in metrics.final_estimates.values():
            np.testing.assert_allclose(lam, [2.0, -4.0], atol=0.1)

    def test_trimmed_mean_without_adversary_recovers_team_average(self) -> None:
        metrics = run_example1(
            p=0.5,
            alpha=0.05,
            method="trimmed_mean",
            trim=0,
            steps=STEPS,
            adversary=False,
        )
        r0, r1 = _tail_means(metrics, STEPS)
        assert r0 == pytest.approx(2.0, abs=0.1)
        assert r1 == pytest.approx(-2.0, abs=0.1)
