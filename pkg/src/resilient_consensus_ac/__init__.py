"""パッケージ公開情報（バージョン・作者・説明）をまとめて公開するモジュール"""

__version__ = "0.1.0"

__author__ = "nuitsjp"

__description__ = (
    "Byzantine-resilient projection-based consensus actor-critic "
    "for networked multi-agent reinforcement learning"
)
