"""有向通信グラフ、射影による誤差推定、W-MSR型トリミング、ζ-ロバスト性解析"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Union

import networkx as nx
import numpy as np

from .exceptions import (
    DegenerateFeatureError,
    ResilientCapacityError,
    ResilientFileError,
    ResilientValidationError,
)
from .logging_config import create_round_context, get_logger

if TYPE_CHECKING:
    from .types import FloatArray

ROW_SUM_TOLERANCE = 1e-12
ROBUSTNESS_NODE_CAP = 16

Edge = Union[tuple[int, int], tuple[int, int, float]]

logger = get_logger(__name__)


@dataclass(frozen=True)
class CommGraph:
    """自己ループ付き有向グラフと合意重み

    ``weights[i, j]`` はノードiが入近傍jに与える重み c(i,j)。
    エッジ j→i が存在するとき、かつそのときに限り正。
    """

    weights: FloatArray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", weights)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
            raise ResilientValidationError(
                "weight matrix must be square",
                validation_type="graph_shape",
                invalid_value=weights.shape,
            )
        if weights.shape[0] < 1:
            raise ResilientValidationError(
                "graph needs at least one node", validation_type="graph_shape"
            )
        if np.any(weights < 0):
            raise ResilientValidationError(
                "consensus weights must be non-negative", validation_type="graph_weight"
            )
        if np.any(np.diag(weights) <= 0):
            raise ResilientValidationError(
                "every node needs a positive self-loop weight",
                validation_type="graph_self_loop",
            )
        row_error = float(np.max(np.abs(weights.sum(axis=1) - 1.0)))
        if row_error > ROW_SUM_TOLERANCE:
            raise ResilientValidationError(
                "consensus weights must be row-stochastic",
                validation_type="graph_row_sum",
                invalid_value=row_error,
            )

    @property
    def n_nodes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def nu(self) -> float:
        """保持されている重みの最小値 ν"""
        return float(np.min(self.weights[self.weights > 0]))

    def in_neighbors(self, node: int) -> tuple[int, ...]:
        """自分自身を含む入近傍（昇順）"""
        return tuple(int(j) for j in np.flatnonzero(self.weights[node] > 0))

    def out_neighbors(self, node: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.weights[:, node] > 0))

    def edges(self) -> list[tuple[int, int]]:
        """自己ループを除く (src, dst) の一覧"""
        return [
            (j, i)
            for i in range(self.n_nodes)
            for j in self.in_neighbors(i)
            if j != i
        ]

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n_nodes))
        graph.add_edges_from(self.edges())
        return graph

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Edge]) -> CommGraph:
        """``(src, dst)`` または ``(src, dst, weight)`` の列からグラフを作る

        重みを省いたノードは自己ループを含め一様重み、重みを与えたノードは
        残りを自己ループに割り当てる。
        """
        if n_nodes < 1:
            raise ResilientValidationError(
                "graph needs at least one node",
                validation_type="graph_shape",
                invalid_value=n_nodes,
            )
        incoming: list[dict[int, float | None]] = [{} for _ in range(n_nodes)]
        for edge in edges:
            src, dst = int(edge[0]), int(edge[1])
            weight = float(edge[2]) if len(edge) > 2 else None  # type: ignore[misc]
            for node in (src, dst):
                if not 0 <= node < n_nodes:
                    raise ResilientValidationError(
                        f"edge endpoint {node} outside [0, {n_nodes})",
                        validation_type="graph_edge",
                        invalid_value=(src, dst),
                    )
            if src == dst:
                continue
            incoming[dst][src] = weight

        weights = np.zeros((n_nodes, n_nodes))
        for node, sources in enumerate(incoming):
            given = [w for w in sources.values() if w is not None]
            if not given:
                share = 1.0 / (len(sources) + 1)
                weights[node, node] = share
                for src in sources:
                    weights[node, src] = share
                continue
            if len(given) != len(sources):
                raise ResilientValidationError(
                    "in-edges of a node must be all weighted or all unweighted",
                    validation_type="graph_weight",
                    invalid_value=node,
                )
            for src, w in sources.items():
                if w is None or w <= 0:
                    raise ResilientValidationError(
                        "edge weights must be positive",
                        validation_type="graph_weight",
                        invalid_value=(src, node, w),
                    )
                weights[node, src] = w
            weights[node, node] = 1.0 - float(sum(given))
        return cls(weights=weights)

    @classmethod
    def complete(cls, n_nodes: int) -> CommGraph:
        return cls(weights=np.full((n_nodes, n_nodes), 1.0 / n_nodes))

    @classmethod
    def directed_cycle(cls, n_nodes: int) -> CommGraph:
        """i → i+1 (mod n) の有向閉路"""
        return cls.from_edges(n_nodes, [(i, (i + 1) % n_nodes) for i in range(n_nodes)])

    @classmethod
    def load_edge_list(cls, path: str | Path, n_nodes: int | None = None) -> CommGraph:
        """``src dst [weight]`` 形式のテキストを読み込む（#以降はコメント）"""
        file_path = Path(path)
        try:
            lines = file_path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise ResilientFileError(
                f"Cannot read edge list: {e!s}",
                file_path=str(file_path),
                operation="read",
                suggestion="Check the graph path in the configuration",
            ) from e

        edges: list[Edge] = []
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if len(parts) == 2:
                    edges.append((int(parts[0]), int(parts[1])))
                elif len(parts) == 3:
                    edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
                else:
                    raise ValueError(f"expected 2 or 3 fields, got {len(parts)}")
            except ValueError as e:
                raise ResilientValidationError(
                    f"Malformed edge on line {lineno}: {e!s}",
                    validation_type="edge_list",
                    invalid_value=f"{file_path}:{lineno}",
                    expected_format="src dst [weight]",
                ) from e

        if n_nodes is None:
            n_nodes = 1 + max((max(e[0], e[1]) for e in edges), default=0)
        return cls.from_edges(n_nodes, edges)


def project_error(
    received: FloatArray, own: FloatArray, feature: FloatArray, alpha: float
) -> float:
    """受信パラメータとの差を特徴方向へ射影し、送信側のSGD誤差を推定する"""
    if alpha <= 0:
        raise ResilientValidationError(
            "step size must be positive",
            validation_type="step_size",
            invalid_value=alpha,
        )
    if not (received.shape == own.shape == feature.shape):
        raise ResilientValidationError(
            "project_error: dimension mismatch",
            validation_type="dimension",
            invalid_value=(received.shape, own.shape, feature.shape),
        )
    norm_sq = float(feature @ feature)
    if norm_sq == 0.0:
        raise DegenerateFeatureError(
            "Projection direction is the zero vector", feature_norm=0.0
        )
    return float(feature @ (received - own)) / (alpha * norm_sq)


def batch_project_errors(
    differences: FloatArray, gram: FloatArray, alpha: float, batch_size: int
) -> FloatArray:
    """バッチ平均SGDのメッセージから送信者毎・サンプル毎の誤差を推定する

    ``differences[j, b]`` は送信者 ``j`` の差分を ``b`` 番目の方向へ射影した値、
    ``gram`` はそれらの方向のグラム行列。送信側が ``x + α/B Σ_b δ_b g_b`` を
    送ったなら δ を復元する（方向が一次従属なら最小ノルム解）。
    """
    if alpha <= 0:
        raise ResilientValidationError(
            "step size must be positive",
            validation_type="step_size",
            invalid_value=alpha,
        )
    n_samples = gram.shape[0]
    if gram.shape != (n_samples, n_samples) or differences.shape[1:] != (n_samples,):
        raise ResilientValidationError(
            "batch_project_errors: dimension mismatch",
            validation_type="dimension",
            invalid_value=(differences.shape, gram.shape),
        )
    solution = np.linalg.lstsq(gram, differences.T, rcond=None)[0]
    return np.asarray(batch_size * solution.T / alpha)


def trim_select(errors: Mapping[int, float], own_id: int, trim: int) -> tuple[int, ...]:
    """自分の値より厳密に大きい値と小さい値をそれぞれ最大H個取り除く"""
    if own_id not in errors:
        raise ResilientValidationError(
            "own error missing from the candidate set",
            validation_type="own_id",
            invalid_value=own_id,
        )
    if trim < 0:
        raise ResilientValidationError(
            "trim parameter H must be non-negative",
            validation_type="trim",
            invalid_value=trim,
        )
    own = errors[own_id]
    others = sorted(j for j in errors if j != own_id)
    larger = sorted((j for j in others if errors[j] > own), key=lambda j: -errors[j])
    smaller = sorted((j for j in others if errors[j] < own), key=lambda j: errors[j])
    removed = set(larger[:trim]) | set(smaller[:trim])
    return tuple(j for j in sorted(errors) if j not in removed)


def aggregate(
    errors: Mapping[int, float],
    retained: Sequence[int],
    weights: Mapping[int, float] | None = None,
) -> float:
    """保持された誤差の凸結合（重み省略時は一様）"""
    if not retained:
        raise ResilientValidationError(
            "cannot aggregate an empty set", validation_type="retained"
        )
    ids = sorted(retained)
    if weights is None:
        return float(np.mean([errors[j] for j in ids]))

    coeffs = np.array([weights[j] for j in ids])
    if np.any(coeffs <= 0) or abs(float(coeffs.sum()) - 1.0) > ROW_SUM_TOLERANCE:
        raise ResilientValidationError(
            "aggregation weights must be positive and sum to 1",
            validation_type="aggregation_weights",
            invalid_value=coeffs.tolist(),
        )
    return float(coeffs @ np.array([errors[j] for j in ids]))


def consensus_apply(
    own: FloatArray, alpha: float, error: float, feature: FloatArray
) -> FloatArray:
    return np.asarray(own + alpha * error * feature)


def elementwise_trimmed_mean(vectors: Sequence[FloatArray], trim: int) -> FloatArray:
    """座標毎に大きい方・小さい方からH個ずつ捨てて平均する"""
    if len(vectors) <= 2 * trim:
        raise ResilientValidationError(
            "trimmed mean needs more than 2H vectors",
            validation_type="trimmed_mean",
            invalid_value=len(vectors),
            expected_format=f"> {2 * trim}",
        )
    shapes = {np.shape(v) for v in vectors}
    if len(shapes) != 1:
        raise ResilientValidationError(
            "trimmed mean: dimension mismatch",
            validation_type="dimension",
            invalid_value=sorted(shapes),
        )
    stacked = np.sort(np.vstack(vectors), axis=0)
    return np.asarray(stacked[trim : len(vectors) - trim].mean(axis=0))


def disagreement_norm(params: Sequence[FloatArray]) -> float:
    """全エージェント平均からの偏差（不一致部分空間への射影）のノルム"""
    if not params:
        return 0.0
    shapes = {np.shape(p) for p in params}
    if len(shapes) != 1:
        raise ResilientValidationError(
            "disagreement_norm: dimension mismatch",
            validation_type="dimension",
            invalid_value=sorted(shapes),
        )
    stacked = np.vstack(params)
    return float(np.linalg.norm(stacked - stacked.mean(axis=0)))


def _in_masks(graph: CommGraph) -> list[int]:
    return [
        sum(1 << j for j in graph.in_neighbors(i) if j != i)
        for i in range(graph.n_nodes)
    ]


def is_zeta_reachable(graph: CommGraph, subset: Iterable[int], zeta: int) -> bool:
    """部分集合内のどこかのノードが外部に ζ 個以上の入近傍を持つか"""
    members = set(subset)
    if not members:
        raise ResilientValidationError(
            "subset must be nonempty", validation_type="subset"
        )
    return any(
        sum(1 for j in graph.in_neighbors(i) if j not in members) >= zeta
        for i in members
    )


def _reachable_table(graph: CommGraph, zeta: int) -> FloatArray:
    """全部分集合（ビットマスク）について ζ-到達可能かを表にする"""
    n = graph.n_nodes
    masks = np.arange(1 << n, dtype=np.int64)
    popcount = np.zeros(1 << n, dtype=np.int64)
    for b in range(n):
        popcount += (masks >> b) & 1
    full = (1 << n) - 1
    reachable = np.zeros(1 << n, dtype=bool)
    for i, in_mask in enumerate(_in_masks(graph)):
        member = ((masks >> i) & 1).astype(bool)
        outside = popcount[in_mask & (full & ~masks)]
        reachable |= member & (outside >= zeta)
    return reachable


def is_zeta_robust(graph: CommGraph, zeta: int) -> bool:
    """互いに素な空でない部分集合の全ての組で、少なくとも一方が ζ-到達可能か"""
    n = graph.n_nodes
    if n < 2:
        raise ResilientValidationError(
            "robustness is defined for graphs with at least two nodes",
            validation_type="graph_size",
            invalid_value=n,
        )
    if n > ROBUSTNESS_NODE_CAP:
        raise ResilientCapacityError(
            "exhaustive robustness check is limited to small graphs",
            limit=ROBUSTNESS_NODE_CAP,
            requested=n,
        )
    if zeta <= 0:
        return True

    stuck = ~_reachable_table(graph, zeta)
    stuck[0] = False
    # has_stuck[m]: m の空でない部分集合に到達不能なものがある
    has_stuck = stuck.copy()
    masks = np.arange(1 << n, dtype=np.int64)
    for b in range(n):
        with_bit = masks[((masks >> b) & 1) == 1]
        has_stuck[with_bit] |= has_stuck[with_bit ^ (1 << b)]

    full = (1 << n) - 1
    stuck_sets = masks[stuck]
    return not bool(np.any(has_stuck[full & ~stuck_sets]))


def max_robustness(graph: CommGraph) -> int:
    """グラフが ζ-ロバストとなる最大の ζ"""
    best = 0
    for zeta in range(1, (graph.n_nodes + 1) // 2 + 1):
        if not is_zeta_robust(graph, zeta):
            break
        best = zeta
    return best


def node_connectivity(graph: CommGraph) -> int:
    """有向グラフの点連結度"""
    return int(nx.node_connectivity(graph.to_networkx()))


@dataclass(frozen=True)
class ContainmentViolation:
    agent_id: int
    channel: str
    aggregated: float
    hull: tuple[float, float]
    round_index: int | None = None


@dataclass
class ContainmentMonitor:
    """集約誤差が協調エージェントの誤差の凸包に入っているかを毎ステップ検査する

    凸包は自分自身と全ての協調入近傍（トリミングで除かれたものも含む）の誤差で作る。
    """

    cooperative: frozenset[int]
    tolerance: float = 1e-9
    checks: int = 0
    violations: list[ContainmentViolation] = field(default_factory=list)
    round_index: int | None = None

    def check(
        self,
        agent_id: int,
        errors: Mapping[int, float],
        aggregated: float,
        channel: str = "v",
    ) -> bool:
        honest = [errors[j] for j in errors if j in self.cooperative or j == agent_id]
        lo, hi = min(honest), max(honest)
        slack = self.tolerance * max(1.0, abs(lo), abs(hi))
        self.checks += 1
        if lo - slack <= aggregated <= hi + slack:
            return True

        violation = ContainmentViolation(
            agent_id=agent_id,
            channel=channel,
            aggregated=aggregated,
            hull=(lo, hi),
            round_index=self.round_index,
        )
        self.violations.append(violation)
        logger.error(
            "Aggregated error left the cooperative hull",
            extra={
                "context": {
                    **create_round_context(
                        round_index=self.round_index, agent_id=agent_id
                    ),
                    "channel": channel,
                    "aggregated": aggregated,
                    "hull": f"[{lo}, {hi}]",
                }
            },
        )
        return False

    @property
    def ok(self) -> bool:
        return not self.violations


def resilient_error(
    errors: Mapping[int, float],
    own_id: int,
    trim: int,
    monitor: ContainmentMonitor | None = None,
    channel: str = "v",
) -> float:
    """トリミングと一様重み集約で合意誤差を求め、監視器があれば凸包検査を行う"""
    retained = trim_select(errors, own_id, trim)
    aggregated = aggregate(errors, retained)
    if monitor is not None:
        monitor.check(own_id, errors, aggregated, channel)
    return aggregated


def log_degenerate_step(agent_id: int, channel: str, feature_norm: float = 0.0) -> None:
    logger.warning(
        "Degenerate projection direction, consensus step skipped",
        extra={
            "context": {
                "agent_id": agent_id,
                "channel": channel,
                "feature_norm": feature_norm,
            }
        },
    )
