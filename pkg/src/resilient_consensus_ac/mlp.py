"""平坦パラメータベクトル上の小規模な多層パーセプトロン"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .exceptions import ResilientFileError, ResilientValidationError

if TYPE_CHECKING:
    from .types import FloatArray

DEFAULT_SLOPE = 0.01
CHECKPOINT_MAGIC = "resilient-ac-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Mlp:
    """層サイズで決まるMLPの構造

    パラメータは1本の平坦ベクトルで表し、各層を (W: 出力×入力 の row-major,
    b) の順で並べる。最終層を出力ブロック、それ以前を隠れブロックと呼ぶ。
    """

    layer_sizes: tuple[int, ...]
    slope: float = DEFAULT_SLOPE
    use_bias: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 2 or any(n < 1 for n in self.layer_sizes):
            raise ResilientValidationError(
                "MLP needs an input size, an output size and positive widths",
                validation_type="layer_sizes",
                invalid_value=self.layer_sizes,
            )
        if self.slope < 0:
            raise ResilientValidationError(
                "leaky slope must be non-negative",
                validation_type="slope",
                invalid_value=self.slope,
            )

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def _layer_size(self, k: int) -> int:
        fan_in, fan_out = self.layer_sizes[k], self.layer_sizes[k + 1]
        return fan_out * fan_in + (fan_out if self.use_bias else 0)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def hidden_size(self) -> int:
        """隠れブロックのパラメータ数"""
        return sum(self._layer_size(k) for k in range(self.n_layers - 1))

    @property
    def n_params(self) -> int:
        return self.hidden_size + self._layer_size(self.n_layers - 1)

    def split(self, params: FloatArray) -> tuple[FloatArray, FloatArray]:
        """平坦ベクトルを (隠れブロック, 出力ブロック) に分ける"""
        self._check_params(params)
        return params[: self.hidden_size], params[self.hidden_size :]

    def join(self, hidden: FloatArray, output: FloatArray) -> FloatArray:
        return np.concatenate([hidden, output])

    def unpack(self, params: FloatArray) -> list[tuple[FloatArray, FloatArray | None]]:
        self._check_params(params)
        layers: list[tuple[FloatArray, FloatArray | None]] = []
        offset = 0
        for k in range(self.n_layers):
            fan_in, fan_out = self.layer_sizes[k], self.layer_sizes[k + 1]
            weight = params[offset : offset + fan_out * fan_in].reshape(fan_out, fan_in)
            offset += fan_out * fan_in
            bias = None
            if self.use_bias:
                bias = params[offset : offset + fan_out]
                offset += fan_out
            layers.append((weight, bias))
        return layers

    def init_params(self, seed: int) -> FloatArray:
        """各層を一様分布 [−1/√fan_in, 1/√fan_in] で初期化する"""
        rng = np.random.default_rng(seed)
        blocks = []
        for k in range(self.n_layers):
            fan_in, fan_out = self.layer_sizes[k], self.layer_sizes[k + 1]
            bound = 1.0 / math.sqrt(fan_in)
            blocks.append(rng.uniform(-bound, bound, size=fan_out * fan_in))
            if self.use_bias:
                blocks.append(rng.uniform(-bound, bound, size=fan_out))
        return np.concatenate(blocks)

    def zeros(self) -> FloatArray:
        return np.zeros(self.n_params)

    def _check_params(self, params: FloatArray) -> None:
        if params.shape != (self.n_params,):
            raise ResilientValidationError(
                "parameter vector does not match the architecture",
                validation_type="dimension",
                invalid_value=params.shape,
                expected_format=f"({self.n_params},)",
            )

    def _check_input(self, x: FloatArray) -> None:
        if x.shape != (self.n_inputs,):
            raise ResilientValidationError(
                "input does not match the network input size",
                validation_type="dimension",
                invalid_value=x.shape,
                expected_format=f"({self.n_inputs},)",
            )

    def _activate(self, z: FloatArray) -> FloatArray:
        return np.where(z > 0, z, self.slope * z)

    def _forward_cache(
        self, params: FloatArray, x: FloatArray
    ) -> tuple[list[FloatArray], list[FloatArray], FloatArray]:
        self._check_input(x)
        activations = [x]
        pre_activations: list[FloatArray] = []
        h = x
        layers = self.unpack(params)
        for k, (weight, bias) in enumerate(layers):
            z = weight @ h
            if bias is not None:
                z = z + bias
            if k == len(layers) - 1:
                return activations, pre_activations, z
            pre_activations.append(z)
            h = self._activate(z)
            activations.append(h)
        raise AssertionError("unreachable")

    def forward(self, params: FloatArray, x: FloatArray) -> FloatArray:
        return self._forward_cache(params, x)[2]

    def value(self, params: FloatArray, x: FloatArray) -> float:
        """スカラー出力のネットワークの値"""
        return float(self.forward(params, x)[0])

    def backward(
        self,
        params: FloatArray,
        x: FloatArray,
        upstream: FloatArray | None = None,
    ) -> FloatArray:
        """出力に対する上流勾配（省略時はスカラー出力の1）を全パラメータへ逆伝播する"""
        activations, pre_activations, _ = self._forward_cache(params, x)
        grad_out = np.ones(self.n_outputs) if upstream is None else np.asarray(upstream)
        if grad_out.shape != (self.n_outputs,):
            raise ResilientValidationError(
                "upstream gradient does not match the output size",
                validation_type="dimension",
                invalid_value=grad_out.shape,
            )

        layers = self.unpack(params)
        blocks: list[FloatArray] = []
        delta = grad_out
        for k in range(self.n_layers - 1, -1, -1):
            weight, _ = layers[k]
            layer_grad = [np.outer(delta, activations[k]).ravel()]
            if self.use_bias:
                layer_grad.append(delta.copy())
            blocks = layer_grad + blocks
            if k > 0:
                z = pre_activations[k - 1]
                delta = (weight.T @ delta) * np.where(z > 0, 1.0, self.slope)
        return np.concatenate(blocks)

    def output_gradient(self, params: FloatArray, x: FloatArray) -> FloatArray:
        """出力ブロックに関するスカラー出力の勾配（最終隠れ層の活性と1）"""
        activations, _, _ = self._forward_cache(params, x)
        last = activations[-1]
        return np.concatenate([last, [1.0]]) if self.use_bias else last.copy()


def save_checkpoint(path: str | Path, mlp: Mlp, params: FloatArray, seed: int) -> None:
    """1行のテキストヘッダーに続けてリトルエンディアンfloat64配列を書き出す"""
    if params.shape != (mlp.n_params,):
        raise ResilientValidationError(
            "parameter vector does not match the architecture",
            validation_type="dimension",
            invalid_value=params.shape,
        )
    header = (
        f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} "
        f"layers={','.join(str(n) for n in mlp.layer_sizes)} "
        f"slope={mlp.slope!r} bias={int(mlp.use_bias)} seed={seed} "
        f"count={mlp.n_params}\n"
    )
    file_path = Path(path)
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with file_path.open("wb") as handle:
            handle.write(header.encode("ascii"))
            handle.write(np.asarray(params, dtype="<f8").tobytes())
    except OSError as e:
        raise ResilientFileError(
            f"Cannot write checkpoint: {e!s}",
            file_path=str(file_path),
            operation="write",
        ) from e


def load_checkpoint(path: str | Path) -> tuple[Mlp, FloatArray, int]:
    """``save_checkpoint`` の出力から (構造, パラメータ, シード) を復元する"""
    file_path = Path(path)
    try:
        raw = file_path.read_bytes()
    except OSError as e:
        raise ResilientFileError(
            f"Cannot read checkpoint: {e!s}",
            file_path=str(file_path),
            operation="read",
        ) from e

    newline = raw.find(b"\n")
    if newline < 0:
        raise ResilientValidationError(
            "checkpoint header is missing", validation_type="checkpoint"
        )
    tokens = raw[:newline].decode("ascii", errors="replace").split()
    if len(tokens) < 2 or tokens[0] != CHECKPOINT_MAGIC:
        raise ResilientValidationError(
            "not a checkpoint file",
            validation_type="checkpoint",
            invalid_value=str(file_path),
        )
    fields = dict(token.split("=", 1) for token in tokens[2:] if "=" in token)
    try:
        mlp = Mlp(
            layer_sizes=tuple(int(n) for n in fields["layers"].split(",")),
            slope=float(fields["slope"]),
            use_bias=fields["bias"] == "1",
        )
        seed = int(fields["seed"])
        count = int(fields["count"])
    except (KeyError, ValueError) as e:
        raise ResilientValidationError(
            f"malformed checkpoint header: {e!s}", validation_type="checkpoint"
        ) from e

    params = np.frombuffer(raw[newline + 1 :], dtype="<f8").astype(np.float64)
    if count != mlp.n_params or params.shape != (count,):
        raise ResilientValidationError(
            "checkpoint payload length does not match its header",
            validation_type="checkpoint",
            invalid_value=params.shape,
            expected_format=f"({count},)",
        )
    return mlp, params, seed
