"""Tensors and the reverse-mode tape."""
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from autodiff.errors import AutodiffError, TapeMismatchError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass(eq=False)
class Tensor:
    """Float64 array, optionally tied to a node on a tape.

    Attributes:
        value: Array of values
        tape: Tape the tensor was recorded on; None for constants
        node: Node id on the tape; None for constants
    """

    value: np.ndarray
    tape: "Tape | None" = None
    node: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.value)))

    def item(self) -> float:
        return float(self.value.item())


def constant(value) -> Tensor:
    return Tensor(np.asarray(value, dtype=np.float64))


@dataclass
class _Node:
    parents: tuple[int | None, ...]
    backward: BackwardFn | None


class Gradients:
    """Gradients of one backward pass, looked up by tensor."""

    def __init__(self, tape: "Tape", grads: dict[int, np.ndarray]):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        if tensor.tape is not self._tape:
            raise TapeMismatchError("Tensor was not recorded on this tape")
        grad = self._grads.get(tensor.node)
        return np.zeros_like(tensor.value) if grad is None else grad


@dataclass(eq=False)
class Tape:
    """Ordered record of operations; recording order is a topological order.

    `relu_margin` tracks the smallest |input| any ReLU on this tape has seen, so
    callers can tell how close a computation sits to a kink.
    """

    nodes: list[_Node] = field(default_factory=list)
    relu_margin: float = float("inf")

    def variable(self, value) -> Tensor:
        """Register a leaf tensor whose gradient is wanted."""
        self.nodes.append(_Node(parents=(), backward=None))
        return Tensor(np.array(value, dtype=np.float64), tape=self, node=len(self.nodes) - 1)

    def record(self, value: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
        for parent in parents:
            if parent.tape is not None and parent.tape is not self:
                raise TapeMismatchError("Operands belong to different tapes")
        self.nodes.append(_Node(parents=tuple(p.node for p in parents), backward=backward))
        return Tensor(value, tape=self, node=len(self.nodes) - 1)

    def backward(self, loss: Tensor) -> Gradients:
        """Accumulate d loss / d node for every node reachable from a scalar loss."""
        if loss.tape is not self:
            raise TapeMismatchError("Loss was not recorded on this tape")
        if loss.value.size != 1:
            raise AutodiffError(f"Backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.value)}
        for node_id in range(loss.node, -1, -1):
            upstream = grads.get(node_id)
            node = self.nodes[node_id]
            if upstream is None or node.backward is None:
                continue
            for parent, grad in zip(node.parents, node.backward(upstream)):
                if parent is None or grad is None:
                    continue
                if parent in grads:
                    grads[parent] = grads[parent] + grad
                else:
                    grads[parent] = grad
        return Gradients(self, grads)
