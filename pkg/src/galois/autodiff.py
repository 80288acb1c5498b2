"""Minimal reverse-mode tape over the operations soft deduction needs.

Values are numpy float64 arrays (scalars are 0-d arrays).  Each op records its
inputs and enough forward values to replay the chain rule in reverse.  One
tape serves one rollout; seeding several output slots at once and running a
single backward pass yields the gradient of the seeded linear combination,
which is exactly the shape of a policy-gradient objective.
"""
from __future__ import annotations

import numpy as np

from .errors import TapeError


class Tape:
    __slots__ = ("ops", "values", "named_leaves")

    def __init__(self):
        # op record: (name, output_slot, input_slots, aux)
        self.ops: list[tuple] = []
        self.values: list[np.ndarray] = []
        # label -> slots; lets one backward pass aggregate the gradient of
        # every leaf standing for the same parameter vector
        self.named_leaves: dict = {}

    def __len__(self) -> int:
        return len(self.values)

    def _push(self, value: np.ndarray, name: str, inputs: tuple[int, ...], aux=None) -> int:
        slot = len(self.values)
        self.values.append(value)
        if name != "leaf":
            self.ops.append((name, slot, inputs, aux))
        return slot

    def value(self, slot: int) -> np.ndarray:
        return self.values[slot]

    # -- node constructors -------------------------------------------------

    def leaf(self, value, label=None) -> int:
        slot = self._push(np.asarray(value, dtype=np.float64), "leaf", ())
        if label is not None:
            self.named_leaves.setdefault(label, []).append(slot)
        return slot

    def aggregate(self, adjoints: dict[int, np.ndarray]) -> dict:
        """Sum adjoints over every leaf sharing a label."""
        out = {}
        for label, slots in self.named_leaves.items():
            total = None
            for slot in slots:
                g = adjoints.get(slot)
                if g is None:
                    continue
                total = g if total is None else total + g
            if total is not None:
                out[label] = total
        return out

    def softmax(self, a: int) -> int:
        x = self.values[a]
        z = np.exp(x - np.max(x))
        w = z / np.sum(z)
        return self._push(w, "softmax", (a,))

    def gather(self, a: int, idx) -> int:
        idx = np.asarray(idx, dtype=np.intp)
        return self._push(self.values[a][idx], "gather", (a,), idx)

    def mul(self, a: int, b: int) -> int:
        return self._push(self.values[a] * self.values[b], "mul", (a, b))

    def add(self, a: int, b: int) -> int:
        return self._push(self.values[a] + self.values[b], "add", (a, b))

    def one_minus(self, a: int) -> int:
        return self._push(1.0 - self.values[a], "one_minus", (a,))

    def prob_sum(self, a: int, b: int) -> int:
        x, y = self.values[a], self.values[b]
        return self._push(x + y - x * y, "prob_sum", (a, b))

    def dot(self, a: int, b: int) -> int:
        return self._push(np.asarray(np.dot(self.values[a], self.values[b])), "dot", (a, b))

    def total(self, a: int) -> int:
        return self._push(np.asarray(np.sum(self.values[a])), "total", (a,))

    def div(self, a: int, b: int) -> int:
        """Elementwise a / b; b may be a scalar broadcast over a."""
        return self._push(self.values[a] / self.values[b], "div", (a, b))

    def log(self, a: int) -> int:
        return self._push(np.log(self.values[a]), "log", (a,))

    def scalar_mul(self, a: int, c: float) -> int:
        return self._push(self.values[a] * c, "scalar_mul", (a,), c)

    def assemble(self, pieces: list[int], positions: list, size: int) -> int:
        """Scatter slot values (scalars or vectors) into one fresh vector.

        positions[i] gives the target index (or index array) for pieces[i];
        every target index must be written exactly once or left zero.
        """
        out = np.zeros(size)
        for slot, pos in zip(pieces, positions):
            out[pos] = self.values[slot]
        return self._push(out, "assemble", tuple(pieces), tuple(positions))

    def concat(self, pieces: list[int]) -> int:
        vals = [np.atleast_1d(self.values[p]) for p in pieces]
        out = np.concatenate(vals) if vals else np.zeros(0)
        lengths = tuple(v.size for v in vals)
        return self._push(out, "concat", tuple(pieces), lengths)

    def segment_sum(self, a: int, seg_ids: np.ndarray, n_segments: int) -> int:
        out = np.zeros(n_segments)
        np.add.at(out, seg_ids, self.values[a])
        return self._push(out, "segment_sum", (a,), seg_ids)

    def entropy(self, a: int) -> int:
        """-sum(p * log p) with the 0*log(0) = 0 convention.

        At exact-zero coordinates the derivative is taken as 0 (the one-hot
        limit, reached only after convergence).
        """
        p = self.values[a]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0.0, p * np.log(np.maximum(p, 1e-300)), 0.0)
        return self._push(np.asarray(-np.sum(terms)), "entropy", (a,))

    # -- reverse pass ------------------------------------------------------

    def backward(self, seeds: dict[int, float]) -> dict[int, np.ndarray]:
        """Accumulate d(sum_i seeds[i] * out_i)/d(slot) for every slot.

        Returns the full adjoint map; callers read off their leaf slots.
        """
        if not seeds:
            raise TapeError("no seed slots given")
        for slot in seeds:
            if not 0 <= slot < len(self.values):
                raise TapeError(f"seed slot {slot} not on tape")
        adj: dict[int, np.ndarray] = {}
        for slot, g in seeds.items():
            grad = np.asarray(g, dtype=np.float64)
            if grad.shape != self.values[slot].shape:
                grad = np.broadcast_to(grad, self.values[slot].shape).copy()
            _acc(adj, slot, grad)

        for name, out, inputs, aux in reversed(self.ops):
            if out not in adj:
                continue
            g = adj[out]
            if name == "softmax":
                w = self.values[out]
                _acc(adj, inputs[0], w * (g - np.dot(g, w)))
            elif name == "gather":
                src = np.zeros_like(self.values[inputs[0]])
                np.add.at(src, aux, g)
                _acc(adj, inputs[0], src)
            elif name == "mul":
                a, b = inputs
                _acc(adj, a, _unbroadcast(g * self.values[b], self.values[a].shape))
                _acc(adj, b, _unbroadcast(g * self.values[a], self.values[b].shape))
            elif name == "add":
                a, b = inputs
                _acc(adj, a, _unbroadcast(g, self.values[a].shape))
                _acc(adj, b, _unbroadcast(g, self.values[b].shape))
            elif name == "one_minus":
                _acc(adj, inputs[0], -g)
            elif name == "prob_sum":
                a, b = inputs
                _acc(adj, a, _unbroadcast(g * (1.0 - self.values[b]), self.values[a].shape))
                _acc(adj, b, _unbroadcast(g * (1.0 - self.values[a]), self.values[b].shape))
            elif name == "dot":
                a, b = inputs
                _acc(adj, a, g * self.values[b])
                _acc(adj, b, g * self.values[a])
            elif name == "total":
                _acc(adj, inputs[0], np.full_like(self.values[inputs[0]], float(g)))
            elif name == "div":
                a, b = inputs
                va, vb = self.values[a], self.values[b]
                _acc(adj, a, _unbroadcast(g / vb, va.shape))
                _acc(adj, b, _unbroadcast(-g * va / (vb * vb), vb.shape))
            elif name == "log":
                _acc(adj, inputs[0], g / self.values[inputs[0]])
            elif name == "scalar_mul":
                _acc(adj, inputs[0], g * aux)
            elif name == "assemble":
                for slot, pos in zip(inputs, aux):
                    piece = self.values[slot]
                    grad = g[pos]
                    if piece.shape == ():
                        grad = np.asarray(np.sum(grad))
                    _acc(adj, slot, grad)
            elif name == "concat":
                offset = 0
                for slot, length in zip(inputs, aux):
                    grad = g[offset:offset + length]
                    if self.values[slot].shape == ():
                        grad = np.asarray(grad[0])
                    _acc(adj, slot, grad)
                    offset += length
            elif name == "segment_sum":
                _acc(adj, inputs[0], g[aux])
            elif name == "entropy":
                p = self.values[inputs[0]]
                with np.errstate(divide="ignore"):
                    d = np.where(p > 0.0, -(np.log(np.maximum(p, 1e-300)) + 1.0), 0.0)
                _acc(adj, inputs[0], float(g) * d)
            else:  # pragma: no cover
                raise TapeError(f"unknown op {name}")
        return adj


def _acc(adj: dict[int, np.ndarray], slot: int, grad: np.ndarray) -> None:
    if slot in adj:
        adj[slot] = adj[slot] + grad
    else:
        adj[slot] = np.array(grad, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(np.sum(grad))
    # Only scalar<->vector broadcasting occurs in this engine.
    raise TapeError(f"cannot reduce grad {grad.shape} to {shape}")
