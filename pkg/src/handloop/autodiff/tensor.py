"""Dense float64 tensors with a define-by-run tape for reverse-mode gradients."""
import threading

import numpy as np

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Node:
    __slots__ = ("op", "inputs", "output", "backward_fn", "tape", "index")

    def __init__(self, op, inputs, output, backward_fn, tape, index):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.tape = tape
        self.index = index


class Tape:
    """Append-only record of operations, in creation order.

    Operations are recorded only while a tape is active (``with Tape():``) and
    at least one operand is tracked. A new tape is opened for every forward
    pass that needs gradients; ``backward`` must run before the ``with`` block
    ends, since leaving it releases the graph.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        self.release()
        return False

    def release(self):
        """Drop the recorded graph; results become plain constants.

        Tensors and nodes reference each other, so without this the saved
        activations would linger until the cyclic garbage collector runs.
        """
        for node in self.nodes:
            if node.output is not None:
                node.output._node = None
            node.output = None
            node.inputs = ()
            node.backward_fn = None
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def record(self, op, inputs, output, backward_fn):
        node = Node(op, inputs, output, backward_fn, self, len(self.nodes))
        self.nodes.append(node)
        output._node = node

    def backward(self, loss):
        if loss._node is None or loss._node.tape is not self:
            raise ValueError("loss was not produced on this tape")
        backward(loss)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def tracked(self):
        return self.requires_grad or self._node is not None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return ops.mul(self, 1.0 / other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data, op, inputs, backward_fn):
    """Wrap ``data`` as the output of ``op`` and record it if gradients can flow."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.grad = None
    out._node = None
    out.name = None
    tape = active_tape()
    if tape is not None and any(t.tracked for t in inputs):
        tape.record(op, inputs, out, backward_fn)
    return out


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Nodes are visited once each, in reverse insertion order. A tensor used by
    several consumers receives the sum of their contributions. Calling this
    again without zeroing grads accumulates.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    if loss._node is None:
        if not loss.requires_grad:
            raise ValueError("loss is not attached to a tape and does not require grad")
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return
    tape = loss._node.tape
    grads = {id(loss): seed}
    for node in reversed(tape.nodes[: loss._node.index + 1]):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        needs = tuple(t.tracked for t in node.inputs)
        in_grads = node.backward_fn(g, needs)
        for inp, need, gi in zip(node.inputs, needs, in_grads):
            if not need or gi is None:
                continue
            if inp._node is None:
                inp.grad = np.array(gi, dtype=np.float64) if inp.grad is None else inp.grad + gi
            else:
                key = id(inp)
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
