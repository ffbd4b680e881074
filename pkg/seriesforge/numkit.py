# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""A minimal numeric kernel: dense float64 tensors, a tape recording
primitive applications, reverse-mode differentiation over that tape and a
seeded random number generator.

Differentiation is enabled by entering a ``Graph`` context. Parameters are
registered with ``Graph.leaf``; every primitive applied while the graph is
active and that touches a tracked tensor is appended to the tape. Tensors
created outside of an active graph are plain values and cost nothing more
than the underlying numpy operation.

    with Graph() as graph:
        w = graph.leaf(weights, "w")
        loss = (x @ w).square().mean()
        grads = backward(graph, loss)
"""
import abc
import threading
import typing

import numpy as np
import six


if typing.TYPE_CHECKING:
    from typing import Any  # noqa: F401
    from typing import Callable  # noqa: F401
    from typing import Dict  # noqa: F401
    from typing import List  # noqa: F401
    from typing import Optional  # noqa: F401
    from typing import Sequence  # noqa: F401
    from typing import Tuple  # noqa: F401


DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when the inputs of a primitive do not conform to its shape rules.

    Attributes:
        kind (str): the primitive kind
        shapes (tuple): the offending input shapes
    """

    def __init__(self, kind, shapes, detail=""):
        # type: (str, Sequence[Tuple[int, ...]], str) -> None
        self.kind = kind
        self.shapes = tuple(tuple(s) for s in shapes)
        message = "%s: incompatible shapes %s" % (
            kind,
            " and ".join(repr(s) for s in self.shapes),
        )
        if detail:
            message += " (%s)" % detail
        super(ShapeError, self).__init__(message)


class DomainError(ValueError):
    """Raised when a primitive receives inputs outside its domain.

    Attributes:
        kind (str): the primitive kind
        detail (str): the offending values
    """

    def __init__(self, kind, detail):
        # type: (str, str) -> None
        self.kind = kind
        self.detail = detail
        super(DomainError, self).__init__("%s: input outside the domain (%s)" % (kind, detail))


_state = threading.local()


def _active_graph():
    # type: () -> Optional[Graph]
    stack = getattr(_state, "graphs", None)
    if not stack:
        return None
    return stack[-1]


class Tensor(object):
    """A dense real array, optionally linked into a differentiation graph.

    Args:
        data (array-like): the values; converted to a float64 array
        node (int, optional): node identifier in ``graph``
        graph (Graph, optional): the graph the node belongs to
    """

    __slots__ = ("data", "node", "_graph")
    __array_priority__ = 100

    def __init__(self, data, node=None, graph=None):
        # type: (Any, Optional[int], Optional[Graph]) -> None
        self.data = np.asarray(data, dtype=DTYPE)
        self.node = node
        self._graph = graph

    def __repr__(self):
        # type: () -> str
        return "Tensor(shape=%r, node=%r)" % (self.shape, self.node)

    @property
    def shape(self):
        # type: () -> Tuple[int, ...]
        return self.data.shape

    @property
    def ndim(self):
        # type: () -> int
        return self.data.ndim

    @property
    def tracked(self):
        # type: () -> bool
        """Whether the tensor is a node of the currently active graph."""
        graph = _active_graph()
        return graph is not None and self._graph is graph and self.node is not None

    def numpy(self):
        # type: () -> np.ndarray
        return self.data

    def item(self):
        # type: () -> float
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor, got shape %r" % (self.shape,))
        return float(self.data.reshape(()))

    def __add__(self, other):
        if isinstance(other, Tensor):
            return forward_primitive("add", [self, other])
        return forward_primitive("shift", [self], offset=float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return forward_primitive("sub", [self, other])
        return forward_primitive("shift", [self], offset=-float(other))

    def __rsub__(self, other):
        negated = forward_primitive("scale", [self], factor=-1.0)
        return forward_primitive("shift", [negated], offset=float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return forward_primitive("mul", [self, other])
        return forward_primitive("scale", [self], factor=float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return forward_primitive("scale", [self], factor=1.0 / float(other))

    def __neg__(self):
        return forward_primitive("scale", [self], factor=-1.0)

    def __matmul__(self, other):
        return forward_primitive("matmul", [self, other])

    def sigmoid(self):
        return forward_primitive("sigmoid", [self])

    def tanh(self):
        return forward_primitive("tanh", [self])

    def square(self):
        return forward_primitive("square", [self])

    def sqrt(self):
        return forward_primitive("sqrt", [self])

    def abs(self):  # noqa: A003
        return forward_primitive("abs", [self])

    def softplus(self):
        return forward_primitive("softplus", [self])

    def sum(self, axes=None):  # noqa: A003
        return forward_primitive("sum", [self], axes=axes)

    def mean(self, axes=None):
        return forward_primitive("mean", [self], axes=axes)

    def broadcast_to(self, shape):
        return forward_primitive("broadcast", [self], shape=tuple(shape))

    def select_time(self, index):
        return forward_primitive("select_time", [self], index=index)

    def slice_time(self, start=None, stop=None, step=None):
        return forward_primitive("slice_time", [self], start=start, stop=stop, step=step)

    def repeat_time(self, repeats):
        return forward_primitive("repeat_time", [self], repeats=repeats)


def as_tensor(value):
    # type: (Any) -> Tensor
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class _Record(object):
    __slots__ = ("kind", "inputs", "output", "values", "result", "attrs")

    def __init__(self, kind, inputs, output, values, result, attrs):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.values = values
        self.result = result
        self.attrs = attrs


class Graph(object):
    """A topologically ordered record of primitive applications.

    The graph is a context manager; entering it makes it the active graph of
    the current thread. Records are appended in evaluation order, so every
    record's inputs precede it.
    """

    def __init__(self):
        # type: () -> None
        self._records = []  # type: List[_Record]
        self._leaves = []  # type: List[Tuple[int, Optional[str], Tuple[int, ...]]]
        self._next_node = 0

    def __enter__(self):
        # type: () -> Graph
        stack = getattr(_state, "graphs", None)
        if stack is None:
            stack = _state.graphs = []
        stack.append(self)
        return self

    def __exit__(self, *exc_info):
        _state.graphs.pop()

    def __len__(self):
        # type: () -> int
        return len(self._records)

    def _new_node(self):
        # type: () -> int
        node = self._next_node
        self._next_node += 1
        return node

    def leaf(self, value, name=None):
        # type: (Any, Optional[str]) -> Tensor
        """Register a value as a leaf of the graph and return its tensor."""
        data = np.asarray(value, dtype=DTYPE)
        node = self._new_node()
        self._leaves.append((node, name, data.shape))
        return Tensor(data, node=node, graph=self)

    def leaves(self, params, prefix=""):
        # type: (Dict[str, np.ndarray], str) -> Dict[str, Tensor]
        """Register every array of a name -> array mapping as a leaf."""
        return {name: self.leaf(value, prefix + name) for name, value in params.items()}

    def named(self, grads):
        # type: (Dict[int, Tensor]) -> Dict[str, np.ndarray]
        """Re-key the gradients returned by ``backward`` by leaf name."""
        return {name: grads[node].data for node, name, _ in self._leaves if name is not None}

    def _record(self, kind, inputs, values, result, attrs):
        # type: (str, List[Optional[int]], List[np.ndarray], np.ndarray, Dict[str, Any]) -> Tensor
        node = self._new_node()
        self._records.append(_Record(kind, inputs, node, values, result, attrs))
        return Tensor(result, node=node, graph=self)


class Primitive(six.with_metaclass(abc.ABCMeta)):
    """A differentiable operation on tensors.

    Subclasses declare their ``kind`` and ``arity`` (``None`` for variadic),
    validate input shapes in ``check`` and implement ``forward`` and
    ``backward`` on raw arrays.
    """

    kind = ""
    arity = 1  # type: Optional[int]

    def check(self, shapes, attrs):
        # type: (List[Tuple[int, ...]], Dict[str, Any]) -> None
        """Raise ShapeError if the input shapes are not acceptable."""

    @abc.abstractmethod
    def forward(self, values, attrs):
        # type: (List[np.ndarray], Dict[str, Any]) -> np.ndarray
        """Compute the output value."""

    @abc.abstractmethod
    def backward(self, grad, values, result, attrs):
        # type: (np.ndarray, List[np.ndarray], np.ndarray, Dict[str, Any]) -> List[np.ndarray]
        """Return the gradient with respect to every input."""


def _normalize_axes(axes, ndim):
    # type: (Any, int) -> Tuple[int, ...]
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(sorted(a % ndim for a in axes))


def _unbroadcast(grad, shape):
    # type: (np.ndarray, Tuple[int, ...]) -> np.ndarray
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class _Elementwise(Primitive):
    arity = 2

    def check(self, shapes, attrs):
        if shapes[0] != shapes[1]:
            raise ShapeError(self.kind, shapes)


class Add(_Elementwise):
    kind = "add"

    def forward(self, values, attrs):
        return values[0] + values[1]

    def backward(self, grad, values, result, attrs):
        return [grad, grad]


class Sub(_Elementwise):
    kind = "sub"

    def forward(self, values, attrs):
        return values[0] - values[1]

    def backward(self, grad, values, result, attrs):
        return [grad, -grad]


class Mul(_Elementwise):
    kind = "mul"

    def forward(self, values, attrs):
        return values[0] * values[1]

    def backward(self, grad, values, result, attrs):
        return [grad * values[1], grad * values[0]]


class MatMul(Primitive):
    """(..., k) @ (k, m) -> (..., m); the right operand must be a matrix."""

    kind = "matmul"
    arity = 2

    def check(self, shapes, attrs):
        left, right = shapes
        if len(left) < 1 or len(right) != 2 or left[-1] != right[0]:
            raise ShapeError(self.kind, shapes)

    def forward(self, values, attrs):
        return np.matmul(values[0], values[1])

    def backward(self, grad, values, result, attrs):
        left, right = values
        grad_left = np.matmul(grad, right.T)
        if left.ndim == 1:
            grad_right = np.outer(left, grad)
        else:
            grad_right = np.matmul(
                left.reshape(-1, left.shape[-1]).T, grad.reshape(-1, grad.shape[-1])
            )
        return [grad_left, grad_right]


class Scale(Primitive):
    kind = "scale"

    def forward(self, values, attrs):
        return values[0] * attrs["factor"]

    def backward(self, grad, values, result, attrs):
        return [grad * attrs["factor"]]


class Shift(Primitive):
    kind = "shift"

    def forward(self, values, attrs):
        return values[0] + attrs["offset"]

    def backward(self, grad, values, result, attrs):
        return [grad]


class Sigmoid(Primitive):
    kind = "sigmoid"

    def forward(self, values, attrs):
        return 0.5 * (1.0 + np.tanh(0.5 * values[0]))

    def backward(self, grad, values, result, attrs):
        return [grad * result * (1.0 - result)]


class Tanh(Primitive):
    kind = "tanh"

    def forward(self, values, attrs):
        return np.tanh(values[0])

    def backward(self, grad, values, result, attrs):
        return [grad * (1.0 - result * result)]


class Square(Primitive):
    kind = "square"

    def forward(self, values, attrs):
        return values[0] * values[0]

    def backward(self, grad, values, result, attrs):
        return [2.0 * grad * values[0]]


class Sqrt(Primitive):
    kind = "sqrt"

    def forward(self, values, attrs):
        if np.any(values[0] < 0):
            raise DomainError(self.kind, "minimum %r" % float(np.min(values[0])))
        return np.sqrt(values[0])

    def backward(self, grad, values, result, attrs):
        # the subgradient at 0 is taken to be 0
        safe = np.where(result > 0, result, 1.0)
        return [np.where(result > 0, grad / (2.0 * safe), 0.0)]


class Abs(Primitive):
    kind = "abs"

    def forward(self, values, attrs):
        return np.abs(values[0])

    def backward(self, grad, values, result, attrs):
        return [grad * np.sign(values[0])]


class Softplus(Primitive):
    """log(1 + exp(x)), evaluated without overflow."""

    kind = "softplus"

    def forward(self, values, attrs):
        return np.logaddexp(0.0, values[0])

    def backward(self, grad, values, result, attrs):
        return [grad * 0.5 * (1.0 + np.tanh(0.5 * values[0]))]


class Concat(Primitive):
    """Concatenate along the last axis."""

    kind = "concat"
    arity = None

    def check(self, shapes, attrs):
        if not shapes:
            raise ShapeError(self.kind, shapes, "no inputs")
        lead = shapes[0][:-1]
        if any(len(s) == 0 or s[:-1] != lead for s in shapes):
            raise ShapeError(self.kind, shapes)

    def forward(self, values, attrs):
        return np.concatenate(values, axis=-1)

    def backward(self, grad, values, result, attrs):
        bounds = np.cumsum([v.shape[-1] for v in values])[:-1]
        return list(np.split(grad, bounds, axis=-1))


class StackTime(Primitive):
    """Stack (N, D) steps into an (N, T, D) sequence."""

    kind = "stack_time"
    arity = None

    def check(self, shapes, attrs):
        if not shapes or any(s != shapes[0] for s in shapes):
            raise ShapeError(self.kind, shapes)

    def forward(self, values, attrs):
        return np.stack(values, axis=1)

    def backward(self, grad, values, result, attrs):
        return [grad[:, t] for t in range(grad.shape[1])]


class SelectTime(Primitive):
    """Take the step ``index`` of an (N, T, ...) sequence."""

    kind = "select_time"

    def check(self, shapes, attrs):
        shape = shapes[0]
        if len(shape) < 2 or not -shape[1] <= attrs["index"] < shape[1]:
            raise ShapeError(self.kind, shapes, "index %r" % attrs["index"])

    def forward(self, values, attrs):
        return values[0][:, attrs["index"]]

    def backward(self, grad, values, result, attrs):
        out = np.zeros_like(values[0])
        out[:, attrs["index"]] = grad
        return [out]


class SliceTime(Primitive):
    """Slice the time axis of an (N, T, ...) sequence, keeping the axis."""

    kind = "slice_time"

    def _slice(self, attrs):
        return slice(attrs.get("start"), attrs.get("stop"), attrs.get("step"))

    def check(self, shapes, attrs):
        shape = shapes[0]
        if len(shape) < 2 or len(range(*self._slice(attrs).indices(shape[1]))) == 0:
            raise ShapeError(self.kind, shapes, "empty time slice")

    def forward(self, values, attrs):
        return values[0][:, self._slice(attrs)]

    def backward(self, grad, values, result, attrs):
        out = np.zeros_like(values[0])
        out[:, self._slice(attrs)] = grad
        return [out]


class RepeatTime(Primitive):
    """Repeat every step of an (N, T, D) sequence ``repeats`` times."""

    kind = "repeat_time"

    def check(self, shapes, attrs):
        if len(shapes[0]) != 3 or attrs["repeats"] < 1:
            raise ShapeError(self.kind, shapes, "repeats %r" % attrs["repeats"])

    def forward(self, values, attrs):
        return np.repeat(values[0], attrs["repeats"], axis=1)

    def backward(self, grad, values, result, attrs):
        n, t, d = values[0].shape
        return [grad.reshape(n, t, attrs["repeats"], d).sum(axis=2)]


class Sum(Primitive):
    kind = "sum"

    def forward(self, values, attrs):
        return np.sum(values[0], axis=_normalize_axes(attrs["axes"], values[0].ndim))

    def backward(self, grad, values, result, attrs):
        axes = _normalize_axes(attrs["axes"], values[0].ndim)
        return [np.broadcast_to(np.expand_dims(grad, axes), values[0].shape).copy()]


class Mean(Primitive):
    kind = "mean"

    def forward(self, values, attrs):
        return np.mean(values[0], axis=_normalize_axes(attrs["axes"], values[0].ndim))

    def backward(self, grad, values, result, attrs):
        axes = _normalize_axes(attrs["axes"], values[0].ndim)
        count = 1
        for axis in axes:
            count *= values[0].shape[axis]
        expanded = np.broadcast_to(np.expand_dims(grad, axes), values[0].shape)
        return [expanded / float(count)]


class Broadcast(Primitive):
    """Broadcast a value (typically a bias vector) over leading batch axes."""

    kind = "broadcast"

    def check(self, shapes, attrs):
        try:
            np.broadcast_shapes(shapes[0], attrs["shape"])
        except ValueError:
            raise ShapeError(self.kind, [shapes[0], attrs["shape"]])
        if len(shapes[0]) > len(attrs["shape"]):
            raise ShapeError(self.kind, [shapes[0], attrs["shape"]])

    def forward(self, values, attrs):
        return np.broadcast_to(values[0], attrs["shape"]).copy()

    def backward(self, grad, values, result, attrs):
        return [_unbroadcast(grad, values[0].shape)]


PRIMITIVES = {
    cls.kind: cls()
    for cls in (
        Add,
        Sub,
        Mul,
        MatMul,
        Scale,
        Shift,
        Sigmoid,
        Tanh,
        Square,
        Sqrt,
        Abs,
        Softplus,
        Concat,
        StackTime,
        SelectTime,
        SliceTime,
        RepeatTime,
        Sum,
        Mean,
        Broadcast,
    )
}  # type: Dict[str, Primitive]


def forward_primitive(kind, inputs, **attrs):
    # type: (str, Sequence[Any], Any) -> Tensor
    """Apply the primitive ``kind`` to ``inputs``.

    The application is recorded in the active graph when at least one input
    is tracked by it.
    """
    try:
        primitive = PRIMITIVES[kind]
    except KeyError:
        raise ValueError("Unknown primitive kind %r" % kind)

    tensors = [as_tensor(value) for value in inputs]
    if primitive.arity is not None and len(tensors) != primitive.arity:
        raise ValueError(
            "%s expects %d inputs, got %d" % (kind, primitive.arity, len(tensors))
        )
    values = [t.data for t in tensors]
    primitive.check([v.shape for v in values], attrs)
    result = primitive.forward(values, attrs)

    graph = _active_graph()
    if graph is not None:
        nodes = [t.node if t._graph is graph else None for t in tensors]
        if any(node is not None for node in nodes):
            return graph._record(kind, nodes, values, result, attrs)
    return Tensor(result)


def concat(tensors):
    # type: (Sequence[Tensor]) -> Tensor
    return forward_primitive("concat", tensors)


def stack_time(tensors):
    # type: (Sequence[Tensor]) -> Tensor
    return forward_primitive("stack_time", tensors)


def backward(graph, loss):
    # type: (Graph, Tensor) -> Dict[int, Tensor]
    """Return d(loss)/d(leaf) for every leaf of ``graph``, keyed by node.

    Leaves the loss does not depend on get an exactly-zero gradient.
    Gradients of values used several times are summed.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ValueError("backward requires a scalar loss, got shape %r" % (loss.shape,))

    adjoints = {}  # type: Dict[int, np.ndarray]
    if loss._graph is graph and loss.node is not None:
        adjoints[loss.node] = np.ones((), dtype=DTYPE)

    for record in reversed(graph._records):
        grad = adjoints.pop(record.output, None)
        if grad is None:
            continue
        primitive = PRIMITIVES[record.kind]
        input_grads = primitive.backward(grad, record.values, record.result, record.attrs)
        for node, input_grad in zip(record.inputs, input_grads):
            if node is None:
                continue
            if node in adjoints:
                adjoints[node] = adjoints[node] + input_grad
            else:
                adjoints[node] = input_grad

    grads = {}  # type: Dict[int, Tensor]
    for node, _, shape in graph._leaves:
        value = adjoints.get(node)
        if value is None:
            value = np.zeros(shape, dtype=DTYPE)
        grads[node] = Tensor(np.asarray(value, dtype=DTYPE).reshape(shape))
    return grads


def grad_check(function, point, eps=1e-5):
    # type: (Callable[[Tensor], Tensor], Any, float) -> float
    """Compare analytic gradients of ``function`` at ``point`` with central
    finite differences.

    Returns:
        float: max over coordinates of |analytic - numeric| / max(1, |analytic|)
    """
    if eps <= 0:
        raise ValueError("eps must be positive, got %r" % eps)
    point = np.array(point, dtype=DTYPE)

    with Graph() as graph:
        leaf = graph.leaf(point)
        loss = function(leaf)
        analytic = backward(graph, loss)[leaf.node].data

    numeric = np.zeros_like(point)
    flat = point.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        upper = function(Tensor(point.copy())).item()
        flat[i] = original - eps
        lower = function(Tensor(point.copy())).item()
        flat[i] = original
        numeric.reshape(-1)[i] = (upper - lower) / (2.0 * eps)

    errors = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(np.max(errors)) if errors.size else 0.0


class Rng(object):
    """A seeded random stream backed by numpy's PCG64 generator.

    Identical seeds and identical call sequences give identical streams.
    """

    def __init__(self, seed):
        # type: (int) -> None
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self):
        # type: () -> str
        return "Rng(seed=%r)" % self.seed

    @property
    def state(self):
        # type: () -> Dict[str, Any]
        return self._generator.bit_generator.state

    @state.setter
    def state(self, value):
        # type: (Dict[str, Any]) -> None
        self._generator.bit_generator.state = value

    def child(self, key):
        # type: (int) -> Rng
        """Derive an independent stream from this seed and ``key``."""
        words = np.random.SeedSequence([self.seed, int(key)]).generate_state(2, np.uint32)
        return Rng((int(words[0]) << 32) | int(words[1]))

    def uniform(self, low=0.0, high=1.0, size=None):
        # type: (float, float, Any) -> Any
        return self._generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        # type: (float, float, Any) -> Any
        return self._generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        # type: (int, Optional[int], Any) -> Any
        return self._generator.integers(low, high, size)

    def permutation(self, n):
        # type: (int) -> np.ndarray
        return self._generator.permutation(n)
