"""Dense float64 matrix arithmetic with a reverse-mode gradient tape.

Every value on the tape is a 2-D, C-contiguous float64 numpy array; column
vectors are shaped (n, 1) and scalars (1, 1).  Ops append a record to the
owning :class:`Tape`, and :meth:`Tape.backward` replays the records in
reverse to accumulate exact adjoints.  :func:`grad_check` provides the
independent central-difference route used to validate every primitive.

Conventions baked in here (and relied on by tests):
  * reductions named by the axis they collapse: ``rows`` -> (1, c),
    ``cols`` -> (r, 1), ``all`` -> (1, 1);
  * max reductions break ties toward the lowest index in backward;
  * log-sum-exp style ops subtract the row max before exponentiating.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DomainError, ShapeError

Matrix = np.ndarray  # 2-D float64, row-major

ELEMENTWISE_OPS = ("relu", "sigmoid", "tanh", "mul", "add", "sub", "scale")
REDUCE_OPS = ("sum", "mean", "max")
REDUCE_AXES = ("rows", "cols", "all")


def as_matrix(x, what: str = "value") -> Matrix:
    """Coerce ``x`` to a finite 2-D float64 array (scalars become 1x1)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeError(f"{what} must be at most 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} contains NaN or Inf")
    return np.ascontiguousarray(arr)


class Node:
    """One value on a tape, with parents and a pullback for backward."""

    __slots__ = ("tape", "value", "grad", "tracked", "_index", "_parents", "_pullback")

    def __init__(self, tape, value, tracked, parents=(), pullback=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.tracked = tracked
        self._parents = parents
        self._pullback = pullback
        self._index = tape._register(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    # Arithmetic sugar; scalars route to `scale`, arrays are lifted to constants.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ContractError(f"item() on non-scalar node of shape {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        return f"Node(shape={self.shape}, tracked={self.tracked})"


class Tape:
    """Ordered record of primitive ops; independent tapes share no state."""

    def __init__(self):
        self._nodes: list[Node] = []

    def _register(self, node: Node) -> int:
        self._nodes.append(node)
        return len(self._nodes) - 1

    def param(self, value, what: str = "param") -> Node:
        """A tracked leaf: backward() will populate its .grad."""
        return Node(self, as_matrix(value, what), tracked=True)

    def constant(self, value, what: str = "constant") -> Node:
        """An untracked leaf: treated as a constant by backward()."""
        return Node(self, as_matrix(value, what), tracked=False)

    def backward(self, loss: Node) -> None:
        """Accumulate d(loss)/d(node) into .grad for every tracked node.

        ``loss`` must be a 1x1 node produced by this tape; its own adjoint is
        seeded with 1.  Tracked leaves that do not influence the loss receive
        zero gradients.
        """
        if not isinstance(loss, Node) or loss.tape is not self:
            raise ContractError("loss is not a node of this tape")
        if loss.value.shape != (1, 1):
            raise ContractError(f"loss must be scalar (1x1), got shape {loss.shape}")
        adjoint: list[Matrix | None] = [None] * len(self._nodes)
        adjoint[loss._index] = np.ones((1, 1))
        for node in reversed(self._nodes[: loss._index + 1]):
            grad_out = adjoint[node._index]
            if grad_out is None or node._pullback is None:
                continue
            for parent, contrib in zip(node._parents, node._pullback(grad_out)):
                if not parent.tracked or contrib is None:
                    continue
                prev = adjoint[parent._index]
                # Never accumulate in place: contributions may alias forward values.
                adjoint[parent._index] = contrib if prev is None else prev + contrib
        for node in self._nodes:
            if node.tracked:
                g = adjoint[node._index]
                node.grad = np.zeros_like(node.value) if g is None else np.asarray(g)


def _lift(tape: Tape, x) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ContractError("operands come from different tapes")
        return x
    return tape.constant(x)


def _pair(a, b):
    """Lift a mixed (Node, array-like) pair onto a common tape."""
    if isinstance(a, Node):
        return a, _lift(a.tape, b)
    if isinstance(b, Node):
        return _lift(b.tape, a), b
    raise ContractError("at least one operand must be a tape node")


def _make(tape, value, parents, pullback) -> Node:
    tracked = any(p.tracked for p in parents)
    return Node(tape, value, tracked, tuple(parents), pullback if tracked else None)


# ---------------------------------------------------------------------------
# Core primitives
# ---------------------------------------------------------------------------


def matmul(a, b) -> Node:
    """Matrix product a @ b; inner dimensions must agree."""
    a, b = _pair(a, b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    out = a.value @ b.value

    def pullback(g):
        return g @ b.value.T, a.value.T @ g

    return _make(a.tape, out, (a, b), pullback)


def transpose(x: Node) -> Node:
    out = np.ascontiguousarray(x.value.T)

    def pullback(g):
        return (g.T,)

    return _make(x.tape, out, (x,), pullback)


def add(a, b) -> Node:
    a, b = _pair(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add shapes disagree: {a.shape} vs {b.shape}")

    def pullback(g):
        return g, g

    return _make(a.tape, a.value + b.value, (a, b), pullback)


def sub(a, b) -> Node:
    a, b = _pair(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes disagree: {a.shape} vs {b.shape}")

    def pullback(g):
        return g, -g

    return _make(a.tape, a.value - b.value, (a, b), pullback)


def mul(a, b) -> Node:
    a, b = _pair(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes disagree: {a.shape} vs {b.shape}")

    def pullback(g):
        return g * b.value, g * a.value

    return _make(a.tape, a.value * b.value, (a, b), pullback)


def div(a, b) -> Node:
    a, b = _pair(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"div shapes disagree: {a.shape} vs {b.shape}")
    if np.any(b.value == 0.0):
        raise DomainError("division by zero")
    out = a.value / b.value

    def pullback(g):
        return g / b.value, -g * a.value / (b.value * b.value)

    return _make(a.tape, out, (a, b), pullback)


def scale(x: Node, c: float) -> Node:
    c = float(c)
    if not np.isfinite(c):
        raise DomainError("scale factor must be finite")

    def pullback(g):
        return (c * g,)

    return _make(x.tape, c * x.value, (x,), pullback)


def relu(x: Node) -> Node:
    mask = x.value > 0.0

    def pullback(g):
        return (g * mask,)

    return _make(x.tape, np.where(mask, x.value, 0.0), (x,), pullback)


def sigmoid(x: Node) -> Node:
    # Branch on sign so neither exp overflows.
    v = x.value
    out = np.where(v >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def pullback(g):
        return (g * out * (1.0 - out),)

    return _make(x.tape, out, (x,), pullback)


def tanh(x: Node) -> Node:
    out = np.tanh(x.value)

    def pullback(g):
        return (g * (1.0 - out * out),)

    return _make(x.tape, out, (x,), pullback)


def exp(x: Node) -> Node:
    if np.any(x.value > 700.0):
        raise DomainError("exp argument too large; rescale first")
    out = np.exp(x.value)

    def pullback(g):
        return (g * out,)

    return _make(x.tape, out, (x,), pullback)


def log(x: Node) -> Node:
    if np.any(x.value <= 0.0):
        raise DomainError("log requires strictly positive input")
    out = np.log(x.value)

    def pullback(g):
        return (g / x.value,)

    return _make(x.tape, out, (x,), pullback)


def sqrt(x: Node) -> Node:
    if np.any(x.value < 0.0):
        raise DomainError("sqrt requires non-negative input")
    out = np.sqrt(x.value)

    def pullback(g):
        # d sqrt/dx = 1/(2 sqrt(x)); infinite at 0, callers keep inputs positive.
        return (g / (2.0 * np.maximum(out, 1e-300)),)

    return _make(x.tape, out, (x,), pullback)


def elementwise(op: str, *args) -> Node:
    """Dispatch the named entrywise op; ``scale`` takes (node, scalar)."""
    if op not in ELEMENTWISE_OPS:
        raise ContractError(f"unknown elementwise op {op!r}")
    if op == "scale":
        return scale(args[0], args[1])
    if op in ("mul", "add", "sub"):
        return {"mul": mul, "add": add, "sub": sub}[op](*args)
    return {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}[op](args[0])


def reduce(op: str, x: Node, axis: str = "all") -> Node:
    """Reduce along the named axis; ``rows`` collapses rows (column stats)."""
    if op not in REDUCE_OPS:
        raise ContractError(f"unknown reduce op {op!r}")
    if axis not in REDUCE_AXES:
        raise ContractError(f"unknown reduce axis {axis!r}")
    if x.value.size == 0:
        raise DomainError("reduce of empty matrix")
    r, c = x.shape
    np_axis = {"rows": 0, "cols": 1, "all": None}[axis]

    if op in ("sum", "mean"):
        out = x.value.sum(axis=np_axis, keepdims=True)
        if np_axis is None:
            out = out.reshape(1, 1)
        denom = {"rows": r, "cols": c, "all": r * c}[axis]
        if op == "mean":
            out = out / denom

        def pullback(g):
            gg = g / denom if op == "mean" else g
            return (np.broadcast_to(gg, (r, c)).copy(),)

        return _make(x.tape, np.ascontiguousarray(out), (x,), pullback)

    # max: remember first-argmax positions for a deterministic backward.
    if np_axis is None:
        flat_idx = int(np.argmax(x.value))
        out = x.value.reshape(-1)[flat_idx].reshape(1, 1)

        def pullback(g):
            grad = np.zeros((r, c))
            grad.reshape(-1)[flat_idx] = g[0, 0]
            return (grad,)

    else:
        arg = np.argmax(x.value, axis=np_axis)
        out = np.max(x.value, axis=np_axis, keepdims=True)

        def pullback(g):
            grad = np.zeros((r, c))
            if np_axis == 0:
                grad[arg, np.arange(c)] = g[0, :]
            else:
                grad[np.arange(r), arg] = g[:, 0]
            return (grad,)

    return _make(x.tape, np.ascontiguousarray(out), (x,), pullback)


def log_softmax(x: Node) -> Node:
    """Row-wise log softmax, computed with max subtraction for stability."""
    m = x.value.max(axis=1, keepdims=True)
    shifted = x.value - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    softmax = np.exp(out)

    def pullback(g):
        return (g - softmax * g.sum(axis=1, keepdims=True),)

    return _make(x.tape, out, (x,), pullback)


def gather_rows(x: Node, indices) -> Node:
    """Select rows of ``x`` by index; backward scatter-adds into the source."""
    idx = np.asarray(indices, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= x.rows):
        raise DomainError("gather index out of range")
    n = x.rows
    # Scatter as a sparse matmul: rows of the adjoint sum back into sources.
    scatter = sp.csr_matrix(
        (np.ones(idx.size), (idx, np.arange(idx.size))), shape=(n, idx.size)
    )

    def pullback(g):
        return (scatter @ g,)

    return _make(x.tape, x.value[idx], (x,), pullback)


def tile_cols(x: Node, k: int) -> Node:
    """Repeat a column vector (r, 1) into (r, k)."""
    if x.cols != 1:
        raise ShapeError(f"tile_cols expects a column vector, got {x.shape}")

    def pullback(g):
        return (g.sum(axis=1, keepdims=True),)

    return _make(x.tape, np.repeat(x.value, k, axis=1), (x,), pullback)


def tile_rows(x: Node, k: int) -> Node:
    """Repeat a row vector (1, c) into (k, c)."""
    if x.rows != 1:
        raise ShapeError(f"tile_rows expects a row vector, got {x.shape}")

    def pullback(g):
        return (g.sum(axis=0, keepdims=True),)

    return _make(x.tape, np.repeat(x.value, k, axis=0), (x,), pullback)


def spmm(a: sp.spmatrix, x: Node) -> Node:
    """Constant sparse matrix times tape node: out = a @ x."""
    a = a.tocsr()
    if a.shape[1] != x.rows:
        raise ShapeError(f"spmm inner dims disagree: {a.shape} @ {x.shape}")
    at = a.T.tocsr()

    def pullback(g):
        return (at @ g,)

    return _make(x.tape, np.asarray(a @ x.value), (x,), pullback)


class PropagationPlan:
    """Fixed sparsity pattern of one batch adjacency (edges + self loops).

    The pattern covers every stored undirected edge in both orientations plus
    one self loop per node; per-call values fill the same CSR buffer through a
    precomputed permutation, so masked and unmasked passes share the pattern
    (unselected edges simply carry value zero).
    """

    def __init__(self, num_nodes: int, edges: np.ndarray):
        edges = np.asarray(edges, dtype=np.intp).reshape(-1, 2)
        self.num_nodes = int(num_nodes)
        self.num_edges = edges.shape[0]
        self.u = edges[:, 0].copy()
        self.v = edges[:, 1].copy()
        loops = np.arange(self.num_nodes, dtype=np.intp)
        rows = np.concatenate([self.u, self.v, loops])
        cols = np.concatenate([self.v, self.u, loops])
        order = np.arange(rows.size, dtype=np.float64)
        csr = sp.coo_matrix((order, (rows, cols)), shape=(self.num_nodes, self.num_nodes)).tocsr()
        # coo->csr preserves values because (row, col) pairs are unique.
        self._perm = csr.data.astype(np.intp)
        self._template = csr

    def assemble(self, edge_values: np.ndarray, self_values: np.ndarray) -> sp.csr_matrix:
        full = np.concatenate([edge_values, edge_values, self_values])
        mat = self._template.copy()
        mat.data = full[self._perm]
        return mat


def edge_propagate(weights: Node, h: Node, plan: PropagationPlan,
                   edge_coeff: np.ndarray, self_coeff: np.ndarray) -> Node:
    """One round of symmetric message passing with per-edge weights.

    out[u] = sum over selected edges (u,v) of w_e * c_e * h[v]  +  s_u * h[u],
    applied in both edge orientations.  ``edge_coeff`` and ``self_coeff`` are
    constants (typically GCN degree normalizers; zero for unselected edges),
    so gradient reaches ``weights`` only on edges with nonzero coefficient.
    """
    if weights.shape != (plan.num_edges, 1):
        raise ShapeError(f"weights must be ({plan.num_edges}, 1), got {weights.shape}")
    if h.rows != plan.num_nodes:
        raise ShapeError(f"h must have {plan.num_nodes} rows, got {h.rows}")
    c = np.asarray(edge_coeff, dtype=np.float64).reshape(-1)
    s = np.asarray(self_coeff, dtype=np.float64).reshape(-1)
    ev = weights.value[:, 0] * c
    adjacency = plan.assemble(ev, s)
    out = np.asarray(adjacency @ h.value)
    u, v = plan.u, plan.v

    def pullback(g):
        dh = np.asarray(adjacency @ g)  # adjacency is symmetric
        gu, gv = g[u], g[v]
        hu, hv = h.value[u], h.value[v]
        dw = (c * ((gu * hv).sum(axis=1) + (gv * hu).sum(axis=1))).reshape(-1, 1)
        return dw, dh

    return _make(weights.tape, out, (weights, h), pullback)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def backward(tape: Tape, loss: Node) -> None:
    """Module-level alias for :meth:`Tape.backward`."""
    tape.backward(loss)


def grad_check(f, x, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a tape node to a scalar node and must be pure (re-evaluable on
    fresh tapes).  Error metric per entry: |analytic - numeric| / (|analytic|
    + 1e-8); the max over entries is returned.
    """
    if eps <= 0.0:
        raise DomainError("eps must be positive")
    x = as_matrix(x, "grad_check input")

    def evaluate(values: Matrix) -> float:
        tape = Tape()
        out = f(tape.param(values))
        if not isinstance(out, Node) or out.value.shape != (1, 1):
            raise ContractError("grad_check requires f to produce a scalar node")
        val = float(out.value[0, 0])
        if not np.isfinite(val):
            raise DomainError("f produced a non-finite value")
        return val

    tape = Tape()
    xn = tape.param(x)
    out = f(xn)
    if not isinstance(out, Node) or out.value.shape != (1, 1):
        raise ContractError("grad_check requires f to produce a scalar node")
    tape.backward(out)
    analytic = xn.grad

    numeric = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        bump = np.zeros_like(x)
        bump[idx] = eps
        numeric[idx] = (evaluate(x + bump) - evaluate(x - bump)) / (2.0 * eps)
    rel = np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)
    return float(rel.max())
