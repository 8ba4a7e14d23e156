"""Forward (dual-number) and reverse (tape) differentiation over numpy arrays.

The geometry kernels are written once against a small vocabulary of operations:
arithmetic with broadcasting, real powers, basic indexing, :func:`stack`,
:func:`einsum` with explicit output subscripts, and the periodic shift
:func:`roll`. Plain ``ndarray`` inputs run straight through numpy; :class:`Dual`
inputs carry a tangent; :class:`Var` inputs record a tape that
:func:`vjp` replays backwards. Both derivative modes therefore differentiate the
very same floating-point program.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Dual:
    """Array-valued dual number ``val + eps * ε`` with ``ε² = 0``."""

    __array_ufunc__ = None
    __slots__ = ("val", "eps")

    def __init__(self, val, eps):
        val = np.asarray(val, dtype=float)
        eps = np.asarray(eps, dtype=float)
        if eps.shape != val.shape:
            eps = np.broadcast_to(eps, val.shape)
        self.val = val
        self.eps = eps

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.eps[idx])

    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val + o.val, self.eps + o.eps)
        return Dual(self.val + o, self.eps)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val - o.val, self.eps - o.eps)
        return Dual(self.val - o, self.eps)

    def __rsub__(self, o):
        return Dual(o - self.val, -self.eps)

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val * o.val, self.eps * o.val + self.val * o.eps)
        return Dual(self.val * o, self.eps * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            q = self.val / o.val
            return Dual(q, (self.eps - q * o.eps) / o.val)
        return Dual(self.val / o, self.eps / o)

    def __rtruediv__(self, o):
        q = o / self.val
        return Dual(q, -q * self.eps / self.val)

    def __pow__(self, p):
        if isinstance(p, (Dual, Var)):
            raise TypeError("only constant exponents are supported")
        return Dual(self.val**p, p * self.val ** (p - 1) * self.eps)

    def __repr__(self):
        return f"Dual(shape={self.val.shape})"


class Var:
    """Node of a reverse-mode tape.

    ``parents`` holds ``(node, pullback)`` pairs; a pullback maps the cotangent of
    this node to the (already unbroadcast) cotangent contribution of the parent.
    """

    __array_ufunc__ = None
    __slots__ = ("value", "parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __getitem__(self, idx):
        shape = self.value.shape

        def pull(g):
            out = np.zeros(shape)
            out[idx] = g
            return out

        return Var(self.value[idx], ((self, pull),))

    def __neg__(self):
        return Var(-self.value, ((self, lambda g: -g),))

    def __add__(self, o):
        if isinstance(o, Var):
            s1, s2 = self.value.shape, o.value.shape
            return Var(self.value + o.value,
                       ((self, lambda g: _unbroadcast(g, s1)), (o, lambda g: _unbroadcast(g, s2))))
        s1 = self.value.shape
        return Var(self.value + o, ((self, lambda g: _unbroadcast(g, s1)),))

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Var):
            s1, s2 = self.value.shape, o.value.shape
            return Var(self.value - o.value,
                       ((self, lambda g: _unbroadcast(g, s1)), (o, lambda g: -_unbroadcast(g, s2))))
        s1 = self.value.shape
        return Var(self.value - o, ((self, lambda g: _unbroadcast(g, s1)),))

    def __rsub__(self, o):
        s1 = self.value.shape
        return Var(o - self.value, ((self, lambda g: -_unbroadcast(g, s1)),))

    def __mul__(self, o):
        a = self.value
        if isinstance(o, Var):
            b = o.value
            return Var(a * b, ((self, lambda g: _unbroadcast(g * b, a.shape)),
                               (o, lambda g: _unbroadcast(g * a, b.shape))))
        return Var(a * o, ((self, lambda g: _unbroadcast(g * o, a.shape)),))

    __rmul__ = __mul__

    def __truediv__(self, o):
        a = self.value
        if isinstance(o, Var):
            b = o.value
            q = a / b
            return Var(q, ((self, lambda g: _unbroadcast(g / b, a.shape)),
                           (o, lambda g: _unbroadcast(-g * q / b, b.shape))))
        return Var(a / o, ((self, lambda g: _unbroadcast(g / o, a.shape)),))

    def __rtruediv__(self, o):
        a = self.value
        q = o / a
        return Var(q, ((self, lambda g: _unbroadcast(-g * q / a, a.shape)),))

    def __pow__(self, p):
        if isinstance(p, (Dual, Var)):
            raise TypeError("only constant exponents are supported")
        a = self.value
        return Var(a**p, ((self, lambda g: g * (p * a ** (p - 1))),))

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def value(x):
    """Primal numpy value of a plain array, :class:`Dual` or :class:`Var`."""
    if isinstance(x, Dual):
        return x.val
    if isinstance(x, Var):
        return x.value
    return np.asarray(x)


def _parse(spec):
    ins, out = spec.replace(" ", "").split("->")
    return ins.split(","), out


def einsum(spec, *ops):
    """``np.einsum`` that propagates tangents / records pullbacks.

    ``spec`` must name its output explicitly and must not repeat an index inside
    a single operand.
    """
    if any(isinstance(o, Var) for o in ops):
        ins, out = _parse(spec)
        vals = [value(o) for o in ops]
        parents = []
        for k, o in enumerate(ops):
            if not isinstance(o, Var):
                continue
            others = [vals[j] for j in range(len(ops)) if j != k]
            sub = ",".join([out] + [ins[j] for j in range(len(ops)) if j != k]) + "->" + ins[k]
            shape = vals[k].shape

            def pull(g, sub=sub, others=others, shape=shape):
                return _unbroadcast(np.einsum(sub, g, *others), shape)

            parents.append((o, pull))
        return Var(np.einsum(spec, *vals), tuple(parents))
    if any(isinstance(o, Dual) for o in ops):
        vals = [value(o) for o in ops]
        eps = None
        for k, o in enumerate(ops):
            if isinstance(o, Dual):
                args = list(vals)
                args[k] = o.eps
                term = np.einsum(spec, *args)
                eps = term if eps is None else eps + term
        return Dual(np.einsum(spec, *vals), eps)
    return np.einsum(spec, *ops)


def roll(x, shift, axis):
    """Periodic shift; ``roll(x, 1, 0)[i] == x[i-1]``."""
    if isinstance(x, Var):
        return Var(np.roll(x.value, shift, axis), ((x, lambda g: np.roll(g, -shift, axis)),))
    if isinstance(x, Dual):
        return Dual(np.roll(x.val, shift, axis), np.roll(x.eps, shift, axis))
    return np.roll(x, shift, axis)


def moveaxis(x, source, destination):
    """``np.moveaxis`` returning a C-contiguous copy."""
    def mv(a, s, d):
        return np.ascontiguousarray(np.moveaxis(a, s, d))

    if isinstance(x, Var):
        return Var(mv(x.value, source, destination), ((x, lambda g: mv(g, destination, source)),))
    if isinstance(x, Dual):
        return Dual(mv(x.val, source, destination), mv(x.eps, source, destination))
    return mv(x, source, destination)


def stack(xs, axis=0):
    xs = list(xs)
    if any(isinstance(x, Var) for x in xs):
        vals = [value(x) for x in xs]
        out = np.stack(vals, axis=axis)
        parents = []
        for k, x in enumerate(xs):
            if isinstance(x, Var):
                parents.append((x, lambda g, k=k: np.take(g, k, axis=axis)))
        return Var(out, tuple(parents))
    if any(isinstance(x, Dual) for x in xs):
        return Dual(np.stack([value(x) for x in xs], axis=axis),
                    np.stack([x.eps if isinstance(x, Dual) else np.zeros_like(x) for x in xs], axis=axis))
    return np.stack(xs, axis=axis)


def sqrt(x):
    if isinstance(x, (Dual, Var)):
        return x**0.5
    return np.sqrt(x)


def jvp(fun, x, dx):
    """Value and directional derivative of ``fun`` at ``x`` along ``dx``."""
    out = fun(Dual(x, dx))
    return out.val, out.eps


def vjp(fun, x, cotangent):
    """Value of ``fun(x)`` and the transpose of its Jacobian applied to ``cotangent``."""
    root = Var(x)
    out = fun(root)
    order = []
    seen = set()
    stack_ = [(out, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack_.append((parent, False))
    grads = {id(out): np.asarray(cotangent, dtype=float)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node is root:
            grads[id(root)] = g
            continue
        for parent, pull in node.parents:
            contrib = pull(g)
            key = id(parent)
            grads[key] = grads[key] + contrib if key in grads else contrib
    g_root = grads.get(id(root))
    if g_root is None:
        g_root = np.zeros_like(root.value)
    return out.value, g_root
