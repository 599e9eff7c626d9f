"""Truncated Taylor jets (value, gradient, Hessian) with batch dimensions.

A jet of order 2 carries ``val`` of shape (...), ``grad`` of shape (..., n)
and ``hess`` of shape (..., n, n). Order 1 jets drop the Hessian and order 0
jets only carry the value. Arithmetic truncates to the lower of the operand
orders, which is what taking a partial derivative does to a jet.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = ["Jet", "constant", "variable"]


@dataclass(frozen=True)
class Jet:
    val: np.ndarray
    grad: np.ndarray | None = None
    hess: np.ndarray | None = None

    @property
    def order(self) -> int:
        if self.grad is None:
            return 0
        return 1 if self.hess is None else 2

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(self.val, self.grad if order >= 1 else None, None)

    def __add__(self, other: "JetLike") -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.val + np.asarray(other, dtype=float), self.grad, self.hess)
        order = min(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        return Jet(
            a.val + b.val,
            None if order < 1 else a.grad + b.grad,
            None if order < 2 else a.hess + b.hess,
        )

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(
            -self.val,
            None if self.grad is None else -self.grad,
            None if self.hess is None else -self.hess,
        )

    def __sub__(self, other: "JetLike") -> "Jet":
        return self + (-other)

    def __rsub__(self, other: "JetLike") -> "Jet":
        return (-self) + other

    def __mul__(self, other: "JetLike") -> "Jet":
        if not isinstance(other, Jet):
            s = np.asarray(other, dtype=float)
            return Jet(
                self.val * s,
                None if self.grad is None else self.grad * s[..., None],
                None if self.hess is None else self.hess * s[..., None, None],
            )
        order = min(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        val = a.val * b.val
        if order == 0:
            return Jet(val)
        grad = a.grad * b.val[..., None] + b.grad * a.val[..., None]
        hess = None
        if order == 2:
            outer = a.grad[..., :, None] * b.grad[..., None, :]
            hess = (
                a.hess * b.val[..., None, None]
                + b.hess * a.val[..., None, None]
                + outer
                + np.swapaxes(outer, -1, -2)
            )
        return Jet(val, grad, hess)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        inv = 1.0 / self.val
        if self.grad is None:
            return Jet(inv)
        inv2 = inv * inv
        grad = -self.grad * inv2[..., None]
        hess = None
        if self.hess is not None:
            outer = self.grad[..., :, None] * self.grad[..., None, :]
            hess = -self.hess * inv2[..., None, None] + 2.0 * outer * (inv2 * inv)[..., None, None]
        return Jet(inv, grad, hess)

    def __truediv__(self, other: "JetLike") -> "Jet":
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other: "JetLike") -> "Jet":
        return self.reciprocal() * other

    def partial(self, i: int) -> "Jet":
        """Jet of the i-th partial derivative (one order lower)."""
        if self.grad is None:
            raise ValueError("order-0 jet has no derivatives")
        if self.hess is None:
            return Jet(self.grad[..., i])
        return Jet(self.grad[..., i], self.hess[..., i, :])

    def pad(self, n: int) -> "Jet":
        """Embed into n variables; the extra variables do not enter."""
        if self.grad is None:
            return self
        m = self.grad.shape[-1]
        grad = np.zeros(self.grad.shape[:-1] + (n,))
        grad[..., :m] = self.grad
        hess = None
        if self.hess is not None:
            hess = np.zeros(self.hess.shape[:-2] + (n, n))
            hess[..., :m, :m] = self.hess
        return Jet(self.val, grad, hess)


JetLike = Union[Jet, float, np.ndarray]


def constant(val: np.ndarray, n: int, order: int = 2) -> Jet:
    val = np.asarray(val, dtype=float)
    if order == 0:
        return Jet(val)
    grad = np.zeros(val.shape + (n,))
    hess = np.zeros(val.shape + (n, n)) if order == 2 else None
    return Jet(val, grad, hess)


def variable(val: np.ndarray, i: int, n: int, order: int = 2) -> Jet:
    jet = constant(val, n, order)
    if order >= 1:
        jet.grad[..., i] = 1.0
    return jet
