"""Action-mask algebra and the masked categorical distribution.

A mask maps an environment state to a boolean admissibility vector over the
action indices ``0..n_actions-1``.  Masks compose with :func:`conjoin`
(allowed by both) and :func:`prioritize` (first mask wins whenever it forbids
anything).  Masks read the raw environment state, never the encoded
observation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

# Stand-in for -inf on forbidden logits.  After max-subtraction exp() of this
# underflows to exactly 0.0 while keeping softmax and its gradient NaN-free.
SENTINEL = -1.0e9

VectorFn = Callable[[Any, int], np.ndarray]


class EmptyMaskError(RuntimeError):
    """Raised when a mask forbids every action and no fallback is available."""


@dataclass(frozen=True)
class MaskFn:
    """A named, pure admissibility predicate ``m(a, s) -> {0, 1}``.

    ``admissible(state, n_actions)`` evaluates the predicate for every action at
    once; calling the mask with ``(state, action)`` evaluates a single entry.
    """

    vector_fn: VectorFn
    name: str = "mask"

    def admissible(self, state: Any, n_actions: int) -> np.ndarray:
        out = np.asarray(self.vector_fn(state, n_actions), dtype=bool)
        if out.shape != (n_actions,):
            raise ValueError(f"mask {self.name!r} returned shape {out.shape}, expected ({n_actions},)")
        return out

    def __call__(self, state: Any, action: int, n_actions: int) -> bool:
        return bool(self.admissible(state, n_actions)[action])

    def __repr__(self) -> str:
        return f"MaskFn({self.name})"


def mask_all_allow() -> MaskFn:
    return MaskFn(lambda state, n: np.ones(n, dtype=bool), "all_allow")


def conjoin(m1: MaskFn, m2: MaskFn) -> MaskFn:
    """Allow ``a`` iff both masks allow it."""

    def fn(state, n):
        return m1.admissible(state, n) & m2.admissible(state, n)

    return MaskFn(fn, f"({m1.name} & {m2.name})")


def prioritize(m1: MaskFn, m2: MaskFn) -> MaskFn:
    """Use ``m1`` in states where it forbids at least one action, else ``m2``."""

    def fn(state, n):
        first = m1.admissible(state, n)
        if not first.all():
            return first
        return m2.admissible(state, n)

    return MaskFn(fn, f"({m1.name} > {m2.name})")


def heuristic_distance_mask(
    h: Callable[[Any], float], max_distance: float, action_values, name: str = "distance"
) -> MaskFn:
    """Allow actions whose value lies within ``max_distance`` of the prescription ``h(s)``.

    ``h`` returns a point in the ordered action-value space; it need not be
    on the action grid.
    """
    values = np.asarray(action_values, dtype=float)

    def fn(state, n):
        return np.abs(values - h(state)) <= max_distance

    return MaskFn(fn, name)


def heuristic_threshold_mask(
    h: Callable[[Any], float], direction: str, action_values, name: str = "threshold"
) -> MaskFn:
    """Allow actions with value ``>= h(s)`` (``direction=">="``) or ``<= h(s)``."""
    if direction not in (">=", "<="):
        raise ValueError(f"direction must be '>=' or '<=', got {direction!r}")
    values = np.asarray(action_values, dtype=float)
    ge = direction == ">="

    def fn(state, n):
        target = h(state)
        return values >= target if ge else values <= target

    return MaskFn(fn, name)


def optimal_enforcement_mask(
    known_states: Callable[[Any], bool],
    optimal: Callable[[Any, int], np.ndarray],
    name: str = "optimal",
) -> MaskFn:
    """Enforce known-optimal actions on recognised states, allow everything elsewhere.

    ``optimal(state, n)`` returns the boolean vector of optimal actions.
    """

    def fn(state, n):
        if known_states(state):
            return np.asarray(optimal(state, n), dtype=bool)
        return np.ones(n, dtype=bool)

    return MaskFn(fn, name)


def resolve(mask: MaskFn, fallback: MaskFn | None, state: Any, n_actions: int) -> tuple[np.ndarray, bool]:
    """Evaluate ``mask``; when it admits nothing, use ``fallback`` instead.

    Returns ``(admissible, used_fallback)``.  ``fallback=None`` means all-allow.
    """
    allowed = mask.admissible(state, n_actions)
    if allowed.any():
        return allowed, False
    if fallback is None:
        return np.ones(n_actions, dtype=bool), True
    allowed = fallback.admissible(state, n_actions)
    if not allowed.any():
        raise EmptyMaskError(f"fallback {fallback.name!r} admits no action either")
    return allowed, True


@dataclass(frozen=True)
class MaskedDistribution:
    logits: np.ndarray
    allowed: np.ndarray
    probs: np.ndarray

    @property
    def log_probs(self) -> np.ndarray:
        """Log-probabilities; forbidden entries are ``-inf``."""
        with np.errstate(divide="ignore"):
            return np.log(self.probs)

    def entropy(self) -> float:
        p = self.probs[self.allowed]
        p = p[p > 0]
        return float(-(p * np.log(p)).sum())

    def sample(self, rng: np.random.Generator) -> int:
        cdf = np.cumsum(self.probs)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        idx = min(idx, len(cdf) - 1)
        # guard the float edge where u*total lands on a flat (zero-prob) tail
        while not self.allowed[idx]:
            idx -= 1
        return idx

    def mode(self) -> int:
        return int(np.argmax(np.where(self.allowed, self.logits, -np.inf)))


def masked_logits(logits: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    return np.where(allowed, logits, SENTINEL)


def masked_log_softmax(logits: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax of the masked logits (forbidden rows get ~SENTINEL)."""
    z = masked_logits(logits, allowed)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def masked_probs(logits: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    z = masked_logits(logits, allowed)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def distribution_from_vector(logits, allowed) -> MaskedDistribution:
    logits = np.asarray(logits, dtype=float)
    allowed = np.asarray(allowed, dtype=bool)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    if not allowed.any():
        raise EmptyMaskError("admissible set is empty")
    return MaskedDistribution(logits, allowed, masked_probs(logits, allowed))


def masked_distribution(
    logits, state: Any, mask: MaskFn, fallback: MaskFn | None = None, counter: dict | None = None
) -> MaskedDistribution:
    """Build the masked policy distribution for ``state``.

    An empty admissible set falls back to ``fallback`` (all-allow if None) and
    bumps ``counter["mask_fallback"]`` when a counter dict is supplied.
    """
    logits = np.asarray(logits, dtype=float)
    allowed, fell_back = resolve(mask, fallback, state, logits.shape[-1])
    if fell_back and counter is not None:
        counter["mask_fallback"] = counter.get("mask_fallback", 0) + 1
    return distribution_from_vector(logits, allowed)
