"""Finite-alphabet stationary Markov symbol sources.

A source is a row-stochastic transition matrix together with its stationary
vector. Construction validates stochasticity, invariance, full support of the
stationary vector, irreducibility, and aperiodicity; mixing (irreducible +
aperiodic) is required by every law computed downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ValidationError

_ROW_TOL = 1e-12
_STAT_TOL = 1e-12
_POWER_TOL = 1e-14


def _solve_stationary(transitions: np.ndarray) -> tuple[np.ndarray, float]:
    """Stationary vector of a row-stochastic matrix.

    Dense linear solve for alphabets up to 64 symbols, power iteration with a
    1e-14 residual target beyond that. Returns (pi, residual) where residual
    is the sup-norm of pi @ P - pi actually achieved.
    """
    s = transitions.shape[0]
    if s <= 64:
        a = transitions.T - np.eye(s)
        a[-1, :] = 1.0
        b = np.zeros(s)
        b[-1] = 1.0
        pi = np.linalg.solve(a, b)
    else:
        pi = np.full(s, 1.0 / s)
        for _ in range(100_000):
            nxt = pi @ transitions
            nxt /= nxt.sum()
            if np.max(np.abs(nxt - pi)) < _POWER_TOL:
                pi = nxt
                break
            pi = nxt
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    residual = float(np.max(np.abs(pi @ transitions - pi)))
    return pi, residual


def _check_mixing(transitions: np.ndarray) -> None:
    """Reject reducible or periodic chains via BFS reachability and cycle gcd."""
    s = transitions.shape[0]
    adj = transitions > 0.0
    for mat, label in ((adj, "forward"), (adj.T, "backward")):
        seen = np.zeros(s, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = np.any(mat[frontier], axis=0) & ~seen
            frontier = list(np.nonzero(nxt)[0])
            seen |= nxt
        if not seen.all():
            raise ValidationError(f"transition matrix is reducible ({label} reachability fails)")
    # aperiodicity: gcd over edges u->v of depth(u) + 1 - depth(v) in a BFS tree
    depth = np.full(s, -1, dtype=int)
    depth[0] = 0
    frontier = [0]
    while frontier:
        new = []
        for u in frontier:
            for v in np.nonzero(adj[u])[0]:
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    new.append(int(v))
        frontier = new
    g = 0
    for u in range(s):
        for v in np.nonzero(adj[u])[0]:
            g = math.gcd(g, depth[u] + 1 - depth[v])
    if g != 1:
        raise ValidationError(f"transition matrix is periodic with period {g}")


@dataclass(frozen=True)
class MarkovSource:
    """Stationary ergodic Markov law on symbols 0..S-1.

    ``stationary_residual`` records the achieved invariance residual when the
    stationary vector was obtained by power iteration; it is surfaced in
    reports rather than silently absorbed.
    """

    transitions: np.ndarray
    stationary: np.ndarray
    stationary_residual: float = field(default=0.0)

    def __post_init__(self) -> None:
        p = np.array(self.transitions, dtype=float)
        pi = np.array(self.stationary, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] < 2:
            raise ValidationError(f"transitions must be SxS with S >= 2, got shape {p.shape}")
        if pi.shape != (p.shape[0],):
            raise ValidationError("stationary vector length must match the alphabet size")
        if np.any(p < 0.0):
            raise ValidationError("transition probabilities must be nonnegative")
        rows = p.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > _ROW_TOL:
            raise ValidationError(f"rows must sum to 1 within {_ROW_TOL}")
        if abs(pi.sum() - 1.0) > _STAT_TOL:
            raise ValidationError("stationary vector must sum to 1")
        if np.any(pi <= 0.0):
            raise ValidationError("stationary vector must be strictly positive (ergodicity)")
        if np.max(np.abs(pi @ p - pi)) > max(_STAT_TOL, 10.0 * self.stationary_residual):
            raise ValidationError("stationary vector is not invariant under the transitions")
        _check_mixing(p)
        p.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "stationary", pi)

    @property
    def alphabet_size(self) -> int:
        return int(self.transitions.shape[0])

    @classmethod
    def from_transitions(cls, transitions: Sequence[Sequence[float]]) -> "MarkovSource":
        """Build a source from a transition matrix, solving for the stationary vector."""
        p = np.array(transitions, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValidationError(f"transitions must be square, got shape {p.shape}")
        _check_mixing(p)
        try:
            pi, residual = _solve_stationary(p)
        except np.linalg.LinAlgError as exc:
            raise ValidationError(f"stationary solve failed: {exc}") from exc
        return cls(transitions=p, stationary=pi, stationary_residual=residual)

    @classmethod
    def iid(cls, probs: Sequence[float]) -> "MarkovSource":
        """Independent symbols with the given marginal law."""
        q = np.array(probs, dtype=float)
        if q.ndim != 1 or q.size < 2:
            raise ValidationError("iid law needs at least two symbols")
        if np.any(q <= 0.0) or abs(q.sum() - 1.0) > _ROW_TOL:
            raise ValidationError("iid probabilities must be positive and sum to 1")
        p = np.tile(q, (q.size, 1))
        return cls(transitions=p, stationary=q.copy())

    def word_measure(self, word: Sequence[int]) -> float:
        """Exact cylinder measure of a finite word."""
        w = [int(c) for c in word]
        if not w:
            raise ValidationError("word must be nonempty")
        if any(c < 0 or c >= self.alphabet_size for c in w):
            raise ValidationError(f"word symbols must lie in [0, {self.alphabet_size}), got {w}")
        value = float(self.stationary[w[0]])
        for a, b in zip(w, w[1:]):
            value *= float(self.transitions[a, b])
        return value
