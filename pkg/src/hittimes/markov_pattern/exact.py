"""Exact hitting- and return-time laws of word cylinders in Markov shifts.

Two independent backends are maintained deliberately:

* the product chain on (automaton state, last symbol) pairs, whose state count
  grows like alphabet + word length (the scalable path);
* the block chain on all length-r symbol tuples (the S^r reference path),
  which also handles targets that are unions of equal-rank cylinders.

Both reduce every law to substochastic iteration: evolve a distribution with
the kernel restricted to survival (no entry into the target), and collect the
mass entering the target at each step. Chain step m corresponds to occurrence
start m - l + 1, so a hitting time of k is the mass absorbed at step k + l - 1
while a return time of k (started from a full match) is absorbed at step k.

Mass accumulators use Neumaier-compensated summation; for rare targets the
interesting k run into the millions and naive accumulation would lose digits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import (
    BudgetExceededError,
    NumericalDriftError,
    ProbabilityUnderflowError,
    ValidationError,
)
from .automaton import PatternTarget, PrefixAutomaton, build_automaton
from .source import MarkovSource

_MASS_DRIFT_TOL = 1e-9
_UNDERFLOW = 1e-300


class _CompensatedSum:
    """Neumaier running sum: value() is exact to one final rounding."""

    __slots__ = ("_s", "_c")

    def __init__(self) -> None:
        self._s = 0.0
        self._c = 0.0

    def add(self, x: float) -> None:
        t = self._s + x
        if abs(self._s) >= abs(x):
            self._c += (self._s - t) + x
        else:
            self._c += (x - t) + self._s
        self._s = t

    def value(self) -> float:
        return self._s + self._c


@dataclass(frozen=True)
class ExactPMF:
    """Law of a hitting or return time, truncated at a finite horizon.

    ``masses[i]`` is the probability of the value ``support_start + i`` and
    ``tail`` the mass beyond the horizon, so that masses plus tail recover the
    total mass of the initial distribution (1 for the laws computed here).
    """

    support_start: int
    masses: np.ndarray
    tail: float

    def __post_init__(self) -> None:
        m = np.asarray(self.masses, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    def mass_at(self, k: int) -> float:
        i = k - self.support_start
        if i < 0 or i >= self.masses.size:
            raise ValidationError(f"k={k} outside computed range")
        return float(self.masses[i])

    def total(self) -> float:
        acc = _CompensatedSum()
        for x in self.masses:
            acc.add(float(x))
        acc.add(self.tail)
        return acc.value()

    def expectation(self) -> float:
        """Mean of the truncated law; meaningful when tail is negligible."""
        acc = _CompensatedSum()
        for i, x in enumerate(self.masses):
            acc.add((self.support_start + i) * float(x))
        return acc.value()

    def survival(self, k: int) -> float:
        """P(value >= k), using the tail for the truncated part."""
        acc = _CompensatedSum()
        for i, x in enumerate(self.masses):
            if self.support_start + i >= k:
                acc.add(float(x))
        acc.add(self.tail)
        return acc.value()


class ProductChain:
    """Markov chain on (automaton state, last symbol) pairs.

    Only reachable pairs are materialized: (0, c) for every symbol c plus
    (s, word[s-1]) for s = 1..l, so the state count is alphabet + length.
    The full-match pair is unique because the word fixes its last symbol.
    """

    def __init__(self, source: MarkovSource, automaton: PrefixAutomaton) -> None:
        if automaton.alphabet_size != source.alphabet_size:
            raise ValidationError("alphabet sizes of source and automaton disagree")
        word = automaton.word
        s_count = source.alphabet_size
        l = len(word)
        pairs = [(0, c) for c in range(s_count)]
        pairs += [(s, word[s - 1]) for s in range(1, l + 1)]
        index = {pc: i for i, pc in enumerate(pairs)}
        n = len(pairs)
        kernel = np.zeros((n, n))
        table = automaton.table
        p = source.transitions
        for (st, c), i in index.items():
            for c2 in range(s_count):
                kernel[i, index[(int(table[st, c2]), c2)]] += p[c, c2]
        match_idx = index[(l, word[l - 1])]
        sub = kernel.copy()
        sub[:, match_idx] = 0.0
        self.source = source
        self.automaton = automaton
        self.pairs = pairs
        self.index = index
        self.kernel = kernel
        self.survive = sub
        self.into_match = kernel[:, match_idx].copy()
        self.match_index = match_idx

    @property
    def n_states(self) -> int:
        return len(self.pairs)

    def stationary_vector(self) -> np.ndarray:
        v = np.zeros(self.n_states)
        for c in range(self.source.alphabet_size):
            v[self.index[(0, c)]] = self.source.stationary[c]
        return v

    def entry_vector(self) -> np.ndarray:
        v = np.zeros(self.n_states)
        v[self.match_index] = 1.0
        return v


def product_chain(source: MarkovSource, automaton: PrefixAutomaton) -> ProductChain:
    """Annotated chain on (automaton state, last symbol) pairs."""
    return ProductChain(source, automaton)


def _escape_initial(
    chain: ProductChain, target: PatternTarget
) -> tuple[np.ndarray, dict[int, float], float]:
    """Initial data for conditioning on the escaping part of the target.

    Enumerates the continuation block of length p after a full match,
    excluding the single periodic continuation. Returns the surviving
    (unnormalized) state vector, the masses of matches occurring inside the
    block keyed by their return time, and the conditioning mass (which equals
    the exact escaping proportion of the target).
    """
    p = target.period_hint
    if p is None:
        raise ValidationError("conditioning on the escaping part requires a period_hint")
    word = target.word
    s_count = chain.source.alphabet_size
    if s_count**p > 2**20:
        raise BudgetExceededError(f"escaping conditioning enumerates {s_count}**{p} blocks")
    periodic_tail = target.periodic_extension()[len(word) :]
    table = chain.automaton.table
    trans = chain.source.transitions
    l = len(word)
    survivors = np.zeros(chain.n_states)
    early: dict[int, float] = {}
    total = _CompensatedSum()
    # full enumeration (no early pruning) so the excluded periodic block is
    # identified exactly even when it shares a prefix with early matches
    for block in itertools.product(range(s_count), repeat=p):
        if block == periodic_tail:
            continue
        state, last = l, word[l - 1]
        weight = 1.0
        first_match: int | None = None
        for i, c in enumerate(block, start=1):
            weight *= trans[last, c]
            if weight == 0.0:
                break
            state = int(table[state, c])
            last = c
            if first_match is None and state == l:
                first_match = i
        if weight == 0.0:
            continue
        total.add(weight)
        if first_match is not None:
            early[first_match] = early.get(first_match, 0.0) + weight
        else:
            survivors[chain.index[(state, last)]] += weight
    return survivors, early, total.value()


def hitting_pmf(
    source: MarkovSource,
    target: PatternTarget,
    initial: str | np.ndarray,
    k_max: int,
) -> ExactPMF:
    """Exact law of the first entrance time into a word cylinder.

    ``initial`` selects the starting law: "stationary" for the invariant
    measure, "in_target" for conditioning on the cylinder (the return law),
    "escaping" for conditioning on the non-returning part of a periodic
    target, or an explicit vector over the product-chain pairs.
    """
    if k_max < 1:
        raise ValidationError(f"k_max must be >= 1, got {k_max}")
    chain = ProductChain(source, build_automaton(target, source.alphabet_size))
    l = target.length
    masses = np.zeros(k_max)
    scale = 1.0
    early_total = 0.0
    # absorption at chain step m realizes the time k = m - lead
    if isinstance(initial, str):
        if initial in ("in_target", "escaping") and source.word_measure(target.word) == 0.0:
            raise ValidationError("cannot condition on a target of zero measure")
        if initial == "stationary":
            v = chain.stationary_vector()
            lead = l - 1  # occurrence starting at k completes at step k + l - 1
        elif initial == "in_target":
            v = chain.entry_vector()
            lead = 0
        elif initial == "escaping":
            v, early, mass = _escape_initial(chain, target)
            scale = 1.0 / mass
            early_total = sum(early.values()) * scale  # beyond-k_max part feeds the tail
            for k, m in early.items():
                if 1 <= k <= k_max:
                    masses[k - 1] = m * scale
            lead = -(target.period_hint or 0)  # block steps already consumed
        else:
            raise ValidationError(f"unknown initial distribution {initial!r}")
    else:
        v = np.asarray(initial, dtype=float)
        if v.shape != (chain.n_states,):
            raise ValidationError(
                f"explicit initial vector must have length {chain.n_states}, got {v.shape}"
            )
        if np.any(v < 0.0):
            raise ValidationError("explicit initial vector must be nonnegative")
        v = v.copy()
        lead = 0

    total_in = float(v.sum()) * scale + early_total
    absorbed = _CompensatedSum()
    for x in masses:
        if x:
            absorbed.add(float(x))
    sub = chain.survive
    into = chain.into_match
    for m in range(1, k_max + lead + 1):
        hit = float(v @ into) * scale
        k = m - lead
        if k >= 1:
            masses[k - 1] += hit
            absorbed.add(hit)
        v = v @ sub
    tail = total_in - absorbed.value()
    if tail < -_MASS_DRIFT_TOL:
        raise NumericalDriftError(
            f"mass balance drifted past tolerance: tail={tail:.3e} after k_max={k_max}"
        )
    return ExactPMF(support_start=1, masses=masses, tail=max(tail, 0.0))


def return_pmf(source: MarkovSource, target: PatternTarget, k_max: int) -> ExactPMF:
    """Exact return-time law: hitting law started from the cylinder itself."""
    return hitting_pmf(source, target, "in_target", k_max)


def theta_exact(source: MarkovSource, target: PatternTarget) -> float:
    """Escaping proportion of a periodic target: 1 - mu(A n T^-p A)/mu(A)."""
    if target.period_hint is None:
        raise ValidationError("theta_exact requires a target with a period_hint")
    mu_a = source.word_measure(target.word)
    if mu_a == 0.0:
        raise ValidationError("target cylinder has zero measure under this source")
    return 1.0 - source.word_measure(target.periodic_extension()) / mu_a


def _absorbed_at_exact(
    chain: ProductChain, v: np.ndarray, steps: int
) -> tuple[float, np.ndarray]:
    """Mass entering the match state at exactly the given inner step."""
    sub = chain.survive
    for _ in range(steps - 1):
        v = v @ sub
    return float(v @ chain.into_match), v


def consecutive_joint_pmf(
    source: MarkovSource,
    target: PatternTarget,
    gaps: Sequence[int],
    from_entry: bool = False,
) -> float:
    """Exact probability that the first d inter-visit gaps equal ``gaps``.

    The first gap is a hitting time from the stationary law (or a return time
    when ``from_entry``); each later gap is a return time chained from the
    full-match state, which the word makes unique, so renormalizing onto the
    post-hit distribution is exact.
    """
    gaps = [int(k) for k in gaps]
    if not gaps:
        raise ValidationError("gap list must be nonempty")
    if any(k < 1 for k in gaps):
        raise ValidationError(f"gaps must be >= 1, got {gaps}")
    chain = ProductChain(source, build_automaton(target, source.alphabet_size))
    l = target.length
    prob = 1.0
    for j, k in enumerate(gaps):
        if j == 0 and not from_entry:
            v = chain.stationary_vector()
            steps = k + l - 1
        else:
            v = chain.entry_vector()
            steps = k
        leg, _ = _absorbed_at_exact(chain, v, steps)
        if leg == 0.0:
            return 0.0  # a structurally impossible gap, not an underflow
        prob *= leg
        if prob < _UNDERFLOW:
            raise ProbabilityUnderflowError(
                f"joint probability underflowed below {_UNDERFLOW} at gap {j + 1}"
            )
    return prob


def verify_inducing_identity(
    source: MarkovSource, target: PatternTarget, k_range: Iterable[int]
) -> float:
    """Max |mu(phi_A = k) - mu(A n {phi_A >= k})| over the given k.

    The left side comes from the stationary hitting law, the right side from
    the cylinder measure times the return-law survival function.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1:
        raise ValidationError("k_range must contain integers >= 1")
    k_max = ks[-1]
    hit = hitting_pmf(source, target, "stationary", k_max)
    ret = return_pmf(source, target, k_max)
    mu_a = source.word_measure(target.word)
    worst = 0.0
    # survival computed by backward partial sums to keep k_max sweeps cheap
    surv = np.empty(k_max + 1)
    surv[k_max] = float(ret.tail)
    for k in range(k_max - 1, -1, -1):
        surv[k] = surv[k + 1] + float(ret.masses[k])
    for k in ks:
        lhs = hit.mass_at(k)
        rhs = mu_a * surv[k - 1]
        worst = max(worst, abs(lhs - rhs))
    return float(worst)


def verify_shift_identity(
    source: MarkovSource, target: PatternTarget, j: int, m: int
) -> tuple[float, float]:
    """Both sides of the j-shift occurrence identity.

    Left: mu({phi_A <= j} n {phi_A o T^j = m}), computed by evolving the
    product chain with a matched/unmatched split through the first j
    occurrence starts, then substochastically to an exact hit m starts later.
    Right: mu(A n {m <= phi_A < m + j}) from the return law.
    """
    if j < 1 or m < 1:
        raise ValidationError("j and m must be >= 1")
    chain = ProductChain(source, build_automaton(target, source.alphabet_size))
    l = target.length
    kernel = chain.kernel
    sub = chain.survive
    match = chain.match_index
    u = chain.stationary_vector()  # no occurrence start in 1..j yet
    f = np.zeros_like(u)  # some occurrence start in 1..j
    for _ in range(j + l - 1):
        u = u @ kernel
        f = f @ kernel
        moved = u[match]
        if moved:
            u[match] = 0.0
            f[match] += moved
    for _ in range(m - 1):
        f = f @ sub
    lhs = float(f @ chain.into_match)
    ret = return_pmf(source, target, m + j - 1)
    mu_a = source.word_measure(target.word)
    acc = _CompensatedSum()
    for v in range(m, m + j):
        acc.add(ret.mass_at(v))
    rhs = mu_a * acc.value()
    return lhs, rhs


def verify_shift_identity_grid(
    source: MarkovSource, target: PatternTarget, j_max: int, m_max: int
) -> float:
    """Max absolute shift-identity discrepancy over 1 <= j <= j_max, 1 <= m <= m_max.

    Same two sides as `verify_shift_identity`, but the matched/unmatched split
    is extended incrementally in j and each j gets a single substochastic
    sweep over m, so the whole grid costs O(j_max * m_max) small matvecs.
    """
    if j_max < 1 or m_max < 1:
        raise ValidationError("j_max and m_max must be >= 1")
    chain = ProductChain(source, build_automaton(target, source.alphabet_size))
    l = target.length
    kernel = chain.kernel
    sub = chain.survive
    match = chain.match_index
    mu_a = source.word_measure(target.word)
    ret = return_pmf(source, target, m_max + j_max - 1)
    u = chain.stationary_vector()
    f = np.zeros_like(u)
    worst = 0.0
    steps_done = 0
    for j in range(1, j_max + 1):
        while steps_done < j + l - 1:
            u = u @ kernel
            f = f @ kernel
            moved = u[match]
            if moved:
                u[match] = 0.0
                f[match] += moved
            steps_done += 1
        g = f.copy()
        # rhs(m) = mu(A) * sum of return masses over m..m+j-1, via prefix sums
        prefix = np.concatenate(([0.0], np.cumsum(ret.masses[: m_max + j - 1])))
        for m in range(1, m_max + 1):
            lhs = float(g @ chain.into_match)
            rhs = mu_a * float(prefix[m + j - 1] - prefix[m - 1])
            worst = max(worst, abs(lhs - rhs))
            g = g @ sub
    return worst


# ---------------------------------------------------------------------------
# Block-chain reference backend
# ---------------------------------------------------------------------------


class BlockChain:
    """Chain on all length-r symbol tuples; the S^r reference backend.

    Tuples are encoded base-S with the most recent symbol in the lowest
    digit's complement position: index = sum_t block[t] * S^(r-1-t), so a
    shift-and-append is (index mod S^(r-1)) * S + c. Targets are arbitrary
    sets of equal-rank tuples, which covers unions of cylinders.
    """

    def __init__(self, source: MarkovSource, rank: int, budget_states: int = 2**22) -> None:
        if rank < 1:
            raise ValidationError(f"rank must be >= 1, got {rank}")
        s = source.alphabet_size
        n = s**rank
        if n > budget_states:
            raise BudgetExceededError(
                f"block chain needs {n} states for rank {rank}, budget is {budget_states}"
            )
        self.source = source
        self.rank = rank
        self.n_states = n
        self._mod = s ** (rank - 1)
        self._last = np.arange(n, dtype=np.int64) % s
        self._shift = (np.arange(n, dtype=np.int64) % self._mod) * s

    def encode(self, block: Sequence[int]) -> int:
        if len(block) != self.rank:
            raise ValidationError(f"block must have length {self.rank}")
        idx = 0
        for c in block:
            idx = idx * self.source.alphabet_size + int(c)
        return idx

    def stationary_blocks(self) -> np.ndarray:
        """Stationary law of length-r blocks."""
        s = self.source.alphabet_size
        v = np.array(self.source.stationary, dtype=float)
        for _ in range(self.rank - 1):
            last = np.arange(v.size, dtype=np.int64) % s
            v = (v[:, None] * self.source.transitions[last]).reshape(-1)
        return v

    def step(self, v: np.ndarray) -> np.ndarray:
        """One full-kernel step of a distribution over blocks."""
        s = self.source.alphabet_size
        out = np.zeros_like(v)
        for c in range(s):
            np.add.at(out, self._shift + c, v * self.source.transitions[self._last, c])
        return out


def _block_pmf(
    source: MarkovSource,
    words: Sequence[Sequence[int]],
    k_max: int,
    from_inside: bool,
    budget_ops: int = 10**9,
) -> tuple[ExactPMF, float]:
    """Hitting or return law of a union of equal-rank cylinders.

    Returns (pmf, target measure). ``from_inside`` starts from the stationary
    law conditioned on the target (return law); otherwise from the stationary
    law with the first rank-1 steps run unrestricted, because matches there
    would correspond to occurrence starts <= 0.
    """
    if not words:
        raise ValidationError("word set must be nonempty")
    rank = len(words[0])
    if any(len(w) != rank for w in words):
        raise ValidationError("all words in a block target must have equal length")
    chain = BlockChain(source, rank)
    ops = (k_max + rank) * chain.n_states * source.alphabet_size
    if ops > budget_ops:
        raise BudgetExceededError(
            f"block computation needs ~{ops:.2e} ops, budget is {budget_ops:.2e}"
        )
    target = np.zeros(chain.n_states, dtype=bool)
    for w in words:
        target[chain.encode(w)] = True
    v = chain.stationary_blocks()
    mu_target = float(v[target].sum())
    if mu_target <= 0.0:
        raise ValidationError("target set has zero stationary measure")
    if from_inside:
        v = np.where(target, v, 0.0) / mu_target
        phantom = 0
    else:
        phantom = rank - 1
    masses = np.zeros(k_max)
    absorbed = _CompensatedSum()
    total_in = float(v.sum())
    for _ in range(phantom):
        v = chain.step(v)
    for k in range(1, k_max + 1):
        v = chain.step(v)
        hit = float(v[target].sum())
        masses[k - 1] = hit
        absorbed.add(hit)
        v[target] = 0.0
    tail = total_in - absorbed.value()
    if tail < -_MASS_DRIFT_TOL:
        raise NumericalDriftError(f"block mass balance drifted: tail={tail:.3e}")
    return ExactPMF(support_start=1, masses=masses, tail=max(tail, 0.0)), mu_target


def block_hitting_pmf(source: MarkovSource, target: PatternTarget, k_max: int) -> ExactPMF:
    """Stationary hitting law via the S^l block chain (reference backend)."""
    pmf, _ = _block_pmf(source, [target.word], k_max, from_inside=False)
    return pmf


def block_return_pmf(source: MarkovSource, target: PatternTarget, k_max: int) -> ExactPMF:
    """Return law via the S^l block chain (reference backend)."""
    pmf, _ = _block_pmf(source, [target.word], k_max, from_inside=True)
    return pmf


def block_set_return_pmf(
    source: MarkovSource,
    words: Sequence[Sequence[int]],
    k_max: int,
    budget_ops: int = 10**9,
) -> tuple[ExactPMF, float]:
    """Return law and measure of a union of equal-rank cylinders."""
    return _block_pmf(source, words, k_max, from_inside=True, budget_ops=budget_ops)
