"""Deterministic primality for 64-bit integers.

Trial division below 2**16, deterministic Miller-Rabin witnesses above.
The witness set {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37} is proven
sufficient for all n < 3.3e24, which covers the full 64-bit range.
"""

from __future__ import annotations

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61)
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Exact primality test for integers 0 <= n < 2**64."""
    n = int(n)
    if n < 0:
        raise ValueError(f"is_prime expects a nonnegative integer, got {n}")
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    if n < 2**16:
        d = 67
        while d * d <= n:
            if n % d == 0:
                return False
            d += 2
        return True
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def primes_up_to(bound: int) -> list[int]:
    """All primes <= bound by Eratosthenes sieve."""
    if bound < 2:
        return []
    sieve = bytearray([1]) * (bound + 1)
    sieve[0] = sieve[1] = 0
    i = 2
    while i * i <= bound:
        if sieve[i]:
            sieve[i * i :: i] = bytearray(len(sieve[i * i :: i]))
        i += 1
    return [i for i, flag in enumerate(sieve) if flag]
