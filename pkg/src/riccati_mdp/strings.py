"""Update-map words: finite 0/1 sequences applied to a starting covariance.

A word r = (i_1, ..., i_n) acts by composition

    value(r) = f_{i_1}( f_{i_2}( ... f_{i_n}(initial) ... ) ),

so the LAST bit touches the initial matrix first and the first bit is the
outermost, most recent update.  Reading a sample path P_t produced by arrivals
(g_0, ..., g_{t-1}) therefore gives the word (g_{t-1}, ..., g_0): newest
arrival first.  The number of 0 bits (`pi_count`) is the count of open-loop
updates in the word and is the quantity every decay exponent in this package
minimizes.

Words use a run-length text form, e.g. "0,1^3,0^2" for (0, 1, 1, 1, 0, 0);
the empty word prints as "".
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .linalg import SymMatrix, as_sym, loewner_leq, spectral_norm
from .operators import lyapunov_step, riccati_step

# Full enumeration is 2^length; keep direct generators at sane sizes.
MAX_ENUM_LENGTH = 30
MAX_SUPPORT_LENGTH = 22

_RUN_TOKEN = re.compile(r"^([01])(?:\^([1-9][0-9]*))?$")


def parse_run_length(text: str) -> tuple[int, ...]:
    """Parse "0,1^3,0^2" into the bit tuple (0, 1, 1, 1, 0, 0)."""
    text = text.strip()
    if text == "":
        return ()
    bits: list[int] = []
    for token in text.split(","):
        match = _RUN_TOKEN.match(token.strip())
        if match is None:
            raise ValueError(f"bad run-length token {token.strip()!r}")
        bit = int(match.group(1))
        count = int(match.group(2)) if match.group(2) else 1
        bits.extend([bit] * count)
    return tuple(bits)


def format_run_length(bits: tuple[int, ...]) -> str:
    """Inverse of parse_run_length; single runs print without the caret."""
    out: list[str] = []
    i = 0
    while i < len(bits):
        j = i
        while j < len(bits) and bits[j] == bits[i]:
            j += 1
        run = j - i
        out.append(f"{bits[i]}^{run}" if run > 1 else f"{bits[i]}")
        i = j
    return ",".join(out)


@dataclass(frozen=True)
class GammaString:
    """A word of update-map choices together with its starting covariance."""

    bits: tuple[int, ...]
    initial: SymMatrix

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"bits must be 0 or 1, got {self.bits!r}")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "initial", as_sym(self.initial))

    @classmethod
    def from_text(cls, text: str, initial: SymMatrix) -> "GammaString":
        return cls(bits=parse_run_length(text), initial=initial)

    def to_text(self) -> str:
        return format_run_length(self.bits)

    def __len__(self) -> int:
        return len(self.bits)


def pi_count(r: GammaString) -> int:
    """Number of open-loop (bit 0) updates in the word."""
    return len(r.bits) - sum(r.bits)


def truncate(r: GammaString, s: int) -> GammaString:
    """Keep the s outermost (leftmost) bits."""
    if not 0 <= s <= len(r.bits):
        raise ValueError(f"cannot keep {s} bits of a word of length {len(r.bits)}")
    return GammaString(bits=r.bits[:s], initial=r.initial)


@dataclass(frozen=True)
class StringValue:
    value: SymMatrix
    pi: int
    source: GammaString


def eval_string(m, r: GammaString) -> StringValue:
    """Apply the word to its starting covariance, innermost bit first."""
    x = r.initial
    for b in reversed(r.bits):
        x = riccati_step(m, x) if b else lyapunov_step(m, x)
    return StringValue(value=x, pi=pi_count(r), source=r)


def enumerate_strings(initial: SymMatrix, length: int) -> Iterator[GammaString]:
    """All 2^length words of exactly this length, lexicographic, 0 before 1."""
    if length < 0:
        raise ValueError(f"length must be nonnegative, got {length}")
    if length > MAX_ENUM_LENGTH:
        raise ValueError(
            f"refusing to enumerate 2^{length} words (limit 2^{MAX_ENUM_LENGTH})"
        )
    initial = as_sym(initial)
    for code in range(2**length):
        bits = tuple((code >> (length - 1 - k)) & 1 for k in range(length))
        yield GammaString(bits=bits, initial=initial)


def value_key(x: SymMatrix, dedup_tol: float = 1e-9) -> tuple:
    """Rounding key used to deduplicate near-identical covariance values.

    Entries are snapped to a grid of pitch dedup_tol * (1 + ||X||), so two
    values sharing a key agree entrywise to within one grid cell.
    """
    a = x.a
    pitch = dedup_tol * (1.0 + spectral_norm(x))
    return tuple(np.round(a / pitch).astype(np.int64).ravel().tolist())


def support_set(m, max_len: int, dedup_tol: float = 1e-9) -> list[SymMatrix]:
    """Distinct word values reachable from the fixed point in <= max_len steps.

    Walks the value tree level by level, expanding each distinct value once;
    since a word's value depends only on the running covariance, values that
    collide on the rounding grid generate identical subtrees and are merged.
    The fixed point itself (the empty word) is always included, and the result
    preserves first-discovery order, which is deterministic.
    """
    if max_len < 0:
        raise ValueError(f"max_len must be nonnegative, got {max_len}")
    if max_len > MAX_SUPPORT_LENGTH:
        raise ValueError(
            f"max_len {max_len} exceeds the enumeration limit {MAX_SUPPORT_LENGTH}"
        )
    from .operators import solve_dare

    p_star = solve_dare(m).p_star
    seen: dict[tuple, SymMatrix] = {value_key(p_star, dedup_tol): p_star}
    frontier = [p_star]
    for _ in range(max_len):
        next_frontier = []
        for x in frontier:
            for image in (lyapunov_step(m, x), riccati_step(m, x)):
                key = value_key(image, dedup_tol)
                if key not in seen:
                    seen[key] = image
                    next_frontier.append(image)
        frontier = next_frontier
        if not frontier:
            break
    return list(seen.values())


def invariant_upper_scale(m, tol_doublings: int = 60) -> float:
    """Smallest tested b with f1(b * I) <= b * I, found by doubling from 1."""
    n = m.dim_state
    b = 1.0
    for _ in range(tol_doublings):
        scaled = SymMatrix(b * np.eye(n))
        if loewner_leq(riccati_step(m, scaled), scaled):
            return b
        b *= 2.0
    raise RuntimeError(
        f"no invariant scale below 2^{tol_doublings}; model may not admit one"
    )


def string_upper_bound(m, r: GammaString) -> tuple[SymMatrix, float]:
    """Envelope bound: value(r) <= f0^pi(alpha * I) for a word-independent alpha.

    alpha is doubled up from max(b, ||initial||), where b is the invariant
    scale of the measurement update, until initial <= alpha * I.  Only the
    count of open-loop steps enters the envelope, not their positions, which
    is what makes the bound useful for exponent arguments.  A violation of
    the final comparison is reported as an error, not returned.
    """
    beta = invariant_upper_scale(m)
    n = m.dim_state
    alpha = max(beta, spectral_norm(r.initial))
    eye = np.eye(n)
    for _ in range(60):
        if loewner_leq(r.initial, SymMatrix(alpha * eye)):
            break
        alpha *= 2.0
    else:
        raise RuntimeError("no alpha with initial <= alpha * I after 60 doublings")

    bound = SymMatrix(alpha * eye)
    for _ in range(pi_count(r)):
        bound = lyapunov_step(m, bound)

    value = eval_string(m, r).value
    if not loewner_leq(value, bound, tol=1e-7):
        raise RuntimeError(
            "envelope bound violated; the invariant-scale surrogate is "
            f"inadequate for this model (alpha {alpha:.6e})"
        )
    return bound, alpha
