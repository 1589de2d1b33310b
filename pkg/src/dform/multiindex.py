"""Tables for strictly increasing multi-indices.

Components of a double form are stored over pairs of strictly increasing
multi-indices in lexicographic order, form block major.  Every algebraic and
differential operator in the package reduces to integer tables built here:
merge signs for wedge products, contraction tables for interior products,
slot-replacement tables for covariant-derivative corrections, and alternation
tables for exterior derivatives.  All tables are cached; dimensions are small
(d <= 4 in practice) so the caches stay tiny.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from math import comb


@lru_cache(maxsize=None)
def subsets(d: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All strictly increasing k-subsets of {0..d-1}, lexicographic."""
    if k < 0 or k > d:
        return ()
    return tuple(combinations(range(d), k))


@lru_cache(maxsize=None)
def index_of(d: int, k: int) -> dict[tuple[int, ...], int]:
    return {s: i for i, s in enumerate(subsets(d, k))}


def count(d: int, k: int) -> int:
    if k < 0 or k > d:
        return 0
    return comb(d, k)


def merge_sign(left: tuple[int, ...], right: tuple[int, ...]) -> int:
    """Sign of sorting the concatenation left+right; 0 on overlap.

    Both inputs must individually be strictly increasing.
    """
    if set(left) & set(right):
        return 0
    inversions = 0
    for a in left:
        inversions += sum(1 for b in right if b < a)
    return -1 if inversions % 2 else 1


@lru_cache(maxsize=None)
def merge_table(
    d: int, k: int, n: int
) -> tuple[tuple[int, int, int, int], ...]:
    """Entries (left_idx, right_idx, out_idx, sign) for k- wedge n-subsets."""
    out_index = index_of(d, k + n)
    entries = []
    for i, left in enumerate(subsets(d, k)):
        for j, right in enumerate(subsets(d, n)):
            s = merge_sign(left, right)
            if s == 0:
                continue
            target = tuple(sorted(left + right))
            entries.append((i, j, out_index[target], s))
    return tuple(entries)


@lru_cache(maxsize=None)
def interior_table(d: int, k: int) -> tuple[tuple[tuple[int, int, int], ...], ...]:
    """Per axis j: entries (in_idx, out_idx, sign) of contracting e_j.

    Contracting the basis covector block dx^I with the coordinate vector e_j
    removes j from I with sign (-1)^(position of j in I).
    """
    out_index = index_of(d, k - 1)
    per_axis: list[tuple[tuple[int, int, int], ...]] = []
    for j in range(d):
        entries = []
        for i, I in enumerate(subsets(d, k)):
            if j not in I:
                continue
            pos = I.index(j)
            rest = I[:pos] + I[pos + 1:]
            entries.append((i, out_index[rest], -1 if pos % 2 else 1))
        per_axis.append(tuple(entries))
    return tuple(per_axis)


@lru_cache(maxsize=None)
def prepend_table(d: int, k: int) -> tuple[tuple[tuple[int, int, int], ...], ...]:
    """Per axis j: entries (in_idx over k-subsets, out_idx over (k+1)-subsets, sign).

    Encodes dx^j wedged in front: evaluating a (k+1)-block on arguments
    (e_j, e_I) equals sign times the component at sorted({j} | I).
    """
    out_index = index_of(d, k + 1)
    per_axis: list[tuple[tuple[int, int, int], ...]] = []
    for j in range(d):
        entries = []
        for i, I in enumerate(subsets(d, k)):
            s = merge_sign((j,), I)
            if s == 0:
                continue
            entries.append((i, out_index[tuple(sorted((j,) + I))], s))
        per_axis.append(tuple(entries))
    return tuple(per_axis)


@lru_cache(maxsize=None)
def replace_table(
    d: int, k: int
) -> tuple[tuple[int, int, int, int, int], ...]:
    """Entries (out_idx, slot_value, axis_c, in_idx, sign) for slot replacement.

    For a covariant block indexed by increasing I, the Christoffel correction
    of the covariant derivative needs the component with I's slot p replaced
    by c and resorted.  slot_value is I[p] (used to pick the Christoffel
    entry), in_idx/sign locate the replaced component; replacements creating
    duplicate indices vanish and are omitted.
    """
    idx = index_of(d, k)
    entries = []
    for out_i, I in enumerate(subsets(d, k)):
        for p in range(k):
            rest = I[:p] + I[p + 1:]
            for c in range(d):
                if c in rest:
                    continue
                s = merge_sign((c,), rest)
                target = tuple(sorted((c,) + rest))
                # sign of moving c from slot p to sorted position: the
                # remaining indices keep relative order, so the sign is the
                # parity of moving c past the rest, times the parity of
                # removing slot p.
                s_remove = -1 if p % 2 else 1
                entries.append((out_i, I[p], c, idx[target], s * s_remove))
    return tuple(entries)


@lru_cache(maxsize=None)
def alternation_table(
    d: int, k: int
) -> tuple[tuple[tuple[int, int, int], ...], ...]:
    """Per (k+1)-subset K: entries (axis=K_p, sub_idx of K minus K_p, sign).

    Implements the antisymmetrization of a covariant derivative into the
    leading block: sum over p of (-1)^p grad_{K_p} applied at the remaining
    indices.
    """
    sub_index = index_of(d, k)
    per_out: list[tuple[tuple[int, int, int], ...]] = []
    for K in subsets(d, k + 1):
        entries = []
        for p in range(k + 1):
            rest = K[:p] + K[p + 1:]
            entries.append((K[p], sub_index[rest], -1 if p % 2 else 1))
        per_out.append(tuple(entries))
    return tuple(per_out)


@lru_cache(maxsize=None)
def complement_table(d: int, k: int) -> tuple[tuple[int, int], ...]:
    """Entries (comp_idx, sign) pairing each k-subset with its complement.

    sign is the merge sign of (I, complement), i.e. the coefficient of the
    flat Hodge pairing dx^I wedge dx^comp = sign * dx^{0..d-1}.
    """
    out_index = index_of(d, d - k)
    entries = []
    for I in subsets(d, k):
        C = tuple(i for i in range(d) if i not in I)
        entries.append((out_index[C], merge_sign(I, C)))
    return tuple(entries)
