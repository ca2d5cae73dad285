"""Shared oracle helpers: plain-text reimplementations used to cross-check the
packed/vectorized code paths. These stay deliberately naive."""

import numpy as np
import pytest

_COMP = str.maketrans("ACGT", "TGCA")


def rc_text(s):
    return s.translate(_COMP)[::-1]


def canonical_text(s):
    # ASCII order of A<C<G<T matches the 2-bit code order, so min() agrees
    return min(s, rc_text(s))


def naive_counts(sequences, k, canonical):
    """Substring-and-dict k-mer counting over text; windows with non-ACGT skip."""
    table = {}
    for seq in sequences:
        for i in range(len(seq) - k + 1):
            win = seq[i : i + k]
            if any(c not in "ACGT" for c in win):
                continue
            if canonical:
                win = canonical_text(win)
            table[win] = table.get(win, 0) + 1
    return table


def random_dna(rng, length, alphabet="ACGT"):
    return "".join(alphabet[i] for i in rng.integers(0, len(alphabet), size=length))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
