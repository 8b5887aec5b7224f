import os
import subprocess
import sys

import numpy as np
from hypothesis import given, settings, strategies as st

from burntrace._kernels import BACKEND, union_groups, union_groups_py


def _csr(groups):
    flat = np.array([i for g in groups for i in g], dtype=np.int64)
    offsets = np.zeros(len(groups) + 1, dtype=np.int64)
    np.cumsum([len(g) for g in groups], out=offsets[1:])
    return flat, offsets


def _reference(n, groups):
    """Independent closure: repeated pairwise merging until stable."""
    comp = {i: {i} for i in range(n)}
    for g in groups:
        if not g:
            continue
        merged = set()
        for i in g:
            merged |= comp[i]
        for i in merged:
            comp[i] = merged
    return np.array([min(comp[i]) for i in range(n)], dtype=np.int64)


def test_empty():
    assert union_groups(0, np.empty(0, dtype=np.int64),
                        np.zeros(1, dtype=np.int64)).size == 0


def test_singletons_untouched():
    flat, offsets = _csr([[0], [3], []])
    assert union_groups(5, flat, offsets).tolist() == [0, 1, 2, 3, 4]


def test_chain_merges_to_minimum():
    flat, offsets = _csr([[4, 3], [3, 2], [2, 1], [1, 0]])
    assert union_groups(5, flat, offsets).tolist() == [0] * 5


def test_duplicate_members_in_group():
    flat, offsets = _csr([[2, 2, 1]])
    assert union_groups(3, flat, offsets).tolist() == [0, 1, 1]


groups_strategy = st.integers(1, 60).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.lists(st.integers(0, n - 1), min_size=1, max_size=6),
                 max_size=25)))


@settings(max_examples=300)
@given(groups_strategy)
def test_matches_reference_closure(case):
    n, groups = case
    flat, offsets = _csr(groups)
    assert union_groups(n, flat, offsets).tolist() == _reference(n, groups).tolist()


@settings(max_examples=150)
@given(groups_strategy, st.randoms(use_true_random=False))
def test_group_order_invariance(case, rnd):
    n, groups = case
    flat, offsets = _csr(groups)
    baseline = union_groups(n, flat, offsets).tolist()
    shuffled = list(groups)
    rnd.shuffle(shuffled)
    for g in shuffled:
        rnd.shuffle(g)
    flat2, offsets2 = _csr(shuffled)
    assert union_groups(n, flat2, offsets2).tolist() == baseline


@settings(max_examples=100)
@given(groups_strategy)
def test_python_and_selected_backend_agree(case):
    n, groups = case
    flat, offsets = _csr(groups)
    assert union_groups(n, flat, offsets).tolist() == \
        union_groups_py(n, flat, offsets).tolist()


def test_env_flag_selects_backend():
    # subprocess because the flag is read at import time
    code = "from burntrace._kernels import BACKEND; print(BACKEND)"
    env = dict(os.environ, BURNTRACE_USE_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.stdout.strip() == "python"


def test_default_backend_is_numba_when_installed():
    try:
        import numba  # noqa: F401
    except ImportError:
        return
    env = {k: v for k, v in os.environ.items() if k != "BURNTRACE_USE_NUMBA"}
    code = "from burntrace._kernels import BACKEND; print(BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.stdout.strip() == "numba"
    assert BACKEND in ("numba", "python")
