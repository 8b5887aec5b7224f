"""Union-find kernels behind co-spend clustering.

Two implementations share one contract: given n elements and groups of
element ids (CSR layout: flat ids plus group offsets), return the root id of
every element, where each component's root is its minimum member id. Merging
toward the minimum makes the result independent of group order.

The numba kernel is used when available; set BURNTRACE_USE_NUMBA=0 to force
the pure-Python fallback (or =1 to require numba). The flag only selects the
execution path; both produce identical arrays.
"""

import os

import numpy as np


def _find(parent: np.ndarray, i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]  # path halving
        i = parent[i]
    return i


def union_groups_py(n: int, flat: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Reference implementation in plain Python over numpy arrays."""
    parent = np.arange(n, dtype=np.int64)
    for g in range(len(offsets) - 1):
        start, end = offsets[g], offsets[g + 1]
        if end - start < 2:
            continue
        root = _find(parent, flat[start])
        for k in range(start + 1, end):
            other = _find(parent, flat[k])
            if other == root:
                continue
            if other < root:
                parent[root] = other
                root = other
            else:
                parent[other] = root
    roots = np.empty(n, dtype=np.int64)
    for i in range(n):
        roots[i] = _find(parent, i)
    return roots


def _numba_kernel():
    from numba import njit

    @njit(cache=True)
    def kernel(n, flat, offsets):  # pragma: no cover - exercised via wrapper
        parent = np.arange(n, dtype=np.int64)
        for g in range(len(offsets) - 1):
            start, end = offsets[g], offsets[g + 1]
            if end - start < 2:
                continue
            i = flat[start]
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            root = i
            for k in range(start + 1, end):
                j = flat[k]
                while parent[j] != j:
                    parent[j] = parent[parent[j]]
                    j = parent[j]
                if j == root:
                    continue
                if j < root:
                    parent[root] = j
                    root = j
                else:
                    parent[j] = root
        roots = np.empty(n, dtype=np.int64)
        for i in range(n):
            j = i
            while parent[j] != j:
                parent[j] = parent[parent[j]]
                j = parent[j]
            roots[i] = j
        return roots

    return kernel


def _select():
    flag = os.environ.get("BURNTRACE_USE_NUMBA", "").strip()
    if flag == "0":
        return union_groups_py, "python"
    try:
        kernel = _numba_kernel()
        return kernel, "numba"
    except ImportError:
        if flag == "1":
            raise
        return union_groups_py, "python"


_IMPL, BACKEND = _select()


def union_groups(n: int, flat: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Root id per element; roots are component minima."""
    if n == 0:
        return np.empty(0, dtype=np.int64)
    return _IMPL(n, np.ascontiguousarray(flat, dtype=np.int64),
                 np.ascontiguousarray(offsets, dtype=np.int64))
