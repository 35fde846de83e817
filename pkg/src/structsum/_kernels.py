"""Hot inner loops with numba acceleration and a pure-Python/numpy fallback.

Set STRUCTSUM_NO_NUMBA=1 to force the fallback path. Both paths consume
pre-drawn uniforms, so results are bit-identical across backends.
"""
import os

import numpy as np

_DISABLED = os.environ.get("STRUCTSUM_NO_NUMBA", "") not in ("", "0")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def gibbs_sweep(word_ids, doc_ids, z, n_dk, n_kw, n_k, alpha, eta, uniforms):
    """One collapsed-Gibbs pass over all tokens, updating counts in place.

    word_ids/doc_ids: flat token stream; z: current topic assignments;
    uniforms: one pre-drawn U(0,1) per token.
    """
    K, V = n_kw.shape
    for i in range(word_ids.shape[0]):
        w = word_ids[i]
        d = doc_ids[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1
        # full conditional p(k) ~ (n_dk + alpha) * (n_kw + eta) / (n_k + eta V)
        total = 0.0
        probs = np.empty(K)
        for j in range(K):
            p = (n_dk[d, j] + alpha) * (n_kw[j, w] + eta) / (n_k[j] + eta * V)
            probs[j] = p
            total += p
        u = uniforms[i] * total
        acc = 0.0
        knew = K - 1
        for j in range(K):
            acc += probs[j]
            if u < acc:
                knew = j
                break
        z[i] = knew
        n_dk[d, knew] += 1
        n_kw[knew, w] += 1
        n_k[knew] += 1


@njit(cache=True)
def gibbs_init(word_ids, doc_ids, z, n_dk, n_kw, n_k, alpha, eta, uniforms):
    """Sequential initialization: sample each token's topic from the
    conditional given the tokens assigned so far (counts start empty)."""
    K, V = n_kw.shape
    for i in range(word_ids.shape[0]):
        w = word_ids[i]
        d = doc_ids[i]
        total = 0.0
        probs = np.empty(K)
        for j in range(K):
            p = (n_dk[d, j] + alpha) * (n_kw[j, w] + eta) / (n_k[j] + eta * V)
            probs[j] = p
            total += p
        u = uniforms[i] * total
        acc = 0.0
        k = K - 1
        for j in range(K):
            acc += probs[j]
            if u < acc:
                k = j
                break
        z[i] = k
        n_dk[d, k] += 1
        n_kw[k, w] += 1
        n_k[k] += 1


@njit(cache=True)
def foldin_sweep(word_ids, z, n_k_doc, phi, alpha, uniforms):
    """Gibbs pass for held-out inference with a fixed topic-word matrix."""
    K = phi.shape[0]
    for i in range(word_ids.shape[0]):
        w = word_ids[i]
        k = z[i]
        n_k_doc[k] -= 1
        total = 0.0
        probs = np.empty(K)
        for j in range(K):
            p = (n_k_doc[j] + alpha) * phi[j, w]
            probs[j] = p
            total += p
        u = uniforms[i] * total
        acc = 0.0
        knew = K - 1
        for j in range(K):
            acc += probs[j]
            if u < acc:
                knew = j
                break
        z[i] = knew
        n_k_doc[knew] += 1


@njit(cache=True)
def lcs_length(a, b):
    """Length of the longest common subsequence of two id sequences."""
    n, m = a.shape[0], b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        prev, cur = cur, prev
    return prev[m]
