"""Pure-Python reference implementation of the decoding kernels.

Semantically identical to the compiled backend; used as the import-time
fallback and as the correctness reference in the kernel cross-tests.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

_ATANH_CAP = 1.0 - 1e-12
_LLR_CLAMP = 30.0


def bp_decode_batch(t_prior: np.ndarray, check_ptr: np.ndarray, edge_var: np.ndarray,
                    var_ptr: np.ndarray, var_edges: np.ndarray,
                    syndromes: np.ndarray, max_iters: int,
                    early_stop: bool = True
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Shot-looped wrapper matching the compiled batch kernel's interface.

    The compiled backend runs the identical flooding schedule in the tanh
    half-angle domain; here each shot runs the LLR-domain scalar routine
    (2*atanh(1-2p) == log((1-p)/p), so the priors agree exactly) and the
    returned beliefs are mapped back to the tanh domain.
    """
    n_var = t_prior.size
    nb = syndromes.shape[1]
    prior_llr = 2.0 * np.arctanh(t_prior)
    hard_out = np.zeros((n_var, nb), dtype=np.uint8)
    t_out = np.zeros((n_var, nb), dtype=np.float64)
    conv = np.zeros(nb, dtype=np.uint8)
    iters = np.zeros(nb, dtype=np.int32)
    for b in range(nb):
        hard, post, converged, n_it = bp_decode(
            prior_llr, check_ptr, edge_var, var_ptr, var_edges,
            np.ascontiguousarray(syndromes[:, b]), max_iters, _LLR_CLAMP,
            early_stop)
        hard_out[:, b] = hard
        t_out[:, b] = np.tanh(0.5 * post)
        conv[b] = converged
        iters[b] = n_it
    return hard_out, t_out, conv, iters


def bp_decode(prior_llr: np.ndarray, check_ptr: np.ndarray, edge_var: np.ndarray,
              var_ptr: np.ndarray, var_edges: np.ndarray, syndrome: np.ndarray,
              max_iters: int, clamp: float, early_stop: bool = True
              ) -> Tuple[np.ndarray, np.ndarray, bool, int]:
    """Flooding sum-product BP in the log-likelihood-ratio domain.

    Messages live on edges sorted by check.  Early exit as soon as the
    hard decision reproduces the syndrome.
    """
    n_var = prior_llr.size
    n_chk = check_ptr.size - 1
    n_edges = edge_var.size
    nu = np.zeros(n_edges, dtype=np.float64)  # check -> var
    sign = 1.0 - 2.0 * syndrome.astype(np.float64)
    lengths = np.diff(check_ptr)
    edge_chk = np.repeat(np.arange(n_chk, dtype=np.int32), lengths)
    posterior = prior_llr.copy()
    hard = np.zeros(n_var, dtype=np.uint8)
    converged = False
    iters = 0
    for it in range(1, max_iters + 1):
        if not converged:
            iters = it
        var_sum = prior_llr + np.bincount(edge_var, weights=nu, minlength=n_var)
        mu = var_sum[edge_var] - nu
        np.clip(mu, -clamp, clamp, out=mu)
        th = np.tanh(0.5 * mu)
        for c in range(n_chk):
            lo, hi = check_ptr[c], check_ptr[c + 1]
            if lo == hi:
                continue
            seg = th[lo:hi]
            k = hi - lo
            pre = np.empty(k)
            suf = np.empty(k)
            pre[0] = 1.0
            suf[k - 1] = 1.0
            if k > 1:
                np.cumprod(seg[:-1], out=pre[1:])
                suf[:k - 1] = np.cumprod(seg[::-1])[k - 2::-1]
            excl = pre * suf
            np.clip(excl, -_ATANH_CAP, _ATANH_CAP, out=excl)
            nu[lo:hi] = sign[c] * 2.0 * np.arctanh(excl)
        np.clip(nu, -clamp, clamp, out=nu)
        posterior = prior_llr + np.bincount(edge_var, weights=nu, minlength=n_var)
        hard = (posterior < 0.0).astype(np.uint8)
        parity = np.bincount(edge_chk, weights=hard[edge_var],
                             minlength=n_chk).astype(np.int64) & 1
        if not converged and np.array_equal(parity, syndrome.astype(np.int64)):
            converged = True
            if early_stop:
                break
    return hard, posterior, converged, iters


def osd_solve(n_det: int, col_ptr: np.ndarray, col_rows: np.ndarray,
              order: np.ndarray, soft: np.ndarray, syndrome_words: np.ndarray,
              osd_order: int) -> Tuple[np.ndarray, bool]:
    """Ordered-statistics solve over GF(2) using integer bitsets.

    Columns are consumed in `order` (most suspicious first).  The scan
    stops once the reduced syndrome is covered by pivot rows and enough
    free columns for the requested combination sweep have been collected:
    later (less suspicious) pivots can never enter the solution.
    """
    n_var = col_ptr.size - 1
    s = int.from_bytes(syndrome_words.tobytes(), "little")
    pivot_rows: list = []
    pivot_mech: list = []
    transforms: list = []
    pivot_mask = 0
    free_cols: list = []
    lam = osd_order

    for j in order:
        j = int(j)
        c = 0
        for i in range(col_ptr[j], col_ptr[j + 1]):
            c |= 1 << int(col_rows[i])
        for t in range(len(transforms)):
            if (c >> pivot_rows[t]) & 1:
                c ^= transforms[t]
        rem = c & ~pivot_mask
        if rem:
            r = (rem & -rem).bit_length() - 1
            w = c ^ (1 << r)
            pivot_rows.append(r)
            pivot_mech.append(j)
            transforms.append(w)
            pivot_mask |= 1 << r
            if (s >> r) & 1:
                s ^= w
        elif len(free_cols) < lam:
            free_cols.append((j, c))
        if (s & ~pivot_mask) == 0 and len(free_cols) >= lam:
            break

    solution = np.zeros(n_var, dtype=np.uint8)
    if s & ~pivot_mask:
        return solution, False

    n_piv = len(pivot_rows)

    def pivot_weight(sred: int) -> float:
        acc = 0.0
        for t in range(n_piv):
            if (sred >> pivot_rows[t]) & 1:
                acc += soft[pivot_mech[t]]
        return acc

    best_s = s
    best_free: Tuple[int, ...] = ()
    best_w = pivot_weight(s)
    for a in range(len(free_cols)):
        fa, ca = free_cols[a]
        sa = s ^ ca
        w = soft[fa] + pivot_weight(sa)
        if w < best_w:
            best_w, best_s, best_free = w, sa, (fa,)
        for b in range(a + 1, len(free_cols)):
            fb, cb = free_cols[b]
            sab = sa ^ cb
            w2 = soft[fa] + soft[fb] + pivot_weight(sab)
            if w2 < best_w:
                best_w, best_s, best_free = w2, sab, (fa, fb)

    for t in range(n_piv):
        if (best_s >> pivot_rows[t]) & 1:
            solution[pivot_mech[t]] = 1
    for f in best_free:
        solution[f] = 1
    return solution, True
