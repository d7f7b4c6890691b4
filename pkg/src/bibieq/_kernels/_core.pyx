# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled decoding kernels: sum-product BP and ordered-statistics solve.

BP runs in the tanh half-angle domain, which turns every update into
rational arithmetic: the channel prior is exactly 1-2p, a variable-side
LLR addition a+b becomes (ta+tb)/(1+ta*tb), and a check-side message is
the syndrome-signed product of incoming values (tanh(2*atanh(x)/2) == x).
Shots are processed in contiguous blocks so the inner loops vectorize.
Message clamping at +/-30 LLR corresponds to +/-tanh(15) here; every
intermediate is re-clamped, which keeps denominators bounded away from
zero.  The pure-Python backend implements the identical flooding
schedule in the LLR domain; results agree to floating-point rounding.

The OSD kernel mirrors bibieq._kernels._python.osd_solve exactly (same
pivot order and tie-breaking) on uint64 words.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh, atanh, fabs
from libc.stdint cimport int32_t, uint8_t

cnp.import_array()

cdef double ATANH_CAP = 1.0 - 1e-12
cdef double TCAP = tanh(15.0)  # message magnitude cap, = tanh(clamp/2)

cdef extern from *:
    """
    #include <stdint.h>

    /* Hot BP passes over (n_edges x nb) C-contiguous message blocks.
       The shot dimension (b) is independent, hence the simd pragmas;
       the edge dimension carries sequential prefix/suffix recurrences. */

    #define BP_MAX_BLOCK 64

    static void bp_check_pass(int n_chk, const int32_t* cp,
                              const double* restrict mvc,
                              double* restrict mcv,
                              double* restrict scratch,
                              const uint8_t* restrict syn,
                              int nb, double tcap) {
        double fwd[BP_MAX_BLOCK], bwd[BP_MAX_BLOCK];
        for (int c = 0; c < n_chk; ++c) {
            int lo = cp[c], hi = cp[c + 1];
            if (lo == hi) continue;
            #pragma omp simd
            for (int b = 0; b < nb; ++b) fwd[b] = 1.0;
            for (int e = lo; e < hi; ++e) {
                const double* m = mvc + (size_t)e * nb;
                double* s = scratch + (size_t)e * nb;
                #pragma omp simd
                for (int b = 0; b < nb; ++b) { s[b] = fwd[b]; fwd[b] *= m[b]; }
            }
            const uint8_t* sc = syn + (size_t)c * nb;
            #pragma omp simd
            for (int b = 0; b < nb; ++b) bwd[b] = 1.0 - 2.0 * sc[b];
            for (int e = hi - 1; e >= lo; --e) {
                const double* m = mvc + (size_t)e * nb;
                const double* s = scratch + (size_t)e * nb;
                double* o = mcv + (size_t)e * nb;
                #pragma omp simd
                for (int b = 0; b < nb; ++b) {
                    double x = s[b] * bwd[b];
                    x = x < tcap ? x : tcap;
                    o[b] = x > -tcap ? x : -tcap;
                    bwd[b] *= m[b];
                }
            }
        }
    }

    /* Variable pass in ratio form: a tanh-domain combine
       (a+b)/(1+ab) over a chain is tracked as numerator/denominator
       pairs, so the prefix/suffix recurrences are fused multiply-adds
       with a single division per emitted message.  Growth is bounded by
       2^degree, well inside double range for the degrees seen here. */
    static void bp_var_pass(int n_var, const int32_t* vp, const int32_t* ve,
                            const double* restrict tprior,
                            const double* restrict mcv,
                            double* restrict mvc,
                            double* restrict scr_n,
                            double* restrict scr_d,
                            double* restrict total,
                            uint8_t* restrict hard,
                            int nb, double tcap) {
        double fn[BP_MAX_BLOCK], fd[BP_MAX_BLOCK];
        double bn[BP_MAX_BLOCK], bd[BP_MAX_BLOCK];
        for (int v = 0; v < n_var; ++v) {
            int lo = vp[v], hi = vp[v + 1];
            double tp = tprior[v];
            #pragma omp simd
            for (int b = 0; b < nb; ++b) { fn[b] = tp; fd[b] = 1.0; }
            for (int i = lo; i < hi; ++i) {
                int e = ve[i];
                const double* m = mcv + (size_t)e * nb;
                double* sn = scr_n + (size_t)e * nb;
                double* sd = scr_d + (size_t)e * nb;
                #pragma omp simd
                for (int b = 0; b < nb; ++b) {
                    sn[b] = fn[b];
                    sd[b] = fd[b];
                    double n2 = fn[b] + m[b] * fd[b];
                    double d2 = fd[b] + m[b] * fn[b];
                    fn[b] = n2;
                    fd[b] = d2;
                }
            }
            double* tv = total + (size_t)v * nb;
            uint8_t* hv = hard + (size_t)v * nb;
            #pragma omp simd
            for (int b = 0; b < nb; ++b) {
                double t = fn[b] / fd[b];
                tv[b] = t;
                hv[b] = t < 0.0;
            }
            #pragma omp simd
            for (int b = 0; b < nb; ++b) { bn[b] = 0.0; bd[b] = 1.0; }
            for (int i = hi - 1; i >= lo; --i) {
                int e = ve[i];
                const double* m = mcv + (size_t)e * nb;
                const double* sn = scr_n + (size_t)e * nb;
                const double* sd = scr_d + (size_t)e * nb;
                double* o = mvc + (size_t)e * nb;
                #pragma omp simd
                for (int b = 0; b < nb; ++b) {
                    double num = sn[b] * bd[b] + bn[b] * sd[b];
                    double den = sd[b] * bd[b] + sn[b] * bn[b];
                    double x = num / den;
                    x = x < tcap ? x : tcap;
                    o[b] = x > -tcap ? x : -tcap;
                    double n2 = bn[b] + m[b] * bd[b];
                    double d2 = bd[b] + m[b] * bn[b];
                    bn[b] = n2;
                    bd[b] = d2;
                }
            }
        }
    }

    static void bp_parity_pass(int n_chk, const int32_t* cp, const int32_t* evar,
                               const uint8_t* restrict hard,
                               const uint8_t* restrict syn,
                               uint8_t* restrict ok, int nb) {
        uint8_t par[BP_MAX_BLOCK];
        for (int c = 0; c < n_chk; ++c) {
            int lo = cp[c], hi = cp[c + 1];
            const uint8_t* sc = syn + (size_t)c * nb;
            #pragma omp simd
            for (int b = 0; b < nb; ++b) par[b] = 0;
            for (int e = lo; e < hi; ++e) {
                const uint8_t* h = hard + (size_t)evar[e] * nb;
                #pragma omp simd
                for (int b = 0; b < nb; ++b) par[b] ^= h[b];
            }
            #pragma omp simd
            for (int b = 0; b < nb; ++b) ok[b] &= (uint8_t)(par[b] == sc[b]);
        }
    }
    """
    int BP_MAX_BLOCK
    void bp_check_pass(int n_chk, const int32_t* cp, const double* mvc,
                       double* mcv, double* scratch, const uint8_t* syn,
                       int nb, double tcap) nogil
    void bp_var_pass(int n_var, const int32_t* vp, const int32_t* ve,
                     const double* tprior, const double* mcv, double* mvc,
                     double* scr_n, double* scr_d, double* total,
                     uint8_t* hard, int nb, double tcap) nogil
    void bp_parity_pass(int n_chk, const int32_t* cp, const int32_t* evar,
                        const uint8_t* hard, const uint8_t* syn,
                        uint8_t* ok, int nb) nogil


cdef inline double _clamp_t(double x):
    # branchless form so the shot loops vectorize
    x = x if x < TCAP else TCAP
    return x if x > -TCAP else -TCAP


def bp_decode_batch(cnp.ndarray[cnp.float64_t, ndim=1] t_prior,
                    cnp.ndarray[cnp.int32_t, ndim=1] check_ptr,
                    cnp.ndarray[cnp.int32_t, ndim=1] edge_var,
                    cnp.ndarray[cnp.int32_t, ndim=1] var_ptr,
                    cnp.ndarray[cnp.int32_t, ndim=1] var_edges,
                    cnp.ndarray[cnp.uint8_t, ndim=2] syndromes,
                    int max_iters, bint early_stop=True):
    """Flooding sum-product BP over a block of shots, tanh domain.

    syndromes has shape (n_checks, block).  Per shot, the first iteration
    whose hard decision satisfies the syndrome freezes that shot's
    outputs (hard decisions and total beliefs); message passing continues
    for the remaining shots.  Returns (hard, posterior_tanh, converged,
    iterations), shot-minor.
    """
    cdef int n_var = t_prior.shape[0]
    cdef int n_chk = check_ptr.shape[0] - 1
    cdef int n_edges = edge_var.shape[0]
    cdef int nb = syndromes.shape[1]

    cdef cnp.ndarray[cnp.float64_t, ndim=2] m_vc = np.empty((n_edges, nb), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] m_cv = np.zeros((n_edges, nb), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] scratch = np.empty((n_edges, nb), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] scratch_d = np.empty((n_edges, nb), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] total = np.empty((n_var, nb), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] hard = np.zeros((n_var, nb), dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] t_out = np.zeros((n_var, nb), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] hard_out = np.zeros((n_var, nb), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] conv = np.zeros(nb, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] iters = np.zeros(nb, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok = np.empty(nb, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] fwd = np.empty(nb, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bwd = np.empty(nb, dtype=np.float64)

    cdef int it, e, v, b, n_active
    cdef double tp

    if nb > BP_MAX_BLOCK:
        raise ValueError(f"shot block too large ({nb} > {BP_MAX_BLOCK})")

    # initial var->check messages are the priors
    for e in range(n_edges):
        tp = t_prior[edge_var[e]]
        for b in range(nb):
            m_vc[e, b] = tp

    n_active = nb
    for it in range(1, max_iters + 1):
        with nogil:
            bp_check_pass(n_chk, &check_ptr[0], &m_vc[0, 0], &m_cv[0, 0],
                          &scratch[0, 0], &syndromes[0, 0], nb, TCAP)
            bp_var_pass(n_var, &var_ptr[0], &var_edges[0], &t_prior[0],
                        &m_cv[0, 0], &m_vc[0, 0], &scratch[0, 0],
                        &scratch_d[0, 0], &total[0, 0], &hard[0, 0], nb, TCAP)
            for b in range(nb):
                ok[b] = 0 if conv[b] else 1
            bp_parity_pass(n_chk, &check_ptr[0], &edge_var[0],
                           &hard[0, 0], &syndromes[0, 0], &ok[0], nb)
        for b in range(nb):
            if ok[b] and not conv[b]:
                conv[b] = 1
                iters[b] = it
                n_active -= 1
                if early_stop:
                    for v in range(n_var):
                        hard_out[v, b] = hard[v, b]
                        t_out[v, b] = total[v, b]
        if early_stop and n_active == 0:
            break
    for b in range(nb):
        if not conv[b]:
            iters[b] = max_iters
        if not conv[b] or not early_stop:
            for v in range(n_var):
                hard_out[v, b] = hard[v, b]
                t_out[v, b] = total[v, b]
    return hard_out, t_out, conv, iters


cdef inline int _lowest_bit(cnp.uint64_t w):
    cdef int b = 0
    while (w & 1) == 0:
        w >>= 1
        b += 1
    return b


def osd_solve(int n_det,
              cnp.ndarray[cnp.int32_t, ndim=1] col_ptr,
              cnp.ndarray[cnp.int32_t, ndim=1] col_rows,
              cnp.ndarray[cnp.int32_t, ndim=1] order,
              cnp.ndarray[cnp.float64_t, ndim=1] soft,
              cnp.ndarray[cnp.uint64_t, ndim=1] syndrome_words,
              int osd_order):
    cdef int n_var = col_ptr.shape[0] - 1
    cdef int words = (n_det + 63) >> 6
    cdef int cap = n_det if n_det > 0 else 1
    cdef int lam = osd_order

    cdef cnp.ndarray[cnp.uint64_t, ndim=2] transforms = np.zeros((cap, words), dtype=np.uint64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pivot_rows = np.zeros(cap, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pivot_mech = np.zeros(cap, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] pivot_mask = np.zeros(words, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] s = syndrome_words.copy()
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] cwork = np.zeros(words, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=2] free_cols = np.zeros((lam if lam > 0 else 1, words), dtype=np.uint64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] free_mech = np.zeros(lam if lam > 0 else 1, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] solution = np.zeros(n_var, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] sa = np.zeros(words, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] sab = np.zeros(words, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] best_s = np.zeros(words, dtype=np.uint64)

    cdef int n_piv = 0, n_free = 0
    cdef int idx, j, i, t, r, w_i, b
    cdef cnp.uint64_t rem, bit
    cdef bint uncovered, have

    for idx in range(n_var):
        j = order[idx]
        for w_i in range(words):
            cwork[w_i] = 0
        for i in range(col_ptr[j], col_ptr[j + 1]):
            r = col_rows[i]
            cwork[r >> 6] |= (<cnp.uint64_t>1) << (r & 63)
        for t in range(n_piv):
            r = pivot_rows[t]
            if (cwork[r >> 6] >> (r & 63)) & 1:
                for w_i in range(words):
                    cwork[w_i] ^= transforms[t, w_i]
        # leftover bits outside pivot rows?
        have = False
        for w_i in range(words):
            rem = cwork[w_i] & ~pivot_mask[w_i]
            if rem != 0:
                have = True
                b = _lowest_bit(rem)
                r = (w_i << 6) + b
                break
        if have:
            bit = (<cnp.uint64_t>1) << (r & 63)
            cwork[r >> 6] ^= bit  # transform = column minus its pivot bit
            for w_i in range(words):
                transforms[n_piv, w_i] = cwork[w_i]
            pivot_rows[n_piv] = r
            pivot_mech[n_piv] = j
            pivot_mask[r >> 6] |= bit
            if (s[r >> 6] >> (r & 63)) & 1:
                for w_i in range(words):
                    s[w_i] ^= transforms[n_piv, w_i]
            n_piv += 1
        elif n_free < lam:
            for w_i in range(words):
                free_cols[n_free, w_i] = cwork[w_i]
            free_mech[n_free] = j
            n_free += 1
        # stop once the syndrome is covered and the sweep set is filled
        uncovered = False
        for w_i in range(words):
            if s[w_i] & ~pivot_mask[w_i]:
                uncovered = True
                break
        if (not uncovered) and n_free >= lam:
            break

    uncovered = False
    for w_i in range(words):
        if s[w_i] & ~pivot_mask[w_i]:
            uncovered = True
            break
    if uncovered:
        return solution, False

    cdef double best_w, wgt
    cdef int fa, fb, a_i, b_i
    cdef int best_fa = -1, best_fb = -1

    best_w = 0.0
    for t in range(n_piv):
        r = pivot_rows[t]
        if (s[r >> 6] >> (r & 63)) & 1:
            best_w += soft[pivot_mech[t]]
    for w_i in range(words):
        best_s[w_i] = s[w_i]

    for a_i in range(n_free):
        fa = free_mech[a_i]
        for w_i in range(words):
            sa[w_i] = s[w_i] ^ free_cols[a_i, w_i]
        wgt = soft[fa]
        for t in range(n_piv):
            r = pivot_rows[t]
            if (sa[r >> 6] >> (r & 63)) & 1:
                wgt += soft[pivot_mech[t]]
        if wgt < best_w:
            best_w = wgt
            best_fa = fa
            best_fb = -1
            for w_i in range(words):
                best_s[w_i] = sa[w_i]
        for b_i in range(a_i + 1, n_free):
            fb = free_mech[b_i]
            for w_i in range(words):
                sab[w_i] = sa[w_i] ^ free_cols[b_i, w_i]
            wgt = soft[fa] + soft[fb]
            for t in range(n_piv):
                r = pivot_rows[t]
                if (sab[r >> 6] >> (r & 63)) & 1:
                    wgt += soft[pivot_mech[t]]
            if wgt < best_w:
                best_w = wgt
                best_fa = fa
                best_fb = fb
                for w_i in range(words):
                    best_s[w_i] = sab[w_i]

    for t in range(n_piv):
        r = pivot_rows[t]
        if (best_s[r >> 6] >> (r & 63)) & 1:
            solution[pivot_mech[t]] = 1
    if best_fa >= 0:
        solution[best_fa] = 1
    if best_fb >= 0:
        solution[best_fb] = 1
    return solution, True
