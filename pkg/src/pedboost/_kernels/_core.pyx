# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see _fallback.py for the reference
implementations and the message-passing scheme. Beyond translating the
recursion to C loops, this backend memoizes each child's marginalized
transmission matrix, which several messages share.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef class PeelContext:
    """Shared peeling state for one (prior, transmission) pair; see the
    fallback docstring. trans_t is the [g, f*S+m] layout that lets the
    child-matrix accumulation vectorize."""

    cdef double[::1] prior
    cdef double[:, :, ::1] trans
    cdef object trans2_nd             # ndarray view [S*S, S] for BLAS products
    cdef Py_ssize_t S

    def __init__(self, prior, trans):
        self.prior = np.ascontiguousarray(prior, dtype=np.float64)
        self.trans = np.ascontiguousarray(trans, dtype=np.float64)
        self.S = self.prior.shape[0]
        self.trans2_nd = np.asarray(self.trans).reshape(self.S * self.S, self.S)

    def posterior(self, fathers, mothers, pen, target):
        return _Peeler(self, fathers, mothers, pen).posterior(target)


cdef class _Peeler:
    cdef PeelContext ctx
    cdef double[:, ::1] pen
    cdef long[::1] fam_father
    cdef long[::1] fam_mother
    cdef long[::1] fam_of_child
    cdef long[::1] child_off
    cdef long[::1] child_list
    cdef long[::1] pfam_off
    cdef long[::1] pfam_list
    cdef double[:, ::1] ant
    cdef object ant_nd
    cdef unsigned char[::1] have_ant
    cdef double[:, ::1] up
    cdef object up_nd
    cdef unsigned char[::1] have_up
    cdef double[:, ::1] wmat          # per child: sum_g trans[f, m, g] * child_local[g]
    cdef object wmat_nd
    cdef unsigned char[::1] have_w
    cdef Py_ssize_t n, S, n_fams

    def __init__(self, PeelContext ctx, fathers, mothers, pen):
        self.ctx = ctx
        self.pen = np.ascontiguousarray(pen, dtype=np.float64)
        self.n = self.pen.shape[0]
        self.S = self.pen.shape[1]

        cdef long[::1] fa = np.ascontiguousarray(fathers, dtype=np.int64)
        cdef long[::1] mo = np.ascontiguousarray(mothers, dtype=np.int64)
        cdef Py_ssize_t i, k, key
        cdef dict couple_index = {}
        cdef long[::1] fam_of_child = np.full(self.n, -1, dtype=np.int64)
        cdef long[::1] fam_fa = np.empty(self.n, dtype=np.int64)
        cdef long[::1] fam_mo = np.empty(self.n, dtype=np.int64)
        cdef Py_ssize_t n_fams = 0
        for i in range(self.n):
            if fa[i] < 0:
                continue
            key = fa[i] * self.n + mo[i]
            k = couple_index.get(key, -1)
            if k < 0:
                k = n_fams
                couple_index[key] = k
                fam_fa[k] = fa[i]
                fam_mo[k] = mo[i]
                n_fams += 1
            fam_of_child[i] = k
        self.n_fams = n_fams
        self.fam_father = np.asarray(fam_fa[:n_fams]).copy() if n_fams else np.empty(0, dtype=np.int64)
        self.fam_mother = np.asarray(fam_mo[:n_fams]).copy() if n_fams else np.empty(0, dtype=np.int64)
        self.fam_of_child = fam_of_child

        # children per family and parent-families per individual, as
        # offset/list pairs filled by counting passes
        cdef long[::1] child_off = np.zeros(n_fams + 1, dtype=np.int64)
        for i in range(self.n):
            if fam_of_child[i] >= 0:
                child_off[fam_of_child[i] + 1] += 1
        for k in range(n_fams):
            child_off[k + 1] += child_off[k]
        cdef long[::1] child_list = np.empty(child_off[n_fams] if n_fams else 0, dtype=np.int64)
        cdef long[::1] cursor = np.asarray(child_off).copy()
        for i in range(self.n):
            k = fam_of_child[i]
            if k >= 0:
                child_list[cursor[k]] = i
                cursor[k] += 1
        self.child_off = child_off
        self.child_list = child_list

        cdef long[::1] pfam_off = np.zeros(self.n + 1, dtype=np.int64)
        for k in range(n_fams):
            pfam_off[self.fam_father[k] + 1] += 1
            pfam_off[self.fam_mother[k] + 1] += 1
        for i in range(self.n):
            pfam_off[i + 1] += pfam_off[i]
        cdef long[::1] pfam_list = np.empty(pfam_off[self.n], dtype=np.int64)
        cursor = np.asarray(pfam_off).copy()
        for k in range(n_fams):
            pfam_list[cursor[self.fam_father[k]]] = k
            cursor[self.fam_father[k]] += 1
            pfam_list[cursor[self.fam_mother[k]]] = k
            cursor[self.fam_mother[k]] += 1
        self.pfam_off = pfam_off
        self.pfam_list = pfam_list

        # per-member/message buffers are read only after their have_* flag
        # is set, so uninitialized allocation is fine
        self.ant_nd = np.empty((self.n, self.S))
        self.ant = self.ant_nd
        self.have_ant = np.zeros(self.n, dtype=np.uint8)
        self.up_nd = np.empty((2 * n_fams if n_fams else 1, self.S))
        self.up = self.up_nd
        self.have_up = np.zeros(2 * n_fams if n_fams else 1, dtype=np.uint8)
        self.wmat_nd = np.empty((self.n, self.S * self.S))
        self.wmat = self.wmat_nd
        self.have_w = np.zeros(self.n, dtype=np.uint8)

    cdef int _child_local(self, Py_ssize_t c, double[::1] out) except -1:
        cdef Py_ssize_t g, j, k
        cdef double[:] msg
        for g in range(self.S):
            out[g] = self.pen[c, g]
        for j in range(self.pfam_off[c], self.pfam_off[c + 1]):
            k = self.pfam_list[j]
            msg = self._up_msg(k, 0 if self.fam_father[k] == c else 1)
            for g in range(self.S):
                out[g] = out[g] * msg[g]
        return 0

    cdef int _belief_excl(self, Py_ssize_t i, Py_ssize_t excl_fam, double[::1] out) except -1:
        cdef Py_ssize_t g, j, k
        cdef double[:] a = self._anterior(i)
        cdef double[:] msg
        for g in range(self.S):
            out[g] = a[g] * self.pen[i, g]
        for j in range(self.pfam_off[i], self.pfam_off[i + 1]):
            k = self.pfam_list[j]
            if k == excl_fam:
                continue
            msg = self._up_msg(k, 0 if self.fam_father[k] == i else 1)
            for g in range(self.S):
                out[g] = out[g] * msg[g]
        return 0

    cdef const double* _child_matrix(self, Py_ssize_t c) except NULL:
        # W_c[f*S + m] = sum_g trans[f, m, g] * child_local(c)[g], memoized;
        # the contraction itself is a BLAS matrix-vector product
        cdef double[::1] v
        if not self.have_w[c]:
            v_nd = np.empty(self.S)
            v = v_nd
            self._child_local(c, v)
            np.dot(self.ctx.trans2_nd, v_nd, out=self.wmat_nd[c])
            self.have_w[c] = 1
        return &self.wmat[c, 0]

    cdef double[:] _up_msg(self, Py_ssize_t k, int side):
        cdef Py_ssize_t edge = 2 * k + side
        if self.have_up[edge]:
            return self.up[edge]
        cdef Py_ssize_t f = self.fam_father[k]
        cdef Py_ssize_t m = self.fam_mother[k]
        cdef Py_ssize_t other = m if side == 0 else f
        cdef Py_ssize_t a, j
        cdef Py_ssize_t s = self.S
        cdef double total
        q_nd = np.empty(s)
        cdef double[::1] q = q_nd
        self._belief_excl(other, k, q)
        w_nd = np.ones((s, s))
        cdef double[:, ::1] w = w_nd
        cdef double* wp = &w[0, 0]
        cdef const double* cp
        for j in range(self.child_off[k], self.child_off[k + 1]):
            cp = self._child_matrix(self.child_list[j])
            for a in range(s * s):
                wp[a] = wp[a] * cp[a]
        if side == 0:
            np.dot(w_nd, q_nd, out=self.up_nd[edge])
        else:
            np.dot(q_nd, w_nd, out=self.up_nd[edge])
        total = 0.0
        for a in range(s):
            total += self.up[edge, a]
        if total <= 0.0:
            raise ValueError("pedigree likelihood is zero: phenotypes impossible under the tables")
        for a in range(s):
            self.up[edge, a] /= total
        self.have_up[edge] = 1
        return self.up[edge]

    cdef double[:] _anterior(self, Py_ssize_t i):
        if self.have_ant[i]:
            return self.ant[i]
        cdef Py_ssize_t k = self.fam_of_child[i]
        cdef Py_ssize_t s = self.S
        cdef Py_ssize_t f, m, a, b, g, j, c
        cdef double total, acc
        if k < 0:
            for g in range(s):
                self.ant[i, g] = self.ctx.prior[g]
            self.have_ant[i] = 1
            return self.ant[i]
        f = self.fam_father[k]
        m = self.fam_mother[k]
        cdef double[::1] pf = np.empty(s)
        cdef double[::1] pm = np.empty(s)
        self._belief_excl(f, k, pf)
        self._belief_excl(m, k, pm)
        joint_nd = np.empty(s * s)
        cdef double[::1] joint = joint_nd
        cdef double* jp = &joint[0]
        cdef const double* cp
        for a in range(s):
            for b in range(s):
                jp[a * s + b] = pf[a] * pm[b]
        for j in range(self.child_off[k], self.child_off[k + 1]):
            c = self.child_list[j]
            if c != i:
                cp = self._child_matrix(c)
                for a in range(s * s):
                    jp[a] = jp[a] * cp[a]
        np.dot(joint_nd, self.ctx.trans2_nd, out=self.ant_nd[i])
        total = 0.0
        for g in range(s):
            total += self.ant[i, g]
        if total <= 0.0:
            raise ValueError("pedigree likelihood is zero: phenotypes impossible under the tables")
        for g in range(s):
            self.ant[i, g] /= total
        self.have_ant[i] = 1
        return self.ant[i]

    def posterior(self, Py_ssize_t target):
        cdef Py_ssize_t g, j, k
        cdef double total = 0.0
        cdef double[:] a = self._anterior(target)
        cdef double[:] msg
        out = np.empty(self.S)
        cdef double[:] o = out
        for g in range(self.S):
            o[g] = a[g] * self.pen[target, g]
        for j in range(self.pfam_off[target], self.pfam_off[target + 1]):
            k = self.pfam_list[j]
            msg = self._up_msg(k, 0 if self.fam_father[k] == target else 1)
            for g in range(self.S):
                o[g] = o[g] * msg[g]
        for g in range(self.S):
            total += o[g]
        if total <= 0.0:
            raise ValueError("pedigree likelihood is zero: phenotypes impossible under the tables")
        for g in range(self.S):
            o[g] /= total
        return out


def peel_posterior(fathers, mothers, pen, prior, trans, target):
    """Genotype posterior of one member; see _fallback.peel_posterior."""
    return PeelContext(prior, trans).posterior(fathers, mothers, pen, target)


def best_split_column(values, grad, hess, double min_child_weight):
    """Best split of one sorted feature column; see _fallback.best_split_column."""
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(grad, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(hess, dtype=np.float64)
    cdef Py_ssize_t m = v.shape[0]
    cdef Py_ssize_t i
    cdef double gl = 0.0, hl = 0.0, gt = 0.0, ht = 0.0
    cdef double gr, hr, gain, parent
    cdef double best_gain = -np.inf
    cdef double best_thr = 0.0
    if m < 2:
        return -np.inf, 0.0
    for i in range(m):
        gt += g[i]
        ht += h[i]
    parent = gt * gt / ht if ht > 0.0 else 0.0
    for i in range(m - 1):
        gl += g[i]
        hl += h[i]
        if v[i + 1] == v[i]:
            continue
        hr = ht - hl
        if hl < min_child_weight or hr < min_child_weight or hl <= 0.0 or hr <= 0.0:
            continue
        gr = gt - gl
        gain = gl * gl / hl + gr * gr / hr - parent
        if gain > best_gain:
            best_gain = gain
            best_thr = 0.5 * (v[i] + v[i + 1])
    if best_gain > 0.0:
        return best_gain, best_thr
    return -np.inf, 0.0
