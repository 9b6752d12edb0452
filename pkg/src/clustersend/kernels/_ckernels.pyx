# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the functions in ``_pykernels``; results are identical."""

from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free


cdef inline uint64_t _next(uint64_t* state) nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline int _popcount(uint64_t x) nogil:
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c


def faulty_position_histogram(masks1, masks2, int n):
    cdef Py_ssize_t la = len(masks1), lb = len(masks2), i, j
    cdef uint64_t* a = <uint64_t*>malloc(la * sizeof(uint64_t))
    cdef uint64_t* b = <uint64_t*>malloc(lb * sizeof(uint64_t))
    cdef long long* counts = <long long*>malloc((n + 1) * sizeof(long long))
    if a == NULL or b == NULL or counts == NULL:
        free(a); free(b); free(counts)
        raise MemoryError()
    try:
        for i in range(la):
            a[i] = masks1[i]
        for j in range(lb):
            b[j] = masks2[j]
        for i in range(n + 1):
            counts[i] = 0
        with nogil:
            for i in range(la):
                for j in range(lb):
                    counts[_popcount(a[i] | b[j])] += 1
        return [counts[i] for i in range(n + 1)]
    finally:
        free(a); free(b); free(counts)


cdef unsigned char* _flags(seq, Py_ssize_t n) except NULL:
    cdef unsigned char* out = <unsigned char*>malloc(n if n > 0 else 1)
    if out == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = 1 if seq[i] else 0
    return out


def sample_pcs_steps(faulty1, faulty2, long long trials, uint64_t seed, long long max_iters):
    cdef Py_ssize_t n1 = len(faulty1), n2 = len(faulty2)
    cdef unsigned char* f1 = _flags(faulty1, n1)
    cdef unsigned char* f2 = _flags(faulty2, n2)
    cdef uint64_t state = seed
    cdef long long t, steps
    cdef uint64_t a, b
    out = []
    try:
        for t in range(trials):
            steps = 0
            while True:
                steps += 1
                a = _next(&state) % <uint64_t>n1
                b = _next(&state) % <uint64_t>n2
                if not f1[a] and not f2[b]:
                    break
                if steps >= max_iters:
                    steps = max_iters + 1
                    break
            out.append(steps)
        return out
    finally:
        free(f1); free(f2)


def sample_plcs_steps(faulty1, faulty2, long long trials, uint64_t seed):
    cdef Py_ssize_t n = len(faulty1), i, j
    cdef unsigned char* f1 = _flags(faulty1, n)
    cdef unsigned char* f2 = _flags(faulty2, n)
    cdef long* p1 = <long*>malloc((n if n > 0 else 1) * sizeof(long))
    cdef long* p2 = <long*>malloc((n if n > 0 else 1) * sizeof(long))
    cdef uint64_t state = seed
    cdef long long t, steps
    cdef long tmp
    out = []
    try:
        for t in range(trials):
            for i in range(n):
                p1[i] = i
                p2[i] = i
            for i in range(n - 1, 0, -1):
                j = <Py_ssize_t>(_next(&state) % <uint64_t>(i + 1))
                tmp = p1[i]; p1[i] = p1[j]; p1[j] = tmp
            for i in range(n - 1, 0, -1):
                j = <Py_ssize_t>(_next(&state) % <uint64_t>(i + 1))
                tmp = p2[i]; p2[i] = p2[j]; p2[j] = tmp
            steps = n + 1
            for i in range(n):
                if not f1[p1[i]] and not f2[p2[i]]:
                    steps = i + 1
                    break
            out.append(steps)
        return out
    finally:
        free(f1); free(f2); free(p1); free(p2)
