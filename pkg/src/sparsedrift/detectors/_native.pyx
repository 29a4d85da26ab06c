# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled detector kernels.

Statement-for-statement mirror of ``_pure``; see that module for the
algorithm documentation. The arithmetic must stay bit-identical to the pure
backend (same operation order, same libm calls), which is also why the build
disables floating-point contraction.
"""

from libc.math cimport sqrt, log, exp, fabs, isfinite, INFINITY, NAN
from libc.stdlib cimport malloc, free
from libc.string cimport memmove

from ..errors import DataError, ParameterError

IN_CONTROL = 0
WARNING = 1
DRIFT = 2

DEF _SIG_IN_CONTROL = 0
DEF _SIG_WARNING = 1
DEF _SIG_DRIFT = 2


cdef inline unsigned long long _sm64_next(unsigned long long* state) noexcept:
    state[0] = state[0] + <unsigned long long>0x9E3779B97F4A7C15
    cdef unsigned long long z = state[0]
    z = (z ^ (z >> 30)) * <unsigned long long>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <unsigned long long>0x94D049BB133111EB
    z = z ^ (z >> 31)
    return z


cdef class Detector:
    cpdef int update(self, double x) except -1:
        raise NotImplementedError


cdef class PageHinkley(Detector):
    cdef public double delta, threshold, alpha
    cdef public long long n
    cdef public double mean, cum, cum_min

    def __init__(self, delta=0.005, threshold=50.0, alpha=0.9999):
        if threshold < 0:
            raise ParameterError("threshold must be >= 0")
        if not 0.0 < alpha <= 1.0:
            raise ParameterError("alpha must be in (0, 1]")
        self.delta = delta
        self.threshold = threshold
        self.alpha = alpha
        self.reset()

    cpdef reset(self):
        self.n = 0
        self.mean = 0.0
        self.cum = 0.0
        self.cum_min = 0.0

    cpdef int update(self, double x) except -1:
        if not isfinite(x):
            raise DataError("observation must be finite")
        self.n += 1
        self.mean += (x - self.mean) / self.n
        self.cum = self.alpha * self.cum + (x - self.mean - self.delta)
        if self.cum < self.cum_min:
            self.cum_min = self.cum
        if self.cum - self.cum_min > self.threshold:
            self.reset()
            return _SIG_DRIFT
        return _SIG_IN_CONTROL

    def state(self):
        return {"n": self.n, "mean": self.mean, "cum": self.cum, "cum_min": self.cum_min}


cdef class DDM(Detector):
    cdef public int warmup
    cdef public double warning_scale, drift_scale
    cdef public long long n
    cdef public double p, best, p_min, s_min

    def __init__(self, warmup=30, warning_scale=2.0, drift_scale=3.0):
        if warmup < 1:
            raise ParameterError("warmup must be >= 1")
        if not 0 < warning_scale <= drift_scale:
            raise ParameterError("need 0 < warning_scale <= drift_scale")
        self.warmup = warmup
        self.warning_scale = warning_scale
        self.drift_scale = drift_scale
        self.reset()

    cpdef reset(self):
        self.n = 0
        self.p = 0.0
        self.best = INFINITY
        self.p_min = INFINITY
        self.s_min = INFINITY

    cpdef int update(self, double x) except -1:
        cdef double s, level
        if x != 0.0 and x != 1.0:
            raise DataError("DDM consumes binary error bits")
        self.n += 1
        self.p += (x - self.p) / self.n
        if self.n < self.warmup:
            return _SIG_IN_CONTROL
        s = sqrt(self.p * (1.0 - self.p) / self.n)
        level = self.p + s
        if level <= self.best:
            self.best = level
            self.p_min = self.p
            self.s_min = s
        if level > self.p_min + self.drift_scale * self.s_min:
            self.reset()
            return _SIG_DRIFT
        if level > self.p_min + self.warning_scale * self.s_min:
            return _SIG_WARNING
        return _SIG_IN_CONTROL

    def state(self):
        return {
            "n": self.n,
            "p": self.p,
            "best": self.best,
            "p_min": self.p_min,
            "s_min": self.s_min,
        }


cdef class EDDM(Detector):
    cdef public double warning_ratio, drift_ratio
    cdef public int min_errors
    cdef public long long n, n_errors, last_error_pos
    cdef public double dist_mean, dist_m2, m2s_max

    def __init__(self, warning_ratio=0.95, drift_ratio=0.90, min_errors=30):
        if not 0.0 < drift_ratio < warning_ratio <= 1.0:
            raise ParameterError("need 0 < drift_ratio < warning_ratio <= 1")
        if min_errors < 1:
            raise ParameterError("min_errors must be >= 1")
        self.warning_ratio = warning_ratio
        self.drift_ratio = drift_ratio
        self.min_errors = min_errors
        self.reset()

    cpdef reset(self):
        self.n = 0
        self.n_errors = 0
        self.last_error_pos = -1
        self.dist_mean = 0.0
        self.dist_m2 = 0.0
        self.m2s_max = -INFINITY

    cpdef int update(self, double x) except -1:
        cdef long long pos
        cdef double distance, old_mean, std, m2s, ratio
        if x != 0.0 and x != 1.0:
            raise DataError("EDDM consumes binary error bits")
        pos = self.n
        self.n += 1
        if x != 1.0:
            return _SIG_IN_CONTROL
        self.n_errors += 1
        distance = <double>(pos - self.last_error_pos)
        self.last_error_pos = pos
        old_mean = self.dist_mean
        self.dist_mean += (distance - self.dist_mean) / self.n_errors
        self.dist_m2 += (distance - self.dist_mean) * (distance - old_mean)
        std = sqrt(self.dist_m2 / self.n_errors)
        m2s = self.dist_mean + 2.0 * std
        if m2s > self.m2s_max:
            self.m2s_max = m2s
            return _SIG_IN_CONTROL
        if self.n_errors < self.min_errors:
            return _SIG_IN_CONTROL
        ratio = m2s / self.m2s_max
        if ratio < self.drift_ratio:
            self.reset()
            return _SIG_DRIFT
        if ratio < self.warning_ratio:
            return _SIG_WARNING
        return _SIG_IN_CONTROL

    def state(self):
        return {
            "n": self.n,
            "n_errors": self.n_errors,
            "last_error_pos": self.last_error_pos,
            "dist_mean": self.dist_mean,
            "dist_m2": self.dist_m2,
            "m2s_max": self.m2s_max,
        }


cdef class HDDMA(Detector):
    cdef public double drift_confidence, warning_confidence
    cdef public long long total_n, cut_n
    cdef public double total_c, cut_c

    def __init__(self, drift_confidence=0.001, warning_confidence=0.005):
        if not 0.0 < drift_confidence <= 1.0 or not 0.0 < warning_confidence <= 1.0:
            raise ParameterError("confidences must be in (0, 1]")
        self.drift_confidence = drift_confidence
        self.warning_confidence = warning_confidence
        self.reset()

    cpdef reset(self):
        self.total_n = 0
        self.total_c = 0.0
        self.cut_n = 0
        self.cut_c = 0.0

    cpdef int update(self, double x) except -1:
        cdef double log_d, ucb_cut, ucb_all, m, diff
        if not (0.0 <= x <= 1.0):
            raise DataError("HDDM consumes values in [0, 1]")
        self.total_n += 1
        self.total_c += x
        if self.cut_n == 0:
            self.cut_n = self.total_n
            self.cut_c = self.total_c
            return _SIG_IN_CONTROL
        log_d = log(1.0 / self.drift_confidence)
        ucb_cut = self.cut_c / self.cut_n + sqrt(log_d / (2.0 * self.cut_n))
        ucb_all = self.total_c / self.total_n + sqrt(log_d / (2.0 * self.total_n))
        if ucb_cut >= ucb_all:
            self.cut_n = self.total_n
            self.cut_c = self.total_c
            return _SIG_IN_CONTROL
        m = 1.0 / self.cut_n - 1.0 / self.total_n
        diff = self.total_c / self.total_n - self.cut_c / self.cut_n
        if diff > sqrt(m / 2.0 * log_d):
            self.reset()
            return _SIG_DRIFT
        if diff > sqrt(m / 2.0 * log(1.0 / self.warning_confidence)):
            return _SIG_WARNING
        return _SIG_IN_CONTROL

    def state(self):
        return {
            "total_n": self.total_n,
            "total_c": self.total_c,
            "cut_n": self.cut_n,
            "cut_c": self.cut_c,
        }


cdef class HDDMW(Detector):
    cdef public double drift_confidence, warning_confidence, ewma_weight
    cdef public bint degenerate
    cdef public double total_ewma, total_ibc
    cdef public double head_ewma, head_ibc
    cdef public double tail_ewma, tail_ibc
    cdef public double cutpoint

    def __init__(self, drift_confidence=0.001, warning_confidence=0.005, ewma_weight=0.05):
        if not 0.0 < drift_confidence <= 1.0 or not 0.0 < warning_confidence <= 1.0:
            raise ParameterError("confidences must be in (0, 1]")
        if not 0.0 < ewma_weight <= 1.0:
            raise ParameterError("ewma_weight must be in (0, 1]")
        self.drift_confidence = drift_confidence
        self.warning_confidence = warning_confidence
        self.ewma_weight = ewma_weight
        self.degenerate = ewma_weight == 1.0
        self.reset()

    cpdef reset(self):
        self.total_ewma = -1.0
        self.total_ibc = 0.0
        self.head_ewma = -1.0
        self.head_ibc = 0.0
        self.tail_ewma = -1.0
        self.tail_ibc = 0.0
        self.cutpoint = INFINITY

    cpdef int update(self, double x) except -1:
        cdef double lam, decay, log_d, bound, diff, ibc_sum
        if not (0.0 <= x <= 1.0):
            raise DataError("HDDM consumes values in [0, 1]")
        lam = self.ewma_weight
        decay = 1.0 - lam
        if self.total_ewma < 0.0:
            self.total_ewma = x
            self.total_ibc = 1.0
        else:
            self.total_ewma = lam * x + decay * self.total_ewma
            self.total_ibc = lam * lam + decay * decay * self.total_ibc
        log_d = log(1.0 / self.drift_confidence)
        bound = sqrt(self.total_ibc * log_d / 2.0)
        if self.total_ewma + bound < self.cutpoint:
            self.cutpoint = self.total_ewma + bound
            self.head_ewma = self.total_ewma
            self.head_ibc = self.total_ibc
            self.tail_ewma = -1.0
            self.tail_ibc = 0.0
        else:
            if self.tail_ewma < 0.0:
                self.tail_ewma = x
                self.tail_ibc = 1.0
            else:
                self.tail_ewma = lam * x + decay * self.tail_ewma
                self.tail_ibc = lam * lam + decay * decay * self.tail_ibc
        if self.head_ewma < 0.0 or self.tail_ewma < 0.0:
            return _SIG_IN_CONTROL
        diff = self.tail_ewma - self.head_ewma
        ibc_sum = self.head_ibc + self.tail_ibc
        if diff > sqrt(ibc_sum * log_d / 2.0):
            self.reset()
            return _SIG_DRIFT
        if diff > sqrt(ibc_sum * log(1.0 / self.warning_confidence) / 2.0):
            return _SIG_WARNING
        return _SIG_IN_CONTROL

    def state(self):
        return {
            "total_ewma": self.total_ewma,
            "total_ibc": self.total_ibc,
            "head_ewma": self.head_ewma,
            "head_ibc": self.head_ibc,
            "tail_ewma": self.tail_ewma,
            "tail_ibc": self.tail_ibc,
            "cutpoint": self.cutpoint,
        }


DEF _ADWIN_MAX_LEVELS = 48


cdef class ADWIN(Detector):
    cdef public double delta
    cdef public int max_buckets, min_window, min_subwindow, check_interval
    cdef public long long width, ticks
    cdef public double total, variance
    cdef int n_levels, stride
    cdef int* counts
    cdef double* totals
    cdef double* variances

    def __cinit__(self, delta=0.002, max_buckets=5, min_window=10, min_subwindow=5,
                  check_interval=1):
        self.stride = <int>max_buckets + 2
        self.counts = <int*>malloc(_ADWIN_MAX_LEVELS * sizeof(int))
        self.totals = <double*>malloc(_ADWIN_MAX_LEVELS * self.stride * sizeof(double))
        self.variances = <double*>malloc(_ADWIN_MAX_LEVELS * self.stride * sizeof(double))
        if self.counts == NULL or self.totals == NULL or self.variances == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.counts)
        free(self.totals)
        free(self.variances)

    def __init__(self, delta=0.002, max_buckets=5, min_window=10, min_subwindow=5,
                 check_interval=1):
        if not 0.0 < delta < 1.0:
            raise ParameterError("delta must be in (0, 1)")
        if max_buckets < 1 or min_subwindow < 1 or min_window < 2 * min_subwindow:
            raise ParameterError("invalid window geometry")
        if check_interval < 1:
            raise ParameterError("check_interval must be >= 1")
        self.delta = delta
        self.max_buckets = max_buckets
        self.min_window = min_window
        self.min_subwindow = min_subwindow
        self.check_interval = check_interval
        self.reset()

    cpdef reset(self):
        cdef int i
        for i in range(_ADWIN_MAX_LEVELS):
            self.counts[i] = 0
        self.n_levels = 1
        self.width = 0
        self.total = 0.0
        self.variance = 0.0
        self.ticks = 0

    cpdef int update(self, double x) except -1:
        cdef bint shrank = False
        if not isfinite(x):
            raise DataError("observation must be finite")
        self._insert(x)
        self.ticks += 1
        if self.ticks % self.check_interval != 0:
            return _SIG_IN_CONTROL
        if self.width <= self.min_window:
            return _SIG_IN_CONTROL
        while self._cut_exists():
            self._drop_oldest()
            shrank = True
            if self.width <= self.min_window:
                break
        return _SIG_DRIFT if shrank else _SIG_IN_CONTROL

    cdef void _insert(self, double x):
        cdef double mean, mean_a, mean_b, merged_var, size
        cdef int level, base, c, i
        if self.width > 0:
            mean = self.total / self.width
            self.variance += self.width * (x - mean) * (x - mean) / (self.width + 1.0)
        self.width += 1
        self.total += x
        base = 0
        self.totals[self.counts[0]] = x
        self.variances[self.counts[0]] = 0.0
        self.counts[0] += 1
        level = 0
        while self.counts[level] > self.max_buckets:
            if level + 1 == self.n_levels:
                self.n_levels += 1
            base = level * self.stride
            size = <double>(<long long>1 << level)
            mean_a = self.totals[base] / size
            mean_b = self.totals[base + 1] / size
            merged_var = (self.variances[base] + self.variances[base + 1]
                          + size * size * (mean_a - mean_b) * (mean_a - mean_b) / (2.0 * size))
            c = self.counts[level + 1]
            self.totals[(level + 1) * self.stride + c] = self.totals[base] + self.totals[base + 1]
            self.variances[(level + 1) * self.stride + c] = merged_var
            self.counts[level + 1] += 1
            # shift the remaining buckets of this level left by two
            for i in range(2, self.counts[level]):
                self.totals[base + i - 2] = self.totals[base + i]
                self.variances[base + i - 2] = self.variances[base + i]
            self.counts[level] -= 2
            level += 1

    cdef void _drop_oldest(self):
        cdef int level = self.n_levels - 1
        cdef int base, i
        cdef long long size
        cdef double mean_b, mean_rest, dec, btotal, bvar
        while level > 0 and self.counts[level] == 0:
            level -= 1
        base = level * self.stride
        btotal = self.totals[base]
        bvar = self.variances[base]
        for i in range(1, self.counts[level]):
            self.totals[base + i - 1] = self.totals[base + i]
            self.variances[base + i - 1] = self.variances[base + i]
        self.counts[level] -= 1
        size = <long long>1 << level
        self.width -= size
        self.total -= btotal
        if self.width > 0:
            mean_b = btotal / size
            mean_rest = self.total / self.width
            dec = bvar + size * self.width * (mean_b - mean_rest) * (mean_b - mean_rest) / (size + self.width)
            self.variance -= dec
            if self.variance < 0.0:
                self.variance = 0.0
        else:
            self.variance = 0.0
        while self.n_levels > 1 and self.counts[self.n_levels - 1] == 0:
            self.n_levels -= 1

    cdef bint _cut_exists(self):
        cdef double var_w, log_term, u0, inv, eps, n0d, n1d
        cdef long long n0, n1, size
        cdef int level, i, base
        if self.width <= self.min_window:
            return False
        var_w = self.variance / self.width
        if var_w < 0.0:
            var_w = 0.0
        log_term = log(2.0 * log(<double>self.width) / self.delta)
        n0 = 0
        u0 = 0.0
        for level in range(self.n_levels - 1, -1, -1):
            size = <long long>1 << level
            base = level * self.stride
            for i in range(self.counts[level]):
                n0 += size
                u0 += self.totals[base + i]
                n1 = self.width - n0
                if n1 <= 0:
                    break
                if n0 < self.min_subwindow or n1 < self.min_subwindow:
                    continue
                n0d = <double>n0
                n1d = <double>n1
                inv = 1.0 / n0d + 1.0 / n1d
                eps = sqrt(2.0 * inv * var_w * log_term) + 2.0 / 3.0 * inv * log_term
                if fabs(u0 / n0d - (self.total - u0) / n1d) > eps:
                    return True
        return False

    def buckets(self):
        """(size, total, variance) triples, oldest first."""
        out = []
        cdef int level, i, base
        for level in range(self.n_levels - 1, -1, -1):
            base = level * self.stride
            for i in range(self.counts[level]):
                out.append((<long long>1 << level, self.totals[base + i], self.variances[base + i]))
        return out

    def state(self):
        return {
            "width": self.width,
            "total": self.total,
            "variance": self.variance,
            "buckets": self.buckets(),
        }


cdef class KSWIN(Detector):
    cdef public int window_size, recent_size
    cdef public double alpha
    cdef public bint sample_all
    cdef public unsigned long long seed, rng_state
    cdef public double last_p, last_stat
    cdef int count
    cdef double* buf
    cdef double* scratch_a
    cdef double* scratch_b
    cdef int* pool

    def __cinit__(self, window_size=100, recent_size=30, alpha=0.005, seed=0,
                  sample_all=False):
        cdef int n = <int>window_size
        self.buf = <double*>malloc(n * sizeof(double))
        self.scratch_a = <double*>malloc(n * sizeof(double))
        self.scratch_b = <double*>malloc(n * sizeof(double))
        self.pool = <int*>malloc(n * sizeof(int))
        if self.buf == NULL or self.scratch_a == NULL or self.scratch_b == NULL or self.pool == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.buf)
        free(self.scratch_a)
        free(self.scratch_b)
        free(self.pool)

    def __init__(self, window_size=100, recent_size=30, alpha=0.005, seed=0,
                 sample_all=False):
        if not (window_size > recent_size >= 10):
            raise ParameterError("need window_size > recent_size >= 10")
        if not 0.0 < alpha < 1.0:
            raise ParameterError("alpha must be in (0, 1)")
        self.window_size = window_size
        self.recent_size = recent_size
        self.alpha = alpha
        self.sample_all = sample_all
        self.seed = <unsigned long long>(<object>int(seed) & ((1 << 64) - 1))
        self.reset()

    cpdef reset(self):
        self.count = 0
        self.rng_state = self.seed
        self.last_p = NAN
        self.last_stat = NAN

    @property
    def buffer(self):
        return [self.buf[i] for i in range(self.count)]

    cpdef int update(self, double x) except -1:
        cdef int n, r, m, n1, i, j
        cdef double d, p, n1d, n2d
        cdef unsigned long long z, save
        if not isfinite(x):
            raise DataError("observation must be finite")
        n = self.window_size
        r = self.recent_size
        if self.count == n:
            memmove(self.buf, self.buf + 1, (n - 1) * sizeof(double))
            self.count -= 1
        self.buf[self.count] = x
        self.count += 1
        if self.count < n:
            return _SIG_IN_CONTROL
        m = n - r
        if self.sample_all:
            n1 = m
            for i in range(m):
                self.scratch_a[i] = self.buf[i]
        else:
            n1 = r
            for i in range(m):
                self.pool[i] = i
            for i in range(r):
                z = _sm64_next(&self.rng_state)
                j = i + <int>(z % <unsigned long long>(m - i))
                self.pool[i], self.pool[j] = self.pool[j], self.pool[i]
                self.scratch_a[i] = self.buf[self.pool[i]]
        for i in range(r):
            self.scratch_b[i] = self.buf[m + i]
        _insertion_sort(self.scratch_a, n1)
        _insertion_sort(self.scratch_b, r)
        d = _ks_statistic_arr(self.scratch_a, n1, self.scratch_b, r)
        n1d = <double>n1
        n2d = <double>r
        p = _ks_pvalue(d, n1d * n2d / (n1d + n2d))
        self.last_stat = d
        self.last_p = p
        if p < self.alpha:
            save = self.rng_state
            memmove(self.buf, self.buf + m, r * sizeof(double))
            self.count = r
            self.rng_state = save  # sampling stream continues across resets
            self.last_p = NAN
            self.last_stat = NAN
            return _SIG_DRIFT
        return _SIG_IN_CONTROL

    def state(self):
        return {
            "buffer": self.buffer,
            "rng_state": self.rng_state,
            "last_p": self.last_p,
            "last_stat": self.last_stat,
        }


cdef void _insertion_sort(double* a, int n) noexcept:
    cdef int i, j
    cdef double key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] > key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


cdef double _ks_statistic_arr(double* s1, int n1, double* s2, int n2) noexcept:
    cdef int i = 0
    cdef int j = 0
    cdef double d = 0.0
    cdef double a, b, diff
    while i < n1 and j < n2:
        a = s1[i]
        b = s2[j]
        if a < b:
            i += 1
        elif b < a:
            j += 1
        else:
            while i < n1 and s1[i] == a:
                i += 1
            while j < n2 and s2[j] == a:
                j += 1
        diff = fabs(<double>i / n1 - <double>j / n2)
        if diff > d:
            d = diff
    return d


cdef double _ks_pvalue(double d, double n_effective) noexcept:
    cdef double lam = sqrt(n_effective) * d
    cdef double total = 0.0
    cdef double sign = 1.0
    cdef double term, p
    cdef int k
    if lam <= 0.0:
        return 1.0
    for k in range(1, 1001):
        term = exp(-2.0 * k * k * lam * lam)
        total += sign * term
        sign = -sign
        if term < 1e-16:
            break
    p = 2.0 * total
    if p < 0.0:
        return 0.0
    if p > 1.0:
        return 1.0
    return p


def run(detector, values):
    """Feed ``values`` one by one; returns the list of signal codes."""
    cdef Detector det
    cdef Py_ssize_t i
    cdef list out
    if isinstance(detector, Detector):
        det = <Detector>detector
        out = []
        for i in range(len(values)):
            out.append(det.update(values[i]))
        return out
    return [detector.update(v) for v in values]
