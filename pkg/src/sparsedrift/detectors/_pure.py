"""Pure-Python detector kernels.

Reference implementations of the seven online drift detectors. The compiled
module ``_native`` mirrors this file statement for statement; the two
backends must produce bit-identical signal sequences and state, so any change
here must be applied there too.

Every detector follows the same contract: ``update(x)`` consumes one
observation and returns a signal code (0 = in control, 1 = warning,
2 = drift). A drift return means the detector already reset itself (full
reset, except where the class docstring documents carry-over). ``state()``
returns the internal state for inspection and cross-backend comparison.
"""

from __future__ import annotations

import math

from ..errors import DataError, ParameterError

IN_CONTROL = 0
WARNING = 1
DRIFT = 2

_M64 = (1 << 64) - 1


def _sm64_next(state: int) -> tuple[int, int]:
    """One step of splitmix64; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    z = z ^ (z >> 31)
    return state, z


class PageHinkley:
    """Page-Hinkley test for an upward mean shift.

    Accumulates m_t = sum of (x_i - mean_i - delta) with a forgetting factor
    and signals drift when m_t rises more than ``threshold`` above its
    running minimum.
    """

    def __init__(self, delta=0.005, threshold=50.0, alpha=0.9999):
        if threshold < 0:
            raise ParameterError("threshold must be >= 0")
        if not 0.0 < alpha <= 1.0:
            raise ParameterError("alpha must be in (0, 1]")
        self.delta = float(delta)
        self.threshold = float(threshold)
        self.alpha = float(alpha)
        self.reset()

    def reset(self):
        self.n = 0
        self.mean = 0.0
        self.cum = 0.0
        self.cum_min = 0.0

    def update(self, x) -> int:
        x = float(x)
        if not math.isfinite(x):
            raise DataError("observation must be finite")
        self.n += 1
        self.mean += (x - self.mean) / self.n
        self.cum = self.alpha * self.cum + (x - self.mean - self.delta)
        if self.cum < self.cum_min:
            self.cum_min = self.cum
        if self.cum - self.cum_min > self.threshold:
            self.reset()
            return DRIFT
        return IN_CONTROL

    def state(self) -> dict:
        return {"n": self.n, "mean": self.mean, "cum": self.cum, "cum_min": self.cum_min}


class DDM:
    """Drift detection from the running error rate.

    Tracks p_i (error rate) and s_i = sqrt(p_i (1 - p_i) / i), remembers
    (p_min, s_min) at the minimum of p_i + s_i, and signals warning/drift
    when p_i + s_i exceeds p_min + 2 s_min / p_min + 3 s_min. Comparisons
    are strict so a stream sitting at its own minimum never signals.
    """

    def __init__(self, warmup=30, warning_scale=2.0, drift_scale=3.0):
        if warmup < 1:
            raise ParameterError("warmup must be >= 1")
        if not 0 < warning_scale <= drift_scale:
            raise ParameterError("need 0 < warning_scale <= drift_scale")
        self.warmup = int(warmup)
        self.warning_scale = float(warning_scale)
        self.drift_scale = float(drift_scale)
        self.reset()

    def reset(self):
        self.n = 0
        self.p = 0.0
        self.best = math.inf
        self.p_min = math.inf
        self.s_min = math.inf

    def update(self, x) -> int:
        x = float(x)
        if x != 0.0 and x != 1.0:
            raise DataError("DDM consumes binary error bits")
        self.n += 1
        self.p += (x - self.p) / self.n
        if self.n < self.warmup:
            return IN_CONTROL
        s = math.sqrt(self.p * (1.0 - self.p) / self.n)
        level = self.p + s
        if level <= self.best:
            self.best = level
            self.p_min = self.p
            self.s_min = s
        if level > self.p_min + self.drift_scale * self.s_min:
            self.reset()
            return DRIFT
        if level > self.p_min + self.warning_scale * self.s_min:
            return WARNING
        return IN_CONTROL

    def state(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "best": self.best,
            "p_min": self.p_min,
            "s_min": self.s_min,
        }


class EDDM:
    """Drift detection from the spacing between consecutive errors.

    Maintains the mean and standard deviation of inter-error distances and
    the running maximum of mean + 2 std. Shrinking spacings pull the ratio
    (mean + 2 std) / max below the warning (0.95) then drift (0.90) levels.
    The position just before the stream counts as the previous error for the
    first distance, so an error-free prefix registers as one long spacing.
    Signals only after ``min_errors`` errors since the last reset.
    """

    def __init__(self, warning_ratio=0.95, drift_ratio=0.90, min_errors=30):
        if not 0.0 < drift_ratio < warning_ratio <= 1.0:
            raise ParameterError("need 0 < drift_ratio < warning_ratio <= 1")
        if min_errors < 1:
            raise ParameterError("min_errors must be >= 1")
        self.warning_ratio = float(warning_ratio)
        self.drift_ratio = float(drift_ratio)
        self.min_errors = int(min_errors)
        self.reset()

    def reset(self):
        self.n = 0
        self.n_errors = 0
        self.last_error_pos = -1
        self.dist_mean = 0.0
        self.dist_m2 = 0.0
        self.m2s_max = -math.inf

    def update(self, x) -> int:
        x = float(x)
        if x != 0.0 and x != 1.0:
            raise DataError("EDDM consumes binary error bits")
        pos = self.n
        self.n += 1
        if x != 1.0:
            return IN_CONTROL
        self.n_errors += 1
        distance = float(pos - self.last_error_pos)
        self.last_error_pos = pos
        old_mean = self.dist_mean
        self.dist_mean += (distance - self.dist_mean) / self.n_errors
        self.dist_m2 += (distance - self.dist_mean) * (distance - old_mean)
        std = math.sqrt(self.dist_m2 / self.n_errors)
        m2s = self.dist_mean + 2.0 * std
        if m2s > self.m2s_max:
            self.m2s_max = m2s
            return IN_CONTROL
        if self.n_errors < self.min_errors:
            return IN_CONTROL
        ratio = m2s / self.m2s_max
        if ratio < self.drift_ratio:
            self.reset()
            return DRIFT
        if ratio < self.warning_ratio:
            return WARNING
        return IN_CONTROL

    def state(self) -> dict:
        return {
            "n": self.n,
            "n_errors": self.n_errors,
            "last_error_pos": self.last_error_pos,
            "dist_mean": self.dist_mean,
            "dist_m2": self.dist_m2,
            "m2s_max": self.m2s_max,
        }


class HDDMA:
    """Hoeffding-bound drift detection on plain moving averages.

    Keeps the prefix with the smallest upper confidence bound on its mean as
    the cut candidate and signals when the overall mean exceeds the
    candidate mean by more than eps = sqrt(ln(1/alpha)/2 * (1/n_cut - 1/n)),
    the two-sample Hoeffding deviation for bounded [0, 1] inputs.
    """

    def __init__(self, drift_confidence=0.001, warning_confidence=0.005):
        if not 0.0 < drift_confidence <= 1.0 or not 0.0 < warning_confidence <= 1.0:
            raise ParameterError("confidences must be in (0, 1]")
        self.drift_confidence = float(drift_confidence)
        self.warning_confidence = float(warning_confidence)
        self.reset()

    def reset(self):
        self.total_n = 0
        self.total_c = 0.0
        self.cut_n = 0
        self.cut_c = 0.0

    def update(self, x) -> int:
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise DataError("HDDM consumes values in [0, 1]")
        self.total_n += 1
        self.total_c += x
        if self.cut_n == 0:
            self.cut_n = self.total_n
            self.cut_c = self.total_c
            return IN_CONTROL
        log_d = math.log(1.0 / self.drift_confidence)
        ucb_cut = self.cut_c / self.cut_n + math.sqrt(log_d / (2.0 * self.cut_n))
        ucb_all = self.total_c / self.total_n + math.sqrt(log_d / (2.0 * self.total_n))
        if ucb_cut >= ucb_all:
            self.cut_n = self.total_n
            self.cut_c = self.total_c
            return IN_CONTROL
        m = 1.0 / self.cut_n - 1.0 / self.total_n
        diff = self.total_c / self.total_n - self.cut_c / self.cut_n
        if diff > math.sqrt(m / 2.0 * log_d):
            self.reset()
            return DRIFT
        if diff > math.sqrt(m / 2.0 * math.log(1.0 / self.warning_confidence)):
            return WARNING
        return IN_CONTROL

    def state(self) -> dict:
        return {
            "total_n": self.total_n,
            "total_c": self.total_c,
            "cut_n": self.cut_n,
            "cut_c": self.cut_c,
        }


class HDDMW:
    """Hoeffding/McDiarmid drift detection on exponentially weighted averages.

    Same cut-candidate structure as the moving-average variant but every
    estimate is an EWMA with weight ``ewma_weight`` and the deviation bound
    uses the accumulated sum of squared weights. A weight of 1 degenerates
    to the instantaneous value (allowed but flagged via ``degenerate``).
    """

    def __init__(self, drift_confidence=0.001, warning_confidence=0.005, ewma_weight=0.05):
        if not 0.0 < drift_confidence <= 1.0 or not 0.0 < warning_confidence <= 1.0:
            raise ParameterError("confidences must be in (0, 1]")
        if not 0.0 < ewma_weight <= 1.0:
            raise ParameterError("ewma_weight must be in (0, 1]")
        self.drift_confidence = float(drift_confidence)
        self.warning_confidence = float(warning_confidence)
        self.ewma_weight = float(ewma_weight)
        self.degenerate = ewma_weight == 1.0
        self.reset()

    def reset(self):
        self.total_ewma = -1.0
        self.total_ibc = 0.0
        self.head_ewma = -1.0
        self.head_ibc = 0.0
        self.tail_ewma = -1.0
        self.tail_ibc = 0.0
        self.cutpoint = math.inf

    def update(self, x) -> int:
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise DataError("HDDM consumes values in [0, 1]")
        lam = self.ewma_weight
        decay = 1.0 - lam
        if self.total_ewma < 0.0:
            self.total_ewma = x
            self.total_ibc = 1.0
        else:
            self.total_ewma = lam * x + decay * self.total_ewma
            self.total_ibc = lam * lam + decay * decay * self.total_ibc
        log_d = math.log(1.0 / self.drift_confidence)
        bound = math.sqrt(self.total_ibc * log_d / 2.0)
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
            return IN_CONTROL
        diff = self.tail_ewma - self.head_ewma
        ibc_sum = self.head_ibc + self.tail_ibc
        if diff > math.sqrt(ibc_sum * log_d / 2.0):
            self.reset()
            return DRIFT
        if diff > math.sqrt(ibc_sum * math.log(1.0 / self.warning_confidence) / 2.0):
            return WARNING
        return IN_CONTROL

    def state(self) -> dict:
        return {
            "total_ewma": self.total_ewma,
            "total_ibc": self.total_ibc,
            "head_ewma": self.head_ewma,
            "head_ibc": self.head_ibc,
            "tail_ewma": self.tail_ewma,
            "tail_ibc": self.tail_ibc,
            "cutpoint": self.cutpoint,
        }


class ADWIN:
    """Adaptive windowing with an exponential bucket histogram.

    The window is stored as rows of buckets; row L holds up to
    ``max_buckets`` buckets of 2**L elements each (sum and internal
    variance), and overflow merges the two oldest buckets into the next row.
    Every ``check_interval`` instances each admissible old/new split is
    tested with the variance-corrected deviation bound under the
    union-adjusted confidence delta' = delta / ln(window); when a split
    triggers, the oldest bucket is dropped and the scan repeats. A drift
    therefore shrinks the window to the recent regime instead of clearing it.
    """

    def __init__(self, delta=0.002, max_buckets=5, min_window=10, min_subwindow=5,
                 check_interval=1):
        if not 0.0 < delta < 1.0:
            raise ParameterError("delta must be in (0, 1)")
        if max_buckets < 1 or min_subwindow < 1 or min_window < 2 * min_subwindow:
            raise ParameterError("invalid window geometry")
        if check_interval < 1:
            raise ParameterError("check_interval must be >= 1")
        self.delta = float(delta)
        self.max_buckets = int(max_buckets)
        self.min_window = int(min_window)
        self.min_subwindow = int(min_subwindow)
        self.check_interval = int(check_interval)
        self.reset()

    def reset(self):
        self.rows = [[]]  # rows[L]: list of [total, variance], oldest first
        self.width = 0
        self.total = 0.0
        self.variance = 0.0
        self.ticks = 0

    def update(self, x) -> int:
        x = float(x)
        if not math.isfinite(x):
            raise DataError("observation must be finite")
        self._insert(x)
        self.ticks += 1
        if self.ticks % self.check_interval != 0:
            return IN_CONTROL
        if self.width <= self.min_window:
            return IN_CONTROL
        shrank = False
        while self._cut_exists():
            self._drop_oldest()
            shrank = True
            if self.width <= self.min_window:
                break
        return DRIFT if shrank else IN_CONTROL

    # -- exponential histogram ------------------------------------------
    def _insert(self, x):
        if self.width > 0:
            mean = self.total / self.width
            self.variance += self.width * (x - mean) * (x - mean) / (self.width + 1.0)
        self.width += 1
        self.total += x
        self.rows[0].append([x, 0.0])
        level = 0
        while len(self.rows[level]) > self.max_buckets:
            if level + 1 == len(self.rows):
                self.rows.append([])
            a = self.rows[level].pop(0)
            b = self.rows[level].pop(0)
            size = float(1 << level)
            mean_a = a[0] / size
            mean_b = b[0] / size
            merged_var = a[1] + b[1] + size * size * (mean_a - mean_b) * (mean_a - mean_b) / (2.0 * size)
            self.rows[level + 1].append([a[0] + b[0], merged_var])
            level += 1

    def _drop_oldest(self):
        level = len(self.rows) - 1
        while level > 0 and not self.rows[level]:
            level -= 1
        bucket = self.rows[level].pop(0)
        size = 1 << level
        self.width -= size
        self.total -= bucket[0]
        if self.width > 0:
            mean_b = bucket[0] / size
            mean_rest = self.total / self.width
            dec = bucket[1] + size * self.width * (mean_b - mean_rest) * (mean_b - mean_rest) / (size + self.width)
            self.variance -= dec
            if self.variance < 0.0:
                self.variance = 0.0
        else:
            self.variance = 0.0
        while len(self.rows) > 1 and not self.rows[-1]:
            self.rows.pop()

    def _cut_exists(self) -> bool:
        if self.width <= self.min_window:
            return False
        var_w = self.variance / self.width
        if var_w < 0.0:
            var_w = 0.0
        log_term = math.log(2.0 * math.log(self.width) / self.delta)
        n0 = 0
        u0 = 0.0
        for level in range(len(self.rows) - 1, -1, -1):
            size = 1 << level
            for bucket in self.rows[level]:
                n0 += size
                u0 += bucket[0]
                n1 = self.width - n0
                if n1 <= 0:
                    break
                if n0 < self.min_subwindow or n1 < self.min_subwindow:
                    continue
                inv = 1.0 / n0 + 1.0 / n1
                eps = math.sqrt(2.0 * inv * var_w * log_term) + 2.0 / 3.0 * inv * log_term
                if abs(u0 / n0 - (self.total - u0) / n1) > eps:
                    return True
        return False

    def buckets(self) -> list:
        """(size, total, variance) triples, oldest first."""
        out = []
        for level in range(len(self.rows) - 1, -1, -1):
            for bucket in self.rows[level]:
                out.append((1 << level, bucket[0], bucket[1]))
        return out

    def state(self) -> dict:
        return {
            "width": self.width,
            "total": self.total,
            "variance": self.variance,
            "buckets": self.buckets(),
        }


class KSWIN:
    """Kolmogorov-Smirnov windowing.

    Keeps the last ``window_size`` values; once full, every update compares
    the ``recent_size`` newest values against a seeded random subsample of
    equal size from the older part (or the whole older part with
    ``sample_all``) using the exact two-sample KS distance and the asymptotic
    p-value. On drift the window restarts from the recent values.
    """

    def __init__(self, window_size=100, recent_size=30, alpha=0.005, seed=0,
                 sample_all=False):
        if not (window_size > recent_size >= 10):
            raise ParameterError("need window_size > recent_size >= 10")
        if not 0.0 < alpha < 1.0:
            raise ParameterError("alpha must be in (0, 1)")
        self.window_size = int(window_size)
        self.recent_size = int(recent_size)
        self.alpha = float(alpha)
        self.sample_all = bool(sample_all)
        self.seed = int(seed) & _M64
        self.reset()

    def reset(self):
        self.buffer = []
        self.rng_state = self.seed
        self.last_p = math.nan
        self.last_stat = math.nan

    def update(self, x) -> int:
        x = float(x)
        if not math.isfinite(x):
            raise DataError("observation must be finite")
        if len(self.buffer) == self.window_size:
            self.buffer.pop(0)
        self.buffer.append(x)
        if len(self.buffer) < self.window_size:
            return IN_CONTROL
        r = self.recent_size
        recent = self.buffer[-r:]
        older = self.buffer[: self.window_size - r]
        if self.sample_all:
            sample = list(older)
        else:
            sample = self._subsample(older, r)
        d = _ks_statistic(sorted(sample), sorted(recent))
        n1 = float(len(sample))
        n2 = float(r)
        p = _ks_pvalue(d, n1 * n2 / (n1 + n2))
        self.last_stat = d
        self.last_p = p
        if p < self.alpha:
            keep = list(recent)
            rng = self.rng_state
            self.reset()
            self.buffer = keep
            self.rng_state = rng  # sampling stream continues across resets
            return DRIFT
        return IN_CONTROL

    def _subsample(self, pool, r):
        m = len(pool)
        idx = list(range(m))
        out = []
        for i in range(r):
            self.rng_state, z = _sm64_next(self.rng_state)
            j = i + z % (m - i)
            idx[i], idx[j] = idx[j], idx[i]
            out.append(pool[idx[i]])
        return out

    def state(self) -> dict:
        return {
            "buffer": list(self.buffer),
            "rng_state": self.rng_state,
            "last_p": self.last_p,
            "last_stat": self.last_stat,
        }


def _ks_statistic(s1, s2) -> float:
    """Exact two-sample KS distance for two sorted sequences."""
    n1 = len(s1)
    n2 = len(s2)
    i = 0
    j = 0
    d = 0.0
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
        diff = abs(i / n1 - j / n2)
        if diff > d:
            d = diff
    return d


def _ks_pvalue(d, n_effective) -> float:
    """Asymptotic two-sample KS p-value: Kolmogorov tail at sqrt(n_e) * d."""
    lam = math.sqrt(n_effective) * d
    if lam <= 0.0:
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, 1001):
        term = math.exp(-2.0 * k * k * lam * lam)
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
    return [detector.update(v) for v in values]
