"""Benchmark harness: runtime scaling, backend comparison, error-vs-k sweeps.

Timings are medians of repeated runs on the monotonic clock with one warmup
discarded; FLOP figures are analytic counts (2 n^2 for the naive matvec, 5 L
log2 L per FFT stage at transform length L), so records are comparable across
machines. Error fields are deterministic given the seed; timings are not.
"""

import csv
import io
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import backend
from .dense import naive_masked_attention, relative_frobenius_diff
from .fourier import next_pow2
from .masks import CausalMask
from .recovery import recover, score_column_oracle
from .structures import ConvBasis, conv_matvec

_RECORD_FIELDS = ("op", "method", "n", "d", "k", "reps", "median_ns", "flops",
                  "max_err", "rel_frob")


@dataclass(frozen=True)
class BenchConfig:
    """Union of subcommand parameters. `sizes` is the swept n axis (each
    >= 2); `k_values` is the swept basis-size axis for error-vs-k runs."""

    sizes: tuple = (1024, 2048, 4096, 8192, 16384)
    k_values: tuple = ()
    n: int = 0
    d: int = 2
    k: int = 3
    t_window: int = 1
    delta: float = 1.0
    epsilon: float = 0.0
    seed: int = 0
    reps: int = 3
    out: str = ""
    fmt: str = "csv"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        if any(s < 2 for s in self.sizes):
            raise ValueError(f"every size must be >= 2, got {self.sizes}")
        if any(k < 1 for k in self.k_values):
            raise ValueError(f"swept k values must be >= 1, got {self.k_values}")
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if self.fmt not in ("csv", "json"):
            raise ValueError(f"format must be csv or json, got {self.fmt!r}")


@dataclass(frozen=True)
class BenchRecord:
    op: str
    method: str
    n: int
    d: int
    k: int
    reps: int
    median_ns: float
    flops: float
    max_err: float
    rel_frob: float

    def __post_init__(self):
        for field in ("n", "d", "k", "reps"):
            object.__setattr__(self, field, int(getattr(self, field)))
        for field in ("median_ns", "flops", "max_err", "rel_frob"):
            object.__setattr__(self, field, float(getattr(self, field)))
        if self.median_ns <= 0:
            raise ValueError(f"median_ns must be positive, got {self.median_ns}")
        if not (np.isfinite(self.max_err) and np.isfinite(self.rel_frob)):
            raise ValueError("error fields must be finite")


def time_median_ns(fn, reps):
    """Median wall time of `reps` calls, after one discarded warmup call."""
    fn()
    samples = []
    for _ in range(int(reps)):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return max(float(np.median(samples)), 1.0)


def naive_matvec_flops(n):
    """2 n^2: one multiply and one add per dense matrix entry."""
    return 2.0 * n * n


def fft_matvec_flops(n):
    """Three length-L transforms at 5 L log2 L each, L = next_pow2(2n)."""
    size = next_pow2(2 * n)
    return 3.0 * 5.0 * size * np.log2(size)


def fit_loglog_slope(ns, values):
    """Least-squares slope of log(values) against log(ns)."""
    ns = np.asarray(ns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if ns.size != values.size or ns.size < 2:
        raise ValueError("need at least two matching points")
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def bench_conv_matvec(cfg):
    """Time naive vs FFT conv matvec per size; outputs must agree to 1e-9."""
    records = []
    for n in cfg.sizes:
        rng = np.random.default_rng([cfg.seed, n])
        a = rng.normal(size=n)
        x = rng.normal(size=n)
        y_naive = backend.kernels.conv_matvec_naive(a, x)
        y_fft = conv_matvec(a, x)
        err = float(np.max(np.abs(y_fft - y_naive)))
        rel = err / max(1.0, float(np.max(np.abs(y_naive))))
        if rel > 1e-9:
            raise AssertionError(f"naive/FFT disagree at n={n}: rel linf {rel:.3e}")
        frob = relative_frobenius_diff(y_naive[:, None], y_fft[:, None])
        records.append(BenchRecord(
            "conv-matvec", "naive", n, 0, 0, cfg.reps,
            time_median_ns(lambda: backend.kernels.conv_matvec_naive(a, x), cfg.reps),
            naive_matvec_flops(n), rel, frob,
        ))
        records.append(BenchRecord(
            "conv-matvec", "fft", n, 0, 0, cfg.reps,
            time_median_ns(lambda: conv_matvec(a, x), cfg.reps),
            fft_matvec_flops(n), rel, frob,
        ))
    return records


def bench_backends(cfg):
    """Time each low-rank kernel under every importable backend.

    With both backends present, each record's max_err column holds the
    difference against the first backend's output (roundoff-level; the
    backends may associate sums differently).
    """
    from .lowrank import LowRankFactors, causal_matvec, continuous_matvec, rowchange_matvec
    from .masks import ContinuousRowMask, RowChangeMask

    available = backend.available_backends()
    records = []
    for n in cfg.sizes:
        rng = np.random.default_rng([cfg.seed, n])
        r = max(1, cfg.k)
        factors = LowRankFactors(rng.normal(size=(n, r)), rng.normal(size=(n, r)))
        v = rng.normal(size=n)
        rc = RowChangeMask.causal(n)
        starts = np.zeros(n, dtype=np.int64)
        ends = np.arange(n, dtype=np.int64)
        cont = ContinuousRowMask(starts, ends)
        outputs = {}
        for name in sorted(available):
            with backend.use_kernels(name):
                for op, fn in (
                    ("causal-matvec", lambda: causal_matvec(factors, v)),
                    ("rowchange-matvec", lambda: rowchange_matvec(factors, rc, v)),
                    ("continuous-matvec", lambda: continuous_matvec(factors, cont, v)),
                ):
                    out = fn()
                    base = outputs.setdefault(op, out)
                    err = float(np.max(np.abs(out - base)))
                    records.append(BenchRecord(
                        op, name, n, 0, r, cfg.reps,
                        time_median_ns(fn, cfg.reps), 0.0, err, 0.0,
                    ))
    return records


def sweep_error_vs_k(cfg):
    """Relative Frobenius difference of conv_forward truncated to the k
    largest-window terms, for k in cfg.k_values, against the dense oracle."""
    from .fixtures import separated_conv_instance

    k_values = cfg.k_values if cfg.k_values else tuple(range(1, cfg.k + 1))
    if not k_values or any(k < 1 for k in k_values):
        raise ValueError(f"swept k values must be >= 1, got {k_values}")
    n = cfg.n if cfg.n else 64
    k_full = max(k_values)
    inst = separated_conv_instance(n, k_full, cfg.t_window, cfg.delta, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    v = rng.normal(size=(n, cfg.d))
    reference = naive_masked_attention(inst.q, inst.k_mat, v, CausalMask(n))
    rec = recover(score_column_oracle(inst.q, inst.k_mat), inst.params)
    records = []
    for k in sorted(k_values):
        basis = ConvBasis(n, rec.basis_exp[:k], rec.windows[:k])
        denom = basis.matvec(np.ones(n))
        approx = basis.matmat(v) / denom[:, None]
        rel = relative_frobenius_diff(reference, approx)
        err = float(np.max(np.abs(approx - reference)))
        records.append(BenchRecord(
            "sweep-k", "conv-truncated", n, cfg.d, int(k), cfg.reps,
            time_median_ns(lambda: basis.matmat(v), cfg.reps),
            0.0, err, rel,
        ))
    return records


def records_to_csv(records, fp):
    writer = csv.writer(fp)
    writer.writerow(_RECORD_FIELDS)
    for r in records:
        d = asdict(r)
        writer.writerow([repr(d[f]) if isinstance(d[f], float) else d[f]
                         for f in _RECORD_FIELDS])


def records_from_csv(fp):
    reader = csv.reader(fp)
    header = next(reader)
    if tuple(header) != _RECORD_FIELDS:
        raise ValueError(f"unexpected CSV header {header}")
    out = []
    for row in reader:
        vals = dict(zip(_RECORD_FIELDS, row))
        out.append(BenchRecord(
            vals["op"], vals["method"], int(vals["n"]), int(vals["d"]),
            int(vals["k"]), int(vals["reps"]), float(vals["median_ns"]),
            float(vals["flops"]), float(vals["max_err"]), float(vals["rel_frob"]),
        ))
    return out


def records_to_json(records, fp):
    json.dump([asdict(r) for r in records], fp, indent=2)
    fp.write("\n")


def records_from_json(fp):
    return [BenchRecord(**d) for d in json.load(fp)]


def write_records(records, path, fmt):
    """Serialize records to `path` (or return the text when path is empty)."""
    buf = io.StringIO()
    if fmt == "csv":
        records_to_csv(records, buf)
    elif fmt == "json":
        records_to_json(records, buf)
    else:
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    text = buf.getvalue()
    if path:
        with open(path, "w") as fp:
            fp.write(text)
    return text
