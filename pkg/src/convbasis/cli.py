"""Command-line harness.

Subcommands: bench conv-matvec / bench backends, infer, recover, grad-check,
lowrank, sweep-k, fixtures, verify. Exit codes: 0 success, 1 verification
failure, 2 usage error. Every run is reproducible from --seed; timings are
the only nondeterministic fields.
"""

import json
import sys

import click
import numpy as np

from . import backend
from .attention import conv_forward
from .bench import (
    BenchConfig,
    bench_backends,
    bench_conv_matvec,
    fit_loglog_slope,
    sweep_error_vs_k,
    time_median_ns,
    write_records,
)
from .dense import linf_norm, naive_masked_attention
from .errors import UnderRankError
from .fixtures import (
    circulant_qk,
    separated_conv_instance,
    stepped_angle_qk,
    stepped_ones_qk,
    toeplitz_qk,
    training_instance_fixture,
)
from .gradient import fast_gradient, finite_difference_gradient, naive_gradient
from .io_formats import save_matrix_cbm, save_matrix_csv
from .lowrank import (
    LowRankFactors,
    dense_masked_product,
    masked_lowrank_attention,
    masked_matvec,
)
from .masks import (
    CausalMask,
    ContinuousRowMask,
    DistinctColumnsMask,
    DistinctRowsMask,
    RowChangeMask,
)
from .recovery import RecoveryParams, recover, score_column_oracle
from .verification import run_verification_suite


def _parse_sizes(_ctx, _param, value):
    try:
        sizes = tuple(int(s) for s in value.split(",") if s.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")
    if not sizes:
        raise click.BadParameter("size list is empty")
    return sizes


def _emit_json(payload, out):
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        with open(out, "w") as fp:
            fp.write(text)
    click.echo(text, nl=False)


def _recovery_params(k, t_window, delta, epsilon):
    try:
        return RecoveryParams(k=k, t_window=t_window, delta=delta, epsilon=epsilon)
    except ValueError as exc:
        raise click.UsageError(str(exc))


@click.group()
def main():
    """Structured-attention kernels: conv-basis recovery, FFT attention,
    masked low-rank matvecs, and their verification benchmarks."""


@main.group()
def bench():
    """Runtime-scaling measurements."""


@bench.command("conv-matvec")
@click.option("--sizes", default="1024,2048,4096,8192,16384", callback=_parse_sizes,
              show_default=True, help="Comma-separated n values.")
@click.option("--seed", default=0, show_default=True)
@click.option("--reps", default=3, show_default=True)
@click.option("--out", default="", help="Output path (stdout when empty).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
def bench_conv_matvec_cmd(sizes, seed, reps, out, fmt):
    """Time naive vs FFT triangular-convolution matvecs."""
    cfg = BenchConfig(sizes=sizes, seed=seed, reps=reps, out=out, fmt=fmt)
    records = bench_conv_matvec(cfg)
    text = write_records(records, out, fmt)
    if not out:
        click.echo(text, nl=False)
    if len(sizes) >= 2:
        for method in ("naive", "fft"):
            pts = [r for r in records if r.method == method]
            slope = fit_loglog_slope([r.n for r in pts], [r.median_ns for r in pts])
            click.echo(f"# {method} log-log slope: {slope:.3f}", err=True)


@bench.command("backends")
@click.option("--sizes", default="256,1024", callback=_parse_sizes, show_default=True)
@click.option("--k", default=4, show_default=True, help="Factor rank.")
@click.option("--seed", default=0, show_default=True)
@click.option("--reps", default=3, show_default=True)
@click.option("--out", default="")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
def bench_backends_cmd(sizes, k, seed, reps, out, fmt):
    """Time the low-rank kernels under every importable backend."""
    cfg = BenchConfig(sizes=sizes, k=k, seed=seed, reps=reps, out=out, fmt=fmt)
    records = bench_backends(cfg)
    text = write_records(records, out, fmt)
    if not out:
        click.echo(text, nl=False)
    click.echo(f"# active backend: {backend.active_backend()}", err=True)


@main.command()
@click.option("--n", default=64, show_default=True)
@click.option("--d", default=4, show_default=True, help="Value columns.")
@click.option("--k", default=3, show_default=True, help="Planted basis size.")
@click.option("--t-window", default=1, show_default=True)
@click.option("--delta", default=1.0, show_default=True)
@click.option("--epsilon", default=0.0, show_default=True, help="Injected score noise.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="", help="Write the attention output here.")
@click.option("--format", "fmt", type=click.Choice(["csv", "cbm"]), default="csv",
              show_default=True)
def infer(n, d, k, t_window, delta, epsilon, seed, out, fmt):
    """Causal attention on a planted conv-basis instance."""
    _recovery_params(k, t_window, delta, epsilon)
    try:
        inst = separated_conv_instance(n, k, t_window, delta, seed,
                                       noise_epsilon=epsilon)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    rng = np.random.default_rng([seed, 1])
    v = rng.normal(size=(n, d))
    y, rec = conv_forward(inst.q, inst.k_mat, v, inst.params)
    summary = {
        "n": n, "d": d, "k": k,
        "windows": list(rec.windows),
        "column_queries": rec.column_queries,
    }
    if n <= 1024:
        ref = naive_masked_attention(inst.q, inst.k_mat, v, CausalMask(n))
        summary["max_err_vs_dense"] = linf_norm(y - ref)
    if out:
        (save_matrix_cbm if fmt == "cbm" else save_matrix_csv)(out, y)
        summary["out"] = out
    _emit_json(summary, "")


@main.command("recover")
@click.option("--n", default=64, show_default=True)
@click.option("--k", default=3, show_default=True)
@click.option("--t-window", default=1, show_default=True)
@click.option("--delta", default=1.0, show_default=True)
@click.option("--epsilon", default=0.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="", help="Write the JSON report here.")
def recover_cmd(n, k, t_window, delta, epsilon, seed, out):
    """Recover the conv basis of a planted instance from column queries."""
    _recovery_params(k, t_window, delta, epsilon)
    try:
        inst = separated_conv_instance(n, k, t_window, delta, seed,
                                       noise_epsilon=epsilon)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    oracle = score_column_oracle(inst.q, inst.k_mat)
    try:
        rec = recover(oracle, inst.params)
    except UnderRankError as exc:
        click.echo(f"recovery failed: {exc}", err=True)
        sys.exit(1)
    payload = rec.to_json_dict()
    payload["true_windows"] = list(inst.basis.windows)
    payload["windows_match"] = rec.windows == inst.basis.windows
    _emit_json(payload, out)
    if not payload["windows_match"]:
        sys.exit(1)


@main.command("grad-check")
@click.option("--n", default=24, show_default=True)
@click.option("--k", default=2, show_default=True, help="Planted basis size (= d).")
@click.option("--seed", default=0, show_default=True)
@click.option("--reps", default=1, show_default=True)
@click.option("--out", default="")
def grad_check(n, k, seed, reps, out):
    """Finite differences vs dense vs fast gradient on a seeded instance."""
    try:
        inst, params = training_instance_fixture(n, k, seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    fd = finite_difference_gradient(inst)
    ref = naive_gradient(inst)
    fast, rec = fast_gradient(inst, params)
    scale = max(1e-30, linf_norm(ref))
    report = {
        "n": n, "k": k, "seed": seed,
        "max_rel_err_fd": linf_norm(ref - fd) / scale,
        "max_rel_err_fast": linf_norm(fast - ref) / scale,
        "column_queries": rec.column_queries,
        "timings_ns": {
            "fd": time_median_ns(lambda: finite_difference_gradient(inst), reps),
            "naive": time_median_ns(lambda: naive_gradient(inst), reps),
            "fast": time_median_ns(lambda: fast_gradient(inst, params), reps),
        },
    }
    _emit_json(report, out)
    if report["max_rel_err_fd"] > 1e-4 or report["max_rel_err_fast"] > 1e-6:
        sys.exit(1)


def _build_mask(name, n, seed):
    rng = np.random.default_rng([seed, 2])
    if name == "causal":
        return CausalMask(n)
    if name == "rowchange":
        supports = [rng.choice(n, size=rng.integers(1, n + 1), replace=False)
                    for _ in range(n)]
        return RowChangeMask.from_row_supports(supports)
    if name == "continuous":
        a = rng.integers(0, n, n)
        b = rng.integers(0, n, n)
        return ContinuousRowMask(np.minimum(a, b), np.maximum(a, b))
    groups = min(4, n)
    ids = rng.integers(0, groups, n)
    ids[:groups] = np.arange(groups)
    if name == "distinct-cols":
        protos = (rng.random((n, groups)) < 0.6).astype(float)
        protos[:, 0] = 1.0  # group 0 covers every row: no empty normalizer
        return DistinctColumnsMask(ids, protos)
    protos = (rng.random((groups, n)) < 0.6).astype(float)
    protos[:, 0] = 1.0  # column 0 in every prototype: no empty normalizer
    return DistinctRowsMask(ids, protos)


@main.command("lowrank")
@click.option("--mask", "mask_name",
              type=click.Choice(["causal", "rowchange", "continuous",
                                 "distinct-cols", "distinct-rows"]),
              default="causal", show_default=True)
@click.option("--n", default=256, show_default=True)
@click.option("--k", default=4, show_default=True, help="Factor rank.")
@click.option("--d", default=4, show_default=True, help="Value columns.")
@click.option("--seed", default=0, show_default=True)
@click.option("--reps", default=3, show_default=True)
@click.option("--out", default="")
def lowrank_cmd(mask_name, n, k, d, seed, reps, out):
    """Structured masked low-rank matvec and attention vs the dense oracle."""
    rng = np.random.default_rng(seed)
    mask = _build_mask(mask_name, n, seed)
    factors = LowRankFactors(rng.normal(size=(n, k)), rng.normal(size=(n, k)))
    v = rng.normal(size=n)
    dense = dense_masked_product(factors, mask)
    max_err = float(np.max(np.abs(masked_matvec(factors, mask, v) - dense @ v)))
    pos = LowRankFactors(rng.uniform(0.1, 1.0, (n, k)), rng.uniform(0.1, 1.0, (n, k)))
    vmat = rng.normal(size=(n, d))
    dense_pos = dense_masked_product(pos, mask)
    ref = dense_pos / dense_pos.sum(axis=1, keepdims=True) @ vmat
    att_err = linf_norm(masked_lowrank_attention(pos, mask, vmat) - ref)
    report = {
        "mask": mask_name, "n": n, "rank": k, "d": d,
        "backend": backend.active_backend(),
        "max_abs_err_matvec": max_err,
        "max_abs_err_attention": att_err,
        "median_ns_fast": time_median_ns(lambda: masked_matvec(factors, mask, v), reps),
        "median_ns_dense": time_median_ns(lambda: dense @ v, reps),
    }
    _emit_json(report, out)
    if max_err > 1e-10 or att_err > 1e-8:
        sys.exit(1)


@main.command("sweep-k")
@click.option("--n", default=64, show_default=True)
@click.option("--k", default=5, show_default=True, help="Full basis size; sweeps 1..k.")
@click.option("--d", default=4, show_default=True)
@click.option("--t-window", default=1, show_default=True)
@click.option("--delta", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--reps", default=1, show_default=True)
@click.option("--out", default="")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
def sweep_k(n, k, d, t_window, delta, seed, reps, out, fmt):
    """Relative-difference-vs-k curve for truncated conv-basis attention."""
    if k < 1:
        raise click.UsageError(f"k must be >= 1, got {k}")
    cfg = BenchConfig(k_values=tuple(range(1, k + 1)), n=n, d=d, t_window=t_window,
                      delta=delta, seed=seed, reps=reps, out=out, fmt=fmt)
    try:
        records = sweep_error_vs_k(cfg)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    text = write_records(records, out, fmt)
    if not out:
        click.echo(text, nl=False)


@main.command("fixtures")
@click.option("--kind", type=click.Choice(["toeplitz", "circulant", "separated",
                                           "stepped-ones", "stepped-angles"]),
              default="separated", show_default=True)
@click.option("--n", default=64, show_default=True)
@click.option("--d", default=4, show_default=True)
@click.option("--k", default=3, show_default=True)
@click.option("--t-window", default=1, show_default=True)
@click.option("--delta", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="", help="Base path; writes <out>_q and <out>_k.")
@click.option("--format", "fmt", type=click.Choice(["csv", "cbm"]), default="csv",
              show_default=True)
def fixtures_cmd(kind, n, d, k, t_window, delta, seed, out, fmt):
    """Generate a structured (Q, K) instance and describe it."""
    meta = {"kind": kind, "n": n, "seed": seed}
    try:
        if kind == "toeplitz":
            q, km = toeplitz_qk(n, d, seed)
            meta["d"] = d
        elif kind == "circulant":
            q, km = circulant_qk(n, d)
            meta["d"] = d
        elif kind == "separated":
            inst = separated_conv_instance(n, k, t_window, delta, seed)
            q, km = inst.q, inst.k_mat
            meta.update(k=k, t_window=t_window, delta=delta,
                        windows=list(inst.basis.windows))
        else:
            rng = np.random.default_rng(seed)
            rest = sorted((int(m) for m in
                           rng.choice(np.arange(1, n), size=k - 1, replace=False)),
                          reverse=True) if k > 1 else []
            windows = (n, *rest)
            maker = stepped_ones_qk if kind == "stepped-ones" else stepped_angle_qk
            q, km, basis, sep = maker(n, windows, seed)
            meta.update(k=k, windows=list(basis.windows), delta=sep, d=q.shape[1])
    except (ValueError, AssertionError) as exc:
        raise click.UsageError(str(exc))
    if out:
        save = save_matrix_cbm if fmt == "cbm" else save_matrix_csv
        ext = "cbm" if fmt == "cbm" else "csv"
        save(f"{out}_q.{ext}", q)
        save(f"{out}_k.{ext}", km)
        meta["files"] = [f"{out}_q.{ext}", f"{out}_k.{ext}"]
    _emit_json(meta, "")


@main.command("verify")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="", help="Write the JSON report here.")
def verify(seed, out):
    """Run the full oracle-comparison suite; nonzero exit on any failure."""
    code, report = run_verification_suite(seed)
    for chk in report["checks"]:
        status = "PASS" if chk["passed"] else "FAIL"
        click.echo(f"{status} {chk['name']}: measured {chk['measured']:.6g} "
                   f"vs bound {chk['bound']:.6g}")
    click.echo(f"{report['passed']}/{report['total']} checks passed "
               f"(backend: {report['backend']})")
    if out:
        with open(out, "w") as fp:
            json.dump(report, fp, indent=2)
            fp.write("\n")
    sys.exit(code)


if __name__ == "__main__":
    main()
