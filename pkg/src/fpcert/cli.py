"""Command-line interface and experiment harness.

Subcommands: train, certify, attack, experiment, report.  Every output file
is CSV (plus a TSV twin for plotting) written atomically, with no timestamps
and floats rendered by repr, so identical (spec, seed) runs produce identical
bytes.  Per-trial randomness derives from SeedSequence(seed, spawn_key=...),
which makes results independent of worker count and scheduling; the worker
pool size comes from the FPCERT_WORKERS environment variable.

Exit codes: 0 success, 2 usage, 3 data error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import io
import csv
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .attack import AttackBudget, attack_linear, attack_relu_exact, attack_smoothed
from .certify import CertificateReport, exact_radius_linear, rhat_search, sound_radius_linear
from .data_io import (
    Dataset,
    atomic_write_text,
    gen_error_scale_case,
    gen_random_linear_case,
    load_idx,
    load_model,
    save_model,
)
from .errors import AbstainedTarget, FpcertError, InternalInvariant, ZeroWeightNorm
from .fp_core import norm_lr
from .models import LinearModel, ReluNetwork, linear_predict, relu_forward
from .smoothing import SmoothingConfig
from .train import TrainConfig, train_linear_svm, train_mlp

EXPERIMENT_KINDS = (
    "random_linear",
    "rounding_error",
    "svm_attack",
    "relu_exact_attack",
    "smoothing_attack",
    "mitigation",
)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    dims: tuple
    trials: int
    budget: AttackBudget
    threshold_kind: str
    output_path: str
    seed: int = 0

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1 or not self.dims:
            raise ValueError("trials must be >= 1 and dims nonempty")
        if self.threshold_kind not in ("r_tilde", "r_lo"):
            raise ValueError(f"unknown threshold kind {self.threshold_kind!r}")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path: str, header: list, rows: list, tsv_path: str | None = None):
    """Atomic CSV write, plus a TSV twin for plot scripts."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())
    if tsv_path:
        lines = ["\t".join(header)]
        lines += ["\t".join(_fmt(v) for v in row) for row in rows]
        atomic_write_text(tsv_path, "\n".join(lines) + "\n")


def _derived_seed(base: int, *key) -> int:
    return int(np.random.SeedSequence(base, spawn_key=tuple(key)).generate_state(1, np.uint64)[0])


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FPCERT_WORKERS", "1")))
    except ValueError:
        return 1


def _pool_map(fn, args_list):
    """Order-preserving map over trials, forked across FPCERT_WORKERS."""
    n = _workers()
    if n <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(n) as pool:
        return pool.map(fn, args_list, chunksize=max(1, len(args_list) // (4 * n)))


def _warmup_kernels():
    """Touch every jitted kernel once so forked workers inherit the machine code."""
    x = np.array([0.5, -0.25])
    w = np.array([1.0, 2.0])
    _kernels.dot_lr(w, x)
    _kernels.norm_lr(w)
    net = ReluNetwork(((np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.1, 0.0])),))
    relu_forward(net, x)
    m = LinearModel(w, 0.0)
    attack_linear(m, x, AttackBudget(n_neighbors_total=2, n_steps_per_side=1))
    attack_relu_exact(net, x, AttackBudget(n_neighbors_total=2, n_steps_per_side=1, pgd_step=0.5, max_pgd_iters=50))


# ---------------------------------------------------------------- experiments

def _replay_linear_success(m: LinearModel, x, res) -> bool:
    if norm_lr(res.x_prime - x) > res.threshold:
        return False
    return linear_predict(m, res.x_prime) != linear_predict(m, x)


def _trial_random_linear(args) -> tuple:
    d, trial, base_seed, n_side, thr_kind = args
    case = np.random.SeedSequence(base_seed, spawn_key=(d, trial, 0))
    m, x = gen_random_linear_case(d, case)
    budget = AttackBudget(
        n_neighbors_total=d * d,
        n_steps_per_side=n_side,
        seed=_derived_seed(base_seed, d, trial, 1),
    )
    try:
        thr = None if thr_kind == "r_tilde" else sound_radius_linear(m, x)[0]
        res = attack_linear(m, x, budget, threshold=thr)
    except ZeroWeightNorm:
        return (d, trial, 0, 0)
    if res is None:
        return (d, trial, 0, 0)
    return (d, trial, 1, int(_replay_linear_success(m, x, res)))


def run_random_linear(spec: ExperimentSpec) -> list:
    rows = []
    for d in spec.dims:
        args = [(d, t, spec.seed, spec.budget.n_steps_per_side, spec.threshold_kind) for t in range(spec.trials)]
        out = _pool_map(_trial_random_linear, args)
        successes = sum(r[2] for r in out)
        valid = sum(r[3] for r in out)
        rows.append([d, spec.trials, successes, valid, successes / spec.trials])
    return rows


def run_rounding_error(spec: ExperimentSpec) -> list:
    rows = []
    for d in spec.dims:
        m, x = gen_error_scale_case(d)
        r_tilde = exact_radius_linear(m, x)
        r_lo, r_hi = sound_radius_linear(m, x)
        rows.append([d, r_tilde, r_lo, r_hi, r_hi - r_lo, int(math.isfinite(r_tilde))])
    return rows


def _random_small_net(ss: np.random.SeedSequence, d: int = 8, hidden: int = 6, k: int = 3) -> ReluNetwork:
    rng = np.random.default_rng(ss)
    w1 = rng.uniform(-1.0, 1.0, (hidden, d))
    b1 = rng.uniform(-0.5, 0.5, hidden)
    w2 = rng.uniform(-1.0, 1.0, (k, hidden))
    b2 = rng.uniform(-0.5, 0.5, k)
    return ReluNetwork(((w1, b1), (w2, b2)))


def _trial_relu_exact(args) -> tuple:
    trial, base_seed = args
    net = _random_small_net(np.random.SeedSequence(base_seed, spawn_key=(trial, 0)))
    x = np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(trial, 1))).uniform(-1.0, 1.0, net.input_dim)
    budget = AttackBudget(
        n_neighbors_total=500,
        n_steps_per_side=2,
        seed=_derived_seed(base_seed, trial, 2),
        pgd_step=1e-3,
        max_pgd_iters=200_000,
    )
    out = attack_relu_exact(net, x, budget, domain=(-5.0, 5.0))
    valid = 0
    if out.result is not None:
        res = out.result
        ok_norm = norm_lr(res.x_prime - x) <= res.threshold
        ok_flip = relu_forward(net, res.x_prime)[1] != relu_forward(net, x)[1]
        valid = int(ok_norm and ok_flip)
    return (
        trial,
        int(out.pgd_converged),
        "" if out.pattern_matched is None else int(out.pattern_matched),
        "" if out.radius is None else out.radius,
        int(out.result is not None),
        valid,
    )


def run_relu_exact_attack(spec: ExperimentSpec) -> list:
    args = [(t, spec.seed) for t in range(spec.trials)]
    return [list(r) for r in _pool_map(_trial_relu_exact, args)]


SMOOTH_SIGMA = 3.0
SMOOTH_M = 100
SMOOTH_ALPHA = 0.35


def _smoothing_task_net() -> ReluNetwork:
    # scores (x1, -x1): a clean 2-class margin task living on coordinate 1
    w = np.array([[1.0, 0.0], [-1.0, 0.0]])
    return ReluNetwork(((w, np.zeros(2)),))


def _trial_smoothing(args) -> tuple:
    trial, base_seed = args
    net = _smoothing_task_net()
    rng = np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(trial, 0)))
    x = np.array([rng.uniform(1.0, 2.2), rng.uniform(-1.0, 1.0)])
    cfg = SmoothingConfig(SMOOTH_SIGMA, SMOOTH_M, SMOOTH_ALPHA, seed=_derived_seed(base_seed, trial, 1))
    budget = AttackBudget(
        n_neighbors_total=1000,
        n_steps_per_side=2,
        seed=_derived_seed(base_seed, trial, 2),
        pgd_step=1e-3,
    )
    try:
        res = attack_smoothed(net, x, cfg, budget, domain=(-20.0, 20.0))
    except AbstainedTarget:
        return (trial, 0, "", 0, "", 0)
    from .smoothing import smooth_certify, smooth_predict

    cert = smooth_certify(net, x, cfg)
    if res is None:
        return (trial, 1, cert.radius, 0, "", 0)
    ok_norm = norm_lr(res.x_prime - x) <= res.threshold
    after = smooth_predict(net, res.x_prime, cfg)
    ok_flip = after is not None and after != cert.label
    return (trial, 1, cert.radius, 1, res.delta_norm, int(ok_norm and ok_flip))


def run_smoothing_attack(spec: ExperimentSpec) -> list:
    args = [(t, spec.seed) for t in range(spec.trials)]
    return [list(r) for r in _pool_map(_trial_smoothing, args)]


def run_experiment(spec: ExperimentSpec) -> list:
    _warmup_kernels()
    tsv = os.path.splitext(spec.output_path)[0] + ".tsv"
    if spec.kind in ("random_linear", "mitigation"):
        rows = run_random_linear(spec)
        header = ["D", "trials", "successes", "valid_successes", "rate"]
    elif spec.kind == "rounding_error":
        rows = run_rounding_error(spec)
        header = ["D", "r_tilde", "r_lo", "r_hi", "width", "r_tilde_finite"]
    elif spec.kind == "relu_exact_attack":
        rows = run_relu_exact_attack(spec)
        header = ["trial", "pgd_converged", "pattern_matched", "radius", "success", "valid"]
    elif spec.kind == "smoothing_attack":
        rows = run_smoothing_attack(spec)
        header = ["input_id", "certified", "radius", "success", "delta_norm", "valid"]
    else:  # svm_attack needs user-supplied MNIST; handled in cmd_experiment
        raise InternalInvariant(f"unreachable kind {spec.kind}")
    write_rows(spec.output_path, header, rows, tsv)
    return rows


# ---------------------------------------------------------------- subcommands

def _load_inputs(ns) -> tuple:
    """(rows, domain, ids) from an IDX dataset or a generated case."""
    if ns.images and ns.labels:
        ds = load_idx(ns.images, ns.labels, rescale=ns.rescale)
        rows = ds.features
        ids = list(range(rows.shape[0]))
        if ns.input_row is not None:
            rows = rows[ns.input_row:ns.input_row + 1]
            ids = [ns.input_row]
        return rows, ds.domain, ids
    if ns.gen == "error_scale":
        _, x = gen_error_scale_case(ns.dim)
        return x[None, :], None, [0]
    if ns.gen == "random_linear":
        _, x = gen_random_linear_case(ns.dim, ns.case_seed)
        return x[None, :], None, [0]
    raise FpcertError("no input source: pass --images/--labels or --gen")


def cmd_train(ns) -> int:
    if ns.images and ns.labels:
        ds = load_idx(ns.images, ns.labels, rescale=ns.rescale)
    elif ns.blobs:
        n, d, k = (int(v) for v in ns.blobs.split(","))
        rng = np.random.default_rng(ns.seed)
        centers = rng.uniform(1.0, 9.0, (k, d))
        feats = np.clip(centers[np.arange(n) % k] + rng.normal(0.0, 0.5, (n, d)), 0.0, 10.0)
        ds = Dataset(feats, np.arange(n) % k, (0.0, 10.0))
    else:
        raise FpcertError("no training data: pass --images/--labels or --blobs n,d,k")
    cfg = TrainConfig(
        learning_rate=ns.lr,
        momentum=ns.momentum,
        batch_size=ns.batch_size,
        epochs=ns.epochs,
        l1_lambda=ns.l1_lambda,
        clamp_nonnegative=ns.clamp_nonnegative,
        seed=ns.seed,
    )
    log: list = []
    if ns.kind == "svm":
        if ns.pair:
            a, b = (int(v) for v in ns.pair.split(","))
            keep = (ds.labels == a) | (ds.labels == b)
            y = np.where(ds.labels[keep] == a, -1, 1)
            ds = Dataset(ds.features[keep], y, ds.domain)
        model = train_linear_svm(ds, cfg, log)
    else:
        arch = [int(v) for v in ns.arch.split(",")] if ns.arch else [ds.features.shape[1], 16, int(ds.labels.max()) + 1]
        model = train_mlp(ds, arch, cfg, log)
    save_model(model, ns.out, metadata={"trained_by": "fpcert", "kind": ns.kind})
    if ns.log_out:
        write_rows(ns.log_out, ["epoch", "objective", "accuracy"], [list(r) for r in log])
    return 0


def cmd_certify(ns) -> int:
    model = load_model(ns.model)
    if not isinstance(model, LinearModel):
        raise FpcertError("certify handles linear models; ReLU radii come from the attack pipeline")
    rows_x, _, ids = _load_inputs(ns)
    out_rows = []
    for x, input_id in zip(rows_x, ids):
        r_tilde = exact_radius_linear(model, x)
        r_lo, r_hi = sound_radius_linear(model, x)
        r_hat = None
        if ns.rhat and math.isfinite(r_hi):
            r_hat = rhat_search(model, x, (r_lo, r_hi), (ns.n_neighbors, ns.steps_per_side), seed=ns.seed)
        rep = CertificateReport(r_tilde=r_tilde, r_lo=r_lo, r_hi=r_hi, r_hat=r_hat)
        out_rows.append(rep.csv_row(os.path.basename(ns.model), str(input_id)))
    if ns.out:
        write_rows(ns.out, CertificateReport.csv_header(), out_rows)
    else:
        print(",".join(CertificateReport.csv_header()))
        for row in out_rows:
            print(",".join(row))
    return 0


def cmd_attack(ns) -> int:
    model = load_model(ns.model)
    if not isinstance(model, LinearModel):
        raise FpcertError("attack subcommand handles linear models; use experiment kinds for ReLU/smoothing")
    rows_x, domain, ids = _load_inputs(ns)
    budget = AttackBudget(n_neighbors_total=ns.n_neighbors, n_steps_per_side=ns.steps_per_side, seed=ns.seed)
    out_rows = []
    n_success = 0
    for x, input_id in zip(rows_x, ids):
        if ns.threshold == "r_tilde":
            thr_kind, thr = "r_tilde", None
        elif ns.threshold == "r_lo":
            thr_kind, thr = "r_lo", sound_radius_linear(model, x)[0]
        else:
            thr_kind, thr = "r", float(ns.threshold)
        res = attack_linear(model, x, budget, domain=domain, threshold=thr)
        shown_thr = exact_radius_linear(model, x) if thr is None else thr
        if res is None:
            out_rows.append([os.path.basename(ns.model), input_id, thr_kind, shown_thr, "", linear_predict(model, x), "", budget.n_neighbors_total, 0])
        else:
            n_success += 1
            out_rows.append([os.path.basename(ns.model), input_id, thr_kind, shown_thr, res.delta_norm,
                             res.label_before, res.label_after, res.candidates_tested, 1])
    header = ["model_id", "input_id", "threshold_kind", "threshold", "delta_norm",
              "label_before", "label_after", "candidates_tested", "success"]
    if ns.out:
        write_rows(ns.out, header, out_rows)
    else:
        print(f"{n_success}/{len(out_rows)} successes")
    return 0


def cmd_experiment(ns) -> int:
    dims = tuple(int(v) for v in ns.dims.split(",")) if ns.dims else (10, 25, 50, 100, 200)
    trials = ns.trials
    if ns.paper_scale:
        trials = max(trials, 10_000)
    budget = AttackBudget(n_neighbors_total=ns.n_neighbors, n_steps_per_side=ns.steps_per_side, seed=ns.seed)
    spec = ExperimentSpec(
        kind=ns.kind,
        dims=dims,
        trials=trials,
        budget=budget,
        threshold_kind="r_lo" if ns.kind == "mitigation" else ns.threshold_kind,
        output_path=ns.out,
        seed=ns.seed,
    )
    if spec.kind == "svm_attack":
        raise FpcertError("svm_attack needs --images/--labels wiring; use train + attack subcommands")
    run_experiment(spec)
    return 0


def cmd_report(ns) -> int:
    out_rows = []
    for path in ns.inputs:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        cols = {name: i for i, name in enumerate(header)}
        if "success" in cols:
            n_succ = sum(int(r[cols["success"]]) for r in rows)
            n_valid = sum(int(r[cols["valid"]]) for r in rows) if "valid" in cols else ""
            out_rows.append([os.path.basename(path), len(rows), n_succ, n_valid])
        elif "successes" in cols:
            n_succ = sum(int(r[cols["successes"]]) for r in rows)
            n_valid = sum(int(r[cols["valid_successes"]]) for r in rows) if "valid_successes" in cols else ""
            trials = sum(int(r[cols["trials"]]) for r in rows)
            out_rows.append([os.path.basename(path), trials, n_succ, n_valid])
        else:
            out_rows.append([os.path.basename(path), len(rows), "", ""])
    header = ["source", "rows", "successes", "valid_successes"]
    if ns.out:
        write_rows(ns.out, header, out_rows)
    else:
        print(",".join(header))
        for row in out_rows:
            print(",".join(_fmt(v) for v in row))
    return 0


# ---------------------------------------------------------------- arg parsing

def _add_input_flags(p):
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--rescale", action="store_true")
    p.add_argument("--input-row", type=int, default=None, dest="input_row")
    p.add_argument("--gen", choices=["random_linear", "error_scale"])
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--case-seed", type=int, default=0, dest="case_seed")


def _add_budget_flags(p):
    p.add_argument("--n-neighbors", type=int, default=1000, dest="n_neighbors")
    p.add_argument("--steps-per-side", type=int, default=2, dest="steps_per_side")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fpcert", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an SVM or MLP attack target")
    p.add_argument("--kind", choices=["svm", "mlp"], required=True)
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--rescale", action="store_true")
    p.add_argument("--blobs", help="synthetic Gaussian blobs as n,d,k")
    p.add_argument("--pair", help="binarize to digits a,b with labels -1,+1")
    p.add_argument("--arch", help="MLP layer sizes, e.g. 784,64,10")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=64, dest="batch_size")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--l1-lambda", type=float, default=1e-4, dest="l1_lambda")
    p.add_argument("--clamp-nonnegative", action="store_true", dest="clamp_nonnegative")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log-out", dest="log_out")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("certify", help="radii for a linear model on given inputs")
    p.add_argument("--model", required=True)
    _add_input_flags(p)
    p.add_argument("--sound", action="store_true", help="kept for compatibility; bounds are always computed")
    p.add_argument("--rhat", action="store_true")
    _add_budget_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("attack", help="rounding-search attack on a linear model")
    p.add_argument("--model", required=True)
    _add_input_flags(p)
    p.add_argument("--threshold", default="r_tilde", help="r_tilde, r_lo, or a float")
    _add_budget_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("experiment", help="run one experiment grid")
    p.add_argument("--kind", choices=list(EXPERIMENT_KINDS), required=True)
    p.add_argument("--dims", help="comma-separated D grid")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--threshold-kind", choices=["r_tilde", "r_lo"], default="r_tilde", dest="threshold_kind")
    _add_budget_flags(p)
    p.add_argument("--paper-scale", action="store_true", dest="paper_scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("report", help="aggregate result CSVs into a summary")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.fn(ns)
    except InternalInvariant as e:
        print(f"fpcert: internal invariant violated: {e}", file=sys.stderr)
        return 4
    except FpcertError as e:
        print(f"fpcert: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"fpcert: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
