"""Command-line interface: warp, grad-check, precision, bench, align, ncc,
and a JSON kernel endpoint for foreign-language bridges.

All floats are written with 17 significant digits so outputs round-trip
exactly; identical invocations with identical seeds are byte-identical.
Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .align import (
    AlignmentConfig,
    align_joint,
    ncc_fit,
    ncc_predict,
    nearest_centroid_baseline,
)
from .basis import CpaBasis, null_space_basis, prior_covariance, sample_prior, theta_to_field
from .errors import NumericError
from .flow import integrate_grid, scaling_squaring
from .gradient import grad_grid, grad_scaling_squaring
from .oracle import finite_diff_grad_grid, precision_report, speed_report
from .sampler import SampledFunction, interp
from .tessellation import Domain, build_tessellation


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _read_signals_csv(path):
    """Rows are signals; a first column named 'label' carries class labels."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    has_labels = header[0].strip().lower() == "label"
    labels = []
    rows = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(header):
            raise ValueError(f"{path}: line {ln_no}: expected {len(header)} columns, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ValueError(f"{path}: line {ln_no}: {exc}") from exc
        if has_labels:
            labels.append(int(vals[0]))
            rows.append(vals[1:])
        else:
            rows.append(vals)
    signals = np.asarray(rows, dtype=np.float64)
    return signals, (np.asarray(labels, dtype=int) if has_labels else None)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("DIFW_THREADS")
    return max(1, int(env)) if env else 1


def _chunked_phi(tess, fld, points, t, n_squarings, threads):
    """Batch warp values, optionally chunked over a thread pool.

    Per-point results do not depend on the chunking, so the output is
    identical for any worker count.
    """
    if n_squarings > 0:
        return scaling_squaring(tess, fld, points, t, n_squarings)
    if threads <= 1 or points.shape[0] < 2 * threads:
        return integrate_grid(tess, fld, points, t).phi
    chunks = np.array_split(points, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda ch: integrate_grid(tess, fld, ch, t).phi, chunks))
    return np.concatenate(parts)


def _setup(n_cells: int, zero_boundary: bool, method: str = "sparse"):
    tess = build_tessellation(Domain(0.0, 1.0), n_cells)
    basis = null_space_basis(tess, method, zero_boundary)
    return tess, basis


def _parse_theta(text: str, d: int, basis, args) -> np.ndarray:
    if text == "zeros":
        return np.zeros(d)
    if text == "prior":
        prior = prior_covariance(basis, args.lambda_sigma, args.lambda_smooth)
        return sample_prior(prior, args.seed)
    theta = np.asarray(json.loads(text), dtype=np.float64)
    if theta.shape != (d,):
        raise ValueError(f"theta has length {theta.size}, basis dimension is {d}")
    return theta


def _cmd_warp(args) -> int:
    if args.basis:
        with open(args.basis) as fh:
            basis = CpaBasis.from_json(fh.read())
        tess = basis.tess
    else:
        tess, basis = _setup(args.cells, args.zero_boundary, args.basis_method)
    theta = _parse_theta(args.theta, basis.d, basis, args)
    fld = theta_to_field(basis, theta)
    grid = np.linspace(0.0, 1.0, args.points)
    phi = _chunked_phi(tess, fld, grid, args.t, args.squarings, _threads(args))
    if args.basis_out:
        with open(args.basis_out, "w") as fh:
            fh.write(basis.to_json() + "\n")
    _write_csv(args.out, ["x", "phi"], zip(grid, phi))
    return 0


def _cmd_grad_check(args) -> int:
    """Finite-difference sweep; entries whose difference branches disagree
    with the center on border clamping are skipped (the clamped warp has no
    two-sided derivative there) and counted separately."""
    tess, basis = _setup(args.cells, args.zero_boundary)
    prior = prior_covariance(basis, args.lambda_sigma, args.lambda_smooth)
    points = np.linspace(0.0, 1.0, args.points)
    h = args.fd_step
    max_rel = 0.0
    rels = []
    skipped = 0
    for trial in range(args.trials):
        theta = sample_prior(prior, args.seed + trial)
        fld = theta_to_field(basis, theta)
        center = integrate_grid(tess, fld, points)
        grad = grad_grid(basis, fld, center)
        for k in range(basis.d):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            up = integrate_grid(tess, theta_to_field(basis, tp), points)
            dn = integrate_grid(tess, theta_to_field(basis, tm), points)
            valid = (up.clamped == center.clamped) & (dn.clamped == center.clamped)
            skipped += int(np.sum(~valid))
            fd = (up.phi - dn.phi) / (2.0 * h)
            rel = np.abs(grad[:, k] - fd) / (1e-9 + np.abs(fd))
            if np.any(valid):
                rels.append(float(rel[valid].mean()))
                max_rel = max(max_rel, float(rel[valid].max()))
    _write_json(
        args.out,
        {
            "max_rel_err": max_rel,
            "mean_rel_err": float(np.mean(rels)) if rels else 0.0,
            "skipped_clamp_kinks": skipped,
            "trials": args.trials,
            "cells": args.cells,
            "points": args.points,
            "fd_step": args.fd_step,
            "seed": args.seed,
        },
    )
    return 0


def _cmd_precision(args) -> int:
    report = precision_report(
        n_fields=args.fields,
        n_points=args.points,
        method=args.method,
        n_steps=args.steps,
        n_cells=args.cells,
        lambda_sigma=args.lambda_sigma,
        lambda_smooth=args.lambda_smooth,
        with_grad=not args.no_grad,
        fd_step=args.fd_step,
        seed=args.seed,
    )
    _write_json(args.out, report.as_dict())
    if args.csv:
        _write_csv(
            args.csv,
            ["n_steps", "eps_phi", "eps_grad"],
            [(report.n_steps, report.eps_phi, report.eps_grad if report.eps_grad is not None else float("nan"))],
        )
    return 0


def _cmd_bench(args) -> int:
    report = speed_report(
        batch=args.batch,
        n_points=args.points,
        n_cells=args.cells,
        target_accuracy=args.accuracy,
        repeats=args.repeats,
        seed=args.seed,
    )
    _write_json(args.out, report.as_dict())
    if args.csv:
        d = report.as_dict()
        _write_csv(
            args.csv,
            ["forward_closed_s", "backward_closed_s", "forward_numeric_s", "backward_fd_s"],
            [(d["forward_closed_s"], d["backward_closed_s"], d["forward_numeric_s"], d["backward_fd_s"])],
        )
    return 0


def _alignment_config(args) -> AlignmentConfig:
    return AlignmentConfig(
        n_cells=args.cells,
        zero_boundary=args.zero_boundary,
        lambda_sigma=args.lambda_sigma,
        lambda_smooth=args.lambda_smooth,
        n_layers=args.layers,
        n_squarings=args.squarings,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )


def _cmd_align(args) -> int:
    signals, labels = _read_signals_csv(args.input)
    result = align_joint(signals, _alignment_config(args), labels=labels)
    os.makedirs(args.out, exist_ok=True)
    t_len = signals.shape[1]
    header = [f"v{j}" for j in range(t_len)]
    if labels is not None:
        rows = [[float(lbl)] + list(row) for lbl, row in zip(labels, result.warped)]
        _write_csv(os.path.join(args.out, "aligned.csv"), ["label"] + header, rows)
    else:
        _write_csv(os.path.join(args.out, "aligned.csv"), header, result.warped)
    _write_json(
        os.path.join(args.out, "theta.json"),
        {
            "thetas": result.thetas.tolist(),
            "d": result.basis.d,
            "n_layers": result.config.n_layers,
            "n_cells": result.config.n_cells,
            "zero_boundary": result.config.zero_boundary,
        },
    )
    _write_csv(
        os.path.join(args.out, "loss.csv"),
        ["epoch", "loss_data", "loss_reg"],
        [(e, ld, lr) for e, (ld, lr) in enumerate(zip(result.loss_data, result.loss_reg))],
    )
    return 0


def _cmd_ncc(args) -> int:
    train, train_labels = _read_signals_csv(args.train)
    test, test_labels = _read_signals_csv(args.test)
    if train_labels is None or test_labels is None:
        raise ValueError("ncc requires a 'label' column in both train and test CSVs")
    model = ncc_fit(train, train_labels, _alignment_config(args))
    pred = ncc_predict(model, test, n_steps=args.predict_steps)
    acc = float(np.mean(pred == test_labels))
    base_pred = nearest_centroid_baseline(train, train_labels, test)
    base_acc = float(np.mean(base_pred == test_labels))
    _write_json(
        args.out,
        {
            "accuracy": acc,
            "euclidean_accuracy": base_acc,
            "n_train": int(train.shape[0]),
            "n_test": int(test.shape[0]),
            "classes": [int(c) for c in model.classes],
        },
    )
    return 0


def _kernel_integrate(req):
    tess, basis = _setup(int(req["cells"]), bool(req.get("zero_boundary", False)))
    theta = np.asarray(req["theta"], dtype=np.float64)
    if theta.shape != (basis.d,):
        raise ValueError(f"theta has length {theta.size}, basis dimension is {basis.d}")
    fld = theta_to_field(basis, theta)
    if "points" in req:
        pts = np.asarray(req["points"], dtype=np.float64)
    else:
        pts = np.linspace(0.0, 1.0, int(req["n_points"]))
    t = float(req.get("t", 1.0))
    nsq = int(req.get("squarings", 0))
    return tess, basis, fld, pts, t, nsq


def _cmd_kernel(args) -> int:
    if args.request:
        with open(args.request) as fh:
            req = json.load(fh)
    else:
        req = json.load(sys.stdin)
    op = req.get("op")
    if op == "integrate_grid":
        tess, basis, fld, pts, t, nsq = _kernel_integrate(req)
        if nsq > 0:
            phi = scaling_squaring(tess, fld, pts, t, nsq)
        else:
            phi = integrate_grid(tess, fld, pts, t).phi
        resp = {"phi": phi.tolist(), "d": basis.d}
    elif op == "grad_grid":
        tess, basis, fld, pts, t, nsq = _kernel_integrate(req)
        if nsq > 0:
            grad = grad_scaling_squaring(basis, fld, pts, t, nsq)
        else:
            grad = grad_grid(basis, fld, integrate_grid(tess, fld, pts, t))
        resp = {"grad": grad.tolist(), "shape": list(grad.shape)}
    elif op == "sample_prior":
        _, basis = _setup(int(req["cells"]), bool(req.get("zero_boundary", False)))
        prior = prior_covariance(
            basis, float(req["lambda_sigma"]), float(req["lambda_smooth"])
        )
        theta = sample_prior(prior, int(req["seed"]))
        resp = {"theta": theta.tolist(), "d": basis.d}
    elif op == "warp_signal":
        tess, basis, fld, _, t, nsq = _kernel_integrate({**req, "n_points": 2})
        signal = np.asarray(req["signal"], dtype=np.float64)
        grid = np.linspace(0.0, 1.0, signal.shape[0])
        if nsq > 0:
            phi = scaling_squaring(tess, fld, grid, t, nsq)
        else:
            phi = integrate_grid(tess, fld, grid, t).phi
        warped = interp(SampledFunction(x=grid, y=signal), phi)
        resp = {"warped": warped.tolist()}
    elif op == "align_joint":
        signals = np.asarray(req["signals"], dtype=np.float64)
        labels = np.asarray(req["labels"], dtype=int) if req.get("labels") is not None else None
        cfg = AlignmentConfig(**req.get("config", {}))
        result = align_joint(signals, cfg, labels=labels)
        resp = {
            "thetas": result.thetas.tolist(),
            "aligned": result.warped.tolist(),
            "loss_data": result.loss_data.tolist(),
            "loss_reg": result.loss_reg.tolist(),
        }
    else:
        raise ValueError(f"unknown kernel op {op!r}")
    _write_json(args.out, resp)
    return 0


def _add_common(p, prior_flags=True):
    p.add_argument("--cells", type=int, default=16, help="number of tessellation cells")
    p.add_argument("--zero-boundary", action="store_true", help="pin velocity to zero at the borders")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker count (env DIFW_THREADS as fallback)")
    p.add_argument("--out", default=None, help="output path (stdout by default)")
    if prior_flags:
        p.add_argument("--lambda-sigma", type=float, default=1e-2, dest="lambda_sigma")
        p.add_argument("--lambda-smooth", type=float, default=0.5, dest="lambda_smooth")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpawarp", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("warp", help="emit warped grid as CSV (x, phi)")
    _add_common(p)
    p.add_argument("--theta", default="zeros", help="JSON array, 'zeros' or 'prior'")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--squarings", type=int, default=0)
    p.add_argument("--basis", default=None, help="load basis JSON instead of refactorizing")
    p.add_argument("--basis-out", default=None, dest="basis_out", help="export basis JSON here")
    p.add_argument("--basis-method", default="sparse", dest="basis_method",
                   choices=("svd", "qr", "rref", "sparse"))
    p.set_defaults(fn=_cmd_warp)

    p = sub.add_parser("grad-check", help="finite-difference sweep of the exact gradient")
    _add_common(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--fd-step", type=float, default=1e-6, dest="fd_step")
    p.set_defaults(fn=_cmd_grad_check)

    p = sub.add_parser("precision", help="closed form vs numeric solver error report")
    _add_common(p)
    p.add_argument("--fields", type=int, default=100)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--method", choices=("rk4", "euler"), default="rk4")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--fd-step", type=float, default=1e-5, dest="fd_step")
    p.add_argument("--no-grad", action="store_true")
    p.add_argument("--csv", default=None, help="also write plot-ready CSV here")
    p.set_defaults(fn=_cmd_precision)

    p = sub.add_parser("bench", help="closed form vs numeric solver timings")
    _add_common(p, prior_flags=False)
    p.add_argument("--batch", type=int, default=40)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--accuracy", type=float, default=1e-5)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--csv", default=None, help="also write plot-ready CSV here")
    p.set_defaults(fn=_cmd_bench, cells=30)

    p = sub.add_parser("align", help="jointly align a CSV of signals")
    _add_common(p)
    p.add_argument("input", help="CSV, rows = signals, optional first column 'label'")
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--squarings", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.set_defaults(fn=_cmd_align)
    p.set_defaults(out="alignment_out")

    p = sub.add_parser("ncc", help="nearest-centroid classification on aligned averages")
    _add_common(p)
    p.add_argument("train", help="labeled train CSV")
    p.add_argument("test", help="labeled test CSV")
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--squarings", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--predict-steps", type=int, default=100, dest="predict_steps")
    p.set_defaults(fn=_cmd_ncc)

    p = sub.add_parser("kernel", help="JSON request/response endpoint for bridges")
    p.add_argument("--request", default=None, help="request JSON path (stdin by default)")
    p.add_argument("--out", default=None, help="response JSON path (stdout by default)")
    p.set_defaults(fn=_cmd_kernel)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
