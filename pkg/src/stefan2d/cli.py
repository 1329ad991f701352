"""Command-line interface: validation suites, forward and optimization
drivers, gradient checks, data export, and plot emission.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure, 3 acceptance-threshold failure.
"""

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import validation
from .config import ConfigError, load_config
from .control import control_from_settings, gradient_check, optimize_case, \
    run_with_control
from .coupling import forward_solve
from .levelset import NumericsError
from .optimize import cost, evaluate_actuator

OK, USAGE, NUMERICS, THRESHOLD = 0, 1, 2, 3


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def write_table(path, header, rows, units=None):
    """CSV with a header row and an optional units row; round-trips with
    read_table."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        if units:
            w.writerow([f"[{u}]" for u in units])
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_table(path):
    with open(path) as fh:
        r = csv.reader(fh)
        rows = list(r)
    header = rows[0]
    body = rows[1:]
    if body and body[0] and str(body[0][0]).startswith("["):
        body = body[1:]
    out = []
    for row in body:
        conv = []
        for v in row:
            try:
                conv.append(float(v))
            except ValueError:
                conv.append(v)
        out.append(conv)
    return header, out


def write_field_snapshot(path, grid, t, name, field):
    """Structured-grid text snapshot with full grid metadata."""
    with open(path, "w") as fh:
        fh.write(f"# nx {grid.nx} ny {grid.ny} h {grid.h!r} "
                 f"origin {grid.origin[0]!r} {grid.origin[1]!r} "
                 f"time {t!r} variable {name}\n")
        np.savetxt(fh, field)


def write_front_polyline(path, front):
    write_table(path, ["x", "y"], list(zip(front.cx, front.cy)),
                units=("length", "length"))


# ---------------------------------------------------------------------------
# minimal self-contained SVG plotting


def _svg_header(w, h):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
            f'height="{h}" viewBox="0 0 {w} {h}">\n'
            f'<rect width="{w}" height="{h}" fill="white"/>\n')


def _map(pts, xlim, ylim, w, h, pad=40):
    xs = pad + (np.asarray(pts[0]) - xlim[0]) / (xlim[1] - xlim[0]) * (w - 2 * pad)
    ys = h - pad - (np.asarray(pts[1]) - ylim[0]) / (ylim[1] - ylim[0]) * (h - 2 * pad)
    return xs, ys


def _polyline(xs, ys, color, width=1.2):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"/>\n')


def _scatter(xs, ys, color, r=1.4):
    return "".join(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}"/>\n'
                   for x, y in zip(xs, ys))


def svg_fronts(path, grid, fronts, labels=None, title=""):
    """Front point sets overlaid in domain coordinates."""
    w = h = 480
    ox, oy = grid.origin
    ex, ey = grid.extent
    xlim, ylim = (ox, ox + ex), (oy, oy + ey)
    colors = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b")
    out = [_svg_header(w, h)]
    bx, by = _map(([xlim[0], xlim[1], xlim[1], xlim[0], xlim[0]],
                   [ylim[0], ylim[0], ylim[1], ylim[1], ylim[0]]),
                  xlim, ylim, w, h)
    out.append(_polyline(bx, by, "#444444", 1.0))
    for k, fr in enumerate(fronts):
        xs, ys = _map((fr.cx, fr.cy), xlim, ylim, w, h)
        out.append(_scatter(xs, ys, colors[k % len(colors)]))
        if labels:
            out.append(f'<text x="50" y="{20 + 14 * k}" fill='
                       f'"{colors[k % len(colors)]}" font-size="12">'
                       f'{labels[k]}</text>\n')
    if title:
        out.append(f'<text x="{w/2-80}" y="16" font-size="13">{title}</text>\n')
    out.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("".join(out))


def svg_curve(path, xs, ys, title="", logy=False, xlabel="", ylabel=""):
    w, h = 480, 360
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if logy:
        ys = np.log10(np.maximum(ys, 1e-300))
    xlim = (xs.min(), xs.max() if xs.max() > xs.min() else xs.min() + 1)
    ylim = (ys.min(), ys.max() if ys.max() > ys.min() else ys.min() + 1)
    mx, my = _map((xs, ys), xlim, ylim, w, h)
    out = [_svg_header(w, h), _polyline(mx, my, "#1f77b4", 1.6),
           _scatter(mx, my, "#1f77b4", 2.0)]
    if title:
        out.append(f'<text x="{w/2-70}" y="16" font-size="13">{title}</text>\n')
    if xlabel:
        out.append(f'<text x="{w/2-30}" y="{h-8}" font-size="11">{xlabel}</text>\n')
    if ylabel:
        out.append(f'<text x="8" y="{h/2}" font-size="11" transform='
                   f'"rotate(-90 8 {h/2})">{ylabel}{" (log10)" if logy else ""}'
                   f'</text>\n')
    out.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("".join(out))


def svg_actuator(path, control, grid, reference=None, title="actuator"):
    w, h = 480, 240
    s = np.linspace(-1, 1, 201)
    hw = 0.5 * max(grid.extent)
    u = evaluate_actuator(control, s * hw, hw)
    lo = min(u.min(), 0.0) - 0.1
    hi = max(u.max(), 0.0) + 0.1
    if reference is not None:
        ur = evaluate_actuator(reference, s * hw, hw)
        lo, hi = min(lo, ur.min() - 0.1), max(hi, ur.max() + 0.1)
    mx, my = _map((s, u), (-1, 1), (lo, hi), w, h)
    out = [_svg_header(w, h)]
    if reference is not None:
        rx, ry = _map((s, ur), (-1, 1), (lo, hi), w, h)
        out.append(_polyline(rx, ry, "#1f77b4", 1.6))
    out.append(_polyline(mx, my, "#d62728", 1.6))
    out.append(f'<text x="{w/2-60}" y="16" font-size="13">{title}</text>\n')
    out.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("".join(out))


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args):
    suite = args.suite
    out = _ensure_dir(args.out)
    fn = {
        "cutcell": validation.validate_cutcell,
        "stefan": validation.validate_stefan,
        "advect": validation.validate_advect,
        "reinit": validation.validate_reinit,
        "frank": validation.validate_frank,
    }.get(suite)
    if fn is None:
        print(f"unknown validation suite {suite!r}", file=sys.stderr)
        return USAGE
    report = fn(quiet=args.quiet)
    rows = [(k, repr(v)) for k, v in report.metrics.items()]
    write_table(os.path.join(out, f"validate_{suite}.csv"),
                ["metric", "value"], rows)
    for name, (hdr, tbl) in report.tables.items():
        write_table(os.path.join(out, f"validate_{suite}_{name}.csv"), hdr, tbl)
    if not args.quiet:
        for line in report.lines:
            print(line)
    if not report.passed:
        print(f"validation suite {suite}: FAILED "
              f"({', '.join(report.failures)})", file=sys.stderr)
        return THRESHOLD
    print(f"validation suite {suite}: ok")
    return OK


def cmd_forward(args):
    cfg = load_config(args.config)
    out = _ensure_dir(args.out or cfg.out_dir)
    t0 = time.time()
    traj = forward_solve(cfg)
    d = traj.diagnostics
    write_table(os.path.join(out, "summary.csv"),
                ["time", "interface_length", "phase1_volume", "thermal_content"],
                list(zip(d["times"], d["interface_length"],
                         d["phase1_volume"], d["thermal_content"])),
                units=("time", "length", "area", "energy"))
    fin = traj.final
    write_field_snapshot(os.path.join(out, "phi_final.dat"), cfg.grid,
                         fin.t, "phi", fin.phi)
    write_field_snapshot(os.path.join(out, "t1_final.dat"), cfg.grid,
                         fin.t, "t1", fin.t1)
    write_field_snapshot(os.path.join(out, "t2_final.dat"), cfg.grid,
                         fin.t, "t2", fin.t2)
    if fin.front is not None:
        write_front_polyline(os.path.join(out, "front_final.csv"), fin.front)
        svg_fronts(os.path.join(out, "front_final.svg"), cfg.grid,
                   [fin.front], ["final front"], title=cfg.name)
    svg_curve(os.path.join(out, "interface_length.svg"), d["times"],
              d["interface_length"], title="interface length",
              xlabel="t", ylabel="length")
    if not args.quiet:
        print(f"forward {cfg.name}: {traj.n_steps} steps, status "
              f"{traj.status}, {time.time()-t0:.1f}s -> {out}")
    return OK


def cmd_optimize(args):
    cfg = load_config(args.config)
    if cfg.optimizer is None:
        print("config has no [optimize] settings", file=sys.stderr)
        return USAGE
    out = _ensure_dir(args.out or cfg.out_dir)
    t0 = time.time()
    u_star, hist, prob = optimize_case(cfg)
    ref = control_from_settings(cfg.optimizer, np.asarray(cfg.optimizer.u_ref))
    ratio = hist.j[-1] / hist.j[0] if hist.j[0] > 0 else 0.0
    write_table(os.path.join(out, "cost_history.csv"),
                ["iteration", "J", "grad_norm"] +
                [f"u{k}" for k in range(len(u_star))],
                [(k, j, gn, *it) for k, (j, gn, it) in
                 enumerate(zip(hist.j, hist.grad_norm, hist.iterates))])
    write_table(os.path.join(out, "summary.csv"),
                ["case", "J_calls", "grad_calls", "J_final_over_J0", "status"],
                [(cfg.name, hist.cost_calls, hist.grad_calls, ratio,
                  hist.status)])
    svg_curve(os.path.join(out, "cost_history.svg"),
              np.arange(len(hist.j)), np.array(hist.j) / hist.j[0],
              title="J / J0", logy=True, xlabel="iteration")
    best = prob.control(u_star)
    svg_actuator(os.path.join(out, "actuator.svg"), best, cfg.grid,
                 reference=ref)
    traj = run_with_control(cfg, best, record="light")
    tref = run_with_control(cfg, ref, record="light")
    svg_fronts(os.path.join(out, "front_overlay.svg"), cfg.grid,
               [tref.final.front, traj.final.front],
               ["desired", "optimized"], title=cfg.name)
    if not args.quiet:
        print(f"optimize {cfg.name}: J/J0 = {ratio:.3e} after "
              f"{hist.cost_calls} cost and {hist.grad_calls} gradient calls "
              f"({hist.status}, {time.time()-t0:.0f}s) -> {out}")
    return OK


def cmd_gradcheck(args):
    cfg = load_config(args.config)
    if cfg.optimizer is None:
        print("config has no [optimize] settings", file=sys.stderr)
        return USAGE
    out = _ensure_dir(args.out or cfg.out_dir)
    rep = gradient_check(cfg)
    rows = [(k, rep["adjoint"][k], rep["fd"][k], rep["rel_err"][k],
             rep["fd_spread"][k]) for k in range(rep["adjoint"].size)]
    write_table(os.path.join(out, "gradcheck.csv"),
                ["param", "adjoint", "fd", "rel_err", "fd_spread"], rows)
    if not args.quiet:
        for r in rows:
            print(f"p{r[0]}: adjoint {r[1]:+.5e} fd {r[2]:+.5e} "
                  f"rel {r[3]:.3f}")
        print(f"cosine similarity: {rep['cosine']:.5f}")
    tol = args.tol
    if rep["cosine"] < 0.99 or np.any(rep["rel_err"] > tol):
        print("gradient check FAILED", file=sys.stderr)
        return THRESHOLD
    print("gradient check ok")
    return OK


def main(argv=None):
    p = argparse.ArgumentParser(prog="stefan2d",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    pv = sub.add_parser("validate", help="run a validation suite")
    pv.add_argument("suite",
                    choices=["cutcell", "stefan", "advect", "reinit", "frank"])
    pf = sub.add_parser("forward", help="run a forward case")
    pf.add_argument("config")
    po = sub.add_parser("optimize", help="run target manufacture + L-BFGS")
    po.add_argument("config")
    pg = sub.add_parser("gradcheck", help="adjoint vs finite differences")
    pg.add_argument("config")
    pg.add_argument("--tol", type=float, default=0.05)
    for sp in (pv, pf, po, pg):
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--quiet", action="store_true")

    args = p.parse_args(argv)
    try:
        if args.cmd == "validate":
            args.out = args.out or "out"
            return cmd_validate(args)
        if args.cmd == "forward":
            return cmd_forward(args)
        if args.cmd == "optimize":
            return cmd_optimize(args)
        if args.cmd == "gradcheck":
            return cmd_gradcheck(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICS
    return USAGE


if __name__ == "__main__":
    sys.exit(main())
