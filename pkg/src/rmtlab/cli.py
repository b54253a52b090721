"""Batch verification front end.

Every command writes reports/<command>/<timestamp>/ with report.json
{command, params, results, seed, precision_bits, pass}, one or more CSV files
and an SVG chart.  Exit status: 0 when every check passes, 1 when a check
fails, 2 on invalid input.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
import sys
from pathlib import Path

import click
import mpmath

from .mpx import PREC_ENV, decimal_str, default_bits, working

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, (mpmath.mpf, mpmath.mpc)):
        return decimal_str(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        return v.item()
    return v


def _csv_text(rows: list) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _jsonable(v) for k, v in r.items()})
    return buf.getvalue()


def _svg_chart(path: Path, title: str, series: dict, xlabel: str = "log N", ylabel: str = "log |error|") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (xs, ys) in series.items():
        pts = [(x, y) for x, y in zip(xs, ys) if y is not None and math.isfinite(y)]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if ax.get_lines():
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _log(v) -> float | None:
    v = float(v)
    return math.log(v) if v > 0 else None


class Report:
    def __init__(self, ctx: click.Context, command: str, params: dict, seed=None):
        self.root = Path(ctx.obj["out"])
        self.command = command
        self.params = params
        self.seed = seed
        self.bits = ctx.obj["bits"]
        stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S%f")
        self.dir = self.root / command.replace(" ", "-") / stamp

    def write(self, results, passed: bool, csvs: dict, charts: dict | None = None) -> int:
        with working(self.bits):
            return self._write(results, passed, csvs, charts)

    def _write(self, results, passed: bool, csvs: dict, charts: dict | None) -> int:
        self.dir.mkdir(parents=True, exist_ok=True)
        for name, rows in csvs.items():
            (self.dir / f"{name}.csv").write_text(_csv_text(rows))
        for name, (title, series, labels) in (charts or {}).items():
            _svg_chart(self.dir / f"{name}.svg", title, series, *labels)
        doc = {
            "command": self.command,
            "params": _jsonable(self.params),
            "results": _jsonable(results),
            "seed": self.seed,
            "precision_bits": self.bits,
            "pass": bool(passed),
        }
        (self.dir / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
        click.echo(f"{self.command}: {'PASS' if passed else 'FAIL'} -> {self.dir}")
        return EXIT_OK if passed else EXIT_FAIL


def _finish(code: int) -> None:
    sys.exit(code)


def _guard(fn):
    """Turn precondition errors raised while building inputs into exit status 2."""
    try:
        return fn()
    except (ValueError, IndexError) as exc:
        raise click.UsageError(str(exc)) from exc


def _spec(n, lams, alphas, poly, eps, tail):
    from .weights import make_spec

    return _guard(lambda: make_spec(n, list(lams), list(alphas), tuple(poly), epsilon=eps, tail=tail))


def _check_pairs(lams, alphas):
    if len(lams) != len(alphas):
        raise click.UsageError("--lambda and --alpha must be given the same number of times")


# ---------------------------------------------------------------------------
# root group
# ---------------------------------------------------------------------------

@click.group()
@click.option("--out", default="reports", show_default=True, type=click.Path(file_okay=False), help="Report root directory.")
@click.option("--prec", type=click.IntRange(min=64), default=None, help=f"Mantissa bits (default: ${PREC_ENV} or 256).")
@click.pass_context
def main(ctx: click.Context, out: str, prec: int | None) -> None:
    """Numerical checks for moments of characteristic polynomials of Gaussian ensembles."""
    ctx.ensure_object(dict)
    ctx.obj["out"] = out
    try:
        ctx.obj["bits"] = prec if prec is not None else default_bits()
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


@main.group()
def verify() -> None:
    """Exact identities and the moment identity."""


@main.group()
def asym() -> None:
    """Orthogonal-polynomial asymptotics."""


@main.group()
def mc() -> None:
    """Monte Carlo checks."""


@main.group()
def gmc() -> None:
    """Chaos-measure coupling experiment."""


@main.group()
def pv() -> None:
    """Principal-value integrals."""


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

@verify.command("normalization")
@click.option("--n-max", type=click.IntRange(min=1), default=6, show_default=True)
@click.option("--tol", type=float, default=1e-30, show_default=True)
@click.pass_context
def verify_normalization(ctx, n_max, tol):
    """Z_{2N,1} Z_{N,4} = 2^{2N} Z_{2N,2} for N = 1..n-max."""
    from .skew import normalization_identity

    bits = ctx.obj["bits"]
    rows = [normalization_identity(N, bits) for N in range(1, n_max + 1)]
    ok = all(r["rel_err"] < tol for r in rows)
    for r in rows:
        r["route"] = "closed form"
    rep = Report(ctx, "verify normalization", {"n_max": n_max, "tol": tol})
    _finish(rep.write(rows, ok, {"normalization": rows}))


@verify.command("moment-identity")
@click.option("--n", "ns", type=click.IntRange(min=2), multiple=True, default=(8, 16, 32), show_default=True, help="Matrix sizes (even).")
@click.option("--lambda", "lams", type=float, multiple=True, default=(0.2,), show_default=True)
@click.option("--alpha", "alphas", type=float, multiple=True, default=(0.3,), show_default=True)
@click.option("--poly", type=float, multiple=True, default=(), help="Coefficients of W0, ascending.")
@click.option("--eps", type=float, default=0.05, show_default=True)
@click.option("--tail/--no-tail", default=False)
@click.option("--merging", is_flag=True, help="Two singularities at center +- n^-gamma / 2.")
@click.option("--gamma", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.5, show_default=True)
@click.option("--center", type=float, default=0.0, show_default=True)
@click.pass_context
def verify_moment_identity(ctx, ns, lams, alphas, poly, eps, tail, merging, gamma, center):
    """Ratio E1 E4 / E2 over a ladder of sizes; passes when |ratio - 1| decreases."""
    from .skew import moment_ratio

    bits = ctx.obj["bits"]
    if any(n % 2 for n in ns):
        raise click.UsageError("sizes must be even")
    if merging:
        if len(alphas) != 1:
            raise click.UsageError("--merging takes a single --alpha")
        specs = [_spec(n, [center + n**-gamma / 2, center - n**-gamma / 2], [alphas[0]] * 2, poly, eps, tail) for n in ns]
    else:
        _check_pairs(lams, alphas)
        specs = [_spec(n, lams, alphas, poly, eps, tail) for n in ns]
    rows = []
    for n, spec in zip(ns, specs):
        r = moment_ratio(spec, n, bits)
        with working(bits):
            rows.append({"n": n, "config_hash": spec.config_hash(), "ratio": r, "abs_err": abs(r - 1), "route": "pfaffian/determinant quadrature"})
    errs = [float(r["abs_err"]) for r in rows]
    exact = all(a == 0 for a in alphas) and not any(poly)
    if exact:
        ok = all(e < 1e-20 for e in errs)
    else:
        ok = all(a > b for a, b in zip(errs, errs[1:]))
    slope = None
    if len(ns) > 1 and all(e > 0 for e in errs):
        import numpy as np

        slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0])
    params = {"n": list(ns), "lambda": list(lams), "alpha": list(alphas), "poly": list(poly), "eps": eps, "tail": tail, "merging": merging, "gamma": gamma, "center": center}
    rep = Report(ctx, "verify moment-identity", params)
    chart = {"ratio": ("|ratio - 1|", {"moment ratio": ([math.log(n) for n in ns], [_log(e) for e in errs])}, ())}
    _finish(rep.write({"rows": rows, "loglog_slope": slope}, ok, {"ratios": rows}, chart))


@verify.command("delta-routes")
@click.option("--n", type=click.IntRange(min=2), default=8, show_default=True)
@click.option("--lambda", "lams", type=float, multiple=True, default=(0.2,), show_default=True)
@click.option("--alpha", "alphas", type=float, multiple=True, default=(0.3,), show_default=True)
@click.option("--poly", type=float, multiple=True, default=())
@click.option("--eps", type=float, default=0.05, show_default=True)
@click.option("--tail/--no-tail", default=False)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.pass_context
def verify_delta_routes(ctx, n, lams, alphas, poly, eps, tail, tol):
    """det Delta_N by three routes."""
    from .delta import three_route_report

    _check_pairs(lams, alphas)
    if n % 2:
        raise click.UsageError("n must be even")
    spec = _spec(n, lams, alphas, poly, eps, tail)
    bits = ctx.obj["bits"]
    rep_d = three_route_report(spec, n, bits, check=False)
    diffs = rep_d.pairwise()
    if spec.has_tail:
        diffs = {k: v for k, v in diffs.items() if "block" not in k}
    ok = all(v <= tol for v in diffs.values())
    rows = [{"route": k, "det": v} for k, v in (("direct", rep_d.det_direct), ("block", rep_d.det_block), ("ratio", rep_d.det_ratio)) if v is not None]
    drows = [{"pair": k, "abs_diff": v} for k, v in diffs.items()]
    results = {"determinants": rows, "pairwise": drows, "frobenius_tail": rep_d.frobenius_tail}
    params = {"n": n, "lambda": list(lams), "alpha": list(alphas), "poly": list(poly), "eps": eps, "tail": tail, "tol": tol}
    rep = Report(ctx, "verify delta-routes", params)
    chart = {"routes": ("route differences", {"|difference|": (list(range(len(drows))), [_log(r["abs_diff"]) for r in drows])}, ("pair index", "log |difference|"))}
    _finish(rep.write(results, ok, {"determinants": rows, "pairwise": drows}, chart))


# ---------------------------------------------------------------------------
# asym
# ---------------------------------------------------------------------------

def _rel_err(p, o) -> float:
    num = mpmath.sqrt(abs(p[0] - o[0]) ** 2 + abs(p[1] - o[1]) ** 2)
    den = mpmath.sqrt(abs(o[0]) ** 2 + abs(o[1]) ** 2)
    return float(num / den)


@asym.command("compare")
@click.option("--n", "ns", type=click.IntRange(min=4), multiple=True, default=(24, 48), show_default=True)
@click.option("--region", default="bulk", show_default=True, help="bulk, edge+1, edge-1 or sing<j>.")
@click.option("--k", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--lambda", "lams", type=float, multiple=True, default=())
@click.option("--alpha", "alphas", type=float, multiple=True, default=())
@click.option("--poly", type=float, multiple=True, default=())
@click.option("--points", type=click.IntRange(min=2), default=21, show_default=True)
@click.option("--lo", type=float, default=None, help="Grid start (defaults depend on the region).")
@click.option("--hi", type=float, default=None)
@click.pass_context
def asym_compare(ctx, ns, region, k, lams, alphas, poly, points, lo, hi):
    """Leading-order predictions against recurrence values; passes when the sup error drops as N grows."""
    from . import asymptotics as A
    from .orthopoly import build_basis

    _check_pairs(lams, alphas)
    bits = min(ctx.obj["bits"], 128)
    base = _spec(max(ns), lams, alphas, poly, 0.05, False)
    if region == "bulk":
        lo, hi = (-0.5 if lo is None else lo), (0.5 if hi is None else hi)
    elif region in ("edge+1", "edge-1"):
        c = 1 if region == "edge+1" else -1
        lo, hi = (c - 0.095 if lo is None else lo), (c + 0.095 if hi is None else hi)
    elif region.startswith("sing"):
        j = _guard(lambda: int(region[4:]))
        if not 1 <= j <= base.m:
            raise click.UsageError("singularity index out of range")
        lam = base.lams[j - 1]
        lo, hi = (lam - 0.0925 if lo is None else lo), (lam + 0.0925 if hi is None else hi)
    else:
        raise click.UsageError(f"unknown region {region!r}")
    xs = [lo + (hi - lo) * i / (points - 1) for i in range(points)]
    rows, sups = [], []
    with working(bits):
        for n in ns:
            spec = base.with_n(n)
            basis = build_basis(spec, n + 1, bits)
            errs = []
            for x in xs:
                p = _guard(lambda: A.predict(spec, n, k, region, x, bits))
                o = A.observed(basis, n, k, x)
                e = _rel_err(p, o)
                errs.append(e)
                rows.append({"n": n, "k": k, "region": region, "x": x, "rel_err": e, "route": "parametrix vs three-term recurrence"})
            sups.append(max(errs))
    ok = all(b < a for a, b in zip(sups, sups[1:]))
    params = {"n": list(ns), "region": region, "k": k, "lambda": list(lams), "alpha": list(alphas), "poly": list(poly), "points": points, "lo": lo, "hi": hi}
    rep = Report(ctx, "asym compare", params)
    chart = {"sup_error": (f"{region} sup relative error", {region: ([math.log(n) for n in ns], [_log(s) for s in sups])}, ())}
    summary = [{"n": n, "sup_rel_err": s} for n, s in zip(ns, sups)]
    _finish(rep.write({"sup": summary}, ok, {"pointwise": rows, "sup": summary}, chart))


# ---------------------------------------------------------------------------
# mc
# ---------------------------------------------------------------------------

@mc.command("moments")
@click.option("--beta", "betas", type=click.Choice(["1", "2", "4"]), multiple=True, default=("1", "2", "4"), show_default=True)
@click.option("--n", "ns", type=click.IntRange(min=1), multiple=True, default=(1, 2, 4), show_default=True)
@click.option("--a", "avals", type=click.FloatRange(min=0), multiple=True, default=(0.0, 0.4), show_default=True)
@click.option("--lambda", "lam", type=float, default=0.2, show_default=True)
@click.option("--trials", type=click.IntRange(min=100), default=100_000, show_default=True)
@click.option("--seed", type=int, default=2024, show_default=True)
@click.option("--sigmas", type=float, default=3.0, show_default=True)
@click.pass_context
def mc_moments(ctx, betas, ns, avals, lam, trials, seed, sigmas):
    """Monte Carlo E prod |det(A - lam)|^a against the quadrature value."""
    from .ensembles import char_moment_mc
    from .gmc import derive_seed
    from .skew import phi_moment

    if not -1 < lam < 1:
        raise click.UsageError("--lambda must lie in (-1, 1)")
    bits = min(ctx.obj["bits"], 128)
    rows = []
    for b in map(int, betas):
        for n in ns:
            for a in avals:
                size = 2 * n if b == 4 else n
                spec = _spec(size, [lam], [a if b == 1 else a / 2], (), 0.05, False)
                exact = phi_moment(b, spec, bits)[1]
                s = derive_seed(seed, b, n, int(round(a * 1000)))
                est = char_moment_mc(b, n, [(lam, a)], trials=trials, seed=s)
                dev = abs(est.mean - float(exact))
                good = dev <= sigmas * est.stderr if est.stderr > 0 else dev < 1e-12
                rows.append({"beta": b, "n": n, "a": a, "lambda": lam, "exact": exact, "mc_mean": est.mean, "mc_stderr": est.stderr,
                             "trials": trials, "seed": s, "pass": good, "route": "tridiagonal Monte Carlo vs quadrature"})
    ok = all(r["pass"] for r in rows)
    params = {"beta": list(betas), "n": list(ns), "a": list(avals), "lambda": lam, "trials": trials, "sigmas": sigmas}
    rep = Report(ctx, "mc moments", params, seed)
    series = {}
    for b in map(int, betas):
        sel = [r for r in rows if r["beta"] == b and r["a"] > 0]
        series[f"beta={b}"] = ([math.log(r["n"]) for r in sel], [_log(abs(r["mc_mean"] - float(r["exact"])) or 1e-300) for r in sel])
    chart = {"mc_error": ("|MC - quadrature|", series, ("log n", "log |difference|"))}
    _finish(rep.write(rows, ok, {"moments": rows}, chart))


# ---------------------------------------------------------------------------
# gmc
# ---------------------------------------------------------------------------

@gmc.command("couple")
@click.option("--n", type=click.IntRange(min=1), default=64, show_default=True)
@click.option("--m", "m_trunc", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--alpha", type=float, default=0.3, show_default=True)
@click.option("--trials", type=click.IntRange(min=2), default=2000, show_default=True)
@click.option("--calibration-trials", type=click.IntRange(min=2), default=None)
@click.option("--seed", type=int, default=2024, show_default=True)
@click.pass_context
def gmc_couple(ctx, n, m_trunc, alpha, trials, calibration_trials, seed):
    """mu_{2N,M,1,alpha}(phi) mu_{N,M,4,2alpha}(phi) against mu_{2N,M,2,2alpha}(phi)."""
    from .gmc import coupling_experiment

    rep_g = _guard(lambda: coupling_experiment(n, m_trunc, alpha, trials, seed=seed, calibration_trials=calibration_trials))
    ok = rep_g.means_agree(3.0)
    samples = [{"channel": ch, "trial": t, "value": float(v)} for ch in ("product", "gue") for t, v in enumerate(rep_g.samples[ch])]
    params = {"n": n, "m": m_trunc, "alpha": alpha, "trials": trials, "calibration_trials": rep_g.calibration_trials}
    rep = Report(ctx, "gmc couple", params, seed)
    chans = [dict(c.to_dict()) for c in rep_g.channels.values()]
    chart = {"means": ("channel means", {"mean": (list(range(len(chans))), [c["mean"] for c in chans])}, ("channel (goe, gse, gue)", "mean of mu(phi)"))}
    _finish(rep.write(rep_g.summary(), ok, {"samples": samples, "channels": chans}, chart))


# ---------------------------------------------------------------------------
# pv
# ---------------------------------------------------------------------------

@pv.command("fubini")
@click.option("--dps", type=click.IntRange(min=8), default=12, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.pass_context
def pv_fubini(ctx, dps, tol):
    """Symmetric-eps double principal value against both iterated orders."""
    from .numerics import fubini_check

    rows = fubini_check(dps=dps)
    for r in rows:
        r["route"] = "folded symmetric limit vs iterated p.v."
    ok = all(r["max_diff"] < tol for r in rows)
    rep = Report(ctx, "pv fubini", {"dps": dps, "tol": tol})
    chart = {"fubini": ("largest difference per case", {"max diff": (list(range(len(rows))), [_log(r["max_diff"]) for r in rows])}, ("case", "log |difference|"))}
    _finish(rep.write(rows, ok, {"fubini": rows}, chart))


if __name__ == "__main__":  # pragma: no cover
    main(prog_name="rmtlab")
