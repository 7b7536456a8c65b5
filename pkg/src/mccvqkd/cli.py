"""
Command-line front end.

Exit codes: 0 key produced / success, 1 usage or configuration error,
2 no secret key, 3 simulation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import replace
from typing import Sequence

import numpy as np

from .config import ConfigError, Scenario, builtin_names, load_scenario
from .keyrate import (
    BlockTooSmallError,
    DomainError,
    composable_skr,
    holevo_bound,
    key_rate_report,
    mutual_information,
    snr,
    worst_case,
)
from .noise import dispersion_noise
from .optimizer import (
    InfeasibleError,
    optimal_subcarriers,
    optimize_modulation_variance,
    skr_gain,
    total_skr,
)
from .postproc import (
    BitBlock,
    InfeasibleCodeError,
    beta_from_code,
    code_rate_for_distance,
    random_seed_bits,
    toeplitz_pa,
)
from . import reference

EXIT_OK, EXIT_CONFIG, EXIT_NO_KEY, EXIT_SIM = 0, 1, 2, 3

SKR_COLUMNS = (
    "subcarrier", "V_A", "beta", "fer", "T", "xi", "I", "chi",
    "R_inf", "R_LB", "R_UB", "R_inf_bps", "R_LB_bps", "R_UB_bps",
)
SIM_COLUMNS = ("subcarrier", "m", "T_hat", "xi_hat", "sigma_xi") + SKR_COLUMNS[1:]
SWEEP_COLUMNS = (
    "axis", "value", "distance_km", "loss_db", "f_sym", "N", "V_A", "beta",
    "xi_sub", "dispersion_sc", "dispersion_sub", "skr_bps", "gain",
)
CURVE_COLUMNS = ("subcarrier", "V_A", "skr", "beta", "fer")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# -- report assembly ----------------------------------------------------


def _rates(sc: Scenario, k: int, V_A: float, beta: float, fer: float, T: float, xi: float, m=None) -> dict:
    """Key-rate row for one subcarrier operating point."""
    opt = sc.optimization_scenario()
    rate = opt.key_symbol_rate(sc.tx.N)
    p = sc.detector.point(V_A, T, xi)
    sec = replace(sc.security, p_ec=1.0 - fer)
    I = mutual_information(p)
    chi = holevo_bound(p)
    R_inf = beta * I - chi
    if sc.channel.xi is not None and sc.channel.worst_case:
        comp = composable_skr(R_inf, sec)
        R_LB, R_UB = comp.R_LB, comp.R_UB
    else:
        try:
            rep = key_rate_report(beta, p, sec, rate, m=m)
            R_LB, R_UB = rep.R_LB, rep.R_UB
        except BlockTooSmallError:
            R_LB = R_UB = -math.inf
    return dict(
        subcarrier=k, V_A=V_A, beta=beta, fer=fer, T=T, xi=xi, I=I, chi=chi,
        R_inf=R_inf, R_LB=R_LB, R_UB=R_UB,
        R_inf_bps=sec.p_ec * R_inf * rate, R_LB_bps=R_LB * rate, R_UB_bps=R_UB * rate,
    )


def _operating_point(sc: Scenario, k: int, xi_of) -> tuple[float, float, float]:
    """(V_A, beta, FER) for subcarrier ``k``, optimized or as configured."""
    opt = sc.optimization_scenario()
    fer_model = sc.postproc.fer_model()
    if sc.optimization.optimize_V_A:
        o = optimize_modulation_variance(k, opt, fer_model, N=sc.tx.N, beta=sc.postproc.beta)
        return o.V_A, o.beta, o.fer
    V_A = float(sc.tx.V_A_per_subcarrier[k])
    if sc.postproc.beta is not None:
        beta = sc.postproc.beta
    else:
        p = sc.detector.point(V_A, opt.transmittance, xi_of(V_A))
        beta = beta_from_code(code_rate_for_distance(sc.distance_km), snr(p))
    return V_A, beta, float(fer_model(beta))


def skr_rows(sc: Scenario) -> list[dict]:
    opt = sc.optimization_scenario()
    T = opt.transmittance
    rows = []
    for k in range(sc.tx.N):
        xi_of = lambda v, k=k: float(opt.excess_noise(k, sc.tx.N, v))
        V_A, beta, fer = _operating_point(sc, k, xi_of)
        rows.append(_rates(sc, k, V_A, beta, fer, T, xi_of(V_A)))
    return rows


def aggregate(rows: list[dict], columns: Sequence[str]) -> dict:
    agg = {c: "" for c in columns}
    agg[columns[0]] = "total"
    for c in ("R_inf_bps", "R_LB_bps", "R_UB_bps"):
        if c in columns:
            agg[c] = sum(max(r[c], 0.0) for r in rows)
    return agg


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(v)


def render(rows: list[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) and math.isfinite(r[c]) else _fmt(r[c]) for c in columns])
        return buf.getvalue()
    cells = [list(columns)] + [[_fmt(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands -----------------------------------------------------------


def cmd_skr(sc: Scenario, args) -> int:
    rows = skr_rows(sc)
    total = aggregate(rows, SKR_COLUMNS)
    _emit(render(rows + [total], SKR_COLUMNS, args.format), args.out)
    return EXIT_OK if total["R_LB_bps"] > 0 else EXIT_NO_KEY


def simulation_rows(sc: Scenario, result) -> list[dict]:
    det = sc.detector
    fer_model = sc.postproc.fer_model()
    beta = sc.beta
    rows = []
    for k, est in enumerate(result.estimates):
        V_A = float(sc.tx.V_A_per_subcarrier[k])
        T = min(max(est.T_hat, 1e-12), 1.0)
        xi = max(est.xi_hat, 0.0)
        try:
            sigma_xi = worst_case(T, xi, det.point(V_A, T, xi), est.m, sc.security.eps_pe).sigma_xi
        except BlockTooSmallError:
            sigma_xi = math.inf
        row = dict(subcarrier=k, m=est.m, T_hat=est.T_hat, xi_hat=est.xi_hat, sigma_xi=sigma_xi)
        row.update(_rates(sc, k, V_A, beta, float(fer_model(beta)), T, xi))
        rows.append(row)
    return rows


def cmd_simulate(sc: Scenario, args) -> int:
    from .sim import SyncError, dump_symbols_csv, simulate

    cfg = sc.simulation_config(n_blocks=args.blocks, seed=args.seed)
    try:
        result = simulate(cfg, cfg.impairments.rng_seed)
    except SyncError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM
    if args.dump:
        dump_symbols_csv(args.dump, result.demod)
    rows = simulation_rows(sc.replace(channel=replace(sc.channel, xi=None)), result)
    total = aggregate(rows, SIM_COLUMNS)
    _emit(render(rows + [total], SIM_COLUMNS, args.format), args.out)
    return EXIT_OK if total["R_LB_bps"] > 0 else EXIT_NO_KEY


def _parse_grid(text: str) -> list[float]:
    text = text.strip()
    if not text:
        raise ConfigError("--grid: empty grid")
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        lo, hi, step = parts
        if step <= 0 or hi < lo:
            raise ConfigError("--grid: range must be lo:hi[:step] with lo <= hi and step > 0")
        return list(lo + step * np.arange(int(math.floor((hi - lo) / step + 1e-9)) + 1))
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--grid: {exc}") from exc
    if not values:
        raise ConfigError("--grid: empty grid")
    return values


def _at_axis(sc: Scenario, axis: str, value: float) -> Scenario:
    if axis == "distance":
        loss = reference.LOSS_DB.get(float(value))
        return sc.replace(distance_km=float(value), fiber=replace(sc.fiber, loss_db=loss), channel=replace(sc.channel, xi=None))
    if axis == "f_sym":
        return sc.replace(tx=replace(sc.tx, f_sym=float(value)))
    if axis == "N":
        if value != int(value) or value < 1:
            raise ConfigError(f"--grid: N values must be positive integers, got {value}")
        return sc.replace(tx=replace(sc.tx, N=int(value), V_A=float(sc.tx.V_A_per_subcarrier.mean())))
    if axis == "V_A":
        return sc.replace(tx=replace(sc.tx, V_A=float(value)))
    raise ConfigError(f"--axis: unknown axis {axis!r}")


def sweep_rows(sc: Scenario, axis: str, grid: Sequence[float]) -> list[dict]:
    # Sweeps explore the noise model, so pinned per-subcarrier noise is dropped.
    sc = sc.replace(channel=replace(sc.channel, xi=None))
    rows = []
    for value in grid:
        s = _at_axis(sc, axis, value)
        opt = s.optimization_scenario()
        N, L, f = s.tx.N, s.distance_km, s.tx.f_sym
        gain = skr_gain(opt, N_mc=N)
        rows.append(dict(
            axis=axis, value=float(value), distance_km=L, loss_db=opt.fiber.total_loss_db,
            f_sym=f, N=N, V_A=opt.V_A, beta=opt.beta,
            xi_sub=float(opt.excess_noise(0, N, opt.V_A)),
            dispersion_sc=dispersion_noise(f, L, opt.fiber),
            dispersion_sub=dispersion_noise(f / N, L, opt.fiber),
            skr_bps=total_skr(opt, N),
            gain=gain,
        ))
    return rows


def cmd_sweep(sc: Scenario, args) -> int:
    if not args.axis:
        raise ConfigError("--axis is required for sweep")
    rows = sweep_rows(sc, args.axis, _parse_grid(args.grid or ""))
    _emit(render(rows, SWEEP_COLUMNS, args.format), args.out)
    return EXIT_OK


def cmd_optimize(sc: Scenario, args) -> int:
    opt = sc.optimization_scenario()
    n_star, curve = optimal_subcarriers(sc.optimization_scenario(xi=None))
    lines = [f"optimal subcarrier count: {n_star}"]
    lines += [f"  N={N:2d}  skr_bps={v:.6g}" for N, v in curve.items()]
    fer_model = sc.postproc.fer_model()
    curves = []
    has_key = False
    for k in range(opt.N_mc):
        try:
            o = optimize_modulation_variance(k, opt, fer_model, beta=sc.postproc.beta)
        except InfeasibleError as exc:
            lines.append(f"  subcarrier {k}: no feasible modulation variance ({exc})")
            continue
        has_key |= o.has_key
        lines.append(
            f"  subcarrier {k}: V_A*={o.V_A:.4g} beta={o.beta:.4f} FER={o.fer:.4f} rate={o.rate:.6g}"
            + ("" if o.has_key else " (no key)")
        )
        for V_A, r, b, f in o.curve:
            curves.append(dict(subcarrier=k, V_A=V_A, skr=r, beta=b, fer=f))
    sys.stdout.write("\n".join(lines) + "\n")
    if args.out:
        _emit(render(curves, CURVE_COLUMNS, "csv"), args.out)
    return EXIT_OK if has_key else EXIT_NO_KEY


def cmd_pa(sc: Scenario, args) -> int:
    text = sys.stdin.read()
    bits = [c for c in text if not c.isspace()]
    if any(c not in "01" for c in bits) or not bits:
        raise ConfigError("pa: stdin must contain a non-empty string of 0/1 characters")
    block = BitBlock(np.array([int(c) for c in bits], dtype=np.uint8), args.subcarrier, args.block)
    if args.out_len is None:
        raise ConfigError("pa: --out-len is required")
    rng = np.random.default_rng(args.seed)
    try:
        out = toeplitz_pa(block, random_seed_bits(len(block), args.out_len, rng), args.out_len)
    except ValueError as exc:
        raise ConfigError(f"pa: {exc}") from exc
    _emit(out.to_line() + "\n", args.out)
    return EXIT_OK


COMMANDS = {
    "skr": cmd_skr,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "pa": cmd_pa,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mccvqkd", description="Multi-carrier CV-QKD key rates, optimization and simulation.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help=f"scenario JSON path or builtin:NAME ({', '.join(builtin_names())})")
    p.add_argument("--seed", type=int, default=None, help="64-bit RNG seed")
    p.add_argument("--blocks", type=int, default=None, help="simulated blocks")
    p.add_argument("--out", help="write output to this path")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.add_argument("--axis", choices=("distance", "f_sym", "N", "V_A"), help="sweep axis")
    p.add_argument("--grid", help="sweep values: comma list or lo:hi[:step]")
    p.add_argument("--out-len", type=int, help="privacy amplification output bits")
    p.add_argument("--subcarrier", type=int, default=0, help="key-file subcarrier id (pa)")
    p.add_argument("--block", type=int, default=0, help="key-file block id (pa)")
    p.add_argument("--dump", help="write received symbols as CSV (simulate)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.blocks is not None and args.blocks < 1:
            raise ConfigError("--blocks must be >= 1")
        sc = load_scenario(args.config)
        return COMMANDS[args.command](sc, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, InfeasibleCodeError) as exc:
        print(f"no key: {exc}", file=sys.stderr)
        return EXIT_NO_KEY
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
