"""Command-line front end: ``alpha-dynamo <command> [options]``.

Commands: alpha, find-xi, branch, validate-dns, nonlinear, check.

Configuration comes from an optional JSON file (``--config``) whose keys are
the RunConfig field names below; any flag given on the command line wins.
Every nonzero exit writes one line to stderr of the form

    alpha-dynamo: exit=<code> kind=<ExceptionName> msg=<text>

Exit codes: 0 ok, 2 configuration/validation, 3 I/O, 4 no unstable direction,
5 branch truncated, 6 no growth to validate, 7 horizon exceeded,
8 a numerical check or tolerance failed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import alpha_zero as az
from . import config as cfgmod
from . import continuation as co
from . import fourier_field as ff
from . import induction_dns as dns
from . import mhd_dns as md

log = logging.getLogger("alpha_dynamo")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NO_DIRECTION = 0, 2, 3, 4
EXIT_TRUNCATED, EXIT_NO_GROWTH, EXIT_HORIZON, EXIT_CHECK = 5, 6, 7, 8

DEFAULT_TOLERANCES = {
    "residual": 1e-10,      # dispersion residual relative to scale
    "growth": 0.02,         # DNS rate vs branch, relative
    "affinity": 0.10,       # t_delta fit residual / spread
    "shadowing": 0.05,      # early-time distance to the linear mode, relative
    "validate": 1e-8,       # packaged-mode operator residual
}


class CliError(Exception):
    def __init__(self, code, msg, kind=None):
        super().__init__(msg)
        self.code = code
        self.kind = kind or type(self).__name__


@dataclass
class RunConfig:
    flow: dict = field(default_factory=lambda: {"kind": "abc", "params": [1.0, 1.0, 1.0]})
    N: int = 16
    epsilon_max: float = 0.2
    steps: int = 20
    denominator_bound: int = 100
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output_dir: str = "out"
    threads: int | None = None
    direction_samples: int = 200
    alpha: list | None = None          # synthetic 3x3 real alpha for find-xi/branch
    mode_eps: list = field(default_factory=list)
    mode: str | None = None            # stem of a packaged mode to reuse
    dns_epsilon: float = 0.125
    dns_dt: float = 0.1
    dns_t_end: float = 10.0
    dns_random_t_end: float = 300.0
    dns_random_dt: float = 0.25
    nl_epsilon: float = 0.5
    nl_N: int = 2
    deltas: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    nl_dt: float = 1.0
    horizon: float | None = None
    threshold_frac: float = 0.1
    sobolev_s: float = 3.0
    points_per_unit: int = 8
    check_samples: int = 20

    def validate(self):
        bad = []
        if self.N < 1:
            bad.append("N must be >= 1")
        if self.steps < 1:
            bad.append("steps must be >= 1")
        if not self.epsilon_max >= 0:
            bad.append("epsilon_max must be >= 0")
        if self.denominator_bound is not None and self.denominator_bound < 1:
            bad.append("denominator_bound must be >= 1")
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                bad.append(f"tolerance {k} must be positive")
        if not self.deltas:
            bad.append("delta list is empty")
        elif any(not d > 0 for d in self.deltas):
            bad.append("deltas must be positive")
        if self.sobolev_s <= 2.5:
            bad.append("sobolev_s must exceed 5/2")
        if self.alpha is not None and np.shape(self.alpha) != (3, 3):
            bad.append("alpha override must be 3x3")
        if self.flow.get("kind") not in ("abc", "file", "random"):
            bad.append(f"unknown flow kind {self.flow.get('kind')!r}")
        if bad:
            raise CliError(EXIT_CONFIG, "; ".join(bad), "ConfigError")
        return self


def parse_flow(text):
    """``abc:A,B,C`` | ``file:path`` | ``random`` | ``random:p``."""
    kind, _, rest = text.partition(":")
    if kind == "abc":
        try:
            params = [float(x) for x in rest.split(",")]
        except ValueError:
            params = []
        if len(params) != 3:
            raise CliError(EXIT_CONFIG, f"abc flow needs three numbers, got {rest!r}", "ConfigError")
        return {"kind": "abc", "params": params}
    if kind == "file":
        if not rest:
            raise CliError(EXIT_CONFIG, "file flow needs a path", "ConfigError")
        return {"kind": "file", "params": rest}
    if kind == "random":
        try:
            p = float(rest) if rest else 4.0
        except ValueError:
            raise CliError(EXIT_CONFIG, f"bad decay {rest!r}", "ConfigError") from None
        return {"kind": "random", "params": p}
    raise CliError(EXIT_CONFIG, f"unknown flow {text!r}", "ConfigError")


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _alpha_arg(text):
    if text.startswith("diag(") and text.endswith(")"):
        return np.diag(_float_list(text[5:-1])).tolist()
    vals = _float_list(text)
    if len(vals) != 9:
        raise argparse.ArgumentTypeError("alpha needs diag(a,b,c) or 9 comma-separated numbers")
    return np.reshape(vals, (3, 3)).tolist()


FLAG_FIELDS = {
    "N": int, "epsilon_max": float, "steps": int, "denominator_bound": int, "seed": int,
    "output_dir": str, "threads": int, "direction_samples": int, "mode": str,
    "dns_epsilon": float, "dns_dt": float, "dns_t_end": float, "dns_random_t_end": float,
    "dns_random_dt": float, "nl_epsilon": float, "nl_N": int, "nl_dt": float,
    "horizon": float, "threshold_frac": float, "sobolev_s": float, "points_per_unit": int,
    "check_samples": int,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.exit(_fail(EXIT_CONFIG, "UsageError", message))


def build_parser():
    p = _Parser(prog="alpha-dynamo", description=__doc__.split("\n\n")[0])
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig keys")
    common.add_argument("--flow", type=str, help="abc:A,B,C | file:PATH | random[:p]")
    for name, typ in FLAG_FIELDS.items():
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    common.add_argument("--mode-eps", dest="mode_eps", type=_float_list,
                        help="comma-separated eps values at which to package modes")
    common.add_argument("--deltas", type=_float_list, help="comma-separated decreasing deltas")
    common.add_argument("--alpha", type=_alpha_arg, help="synthetic alpha: diag(a,b,c) or 9 numbers")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help="override a tolerance (repeatable)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("alpha", "compute the alpha tensor of the flow"),
        ("find-xi", "select an unstable large-scale wavevector"),
        ("branch", "continue lambda(eps) and package Bloch modes"),
        ("validate-dns", "check the growth rate by linear time integration"),
        ("nonlinear", "nonlinear instability experiment on the integer box"),
        ("check", "run the invariant suite"),
    ]:
        sub.add_parser(name, parents=[common], help=helptext, description=helptext)
    return p


def load_config(args):
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read config: {exc}", type(exc).__name__) from exc
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, f"config is not valid JSON: {exc}", "ConfigError") from exc
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise CliError(EXIT_CONFIG, f"unknown config keys {unknown}", "ConfigError")
        if isinstance(data.get("flow"), str):
            data["flow"] = parse_flow(data["flow"])
        if "tolerances" in data:
            data["tolerances"] = dict(DEFAULT_TOLERANCES) | data["tolerances"]
    cfg = RunConfig(**data)
    if args.flow is not None:
        cfg.flow = parse_flow(args.flow)
    for name in list(FLAG_FIELDS) + ["mode_eps", "deltas", "alpha"]:
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    for item in args.tol:
        key, _, val = item.partition("=")
        try:
            cfg.tolerances[key] = float(val)
        except ValueError:
            raise CliError(EXIT_CONFIG, f"bad tolerance {item!r}", "ConfigError") from None
    return cfg.validate()


# ---------------------------------------------------------------- helpers

def build_flow(cfg):
    kind, params = cfg.flow["kind"], cfg.flow["params"]
    if kind == "abc":
        return ff.abc_flow(*params, N=cfg.N)
    if kind == "random":
        return ff.random_profile(cfg.N, np.random.default_rng(cfg.seed), decay=float(params))
    try:
        F = ff.load_field(params)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read flow file {params}: {exc}", type(exc).__name__) from exc
    except ff.FieldFormatError as exc:
        raise CliError(EXIT_IO, f"corrupt flow file {params}: {exc}", "FieldFormatError") from exc
    return ff.make_profile(F.coeffs, F.N)


def flow_manifest(cfg, U):
    return {"kind": cfg.flow["kind"], "params": cfg.flow["params"], "N": U.N,
            "seed": cfg.seed if cfg.flow["kind"] == "random" else None}


def _cplx(z):
    z = complex(z)
    return [co.fmt(z.real), co.fmt(z.imag)]


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _out(cfg, name):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _mode_stem(cfg, eps):
    return _out(cfg, f"mode_eps{float(eps)!r}")


def _select(cfg, U=None):
    a = np.asarray(cfg.alpha, float) if cfg.alpha is not None else az.alpha(U)
    try:
        return az.select_xi(a, cfg.direction_samples, cfg.denominator_bound)
    except az.NoUnstableDirection as exc:
        raise CliError(EXIT_NO_DIRECTION, str(exc), "NoUnstableDirection") from exc
    except az.SnapDestroyedGrowth as exc:
        raise CliError(EXIT_CONFIG, str(exc), "SnapDestroyedGrowth") from exc


def _need_flow_for(cfg, what):
    if cfg.alpha is not None:
        raise CliError(EXIT_CONFIG, f"{what} needs a velocity field; alpha override only "
                       "supports selection", "ConfigError")


def _mode_for(cfg, U, eps):
    """Packaged mode from ``cfg.mode`` if given, else solve for it at eps."""
    if cfg.mode:
        try:
            return co.load_mode(cfg.mode)
        except (OSError, KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_IO, f"cannot load mode {cfg.mode}: {exc}", type(exc).__name__) from exc
    sol = _select(cfg, U)
    lam, _, _ = co.newton_lambda(U, sol.xi, eps, sol.lam)
    return co.build_mode(U, sol.xi, eps, lam)


# ---------------------------------------------------------------- commands

def cmd_alpha(cfg):
    _need_flow_for(cfg, "alpha")
    U = build_flow(cfg)
    a = az.alpha(U)
    a_sum = az.alpha_fourier_sum(U)
    agree = float(np.max(np.abs(a.entries - a_sum.entries)) / max(a.scale, 1e-300))
    out = {
        "alpha_re": [[co.fmt(x) for x in row] for row in a.entries.real],
        "alpha_im": [[co.fmt(x) for x in row] for row in a.entries.imag],
        "hermiticity_defect": co.fmt(a.hermiticity_defect),
        "imag_defect": co.fmt(a.imag_defect),
        "fourier_sum_disagreement": co.fmt(agree),
        "flow": flow_manifest(cfg, U),
    }
    write_json(out, _out(cfg, "alpha.json"))
    print(np.array2string(a.real, precision=12))
    return EXIT_OK


def cmd_find_xi(cfg):
    U = None if cfg.alpha is not None else build_flow(cfg)
    sol = _select(cfg, U)
    out = {
        "xi": [co.fmt(x) for x in sol.xi],
        "lambda0": _cplx(sol.lam),
        "b0": [_cplx(z) for z in sol.b0],
        "gamma": co.fmt(sol.gamma),
        "direction": [co.fmt(x) for x in sol.direction],
        "xi_unsnapped": [co.fmt(x) for x in sol.xi_opt],
        "lambda0_unsnapped": _cplx(sol.lam_opt),
        "snapped": sol.snapped,
        "fractions": [str(f) for f in sol.fractions],
    }
    write_json(out, _out(cfg, "xi.json"))
    print(f"xi = {sol.xi}  lambda0 = {sol.lam.real:.12g}")
    return EXIT_OK


def cmd_branch(cfg):
    U = None if cfg.alpha is not None else build_flow(cfg)
    sol = _select(cfg, U)
    _need_flow_for(cfg, "branch continuation")
    branch = co.continue_branch(U, sol.xi, cfg.epsilon_max, cfg.steps, sol.lam,
                                f_rtol=cfg.tolerances["residual"])
    co.write_branch_csv(branch, _out(cfg, "branch.csv"))
    reached = {s.epsilon: s.lam for s in branch.samples}
    for eps in cfg.mode_eps:
        lam = reached.get(eps)
        if lam is None:
            guess = branch.samples[-1].lam
            lam, _, _ = co.newton_lambda(U, sol.xi, eps, guess)
        co.save_mode(co.build_mode(U, sol.xi, eps, lam), _mode_stem(cfg, eps))
    summary = {"xi": [co.fmt(x) for x in sol.xi], "samples": len(branch.samples),
               "epsilon_max_reached": co.fmt(branch.epsilon_max_reached),
               "reason": branch.reason, "scale": co.fmt(branch.scale)}
    write_json(summary, _out(cfg, "branch.json"))
    print(f"{len(branch.samples)} samples up to eps = {branch.epsilon_max_reached:.6g} ({branch.reason})")
    if branch.reason != "complete":
        raise CliError(EXIT_TRUNCATED, branch.reason, "BranchTruncated")
    return EXIT_OK


def cmd_validate(cfg):
    _need_flow_for(cfg, "validate-dns")
    U = build_flow(cfg)
    eps = cfg.dns_epsilon
    report = {"epsilon": co.fmt(eps)}
    try:
        mode = _mode_for(cfg, U, eps)
    except CliError as exc:
        if exc.code != EXIT_NO_DIRECTION:
            raise
        mode = None
    if mode is not None:
        eps = mode.epsilon
        op = dns.BlochInduction(U, mode.xi, eps, max(U.N, mode.btilde.N))
        residual = dns.validate_mode(mode, U, op.N)
        st = dns.DnsState(mode.envelope().resize(op.N), 0.0, eps, mode.xi, U)
        _, rows = dns.integrate(st, cfg.dns_t_end, cfg.dns_dt, op)
        dns.write_series_csv(rows, _out(cfg, "growth.csv"))
        rep = dns.growth_rate([(r[0], r[1]) for r in rows], epsilon=eps)
        report |= {"lambda": _cplx(mode.lam), "mode_residual": co.fmt(residual),
                   "mode_run": rep.as_dict(),
                   "div_drift": co.fmt(max(r[3] for r in rows))}
        xi, target = mode.xi, mode.lam.real
    else:
        xi, target = np.zeros(3), None
        op = dns.BlochInduction(U, xi, eps, U.N)
    rng = np.random.default_rng(cfg.seed)
    B0 = dns.random_solenoidal(op, rng)
    st = dns.DnsState(ff.SpectralVectorField(op.N, B0), 0.0, eps, xi, U)
    nsteps = int(round(cfg.dns_random_t_end / cfg.dns_random_dt))
    _, rows = dns.integrate(st, cfg.dns_random_t_end, cfg.dns_random_dt, op,
                            every=max(1, nsteps // 200))
    dns.write_series_csv(rows, _out(cfg, "growth_random.csv"))
    rep_r = dns.growth_rate([(r[0], r[1]) for r in rows], epsilon=eps)
    report["random_run"] = rep_r.as_dict()
    report["random_div_drift"] = co.fmt(max(r[3] for r in rows))
    if target is None or rep.rate <= 0:
        write_json(report, _out(cfg, "dns_report.json"))
        rate = rep_r.rate if target is None else rep.rate
        raise CliError(EXIT_NO_GROWTH, f"measured rate {rate:.3e}: no growth to validate",
                       "NoGrowth")
    err_mode = abs(rep.rate - target) / target
    err_rand = abs(rep_r.rate - target) / target
    report["relative_error_mode"] = co.fmt(err_mode)
    report["relative_error_random"] = co.fmt(err_rand)
    ok = max(err_mode, err_rand) <= cfg.tolerances["growth"]
    report["pass"] = bool(ok)
    write_json(report, _out(cfg, "dns_report.json"))
    print(f"branch {target:.10g}  mode run {rep.rate:.10g}  random run {rep_r.rate:.10g}")
    if not ok:
        raise CliError(EXIT_CHECK, f"growth rate off by {max(err_mode, err_rand):.3%}",
                       "GrowthMismatch")
    return EXIT_OK


def cmd_nonlinear(cfg):
    _need_flow_for(cfg, "nonlinear")
    deltas = sorted(cfg.deltas, reverse=True)
    if cfg.mode:
        U = build_flow(cfg)
        mode = _mode_for(cfg, U, cfg.nl_epsilon)
    else:
        U = ff.make_profile(ff.resize_coeffs(build_flow(cfg).coeffs, cfg.nl_N), cfg.nl_N)
        mode = _mode_for(cfg, U, cfg.nl_epsilon)
    if mode.box is None:
        raise CliError(EXIT_CONFIG, f"no integer box for this mode: {mode.box_flags}", "BoxMismatch")
    rep = md.run_instability(U, mode, mode.epsilon, deltas, cfg.threshold_frac, cfg.sobolev_s,
                             cfg.nl_dt, cfg.horizon, cfg.points_per_unit,
                             record_every=max(1, int(round(10.0 / cfg.nl_dt))))
    for i, curve in enumerate(rep.amplitude_curves):
        md.write_amplitude_csv(curve, _out(cfg, f"amplitude_{i}.csv"))
    out = rep.as_dict() | {"box": list(mode.box.T), "epsilon": co.fmt(mode.epsilon)}
    ok_shadow = all(s <= cfg.tolerances["shadowing"] for s in rep.shadowing)
    ok_affine = rep.residual is not None and rep.residual <= cfg.tolerances["affinity"]
    out["pass"] = bool(all(rep.thresholds_hit) and ok_affine and ok_shadow)
    write_json(out, _out(cfg, "instability_report.json"))
    for d, t in zip(rep.delta_list, rep.t_delta):
        print(f"delta={d:g}  t_delta={t}")
    missed = [d for d, h in zip(rep.delta_list, rep.thresholds_hit) if not h]
    if missed:
        raise CliError(EXIT_HORIZON, f"threshold not reached for delta {missed}", "HorizonExceeded")
    if not ok_affine:
        raise CliError(EXIT_CHECK, f"affinity residual {rep.residual} exceeds tolerance",
                       "AffinityFailed")
    if not ok_shadow:
        raise CliError(EXIT_CHECK, f"shadowing {max(rep.shadowing):.3e} exceeds tolerance",
                       "ShadowingFailed")
    return EXIT_OK


def cmd_check(cfg):
    from .checks import run_all

    results = run_all(samples=cfg.check_samples, seed=cfg.seed)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.detail}")
    write_json([{"name": r.name, "ok": r.ok, "detail": r.detail} for r in results],
               _out(cfg, "check_report.json"))
    failed = [r.name for r in results if not r.ok]
    if failed:
        raise CliError(EXIT_CHECK, f"failed checks: {failed}", "CheckFailed")
    return EXIT_OK


COMMANDS = {"alpha": cmd_alpha, "find-xi": cmd_find_xi, "branch": cmd_branch,
            "validate-dns": cmd_validate, "nonlinear": cmd_nonlinear, "check": cmd_check}


def _fail(code, kind, msg):
    msg = " ".join(str(msg).split())
    print(f"alpha-dynamo: exit={code} kind={kind} msg={msg}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        cfgmod.set_workers(cfg.threads)
        return COMMANDS[args.command](cfg)
    except CliError as exc:
        return _fail(exc.code, exc.kind, exc)
    except (ff.NonzeroMean, ff.NotDivergenceFree, ff.NotReal, md.BoxMismatch,
            dns.StabilityViolation, dns.DegenerateInput) as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, exc)
    except ff.FieldFormatError as exc:
        return _fail(EXIT_IO, type(exc).__name__, exc)
    except OSError as exc:
        return _fail(EXIT_IO, type(exc).__name__, exc)
    except (co.NoConvergence, co.SolverDiverged, co.DerivativeVanished,
            co.EigenvectorMismatch, dns.NanDetected) as exc:
        return _fail(EXIT_CHECK, type(exc).__name__, exc)


if __name__ == "__main__":
    sys.exit(main())
