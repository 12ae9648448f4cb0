"""Command-line entry point.

Verbs write their CSV to ``--out`` (or stdout) and a short report to stderr.
Exit codes: 0 success, 1 validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from .autocorr import audit_sample_points, gaussian_autocorr_audit
from .lattice import (
    GridSpec,
    Instance,
    Lattice,
    format_lattice_file,
    parse_rational,
    random_lattice,
    read_lattice_file,
    shortest_vector,
    write_lattice_file,
)
from .protocol import (
    Mode,
    ProtocolConfig,
    TestKind,
    classify_instance,
    default_no_instance,
    default_yes_instance,
    distance_to_lattice_sq,
    instance_from_file,
    reduce_svp_to_cvp,
    run_experiment,
)
from .sampling import make_rng
from .witness import ADVERSARIAL_KINDS, build_adversarial_witness, build_honest_witness, load_witness, save_witness

SWEEP_PARAMS = ("m", "ball_radius", "p3", "k")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_common(p, *flags):
    table = {
        "n": lambda: p.add_argument("--n", type=int, default=2),
        "m": lambda: p.add_argument("--m", type=int),
        "ell": lambda: p.add_argument("--ell", type=int),
        "scale": lambda: p.add_argument("--scale", type=parse_rational, default=Fraction(15)),
        "seed": lambda: p.add_argument("--seed", type=int),
        "lattice": lambda: p.add_argument("--lattice", type=Path),
        "witness": lambda: p.add_argument("--witness", type=Path),
        "out": lambda: p.add_argument("--out", type=Path),
    }
    for f in flags:
        table[f]()


def _add_protocol_flags(p):
    p.add_argument("--kind", choices=("completeness", "soundness", "markov"), default="completeness")
    p.add_argument("--k", type=int, default=2000)
    p.add_argument("--p3", type=float, default=0.1)
    p.add_argument("--s", type=float, default=0.05)
    p.add_argument("--ball-radius", type=float)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--mode", choices=("exact", "sampled"), default="sampled")
    p.add_argument("--force", choices=("target", "short"))
    p.add_argument("--witness-kind", choices=ADVERSARIAL_KINDS, default="honest_for_no_instance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmalattice", description="Lattice witness simulator and protocol experiments.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a lattice file")
    _add_common(p, "n", "m", "ell", "scale", "seed", "out")
    p.add_argument("--random", action="store_true", help="random basis around scale*I (needs --seed)")
    p.add_argument("--target", help="target coefficients, e.g. '1/2 0'")

    p = sub.add_parser("witness", help="build and save a witness state")
    _add_common(p, "lattice", "seed", "out")
    p.add_argument("--kind", choices=("honest",) + ADVERSARIAL_KINDS, default="honest")
    p.add_argument("--gamma", type=float, default=1.5)
    p.add_argument("--shift", help="grid shift for the shifted witness, e.g. '3 0'")

    p = sub.add_parser("audit-autocorr", help="compare g(x) with mu(tau(x)/2) on sampled shifts")
    _add_common(p, "n", "m", "ell", "scale", "seed", "lattice", "witness", "out")
    p.add_argument("--samples", type=int, default=512)

    p = sub.add_parser("pd-audit", help="run the no-PD certificate on a witness or a suppressed Gaussian")
    _add_common(p, "n", "m", "ell", "scale", "seed", "lattice", "witness", "out")
    p.add_argument("--w", help="grid shift w, default '4 0 ...'")
    p.add_argument("--suppress", type=float, help="use the Gaussian table with h(+-w) forced to this value")

    p = sub.add_parser("protocol", help="amplified protocol runs")
    _add_common(p, "seed", "lattice", "witness", "out")
    _add_protocol_flags(p)

    p = sub.add_parser("reduce", help="map an SVP lattice to n CVP' instances")
    _add_common(p, "lattice", "out")

    p = sub.add_parser("sweep", help="repeat audit-autocorr or protocol over one parameter")
    _add_common(p, "n", "m", "ell", "scale", "seed", "lattice", "witness", "out")
    _add_protocol_flags(p)
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--inner", choices=("audit-autocorr", "protocol"))
    p.add_argument("--samples", type=int, default=512)
    return parser


# --------------------------------------------------------------- helpers ---


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"--seed is required for {args.verb}")
    return args.seed


def _coeff_list(text: str, n: int) -> tuple:
    toks = text.replace(",", " ").split()
    if len(toks) != n:
        raise UsageError(f"expected {n} entries, got {text!r}")
    return tuple(toks)


def _lattice_and_grid(args, default_m=7):
    """From --lattice, or scale * Z^n with --n/--scale; --m and --ell override the file."""
    target = None
    if getattr(args, "lattice", None) is not None:
        lattice, grid, target = read_lattice_file(args.lattice)
        m = args.m if getattr(args, "m", None) is not None else grid.m
        ell = args.ell if getattr(args, "ell", None) is not None else grid.ell
    else:
        lattice = Lattice.scaled_identity(args.n, args.scale)
        m = args.m if args.m is not None else default_m
        ell = args.ell if args.ell is not None else 1
    return lattice, GridSpec(m, ell), target


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _report(msg: str) -> None:
    print(msg, file=sys.stderr)


# ------------------------------------------------------------------ verbs ---


def cmd_gen(args) -> None:
    grid = GridSpec(args.m if args.m is not None else 7, args.ell if args.ell is not None else 1)
    if args.random:
        lattice = random_lattice(args.n, make_rng(_require_seed(args)), scale=args.scale)
    else:
        lattice = Lattice.scaled_identity(args.n, args.scale)
    if args.target is None:
        target = (Fraction(1, 2),) + (Fraction(0),) * (args.n - 1)
    else:
        target = tuple(parse_rational(t) for t in _coeff_list(args.target, args.n))
    inst = Instance(lattice, target, ell=grid.ell)
    _emit(format_lattice_file(lattice, grid, target), args.out)
    _report(f"lambda_1 = {shortest_vector(lattice).length:.6g}, "
            f"d(v, L) = {float(distance_to_lattice_sq(inst)) ** 0.5:.6g}, class = {classify_instance(inst).value}")


def cmd_witness(args) -> None:
    if args.lattice is None or args.out is None:
        raise UsageError("witness needs --lattice and --out")
    lattice, grid, _ = read_lattice_file(args.lattice)
    if args.kind == "honest":
        w = build_honest_witness(lattice, grid)
    else:
        seed = _require_seed(args) if args.kind == "random_phase" else args.seed
        shift = None
        if args.shift is not None:
            shift = tuple(int(t) for t in _coeff_list(args.shift, lattice.n))
        w = build_adversarial_witness(args.kind, lattice, grid, gamma=args.gamma, shift=shift, seed=seed)
    save_witness(args.out, w)
    _report(f"wrote {args.kind} witness on a {grid.size}^{lattice.n} grid")


def audit_metric(args, m: int | None = None) -> tuple[float, str]:
    seed = _require_seed(args)
    lattice, grid, _ = _lattice_and_grid(args)
    if m is not None:
        grid = GridSpec(m, grid.ell)
    if args.witness is not None:
        w = load_witness(args.witness)
        if not w.on_grid(lattice.n, grid):
            raise ValueError("witness grid does not match the lattice grid")
        state = w.amplitudes
    else:
        state = build_honest_witness(lattice, grid).amplitudes
    points = audit_sample_points(lattice, grid, make_rng(seed), args.samples)
    rep = gaussian_autocorr_audit(state, lattice, grid, points)
    return rep.max_deviation, rep.to_csv()


def cmd_audit(args) -> None:
    dev, text = audit_metric(args)
    _emit(text, args.out)
    _report(f"max |g - mu(tau/2)| = {dev!r}")


def cmd_pd_audit(args) -> None:
    seed = _require_seed(args)
    lattice, grid, target = _lattice_and_grid(args)
    inst = Instance(lattice, target if target is not None else (0,) * lattice.n, ell=grid.ell)
    w = None if args.w is None else tuple(int(t) for t in _coeff_list(args.w, lattice.n))
    witness = load_witness(args.witness) if args.witness is not None else None
    res = run_experiment("pd-audit", ProtocolConfig(seed=seed), instance=(inst, grid), witness=witness,
                         w=w, suppress=args.suppress)
    _emit(res.csv, args.out)
    d = res.diagnostics
    _report(f"violation found: {not res.overall_accept}; bad fraction {d['bad_fraction']!r}; "
            f"flagged triples {d['flagged']}; chain min eigenvalue {d['chain_min_eigenvalue']!r}")


def protocol_result(args, **overrides):
    seed = _require_seed(args)
    if "m" in overrides:
        raise UsageError("m cannot be swept for protocol runs")
    vals = {"k": args.k, "p3": args.p3, "s_desk": args.s, "ball_radius": args.ball_radius}
    vals.update(overrides)
    config = ProtocolConfig(seed=seed, mode=Mode(args.mode), **vals)
    instance = None
    if args.lattice is not None:
        lattice, grid, target = read_lattice_file(args.lattice)
        instance = (instance_from_file(lattice, grid, target), grid)
    elif args.kind == "soundness":
        instance = default_no_instance()
    else:
        instance = default_yes_instance()
    witness = load_witness(args.witness) if args.witness is not None else None
    force = {None: None, "target": TestKind.TARGET_TEST, "short": TestKind.SHORT_TEST}[args.force]
    return run_experiment(args.kind, config, trials=args.trials, instance=instance, witness=witness,
                          witness_kind=args.witness_kind, force=force)


def cmd_protocol(args) -> None:
    res = protocol_result(args)
    _emit(res.csv, args.out)
    extra = "".join(f"; {k} = {v!r}" for k, v in res.diagnostics.items())
    _report(f"{res.kind}: acceptance rate {res.accept_rate!r}, overall "
            f"{'accept' if res.overall_accept else 'reject'}{extra}")


def cmd_reduce(args) -> None:
    if args.lattice is None:
        raise UsageError("reduce needs --lattice")
    lattice, grid, _ = read_lattice_file(args.lattice)
    instances = reduce_svp_to_cvp(lattice)
    if args.out is None:
        sys.stdout.write("\n".join(format_lattice_file(i.lattice, grid, i.target) for i in instances))
        return
    for i, inst in enumerate(instances, start=1):
        path = args.out.with_name(f"{args.out.stem}_{i}{args.out.suffix or '.txt'}")
        write_lattice_file(path, inst.lattice, grid, inst.target)
        _report(f"wrote {path}")


def cmd_sweep(args) -> None:
    inner = args.inner or ("audit-autocorr" if args.param == "m" else "protocol")
    rows = ["param,value,metric"]
    for raw in args.values.split(","):
        raw = raw.strip()
        if inner == "audit-autocorr":
            if args.param != "m":
                raise UsageError("audit-autocorr sweeps only over m")
            metric, _ = audit_metric(args, m=int(raw))
        else:
            value = int(raw) if args.param == "k" else float(raw)
            metric = protocol_result(args, **{args.param: value}).accept_rate
        rows.append(f"{args.param},{raw},{metric!r}")
    _emit("\n".join(rows) + "\n", args.out)


COMMANDS = {
    "gen": cmd_gen,
    "witness": cmd_witness,
    "audit-autocorr": cmd_audit,
    "pd-audit": cmd_pd_audit,
    "protocol": cmd_protocol,
    "reduce": cmd_reduce,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.verb](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, MemoryError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
