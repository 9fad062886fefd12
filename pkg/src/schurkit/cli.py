"""Command-line entry point.

Subcommands: ``verify`` (run the spectral invariant suite and write a CSV
report), ``spectrum`` (eigenvalues beside predicted roots), ``biot`` (the
poroelasticity iteration-count benchmark), ``export`` (Matrix Market
dumps).  Exit codes: 0 success, 1 verification failure, 2 usage error,
3 size guard, 4 IO error.
"""

from __future__ import annotations

import argparse
import sys


from . import biot as biot_mod
from . import dense, verify
from . import precond as pc
from .blocks import SystemOptions, random_system, save_system

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2
EXIT_GUARD = 3
EXIT_IO = 4

SPECTRUM_SIZE_GUARD = 2000


def _parse_sizes(text):
    try:
        sizes = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError("need at least two positive sizes")
    return sizes


def _parse_int_list(text):
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _parse_float_list(text):
    try:
        return tuple(float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from None


def read_config(path):
    """key=value lines using the flag names; '#' starts a comment."""
    pairs = []
    with open(path, "r", encoding="ascii") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            pairs.append((key.strip(), value.strip()))
    return pairs


def _expand_config(argv):
    """Splice --config file contents in as flags (explicit flags win)."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        return argv
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    head, tail = rest[:1], rest[1:]
    injected = []
    for key, value in read_config(path):
        flag = f"--{key}"
        if flag in tail:
            continue
        injected.extend([flag, value])
    return head + injected + tail


def build_parser():
    parser = argparse.ArgumentParser(
        prog="schurkit",
        description="Schur-complement preconditioner toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser(
        "verify",
        help="run the spectral invariant suite, write a CSV report",
        description="Runs annihilation, spectrum membership, stability, "
        "Routh-table and block-LDU checks for the named presets. "
        "CSV columns: kind,name,seed,residual,min_real_part,"
        "max_membership_distance,status,detail.",
    )
    pv.add_argument("--config", metavar="FILE", help="key=value file supplying any of this command's flags")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--sizes", type=_parse_sizes, default=(4, 3, 2),
                    help="comma-separated block sizes (default 4,3,2)")
    pv.add_argument("--n", type=int, default=None,
                    help="also sweep the n-block families for n=2..N")
    pv.add_argument("--preset", default=None,
                    help="comma-separated preset subset (default: full suite)")
    pv.add_argument("--out", default=None, help="CSV report path (default stdout)")

    ps = sub.add_parser(
        "spectrum",
        help="eigenvalues of preconditioned operators beside predicted roots",
        description="CSV columns: preset,re,im,root_re,root_im,distance.",
    )
    ps.add_argument("--preset", required=True,
                    help="comma-separated preset names")
    ps.add_argument("--config", metavar="FILE", help="key=value file supplying any of this command's flags")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--sizes", type=_parse_sizes, default=(4, 3, 2))
    ps.add_argument("--n", type=int, default=3,
                    help="block count for the n-block families")
    ps.add_argument("--out", default=None)

    pb = sub.add_parser(
        "biot",
        help="poroelasticity GMRES iteration-count benchmark",
        description="One table per drop tolerance; columns PD1..PD4 then "
        "P1..P4, one row per mesh size. Non-converged cells print >maxit.",
    )
    pb.add_argument("--config", metavar="FILE", help="key=value file supplying any of this command's flags")
    pb.add_argument("--N", type=_parse_int_list, default=(16,),
                    help="comma-separated cells-per-side values")
    pb.add_argument("--tau", type=_parse_float_list, default=(1e-3,),
                    help="comma-separated IC drop tolerances")
    pb.add_argument("--tol", type=float, default=biot_mod.BENCH_TOL,
                    help="GMRES stopping tolerance (preconditioned relative "
                    "residual; default is the calibrated benchmark setting)")
    pb.add_argument("--maxit", type=int, default=1500)
    pb.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    pb.add_argument("--out", default=None,
                    help="output path prefix (one file per tau)")
    pb.add_argument("--jobs", type=int, default=1)
    pb.add_argument("--check-ordering", action="store_true",
                    help="exit nonzero unless the qualitative count ordering holds")

    pe = sub.add_parser(
        "export",
        help="write Matrix Market blocks plus a manifest",
    )
    pe.add_argument("--config", metavar="FILE", help="key=value file supplying any of this command's flags")
    pe.add_argument("--out", required=True, help="output directory")
    group = pe.add_mutually_exclusive_group(required=True)
    group.add_argument("--biot-N", type=int, default=None,
                       help="export the assembled poroelastic blocks")
    group.add_argument("--sizes", type=_parse_sizes, default=None,
                       help="export a seeded random block-tridiagonal system")
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--zero-tail", action="store_true")
    pe.add_argument("--spd", action="store_true")
    return parser


def _emit(lines, out_path):
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)


def _resolve_presets(arg, parser, allow_empty=False):
    if arg is None:
        return None
    names = [s for s in arg.split(",") if s]
    if not names and not allow_empty:
        parser.error("empty preset list")
    for name in names:
        if name not in pc.PRESET_NAMES:
            parser.error(f"unknown preset {name!r} "
                         f"(choose from {', '.join(pc.PRESET_NAMES)})")
    return names


def cmd_verify(args, parser):
    presets = _resolve_presets(args.preset, parser)
    rows = verify.run_suite(args.seed, args.sizes, presets=presets,
                            n_sweep=args.n)
    _emit(verify.report_csv_rows(rows), args.out)
    failures = [r for r in rows if not r.passed]
    for r in failures:
        print(f"FAIL {r.kind} {r.name} seed={r.seed} residual={r.residual:.3e} "
              f"dist={r.max_membership_distance:.3e} {r.detail}", file=sys.stderr)
    return EXIT_VERIFY_FAIL if failures else EXIT_OK


def cmd_spectrum(args, parser):
    presets = _resolve_presets(args.preset, parser)
    if not presets:
        parser.error("empty preset list")
    total = sum(args.sizes)
    guard = max(total, args.n * max(args.sizes))
    if guard > SPECTRUM_SIZE_GUARD:
        print(f"size guard: {guard} > {SPECTRUM_SIZE_GUARD}", file=sys.stderr)
        return EXIT_GUARD
    lines = ["preset,re,im,root_re,root_im,distance"]
    for preset in presets:
        nn = args.n if preset in ("Pn", "Dn", "Mn") else 3
        t, _, _ = verify.build_preconditioned(preset, args.seed, args.sizes, n=nn)
        eigs = dense.eigenvalues(t)
        roots = verify.predicted_roots(preset, n=nn)
        report = verify.spectrum_membership(eigs, roots,
                                            verify.MEMBERSHIP_TOL_COMPUTED)
        for z, root, dist in report.membership:
            lines.append(f"{preset},{z.real!r},{z.imag!r},"
                         f"{root.real!r},{root.imag!r},{dist!r}")
    _emit(lines, args.out)
    return EXIT_OK


def cmd_biot(args, parser):
    if any(n < 1 for n in args.N):
        parser.error("mesh sizes must be positive")
    if any(t < 0 for t in args.tau):
        parser.error("drop tolerances must be nonnegative")
    tables, counts = biot_mod.benchmark(args.N, args.tau, tol=args.tol,
                                        maxit=args.maxit, jobs=args.jobs)
    for tau, table in tables:
        lines = (table.to_csv_lines() if args.format == "csv"
                 else table.to_markdown_lines())
        if args.out is None:
            _emit(lines, None)
        else:
            _emit(lines, f"{args.out}_tau{tau:g}.{'csv' if args.format == 'csv' else 'md'}")
    if args.check_ordering:
        bad = biot_mod.ordering_violations(counts, args.N, args.tau)
        for msg in bad:
            print(f"ORDERING {msg}", file=sys.stderr)
        return EXIT_VERIFY_FAIL if bad else EXIT_OK
    return EXIT_OK


def cmd_export(args, parser):
    try:
        if args.biot_N is not None:
            if args.biot_N < 1:
                parser.error("mesh size must be positive")
            mesh = biot_mod.build_mesh(args.biot_N)
            asm = biot_mod.assemble_biot(mesh, biot_mod.BiotParameters())
            manifest = biot_mod.export_blocks(asm, args.out)
        else:
            opts = SystemOptions(seed=args.seed, sizes=args.sizes,
                                 zero_tail=args.zero_tail,
                                 symmetric_spd=args.spd)
            system = random_system(opts)
            manifest = save_system(system, args.out)
    except OSError as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(manifest)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        argv = _expand_config(list(argv))
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    handlers = {
        "verify": cmd_verify,
        "spectrum": cmd_spectrum,
        "biot": cmd_biot,
        "export": cmd_export,
    }
    try:
        return handlers[args.command](args, parser)
    except OSError as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
