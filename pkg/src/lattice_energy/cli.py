"""Command-line interface: JSON reports on stdout, diagnostics on stderr."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import catalog as cat
from .calculus import gradient_general, hessian_general, hessian_split_design
from .certify import certify_critical, certify_fc, certify_ps, universal_scan
from .designs import all_shells_design
from .energy import Potential, energy, windowed_energy
from .enumeration import coset_decomposition, enumerate_shells
from .errors import LatticeEnergyError
from .forms import PeriodicForm
from .optimize import descend, perturbation_sweep

log = logging.getLogger("lattice_energy")

THREADS_ENV = "LATTICE_ENERGY_NUM_THREADS"


def _configure_threads() -> None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        log.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        return
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _load_form(args) -> tuple[PeriodicForm, str]:
    if getattr(args, "form", None):
        with open(args.form) as fh:
            p = PeriodicForm.from_json(json.load(fh))
        label = os.path.basename(args.form)
    elif getattr(args, "lattice", None):
        p = cat.load_catalog(args.lattice)
        label = args.lattice
    else:
        raise SystemExit("error: one of --form or --lattice is required")
    m = getattr(args, "m", 1) or 1
    if m > 1:
        if p.m != 1:
            raise SystemExit("error: --m needs a lattice (m = 1) input")
        p = coset_decomposition(p.q, m, args.seed)
    return p, label


def _lattice_q(args):
    p, label = _load_form(argparse.Namespace(**{**vars(args), "m": 1}))
    if p.m != 1:
        raise SystemExit("error: this command needs a lattice (m = 1) input")
    return p.q, label


def _emit(payload) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_catalog(args):
    rows = []
    for key, (d, mu, n) in sorted(cat.EXPECTED.items()):
        entry = cat.load_entry(key)
        rows.append({"id": key, "dim": d, "m": entry.form.m, "min_norm": mu, "min_count": n, "notes": entry.notes})
    rows.append({"id": "zd:<d>", "dim": None, "m": 1, "min_norm": 1, "min_count": None, "notes": "integer lattice Z^d"})
    _emit({"lattices": rows})


def cmd_shells(args):
    q, label = _lattice_q(args)
    shells = enumerate_shells(q, args.max_norm_sq)
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "count"])
        for s in shells:
            w.writerow([str(s.alpha_exact) if s.alpha_exact is not None else repr(float(s.alpha)), s.count])
        sys.stdout.write(buf.getvalue())
        return
    out = []
    for s in shells:
        row = {"alpha": s.alpha, "count": s.count}
        if s.alpha_exact is not None:
            row["alpha_exact"] = str(s.alpha_exact)
        if args.vectors:
            row["vectors"] = np.asarray(s.vectors).tolist()
        out.append(row)
    _emit({"lattice": label, "max_norm_sq": args.max_norm_sq, "shells": out})


def cmd_design(args):
    q, label = _lattice_q(args)
    survey = all_shells_design(q, args.t, args.max_norm_sq)
    _emit({"lattice": label, **survey.to_json()})


def cmd_energy(args):
    p, label = _load_form(args)
    pot = Potential.parse(args.potential)
    if args.windowed is not None:
        val = windowed_energy(p, args.windowed, pot)
        _emit({"lattice": label, "potential": pot.label, "radius": args.windowed, "value": float(val)})
        return
    ev = energy(p, pot, target_tail=args.target_tail, cutoff_norm_sq=args.cutoff_norm_sq)
    _emit({"lattice": label, "potential": pot.label, **ev.to_json()})


def cmd_grad(args, order=1):
    p, label = _load_form(args)
    pot = Potential.parse(args.potential)
    fn = gradient_general if order == 1 else hessian_general
    gh = fn(p, pot, cutoff=args.cutoff_norm_sq, target_tail=args.target_tail)
    _emit({"lattice": label, "potential": pot.label, "m": p.m, **gh.to_json()})


def cmd_hess(args):
    cmd_grad(args, order=2)


def cmd_split(args):
    q, label = _lattice_q(args)
    sp = hessian_split_design(q, args.y, cutoff=args.design_cutoff, m=args.m_split)
    _emit({"lattice": label, **sp.to_json()})


def cmd_certify(args):
    q, label = _lattice_q(args)
    common = {"cutoff": args.design_cutoff, "lattice_id": label}
    if args.mode == "critical":
        if not args.potential:
            raise SystemExit("error: --potential is required for --mode critical")
        cert = certify_critical(q, Potential.parse(args.potential), m=args.m, seed=args.seed, **common)
    elif args.mode == "ps":
        if args.s is None:
            raise SystemExit("error: --s is required for --mode ps")
        cert = certify_ps(q, args.s, m=args.m, seed=args.seed, hessian_cutoff=args.cutoff_norm_sq, **common)
    elif args.mode == "fc":
        if args.c is None:
            raise SystemExit("error: --c is required for --mode fc")
        cert = certify_fc(q, args.c, m=args.m, seed=args.seed, hessian_cutoff=args.cutoff_norm_sq, **common)
    else:
        grid = np.linspace(args.y_min, args.y_max, args.y_steps)
        cert = universal_scan(q, grid, **common)
    _emit(cert.to_json())


def cmd_optimize(args):
    p, label = _load_form(args)
    pot = Potential.parse(args.potential)
    tr = descend(p, pot, grad_tol=args.grad_tol, max_iters=args.max_iters, initial_step=args.initial_step,
                 cutoff=args.cutoff_norm_sq, target_tail=args.target_tail)
    if args.csv:
        sys.stdout.write(tr.to_csv())
        return
    _emit({"lattice": label, "potential": pot.label, **tr.to_json()})


def cmd_sweep(args):
    p, label = _load_form(args)
    pot = Potential.parse(args.potential)
    s = perturbation_sweep(p, p.m, pot, args.magnitude, args.samples, seed=args.seed,
                           descend_after=args.descend, cutoff=args.cutoff_norm_sq, target_tail=args.target_tail)
    _emit({"lattice": label, "potential": pot.label, "m": p.m, **s.to_json()})


def _global_flags(default) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(add_help=False)
    ap.add_argument("--target-tail", type=float, default=default, help="absolute bound for the omitted tail")
    ap.add_argument("--cutoff-norm-sq", type=float, default=default, help="explicit summation cutoff")
    ap.add_argument("-v", "--verbose", action="store_true", default=default if default is not None else False)
    return ap


def build_parser() -> argparse.ArgumentParser:
    # subcommands repeat the global flags without defaults so values given
    # before the subcommand survive
    glob = _global_flags(argparse.SUPPRESS)

    src = argparse.ArgumentParser(add_help=False)
    g = src.add_mutually_exclusive_group()
    g.add_argument("--form", help="periodic form JSON file")
    g.add_argument("--lattice", help="catalog id (zd:<d>, a2, d4, e8, leech, d9plus)")
    src.add_argument("--seed", type=int, default=0)

    cosets = argparse.ArgumentParser(add_help=False)
    cosets.add_argument("--m", type=int, default=1, help="represent the lattice with m cosets")

    pot = argparse.ArgumentParser(add_help=False)
    pot.add_argument("--potential", required=True, help="exp:c=<c> or pow:s=<s>")

    ap = argparse.ArgumentParser(prog="lattice-energy", description=__doc__, parents=[_global_flags(None)])
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("catalog", parents=[glob], help="list built-in lattices").set_defaults(fn=cmd_catalog)

    sp = sub.add_parser("shells", parents=[glob, src], help="shells up to a norm")
    sp.add_argument("--max-norm-sq", type=float, required=True)
    sp.add_argument("--vectors", action="store_true")
    fmt = sp.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="JSON output (default)")
    fmt.add_argument("--csv", action="store_true")
    sp.set_defaults(fn=cmd_shells)

    sp = sub.add_parser("design", parents=[glob, src], help="spherical design test per shell")
    sp.add_argument("--t", type=int, default=4)
    sp.add_argument("--max-norm-sq", type=float, required=True)
    sp.set_defaults(fn=cmd_design)

    sp = sub.add_parser("energy", parents=[glob, src, cosets, pot], help="energy of a periodic form")
    sp.add_argument("--windowed", type=float, default=None, metavar="R")
    sp.set_defaults(fn=cmd_energy)

    for name, fn in (("grad", cmd_grad), ("hess", cmd_hess)):
        sp = sub.add_parser(name, parents=[glob, src, cosets, pot], help=f"analytic {name} in the tangent basis")
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("split", parents=[glob, src], help="Hessian split F(y), G(y) at a lattice")
    sp.add_argument("--y", type=float, required=True)
    sp.add_argument("--design-cutoff", type=float, default=8.0)
    sp.add_argument("--m", dest="m_split", type=int, default=1)
    sp.set_defaults(fn=cmd_split)

    sp = sub.add_parser("certify", parents=[glob, src, cosets], help="certificate for a lattice")
    sp.add_argument("--mode", choices=["critical", "ps", "fc", "universal"], required=True)
    sp.add_argument("--potential", default=None)
    sp.add_argument("--c", type=float, default=None)
    sp.add_argument("--s", type=float, default=None)
    sp.add_argument("--y-min", type=float, default=0.1)
    sp.add_argument("--y-max", type=float, default=10.0)
    sp.add_argument("--y-steps", type=int, default=100)
    sp.add_argument("--design-cutoff", type=float, default=None)
    sp.set_defaults(fn=cmd_certify)

    sp = sub.add_parser("optimize", parents=[glob, src, cosets, pot], help="gradient descent")
    sp.add_argument("--grad-tol", type=float, default=1e-9)
    sp.add_argument("--max-iters", type=int, default=500)
    sp.add_argument("--initial-step", type=float, default=1.0)
    sp.add_argument("--csv", action="store_true", help="CSV of iterates instead of JSON")
    sp.set_defaults(fn=cmd_optimize)

    sp = sub.add_parser("sweep", parents=[glob, src, cosets, pot], help="random perturbation sweep")
    sp.add_argument("--magnitude", type=float, default=1e-2)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--descend", action="store_true", help="also descend from every perturbed form")
    sp.set_defaults(fn=cmd_sweep)
    return ap


def run(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    _configure_threads()
    try:
        args.fn(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            sys.stderr.write(exc.code + "\n")
            return 2
        return int(exc.code or 0)
    except (LatticeEnergyError, ValueError, OSError) as exc:
        sys.stderr.write(f"{type(exc).__name__}: {exc}\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())


SCHEMA_FOR = {
    "catalog": "catalog",
    "shells": "shells",
    "design": "design",
    "energy": "energy",
    "grad": "derivatives",
    "hess": "derivatives",
    "split": "split",
    "certify": "certificate",
    "optimize": "trace",
    "sweep": "sweep",
}


def load_schema(name: str) -> dict:
    """Shipped JSON schema for a payload kind (or a subcommand name)."""
    from importlib import resources

    name = SCHEMA_FOR.get(name, name)
    return json.loads(resources.files("lattice_energy").joinpath(f"schemas/{name}.json").read_text())
