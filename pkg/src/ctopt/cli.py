"""Command-line entry point: ``ctopt <command> ...``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import artifacts
from .artifacts import ArtifactError
from .golden import golden_area, golden_sta
from .impl_lib import DEFAULT_CATALOG, DEFAULT_LOAD_GRID, DEFAULT_SLEW_GRID, ImplSet, characterize_all, load_catalog
from .legalize import LegalDesign, embed, legalize
from .netlist import emit_design, verify
from .optimizer import RunConfig, checkpoint, optimize, restore, write_trace
from .pipeline import default_liberty_path, load_library, run, sweep
from .sta import TimingModel, analyze
from .tree import SlotModel, build_tree


class CommandError(RuntimeError):
    """A failed invariant or incompatible input; reported with exit code 1."""


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=1)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _load_config(path: str | None) -> RunConfig:
    return RunConfig.read(path) if path else RunConfig()


def _load_tree(path: str) -> tuple[SlotModel, str]:
    payload, digest, _ = artifacts.load(path, "tree")
    return SlotModel.from_dict(payload), digest


def _load_char(path: str) -> tuple[ImplSet, str, dict]:
    payload, digest, _ = artifacts.load(path, "characterization")
    return ImplSet.from_dict(payload["impls"]), digest, payload


def _check_pair(tree_hash: str, char_hash: str, upstream: dict, what: str) -> None:
    for key, have in (("tree", tree_hash), ("char", char_hash)):
        want = upstream.get(key)
        if want is not None and want != have:
            raise CommandError(f"{what} was built from {key} {want}, but the given {key} artifact is {have}")


def _design_inputs(args, upstream: dict, sources: dict):
    tree_path = args.tree or sources.get("tree")
    char_path = args.char or sources.get("char")
    if not tree_path or not char_path:
        raise CommandError("tree/char artifacts unknown; pass --tree and --char")
    model, th = _load_tree(tree_path)
    impls, ch, char_payload = _load_char(char_path)
    _check_pair(th, ch, upstream, "design")
    return model, impls, char_payload, th, ch


def _library_for(char_payload: dict, override: str | None):
    path = Path(override or char_payload["liberty_path"])
    if not path.exists():
        raise CommandError(f"liberty file {path} not found; pass --lib")
    if _file_hash(path) != char_payload["liberty_hash"]:
        raise CommandError(f"liberty file {path} changed since characterization (hash {_file_hash(path)}, expected {char_payload['liberty_hash']})")
    return load_library(path)


# ---------------------------------------------------------------------------

def cmd_characterize(args) -> int:
    lib_path = Path(args.lib) if args.lib else default_liberty_path()
    lib = load_library(lib_path)
    nets = load_catalog(args.impls)
    slews = _floats(args.slew_grid) if args.slew_grid else DEFAULT_SLEW_GRID
    loads = _floats(args.load_grid) if args.load_grid else DEFAULT_LOAD_GRID
    impls = characterize_all(nets, lib, slews, loads)
    payload = {
        "impls": impls.to_dict(),
        "liberty_path": str(lib_path.resolve()),
        "liberty_hash": _file_hash(lib_path),
        "catalog_hash": _file_hash(Path(args.impls)),
    }
    digest = artifacts.save(args.output, "characterization", payload)
    for w in lib.warnings:
        print(f"warning: line {w.line}: {w.message}", file=sys.stderr)
    print(f"characterized {sum(len(v) for v in impls.impls.values())} implementations -> {args.output} [{digest}]")
    return 0


def cmd_init(args) -> int:
    model = build_tree(args.width_a, args.width_b, args.acc, args.family)
    digest = artifacts.save(args.output, "tree", model.to_dict())
    n32, n22 = model.assignment.totals()
    print(f"{args.family} {args.width_a}x{args.width_b}+{args.acc}: {model.n_stages} stages, "
          f"{n32} C32 + {n22} C22 -> {args.output} [{digest}]")
    return 0


def _overrides(config: RunConfig, args) -> RunConfig:
    if args.iterations is not None:
        config = replace(config, iterations=args.iterations)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.alpha is not None:
        config = replace(config, weights=replace(config.weights, alpha=args.alpha))
    return config


def cmd_optimize(args) -> int:
    model, th = _load_tree(args.tree)
    impls, ch, _ = _load_char(args.char)
    config = _overrides(_load_config(args.config), args)
    upstream = {"tree": th, "char": ch, "config": artifacts.content_hash(config.to_dict())}
    if args.resume:
        payload_up = artifacts.load(args.resume, "checkpoint")[2]
        _check_pair(th, ch, payload_up, "checkpoint")
        if payload_up.get("config") != upstream["config"]:
            raise CommandError("checkpoint was produced with a different run configuration")
        state = optimize(config, model, impls, resume=restore(args.resume, model, impls))
        best_seed = None
    else:
        res = run(config, model, impls)
        state, best_seed = res.state, res.seed
        print(f"legal objective {res.objective(config.weights):.6g}, relaxed {res.relaxed:.6g}, "
              f"gap {res.gap(config.weights):+.6g}")
    upstream["tree_path"] = str(Path(args.tree).resolve())
    upstream["char_path"] = str(Path(args.char).resolve())
    digest = checkpoint(state, args.output, upstream)
    if args.trace:
        write_trace(state.trace, args.trace)
    last = state.trace[-1] if state.trace else {}
    seed_note = f", seed {best_seed}" if best_seed is not None else ""
    print(f"{state.iteration} iterations{seed_note}: loss {last.get('loss', float('nan')):.6g} -> {args.output} [{digest}]")
    return 0


def cmd_legalize(args) -> int:
    rs = restore(args.ckpt)
    _, ck_hash, up = artifacts.load(args.ckpt, "checkpoint")
    design = legalize(rs.vars)
    sources = {"tree": up.get("tree_path"), "char": up.get("char_path")}
    if args.tree or args.char or all(sources.values()):
        model, impls, _, _, _ = _design_inputs(args, up, sources)
        design.check(model, impls)
    payload = {"design": design.to_dict(), "sources": sources}
    digest = artifacts.save(args.output, "design", payload,
                            {"tree": up.get("tree"), "char": up.get("char"), "checkpoint": ck_hash})
    print(f"legal design -> {args.output} [{digest}]")
    return 0


def _read_design(args):
    payload, _, up = artifacts.load(args.design, "design")
    design = LegalDesign.from_dict(payload["design"])
    model, impls, char_payload, _, _ = _design_inputs(args, up, payload.get("sources", {}))
    design.check(model, impls)
    return design, model, impls, char_payload


def cmd_sta(args) -> int:
    design, model, impls, _ = _read_design(args)
    config = _load_config(args.config)
    cond = config.cond()
    if args.smooth:
        state = analyze(TimingModel(model, impls), embed(design, model, impls), cond)
        report = state.report()
        report["delay"] = max(o["at"] for o in report["outputs"])
        report["mode"] = "smooth"
    else:
        report = golden_sta(design, model, impls, cond).to_dict()
        report["mode"] = "golden"
    report["area"] = golden_area(design, model, impls)
    _emit(report, args.output)
    return 0


def cmd_emit(args) -> int:
    design, model, impls, _ = _read_design(args)
    kind = "mac" if args.kind == "mac" else "multiplier"
    if (kind == "mac") != bool(model.pp.acc_width):
        raise CommandError(f"--kind {args.kind} does not match a tree with accumulator width {model.pp.acc_width}")
    ct, top = emit_design(design, model, impls, kind)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ct.v").write_text(ct)
    (out / "top.v").write_text(top)
    print(f"wrote {out / 'ct.v'} and {out / 'top.v'}")
    return 0


def cmd_verify(args) -> int:
    design, model, impls, char_payload = _read_design(args)
    lib = _library_for(char_payload, args.lib)
    report = verify(design, model, impls, lib, args.random, args.seed)
    _emit(report.to_dict(), args.output)
    return 0 if report.passed else 1


def cmd_sweep(args) -> int:
    model, th = _load_tree(args.tree)
    impls, ch, _ = _load_char(args.char)
    config = _load_config(args.config)
    if args.iterations is not None:
        config = replace(config, iterations=args.iterations)
    rows = sweep(config, model, impls, _floats(args.alpha), _ints(args.seeds), args.jobs)
    fields = ["alpha", "seed", "delay", "area", "wns", "tns", "gap", "frontier"]
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.output:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctopt", description="Differentiable compressor-tree optimization.")
    p.add_argument("--print-config", action="store_true", help="print the full default run configuration and exit")
    sub = p.add_subparsers(dest="command")

    c = sub.add_parser("characterize", help="parse a library and characterize compressor implementations")
    c.add_argument("--lib", help="liberty file (default: $CTOPT_LIBERTY or the bundled subset)")
    c.add_argument("--impls", default=str(DEFAULT_CATALOG), help="implementation catalog (JSON)")
    c.add_argument("--slew-grid", help="comma-separated input slews, ns")
    c.add_argument("--load-grid", help="comma-separated loads, fF")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_characterize)

    c = sub.add_parser("init", help="build the initial Dadda/Wallace tree")
    c.add_argument("--width-a", type=int, required=True)
    c.add_argument("--width-b", type=int, required=True)
    c.add_argument("--acc", type=int, default=0, help="accumulator width (MAC)")
    c.add_argument("--family", choices=("dadda", "wallace"), default="dadda")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_init)

    c = sub.add_parser("optimize", help="run gradient descent on the relaxed tree")
    c.add_argument("--tree", required=True)
    c.add_argument("--char", required=True)
    c.add_argument("--config")
    c.add_argument("--iterations", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--alpha", type=float)
    c.add_argument("--resume", help="continue from a checkpoint")
    c.add_argument("--trace", help="trace file (.csv or .json)")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_optimize)

    c = sub.add_parser("legalize", help="map a checkpoint to a discrete design")
    c.add_argument("--ckpt", required=True)
    c.add_argument("--tree")
    c.add_argument("--char")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_legalize)

    for name, func, hlp in (("sta", cmd_sta, "timing report of a legal design"),
                            ("emit", cmd_emit, "write structural Verilog"),
                            ("verify", cmd_verify, "functional check by simulation")):
        c = sub.add_parser(name, help=hlp)
        c.add_argument("--design", required=True)
        c.add_argument("--tree")
        c.add_argument("--char")
        c.set_defaults(func=func)
        if name == "sta":
            c.add_argument("--smooth", action="store_true", help="relaxed (log-sum-exp) timing instead of exact")
            c.add_argument("--config")
            c.add_argument("-o", "--output")
        elif name == "emit":
            c.add_argument("--kind", choices=("mult", "multiplier", "mac"), default="mult")
            c.add_argument("-o", "--output", required=True, help="output directory")
        else:
            c.add_argument("--lib")
            c.add_argument("--random", type=int, help="number of random vectors (default: exhaustive when small)")
            c.add_argument("--seed", type=int, default=0)
            c.add_argument("-o", "--output")

    c = sub.add_parser("sweep", help="area-weight/seed sweep producing a delay/area table")
    c.add_argument("--tree", required=True)
    c.add_argument("--char", required=True)
    c.add_argument("--config")
    c.add_argument("--alpha", default="1,2,3,4,5")
    c.add_argument("--seeds", default="0")
    c.add_argument("--iterations", type=int)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        print(json.dumps(RunConfig().to_dict(), indent=1))
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (ArtifactError, CommandError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
