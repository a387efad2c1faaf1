"""Command-line front end: ``lightcom keygen|upload|retrieve|pipeline|bench|demo``.

Exit codes: 0 ok, 1 protocol error, 2 usage or parse error, 3 integrity error.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections import Counter
from pathlib import Path

from .bench import BenchConfig, run_bench, write_csv
from .errors import (
    ArgumentError,
    ConfigurationError,
    ConflictError,
    IntegrityError,
    LightComError,
    PipelineError,
)
from .fpops import FpnParams, fpn_value, retrieve_fpn, upload_fpn
from .intops import pir_retrieve
from .runtime.cluster import init_system, retrieve, upload
from .runtime.persist import load_state, save_state, state_path
from .runtime.pipeline import parse_pipeline, run_pipeline

DEFAULT_UNS = "lightcom.uns"
EXIT_OK, EXIT_PROTOCOL, EXIT_USAGE, EXIT_INTEGRITY = 0, 1, 2, 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _uns_path(args) -> Path:
    return Path(args.uns or os.environ.get("LIGHTCOM_UNS_PATH") or DEFAULT_UNS)


def _common(p: argparse.ArgumentParser, lists: bool = False) -> None:
    num = _int_list if lists else int
    p.add_argument("--parties", type=num, default=[3] if lists else 3)
    p.add_argument("--modulus-bits", type=num, default=[512] if lists else 512)
    p.add_argument("--bit-length", type=num, default=[16] if lists else 16)
    p.add_argument("--batch", type=num, default=[4] if lists else 4)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scheduler", choices=("rr", "threads"), default="rr")
    p.add_argument("--uns", metavar="PATH", default=None,
                   help="untrusted-store file (default $LIGHTCOM_UNS_PATH or ./lightcom.uns)")
    p.add_argument("--insecure-toy-keys", action="store_true",
                   help="use the 35-bit toy modulus; for demonstrations only")
    p.add_argument("--user", default="ru")


def _pairs(items: list[str], source: str | None) -> list[tuple[str, str]]:
    lines = list(items)
    if source:
        text = sys.stdin.read() if source == "-" else Path(source).read_text()
        lines += [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    out = []
    for item in lines:
        rid, sep, value = item.replace(" ", "=", 1).partition("=") if "=" not in item else item.partition("=")
        if not sep or not rid.strip() or not value.strip():
            raise ArgumentError(f"expected ID=VALUE, got {item!r}")
        out.append((rid.strip(), value.strip()))
    return out


def _fpn_literal(text: str) -> tuple[int, int]:
    m, sep, e = text.partition(":")
    if not sep:
        raise ArgumentError(f"floating-point values are written MANTISSA:EXPONENT, got {text!r}")
    return int(m), int(e)


# -- subcommands -----------------------------------------------------------------

def cmd_keygen(args) -> int:
    path = _uns_path(args)
    if (path.exists() or state_path(path).exists()) and not args.force:
        raise ConfigurationError(f"{path} already holds a cluster; pass --force to replace it")
    for p in (path, state_path(path)):
        if p.exists():
            p.unlink()
    cluster, ru = init_system(args.parties, args.modulus_bits, seed=args.seed, scheduler=args.scheduler,
                              uns_path=path, insecure_toy_keys=args.insecure_toy_keys, user_id=args.user)
    save_state(cluster, {ru.user_id: ru}, path)
    print(f"key {ru.pk.key_id.hex()} ({ru.pk.bits} bits) split over {cluster.P} parties; store {path}")
    return EXIT_OK


def _open(args):
    path = _uns_path(args)
    cluster, users = load_state(path, args.scheduler)
    uid = args.user
    if uid not in users:
        raise ConfigurationError(f"no private key for user {uid!r} in {state_path(path)}")
    return path, cluster, users, users[uid]


def cmd_upload(args) -> int:
    path, cluster, users, ru = _open(args)
    pairs = _pairs(args.items, args.input)
    if not pairs:
        raise ArgumentError("nothing to upload")
    ids = [rid for rid, _ in pairs]
    if args.fpn:
        upload_fpn(cluster, ru, [_fpn_literal(v) for _, v in pairs], ids, _params(args))
    else:
        try:
            values = [int(v, 0) for _, v in pairs]
        except ValueError as exc:
            raise ArgumentError(str(exc)) from None
        upload(cluster, ru, values, ids, kind=args.kind)
    save_state(cluster, users, path)
    print(f"uploaded {len(ids)} value(s): {', '.join(ids)}")
    return EXIT_OK


def _params(args) -> FpnParams:
    return FpnParams(args.eta, args.emin, args.emax)


def cmd_retrieve(args) -> int:
    path, cluster, users, ru = _open(args)
    if args.fpn:
        params = _params(args)
        values = retrieve_fpn(cluster, ru, args.ids)
        lines = [f"{rid}={m}:{e}  ({float(fpn_value(m, e, params)):g})" for rid, (m, e) in zip(args.ids, values)]
    else:
        values = retrieve(cluster, ru, args.ids)
        lines = [f"{rid}={v}" for rid, v in zip(args.ids, values)]
    save_state(cluster, users, path)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    pipeline = parse_pipeline(Path(args.file).read_text())
    path, cluster, users, ru = _open(args)
    outs = run_pipeline(cluster, pipeline, user=ru.user_id, bit_length=args.bit_length)
    save_state(cluster, users, path)
    print(f"{len(pipeline)} step(s), epoch now {cluster.epoch_of(ru.user_id)}")
    if args.show:
        for rid, v in zip(outs, retrieve(cluster, ru, outs)):
            print(f"{rid}={v}")
        save_state(cluster, users, path)
    else:
        print("outputs: " + ", ".join(outs))
    return EXIT_OK


def cmd_bench(args) -> int:
    config = BenchConfig(
        protocols=[p.strip().upper() for p in args.protocols.split(",") if p.strip()],
        parties=args.parties, n_bits=args.modulus_bits, bit_lengths=args.bit_length,
        batches=args.batch, trials=args.trials, seed=args.seed, scheduler=args.scheduler)
    rows = run_bench(config)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
        print(f"{len(rows)} rows written to {args.out}")
    else:
        sys.stdout.write(write_csv(rows))
    return EXIT_OK


# -- demo scenarios --------------------------------------------------------------

def _phase_summary(cluster) -> str:
    """Messages sent per phase, summed over parties, in order of first appearance."""
    counts: Counter = Counter()
    order = []
    for party in cluster.parties:
        phase = "-"
        for entry in party.view:
            if entry.kind == "phase":
                phase = entry.phase
                if phase not in order:
                    order.append(phase)
            elif entry.kind == "send":
                counts[phase] += 1
    cluster.clear_transcripts()
    return " ".join(f"{ph}:{counts[ph]}" for ph in order)


def demo_min_pir(args, out) -> None:
    values = [8, 3, 5]
    cluster, ru = init_system(args.parties, args.modulus_bits, seed=args.seed,
                              scheduler=args.scheduler, insecure_toy_keys=args.insecure_toy_keys)
    ids = [f"v{k}" for k in range(1, len(values) + 1)]
    upload(cluster, ru, values, ids)
    out(f"upload {dict(zip(ids, values))}  [{_phase_summary(cluster)}]")
    run_pipeline(cluster, f"OP low = MINH {','.join(ids)} #l=8", user=ru.user_id)
    out(f"pipeline low = MINH {','.join(ids)}  [{_phase_summary(cluster)}]  epoch {cluster.epoch}")
    table = ids + ["low"]
    sel = ru.selection_vector(len(table), len(table))
    got = pir_retrieve(cluster, ru, sel, table)
    out(f"PIR over {len(table)} records  [{_phase_summary(cluster)}]")
    out(f"retrieved {got}")


def demo_fpn_sum(args, out) -> None:
    params = FpnParams()
    cluster, ru = init_system(args.parties, args.modulus_bits, seed=args.seed, scheduler=args.scheduler)
    values = [(1250, 0), (-3300, -2), (7000, 1)]
    upload_fpn(cluster, ru, values, ["a", "b", "c"], params)
    out(f"upload {[float(fpn_value(m, e, params)) for m, e in values]}  [{_phase_summary(cluster)}]")
    run_pipeline(cluster, "OP s = FADD a,b,c\nOP p = FM a,c", user=ru.user_id)
    out(f"pipeline s = FADD a,b,c; p = FM a,c  [{_phase_summary(cluster)}]")
    for rid, (m, e) in zip(["s", "p"], retrieve_fpn(cluster, ru, ["s", "p"])):
        out(f"{rid} = {m}:{e} = {float(fpn_value(m, e, params)):g}")


def demo_refresh(args, out) -> None:
    cluster, ru = init_system(args.parties, args.modulus_bits, seed=args.seed, scheduler=args.scheduler,
                              insecure_toy_keys=args.insecure_toy_keys)
    from .runtime.cluster import refresh_data_shares, refresh_key_shares

    upload(cluster, ru, [42], ["secret"])
    out(f"upload secret=42  [{_phase_summary(cluster)}]")
    for _ in range(3):
        refresh_key_shares(cluster)
        refresh_data_shares(cluster, ["secret"])
        out(f"epoch {cluster.epoch}  [{_phase_summary(cluster)}]")
    out(f"retrieved {retrieve(cluster, ru, ['secret'])[0]}")


SCENARIOS = {
    "min-pir": (demo_min_pir, "minimum of {8, 3, 5}, then a private retrieval of the result"),
    "fpn-sum": (demo_fpn_sum, "floating-point sum and product of three stored numbers"),
    "refresh": (demo_refresh, "three key and data refresh epochs around one stored value"),
}


def cmd_demo(args) -> int:
    if not args.scenario:
        for name, (_, text) in SCENARIOS.items():
            print(f"{name:10s} {text}")
        return EXIT_OK
    if args.scenario not in SCENARIOS:
        raise ArgumentError(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
    SCENARIOS[args.scenario][0](args, print)
    return EXIT_OK


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lightcom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate and split a key, start an empty store")
    _common(p)
    p.add_argument("--force", action="store_true", help="replace an existing store")
    p.set_defaults(func=cmd_keygen)

    fpn_flags = argparse.ArgumentParser(add_help=False)
    fpn_flags.add_argument("--fpn", action="store_true", help="values are MANTISSA:EXPONENT numbers")
    fpn_flags.add_argument("--eta", type=int, default=4)
    fpn_flags.add_argument("--emin", type=int, default=-8)
    fpn_flags.add_argument("--emax", type=int, default=8)

    p = sub.add_parser("upload", parents=[fpn_flags], help="share and seal values")
    _common(p)
    p.add_argument("items", nargs="*", metavar="ID=VALUE")
    p.add_argument("--input", metavar="FILE", help="file of ID=VALUE lines ('-' for stdin)")
    p.add_argument("--kind", choices=("int", "bit"), default="int")
    p.set_defaults(func=cmd_upload)

    p = sub.add_parser("retrieve", parents=[fpn_flags], help="recombine stored values")
    _common(p)
    p.add_argument("ids", nargs="+")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("pipeline", help="run a pipeline file against the store")
    _common(p)
    p.add_argument("file")
    p.add_argument("--show", action="store_true", help="retrieve and print the outputs")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bench", help="time protocols over a grid, CSV output")
    _common(p, lists=True)
    p.add_argument("--protocols", default="SM,SBM")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("demo", help="run a named end-to-end scenario")
    _common(p)
    p.add_argument("scenario", nargs="?")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IntegrityError as exc:
        print(f"lightcom: integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ArgumentError, PipelineError, ConfigurationError, ConflictError, OSError) as exc:
        print(f"lightcom: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LightComError as exc:
        print(f"lightcom: protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
