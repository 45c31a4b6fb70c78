"""Command-line entry point: ``noisekey <command> [flags]``.

Exit codes: 0 success, 2 bad flags or configuration, 3 key exhausted or
restart required, 4 handshake refused (K0 fingerprint or parameters),
5 transport failure, 6 corrupt one-time-pad sidecar.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import net
from .adversary import (
    MAX_ATTACK_KEY_BITS,
    brute_force_count_sector,
    brute_force_count_uniform,
    delta_I,
    exhaustive_attack,
    public_masks,
)
from .constellation import WheelConfig
from .errors import (
    ContractViolation,
    DomainError,
    HandshakeError,
    KeyExhausted,
    ProtocolViolation,
    WireError,
)
from .keyfile import KeyFileError, read_key, write_key
from .noise import EntropySource, NoiseModel, sigma_from_coverage, sigma_from_photons
from .otp import PadFile, SidecarCorrupt
from .protocol import (
    SessionConfig,
    cycle_retain,
    geometric_ledger,
    retained_length,
    run_session,
)
from .wire import check_quantization_margin

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EXHAUSTED = 3
EXIT_HANDSHAKE = 4
EXIT_TRANSPORT = 5
EXIT_SIDECAR = 6

STREAM_A, STREAM_B, STREAM_K0 = 0, 1, 3

log = logging.getLogger("noisekey")


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def parse_wheel(text: str) -> WheelConfig:
    kind, _, value = text.partition(":")
    try:
        if kind == "uniform":
            return WheelConfig.uniform(int(value))
        if kind == "sector":
            return WheelConfig.sector(float(value))
    except (ValueError, ContractViolation) as exc:
        raise UsageError(f"bad --wheel {text!r}: {exc}") from None
    raise UsageError(f"--wheel must be uniform:M or sector:DPHI, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def noise_from_args(args, wheel: WheelConfig) -> NoiseModel:
    try:
        if args.photons is not None:
            return sigma_from_photons(args.photons)
        if args.coverage is not None:
            return sigma_from_coverage(args.coverage, wheel.M)
        return NoiseModel(args.sigma)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _add_noise(p, default_sigma: float | None = 0.1):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sigma", type=float, default=default_sigma,
                   help="phase-noise standard deviation in radians")
    g.add_argument("--photons", type=float, help="mean photon number; sigma = sqrt(2/n)")
    g.add_argument("--coverage", type=float, help="bases covered; sigma = pi*N/M")


def _add_session(p, cycles: int = 1):
    p.add_argument("--cycles", type=int, default=cycles)
    p.add_argument("--L", type=int, default=1000, help="bits per cycle")
    p.add_argument("--L-min", dest="L_min", type=int, default=0)
    p.add_argument("--wheel", default="sector:0.1", help="uniform:M or sector:DPHI")
    p.add_argument("--f-retain", dest="f_retain", type=float, default=0.9991)
    p.add_argument("--block", type=int, default=64, help="reconciliation block size")
    p.add_argument("--seed", type=int)
    _add_noise(p)


def _session_config(args) -> SessionConfig:
    wheel = parse_wheel(args.wheel)
    noise = noise_from_args(args, wheel)
    try:
        check_quantization_margin(wheel, noise)
        return SessionConfig(wheel, noise, args.L, args.L_min, args.f_retain, args.block)
    except ContractViolation as exc:
        raise UsageError(str(exc)) from None


def _load_k0(path) -> np.ndarray:
    try:
        return read_key(path)
    except (OSError, KeyFileError) as exc:
        raise UsageError(f"cannot read key {path}: {exc}") from None


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args, out) -> int:
    cfg = _session_config(args)
    master = EntropySource.from_env(args.seed)
    rows = []
    if args.ledger_only:
        ledger, cycles_run, status = geometric_ledger(cfg.L, cfg.f_retain, args.cycles, cfg.L_min)
        ber = None
        for j in range(cycles_run):
            rows.append((j, cfg.L, cfg.L, retained_length(cfg.L, cycle_retain(cfg.f_retain, j)), ""))
        keystream = None
    else:
        k0 = _load_k0(args.k0) if args.k0 else master.spawn(STREAM_K0).bits(cfg.key_bits_per_cycle)
        res = run_session(cfg, args.cycles, k0, master.spawn(STREAM_A), master.spawn(STREAM_B))
        ledger, cycles_run, status = res.ledger, res.cycles_run, res.status
        ber = res.bit_errors / ledger.raw_shared if ledger.raw_shared else 0.0
        rows = [(r.cycle_index, r.raw, r.kept, r.distilled, fmt(r.ber)) for r in res.records]
        keystream = res.keystream_a
        if res.reason:
            print(f"restart: {res.reason}", file=sys.stderr)
    print(f"wheel {cfg.wheel.describe()}", file=out)
    print(f"sigma_phi {fmt(cfg.noise.sigma_phi)}", file=out)
    print(f"status {status}", file=out)
    print(f"cycles_run {cycles_run}", file=out)
    print(f"raw_shared {ledger.raw_shared}", file=out)
    print(f"distilled {ledger.distilled}", file=out)
    print(f"discarded_reconciliation {ledger.discarded_reconciliation}", file=out)
    print(f"discarded_privacy {ledger.discarded_privacy}", file=out)
    print(f"distilled_fraction {fmt(ledger.distilled_fraction)}", file=out)
    print(f"bob_ber {'n/a' if ber is None else fmt(ber)}", file=out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cycle", "raw", "kept", "distilled", "ber"])
            w.writerows(rows)
    if args.out_keystream and keystream is not None:
        write_key(args.out_keystream, keystream)
    return EXIT_EXHAUSTED if status == "restart-required" else EXIT_OK


# -- attack -------------------------------------------------------------------

def _theory_cost(wheel: WheelConfig, sigma: float, k0_len: int) -> str:
    if wheel.mode == "sector":
        return str(brute_force_count_sector(k0_len))
    n = sigma * wheel.M / math.pi
    r = round(n)
    if r >= 1 and abs(n - r) < 1e-9 and r & (r - 1) == 0:
        return str(brute_force_count_uniform(k0_len, r))
    return "n/a"


def report_json(report) -> str:
    doc = dict(report.summary())
    doc["log_likelihood_sha256"] = hashlib.sha256(
        np.ascontiguousarray(report.log_likelihood, dtype=">f8").tobytes()).hexdigest()
    return json.dumps(doc, sort_keys=True) + "\n"


_ATTACK_HEADER = ["k0_len", "wheel", "sigma", "transcript_bits", "candidates",
                  "theory_cost", "true_rank", "posterior_entropy"]


def _attack_row(k0_len, wheel, sigma, rep):
    return [k0_len, wheel.describe(), fmt(float(sigma)), rep.transcript_bits, rep.candidates,
            _theory_cost(wheel, sigma, k0_len), rep.true_rank, fmt(rep.posterior_entropy)]


def simulate_attack(k0_len, wheel, noise, transcript_bits, master: EntropySource):
    if k0_len % wheel.k_M or k0_len < wheel.k_M:
        raise UsageError(f"--k0-len must be a positive multiple of k_M = {wheel.k_M}")
    L = k0_len // wheel.k_M
    cfg = SessionConfig(wheel, noise, L=L, f_retain=1.0, block_size=L)
    k0 = master.spawn(STREAM_K0).bits(k0_len)
    cycles = max(1, -(-transcript_bits // L))
    res = run_session(cfg, cycles, k0, master.spawn(STREAM_A), master.spawn(STREAM_B))
    signals = [r.signal for r in res.records]
    return exhaustive_attack(signals, wheel, noise, k0_len, true_key=k0,
                             kept_masks=public_masks(res.records, L))


def cmd_attack(args, out) -> int:
    if args.k0_len is not None and not 0 <= args.k0_len <= MAX_ATTACK_KEY_BITS:
        raise UsageError(f"--k0-len must be at most {MAX_ATTACK_KEY_BITS}")
    w = csv.writer(out, lineterminator="\n", delimiter="\t")
    if args.transcript:
        true_key = _load_k0(args.k0) if args.k0 else None
        k0_len = args.k0_len if args.k0_len is not None else (
            true_key.size if true_key is not None else None)
        if k0_len is None:
            raise UsageError("replay needs --k0 or --k0-len")
        if not k0_len <= MAX_ATTACK_KEY_BITS:
            raise UsageError(f"K0 of {k0_len} bits exceeds the {MAX_ATTACK_KEY_BITS}-bit limit")
        view = net.parse_transcript(Path(args.transcript).read_bytes())
        rep = exhaustive_attack(view.signals, view.hello.wheel(), view.hello.noise(),
                                k0_len, true_key=true_key, kept_masks=view.masks)
        w.writerow(_ATTACK_HEADER)
        w.writerow(_attack_row(k0_len, view.hello.wheel(), view.hello.noise().sigma_phi, rep))
        if args.json:
            Path(args.json).write_text(report_json(rep))
        return EXIT_OK

    k0_len = 8 if args.k0_len is None else args.k0_len
    sigmas = _floats(args.sigma) if args.sigma else [0.1]
    if args.dphi:
        wheels = [WheelConfig.sector(d) for d in _floats(args.dphi)]
    else:
        wheels = [parse_wheel(args.wheel)]
    bits_list = [int(b) for b in _floats(args.transcript_bits)]
    if not (sigmas and wheels and bits_list):
        raise UsageError("empty sweep")
    master = EntropySource.from_env(args.seed)
    w.writerow(_ATTACK_HEADER)
    for i, (wheel, sigma, n_bits) in enumerate(itertools.product(wheels, sigmas, bits_list)):
        try:
            noise = NoiseModel(sigma)
        except DomainError as exc:
            raise UsageError(str(exc)) from None
        rep = simulate_attack(k0_len, wheel, noise, n_bits, master.spawn(i))
        w.writerow(_attack_row(k0_len, wheel, sigma, rep))
        if args.json and i == 0:
            Path(args.json).write_text(report_json(rep))
    return EXIT_OK


# -- info ---------------------------------------------------------------------

def info_rows(sigmas, dphis, Ms, ratios, samples, master):
    grid = []
    for s in sigmas:
        for d in dphis:
            grid.append((s, WheelConfig.sector(d)))
        for r in ratios:
            grid.append((s, WheelConfig.sector(s * r)))
        for m in Ms:
            grid.append((s, WheelConfig.uniform(int(m))))
    rows = []
    for i, (s, wheel) in enumerate(grid):
        est = delta_I(wheel, NoiseModel(s), samples, master.spawn(i))
        param = wheel.delta_phi1 if wheel.mode == "sector" else wheel.M
        rows.append([fmt(float(s)), wheel.mode, fmt(param), fmt(est.I_B), fmt(est.I_E),
                     fmt(est.delta_I), fmt(est.std_err)])
    return rows


INFO_HEADER = ["sigma", "wheel", "param", "I_B", "I_E", "delta_I", "std_err"]


def cmd_info(args, out) -> int:
    sigmas = _floats(args.sigmas)
    dphis = _floats(args.dphis) if args.dphis else []
    Ms = _floats(args.Ms) if args.Ms else []
    ratios = _floats(args.dphi_ratios) if args.dphi_ratios else []
    if not sigmas or not (dphis or Ms or ratios):
        raise UsageError("empty grid: give --sigmas and at least one of --dphis/--Ms/--dphi-ratios")
    try:
        rows = info_rows(sigmas, dphis, Ms, ratios, args.samples,
                         EntropySource.from_env(args.seed))
    except (ContractViolation, DomainError) as exc:
        raise UsageError(str(exc)) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INFO_HEADER)
    w.writerows(rows)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        out.write(buf.getvalue())
    return EXIT_OK


# -- networked ----------------------------------------------------------------

def _address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise UsageError(f"address must be HOST:PORT, got {text!r}") from None


def _finish_networked(args, res: net.NetResult, k0, out) -> int:
    if args.tap:
        net.write_transcript(args.tap, res)
    if args.out_keystream:
        write_key(args.out_keystream, res.keystream)
    if args.report:
        if k0.size > MAX_ATTACK_KEY_BITS:
            print(f"report skipped: K0 of {k0.size} bits exceeds the attack limit",
                  file=sys.stderr)
        else:
            rep = net.attack_transcript(res.frames, k0.size, true_key=k0)
            Path(args.report).write_text(report_json(rep))
    print(f"status {res.status}", file=out)
    print(f"cycles_run {res.cycles_run}", file=out)
    print(f"keystream_bits {res.keystream.size}", file=out)
    return EXIT_EXHAUSTED if res.status == "restart-required" else EXIT_OK


def _role_args(args):
    cfg = _session_config(args)
    if cfg.L > net.MAX_PHASES:
        raise UsageError(f"--L {cfg.L} exceeds {net.MAX_PHASES} phases per frame")
    k0 = _load_k0(args.k0)
    return cfg, k0


def cmd_serve(args, out) -> int:
    cfg, k0 = _role_args(args)
    master = EntropySource.from_env(args.seed)

    def announce(sockname):
        print(f"listening on {sockname[0]}:{sockname[1]}", file=out, flush=True)
        if args.port_file:
            Path(args.port_file).write_text(f"{sockname[1]}\n")

    results = net.serve(_address(args.listen),
                        dict(k0=k0, cfg=cfg, cycles=args.cycles, source=master.spawn(STREAM_B)),
                        on_listen=announce)
    return _finish_networked(args, results[-1], k0, out)


def cmd_connect(args, out) -> int:
    cfg, k0 = _role_args(args)
    master = EntropySource.from_env(args.seed)
    res = net.connect(_address(args.peer),
                      dict(k0=k0, cfg=cfg, cycles=args.cycles, source=master.spawn(STREAM_A),
                           handshake=master.spawn(net.HANDSHAKE_STREAM)))
    return _finish_networked(args, res, k0, out)


# -- keys and pads ------------------------------------------------------------

def cmd_otp(args, out) -> int:
    pad = PadFile(args.key)
    data = Path(args.input).read_bytes()
    result = pad.apply(data)
    Path(args.output).write_bytes(result)
    print(f"pad_bits_spent {pad.cursor} of {pad.pad.bits.size}", file=out)
    return EXIT_OK


def cmd_keygen(args, out) -> int:
    if args.bits < 0:
        raise UsageError("--bits must be non-negative")
    bits = EntropySource.from_env(args.seed).spawn(STREAM_K0).bits(args.bits)
    write_key(args.out, bits, hex_text=args.hex)
    print(f"wrote {args.bits} bits to {args.out}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noisekey", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run both endpoints in-process")
    _add_session(s)
    s.add_argument("--k0", help="K0 key file (default: drawn from the seed)")
    s.add_argument("--out-keystream", dest="out_keystream")
    s.add_argument("--csv")
    s.add_argument("--ledger-only", dest="ledger_only", action="store_true",
                   help="bit-count accounting only, no bit-level simulation")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("attack", help="exhaustive K0 search on a desk-scale transcript")
    a.add_argument("--k0-len", dest="k0_len", type=int)
    a.add_argument("--wheel", default="sector:0.1")
    a.add_argument("--dphi", help="sector spacing(s), comma-separated; overrides --wheel")
    a.add_argument("--sigma", default="0.1", help="noise width(s), comma-separated")
    a.add_argument("--transcript-bits", dest="transcript_bits", default="64")
    a.add_argument("--transcript", help="replay a recorded frame transcript instead")
    a.add_argument("--k0", help="true K0 (for the rank column when replaying)")
    a.add_argument("--json", help="write the (first) report as JSON")
    a.add_argument("--seed", type=int)
    a.set_defaults(func=cmd_attack)

    i = sub.add_parser("info", help="mutual-information sweep as CSV")
    i.add_argument("--sigmas", default="0.4")
    i.add_argument("--dphis")
    i.add_argument("--Ms")
    i.add_argument("--dphi-ratios", dest="dphi_ratios",
                   help="sector spacing as multiples of sigma")
    i.add_argument("--samples", type=int, default=100_000)
    i.add_argument("--seed", type=int)
    i.add_argument("--out")
    i.set_defaults(func=cmd_info)

    for name, func, flag in (("serve", cmd_serve, "--listen"), ("connect", cmd_connect, "--peer")):
        n = sub.add_parser(name, help=f"networked session ({'responder' if name == 'serve' else 'initiator'})")
        _add_session(n, cycles=2)
        n.add_argument(flag, dest=flag[2:], required=True, help="HOST:PORT")
        n.add_argument("--k0", required=True)
        n.add_argument("--out-keystream", dest="out_keystream")
        n.add_argument("--tap", help="record every frame to this file")
        n.add_argument("--report", help="write the attack report on this session as JSON")
        if name == "serve":
            n.add_argument("--port-file", dest="port_file")
        n.set_defaults(func=func)

    o = sub.add_parser("otp", help="one-time-pad a file with a distilled keystream")
    o.add_argument("--key", required=True)
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--out", dest="output", required=True)
    o.set_defaults(func=cmd_otp)

    k = sub.add_parser("keygen", help="write a fresh K0 key file")
    k.add_argument("--bits", type=int, required=True)
    k.add_argument("--out", required=True)
    k.add_argument("--hex", action="store_true")
    k.add_argument("--seed", type=int)
    k.set_defaults(func=cmd_keygen)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"noisekey: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyExhausted as exc:
        print(f"noisekey: key exhausted: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except SidecarCorrupt as exc:
        print(f"noisekey: {exc}", file=sys.stderr)
        return EXIT_SIDECAR
    except HandshakeError as exc:
        print(f"noisekey: handshake refused: {exc}", file=sys.stderr)
        return EXIT_HANDSHAKE
    except (OSError, EOFError, WireError, ProtocolViolation) as exc:
        print(f"noisekey: transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except KeyFileError as exc:
        print(f"noisekey: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
