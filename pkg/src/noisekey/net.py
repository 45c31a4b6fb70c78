"""Run a session between two processes over a TCP connection.

The initiator (A) connects and opens with HELLO; the responder (B) checks
the K0 fingerprint and parameters and answers with its own HELLO, or with
RESTART and a reason.  Each cycle then exchanges, in this order::

    sender -> PHASES, sender -> DIGESTS, receiver -> DIGESTS, sender -> AMPLIFY

so both directions are strictly ordered and a tap on either side records
the same byte stream.  When the next cycle cannot run, its sender emits
RESTART instead of PHASES.
"""

from __future__ import annotations

import logging
import socket
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversary import exhaustive_attack
from .errors import ConfigMismatch, FingerprintMismatch, ProtocolViolation
from .noise import EntropySource
from .protocol import (
    Endpoint,
    PhaseSignal,
    Role,
    SessionConfig,
    kept_mask,
    sender_for,
)
from .wire import (
    MAX_PHASES,
    Frame,
    FrameType,
    Hello,
    amplify_payload,
    check_hello,
    digests_payload,
    encode_frame,
    hello,
    iter_frames,
    parse_amplify,
    parse_digests,
    parse_phases,
    phases_payload,
    read_frame,
    restart_payload,
    snap_config,
)

log = logging.getLogger(__name__)

HANDSHAKE_STREAM = 2
__all__ = ["MAX_PHASES", "NetResult", "run_endpoint", "serve", "connect",
           "parse_transcript", "attack_transcript", "write_transcript"]


@dataclass
class NetResult:
    keystream: np.ndarray
    status: str
    cycles_run: int
    frames: list[Frame] = field(default_factory=list)
    raw: list[bytes] = field(default_factory=list)
    reason: str | None = None

    def transcript(self) -> bytes:
        return b"".join(self.raw)


class _Channel:
    def __init__(self, sock: socket.socket, session_id: bytes = b"\0" * 8):
        self.sock = sock
        self.reader = sock.makefile("rb")
        self.session_id = session_id
        self.frames: list[Frame] = []
        self.raw: list[bytes] = []

    def send(self, ftype: FrameType, cycle: int, payload: bytes = b""):
        frame = Frame(ftype, self.session_id, cycle, payload)
        data = encode_frame(frame)
        self.sock.sendall(data)
        self.frames.append(frame)
        self.raw.append(data)

    def recv(self, *expected: FrameType) -> Frame:
        frame, data = read_frame(self.reader)
        self.frames.append(frame)
        self.raw.append(data)
        if frame.type is FrameType.RESTART and FrameType.RESTART not in expected:
            reason = frame.payload.decode("utf-8", "replace")
            raise _PeerRestart(reason)
        if frame.type not in expected:
            raise ProtocolViolation(f"expected {[e.name for e in expected]}, got {frame.type.name}")
        if frame.session_id != self.session_id:
            raise ProtocolViolation("frame from a different session")
        return frame


class _PeerRestart(Exception):
    pass


def _raise_handshake(reason: str):
    if reason.startswith("fingerprint"):
        raise FingerprintMismatch(reason)
    raise ConfigMismatch(reason)


def _hello_for(k0, cfg: SessionConfig, cycles: int, salt: bytes) -> Hello:
    return hello(k0, salt, cfg.wheel, cfg.noise, L=cfg.L, L_min=cfg.L_min,
                 block_size=cfg.block_size, cycles=cycles, f_retain=cfg.f_retain)


def _snapped(cfg: SessionConfig) -> SessionConfig:
    wheel, noise = snap_config(cfg.wheel, cfg.noise)
    return SessionConfig(wheel, noise, cfg.L, cfg.L_min, cfg.f_retain, cfg.block_size)


def run_endpoint(sock: socket.socket, role: Role, k0, cfg: SessionConfig, cycles: int,
                 source: EntropySource, handshake: EntropySource | None = None) -> NetResult:
    """Drive one endpoint of a networked session to completion.

    ``handshake`` supplies the salt and session id and is used by the
    initiator only.  Raises :class:`FingerprintMismatch` or
    :class:`ConfigMismatch` if the handshake fails; transport problems
    surface as ``OSError``/``EOFError`` or a wire error.
    """
    role = Role(role)
    cfg = _snapped(cfg)
    k0 = np.asarray(k0, dtype=np.uint8)
    if role is Role.A:
        hs = handshake or source.spawn(HANDSHAKE_STREAM)
        salt = hs.words(1).astype(">u8").tobytes()
        ch = _Channel(sock, hs.words(1).astype(">u8").tobytes())
        mine = _hello_for(k0, cfg, cycles, salt)
        ch.send(FrameType.HELLO, 0, mine.to_payload())
        try:
            theirs = Hello.from_payload(ch.recv(FrameType.HELLO).payload)
        except _PeerRestart as exc:
            _raise_handshake(str(exc))
        check_hello(mine, theirs)
    else:
        ch = _Channel(sock)
        frame, data = read_frame(ch.reader)
        ch.frames.append(frame)
        ch.raw.append(data)
        if frame.type is not FrameType.HELLO:
            raise ProtocolViolation(f"session must open with HELLO, got {frame.type.name}")
        ch.session_id = frame.session_id
        theirs = Hello.from_payload(frame.payload)
        mine = _hello_for(k0, cfg, cycles, theirs.salt)
        try:
            check_hello(mine, theirs)
        except FingerprintMismatch as exc:
            ch.send(FrameType.RESTART, 0, restart_payload(f"fingerprint mismatch: {exc}"))
            raise
        except ConfigMismatch as exc:
            ch.send(FrameType.RESTART, 0, restart_payload(f"config mismatch: {exc}"))
            raise
        ch.send(FrameType.HELLO, 0, mine.to_payload())

    ep = Endpoint(role, k0, cfg, source)
    status, reason = "complete", None
    for j in range(cycles):
        reason = ep.restart_reason()
        sending = sender_for(j) is role
        if reason is not None:
            status = "restart-required"
            if sending:
                ch.send(FrameType.RESTART, j, restart_payload(reason))
            else:
                ch.recv(FrameType.RESTART)
            break
        if sending:
            signal = ep.emit()
            payload = phases_payload(signal.samples)
            ch.send(FrameType.PHASES, j, payload)
            ch.send(FrameType.DIGESTS, j, digests_payload(ep.digests()))
            remote = parse_digests(ch.recv(FrameType.DIGESTS).payload)
            ep.reconcile(remote)
            seed = ep.draw_amplify_seed()
            ch.send(FrameType.AMPLIFY, j, amplify_payload(seed))
        else:
            frame = ch.recv(FrameType.PHASES)
            if frame.cycle_index != j:
                raise ProtocolViolation(f"PHASES for cycle {frame.cycle_index}, expected {j}")
            ep.receive(PhaseSignal(parse_phases(frame.payload), j, role.peer))
            remote = parse_digests(ch.recv(FrameType.DIGESTS).payload)
            ch.send(FrameType.DIGESTS, j, digests_payload(ep.digests()))
            ep.reconcile(remote)
            seed = parse_amplify(ch.recv(FrameType.AMPLIFY).payload)
        ep.complete(seed)
        log.info("cycle %d done: distilled %d bits", j, ep.last_distilled)
    return NetResult(ep.keystream(), status, ep.cycle_index, ch.frames, ch.raw, reason)


def serve(address: tuple[str, int], role_args: dict, on_listen=None, sessions: int = 1):
    """Accept ``sessions`` connections one after another and run each."""
    results = []
    with socket.create_server(address) as srv:
        if on_listen is not None:
            on_listen(srv.getsockname())
        for _ in range(sessions):
            conn, _ = srv.accept()
            with conn:
                results.append(run_endpoint(conn, Role.B, **role_args))
    return results


def connect(address: tuple[str, int], role_args: dict, timeout: float = 30.0) -> NetResult:
    with socket.create_connection(address, timeout=timeout) as sock:
        sock.settimeout(None)
        return run_endpoint(sock, Role.A, **role_args)


# -- offline replay -----------------------------------------------------------

@dataclass
class TranscriptView:
    hello: Hello
    signals: list[PhaseSignal]
    masks: list[np.ndarray]


def parse_transcript(frames) -> TranscriptView:
    """Recover what an eavesdropper sees from a recorded frame sequence."""
    if isinstance(frames, (bytes, bytearray)):
        frames = list(iter_frames(bytes(frames)))
    frames = list(frames)
    if not frames or frames[0].type is not FrameType.HELLO:
        raise ProtocolViolation("transcript must start with HELLO")
    hello_msg = Hello.from_payload(frames[0].payload)
    signals: list[PhaseSignal] = []
    digests: dict[int, list] = {}
    for f in frames[1:]:
        if f.type is FrameType.PHASES:
            signals.append(PhaseSignal(parse_phases(f.payload), f.cycle_index,
                                       sender_for(f.cycle_index)))
        elif f.type is FrameType.DIGESTS:
            digests.setdefault(f.cycle_index, []).append(parse_digests(f.payload))
    masks = []
    complete = []
    for sig in signals:
        pair = digests.get(sig.cycle_index, [])
        if len(pair) != 2:
            break
        m = kept_mask(pair[0], pair[1])
        masks.append(np.repeat(m, hello_msg.block_size)[:len(sig)])
        complete.append(sig)
    return TranscriptView(hello_msg, complete, masks)


def attack_transcript(frames, k0_len: int, true_key=None):
    """Exhaustive K0 search against a recorded (or live) transcript."""
    view = parse_transcript(frames)
    return exhaustive_attack(view.signals, view.hello.wheel(), view.hello.noise(),
                             k0_len, true_key=true_key, kept_masks=view.masks)


def write_transcript(path, result: NetResult):
    Path(path).write_bytes(result.transcript())
