"""Verifier/prover wire protocol: newline-delimited JSON over a byte stream.

One message per line, UTF-8, with a mandatory ``v`` (protocol version) field::

    prover                           verifier
      hello {}                  ->
                                <-   hello {rounds, name}
                                <-   challenge  round_id=i
      measure {measurement}     ->                          (optional, once)
                                <-   outcome {x: 1 | 0 | null}
      estimate {estimate}       ->
                                <-   challenge round_id=i+1 ... or finish {report}

The verifier process simulates the quantum channel: it keeps theta and answers
``measure`` with a Born-rule sample. ``challenge`` carries only the round id,
so the outcome bit is the only theta-dependent datum the prover ever receives.
A second ``measure`` for the same round is refused with an error of code
``single-use-violation``; the session then continues and the round is scored
on whatever estimate follows.
"""
from __future__ import annotations

import enum
import json
import logging
import socket
import socketserver
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from .channel import Channel, Outcome, measurement_from_description
from .config import ScenarioConfig
from .prover import Prover, StrategySpec
from .verifier import RoundRecord, certify, report_document, select_theta, session_streams

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


class Kind(str, enum.Enum):
    HELLO = "hello"
    CHALLENGE = "challenge"
    MEASURE = "measure"
    OUTCOME = "outcome"
    ESTIMATE = "estimate"
    FINISH = "finish"
    ERROR = "error"


class ProtocolViolation(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


class SessionTimeout(ProtocolViolation):
    def __init__(self, message: str = "peer did not answer before the round deadline"):
        super().__init__("timeout", message)


class MeasurementRefused(Exception):
    """The verifier refused a measurement request (single-use rule)."""


@dataclass(frozen=True)
class WireMessage:
    kind: Kind
    round_id: Optional[int] = None
    payload: dict = field(default_factory=dict)
    version: int = PROTOCOL_VERSION

    def encode(self) -> bytes:
        body = {"v": self.version, "kind": self.kind.value, "round_id": self.round_id, "payload": self.payload}
        return json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False).encode() + b"\n"

    @classmethod
    def decode(cls, line: bytes) -> "WireMessage":
        try:
            body = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolViolation("malformed", str(exc)) from exc
        if not isinstance(body, dict) or "v" not in body or "kind" not in body:
            raise ProtocolViolation("malformed", "message needs 'v' and 'kind'")
        try:
            kind = Kind(body["kind"])
        except ValueError:
            raise ProtocolViolation("malformed", f"unknown kind {body['kind']!r}") from None
        payload = body.get("payload") or {}
        if not isinstance(payload, dict):
            raise ProtocolViolation("malformed", "payload must be an object")
        return cls(kind, body.get("round_id"), payload, body["v"])


def error_message(code: str, message: str, round_id: Optional[int] = None) -> WireMessage:
    return WireMessage(Kind.ERROR, round_id, {"code": code, "message": message})


# -- verifier side ----------------------------------------------------------------


class VerifierSession:
    """Transport-free verifier state machine for one session.

    Feed prover messages to :meth:`on_message`; it returns the replies.
    Violations raise :class:`ProtocolViolation`, after which the session is dead.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.records: list[RoundRecord] = []
        self.report = None
        self.error: Optional[ProtocolViolation] = None
        self._select_rng, channel_rng = session_streams(config.seed)
        self._channel = Channel(channel_rng)
        self._state = "await-hello"
        self._round = -1
        self._theta = 0.0
        self._handle = None

    @property
    def finished(self) -> bool:
        return self._state == "finished"

    def _challenge(self) -> WireMessage:
        self._round += 1
        self._theta = select_theta(self.config.policy, self._round, self._select_rng)
        self._handle = self._channel.prepare(self._theta, self._round)
        self._state = "in-round"
        return WireMessage(Kind.CHALLENGE, self._round)

    def on_message(self, msg: WireMessage) -> list[WireMessage]:
        if msg.version != PROTOCOL_VERSION:
            raise ProtocolViolation(
                "version-mismatch", f"verifier speaks v{PROTOCOL_VERSION}, prover sent v{msg.version}"
            )
        if self._state == "await-hello":
            if msg.kind is not Kind.HELLO:
                raise ProtocolViolation("out-of-order", f"expected hello, got {msg.kind.value}")
            hello = WireMessage(Kind.HELLO, None, {"rounds": self.config.rounds, "name": self.config.name})
            return [hello, self._challenge()]
        if self._state != "in-round":
            raise ProtocolViolation("out-of-order", f"session is {self._state}")
        if msg.round_id != self._round:
            raise ProtocolViolation("unknown-round", f"round {msg.round_id!r} is not the open round {self._round}")
        if msg.kind is Kind.MEASURE:
            return [self._measure(msg)]
        if msg.kind is Kind.ESTIMATE:
            return [self._estimate(msg)]
        raise ProtocolViolation("out-of-order", f"unexpected {msg.kind.value} during a round")

    def _measure(self, msg: WireMessage) -> WireMessage:
        if self._handle.consumed:
            return error_message("single-use-violation", "state already measured", self._round)
        try:
            measurement = measurement_from_description(msg.payload.get("measurement") or {})
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation("bad-request", f"invalid measurement: {exc}") from exc
        outcome = self._channel.measure(self._handle, measurement)
        return WireMessage(Kind.OUTCOME, self._round, {"x": outcome.wire})

    def _estimate(self, msg: WireMessage) -> WireMessage:
        est = msg.payload.get("estimate")
        if isinstance(est, bool) or not isinstance(est, (int, float)):
            raise ProtocolViolation("bad-request", "estimate must be a number")
        try:
            record = RoundRecord.score(self._round, self._theta, float(est))
        except ValueError as exc:
            raise ProtocolViolation("bad-request", str(exc)) from exc
        self.records.append(record)
        if self._round + 1 < self.config.rounds:
            return self._challenge()
        self._state = "finished"
        self.report = certify(self.records, self.config.k_sigma, self.config.policy.prior)
        doc = report_document(self.config.describe(), self.report)
        return WireMessage(Kind.FINISH, None, {"report": doc})


class _LineChannel:
    """Blocking newline-framed message I/O over a socket."""

    def __init__(self, sock: socket.socket, timeout: float, transcript: Optional[list] = None):
        sock.settimeout(timeout)
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self.transcript = transcript

    def send(self, msg: WireMessage) -> None:
        data = msg.encode()
        if self.transcript is not None:
            self.transcript.append(("send", data))
        self._sock.sendall(data)

    def recv(self) -> WireMessage:
        try:
            line = self._rfile.readline()
        except socket.timeout as exc:
            raise SessionTimeout() from exc
        if not line:
            raise ProtocolViolation("closed", "peer closed the connection")
        if self.transcript is not None:
            self.transcript.append(("recv", line))
        return WireMessage.decode(line)

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()


def serve_connection(
    sock: socket.socket,
    config: ScenarioConfig,
    on_complete: Optional[Callable[[VerifierSession], None]] = None,
) -> VerifierSession:
    """Run one verifier session on a connected socket."""
    conn = _LineChannel(sock, config.timeout)
    session = VerifierSession(config)
    try:
        while not session.finished:
            msg = conn.recv()
            for reply in session.on_message(msg):
                conn.send(reply)
        if on_complete is not None:
            on_complete(session)
    except ProtocolViolation as exc:
        log.warning("session aborted after %d rounds: %s", len(session.records), exc)
        try:
            conn.send(error_message(exc.code, str(exc)))
        except OSError:
            pass
        session.error = exc
    finally:
        conn.close()
    return session


class VerifierServer(socketserver.ThreadingTCPServer):
    """Hosts independent verifier sessions, one per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, config: ScenarioConfig, on_complete=None, on_abort=None):
        self.config = config
        self.on_complete = on_complete
        self.on_abort = on_abort
        super().__init__(address, _Handler)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: VerifierServer = self.server
        session = serve_connection(self.request, server.config, server.on_complete)
        if session.error is not None and server.on_abort is not None:
            server.on_abort(session)


def serve_verifier(address, config: ScenarioConfig, on_complete=None, on_abort=None) -> VerifierServer:
    """Bind a verifier server; call ``serve_forever()`` or ``handle_request()`` on it."""
    return VerifierServer(tuple(address), config, on_complete, on_abort)


# -- prover side ------------------------------------------------------------------


def prove_client(
    address,
    strategy: StrategySpec,
    timeout: float = 30.0,
    transcript: Optional[list] = None,
    version: int = PROTOCOL_VERSION,
) -> dict:
    """Connect to a verifier, play every round with ``strategy``, return the report document."""
    sock = socket.create_connection(tuple(address), timeout=timeout)
    conn = _LineChannel(sock, timeout, transcript)
    try:
        conn.send(WireMessage(Kind.HELLO, None, {"role": "prover"}, version))
        msg = conn.recv()
        _raise_if_error(msg)
        if msg.kind is not Kind.HELLO:
            raise ProtocolViolation("out-of-order", f"expected hello, got {msg.kind.value}")
        prover = strategy.start()
        while True:
            msg = conn.recv()
            _raise_if_error(msg)
            if msg.kind is Kind.FINISH:
                return msg.payload["report"]
            if msg.kind is not Kind.CHALLENGE:
                raise ProtocolViolation("out-of-order", f"expected challenge, got {msg.kind.value}")
            estimate = _play_round(conn, prover, msg.round_id)
            conn.send(WireMessage(Kind.ESTIMATE, msg.round_id, {"estimate": estimate}))
    finally:
        conn.close()


def _raise_if_error(msg: WireMessage) -> None:
    if msg.kind is Kind.ERROR:
        raise ProtocolViolation(msg.payload.get("code", "error"), msg.payload.get("message", ""))


def _play_round(conn: _LineChannel, prover: Prover, round_id: int) -> float:
    def measure(measurement):
        conn.send(WireMessage(Kind.MEASURE, round_id, {"measurement": measurement.describe()}))
        reply = conn.recv()
        if reply.kind is Kind.ERROR and reply.payload.get("code") == "single-use-violation":
            raise MeasurementRefused(reply.payload.get("message", ""))
        _raise_if_error(reply)
        if reply.kind is not Kind.OUTCOME or reply.round_id != round_id:
            raise ProtocolViolation("out-of-order", f"expected outcome for round {round_id}")
        return Outcome.from_wire(reply.payload.get("x"))

    try:
        return prover.next_estimate(measure)
    except MeasurementRefused:
        return prover.fallback_estimate()


def run_over_stream(config: ScenarioConfig, strategy: Optional[StrategySpec] = None, transcript=None):
    """Serve one session on an ephemeral local port and play it; return (session, report doc).

    On failure the raised :class:`ProtocolViolation` carries the verifier's
    completed rounds as ``records``.
    """
    done: dict = {}
    server = serve_verifier(("127.0.0.1", 0), config)
    worker = threading.Thread(target=lambda: done.setdefault("session", _accept_one(server, config)), daemon=True)
    worker.start()
    try:
        doc = prove_client(server.server_address, strategy or config.strategy, config.timeout, transcript)
    except ProtocolViolation as exc:
        worker.join(config.timeout + 5)
        exc.records = list(done["session"].records) if "session" in done else []
        raise
    finally:
        worker.join(config.timeout + 5)
        server.server_close()
    return done["session"], doc


def _accept_one(server: VerifierServer, config: ScenarioConfig) -> VerifierSession:
    sock, _ = server.socket.accept()
    return serve_connection(sock, config)
