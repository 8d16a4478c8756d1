"""Multi-session serving gateway over a length-prefixed binary protocol.

Framing: ``u32 little-endian payload length | u8 message type | payload``.
Client messages: 0x01 Start (JSON), 0x02 Audio (16-byte session id + raw
PCM s16le), 0x03 End (16-byte session id).  Server messages: 0x80 Ack,
0x81 FrameResult, 0x82 FinalVerdict, 0x83 Error (all JSON).

Sessions are multiplexed by id: many sessions per connection, many
connections per gateway, one shared immutable model.  Per-session work is
strictly ordered; cross-session work runs in parallel on a thread pool.
"""

from __future__ import annotations

import asyncio
import json
import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .engine import DetectionEngine
from .errors import AmdError, BadParams, DuplicateSession, SessionFinalized, UnknownSession
from .frontend import SUPPORTED_RATES, PcmChunk
from .session import CACHED, STATEFUL, DetectionSession, FrameResult, SessionParams, Verdict
from .silence import SilenceConfig

MSG_START = 0x01
MSG_AUDIO = 0x02
MSG_END = 0x03
MSG_ACK = 0x80
MSG_FRAME_RESULT = 0x81
MSG_FINAL_VERDICT = 0x82
MSG_ERROR = 0x83

SESSION_ID_BYTES = 16
MAX_PAYLOAD = 1 << 24


class ProtocolError(AmdError):
    """The byte stream cannot be parsed further; the connection must close."""


def encode_message(msg_type: int, payload: bytes) -> bytes:
    return struct.pack("<IB", len(payload), msg_type) + payload


async def read_message(reader: asyncio.StreamReader) -> tuple[int, bytes] | None:
    """Read one framed message; None on clean EOF at a message boundary."""
    try:
        header = await reader.readexactly(4)
    except asyncio.IncompleteReadError as exc:
        if exc.partial:
            raise ProtocolError("connection closed mid-header") from exc
        return None
    (length,) = struct.unpack("<I", header)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds limit {MAX_PAYLOAD}")
    try:
        type_byte = await reader.readexactly(1)
        payload = await reader.readexactly(length) if length else b""
    except asyncio.IncompleteReadError as exc:
        raise ProtocolError("connection closed mid-message") from exc
    return type_byte[0], payload


def _error(code: str, message: str) -> tuple[int, bytes]:
    payload = json.dumps({"code": code, "message": message}).encode("utf-8")
    return MSG_ERROR, payload


def _frame_result_payload(session_id_hex: str, result: FrameResult) -> bytes:
    return json.dumps({
        "session_id": session_id_hex,
        "frame_index": result.frame_index,
        "end_ms": result.end_ms,
        "probability": result.probability,
        "confidence": result.confidence,
        "label": result.label,
        "silent": result.silent,
    }).encode("utf-8")


def _verdict_payload(session_id_hex: str, verdict: Verdict) -> bytes:
    return json.dumps({
        "session_id": session_id_hex,
        "label": verdict.label,
        "confidence": verdict.confidence,
        "elapsed_ms": verdict.elapsed_ms,
        "reason": verdict.reason,
        "frames_processed": verdict.frames_processed,
        "frames_skipped_silent": verdict.frames_skipped_silent,
    }).encode("utf-8")


class _SessionEntry:
    __slots__ = ("session", "sample_rate_hz", "mode")

    def __init__(self, session: DetectionSession, sample_rate_hz: int, mode: str) -> None:
        self.session = session
        self.sample_rate_hz = sample_rate_hz
        self.mode = mode


class GatewayCore:
    """Transport-independent message handling; one instance per gateway."""

    def __init__(self, engine: DetectionEngine, default_mode: str = CACHED) -> None:
        self._engine = engine
        self._default_mode = default_mode
        self.sessions: dict[bytes, _SessionEntry] = {}

    def handle_message(self, msg_type: int, payload: bytes) -> list[tuple[int, bytes]]:
        try:
            if msg_type == MSG_START:
                return self.handle_start(payload)
            if msg_type == MSG_AUDIO:
                return self.handle_audio(payload)
            if msg_type == MSG_END:
                return self.handle_end(payload)
            return [_error("BadMessage", f"unknown message type 0x{msg_type:02x}")]
        except AmdError as exc:
            return [_error(type(exc).__name__, str(exc))]

    def handle_start(self, payload: bytes) -> list[tuple[int, bytes]]:
        try:
            request = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BadParams(f"start payload is not valid JSON: {exc}") from exc
        if not isinstance(request, dict):
            raise BadParams("start payload must be a JSON object")

        session_id = _parse_session_id(request.get("session_id"))
        if session_id in self.sessions:
            raise DuplicateSession(f"session {session_id.hex()} already registered")

        sample_rate = int(request.get("sample_rate_hz", 16_000))
        if sample_rate not in SUPPORTED_RATES:
            raise BadParams(f"sample_rate_hz must be one of {SUPPORTED_RATES}, got {sample_rate}")
        mode = request.get("mode", self._default_mode)
        if mode not in (STATEFUL, CACHED):
            raise BadParams(f"mode must be {STATEFUL!r} or {CACHED!r}, got {mode!r}")
        try:
            silence = SilenceConfig(
                threshold_dbfs=float(request.get("silence_threshold_dbfs", SilenceConfig().threshold_dbfs)),
                floor_dbfs=float(request.get("silence_floor_dbfs", SilenceConfig().floor_dbfs)),
            )
            params = SessionParams(
                timeout_ms=int(request.get("timeout_ms", SessionParams().timeout_ms)),
                confidence_threshold=float(
                    request.get("confidence_threshold", SessionParams().confidence_threshold)),
                min_detection_time_ms=int(
                    request.get("min_detection_time_ms", SessionParams().min_detection_time_ms)),
                silence=silence,
            )
        except (TypeError, ValueError) as exc:
            raise BadParams(str(exc)) from exc

        session = self._engine.new_session(params, mode=mode)
        self.sessions[session_id] = _SessionEntry(session, sample_rate, mode)
        ack = json.dumps({
            "session_id": session_id.hex(),
            "sample_rate_hz": sample_rate,
            "mode": mode,
            "timeout_ms": params.timeout_ms,
            "confidence_threshold": params.confidence_threshold,
            "min_detection_time_ms": params.min_detection_time_ms,
            "silence_threshold_dbfs": params.silence.threshold_dbfs,
            "silence_floor_dbfs": params.silence.floor_dbfs,
        }).encode("utf-8")
        return [(MSG_ACK, ack)]

    def handle_audio(self, payload: bytes) -> list[tuple[int, bytes]]:
        if len(payload) < SESSION_ID_BYTES:
            raise BadParams("audio payload shorter than a session id")
        session_id, pcm = payload[:SESSION_ID_BYTES], payload[SESSION_ID_BYTES:]
        entry = self.sessions.get(session_id)
        if entry is None:
            raise UnknownSession(f"no session {session_id.hex()}")
        if entry.session.finalized:
            raise SessionFinalized(f"session {session_id.hex()} already emitted its verdict")
        if len(pcm) % 2:
            raise BadParams("PCM s16le payload must have an even byte count")

        samples = np.frombuffer(pcm, dtype="<i2")
        chunk = PcmChunk(samples=samples, sample_rate_hz=entry.sample_rate_hz)
        results, verdict = entry.session.push_audio(chunk)
        return self._result_messages(session_id.hex(), results, verdict)

    def handle_end(self, payload: bytes) -> list[tuple[int, bytes]]:
        if len(payload) != SESSION_ID_BYTES:
            raise BadParams(f"end payload must be exactly {SESSION_ID_BYTES} bytes")
        entry = self.sessions.pop(payload, None)
        if entry is None:
            raise UnknownSession(f"no session {payload.hex()}")
        results, verdict = entry.session.end_stream()
        return self._result_messages(payload.hex(), results, verdict)

    @staticmethod
    def _result_messages(session_id_hex: str, results: list[FrameResult],
                         verdict: Verdict | None) -> list[tuple[int, bytes]]:
        messages = [(MSG_FRAME_RESULT, _frame_result_payload(session_id_hex, r))
                    for r in results]
        if verdict is not None:
            messages.append((MSG_FINAL_VERDICT, _verdict_payload(session_id_hex, verdict)))
        return messages


def _parse_session_id(value) -> bytes:
    if not isinstance(value, str):
        raise BadParams("session_id must be a hex string")
    try:
        session_id = bytes.fromhex(value)
    except ValueError as exc:
        raise BadParams(f"session_id is not valid hex: {value!r}") from exc
    if len(session_id) != SESSION_ID_BYTES:
        raise BadParams(f"session_id must be {SESSION_ID_BYTES} bytes, got {len(session_id)}")
    return session_id


def _peek_session_key(msg_type: int, payload: bytes) -> bytes | None:
    """Best-effort session key for ordering; full validation happens in the core."""
    if msg_type in (MSG_AUDIO, MSG_END) and len(payload) >= SESSION_ID_BYTES:
        return payload[:SESSION_ID_BYTES]
    if msg_type == MSG_START:
        try:
            return _parse_session_id(json.loads(payload.decode("utf-8")).get("session_id"))
        except (AmdError, ValueError, AttributeError, UnicodeDecodeError):
            return None
    return None


class GatewayServer:
    """Asyncio TCP front end around a GatewayCore.

    Inference runs on a thread pool so one session's compute never stalls
    another connection; a per-session lock keeps each session's frames
    strictly ordered even if two connections address the same id.
    """

    def __init__(self, engine: DetectionEngine, host: str = "127.0.0.1", port: int = 0,
                 default_mode: str = CACHED, max_workers: int | None = None) -> None:
        self.core = GatewayCore(engine, default_mode=default_mode)
        self._host = host
        self._port = port
        self._executor = ThreadPoolExecutor(max_workers=max_workers)
        self._locks: dict[bytes, asyncio.Lock] = {}
        self._server: asyncio.AbstractServer | None = None

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._serve_connection, self._host, self._port)

    @property
    def bound_port(self) -> int:
        assert self._server is not None and self._server.sockets
        return self._server.sockets[0].getsockname()[1]

    async def serve_forever(self) -> None:
        assert self._server is not None
        async with self._server:
            await self._server.serve_forever()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        self._executor.shutdown(wait=False)

    async def _serve_connection(self, reader: asyncio.StreamReader,
                                writer: asyncio.StreamWriter) -> None:
        try:
            while True:
                message = await read_message(reader)
                if message is None:
                    break
                msg_type, payload = message
                for reply_type, reply_payload in await self._dispatch(msg_type, payload):
                    writer.write(encode_message(reply_type, reply_payload))
                await writer.drain()
        except (ProtocolError, ConnectionResetError):
            pass
        finally:
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionResetError, BrokenPipeError):
                pass

    async def _dispatch(self, msg_type: int, payload: bytes) -> list[tuple[int, bytes]]:
        loop = asyncio.get_running_loop()
        key = _peek_session_key(msg_type, payload)
        if key is None:
            return self.core.handle_message(msg_type, payload)
        lock = self._locks.setdefault(key, asyncio.Lock())
        async with lock:
            replies = await loop.run_in_executor(
                self._executor, self.core.handle_message, msg_type, payload)
        if key not in self.core.sessions:
            self._locks.pop(key, None)
        return replies
