"""HTTP telemetry and control plane.

Read endpoints page through the memory log (with an optional long-poll
wait for new records); control endpoints append durable commands that
agents pick up between generations. Static dashboard assets are served
from the package's static directory.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .analysis import project_records, score_histogram
from .control import OP_PARAMS, OP_PAUSE, OP_RESUME, OP_SEED, ControlBus, ControlState
from .core import STATUS_OK, TemplateError, validate_template
from .memory import MemoryStore, StorageUnavailable, record_to_fields

PAGE_SIZE = 500
LONG_POLL_SECONDS = 25.0
LONG_POLL_STEP = 0.1
DEFAULT_BIND = "127.0.0.1:8080"

STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}

FALLBACK_PAGE = (
    "<!doctype html><meta charset='utf-8'><title>featloop</title>"
    "<h1>featloop telemetry</h1><p>No dashboard assets are installed. "
    "The JSON API lives under <code>/api/</code>.</p>"
)


class BindFailed(OSError):
    pass


def parse_bind(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind address must be host:port, got {value!r}")
    return host, int(port)


def default_static_dir() -> str:
    return os.path.join(os.path.dirname(__file__), "static")


@dataclass
class ServerConfig:
    memory_path: str
    control_path: str
    bind: str = DEFAULT_BIND
    static_dir: str = field(default_factory=default_static_dir)
    agent_ids: tuple[str, ...] = ()
    poll_timeout: float = LONG_POLL_SECONDS
    durable_control: bool = True


class _Api:
    """Request-handling logic, separated from the HTTP plumbing so the
    handler class stays a thin shell."""

    def __init__(self, config: ServerConfig) -> None:
        self.config = config
        self.store = MemoryStore(config.memory_path, durable=False)
        self.bus = ControlBus(config.control_path, durable=config.durable_control)

    # -- reads ---------------------------------------------------------

    def records(self, since: int, wait: bool) -> dict:
        records = self.store.read_since(since)
        if not records and wait:
            deadline = time.monotonic() + self.config.poll_timeout
            while not records and time.monotonic() < deadline:
                time.sleep(LONG_POLL_STEP)
                records = self.store.read_since(since)
        page = records[:PAGE_SIZE]
        next_cursor = page[-1].seq if len(records) > PAGE_SIZE else None
        return {
            "records": [record_to_fields(r) for r in page],
            "next": next_cursor,
        }

    def control_state(self) -> ControlState:
        return ControlState.replay(self.bus.read_since(0))

    def known_agents(self, state: ControlState, records) -> list[str]:
        ids = set(self.config.agent_ids)
        ids.update(state.agents)
        ids.update(r.agent_id for r in records if r.agent_id)
        return sorted(ids)

    def agents(self) -> dict:
        state = self.control_state()
        records = self.store.read_all()
        payload = []
        for agent_id in self.known_agents(state, records):
            control = state.agents.get(agent_id)
            mine = [r for r in records if r.agent_id == agent_id]
            ok_scores = [r.relative_score for r in mine if r.status == STATUS_OK]
            payload.append(
                {
                    "agent_id": agent_id,
                    "paused": bool(control.paused) if control else False,
                    "temperature": control.temperature if control else None,
                    "epsilon": control.epsilon if control else None,
                    "records": len(mine),
                    "best_score": max(ok_scores) if ok_scores else None,
                }
            )
        return {"agents": payload, "last_seq": self.store.last_seq()}

    def histogram(self, agent: str, bins: int) -> dict:
        records = self.store.read_all()
        rows = score_histogram(records, agent_id=agent, n_bins=bins)
        return {
            "agent": agent,
            "bins": [[lo, hi, count] for lo, hi, count in rows],
            "total": sum(count for _, _, count in rows),
        }

    def projection(self) -> dict:
        points, rank_deficient = project_records(self.store.read_all())
        return {
            "rank_deficient": rank_deficient,
            "points": [
                {
                    "prompt_id": p.prompt_id,
                    "agent_id": p.agent_id,
                    "score": p.relative_score,
                    "x": p.x,
                    "y": p.y,
                }
            for p in points
            ],
        }

    # -- control -------------------------------------------------------

    def _ack(self, cmd) -> dict:
        return {
            "command_seq": cmd.seq,
            "op": cmd.op,
            "agent_id": cmd.agent_id,
            "effective_after_seq": self.store.last_seq(),
        }

    def pause(self, agent_id: str, resume: bool) -> dict:
        state = self.control_state()
        if agent_id not in self.known_agents(state, self.store.read_all()):
            raise UnknownAgent(agent_id)
        cmd = self.bus.append(OP_RESUME if resume else OP_PAUSE, agent_id=agent_id)
        return self._ack(cmd)

    def params(self, agent_id: str, body: dict) -> dict:
        state = self.control_state()
        if agent_id not in self.known_agents(state, self.store.read_all()):
            raise UnknownAgent(agent_id)
        temperature = body.get("temperature")
        epsilon = body.get("epsilon")
        if temperature is None and epsilon is None:
            raise InvalidCommand("params needs temperature and/or epsilon")
        for name, value, hi in (("temperature", temperature, 2.0), ("epsilon", epsilon, 1.0)):
            if value is not None and not (
                isinstance(value, (int, float)) and 0.0 <= float(value) <= hi
            ):
                raise InvalidCommand(f"{name} out of [0,{hi:g}]")
        cmd = self.bus.append(
            OP_PARAMS,
            agent_id=agent_id,
            temperature=None if temperature is None else float(temperature),
            epsilon=None if epsilon is None else float(epsilon),
        )
        return self._ack(cmd)

    def seed(self, body: dict) -> dict:
        template_text = body.get("user_template")
        if not isinstance(template_text, str) or not template_text:
            raise InvalidCommand("user_template must be a nonempty string")
        try:
            validate_template(template_text)
        except TemplateError as exc:
            raise InvalidCommand(str(exc)) from exc
        cmd = self.bus.append(OP_SEED, user_template=template_text)
        return self._ack(cmd)


class UnknownAgent(KeyError):
    pass


class InvalidCommand(ValueError):
    pass


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    api: _Api  # set on the subclass built in TelemetryServer

    # -- plumbing ------------------------------------------------------

    def log_message(self, fmt: str, *args) -> None:  # noqa: A003 - stdlib hook
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InvalidBody(str(exc)) from exc
        if not isinstance(body, dict):
            raise InvalidBody("body must be a JSON object")
        return body

    # -- routing -------------------------------------------------------

    def do_GET(self) -> None:  # noqa: N802 - stdlib naming
        url = urlsplit(self.path)
        query = parse_qs(url.query)
        try:
            if url.path == "/api/records":
                since = _int_param(query, "since", 0)
                wait = _bool_param(query, "wait", False)
                self._send_json(200, self.api.records(since, wait))
            elif url.path == "/api/agents":
                self._send_json(200, self.api.agents())
            elif url.path == "/api/histogram":
                agent = query.get("agent", ["all"])[0]
                bins = _int_param(query, "bins", 20)
                if bins < 1:
                    raise BadParam("bins must be >= 1")
                self._send_json(200, self.api.histogram(agent, bins))
            elif url.path == "/api/projection":
                self._send_json(200, self.api.projection())
            elif url.path.startswith("/api/"):
                self._send_error_json(404, "no such endpoint")
            else:
                self._serve_static(url.path)
        except BadParam as exc:
            self._send_error_json(400, str(exc))
        except StorageUnavailable as exc:
            self._send_error_json(503, str(exc))

    def do_POST(self) -> None:  # noqa: N802 - stdlib naming
        url = urlsplit(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            body = self._read_body()
            if parts[:3] == ["api", "control", "agents"] and len(parts) == 5:
                agent_id, action = parts[3], parts[4]
                if action == "pause":
                    self._send_json(200, self.api.pause(agent_id, resume=False))
                elif action == "resume":
                    self._send_json(200, self.api.pause(agent_id, resume=True))
                elif action == "params":
                    self._send_json(200, self.api.params(agent_id, body))
                else:
                    self._send_error_json(404, "no such endpoint")
            elif parts == ["api", "control", "seeds"]:
                self._send_json(200, self.api.seed(body))
            else:
                self._send_error_json(404, "no such endpoint")
        except InvalidBody as exc:
            self._send_error_json(400, str(exc))
        except UnknownAgent as exc:
            self._send_error_json(404, f"unknown agent: {exc.args[0]}")
        except InvalidCommand as exc:
            self._send_error_json(422, str(exc))
        except StorageUnavailable as exc:
            self._send_error_json(503, str(exc))

    # -- static assets -------------------------------------------------

    def _serve_static(self, path: str) -> None:
        name = path.lstrip("/") or "index.html"
        base = os.path.abspath(self.api.config.static_dir)
        full = os.path.abspath(os.path.join(base, name))
        if full != base and not full.startswith(base + os.sep):
            self._send_error_json(404, "not found")
            return
        if not os.path.isfile(full):
            if path in ("/", "/index.html"):
                body = FALLBACK_PAGE.encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
                return
            self._send_error_json(404, "not found")
            return
        ext = os.path.splitext(full)[1].lower()
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", STATIC_TYPES.get(ext, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class BadParam(ValueError):
    pass


class InvalidBody(ValueError):
    pass


def _int_param(query: dict, name: str, default: int) -> int:
    values = query.get(name)
    if not values:
        return default
    try:
        return int(values[0])
    except ValueError as exc:
        raise BadParam(f"{name} must be an integer") from exc


def _bool_param(query: dict, name: str, default: bool) -> bool:
    values = query.get(name)
    if not values:
        return default
    value = values[0].lower()
    if value in ("1", "true", "yes"):
        return True
    if value in ("0", "false", "no"):
        return False
    raise BadParam(f"{name} must be a boolean")


class TelemetryServer:
    """Owns the listening socket and the serving thread."""

    def __init__(self, config: ServerConfig) -> None:
        self.config = config
        self.api = _Api(config)
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        if self._httpd is None:
            raise RuntimeError("server not started")
        return self._httpd.server_address[:2]

    def start(self) -> "TelemetryServer":
        host, port = parse_bind(self.config.bind)
        handler = type("Handler", (_Handler,), {"api": self.api})
        try:
            self._httpd = ThreadingHTTPServer((host, port), handler)
        except OSError as exc:
            raise BindFailed(f"cannot bind {self.config.bind}: {exc}") from exc
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def serve_forever(self) -> None:
        """Blocking variant for the CLI; Ctrl-C stops cleanly."""
        self.start()
        try:
            while True:
                time.sleep(3600.0)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()
