"""Supervisor steering commands, durably appended to a small checksummed
log file that agents poll between generations. Keeping control on disk
(rather than RPC) means the fleet stays coupled only through shared files
and commands survive restarts of every process."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .core import utc_now
from .logio import LineLog, encode_line

OP_PAUSE = "pause"
OP_RESUME = "resume"
OP_PARAMS = "params"
OP_SEED = "seed"
OPS = (OP_PAUSE, OP_RESUME, OP_PARAMS, OP_SEED)


@dataclass(frozen=True)
class ControlCommand:
    seq: int
    op: str
    agent_id: str = ""
    temperature: float | None = None
    epsilon: float | None = None
    user_template: str = ""
    created_at: str = field(default_factory=utc_now)

    def __post_init__(self) -> None:
        if self.op not in OPS:
            raise ValueError(f"unknown control op {self.op!r}")
        if self.op in (OP_PAUSE, OP_RESUME, OP_PARAMS) and not self.agent_id:
            raise ValueError(f"{self.op} requires an agent_id")
        if self.op == OP_SEED and not self.user_template:
            raise ValueError("seed command requires a user_template")
        if self.temperature is not None and not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature out of [0,2]")
        if self.epsilon is not None and not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon out of [0,1]")


_FIELDS = ("seq", "op", "agent_id", "temperature", "epsilon", "user_template", "created_at")


def _to_fields(cmd: ControlCommand) -> dict:
    return {name: getattr(cmd, name) for name in _FIELDS}


def _from_fields(fields: dict) -> ControlCommand:
    return ControlCommand(**{name: fields[name] for name in _FIELDS})


class ControlBus:
    """Append/read access to the control log; safe across processes."""

    def __init__(self, path: str, durable: bool = True) -> None:
        self._log = LineLog(path, durable=durable)
        self.path = path

    def append(
        self,
        op: str,
        agent_id: str = "",
        temperature: float | None = None,
        epsilon: float | None = None,
        user_template: str = "",
    ) -> ControlCommand:
        with self._log.exclusive():
            records, end = self._log.read_valid()
            if end < self._log.size():
                self._log.truncate_to(end)
            last_seq = records[-1]["seq"] if records else 0
            cmd = ControlCommand(
                seq=last_seq + 1,
                op=op,
                agent_id=agent_id,
                temperature=temperature,
                epsilon=epsilon,
                user_template=user_template,
            )
            self._log.append_bytes(encode_line(_to_fields(cmd)))
        return cmd

    def read_since(self, seq: int) -> list[ControlCommand]:
        records, _ = self._log.read_valid()
        return [_from_fields(r) for r in records if r["seq"] > seq]


@dataclass
class AgentControl:
    paused: bool = False
    temperature: float | None = None
    epsilon: float | None = None


@dataclass
class ControlState:
    """Replay of the command log: per-agent knobs plus the seed queue."""

    agents: dict[str, AgentControl] = field(default_factory=dict)
    seeds: list[ControlCommand] = field(default_factory=list)
    last_seq: int = 0

    def apply(self, cmd: ControlCommand) -> None:
        self.last_seq = max(self.last_seq, cmd.seq)
        if cmd.op == OP_SEED:
            self.seeds.append(cmd)
            return
        agent = self.agents.setdefault(cmd.agent_id, AgentControl())
        if cmd.op == OP_PAUSE:
            agent.paused = True
        elif cmd.op == OP_RESUME:
            agent.paused = False
        elif cmd.op == OP_PARAMS:
            if cmd.temperature is not None:
                agent.temperature = cmd.temperature
            if cmd.epsilon is not None:
                agent.epsilon = cmd.epsilon

    @classmethod
    def replay(cls, commands: Iterable[ControlCommand]) -> "ControlState":
        state = cls()
        for cmd in commands:
            state.apply(cmd)
        return state


class ControlPoller:
    """One agent's incremental view of the bus: call poll() between
    generations, then read the knobs and drain newly injected seeds."""

    def __init__(self, bus: ControlBus, agent_id: str) -> None:
        self._bus = bus
        self._agent_id = agent_id
        self._last_seq = 0
        self.control = AgentControl()
        self._pending_seeds: list[ControlCommand] = []

    def poll(self) -> None:
        for cmd in self._bus.read_since(self._last_seq):
            self._last_seq = max(self._last_seq, cmd.seq)
            if cmd.op == OP_SEED:
                self._pending_seeds.append(cmd)
            elif cmd.agent_id == self._agent_id:
                state = ControlState(agents={self._agent_id: self.control})
                state.apply(cmd)

    @property
    def paused(self) -> bool:
        return self.control.paused

    def drain_seeds(self) -> list[ControlCommand]:
        drained = self._pending_seeds
        self._pending_seeds = []
        return drained
