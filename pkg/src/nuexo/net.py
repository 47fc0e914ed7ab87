"""Socket transport and the long-running node processes.

Topology: the controller listens; the master node and follower nodes connect
to it and identify themselves by the stream_id of their messages (master = 0,
followers = their id). Each node runs one tick loop plus one message pump;
they meet in a mailbox whose state lanes are bounded (capacity 64,
drop-oldest) while command lanes never drop.

Connection loss triggers bounded exponential reconnect (0.1 s to 2 s);
commands are withheld while a peer is away. All nodes flush their logs and
close sockets on shutdown.
"""

from __future__ import annotations

import logging
import os
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import follower_sim, quat
from .config import SystemConfig, load_system_config
from .datalog import LogWriter
from .follower_sim import FollowerModel, make_model
from .nodes import (MASTER_PAYLOAD_LEN, MasterPose, SinusoidWrench,
                    SmoothedDifferentiator, TeleopController, WrenchPair,
                    follower_state_payload, measurement_from_payload)
from .protocol import MessageDecoder, MsgType, ProtocolError, WireMessage, encode_message
from .session import session_streams

log = logging.getLogger("nuexo.net")

MASTER_STREAM = 0
RECONNECT_MIN = 0.1
RECONNECT_MAX = 2.0
STATE_QUEUE_CAPACITY = 64
LOG_DIR_ENV = "NUEXO_LOG_DIR"


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


def now_us() -> int:
    return time.monotonic_ns() // 1000


@dataclass
class NodeConfig:
    role: str                      # master | controller | follower
    endpoint: str = "127.0.0.1:7401"
    tick_hz: int = 500
    preset: str = "default"
    follower_ids: tuple[int, ...] = (1,)
    follower_id: int = 1
    replay: str | None = None
    duration: float | None = None
    config_path: str | None = None
    console_port: int | None = None
    log_dir: str | None = None
    embed_followers: bool = False  # run the follower sims inside the controller

    def __post_init__(self):
        if self.role not in ("master", "controller", "follower"):
            raise ValueError(f"unknown node role {self.role!r}")
        if not 50 <= self.tick_hz <= 1000:
            raise ValueError("tick rate must be within 50..1000 Hz")
        if self.log_dir is None:
            self.log_dir = os.environ.get(LOG_DIR_ENV)

    def log_path(self, suffix: str) -> Path | None:
        if not self.log_dir:
            return None
        path = Path(self.log_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path / f"{self.role}_{suffix}.nxlg"


class FramedSocket:
    """Thread-safe framed send plus buffered receive over one stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.sock.settimeout(0.2)
        self._send_lock = threading.Lock()
        self._decoder = MessageDecoder()
        self.closed = False

    def send(self, msg: WireMessage) -> None:
        data = encode_message(msg)
        with self._send_lock:
            try:
                self.sock.sendall(data)
            except OSError as exc:
                self.close()
                raise ConnectionError(str(exc)) from exc

    def recv(self) -> list[WireMessage]:
        """Decoded messages since the last call; [] on timeout, raises on close."""
        try:
            data = self.sock.recv(65536)
        except socket.timeout:
            return []
        except OSError as exc:
            self.close()
            raise ConnectionError(str(exc)) from exc
        if not data:
            self.close()
            raise ConnectionError("peer closed connection")
        try:
            return self._decoder.feed(data)
        except ProtocolError as exc:
            self.close()
            raise ConnectionError(f"protocol violation: {exc}") from exc

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            try:
                self.sock.close()
            except OSError:
                pass


def connect_with_backoff(endpoint: str, stop: threading.Event,
                         deadline: float | None = None) -> FramedSocket | None:
    """Dial until connected, stopped, or past the deadline (blocking)."""
    host, port = parse_endpoint(endpoint)
    delay = RECONNECT_MIN
    while not stop.is_set():
        if deadline is not None and time.monotonic() > deadline:
            return None
        try:
            sock = socket.create_connection((host, port), timeout=0.5)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return FramedSocket(sock)
        except OSError:
            if stop.wait(delay):
                return None
            delay = min(delay * 2.0, RECONNECT_MAX)
    return None


class Reconnector:
    """Non-blocking dialer with bounded exponential backoff (0.1 s to 2 s).

    One attempt per due window so a missing peer never stalls the tick loop.
    """

    def __init__(self, endpoint: str):
        self.host, self.port = parse_endpoint(endpoint)
        self._delay = RECONNECT_MIN
        self._next_try = 0.0

    def try_connect(self) -> FramedSocket | None:
        if time.monotonic() < self._next_try:
            return None
        try:
            sock = socket.create_connection((self.host, self.port), timeout=0.2)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._delay = RECONNECT_MIN
            return FramedSocket(sock)
        except OSError:
            self._next_try = time.monotonic() + self._delay
            self._delay = min(self._delay * 2.0, RECONNECT_MAX)
            return None


class Mailbox:
    """Controller-side inbox: bounded drop-oldest state lanes, lossless command lane."""

    def __init__(self):
        self._lock = threading.Lock()
        self._master: deque[WireMessage] = deque(maxlen=STATE_QUEUE_CAPACITY)
        self._follower: dict[int, deque[WireMessage]] = {}
        self._commands: deque[WireMessage] = deque()

    def put(self, msg: WireMessage) -> None:
        with self._lock:
            if msg.msg_type == MsgType.MASTER_STATE:
                self._master.append(msg)
            elif msg.msg_type == MsgType.FOLLOWER_STATE:
                lane = self._follower.setdefault(
                    msg.stream_id, deque(maxlen=STATE_QUEUE_CAPACITY))
                lane.append(msg)
            elif msg.msg_type == MsgType.TORQUE_CMD:
                self._commands.append(msg)

    def latest_master(self) -> WireMessage | None:
        with self._lock:
            return self._master[-1] if self._master else None

    def latest_follower(self, fid: int) -> WireMessage | None:
        with self._lock:
            lane = self._follower.get(fid)
            return lane[-1] if lane else None

    def drain_commands(self) -> list[WireMessage]:
        with self._lock:
            out = list(self._commands)
            self._commands.clear()
            return out


class _TickClock:
    """Sleep-until-deadline pacing for a fixed-rate loop."""

    def __init__(self, hz: int):
        self.period = 1.0 / hz
        self.start = time.monotonic()
        self.tick = 0

    def wait(self, stop: threading.Event) -> float:
        """Block until the next tick; returns the node-local tick time (s)."""
        target = self.start + self.tick * self.period
        delay = target - time.monotonic()
        if delay > 0:
            stop.wait(delay)
        t = self.tick * self.period
        self.tick += 1
        return t


def _pump(conn: FramedSocket, mailbox: Mailbox, stop: threading.Event) -> None:
    while not stop.is_set() and not conn.closed:
        try:
            for msg in conn.recv():
                mailbox.put(msg)
        except ConnectionError:
            return


def run_master(cfg: NodeConfig, source=None, wrench_source=None,
               stop: threading.Event | None = None) -> None:
    """Publish MasterState at the tick rate; heartbeat once a second.

    Without a reachable controller the node keeps retrying and stays alive;
    state messages are dropped while disconnected, heartbeats resume first.
    """
    stop = stop or threading.Event()
    if source is None:
        if cfg.replay:
            source = ReplayMasterSource(cfg.replay)
        else:
            from .nodes import SinusoidSource
            source = SinusoidSource()
    wrench_source = wrench_source or SinusoidWrench()
    writer = None
    path = cfg.log_path(f"{os.getpid()}")
    if path is not None:
        writer = LogWriter(path, session_streams())
    conn: FramedSocket | None = None
    dialer = Reconnector(cfg.endpoint)
    clock = _TickClock(cfg.tick_hz)
    last_hb = -1.0
    try:
        while not stop.is_set():
            t = clock.wait(stop)
            if stop.is_set() or (cfg.duration is not None
                                 and time.monotonic() - clock.start >= cfg.duration):
                break
            master = source.sample(t)
            if master is None:   # replay exhausted
                break
            wrench = wrench_source.sample(t)
            ts = now_us()
            if conn is None or conn.closed:
                conn = dialer.try_connect()
            if conn is not None and not conn.closed:
                try:
                    if t - last_hb >= 1.0:
                        conn.send(WireMessage(MsgType.HEARTBEAT, MASTER_STREAM, ts))
                        last_hb = t
                    conn.send(WireMessage(MsgType.MASTER_STATE, MASTER_STREAM,
                                          ts + 1, master.to_payload()))
                except ConnectionError:
                    conn = None
            if writer is not None:
                writer.append(2, ts, master.kinematic_payload())
                writer.append(3, ts, master.finger_payload())
                writer.append(5, ts, wrench.to_payload())
    finally:
        if writer is not None:
            writer.close()
        if conn is not None:
            conn.close()
        log.info("master node stopped")


class ReplayMasterSource:
    """Master poses replayed from a recorded log's kinematic/finger streams."""

    def __init__(self, log_path: str):
        from .datalog import LogReader
        reader = LogReader(log_path)
        kin = reader.stream_records(2)
        fingers = {r.timestamp_us: r.payload for r in reader.stream_records(3)}
        self._poses = [MasterPose.from_stream_payloads(r.payload, fingers[r.timestamp_us])
                       for r in kin if r.timestamp_us in fingers]
        if not self._poses:
            raise ValueError(f"log {log_path} has no replayable master records")
        t0 = kin[0].timestamp_us
        self._times = np.array([(r.timestamp_us - t0) * 1e-6 for r in kin
                                if r.timestamp_us in fingers])

    def sample(self, t: float) -> MasterPose | None:
        if t > self._times[-1]:
            return None
        idx = int(np.searchsorted(self._times, t, side="right")) - 1
        return self._poses[max(idx, 0)]


def run_follower(cfg: NodeConfig, stop: threading.Event | None = None,
                 model: FollowerModel | None = None) -> None:
    """Wrap the simulator: apply the latest TorqueCmd, publish FollowerState."""
    stop = stop or threading.Event()
    model = model or make_model(cfg.preset)
    fid = cfg.follower_id
    state = follower_sim.initial_state(model)
    writer = None
    path = cfg.log_path(f"{fid}_{os.getpid()}")
    if path is not None:
        writer = LogWriter(path, session_streams())
    mailbox = Mailbox()
    conn: FramedSocket | None = None
    dialer = Reconnector(cfg.endpoint)
    clock = _TickClock(cfg.tick_hz)
    held = np.zeros(follower_sim.N_JOINTS)
    sub_dt = min(0.001, clock.period)
    substeps = max(1, round(clock.period / sub_dt))
    try:
        while not stop.is_set():
            t = clock.wait(stop)
            if stop.is_set() or (cfg.duration is not None
                                 and time.monotonic() - clock.start >= cfg.duration):
                break
            if conn is None or conn.closed:
                conn = dialer.try_connect()
                if conn is not None:
                    pump = threading.Thread(target=_pump, args=(conn, mailbox, stop),
                                            daemon=True)
                    pump.start()
                    held = np.zeros(follower_sim.N_JOINTS)   # safe on (re)connect
            for msg in mailbox.drain_commands():
                if msg.stream_id == fid and len(msg.payload) == follower_sim.N_JOINTS:
                    held = msg.payload
            for _ in range(substeps):
                state = follower_sim.step(state, held, clock.period / substeps, model)
            meas = follower_sim.measure(state, model)
            ts = now_us()
            if conn is not None and not conn.closed:
                try:
                    conn.send(WireMessage(MsgType.FOLLOWER_STATE, fid, ts,
                                          follower_state_payload(meas)))
                except ConnectionError:
                    conn = None
            if writer is not None:
                writer.append(6, ts, np.concatenate([[float(fid)],
                                                     follower_state_payload(meas)]))
    finally:
        if writer is not None:
            writer.close()
        if conn is not None:
            conn.close()
        log.info("follower node %d stopped", fid)


class ControllerRuntime:
    """Live controller state shared between the tick loop, the socket server
    and (optionally) the console bridge."""

    def __init__(self, cfg: NodeConfig, system: SystemConfig | None = None,
                 models: dict[int, FollowerModel] | None = None):
        self.cfg = cfg
        self.system = system or load_system_config(cfg.config_path)
        self.models = models or {fid: make_model(cfg.preset) for fid in cfg.follower_ids}
        self.controller = TeleopController(self.system.gains, self.system.tremor,
                                           self.models)
        self.mailbox = Mailbox()
        self.stop = threading.Event()
        self._conn_by_stream: dict[int, FramedSocket] = {}
        self._conn_lock = threading.Lock()
        self._latest = threading.Lock()
        self.last_master: MasterPose | None = None
        self.last_meas: dict[int, np.ndarray] = {}
        self.last_commands: dict[int, np.ndarray] = {}
        self.last_reference: MasterPose | None = None
        self.last_events: list[str] = []
        self.console_master: MasterPose | None = None
        self.console_wrench: WrenchPair | None = None
        self.tick_count = 0
        self.bound_port: int | None = None
        self._console_at = 0.0
        self._console_diff = SmoothedDifferentiator()
        self.embedded: dict[int, follower_sim.FollowerState] = {}
        if cfg.embed_followers:
            self.embedded = {fid: follower_sim.initial_state(self.models[fid])
                             for fid in self.models}

    # console bridge hooks -------------------------------------------------
    CONSOLE_STALE_S = 1.0

    def set_console_master(self, master: MasterPose) -> None:
        """Adopt a console frame as the master setpoint.

        Console frames carry positions only; velocities are estimated with
        the smoothed backward difference over the console's own update
        cadence so the damping term gets a usable feedforward.
        """
        with self._latest:
            now = time.monotonic()
            dt = now - self._console_at if self.console_master is not None else 0.0
            vec = np.concatenate([quat.log_map(master.shoulder_q),
                                  quat.log_map(master.wrist_q),
                                  [master.elbow], master.fingers])
            vel = self._console_diff.update(vec, dt)
            self.console_master = replace(
                master, shoulder_w=vel[0:3], wrist_w=vel[3:6],
                elbow_v=float(vel[6]), finger_v=vel[7:13])
            self._console_at = now

    def snapshot(self) -> dict:
        with self._latest:
            return {
                "tick": self.tick_count,
                "master": self.last_master,
                "reference": self.last_reference,
                "measurements": dict(self.last_meas),
                "commands": {f: c.copy() for f, c in self.last_commands.items()},
                "events": list(self.last_events),
            }

    # internals --------------------------------------------------------------
    def _register(self, stream_id: int, conn: FramedSocket) -> None:
        with self._conn_lock:
            self._conn_by_stream[stream_id] = conn

    def _conn_for(self, stream_id: int) -> FramedSocket | None:
        with self._conn_lock:
            conn = self._conn_by_stream.get(stream_id)
            return conn if conn is not None and not conn.closed else None

    def _serve(self, server: socket.socket) -> None:
        server.settimeout(0.2)
        while not self.stop.is_set():
            try:
                sock, _ = server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = FramedSocket(sock)
            threading.Thread(target=self._reader, args=(conn,), daemon=True).start()

    def _reader(self, conn: FramedSocket) -> None:
        while not self.stop.is_set() and not conn.closed:
            try:
                msgs = conn.recv()
            except ConnectionError:
                return
            for msg in msgs:
                self._register(msg.stream_id, conn)
                self.mailbox.put(msg)

    def run(self, ready: threading.Event | None = None) -> None:
        host, port = parse_endpoint(self.cfg.endpoint)
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        self.bound_port = server.getsockname()[1]
        server.listen()
        threading.Thread(target=self._serve, args=(server,), daemon=True).start()
        if ready is not None:
            ready.set()
        writer = None
        path = self.cfg.log_path(f"{os.getpid()}")
        if path is not None:
            writer = LogWriter(path, session_streams())
        clock = _TickClock(self.cfg.tick_hz)
        try:
            while not self.stop.is_set():
                clock.wait(self.stop)
                if self.stop.is_set() or (self.cfg.duration is not None
                                          and time.monotonic() - clock.start >= self.cfg.duration):
                    break
                tick = clock.tick - 1
                master_msg = self.mailbox.latest_master()
                with self._latest:
                    console = self.console_master
                    console_age = time.monotonic() - self._console_at
                    wrench = self.console_wrench
                if master_msg is not None and len(master_msg.payload) == MASTER_PAYLOAD_LEN:
                    master = MasterPose.from_payload(master_msg.payload)
                elif console is not None and console_age <= self.CONSOLE_STALE_S:
                    master = console   # a silent console withholds commands, see below
                else:
                    master = None
                for fid, model in self.models.items():
                    if fid in self.embedded:
                        meas = follower_sim.measure(self.embedded[fid], model)
                        self.controller.update_follower(fid, meas, tick)
                        with self._latest:
                            self.last_meas[fid] = follower_state_payload(meas)
                        continue
                    msg = self.mailbox.latest_follower(fid)
                    if msg is not None:
                        try:
                            meas = measurement_from_payload(msg.payload, model)
                        except ValueError:
                            continue
                        self.controller.update_follower(fid, meas, tick)
                        with self._latest:
                            self.last_meas[fid] = msg.payload
                result = self.controller.tick(tick, master, wrench)
                ts = now_us()
                for fid, tau in result.commands.items():
                    if fid not in self.embedded:
                        conn = self._conn_for(fid)
                        if conn is not None:
                            try:
                                conn.send(WireMessage(MsgType.TORQUE_CMD, fid, ts, tau))
                            except ConnectionError:
                                pass
                    if writer is not None:
                        writer.append(1, ts, np.concatenate([[float(fid)], tau]))
                # embedded sims run every tick; a withheld command coasts at zero torque
                for fid, state in self.embedded.items():
                    tau = result.commands.get(fid, np.zeros(follower_sim.N_JOINTS))
                    substeps = max(1, round(clock.period / 0.001))
                    for _ in range(substeps):
                        state = follower_sim.step(state, tau, clock.period / substeps,
                                                  self.models[fid])
                    self.embedded[fid] = state
                with self._latest:
                    self.last_master = master
                    self.last_reference = result.reference
                    self.last_commands = result.commands
                    self.last_events = result.events
                    self.tick_count = tick
        finally:
            self.stop.set()
            if writer is not None:
                writer.close()
            with self._conn_lock:
                for conn in self._conn_by_stream.values():
                    conn.close()
            server.close()
            log.info("controller node stopped")


def run_controller(cfg: NodeConfig, stop: threading.Event | None = None,
                   ready: threading.Event | None = None,
                   runtime: ControllerRuntime | None = None) -> ControllerRuntime:
    runtime = runtime or ControllerRuntime(cfg)
    if stop is not None:
        watcher = threading.Thread(
            target=lambda: (stop.wait(), runtime.stop.set()), daemon=True)
        watcher.start()
    runtime.run(ready)
    return runtime
