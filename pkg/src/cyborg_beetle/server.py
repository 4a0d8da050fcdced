"""Live protocol endpoint: the backpack side of the wire.

BackpackSession is the transport-free session logic: it decodes inbound
frames, queues stimulation commands to the simulator, acks them, and
emits stimulation markers, 100 Hz IMU telemetry, and 1 Hz heartbeats on
the simulated clock. A new request during an active train replaces it
(the marker stream then shows one merged active interval).

SimServer wraps a session in a TCP listener: one simulation loop thread
is the sole state mutator, any number of clients may connect; inbound
bytes are drained once per simulation step, outbound frames fan out to
every client and are mirrored verbatim to a binary log for replay. The
--time-scale factor runs the simulated clock faster than wall time.

An optional control goal runs the closed-loop controller inside the
loop thread at 20 Hz using operator-side mocap estimates; commands from
connected pilots pre-empt the controller for one refractory period.
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .controller import ControlGoal, MocapEstimator, StateEstimate, \
    control_step
from .dose import DoseNoise, NO_NOISE
from .dynamics import Simulator, TrimConfig
from .geometry import GRAVITY, Vec3, world_to_body
from .protocol import Heartbeat, ImuTelemetry, StimAck, \
    StimMarker, StimRequest, StreamDecoder, encode
from .stimulus import StimulusError

TELEMETRY_PERIOD_MS = 10.0
HEARTBEAT_PERIOD_MS = 1000.0
CONTROLLER_PERIOD_MS = 50.0


def imu_frame_from_sim(sim: Simulator) -> ImuTelemetry:
    """Quantized IMU sample of the simulator's current state."""
    q = sim.attitude
    a = sim.accel_world
    f_body = world_to_body(q, Vec3(a.x, a.y, a.z + GRAVITY))
    return ImuTelemetry.from_si(
        t_us=int(round(sim.t_ms * 1000.0)),
        accel_mps2=(f_body.x, f_body.y, f_body.z),
        gyro_dps=tuple(sim.body_rates),
        quat=tuple(sim.attitude),
    )


class BackpackSession:
    """Session logic against a virtual clock; no transport attached."""

    def __init__(self, sim: Simulator) -> None:
        self.sim = sim
        self._decoder = StreamDecoder()
        self._seq = 0
        self.malformed = 0
        self._next_telemetry = TELEMETRY_PERIOD_MS
        self._next_heartbeat = HEARTBEAT_PERIOD_MS
        self._last_active = False
        self.last_pilot_command_ms: float | None = None

    def _next_seq(self) -> int:
        s = self._seq
        self._seq = (self._seq + 1) & 0xFFFF
        return s

    def handle_bytes(self, data: bytes) -> tuple[list[bytes], list[bytes]]:
        """Feed inbound bytes; returns (ack frames, decoded inbound
        frames re-encoded verbatim for the mirror log). Commands are
        queued onto the simulator; malformed input bumps a counter."""
        frames, errors = self._decoder.feed(data)
        self.malformed += len(errors)
        out: list[bytes] = []
        logged: list[bytes] = []
        for f in frames:
            logged.append(encode(f.message, f.seq))
            if not isinstance(f.message, StimRequest):
                continue  # only requests travel toward the backpack
            try:
                cmd = f.message.to_command()
            except StimulusError:
                self.malformed += 1
                continue
            self.sim.queue_command(cmd)
            self.last_pilot_command_ms = self.sim.t_ms
            start_us = int(round((self.sim.t_ms + self.sim.dt_ms) * 1000.0))
            out.append(encode(StimAck(f.seq, start_us), self._next_seq()))
        return out, logged

    def poll(self) -> list[bytes]:
        """Timed emissions after one simulator step: marker transitions
        first, then due telemetry, then heartbeats."""
        sim = self.sim
        out: list[bytes] = []
        t_us = int(round(sim.t_ms * 1000.0))
        active = sim.stim_active()
        if active != self._last_active:
            out.append(encode(StimMarker(t_us, active), self._next_seq()))
            self._last_active = active
        if sim.t_ms >= self._next_telemetry - 1e-9:
            out.append(encode(imu_frame_from_sim(sim), self._next_seq()))
            self._next_telemetry += TELEMETRY_PERIOD_MS
        if sim.t_ms >= self._next_heartbeat - 1e-9:
            out.append(encode(Heartbeat(t_us), self._next_seq()))
            self._next_heartbeat += HEARTBEAT_PERIOD_MS
        return out


@dataclass
class Scenario:
    """Everything a live run needs besides the port."""

    trim: TrimConfig = field(default_factory=TrimConfig)
    dose_noise: DoseNoise = NO_NOISE
    seed: int = 0
    start_heading_deg: float | None = 0.0
    goal: ControlGoal | None = None
    enforce_arena: bool = False


class SimServer:
    """TCP endpoint running the simulator in (scaled) real time."""

    def __init__(self, port: int = 0, scenario: Scenario | None = None,
                 time_scale: float = 1.0,
                 frame_log: Path | str | None = None) -> None:
        if time_scale <= 0.0:
            raise ValueError("time scale must be positive")
        self.scenario = scenario or Scenario()
        sc = self.scenario
        self.sim = Simulator(trim=sc.trim, dose_noise=sc.dose_noise,
                             seed=sc.seed,
                             start_heading_deg=sc.start_heading_deg,
                             enforce_arena=sc.enforce_arena)
        self.session = BackpackSession(self.sim)
        self.time_scale = time_scale
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind(("127.0.0.1", port))
        self._listener.listen(8)
        self.port = self._listener.getsockname()[1]
        self._inbound: queue.Queue[bytes] = queue.Queue()
        self._clients: list[socket.socket] = []
        self._clients_lock = threading.Lock()
        self._running = threading.Event()
        self._threads: list[threading.Thread] = []
        self._log_path = Path(frame_log) if frame_log else None
        self._log_file = None
        self._estimator = MocapEstimator(seed=sc.seed)
        self._estimate: StateEstimate | None = None
        self._last_ctl_cmd_ms: float | None = None
        self._next_ctl_ms = 0.0

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._running.set()
        if self._log_path:
            self._log_file = open(self._log_path, "wb")
        for fn in (self._accept_loop, self._sim_loop):
            th = threading.Thread(target=fn, daemon=True)
            th.start()
            self._threads.append(th)

    def stop(self) -> None:
        self._running.clear()
        try:
            self._listener.close()
        except OSError:
            pass
        for th in self._threads:
            th.join(timeout=2.0)
        with self._clients_lock:
            for c in self._clients:
                try:
                    c.close()
                except OSError:
                    pass
            self._clients.clear()
        if self._log_file:
            self._log_file.close()
            self._log_file = None

    # -- network frontend ------------------------------------------------------

    def _accept_loop(self) -> None:
        while self._running.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._clients_lock:
                self._clients.append(conn)
            th = threading.Thread(target=self._reader_loop, args=(conn,),
                                  daemon=True)
            th.start()
            self._threads.append(th)

    def _reader_loop(self, conn: socket.socket) -> None:
        while self._running.is_set():
            try:
                data = conn.recv(4096)
            except OSError:
                break
            if not data:
                break
            self._inbound.put(data)
        with self._clients_lock:
            if conn in self._clients:
                self._clients.remove(conn)

    def _broadcast(self, frame: bytes) -> None:
        if self._log_file:
            self._log_file.write(frame)
        with self._clients_lock:
            dead = []
            for c in self._clients:
                try:
                    c.sendall(frame)
                except OSError:
                    dead.append(c)
            for c in dead:
                self._clients.remove(c)

    # -- simulation loop ---------------------------------------------------------

    def _controller_tick(self) -> None:
        goal = self.scenario.goal
        est = self._estimator.update(self.sim.t_ms, self.sim.position)
        if est is not None:
            self._estimate = est
        if goal is None:
            return
        # pilot commands pre-empt the controller for one refractory
        pilot_ms = self.session.last_pilot_command_ms
        if (pilot_ms is not None
                and self.sim.t_ms - pilot_ms < goal.refractory_ms):
            return
        cmd, _ = control_step(self._estimate, goal, self.sim.t_ms,
                              self._last_ctl_cmd_ms)
        if cmd is not None:
            self.sim.queue_command(cmd)
            self._last_ctl_cmd_ms = self.sim.t_ms

    def _sim_loop(self) -> None:
        wall_start = time.monotonic()
        sim_start_ms = self.sim.t_ms
        while self._running.is_set():
            target_ms = (sim_start_ms + (time.monotonic() - wall_start)
                         * 1000.0 * self.time_scale)
            stepped = False
            while self.sim.t_ms < target_ms and self._running.is_set():
                while not self._inbound.empty():
                    try:
                        data = self._inbound.get_nowait()
                    except queue.Empty:
                        break
                    acks, logged = self.session.handle_bytes(data)
                    for frame in logged:
                        if self._log_file:
                            self._log_file.write(frame)
                    for frame in acks:
                        self._broadcast(frame)
                if self.sim.t_ms >= self._next_ctl_ms - 1e-9:
                    self._controller_tick()
                    self._next_ctl_ms += CONTROLLER_PERIOD_MS
                self.sim.step()
                for frame in self.session.poll():
                    self._broadcast(frame)
                stepped = True
            if not stepped:
                time.sleep(0.0005)
