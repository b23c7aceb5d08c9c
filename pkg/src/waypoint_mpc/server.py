"""WebSocket bridge between the closed planning loop and a steering UI.

The planning loop runs on its own thread and talks to connected clients
through two bounded channels: a command queue in (applied atomically between
iterations, acknowledged with the iteration index at which they took effect)
and per-client frame buffers out (newest wins, so a slow client never stalls
planning).
"""

from __future__ import annotations

import asyncio
import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import websockets

from .harness import Event, Scenario, apply_event, obstacle_to_dict
from .planner import Planner

log = logging.getLogger("waypoint_mpc.server")

COMMAND_TYPES = ("move_obstacle", "move_waypoint", "move_goal", "pause", "resume", "reset")


def _hello(scenario: Scenario) -> dict:
    p = scenario.params
    return {
        "type": "hello",
        "scenario": {
            "robot": {
                "link_lengths": list(scenario.robot.link_lengths),
                "joint_limits": [list(lim) for lim in scenario.robot.joint_limits],
                "spheres": [
                    {"link": s.link, "fraction": s.fraction, "radius": s.radius}
                    for s in scenario.robot.spheres
                ],
            },
            "world": [obstacle_to_dict(ob) for ob in scenario.world.obstacles],
            "start": scenario.start.tolist(),
            "waypoints": [w.tolist() for w in scenario.waypoints],
            "params": {"h": p.model.h, "n_max": p.n_max, "eps": p.eps},
        },
    }


@dataclass
class _Client:
    send_queue: asyncio.Queue
    socket: object
    id: int = 0


@dataclass
class ServerState:
    paused: bool = False
    finished: bool = False
    stop: bool = False
    iteration: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class PlanningServer:
    """Owns the planner thread, the websocket endpoint, and their bridges."""

    def __init__(self, scenario: Scenario, realtime: bool = True, max_steps: int | None = None):
        self.scenario = scenario
        self.realtime = realtime
        self.max_steps = max_steps
        self.commands: queue.Queue = queue.Queue(maxsize=256)
        self.state = ServerState()
        self.clients: dict[int, _Client] = {}
        self._next_client = 1
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._ws_server = None
        self.port: int | None = None

    # -- planning thread ------------------------------------------------------

    def _fresh_run(self):
        p = self.scenario.params
        planner = Planner(p.planner_params(), self.scenario.world, self.scenario.waypoints)
        m = p.model.m
        x = np.concatenate([self.scenario.start, np.zeros(2 * m)])
        u = np.zeros(m)
        pending = list(self.scenario.events)
        return planner, x, u, pending

    def _planning_loop(self) -> None:
        p = self.scenario.params
        h = p.model.h
        m = p.model.m
        planner, x, u, pending = self._fresh_run()
        n = 0
        while not self.state.stop:
            t_begin = time.perf_counter()

            reset = self._drain_commands(planner, n)
            if reset:
                planner, x, u, pending = self._fresh_run()
                n = 0
                self.state.finished = False

            if self.state.paused or self.state.finished:
                status = "finished" if self.state.finished else "paused"
                self._broadcast(self._status_frame(planner, x, n, status))
                time.sleep(0.2)
                continue

            t_now = n * h
            while pending and pending[0].t <= t_now + 1e-9:
                apply_event(planner, pending.pop(0), self.scenario.robot)

            step = planner.plan_step(x, u, new_goal=(n == 0))
            x = step.xs[1].copy()
            u = step.us[1].copy()
            if planner.horizon.n_split == 0 and planner.sequence.can_advance:
                planner.advance_waypoint()

            self.state.iteration = n
            self._broadcast(self._frame(step.record, planner, x))

            if planner.sequence.on_final_pair and not pending:
                q_err = float(np.max(np.abs(x[:m] - planner.sequence.final_goal)))
                if q_err <= p.eps + 1e-9 and float(np.max(np.abs(x[m:]))) <= 1e-8:
                    self.state.finished = True
            n += 1
            if self.max_steps is not None and n >= self.max_steps:
                self.state.finished = True

            if self.realtime:
                remaining = h - (time.perf_counter() - t_begin)
                if remaining > 0:
                    time.sleep(remaining)

    def _drain_commands(self, planner: Planner, n: int) -> bool:
        """Apply queued client commands; returns True when a reset happened."""
        want_reset = False
        while True:
            try:
                message, client_id = self.commands.get_nowait()
            except queue.Empty:
                break
            kind = message.get("type")
            ok = True
            error = None
            if kind == "pause":
                self.state.paused = True
            elif kind == "resume":
                self.state.paused = False
            elif kind == "reset":
                want_reset = True
            elif kind in ("move_obstacle", "move_waypoint", "move_goal"):
                event = Event(t=0.0, action=kind, payload=message.get("payload", {}))
                try:
                    ok = apply_event(planner, event, self.scenario.robot)
                    if not ok:
                        error = "command skipped (unreachable or out of range)"
                except Exception as exc:  # malformed payloads must not kill the loop
                    ok = False
                    error = str(exc)
            else:
                ok = False
                error = f"unknown command type {kind!r}"
            ack = {
                "type": "ack" if ok else "error",
                "command": kind,
                "iteration": n,
            }
            if error:
                ack["message"] = error
            self._send_to(client_id, ack)
        return want_reset

    # -- frames ----------------------------------------------------------------

    def _frame(self, record, planner: Planner, x: np.ndarray) -> dict:
        m = self.scenario.params.model.m
        return {
            "type": "frame",
            "n": record.n,
            "t": record.n * self.scenario.params.model.h,
            "q": record.xs[0][:m].tolist(),
            "qdot": record.xs[0][m : 2 * m].tolist(),
            "horizon": {"n_split": record.n_split, "n_horizon": record.n_horizon},
            "plan": record.xs[:, :m].tolist(),
            "world": [obstacle_to_dict(ob) for ob in planner.world.obstacles],
            "waypoints": [p.tolist() for p in planner.sequence.points],
            "cursor": planner.sequence.cursor,
            "goal": planner.sequence.final_goal.tolist(),
            "min_distance": None if np.isinf(record.min_distance) else record.min_distance,
            "status": record.status,
            "metrics_partial": {
                "iteration": record.n,
                "solve_time": record.solve_time,
                "kkt_residual": record.kkt_residual,
            },
        }

    def _status_frame(self, planner: Planner, x: np.ndarray, n: int, status: str) -> dict:
        m = self.scenario.params.model.m
        return {
            "type": "frame",
            "n": n,
            "t": n * self.scenario.params.model.h,
            "q": x[:m].tolist(),
            "qdot": x[m : 2 * m].tolist(),
            "horizon": {"n_split": planner.horizon.n_split, "n_horizon": planner.horizon.n_horizon},
            "plan": [x[:m].tolist()],
            "world": [obstacle_to_dict(ob) for ob in planner.world.obstacles],
            "waypoints": [p.tolist() for p in planner.sequence.points],
            "cursor": planner.sequence.cursor,
            "goal": planner.sequence.final_goal.tolist(),
            "min_distance": None,
            "status": status,
            "metrics_partial": {"iteration": n},
        }

    def _broadcast(self, frame: dict) -> None:
        if self._loop is None:
            return
        payload = json.dumps(frame)
        self._loop.call_soon_threadsafe(self._push_to_clients, payload)

    def _send_to(self, client_id: int, message: dict) -> None:
        if self._loop is None:
            return
        payload = json.dumps(message)
        self._loop.call_soon_threadsafe(self._push_to_client, client_id, payload)

    def _push_to_clients(self, payload: str) -> None:
        for client in list(self.clients.values()):
            self._offer(client, payload)

    def _push_to_client(self, client_id: int, payload: str) -> None:
        client = self.clients.get(client_id)
        if client is not None:
            self._offer(client, payload)

    @staticmethod
    def _offer(client: _Client, payload: str) -> None:
        q = client.send_queue
        if q.full():
            try:
                q.get_nowait()  # newest wins
            except asyncio.QueueEmpty:
                pass
        q.put_nowait(payload)

    # -- websocket side ----------------------------------------------------------

    async def _handler(self, socket) -> None:
        client = _Client(send_queue=asyncio.Queue(maxsize=4), socket=socket, id=self._next_client)
        self._next_client += 1
        self.clients[client.id] = client
        pump = asyncio.create_task(self._pump(client))
        try:
            await socket.send(json.dumps(_hello(self.scenario)))
            async for raw in socket:
                try:
                    message = json.loads(raw)
                    if not isinstance(message, dict) or message.get("type") not in COMMAND_TYPES:
                        raise ValueError(f"unsupported command {raw[:80]!r}")
                except ValueError as exc:
                    await socket.send(json.dumps({"type": "error", "message": str(exc)}))
                    continue
                try:
                    self.commands.put_nowait((message, client.id))
                except queue.Full:
                    await socket.send(json.dumps({"type": "error", "message": "command queue full"}))
        finally:
            pump.cancel()
            self.clients.pop(client.id, None)

    async def _pump(self, client: _Client) -> None:
        while True:
            payload = await client.send_queue.get()
            await client.socket.send(payload)

    async def start(self, host: str = "127.0.0.1", port: int = 8765) -> int:
        self._loop = asyncio.get_running_loop()
        self._ws_server = await websockets.serve(self._handler, host, port)
        self.port = self._ws_server.sockets[0].getsockname()[1]
        self._thread = threading.Thread(target=self._planning_loop, daemon=True)
        self._thread.start()
        log.info("serving on ws://%s:%d", host, self.port)
        return self.port

    async def stop(self) -> None:
        self.state.stop = True
        if self._ws_server is not None:
            self._ws_server.close()
            await self._ws_server.wait_closed()
        if self._thread is not None:
            self._thread.join(timeout=2.0)


async def serve_forever(scenario: Scenario, host: str, port: int, realtime: bool) -> None:
    server = PlanningServer(scenario, realtime=realtime)
    await server.start(host, port)
    try:
        await asyncio.Future()
    finally:
        await server.stop()
