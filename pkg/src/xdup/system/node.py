"""Compute node service.

Each node listens on a client port (field teams upload shares and fetch
result shares) and a peer port (the other node). Node 1 drives processing:
once it holds a query's shares it opens a peer session to node 2, both run
secret-shared FPSI of the query against every other team's shares, and a
prepare/commit exchange appends the query shares to the querying team at
both nodes or at neither.
"""

from __future__ import annotations

import hashlib
import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import Rng
from ..fpsi import BatchingNotApplicable, FpsiParams
from ..fpsi import shared
from ..net import Connection, ErrorCode, FrameType, NetShape, ProtocolError, RemoteError, connect, listen
from ..ot import DealerOT, GroupOT
from .store import ShareStore, StoreError, unpack_shares
from .wire import recv_any, recv_message, send_message

log = logging.getLogger(__name__)

MAX_OFFLINE_QUERY = 2048
MODES = ("online", "offline")
PROTOCOL_CHOICES = ("auto", "ss", "ssb")


class QueryFailed(Exception):
    pass


@dataclass
class NodeConfig:
    node_id: int
    dimension: int
    tau: int
    store_dir: str | Path | None = None
    client_host: str = "127.0.0.1"
    client_port: int = 0
    peer_host: str = "127.0.0.1"
    peer_port: int = 0
    peer_address: tuple[str, int] | None = None
    ot_backend: str = "dealer"
    dealer_seed: int = 0
    protocol: str = "auto"
    result_ttl: float = 24 * 3600.0
    peer_timeout: float = 120.0
    shape: NetShape | None = None

    def __post_init__(self):
        if self.node_id not in (1, 2):
            raise ValueError("node id must be 1 or 2")
        if not 0 <= self.tau <= self.dimension:
            raise ValueError("tau outside [0, l]")
        if self.protocol not in PROTOCOL_CHOICES:
            raise ValueError(f"protocol must be one of {PROTOCOL_CHOICES}")
        if self.ot_backend not in ("dealer", "group"):
            raise ValueError("ot backend must be dealer or group")


@dataclass
class PendingQuery:
    handle: str
    team: int
    shares: np.ndarray
    mode: str
    protocol: str


@dataclass
class StoredResult:
    status: str  # "running" | "done" | "failed"
    team: int
    nq: int
    share: np.ndarray | None = None
    teams: list[int] = field(default_factory=list)
    lengths: list[int] = field(default_factory=list)
    error: str = ""
    created: float = field(default_factory=time.monotonic)


def choose_protocol(setting: str, nq: int) -> str:
    if setting == "auto":
        return "ss" if nq == 1 else "ssb"
    if setting == "ssb" and nq < 2:
        return "ss"
    return setting


class ComputeNode:
    def __init__(self, config: NodeConfig):
        self.config = config
        self.store = ShareStore(config.dimension, config.store_dir)
        self._cond = threading.Condition()
        self._pending: dict[str, PendingQuery] = {}
        self._results: dict[str, StoredResult] = {}
        self._process_lock = threading.Lock()
        self._listeners: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()
        self.rng = Rng()
        self.client_address: tuple[str, int] | None = None
        self.peer_listen_address: tuple[str, int] | None = None

    # -- lifecycle

    def start(self) -> "ComputeNode":
        c = self.config
        client = listen(c.client_host, c.client_port)
        peer = listen(c.peer_host, c.peer_port)
        self._listeners = [client, peer]
        self.client_address = client.getsockname()[:2]
        self.peer_listen_address = peer.getsockname()[:2]
        for sock, handler in ((client, self._serve_client), (peer, self._serve_peer)):
            t = threading.Thread(target=self._accept_loop, args=(sock, handler), daemon=True)
            t.start()
            self._threads.append(t)
        log.info("node %d: clients on %s, peer on %s", c.node_id, self.client_address, self.peer_listen_address)
        return self

    def stop(self):
        self._stopping.set()
        for sock in self._listeners:
            try:
                sock.close()
            except OSError:
                pass
        with self._cond:
            self._cond.notify_all()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def serve_forever(self):
        self.start()
        try:
            while not self._stopping.is_set():
                time.sleep(0.5)
        finally:
            self.stop()

    def _accept_loop(self, sock: socket.socket, handler):
        while not self._stopping.is_set():
            try:
                s, _ = sock.accept()
            except OSError:
                return
            conn = Connection(s, self.config.shape if handler == self._serve_peer else None)
            threading.Thread(target=self._run_handler, args=(handler, conn), daemon=True).start()

    def _run_handler(self, handler, conn: Connection):
        try:
            handler(conn)
        except (ConnectionError, OSError):
            pass
        except ProtocolError as exc:
            conn.send_error(ErrorCode.PROTOCOL, str(exc))
        except Exception as exc:  # noqa: BLE001 - report, keep serving
            log.exception("node %d: handler failed", self.config.node_id)
            conn.send_error(ErrorCode.INTERNAL, str(exc))
        finally:
            conn.close()

    # -- client link

    def _serve_client(self, conn: Connection):
        while True:
            try:
                ftype, header, body = recv_any(conn)
            except ConnectionError:
                return
            if ftype == FrameType.SHARES_PUT:
                self._handle_put(conn, header, body)
            elif ftype == FrameType.RESULT_GET:
                self._handle_result(conn, header)
            elif ftype == FrameType.INFO_GET:
                with self.store.lock.read():
                    lengths = self.store.lengths()
                send_message(
                    conn,
                    FrameType.INFO_DATA,
                    {
                        "node": self.config.node_id,
                        "dimension": self.config.dimension,
                        "tau": self.config.tau,
                        "teams": {str(t): n for t, n in lengths.items()},
                    },
                )
            else:
                conn.send_error(ErrorCode.PROTOCOL, f"unexpected {ftype.name} on client link")

    def _handle_put(self, conn: Connection, header: dict, body: bytes):
        try:
            op = header["op"]
            team = int(header["team"])
            count = int(header["count"])
            if int(header.get("dimension", self.config.dimension)) != self.config.dimension:
                raise ValueError(f"dimension {header.get('dimension')} != node dimension {self.config.dimension}")
            shares = unpack_shares(body, count, self.config.dimension)
        except (KeyError, ValueError, TypeError) as exc:
            conn.send_error(ErrorCode.PARAMS, f"bad SHARES_PUT: {exc}")
            return
        if op == "setup":
            try:
                self.store.create_team(team, shares)
            except StoreError as exc:
                conn.send_error(ErrorCode.CONFLICT, str(exc))
                return
            send_message(conn, FrameType.SHARES_ACK, {"team": team, "length": self.store.length(team)})
            return
        if op != "query":
            conn.send_error(ErrorCode.PARAMS, f"unknown op {op!r}")
            return
        handle = str(header.get("handle", ""))
        mode = header.get("mode", "offline")
        protocol = header.get("protocol", self.config.protocol)
        problem = None
        if not handle:
            problem = "query needs a handle"
        elif mode not in MODES:
            problem = f"mode must be one of {MODES}"
        elif mode == "online" and count != 1:
            problem = f"online queries carry exactly one record, got {count}"
        elif count < 1 or count > MAX_OFFLINE_QUERY:
            problem = f"query size {count} outside [1, {MAX_OFFLINE_QUERY}]"
        elif protocol not in PROTOCOL_CHOICES:
            problem = f"protocol must be one of {PROTOCOL_CHOICES}"
        if problem:
            conn.send_error(ErrorCode.PARAMS, problem)
            return
        with self.store.lock.read():
            known = self.store.has_team(team)
        if not known:
            conn.send_error(ErrorCode.NOT_FOUND, f"unknown team {team}")
            return
        with self._cond:
            if handle in self._pending or handle in self._results:
                conn.send_error(ErrorCode.CONFLICT, f"handle {handle} already in use")
                return
            self._pending[handle] = PendingQuery(handle, team, shares, mode, protocol)
            self._results[handle] = StoredResult("running", team, count)
            self._cond.notify_all()
        send_message(conn, FrameType.SHARES_ACK, {"handle": handle, "team": team, "count": count})
        if self.config.node_id == 1:
            threading.Thread(target=self._process_as_s1, args=(handle,), daemon=True).start()

    def _handle_result(self, conn: Connection, header: dict):
        handle = str(header.get("handle", ""))
        timeout = float(header.get("timeout", 600.0))
        deadline = time.monotonic() + timeout
        with self._cond:
            self._purge_locked()
            while True:
                res = self._results.get(handle)
                if res is None:
                    conn.send_error(ErrorCode.NOT_FOUND, f"unknown handle {handle}")
                    return
                if res.status != "running":
                    break
                left = deadline - time.monotonic()
                if left <= 0 or self._stopping.is_set():
                    conn.send_error(ErrorCode.FAILED, f"query {handle} still running")
                    return
                self._cond.wait(min(left, 1.0))
        if res.status == "failed":
            conn.send_error(ErrorCode.FAILED, f"query {handle} failed: {res.error}")
            return
        nq, ncols = res.share.shape
        body = np.packbits(res.share.reshape(-1), bitorder="little").tobytes()
        send_message(conn, FrameType.RESULT_DATA, {"handle": handle, "nq": nq, "ncols": ncols}, body)
        send_message(conn, FrameType.LENGTHS_DATA, {"teams": res.teams, "lengths": res.lengths})

    def _purge_locked(self):
        now = time.monotonic()
        for h in [h for h, r in self._results.items() if r.status != "running" and now - r.created > self.config.result_ttl]:
            del self._results[h]

    # -- processing

    def _backend(self, handle: str, role: str):
        if self.config.ot_backend == "dealer":
            digest = hashlib.blake2b(f"{self.config.dealer_seed}:{handle}".encode(), digest_size=8).digest()
            return DealerOT(int.from_bytes(digest, "little"))
        return GroupOT(self.rng.spawn(role))

    def _snapshot(self, team: int, teams: list[int], lengths: list[int]) -> np.ndarray:
        """Concatenated shares of every other team, truncated to ``lengths``."""
        parts = [self.store.shares(t, n) for t, n in zip(teams, lengths) if t != team and n]
        if not parts:
            return np.zeros((0, self.config.dimension), dtype=np.uint8)
        return np.concatenate(parts)

    def _finish(self, handle: str, **updates):
        with self._cond:
            res = self._results.get(handle)
            if res is not None:
                for k, v in updates.items():
                    setattr(res, k, v)
                res.created = time.monotonic()
            self._pending.pop(handle, None)
            self._cond.notify_all()

    def _process_as_s1(self, handle: str):
        c = self.config
        conn = None
        try:
            with self._process_lock:
                with self._cond:
                    pending = self._pending[handle]
                with self.store.lock.read():
                    lengths_map = self.store.lengths()
                teams = sorted(lengths_map)
                lengths = [0 if t == pending.team else lengths_map[t] for t in teams]
                with self.store.lock.read():
                    responder = self._snapshot(pending.team, teams, lengths)
                nq = pending.shares.shape[0]
                protocol = choose_protocol(pending.protocol, nq)
                if c.peer_address is None:
                    raise QueryFailed("node 1 has no peer address")
                conn = connect(*c.peer_address, shape=c.shape)
                send_message(
                    conn,
                    FrameType.PEER_PROCESS,
                    {
                        "handle": handle,
                        "team": pending.team,
                        "nq": nq,
                        "teams": teams,
                        "lengths": lengths,
                        "protocol": protocol,
                        "dimension": c.dimension,
                        "tau": c.tau,
                    },
                )
                recv_message(conn, FrameType.PEER_READY)
                share = self._run_fpsi(conn, 1, handle, pending.shares, responder, protocol)
                send_message(conn, FrameType.PEER_PREPARE, {"handle": handle})
                recv_message(conn, FrameType.PEER_ACK)
                send_message(conn, FrameType.PEER_COMMIT, {"handle": handle})
                recv_message(conn, FrameType.PEER_ACK)
                self.store.append(pending.team, pending.shares)
            self._finish(handle, status="done", share=share, teams=teams, lengths=lengths)
        except Exception as exc:  # noqa: BLE001 - recorded as a failed query
            log.warning("node 1: query %s failed: %s", handle, exc)
            if conn is not None and not isinstance(exc, RemoteError):
                conn.send_error(ErrorCode.FAILED, str(exc))
            self._finish(handle, status="failed", error=str(exc))
        finally:
            if conn is not None:
                conn.close()

    def _run_fpsi(self, conn: Connection, node: int, handle: str, q: np.ndarray, r: np.ndarray, protocol: str) -> np.ndarray:
        nq, nr = q.shape[0], r.shape[0]
        if nr == 0:
            return np.zeros((nq, 0), dtype=np.uint8)
        params = FpsiParams(self.config.dimension, self.config.tau)
        backend = self._backend(handle, "receiver" if node == 1 else "sender")
        try:
            if node == 1:
                return shared.node1(conn, q, r, params, backend, protocol=protocol)
            return shared.node2(conn, q, r, params, backend, protocol=protocol, rng=self.rng.spawn(handle))
        except BatchingNotApplicable as exc:
            raise QueryFailed(str(exc)) from None

    # -- peer link (node 2)

    def _serve_peer(self, conn: Connection):
        header, _ = recv_message(conn, FrameType.PEER_PROCESS)
        handle = str(header["handle"])
        c = self.config
        try:
            if (header["dimension"], header["tau"]) != (c.dimension, c.tau):
                raise QueryFailed(f"peer runs (l, tau) = {(header['dimension'], header['tau'])}, here {(c.dimension, c.tau)}")
            pending = self._await_pending(handle)
            if pending.team != header["team"] or pending.shares.shape[0] != header["nq"]:
                raise QueryFailed("query shares at the two nodes disagree")
            teams, lengths = list(header["teams"]), list(header["lengths"])
            self._await_lengths(teams, lengths)
            with self._process_lock:
                with self.store.lock.read():
                    responder = self._snapshot(pending.team, teams, lengths)
                send_message(conn, FrameType.PEER_READY, {"handle": handle})
                share = self._run_fpsi(conn, 2, handle, pending.shares, responder, header["protocol"])
                recv_message(conn, FrameType.PEER_PREPARE)
                send_message(conn, FrameType.PEER_ACK, {"handle": handle, "phase": "prepare"})
                recv_message(conn, FrameType.PEER_COMMIT)
                self.store.append(pending.team, pending.shares)
                send_message(conn, FrameType.PEER_ACK, {"handle": handle, "phase": "commit"})
            self._finish(handle, status="done", share=share, teams=teams, lengths=lengths)
        except Exception as exc:  # noqa: BLE001 - recorded as a failed query
            log.warning("node 2: query %s failed: %s", handle, exc)
            if not isinstance(exc, RemoteError):
                conn.send_error(ErrorCode.FAILED, str(exc))
            self._finish(handle, status="failed", error=str(exc))

    def _await_pending(self, handle: str) -> PendingQuery:
        deadline = time.monotonic() + self.config.peer_timeout
        with self._cond:
            while handle not in self._pending:
                left = deadline - time.monotonic()
                if left <= 0:
                    raise QueryFailed(f"query shares for {handle} never arrived at node 2")
                self._cond.wait(min(left, 1.0))
            return self._pending[handle]

    def _await_lengths(self, teams: list[int], lengths: list[int]):
        deadline = time.monotonic() + self.config.peer_timeout
        while True:
            with self.store.lock.read():
                have = self.store.lengths()
            if all(have.get(t, -1) >= n for t, n in zip(teams, lengths)):
                return
            if time.monotonic() > deadline:
                raise QueryFailed(f"node 2 database lags node 1: have {have}, need {dict(zip(teams, lengths))}")
            time.sleep(0.05)
