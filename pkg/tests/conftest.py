import threading

import numpy as np
import pytest

from xdup.net import loopback_pair
from xdup.ot import DealerOT, OtReceiver, OtSender


def run_ot(sender_fn, receiver_fn, backend=None, backends=None):
    """Run ``sender_fn(OtSender)`` and ``receiver_fn(OtReceiver)`` over loopback."""
    if backends is None:
        backend = backend or DealerOT(seed=7)
        backends = (backend, backend)
    a, b = loopback_pair()
    out = {}

    def side(name, fn, party):
        try:
            out[name] = fn(party)
        except BaseException as exc:  # surfaced below
            out[name + "_err"] = exc
            a.close()
            b.close()

    s = OtSender(a, backends[0])
    r = OtReceiver(b, backends[1])
    threads = [
        threading.Thread(target=side, args=("s", sender_fn, s)),
        threading.Thread(target=side, args=("r", receiver_fn, r)),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(120)
    a.close()
    b.close()
    for key in ("s_err", "r_err"):
        if key in out:
            raise out[key]
    return out["s"], out["r"], s, r


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


def start_cluster(dimension, tau, store_root=None, **kw):
    """Node 2 first (node 1 dials it); returns the two started nodes."""
    from xdup.system import ComputeNode, NodeConfig

    def store(n):
        return None if store_root is None else store_root / f"node{n}"

    n2 = ComputeNode(NodeConfig(2, dimension, tau, store(2), **kw)).start()
    n1 = ComputeNode(NodeConfig(1, dimension, tau, store(1), peer_address=n2.peer_listen_address, **kw)).start()
    return n1, n2


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
