import csv
import io
import socket
import subprocess
import sys
import time

import pytest

from xdup.bench import COLUMNS
from xdup.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bench_plain_row(capsys):
    code, out, _ = run(capsys, "bench", "fpsi", "--protocol", "plain", "--l", "127", "--nq", "64", "--nr", "64", "--tau", "7")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and tuple(rows[0]) == COLUMNS
    assert int(rows[0]["ot_total"]) == 64 * 127 + 64 * 64


def test_bench_non_timing_columns_are_deterministic(capsys):
    args = ("bench", "fpsi", "--protocol", "ssb", "--l", "15", "--nq", "3", "--nr", "5", "--seed", "4", "--no-header")
    first = run(capsys, *args)[1].split(",")
    second = run(capsys, *args)[1].split(",")
    i = COLUMNS.index("seconds")
    assert first[:i] + first[i + 1 :] == second[:i] + second[i + 1 :]


def test_usage_errors_exit_2(capsys):
    code, _, err = run(capsys, "bench", "fpsi", "--protocol", "ssb", "--nq", "1")
    assert code == 2 and "not applicable" in err
    with pytest.raises(SystemExit) as info:
        main(["bench", "fpsi", "--l", "0"])
    assert info.value.code == 2


def test_oracle_check(capsys):
    code, out, _ = run(capsys, "oracle-check", "--instances", "3", "--max-l", "15", "--max-n", "5")
    assert code == 0 and "0 mismatches" in out


def test_data_embed_calibrate_flow(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert run(capsys, "gen-data", "--n", "300", "--dups", "60", "--nondups", "60", "--out", str(corpus))[0] == 0
    params = tmp_path / "params.txt"
    code, out, _ = run(capsys, "embed", "--params", str(params), "--l", "127", "--in", str(corpus / "reference.csv"), "--out", str(tmp_path / "ref.emb"))
    assert code == 0 and "embedded 300" in out
    assert len((tmp_path / "ref.emb").read_text().splitlines()) == 300
    code, out, _ = run(capsys, "calibrate", "--params", str(params), "--corpus", str(corpus), "--target-fpr", "0.05", "--write")
    assert code == 0 and out.startswith("tau=")
    assert "tau=" in params.read_text()


def test_args_from_file(tmp_path, capsys):
    argfile = tmp_path / "args.txt"
    argfile.write_text("# bench settings\nfpsi\n--l 15\n--nq 2\n--nr 3\n")
    code, out, _ = run(capsys, "bench", f"@{argfile}")
    assert code == 0 and out.splitlines()[1].startswith("plain,15,")


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_nodes_and_clients_as_processes(tmp_path):
    params = tmp_path / "params.txt"
    params.write_text("xdup-embedding v1\nl=127\nq=2\nn_a=7\nseed=0\ntau=20\n")
    ports = {k: _free_port() for k in ("p1", "c1", "p2", "c2")}
    xdup = [sys.executable, "-m", "xdup.cli"]
    n2 = subprocess.Popen(xdup + ["node", "--id", "2", "--listen-peer", f"127.0.0.1:{ports['p2']}", "--listen-client", f"127.0.0.1:{ports['c2']}", "--store", str(tmp_path / "s2"), "--params", str(params)])
    n1 = subprocess.Popen(xdup + ["node", "--id", "1", "--listen-peer", f"127.0.0.1:{ports['p1']}", "--listen-client", f"127.0.0.1:{ports['c1']}", "--peer", f"127.0.0.1:{ports['p2']}", "--store", str(tmp_path / "s1"), "--params", str(params)])
    try:
        for port in (ports["c1"], ports["c2"]):
            for _ in range(100):
                try:
                    socket.create_connection(("127.0.0.1", port)).close()
                    break
                except OSError:
                    time.sleep(0.1)
        rows = "first_name,last_name,dob,gender,mother_first_name,mother_last_name,father_first_name\n"
        a = tmp_path / "a.csv"
        a.write_text(rows + "ann,lee,1980-02-03,F,mary,lee,john\nbob,ray,1971-05-06,M,sue,ray,tom\n")
        b = tmp_path / "b.csv"
        b.write_text(rows + "anne,lee,1980-02-03,F,mary,lee,john\n")
        common = ["--node1", f"127.0.0.1:{ports['c1']}", "--node2", f"127.0.0.1:{ports['c2']}", "--params", str(params)]

        def cli(*args):
            return subprocess.run(xdup + list(args), capture_output=True, text=True, timeout=120)

        assert cli("setup", "--team", "1", "--in", str(a), *common).returncode == 0
        assert cli("setup", "--team", "2", "--in", str(b), *common).returncode == 0
        again = cli("setup", "--team", "2", "--in", str(b), *common)
        assert again.returncode == 1 and "error" in again.stderr
        handle = cli("query", "--team", "2", "--in", str(b), *common).stdout.strip()
        got = cli("retrieve", "--team", "2", "--handle", handle, *common)
        assert got.returncode == 0
        assert got.stdout.splitlines()[1:] == ["1,1,1,1"]
    finally:
        n1.terminate()
        n2.terminate()
        n1.wait(10)
        n2.wait(10)
