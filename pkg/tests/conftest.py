import os
import subprocess
import sys
import time
from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"
GOLDEN_SEED = "1729"
GOLDEN_SESSION = ["--L", "16", "--block", "8", "--cycles", "2",
                  "--wheel", "sector:0.1", "--sigma", "0.2"]


def cli(*args, env=None, check=None, **kw):
    """Run the CLI in a fresh interpreter and return the CompletedProcess."""
    full_env = dict(os.environ)
    full_env.pop("NOISEKEY_TEST_SEED", None)
    full_env.update(env or {})
    proc = subprocess.run([sys.executable, "-m", "noisekey", *map(str, args)],
                          capture_output=True, text=True, env=full_env, timeout=120, **kw)
    if check is not None:
        assert proc.returncode == check, proc.stderr
    return proc


def loopback(tmp_path, k0_a, k0_b=None, session=GOLDEN_SESSION, seed=GOLDEN_SEED,
             serve_extra=(), connect_extra=()):
    """Run serve and connect as two processes; return (serve, connect) results."""
    k0_b = k0_a if k0_b is None else k0_b
    env = dict(os.environ, NOISEKEY_TEST_SEED=seed)
    port_file = tmp_path / "port"
    server = subprocess.Popen(
        [sys.executable, "-m", "noisekey", "serve", "--listen", "127.0.0.1:0",
         "--port-file", port_file, "--k0", k0_b, *session, *serve_extra],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env=env)
    try:
        deadline = time.monotonic() + 30
        while not (port_file.exists() and port_file.read_text().strip()):
            if server.poll() is not None or time.monotonic() > deadline:
                raise RuntimeError(f"server did not start: {server.communicate()}")
            time.sleep(0.05)
        port = port_file.read_text().strip()
        client = subprocess.run(
            [sys.executable, "-m", "noisekey", "connect", "--peer", f"127.0.0.1:{port}",
             "--k0", k0_a, *session, *connect_extra],
            capture_output=True, text=True, env=env, timeout=60)
        out, err = server.communicate(timeout=60)
    finally:
        if server.poll() is None:
            server.kill()
            server.wait()
    return subprocess.CompletedProcess(server.args, server.returncode, out, err), client


@pytest.fixture
def golden_k0():
    return GOLDEN / "k0_16.nkey"


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
