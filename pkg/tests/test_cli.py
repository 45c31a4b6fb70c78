import csv
import io

import pytest

from conftest import GOLDEN, GOLDEN_SEED, cli
from noisekey.cli import main

GOLDEN_SIMULATE = ["simulate", "--cycles", "6", "--L", "500", "--block", "50",
                   "--sigma", "0.3", "--wheel", "sector:0.05", "--f-retain", "0.99"]


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def report(text):
    return dict(line.split(" ", 1) for line in text.strip().splitlines())


def test_simulate_noiseless_single_cycle():
    code, out = run("simulate", "--cycles", 1, "--sigma", 0, "--f-retain", 1, "--seed", 1)
    r = report(out)
    assert code == 0
    assert r["distilled"] == "1000" and r["bob_ber"] == "0"


def test_simulate_ledger_mode():
    code, out = run("simulate", "--cycles", 1000, "--f-retain", 0.9991, "--ledger-only")
    assert code == 0
    assert float(report(out)["distilled_fraction"]) == pytest.approx(0.659, abs=0.005)


@pytest.mark.parametrize("argv", [
    ["simulate", "--wheel", "sector:0.00001"],
    ["simulate", "--wheel", "hex:3"],
    ["simulate", "--coverage", "2", "--wheel", "uniform:4"],
    ["attack", "--k0-len", "30"],
    ["info", "--sigmas", ""],
    ["info", "--sigmas", "0.1"],
])
def test_guards_exit_2(argv):
    assert run(*argv)[0] == 2


def test_bad_flag_exit_2():
    assert cli("simulate", "--no-such-flag").returncode == 2


def test_simulate_restart_exit_3():
    code, out = run("simulate", "--L", 100, "--L-min", 99, "--f-retain", 0.9,
                    "--cycles", 3, "--seed", 1)
    assert code == 3 and report(out)["status"] == "restart-required"


def test_simulate_golden_csv(tmp_path):
    out = tmp_path / "s.csv"
    cli(*GOLDEN_SIMULATE, "--seed", GOLDEN_SEED, "--csv", out, check=0)
    assert out.read_bytes() == (GOLDEN / "simulate.csv").read_bytes()


def test_simulate_reproducible(tmp_path):
    args = ["simulate", "--cycles", 3, "--L", 200, "--sigma", 0.5, "--f-retain", 0.95,
            "--seed", 9, "--out-keystream"]
    a = cli(*args, tmp_path / "a", env={})
    b = cli(*args, tmp_path / "b", env={"NOISEKEY_TEST_SEED": "123"})
    assert a.stdout == b.stdout
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_env_seed_used_when_no_flag():
    a = cli("simulate", "--cycles", 2, env={"NOISEKEY_TEST_SEED": "5"}, check=0)
    b = cli("simulate", "--cycles", 2, env={"NOISEKEY_TEST_SEED": "5"}, check=0)
    assert a.stdout == b.stdout


def test_attack_examples():
    code, out = run("attack", "--k0-len", 8, "--sigma", 0, "--seed", 1)
    row = list(csv.DictReader(io.StringIO(out), delimiter="\t"))[0]
    assert code == 0 and row["true_rank"] == "1" and row["posterior_entropy"] == "0"
    assert row["theory_cost"] == "512"
    code, out = run("attack", "--k0-len", 8, "--wheel", "sector:0.02", "--sigma", 0.4,
                    "--seed", 1)
    row = list(csv.DictReader(io.StringIO(out), delimiter="\t"))[0]
    assert float(row["posterior_entropy"]) >= 7


def test_attack_sweep_rows():
    code, out = run("attack", "--k0-len", 4, "--dphi", "0.1,0.2", "--sigma", "0,0.3",
                    "--transcript-bits", 8, "--seed", 2)
    assert code == 0 and len(out.strip().splitlines()) == 1 + 4


def test_info_rows_and_determinism(tmp_path):
    args = ["info", "--sigmas", "0.3,0.785398163", "--dphis", "0", "--Ms", "4",
            "--samples", 20000, "--seed", 3]
    code, out = run(*args)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 4
    sym = [r for r in rows if r["wheel"] == "sector" and r["sigma"] == "0.3"][0]
    assert float(sym["I_E"]) == 0.0
    quarter = [r for r in rows if r["sigma"] == "0.785398163"][0]
    assert abs(float(quarter["I_B"]) - 0.731) <= 3 * float(quarter["std_err"]) + 2e-3
    assert run(*args)[1] == out
    assert out.splitlines()[0] == "sigma,wheel,param,I_B,I_E,delta_I,std_err"


def test_keygen_and_otp(tmp_path):
    key = tmp_path / "k.nkey"
    assert run("keygen", "--bits", 64, "--out", key, "--seed", 1)[0] == 0
    plain = tmp_path / "p"
    plain.write_bytes(b"hello")
    assert run("otp", "--key", key, "--in", plain, "--out", tmp_path / "c")[0] == 0
    # decrypting needs the same pad bits, so use a fresh copy of the key
    key2 = tmp_path / "k2.nkey"
    key2.write_bytes(key.read_bytes())
    assert run("otp", "--key", key2, "--in", tmp_path / "c", "--out", tmp_path / "d")[0] == 0
    assert (tmp_path / "d").read_bytes() == b"hello"
    assert run("otp", "--key", key, "--in", plain, "--out", tmp_path / "c2")[0] == 3


def test_otp_empty_input_and_corrupt_sidecar(tmp_path):
    key = tmp_path / "k.nkey"
    run("keygen", "--bits", 64, "--out", key, "--seed", 1)
    empty = tmp_path / "e"
    empty.write_bytes(b"")
    assert run("otp", "--key", key, "--in", empty, "--out", tmp_path / "o")[0] == 0
    assert (tmp_path / "o").read_bytes() == b""
    assert not (tmp_path / "k.nkey.spent").exists()
    (tmp_path / "k.nkey.spent").write_text("{")
    assert run("otp", "--key", key, "--in", empty, "--out", tmp_path / "o")[0] == 6
