import math
import subprocess
import sys

import pytest

REPO = __file__.rsplit("/", 2)[0]
PRESETS = f"{REPO}/presets"


def run_cli(args, timeout=900):
    """Run the CLI in a subprocess; returns (exit code, stdout, stderr)."""
    proc = subprocess.run([sys.executable, "-m", "ionengine.cli", *args],
                          capture_output=True, text=True, timeout=timeout)
    return proc.returncode, proc.stdout, proc.stderr


@pytest.fixture(scope="session")
def paper_record_dir(tmp_path_factory):
    """One full desk-scale engine run of the stock preset, via the CLI."""
    out = tmp_path_factory.mktemp("paper_run")
    code, stdout, stderr = run_cli([
        "simulate", "--config", f"{PRESETS}/simulate_paper.cfg",
        "--out", str(out)])
    assert code == 0, f"paper preset failed: {stderr}"
    return out


@pytest.fixture(scope="session")
def selfdriven_record_dirs(tmp_path_factory):
    """Self-driven runs: separated foci (grows) and co-located (decays)."""
    out_sep = tmp_path_factory.mktemp("selfdriven_sep")
    out_col = tmp_path_factory.mktemp("selfdriven_col")
    code, _, stderr = run_cli([
        "selfdriven", "--config", f"{PRESETS}/selfdriven_200um.cfg",
        "--out", str(out_sep)])
    assert code == 0, f"separated self-driven preset failed: {stderr}"
    code, _, stderr = run_cli([
        "selfdriven", "--config", f"{PRESETS}/selfdriven_colocated.cfg",
        "--out", str(out_col)])
    assert code == 0, f"co-located self-driven preset failed: {stderr}"
    return out_sep, out_col


def paper_beams(window_fraction=0.2, s_hot=1.5, s_cold=4.0, s_diss=2.0):
    """The stock bath-beam set used by the shipped engine presets."""
    from ionengine import reservoir as rsv
    gamma = rsv.GAMMA_CA40
    k = 2.0 * math.pi / rsv.WAVELENGTH_CA40
    hot_gate = rsv.GateSpec(kind="phase_window",
                            window_fraction=window_fraction, phase_center=0.0)
    cold_gate = rsv.GateSpec(kind="phase_window",
                             window_fraction=window_fraction,
                             phase_center=math.pi)
    dirs = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)]
    beams = [rsv.LaserBeam(d, k, 0.5 * gamma, gamma, s_hot, "heat", hot_gate)
             for d in dirs]
    beams += [rsv.LaserBeam(d, k, -0.5 * gamma, gamma, s_cold, "cool", cold_gate)
              for d in dirs]
    diss = rsv.LaserBeam((0, 0, 1), k, -0.5 * gamma, gamma, s_diss,
                         "dissipation")
    return beams, diss
