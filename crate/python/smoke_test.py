"""Builds the extension, imports it and exercises the main operations.

Usage: python3 python/smoke_test.py [--release]
"""

import argparse
import importlib
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build(release):
    cmd = ["cargo", "build", "-p", "sgpvm-python"]
    if release:
        cmd.append("--release")
    subprocess.run(cmd, cwd=ROOT, check=True)
    lib = ROOT / "target" / ("release" if release else "debug") / "libsgpvm_py.so"
    dest = pathlib.Path(tempfile.mkdtemp(prefix="sgpvm_py_"))
    shutil.copy(lib, dest / "sgpvm.so")
    sys.path.insert(0, str(dest))
    return importlib.import_module("sgpvm")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--release", action="store_true")
    args = parser.parse_args()
    sgpvm = build(args.release)
    print("sgpvm", sgpvm.__version__)

    program = sgpvm.Program.random("complete", 100, seed=1)
    parsed, name = sgpvm.Program.parse(program.serialize("complete"))
    assert name == "complete" and parsed.fingerprint() == program.fingerprint()
    print(program, "modules:", len(program.modules()))

    nop = sgpvm.Program.random("nop", 100, seed=2)
    finals = []
    for backend in ("lite", "flex"):
        cpu = sgpvm.VirtualCpu(nop, backend=backend, seed=3)
        cpu.launch(sgpvm.Tag.random(4).value)
        cpu.step(100)
        finals.append(cpu.core_registers(0) if cpu.core_count() else None)
    assert finals[0] == finals[1]
    print("lite and flex agree after 100 cycles")

    env = sgpvm.ChangingEnvironment(8, seed=5)
    print("changing env K=8 perfect fitness:", env.evaluate(env.perfect_solution()))

    ctx = sgpvm.ContextualSignal(seed=6)
    print("contextual regulation organism:", sum(ctx.evaluate(ctx.regulation_solution())), "/ 16")

    history, solved_at = sgpvm.run_evolution(
        """
seed = 7
[problem]
kind = "changing_env"
k = 2
[population]
size = 50
generations = 20
[selection]
scheme = "elite_roulette"
"""
    )
    print("evolution solved at generation", solved_at)

    records = []
    for backend in ("lite", "flex"):
        records += sgpvm.run_microbenchmark("nop", backend, 32, replicates=3, min_time_ms=20)
    for bench, agents, speedup in sgpvm.compute_speedup(records):
        print(f"{bench} @ {agents} agents: flex/lite = {speedup:.2f}x")
    assert sgpvm.parse_bench_csv(sgpvm.bench_csv(records)) == records
    print("smoke test ok")


if __name__ == "__main__":
    main()
