use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

fn run(code: &std::ffi::CStr) {
    Python::initialize();
    Python::attach(|py| {
        let module = wrap_pymodule!(sgpvm_py::sgpvm_module)(py);
        let globals = PyDict::new(py);
        globals.set_item("sgpvm", module).unwrap();
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.display(py);
            panic!("python snippet failed: {e}");
        }
    });
}

#[test]
fn tags_match() {
    run(c"
t = sgpvm.Tag.from_hex('00000000000000ff')
assert t.value == 255
assert t.hex() == '00000000000000ff'
assert sgpvm.match_score(0, 0) == 1.0
assert sgpvm.match_score(0, 2**64 - 1) == 0.0
assert sgpvm.best_match(3, [0, 3, 7]) == 1
assert sgpvm.best_match(3, [0, 3, 7], [0.0, 0.0, 0.5]) == 2
assert sgpvm.best_match(3, [0, 3, 7], min_raw=1.1) is None
");
}

#[test]
fn program_round_trip() {
    run(c"
p = sgpvm.Program.random('complete', 50, 9)
assert len(p) == 50
text = p.serialize('complete')
q, name = sgpvm.Program.parse(text)
assert name == 'complete'
assert q.fingerprint() == p.fingerprint()
assert q.instructions() == p.instructions()
try:
    sgpvm.Program.parse('garbage')
    raise AssertionError('parse accepted garbage')
except ValueError:
    pass
");
}

#[test]
fn backends_agree() {
    run(c"
p = sgpvm.Program.random('nop', 100, 4)
regs = []
for backend in ('lite', 'flex'):
    cpu = sgpvm.VirtualCpu(p, backend=backend, seed=7)
    assert cpu.backend == backend
    cpu.launch(0)
    cpu.step(100)
    regs.append([cpu.core_registers(i) for i in range(cpu.core_count())])
assert regs[0] == regs[1]
try:
    sgpvm.VirtualCpu(p, backend='nope')
    raise AssertionError('unknown backend accepted')
except ValueError:
    pass
");
}

#[test]
fn problems_and_evolution() {
    run(c"
env = sgpvm.ChangingEnvironment(4, seed=3)
assert len(env.signal_tags) == 4
assert env.evaluate(env.perfect_solution(), seed=1) == 4.0
ctx = sgpvm.ContextualSignal(seed=5)
assert all(ctx.evaluate(ctx.regulation_solution(), backend='flex'))
assert sum(ctx.evaluate(ctx.first_signal_blind([0, 1, 2, 3]))) <= 4
config = '''
seed = 3
[problem]
kind = \"changing_env\"
k = 2
[population]
size = 20
generations = 5
[selection]
scheme = \"elite_roulette\"
'''
a = sgpvm.run_evolution(config)
assert a == sgpvm.run_evolution(config)
assert a[0].startswith('generation')
");
}

#[test]
fn bench_helpers() {
    run(c"
recs = sgpvm.run_microbenchmark('nop', 'lite', 2, replicates=1, min_time_ms=1)
recs += sgpvm.run_microbenchmark('nop', 'flex', 2, replicates=1, min_time_ms=1)
assert len(recs) == 2
text = sgpvm.bench_csv(recs)
assert text.startswith(sgpvm.BENCH_CSV_HEADER)
assert sgpvm.parse_bench_csv(text) == recs
(row,) = sgpvm.compute_speedup(recs)
assert row[0] == 'nop' and row[1] == 2 and row[2] > 0
");
}
