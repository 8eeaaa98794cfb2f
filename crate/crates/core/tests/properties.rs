use proptest::prelude::*;

use sgpvm::bench::{compute_speedup, parse_csv, records_to_csv, BenchRecord, Benchmark};
use sgpvm::cpu::CompiledProgram;
use sgpvm::evolution::{
    elite_select, lexicase_select, roulette_select, run_evolution, Ancestor, EvolutionParams,
    SelectionScheme,
};
use sgpvm::mutation::{mutate, MutationConfig};
use sgpvm::problems::{ChangingEnvConfig, ContextualSignalConfig, Problem};
use sgpvm::program::{extract_modules, random_program};
use sgpvm::{Backend, CpuConfig, InstructionSetSpec, Opcode, Rng};

fn changing_env(k: u8, seed: u64) -> Problem {
    Problem::ChangingEnvironment(ChangingEnvConfig::generate(k, &mut Rng::new(seed)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn module_starts_are_increasing_anchor_positions(seed: u64, len in 0usize..300) {
        let p = random_program(&InstructionSetSpec::complete(), len, &mut Rng::new(seed)).unwrap();
        let modules = extract_modules(p.instructions());
        let anchors = p.instructions().iter().filter(|i| i.op == Opcode::GlobalAnchor).count();
        if anchors == 0 {
            prop_assert_eq!(modules.len(), 1);
            prop_assert_eq!(modules[0].0, 0);
        } else {
            prop_assert_eq!(modules.len(), anchors);
            for w in modules.windows(2) {
                prop_assert!(w[0].0 < w[1].0);
            }
            for (start, tag) in modules {
                prop_assert_eq!(p.instructions()[start].op, Opcode::GlobalAnchor);
                prop_assert_eq!(p.instructions()[start].tag, tag);
            }
        }
    }

    #[test]
    fn mutation_is_deterministic(seed: u64, len in 1usize..200) {
        let set = InstructionSetSpec::complete();
        let p = random_program(&set, len, &mut Rng::new(seed)).unwrap();
        let cfg = MutationConfig { insertion_rate: 0.05, deletion_rate: 0.05, ..MutationConfig::default() };
        let a = mutate(&p, &cfg, &set, &mut Rng::new(seed ^ 1));
        let b = mutate(&p, &cfg, &set, &mut Rng::new(seed ^ 1));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn selection_indices_are_in_range(
        fitnesses in prop::collection::vec(0.0f64..100.0, 1..50),
        seed: u64,
    ) {
        let n = fitnesses.len();
        let mut rng = Rng::new(seed);
        prop_assert!(elite_select(&fitnesses).unwrap() < n);
        for _ in 0..20 {
            prop_assert!(roulette_select(&fitnesses, &mut rng).unwrap() < n);
        }
        let cases: Vec<Vec<bool>> = fitnesses.iter().map(|f| {
            let bits = f.to_bits();
            (0..16).map(|i| bits >> (i + 30) & 1 == 1).collect()
        }).collect();
        for _ in 0..20 {
            prop_assert!(lexicase_select(&cases, &mut rng).unwrap() < n);
        }
    }

    #[test]
    fn fitness_is_deterministic(seed: u64, k in 1u8..=16, flex: bool) {
        let problem = changing_env(k, seed);
        let set = problem.instruction_set();
        let p = random_program(&set, 100, &mut Rng::new(seed)).unwrap();
        let backend = if flex { Backend::Flex } else { Backend::Lite };
        let compiled = CompiledProgram::compile(&p, backend, &CpuConfig::default()).unwrap();
        let a = problem.evaluate(&compiled, seed);
        let b = problem.evaluate(&compiled, seed);
        prop_assert_eq!(a.fitness.to_bits(), b.fitness.to_bits());
        prop_assert_eq!(a.cases, b.cases);
        prop_assert!((0.0..=k as f64).contains(&a.fitness));

        let ctx = Problem::ContextualSignal(ContextualSignalConfig::generate(&mut Rng::new(seed)));
        let p = random_program(&ctx.instruction_set(), 100, &mut Rng::new(seed)).unwrap();
        let compiled = CompiledProgram::compile(&p, backend, &CpuConfig::default()).unwrap();
        prop_assert_eq!(ctx.evaluate(&compiled, 0).cases, ctx.evaluate(&compiled, 1).cases);
    }

    #[test]
    fn speedup_ignores_record_order(
        walls in prop::collection::vec((0.01f64..1e4, any::<bool>(), 0usize..3, 0usize..5), 0..60),
        seed: u64,
    ) {
        let records: Vec<BenchRecord> = walls.iter().map(|&(w, flex, n, b)| {
            let backend = if flex { Backend::Flex } else { Backend::Lite };
            BenchRecord::new(Benchmark::ALL[b], backend, w, w, [1, 32, 1024][n])
        }).collect();
        let mut shuffled = records.clone();
        Rng::new(seed).shuffle(&mut shuffled);
        prop_assert_eq!(compute_speedup(&shuffled), compute_speedup(&records));
        let mut doubled = records.clone();
        doubled.extend(shuffled);
        prop_assert_eq!(compute_speedup(&doubled), compute_speedup(&records));
    }

    #[test]
    fn bench_csv_round_trip(
        rows in prop::collection::vec((0.0f64..1e7, 0.0f64..1e7, any::<bool>(), 0usize..5, 1usize..40000), 0..40),
    ) {
        let records: Vec<BenchRecord> = rows.iter().map(|&(w, c, flex, b, n)| {
            let backend = if flex { Backend::Flex } else { Backend::Lite };
            BenchRecord::new(Benchmark::ALL[b], backend, w, c, n)
        }).collect();
        let text = records_to_csv(&records);
        let parsed = parse_csv(&text).unwrap();
        prop_assert_eq!(&parsed, &records);
        prop_assert_eq!(records_to_csv(&parsed), text);
    }
}

fn small_params(problem: Problem, backend: Backend, seed: u64) -> EvolutionParams {
    EvolutionParams {
        problem,
        population_size: 20,
        generations: 15,
        selection: SelectionScheme::EliteRoulette,
        mutation: MutationConfig::default(),
        ancestor: Ancestor::Random,
        ancestor_length: 60,
        backend,
        seed,
    }
}

#[test]
fn evolution_halts_at_first_perfect_generation() {
    for seed in 0..6 {
        let out = run_evolution(&small_params(changing_env(4, seed), Backend::Lite, seed)).unwrap();
        let first = out.history.records.iter().position(|r| r.max_fitness == 4.0);
        match (first, out.solved_at) {
            (Some(i), Some(g)) => {
                assert_eq!(out.history.records[i].generation, g);
                assert_eq!(out.history.records.len(), i + 1, "ran past the first perfect generation");
                assert!(out.history.records[i].solved);
            }
            (None, None) => assert!(out.history.records.iter().all(|r| !r.solved)),
            other => panic!("history and solved_at disagree: {other:?}"),
        }
    }
}

#[test]
fn evolution_replays_on_each_backend() {
    for backend in Backend::ALL {
        for selection in [SelectionScheme::EliteRoulette, SelectionScheme::Lexicase] {
            let mut params = small_params(changing_env(8, 3), backend, 77);
            params.selection = selection;
            let a = run_evolution(&params).unwrap();
            let b = run_evolution(&params).unwrap();
            assert_eq!(a.history.to_csv(), b.history.to_csv());
            assert_eq!(a.population, b.population);
        }
    }
}

#[test]
fn perfect_ancestor_solves_immediately_on_both_problems() {
    let ctx = Problem::ContextualSignal(ContextualSignalConfig::generate(&mut Rng::new(5)));
    for problem in [changing_env(16, 1), ctx] {
        for backend in Backend::ALL {
            let mut params = small_params(problem.clone(), backend, 1);
            params.ancestor = Ancestor::Perfect;
            params.selection = SelectionScheme::Lexicase;
            let out = run_evolution(&params).unwrap();
            assert_eq!(out.solved_at, Some(0));
        }
    }
}
