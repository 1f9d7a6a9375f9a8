//! Acceptance suite: one test per release criterion, each printing a single
//! `ACCEPTANCE <k>: PASS` line (visible with `--nocapture`) and enforcing
//! its runtime budget.  Potential-monotonicity criteria are re-checked here
//! from the emitted trace snapshots, independently of the in-run asserts.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::process::Command;
use std::time::{Duration, Instant};

use fairdiv_core::fairness::{check_alpha_efx, check_ef2x, compare_sources, Nsw};
use fairdiv_core::framework::{
    minimal_subset_exceeding, most_envious_agent, seed_allocation, RunError, RunOutcome, Trace,
    FINAL_STEP, MICRO_CYCLE, MICRO_ENVY,
};
use fairdiv_core::generator::{generate, GenSpec, Model, XorShift64Star};
use fairdiv_core::graph::{self, GraphError};
use fairdiv_core::instance::BoundProfile;
use fairdiv_core::oracle::{brute_rank, subset_efx_verdict, subset_is_minimal_exceeding};
use fairdiv_core::rational::{parse_rational, rat, ratio, Rational};
use fairdiv_core::{
    fixtures, run_cxxra, run_pqrax, run_sqrt2_pq, run_sqrt2_ra, Allocation, Beta, GoodSet,
    Instance,
};
use num_traits::Zero;

// ---------------------------------------------------------------------------
// Shared helpers

/// Draws the criterion-wide instance shape: n in [2,8], m in [n, 2n+4].
fn draw_shape(rng: &mut XorShift64Star) -> (usize, usize) {
    let n = rng.range_inclusive(2, 8) as usize;
    let m = rng.range_inclusive(n as u64, 2 * n as u64 + 4) as usize;
    (n, m)
}

fn seeded_instance(rng: &mut XorShift64Star, model: Model) -> Instance {
    let (n, m) = draw_shape(rng);
    generate(&GenSpec {
        num_agents: n,
        num_goods: m,
        model,
        value_range: (1, 9),
        p: None,
        q: None,
        seed: rng.next_u64(),
    })
    .expect("feasible spec")
}

fn assert_budget(started: Instant, budget: Duration, what: &str) {
    let elapsed = started.elapsed();
    assert!(
        elapsed < budget,
        "{what} took {elapsed:?}, budget {budget:?}"
    );
}

/// Parses a sources potential snapshot `[v, v, inf]` into the source
/// values (the trailing infinity sentinel is implicit in the comparison).
fn parse_sources_phi(phi: &str) -> Vec<Rational> {
    let inner = phi
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix("inf]"))
        .unwrap_or_else(|| panic!("not a sources snapshot: {phi}"));
    inner
        .split(", ")
        .filter(|part| !part.is_empty())
        .map(|part| parse_rational(part).expect("rational source value"))
        .collect()
}

/// Parses an NSW snapshot: either `p/q` or `0^zeros*p/q`.
fn parse_nsw_phi(phi: &str) -> Nsw {
    match phi.strip_prefix("0^") {
        Some(rest) => {
            let (zeros, product) = rest.split_once('*').expect("0^z*product form");
            Nsw {
                zeros: zeros.parse().expect("zero count"),
                product: parse_rational(product).expect("product"),
            }
        }
        None => Nsw {
            zeros: 0,
            product: parse_rational(phi).expect("product"),
        },
    }
}

/// Parses a `(satisfied, nsw)` snapshot.
fn parse_pqrax_phi(phi: &str) -> (usize, Nsw) {
    let inner = phi
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .unwrap_or_else(|| panic!("not a pair snapshot: {phi}"));
    let (satisfied, nsw) = inner.split_once(", ").expect("two components");
    (satisfied.parse().expect("count"), parse_nsw_phi(nsw))
}

/// Walks a trace and checks the potential discipline: the snapshot recorded
/// at each rule application strictly exceeds the one recorded at the previous
/// rule application (an application spans the cleanup micro-steps that run
/// before the rule fires — the rule alone may reshuffle which agents are
/// graph sources without moving the sorted value list), and no micro-step
/// ever decreases the potential relative to the state it acted on. The final
/// completion step records the end state and is not a rule.
fn assert_phi_discipline(trace: &Trace, cmp: &dyn Fn(&str, &str) -> Ordering, label: &str) {
    let mut adjacent: Option<&str> = None;
    let mut last_rule: Option<&str> = None;
    for entry in &trace.entries {
        if entry.rule == MICRO_CYCLE || entry.rule == MICRO_ENVY {
            if let Some(prev) = adjacent {
                assert_ne!(
                    cmp(prev, &entry.phi),
                    Ordering::Greater,
                    "{label}: {} decreased the potential: {prev} -> {}",
                    entry.rule,
                    entry.phi
                );
            }
        } else if entry.rule != FINAL_STEP {
            if let Some(prev) = last_rule {
                assert_eq!(
                    cmp(prev, &entry.phi),
                    Ordering::Less,
                    "{label}: {} did not raise the potential over the previous application: {prev} -> {}",
                    entry.rule,
                    entry.phi
                );
            }
            last_rule = Some(&entry.phi);
        }
        adjacent = Some(&entry.phi);
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: reference-example regression

#[test]
fn acceptance_1_reference_example_regression() {
    let started = Instant::now();
    let instance = fixtures::four_by_seven();
    let alloc = fixtures::four_by_seven_allocation();

    assert_eq!(instance.classify_bounds(), BoundProfile { p: 2, q: 2 });
    assert_eq!(
        instance.without_good(0).classify_bounds(),
        BoundProfile { p: 2, q: 1 },
        "deleting the first good must drop the pair overlap to one"
    );

    let expected_values = [rat(9), rat(10), rat(9), rat(10)];
    for (agent, expected) in expected_values.iter().enumerate() {
        assert_eq!(&instance.value(agent, alloc.bundle(agent)), expected);
    }

    let envy = graph::build(&instance, &alloc).expect("reference graph");
    let table = envy.compute_ranks().expect("no value-gaining cycle");
    assert_eq!(table.rank[&3], ratio(10, 9));
    assert_eq!(table.virtual_value[&3], rat(9));
    let rejected = envy.weight(0, 1).expect("edge")
        * envy.weight(1, 2).expect("edge")
        * envy.weight(2, 3).expect("edge");
    assert_eq!(rejected, ratio(20, 27));
    assert!(rejected < table.rank[&3]);

    assert_budget(started, Duration::from_millis(100), "criterion 1");
    println!("ACCEPTANCE 1: PASS — reference example classification, values, and ranks");
}

// ---------------------------------------------------------------------------
// Criterion 2: the complete-EF2X algorithm over 500 seeded instances

#[test]
fn acceptance_2_complete_ef2x_over_500_instances() {
    let started = Instant::now();
    let mut rng = XorShift64Star::new(0x0A11_0C02);
    for round in 0..500 {
        let instance = seeded_instance(&mut rng, Model::AdditiveInfty1);
        let n = instance.num_agents();
        // Per-state EFX and non-source relevance are asserted inside the
        // driver after seeding and after every rule; any violation turns
        // into an error here.
        let outcome = run_cxxra(&instance).expect("run succeeds");
        let bound = (n / 2).saturating_sub(1);
        assert!(
            outcome.prefinal_pool <= bound,
            "round {round}: pre-final pool {} exceeds bound {bound} (n = {n})",
            outcome.prefinal_pool
        );
        assert!(outcome.allocation.is_complete(), "round {round}");
        assert!(
            check_ef2x(&instance, &outcome.allocation).passed(),
            "round {round}: final allocation is not EF2X"
        );
    }
    assert_budget(started, Duration::from_secs(30), "criterion 2");
    println!("ACCEPTANCE 2: PASS — 500/500 complete EF2X, pool bound respected");
}

// ---------------------------------------------------------------------------
// Criterion 3: the restricted √2-EFX algorithm over 500 seeded instances

#[test]
fn acceptance_3_restricted_sqrt2_efx_over_500_instances() {
    let started = Instant::now();
    let mut rng = XorShift64Star::new(0x0A11_0C03);
    let cmp = |a: &str, b: &str| compare_sources(&parse_sources_phi(a), &parse_sources_phi(b));
    for round in 0..500 {
        let instance = seeded_instance(&mut rng, Model::RestrictedAny);
        let outcome = run_sqrt2_ra(&instance).expect("run succeeds");
        assert!(outcome.allocation.is_complete(), "round {round}");
        assert!(
            check_alpha_efx(&instance, &outcome.allocation, Beta::Sqrt2).passed(),
            "round {round}: final allocation is not sqrt2-EFX"
        );
        assert_phi_discipline(&outcome.trace, &cmp, "criterion 3");
    }
    assert_budget(started, Duration::from_secs(30), "criterion 3");
    println!("ACCEPTANCE 3: PASS — 500/500 complete sqrt2-EFX, sources potential disciplined");
}

// ---------------------------------------------------------------------------
// Criterion 4: the pair-overlap-one √2-EFX algorithm over 500 seeded
// instances

#[test]
fn acceptance_4_pair_overlap_sqrt2_efx_over_500_instances() {
    let started = Instant::now();
    let mut rng = XorShift64Star::new(0x0A11_0C04);
    let cmp = |a: &str, b: &str| parse_nsw_phi(a).cmp(&parse_nsw_phi(b));
    for round in 0..500 {
        let instance = seeded_instance(&mut rng, Model::AdditiveInfty1);
        // Rank-bound feasibility and virtual-value monotonicity are
        // asserted inside the driver at every state; errors surface here.
        let outcome = run_sqrt2_pq(&instance).expect("run succeeds");
        assert!(outcome.allocation.is_complete(), "round {round}");
        assert!(
            check_alpha_efx(&instance, &outcome.allocation, Beta::Sqrt2).passed(),
            "round {round}: final allocation is not sqrt2-EFX"
        );
        assert_phi_discipline(&outcome.trace, &cmp, "criterion 4");
    }
    assert_budget(started, Duration::from_secs(60), "criterion 4");
    println!("ACCEPTANCE 4: PASS — 500/500 complete sqrt2-EFX, NSW strictly increasing per rule");
}

// ---------------------------------------------------------------------------
// Criterion 5: the exact-EFX algorithm over 500 seeded restricted
// pair-interest instances

#[test]
fn acceptance_5_exact_efx_over_500_instances() {
    let started = Instant::now();
    let mut rng = XorShift64Star::new(0x0A11_0C05);
    let cmp = |a: &str, b: &str| {
        let (sat_a, nsw_a) = parse_pqrax_phi(a);
        let (sat_b, nsw_b) = parse_pqrax_phi(b);
        sat_a.cmp(&sat_b).then_with(|| nsw_a.cmp(&nsw_b))
    };
    for round in 0..500 {
        let instance = seeded_instance(&mut rng, Model::RestrictedP2);
        let outcome = run_pqrax(&instance).expect("run succeeds");
        assert!(outcome.allocation.is_complete(), "round {round}");
        assert!(
            check_alpha_efx(&instance, &outcome.allocation, Beta::One).passed(),
            "round {round}: final allocation is not exactly EFX"
        );
        assert_phi_discipline(&outcome.trace, &cmp, "criterion 5");
    }
    assert_budget(started, Duration::from_secs(60), "criterion 5");
    println!("ACCEPTANCE 5: PASS — 500/500 complete exact EFX, potential disciplined");
}

// ---------------------------------------------------------------------------
// Criterion 6: fast implementations agree with brute-force oracles

/// Deterministic small instance + allocation with every agent holding a
/// personally valued good, so the envy graph is always defined.
fn oracle_scenario(rng: &mut XorShift64Star) -> (Instance, Allocation) {
    let n = rng.range_inclusive(1, 5) as usize;
    let m = rng.range_inclusive(n as u64, 6) as usize;
    let mut rows = vec![vec![0i64; m]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        for cell in row.iter_mut() {
            *cell = rng.below(10) as i64;
        }
        if row[i] == 0 {
            row[i] = 1;
        }
    }
    let refs: Vec<&[i64]> = rows.iter().map(|r| r.as_slice()).collect();
    let instance = Instance::from_ints(&refs).expect("matrix");
    let mut pool = GoodSet::new();
    let mut bundles = vec![GoodSet::new(); n];
    for g in 0..m {
        if g < n {
            bundles[g].insert(g);
        } else {
            match rng.below(n as u64 + 1) as usize {
                owner if owner < n => {
                    bundles[owner].insert(g);
                }
                _ => {
                    pool.insert(g);
                }
            }
        }
    }
    let alloc = Allocation::new(pool, bundles, m).expect("partition");
    (instance, alloc)
}

#[test]
fn acceptance_6_oracle_equivalence_over_200_allocations() {
    let started = Instant::now();
    let mut rng = XorShift64Star::new(0x0A11_0C06);
    for round in 0..200 {
        let (instance, alloc) = oracle_scenario(&mut rng);
        let n = instance.num_agents();

        // Ranks against full path enumeration, including the failure case.
        let envy = graph::build(&instance, &alloc).expect("own values positive");
        match envy.compute_ranks() {
            Ok(table) => {
                for agent in 0..n {
                    let (rank, path) =
                        brute_rank(&instance, &alloc, agent).expect("no cycle");
                    assert_eq!(table.rank[&agent], rank, "round {round} agent {agent}");
                    assert_eq!(table.rankpath[&agent], path, "round {round} agent {agent}");
                }
            }
            Err(GraphError::SuperUnitCycle(_)) => {
                assert!(brute_rank(&instance, &alloc, 0).is_err(), "round {round}");
            }
            Err(other) => panic!("round {round}: unexpected graph error {other}"),
        }

        // EFX verdict against the all-subsets definition.
        assert_eq!(
            check_alpha_efx(&instance, &alloc, Beta::One).passed(),
            subset_efx_verdict(&instance, &alloc, Beta::One),
            "round {round}"
        );

        // Minimality of computed envied / threshold-exceeding subsets.
        let agents: BTreeSet<usize> = (0..n).collect();
        let every_good = instance.all_goods();
        if let Some((agent, subset)) = most_envious_agent(&instance, &alloc, &agents, &every_good)
        {
            let own = instance.value(agent, alloc.bundle(agent));
            assert!(
                subset_is_minimal_exceeding(&instance, agent, &subset, &own),
                "round {round}"
            );
        }
        let probe = rng.below(n as u64) as usize;
        let own = instance.value(probe, alloc.bundle(probe));
        match minimal_subset_exceeding(&instance, probe, &every_good, &own) {
            Ok(subset) => assert!(
                subset_is_minimal_exceeding(&instance, probe, &subset, &own),
                "round {round}"
            ),
            Err(RunError::Infeasible { .. }) => {
                assert!(instance.value(probe, &every_good) <= own, "round {round}")
            }
            Err(other) => panic!("round {round}: unexpected error {other}"),
        }
    }
    assert_budget(started, Duration::from_secs(60), "criterion 6");
    println!("ACCEPTANCE 6: PASS — ranks, EFX verdicts, and minimal subsets match the oracles");
}

// ---------------------------------------------------------------------------
// Criterion 7: seeding, including constrained-competition fixtures

/// Fixture where agents `0..k` all value only good 0: a maximum matching
/// can serve just one of them, so the reduction must prematch one winner
/// and remove the other k−1 agents.
fn competition_fixture(n: usize, k: usize) -> Instance {
    let mut rows = vec![vec![0i64; n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        if i < k {
            row[0] = 2 + i as i64;
        } else {
            row[i] = 5;
        }
    }
    let refs: Vec<&[i64]> = rows.iter().map(|r| r.as_slice()).collect();
    Instance::from_ints(&refs).expect("matrix")
}

fn assert_sound_seed(instance: &Instance, round: usize) {
    let seeded = seed_allocation(instance);
    for &agent in &seeded.active {
        let bundle = seeded.allocation.bundle(agent);
        assert_eq!(bundle.len(), 1, "round {round}: active agent {agent}");
        let good = *bundle.iter().next().expect("singleton");
        assert!(
            !instance.singleton(agent, good).is_zero(),
            "round {round}: active agent {agent} holds a worthless good"
        );
    }
    for &agent in &seeded.removed_agents {
        assert!(
            seeded.allocation.bundle(agent).is_empty(),
            "round {round}: removed agent {agent} holds goods"
        );
        // A removed agent lost every good she values to the prematched set.
        let prematched_goods: GoodSet = seeded.prematched.iter().map(|&(_, g)| g).collect();
        for g in 0..instance.num_goods() {
            if !instance.singleton(agent, g).is_zero() {
                assert!(
                    prematched_goods.contains(&g),
                    "round {round}: removed agent {agent} values unseized good {g}"
                );
            }
        }
    }
    for &(agent, good) in &seeded.prematched {
        assert!(
            seeded.allocation.bundle(agent).contains(&good),
            "round {round}: prematched pair ({agent}, {good}) not honoured"
        );
    }
    if !seeded.active.is_empty() {
        let envy = graph::build_induced(instance, &seeded.allocation, &seeded.active)
            .expect("active agents hold valued singletons");
        assert!(
            envy.super_unit_cycle().is_none(),
            "round {round}: seed state has a value-gaining cycle"
        );
    }
}

#[test]
fn acceptance_7_seeding_over_200_instances() {
    let started = Instant::now();
    let mut rng = XorShift64Star::new(0x0A11_0C07);
    let models = [
        Model::AdditiveInfty1,
        Model::RestrictedAny,
        Model::RestrictedP2,
    ];
    for round in 0..180 {
        let instance = seeded_instance(&mut rng, models[round % models.len()]);
        assert_sound_seed(&instance, round);
    }
    // Twenty fixtures with more claimants than claimable goods.
    let mut fixture_count = 0;
    for n in 3..=8usize {
        for k in 2..=n.min(5) {
            if fixture_count == 20 {
                break;
            }
            let instance = competition_fixture(n, k);
            let seeded = seed_allocation(&instance);
            assert_eq!(
                seeded.removed_agents.len(),
                k - 1,
                "fixture n={n} k={k}: exactly one claimant may keep good 0"
            );
            assert!(seeded.removed_agents.iter().all(|&a| a < k));
            assert!(
                seeded.prematched.iter().any(|&(a, g)| a < k && g == 0),
                "fixture n={n} k={k}: good 0 must be prematched to a claimant"
            );
            assert_sound_seed(&instance, 1000 + fixture_count);
            fixture_count += 1;
        }
    }
    assert_eq!(fixture_count, 20, "twenty adversarial fixtures exercised");

    // The hand-frozen reduction example keeps its exact outcome.
    let seeded = seed_allocation(&fixtures::four_by_three());
    assert_eq!(seeded.prematched, vec![(0, 0), (2, 1)]);
    assert_eq!(seeded.removed_agents, BTreeSet::from([3]));
    assert_eq!(seeded.active, BTreeSet::from([1]));

    assert_budget(started, Duration::from_secs(10), "criterion 7");
    println!("ACCEPTANCE 7: PASS — 200 seedings sound, reduction fires on all 20 fixtures");
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical reruns, in-process and through the binary

#[test]
fn acceptance_8_reruns_are_byte_identical() {
    let started = Instant::now();

    // In-process: every algorithm twice on its own class.
    let mut rng = XorShift64Star::new(0x0A11_0C08);
    let cases: [(Model, fn(&Instance) -> Result<RunOutcome, RunError>); 4] = [
        (Model::AdditiveInfty1, run_cxxra),
        (Model::RestrictedAny, run_sqrt2_ra),
        (Model::AdditiveInfty1, run_sqrt2_pq),
        (Model::RestrictedP2, run_pqrax),
    ];
    for (model, run) in cases {
        let instance = seeded_instance(&mut rng, model);
        let first = run(&instance).expect("run succeeds");
        let second = run(&instance).expect("run succeeds");
        assert_eq!(format!("{:?}", first.allocation), format!("{:?}", second.allocation));
        assert_eq!(format!("{:?}", first.trace), format!("{:?}", second.trace));
    }

    // Through the binary: identical flags give identical artifact bytes.
    let dir = tempfile::tempdir().expect("tempdir");
    let binary = env!("CARGO_BIN_EXE_fairdiv");
    let instance_path = dir.path().join("i.json");
    let gen = Command::new(binary)
        .args([
            "gen", "--model", "additive_infty1", "--agents", "6", "--goods", "13",
            "--seed", "77", "--out",
        ])
        .arg(&instance_path)
        .output()
        .expect("binary runs");
    assert!(gen.status.success());

    let mut artifacts: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for round in 0..2 {
        let alloc = dir.path().join(format!("a{round}.json"));
        let trace = dir.path().join(format!("t{round}.jsonl"));
        let run = Command::new(binary)
            .args(["run", "--alg", "cxxra", "--in"])
            .arg(&instance_path)
            .arg("--out")
            .arg(&alloc)
            .arg("--trace")
            .arg(&trace)
            .output()
            .expect("binary runs");
        assert!(run.status.success());
        artifacts.push((
            std::fs::read(&alloc).expect("alloc"),
            std::fs::read(&trace).expect("trace"),
        ));
    }
    assert_eq!(artifacts[0], artifacts[1], "run artifacts must be byte-identical");

    let bench_args = [
        "bench", "--alg", "pqrax", "--count", "40", "--agents", "5", "--goods", "9",
        "--seed", "5",
    ];
    let bench_a = Command::new(binary).args(bench_args).output().expect("runs");
    let bench_b = Command::new(binary).args(bench_args).output().expect("runs");
    assert!(bench_a.status.success());
    assert_eq!(bench_a.stdout, bench_b.stdout, "bench stdout must be byte-identical");

    assert_budget(started, Duration::from_secs(60), "criterion 8");
    println!("ACCEPTANCE 8: PASS — reruns byte-identical in-process and through the binary");
}
