//! Property-based tests: randomized cross-checks between the fast
//! implementations and their brute-force counterparts, plus structural
//! invariants every full algorithm run must maintain.

use std::collections::BTreeSet;

use num_traits::Zero;
use proptest::prelude::*;

use fairdiv_core::fairness::{check_alpha_efx, envy_edges};
use fairdiv_core::framework::{minimal_subset_exceeding, most_envious_agent, RunError};
use fairdiv_core::generator::{generate, GenSpec, Model};
use fairdiv_core::graph::{self, GraphError};
use fairdiv_core::oracle::{brute_rank, subset_efx_verdict, subset_is_minimal_exceeding};
use fairdiv_core::rational::rat;
use fairdiv_core::{
    run_cxxra, run_pqrax, run_sqrt2_pq, run_sqrt2_ra, Allocation, Beta, GoodSet, Instance,
};

fn instance_from(rows: &[Vec<i64>]) -> Instance {
    let refs: Vec<&[i64]> = rows.iter().map(|r| r.as_slice()).collect();
    Instance::from_ints(&refs).expect("non-negative integer matrix")
}

/// Builds an allocation from one owner per good; owner `n` means the pool.
fn allocation_from_owners(owners: &[usize], n: usize) -> Allocation {
    let mut pool = GoodSet::new();
    let mut bundles = vec![GoodSet::new(); n];
    for (good, &owner) in owners.iter().enumerate() {
        if owner >= n {
            pool.insert(good);
        } else {
            bundles[owner].insert(good);
        }
    }
    Allocation::new(pool, bundles, owners.len()).expect("owner vector partitions the goods")
}

/// Instance + allocation where every agent holds a good she values
/// positively (good `i` belongs to agent `i`), so the envy graph is always
/// defined.  Remaining goods get arbitrary owners or the pool.
fn positive_own_scenario() -> impl Strategy<Value = (Instance, Allocation)> {
    (1usize..=5).prop_flat_map(|n| {
        (n..=6usize).prop_flat_map(move |m| {
            let matrix = prop::collection::vec(prop::collection::vec(0i64..=9, m), n);
            let owners = prop::collection::vec(0usize..=n, m - n);
            (matrix, owners).prop_map(move |(mut rows, extra)| {
                for i in 0..n {
                    if rows[i][i] == 0 {
                        rows[i][i] = 1;
                    }
                }
                let mut all_owners: Vec<usize> = (0..n).collect();
                all_owners.extend(extra);
                (instance_from(&rows), allocation_from_owners(&all_owners, n))
            })
        })
    })
}

/// Arbitrary small instance + allocation, no positivity guarantees.
fn free_scenario() -> impl Strategy<Value = (Instance, Allocation)> {
    (1usize..=4).prop_flat_map(|n| {
        (0usize..=6).prop_flat_map(move |m| {
            let matrix = prop::collection::vec(prop::collection::vec(0i64..=9, m), n);
            let owners = prop::collection::vec(0usize..=n, m);
            (matrix, owners)
                .prop_map(move |(rows, owners)| {
                    (instance_from(&rows), allocation_from_owners(&owners, n))
                })
        })
    })
}

fn all_agents(n: usize) -> BTreeSet<usize> {
    (0..n).collect()
}

proptest! {
    /// The closed-form rank computation agrees with enumerating every
    /// simple path, including the tie-breaking order, and both sides agree
    /// on when a value-gaining cycle makes ranks undefined.
    #[test]
    fn ranks_match_the_path_enumeration_oracle((instance, alloc) in positive_own_scenario()) {
        let envy = graph::build(&instance, &alloc).expect("all own values positive");
        match envy.compute_ranks() {
            Ok(table) => {
                for agent in 0..instance.num_agents() {
                    let (rank, path) =
                        brute_rank(&instance, &alloc, agent).expect("no cycle found");
                    prop_assert_eq!(&table.rank[&agent], &rank, "rank of agent {}", agent);
                    prop_assert_eq!(&table.rankpath[&agent], &path, "path of agent {}", agent);
                }
            }
            Err(GraphError::SuperUnitCycle(_)) => {
                prop_assert!(brute_rank(&instance, &alloc, 0).is_err());
            }
            Err(other) => prop_assert!(false, "unexpected graph error: {other}"),
        }
    }

    /// The single-removal EFX check equals the all-subsets definition, at
    /// both thresholds.
    #[test]
    fn efx_verdicts_match_the_subset_definition((instance, alloc) in free_scenario()) {
        for beta in [Beta::One, Beta::Sqrt2] {
            prop_assert_eq!(
                check_alpha_efx(&instance, &alloc, beta).passed(),
                subset_efx_verdict(&instance, &alloc, beta),
                "beta = {}", beta
            );
        }
    }

    /// The envy-threshold relation coincides with the weighted graph's
    /// threshold view whenever the graph is defined.
    #[test]
    fn envy_edges_match_the_threshold_view((instance, alloc) in positive_own_scenario()) {
        let agents = all_agents(instance.num_agents());
        let envy = graph::build(&instance, &alloc).expect("all own values positive");
        for beta in [Beta::Zero, Beta::One, Beta::Sqrt2] {
            prop_assert_eq!(
                envy_edges(&instance, &alloc, beta, &agents),
                envy.threshold_view(beta),
                "beta = {}", beta
            );
        }
    }

    /// The most-envious-agent search returns an inclusion-minimal envied
    /// subset, verified by full subset enumeration.
    #[test]
    fn envied_subsets_are_inclusion_minimal(
        (instance, alloc) in free_scenario(),
        picks in prop::collection::vec(any::<bool>(), 6),
    ) {
        let s: GoodSet = (0..instance.num_goods()).filter(|&g| picks[g]).collect();
        let agents = all_agents(instance.num_agents());
        if let Some((agent, subset)) = most_envious_agent(&instance, &alloc, &agents, &s) {
            prop_assert!(subset.is_subset(&s));
            let own = instance.value(agent, alloc.bundle(agent));
            prop_assert!(instance.value(agent, &subset) > own);
            prop_assert!(subset_is_minimal_exceeding(&instance, agent, &subset, &own));
        } else {
            for i in &agents {
                let own = instance.value(*i, alloc.bundle(*i));
                prop_assert!(instance.value(*i, &s) <= own, "agent {} envies s", i);
            }
        }
    }

    /// Threshold-exceeding subsets are inclusion-minimal, and infeasible
    /// thresholds are reported rather than mis-answered.
    #[test]
    fn threshold_subsets_are_inclusion_minimal(
        (instance, alloc) in free_scenario(),
        picks in prop::collection::vec(any::<bool>(), 6),
        agent_pick in 0usize..4,
        percent in 0u32..=120,
    ) {
        let _ = &alloc;
        let agent = agent_pick % instance.num_agents();
        let s: GoodSet = (0..instance.num_goods()).filter(|&g| picks[g]).collect();
        let total = instance.value(agent, &s);
        let threshold = &total * rat(percent as i64) / rat(100);
        match minimal_subset_exceeding(&instance, agent, &s, &threshold) {
            Ok(subset) => {
                prop_assert!(total > threshold);
                prop_assert!(subset.is_subset(&s));
                prop_assert!(subset_is_minimal_exceeding(&instance, agent, &subset, &threshold));
            }
            Err(RunError::Infeasible { .. }) => prop_assert!(total <= threshold),
            Err(other) => prop_assert!(false, "unexpected error: {other}"),
        }
    }
}

/// Restricted values with fully self-relevant bundles: own-bundle values
/// are the full inherent sums, everyone else's value is at most that, so no
/// envy cycle can gain value.
fn restricted_self_relevant() -> impl Strategy<Value = (Instance, Allocation)> {
    (2usize..=6, 0usize..=8, any::<u64>()).prop_flat_map(|(n, extra, seed)| {
        let m = n + extra;
        let instance = generate(&GenSpec {
            num_agents: n,
            num_goods: m,
            model: Model::RestrictedAny,
            value_range: (1, 9),
            p: None,
            q: None,
            seed,
        })
        .expect("feasible spec");
        let owners = prop::collection::vec(0usize..=n, m);
        (Just(instance), owners).prop_map(move |(instance, mut owners)| {
            for g in 0..m {
                let o = owners[g];
                if o < n && instance.singleton(o, g).is_zero() {
                    // Reassign to the lowest agent who values the good.
                    owners[g] = *instance
                        .relevant_agents(g)
                        .iter()
                        .next()
                        .expect("generated goods interest someone");
                }
            }
            let alloc = allocation_from_owners(&owners, n);
            (instance, alloc)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restricted_self_relevant_allocations_admit_no_value_gaining_cycle(
        (instance, alloc) in restricted_self_relevant()
    ) {
        let vertices: BTreeSet<usize> = (0..instance.num_agents())
            .filter(|&i| !instance.value(i, alloc.bundle(i)).is_zero())
            .collect();
        let envy = graph::build_induced(&instance, &alloc, &vertices)
            .expect("self-relevant bundles have positive value");
        prop_assert!(envy.super_unit_cycle().is_none());
    }

    /// Every algorithm, on instances of its own class, terminates with a
    /// complete allocation that still partitions the goods.
    #[test]
    fn runs_end_complete_and_partitioned(
        seed in any::<u64>(),
        n in 2usize..=6,
        extra in 0usize..=6,
    ) {
        let cases: [(Model, fn(&Instance) -> Result<_, RunError>); 4] = [
            (Model::AdditiveInfty1, run_cxxra),
            (Model::RestrictedAny, run_sqrt2_ra),
            (Model::AdditiveInfty1, run_sqrt2_pq),
            (Model::RestrictedP2, run_pqrax),
        ];
        for (model, run) in cases {
            let instance = generate(&GenSpec {
                num_agents: n,
                num_goods: n + extra,
                model,
                value_range: (1, 9),
                p: None,
                q: None,
                seed,
            })
            .expect("feasible spec");
            let outcome = run(&instance).expect("run succeeds");
            prop_assert!(outcome.allocation.is_complete(), "model {} left a pool", model);
            prop_assert!(outcome.allocation.check_partition().is_ok());
        }
    }
}
