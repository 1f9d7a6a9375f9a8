//! Brute-force ground truth for small instances.
//!
//! Everything here trades speed for being obviously correct: complete
//! allocations are enumerated outright, EFX is checked against the
//! all-strict-subsets definition rather than the single-removal shortcut,
//! ranks are maximised over every simple path, and minimality claims are
//! verified by enumerating proper subsets.  The faster implementations in
//! [`crate::fairness`] and [`crate::graph`] are tested against this module.

use std::collections::BTreeMap;

use num_traits::One;
use thiserror::Error;

use crate::allocation::Allocation;
use crate::fairness::Nsw;
use crate::graph::{self, GraphError};
use crate::instance::Instance;
use crate::rational::{Beta, Rational};
use crate::GoodSet;

/// Cap on the number of owner assignments an enumeration may visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_assignments: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_assignments: 2_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration needs {required} assignments but the budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error("graph failure: {0}")]
    Graph(#[from] GraphError),
}

/// Iterator over every complete allocation of an instance, in owner-vector
/// lexicographic order (good 0 the slowest digit, owners ascending).
pub struct CompleteAllocations<'a> {
    instance: &'a Instance,
    owners: Option<Vec<usize>>,
}

impl Iterator for CompleteAllocations<'_> {
    type Item = Allocation;

    fn next(&mut self) -> Option<Allocation> {
        let owners = self.owners.as_mut()?;
        let n = self.instance.num_agents();
        let mut bundles = vec![GoodSet::new(); n];
        for (good, &owner) in owners.iter().enumerate() {
            bundles[owner].insert(good);
        }
        let alloc = Allocation::new(GoodSet::new(), bundles, self.instance.num_goods())
            .expect("owner vectors partition the goods");
        // Mixed-radix increment, last good fastest.
        let mut done = true;
        for k in (0..owners.len()).rev() {
            if owners[k] + 1 < n {
                owners[k] += 1;
                done = false;
                break;
            }
            owners[k] = 0;
        }
        if done {
            self.owners = None;
        }
        Some(alloc)
    }
}

fn assignments(base: usize, digits: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..digits {
        acc = acc.saturating_mul(base as u128);
    }
    acc
}

/// Enumerates every complete allocation exactly once, deterministically.
pub fn enumerate_complete<'a>(
    instance: &'a Instance,
    budget: &EnumerationBudget,
) -> Result<CompleteAllocations<'a>, OracleError> {
    let required = assignments(instance.num_agents(), instance.num_goods());
    if required > u128::from(budget.max_assignments) {
        return Err(OracleError::BudgetExceeded {
            required,
            budget: budget.max_assignments,
        });
    }
    Ok(CompleteAllocations {
        instance,
        owners: Some(vec![0; instance.num_goods()]),
    })
}

/// β-strong envy by the subset definition: a strict subset of `j`'s bundle
/// that `i` values above β times her own bundle, if any (smallest witness in
/// set order).  Exponential in the bundle size; oracle use only.
pub fn subset_strong_envy(
    instance: &Instance,
    alloc: &Allocation,
    i: usize,
    j: usize,
    beta: Beta,
) -> Option<GoodSet> {
    let own = instance.value(i, alloc.bundle(i));
    let other: Vec<usize> = alloc.bundle(j).iter().copied().collect();
    let full = (1u64 << other.len()) - 1;
    for mask in 0..full {
        let subset: GoodSet = other
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &g)| g)
            .collect();
        if beta.scaled_less(&own, &instance.value(i, &subset)) {
            return Some(subset);
        }
    }
    None
}

/// Whether the allocation is β-EFX by the subset definition.
pub fn subset_efx_verdict(instance: &Instance, alloc: &Allocation, beta: Beta) -> bool {
    let n = alloc.num_agents();
    (0..n).all(|i| {
        (0..n).all(|j| i == j || subset_strong_envy(instance, alloc, i, j, beta).is_none())
    })
}

/// First complete allocation in enumeration order that is exactly EFX by
/// the subset definition, if one exists.
pub fn exists_efx(
    instance: &Instance,
    budget: &EnumerationBudget,
) -> Result<Option<Allocation>, OracleError> {
    for alloc in enumerate_complete(instance, budget)? {
        if subset_efx_verdict(instance, &alloc, Beta::One) {
            return Ok(Some(alloc));
        }
    }
    Ok(None)
}

/// Rank of an agent by enumerating every simple path that ends at her:
/// maximum product of edge weights, ties broken by shortest path, then by
/// lexicographically smallest vertex sequence.  Must agree with
/// [`crate::graph::EnvyGraph::compute_ranks`].
pub fn brute_rank(
    instance: &Instance,
    alloc: &Allocation,
    agent: usize,
) -> Result<(Rational, Vec<usize>), OracleError> {
    let envy = graph::build(instance, alloc)?;
    if let Some(cycle) = envy.super_unit_cycle() {
        return Err(OracleError::Graph(GraphError::SuperUnitCycle(cycle)));
    }
    let vertices: Vec<usize> = envy.vertices().to_vec();
    let weights: BTreeMap<(usize, usize), Rational> = envy
        .defined_pairs()
        .map(|(&pair, w)| (pair, w.clone()))
        .collect();
    let mut best: Option<(Rational, Vec<usize>)> = None;
    let mut path = Vec::new();

    fn consider(best: &mut Option<(Rational, Vec<usize>)>, product: &Rational, path: &[usize]) {
        let better = match best {
            None => true,
            Some((bp, bpath)) => {
                product > bp
                    || (product == bp
                        && (path.len() < bpath.len()
                            || (path.len() == bpath.len() && path < bpath.as_slice())))
            }
        };
        if better {
            *best = Some((product.clone(), path.to_vec()));
        }
    }

    fn extend(
        vertices: &[usize],
        weights: &BTreeMap<(usize, usize), Rational>,
        target: usize,
        path: &mut Vec<usize>,
        product: Rational,
        best: &mut Option<(Rational, Vec<usize>)>,
    ) {
        let last = *path.last().expect("path is never empty");
        if last == target {
            consider(best, &product, path);
            return;
        }
        for &next in vertices {
            if path.contains(&next) {
                continue;
            }
            if let Some(w) = weights.get(&(last, next)) {
                path.push(next);
                extend(vertices, weights, target, path, &product * w, best);
                path.pop();
            }
        }
    }

    for &start in &vertices {
        path.push(start);
        extend(
            &vertices,
            &weights,
            agent,
            &mut path,
            Rational::one(),
            &mut best,
        );
        path.pop();
    }
    best.ok_or_else(|| {
        OracleError::Graph(GraphError::Internal(format!(
            "agent {agent} is not a vertex of the envy graph"
        )))
    })
}

/// Complete allocation maximising Nash social welfare (fewer zero-value
/// bundles first, then the product of the positive values); ties keep the
/// earliest allocation in enumeration order.
pub fn max_nsw_complete(
    instance: &Instance,
    budget: &EnumerationBudget,
) -> Result<Allocation, OracleError> {
    let agents: Vec<usize> = (0..instance.num_agents()).collect();
    let mut best: Option<(Nsw, Allocation)> = None;
    for alloc in enumerate_complete(instance, budget)? {
        let nsw = Nsw::over(instance, &alloc, agents.iter());
        if best.as_ref().map_or(true, |(b, _)| nsw > *b) {
            best = Some((nsw, alloc));
        }
    }
    Ok(best.expect("enumeration yields at least one allocation").1)
}

/// Confirms by proper-subset enumeration that `subset` exceeds `threshold`
/// for the agent while no proper subset does.  Exponential in the subset
/// size; intended for |subset| ≤ 6.
pub fn subset_is_minimal_exceeding(
    instance: &Instance,
    agent: usize,
    subset: &GoodSet,
    threshold: &Rational,
) -> bool {
    if instance.value(agent, subset) <= *threshold {
        return false;
    }
    let goods: Vec<usize> = subset.iter().copied().collect();
    let full = (1u64 << goods.len()) - 1;
    for mask in 0..full {
        let proper: GoodSet = goods
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &g)| g)
            .collect();
        if instance.value(agent, &proper) > *threshold {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::check_alpha_efx;
    use crate::fixtures::{four_by_seven, four_by_seven_allocation};
    use crate::rational::{rat, ratio};
    use std::collections::BTreeSet;

    fn set(goods: &[usize]) -> GoodSet {
        goods.iter().copied().collect()
    }

    #[test]
    fn enumeration_counts_match_powers() {
        let two = Instance::from_ints(&[&[1, 1, 1], &[1, 1, 1]]).unwrap();
        let budget = EnumerationBudget::default();
        assert_eq!(enumerate_complete(&two, &budget).unwrap().count(), 8);
        let three =
            Instance::from_ints(&[&[1, 1, 1, 1, 1], &[1, 1, 1, 1, 1], &[1, 1, 1, 1, 1]]).unwrap();
        assert_eq!(enumerate_complete(&three, &budget).unwrap().count(), 243);
    }

    #[test]
    fn enumeration_is_duplicate_free_and_ordered() {
        let inst = Instance::from_ints(&[&[1, 1, 1], &[1, 1, 1]]).unwrap();
        let budget = EnumerationBudget::default();
        let all: Vec<Allocation> = enumerate_complete(&inst, &budget).unwrap().collect();
        let unique: BTreeSet<String> = all.iter().map(|a| format!("{a:?}")).collect();
        assert_eq!(unique.len(), all.len());
        // First assignment: everything to agent 0; second: only the last
        // good moves to agent 1.
        assert_eq!(all[0].bundles(), &[set(&[0, 1, 2]), set(&[])]);
        assert_eq!(all[1].bundles(), &[set(&[0, 1]), set(&[2])]);
    }

    #[test]
    fn budget_is_enforced() {
        let inst =
            Instance::from_ints(&[&[1, 1, 1, 1, 1], &[1, 1, 1, 1, 1], &[1, 1, 1, 1, 1]]).unwrap();
        let budget = EnumerationBudget {
            max_assignments: 100,
        };
        let err = enumerate_complete(&inst, &budget)
            .err()
            .expect("enumeration above the budget must fail");
        match err {
            OracleError::BudgetExceeded { required, budget } => {
                assert_eq!(required, 243);
                assert_eq!(budget, 100);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn exists_efx_single_agent_takes_everything() {
        let inst = Instance::from_ints(&[&[3, 0, 2]]).unwrap();
        let witness = exists_efx(&inst, &EnumerationBudget::default())
            .unwrap()
            .unwrap();
        assert_eq!(witness.bundles(), &[set(&[0, 1, 2])]);
    }

    #[test]
    fn exists_efx_two_agents_first_witness() {
        // All-to-agent-0 leaves agent 1 strongly envious, so the first EFX
        // allocation in enumeration order splits the goods.
        let inst = Instance::from_ints(&[&[2, 1], &[1, 2]]).unwrap();
        let witness = exists_efx(&inst, &EnumerationBudget::default())
            .unwrap()
            .unwrap();
        assert_eq!(witness.bundles(), &[set(&[0]), set(&[1])]);
    }

    #[test]
    fn subset_verdicts_agree_with_single_removal_check() {
        let inst = Instance::from_ints(&[&[4, 1, 0, 3], &[2, 2, 5, 1], &[0, 3, 1, 2]]).unwrap();
        let budget = EnumerationBudget::default();
        for alloc in enumerate_complete(&inst, &budget).unwrap() {
            for beta in [Beta::One, Beta::Sqrt2] {
                assert_eq!(
                    subset_efx_verdict(&inst, &alloc, beta),
                    check_alpha_efx(&inst, &alloc, beta).passed(),
                    "disagreement on {alloc:?} at beta {beta}"
                );
            }
        }
    }

    #[test]
    fn brute_rank_on_the_reference_allocation() {
        let inst = four_by_seven();
        let alloc = four_by_seven_allocation();
        let (rank3, path3) = brute_rank(&inst, &alloc, 3).unwrap();
        assert_eq!(rank3, ratio(10, 9));
        assert_eq!(path3, vec![2, 3]);
        let (rank0, path0) = brute_rank(&inst, &alloc, 0).unwrap();
        assert_eq!(rank0, rat(1));
        assert_eq!(path0, vec![0]);
        // Full agreement with the tight-graph computation.
        let table = graph::build(&inst, &alloc).unwrap().compute_ranks().unwrap();
        for agent in 0..4 {
            let (rank, path) = brute_rank(&inst, &alloc, agent).unwrap();
            assert_eq!(rank, table.rank[&agent]);
            assert_eq!(path, table.rankpath[&agent]);
        }
    }

    #[test]
    fn max_nsw_respects_disjoint_relevance() {
        let inst = Instance::from_ints(&[&[3, 0], &[0, 2]]).unwrap();
        let best = max_nsw_complete(&inst, &EnumerationBudget::default()).unwrap();
        assert_eq!(best.bundles(), &[set(&[0]), set(&[1])]);
    }

    #[test]
    fn minimality_verifier_detects_shrinkable_sets() {
        let inst = Instance::from_ints(&[&[5, 3]]).unwrap();
        let threshold = rat(4);
        assert!(!subset_is_minimal_exceeding(
            &inst,
            0,
            &set(&[0, 1]),
            &threshold
        ));
        assert!(subset_is_minimal_exceeding(&inst, 0, &set(&[0]), &threshold));
        assert!(!subset_is_minimal_exceeding(&inst, 0, &set(&[1]), &threshold));
    }
}
