//! Complete √2/2-EFX allocation for (∞,1)-bounded additive valuations.
//!
//! A single rule drives the loop: whenever some agent's value for the pool
//! exceeds her virtual value (own value divided by her rank in the envy
//! graph), a globally minimal virtually-envied pool subset is carved out and
//! handed to the agent maximising value-to-virtual-value ratio, with bundles
//! shifting one step along her rank path.  Each application strictly raises
//! the Nash social welfare over the active agents and never decreases any
//! virtual value.  Completion lets every agent of rank at most √2 take her
//! relevant pool goods, the lowest rank-one agent absorbing the residue.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};

use crate::allocation::Allocation;
use crate::fairness::{self, PotentialContext, PotentialTag, PropertyName};
use crate::framework::{
    minimal_subset_exceeding, run_loop, seed_allocation, RuleDriven, RuleRecord, RunError,
    RunOutcome, Trace, FINAL_STEP,
};
use crate::graph::{self, RankTable};
use crate::instance::Instance;
use crate::rational::{rat, Beta, Rational};
use crate::GoodSet;

use super::{drain_worthless_pool, ensure, ensure_fair, ensure_property, sorted};

/// Runs the algorithm end to end: seeded partial allocation, rule loop,
/// completion.  The returned allocation is complete and √2/2-EFX.
pub fn run_sqrt2_pq(instance: &Instance) -> Result<RunOutcome, RunError> {
    let seed = seed_allocation(instance);
    let mut driver = Driver {
        instance,
        alloc: seed.allocation,
        active: seed.active,
        last_virtual: BTreeMap::new(),
    };
    driver.assert_state("seed")?;
    run_loop(&mut driver)
}

struct Driver<'a> {
    instance: &'a Instance,
    alloc: Allocation,
    active: BTreeSet<usize>,
    /// Virtual values observed at the previous state, for the monotonicity
    /// check.
    last_virtual: BTreeMap<usize, Rational>,
}

impl Driver<'_> {
    fn replace(&mut self, pool: GoodSet, bundles: Vec<GoodSet>) -> Result<(), RunError> {
        self.alloc
            .replace(pool, bundles)
            .map_err(|e| RunError::InvariantViolated(format!("rule broke the partition: {e}")))
    }

    fn ranks(&self) -> Result<RankTable, RunError> {
        let envy = graph::build_induced(self.instance, &self.alloc, &self.active)?;
        Ok(envy.compute_ranks()?)
    }

    /// Invariants re-checked after the seed and after every applied rule:
    /// a feasible rank bound exists, no agent virtually envies another
    /// bundle with one good removed, every active bundle is fully relevant,
    /// and no virtual value decreased.
    fn assert_state(&mut self, stage: &str) -> Result<(), RunError> {
        ensure_property(
            self.instance,
            &self.alloc,
            PropertyName::RankFeasible,
            &self.active,
            stage,
        )?;
        ensure_property(
            self.instance,
            &self.alloc,
            PropertyName::VirtualEfx,
            &self.active,
            stage,
        )?;
        ensure_property(
            self.instance,
            &self.alloc,
            PropertyName::SelfRelevant,
            &self.active,
            stage,
        )?;
        if !self.active.is_empty() {
            let ranks = self.ranks()?;
            for &i in &self.active {
                if let Some(old) = self.last_virtual.get(&i) {
                    ensure(ranks.virtual_value[&i] >= *old, || {
                        format!("{stage}: virtual value of agent {i} decreased")
                    })?;
                }
            }
            self.last_virtual = ranks.virtual_value;
        }
        Ok(())
    }
}

impl RuleDriven for Driver<'_> {
    fn instance(&self) -> &Instance {
        self.instance
    }

    fn allocation(&self) -> &Allocation {
        &self.alloc
    }

    fn potential(&self) -> fairness::Potential {
        fairness::potential(
            self.instance,
            &self.alloc,
            PotentialTag::Nsw,
            &PotentialContext {
                agents: &self.active,
                remaining: None,
            },
        )
    }

    fn apply_lowest_rule(&mut self, trace: &mut Trace) -> Result<Option<RuleRecord>, RunError> {
        let _ = trace;
        if self.active.is_empty() {
            return Ok(None);
        }
        let ranks = self.ranks()?;
        let pool = self.alloc.pool().clone();
        if !self
            .active
            .iter()
            .any(|&i| self.instance.value(i, &pool) > ranks.virtual_value[&i])
        {
            return Ok(None);
        }
        // Shrink to a pool subset that is virtually envied by some agent but
        // has no virtually envied proper subset: repeatedly let each envious
        // agent (ascending) replace the set by her minimal envied subset
        // until a fixpoint.
        let mut subset = pool;
        loop {
            let mut shrunk = false;
            for &a in &self.active {
                if self.instance.value(a, &subset) > ranks.virtual_value[&a] {
                    let smaller = minimal_subset_exceeding(
                        self.instance,
                        a,
                        &subset,
                        &ranks.virtual_value[&a],
                    )?;
                    if smaller.len() < subset.len() {
                        subset = smaller;
                        shrunk = true;
                    }
                }
            }
            if !shrunk {
                break;
            }
        }
        // Receiver: the agent maximising value over virtual value (lowest
        // index on ties).  Minimality makes every subset good relevant to
        // her (asserted).
        let mut receiver = None;
        let mut best: Option<Rational> = None;
        for &i in &self.active {
            let ratio = self.instance.value(i, &subset) / &ranks.virtual_value[&i];
            if best.as_ref().map_or(true, |b| ratio > *b) {
                best = Some(ratio);
                receiver = Some(i);
            }
        }
        let receiver = receiver.expect("active set is non-empty");
        ensure(
            self.instance.value(receiver, &subset) > ranks.virtual_value[&receiver],
            || format!("receiver {receiver} does not virtually envy the carved pool subset"),
        )?;
        ensure(
            subset
                .iter()
                .all(|&g| !self.instance.singleton(receiver, g).is_zero()),
            || format!("carved pool subset holds a good irrelevant to its receiver {receiver}"),
        )?;
        let path = ranks.rankpath[&receiver].clone();
        // Rank bound certificate for the post-state, read off the old ranks.
        let mut r_hat = ranks.rank.clone();
        for w in path.windows(2) {
            r_hat.insert(w[0], ranks.rank[&w[1]].clone());
        }
        r_hat.insert(
            receiver,
            self.instance.value(receiver, &subset) / &ranks.virtual_value[&receiver],
        );
        let old = self.alloc.bundles().to_vec();
        let mut bundles = old.clone();
        let mut pool_new = self.alloc.pool().clone();
        for g in &subset {
            pool_new.remove(g);
        }
        for w in path.windows(2) {
            bundles[w[0]] = old[w[1]].clone();
        }
        bundles[receiver] = subset.clone();
        pool_new.extend(old[path[0]].iter().copied());
        self.replace(pool_new, bundles)?;
        let envy = graph::build_induced(self.instance, &self.alloc, &self.active)?;
        ensure(envy.super_unit_cycle().is_none(), || {
            "pool-subset shift created a super-unit cycle".into()
        })?;
        ensure(envy.feasible_rank_bound_check(&r_hat), || {
            "rank certificate read off the old ranks is infeasible after the shift".into()
        })?;
        self.assert_state("rule-1")?;
        Ok(Some(RuleRecord {
            rule: "rule-1",
            agents: path,
            goods: sorted(&subset),
        }))
    }

    /// Completion: every other active agent whose rank is at most √2 takes
    /// her relevant pool goods (ascending agent order, pool shrinking in
    /// between); the lowest rank-one agent absorbs the residue.
    fn final_step(&mut self, _trace: &mut Trace) -> Result<RuleRecord, RunError> {
        let mut agents = Vec::new();
        let mut goods = Vec::new();
        if self.active.is_empty() {
            goods = drain_worthless_pool(self.instance, &mut self.alloc)?;
            if !goods.is_empty() {
                agents.push(0);
            }
        } else {
            let ranks = self.ranks()?;
            let one = Rational::one();
            let leader = self
                .active
                .iter()
                .copied()
                .find(|i| ranks.rank[i] == one)
                .ok_or_else(|| RunError::InvariantViolated("no agent has rank one".into()))?;
            let two = rat(2);
            for &j in &self.active {
                if j == leader {
                    continue;
                }
                let r = &ranks.rank[&j];
                if r * r <= two {
                    let picks = self.instance.relevant_set(self.alloc.pool(), j);
                    for &g in &picks {
                        self.alloc
                            .take_from_pool(j, g)
                            .map_err(|e| RunError::InvariantViolated(e.to_string()))?;
                    }
                    if !picks.is_empty() {
                        agents.push(j);
                        goods.extend(sorted(&picks));
                    }
                }
            }
            let rest = sorted(self.alloc.pool());
            for &g in &rest {
                self.alloc
                    .take_from_pool(leader, g)
                    .map_err(|e| RunError::InvariantViolated(e.to_string()))?;
            }
            agents.push(leader);
            goods.extend(rest);
        }
        ensure(self.alloc.is_complete(), || {
            "completion left goods in the pool".into()
        })?;
        ensure_fair(
            &fairness::check_alpha_efx(self.instance, &self.alloc, Beta::Sqrt2),
            "completed allocation is not sqrt2/2-EFX",
        )?;
        Ok(RuleRecord {
            rule: FINAL_STEP,
            agents,
            goods,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(goods: &[usize]) -> GoodSet {
        goods.iter().copied().collect()
    }

    fn rules_of(outcome: &RunOutcome) -> Vec<String> {
        outcome.trace.entries.iter().map(|e| e.rule.clone()).collect()
    }

    #[test]
    fn single_agent_swaps_then_absorbs() {
        // Rank path of length one: the agent trades her seed good for the
        // better pool good, then completion returns the seed good to her.
        let instance = Instance::from_ints(&[&[2, 3]]).unwrap();
        let outcome = run_sqrt2_pq(&instance).unwrap();
        assert_eq!(outcome.allocation.bundles(), &[set(&[0, 1])]);
        assert_eq!(rules_of(&outcome), ["rule-1", "final"]);
    }

    #[test]
    fn rank_path_shift_moves_the_root_bundle_to_the_pool() {
        // Agent 1 virtually envies the pool good 2; her rank path is
        // 0 -> 1, so agent 0 takes her bundle and agent 0's seed good
        // returns to the pool, where completion hands it back to agent 0.
        let instance = Instance::from_ints(&[&[2, 3, 0], &[0, 4, 9]]).unwrap();
        let outcome = run_sqrt2_pq(&instance).unwrap();
        assert_eq!(outcome.allocation.bundles(), &[set(&[0, 1]), set(&[2])]);
        assert_eq!(rules_of(&outcome), ["rule-1", "final"]);
        let entry = &outcome.trace.entries[0];
        assert_eq!(entry.agents, vec![0, 1]);
        assert_eq!(entry.goods, vec![2]);
    }

    #[test]
    fn prematched_agents_coexist_with_the_loop() {
        let instance = crate::fixtures::four_by_three();
        let outcome = run_sqrt2_pq(&instance).unwrap();
        assert_eq!(
            outcome.allocation.bundles(),
            &[set(&[0]), set(&[2]), set(&[1]), set(&[])]
        );
        assert_eq!(rules_of(&outcome), ["final"]);
        assert!(
            fairness::check_alpha_efx(&instance, &outcome.allocation, Beta::Sqrt2).passed()
        );
    }

    #[test]
    fn reruns_are_byte_identical() {
        let instance = Instance::from_ints(&[&[2, 3, 0], &[0, 4, 9]]).unwrap();
        let first = run_sqrt2_pq(&instance).unwrap();
        let second = run_sqrt2_pq(&instance).unwrap();
        assert_eq!(
            format!("{:?}", first.allocation),
            format!("{:?}", second.allocation)
        );
        assert_eq!(format!("{:?}", first.trace), format!("{:?}", second.trace));
    }
}
