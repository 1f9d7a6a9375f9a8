//! Complete exact EFX allocation for restricted additive valuations in
//! which every good is relevant to at most two agents.
//!
//! All goods inside a bundle share one identical relevant set (of size at
//! most two, containing the owner), so the zero-threshold envy graph over
//! the remaining agents has in-degree at most one everywhere.  Rules 1 and 2
//! grow bundles (rule 2 shifting along a rank path); rules 3 and 4 satisfy
//! an agent outright and remove her from the remaining set, after which her
//! bundle never changes again.  When one agent remains she absorbs the whole
//! pool, and the completed allocation is exactly EFX.

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
use crate::rational::{Beta, Rational};
use crate::GoodSet;

use super::{drain_worthless_pool, ensure, ensure_fair, ensure_property, sorted};

/// Runs the algorithm end to end: seeded partial allocation, rule loop,
/// completion.  The returned allocation is complete and exactly EFX.
pub fn run_pqrax(instance: &Instance) -> Result<RunOutcome, RunError> {
    let seed = seed_allocation(instance);
    let remaining = seed.active.clone();
    let mut driver = Driver {
        instance,
        alloc: seed.allocation,
        initial_active: seed.active,
        remaining,
        satisfied: BTreeMap::new(),
        last_virtual: BTreeMap::new(),
    };
    driver.assert_state("seed")?;
    run_loop(&mut driver)
}

struct Driver<'a> {
    instance: &'a Instance,
    alloc: Allocation,
    initial_active: BTreeSet<usize>,
    /// Agents still taking part in rules; satisfied agents leave this set.
    remaining: BTreeSet<usize>,
    /// Bundles frozen at satisfaction time, re-checked for stability.
    satisfied: BTreeMap<usize, GoodSet>,
    last_virtual: BTreeMap<usize, Rational>,
}

impl Driver<'_> {
    fn replace(&mut self, pool: GoodSet, bundles: Vec<GoodSet>) -> Result<(), RunError> {
        self.alloc
            .replace(pool, bundles)
            .map_err(|e| RunError::InvariantViolated(format!("rule broke the partition: {e}")))
    }

    fn ranks(&self) -> Result<RankTable, RunError> {
        let envy = graph::build_induced(self.instance, &self.alloc, &self.remaining)?;
        Ok(envy.compute_ranks()?)
    }

    fn zero_edges(&self) -> BTreeSet<(usize, usize)> {
        fairness::envy_edges(self.instance, &self.alloc, Beta::Zero, &self.remaining)
    }

    /// The identical relevant set shared by all goods of an agent's bundle;
    /// the empty bundle is typed by its owner alone.
    fn uniform_type(&self, agent: usize) -> Result<BTreeSet<usize>, RunError> {
        let bundle = self.alloc.bundle(agent);
        let Some(&first) = bundle.iter().next() else {
            return Ok(BTreeSet::from([agent]));
        };
        let ty = self.instance.relevant_agents(first);
        for &g in bundle {
            ensure(self.instance.relevant_agents(g) == ty, || {
                format!("bundle of agent {agent} mixes goods of different types")
            })?;
        }
        ensure(ty.contains(&agent), || {
            format!("agent {agent} holds goods irrelevant to her")
        })?;
        Ok(ty)
    }

    /// Invariants re-checked after the seed and after every applied rule:
    /// bundles are uniformly typed, nobody virtually envies a bundle with
    /// one good removed, satisfied bundles are untouched, and no remaining
    /// agent's virtual value decreased.
    fn assert_state(&mut self, stage: &str) -> Result<(), RunError> {
        ensure_property(
            self.instance,
            &self.alloc,
            PropertyName::TypedBundles,
            &self.remaining,
            stage,
        )?;
        ensure_property(
            self.instance,
            &self.alloc,
            PropertyName::VirtualEfx,
            &self.remaining,
            stage,
        )?;
        for (&agent, bundle) in &self.satisfied {
            ensure(self.alloc.bundle(agent) == bundle, || {
                format!("{stage}: bundle of satisfied agent {agent} changed")
            })?;
        }
        if !self.remaining.is_empty() {
            let ranks = self.ranks()?;
            for &i in &self.remaining {
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

    fn satisfy(&mut self, agent: usize) {
        self.satisfied.insert(agent, self.alloc.bundle(agent).clone());
        self.remaining.remove(&agent);
        self.last_virtual.remove(&agent);
    }

    /// Rule 1: a rank-one agent finds a pool good of exactly her bundle's
    /// type.  She keeps a minimal part of the augmented bundle that beats
    /// her old value; the rest returns to the pool.  The zero-threshold
    /// envy graph is unchanged by this (asserted).
    fn try_rule1(&mut self, ranks: &RankTable) -> Result<Option<RuleRecord>, RunError> {
        let one = Rational::one();
        let mut witness = None;
        'search: for &i in &self.remaining {
            if ranks.rank[&i] != one {
                continue;
            }
            let ty = self.uniform_type(i)?;
            for &g in self.alloc.pool() {
                if self.instance.relevant_agents(g) == ty {
                    witness = Some((i, g, ty));
                    break 'search;
                }
            }
        }
        let Some((i, g, _ty)) = witness else {
            return Ok(None);
        };
        let edges_before = self.zero_edges();
        let own = self.instance.value(i, self.alloc.bundle(i));
        let mut aug = self.alloc.bundle(i).clone();
        aug.insert(g);
        let keep = minimal_subset_exceeding(self.instance, i, &aug, &own)?;
        let mut pool = self.alloc.pool().clone();
        pool.remove(&g);
        for &residue in aug.difference(&keep) {
            pool.insert(residue);
        }
        let mut bundles = self.alloc.bundles().to_vec();
        bundles[i] = keep;
        self.replace(pool, bundles)?;
        ensure(self.zero_edges() == edges_before, || {
            "same-type exchange altered the zero-threshold envy graph".into()
        })?;
        Ok(Some(RuleRecord {
            rule: "rule-1",
            agents: vec![i],
            goods: vec![g],
        }))
    }

    /// Rule 2: the pool goods relevant to the pair (i, j) are together worth
    /// more than i's virtual value, and i's virtual value does not exceed
    /// j's.  Agent i takes a minimal such subset; bundles shift one step
    /// along her rank path, the path root's old bundle returning to the
    /// pool.  Feasibility of the rank bound certificate read off the old
    /// ranks is asserted on the post-state.
    fn try_rule2(&mut self, ranks: &RankTable) -> Result<Option<RuleRecord>, RunError> {
        let virt = &ranks.virtual_value;
        let mut fire = None;
        'search: for &i in &self.remaining {
            let mut partner: Option<(Rational, usize)> = None;
            for &j in &self.remaining {
                if j == i || virt[&i] > virt[&j] {
                    continue;
                }
                let slice = self.instance.relevant_pair(self.alloc.pool(), i, j);
                if self.instance.value(i, &slice) > virt[&i] {
                    let key = (virt[&j].clone(), j);
                    if partner.as_ref().map_or(true, |p| key < *p) {
                        partner = Some(key);
                    }
                }
            }
            if let Some((_, j)) = partner {
                fire = Some((i, j));
                break 'search;
            }
        }
        let Some((i, j)) = fire else {
            return Ok(None);
        };
        let slice = self.instance.relevant_pair(self.alloc.pool(), i, j);
        let subset = minimal_subset_exceeding(self.instance, i, &slice, &virt[&i])?;
        let path = ranks.rankpath[&i].clone();
        let mut r_hat = ranks.rank.clone();
        for w in path.windows(2) {
            r_hat.insert(w[0], ranks.rank[&w[1]].clone());
        }
        r_hat.insert(i, self.instance.value(i, &subset) / &virt[&i]);
        let old = self.alloc.bundles().to_vec();
        let mut bundles = old.clone();
        let mut pool = self.alloc.pool().clone();
        for g in &subset {
            pool.remove(g);
        }
        for w in path.windows(2) {
            bundles[w[0]] = old[w[1]].clone();
        }
        bundles[i] = subset.clone();
        pool.extend(old[path[0]].iter().copied());
        self.replace(pool, bundles)?;
        let envy = graph::build_induced(self.instance, &self.alloc, &self.remaining)?;
        ensure(envy.feasible_rank_bound_check(&r_hat), || {
            "rank certificate read off the old ranks is infeasible after the shift".into()
        })?;
        Ok(Some(RuleRecord {
            rule: "rule-2",
            agents: path,
            goods: sorted(&subset),
        }))
    }

    /// Rule 3: an agent values no other remaining bundle.  She keeps the
    /// better of her bundle and her relevant pool slice (ties keep the
    /// bundle), is satisfied, and leaves the remaining set.
    fn try_rule3(&mut self) -> Result<Option<RuleRecord>, RunError> {
        let mut witness = None;
        for &i in &self.remaining {
            let isolated = self
                .remaining
                .iter()
                .all(|&j| j == i || self.instance.value(i, self.alloc.bundle(j)).is_zero());
            if isolated {
                witness = Some(i);
                break;
            }
        }
        let Some(i) = witness else {
            return Ok(None);
        };
        let keep = self.alloc.bundle(i).clone();
        let alt = self.instance.relevant_set(self.alloc.pool(), i);
        let take_alt = self.instance.value(i, &alt) > self.instance.value(i, &keep);
        let goods = if take_alt {
            let mut pool = self.alloc.pool().clone();
            for g in &alt {
                pool.remove(g);
            }
            pool.extend(keep.iter().copied());
            let mut bundles = self.alloc.bundles().to_vec();
            bundles[i] = alt.clone();
            self.replace(pool, bundles)?;
            sorted(&alt)
        } else {
            Vec::new()
        };
        self.satisfy(i);
        Ok(Some(RuleRecord {
            rule: "rule-3",
            agents: vec![i],
            goods,
        }))
    }

    /// Rule 4: with rules 1-3 blocked the zero-threshold envy graph over
    /// the remaining agents consists of disjoint cycles (asserted).  The
    /// lowest rank-one agent compares her bundle plus relevant pool slice
    /// against her cycle successor's bundle: she keeps the former (taking
    /// the slice) or the bundles rotate one step around the cycle.  Either
    /// way she is satisfied and leaves the remaining set.
    fn try_rule4(&mut self, ranks: &RankTable) -> Result<Option<RuleRecord>, RunError> {
        let edges = self.zero_edges();
        for &v in &self.remaining {
            let out = edges.iter().filter(|(a, _)| *a == v).count();
            let inn = edges.iter().filter(|(_, b)| *b == v).count();
            ensure(out == 1 && inn == 1, || {
                format!("zero-threshold envy graph is not a disjoint cycle cover at agent {v}")
            })?;
        }
        let succ: BTreeMap<usize, usize> = edges.into_iter().collect();
        let one = Rational::one();
        let start = self
            .remaining
            .iter()
            .copied()
            .find(|v| ranks.rank[v] == one)
            .ok_or_else(|| RunError::InvariantViolated("no remaining agent has rank one".into()))?;
        let mut cycle = vec![start];
        let mut cur = succ[&start];
        while cur != start {
            cycle.push(cur);
            ensure(cycle.len() <= self.remaining.len(), || {
                "successor walk escaped its cycle".into()
            })?;
            cur = succ[&cur];
        }
        let next = cycle[1];
        let picks = self.instance.relevant_set(self.alloc.pool(), start);
        let mut own_plus = self.alloc.bundle(start).clone();
        own_plus.extend(picks.iter().copied());
        let take_neighbor = self.instance.value(start, self.alloc.bundle(next))
            > self.instance.value(start, &own_plus);
        let goods = if take_neighbor {
            let old = self.alloc.bundles().to_vec();
            let mut bundles = old.clone();
            let len = cycle.len();
            for k in 0..len {
                bundles[cycle[k]] = old[cycle[(k + 1) % len]].clone();
            }
            self.replace(self.alloc.pool().clone(), bundles)?;
            Vec::new()
        } else {
            let mut pool = self.alloc.pool().clone();
            for g in &picks {
                pool.remove(g);
            }
            let mut bundles = self.alloc.bundles().to_vec();
            bundles[start] = own_plus;
            self.replace(pool, bundles)?;
            sorted(&picks)
        };
        self.satisfy(start);
        Ok(Some(RuleRecord {
            rule: "rule-4",
            agents: cycle,
            goods,
        }))
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
            PotentialTag::Pqrax,
            &PotentialContext {
                agents: &self.initial_active,
                remaining: Some(&self.remaining),
            },
        )
    }

    fn apply_lowest_rule(&mut self, trace: &mut Trace) -> Result<Option<RuleRecord>, RunError> {
        let _ = trace;
        if self.remaining.len() < 2 {
            return Ok(None);
        }
        let ranks = self.ranks()?;
        let mut record = self.try_rule1(&ranks)?;
        if record.is_none() {
            record = self.try_rule2(&ranks)?;
        }
        if record.is_none() {
            record = self.try_rule3()?;
        }
        if record.is_none() {
            record = self.try_rule4(&ranks)?;
        }
        let Some(record) = record else {
            return Ok(None);
        };
        self.assert_state(record.rule)?;
        Ok(Some(record))
    }

    /// Completion: the last remaining agent absorbs the whole pool, which
    /// at that point is worthless to every satisfied agent.
    fn final_step(&mut self, _trace: &mut Trace) -> Result<RuleRecord, RunError> {
        let mut agents = Vec::new();
        let goods;
        match self.remaining.len() {
            0 => {
                goods = drain_worthless_pool(self.instance, &mut self.alloc)?;
                if !goods.is_empty() {
                    agents.push(0);
                }
            }
            1 => {
                let last = *self.remaining.iter().next().expect("one agent remains");
                goods = sorted(self.alloc.pool());
                for &g in &goods {
                    self.alloc
                        .take_from_pool(last, g)
                        .map_err(|e| RunError::InvariantViolated(e.to_string()))?;
                }
                if !goods.is_empty() {
                    agents.push(last);
                }
            }
            n => {
                return Err(RunError::InvariantViolated(format!(
                    "completion reached with {n} remaining agents"
                )));
            }
        }
        ensure(self.alloc.is_complete(), || {
            "completion left goods in the pool".into()
        })?;
        ensure_fair(
            &fairness::check_alpha_efx(self.instance, &self.alloc, Beta::One),
            "completed allocation is not exactly EFX",
        )?;
        Ok(RuleRecord {
            rule: FINAL_STEP,
            agents,
            goods,
        })
    }
}
