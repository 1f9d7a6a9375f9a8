//! Complete EF2X allocation for (∞,1)-bounded additive valuations.
//!
//! The driver keeps every intermediate allocation EFX and every non-source
//! bundle fully relevant to its owner.  Four rules run in fixed precedence;
//! after each one, envy cycles are resolved.  The completion step hands each
//! leftover pool good to a singleton-holding non-source agent of a distinct
//! multi-agent component, which is what makes the final allocation EF2X.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use crate::allocation::Allocation;
use crate::fairness::{self, PotentialContext, PotentialTag, PropertyName};
use crate::framework::{
    most_envious_agent, resolve_envy_cycles, run_loop, seed_allocation, RuleDriven, RuleRecord,
    RunError, RunOutcome, Trace, FINAL_STEP,
};
use crate::graph;
use crate::instance::Instance;
use crate::rational::Beta;
use crate::GoodSet;

use super::{drain_worthless_pool, ensure, ensure_fair, ensure_property, sorted};

/// Runs the algorithm end to end: seeded partial allocation, rule loop,
/// completion.  The returned allocation is complete and EF2X; every
/// intermediate state was EFX with all non-source bundles fully relevant.
pub fn run_cxxra(instance: &Instance) -> Result<RunOutcome, RunError> {
    let seed = seed_allocation(instance);
    let mut driver = Driver {
        instance,
        alloc: seed.allocation,
        active: seed.active,
    };
    driver.assert_state("seed")?;
    run_loop(&mut driver)
}

struct Driver<'a> {
    instance: &'a Instance,
    alloc: Allocation,
    active: BTreeSet<usize>,
}

impl Driver<'_> {
    fn replace(&mut self, pool: GoodSet, bundles: Vec<GoodSet>) -> Result<(), RunError> {
        self.alloc
            .replace(pool, bundles)
            .map_err(|e| RunError::InvariantViolated(format!("rule broke the partition: {e}")))
    }

    /// Sources of the plain envy relation over the active agents.
    fn sources(&self) -> Vec<usize> {
        let edges = fairness::envy_edges(self.instance, &self.alloc, Beta::One, &self.active);
        fairness::sources_of(&self.active, &edges)
    }

    /// Invariants re-checked after the seed and after every applied rule:
    /// the allocation is EFX and every active non-source bundle is fully
    /// relevant to its owner.
    fn assert_state(&self, stage: &str) -> Result<(), RunError> {
        ensure_fair(
            &fairness::check_alpha_efx(self.instance, &self.alloc, Beta::One),
            &format!("{stage}: allocation is not EFX"),
        )?;
        ensure_property(
            self.instance,
            &self.alloc,
            PropertyName::NonSourceRelevant,
            &self.active,
            stage,
        )
    }

    fn cleanup(&mut self, trace: &mut Trace) -> Result<(), RunError> {
        let instance = self.instance;
        let active = &self.active;
        resolve_envy_cycles(instance, &mut self.alloc, active, |alloc, step| {
            let phi = fairness::potential(
                instance,
                alloc,
                PotentialTag::Cxxra,
                &PotentialContext {
                    agents: active,
                    remaining: None,
                },
            );
            trace.push(step.kind, step.agents, step.goods, phi.to_string());
        })
    }

    /// Rule 1: some active agent prefers a single pool good to her whole
    /// bundle.  She swaps, her old bundle returns to the pool.
    fn try_rule1(&mut self) -> Result<Option<RuleRecord>, RunError> {
        let mut witness = None;
        'search: for &i in &self.active {
            let own = self.instance.value(i, self.alloc.bundle(i));
            for &g in self.alloc.pool() {
                if *self.instance.singleton(i, g) > own {
                    witness = Some((i, g));
                    break 'search;
                }
            }
        }
        let Some((i, g)) = witness else {
            return Ok(None);
        };
        let mut pool = self.alloc.pool().clone();
        let mut bundles = self.alloc.bundles().to_vec();
        pool.remove(&g);
        pool.extend(bundles[i].iter().copied());
        bundles[i] = GoodSet::from([g]);
        self.replace(pool, bundles)?;
        Ok(Some(RuleRecord {
            rule: "rule-1",
            agents: vec![i],
            goods: vec![g],
        }))
    }

    /// Rule 2: a source values some pool good.  She absorbs it and prunes
    /// her bundle down to its relevant part; the residue returns to the pool.
    fn try_rule2(&mut self) -> Result<Option<RuleRecord>, RunError> {
        let mut witness = None;
        'search: for &i in &self.sources() {
            for &g in self.alloc.pool() {
                if !self.instance.singleton(i, g).is_zero() {
                    witness = Some((i, g));
                    break 'search;
                }
            }
        }
        let Some((i, g)) = witness else {
            return Ok(None);
        };
        let mut union = self.alloc.bundle(i).clone();
        union.insert(g);
        let keep = self.instance.relevant_set(&union, i);
        let mut pool = self.alloc.pool().clone();
        pool.remove(&g);
        for &residue in union.difference(&keep) {
            pool.insert(residue);
        }
        let mut bundles = self.alloc.bundles().to_vec();
        bundles[i] = keep;
        self.replace(pool, bundles)?;
        Ok(Some(RuleRecord {
            rule: "rule-2",
            agents: vec![i],
            goods: vec![g],
        }))
    }

    /// Rule 3: a pool good can join a source's bundle without making any
    /// other active agent prefer the augmented bundle to her own.  Because
    /// rule 2 was inapplicable, the good is worthless to the source, so the
    /// move only grows the allocated count.
    fn try_rule3(&mut self) -> Result<Option<RuleRecord>, RunError> {
        let mut witness = None;
        'search: for &i in &self.sources() {
            for &g in self.alloc.pool() {
                let mut aug = self.alloc.bundle(i).clone();
                aug.insert(g);
                let objection = self.active.iter().any(|&j| {
                    j != i && self.instance.value(j, self.alloc.bundle(j)) < self.instance.value(j, &aug)
                });
                if !objection {
                    witness = Some((i, g));
                    break 'search;
                }
            }
        }
        let Some((i, g)) = witness else {
            return Ok(None);
        };
        ensure(self.instance.singleton(i, g).is_zero(), || {
            format!("rule 3 fired for source {i} and pool good {g} she values, although rule 2 was inapplicable")
        })?;
        self.alloc
            .take_from_pool(i, g)
            .map_err(|e| RunError::InvariantViolated(e.to_string()))?;
        Ok(Some(RuleRecord {
            rule: "rule-3",
            agents: vec![i],
            goods: vec![g],
        }))
    }

    /// Rule 4: rules 1-3 are blocked but goods remain.  Hand distinct pool
    /// goods to the component sources (multi-agent components first); each
    /// augmented source bundle has a most envious agent, and mapping every
    /// good-bearing source to the source of that agent's component yields a
    /// functional graph.  If it contains a cycle, carve all augmented bundles
    /// of the cycle simultaneously: each most envious agent takes her minimal
    /// envied subset, the bundles shift one step along an envy path from her
    /// component's source, and the carving residues return to the pool.
    fn try_rule4(&mut self) -> Result<Option<RuleRecord>, RunError> {
        if self.alloc.pool().is_empty() || self.active.is_empty() {
            return Ok(None);
        }
        let envy = graph::build_induced(self.instance, &self.alloc, &self.active)?;
        let structure = envy.sources_and_components(Beta::One)?;
        let source_set: BTreeSet<usize> = structure.sources.iter().copied().collect();
        let ordered: Vec<usize> = structure
            .sources
            .iter()
            .copied()
            .filter(|s| structure.components[s].len() >= 2)
            .chain(
                structure
                    .sources
                    .iter()
                    .copied()
                    .filter(|s| structure.components[s].len() < 2),
            )
            .collect();
        let pool = sorted(self.alloc.pool());
        let assigned: BTreeMap<usize, usize> =
            ordered.iter().copied().zip(pool.iter().copied()).collect();
        let mut carve: BTreeMap<usize, (usize, GoodSet)> = BTreeMap::new();
        let mut next_source: BTreeMap<usize, usize> = BTreeMap::new();
        for (&s, &g) in &assigned {
            let mut aug = self.alloc.bundle(s).clone();
            aug.insert(g);
            let Some((t, subset)) = most_envious_agent(self.instance, &self.alloc, &self.active, &aug)
            else {
                return Err(RunError::InvariantViolated(format!(
                    "rule 3 declined pool good {g} for source {s}, yet nobody envies the augmented bundle"
                )));
            };
            ensure(!source_set.contains(&t), || {
                format!("most envious agent {t} of source {s}'s augmented bundle is itself a source")
            })?;
            ensure(subset.contains(&g), || {
                format!("minimal envied subset for source {s} misses the added pool good {g}")
            })?;
            next_source.insert(s, structure.component_source[&t]);
            carve.insert(s, (t, subset));
        }
        let Some(cycle) = functional_cycle(&assigned, &next_source) else {
            return Ok(None);
        };
        let edges = envy.threshold_view(Beta::One);
        let old = self.alloc.bundles().to_vec();
        let mut bundles = old.clone();
        let mut pool_new = self.alloc.pool().clone();
        let mut agents_out = Vec::new();
        let mut goods_out = Vec::new();
        let len = cycle.len();
        for k in 0..len {
            let donor = cycle[k];
            let receiver_source = cycle[(k + 1) % len];
            let g = assigned[&donor];
            let (t, subset) = &carve[&donor];
            let comp = &structure.components[&receiver_source];
            ensure(comp.contains(t), || {
                format!("most envious agent {t} fell outside the component of source {receiver_source}")
            })?;
            let path = graph::lex_shortest_path(&edges, receiver_source, *t).ok_or_else(|| {
                RunError::InvariantViolated(format!(
                    "no envy path from source {receiver_source} to agent {t}"
                ))
            })?;
            ensure(path.iter().all(|v| comp.contains(v)), || {
                format!("envy path from {receiver_source} to {t} leaves its component")
            })?;
            for w in path.windows(2) {
                bundles[w[0]] = old[w[1]].clone();
            }
            bundles[*t] = subset.clone();
            pool_new.remove(&g);
            let mut aug = old[donor].clone();
            aug.insert(g);
            for &residue in aug.difference(subset) {
                pool_new.insert(residue);
            }
            agents_out.extend(path.iter().copied());
            goods_out.push(g);
        }
        self.replace(pool_new, bundles)?;
        Ok(Some(RuleRecord {
            rule: "rule-4",
            agents: agents_out,
            goods: goods_out,
        }))
    }
}

/// First cycle of the successor map restricted to good-bearing sources,
/// scanning start vertices in ascending order.  A walk that reaches a source
/// without an assigned good (or an already dead vertex) dies.
fn functional_cycle(
    assigned: &BTreeMap<usize, usize>,
    next: &BTreeMap<usize, usize>,
) -> Option<Vec<usize>> {
    let mut dead: BTreeSet<usize> = BTreeSet::new();
    for &start in assigned.keys() {
        if dead.contains(&start) {
            continue;
        }
        let mut walk: Vec<usize> = Vec::new();
        let mut cur = start;
        loop {
            if !assigned.contains_key(&cur) || dead.contains(&cur) {
                break;
            }
            if let Some(pos) = walk.iter().position(|&v| v == cur) {
                return Some(graph::canonical_cycle_rotation(&walk[pos..]));
            }
            walk.push(cur);
            cur = next[&cur];
        }
        dead.extend(walk);
    }
    None
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
            PotentialTag::Cxxra,
            &PotentialContext {
                agents: &self.active,
                remaining: None,
            },
        )
    }

    fn apply_lowest_rule(&mut self, trace: &mut Trace) -> Result<Option<RuleRecord>, RunError> {
        let mut record = self.try_rule1()?;
        if record.is_none() {
            record = self.try_rule2()?;
        }
        if record.is_none() {
            record = self.try_rule3()?;
        }
        if record.is_none() {
            record = self.try_rule4()?;
        }
        let Some(record) = record else {
            return Ok(None);
        };
        self.cleanup(trace)?;
        self.assert_state(record.rule)?;
        Ok(Some(record))
    }

    /// Completion: each leftover good goes to the lowest-indexed non-source
    /// of a distinct multi-agent component.  There are strictly fewer
    /// leftover goods than such components (asserted), and each receiver
    /// still holds a seed singleton, so the result is EF2X.
    fn final_step(&mut self, _trace: &mut Trace) -> Result<RuleRecord, RunError> {
        let mut agents = Vec::new();
        let mut goods = Vec::new();
        if self.active.is_empty() {
            goods = drain_worthless_pool(self.instance, &mut self.alloc)?;
            if !goods.is_empty() {
                agents.push(0);
            }
        } else if !self.alloc.pool().is_empty() {
            let envy = graph::build_induced(self.instance, &self.alloc, &self.active)?;
            let structure = envy.sources_and_components(Beta::One)?;
            let source_set: BTreeSet<usize> = structure.sources.iter().copied().collect();
            let big: Vec<usize> = structure
                .sources
                .iter()
                .copied()
                .filter(|s| structure.components[s].len() >= 2)
                .collect();
            let pool = sorted(self.alloc.pool());
            ensure(pool.len() < big.len(), || {
                format!(
                    "{} leftover goods need more than {} multi-agent components",
                    pool.len(),
                    big.len()
                )
            })?;
            for (g, s) in pool.into_iter().zip(big) {
                let receiver = structure.components[&s]
                    .iter()
                    .copied()
                    .find(|v| !source_set.contains(v))
                    .ok_or_else(|| {
                        RunError::InvariantViolated(format!(
                            "component of source {s} has no non-source member"
                        ))
                    })?;
                ensure(self.alloc.bundle(receiver).len() == 1, || {
                    format!("completion receiver {receiver} holds a non-singleton bundle")
                })?;
                self.alloc
                    .take_from_pool(receiver, g)
                    .map_err(|e| RunError::InvariantViolated(e.to_string()))?;
                agents.push(receiver);
                goods.push(g);
            }
        }
        ensure(self.alloc.is_complete(), || {
            "completion left goods in the pool".into()
        })?;
        ensure_fair(
            &fairness::check_ef2x(self.instance, &self.alloc),
            "completed allocation is not EF2X",
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
    use crate::fairness::check_ef2x;

    fn set(goods: &[usize]) -> GoodSet {
        goods.iter().copied().collect()
    }

    fn rules_of(outcome: &RunOutcome) -> Vec<String> {
        outcome.trace.entries.iter().map(|e| e.rule.clone()).collect()
    }

    fn phis_of(outcome: &RunOutcome) -> Vec<String> {
        outcome.trace.entries.iter().map(|e| e.phi.clone()).collect()
    }

    #[test]
    fn single_agent_upgrades_then_collects() {
        // Seeded with good 0 (value 2), the agent first swaps for good 1
        // (value 5), then absorbs good 0 back as a source.
        let instance = Instance::from_ints(&[&[2, 5]]).unwrap();
        let outcome = run_cxxra(&instance).unwrap();
        assert_eq!(outcome.allocation.bundles(), &[set(&[0, 1])]);
        assert!(outcome.allocation.is_complete());
        assert_eq!(rules_of(&outcome), ["rule-1", "rule-2", "final"]);
        assert_eq!(phis_of(&outcome), ["(5, 1)", "(7, 2)", "(7, 2)"]);
        assert_eq!(outcome.prefinal_pool, 0);
    }

    #[test]
    fn worthless_good_joins_a_source_bundle() {
        // Good 2 is worth zero to everyone; rule 3 parks it on the lowest
        // source without touching welfare.
        let instance = Instance::from_ints(&[&[4, 0, 0], &[0, 3, 0]]).unwrap();
        let outcome = run_cxxra(&instance).unwrap();
        assert_eq!(outcome.allocation.bundles(), &[set(&[0, 2]), set(&[1])]);
        assert_eq!(rules_of(&outcome), ["rule-3", "final"]);
        assert_eq!(phis_of(&outcome), ["(7, 3)", "(7, 3)"]);
    }

    #[test]
    fn deficient_instance_drains_worthless_pool() {
        // Both agents value only good 0: agent 0 is prematched to it, agent 1
        // is removed, and the worthless good 1 is appended at completion.
        let instance = Instance::from_ints(&[&[4, 0], &[3, 0]]).unwrap();
        let outcome = run_cxxra(&instance).unwrap();
        assert_eq!(outcome.allocation.bundles(), &[set(&[0, 1]), set(&[])]);
        assert_eq!(rules_of(&outcome), ["final"]);
        assert!(check_ef2x(&instance, &outcome.allocation).passed());
    }

    #[test]
    fn rule4_single_component_shift() {
        // Hand-built state where rules 1-3 are blocked: the only source (0)
        // gets pool good 3, agent 2 is the most envious agent of {0, 3}, and
        // the functional graph self-loops.  Bundles shift along the envy path
        // 0 -> 1 -> 2 while agent 2 takes the carved subset {0, 3}.
        let instance =
            Instance::from_ints(&[&[1, 2, 0, 0], &[0, 3, 4, 0], &[2, 0, 5, 4]]).unwrap();
        let alloc = Allocation::new(
            set(&[3]),
            vec![set(&[0]), set(&[1]), set(&[2])],
            4,
        )
        .unwrap();
        let mut driver = Driver {
            instance: &instance,
            alloc,
            active: [0, 1, 2].into_iter().collect(),
        };
        driver.assert_state("seed").unwrap();
        let mut trace = Trace::default();
        let record = driver.apply_lowest_rule(&mut trace).unwrap().unwrap();
        assert_eq!(record.rule, "rule-4");
        assert_eq!(record.agents, vec![0, 1, 2]);
        assert_eq!(record.goods, vec![3]);
        assert_eq!(
            driver.alloc.bundles(),
            &[set(&[1]), set(&[2]), set(&[0, 3])]
        );
        assert!(driver.alloc.pool().is_empty());
        assert!(trace.entries.is_empty(), "no envy cycles should arise");
    }

    #[test]
    fn prematched_agents_coexist_with_the_loop() {
        let instance = crate::fixtures::four_by_three();
        let outcome = run_cxxra(&instance).unwrap();
        assert_eq!(
            outcome.allocation.bundles(),
            &[set(&[0]), set(&[2]), set(&[1]), set(&[])]
        );
        assert_eq!(rules_of(&outcome), ["final"]);
        assert!(check_ef2x(&instance, &outcome.allocation).passed());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let instance = crate::fixtures::four_by_three();
        let first = run_cxxra(&instance).unwrap();
        let second = run_cxxra(&instance).unwrap();
        assert_eq!(
            format!("{:?}", first.allocation),
            format!("{:?}", second.allocation)
        );
        assert_eq!(format!("{:?}", first.trace), format!("{:?}", second.trace));
    }
}
