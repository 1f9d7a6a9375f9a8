//! Complete √2/2-EFX allocation for restricted additive valuations.
//!
//! Two rules run in fixed precedence and strong-envy elimination runs after
//! each of them, so every inter-rule state is √2/2-EFX with all active
//! bundles fully relevant to their owners.  The completion step hands the
//! whole pool to the active agent with the smallest own-bundle value, who is
//! then necessarily a source of the √2-scaled envy relation.

use std::collections::BTreeSet;

use num_traits::Zero;

use crate::allocation::Allocation;
use crate::fairness::{self, PotentialContext, PotentialTag, PropertyName};
use crate::framework::{
    envy_elimination, run_loop, seed_allocation, RuleDriven, RuleRecord, RunError, RunOutcome,
    Trace, FINAL_STEP,
};
use crate::graph;
use crate::instance::Instance;
use crate::rational::{rat, Beta};
use crate::GoodSet;

use super::{drain_worthless_pool, ensure, ensure_fair, ensure_property, sorted};

/// Runs the algorithm end to end: seeded partial allocation, rule loop,
/// completion.  The returned allocation is complete and √2/2-EFX; every
/// intermediate state keeps all active bundles fully relevant.
pub fn run_sqrt2_ra(instance: &Instance) -> Result<RunOutcome, RunError> {
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

    /// Edges of the √2-scaled envy relation over the active agents.
    fn sqrt2_edges(&self) -> BTreeSet<(usize, usize)> {
        fairness::envy_edges(self.instance, &self.alloc, Beta::Sqrt2, &self.active)
    }

    /// Invariants re-checked after the seed and after every applied rule:
    /// the allocation is √2/2-EFX and every active bundle is fully relevant
    /// to its owner.
    fn assert_state(&self, stage: &str) -> Result<(), RunError> {
        ensure_fair(
            &fairness::check_alpha_efx(self.instance, &self.alloc, Beta::Sqrt2),
            &format!("{stage}: allocation is not sqrt2/2-EFX"),
        )?;
        ensure_property(
            self.instance,
            &self.alloc,
            PropertyName::SelfRelevant,
            &self.active,
            stage,
        )
    }

    fn cleanup(&mut self, trace: &mut Trace) -> Result<(), RunError> {
        let instance = self.instance;
        let active = &self.active;
        envy_elimination(instance, &mut self.alloc, active, |alloc, step| {
            let phi = fairness::potential(
                instance,
                alloc,
                PotentialTag::Sources,
                &PotentialContext {
                    agents: active,
                    remaining: None,
                },
            );
            trace.push(step.kind, step.agents, step.goods, phi.to_string());
        })
    }

    /// Rule 1: a source of the √2-scaled relation values some pool good.
    /// She absorbs it (her bundle stays fully relevant).
    fn try_rule1(&mut self) -> Result<Option<RuleRecord>, RunError> {
        let edges = self.sqrt2_edges();
        let mut witness = None;
        'search: for &i in &fairness::sources_of(&self.active, &edges) {
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
        self.alloc
            .take_from_pool(i, g)
            .map_err(|e| RunError::InvariantViolated(e.to_string()))?;
        Ok(Some(RuleRecord {
            rule: "rule-1",
            agents: vec![i],
            goods: vec![g],
        }))
    }

    /// Rule 2: some agent values the pool at more than 1/√2 of her bundle.
    /// She takes the relevant part of the pool; bundles shift one step along
    /// an envy path from a source to her, and the source's old bundle
    /// returns to the pool.
    fn try_rule2(&mut self) -> Result<Option<RuleRecord>, RunError> {
        let pool_set = self.alloc.pool().clone();
        let two = rat(2);
        let mut who = None;
        for &i in &self.active {
            let own = self.instance.value(i, self.alloc.bundle(i));
            let pool_value = self.instance.value(i, &pool_set);
            if &own * &own < &two * &pool_value * &pool_value {
                who = Some(i);
                break;
            }
        }
        let Some(i) = who else {
            return Ok(None);
        };
        let edges = self.sqrt2_edges();
        let sources = fairness::sources_of(&self.active, &edges);
        ensure(!sources.contains(&i), || {
            format!("agent {i} values the pool but is a source although rule 1 was inapplicable")
        })?;
        let mut found = None;
        for &j in &sources {
            if let Some(path) = graph::lex_shortest_path(&edges, j, i) {
                found = Some(path);
                break;
            }
        }
        let Some(path) = found else {
            return Err(RunError::InvariantViolated(format!(
                "no source reaches agent {i} in the sqrt2-scaled envy relation"
            )));
        };
        let old = self.alloc.bundles().to_vec();
        let mut bundles = old.clone();
        for w in path.windows(2) {
            bundles[w[0]] = old[w[1]].clone();
        }
        let picks = self.instance.relevant_set(&pool_set, i);
        ensure(!picks.is_empty(), || {
            format!("agent {i} values the pool yet no pool good is relevant to her")
        })?;
        bundles[i] = picks.clone();
        let mut pool = pool_set;
        for g in &picks {
            pool.remove(g);
        }
        pool.extend(old[path[0]].iter().copied());
        self.replace(pool, bundles)?;
        Ok(Some(RuleRecord {
            rule: "rule-2",
            agents: path,
            goods: sorted(&picks),
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
            PotentialTag::Sources,
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
        let Some(record) = record else {
            return Ok(None);
        };
        self.cleanup(trace)?;
        self.assert_state(record.rule)?;
        Ok(Some(record))
    }

    /// Completion: the entire pool goes to the active agent with the least
    /// own-bundle value (lowest index on ties).  With both rules blocked she
    /// is necessarily a source (asserted), which keeps the result √2/2-EFX.
    fn final_step(&mut self, _trace: &mut Trace) -> Result<RuleRecord, RunError> {
        let mut agents = Vec::new();
        let goods;
        if self.active.is_empty() {
            goods = drain_worthless_pool(self.instance, &mut self.alloc)?;
            if !goods.is_empty() {
                agents.push(0);
            }
        } else {
            let receiver = self
                .active
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    self.instance
                        .value(a, self.alloc.bundle(a))
                        .cmp(&self.instance.value(b, self.alloc.bundle(b)))
                        .then(a.cmp(&b))
                })
                .expect("active set is non-empty");
            let edges = self.sqrt2_edges();
            ensure(
                fairness::sources_of(&self.active, &edges).contains(&receiver),
                || format!("completion receiver {receiver} is not a source"),
            )?;
            goods = sorted(self.alloc.pool());
            for &g in &goods {
                self.alloc
                    .take_from_pool(receiver, g)
                    .map_err(|e| RunError::InvariantViolated(e.to_string()))?;
            }
            if !goods.is_empty() {
                agents.push(receiver);
            }
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
