//! The four fair-division algorithms.
//!
//! Each algorithm is a rule-driven state machine: a fixed-precedence list of
//! updating rules applied by [`crate::framework::run_loop`], followed by a
//! completion step.  Every driver re-checks its maintained allocation
//! properties after each applied rule and surfaces any violation as
//! [`RunError::InvariantViolated`], so a successful run doubles as a
//! machine-checked certificate of the algorithm's guarantees.
//!
//! | entry point      | valuation class            | guarantee on the output |
//! |------------------|----------------------------|-------------------------|
//! | [`run_cxxra`]    | (∞,1)-bounded additive     | complete EF2X           |
//! | [`run_sqrt2_ra`] | restricted additive        | complete √2/2-EFX       |
//! | [`run_sqrt2_pq`] | (∞,1)-bounded additive     | complete √2/2-EFX       |
//! | [`run_pqrax`]    | restricted additive, p ≤ 2 | complete exact EFX      |

pub mod cxxra;
pub mod pqrax;
pub mod sqrt2_pq;
pub mod sqrt2_ra;

pub use cxxra::run_cxxra;
pub use pqrax::run_pqrax;
pub use sqrt2_pq::run_sqrt2_pq;
pub use sqrt2_ra::run_sqrt2_ra;

use std::collections::BTreeSet;

use num_traits::Zero;

use crate::allocation::Allocation;
use crate::fairness::{self, FairnessReport, PropertyContext, PropertyName};
use crate::framework::RunError;
use crate::instance::Instance;
use crate::GoodSet;

/// Fails with [`RunError::InvariantViolated`] unless `cond` holds.
pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), RunError> {
    if cond {
        Ok(())
    } else {
        Err(RunError::InvariantViolated(msg()))
    }
}

/// Fails unless the fairness report passed, citing its first violation.
pub(crate) fn ensure_fair(report: &FairnessReport, what: &str) -> Result<(), RunError> {
    ensure(report.passed(), || match report.violations.first() {
        Some(v) => format!(
            "{what}: agent {} against agent {} (witness {:?})",
            v.agent, v.other, v.witness
        ),
        None => what.to_string(),
    })
}

/// Fails unless the named property holds over `agents`.
pub(crate) fn ensure_property(
    instance: &Instance,
    alloc: &Allocation,
    name: PropertyName,
    agents: &BTreeSet<usize>,
    stage: &str,
) -> Result<(), RunError> {
    let context = PropertyContext {
        agents: Some(agents.clone()),
    };
    let report = fairness::check_named_property(instance, alloc, name, &context)
        .map_err(|e| RunError::InvariantViolated(format!("{stage}: cannot evaluate {name}: {e}")))?;
    ensure_fair(&report, &format!("{stage}: property {name} violated"))
}

/// Completion fallback when no agent takes part in the run: every good still
/// in the pool is then worthless to every agent (asserted), and the goods are
/// appended to agent 0's bundle so the allocation becomes complete.
pub(crate) fn drain_worthless_pool(
    instance: &Instance,
    alloc: &mut Allocation,
) -> Result<Vec<usize>, RunError> {
    let goods: Vec<usize> = alloc.pool().iter().copied().collect();
    if goods.is_empty() {
        return Ok(goods);
    }
    ensure(instance.num_agents() > 0, || {
        "leftover goods but no agents to take them".into()
    })?;
    for &g in &goods {
        ensure(
            (0..instance.num_agents()).all(|i| instance.singleton(i, g).is_zero()),
            || format!("good {g} was left in the pool although some agent values it"),
        )?;
        alloc
            .take_from_pool(0, g)
            .map_err(|e| RunError::InvariantViolated(e.to_string()))?;
    }
    Ok(goods)
}

/// Ascending list of the goods in a set, for trace records.
pub(crate) fn sorted(goods: &GoodSet) -> Vec<usize> {
    goods.iter().copied().collect()
}
