//! Seeded random instance generators for the four valuation classes.
//!
//! Every generator is a pure function of its [`GenSpec`]: the same spec (and
//! in particular the same seed) always yields the same instance, byte for
//! byte.  Randomness comes from a small self-contained xorshift64* stream so
//! that determinism does not depend on any external crate's version.
//!
//! Each model guarantees, by construction and by a final classifier check:
//!
//! * `restricted_p2` — restricted valuations (each good has one inherent
//!   value shared by everyone who wants it) and at most two interested
//!   agents per good.
//! * `restricted_any` — restricted valuations with no cap on how many
//!   agents want a good.
//! * `additive_infty1` — per-agent values with no cap on how many agents
//!   want a good, but any two agents share at most one wanted good.
//! * `additive_pq` — per-agent values with explicit caps: at most `p`
//!   interested agents per good and at most `q` shared goods per agent
//!   pair.
//!
//! Whenever there are at least as many goods as agents, good `k` is forced
//! to be wanted by agent `k` for `k < n`, so every agent has at least one
//! relevant good.  Infeasible parameter combinations are reported as
//! [`GenError::InfeasibleSpec`]; the generator never silently produces an
//! instance outside the requested class.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::instance::Instance;
use crate::rational::{rat, Rational};

/// Multiplier from the xorshift64* recommendation.
const STAR_MULTIPLIER: u64 = 0x2545_F491_4F6C_DD1D;

/// Replacement state for seed zero (xorshift state must be non-zero).
/// This is the 64-bit golden-ratio constant.
const ZERO_SEED_SUBSTITUTE: u64 = 0x9E37_79B9_7F4A_7C15;

/// How many random attempts to draw a relevance set before degrading the
/// requested set size.  Degrading keeps the instance inside its declared
/// class (a singleton set never violates any pair cap); it never changes
/// the class itself.
const SET_DRAW_TRIES: u32 = 32;

/// A tiny, explicit xorshift64* generator.
///
/// State update: `x ^= x >> 12; x ^= x << 25; x ^= x >> 27`, output
/// `x * 0x2545F4914F6CDD1D` (wrapping).  A zero seed is replaced by the
/// golden-ratio constant because the all-zero state is a fixed point.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    /// Creates a generator seeded with `seed` (zero is substituted).
    pub fn new(seed: u64) -> Self {
        let state = if seed == 0 { ZERO_SEED_SUBSTITUTE } else { seed };
        XorShift64Star { state }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(STAR_MULTIPLIER)
    }

    /// Uniform draw from `0..bound` by modulo reduction.
    ///
    /// Modulo reduction carries a bias of at most `bound / 2^64`, which is
    /// irrelevant for test-corpus generation and keeps the reduction easy
    /// to reproduce in other languages.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below() requires a positive bound");
        self.next_u64() % bound
    }

    /// Uniform draw from the inclusive range `lo..=hi`.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "range_inclusive requires lo <= hi");
        lo + self.below(hi - lo + 1)
    }
}

/// Valuation-class model a generated instance must belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Restricted valuations, at most two interested agents per good.
    RestrictedP2,
    /// Restricted valuations, unbounded interest per good.
    RestrictedAny,
    /// Per-agent values, any interest per good, agent pairs share at most
    /// one good.
    AdditiveInfty1,
    /// Per-agent values with explicit `p` (interest) and `q` (overlap) caps.
    AdditivePq,
}

impl Model {
    /// The token used on the command line and in file formats.
    pub fn token(self) -> &'static str {
        match self {
            Model::RestrictedP2 => "restricted_p2",
            Model::RestrictedAny => "restricted_any",
            Model::AdditiveInfty1 => "additive_infty1",
            Model::AdditivePq => "additive_pq",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "restricted_p2" => Ok(Model::RestrictedP2),
            "restricted_any" => Ok(Model::RestrictedAny),
            "additive_infty1" => Ok(Model::AdditiveInfty1),
            "additive_pq" => Ok(Model::AdditivePq),
            other => Err(format!(
                "unknown model `{other}` (expected restricted_p2, restricted_any, \
                 additive_infty1, or additive_pq)"
            )),
        }
    }
}

/// Full description of a generation request.
#[derive(Debug, Clone)]
pub struct GenSpec {
    /// Number of agents (rows).
    pub num_agents: usize,
    /// Number of goods (columns).
    pub num_goods: usize,
    /// Valuation class the instance must belong to.
    pub model: Model,
    /// Inclusive range of positive integer values for nonzero entries.
    pub value_range: (u64, u64),
    /// Cap on interested agents per good (only read by `additive_pq`).
    pub p: Option<usize>,
    /// Cap on shared goods per agent pair (only read by `additive_pq`).
    pub q: Option<usize>,
    /// RNG seed; the instance is a pure function of the spec.
    pub seed: u64,
}

/// Errors reported by [`generate`].
#[derive(Debug, Error)]
pub enum GenError {
    /// The requested parameters cannot produce an instance of the declared
    /// class.  The constraint is reported, never silently relaxed.
    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),
    /// A bug in the generator itself (the produced instance failed its own
    /// class check).  Should never occur.
    #[error("internal generator error: {0}")]
    Internal(String),
}

/// Generates an instance of the requested class, deterministically in the
/// seed, or reports why the spec is infeasible.
pub fn generate(spec: &GenSpec) -> Result<Instance, GenError> {
    validate(spec)?;
    let mut rng = XorShift64Star::new(spec.seed);
    let n = spec.num_agents;
    let m = spec.num_goods;
    let (lo, hi) = spec.value_range;

    // Effective caps per model.  `p_eff` bounds how many agents may want a
    // single good; `q_eff` bounds how many goods any two agents may share.
    let (p_eff, q_eff) = match spec.model {
        Model::RestrictedP2 => (2usize.min(n), usize::MAX),
        Model::RestrictedAny => (n, usize::MAX),
        Model::AdditiveInfty1 => (n, 1),
        Model::AdditivePq => (
            spec.p.expect("validated").min(n),
            spec.q.expect("validated"),
        ),
    };
    let restricted = matches!(spec.model, Model::RestrictedP2 | Model::RestrictedAny);

    // shared[i][j] = number of goods currently wanted by both i and j.
    let mut shared = vec![vec![0usize; n]; n];
    let mut rows: Vec<Vec<Rational>> = vec![vec![rat(0); m]; n];

    for good in 0..m {
        // Guarantee coverage: while goods outnumber or match agents, good k
        // is pinned to agent k so nobody ends up with zero relevant goods.
        let forced = if good < n && n <= m { Some(good) } else { None };
        let interested = draw_relevance_set(&mut rng, n, p_eff, q_eff, forced, &shared);
        for &i in &interested {
            for &j in &interested {
                if i < j {
                    shared[i][j] += 1;
                }
            }
        }
        if restricted {
            // One inherent value per good, shared by every interested agent.
            let inherent = rng.range_inclusive(lo, hi);
            for &agent in &interested {
                rows[agent][good] = rat(inherent as i64);
            }
        } else {
            // Independent per-agent values, drawn in ascending agent order.
            for &agent in &interested {
                rows[agent][good] = rat(rng.range_inclusive(lo, hi) as i64);
            }
        }
    }

    let instance =
        Instance::new(rows).map_err(|e| GenError::Internal(format!("bad matrix: {e}")))?;
    verify_class(spec, &instance)?;
    Ok(instance)
}

/// Rejects parameter combinations that cannot yield the declared class.
fn validate(spec: &GenSpec) -> Result<(), GenError> {
    let infeasible = |msg: String| Err(GenError::InfeasibleSpec(msg));
    let (lo, hi) = spec.value_range;
    if spec.num_agents == 0 {
        return infeasible("at least one agent is required".into());
    }
    if lo == 0 {
        return infeasible("value range must consist of positive integers".into());
    }
    if lo > hi {
        return infeasible(format!("empty value range [{lo}, {hi}]"));
    }
    if hi > i64::MAX as u64 {
        return infeasible(format!("value bound {hi} exceeds the supported maximum"));
    }
    match spec.model {
        Model::AdditivePq => {
            let p = spec
                .p
                .ok_or_else(|| GenError::InfeasibleSpec("additive_pq requires p".into()))?;
            spec.q
                .ok_or_else(|| GenError::InfeasibleSpec("additive_pq requires q".into()))?;
            if p == 0 && spec.num_goods > 0 {
                return infeasible(
                    "p = 0 leaves every good unwanted, which no class verifier accepts".into(),
                );
            }
        }
        Model::AdditiveInfty1 => {
            if let Some(q) = spec.q {
                if q != 1 {
                    return infeasible(format!("additive_infty1 fixes q = 1, got q = {q}"));
                }
            }
        }
        Model::RestrictedP2 => {
            if let Some(p) = spec.p {
                if p != 2 {
                    return infeasible(format!("restricted_p2 fixes p = 2, got p = {p}"));
                }
            }
        }
        Model::RestrictedAny => {}
    }
    Ok(())
}

/// Draws a nonempty set of interested agents for one good.
///
/// The set has at most `p_eff` members, contains `forced` when given, and
/// keeps every contained pair's shared-good count at or below `q_eff`.
/// After [`SET_DRAW_TRIES`] failed draws the requested size degrades toward
/// a singleton, which satisfies every pair cap vacuously, so the loop
/// always terminates with an in-class set.
fn draw_relevance_set(
    rng: &mut XorShift64Star,
    n: usize,
    p_eff: usize,
    q_eff: usize,
    forced: Option<usize>,
    shared: &[Vec<usize>],
) -> BTreeSet<usize> {
    let max_size = p_eff.max(1);
    let mut tries = 0u32;
    loop {
        let ceiling = if tries < SET_DRAW_TRIES { max_size } else { 1 };
        let size = 1 + rng.below(ceiling as u64) as usize;
        let mut set = BTreeSet::new();
        if let Some(agent) = forced {
            set.insert(agent);
        }
        let mut guard = 0u32;
        while set.len() < size && guard < 4 * n as u32 + 8 {
            set.insert(rng.below(n as u64) as usize);
            guard += 1;
        }
        let ok = q_eff == usize::MAX
            || set.iter().all(|&i| {
                set.iter()
                    .all(|&j| i >= j || shared[i][j] + 1 <= q_eff)
            });
        if ok && !set.is_empty() {
            return set;
        }
        tries += 1;
    }
}

/// Confirms the generated instance belongs to its declared class using the
/// same classifiers the rest of the library trusts.
fn verify_class(spec: &GenSpec, instance: &Instance) -> Result<(), GenError> {
    let bounds = instance.classify_bounds();
    let fail = |msg: String| Err(GenError::Internal(msg));
    match spec.model {
        Model::RestrictedP2 => {
            if instance.check_restricted_additive().is_none() {
                return fail("restricted_p2 instance is not restricted".into());
            }
            if bounds.p > 2 {
                return fail(format!("restricted_p2 instance has p = {}", bounds.p));
            }
        }
        Model::RestrictedAny => {
            if instance.check_restricted_additive().is_none() {
                return fail("restricted_any instance is not restricted".into());
            }
        }
        Model::AdditiveInfty1 => {
            if bounds.q > 1 {
                return fail(format!("additive_infty1 instance has q = {}", bounds.q));
            }
        }
        Model::AdditivePq => {
            let p = spec.p.expect("validated");
            let q = spec.q.expect("validated");
            if bounds.p > p || bounds.q > q {
                return fail(format!(
                    "additive_pq instance has (p, q) = ({}, {}), caps ({p}, {q})",
                    bounds.p, bounds.q
                ));
            }
        }
    }
    Ok(())
}
