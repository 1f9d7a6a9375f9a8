//! Shared machinery for the allocation algorithms: the seed allocation with
//! Hall reduction, envy-cycle resolution, strong-envy elimination, the
//! most-envious-agent and minimal-subset helpers, and the generic rule-loop
//! driver with its potential assertions, step guard, and trace recording.

use crate::allocation::Allocation;
use crate::fairness::{self, compare_sources, envy_edges, Potential};
use crate::graph::{self, GraphError};
use crate::instance::{GoodSet, Instance};
use crate::rational::{Beta, Rational};
use num_traits::Zero;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

/// Trace label for an envy-cycle-resolution micro-step.
pub const MICRO_CYCLE: &str = "cycle-resolution";
/// Trace label for a strong-envy-elimination micro-step.
pub const MICRO_ENVY: &str = "envy-elimination";
/// Trace label for the completion step.
pub const FINAL_STEP: &str = "final";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RunError {
    #[error("no subset of the given goods exceeds threshold {threshold} for agent {agent}")]
    Infeasible { agent: usize, threshold: String },
    #[error("rule `{rule}` did not increase the potential: {before} vs {after}")]
    PotentialNotIncreased {
        rule: String,
        before: String,
        after: String,
    },
    #[error("step limit {limit} exceeded; the run is stuck")]
    StepLimitExceeded { limit: usize },
    #[error("internal invariant violated: {0}")]
    InvariantViolated(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One recorded event of a run: a rule application, a cleanup micro-step, or
/// the final completion step.  `phi` is the exact potential snapshot after
/// the event, printed in the potential's display format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub step: usize,
    pub rule: String,
    pub agents: Vec<usize>,
    pub goods: Vec<usize>,
    pub phi: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn push(&mut self, rule: &str, agents: Vec<usize>, goods: Vec<usize>, phi: String) {
        self.entries.push(TraceEntry {
            step: self.entries.len(),
            rule: rule.to_string(),
            agents,
            goods,
            phi,
        });
    }

    /// Entries recording rule applications (micro-steps and the final step
    /// excluded).
    pub fn rule_entries(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries
            .iter()
            .filter(|e| e.rule != MICRO_CYCLE && e.rule != MICRO_ENVY && e.rule != FINAL_STEP)
    }
}

/// Seed allocation: every surviving (active) agent holds exactly one good she
/// values positively, constrained agent groups are fixed by Hall reduction,
/// and the active agents' envy graph has no super-unit cycle.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub allocation: Allocation,
    /// (agent, good) pairs fixed by Hall reduction; these bundles must stay
    /// untouched for the rest of a run.
    pub prematched: Vec<(usize, usize)>,
    /// Agents left empty-handed by Hall reduction (they value nothing
    /// outside the prematched goods).
    pub removed_agents: BTreeSet<usize>,
    /// Agents that participate in the algorithm proper.
    pub active: BTreeSet<usize>,
}

struct Matching {
    agent_to_good: BTreeMap<usize, usize>,
    good_to_agent: BTreeMap<usize, usize>,
}

/// Maximum bipartite matching between agents and the goods they value
/// positively (augmenting paths; agents and adjacency scanned ascending).
fn kuhn_matching(
    instance: &Instance,
    agents: &BTreeSet<usize>,
    goods: &BTreeSet<usize>,
) -> Matching {
    let adjacency: BTreeMap<usize, Vec<usize>> = agents
        .iter()
        .map(|&a| {
            (
                a,
                goods
                    .iter()
                    .copied()
                    .filter(|&g| !instance.singleton(a, g).is_zero())
                    .collect(),
            )
        })
        .collect();
    let mut good_to_agent: BTreeMap<usize, usize> = BTreeMap::new();

    fn try_augment(
        a: usize,
        adjacency: &BTreeMap<usize, Vec<usize>>,
        good_to_agent: &mut BTreeMap<usize, usize>,
        visited: &mut BTreeSet<usize>,
    ) -> bool {
        for &g in &adjacency[&a] {
            if !visited.insert(g) {
                continue;
            }
            let free = match good_to_agent.get(&g) {
                None => true,
                Some(&owner) => try_augment(owner, adjacency, good_to_agent, visited),
            };
            if free {
                good_to_agent.insert(g, a);
                return true;
            }
        }
        false
    }

    for &a in agents {
        let mut visited = BTreeSet::new();
        try_augment(a, &adjacency, &mut good_to_agent, &mut visited);
    }
    let agent_to_good = good_to_agent.iter().map(|(&g, &a)| (a, g)).collect();
    Matching {
        agent_to_good,
        good_to_agent,
    }
}

/// Alternating reachability from the unmatched agents: agents reach all
/// their positively-valued goods, goods reach only their matched agent.  The
/// reached agents form a deficient set whose entire neighborhood is the set
/// of reached goods.
fn deficiency_witness(
    instance: &Instance,
    agents: &BTreeSet<usize>,
    goods: &BTreeSet<usize>,
    matching: &Matching,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut reached_agents: BTreeSet<usize> = agents
        .iter()
        .copied()
        .filter(|a| !matching.agent_to_good.contains_key(a))
        .collect();
    let mut reached_goods: BTreeSet<usize> = BTreeSet::new();
    let mut queue: VecDeque<usize> = reached_agents.iter().copied().collect();
    while let Some(a) = queue.pop_front() {
        for &g in goods {
            if instance.singleton(a, g).is_zero() || !reached_goods.insert(g) {
                continue;
            }
            if let Some(&owner) = matching.good_to_agent.get(&g) {
                if reached_agents.insert(owner) {
                    queue.push_back(owner);
                }
            }
        }
    }
    (reached_agents, reached_goods)
}

/// Builds the seed allocation.
///
/// While some agent cannot be matched to a distinct positively-valued good,
/// a maximum matching yields a deficient agent group whose few shared goods
/// are fixed to their matched members (the rest of the group leaves empty-
/// handed); the procedure repeats on the remainder.  Once every remaining
/// agent is matched, super-unit cycles in the active agents' envy graph are
/// removed by rotating goods along them — each rotation strictly increases
/// the product of own values, so this terminates.
pub fn seed_allocation(instance: &Instance) -> SeedResult {
    let n = instance.num_agents();
    let m = instance.num_goods();
    let mut available_agents: BTreeSet<usize> = (0..n).collect();
    let mut available_goods: BTreeSet<usize> = (0..m).collect();
    let mut prematched: Vec<(usize, usize)> = Vec::new();
    let mut removed_agents: BTreeSet<usize> = BTreeSet::new();
    let mut survivor_good: BTreeMap<usize, usize> = BTreeMap::new();

    while !available_agents.is_empty() {
        let matching = kuhn_matching(instance, &available_agents, &available_goods);
        if matching.agent_to_good.len() == available_agents.len() {
            survivor_good = matching.agent_to_good;
            break;
        }
        let (group, shared) =
            deficiency_witness(instance, &available_agents, &available_goods, &matching);
        for &g in &shared {
            let owner = matching.good_to_agent[&g];
            prematched.push((owner, g));
        }
        for &a in &group {
            if !matching.agent_to_good.contains_key(&a) {
                removed_agents.insert(a);
            }
        }
        available_agents = &available_agents - &group;
        available_goods = &available_goods - &shared;
    }
    prematched.sort_unstable();

    let active: BTreeSet<usize> = survivor_good.keys().copied().collect();
    let mut bundles: Vec<GoodSet> = vec![GoodSet::new(); n];
    for (&a, &g) in &survivor_good {
        bundles[a].insert(g);
    }
    for &(a, g) in &prematched {
        bundles[a].insert(g);
    }
    let pool: GoodSet = (0..m)
        .filter(|g| bundles.iter().all(|b| !b.contains(g)))
        .collect();
    let mut allocation = Allocation::new(pool, bundles, m).expect("seed partitions the goods");

    // Local search: rotate goods along super-unit cycles among the active
    // agents until none remains.
    if !active.is_empty() {
        let mut guard = 0usize;
        loop {
            let g = graph::build_induced(instance, &allocation, &active)
                .expect("active agents hold positively-valued goods");
            let Some(cycle) = g.super_unit_cycle() else { break };
            let old: Vec<GoodSet> = allocation.bundles().to_vec();
            let mut bundles = old.clone();
            for k in 0..cycle.len() {
                bundles[cycle[k]] = old[cycle[(k + 1) % cycle.len()]].clone();
            }
            allocation
                .replace(allocation.pool().clone(), bundles)
                .expect("rotation permutes bundles");
            guard += 1;
            assert!(
                guard <= 1 + n * n * (m + 1),
                "super-unit cycle rotation failed to terminate"
            );
        }
    }

    SeedResult {
        allocation,
        prematched,
        removed_agents,
        active,
    }
}

/// A cleanup micro-step reported back to the caller together with the
/// allocation state after it, so the caller can record potentials.
#[derive(Debug, Clone)]
pub struct MicroStep {
    pub kind: &'static str,
    pub agents: Vec<usize>,
    pub goods: Vec<usize>,
}

/// Resolves directed cycles of the (β = 1) envy relation among `agents`:
/// along each cycle edge i → j, agent i receives the goods of j's bundle she
/// values, the rest returns to the pool.  Every agent on a resolved cycle
/// strictly gains.  `observe` is called after each resolved cycle.
pub fn resolve_envy_cycles(
    instance: &Instance,
    alloc: &mut Allocation,
    agents: &BTreeSet<usize>,
    mut observe: impl FnMut(&Allocation, MicroStep),
) -> Result<(), RunError> {
    let mut guard = 0usize;
    loop {
        let edges = envy_edges(instance, alloc, Beta::One, agents);
        let Some(cycle) = graph::find_cycle(agents, &edges) else {
            return Ok(());
        };
        let old: Vec<GoodSet> = alloc.bundles().to_vec();
        let mut bundles = old.clone();
        let mut pool = alloc.pool().clone();
        let mut freed: Vec<usize> = Vec::new();
        for k in 0..cycle.len() {
            let i = cycle[k];
            let j = cycle[(k + 1) % cycle.len()];
            let taken = instance.relevant_set(&old[j], i);
            for &g in old[j].difference(&taken) {
                pool.insert(g);
                freed.push(g);
            }
            if instance.value(i, &taken) <= instance.value(i, &old[i]) {
                return Err(RunError::InvariantViolated(format!(
                    "cycle resolution did not improve agent {i}"
                )));
            }
            bundles[i] = taken;
        }
        alloc
            .replace(pool, bundles)
            .map_err(|e| RunError::InvariantViolated(format!("cycle resolution broke the partition: {e}")))?;
        freed.sort_unstable();
        observe(
            alloc,
            MicroStep {
                kind: MICRO_CYCLE,
                agents: cycle,
                goods: freed,
            },
        );
        guard += 1;
        if guard > 1 + agents.len() * (instance.num_goods() + 1) * 64 {
            return Err(RunError::InvariantViolated(
                "cycle resolution failed to terminate".into(),
            ));
        }
    }
}

/// Ascending own-bundle values of the √2-relation sources among `agents`.
fn sources_vector(
    instance: &Instance,
    alloc: &Allocation,
    agents: &BTreeSet<usize>,
) -> Vec<Rational> {
    let edges = envy_edges(instance, alloc, Beta::Sqrt2, agents);
    let mut values: Vec<Rational> = fairness::sources_of(agents, &edges)
        .into_iter()
        .map(|s| instance.value(s, alloc.bundle(s)))
        .collect();
    values.sort();
    values
}

/// Removes √2-strong envy among `agents`: while some agent i strongly envies
/// X_j with witness good g (i.e. √2·v_i(X_i) < v_i(X_j ∖ {g})), the
/// lowest such (i, j, g) is picked and g moves from X_j to the pool.  Each
/// micro-step keeps the ascending source-value potential from decreasing,
/// which is verified exactly.
pub fn envy_elimination(
    instance: &Instance,
    alloc: &mut Allocation,
    agents: &BTreeSet<usize>,
    mut observe: impl FnMut(&Allocation, MicroStep),
) -> Result<(), RunError> {
    loop {
        let before = sources_vector(instance, alloc, agents);
        let mut witness: Option<(usize, usize, usize)> = None;
        'search: for &i in agents {
            let own = instance.value(i, alloc.bundle(i));
            for &j in agents {
                if i == j {
                    continue;
                }
                let total = instance.value(i, alloc.bundle(j));
                for &g in alloc.bundle(j) {
                    let remaining = &total - instance.singleton(i, g);
                    if Beta::Sqrt2.scaled_less(&own, &remaining) {
                        witness = Some((i, j, g));
                        break 'search;
                    }
                }
            }
        }
        let Some((i, j, g)) = witness else {
            return Ok(());
        };
        alloc
            .send_to_pool(j, g)
            .map_err(|e| RunError::InvariantViolated(format!("envy elimination move failed: {e}")))?;
        let after = sources_vector(instance, alloc, agents);
        if compare_sources(&before, &after) == Ordering::Greater {
            return Err(RunError::InvariantViolated(format!(
                "envy elimination decreased the source potential: [{}] to [{}]",
                before
                    .iter()
                    .map(crate::rational::format_rational)
                    .collect::<Vec<_>>()
                    .join(", "),
                after
                    .iter()
                    .map(crate::rational::format_rational)
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        observe(
            alloc,
            MicroStep {
                kind: MICRO_ENVY,
                agents: vec![i, j],
                goods: vec![g],
            },
        );
    }
}

/// Finds an inclusion-minimal subset S′ of `s` that some agent of `agents`
/// values above her own bundle, together with the lowest-indexed such agent.
/// Absent iff nobody values all of `s` above her own bundle.  Shrinking is
/// deterministic: goods are scanned ascending and dropped as long as some
/// agent still values the remainder above her bundle.
pub fn most_envious_agent(
    instance: &Instance,
    alloc: &Allocation,
    agents: &BTreeSet<usize>,
    s: &GoodSet,
) -> Option<(usize, GoodSet)> {
    let envies = |set: &GoodSet| -> Option<usize> {
        agents
            .iter()
            .copied()
            .find(|&i| instance.value(i, set) > instance.value(i, alloc.bundle(i)))
    };
    envies(s)?;
    let mut current = s.clone();
    'shrink: loop {
        for &g in &current {
            let mut smaller = current.clone();
            smaller.remove(&g);
            if envies(&smaller).is_some() {
                current = smaller;
                continue 'shrink;
            }
        }
        break;
    }
    let agent = envies(&current).expect("shrinking preserves at least one envier");
    Some((agent, current))
}

/// Inclusion-minimal T ⊆ `s` with v_i(T) > `threshold`: goods are scanned
/// ascending and dropped while the remainder still exceeds the threshold.
/// With additive values, single-removal minimality implies full
/// inclusion-minimality.
pub fn minimal_subset_exceeding(
    instance: &Instance,
    agent: usize,
    s: &GoodSet,
    threshold: &Rational,
) -> Result<GoodSet, RunError> {
    if instance.value(agent, s) <= *threshold {
        return Err(RunError::Infeasible {
            agent,
            threshold: crate::rational::format_rational(threshold),
        });
    }
    let mut current = s.clone();
    'shrink: loop {
        for &g in &current {
            let mut smaller = current.clone();
            smaller.remove(&g);
            if instance.value(agent, &smaller) > *threshold {
                current = smaller;
                continue 'shrink;
            }
        }
        break;
    }
    Ok(current)
}

/// Record of one applied rule, for the trace.
#[derive(Debug, Clone)]
pub struct RuleRecord {
    pub rule: &'static str,
    pub agents: Vec<usize>,
    pub goods: Vec<usize>,
}

/// An algorithm driven by ordered updating rules and a final completion
/// step.  The driver owns the allocation and all algorithm state; the run
/// loop owns step accounting, the strict-potential assertion, and the trace.
pub trait RuleDriven {
    fn instance(&self) -> &Instance;
    fn allocation(&self) -> &Allocation;
    /// Current potential under the algorithm's tag.
    fn potential(&self) -> Potential;
    /// Applies the lowest-indexed applicable rule including its cleanup,
    /// pushing cleanup micro-step entries onto the trace; `None` when no
    /// rule applies.
    fn apply_lowest_rule(&mut self, trace: &mut Trace) -> Result<Option<RuleRecord>, RunError>;
    /// Completion step once no rule applies.
    fn final_step(&mut self, trace: &mut Trace) -> Result<RuleRecord, RunError>;
}

/// Outcome of a full run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub allocation: Allocation,
    pub trace: Trace,
    /// Pool size at the moment no rule applied, before the final step.
    pub prefinal_pool: usize,
}

/// Environment variable overriding the step limit of [`run_loop`].
pub const STEP_LIMIT_ENV: &str = "FAIRDIV_STEP_LIMIT";

/// Default step limit: generous in the instance dimensions and the bit
/// length of the values, so genuine runs never hit it.
pub fn default_step_limit(instance: &Instance) -> usize {
    let mut bits: u64 = 0;
    for row in instance.rows() {
        for v in row {
            bits = bits.max(v.numer().bits()).max(v.denom().bits());
        }
    }
    16 * instance.num_agents().max(1) * instance.num_goods().max(1) * (1 + bits as usize)
}

/// Runs the driver to completion: repeatedly applies the lowest-indexed
/// applicable rule, asserting a strict potential increase after each
/// application (cleanup included), then runs the final step.  The step limit
/// counts rule applications; it is taken from the `FAIRDIV_STEP_LIMIT`
/// environment variable when that parses as a positive integer, otherwise
/// from [`default_step_limit`].
pub fn run_loop(driver: &mut dyn RuleDriven) -> Result<RunOutcome, RunError> {
    let limit = std::env::var(STEP_LIMIT_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&l| l > 0);
    run_loop_with_limit(driver, limit)
}

/// [`run_loop`] with an explicit step limit (`None` = computed default).
pub fn run_loop_with_limit(
    driver: &mut dyn RuleDriven,
    limit: Option<usize>,
) -> Result<RunOutcome, RunError> {
    let limit = limit.unwrap_or_else(|| default_step_limit(driver.instance()));
    let mut trace = Trace::default();
    let mut phi = driver.potential();
    let mut applications = 0usize;
    loop {
        match driver.apply_lowest_rule(&mut trace)? {
            None => break,
            Some(record) => {
                applications += 1;
                if applications > limit {
                    return Err(RunError::StepLimitExceeded { limit });
                }
                let new_phi = driver.potential();
                if new_phi.compare(&phi) != Ordering::Greater {
                    return Err(RunError::PotentialNotIncreased {
                        rule: record.rule.to_string(),
                        before: phi.to_string(),
                        after: new_phi.to_string(),
                    });
                }
                phi = new_phi;
                trace.push(record.rule, record.agents, record.goods, phi.to_string());
            }
        }
    }
    let prefinal_pool = driver.allocation().pool().len();
    let record = driver.final_step(&mut trace)?;
    let phi = driver.potential();
    trace.push(record.rule, record.agents, record.goods, phi.to_string());
    Ok(RunOutcome {
        allocation: driver.allocation().clone(),
        trace,
        prefinal_pool,
    })
}
