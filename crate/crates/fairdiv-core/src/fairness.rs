//! Fairness verifiers (strong envy, EFX, EF2X, α-EFX, virtual EFX), named
//! allocation properties, and the per-algorithm potential functions with
//! exact lexicographic comparison.
//!
//! Every verdict is exact; violations carry witnesses (agents, goods) and a
//! rational margin so they can be re-checked from the allocation alone.

use crate::allocation::Allocation;
use crate::graph::{self, GraphError, RankTable};
use crate::instance::{GoodSet, Instance};
use crate::rational::{format_rational, Beta, Rational};
use num_traits::Zero;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FairnessError {
    #[error("unknown property name `{0}`")]
    UnknownProperty(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

/// One re-checkable fairness violation.  `witness` lists the goods (or, for
/// graph-structural properties, the agents) certifying the violation.  For
/// envy checks the margin is the amount by which the violating comparison
/// exceeds the allowed bound — reported in the squared domain when the
/// threshold is √2, linearly otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub agent: usize,
    pub other: usize,
    pub witness: Vec<usize>,
    pub margin: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairnessReport {
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    /// For the typed-bundles property: the smallest correspondent per agent.
    pub correspondents: BTreeMap<usize, usize>,
}

impl FairnessReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn from_violations(violations: Vec<Violation>) -> Self {
        FairnessReport {
            verdict: if violations.is_empty() {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            violations,
            correspondents: BTreeMap::new(),
        }
    }
}

/// The good of `bundle` whose removal leaves the most value behind for
/// `agent`: the lowest-indexed minimum-value good.  `None` for empty bundles.
pub fn cheapest_good_for(instance: &Instance, agent: usize, bundle: &GoodSet) -> Option<usize> {
    bundle
        .iter()
        .copied()
        .min_by(|&a, &b| {
            instance
                .singleton(agent, a)
                .cmp(instance.singleton(agent, b))
                .then(a.cmp(&b))
        })
}

/// β-strong envy of `i` toward `j`'s bundle: present iff some single removal
/// leaves `j`'s bundle worth more than β times `i`'s own bundle, i.e.
/// `β·v_i(X_i) < v_i(X_j ∖ {g})` for the removal maximising the right side
/// (drop a minimum-value good).  Returns the dropped witness good and the
/// margin.  Bundles of size ≤ 1 are never strongly envied.
pub fn beta_strong_envy(
    instance: &Instance,
    alloc: &Allocation,
    i: usize,
    j: usize,
    beta: Beta,
) -> Option<(usize, Rational)> {
    let dropped = cheapest_good_for(instance, i, alloc.bundle(j))?;
    let own = instance.value(i, alloc.bundle(i));
    let remaining = instance.value(i, alloc.bundle(j)) - instance.singleton(i, dropped);
    if beta.scaled_less(&own, &remaining) {
        let margin = match beta {
            Beta::Zero => remaining,
            Beta::One => remaining - own,
            Beta::Sqrt2 => &remaining * &remaining - &own * &own * crate::rational::rat(2),
        };
        Some((dropped, margin))
    } else {
        None
    }
}

/// α-EFX check with α = 1/β: pass iff no ordered pair of agents exhibits
/// β-strong envy.  β = 1 is exact EFX.
pub fn check_alpha_efx(instance: &Instance, alloc: &Allocation, beta: Beta) -> FairnessReport {
    let mut violations = Vec::new();
    for i in 0..alloc.num_agents() {
        for j in 0..alloc.num_agents() {
            if i == j {
                continue;
            }
            if let Some((dropped, margin)) = beta_strong_envy(instance, alloc, i, j, beta) {
                violations.push(Violation {
                    agent: i,
                    other: j,
                    witness: vec![dropped],
                    margin,
                });
            }
        }
    }
    FairnessReport::from_violations(violations)
}

/// EF2X check: pass iff for every ordered pair and every two goods of the
/// envied bundle, removing both kills the envy.  Equivalently the two
/// lowest-value goods are dropped; bundles of size ≤ 2 never witness a
/// violation.
pub fn check_ef2x(instance: &Instance, alloc: &Allocation) -> FairnessReport {
    let mut violations = Vec::new();
    for i in 0..alloc.num_agents() {
        for j in 0..alloc.num_agents() {
            if i == j || alloc.bundle(j).len() <= 2 {
                continue;
            }
            let mut goods: Vec<usize> = alloc.bundle(j).iter().copied().collect();
            goods.sort_by(|&a, &b| {
                instance
                    .singleton(i, a)
                    .cmp(instance.singleton(i, b))
                    .then(a.cmp(&b))
            });
            let own = instance.value(i, alloc.bundle(i));
            let remaining = instance.value(i, alloc.bundle(j))
                - instance.singleton(i, goods[0])
                - instance.singleton(i, goods[1]);
            if own < remaining {
                violations.push(Violation {
                    agent: i,
                    other: j,
                    witness: vec![goods[0], goods[1]],
                    margin: remaining - own,
                });
            }
        }
    }
    FairnessReport::from_violations(violations)
}

/// Virtual EFX: pass iff no agent of the rank table virtually strongly envies
/// another — for all `i ≠ j` and `g ∈ X_j`, `v_i(X_j ∖ {g}) ≤ 𝔳_i`.
pub fn check_virtual_efx(
    instance: &Instance,
    alloc: &Allocation,
    ranks: &RankTable,
) -> FairnessReport {
    let agents: Vec<usize> = ranks.virtual_value.keys().copied().collect();
    let mut violations = Vec::new();
    for &i in &agents {
        for &j in &agents {
            if i == j {
                continue;
            }
            let Some(dropped) = cheapest_good_for(instance, i, alloc.bundle(j)) else {
                continue;
            };
            let remaining =
                instance.value(i, alloc.bundle(j)) - instance.singleton(i, dropped);
            if remaining > ranks.virtual_value[&i] {
                violations.push(Violation {
                    agent: i,
                    other: j,
                    witness: vec![dropped],
                    margin: remaining - &ranks.virtual_value[&i],
                });
            }
        }
    }
    FairnessReport::from_violations(violations)
}

/// The β-threshold envy relation `β·v_i(X_i) < v_i(X_j)` over an agent
/// subset.  Unlike envy-graph weights this relation is total: an agent with a
/// worthless own bundle simply envies every bundle she values positively.
/// Whenever the weighted graph is defined the relation coincides with its
/// β-threshold view.
pub fn envy_edges(
    instance: &Instance,
    alloc: &Allocation,
    beta: Beta,
    agents: &BTreeSet<usize>,
) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for &i in agents {
        let own = instance.value(i, alloc.bundle(i));
        for &j in agents {
            if i == j {
                continue;
            }
            if beta.scaled_less(&own, &instance.value(i, alloc.bundle(j))) {
                edges.insert((i, j));
            }
        }
    }
    edges
}

/// Vertices of `agents` with no incoming edge, ascending.
pub fn sources_of(agents: &BTreeSet<usize>, edges: &BTreeSet<(usize, usize)>) -> Vec<usize> {
    let with_incoming: BTreeSet<usize> = edges.iter().map(|&(_, j)| j).collect();
    agents
        .iter()
        .copied()
        .filter(|v| !with_incoming.contains(v))
        .collect()
}

/// Named allocation properties maintained by the algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyName {
    /// Every non-source agent (β = 1 envy relation) holds only goods she
    /// values positively.
    NonSourceRelevant,
    /// Every agent's bundle is fully relevant to her.
    SelfRelevant,
    /// The envy graph admits no super-unit cycle, so the rank bound program
    /// is feasible.
    RankFeasible,
    /// No agent virtually strongly envies another.
    VirtualEfx,
    /// Every agent's bundle lies inside the shared relevance set of some
    /// agent pair containing her.
    TypedBundles,
}

impl FromStr for PropertyName {
    type Err = FairnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "non-source-relevant" => Ok(PropertyName::NonSourceRelevant),
            "self-relevant" => Ok(PropertyName::SelfRelevant),
            "rank-feasible" => Ok(PropertyName::RankFeasible),
            "virtual-efx" => Ok(PropertyName::VirtualEfx),
            "typed-bundles" => Ok(PropertyName::TypedBundles),
            other => Err(FairnessError::UnknownProperty(other.to_string())),
        }
    }
}

impl fmt::Display for PropertyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PropertyName {
    pub const ALL: [PropertyName; 5] = [
        PropertyName::NonSourceRelevant,
        PropertyName::SelfRelevant,
        PropertyName::RankFeasible,
        PropertyName::VirtualEfx,
        PropertyName::TypedBundles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PropertyName::NonSourceRelevant => "non-source-relevant",
            PropertyName::SelfRelevant => "self-relevant",
            PropertyName::RankFeasible => "rank-feasible",
            PropertyName::VirtualEfx => "virtual-efx",
            PropertyName::TypedBundles => "typed-bundles",
        }
    }
}

/// Extra inputs for property checks: the agent subset to check (defaults to
/// all agents).
#[derive(Debug, Default, Clone)]
pub struct PropertyContext {
    pub agents: Option<BTreeSet<usize>>,
}

impl PropertyContext {
    fn agent_set(&self, alloc: &Allocation) -> BTreeSet<usize> {
        self.agents
            .clone()
            .unwrap_or_else(|| (0..alloc.num_agents()).collect())
    }
}

/// Checks a named property; graph-based properties may fail to evaluate on
/// degenerate allocations (zero-value bundle with positive outside value),
/// which surfaces as a graph error.
pub fn check_named_property(
    instance: &Instance,
    alloc: &Allocation,
    name: PropertyName,
    context: &PropertyContext,
) -> Result<FairnessReport, FairnessError> {
    let agents = context.agent_set(alloc);
    match name {
        PropertyName::SelfRelevant => {
            let mut violations = Vec::new();
            for &i in &agents {
                let irrelevant: Vec<usize> = alloc
                    .bundle(i)
                    .iter()
                    .copied()
                    .filter(|&g| instance.singleton(i, g).is_zero())
                    .collect();
                if !irrelevant.is_empty() {
                    violations.push(Violation {
                        agent: i,
                        other: i,
                        witness: irrelevant,
                        margin: Rational::zero(),
                    });
                }
            }
            Ok(FairnessReport::from_violations(violations))
        }
        PropertyName::NonSourceRelevant => {
            let edges = envy_edges(instance, alloc, Beta::One, &agents);
            let sources: BTreeSet<usize> = sources_of(&agents, &edges).into_iter().collect();
            let mut violations = Vec::new();
            for &i in &agents {
                if sources.contains(&i) {
                    continue;
                }
                let irrelevant: Vec<usize> = alloc
                    .bundle(i)
                    .iter()
                    .copied()
                    .filter(|&g| instance.singleton(i, g).is_zero())
                    .collect();
                if !irrelevant.is_empty() {
                    violations.push(Violation {
                        agent: i,
                        other: i,
                        witness: irrelevant,
                        margin: Rational::zero(),
                    });
                }
            }
            Ok(FairnessReport::from_violations(violations))
        }
        PropertyName::RankFeasible => {
            let g = graph::build_induced(instance, alloc, &agents)?;
            match g.super_unit_cycle() {
                None => Ok(FairnessReport::from_violations(Vec::new())),
                Some(cycle) => {
                    let mut product = Rational::from_integer(1.into());
                    for k in 0..cycle.len() {
                        let u = cycle[k];
                        let v = cycle[(k + 1) % cycle.len()];
                        product *= g.weight(u, v).expect("cycle edge");
                    }
                    Ok(FairnessReport::from_violations(vec![Violation {
                        agent: cycle[0],
                        other: cycle[1 % cycle.len()],
                        witness: cycle,
                        margin: product - Rational::from_integer(1.into()),
                    }]))
                }
            }
        }
        PropertyName::VirtualEfx => {
            let g = graph::build_induced(instance, alloc, &agents)?;
            let ranks = g.compute_ranks()?;
            Ok(check_virtual_efx(instance, alloc, &ranks))
        }
        PropertyName::TypedBundles => {
            // A bundle is typed when all its goods share one identical
            // relevant-agent set R with i ∈ R and |R| ≤ 2; the correspondent
            // is the other member of R (or i itself when R = {i}).  This is
            // the uniform reading: it is what the update rules maintain, and
            // it is the strength the termination argument consumes (agents
            // outside R value the bundle at zero, the correspondent values
            // it at its inherent worth).
            let mut violations = Vec::new();
            let mut correspondents = BTreeMap::new();
            for &i in &agents {
                let bundle = alloc.bundle(i);
                if bundle.is_empty() {
                    correspondents.insert(i, i);
                    continue;
                }
                let mut sets = bundle.iter().map(|&g| instance.relevant_agents(g));
                let first = sets.next().expect("non-empty bundle");
                let uniform = sets.all(|s| s == first);
                if uniform && first.contains(&i) && first.len() <= 2 {
                    let j = first.iter().copied().find(|&a| a != i).unwrap_or(i);
                    correspondents.insert(i, j);
                } else {
                    violations.push(Violation {
                        agent: i,
                        other: i,
                        witness: bundle.iter().copied().collect(),
                        margin: Rational::zero(),
                    });
                }
            }
            let mut report = FairnessReport::from_violations(violations);
            report.correspondents = correspondents;
            Ok(report)
        }
    }
}

/// Exact Nash-social-welfare product over an agent set.  Zero factors are
/// counted separately so degenerate products stay comparable: fewer zero
/// factors is strictly larger; at equal zero counts the product of the
/// positive factors decides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nsw {
    pub zeros: usize,
    pub product: Rational,
}

impl Nsw {
    pub fn over<'a>(
        instance: &Instance,
        alloc: &Allocation,
        agents: impl IntoIterator<Item = &'a usize>,
    ) -> Nsw {
        let mut zeros = 0;
        let mut product = Rational::from_integer(1.into());
        for &i in agents {
            let v = instance.value(i, alloc.bundle(i));
            if v.is_zero() {
                zeros += 1;
            } else {
                product *= v;
            }
        }
        Nsw { zeros, product }
    }
}

impl PartialOrd for Nsw {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Nsw {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .zeros
            .cmp(&self.zeros)
            .then_with(|| self.product.cmp(&other.product))
    }
}

impl fmt::Display for Nsw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.zeros == 0 {
            write!(f, "{}", format_rational(&self.product))
        } else {
            write!(f, "0^{}*{}", self.zeros, format_rational(&self.product))
        }
    }
}

/// Which potential function an algorithm tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialTag {
    /// (social welfare, number of allocated goods), lexicographic.
    Cxxra,
    /// Ascending own-bundle values of the √2-relation sources, compared
    /// lexicographically with an implicit +∞ sentinel.
    Sources,
    /// (number of satisfied agents, NSW over the remaining agents).
    Pqrax,
    /// Plain NSW product.
    Nsw,
}

/// A potential snapshot; snapshots of different tags are incomparable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Potential {
    Cxxra { welfare: Rational, allocated: usize },
    Sources { values: Vec<Rational> },
    Pqrax { satisfied: usize, nsw: Nsw },
    NswOnly { nsw: Nsw },
}

/// Extra inputs for potential evaluation: the agent set the algorithm runs on
/// and, for the satisfied-count potential, the remaining agents.
#[derive(Debug, Clone)]
pub struct PotentialContext<'a> {
    pub agents: &'a BTreeSet<usize>,
    pub remaining: Option<&'a BTreeSet<usize>>,
}

/// Evaluates the tagged potential of an allocation.
pub fn potential(
    instance: &Instance,
    alloc: &Allocation,
    tag: PotentialTag,
    context: &PotentialContext,
) -> Potential {
    match tag {
        PotentialTag::Cxxra => {
            let welfare = context
                .agents
                .iter()
                .map(|&i| instance.value(i, alloc.bundle(i)))
                .fold(Rational::zero(), |a, b| a + b);
            let allocated = context
                .agents
                .iter()
                .map(|&i| alloc.bundle(i).len())
                .sum();
            Potential::Cxxra { welfare, allocated }
        }
        PotentialTag::Sources => {
            let edges = envy_edges(instance, alloc, Beta::Sqrt2, context.agents);
            let sources = sources_of(context.agents, &edges);
            let mut values: Vec<Rational> = sources
                .iter()
                .map(|&s| instance.value(s, alloc.bundle(s)))
                .collect();
            values.sort();
            Potential::Sources { values }
        }
        PotentialTag::Pqrax => {
            let remaining = context
                .remaining
                .expect("satisfied-count potential needs the remaining agents");
            Potential::Pqrax {
                satisfied: context.agents.len() - remaining.len(),
                nsw: Nsw::over(instance, alloc, remaining.iter()),
            }
        }
        PotentialTag::Nsw => Potential::NswOnly {
            nsw: Nsw::over(instance, alloc, context.agents.iter()),
        },
    }
}

/// Lexicographic comparison of two ascending value vectors padded with an
/// implicit +∞ sentinel: a missing entry compares greater than any value.
pub fn compare_sources(a: &[Rational], b: &[Rational]) -> Ordering {
    for k in 0..a.len().max(b.len()) {
        match (a.get(k), b.get(k)) {
            (Some(x), Some(y)) => match x.cmp(y) {
                Ordering::Equal => continue,
                other => return other,
            },
            (None, Some(_)) => return Ordering::Greater,
            (Some(_), None) => return Ordering::Less,
            (None, None) => unreachable!(),
        }
    }
    Ordering::Equal
}

impl Potential {
    /// Total comparison within a tag; mixing tags is an internal bug.
    pub fn compare(&self, other: &Potential) -> Ordering {
        match (self, other) {
            (
                Potential::Cxxra { welfare, allocated },
                Potential::Cxxra {
                    welfare: w2,
                    allocated: a2,
                },
            ) => welfare.cmp(w2).then(allocated.cmp(a2)),
            (Potential::Sources { values }, Potential::Sources { values: v2 }) => {
                compare_sources(values, v2)
            }
            (
                Potential::Pqrax { satisfied, nsw },
                Potential::Pqrax {
                    satisfied: s2,
                    nsw: n2,
                },
            ) => satisfied.cmp(s2).then_with(|| nsw.cmp(n2)),
            (Potential::NswOnly { nsw }, Potential::NswOnly { nsw: n2 }) => nsw.cmp(n2),
            _ => panic!("potential tag mismatch: {self} vs {other}"),
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Cxxra { welfare, allocated } => {
                write!(f, "({}, {})", format_rational(welfare), allocated)
            }
            Potential::Sources { values } => {
                write!(f, "[")?;
                for v in values {
                    write!(f, "{}, ", format_rational(v))?;
                }
                write!(f, "inf]")
            }
            Potential::Pqrax { satisfied, nsw } => write!(f, "({satisfied}, {nsw})"),
            Potential::NswOnly { nsw } => write!(f, "{nsw}"),
        }
    }
}
