//! Instance model: agents, goods, an additive valuation table, relevance
//! queries, and classification of the valuation structure ((p,q)-boundedness
//! and the restricted-additive certificate).

use crate::rational::Rational;
use num_traits::{Signed, Zero};
use std::collections::BTreeSet;
use thiserror::Error;

/// A set of good indices.  Ordered containers keep every iteration
/// deterministic.
pub type GoodSet = BTreeSet<usize>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoreError {
    #[error("valuation table must be rectangular: row {row} has {got} entries, expected {expected}")]
    RaggedTable {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("negative value for agent {agent}, good {good}")]
    NegativeValue { agent: usize, good: usize },
    #[error("allocation is not a partition of the goods: good {good} {problem}")]
    NotAPartition { good: usize, problem: String },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
}

/// Tightest (p, q) such that the instance is (p,q)-bounded:
/// `p` = max number of agents any single good is relevant to,
/// `q` = max number of goods relevant to both members of any agent pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundProfile {
    pub p: usize,
    pub q: usize,
}

/// Witness that an instance is restricted additive: each good `g` carries a
/// positive inherent value and every agent values it at either 0 or that
/// inherent value.  `relevance[g]` is the set of agents valuing `g`
/// positively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestrictedCertificate {
    pub inherent: Vec<Rational>,
    pub relevance: Vec<BTreeSet<usize>>,
}

/// An additive fair-division instance: `n` agents, `m` goods, and a full
/// non-negative valuation table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    num_agents: usize,
    num_goods: usize,
    values: Vec<Vec<Rational>>,
}

impl Instance {
    /// Builds an instance from a rectangular table of non-negative values.
    /// `values[i][g]` is agent `i`'s value for the singleton `{g}`.
    pub fn new(values: Vec<Vec<Rational>>) -> Result<Self, CoreError> {
        let num_agents = values.len();
        let num_goods = values.first().map_or(0, Vec::len);
        for (row, vals) in values.iter().enumerate() {
            if vals.len() != num_goods {
                return Err(CoreError::RaggedTable {
                    row,
                    got: vals.len(),
                    expected: num_goods,
                });
            }
            for (good, v) in vals.iter().enumerate() {
                if *v < Rational::zero() {
                    return Err(CoreError::NegativeValue { agent: row, good });
                }
            }
        }
        Ok(Instance {
            num_agents,
            num_goods,
            values,
        })
    }

    /// Convenience constructor from integer literals.
    pub fn from_ints(values: &[&[i64]]) -> Result<Self, CoreError> {
        Instance::new(
            values
                .iter()
                .map(|row| row.iter().map(|&v| crate::rational::rat(v)).collect())
                .collect(),
        )
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_goods(&self) -> usize {
        self.num_goods
    }

    /// Agent `i`'s value for the singleton `{g}`.
    pub fn singleton(&self, agent: usize, good: usize) -> &Rational {
        &self.values[agent][good]
    }

    /// The set of all goods `{0, …, m−1}`.
    pub fn all_goods(&self) -> GoodSet {
        (0..self.num_goods).collect()
    }

    /// Additive value: `v_i(S) = Σ_{g∈S} v_i({g})`; the empty set is worth 0.
    pub fn value(&self, agent: usize, goods: &GoodSet) -> Rational {
        goods
            .iter()
            .map(|&g| self.values[agent][g].clone())
            .fold(Rational::zero(), |acc, v| acc + v)
    }

    /// Goods of `S` with positive value to agent `i`.
    pub fn relevant_set(&self, goods: &GoodSet, agent: usize) -> GoodSet {
        goods
            .iter()
            .copied()
            .filter(|&g| self.values[agent][g].is_positive())
            .collect()
    }

    /// Goods of `S` relevant to both `i` and `j`; for `i = j` this is
    /// `relevant_set(S, i)`.
    pub fn relevant_pair(&self, goods: &GoodSet, i: usize, j: usize) -> GoodSet {
        goods
            .iter()
            .copied()
            .filter(|&g| self.values[i][g].is_positive() && self.values[j][g].is_positive())
            .collect()
    }

    /// Agents valuing good `g` positively.
    pub fn relevant_agents(&self, good: usize) -> BTreeSet<usize> {
        (0..self.num_agents)
            .filter(|&i| self.values[i][good].is_positive())
            .collect()
    }

    /// Tightest (p, q) bound profile.  A good counts toward `p` and `q` only
    /// through positive values; all-zero goods are relevant to nobody.
    pub fn classify_bounds(&self) -> BoundProfile {
        let p = (0..self.num_goods)
            .map(|g| self.relevant_agents(g).len())
            .max()
            .unwrap_or(0);
        let all = self.all_goods();
        let mut q = 0;
        for i in 0..self.num_agents {
            for j in (i + 1)..self.num_agents {
                q = q.max(self.relevant_pair(&all, i, j).len());
            }
        }
        BoundProfile { p, q }
    }

    /// Restricted-additive certificate: present exactly when every good has at
    /// least one positive value and all its positive values coincide.  Goods
    /// with an all-zero column have no determinable positive inherent value,
    /// so such tables are rejected.
    pub fn check_restricted_additive(&self) -> Option<RestrictedCertificate> {
        let mut inherent = Vec::with_capacity(self.num_goods);
        let mut relevance = Vec::with_capacity(self.num_goods);
        for g in 0..self.num_goods {
            let agents = self.relevant_agents(g);
            let first = agents.iter().next().copied()?;
            let v = self.values[first][g].clone();
            if agents.iter().any(|&i| self.values[i][g] != v) {
                return None;
            }
            inherent.push(v);
            relevance.push(agents);
        }
        Some(RestrictedCertificate {
            inherent,
            relevance,
        })
    }

    /// Instance with one good deleted (columns above `good` shift down by
    /// one).  Used by classification tests.
    pub fn without_good(&self, good: usize) -> Instance {
        let values = self
            .values
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(g, _)| g != good)
                    .map(|(_, v)| v.clone())
                    .collect()
            })
            .collect();
        Instance::new(values).expect("deleting a column preserves validity")
    }

    /// Raw table access for serialization.
    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.values
    }
}
