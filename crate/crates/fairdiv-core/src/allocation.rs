//! Allocations: a pool of unallocated goods plus one bundle per agent,
//! together forming a partition of all goods.

use crate::instance::{CoreError, GoodSet};

/// A partition of the goods `0..m−1` into a pool bundle and `n` agent
/// bundles.  The partition invariant is validated on construction and can be
/// re-asserted at any time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pool: GoodSet,
    bundles: Vec<GoodSet>,
    num_goods: usize,
}

impl Allocation {
    /// Builds an allocation, verifying that `pool ∪ bundles` partitions
    /// `0..num_goods`.
    pub fn new(pool: GoodSet, bundles: Vec<GoodSet>, num_goods: usize) -> Result<Self, CoreError> {
        let alloc = Allocation {
            pool,
            bundles,
            num_goods,
        };
        alloc.check_partition()?;
        Ok(alloc)
    }

    /// The initial allocation: every good in the pool, all bundles empty.
    pub fn all_pool(num_agents: usize, num_goods: usize) -> Self {
        Allocation {
            pool: (0..num_goods).collect(),
            bundles: vec![GoodSet::new(); num_agents],
            num_goods,
        }
    }

    /// Verifies the partition invariant: every good in `0..m` appears in
    /// exactly one of the pool and the bundles.
    pub fn check_partition(&self) -> Result<(), CoreError> {
        let mut seen = vec![false; self.num_goods];
        let mut mark = |good: usize, who: &str| -> Result<(), CoreError> {
            if good >= self.num_goods {
                return Err(CoreError::NotAPartition {
                    good,
                    problem: format!("out of range in {who}"),
                });
            }
            if seen[good] {
                return Err(CoreError::NotAPartition {
                    good,
                    problem: format!("appears twice (second time in {who})"),
                });
            }
            seen[good] = true;
            Ok(())
        };
        for &g in &self.pool {
            mark(g, "pool")?;
        }
        for (i, bundle) in self.bundles.iter().enumerate() {
            for &g in bundle {
                mark(g, &format!("bundle {i}"))?;
            }
        }
        if let Some(good) = seen.iter().position(|&s| !s) {
            return Err(CoreError::NotAPartition {
                good,
                problem: "missing from the allocation".into(),
            });
        }
        Ok(())
    }

    pub fn num_agents(&self) -> usize {
        self.bundles.len()
    }

    pub fn num_goods(&self) -> usize {
        self.num_goods
    }

    pub fn pool(&self) -> &GoodSet {
        &self.pool
    }

    pub fn bundle(&self, agent: usize) -> &GoodSet {
        &self.bundles[agent]
    }

    pub fn bundles(&self) -> &[GoodSet] {
        &self.bundles
    }

    /// Complete ⟺ the pool is empty.
    pub fn is_complete(&self) -> bool {
        self.pool.is_empty()
    }

    /// Total number of goods held by agents (not in the pool).
    pub fn allocated_count(&self) -> usize {
        self.bundles.iter().map(GoodSet::len).sum()
    }

    /// Moves one good from agent `i`'s bundle to the pool.
    pub fn send_to_pool(&mut self, agent: usize, good: usize) -> Result<(), CoreError> {
        if !self.bundles[agent].remove(&good) {
            return Err(CoreError::NotAPartition {
                good,
                problem: format!("not in bundle {agent}"),
            });
        }
        self.pool.insert(good);
        Ok(())
    }

    /// Moves one good from the pool to agent `i`'s bundle.
    pub fn take_from_pool(&mut self, agent: usize, good: usize) -> Result<(), CoreError> {
        if !self.pool.remove(&good) {
            return Err(CoreError::NotAPartition {
                good,
                problem: "not in the pool".into(),
            });
        }
        self.bundles[agent].insert(good);
        Ok(())
    }

    /// Rewrites the allocation wholesale from new parts, revalidating the
    /// partition.  Rules that permute several bundles at once use this to
    /// apply all updates simultaneously from the pre-state.
    pub fn replace(&mut self, pool: GoodSet, bundles: Vec<GoodSet>) -> Result<(), CoreError> {
        let next = Allocation::new(pool, bundles, self.num_goods)?;
        *self = next;
        Ok(())
    }
}
