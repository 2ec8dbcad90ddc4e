//! Grouped samples: K groups of grid functions on one domain.

use crate::error::{Error, Result};
use crate::space::{GridDomain, GridFunction};

/// K groups of discretized functional observations sharing one domain.
#[derive(Debug, Clone)]
pub struct GroupedSample {
    pub groups: Vec<Vec<GridFunction>>,
    pub domain: GridDomain,
}

impl GroupedSample {
    pub fn new(groups: Vec<Vec<GridFunction>>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "K >= 2 groups required, got {}",
                groups.len()
            )));
        }
        if let Some(k) = groups.iter().position(|g| g.is_empty()) {
            return Err(Error::InvalidInput(format!("group {} is empty", k + 1)));
        }
        let domain = groups[0][0].domain;
        for (k, g) in groups.iter().enumerate() {
            for (i, f) in g.iter().enumerate() {
                if f.domain != domain {
                    return Err(Error::DomainMismatch(format!(
                        "observation {} of group {} is on a different domain",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(GroupedSample { groups, domain })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.len()).collect()
    }

    pub fn n(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    /// Pooled observations in group order.
    pub fn pooled(&self) -> Vec<&GridFunction> {
        self.groups.iter().flatten().collect()
    }

    /// Group label of each pooled index.
    pub fn group_of_pooled(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n());
        for (k, g) in self.groups.iter().enumerate() {
            out.extend(std::iter::repeat(k).take(g.len()));
        }
        out
    }

    /// Rebuild a sample by assigning pooled observations to the original
    /// group sizes in the given order (used by permutation and bootstrap).
    pub fn from_pooled_assignment(&self, order: &[usize]) -> GroupedSample {
        debug_assert_eq!(order.len(), self.n());
        let pooled = self.pooled();
        let mut groups = Vec::with_capacity(self.k());
        let mut it = order.iter();
        for g in &self.groups {
            groups.push((&mut it).take(g.len()).map(|&i| pooled[i].clone()).collect());
        }
        GroupedSample { groups, domain: self.domain }
    }

    /// Apply a map to every observation.
    pub fn map(&self, f: impl Fn(&GridFunction) -> GridFunction) -> GroupedSample {
        GroupedSample {
            groups: self.groups.iter().map(|g| g.iter().map(&f).collect()).collect(),
            domain: self.domain,
        }
    }
}
