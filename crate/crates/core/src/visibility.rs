//! Line-of-sight neighbourhoods and the communication-subgraph partition.
//!
//! Line of sight is evaluated against physical obstacles only; inflated
//! planning obstacles never occlude.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{segment_blocked, AARect, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type Positions = BTreeMap<AgentId, Point2>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VisibilityError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("an agent is not its own neighbour ({0})")]
    SelfPair(AgentId),
}

pub fn in_los(
    i: AgentId,
    j: AgentId,
    positions: &Positions,
    physical_obstacles: &[AARect],
) -> Result<bool, VisibilityError> {
    if i == j {
        return Err(VisibilityError::SelfPair(i));
    }
    let pi = positions.get(&i).ok_or(VisibilityError::UnknownAgent(i))?;
    let pj = positions.get(&j).ok_or(VisibilityError::UnknownAgent(j))?;
    Ok(!segment_blocked(*pi, *pj, physical_obstacles))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub agent: AgentId,
    pub neighbors: BTreeSet<AgentId>,
}

pub fn neighbors(agent: AgentId, positions: &Positions, physical_obstacles: &[AARect]) -> Result<NeighborSet, VisibilityError> {
    if !positions.contains_key(&agent) {
        return Err(VisibilityError::UnknownAgent(agent));
    }
    let mut set = BTreeSet::new();
    for &other in positions.keys() {
        if other != agent && in_los(agent, other, positions, physical_obstacles)? {
            set.insert(other);
        }
    }
    Ok(NeighborSet { agent, neighbors: set })
}

/// Disjoint member sets covering every agent. Canonical form: members sorted
/// ascending, subgraphs ordered by their smallest member.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgraphPartition {
    pub subgraphs: Vec<Vec<AgentId>>,
    pub epoch: u64,
}

impl SubgraphPartition {
    /// Canonicalizes arbitrary member sets.
    pub fn from_sets(sets: impl IntoIterator<Item = Vec<AgentId>>, epoch: u64) -> Self {
        let mut subgraphs: Vec<Vec<AgentId>> = sets
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(|mut s| {
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        subgraphs.sort_unstable_by_key(|s| s[0]);
        Self { subgraphs, epoch }
    }

    /// Everyone in one subgraph.
    pub fn single(agents: impl IntoIterator<Item = AgentId>, epoch: u64) -> Self {
        Self::from_sets([agents.into_iter().collect::<Vec<_>>()], epoch)
    }

    /// Equality of the member sets, ignoring the epoch.
    pub fn same_sets(&self, other: &SubgraphPartition) -> bool {
        self.subgraphs == other.subgraphs
    }

    pub fn contains_set(&self, members: &[AgentId]) -> bool {
        self.subgraphs.iter().any(|s| s.as_slice() == members)
    }

    pub fn subgraph_of(&self, agent: AgentId) -> Option<usize> {
        self.subgraphs.iter().position(|s| s.binary_search(&agent).is_ok())
    }

    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }

    /// Disjoint, covering exactly `agents`, canonical.
    pub fn is_valid_for(&self, agents: &[AgentId]) -> bool {
        let mut seen = BTreeSet::new();
        for s in &self.subgraphs {
            if s.is_empty() || s.windows(2).any(|w| w[0] >= w[1]) {
                return false;
            }
            for a in s {
                if !seen.insert(*a) {
                    return false;
                }
            }
        }
        if self.subgraphs.windows(2).any(|w| w[0][0] >= w[1][0]) {
            return false;
        }
        seen.len() == agents.len() && agents.iter().all(|a| seen.contains(a))
    }
}

/// Connected components of the undirected line-of-sight graph.
pub fn compute_subgraphs(positions: &Positions, physical_obstacles: &[AARect], epoch: u64) -> SubgraphPartition {
    let entries: Vec<(AgentId, Point2)> = positions.iter().map(|(a, p)| (*a, *p)).collect();
    let n = entries.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if !segment_blocked(entries[i].1, entries[j].1, physical_obstacles) {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<AgentId>> = BTreeMap::new();
    for (i, (agent, _)) in entries.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(*agent);
    }
    SubgraphPartition::from_sets(groups.into_values(), epoch)
}
