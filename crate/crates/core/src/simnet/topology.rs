use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::UserId;

/// Unordered edge stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(UserId, UserId);

impl Edge {
    pub fn new(a: UserId, b: UserId) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn ends(self) -> (UserId, UserId) {
        (self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("self-loop on vertex {0}")]
    SelfLoop(UserId),
    #[error("duplicate edge {0}-{1}")]
    Duplicate(UserId, UserId),
    #[error("edge {0}-{1} references an unknown vertex")]
    UnknownVertex(UserId, UserId),
    #[error("no edge {0}-{1}")]
    MissingEdge(UserId, UserId),
}

/// Undirected communication graph over user ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adjacency: BTreeMap<UserId, BTreeSet<UserId>>,
    edges: BTreeSet<Edge>,
}

impl Topology {
    pub fn new(
        vertices: impl IntoIterator<Item = UserId>,
        edges: impl IntoIterator<Item = (UserId, UserId)>,
    ) -> Result<Self, TopologyError> {
        let mut adjacency: BTreeMap<UserId, BTreeSet<UserId>> =
            vertices.into_iter().map(|v| (v, BTreeSet::new())).collect();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            if !adjacency.contains_key(&a) || !adjacency.contains_key(&b) {
                return Err(TopologyError::UnknownVertex(a, b));
            }
            if !set.insert(Edge::new(a, b)) {
                return Err(TopologyError::Duplicate(a, b));
            }
            adjacency.get_mut(&a).unwrap().insert(b);
            adjacency.get_mut(&b).unwrap().insert(a);
        }
        Ok(Topology {
            adjacency,
            edges: set,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = UserId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    /// `n_c`, the number of communication links.
    pub fn link_count(&self) -> usize {
        self.edges.len()
    }

    /// `n_cp`, average links per agent.
    pub fn links_per_agent(&self) -> f64 {
        if self.adjacency.is_empty() {
            return 0.0;
        }
        self.edges.len() as f64 / self.adjacency.len() as f64
    }

    pub fn neighbors(&self, v: UserId) -> impl Iterator<Item = UserId> + '_ {
        self.adjacency.get(&v).into_iter().flatten().copied()
    }

    pub fn contains(&self, a: UserId, b: UserId) -> bool {
        self.edges.contains(&Edge::new(a, b))
    }

    pub fn remove_edge(&mut self, a: UserId, b: UserId) -> Result<(), TopologyError> {
        if !self.edges.remove(&Edge::new(a, b)) {
            return Err(TopologyError::MissingEdge(a, b));
        }
        self.adjacency.get_mut(&a).unwrap().remove(&b);
        self.adjacency.get_mut(&b).unwrap().remove(&a);
        Ok(())
    }

    /// Drops every edge touching `v`; returns the former neighbours.
    pub fn isolate(&mut self, v: UserId) -> Vec<UserId> {
        let former: Vec<UserId> = self.neighbors(v).collect();
        for &u in &former {
            self.remove_edge(v, u)
                .expect("adjacency and edge set agree");
        }
        former
    }

    pub fn is_connected(&self) -> bool {
        let all: BTreeSet<UserId> = self.vertices().collect();
        is_connected(self, &all, &BTreeSet::new())
    }
}

/// Breadth-first reachability over `active` vertices using edges not in
/// `removed`. An empty or single-vertex active set is connected.
pub fn is_connected(
    topology: &Topology,
    active: &BTreeSet<UserId>,
    removed: &BTreeSet<Edge>,
) -> bool {
    let Some(&start) = active.iter().next() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for u in topology.neighbors(v) {
            if active.contains(&u) && !removed.contains(&Edge::new(v, u)) && seen.insert(u) {
                queue.push_back(u);
            }
        }
    }
    seen.len() == active.len()
}

/// JSON form: `{"edges": [[i, j], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub edges: Vec<[u32; 2]>,
}

impl From<&Topology> for TopologyFile {
    fn from(t: &Topology) -> Self {
        TopologyFile {
            edges: t.edges().map(|e| [e.0 .0, e.1 .0]).collect(),
        }
    }
}
