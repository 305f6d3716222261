//! Sensor graph, relative frame offsets and ground truth.
//!
//! Nodes are numbered `0..n`. Every undirected edge `{a, b}` with `a < b` is
//! stored once and exposed as two directed edges: `2e` is `a -> b` and
//! `2e + 1` is `b -> a`.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    directed: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    adjacency: Vec<Vec<usize>>,
}

pub fn build_topology(nodes: usize, edge_list: &[(usize, usize)]) -> Result<Topology> {
    Topology::new(nodes, edge_list)
}

impl Topology {
    pub fn new(nodes: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidArgument("a network needs at least one node".into()));
        }
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in edge_list {
            for node in [a, b] {
                if node >= nodes {
                    return Err(Error::UnknownNode { node, count: nodes });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(key.0, key.1));
            }
            edges.push(key);
        }
        let mut adjacency = vec![Vec::new(); nodes];
        let mut directed = Vec::with_capacity(2 * edges.len());
        let mut index = HashMap::with_capacity(2 * edges.len());
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
            index.insert((a, b), directed.len());
            directed.push((a, b));
            index.insert((b, a), directed.len());
            directed.push((b, a));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let topo = Topology {
            nodes,
            edges,
            directed,
            index,
            adjacency,
        };
        if let Some(unreached) = topo.distances_from(0).iter().position(|d| d.is_none()) {
            return Err(Error::Disconnected(unreached));
        }
        Ok(topo)
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Undirected edges as `(low, high)` pairs in insertion order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed
    }

    pub fn directed_count(&self) -> usize {
        self.directed.len()
    }

    pub fn edge_index(&self, from: usize, to: usize) -> Option<usize> {
        self.index.get(&(from, to)).copied()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.index.contains_key(&(a, b))
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.nodes
    }

    /// Hop counts from `source`; `None` for unreachable nodes.
    pub fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// A shortest path from `from` to `to`, both included.
    pub fn shortest_path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut parent = vec![usize::MAX; self.nodes];
        parent[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if u == to {
                break;
            }
            for &v in &self.adjacency[u] {
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = parent[cur];
            path.push(cur);
        }
        path.reverse();
        path
    }

    /// Largest shortest-path hop count over all node pairs.
    pub fn diameter(&self) -> usize {
        (0..self.nodes)
            .map(|s| self.distances_from(s).into_iter().flatten().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Length of the shortest cycle, `None` for a tree.
    pub fn girth(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for s in 0..self.nodes {
            let mut dist = vec![usize::MAX; self.nodes];
            let mut parent = vec![usize::MAX; self.nodes];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adjacency[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        parent[v] = u;
                        queue.push_back(v);
                    } else if parent[u] != v {
                        let len = dist[u] + dist[v] + 1;
                        best = Some(best.map_or(len, |b| b.min(len)));
                    }
                }
            }
        }
        best
    }

    /// Largest round count for which messages never revisit a node.
    ///
    /// On a tree any round count is safe. On a graph with girth `g`, a message
    /// travelling more than `(g - 1) / 2` hops can come back around a cycle.
    pub fn safe_round_limit(&self) -> Option<usize> {
        self.girth().map(|g| (g - 1) / 2)
    }

    /// Nodes whose information reaches `to` through the edge `from -> to`
    /// on a tree, i.e. the component of `from` once the edge is cut.
    pub fn subtree(&self, from: usize, to: usize) -> Vec<usize> {
        let mut seen = vec![false; self.nodes];
        seen[to] = true;
        seen[from] = true;
        let mut out = vec![from];
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    out.push(v);
                    stack.push(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

pub fn graph_diameter(t: &Topology) -> usize {
    t.diameter()
}

/// Selection of the free components of a frame offset.
///
/// The offset between two frames only has nonzero entries in the position
/// components; the mask is a `state_dim × free_dim` column selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreeMask {
    state_dim: usize,
    components: Vec<usize>,
}

impl FreeMask {
    pub fn new(state_dim: usize, components: &[usize]) -> Result<Self> {
        if components.is_empty() || components.iter().any(|&c| c >= state_dim) {
            return Err(Error::InvalidArgument(format!(
                "free components {components:?} do not fit a {state_dim}-dimensional state"
            )));
        }
        let mut sorted = components.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != components.len() {
            return Err(Error::InvalidArgument("duplicate free component".into()));
        }
        Ok(FreeMask {
            state_dim,
            components: components.to_vec(),
        })
    }

    /// Positions of the `[x, vx, y, vy]` layout.
    pub fn planar() -> Self {
        FreeMask::new(4, &crate::model::PLANAR_POSITIONS).unwrap()
    }

    pub fn scalar() -> Self {
        FreeMask::new(1, &[0]).unwrap()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn free_dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[usize] {
        &self.components
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.state_dim, self.components.len());
        for (col, &row) in self.components.iter().enumerate() {
            e[(row, col)] = 1.0;
        }
        e
    }

    /// `E v`.
    pub fn embed(&self, free: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.state_dim);
        for (k, &c) in self.components.iter().enumerate() {
            out[c] = free[k];
        }
        out
    }

    /// `Eᵀ x`.
    pub fn project(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.components.len(), self.components.iter().map(|&c| full[c]))
    }

    /// `Eᵀ M E`.
    pub fn project_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.components.len();
        DMatrix::from_fn(k, k, |a, b| m[(self.components[a], self.components[b])])
    }

    /// Zeroes every masked component in place.
    pub fn clamp(&self, full: &mut DVector<f64>) {
        for i in 0..self.state_dim {
            if !self.components.contains(&i) {
                full[i] = 0.0;
            }
        }
    }
}

/// Offsets `θ^{i,j}` for every directed edge: the position of node `i`
/// expressed in the frame of node `j`, so that `X^j = X^i + θ^{i,j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationParams {
    mask: FreeMask,
    values: BTreeMap<(usize, usize), DVector<f64>>,
}

impl LocalizationParams {
    pub fn zeros(topology: &Topology, mask: FreeMask) -> Self {
        let values = topology
            .directed_edges()
            .iter()
            .map(|&e| (e, DVector::zeros(mask.state_dim())))
            .collect();
        LocalizationParams { mask, values }
    }

    pub fn mask(&self) -> &FreeMask {
        &self.mask
    }

    /// `θ^{i,j}`; zero on the diagonal and for pairs without a stored value.
    pub fn get(&self, i: usize, j: usize) -> DVector<f64> {
        if i == j {
            return DVector::zeros(self.mask.state_dim());
        }
        self.values
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.mask.state_dim()))
    }

    pub fn get_ref(&self, i: usize, j: usize) -> Option<&DVector<f64>> {
        self.values.get(&(i, j))
    }

    /// Stores `value` with its masked components forced to zero.
    pub fn set(&mut self, i: usize, j: usize, mut value: DVector<f64>) {
        self.mask.clamp(&mut value);
        self.values.insert((i, j), value);
    }

    pub fn set_free(&mut self, i: usize, j: usize, free: &DVector<f64>) {
        let full = self.mask.embed(free);
        self.values.insert((i, j), full);
    }

    pub fn free(&self, i: usize, j: usize) -> DVector<f64> {
        self.mask.project(&self.get(i, j))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &DVector<f64>)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest `|θ^{i,j} + θ^{j,i}|` component over stored pairs. Zero for
    /// ground truth; estimates learn both directions separately and drift.
    pub fn antisymmetry_residual(&self) -> f64 {
        self.values
            .iter()
            .filter_map(|(&(i, j), v)| self.values.get(&(j, i)).map(|w| (v + w).amax()))
            .fold(0.0, f64::max)
    }
}

/// `E (p_i - p_j)`, the position of `i` seen from `j`.
pub fn relative_offset(mask: &FreeMask, positions: &[DVector<f64>], i: usize, j: usize) -> DVector<f64> {
    mask.embed(&(&positions[i] - &positions[j]))
}

/// Ground-truth offsets on every directed edge of `topology`.
pub fn truth_from_positions(
    topology: &Topology,
    mask: FreeMask,
    positions: &[DVector<f64>],
) -> Result<LocalizationParams> {
    if positions.len() != topology.node_count() {
        return Err(Error::InvalidArgument(format!(
            "{} positions for {} nodes",
            positions.len(),
            topology.node_count()
        )));
    }
    if let Some(bad) = positions.iter().find(|p| p.len() != mask.free_dim()) {
        return Err(Error::InvalidArgument(format!(
            "position of dimension {} for {} free components",
            bad.len(),
            mask.free_dim()
        )));
    }
    let mut params = LocalizationParams::zeros(topology, mask.clone());
    for &(i, j) in topology.directed_edges() {
        params.set(i, j, relative_offset(&mask, positions, i, j));
    }
    Ok(params)
}

/// Sum of `θ` along consecutive pairs of `path`, i.e. `θ^{first,last}` on a
/// consistent parameter set.
pub fn path_sum(topology: &Topology, params: &LocalizationParams, path: &[usize]) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(params.mask().state_dim());
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !topology.has_edge(a, b) {
            return Err(Error::BrokenPath { from: a, to: b });
        }
        acc += params.get(a, b);
    }
    Ok(acc)
}

/// `θ^{r,v}` for every node `v`, accumulated along shortest paths from `r`.
pub fn offsets_from(topology: &Topology, params: &LocalizationParams, r: usize) -> Result<Vec<DVector<f64>>> {
    (0..topology.node_count())
        .map(|v| path_sum(topology, params, &topology.shortest_path(r, v)))
        .collect()
}
