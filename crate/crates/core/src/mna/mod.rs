//! Modified nodal analysis of the resistive plexus.
//!
//! The full MNA system for a network driven only by voltage constraints is
//!
//! ```text
//! [ G  B ] [v]   [0]
//! [ B' 0 ] [i] = [e]
//! ```
//!
//! with `G` the conductance-weighted graph Laplacian, `B` the node/source
//! incidence and `e` the constrained voltages. [`MnaSystem`] exposes that
//! block form. [`MnaSolver`] solves it by eliminating the constrained nodes:
//! their rows become identity rows and their couplings move to the right-hand
//! side, which leaves a symmetric positive definite matrix on a fixed sparsity
//! pattern. The pattern is analyzed once per topology and only the numeric
//! factorization runs per solve.
//!
//! Source currents are positive when flowing out of the network into the
//! constrained node.

pub mod ldl;
pub mod ordering;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, PlexusGraph};
use ldl::{NumericLdl, SymbolicLdl, UpperPattern};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageConstraint {
    pub node: NodeId,
    pub volts: f64,
    /// Identifier of the electrode imposing the constraint.
    pub source_id: u32,
}

impl VoltageConstraint {
    pub fn new(node: NodeId, volts: f64, source_id: u32) -> Self {
        VoltageConstraint { node, volts, source_id }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnaSolution {
    pub node_voltages: Vec<f64>,
    /// One entry per constraint, in constraint order.
    pub source_currents: Vec<f64>,
}

impl MnaSolution {
    pub fn zeros(nodes: usize, sources: usize) -> Self {
        MnaSolution {
            node_voltages: vec![0.0; nodes],
            source_currents: vec![0.0; sources],
        }
    }
}

fn check_constraints(n: usize, constraints: &[VoltageConstraint], owner: &mut [usize]) -> Result<()> {
    for (k, c) in constraints.iter().enumerate() {
        if c.node >= n {
            return Err(Error::invalid_arg(format!("constraint on node {} outside 0..{n}", c.node)));
        }
        if !c.volts.is_finite() {
            return Err(Error::invalid_arg(format!("non-finite voltage on node {}", c.node)));
        }
        if owner[c.node] != NONE {
            return Err(Error::invalid_arg(format!("node {} carries more than one voltage constraint", c.node)));
        }
        owner[c.node] = k;
    }
    Ok(())
}

fn check_conductances(expected: usize, conductances: &[f64]) -> Result<()> {
    if conductances.len() != expected {
        return Err(Error::invalid_arg(format!(
            "expected {expected} edge conductances, got {}",
            conductances.len()
        )));
    }
    if let Some((e, g)) = conductances.iter().enumerate().find(|(_, g)| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::invalid_arg(format!("edge {e} has non-positive conductance {g}")));
    }
    Ok(())
}

/// An assembled MNA instance in block form.
#[derive(Debug, Clone)]
pub struct MnaSystem {
    nodes: usize,
    edges: Vec<(NodeId, NodeId)>,
    conductances: Vec<f64>,
    constraints: Vec<VoltageConstraint>,
}

impl MnaSystem {
    pub fn assemble(graph: &PlexusGraph, conductances: &[f64], constraints: &[VoltageConstraint]) -> Result<Self> {
        let edges: Vec<_> = graph.edges().iter().map(|e| (e.node_a, e.node_b)).collect();
        Self::from_parts(graph.node_count(), edges, conductances, constraints)
    }

    /// Assembles over an arbitrary edge list, e.g. for networks that are not grids.
    pub fn from_parts(
        nodes: usize,
        edges: Vec<(NodeId, NodeId)>,
        conductances: &[f64],
        constraints: &[VoltageConstraint],
    ) -> Result<Self> {
        check_conductances(edges.len(), conductances)?;
        if constraints.is_empty() {
            return Err(Error::invalid_arg("at least one voltage constraint is required"));
        }
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= nodes || b >= nodes || a == b) {
            return Err(Error::invalid_arg(format!("invalid edge ({a}, {b})")));
        }
        check_constraints(nodes, constraints, &mut vec![NONE; nodes])?;
        Ok(MnaSystem {
            nodes,
            edges,
            conductances: conductances.to_vec(),
            constraints: constraints.to_vec(),
        })
    }

    /// Order of the block matrix: one row per node plus one per source.
    pub fn dimension(&self) -> usize {
        self.nodes + self.constraints.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn constraints(&self) -> &[VoltageConstraint] {
        &self.constraints
    }

    /// Nonzeros of the block matrix as `(row, col, value)`, duplicates summed.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut entries = std::collections::BTreeMap::new();
        for (&(a, b), &g) in self.edges.iter().zip(&self.conductances) {
            *entries.entry((a, a)).or_insert(0.0) += g;
            *entries.entry((b, b)).or_insert(0.0) += g;
            *entries.entry((a, b)).or_insert(0.0) -= g;
            *entries.entry((b, a)).or_insert(0.0) -= g;
        }
        for (k, c) in self.constraints.iter().enumerate() {
            entries.insert((c.node, self.nodes + k), 1.0);
            entries.insert((self.nodes + k, c.node), 1.0);
        }
        entries.into_iter().map(|((r, c), v)| (r, c, v)).collect()
    }

    /// Right-hand side `[0; e]` of the block system.
    pub fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dimension()];
        for (k, c) in self.constraints.iter().enumerate() {
            b[self.nodes + k] = c.volts;
        }
        b
    }

    /// Coordinate-format text dump: a `rows cols nnz` header, then
    /// `row col value` lines, then the right-hand side.
    pub fn dump_triplets(&self) -> String {
        let t = self.triplets();
        let n = self.dimension();
        let mut out = format!("{n} {n} {}\n", t.len());
        for (r, c, v) in t {
            let _ = writeln!(out, "{r} {c} {v:e}");
        }
        out.push_str("# rhs\n");
        for v in self.rhs() {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }

    pub fn solve(&self) -> Result<MnaSolution> {
        let mut solver = MnaSolver::new(self.nodes, self.edges.clone(), None);
        solver.solve(&self.conductances, &self.constraints)
    }
}

/// Solves with the floating rule applied: any connected component without a
/// constraint is held at 0 V, which also covers an empty constraint list.
pub fn solve_floating(
    graph: &PlexusGraph,
    conductances: &[f64],
    constraints: &[VoltageConstraint],
) -> Result<MnaSolution> {
    MnaSolver::for_graph(graph).solve(conductances, constraints)
}

/// Reusable solver bound to one topology.
#[derive(Debug, Clone)]
pub struct MnaSolver {
    n: usize,
    edges: Vec<(NodeId, NodeId)>,
    adj_start: Vec<usize>,
    adj: Vec<(NodeId, usize)>,
    iperm: Vec<usize>,
    pattern: UpperPattern,
    diag_pos: Vec<usize>,
    edge_pos: Vec<usize>,
    sym: SymbolicLdl,
    num: NumericLdl,
    values: Vec<f64>,
    owner: Vec<usize>,
    reached: Vec<bool>,
    queue: Vec<usize>,
    rhs: Vec<f64>,
    work: Vec<f64>,
    scaled: Vec<f64>,
}

impl MnaSolver {
    /// Solver for a plexus grid using a geometric nested-dissection ordering.
    pub fn for_graph(graph: &PlexusGraph) -> Self {
        let edges = graph.edges().iter().map(|e| (e.node_a, e.node_b)).collect();
        let perm = ordering::nested_dissection(graph.width(), graph.height());
        Self::new(graph.node_count(), edges, Some(perm))
    }

    /// Solver for an arbitrary edge list; `perm[new] = old`, identity when `None`.
    pub fn new(n: usize, edges: Vec<(NodeId, NodeId)>, perm: Option<Vec<usize>>) -> Self {
        let perm = perm.unwrap_or_else(|| (0..n).collect());
        let iperm = ordering::invert(&perm);

        let mut degree = vec![0usize; n];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut adj_start = vec![0usize; n + 1];
        for i in 0..n {
            adj_start[i + 1] = adj_start[i] + degree[i];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![(0, 0); adj_start[n]];
        for (e, &(a, b)) in edges.iter().enumerate() {
            adj[fill[a]] = (b, e);
            fill[a] += 1;
            adj[fill[b]] = (a, e);
            fill[b] += 1;
        }

        // upper pattern in permuted coordinates: the diagonal plus one entry per edge
        let mut col_count = vec![1usize; n];
        for &(a, b) in &edges {
            col_count[iperm[a].max(iperm[b])] += 1;
        }
        let mut col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + col_count[k];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; col_ptr[n]];
        let mut diag_pos = vec![0usize; n];
        for old in 0..n {
            let k = iperm[old];
            row_idx[next[k]] = k;
            diag_pos[old] = next[k];
            next[k] += 1;
        }
        let mut edge_pos = vec![0usize; edges.len()];
        for (e, &(a, b)) in edges.iter().enumerate() {
            let (r, c) = (iperm[a].min(iperm[b]), iperm[a].max(iperm[b]));
            row_idx[next[c]] = r;
            edge_pos[e] = next[c];
            next[c] += 1;
        }
        let pattern = UpperPattern { n, col_ptr, row_idx };
        let sym = SymbolicLdl::analyze(&pattern);
        let num = NumericLdl::new(&sym);
        let nnz = pattern.row_idx.len();

        MnaSolver {
            n,
            edges,
            adj_start,
            adj,
            iperm,
            pattern,
            diag_pos,
            edge_pos,
            sym,
            num,
            values: vec![0.0; nnz],
            owner: vec![NONE; n],
            reached: vec![false; n],
            queue: Vec::with_capacity(n),
            rhs: vec![0.0; n],
            work: vec![0.0; n],
            scaled: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Off-diagonal entries stored in the factor.
    pub fn factor_nnz(&self) -> usize {
        self.sym.factor_nnz()
    }

    pub fn solve(&mut self, conductances: &[f64], constraints: &[VoltageConstraint]) -> Result<MnaSolution> {
        let n = self.n;
        check_conductances(self.edges.len(), conductances)?;
        self.owner.iter_mut().for_each(|o| *o = NONE);
        check_constraints(n, constraints, &mut self.owner)?;

        if constraints.is_empty() {
            return Ok(MnaSolution::zeros(n, 0));
        }

        // Rescale so the smallest conductance is 1.
        let reference = conductances.iter().copied().fold(f64::INFINITY, f64::min);
        let reference = if reference.is_finite() { reference } else { 1.0 };
        self.scaled.clear();
        self.scaled.extend(conductances.iter().map(|g| g / reference));

        // Free nodes reachable from a constraint; the rest float and are held at 0 V.
        self.reached.iter_mut().for_each(|r| *r = false);
        self.queue.clear();
        for c in constraints {
            self.reached[c.node] = true;
            self.queue.push(c.node);
        }
        let mut head = 0;
        while head < self.queue.len() {
            let node = self.queue[head];
            head += 1;
            for &(m, _) in &self.adj[self.adj_start[node]..self.adj_start[node + 1]] {
                if !self.reached[m] {
                    self.reached[m] = true;
                    self.queue.push(m);
                }
            }
        }

        self.values.iter_mut().for_each(|v| *v = 0.0);
        self.rhs.iter_mut().for_each(|v| *v = 0.0);
        for node in 0..n {
            if self.owner[node] != NONE || !self.reached[node] {
                self.values[self.diag_pos[node]] = 1.0;
            }
        }
        for c in constraints {
            self.rhs[c.node] = c.volts;
        }
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let g = self.scaled[e];
            let (a_fixed, b_fixed) = (self.owner[a] != NONE, self.owner[b] != NONE);
            match (a_fixed, b_fixed) {
                (false, false) => {
                    if self.reached[a] {
                        self.values[self.diag_pos[a]] += g;
                        self.values[self.diag_pos[b]] += g;
                        self.values[self.edge_pos[e]] = -g;
                    }
                }
                (true, false) => {
                    self.values[self.diag_pos[b]] += g;
                    self.rhs[b] += g * constraints[self.owner[a]].volts;
                }
                (false, true) => {
                    self.values[self.diag_pos[a]] += g;
                    self.rhs[a] += g * constraints[self.owner[b]].volts;
                }
                (true, true) => {}
            }
        }

        if let Err(fail) = self.num.factor(&self.sym, &self.pattern, &self.values, 1e-12) {
            let node = self.iperm.iter().position(|&k| k == fail.column).unwrap_or(NONE);
            return Err(Error::NumericalFailure(format!(
                "singular nodal matrix: pivot {:e} at node {node}; the component containing node {node} \
                 is not tied to any voltage constraint",
                fail.pivot
            )));
        }

        let mut v = vec![0.0; n];
        for i in 0..n {
            self.work[self.iperm[i]] = self.rhs[i];
        }
        self.num.solve_in_place(&self.sym, &mut self.work);
        for i in 0..n {
            v[i] = self.work[self.iperm[i]];
        }
        // iterative refinement against the reduced system
        for _ in 0..2 {
            let (res, scale) = self.residual(&v);
            let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            if worst <= 1e-15 * scale {
                break;
            }
            for i in 0..n {
                self.work[self.iperm[i]] = res[i];
            }
            self.num.solve_in_place(&self.sym, &mut self.work);
            for i in 0..n {
                v[i] += self.work[self.iperm[i]];
            }
        }
        for c in constraints {
            v[c.node] = c.volts;
        }
        for node in 0..n {
            if !self.reached[node] {
                v[node] = 0.0;
            }
        }

        let mut currents = vec![0.0; constraints.len()];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let i_ab = conductances[e] * (v[a] - v[b]);
            if self.owner[b] != NONE {
                currents[self.owner[b]] += i_ab;
            }
            if self.owner[a] != NONE {
                currents[self.owner[a]] -= i_ab;
            }
        }
        Ok(MnaSolution {
            node_voltages: v,
            source_currents: currents,
        })
    }

    // Residual of the reduced (scaled) system and a magnitude scale for it.
    fn residual(&self, v: &[f64]) -> (Vec<f64>, f64) {
        let n = self.n;
        let mut ax = vec![0.0; n];
        for node in 0..n {
            ax[node] = self.values[self.diag_pos[node]] * v[node];
        }
        let mut scale = 0.0f64;
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let off = self.values[self.edge_pos[e]];
            if off != 0.0 {
                ax[a] += off * v[b];
                ax[b] += off * v[a];
            }
        }
        let mut res = vec![0.0; n];
        for i in 0..n {
            res[i] = self.rhs[i] - ax[i];
            scale = scale.max(self.rhs[i].abs()).max((self.values[self.diag_pos[i]] * v[i]).abs());
        }
        (res, scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(node: usize, volts: f64) -> VoltageConstraint {
        VoltageConstraint::new(node, volts, node as u32)
    }

    #[test]
    fn smallest_instance() {
        let sys = MnaSystem::from_parts(2, vec![(0, 1)], &[1e-12], &[c(0, 1.0)]).unwrap();
        assert_eq!(sys.dimension(), 3);
        let sol = sys.solve().unwrap();
        // node 1 floats against a single source: no current, same potential
        assert!((sol.node_voltages[1] - 1.0).abs() < 1e-12);
        assert!(sol.source_currents[0].abs() < 1e-24);
    }

    #[test]
    fn resistive_divider() {
        let g = 3e-12;
        let sys = MnaSystem::from_parts(3, vec![(0, 1), (1, 2)], &[g, g], &[c(0, 1.0), c(2, 0.0)]).unwrap();
        let sol = sys.solve().unwrap();
        assert!((sol.node_voltages[1] - 0.5).abs() < 1e-14);
        assert!((sol.source_currents[1] - g / 2.0).abs() < 1e-12 * g);
        assert!((sol.source_currents[0] + g / 2.0).abs() < 1e-12 * g);
    }

    #[test]
    fn unequal_divider() {
        // 1 pS then 3 pS: v(b) = 3/4
        let sys = MnaSystem::from_parts(3, vec![(0, 1), (1, 2)], &[3e-12, 1e-12], &[c(0, 1.0), c(2, 0.0)]).unwrap();
        let sol = sys.solve().unwrap();
        assert!((sol.node_voltages[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn grid_dimension() {
        let graph = PlexusGraph::build_grid(41, 41, 25.0, 0.5, 3).unwrap();
        let gs = vec![1e-12; graph.edge_count()];
        let sys = MnaSystem::assemble(&graph, &gs, &[c(0, 1.5), c(100, 0.0), c(900, 0.0)]).unwrap();
        assert_eq!(sys.dimension(), 1681 + 3);
    }

    #[test]
    fn unexcited_network() {
        let graph = PlexusGraph::build_grid(4, 4, 25.0, 0.5, 3).unwrap();
        let gs = vec![1e-12; graph.edge_count()];
        let sol = MnaSystem::assemble(&graph, &gs, &[c(5, 0.0)]).unwrap().solve().unwrap();
        assert!(sol.node_voltages.iter().all(|&v| v == 0.0));
        assert_eq!(sol.source_currents, vec![0.0]);
    }

    #[test]
    fn assemble_rejects_bad_input() {
        let graph = PlexusGraph::build_grid(3, 3, 25.0, 0.0, 0).unwrap();
        let mut gs = vec![1e-12; graph.edge_count()];
        assert!(MnaSystem::assemble(&graph, &gs, &[c(0, 1.0), c(0, 0.0)]).is_err());
        assert!(MnaSystem::assemble(&graph, &gs, &[]).is_err());
        assert!(MnaSystem::assemble(&graph, &gs, &[c(9, 0.0)]).is_err());
        gs[2] = 0.0;
        assert!(matches!(MnaSystem::assemble(&graph, &gs, &[c(0, 1.0)]), Err(Error::InvalidArgument(_))));
        gs[2] = -1.0;
        assert!(MnaSystem::assemble(&graph, &gs, &[c(0, 1.0)]).is_err());
    }

    #[test]
    fn empty_constraints_float_to_zero() {
        let graph = PlexusGraph::build_grid(5, 5, 25.0, 0.3, 1).unwrap();
        let gs = vec![2e-12; graph.edge_count()];
        let sol = solve_floating(&graph, &gs, &[]).unwrap();
        assert!(sol.node_voltages.iter().all(|&v| v == 0.0));
        assert!(sol.source_currents.is_empty());
    }

    #[test]
    fn disconnected_component_floats() {
        // path 0-1-2 constrained at both ends, separate path 3-4-5 unconstrained
        let edges = vec![(0, 1), (1, 2), (3, 4), (4, 5)];
        let mut solver = MnaSolver::new(6, edges, None);
        let sol = solver.solve(&[1e-12; 4], &[c(0, 1.0), c(2, 0.0)]).unwrap();
        assert!((sol.node_voltages[1] - 0.5).abs() < 1e-14);
        assert_eq!(&sol.node_voltages[3..], &[0.0, 0.0, 0.0]);

        // same as solving the constrained sub-problem on its own
        let sub = MnaSystem::from_parts(3, vec![(0, 1), (1, 2)], &[1e-12; 2], &[c(0, 1.0), c(2, 0.0)])
            .unwrap()
            .solve()
            .unwrap();
        assert_eq!(&sol.node_voltages[..3], &sub.node_voltages[..]);
        assert_eq!(sol.source_currents, sub.source_currents);
    }

    #[test]
    fn triplet_dump_shape() {
        let sys = MnaSystem::from_parts(2, vec![(0, 1)], &[1e-12], &[c(0, 1.0)]).unwrap();
        let dump = sys.dump_triplets();
        let first = dump.lines().next().unwrap();
        assert_eq!(first, "3 3 6");
    }

    #[test]
    fn solver_reuse_matches_fresh_solver() {
        let graph = PlexusGraph::build_grid(6, 5, 25.0, 0.5, 9).unwrap();
        let mut reused = MnaSolver::for_graph(&graph);
        for step in 0..5 {
            let gs: Vec<f64> = (0..graph.edge_count()).map(|e| 1e-12 * (1.0 + ((e * 7 + step) % 13) as f64)).collect();
            let cs = [c(step, 1.2), c(20 + step, 0.0), c(29, -0.1)];
            let a = reused.solve(&gs, &cs).unwrap();
            let b = MnaSolver::for_graph(&graph).solve(&gs, &cs).unwrap();
            assert_eq!(a, b);
        }
    }
}
