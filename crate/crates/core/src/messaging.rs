//! Synchronous message rounds that spread local information terms across
//! the network and translate them into the receiving node's frame.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::{LocalizationParams, Topology};

/// Information contributed by one node's measurement at the current step:
/// `info = CᵀR⁻¹C` and `info_vec = CᵀR⁻¹(Y − d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    pub info: DMatrix<f64>,
    pub info_vec: DVector<f64>,
}

impl LocalTerm {
    pub fn zeros(state_dim: usize) -> Self {
        LocalTerm {
            info: DMatrix::zeros(state_dim, state_dim),
            info_vec: DVector::zeros(state_dim),
        }
    }

    pub fn from_linear(
        matrix: &DMatrix<f64>,
        noise_precision: &DMatrix<f64>,
        y: &DVector<f64>,
        offset: &DVector<f64>,
    ) -> Self {
        let ct_rinv = matrix.transpose() * noise_precision;
        let mut info = &ct_rinv * matrix;
        crate::linalg::symmetrize(&mut info);
        LocalTerm {
            info,
            info_vec: ct_rinv * (y - offset),
        }
    }
}

/// Message on a directed edge: accumulated information matrix, information
/// vector, and information-weighted frame offset.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageTriple {
    pub m: DMatrix<f64>,
    pub mdot: DVector<f64>,
    pub mddot: DVector<f64>,
}

/// Messages for every directed edge, indexed as in [`Topology::directed_edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBoard {
    round: usize,
    first: Vec<MessageTriple>,
    current: Vec<MessageTriple>,
}

impl MessageBoard {
    pub fn round(&self) -> usize {
        self.round
    }

    /// Round-one message on directed edge `idx`.
    pub fn first(&self, idx: usize) -> &MessageTriple {
        &self.first[idx]
    }

    /// Latest-round message on directed edge `idx`.
    pub fn current(&self, idx: usize) -> &MessageTriple {
        &self.current[idx]
    }

    /// Latest message sent from `from` to `to`.
    pub fn message(&self, topology: &Topology, from: usize, to: usize) -> Option<&MessageTriple> {
        topology.edge_index(from, to).map(|i| &self.current[i])
    }

    pub fn first_message(&self, topology: &Topology, from: usize, to: usize) -> Option<&MessageTriple> {
        topology.edge_index(from, to).map(|i| &self.first[i])
    }
}

fn check_locals(topology: &Topology, locals: &[LocalTerm]) -> Result<()> {
    if locals.len() < topology.node_count() {
        return Err(Error::MissingLocalTerm(locals.len()));
    }
    Ok(())
}

/// Round one: node `i` sends its own term to each neighbour `j`, with the
/// offset term `F^i θ^{j,i}`.
pub fn init_messages(
    topology: &Topology,
    locals: &[LocalTerm],
    params: &LocalizationParams,
) -> Result<MessageBoard> {
    check_locals(topology, locals)?;
    let first: Vec<MessageTriple> = topology
        .directed_edges()
        .iter()
        .map(|&(i, j)| {
            let f = &locals[i];
            MessageTriple {
                m: f.info.clone(),
                mdot: f.info_vec.clone(),
                mddot: &f.info * params.get(j, i),
            }
        })
        .collect();
    Ok(MessageBoard {
        round: 1,
        current: first.clone(),
        first,
    })
}

/// Advances `board` to round `rounds`. Every new message is computed from
/// the previous round only.
pub fn run_rounds(
    mut board: MessageBoard,
    rounds: usize,
    topology: &Topology,
    locals: &[LocalTerm],
    params: &LocalizationParams,
) -> Result<MessageBoard> {
    if rounds < 1 {
        return Err(Error::InvalidArgument("at least one message round is required".into()));
    }
    check_locals(topology, locals)?;
    while board.round < rounds {
        let prev = &board.current;
        let next: Vec<MessageTriple> = topology
            .directed_edges()
            .iter()
            .map(|&(i, j)| {
                let mut m = locals[i].info.clone();
                let mut mdot = locals[i].info_vec.clone();
                let mut carried = DVector::zeros(mdot.len());
                for &p in topology.neighbors(i) {
                    if p == j {
                        continue;
                    }
                    let incoming = &prev[topology.edge_index(p, i).expect("neighbour edge")];
                    m += &incoming.m;
                    mdot += &incoming.mdot;
                    carried += &incoming.mddot;
                }
                let mddot = &m * params.get(j, i) + carried;
                MessageTriple { m, mdot, mddot }
            })
            .collect();
        board.current = next;
        board.round += 1;
    }
    Ok(board)
}

/// Network-wide sums as seen from node `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// `Σ_v F^v`.
    pub info: DMatrix<f64>,
    /// `Σ_v Ḟ^v`.
    pub info_vec: DVector<f64>,
    /// `Σ_v F^v θ^{r,v}`.
    pub info_offset: DVector<f64>,
}

/// Combines the latest incoming messages at `r` with its own term. Exact on
/// a tree once the round count reaches the diameter; a partial sum otherwise.
pub fn aggregate(board: &MessageBoard, topology: &Topology, r: usize, locals: &[LocalTerm]) -> Result<Aggregate> {
    check_locals(topology, locals)?;
    let mut info = locals[r].info.clone();
    let mut info_vec = locals[r].info_vec.clone();
    let mut info_offset = DVector::zeros(info_vec.len());
    for &j in topology.neighbors(r) {
        let msg = &board.current[topology.edge_index(j, r).expect("neighbour edge")];
        info += &msg.m;
        info_vec += &msg.mdot;
        info_offset += &msg.mddot;
    }
    Ok(Aggregate {
        info,
        info_vec,
        info_offset,
    })
}

/// How many times each node's term is counted in the aggregate at `r`
/// after `rounds` rounds. All ones on a tree with enough rounds; zeros mark
/// nodes out of reach and values above one mark repeats around cycles.
pub fn coverage(topology: &Topology, rounds: usize, r: usize) -> Vec<u64> {
    let n = topology.node_count();
    let unit = |v: usize| {
        let mut c = vec![0u64; n];
        c[v] = 1;
        c
    };
    let mut cur: Vec<Vec<u64>> = topology.directed_edges().iter().map(|&(i, _)| unit(i)).collect();
    for _ in 1..rounds.max(1) {
        cur = topology
            .directed_edges()
            .iter()
            .map(|&(i, j)| {
                let mut c = unit(i);
                for &p in topology.neighbors(i) {
                    if p != j {
                        let inc = &cur[topology.edge_index(p, i).unwrap()];
                        for (a, b) in c.iter_mut().zip(inc) {
                            *a += b;
                        }
                    }
                }
                c
            })
            .collect();
    }
    let mut total = unit(r);
    for &j in topology.neighbors(r) {
        for (a, b) in total.iter_mut().zip(&cur[topology.edge_index(j, r).unwrap()]) {
            *a += b;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObservationModel, PLANAR_POSITIONS};
    use crate::network::{build_topology, truth_from_positions, FreeMask};

    fn identity_terms(n: usize, d: usize) -> Vec<LocalTerm> {
        (0..n)
            .map(|_| LocalTerm {
                info: DMatrix::identity(d, d),
                info_vec: DVector::zeros(d),
            })
            .collect()
    }

    fn p(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn init_uses_receiver_offset() {
        let t = build_topology(2, &[(0, 1)]).unwrap();
        let truth = truth_from_positions(&t, FreeMask::planar(), &[p(1.0, 2.0), p(4.0, -1.0)]).unwrap();
        let board = init_messages(&t, &identity_terms(2, 4), &truth).unwrap();
        let msg = board.message(&t, 0, 1).unwrap();
        assert_eq!(msg.mddot, truth.get(1, 0));

        let zero = LocalizationParams::zeros(&t, FreeMask::planar());
        let board = init_messages(&t, &identity_terms(2, 4), &zero).unwrap();
        assert!(board.current.iter().all(|m| m.mddot.amax() == 0.0));
    }

    #[test]
    fn position_sensor_information() {
        let obs = ObservationModel::position(4, &PLANAR_POSITIONS, 1.0, 0.5).unwrap();
        let ObservationModel::Linear { matrix, offset, noise_cov } = obs else {
            unreachable!()
        };
        let rinv = noise_cov.try_inverse().unwrap();
        let term = LocalTerm::from_linear(&matrix, &rinv, &DVector::zeros(2), &offset);
        let mut expected = DMatrix::zeros(4, 4);
        expected[(0, 0)] = 4.0;
        expected[(2, 2)] = 4.0;
        assert_eq!(term.info, expected);
    }

    #[test]
    fn missing_terms_and_zero_rounds() {
        let t = build_topology(3, &[(0, 1), (1, 2)]).unwrap();
        let zero = LocalizationParams::zeros(&t, FreeMask::planar());
        assert!(matches!(
            init_messages(&t, &identity_terms(2, 4), &zero),
            Err(Error::MissingLocalTerm(2))
        ));
        let board = init_messages(&t, &identity_terms(3, 4), &zero).unwrap();
        assert!(run_rounds(board, 0, &t, &identity_terms(3, 4), &zero).is_err());
    }

    #[test]
    fn chain_of_three() {
        let t = build_topology(3, &[(0, 1), (1, 2)]).unwrap();
        let pos = [p(0.0, 0.0), p(2.0, 1.0), p(5.0, -3.0)];
        let truth = truth_from_positions(&t, FreeMask::planar(), &pos).unwrap();
        let locals = identity_terms(3, 4);
        let board = init_messages(&t, &locals, &truth).unwrap();
        let board = run_rounds(board, 2, &t, &locals, &truth).unwrap();
        let m = board.message(&t, 1, 0).unwrap();
        assert_eq!(m.m, DMatrix::identity(4, 4) * 2.0);
        // Leaf messages never grow.
        assert_eq!(board.message(&t, 0, 1).unwrap().m, DMatrix::identity(4, 4));
        // θ^{0,1} + θ^{0,2}, with θ^{0,2} reached through node 1.
        let expected = truth.get(0, 1) + (truth.get(0, 1) + truth.get(1, 2));
        assert!((&m.mddot - expected).amax() < 1e-15);

        let agg = aggregate(&board, &t, 0, &locals).unwrap();
        assert_eq!(agg.info, DMatrix::identity(4, 4) * 3.0);
    }

    #[test]
    fn single_node_aggregate() {
        let t = build_topology(1, &[]).unwrap();
        let zero = LocalizationParams::zeros(&t, FreeMask::planar());
        let locals = vec![LocalTerm {
            info: DMatrix::identity(4, 4) * 3.0,
            info_vec: DVector::from_element(4, 1.5),
        }];
        let board = init_messages(&t, &locals, &zero).unwrap();
        let board = run_rounds(board, 3, &t, &locals, &zero).unwrap();
        let agg = aggregate(&board, &t, 0, &locals).unwrap();
        assert_eq!(agg.info, locals[0].info);
        assert_eq!(agg.info_vec, locals[0].info_vec);
        assert_eq!(agg.info_offset, DVector::zeros(4));
    }

    #[test]
    fn first_round_is_retained() {
        let t = build_topology(3, &[(0, 1), (1, 2)]).unwrap();
        let zero = LocalizationParams::zeros(&t, FreeMask::planar());
        let locals = identity_terms(3, 4);
        let board = init_messages(&t, &locals, &zero).unwrap();
        let board = run_rounds(board, 4, &t, &locals, &zero).unwrap();
        assert_eq!(board.round(), 4);
        assert_eq!(board.first_message(&t, 1, 0).unwrap().m, DMatrix::identity(4, 4));
        assert_eq!(board.message(&t, 1, 0).unwrap().m, DMatrix::identity(4, 4) * 2.0);
    }

    #[test]
    fn coverage_on_tree_and_cycle() {
        let t = build_topology(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(coverage(&t, 1, 0), vec![1, 1, 0, 0]);
        assert_eq!(coverage(&t, 3, 0), vec![1, 1, 1, 1]);
        assert_eq!(coverage(&t, 6, 0), vec![1, 1, 1, 1]);
        let square = build_topology(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(coverage(&square, 1, 0), vec![1, 1, 0, 1]);
        assert_eq!(coverage(&square, 2, 0), vec![1, 1, 2, 1]);
    }
}
