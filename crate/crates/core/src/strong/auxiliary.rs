//! The auxiliary network: forward arcs `i → j` of weight `U_ij` on every edge,
//! backward arcs `j → i` of weight `1/U_ij` on abundant edges. Path weights
//! multiply.

use num_traits::One;

use crate::error::{Result, SolverError};
use crate::graph::Node;
use crate::instance::MarketInstance;
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxNetwork {
    num_buyers: usize,
    num_nodes: usize,
    /// `(tail, head, weight)` on flattened node indices.
    arcs: Vec<(usize, usize, Rational)>,
}

impl AuxNetwork {
    pub fn new(inst: &MarketInstance, abundant: &[bool]) -> Self {
        let nb = inst.num_buyers();
        let mut arcs = Vec::with_capacity(inst.num_edges() * 2);
        for (k, e) in inst.edges().iter().enumerate() {
            arcs.push((e.buyer, nb + e.good, e.utility.clone()));
            if abundant[k] {
                arcs.push((nb + e.good, e.buyer, e.utility.recip()));
            }
        }
        Self {
            num_buyers: nb,
            num_nodes: inst.num_nodes(),
            arcs,
        }
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    fn index(&self, node: Node) -> usize {
        match node {
            Node::Buyer(i) => i,
            Node::Good(j) => self.num_buyers + j,
        }
    }

    /// One relaxation pass; returns whether anything improved.
    fn relax(&self, best: &mut [Option<Rational>]) -> bool {
        let mut improved = false;
        for (tail, head, w) in &self.arcs {
            let Some(base) = &best[*tail] else { continue };
            let cand = base * w;
            if best[*head].as_ref().is_none_or(|cur| cand > *cur) {
                best[*head] = Some(cand);
                improved = true;
            }
        }
        improved
    }

    /// `μ(from, to)`: the largest product of weights over directed paths, or
    /// `None` if `to` is unreachable.
    pub fn max_multiplier(&self, from: Node, to: Node) -> Result<Option<Rational>> {
        let mut best: Vec<Option<Rational>> = vec![None; self.num_nodes];
        best[self.index(from)] = Some(Rational::one());
        for _ in 1..self.num_nodes {
            if !self.relax(&mut best) {
                return Ok(best[self.index(to)].clone());
            }
        }
        if self.relax(&mut best) {
            return Err(SolverError::InvariantViolation(
                "auxiliary network has a cycle of weight above one".into(),
            ));
        }
        Ok(best[self.index(to)].clone())
    }

    /// Whether some directed cycle has weight product above one.
    pub fn has_improving_cycle(&self) -> bool {
        let mut best: Vec<Option<Rational>> = vec![Some(Rational::one()); self.num_nodes];
        for _ in 0..self.num_nodes {
            if !self.relax(&mut best) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::load_instance;
    use crate::rational::{frac, int};

    fn two_by_two() -> MarketInstance {
        load_instance(
            r#"{"buyers":[{"id":"b1","budget":1},{"id":"b2","budget":1}],"goods":["g1","g2"],
               "utilities":[["b1","g1",2],["b1","g2",3],["b2","g1",5],["b2","g2",7]]}"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_path_is_one() {
        let inst = two_by_two();
        let aux = AuxNetwork::new(&inst, &[false; 4]);
        assert_eq!(
            aux.max_multiplier(Node::Good(0), Node::Good(0)).unwrap(),
            Some(int(1))
        );
        assert_eq!(
            aux.max_multiplier(Node::Good(0), Node::Good(1)).unwrap(),
            None
        );
    }

    #[test]
    fn forward_backward_pair_is_neutral() {
        let inst = two_by_two();
        let aux = AuxNetwork::new(&inst, &[true, false, false, false]);
        assert!(!aux.has_improving_cycle());
        assert_eq!(
            aux.max_multiplier(Node::Good(0), Node::Good(1)).unwrap(),
            Some(frac(3, 2))
        );
    }

    #[test]
    fn detects_cycle_above_one() {
        // b1-g1 and b2-g2 abundant: g1→b1→g2→b2→g1 has 3/2 · 5/7 > 1.
        let inst = two_by_two();
        let aux = AuxNetwork::new(&inst, &[true, false, false, true]);
        assert!(aux.has_improving_cycle());
        assert!(aux.max_multiplier(Node::Good(0), Node::Good(1)).is_err());
    }
}
