//! Market instances: buyers with budgets, goods with unit supply, and sparse
//! positive utilities.

use std::collections::{HashMap, HashSet};

use num_traits::{Signed, Zero};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rational::{self, int, Rational, RationalLiteral};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstanceError {
    #[error("cannot parse instance: {0}")]
    Parse(String),
    #[error("instance has no buyers or no goods")]
    Empty,
    #[error("duplicate buyer id {0}")]
    DuplicateBuyer(String),
    #[error("duplicate good id {0}")]
    DuplicateGood(String),
    #[error("duplicate utility entry for ({0}, {1})")]
    DuplicateUtility(String, String),
    #[error("utility entry references unknown buyer {0}")]
    UnknownBuyer(String),
    #[error("utility entry references unknown good {0}")]
    UnknownGood(String),
    #[error("budget of buyer {0} must be positive")]
    NonPositiveBudget(String),
    #[error("utility of ({0}, {1}) is negative")]
    NegativeUtility(String, String),
    #[error("isolated buyer {0}")]
    IsolatedBuyer(String),
    #[error("isolated good {0}")]
    IsolatedGood(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buyer {
    pub id: String,
    pub budget: Rational,
}

/// A buyer-good pair with positive utility.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub buyer: usize,
    pub good: usize,
    pub utility: Rational,
}

/// The immutable problem statement.
///
/// Buyers and goods keep document order; edges are sorted by `(buyer, good)`.
/// Index order is the canonical tie-break order used everywhere downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketInstance {
    buyers: Vec<Buyer>,
    goods: Vec<String>,
    edges: Vec<Edge>,
    buyer_edges: Vec<Vec<usize>>,
    good_edges: Vec<Vec<usize>>,
}

impl MarketInstance {
    /// Builds and validates an instance from index triples. Zero utilities are
    /// dropped; negative ones are rejected.
    pub fn new(
        buyers: Vec<Buyer>,
        goods: Vec<String>,
        utilities: Vec<(usize, usize, Rational)>,
    ) -> Result<Self, InstanceError> {
        if buyers.is_empty() || goods.is_empty() {
            return Err(InstanceError::Empty);
        }
        let mut seen = HashSet::new();
        for b in &buyers {
            if !seen.insert(b.id.as_str()) {
                return Err(InstanceError::DuplicateBuyer(b.id.clone()));
            }
            if !b.budget.is_positive() {
                return Err(InstanceError::NonPositiveBudget(b.id.clone()));
            }
        }
        let mut seen = HashSet::new();
        for g in &goods {
            if !seen.insert(g.as_str()) {
                return Err(InstanceError::DuplicateGood(g.clone()));
            }
        }

        let mut pairs = HashSet::new();
        let mut edges = Vec::with_capacity(utilities.len());
        for (i, j, u) in utilities {
            assert!(
                i < buyers.len() && j < goods.len(),
                "utility index out of range"
            );
            if !pairs.insert((i, j)) {
                return Err(InstanceError::DuplicateUtility(
                    buyers[i].id.clone(),
                    goods[j].clone(),
                ));
            }
            if u.is_negative() {
                return Err(InstanceError::NegativeUtility(
                    buyers[i].id.clone(),
                    goods[j].clone(),
                ));
            }
            if u.is_zero() {
                continue;
            }
            edges.push(Edge {
                buyer: i,
                good: j,
                utility: u,
            });
        }
        edges.sort_by_key(|e| (e.buyer, e.good));

        let mut buyer_edges = vec![Vec::new(); buyers.len()];
        let mut good_edges = vec![Vec::new(); goods.len()];
        for (k, e) in edges.iter().enumerate() {
            buyer_edges[e.buyer].push(k);
            good_edges[e.good].push(k);
        }
        if let Some(i) = buyer_edges.iter().position(Vec::is_empty) {
            return Err(InstanceError::IsolatedBuyer(buyers[i].id.clone()));
        }
        if let Some(j) = good_edges.iter().position(Vec::is_empty) {
            return Err(InstanceError::IsolatedGood(goods[j].clone()));
        }

        Ok(Self {
            buyers,
            goods,
            edges,
            buyer_edges,
            good_edges,
        })
    }

    pub fn num_buyers(&self) -> usize {
        self.buyers.len()
    }

    pub fn num_goods(&self) -> usize {
        self.goods.len()
    }

    /// `n = |B| + |G|`.
    pub fn num_nodes(&self) -> usize {
        self.buyers.len() + self.goods.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn buyers(&self) -> &[Buyer] {
        &self.buyers
    }

    pub fn goods(&self) -> &[String] {
        &self.goods
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn budget(&self, i: usize) -> &Rational {
        &self.buyers[i].budget
    }

    pub fn buyer_id(&self, i: usize) -> &str {
        &self.buyers[i].id
    }

    pub fn good_id(&self, j: usize) -> &str {
        &self.goods[j]
    }

    /// Edge indices incident to buyer `i`, ordered by good.
    pub fn buyer_edges(&self, i: usize) -> &[usize] {
        &self.buyer_edges[i]
    }

    /// Edge indices incident to good `j`, ordered by buyer.
    pub fn good_edges(&self, j: usize) -> &[usize] {
        &self.good_edges[j]
    }

    pub fn edge_index(&self, buyer: usize, good: usize) -> Option<usize> {
        self.buyer_edges[buyer]
            .iter()
            .copied()
            .find(|&k| self.edges[k].good == good)
    }

    pub fn utility(&self, buyer: usize, good: usize) -> Rational {
        self.edge_index(buyer, good)
            .map(|k| self.edges[k].utility.clone())
            .unwrap_or_else(Rational::zero)
    }

    pub fn budgets_vec(&self) -> Vec<Rational> {
        self.buyers.iter().map(|b| b.budget.clone()).collect()
    }

    /// Same structure with utilities replaced edge by edge.
    pub(crate) fn with_utilities(&self, utilities: Vec<Rational>) -> Self {
        assert_eq!(utilities.len(), self.edges.len());
        let mut out = self.clone();
        for (e, u) in out.edges.iter_mut().zip(utilities) {
            debug_assert!(u.is_positive());
            e.utility = u;
        }
        out
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            buyers: self
                .buyers
                .iter()
                .map(|b| BuyerEntry {
                    id: b.id.clone(),
                    budget: RationalLiteral(b.budget.clone()),
                })
                .collect(),
            goods: self.goods.clone(),
            utilities: self
                .edges
                .iter()
                .map(|e| {
                    (
                        self.buyers[e.buyer].id.clone(),
                        self.goods[e.good].clone(),
                        RationalLiteral(e.utility.clone()),
                    )
                })
                .collect(),
        }
    }
}

/// On-disk instance format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub buyers: Vec<BuyerEntry>,
    pub goods: Vec<String>,
    pub utilities: Vec<(String, String, RationalLiteral)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuyerEntry {
    pub id: String,
    pub budget: RationalLiteral,
}

impl InstanceDocument {
    pub fn into_instance(self) -> Result<MarketInstance, InstanceError> {
        let buyers: Vec<Buyer> = self
            .buyers
            .into_iter()
            .map(|b| Buyer {
                id: b.id,
                budget: b.budget.0,
            })
            .collect();
        let mut buyer_index = HashMap::new();
        for (i, b) in buyers.iter().enumerate() {
            if buyer_index.insert(b.id.clone(), i).is_some() {
                return Err(InstanceError::DuplicateBuyer(b.id.clone()));
            }
        }
        let mut good_index = HashMap::new();
        for (j, g) in self.goods.iter().enumerate() {
            if good_index.insert(g.clone(), j).is_some() {
                return Err(InstanceError::DuplicateGood(g.clone()));
            }
        }
        let mut utilities = Vec::with_capacity(self.utilities.len());
        for (b, g, u) in self.utilities {
            let i = *buyer_index.get(&b).ok_or(InstanceError::UnknownBuyer(b))?;
            let j = *good_index.get(&g).ok_or(InstanceError::UnknownGood(g))?;
            utilities.push((i, j, u.0));
        }
        MarketInstance::new(buyers, self.goods, utilities)
    }
}

/// Parses and validates a JSON instance document.
pub fn load_instance(document: &str) -> Result<MarketInstance, InstanceError> {
    let doc: InstanceDocument =
        serde_json::from_str(document).map_err(|e| InstanceError::Parse(e.to_string()))?;
    doc.into_instance()
}

/// Derived constants of an instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceStats {
    pub n: usize,
    pub m: usize,
    pub u_max: Rational,
    pub e_max: Rational,
    /// `n * u_max^n`.
    pub d_bound: Rational,
    /// The same bound computed after clearing denominators: with `L` the lcm of
    /// utility denominators and `E` the lcm of budget denominators this is
    /// `E * n * (L * u_max)^n`. Equals `d_bound` on integral data.
    pub cleared_d_bound: Rational,
}

pub fn compute_stats(inst: &MarketInstance) -> InstanceStats {
    let n = inst.num_nodes();
    let u_max = inst
        .edges()
        .iter()
        .map(|e| &e.utility)
        .max()
        .cloned()
        .expect("validated instance has edges");
    let e_max = inst
        .buyers()
        .iter()
        .map(|b| &b.budget)
        .max()
        .cloned()
        .expect("validated instance has buyers");
    let n_rat = int(n as i64);
    let d_bound = &n_rat * rational::pow(&u_max, n);

    let util_lcm = rational::denominator_lcm(inst.edges().iter().map(|e| &e.utility));
    let budget_lcm = rational::denominator_lcm(inst.buyers().iter().map(|b| &b.budget));
    let cleared_u_max = &u_max * Rational::from_integer(util_lcm);
    let cleared_d_bound =
        Rational::from_integer(budget_lcm) * &n_rat * rational::pow(&cleared_u_max, n);

    InstanceStats {
        n,
        m: inst.num_edges(),
        u_max,
        e_max,
        d_bound,
        cleared_d_bound,
    }
}

/// Random integral instance: budgets and utilities uniform in `1..=max_value`.
///
/// Every buyer and every good receives at least one edge; remaining edges are
/// sampled uniformly from the unused pairs until `edges` is reached (capped at
/// `buyers * goods`).
pub fn random_instance<R: Rng>(
    rng: &mut R,
    buyers: usize,
    goods: usize,
    edges: usize,
    max_value: i64,
) -> MarketInstance {
    assert!(buyers > 0 && goods > 0 && max_value >= 1);
    let mut pairs: HashSet<(usize, usize)> = HashSet::new();
    for i in 0..buyers {
        pairs.insert((i, rng.random_range(0..goods)));
    }
    for j in 0..goods {
        if !pairs.iter().any(|&(_, g)| g == j) {
            pairs.insert((rng.random_range(0..buyers), j));
        }
    }
    let target = edges.min(buyers * goods);
    if pairs.len() < target {
        let free: Vec<(usize, usize)> = (0..buyers)
            .flat_map(|i| (0..goods).map(move |j| (i, j)))
            .filter(|p| !pairs.contains(p))
            .collect();
        let extra = (target - pairs.len()).min(free.len());
        for k in sample(rng, free.len(), extra) {
            pairs.insert(free[k]);
        }
    }
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.sort_unstable();

    let buyer_list = (0..buyers)
        .map(|i| Buyer {
            id: format!("b{}", i + 1),
            budget: int(rng.random_range(1..=max_value)),
        })
        .collect();
    let good_list = (0..goods).map(|j| format!("g{}", j + 1)).collect();
    let utilities = pairs
        .into_iter()
        .map(|(i, j)| (i, j, int(rng.random_range(1..=max_value))))
        .collect();
    MarketInstance::new(buyer_list, good_list, utilities).expect("generator output is valid")
}

/// Splits a node budget `n` into buyer and good counts (at least one each).
pub fn split_nodes(n: usize) -> (usize, usize) {
    assert!(n >= 2);
    let buyers = n / 2;
    (buyers, n - buyers)
}
