//! Prices, spending and refunds.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::instance::MarketInstance;
use crate::rational::{self, Rational};

/// `(p, x, r)`. Spending is stored per edge of the owning instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MarketState {
    pub prices: Vec<Rational>,
    pub spending: Vec<Rational>,
    pub refunds: Vec<Rational>,
}

impl MarketState {
    pub fn new(inst: &MarketInstance, prices: Vec<Rational>) -> Self {
        assert_eq!(prices.len(), inst.num_goods());
        Self {
            prices,
            spending: vec![Rational::zero(); inst.num_edges()],
            refunds: vec![Rational::zero(); inst.num_buyers()],
        }
    }

    pub fn spent(&self, inst: &MarketInstance, buyer: usize) -> Rational {
        inst.buyer_edges(buyer)
            .iter()
            .map(|&k| &self.spending[k])
            .sum()
    }

    pub fn sold(&self, inst: &MarketInstance, good: usize) -> Rational {
        inst.good_edges(good)
            .iter()
            .map(|&k| &self.spending[k])
            .sum()
    }

    /// Effective budget `e_i - r_i`.
    pub fn effective_budget(&self, inst: &MarketInstance, buyer: usize) -> Rational {
        inst.budget(buyer) - &self.refunds[buyer]
    }

    /// Effective cash `e_i - r_i - sum_j x_ij`.
    pub fn cash(&self, inst: &MarketInstance, buyer: usize) -> Rational {
        self.effective_budget(inst, buyer) - self.spent(inst, buyer)
    }

    /// Backorder `sum_i x_ij - p_j`.
    pub fn backorder(&self, inst: &MarketInstance, good: usize) -> Rational {
        self.sold(inst, good) - &self.prices[good]
    }

    pub fn cash_vec(&self, inst: &MarketInstance) -> Vec<Rational> {
        (0..inst.num_buyers()).map(|i| self.cash(inst, i)).collect()
    }

    pub fn backorder_vec(&self, inst: &MarketInstance) -> Vec<Rational> {
        (0..inst.num_goods())
            .map(|j| self.backorder(inst, j))
            .collect()
    }

    /// `sum_i floor(cash_i / delta)`.
    pub fn potential(&self, inst: &MarketInstance, delta: &Rational) -> BigInt {
        (0..inst.num_buyers())
            .map(|i| rational::floor_div(&self.cash(inst, i), delta))
            .sum()
    }

    /// Edges with positive spending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.spending.len())
            .filter(|&k| self.spending[k].is_positive())
            .collect()
    }

    /// Per-edge `x_ij >= threshold`.
    pub fn edges_at_least(&self, threshold: &Rational) -> Vec<bool> {
        self.spending.iter().map(|x| x >= threshold).collect()
    }
}

/// `y_ij = x_ij / p_j` per edge.
pub fn quantities(inst: &MarketInstance, state: &MarketState) -> Vec<Rational> {
    inst.edges()
        .iter()
        .zip(&state.spending)
        .map(|(e, x)| x / &state.prices[e.good])
        .collect()
}
