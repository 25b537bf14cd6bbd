//! Raising the prices reachable from one Δ-component until its surplus hits a
//! target or some other component gets too negative.

use num_traits::{One, Signed, Zero};

use crate::error::{invariant, Result};
use crate::graph::{
    abundant_mask, active_set, bang_per_buck, equality_mask, Components, Node, ResidualNetwork,
};
use crate::instance::MarketInstance;
use crate::rational::{int, Rational};
use crate::state::MarketState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialPriceStop {
    /// The surplus of the raised component reached the target.
    Target,
    /// The given component hit `-s_H / (2n²)`.
    Barrier(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialPriceRun {
    pub prices: Vec<Rational>,
    pub refunds: Vec<Rational>,
    pub iterations: usize,
    pub stop: SpecialPriceStop,
    /// New equality edges from an inactive buyer to an active good.
    pub reverse_direction_edges: usize,
    /// Equality edges (never abundant ones) that disappeared.
    pub lost_equality_edges: usize,
}

impl SpecialPriceRun {
    pub fn surplus(&self, inst: &MarketInstance, comps: &Components, h: usize) -> Rational {
        comps.list[h].surplus(inst, &self.prices, &self.refunds)
    }
}

/// Raises prices on everything reachable from component `h` in `N_Δ(p̂)`.
///
/// Spending stays fixed. Active buyers reaching `α = 1` with cash left get a
/// committed refund, clamped so that neither loop guard is overshot.
pub fn special_price(
    inst: &MarketInstance,
    market: &MarketState,
    delta: &Rational,
    comps: &Components,
    h: usize,
    target: &Rational,
) -> Result<SpecialPriceRun> {
    invariant!(!target.is_negative(), "negative special-price target");
    let nb = inst.num_buyers();
    let n = inst.num_nodes();
    let two_n2 = int(2 * (n * n) as i64);
    let one = Rational::one();
    let abundant = abundant_mask(inst, market, delta);
    let spent: Vec<Rational> = (0..nb).map(|i| market.spent(inst, i)).collect();
    let comp_h = &comps.list[h];
    let roots = comp_h.nodes();

    let mut p = market.prices.clone();
    let mut r = market.refunds.clone();
    let cash = |r: &[Rational], i: usize| inst.budget(i) - &r[i] - &spent[i];
    let surplus = |p: &[Rational], r: &[Rational], c: usize| comps.list[c].surplus(inst, p, r);

    let mut iterations = 0;
    let mut reverse = 0;
    let mut lost = 0;
    let stop = loop {
        let s_h = surplus(&p, &r, h);
        if s_h <= *target {
            break SpecialPriceStop::Target;
        }
        let barrier = -&s_h / &two_n2;
        if let Some(j) = (0..comps.len()).find(|&c| surplus(&p, &r, c) <= barrier) {
            break SpecialPriceStop::Barrier(j);
        }
        iterations += 1;
        invariant!(
            iterations <= n + nb,
            "price raising exceeded {} iterations",
            n + nb
        );

        let old_equality = equality_mask(inst, &p);
        let net = ResidualNetwork {
            forward: old_equality.clone(),
            backward: abundant.clone(),
        };
        let active = active_set(inst, &net, &roots);
        let alpha: Vec<Option<Rational>> = (0..nb)
            .map(|i| active.buyers[i].then(|| bang_per_buck(inst, &p, i)))
            .collect();

        let mut q: Option<Rational> = None;
        let mut offer = |cand: Rational| {
            if q.as_ref().is_none_or(|cur| cand < *cur) {
                q = Some(cand);
            }
        };
        for i in active.active_buyers() {
            let a = alpha[i].as_ref().expect("active buyer");
            for &k in inst.buyer_edges(i) {
                let e = inst.edge(k);
                if !active.goods[e.good] {
                    offer(a * &p[e.good] / &e.utility);
                }
            }
            if cash(&r, i) > Rational::zero() && *a >= one {
                offer(a.clone());
            }
        }
        let e_h = comp_h.budget(inst, &r);
        let p_h = comp_h.price(&p);
        offer((&e_h - target) / &p_h);
        for (c, comp) in comps.list.iter().enumerate() {
            if c == h {
                continue;
            }
            let mut active_sum = Rational::zero();
            let mut inactive_sum = Rational::zero();
            for &j in &comp.goods {
                if active.goods[j] {
                    active_sum += &p[j];
                } else {
                    inactive_sum += &p[j];
                }
            }
            let c_j = comp.budget(inst, &r) - inactive_sum;
            offer((c_j + &e_h / &two_n2) / (active_sum + &p_h / &two_n2));
        }
        let q = q.expect("the target event is always finite");
        invariant!(q >= one, "price multiplier below one");

        for j in active.active_goods() {
            p[j] = &p[j] * &q;
        }
        let new_equality = equality_mask(inst, &p);
        for k in 0..inst.num_edges() {
            if old_equality[k] && !new_equality[k] {
                invariant!(!abundant[k], "abundant edge {} left the equality graph", k);
                lost += 1;
            }
            let e = inst.edge(k);
            if new_equality[k]
                && !old_equality[k]
                && !active.buyers[e.buyer]
                && active.goods[e.good]
            {
                reverse += 1;
            }
        }
        invariant!(
            surplus(&p, &r, h) <= s_h,
            "raised component surplus increased"
        );

        for i in active.active_buyers() {
            let c = cash(&r, i);
            if c <= Rational::zero() || bang_per_buck(inst, &p, i) != one {
                continue;
            }
            let s_h = surplus(&p, &r, h);
            let slack = if comps.of(Node::Buyer(i)) == h {
                // Lowering s_H moves the barrier up; keep every other
                // component on or above it.
                let worst = (0..comps.len())
                    .filter(|&c| c != h)
                    .map(|c| surplus(&p, &r, c))
                    .min();
                let to_target = &s_h - target;
                match worst {
                    Some(w) => {
                        let to_barrier = &s_h + &two_n2 * w;
                        if to_barrier < to_target {
                            to_barrier
                        } else {
                            to_target
                        }
                    }
                    None => to_target,
                }
            } else {
                surplus(&p, &r, comps.of(Node::Buyer(i))) + &s_h / &two_n2
            };
            let amount = if c < slack { c } else { slack };
            invariant!(
                amount >= Rational::zero(),
                "negative commitment at buyer {}",
                inst.buyer_id(i)
            );
            r[i] += amount;
        }
    };
    Ok(SpecialPriceRun {
        prices: p,
        refunds: r,
        iterations,
        stop,
        reverse_direction_edges: reverse,
        lost_equality_edges: lost,
    })
}
