//! Bang-per-buck, equality graphs, residual networks and Δ-components.

use std::collections::VecDeque;

use num_traits::Signed;
use petgraph::unionfind::UnionFind;
use serde::Serialize;

use crate::instance::MarketInstance;
use crate::rational::{int, Rational};
use crate::state::MarketState;

/// A market participant. Buyers sort before goods, each side by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Node {
    Buyer(usize),
    Good(usize),
}

impl Node {
    pub fn id<'a>(&self, inst: &'a MarketInstance) -> &'a str {
        match *self {
            Node::Buyer(i) => inst.buyer_id(i),
            Node::Good(j) => inst.good_id(j),
        }
    }
}

/// `max_j U_ij / p_j` over the goods buyer `i` values.
pub fn bang_per_buck(inst: &MarketInstance, prices: &[Rational], buyer: usize) -> Rational {
    inst.buyer_edges(buyer)
        .iter()
        .map(|&k| {
            let e = inst.edge(k);
            &e.utility / &prices[e.good]
        })
        .max()
        .expect("validated buyers have edges")
}

pub fn alphas(inst: &MarketInstance, prices: &[Rational]) -> Vec<Rational> {
    (0..inst.num_buyers())
        .map(|i| bang_per_buck(inst, prices, i))
        .collect()
}

/// Per-edge flag: does the edge attain its buyer's bang-per-buck?
pub fn equality_mask(inst: &MarketInstance, prices: &[Rational]) -> Vec<bool> {
    let alpha = alphas(inst, prices);
    inst.edges()
        .iter()
        .map(|e| &e.utility / &prices[e.good] == alpha[e.buyer])
        .collect()
}

/// `E(p)` as `(buyer, good)` pairs in edge order.
pub fn equality_graph(inst: &MarketInstance, prices: &[Rational]) -> Vec<(usize, usize)> {
    equality_mask(inst, prices)
        .into_iter()
        .enumerate()
        .filter(|&(_, eq)| eq)
        .map(|(k, _)| (inst.edge(k).buyer, inst.edge(k).good))
        .collect()
}

/// `3 n Δ`.
pub fn abundance_threshold(inst: &MarketInstance, delta: &Rational) -> Rational {
    int(3 * inst.num_nodes() as i64) * delta
}

pub fn abundant_mask(inst: &MarketInstance, state: &MarketState, delta: &Rational) -> Vec<bool> {
    state.edges_at_least(&abundance_threshold(inst, delta))
}

/// Forward arcs buyer→good, backward arcs good→buyer, both keyed by edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualNetwork {
    pub forward: Vec<bool>,
    pub backward: Vec<bool>,
}

impl ResidualNetwork {
    pub fn arc_count(&self) -> usize {
        self.forward.iter().filter(|&&f| f).count() + self.backward.iter().filter(|&&b| b).count()
    }
}

/// Forward arcs on `E(p)`, backward arcs where `x_ij > 0`.
pub fn residual_network(inst: &MarketInstance, state: &MarketState) -> ResidualNetwork {
    ResidualNetwork {
        forward: equality_mask(inst, &state.prices),
        backward: state.spending.iter().map(Signed::is_positive).collect(),
    }
}

/// Forward arcs on `E(p)`, backward arcs where `x_ij >= 3nΔ`.
pub fn delta_residual_network(
    inst: &MarketInstance,
    state: &MarketState,
    delta: &Rational,
) -> ResidualNetwork {
    ResidualNetwork {
        forward: equality_mask(inst, &state.prices),
        backward: abundant_mask(inst, state, delta),
    }
}

/// One arc of a residual path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub edge: usize,
    pub forward: bool,
}

/// Nodes reachable from a root set, with the BFS predecessor tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    pub buyers: Vec<bool>,
    pub goods: Vec<bool>,
    buyer_pred: Vec<Option<usize>>,
    good_pred: Vec<Option<usize>>,
}

impl ActiveSet {
    pub fn contains(&self, node: Node) -> bool {
        match node {
            Node::Buyer(i) => self.buyers[i],
            Node::Good(j) => self.goods[j],
        }
    }

    pub fn nodes(&self) -> Vec<Node> {
        let buyers = (0..self.buyers.len())
            .filter(|&i| self.buyers[i])
            .map(Node::Buyer);
        let goods = (0..self.goods.len())
            .filter(|&j| self.goods[j])
            .map(Node::Good);
        buyers.chain(goods).collect()
    }

    pub fn active_goods(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.goods.len()).filter(|&j| self.goods[j])
    }

    pub fn active_buyers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.buyers.len()).filter(|&i| self.buyers[i])
    }

    /// BFS-tree path from a root to `node`, or `None` if `node` is inactive.
    pub fn path_to(&self, inst: &MarketInstance, node: Node) -> Option<Vec<Arc>> {
        if !self.contains(node) {
            return None;
        }
        let mut arcs = Vec::new();
        let mut cur = node;
        loop {
            match cur {
                Node::Buyer(i) => match self.buyer_pred[i] {
                    None => break,
                    Some(k) => {
                        arcs.push(Arc {
                            edge: k,
                            forward: false,
                        });
                        cur = Node::Good(inst.edge(k).good);
                    }
                },
                Node::Good(j) => match self.good_pred[j] {
                    None => break,
                    Some(k) => {
                        arcs.push(Arc {
                            edge: k,
                            forward: true,
                        });
                        cur = Node::Buyer(inst.edge(k).buyer);
                    }
                },
            }
        }
        arcs.reverse();
        Some(arcs)
    }
}

/// Breadth-first reachability from `roots` in canonical order.
pub fn active_set(inst: &MarketInstance, network: &ResidualNetwork, roots: &[Node]) -> ActiveSet {
    let mut set = ActiveSet {
        buyers: vec![false; inst.num_buyers()],
        goods: vec![false; inst.num_goods()],
        buyer_pred: vec![None; inst.num_buyers()],
        good_pred: vec![None; inst.num_goods()],
    };
    let mut sorted = roots.to_vec();
    sorted.sort_unstable();
    let mut queue = VecDeque::new();
    for node in sorted {
        if !set.contains(node) {
            mark(&mut set, node);
            queue.push_back(node);
        }
    }
    while let Some(node) = queue.pop_front() {
        match node {
            Node::Buyer(i) => {
                for &k in inst.buyer_edges(i) {
                    let j = inst.edge(k).good;
                    if network.forward[k] && !set.goods[j] {
                        set.goods[j] = true;
                        set.good_pred[j] = Some(k);
                        queue.push_back(Node::Good(j));
                    }
                }
            }
            Node::Good(j) => {
                for &k in inst.good_edges(j) {
                    let i = inst.edge(k).buyer;
                    if network.backward[k] && !set.buyers[i] {
                        set.buyers[i] = true;
                        set.buyer_pred[i] = Some(k);
                        queue.push_back(Node::Buyer(i));
                    }
                }
            }
        }
    }
    set
}

fn mark(set: &mut ActiveSet, node: Node) {
    match node {
        Node::Buyer(i) => set.buyers[i] = true,
        Node::Good(j) => set.goods[j] = true,
    }
}

/// A connected component of a subgraph of the instance's edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub buyers: Vec<usize>,
    pub goods: Vec<usize>,
    pub edges: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.buyers.len() + self.goods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_singleton(&self) -> bool {
        self.len() == 1
    }

    pub fn singleton_buyer(&self) -> Option<usize> {
        (self.is_singleton() && self.buyers.len() == 1).then(|| self.buyers[0])
    }

    pub fn singleton_good(&self) -> Option<usize> {
        (self.is_singleton() && self.goods.len() == 1).then(|| self.goods[0])
    }

    /// `v(H)`: smallest good, if any.
    pub fn root_good(&self) -> Option<usize> {
        self.goods.first().copied()
    }

    /// `i(H)`: smallest buyer; the lone good for a singleton good.
    pub fn buyer_root(&self) -> Node {
        match self.buyers.first() {
            Some(&i) => Node::Buyer(i),
            None => Node::Good(self.goods[0]),
        }
    }

    /// `j(H)`: smallest good; the lone buyer for a singleton buyer.
    pub fn good_root(&self) -> Node {
        match self.goods.first() {
            Some(&j) => Node::Good(j),
            None => Node::Buyer(self.buyers[0]),
        }
    }

    pub fn nodes(&self) -> Vec<Node> {
        self.buyers
            .iter()
            .map(|&i| Node::Buyer(i))
            .chain(self.goods.iter().map(|&j| Node::Good(j)))
            .collect()
    }

    /// Effective budget of the buyers.
    pub fn budget(&self, inst: &MarketInstance, refunds: &[Rational]) -> Rational {
        self.buyers
            .iter()
            .map(|&i| inst.budget(i) - &refunds[i])
            .sum()
    }

    pub fn price(&self, prices: &[Rational]) -> Rational {
        self.goods.iter().map(|&j| &prices[j]).sum()
    }

    /// `s(p, r, H) = ē_{H∩B} - p_{H∩G}`.
    pub fn surplus(
        &self,
        inst: &MarketInstance,
        prices: &[Rational],
        refunds: &[Rational],
    ) -> Rational {
        self.budget(inst, refunds) - self.price(prices)
    }
}

/// A partition of all nodes into components, ordered by smallest node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub list: Vec<Component>,
    pub buyer_component: Vec<usize>,
    pub good_component: Vec<usize>,
}

impl Components {
    pub fn of(&self, node: Node) -> usize {
        match node {
            Node::Buyer(i) => self.buyer_component[i],
            Node::Good(j) => self.good_component[j],
        }
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }
}

/// Connected components of `(B ∪ G, {edges with mask set})`.
pub fn components_of(inst: &MarketInstance, mask: &[bool]) -> Components {
    let nb = inst.num_buyers();
    let mut uf = UnionFind::<usize>::new(inst.num_nodes());
    for (k, e) in inst.edges().iter().enumerate() {
        if mask[k] {
            uf.union(e.buyer, nb + e.good);
        }
    }
    let mut rep_to_comp: Vec<Option<usize>> = vec![None; inst.num_nodes()];
    let mut list: Vec<Component> = Vec::new();
    let mut buyer_component = vec![0; nb];
    let mut good_component = vec![0; inst.num_goods()];
    for v in 0..inst.num_nodes() {
        let rep = uf.find(v);
        let c = *rep_to_comp[rep].get_or_insert_with(|| {
            list.push(Component {
                buyers: Vec::new(),
                goods: Vec::new(),
                edges: Vec::new(),
            });
            list.len() - 1
        });
        if v < nb {
            list[c].buyers.push(v);
            buyer_component[v] = c;
        } else {
            list[c].goods.push(v - nb);
            good_component[v - nb] = c;
        }
    }
    for (k, e) in inst.edges().iter().enumerate() {
        if mask[k] {
            list[buyer_component[e.buyer]].edges.push(k);
        }
    }
    Components {
        list,
        buyer_component,
        good_component,
    }
}

/// Δ-components: components of the graph of edges with `x_ij >= 3nΔ`.
pub fn components_of_abundant_graph(
    inst: &MarketInstance,
    state: &MarketState,
    delta: &Rational,
) -> Components {
    components_of(inst, &abundant_mask(inst, state, delta))
}

/// True when the masked edges form a forest.
pub fn is_forest(inst: &MarketInstance, mask: &[bool]) -> bool {
    let nb = inst.num_buyers();
    let mut uf = UnionFind::<usize>::new(inst.num_nodes());
    inst.edges()
        .iter()
        .enumerate()
        .filter(|&(k, _)| mask[k])
        .all(|(_, e)| uf.union(e.buyer, nb + e.good))
}

pub(crate) fn mask_from_edges(inst: &MarketInstance, edges: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; inst.num_edges()];
    for &k in edges {
        mask[k] = true;
    }
    mask
}
