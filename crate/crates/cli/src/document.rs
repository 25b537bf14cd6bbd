//! Output documents: equilibria with exact rational strings.

use anyhow::{anyhow, bail, Context, Result};
use arctic_core::oracle::{Certificate, Equilibrium};
use arctic_core::perturb::PerturbationConfig;
use arctic_core::rational::{self, Rational};
use arctic_core::solve::Solved;
use arctic_core::trace::Counters;
use arctic_core::{MarketInstance, MarketState};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumDoc {
    pub prices: Map<String, Value>,
    pub spending: Vec<(String, String, String)>,
    pub refunds: Map<String, Value>,
    #[serde(default)]
    pub quantities: Vec<(String, String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationDoc {
    pub sigma: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDoc {
    pub equilibrium: EquilibriumDoc,
    pub stats: Counters,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputDoc {
    pub equilibrium: EquilibriumDoc,
    pub certificate: Certificate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationDoc>,
    #[serde(default)]
    pub stats: Map<String, Value>,
    /// Per-algorithm results, keyed by algorithm name.
    #[serde(default)]
    pub runs: Map<String, Value>,
}

fn sparse(inst: &MarketInstance, values: &[Rational]) -> Vec<(String, String, String)> {
    let zero = rational::int(0);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != zero)
        .map(|(k, v)| {
            let e = inst.edge(k);
            (
                inst.buyer_id(e.buyer).to_string(),
                inst.good_id(e.good).to_string(),
                rational::format(v),
            )
        })
        .collect()
}

pub fn equilibrium_doc(inst: &MarketInstance, eq: &Equilibrium) -> EquilibriumDoc {
    let s = &eq.state;
    EquilibriumDoc {
        prices: (0..inst.num_goods())
            .map(|j| {
                (
                    inst.good_id(j).to_string(),
                    Value::from(rational::format(&s.prices[j])),
                )
            })
            .collect(),
        spending: sparse(inst, &s.spending),
        refunds: (0..inst.num_buyers())
            .map(|i| {
                (
                    inst.buyer_id(i).to_string(),
                    Value::from(rational::format(&s.refunds[i])),
                )
            })
            .collect(),
        quantities: sparse(inst, &eq.quantities),
    }
}

pub fn perturbation_doc(cfg: &PerturbationConfig, attempts: Option<u32>) -> PerturbationDoc {
    PerturbationDoc {
        sigma: rational::format(&cfg.magnitude),
        seed: cfg.seed,
        attempts,
    }
}

pub fn output_doc(solved: &Solved) -> OutputDoc {
    let inst = &solved.instance;
    let mut runs = Map::new();
    let mut stats = Map::new();
    let mut chosen = None;
    let named = [
        (
            "weak",
            solved
                .weak
                .as_ref()
                .map(|r| (&r.equilibrium, &r.trace.counters)),
        ),
        (
            "strong",
            solved
                .strong
                .as_ref()
                .map(|r| (&r.equilibrium, &r.trace.counters)),
        ),
    ];
    for (name, run) in named {
        let Some((eq, counters)) = run else { continue };
        let doc = RunDoc {
            equilibrium: equilibrium_doc(inst, eq),
            stats: counters.clone(),
        };
        stats.insert(
            name.into(),
            serde_json::to_value(counters).expect("counters serialize"),
        );
        runs.insert(
            name.into(),
            serde_json::to_value(doc).expect("run serializes"),
        );
        chosen.get_or_insert(eq);
    }
    let eq = chosen.expect("at least one algorithm ran");
    OutputDoc {
        equilibrium: equilibrium_doc(inst, eq),
        certificate: eq.certificate.clone(),
        perturbation: Some(perturbation_doc(
            &solved.perturbation,
            Some(solved.attempts),
        )),
        stats,
        runs,
    }
}

fn parse_value(v: &Value) -> Result<Rational> {
    let text = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => bail!("expected a rational, found {other}"),
    };
    rational::parse(&text).map_err(|e| anyhow!("bad rational {text:?}: {e}"))
}

/// Rebuilds a state of `inst` from an equilibrium section.
pub fn read_state(inst: &MarketInstance, doc: &EquilibriumDoc) -> Result<MarketState> {
    let mut prices = Vec::with_capacity(inst.num_goods());
    for j in 0..inst.num_goods() {
        let id = inst.good_id(j);
        let v = doc
            .prices
            .get(id)
            .with_context(|| format!("no price for good {id}"))?;
        prices.push(parse_value(v)?);
    }
    let mut state = MarketState::new(inst, prices);
    for (i, r) in state.refunds.iter_mut().enumerate() {
        if let Some(v) = doc.refunds.get(inst.buyer_id(i)) {
            *r = parse_value(v)?;
        }
    }
    let buyer = |id: &str| (0..inst.num_buyers()).find(|&i| inst.buyer_id(i) == id);
    let good = |id: &str| (0..inst.num_goods()).find(|&j| inst.good_id(j) == id);
    for (b, g, x) in &doc.spending {
        let (Some(i), Some(j)) = (buyer(b), good(g)) else {
            bail!("spending on unknown pair ({b}, {g})");
        };
        let k = inst
            .edge_index(i, j)
            .with_context(|| format!("spending on ({b}, {g}), which has no utility"))?;
        state.spending[k] = parse_value(&Value::String(x.clone()))?;
    }
    Ok(state)
}
