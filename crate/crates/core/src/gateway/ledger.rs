use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Purpose;

/// Currency per 1k tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

impl Price {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        (prompt_tokens as f64 * self.input_per_1k + completion_tokens as f64 * self.output_per_1k)
            / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub key: String,
    pub purpose: Purpose,
    pub model: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// false when the model has no price; cost is then zero
    pub priced: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
}

impl TokenTotals {
    fn add(&mut self, e: &CostEntry) {
        self.calls += 1;
        self.prompt_tokens += e.prompt_tokens;
        self.completion_tokens += e.completion_tokens;
        self.cost += e.cost;
    }
}

/// Serialized form of the ledger (`costs.json`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub calls: u64,
    pub total_cost: f64,
    pub prices: BTreeMap<String, Price>,
    pub per_purpose: BTreeMap<String, TokenTotals>,
    pub per_model: BTreeMap<String, TokenTotals>,
    pub entries: Vec<CostEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct CostLedger {
    prices: BTreeMap<String, Price>,
    entries: Vec<CostEntry>,
}

impl CostLedger {
    pub fn new(prices: BTreeMap<String, Price>) -> Self {
        Self {
            prices,
            entries: Vec::new(),
        }
    }

    /// Continue a ledger persisted by an earlier command on the same run.
    pub fn resume(prices: BTreeMap<String, Price>, previous: &CostReport) -> Self {
        Self {
            prices,
            entries: previous.entries.clone(),
        }
    }

    pub fn record(
        &mut self,
        key: &str,
        purpose: Purpose,
        model: &str,
        prompt: u64,
        completion: u64,
    ) {
        let price = self.prices.get(model);
        self.entries.push(CostEntry {
            key: key.to_string(),
            purpose,
            model: model.to_string(),
            prompt_tokens: prompt,
            completion_tokens: completion,
            priced: price.is_some(),
            cost: price.map_or(0.0, |p| p.cost(prompt, completion)),
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by key so sums do not depend on completion order.
    pub fn report(&self) -> CostReport {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| {
            (a.key.as_str(), a.purpose, a.model.as_str()).cmp(&(
                b.key.as_str(),
                b.purpose,
                b.model.as_str(),
            ))
        });
        let mut per_purpose: BTreeMap<String, TokenTotals> = BTreeMap::new();
        let mut per_model: BTreeMap<String, TokenTotals> = BTreeMap::new();
        let mut total = 0.0;
        for e in &entries {
            per_purpose
                .entry(e.purpose.as_str().to_string())
                .or_default()
                .add(e);
            per_model.entry(e.model.clone()).or_default().add(e);
            total += e.cost;
        }
        CostReport {
            calls: entries.len() as u64,
            total_cost: total,
            prices: self.prices.clone(),
            per_purpose,
            per_model,
            entries,
        }
    }
}
