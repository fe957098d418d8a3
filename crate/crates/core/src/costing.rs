//! API pricing tables, the chars/4 token heuristic, and cost comparisons.

use std::path::Path;

use serde::{Deserialize, Serialize};

/// Characters per token for estimation and character-priced tables.
pub const CHARS_PER_TOKEN: u64 = 4;

/// Published list prices from mid-2023, kept as a dated example.
pub const PRICING_2023: &str = include_str!("../data/pricing-2023.toml");

#[derive(Debug, thiserror::Error)]
pub enum CostError {
    #[error("pricing for \"{0}\" has a negative price")]
    NegativePrice(String),
    #[error("pricing for \"{0}\" is zero; ratio is undefined")]
    ZeroDenominator(String),
    #[error("no pricing entry for provider \"{0}\"")]
    UnknownProvider(String),
    #[error("invalid pricing file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to read pricing file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceUnit {
    PerThousandTokens,
    PerThousandCharacters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingTable {
    #[serde(rename = "provider")]
    pub provider_name: String,
    pub unit: PriceUnit,
    pub input_price: f64,
    pub output_price: f64,
}

impl PricingTable {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.input_price >= 0.0 && self.output_price >= 0.0) {
            return Err(CostError::NegativePrice(self.provider_name.clone()));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        match self.unit {
            PriceUnit::PerThousandTokens => 1.0,
            PriceUnit::PerThousandCharacters => CHARS_PER_TOKEN as f64,
        }
    }

    /// (input, output) price per 1K tokens.
    pub fn per_thousand_tokens(&self) -> (f64, f64) {
        (self.input_price * self.scale(), self.output_price * self.scale())
    }

    fn mean_price(&self) -> f64 {
        let (i, o) = self.per_thousand_tokens();
        (i + o) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostEstimate {
    pub input_cost: f64,
    pub output_cost: f64,
    pub total: f64,
}

impl std::ops::Add for CostEstimate {
    type Output = CostEstimate;

    fn add(self, rhs: Self) -> Self {
        CostEstimate {
            input_cost: self.input_cost + rhs.input_cost,
            output_cost: self.output_cost + rhs.output_cost,
            total: self.total + rhs.total,
        }
    }
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens_from_chars(char_count: u64) -> u64 {
    char_count.div_ceil(CHARS_PER_TOKEN)
}

pub fn estimate_tokens(text: &str) -> u64 {
    estimate_tokens_from_chars(text.chars().count() as u64)
}

pub fn estimate_cost(p: &PricingTable, input_tokens: u64, output_tokens: u64) -> CostEstimate {
    let (in_price, out_price) = p.per_thousand_tokens();
    let input_cost = input_tokens as f64 / 1000.0 * in_price;
    let output_cost = output_tokens as f64 / 1000.0 * out_price;
    CostEstimate {
        input_cost,
        output_cost,
        total: input_cost + output_cost,
    }
}

/// Ratio of mean per-1K-token price (input and output averaged) of `a` over `b`.
pub fn cost_ratio(a: &PricingTable, b: &PricingTable) -> Result<f64, CostError> {
    let denom = b.mean_price();
    if denom <= 0.0 {
        return Err(CostError::ZeroDenominator(b.provider_name.clone()));
    }
    Ok(a.mean_price() / denom)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PricingBook {
    #[serde(default)]
    pub pricing: Vec<PricingTable>,
}

impl PricingBook {
    pub fn parse(text: &str) -> Result<Self, CostError> {
        let book: PricingBook = toml::from_str(text)?;
        book.pricing.iter().try_for_each(PricingTable::validate)?;
        Ok(book)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CostError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn bundled_2023() -> Self {
        Self::parse(PRICING_2023).expect("bundled pricing is valid")
    }

    pub fn get(&self, provider: &str) -> Result<&PricingTable, CostError> {
        self.pricing
            .iter()
            .find(|p| p.provider_name == provider)
            .ok_or_else(|| CostError::UnknownProvider(provider.to_owned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(name: &str, unit: PriceUnit, i: f64, o: f64) -> PricingTable {
        PricingTable {
            provider_name: name.into(),
            unit,
            input_price: i,
            output_price: o,
        }
    }

    #[test]
    fn token_heuristic() {
        assert_eq!(estimate_tokens_from_chars(4000), 1000);
        assert_eq!(estimate_tokens_from_chars(0), 0);
        assert_eq!(estimate_tokens_from_chars(5), 2);
        assert_eq!(estimate_tokens("héllo"), 2);
    }

    #[test]
    fn gpt4_and_palm_costs() {
        let book = PricingBook::bundled_2023();
        let gpt4 = book.get("gpt-4").unwrap();
        let c = estimate_cost(gpt4, 1000, 1000);
        assert!((c.total - 0.09).abs() < 1e-12);
        let palm = book.get("palm-2").unwrap();
        assert_eq!(palm.per_thousand_tokens(), (0.004, 0.004));
        assert_eq!(estimate_cost(palm, 0, 0), CostEstimate::default());
    }

    #[test]
    fn ratios() {
        let book = PricingBook::bundled_2023();
        let gpt4 = book.get("gpt-4").unwrap();
        let gpt35 = book.get("gpt-3.5").unwrap();
        let palm = book.get("palm-2").unwrap();
        assert!((cost_ratio(gpt4, gpt35).unwrap() - 0.045 / 0.00175).abs() < 1e-9);
        assert!((cost_ratio(palm, gpt35).unwrap() - 0.004 / 0.00175).abs() < 1e-9);
        assert_eq!(cost_ratio(gpt4, gpt4).unwrap(), 1.0);
        let free = table("free", PriceUnit::PerThousandTokens, 0.0, 0.0);
        assert!(matches!(cost_ratio(gpt4, &free), Err(CostError::ZeroDenominator(_))));
    }

    #[test]
    fn negative_price_rejected() {
        let text =
            "[[pricing]]\nprovider = \"x\"\nunit = \"per_thousand_tokens\"\ninput_price = -1.0\noutput_price = 0.0\n";
        assert!(matches!(PricingBook::parse(text), Err(CostError::NegativePrice(_))));
    }

    #[test]
    fn linear_and_ratio_inverse() {
        use proptest::prelude::*;
        proptest!(|(i in 0u64..1_000_000, o in 0u64..1_000_000,
                    a in 0.0001f64..1.0, b in 0.0001f64..1.0, c in 0.0001f64..1.0, d in 0.0001f64..1.0)| {
            let p = table("p", PriceUnit::PerThousandCharacters, a, b);
            let once = estimate_cost(&p, i, o);
            let twice = estimate_cost(&p, 2 * i, 2 * o);
            prop_assert!((twice.total - 2.0 * once.total).abs() <= 1e-9 * twice.total.max(1.0));
            prop_assert!(estimate_cost(&p, i + 1, o).total >= once.total);
            let q = table("q", PriceUnit::PerThousandTokens, c, d);
            let prod = cost_ratio(&p, &q).unwrap() * cost_ratio(&q, &p).unwrap();
            prop_assert!((prod - 1.0).abs() < 1e-9);
        });
    }
}
