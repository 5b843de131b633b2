use crate::contagion::{Entity, FirstEventChain, GeneratorSpec};
use crate::convention::Convention;
use crate::error::{Error, Result};

/// Chain governing a replacement contract entered after a counterparty
/// default, with `offset` named defaults already in the count.
///
/// Systemic and reference intensities follow the count `j0 + offset`. The
/// replacement counterparty defaults at `M_R2·γ̂(l0)` under `b`, at
/// `M_R2·γ̂(j0)` under `c` and `c'`, and never under `a'`. The investor
/// follows the count except under `c'`, where it is anchored at `γ̂(j0)`.
pub fn conditioned_model(spec: &GeneratorSpec, convention: Convention, offset: usize) -> Result<FirstEventChain> {
    if convention == Convention::A {
        return Err(Error::Unsupported("convention a uses risk-free replacement values".into()));
    }
    if offset == 0 {
        return Err(Error::InvalidModel("replacement chains start after a default (offset >= 1)".into()));
    }
    let m = spec.m;
    let gamma = spec.gamma(m + offset + 1)?;
    let mu = spec.multipliers;
    let l0 = spec.initial_count;
    let by_count = |k: f64| -> Vec<f64> { (0..=m).map(|j0| k * gamma[j0 + offset]).collect() };
    let anchored = |k: f64| -> Vec<f64> { (0..=m).map(|j0| k * gamma[j0]).collect() };
    let systemic = (0..=m).map(|j0| (m - j0) as f64 * gamma[j0 + offset]).collect();
    let investor = match convention {
        Convention::CPrime => anchored(mu.investor),
        _ => by_count(mu.investor),
    };
    let counterparty = match convention {
        Convention::APrime => vec![0.0; m + 1],
        Convention::B => vec![mu.counterparty * gamma[l0]; m + 1],
        _ => anchored(mu.counterparty),
    };
    FirstEventChain::new(
        m,
        systemic,
        vec![
            (Entity::Investor, investor),
            (Entity::Counterparty, counterparty),
            (Entity::Reference, by_count(mu.reference)),
        ],
    )
}
