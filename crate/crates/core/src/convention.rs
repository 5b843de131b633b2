//! Close-out conventions and rank-n pricing rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Credit quality assumed for the hypothetical parties of the replacement
/// contract at the counterparty's default.
///
/// * `A`: risk-free value of the original contract.
/// * `APrime`: the replacement counterparty is default-free.
/// * `B`: replacement counterparty credit frozen at the inception level.
/// * `C`: replacement counterparty credit tracks the current systemic level.
/// * `CPrime`: as `C`, with the investor anchored at the same level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Convention {
    A,
    APrime,
    B,
    C,
    CPrime,
}

impl Convention {
    pub const ALL: [Convention; 5] = [
        Convention::A,
        Convention::APrime,
        Convention::B,
        Convention::C,
        Convention::CPrime,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Convention::A => "a",
            Convention::APrime => "a'",
            Convention::B => "b",
            Convention::C => "c",
            Convention::CPrime => "c'",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Convention::A),
            "a'" | "a_prime" | "aprime" => Ok(Convention::APrime),
            "b" => Ok(Convention::B),
            "c" => Ok(Convention::C),
            "c'" | "c_prime" | "cprime" => Ok(Convention::CPrime),
            other => Err(Error::Config(format!("unknown convention {other:?}"))),
        }
    }
}

impl From<Convention> for String {
    fn from(c: Convention) -> String {
        c.label().to_string()
    }
}

impl TryFrom<String> for Convention {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKind {
    /// The n-th equivalent contract is valued as a risk-free CDS.
    RiskFree,
    /// The n-th equivalent contract is worthless.
    Zero,
}

/// Truncation of the replacement recursion at depth `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RankRule {
    pub kind: RankKind,
    pub n: usize,
}

impl RankRule {
    pub fn new(kind: RankKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        Ok(Self { kind, n })
    }

    pub fn risk_free(n: usize) -> Self {
        Self::new(RankKind::RiskFree, n).expect("rank >= 1")
    }

    pub fn zero(n: usize) -> Self {
        Self::new(RankKind::Zero, n).expect("rank >= 1")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.kind {
            RankKind::RiskFree => format!("risk_free_{}", self.n),
            RankKind::Zero => format!("zero_{}", self.n),
        }
    }
}

impl fmt::Display for RankRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
