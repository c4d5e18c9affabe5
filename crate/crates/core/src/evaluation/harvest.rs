//! Harvest success `H = picked / total`, per occlusion level and overall.

use super::{EvalError, OcclusionLevel, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCount {
    pub level: OcclusionLevel,
    pub picked: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestLog {
    pub levels: Vec<LevelCount>,
}

impl HarvestLog {
    pub fn new(levels: Vec<LevelCount>) -> Result<Self> {
        let log = Self { levels };
        log.validate()?;
        Ok(log)
    }

    /// Pairs counts with Zero, Low, Medium, High in that order.
    pub fn from_counts(picked: &[u64], total: &[u64]) -> Result<Self> {
        if picked.len() != total.len() || picked.is_empty() || picked.len() > 4 {
            return Err(EvalError::Shape(format!(
                "need 1 to 4 matching counts, got {} picked and {} total",
                picked.len(),
                total.len()
            )));
        }
        Self::new(
            OcclusionLevel::ALL
                .iter()
                .zip(picked.iter().zip(total))
                .map(|(&level, (&picked, &total))| LevelCount { level, picked, total })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.levels.iter().enumerate() {
            if c.picked > c.total {
                return Err(EvalError::Consistency(format!(
                    "{} level: {} picked of {}",
                    c.level, c.picked, c.total
                )));
            }
            if self.levels[..i].iter().any(|o| o.level == c.level) {
                return Err(EvalError::Consistency(format!("{} level listed twice", c.level)));
            }
        }
        Ok(())
    }
}

/// Hundredths of a percent, truncated toward zero.
pub fn truncate_percent(picked: u64, total: u64) -> Result<u64> {
    if total == 0 {
        return Err(EvalError::UndefinedLevel("a level with zero trials".into()));
    }
    Ok((picked as u128 * 10_000 / total as u128) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelHarvest {
    pub level: Option<OcclusionLevel>,
    pub picked: u64,
    pub total: u64,
    pub ratio: f64,
    /// Percentage truncated to two decimals.
    pub percent: f64,
    pub percent_text: String,
}

impl LevelHarvest {
    fn new(level: Option<OcclusionLevel>, picked: u64, total: u64) -> Result<Self> {
        let hundredths = truncate_percent(picked, total).map_err(|_| {
            EvalError::UndefinedLevel(level.map_or_else(|| "the whole log".into(), |l| format!("{l} level")))
        })?;
        Ok(Self {
            level,
            picked,
            total,
            ratio: picked as f64 / total as f64,
            percent: hundredths as f64 / 100.0,
            percent_text: format!("{}.{:02}", hundredths / 100, hundredths % 100),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarvestSummary {
    pub levels: Vec<LevelHarvest>,
    pub overall: LevelHarvest,
}

impl HarvestSummary {
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<8} {:>6} {:>6} {:>8}\n", "level", "picked", "total", "H(%)");
        let name = |l: Option<OcclusionLevel>| l.map_or("overall", |l| l.name());
        for r in self.levels.iter().chain(std::iter::once(&self.overall)) {
            s.push_str(&format!(
                "{:<8} {:>6} {:>6} {:>8}\n",
                name(r.level),
                r.picked,
                r.total,
                r.percent_text
            ));
        }
        s
    }
}

pub fn harvest_success(log: &HarvestLog) -> Result<HarvestSummary> {
    log.validate()?;
    let levels = log
        .levels
        .iter()
        .map(|c| LevelHarvest::new(Some(c.level), c.picked, c.total))
        .collect::<Result<Vec<_>>>()?;
    let picked = log.levels.iter().map(|c| c.picked).sum();
    let total = log.levels.iter().map(|c| c.total).sum();
    Ok(HarvestSummary {
        levels,
        overall: LevelHarvest::new(None, picked, total)?,
    })
}
