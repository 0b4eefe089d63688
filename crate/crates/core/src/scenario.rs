//! Problem instances: a substrate of `n` nodes with integer capacities and a
//! set of `l` slices, each with `s` VNF demands (in resource blocks).

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Resource blocks. Capacities and demands are always whole blocks.
pub type Rb = u32;

/// Parameters of the random instance generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Substrate node count.
    pub n: usize,
    /// Inclusive node capacity interval `[lo, hi]`.
    pub cap_range: [Rb; 2],
    /// Slice count.
    pub l: usize,
    /// VNFs per slice.
    pub s: usize,
    /// Inclusive VNF demand interval `[lo, hi]`.
    pub demand_range: [Rb; 2],
    pub seed: u64,
}

impl ScenarioConfig {
    /// 100 nodes with capacities in [10, 30], 20 slices of 10 VNFs with demands in [1, 19].
    pub fn base() -> Self {
        ScenarioConfig { n: 100, cap_range: [10, 30], l: 20, s: 10, demand_range: [1, 19], seed: 0 }
    }

    /// Scaled-down profile for fast checks: 20 nodes, 6 slices of 4 VNFs.
    /// Expected capacity and demand totals are equal (120 RBs), as in [`base`](Self::base).
    pub fn mini() -> Self {
        ScenarioConfig { n: 20, cap_range: [2, 10], l: 6, s: 4, demand_range: [1, 9], seed: 0 }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.l == 0 || self.s == 0 {
            return Err(Error::Config(format!(
                "n, l and s must be positive (got n={}, l={}, s={})",
                self.n, self.l, self.s
            )));
        }
        if self.cap_range[0] > self.cap_range[1] {
            return Err(Error::Config(format!("empty cap_range {:?}", self.cap_range)));
        }
        if self.demand_range[0] > self.demand_range[1] {
            return Err(Error::Config(format!("empty demand_range {:?}", self.demand_range)));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// An immutable problem instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub capacities: Vec<Rb>,
    pub l: usize,
    pub s: usize,
    /// `l` rows of `s` demands; short slices are padded with zero demands.
    pub demands: Vec<Vec<Rb>>,
}

impl Scenario {
    /// Builds an instance by hand. Rows shorter than the longest row are
    /// padded with zero-demand VNFs.
    pub fn new(capacities: Vec<Rb>, mut demands: Vec<Vec<Rb>>) -> Result<Self> {
        if capacities.is_empty() {
            return Err(Error::Config("substrate has no nodes".into()));
        }
        if demands.is_empty() {
            return Err(Error::Config("slice set is empty".into()));
        }
        let s = demands.iter().map(Vec::len).max().unwrap_or(0);
        if s == 0 {
            return Err(Error::Config("slices have no VNFs".into()));
        }
        for row in &mut demands {
            row.resize(s, 0);
        }
        Ok(Scenario { n: capacities.len(), l: demands.len(), s, capacities, demands })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.l == 0 || self.s == 0 {
            return Err(Error::Config("n, l and s must be positive".into()));
        }
        if self.capacities.len() != self.n {
            return Err(Error::Config(format!(
                "expected {} capacities, found {}",
                self.n,
                self.capacities.len()
            )));
        }
        if self.demands.len() != self.l || self.demands.iter().any(|r| r.len() != self.s) {
            return Err(Error::Config(format!("demand matrix is not {}x{}", self.l, self.s)));
        }
        Ok(())
    }

    pub fn total_capacity(&self) -> u64 {
        self.capacities.iter().map(|&c| c as u64).sum()
    }

    pub fn total_demand(&self) -> u64 {
        self.demands.iter().flatten().map(|&d| d as u64).sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sc: Scenario = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Draws an instance: capacities then demands (row-major), each i.i.d.
/// uniform over its inclusive interval, from the scenario stream of `config.seed`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::Scenario);
    let [clo, chi] = config.cap_range;
    let [dlo, dhi] = config.demand_range;
    let capacities = (0..config.n).map(|_| rng.gen_range(clo..=chi)).collect();
    let demands = (0..config.l)
        .map(|_| (0..config.s).map(|_| rng.gen_range(dlo..=dhi)).collect())
        .collect();
    Ok(Scenario { n: config.n, capacities, l: config.l, s: config.s, demands })
}
