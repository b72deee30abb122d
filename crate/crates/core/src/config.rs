//! Run configuration: a flat, typed TOML document with a schema version.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::QuadratureSpec;
use crate::geometry::{Eps, FiberLayout};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub seed: u64,
    pub p: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Number of sampled translations per ε.
    pub translations: usize,
    /// Quadrature panels per cell and axis.
    pub panels_per_cell: usize,
    /// Quadrature nodes along the fibers.
    pub n3: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config { schema_version: SCHEMA_VERSION, seed: 7, p: 4.0, alpha: 0.25, delta: 0.4, translations: 32, panels_per_cell: 8, n3: 8 }
    }
}

impl Config {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Config = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p = {} must be ≥ 1", self.p)));
        }
        if self.translations == 0 || self.panels_per_cell == 0 || self.n3 == 0 {
            return Err(Error::InvalidParameter("translations, panels_per_cell and n3 must be positive".into()));
        }
        FiberLayout::periodic(Eps::inv(8), self.alpha, self.delta).map(|_| ())
    }

    pub fn layout(&self, eps: Eps) -> Result<FiberLayout> {
        FiberLayout::periodic(eps, self.alpha, self.delta)
    }

    pub fn quadrature(&self, layout: &FiberLayout) -> Result<QuadratureSpec> {
        QuadratureSpec::cell_aligned(layout, self.panels_per_cell, self.n3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rejections() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        let extra = format!("{}bogus = 1\n", c.to_toml());
        assert!(matches!(Config::from_toml(&extra), Err(Error::Parse(_))));
        let old = c.to_toml().replace("schema_version = 1", "schema_version = 0");
        assert!(Config::from_toml(&old).is_err());
        let bad = c.to_toml().replace("alpha = 0.25", "alpha = 0.6");
        assert!(Config::from_toml(&bad).is_err());
    }
}
