//! Key–value experiment configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Lists are
//! comma-separated. Unknown keys are rejected with the key named.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_core::PeriodicGrid;

/// Every accepted key, in canonical emission order.
pub const KEYS: [&str; 12] = [
    "k0",
    "epsilons",
    "s",
    "T0",
    "grid.L_per_inv_eps",
    "grid.N",
    "dt.cfl",
    "ansatz.depth",
    "ansatz.cutoff",
    "delta",
    "seed",
    "outdir",
];

/// Upper bound on the number of time steps of a single run.
pub const MAX_STEPS: usize = 2_000_000;

/// Parameters shared by all experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub k0: f64,
    /// Sorted descending.
    pub epsilons: Vec<f64>,
    /// Measurement Sobolev index.
    pub s: f64,
    /// Slow-time horizon; runs end at `t = T₀/ε²`.
    pub t0: f64,
    /// Cell length is `max(L_per_inv_eps/ε, 20·2π/k₀)`, rounded up to a
    /// multiple of `2π/k₀`.
    pub l_per_inv_eps: f64,
    /// Grid size; 0 selects the smallest power of two giving 8 points per
    /// wavelength of `4k₀`.
    pub n: usize,
    /// `dt = cfl·dx`.
    pub cfl: f64,
    pub depth: u8,
    pub cutoff: bool,
    /// Band half-width; 0 selects `k₀/10`.
    pub delta: f64,
    pub seed: u64,
    pub outdir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k0: 1.0,
            epsilons: vec![0.1, 0.07, 0.05],
            s: 2.0,
            t0: 1.0,
            l_per_inv_eps: 40.0,
            n: 0,
            cfl: 0.5,
            depth: 1,
            cutoff: false,
            delta: 0.0,
            seed: 1,
            outdir: PathBuf::from("out"),
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> Error {
    Error::ConfigValue { key: key.to_string(), msg: msg.into() }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| bad(key, format!("cannot parse `{}`", v.trim())))
}

impl ExperimentConfig {
    /// Parse the key–value text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "k0" => cfg.k0 = num(key, value)?,
                "epsilons" => {
                    cfg.epsilons = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| num(key, s))
                        .collect::<Result<_>>()?
                }
                "s" => cfg.s = num(key, value)?,
                "T0" => cfg.t0 = num(key, value)?,
                "grid.L_per_inv_eps" => cfg.l_per_inv_eps = num(key, value)?,
                "grid.N" => cfg.n = num(key, value)?,
                "dt.cfl" => cfg.cfl = num(key, value)?,
                "ansatz.depth" => cfg.depth = num(key, value)?,
                "ansatz.cutoff" => cfg.cutoff = num(key, value)?,
                "delta" => cfg.delta = num(key, value)?,
                "seed" => cfg.seed = num(key, value)?,
                "outdir" => cfg.outdir = PathBuf::from(value),
                other => return Err(Error::UnknownKey(other.to_string())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and parse a config file.
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form; `parse(emit(c)) == c`.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let eps: Vec<String> = self.epsilons.iter().map(|e| e.to_string()).collect();
        let values = [
            self.k0.to_string(),
            eps.join(","),
            self.s.to_string(),
            self.t0.to_string(),
            self.l_per_inv_eps.to_string(),
            self.n.to_string(),
            self.cfl.to_string(),
            self.depth.to_string(),
            self.cutoff.to_string(),
            self.delta.to_string(),
            self.seed.to_string(),
            self.outdir.display().to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k0.is_finite() && self.k0 != 0.0) {
            return Err(bad("k0", "must be finite and nonzero"));
        }
        if self.epsilons.is_empty() {
            return Err(bad("epsilons", "list is empty"));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 0.2)) {
            return Err(bad("epsilons", "each value must lie in (0, 0.2]"));
        }
        if self.epsilons.windows(2).any(|w| w[0] <= w[1]) {
            return Err(bad("epsilons", "must be sorted strictly descending"));
        }
        if !(self.s >= 0.0) {
            return Err(bad("s", "must be >= 0"));
        }
        if !(self.t0 >= 0.0 && self.t0.is_finite()) {
            return Err(bad("T0", "must be >= 0"));
        }
        if !(self.l_per_inv_eps > 0.0) {
            return Err(bad("grid.L_per_inv_eps", "must be positive"));
        }
        if !(self.cfl > 0.0) {
            return Err(bad("dt.cfl", "must be positive"));
        }
        if self.depth > 1 {
            return Err(bad("ansatz.depth", "only depths 0 and 1 are supported"));
        }
        if !(self.delta >= 0.0 && self.delta < self.k0.abs() / 8.0) {
            return Err(bad("delta", "must lie in [0, k0/8) (0 selects k0/10)"));
        }
        for &e in &self.epsilons {
            let g = self.grid(e)?;
            let needed = 2.0 * PI / (4.0 * self.k0.abs()) / 8.0;
            if g.dx() > needed * (1.0 + 1e-12) {
                return Err(bad("grid.N", format!("N = {} under-resolves 4k0 at eps = {e}", g.n())));
            }
            if self.steps(e)? > MAX_STEPS {
                return Err(bad("T0", format!("T0/eps^2 needs more than {MAX_STEPS} steps at eps = {e}")));
            }
        }
        Ok(())
    }

    /// Effective band half-width.
    pub fn delta(&self) -> f64 {
        if self.delta > 0.0 {
            self.delta
        } else {
            self.k0.abs() / 10.0
        }
    }

    /// Cell length for `ε`.
    pub fn length(&self, eps: f64) -> f64 {
        let unit = 2.0 * PI / self.k0.abs();
        let l = (self.l_per_inv_eps / eps).max(20.0 * unit);
        (l / unit - 1e-9).ceil() * unit
    }

    /// Physical grid for `ε`.
    pub fn grid(&self, eps: f64) -> Result<PeriodicGrid> {
        let l = self.length(eps);
        let n = if self.n > 0 {
            self.n
        } else {
            let min = (l * 32.0 * self.k0.abs() / (2.0 * PI)).ceil() as usize;
            min.next_power_of_two().max(16)
        };
        PeriodicGrid::new(l, n)
    }

    /// Final time `T₀/ε²`.
    pub fn horizon(&self, eps: f64) -> f64 {
        self.t0 / (eps * eps)
    }

    /// Largest admissible step `cfl·dx`.
    pub fn dt_max(&self, eps: f64) -> Result<f64> {
        Ok(self.cfl * self.grid(eps)?.dx())
    }

    /// Number of steps, a multiple of the 64 error samples.
    pub fn steps(&self, eps: f64) -> Result<usize> {
        let t = self.horizon(eps);
        if t == 0.0 {
            return Ok(0);
        }
        let per = (t / (SAMPLES as f64 * self.dt_max(eps)?)).ceil().max(1.0) as usize;
        Ok(per * SAMPLES)
    }
}

/// Error samples per run.
pub const SAMPLES: usize = 64;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_unknown_key() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.emit()).unwrap(), c);
        match ExperimentConfig::parse("epsilonn = 0.1") {
            Err(Error::UnknownKey(k)) => assert_eq!(k, "epsilonn"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unsorted_eps_and_bad_values() {
        assert!(ExperimentConfig::parse("epsilons = 0.05, 0.1").is_err());
        assert!(ExperimentConfig::parse("k0 = abc").is_err());
        assert!(ExperimentConfig::parse("grid.N = 64").is_err());
    }

    #[test]
    fn grid_policy() {
        let c = ExperimentConfig::default();
        let g = c.grid(0.05).unwrap();
        assert_eq!(g.n(), 4096);
        let m0 = 1.0 / g.dk();
        assert!((m0 - m0.round()).abs() < 1e-9);
        assert!(g.length() >= 800.0);
    }
}
