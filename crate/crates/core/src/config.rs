//! Run configuration, read from a TOML file whose keys mirror the CLI:
//!
//! ```toml
//! seed = 1
//! output = "out"
//! model.a = 4.0
//! model.H = 0.01
//! kernel.family = "erlang"
//! kernel.expectation = 1.2
//! kernel.shape = 2
//! sim.t_end = 200.0
//! scan.E_max = 2.5
//! ```
//!
//! Every key is optional; missing ones take the defaults below.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{DelayKernel, KernelFamily, SIM_EPSILON};
use crate::model::ModelParams;
use crate::sim::{History, Method, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Directory that receives the CSV files.
    pub output: PathBuf,
    pub model: ModelParams,
    pub kernel: KernelSection,
    pub sim: SimSection,
    pub scan: ScanSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub family: String,
    pub expectation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub t_end: f64,
    pub dt: f64,
    pub method: String,
    /// `"perturbed"` or `"equilibrium"`.
    pub history: String,
    /// Relative perturbation of the initial predator density.
    pub rho: f64,
    pub truncation_epsilon: f64,
    pub transient_fraction: f64,
    /// Write every n-th integration step to `trajectory.csv`.
    pub output_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    #[serde(rename = "E_min")]
    pub e_min: f64,
    #[serde(rename = "E_max")]
    pub e_max: f64,
    pub n_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output: PathBuf::from("out"),
            model: ModelParams::default(),
            kernel: KernelSection::default(),
            sim: SimSection::default(),
            scan: ScanSection::default(),
        }
    }
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            family: "dirac".into(),
            expectation: 1.0,
            shape: None,
        }
    }
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            t_end: d.t_end,
            dt: d.dt,
            method: d.method.name().into(),
            history: "perturbed".into(),
            rho: History::DEFAULT_RHO,
            truncation_epsilon: SIM_EPSILON,
            transient_fraction: d.transient_fraction,
            output_every: 10,
        }
    }
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            e_min: 0.0,
            e_max: 2.5,
            n_points: 51,
        }
    }
}

/// Command-line values that shadow the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub a: Option<f64>,
    pub h: Option<f64>,
    pub kernel: Option<String>,
    pub expectation: Option<f64>,
    pub shape: Option<u32>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(a) = o.a {
            self.model.a = a;
        }
        if let Some(h) = o.h {
            self.model.h = h;
        }
        if let Some(k) = &o.kernel {
            let fam: KernelFamily = k.parse()?;
            self.kernel.family = fam.name().into();
            self.kernel.shape = fam.shape();
        }
        if let Some(e) = o.expectation {
            self.kernel.expectation = e;
        }
        if let Some(s) = o.shape {
            self.kernel.shape = Some(s);
        }
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
        self.check()
    }

    pub fn params(&self) -> ModelParams {
        self.model
    }

    pub fn kernel_family(&self) -> Result<KernelFamily> {
        KernelFamily::from_parts(&self.kernel.family, self.kernel.shape)
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn kernel(&self) -> Result<DelayKernel> {
        DelayKernel::new(self.kernel_family()?, self.kernel.expectation)
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.sim;
        let history = match s.history.trim().to_ascii_lowercase().as_str() {
            "perturbed" => History::Perturbed { rho: s.rho },
            "equilibrium" | "constant-at-equilibrium" => History::Equilibrium,
            other => return Err(Error::InvalidConfig(format!("unknown history '{other}'"))),
        };
        Ok(SimConfig {
            t_end: s.t_end,
            dt: s.dt,
            method: s.method.parse::<Method>()?,
            history,
            truncation_epsilon: s.truncation_epsilon,
            transient_fraction: s.transient_fraction,
        })
    }

    /// Evenly spaced expectations of the scan grid, ascending.
    pub fn scan_grid(&self) -> Vec<f64> {
        let sc = &self.scan;
        let n = sc.n_points;
        (0..n)
            .map(|i| sc.e_min + (sc.e_max - sc.e_min) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Structural checks only; model feasibility is judged separately.
    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !self.model.a.is_finite() || !self.model.h.is_finite() {
            return bad(format!("model.a and model.H must be finite, got {} and {}", self.model.a, self.model.h));
        }
        let fam = self.kernel_family()?;
        if self.kernel.shape.is_some() && fam.shape().is_none() {
            return bad(format!("kernel.shape does not apply to the {} family", fam.name()));
        }
        self.kernel()?;
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt.is_finite()) || !(s.t_end > 0.0 && s.t_end.is_finite()) {
            return bad(format!("need sim.dt > 0 and sim.t_end > 0, got {} and {}", s.dt, s.t_end));
        }
        if !(s.rho > -1.0 && s.rho.is_finite()) {
            return bad(format!("sim.rho must exceed -1, got {}", s.rho));
        }
        if !(s.truncation_epsilon > 0.0 && s.truncation_epsilon < 1.0) {
            return bad(format!("sim.truncation_epsilon must lie in (0, 1), got {}", s.truncation_epsilon));
        }
        if !(s.transient_fraction > 0.0 && s.transient_fraction < 1.0) {
            return bad(format!("sim.transient_fraction must lie in (0, 1), got {}", s.transient_fraction));
        }
        if s.output_every == 0 {
            return bad("sim.output_every must be >= 1".into());
        }
        self.sim_config()?;
        let sc = &self.scan;
        if !(sc.e_min >= 0.0 && sc.e_max > sc.e_min && sc.e_max.is_finite()) {
            return bad(format!("need 0 <= scan.E_min < scan.E_max, got {} and {}", sc.e_min, sc.e_max));
        }
        if sc.n_points < 2 {
            return bad(format!("scan.n_points must be >= 2, got {}", sc.n_points));
        }
        Ok(())
    }
}
