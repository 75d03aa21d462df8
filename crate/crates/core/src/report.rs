//! Text reports and CSV rendering.
//!
//! Every float written to a CSV uses 17 significant digits, so re-reading a
//! file reproduces the in-memory `f64` exactly. Rendering is kept separate
//! from writing so the same bytes can be compared in memory.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::Result;
use crate::kernel::{DelayKernel, KernelFamily};
use crate::model::{analyze_params, check_feasibility, Equilibrium, FeasibilityReport, LinearCoeffs, ModelParams};
use crate::sim::{CycleMetrics, Method, Trajectory};
use crate::spectral::{critical_expectation_with, proof_curves, rightmost_root, HopfPoint, HopfSearch, ProofCurves};

/// 17 significant digits; an exact zero is written as `0`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.16e}")
    }
}

/// A report printed as aligned text followed by a `name,value` block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub rows: Vec<(String, String)>,
}

impl Report {
    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn value(&mut self, name: &str, v: f64) {
        self.line(format!("  {name:<22} {v:.10}"));
        self.rows.push((name.into(), fmt_f64(v)));
    }

    fn flag(&mut self, name: &str, v: bool) {
        self.line(format!("  {name:<22} {v}"));
        self.rows.push((name.into(), v.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str("\n# machine-readable\n");
        out.push_str(&name_value_csv(&self.rows));
        out
    }
}

pub fn name_value_csv(rows: &[(String, String)]) -> String {
    let mut out = String::from("name,value\n");
    for (n, v) in rows {
        let _ = writeln!(out, "{n},{v}");
    }
    out
}

/// Feasibility verdict plus, when feasible, the equilibrium and coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub params: ModelParams,
    pub feasibility: FeasibilityReport,
    pub fixed_point: Option<(Equilibrium, LinearCoeffs)>,
}

impl ModelSummary {
    pub fn new(params: &ModelParams) -> Self {
        let feasibility = check_feasibility(params);
        let fixed_point = if feasibility.feasible { analyze_params(params).ok() } else { None };
        Self { params: *params, feasibility, fixed_point }
    }

    fn header(&self, r: &mut Report) {
        r.line(format!("model: a = {}, H = {}", self.params.a, self.params.h));
        r.flag("feasible", self.feasibility.feasible);
        for reason in &self.feasibility.reasons {
            r.line(format!("  reason: {reason}"));
        }
    }

    pub fn equilibrium_report(&self) -> Report {
        let mut r = Report::default();
        self.header(&mut r);
        if let Some((eq, _)) = &self.fixed_point {
            r.line("interior equilibrium:");
            r.value("x1", eq.x1);
            r.value("x2", eq.x2);
            r.value("x3", eq.x3);
        }
        r
    }

    pub fn coeffs_report(&self) -> Report {
        let mut r = Report::default();
        self.header(&mut r);
        if let Some((_, c)) = &self.fixed_point {
            r.line("characteristic coefficients:");
            r.value("a1", c.a1);
            r.value("a2", c.a2);
            r.value("a3", c.a3);
            r.value("a4", c.a4);
            r.value("a5", c.a5);
        }
        r
    }

    /// Feasibility margins, the delay-free Routh-Hurwitz verdict and, if
    /// requested, the rightmost root for the configured kernel.
    pub fn stability_report(&self, kernel: Option<&DelayKernel>) -> Report {
        let mut r = Report::default();
        self.header(&mut r);
        r.value("H_threshold", self.feasibility.h_threshold);
        r.line("margins (all must be > 0):");
        for (name, m) in &self.feasibility.margins {
            r.value(name, *m);
        }
        r.flag("stable_without_delay", self.feasibility.routh_hurwitz_ok);
        r.line(format!("  convention: {}", self.feasibility.convention));
        if let (Some(k), Some((_, c))) = (kernel, &self.fixed_point) {
            r.line(format!("rightmost root, {k}:"));
            match rightmost_root(c, k) {
                Ok(root) => {
                    r.value("re_lead", root.lambda.re);
                    r.value("im_lead", root.lambda.im);
                    r.flag("stable_with_delay", root.lambda.re < 0.0);
                }
                Err(e) => r.line(format!("  unavailable: {e}")),
            }
        }
        r
    }
}

/// Proof-curve quantities evaluated at the first crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analysis {
    pub family: KernelFamily,
    pub curves: ProofCurves,
    pub hopf: HopfPoint,
}

/// First crossing for `family`; `ceiling` caps the search in `E`, otherwise
/// the search derives its own ceiling from the frequency bound.
pub fn analyze(coeffs: &LinearCoeffs, family: KernelFamily, ceiling: Option<f64>) -> Result<Analysis> {
    let search = HopfSearch { e_max: ceiling, ..HopfSearch::default() };
    let hopf = critical_expectation_with(coeffs, family, &search)?;
    let curves = proof_curves(coeffs, &DelayKernel::new(family, hopf.e_crit)?)?;
    Ok(Analysis { family, curves, hopf })
}

impl Analysis {
    pub fn report(&self) -> Report {
        let mut r = Report::default();
        let (c, h) = (&self.curves, &self.hopf);
        r.line(format!("kernel family: {}", self.family));
        r.value("omega0", c.omega0);
        r.value("omega1", c.omega1);
        r.value("E1_lower_bound", c.e1_bound);
        r.value("E_crit", h.e_crit);
        r.value("omega_crit", h.omega_crit);
        r.value("period_crit", h.period());
        r.value("transversal_slope", h.transversal_slope);
        r.flag("transversal_ok", h.transversal_ok);
        r.flag("E_crit_ge_E1_lower_bound", h.e_crit >= c.e1_bound);
        r
    }

    pub fn csv(&self) -> String {
        name_value_csv(&self.report().rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub e: f64,
    pub lead: std::result::Result<Complex64, String>,
}

impl ScanRow {
    pub fn stable(&self) -> Option<bool> {
        self.lead.as_ref().ok().map(|l| l.re < 0.0)
    }
}

/// Rightmost root along `grid`, evaluated in parallel, rows in grid order.
pub fn scan(coeffs: &LinearCoeffs, family: KernelFamily, grid: &[f64]) -> Vec<ScanRow> {
    grid.par_iter()
        .map(|&e| {
            let lead = DelayKernel::new(family, e)
                .and_then(|k| rightmost_root(coeffs, &k))
                .map(|r| r.lambda)
                .map_err(|err| err.to_string());
            ScanRow { e, lead }
        })
        .collect()
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from("E,re_lead,im_lead,stable,note\n");
    for row in rows {
        match &row.lead {
            Ok(l) => {
                let _ = writeln!(out, "{},{},{},{},", fmt_f64(row.e), fmt_f64(l.re), fmt_f64(l.im), l.re < 0.0);
            }
            Err(msg) => {
                let note = msg.replace([',', '\n'], ";");
                let _ = writeln!(out, "{},,,,{note}", fmt_f64(row.e));
            }
        }
    }
    out
}

/// `trajectory.csv`: the full configuration as `#` comments, then every
/// `every`-th sample (the last sample is always kept).
pub fn trajectory_csv(traj: &Trajectory, cfg: &RunConfig, kernel: &DelayKernel, every: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {kernel}");
    for line in cfg.to_toml().lines().filter(|l| !l.trim().is_empty()) {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("t,x1,x2,x3\n");
    let n = traj.len();
    for (i, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        if i % every.max(1) == 0 || i + 1 == n {
            let _ = writeln!(out, "{},{},{},{}", fmt_f64(*t), fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(x[2]));
        }
    }
    out
}

pub const METRICS_HEADER: &str = "family,E,method,dt,t_end,amp_x1,amp_x2,amp_x3,period,decaying,period_rel_err_bound";

pub fn metrics_row(kernel: &DelayKernel, method: Method, traj: &Trajectory, m: &CycleMetrics) -> String {
    let period = m.period.map(fmt_f64).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        kernel.family(),
        fmt_f64(kernel.expectation()),
        method,
        fmt_f64(traj.dt),
        fmt_f64(traj.times.last().copied().unwrap_or(0.0)),
        fmt_f64(m.amplitude[0]),
        fmt_f64(m.amplitude[1]),
        fmt_f64(m.amplitude[2]),
        period,
        m.decaying,
        fmt_f64(m.period_rel_err_bound),
    )
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)
}

/// Append one row to `metrics.csv`, writing the header if the file is new.
pub fn append_metrics(dir: &Path, row: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join("metrics.csv");
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{METRICS_HEADER}")?;
    }
    writeln!(f, "{row}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    #[test]
    fn floats_round_trip() {
        for x in [1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.1 + 0.2] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.0), "0");
    }

    #[test]
    fn zero_harvest_prints_exact_zero() {
        let s = ModelSummary::new(&ModelParams::new(4.0, 0.0));
        let r = s.coeffs_report();
        assert!(r.rows.contains(&("a5".to_string(), "0".to_string())));
    }

    #[test]
    fn infeasible_reports_reason() {
        let s = ModelSummary::new(&ModelParams::new(3.0, 0.01));
        assert!(!s.feasibility.feasible);
        let text = s.stability_report(None).render();
        assert!(text.contains("a <= 2+sqrt(2)"), "{text}");
        assert!(text.contains("feasible,false"));
    }

    #[test]
    fn scan_rows_follow_grid_and_flip_once() {
        let p = ModelParams::default();
        let (eq, c) = analyze_params(&p).unwrap();
        let grid: Vec<f64> = (0..26).map(|i| 0.1 * i as f64).collect();
        let rows = scan(&c, KernelFamily::Dirac, &grid);
        assert!(rows.windows(2).all(|w| w[1].e > w[0].e));

        let lead = oracle::jacobian_leading_eigenvalue(&p, &eq);
        let first = rows[0].lead.as_ref().unwrap();
        assert!((first.re - lead.re).abs() < 1e-8);

        let flags: Vec<bool> = rows.iter().map(|r| r.stable().unwrap()).collect();
        let flips = flags.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
        let e_crit = analyze(&c, KernelFamily::Dirac, None).unwrap().hopf.e_crit;
        let flip_at = flags.iter().position(|s| !s).unwrap();
        assert!(grid[flip_at - 1] < e_crit && e_crit <= grid[flip_at]);

        let csv = scan_csv(&rows);
        assert!(csv.starts_with("E,re_lead,im_lead,stable,note\n"));
        assert_eq!(csv.lines().count(), grid.len() + 1);
    }

    #[test]
    fn failed_scan_point_keeps_row() {
        let rows = vec![ScanRow { e: 1.0, lead: Err("no root, here".into()) }];
        assert_eq!(scan_csv(&rows).lines().nth(1).unwrap(), "1.0000000000000000e0,,,,no root; here");
    }

    #[test]
    fn analysis_rows_for_dirac() {
        let (_, c) = analyze_params(&ModelParams::default()).unwrap();
        let a = analyze(&c, KernelFamily::Dirac, None).unwrap();
        assert!((a.curves.omega1 - a.curves.omega0).abs() < 1e-8);
        let csv = a.csv();
        for name in ["omega0", "omega1", "E1_lower_bound", "E_crit", "omega_crit", "transversal_slope"] {
            assert!(csv.contains(&format!("\n{name},")), "{name}");
        }
        assert!(csv.contains("transversal_ok,true"));
        assert!(csv.contains("E_crit_ge_E1_lower_bound,true"));
    }

    #[test]
    fn ceiling_below_crossing_reports_it() {
        let (_, c) = analyze_params(&ModelParams::default()).unwrap();
        match analyze(&c, KernelFamily::Dirac, Some(1.0)) {
            Err(crate::Error::NoCrossingFound { e_max }) => assert_eq!(e_max, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trajectory_thinning_keeps_last_row() {
        let traj = Trajectory {
            dt: 0.5,
            times: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            states: vec![[1.0, 2.0, 3.0]; 5],
        };
        let cfg = RunConfig::default();
        let k = DelayKernel::dirac(1.0).unwrap();
        let csv = trajectory_csv(&traj, &cfg, &k, 3);
        let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data[0], "t,x1,x2,x3");
        assert_eq!(data.len(), 1 + 3);
        assert!(data[3].starts_with("2.0000000000000000e0,"));
    }
}
