//! End-to-end checks tying the spectral predictions to each other, to
//! independent oracles and to direct simulation.
//!
//! The model, kernel family, step size, method and perturbation come from the
//! run configuration; horizons and fit windows are fixed so that the checks
//! mean the same thing for every configuration.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::kernel::{DelayKernel, KernelFamily};
use crate::model::{
    analyze_params, check_feasibility, h_threshold, jacobian_no_delay, rhs_no_delay, Equilibrium, LinearCoeffs,
    ModelParams,
};
use crate::oracle;
use crate::report::{self, Analysis};
use crate::sim::{
    growth_rate, integrate_no_delay, limit_cycle_metrics, simulate, CycleMetrics, History, Method, SimConfig,
    Trajectory,
};
use crate::spectral::{
    count_roots_in_rectangle, f_of_omega, g_of_omega, moments_at_crossing, crossing_residuals, omega0,
    rightmost_root, schwartz_envelope, search_window, Rectangle,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:>2}] {:<7} {:<34} {}", self.id, self.status, self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct Validation {
    pub outcomes: Vec<Outcome>,
    /// CSV files `(name, contents)` produced along the way.
    pub files: Vec<(String, String)>,
    pub feasible: bool,
}

impl Validation {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.status == Status::Pass)
    }

    pub fn outcomes_csv(&self) -> String {
        let mut out = String::from("id,criterion,status,detail\n");
        for o in &self.outcomes {
            out.push_str(&format!("{},{},{},{}\n", o.id, o.name, o.status, o.detail.replace(',', ";")));
        }
        out
    }
}

pub const CRITERIA: [&str; 14] = [
    "equilibrium residual",
    "coefficient identity",
    "frequency-domain bounds",
    "omega0 identity",
    "omega1 bracket",
    "crossing moments back-substitution",
    "critical expectation above bound",
    "root finder vs polynomial reduction",
    "zero-delay spectrum",
    "transversality vs secant",
    "chain vs convolution",
    "Hopf witness by simulation",
    "degenerate reductions",
    "deterministic output",
];

/// Multiples of the critical expectation used by the simulation witness.
pub const WITNESS_FACTORS: [f64; 3] = [0.5, 0.9, 1.1];
const WITNESS_T_END: [f64; 3] = [200.0, 400.0, 300.0];
const FIT_WINDOW: (f64, f64) = (20.0, 200.0);

struct Ctx {
    cfg: RunConfig,
    params: ModelParams,
    eq: Equilibrium,
    coeffs: LinearCoeffs,
    family: KernelFamily,
    sim: SimConfig,
}

type Check = std::result::Result<String, String>;

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: Error) -> String {
    format!("error: {e}")
}

/// Run all criteria for `cfg`.
pub fn run(cfg: &RunConfig) -> Validation {
    let params = cfg.params();
    let feas = check_feasibility(&params);
    if !feas.feasible {
        let detail = format!("model infeasible: {}", feas.reasons.join("; "));
        return Validation {
            outcomes: skipped_all(&detail),
            files: Vec::new(),
            feasible: false,
        };
    }
    let setup = (|| -> Result<Ctx> {
        let (eq, coeffs) = analyze_params(&params)?;
        Ok(Ctx {
            cfg: cfg.clone(),
            params,
            eq,
            coeffs,
            family: cfg.kernel_family()?,
            sim: cfg.sim_config()?,
        })
    })();
    let ctx = match setup {
        Ok(c) => c,
        Err(e) => {
            return Validation {
                outcomes: skipped_all(&err(e)),
                files: Vec::new(),
                feasible: false,
            }
        }
    };

    let analysis = report::analyze(&ctx.coeffs, ctx.family, None);
    let artifacts = build_artifacts(&ctx, &analysis);

    let checks: Vec<Check> = vec![
        equilibrium_residual(),
        coefficient_identity(),
        frequency_bounds(&ctx),
        omega0_identity(&ctx),
        omega1_bracket(&ctx),
        moments_back_substitution(&ctx, &analysis),
        bound_consistency(&ctx),
        root_finder_oracle(&ctx),
        zero_delay_spectrum(&ctx),
        transversality_secant(&ctx, &analysis),
        chain_vs_convolution(&ctx),
        hopf_witness(&ctx, &analysis, &artifacts.witness),
        degenerate_reductions(&ctx),
        determinism(&ctx, &analysis, &artifacts.files),
    ];

    let outcomes = checks
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let (status, detail) = match c {
                Ok(d) => (Status::Pass, d),
                Err(d) => (Status::Fail, d),
            };
            Outcome { id: i as u8 + 1, name: CRITERIA[i], status, detail }
        })
        .collect();
    Validation { outcomes, files: artifacts.files, feasible: true }
}

fn skipped_all(detail: &str) -> Vec<Outcome> {
    CRITERIA
        .iter()
        .enumerate()
        .map(|(i, name)| Outcome {
            id: i as u8 + 1,
            name,
            status: Status::Skipped,
            detail: detail.to_string(),
        })
        .collect()
}

/// The 10 x 10 grid of feasible `(a, H)`: `a` in `[3.5, 6]`, `H` in
/// `[0, 0.9 H_threshold(a)]`.
pub fn parameter_grid() -> Vec<ModelParams> {
    let mut out = Vec::with_capacity(100);
    for i in 0..10 {
        let a = 3.5 + 2.5 * i as f64 / 9.0;
        for j in 0..10 {
            out.push(ModelParams::new(a, h_threshold(a) * j as f64 / 10.0));
        }
    }
    out
}

fn equilibrium_residual() -> Check {
    let mut worst = 0.0_f64;
    for p in parameter_grid() {
        let (eq, _) = analyze_params(&p).map_err(err)?;
        let r = rhs_no_delay(&p, &eq.as_array());
        worst = worst.max(r.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    verdict(worst < 1e-10, format!("max |rhs(E*)| = {worst:.3e} over 100 points"))
}

fn coefficient_identity() -> Check {
    let mut worst = 0.0_f64;
    for p in parameter_grid() {
        let (eq, c) = analyze_params(&p).map_err(err)?;
        let fl = oracle::faddeev_leverrier(&jacobian_no_delay(&p, &eq));
        let cubic = c.cubic();
        for k in 1..4 {
            worst = worst.max((fl[k] - cubic[k]).abs());
        }
    }
    verdict(worst < 1e-10, format!("max coefficient gap = {worst:.3e}"))
}

fn random_kernel(rng: &mut ChaCha8Rng, e: f64) -> Result<DelayKernel> {
    match rng.gen_range(0..6) {
        0 => DelayKernel::dirac(e),
        5 => DelayKernel::uniform(e),
        k => DelayKernel::erlang(k, e),
    }
}

fn frequency_bounds(ctx: &Ctx) -> Check {
    let mut min_gap = f64::INFINITY;
    for p in parameter_grid() {
        let (_, c) = analyze_params(&p).map_err(err)?;
        min_gap = min_gap.min(c.a3 * c.a3 - c.a5 * c.a5);
    }
    if !(min_gap > 0.0) {
        return Err(format!("a3^2 - a5^2 = {min_gap:.3e} on the grid"));
    }

    let c = &ctx.coeffs;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let (mut worst, mut dirac_worst, mut dirac_n) = (f64::NEG_INFINITY, 0.0_f64, 0);
    for _ in 0..1000 {
        let e = rng.gen_range(0.0..5.0);
        let w = rng.gen_range(0.0..5.0);
        let k = random_kernel(&mut rng, e).map_err(err)?;
        let env = schwartz_envelope(c, w);
        let f = f_of_omega(c, &k, w);
        worst = worst.max(f / env - 1.0);
        if k.family() == KernelFamily::Dirac {
            dirac_n += 1;
            dirac_worst = dirac_worst.max((f - env).abs() / env);
        }
    }
    verdict(
        worst <= 1e-12 && dirac_worst <= 1e-12,
        format!(
            "min a3^2-a5^2 = {min_gap:.3e}; max F/env - 1 = {worst:.3e}; Dirac ({dirac_n}) saturation gap = {dirac_worst:.3e}"
        ),
    )
}

fn omega0_identity(ctx: &Ctx) -> Check {
    let c = &ctx.coeffs;
    let w0 = omega0(c).map_err(err)?;
    let env = schwartz_envelope(c, w0);
    let rel = (g_of_omega(c, w0) - env).abs() / env;
    let bisect = oracle::bisection_omega0(c).ok_or("bisection oracle found no sign change")?;
    let gap = (w0 - bisect).abs();
    verdict(
        rel < 1e-9 && gap < 1e-10,
        format!("omega0 = {w0:.12}; |G - env|/env = {rel:.3e}; |closed - bisection| = {gap:.3e}"),
    )
}

/// Families whose crossing is checked: the configured one, Dirac and Erlang 1..3.
fn families(ctx: &Ctx) -> Vec<KernelFamily> {
    let mut v = vec![ctx.family];
    for f in [
        KernelFamily::Dirac,
        KernelFamily::Erlang { shape: 1 },
        KernelFamily::Erlang { shape: 2 },
        KernelFamily::Erlang { shape: 3 },
    ] {
        if !v.contains(&f) {
            v.push(f);
        }
    }
    v
}

fn omega1_bracket(ctx: &Ctx) -> Check {
    let c = &ctx.coeffs;
    let mut parts = Vec::new();
    let mut ok = true;
    for fam in families(ctx) {
        let a = report::analyze(c, fam, None).map_err(err)?;
        let (w0, w1) = (a.curves.omega0, a.curves.omega1);
        let k = DelayKernel::new(fam, a.hopf.e_crit).map_err(err)?;
        let g = g_of_omega(c, w1);
        let rel = (f_of_omega(c, &k, w1) - g).abs() / g;
        ok &= w1 > 0.0 && w1 <= w0 && rel < 1e-9;
        if fam == KernelFamily::Dirac {
            ok &= (w1 - w0).abs() < 1e-8;
        }
        parts.push(format!("{fam}: omega1 = {w1:.10} (|F-G|/G = {rel:.1e})"));
    }
    verdict(ok, parts.join("; "))
}

fn moments_back_substitution(ctx: &Ctx, analysis: &Result<Analysis>) -> Check {
    let c = &ctx.coeffs;
    let a = analysis.as_ref().map_err(|e| format!("error: {e}"))?;
    let mut worst = 0.0_f64;
    for w in [a.curves.omega0, a.curves.omega1, a.hopf.omega_crit] {
        let (cm, sm) = moments_at_crossing(c, w).map_err(err)?;
        let (r1, r2) = crossing_residuals(c, w, cm, sm);
        worst = worst.max(r1.abs()).max(r2.abs());
    }
    // at the actual crossing the kernel's own moments must solve the system
    let k = DelayKernel::new(ctx.family, a.hopf.e_crit).map_err(err)?;
    let w = a.hopf.omega_crit;
    let (cm, sm) = moments_at_crossing(c, w).map_err(err)?;
    let kernel_gap = (cm - k.cosine_moment(w)).abs().max((sm - k.sine_moment(w)).abs());
    verdict(
        worst < 1e-9 && kernel_gap < 1e-8,
        format!("max residual = {worst:.3e}; kernel moments at crossing differ by {kernel_gap:.3e}"),
    )
}

fn bound_consistency(ctx: &Ctx) -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for fam in families(ctx) {
        let a = report::analyze(&ctx.coeffs, fam, None).map_err(err)?;
        ok &= a.hopf.e_crit >= a.curves.e1_bound;
        parts.push(format!("{fam}: {:.6} >= {:.6}", a.hopf.e_crit, a.curves.e1_bound));
    }
    verdict(ok, parts.join("; "))
}

fn root_finder_oracle(ctx: &Ctx) -> Check {
    let c = &ctx.coeffs;
    let (mut worst, mut count_mismatch, mut cases) = (0.0_f64, Vec::new(), 0);
    for shape in 1..=3 {
        let fam = KernelFamily::Erlang { shape };
        let e_crit = report::analyze(c, fam, None).map_err(err)?.hopf.e_crit;
        for e in [0.25 * e_crit, e_crit, 2.0 * e_crit] {
            let k = DelayKernel::new(fam, e).map_err(err)?;
            let poly = oracle::erlang_reduced_polynomial(c, shape, e);
            let roots = oracle::polynomial_roots(&poly);
            let lead = oracle::rightmost_polynomial_root(&poly);
            let r = rightmost_root(c, &k).map_err(err)?;
            worst = worst.max((r.lambda.re - lead.re).abs()).max((r.lambda.im - lead.im.abs()).abs());
            let w = search_window(c, &k);
            for rect in [w, Rectangle::new(-0.5, 0.5, -0.01, 1.0), Rectangle::new(-3.0, -0.05, -2.0, 2.0)] {
                cases += 1;
                let expected = roots.iter().filter(|z| rect.contains(**z, 0.0)).count();
                let got = count_roots_in_rectangle(c, &k, &rect).map_err(err)?;
                if got != expected {
                    count_mismatch.push(format!("k={shape} E={e:.4}: {got} vs {expected}"));
                }
            }
        }
    }
    verdict(
        worst < 1e-8 && count_mismatch.is_empty(),
        format!(
            "max |rightmost - polynomial| = {worst:.3e}; {} of {cases} rectangle counts disagree {}",
            count_mismatch.len(),
            count_mismatch.join(" ")
        )
        .trim_end()
        .to_string(),
    )
}

fn zero_delay_spectrum(ctx: &Ctx) -> Check {
    let lead = oracle::jacobian_leading_eigenvalue(&ctx.params, &ctx.eq);
    let k = DelayKernel::new(ctx.family, 0.0).map_err(err)?;
    let r = rightmost_root(&ctx.coeffs, &k).map_err(err)?;
    let gap = (r.lambda.re - lead.re).abs().max((r.lambda.im - lead.im.abs()).abs());
    verdict(gap < 1e-8, format!("rightmost at E=0: {:.10}; eigenvalue gap = {gap:.3e}", r.lambda))
}

fn transversality_secant(ctx: &Ctx, analysis: &Result<Analysis>) -> Check {
    let a = analysis.as_ref().map_err(|e| format!("error: {e}"))?;
    let h = a.hopf;
    let step = 1e-5 * h.e_crit;
    let mu = |e: f64| -> Result<f64> {
        Ok(rightmost_root(&ctx.coeffs, &DelayKernel::new(ctx.family, e)?)?.lambda.re)
    };
    let secant = (mu(h.e_crit + step).map_err(err)? - mu(h.e_crit - step).map_err(err)?) / (2.0 * step);
    let rel = (secant - h.transversal_slope).abs() / h.transversal_slope.abs();
    verdict(
        rel < 1e-3 && h.transversal_ok && h.transversal_slope != 0.0,
        format!("analytic {:.8}; secant {secant:.8}; rel gap {rel:.2e}", h.transversal_slope),
    )
}

fn perturbed(ctx: &Ctx) -> History {
    match ctx.sim.history {
        History::Perturbed { rho } => History::Perturbed { rho },
        History::Equilibrium => History::Perturbed { rho: History::DEFAULT_RHO },
    }
}

fn chain_vs_convolution(ctx: &Ctx) -> Check {
    let fam = KernelFamily::Erlang { shape: 2 };
    let e = report::analyze(&ctx.coeffs, fam, None).map_err(err)?.hopf.e_crit;
    let k = DelayKernel::new(fam, e).map_err(err)?;
    let base = SimConfig { t_end: 50.0, dt: 1e-3, history: perturbed(ctx), ..ctx.sim };
    let chain = simulate(&ctx.params, &k, &SimConfig { method: Method::Chain, ..base }).map_err(err)?;
    let conv = simulate(&ctx.params, &k, &SimConfig { method: Method::Convolution, ..base }).map_err(err)?;
    let d = chain.sup_distance(&conv);
    verdict(d < 1e-4, format!("Erlang(2), E = {e:.6}: sup |chain - convolution| = {d:.3e}"))
}

/// The three simulation runs around the crossing.
pub struct Witness {
    pub runs: Vec<(DelayKernel, Trajectory, CycleMetrics)>,
}

fn witness_runs(ctx: &Ctx, analysis: &Result<Analysis>) -> Result<Witness> {
    let a = analysis.as_ref().map_err(|e| Error::ConvergenceFailure(e.to_string()))?;
    let mut runs = Vec::new();
    for (f, t_end) in WITNESS_FACTORS.iter().zip(WITNESS_T_END) {
        let k = DelayKernel::new(ctx.family, f * a.hopf.e_crit)?;
        let cfg = SimConfig { t_end, history: perturbed(ctx), ..ctx.sim };
        let traj = simulate(&ctx.params, &k, &cfg)?;
        let m = limit_cycle_metrics(&traj, &ctx.eq, cfg.transient_fraction)?;
        runs.push((k, traj, m));
    }
    Ok(Witness { runs })
}

fn hopf_witness(ctx: &Ctx, analysis: &Result<Analysis>, witness: &Result<Witness>) -> Check {
    let a = analysis.as_ref().map_err(|e| format!("error: {e}"))?;
    let w = witness.as_ref().map_err(|e| format!("error: {e}"))?;
    let mut parts = Vec::new();
    let mut ok = true;

    let initial = (perturbed(ctx).initial_state(&ctx.eq)[2] - ctx.eq.x3).abs();
    let (_, _, sub) = &w.runs[1];
    let decay = initial / sub.amplitude[2];
    ok &= decay >= 10.0 && sub.decaying;
    parts.push(format!("0.9 E_crit: amplitude down {decay:.1}x"));

    let (_, _, sup) = &w.runs[2];
    let target = a.hopf.period();
    match sup.period {
        Some(p) => {
            let rel = (p - target).abs() / target;
            ok &= rel < 0.05 && !sup.decaying;
            parts.push(format!("1.1 E_crit: period {p:.4} vs {target:.4} ({:.2}%)", 100.0 * rel));
        }
        None => {
            ok = false;
            parts.push("1.1 E_crit: no regular period".into());
        }
    }

    for (f, (k, traj, _)) in WITNESS_FACTORS.iter().zip(&w.runs) {
        let mu = rightmost_root(&ctx.coeffs, k).map_err(err)?.lambda.re;
        match growth_rate(traj, &ctx.eq, FIT_WINDOW.0, FIT_WINDOW.1) {
            Some(g) => {
                let rel = (g - mu).abs() / mu.abs();
                ok &= rel < 0.1;
                parts.push(format!("{f} E_crit: rate {g:.5} vs mu {mu:.5}"));
            }
            None => {
                ok = false;
                parts.push(format!("{f} E_crit: too few peaks to fit a rate"));
            }
        }
    }
    verdict(ok, parts.join("; "))
}

fn degenerate_reductions(ctx: &Ctx) -> Check {
    let p = &ctx.params;
    let eq = ctx.eq.as_array();
    let base = SimConfig { t_end: 50.0, ..ctx.sim };

    let hist = perturbed(ctx);
    let zero = DelayKernel::new(ctx.family, 0.0).map_err(err)?;
    let cfg = SimConfig { method: Method::Convolution, history: hist, ..base };
    let delayed = simulate(p, &zero, &cfg).map_err(err)?;
    let steps = delayed.len() - 1;
    let plain = integrate_no_delay(p, hist.initial_state(&ctx.eq), cfg.dt, steps);
    let d0 = delayed.sup_distance(&plain);

    let still = SimConfig { history: History::Equilibrium, ..base };
    let mut worst = 0.0_f64;
    let erlang = DelayKernel::erlang(2, 1.0).map_err(err)?;
    for m in [Method::Chain, Method::Convolution] {
        let tr = simulate(p, &erlang, &SimConfig { method: m, ..still }).map_err(err)?;
        worst = worst.max(tr.max_deviation(&eq));
    }
    let configured = ctx.cfg.kernel().map_err(err)?;
    let method = if configured.family().shape().is_some() { ctx.sim.method } else { Method::Convolution };
    let tr = simulate(p, &configured, &SimConfig { method, ..still }).map_err(err)?;
    worst = worst.max(tr.max_deviation(&eq));

    verdict(
        d0 < 1e-10 && worst < 1e-6,
        format!("E=0 vs delay-free = {d0:.3e}; max drift from E* = {worst:.3e}"),
    )
}

struct Artifacts {
    files: Vec<(String, String)>,
    witness: Result<Witness>,
}

/// CSV files written by `validate`: analysis, scan, the supercritical
/// trajectory and one metrics row per witness run.
fn build_artifacts(ctx: &Ctx, analysis: &Result<Analysis>) -> Artifacts {
    let mut files = Vec::new();
    if let Ok(a) = analysis {
        files.push(("analysis.csv".to_string(), a.csv()));
    }
    let rows = report::scan(&ctx.coeffs, ctx.family, &ctx.cfg.scan_grid());
    files.push(("scan.csv".to_string(), report::scan_csv(&rows)));

    let witness = witness_runs(ctx, analysis);
    if let Ok(w) = &witness {
        let (k, traj, _) = &w.runs[2];
        files.push((
            "trajectory.csv".to_string(),
            report::trajectory_csv(traj, &ctx.cfg, k, ctx.cfg.sim.output_every),
        ));
        let mut metrics = format!("{}\n", report::METRICS_HEADER);
        for (k, traj, m) in &w.runs {
            metrics.push_str(&report::metrics_row(k, ctx.sim.method, traj, m));
            metrics.push('\n');
        }
        files.push(("metrics.csv".to_string(), metrics));
    }
    Artifacts { files, witness }
}

fn determinism(ctx: &Ctx, analysis: &Result<Analysis>, first: &[(String, String)]) -> Check {
    let again = report::analyze(&ctx.coeffs, ctx.family, None);
    let second = build_artifacts(ctx, &again).files;
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    let same_analysis = match (analysis, &again) {
        (Ok(a), Ok(b)) => a == b,
        (Err(_), Err(_)) => true,
        _ => false,
    };
    verdict(
        same_analysis && first == second.as_slice() && names.len() == 4,
        format!("{} regenerated byte-identically", names.join(", ")),
    )
}
