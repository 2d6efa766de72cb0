//! The named studies. Each fills one table and a list of threshold checks;
//! checks tied to an acceptance criterion carry its number.

use std::time::Instant;

use dfsl_core::aronson::{aronson_envelope, aronson_params, envelope_fit, RegimeTest};
use dfsl_core::kernel::{chapman_kolmogorov_residual, conservativeness_check, kernel_limit_stability, CompositionSteps};
use dfsl_core::mc::{nonexplosion_consistent, simulate, tail_consistency, tv_distance, McConfig};
use dfsl_core::pde::{energy_residual, evolve_with, EvolveOptions, Record};
use dfsl_core::resolvent::{
    log_weighted_ratio, resolve, resolvent_bounds, resolvent_identity_residual, semigroup_via_resolvent, tail_mass,
    LogWeight,
};
use dfsl_core::ScalarField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Study;
use crate::error::Result;
use crate::experiment::Experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    Below,
    AtLeast,
}

impl Relation {
    pub fn symbol(&self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Below => "<",
            Relation::AtLeast => ">=",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "<=" => Some(Relation::AtMost),
            "<" => Some(Relation::Below),
            ">=" => Some(Relation::AtLeast),
            _ => None,
        }
    }

    fn holds(&self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::AtMost => value <= threshold,
            Relation::Below => value < threshold,
            Relation::AtLeast => value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub criterion: Option<u8>,
    pub value: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, criterion: Option<u8>, value: f64, relation: Relation, threshold: f64) -> Self {
        Self { name: name.into(), criterion, value, threshold, relation, passed: relation.holds(value, threshold) }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub study: Study,
    pub table: Table,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl StudyOutcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }
}

struct Sink {
    table: Table,
    checks: Vec<Check>,
}

impl Sink {
    fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.table.header.len());
        self.table.rows.push(cells);
    }

    fn check(&mut self, name: &str, criterion: Option<u8>, value: f64, relation: Relation, threshold: f64) {
        self.checks.push(Check::new(name, criterion, value, relation, threshold));
    }
}

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn header(study: Study) -> &'static [&'static str] {
    match study {
        Study::Baseline => &["time", "l1_relative", "mass", "peak", "exact_peak"],
        Study::Conservativeness => &["level", "epsilon", "forward_defect", "adjoint_defect"],
        Study::Chapman => &["case", "direct_dt", "first_leg_dt", "second_leg_dt", "residual"],
        Study::Energy => &["dt", "theta", "residual", "order"],
        Study::Resolvent => &[
            "kind",
            "alpha",
            "sample",
            "residual",
            "iterations",
            "l2_ratio",
            "h1_ratio",
            "energy_ratio",
            "identity_residual",
            "value",
        ],
        Study::Weighted => &[
            "epsilon",
            "alpha",
            "gamma_w",
            "l2_ratio",
            "h1_ratio",
            "weighted_ratio",
            "tail_mass_r1",
            "tail_mass_r2",
        ],
        Study::Convergence => &["kind", "epsilon_coarse", "epsilon_fine", "cauchy_diff"],
        Study::Envelope => &[
            "time",
            "mass",
            "peak",
            "on_diagonal_scaled",
            "near_exponent",
            "violations",
            "points",
            "c1",
            "c2",
            "mu",
            "nu",
        ],
        Study::Mc => &["metric", "value"],
        Study::Duhamel => &["epsilon", "difference", "bound", "ratio"],
    }
}

pub fn run_study(study: Study, exp: &mut Experiment) -> StudyOutcome {
    let start = Instant::now();
    let mut sink = Sink {
        table: Table { header: header(study).iter().map(|s| s.to_string()).collect(), rows: Vec::new() },
        checks: Vec::new(),
    };
    let result = match study {
        Study::Baseline => baseline(exp, &mut sink),
        Study::Conservativeness => conservativeness(exp, &mut sink),
        Study::Chapman => chapman(exp, &mut sink),
        Study::Energy => energy(exp, &mut sink),
        Study::Resolvent => resolvent(exp, &mut sink),
        Study::Weighted => weighted(exp, &mut sink),
        Study::Convergence => convergence(exp, &mut sink),
        Study::Envelope => envelope(exp, &mut sink),
        Study::Mc => monte_carlo(exp, &mut sink),
        Study::Duhamel => duhamel(exp, &mut sink),
    };
    StudyOutcome {
        study,
        table: sink.table,
        checks: sink.checks,
        error: result.err().map(|e| e.to_string()),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Periodic heat kernel `Σ_m (4πt)^{-n/2} exp(-|x − y + mL|²/4t)` over the
/// nearest images.
fn periodic_heat_kernel(exp: &Experiment, t: f64, y: &[f64; 3]) -> Vec<f64> {
    let g = &exp.grid;
    let n = g.dim();
    let l = g.box_length();
    let norm = (4.0 * std::f64::consts::PI * t).powf(-(n as f64) / 2.0);
    let shifts: Vec<[f64; 3]> = (0..3usize.pow(n as u32))
        .map(|code| {
            let mut s = [0.0; 3];
            let mut c = code;
            for axis in s.iter_mut().take(n) {
                *axis = (c % 3) as f64 - 1.0;
                c /= 3;
            }
            s
        })
        .collect();
    (0..g.len())
        .map(|i| {
            let d = g.displacement(i, y);
            shifts
                .iter()
                .map(|s| {
                    let d2: f64 = (0..n).map(|k| (d[k] + s[k] * l).powi(2)).sum();
                    norm * (-d2 / (4.0 * t)).exp()
                })
                .sum()
        })
        .collect()
}

fn baseline(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let t = exp.horizon();
    let slice = exp.slice_at(t)?;
    let exact = periodic_heat_kernel(exp, t, &slice.source_point());
    let diff: f64 = slice.values.values().iter().zip(&exact).map(|(u, e)| (u - e).abs()).sum();
    let l1 = diff / exact.iter().map(|e| e.abs()).sum::<f64>();
    let exact_peak = exact.iter().copied().fold(0.0, f64::max);
    out.row(vec![num(t), num(l1), num(slice.mass), num(slice.peak()), num(exact_peak)]);
    out.check("heat kernel relative L1 error", Some(1), l1, Relation::AtMost, exp.loaded.config.thresholds.baseline_l1);
    Ok(())
}

fn conservativeness(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let t = exp.horizon();
    let opts = exp.kernel_options();
    let family = exp.family()?;
    let mut levels = vec![("target".to_string(), f64::NAN, &exp.op)];
    for (k, (eps, op)) in family.epsilons().iter().zip(family.operators()).enumerate() {
        levels.push((format!("k{k}"), *eps, op));
    }
    let (mut fwd_max, mut adj_max) = (0.0f64, 0.0f64);
    for (label, eps, op) in levels {
        let (fwd, adj) = conservativeness_check(op, t, &opts)?;
        fwd_max = fwd_max.max(fwd);
        adj_max = adj_max.max(adj);
        let eps = if eps.is_nan() { String::new() } else { num(eps) };
        out.row(vec![label, eps, num(fwd), num(adj)]);
    }
    let tol = exp.loaded.config.thresholds.conservation;
    out.check("max |row integral - 1|", Some(2), fwd_max, Relation::AtMost, tol);
    out.check("max |column integral - 1|", Some(2), adj_max, Relation::AtMost, tol);
    Ok(())
}

fn chapman(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let cfg = &exp.loaded.config;
    let (dt, theta, horizon) = (cfg.scheme.dt, cfg.scheme.theta, cfg.scheme.horizon);
    let s = cfg.study.chapman_split * horizon;
    let t = horizon - s;
    let [f1, f2] = cfg.study.chapman_leg_factors;
    let th = cfg.thresholds;
    let matched = CompositionSteps::matched(dt);
    let coarse = CompositionSteps { direct: dt, first_leg: f1 * dt, second_leg: f2 * dt };
    let fine = coarse.halved();
    let mut residuals = Vec::new();
    for (case, steps) in [("matched", matched), ("mismatched", coarse), ("mismatched_refined", fine)] {
        let r = chapman_kolmogorov_residual(&exp.op, t, s, &exp.source, &steps, theta)?;
        out.row(vec![case.into(), num(steps.direct), num(steps.first_leg), num(steps.second_leg), num(r)]);
        residuals.push(r);
    }
    out.check("matched-step residual", Some(3), residuals[0], Relation::AtMost, th.chapman_matched);
    out.check("mismatched-step residual", Some(3), residuals[1], Relation::AtMost, th.chapman_mismatched);
    out.check("refined mismatched-step residual", Some(3), residuals[2], Relation::AtMost, th.chapman_mismatched);
    out.check("residual ratio under step halving", Some(3), residuals[2] / residuals[1], Relation::AtMost, th.chapman_refinement);
    Ok(())
}

fn energy(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let cfg = &exp.loaded.config;
    let u0 = exp.bump();
    let mut residuals = Vec::new();
    for j in 0..=cfg.study.energy_levels {
        let dt = cfg.scheme.dt * 2f64.powi(j as i32);
        let traj = evolve_with(&exp.op, &u0, cfg.scheme.horizon, &EvolveOptions::new(dt, cfg.scheme.theta).record(Record::All))?;
        residuals.push((dt, energy_residual(&traj, &exp.a)?));
    }
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[1].1 / w[0].1).log2()).collect();
    for (j, (dt, r)) in residuals.iter().enumerate() {
        let order = if j == 0 { String::new() } else { num(orders[j - 1]) };
        out.row(vec![num(*dt), num(cfg.scheme.theta), num(*r), order]);
    }
    out.check("relative energy residual at dt", Some(4), residuals[0].1, Relation::AtMost, cfg.thresholds.energy_residual);
    out.check("observed order under step halving", Some(4), orders[0], Relation::AtLeast, cfg.thresholds.energy_order);
    Ok(())
}

fn white_noise(exp: &Experiment, rng: &mut ChaCha8Rng) -> Result<ScalarField> {
    let values = (0..exp.grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(ScalarField::new(exp.grid, values)?)
}

fn resolvent(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let cfg = exp.loaded.config.clone();
    let p = &cfg.study;
    let bound = 1.0 + cfg.thresholds.resolvent_slack;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.resolvent);
    let (mut l2_max, mut h1_max, mut energy_max, mut identity_max, mut residual_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &alpha in &p.resolvent_alphas {
        for sample in 0..p.resolvent_samples {
            let f = white_noise(exp, &mut rng)?;
            let r = resolve(&exp.op, alpha, &f)?;
            let bounds = resolvent_bounds(&r, exp.a.lambda());
            let identity = if sample < p.identity_pairs {
                let v = white_noise(exp, &mut rng)?;
                let res = resolvent_identity_residual(&r, &exp.a, &exp.b, &v)?;
                identity_max = identity_max.max(res);
                num(res)
            } else {
                String::new()
            };
            l2_max = l2_max.max(bounds.l2_ratio);
            h1_max = h1_max.max(bounds.h1_ratio);
            energy_max = energy_max.max(bounds.energy_ratio);
            residual_max = residual_max.max(r.residual);
            out.row(vec![
                "sample".into(),
                num(alpha),
                sample.to_string(),
                num(r.residual),
                r.iterations.to_string(),
                num(bounds.l2_ratio),
                num(bounds.h1_ratio),
                num(bounds.energy_ratio),
                identity,
                String::new(),
            ]);
        }
    }

    let u0 = exp.bump();
    let t = cfg.scheme.horizon;
    let n = p.cross_route_steps;
    let stepped = evolve_with(&exp.op, &u0, t, &EvolveOptions::new(cfg.scheme.dt, cfg.scheme.theta).record(Record::Final))?
        .into_final();
    let iterated = semigroup_via_resolvent(&exp.op, &u0, t, n)?;
    let cross = stepped.sub(&iterated)?.l2_norm() / u0.l2_norm();
    let mut row = vec![String::new(); 10];
    row[0] = "cross_route".into();
    row[1] = num(n as f64 / t);
    row[2] = n.to_string();
    row[9] = num(cross);
    out.row(row);

    out.check("max alpha·|R f| / |f|", Some(5), l2_max, Relation::AtMost, bound);
    out.check("max min(lambda, alpha)·|R f|_H1 / |f|", Some(5), h1_max, Relation::AtMost, bound);
    out.check("max energy ratio", Some(5), energy_max, Relation::AtMost, bound);
    out.check("max resolvent identity residual", Some(5), identity_max, Relation::AtMost, cfg.thresholds.resolvent_identity);
    out.check("max solve residual", None, residual_max, Relation::AtMost, cfg.thresholds.resolvent_identity);
    out.check("time stepping vs resolvent iteration", Some(10), cross, Relation::AtMost, cfg.thresholds.cross_route);
    Ok(())
}

fn weighted(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let cfg = exp.loaded.config.clone();
    let lambda = exp.a.lambda();
    let grid = exp.grid;
    let eps = exp.family()?.epsilons().to_vec();
    let results = exp.family_resolvents()?;
    let (r1, r2) = (grid.box_length() / 4.0, 3.0 * grid.box_length() / 8.0);
    let mut tails_ordered = true;
    for &gamma in &cfg.study.weighted_gammas {
        let w = LogWeight::new(grid, gamma)?;
        let mut ratios = Vec::with_capacity(results.len());
        for (e, r) in eps.iter().zip(results) {
            let ratio = log_weighted_ratio(r, &w)?;
            let bounds = resolvent_bounds(r, lambda);
            let (t1, t2) = (tail_mass(&r.u, r1)?, tail_mass(&r.u, r2)?);
            tails_ordered &= t2 <= t1;
            ratios.push(ratio);
            out.row(vec![
                num(*e),
                num(r.alpha),
                num(gamma),
                num(bounds.l2_ratio),
                num(bounds.h1_ratio),
                num(ratio),
                num(t1),
                num(t2),
            ]);
        }
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
        out.check(&format!("weighted ratio spread across the ladder, gamma_w = {gamma}"), Some(6), spread, Relation::AtMost, cfg.thresholds.weighted_spread);
        out.check(&format!("weighted ratio is finite, gamma_w = {gamma}"), Some(6), f64::from(u8::from(hi.is_finite())), Relation::AtLeast, 1.0);
    }
    out.check("tail mass decreases in the radius", None, f64::from(u8::from(tails_ordered)), Relation::AtLeast, 1.0);
    Ok(())
}

/// Largest ratio `d_{k+1}/d_k`; pairs that both sit at `floor` count as
/// converged and contribute zero.
fn worst_ratio(diffs: &[f64], floor: f64) -> f64 {
    diffs
        .windows(2)
        .map(|w| if w[0] <= floor && w[1] <= floor { 0.0 } else { w[1] / w[0] })
        .fold(0.0, f64::max)
}

fn convergence(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let th = exp.loaded.config.thresholds;
    let t = exp.horizon();
    let opts = exp.kernel_options();
    let eps = exp.family()?.epsilons().to_vec();
    let results = exp.family_resolvents()?;
    let resolvent_cauchy = results.windows(2).map(|w| w[0].u.sub(&w[1].u).map(|d| d.l2_norm())).collect::<dfsl_core::Result<Vec<_>>>()?;
    let resolvent_scale = results.last().map(|r| r.u_l2).unwrap_or(0.0);
    let runs = exp.ladder_runs()?;
    let solution_cauchy = runs.cauchy.clone();
    let solution_scale = runs.finals.last().map(|u| u.l2_norm()).unwrap_or(0.0);
    let limit = kernel_limit_stability(exp.family()?, t, &exp.offset_source(), &opts)?;

    for (kind, diffs) in [("resolvent", &resolvent_cauchy), ("solution", &solution_cauchy), ("kernel", &limit.differences)] {
        for (k, d) in diffs.iter().enumerate() {
            out.row(vec![kind.into(), num(eps[k]), num(eps[k + 1]), num(*d)]);
        }
    }
    let floor = 1e-12;
    out.check("resolvent Cauchy ratio", Some(7), worst_ratio(&resolvent_cauchy, floor * resolvent_scale), Relation::Below, 1.0);
    out.check("solution Cauchy ratio", Some(7), worst_ratio(&solution_cauchy, floor * solution_scale), Relation::Below, 1.0);
    out.check("kernel difference ratio", None, worst_ratio(&limit.differences, floor), Relation::AtMost, 1.0);
    out.check("final kernel difference", None, *limit.differences.last().unwrap_or(&0.0), Relation::AtMost, th.limit_final);
    out.check("kernel mass defect", None, limit.max_mass_defect(), Relation::AtMost, th.limit_mass);
    Ok(())
}

fn duhamel(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let slack = exp.loaded.config.thresholds.duhamel_slack;
    let runs = exp.ladder_runs()?;
    let mut worst = 0.0f64;
    let mut all_hold = true;
    for (eps, rep) in runs.epsilons.iter().zip(&runs.reports) {
        let ratio = if rep.difference <= 1e-12 { 0.0 } else { rep.difference / rep.bound };
        worst = worst.max(ratio);
        all_hold &= rep.holds(slack);
        out.row(vec![num(*eps), num(rep.difference), num(rep.bound), num(ratio)]);
    }
    out.check("max difference / Duhamel bound", Some(7), worst, Relation::AtMost, 1.0 + slack);
    out.check("Duhamel inequality at every level", Some(7), f64::from(u8::from(all_hold)), Relation::AtLeast, 1.0);
    Ok(())
}

/// The `μ = 2, ν = 1` parameters (`l = ∞`, `q = n`): both regime tests and
/// the closed-form Gaussian must agree.
fn branch_coincidence(dim: usize) -> Result<(f64, f64)> {
    let (c1, c2) = (0.7, 4.0);
    let p = aronson_params(f64::INFINITY, dim as f64, dim, 1.0, 1.0)?.with_constants(c1, c2);
    let xi = [0.2, -0.1, 0.4];
    let (mut regime_gap, mut gaussian_gap) = (0.0f64, 0.0f64);
    for i in 0..64 {
        let s = i as f64;
        let x = [(0.37 * s).sin() * 2.5, (0.91 * s).cos() * 2.5, (0.13 * s).sin() * 2.5];
        let t = 0.01 + 0.05 * (i % 7) as f64;
        let near = aronson_envelope(&p, t, 0.0, &x[..dim], &xi[..dim], RegimeTest::Displacement)?;
        let verbatim = aronson_envelope(&p, t, 0.0, &x[..dim], &xi[..dim], RegimeTest::Position { origin: [0.0; 3] })?;
        let d2: f64 = (0..dim).map(|k| (x[k] - xi[k]).powi(2)).sum();
        let gauss = c1 / t.powf(dim as f64 / 2.0) * (-d2 / t / c2).exp();
        regime_gap = regime_gap.max((near - verbatim).abs());
        gaussian_gap = gaussian_gap.max((near - gauss).abs() / gauss.max(f64::MIN_POSITIVE));
    }
    Ok((regime_gap, gaussian_gap))
}

fn envelope(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let th = exp.loaded.config.thresholds;
    let times = exp.loaded.config.study.envelope_times.clone();
    let params = exp.aronson.ok_or_else(|| crate::error::CliError::Validation("envelope parameters missing".into()))?;
    let slices = times.iter().map(|&t| exp.slice_at(t)).collect::<Result<Vec<_>>>()?;
    let fit = envelope_fit(&slices, &params)?;
    let mut diag_ratio = 0.0f64;
    for s in &fit.slices {
        diag_ratio = diag_ratio.max(s.on_diagonal_scaled / fit.c1);
        out.row(vec![
            num(s.time),
            num(s.mass),
            num(s.peak),
            num(s.on_diagonal_scaled),
            num(s.near_exponent),
            s.violations.to_string(),
            s.points.to_string(),
            num(fit.c1),
            num(fit.c2),
            num(params.mu),
            num(params.nu),
        ]);
    }
    let (regime_gap, gaussian_gap) = branch_coincidence(exp.grid.dim())?;
    out.check("envelope violations above factor 1.05", Some(8), fit.violations as f64, Relation::AtMost, 0.0);
    out.check("near-field exponent lower bound", Some(8), fit.near_exponent, Relation::AtLeast, th.near_exponent_min);
    out.check("near-field exponent upper bound", Some(8), fit.near_exponent, Relation::AtMost, th.near_exponent_max);
    out.check("max on-diagonal t^(n/2)·Γ(t,y,y) / C1", Some(8), diag_ratio, Relation::AtMost, 1.0);
    out.check("branch coincidence: regime tests", Some(8), regime_gap, Relation::AtMost, 0.0);
    out.check("branch coincidence: Gaussian closed form", Some(8), gaussian_gap, Relation::AtMost, 1e-12);
    Ok(())
}

fn monte_carlo(exp: &mut Experiment, out: &mut Sink) -> Result<()> {
    let cfg = exp.loaded.config.clone();
    let t = cfg.scheme.horizon;
    let root = (2.0 * t).sqrt();
    let grid = exp.grid;
    let mc = McConfig {
        start: grid.coordinate(grid.flat_index(&exp.source[..grid.dim()])),
        horizon: t,
        dt: t / cfg.mc.steps as f64,
        paths: cfg.mc.paths,
        seed: cfg.seeds.mc,
        exit_radius: (cfg.mc.exit_radius * root).min(0.45 * grid.box_length()),
    };
    let sample = simulate(&exp.b, &mc)?;
    let slice = exp.slice_at(t)?;
    let tv = tv_distance(&sample, &slice, cfg.mc.bins)?;
    let tail = tail_consistency(&sample, &slice, cfg.mc.tail_radius * root)?;
    let (exit, exit_tail, _) = nonexplosion_consistent(&sample, &slice, mc.exit_radius)?;
    let k = cfg.thresholds.mc_sigmas;
    let tail_z = if tail.sigma > 0.0 {
        (tail.mc_tail - tail.pde_tail).abs() / tail.sigma
    } else if (tail.mc_tail - tail.pde_tail).abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };
    let exit_limit = exit_tail.pde_tail.max(0.0) + k * exit_tail.sigma + 1e-12;
    for (metric, value) in [
        ("tv_distance", tv),
        ("paths", mc.paths as f64),
        ("tail_radius", tail.radius),
        ("pde_tail", tail.pde_tail),
        ("mc_tail", tail.mc_tail),
        ("tail_sigma", tail.sigma),
        ("exit_radius", mc.exit_radius),
        ("exit_fraction", exit),
        ("exit_pde_tail", exit_tail.pde_tail),
        ("exit_sigma", exit_tail.sigma),
    ] {
        out.row(vec![metric.into(), num(value)]);
    }
    out.check("TV distance to the forward slice", Some(9), tv, Relation::AtMost, cfg.mc_tv_threshold());
    out.check("tail mismatch in standard deviations", Some(9), tail_z, Relation::AtMost, k);
    out.check("exit fraction against the PDE tail", Some(9), exit, Relation::AtMost, exit_limit);
    Ok(())
}
