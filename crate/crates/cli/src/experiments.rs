//! Experiment drivers: each maps a validated scenario onto the core crate
//! and produces the results.json object, CSV series, and report body.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader};

use serde_json::json;

use collapse_core::constants::M_PROTON;
use collapse_core::csl::{
    clump_rate, displaced_cube_rate, energy_gain_rate, germanium_bound, gravity_decay_exponent,
    parameter_relations, CslParameters, DensityMode, GravityVariant, LatticeMassDistribution,
};
use collapse_core::engine::{sample_linear_ensemble, sample_nonlinear_ensemble, EvolveOptions};
use collapse_core::ensemble::{
    ensemble_statistics, kernel_double_time_integral, offdiag_series, propagate_density_analytic,
    propagate_density_fourier, EnsembleStats,
};
use collapse_core::rel::{
    tachyon_kernel_exact, tachyon_kernel_nonrel_limit, tachyon_kernel_spectral_quadrature,
    tachyon_nonrel_radial_quadrature, KernelRegion,
};
use collapse_core::{
    CollapseOperatorSet, CoreError, DensityMatrix, HermitianOperator, Kernel, StateVector, TimeGrid,
};

use crate::checks::Subcheck;
use crate::config::{DistPrimitive, Experiment, MassUnit, Scenario};
use crate::output::{CsvBuilder, ScenarioOutput};

/// Anything that stops an experiment before results exist: inconsistent
/// geometry, violated core-library preconditions, unreadable input files.
#[derive(Debug)]
pub struct RunError(pub String);

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for RunError {}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        RunError(e.to_string())
    }
}

type Result<T> = std::result::Result<T, RunError>;

pub struct ExperimentRun {
    pub output: ScenarioOutput,
    /// Consistency gates evaluated under `run --check`.
    pub self_checks: Vec<Subcheck>,
}

pub fn run_scenario_experiment(sc: &Scenario) -> Result<ExperimentRun> {
    match sc.experiment {
        Experiment::GamblerRuin => gambler_ruin(sc),
        Experiment::OffdiagDecay => offdiag_decay(sc),
        Experiment::NonmarkovCompare => nonmarkov_compare(sc),
        Experiment::CslRates => csl_rates(sc),
        Experiment::GravityCompare => gravity_compare(sc),
        Experiment::KernelScan => kernel_scan(sc),
        Experiment::ParameterReport => parameter_report(sc),
    }
}

fn time_grid(t_final: f64, dt: f64) -> Result<TimeGrid> {
    if !(t_final > 0.0) || !(dt > 0.0) {
        return Err(RunError(format!(
            "need t_final > 0 and dt > 0, got {t_final}, {dt}"
        )));
    }
    let steps = t_final / dt;
    let n = steps.round();
    if n < 1.0 || (steps - n).abs() > 1e-6 * steps.max(1.0) {
        return Err(RunError(format!(
            "t_final must be a whole number of dt steps, got t_final/dt = {steps}"
        )));
    }
    Ok(TimeGrid::new(dt, n as usize)?)
}

fn stride_for(n_steps: usize, target_snapshots: usize) -> usize {
    (n_steps / target_snapshots.max(1)).max(1)
}

/// Joint-eigenbasis index -> original basis index, by the dominant
/// amplitude. Exact whenever the operators are diagonal with distinct
/// eigenvalues, which is how the two-level experiments build them.
fn comp_index(ops: &CollapseOperatorSet, k: usize) -> usize {
    let amps = ops.basis()[k].amplitudes();
    let mut best = 0;
    for (i, a) in amps.iter().enumerate() {
        if a.norm_sqr() > amps[best].norm_sqr() {
            best = i;
        }
    }
    best
}

/// Outcome fractions re-indexed to the original basis: (fraction, lo, hi)
/// per basis state, bounds summed over the joint indices that map there.
pub(crate) fn comp_fractions(
    stats: &EnsembleStats,
    ops: &CollapseOperatorSet,
) -> Vec<(f64, f64, f64)> {
    let d = ops.dim();
    let mut out = vec![(0.0, 0.0, 0.0); d];
    for (k, (f, lo, hi)) in stats.outcome_fractions.iter().enumerate() {
        let i = comp_index(ops, k);
        out[i].0 += f;
        out[i].1 += lo;
        out[i].2 += hi;
    }
    out
}

fn two_level_system(sc: &Scenario) -> Result<(StateVector, CollapseOperatorSet, f64)> {
    let amp0 = sc.real("amp0", f64::NAN);
    let amp1 = sc.real("amp1", f64::NAN);
    let a0 = sc.real("a0", 1.0);
    let a1 = sc.real("a1", -1.0);
    let lambda = sc.real("lambda", f64::NAN);
    if a0 == a1 {
        return Err(RunError(
            "a0 and a1 must differ or nothing collapses".into(),
        ));
    }
    let psi0 = StateVector::from_real(&[amp0, amp1])?.normalized()?;
    let a = HermitianOperator::from_diagonal(&[a0, a1])?;
    let ops = CollapseOperatorSet::new(vec![a], lambda, None)?;
    Ok((psi0, ops, (a0 - a1).abs()))
}

fn gambler_ruin(sc: &Scenario) -> Result<ExperimentRun> {
    let (psi0, ops, _) = two_level_system(sc)?;
    let grid = time_grid(sc.real("t_final", f64::NAN), sc.real("dt", f64::NAN))?;
    let n = sc.count("trajectories", 10_000) as usize;
    let engine = sc.word("engine", "nonlinear");
    let options = EvolveOptions {
        record_stride: stride_for(grid.n_steps(), 200),
        ..Default::default()
    };

    let records = match engine.as_str() {
        "nonlinear" => sample_nonlinear_ensemble(&psi0, &ops, grid, n, sc.seed, &options)?,
        "linear" => sample_linear_ensemble(&psi0, &ops, grid, n, sc.seed, &options)?,
        other => {
            return Err(RunError(format!(
                "engine must be nonlinear or linear, got '{other}'"
            )))
        }
    };
    let stats = ensemble_statistics(&records, &ops)?;
    let fractions = comp_fractions(&stats, &ops);
    let detected = n - stats.undetected;
    let born: Vec<f64> = psi0.amplitudes().iter().map(|a| a.norm_sqr()).collect();

    let results = json!({
        "n_trajectories": n,
        "engine": engine,
        "detected": detected,
        "undetected": stats.undetected,
        "detected_fraction": detected as f64 / n as f64,
        "fraction_0": fractions[0].0,
        "fraction_0_ci": [fractions[0].1, fractions[0].2],
        "fraction_1": fractions[1].0,
        "fraction_1_ci": [fractions[1].1, fractions[1].2],
        "born_0": born[0],
        "born_1": born[1],
        "mean_weight": stats.mean_weight,
        "weight_std_error": stats.weight_std_error,
        "ci_level": stats.ci_level,
    });

    // a handful of sample paths for plotting: P(basis 0) over time
    let m = n.min(4);
    let headers: Vec<String> = (0..m).map(|j| format!("p0_traj_{j}")).collect();
    let mut cols: Vec<&str> = vec!["time"];
    cols.extend(headers.iter().map(|s| s.as_str()));
    let mut csv = CsvBuilder::new(&cols);
    for snap in 0..records[0].times.len() {
        let mut row = vec![records[0].times[snap]];
        for r in records.iter().take(m) {
            let probs = ops.probabilities(&r.states[snap])?;
            let p0: f64 = probs
                .iter()
                .enumerate()
                .filter(|(k, _)| comp_index(&ops, *k) == 0)
                .map(|(_, p)| p)
                .sum();
            row.push(p0);
        }
        csv.row(&row);
    }

    let report = format!(
        "gambler_ruin '{}'\n\
         trajectories: {} ({}), detected {:.2}%\n\
         fraction -> basis 0: {:.4} (ci {:.4}..{:.4}), Born weight {:.4}\n\
         fraction -> basis 1: {:.4} (ci {:.4}..{:.4}), Born weight {:.4}\n\
         mean weight: {:.6} +- {:.6}\n",
        sc.name,
        n,
        engine,
        100.0 * detected as f64 / n as f64,
        fractions[0].0,
        fractions[0].1,
        fractions[0].2,
        born[0],
        fractions[1].0,
        fractions[1].1,
        fractions[1].2,
        born[1],
        stats.mean_weight,
        stats.weight_std_error,
    );

    let mut self_checks = vec![Subcheck {
        name: "born_consistency".into(),
        measured: fractions[0].0 - born[0],
        bound: "Born weight inside the basis-0 outcome confidence interval".into(),
        pass: fractions[0].1 <= born[0] && born[0] <= fractions[0].2,
    }];
    if engine == "linear" {
        self_checks.push(Subcheck {
            name: "mean_weight_unit".into(),
            measured: stats.mean_weight - 1.0,
            bound: format!("|mean - 1| <= 3 * {:.3e}", stats.weight_std_error),
            pass: (stats.mean_weight - 1.0).abs() <= 3.0 * stats.weight_std_error,
        });
    }

    Ok(ExperimentRun {
        output: ScenarioOutput {
            results,
            series: vec![("sample_paths.csv".into(), csv.finish())],
            report,
        },
        self_checks,
    })
}

fn offdiag_decay(sc: &Scenario) -> Result<ExperimentRun> {
    let (psi0, ops, gap) = two_level_system(sc)?;
    let lambda = ops.lambda();
    let grid = time_grid(sc.real("t_final", f64::NAN), sc.real("dt", f64::NAN))?;
    let n = sc.count("trajectories", 10_000) as usize;
    let points = sc.count("time_points", 10) as usize;
    let options = EvolveOptions {
        record_stride: stride_for(grid.n_steps(), points),
        ..Default::default()
    };

    let records = sample_nonlinear_ensemble(&psi0, &ops, grid, n, sc.seed, &options)?;
    let series = offdiag_series(&records, &ops, 0, 1)?;
    let p0 = ops.probabilities(&psi0)?;
    let r0 = (p0[0] * p0[1]).sqrt();
    let rate = 0.5 * lambda * gap * gap;

    let mut csv = CsvBuilder::new(&["time", "re", "im", "abs", "std_error", "analytic"]);
    let mut max_z = 0.0f64;
    for p in &series {
        let analytic = r0 * (-rate * p.time).exp();
        csv.row(&[
            p.time,
            p.value.re,
            p.value.im,
            p.value.norm(),
            p.std_error,
            analytic,
        ]);
        if p.time > 0.0 {
            let diff = (p.value.norm() - analytic).abs();
            let z = if p.std_error > 0.0 {
                diff / p.std_error
            } else if diff < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            max_z = max_z.max(z);
        }
    }

    let t_final = grid.duration();
    let rho0 = DensityMatrix::from_pure(&psi0)?;
    let analytic_rho = propagate_density_analytic(&rho0, &ops, t_final)?;
    let fourier_rho = propagate_density_fourier(&rho0, &ops, t_final, 96)?;
    let prop_dist = analytic_rho.distance(&fourier_rho);

    let results = json!({
        "n_trajectories": n,
        "points": series.len(),
        "initial_offdiag": r0,
        "analytic_decay_rate": rate,
        "max_abs_z": max_z,
        "analytic_vs_fourier_distance": prop_dist,
    });
    let report = format!(
        "offdiag_decay '{}'\n\
         trajectories: {}, snapshots: {}\n\
         |rho_01| tracks {:.4} * exp(-{:.4} t); worst deviation {:.2} sigma\n\
         analytic vs quadrature propagator distance at t = {}: {:.3e}\n",
        sc.name,
        n,
        series.len(),
        r0,
        rate,
        max_z,
        t_final,
        prop_dist,
    );
    let self_checks = vec![
        Subcheck {
            name: "decay_within_3sigma".into(),
            measured: max_z,
            bound: "max |z| <= 3".into(),
            pass: max_z <= 3.0,
        },
        Subcheck {
            name: "analytic_vs_fourier".into(),
            measured: prop_dist,
            bound: "distance <= 1e-8".into(),
            pass: prop_dist <= 1e-8,
        },
    ];

    Ok(ExperimentRun {
        output: ScenarioOutput {
            results,
            series: vec![("offdiag.csv".into(), csv.finish())],
            report,
        },
        self_checks,
    })
}

fn nonmarkov_compare(sc: &Scenario) -> Result<ExperimentRun> {
    let lambda = sc.real("lambda", f64::NAN);
    let alpha = sc.real("alpha", f64::NAN);
    let t_final = sc.real("t_final", f64::NAN);
    let a0 = sc.real("a0", 1.0);
    let a1 = sc.real("a1", -1.0);
    let points = sc.count("points", 50) as usize;
    if !(t_final > 0.0) || points == 0 {
        return Err(RunError("need t_final > 0 and points >= 1".into()));
    }
    let gap = (a0 - a1).abs();
    let kernel = Kernel::ornstein_uhlenbeck(alpha)?;

    let mut csv = CsvBuilder::new(&["time", "ou_factor", "markov_factor", "effective_time"]);
    let mut monotone_ok = true;
    for i in 1..=points {
        let t = t_final * i as f64 / points as f64;
        let d = kernel_double_time_integral(&kernel, t)?;
        let ou = (-0.5 * lambda * gap * gap * d).exp();
        let markov = (-0.5 * lambda * gap * gap * t).exp();
        // memory means less effective decoherence time, never more
        if ou < markov * (1.0 - 1e-12) {
            monotone_ok = false;
        }
        csv.row(&[t, ou, markov, d]);
    }

    let d_final = kernel_double_time_integral(&kernel, t_final)?;
    let ou_final = (-0.5 * lambda * gap * gap * d_final).exp();
    let markov_final = (-0.5 * lambda * gap * gap * t_final).exp();
    let results = json!({
        "lambda": lambda,
        "alpha": alpha,
        "t_final": t_final,
        "eigenvalue_gap": gap,
        "effective_time_final": d_final,
        "ou_factor_final": ou_final,
        "markov_factor_final": markov_final,
        "memory_lag": t_final - d_final,
    });
    let report = format!(
        "nonmarkov_compare '{}'\n\
         OU memory alpha = {} /s against white noise, lambda = {} /s, gap = {}\n\
         effective time at t = {}: {:.6} (white-noise value {})\n\
         damping factor {:.6e} vs markovian {:.6e}\n",
        sc.name, alpha, lambda, gap, t_final, d_final, t_final, ou_final, markov_final,
    );

    let mut self_checks = vec![Subcheck {
        name: "memory_only_slows_decoherence".into(),
        measured: if monotone_ok { 1.0 } else { 0.0 },
        bound: "ou_factor >= markov_factor at every point".into(),
        pass: monotone_ok,
    }];
    if alpha * t_final >= 100.0 {
        // deep in the short-memory regime the lag saturates at 1/alpha
        let lag_err = ((t_final - d_final) * alpha - 1.0).abs();
        self_checks.push(Subcheck {
            name: "short_memory_lag".into(),
            measured: lag_err,
            bound: "|alpha (t - t_eff) - 1| <= 0.02 for alpha t >= 100".into(),
            pass: lag_err <= 0.02,
        });
    }

    Ok(ExperimentRun {
        output: ScenarioOutput {
            results,
            series: vec![("damping.csv".into(), csv.finish())],
            report,
        },
        self_checks,
    })
}

fn csl_rates(sc: &Scenario) -> Result<ExperimentRun> {
    let lambda = sc.real("lambda", 1e-16);
    let a = sc.real("a", 1e-5);
    let params = CslParameters::new(lambda, a)?;
    let n_particles = sc.real("n_particles", 1e24);
    let mass = sc.real("mass", M_PROTON);
    let clump_n = sc.count("clump_n", 1000);
    let separation = sc.real("clump_separation", 10.0 * a);
    let cube_side = sc.real("cube_side", 1e-4);
    let rho = sc.real("rho", 1e25);
    let limit = sc.real("germanium_limit", 0.2);

    let energy_gain = energy_gain_rate(n_particles, mass, &params)?;
    let clump = clump_rate(clump_n, separation, &params)?;
    let g2 = params.nucleon_rate_factor();
    let sharp_rate =
        |l: f64| (4.0 * PI).powf(1.5) * lambda * g2 * a.powi(3) * rho * rho * l.powi(3);
    let cube_exact = displaced_cube_rate(cube_side, rho, &params);
    let cube_sharp = sharp_rate(cube_side);
    let germanium = germanium_bound(limit)?;

    let results = json!({
        "lambda": lambda,
        "a": a,
        "energy_gain": energy_gain,
        "energy_gain_units": "eV/s",
        "n_particles": n_particles,
        "clump_n": clump_n,
        "clump_separation": separation,
        "clump_rate": clump,
        "clump_collapse_time_s": if clump > 0.0 { json!(1.0 / clump) } else { json!(null) },
        "cube_side": cube_side,
        "rho": rho,
        "cube_rate": cube_exact,
        "cube_rate_sharp": cube_sharp,
        "cube_ratio": cube_exact / cube_sharp,
        "cube_collapse_time_s": if cube_exact > 0.0 { json!(1.0 / cube_exact) } else { json!(null) },
        "germanium_limit": limit,
        "germanium_bound_ratio": germanium,
    });

    let clump_ns: [u64; 13] = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000];
    let mut clump_csv = CsvBuilder::new(&["n", "rate", "n_squared_asymptote"]);
    for &m in &clump_ns {
        let r = clump_rate(m, separation, &params)?;
        clump_csv.row(&[m as f64, r, lambda * g2 * (m as f64) * (m as f64)]);
    }
    let mut cube_csv = CsvBuilder::new(&["side", "rate", "sharp_formula"]);
    for i in 1..=20 {
        let l = a * i as f64;
        cube_csv.row(&[l, displaced_cube_rate(l, rho, &params), sharp_rate(l)]);
    }

    let report = format!(
        "csl_rates '{}' (lambda = {:.3e} /s, a = {:.3e} cm)\n\
         energy gain, {:.3e} particles of {:.3e} g: {:.4} eV/s\n\
         clump pair n = {}, separation {:.3e} cm: rate {:.4e} /s\n\
         displaced cube, side {:.3e} cm at rho = {:.3e} /cm^3:\n\
           exact rate {:.4e} /s, large-cube formula {:.4e} /s (ratio {:.3})\n\
           collapse time {:.3e} s\n\
         germanium coupling bound: {:.3} x m_e/m_p at limit {}\n",
        sc.name,
        lambda,
        a,
        n_particles,
        mass,
        energy_gain,
        clump_n,
        separation,
        clump,
        cube_side,
        rho,
        cube_exact,
        cube_sharp,
        cube_exact / cube_sharp,
        if cube_exact > 0.0 {
            1.0 / cube_exact
        } else {
            f64::INFINITY
        },
        germanium,
        limit,
    );

    let grw_defaults = (lambda - 1e-16).abs() < 1e-22
        && (a - 1e-5).abs() < 1e-11
        && (n_particles - 1e24).abs() < 1e18
        && (mass - M_PROTON).abs() < 1e-30;
    let mut self_checks = vec![
        Subcheck {
            name: "cube_exact_below_sharp".into(),
            measured: cube_exact / cube_sharp,
            bound: "ratio <= 1 (edge corrections only reduce the overlap)".into(),
            pass: cube_exact <= cube_sharp * (1.0 + 1e-12),
        },
        Subcheck {
            name: "germanium_bound_above_unity".into(),
            measured: germanium,
            bound: ">= 1".into(),
            pass: germanium >= 1.0,
        },
    ];
    if grw_defaults {
        self_checks.push(Subcheck {
            name: "energy_gain_reference".into(),
            measured: energy_gain,
            bound: "within 20% of 0.3 eV/s at the reference parameters".into(),
            pass: (energy_gain / 0.3 - 1.0).abs() <= 0.2,
        });
    }

    Ok(ExperimentRun {
        output: ScenarioOutput {
            results,
            series: vec![
                ("clump_rate_vs_n.csv".into(), clump_csv.finish()),
                ("cube_rate_vs_side.csv".into(), cube_csv.finish()),
            ],
            report,
        },
        self_checks,
    })
}

fn apply_primitive(dist: &mut LatticeMassDistribution, prim: &DistPrimitive) -> Result<()> {
    match prim {
        DistPrimitive::Point { pos, amount, .. } => dist.add_point(*pos, *amount)?,
        DistPrimitive::Box {
            lo, hi, density, ..
        } => dist.add_box(*lo, *hi, *density)?,
        DistPrimitive::Sphere {
            center,
            radius,
            density,
            ..
        } => dist.add_sphere(*center, *radius, *density)?,
        DistPrimitive::Csv { path, .. } => {
            let file = File::open(path)
                .map_err(|e| RunError(format!("cannot open distribution csv '{path}': {e}")))?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| RunError(format!("read '{path}': {e}")))?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                let parts: Vec<&str> = t.split(',').collect();
                if parts.len() != 4 {
                    return Err(RunError(format!(
                        "'{path}' line {}: expected x,y,z,value",
                        idx + 1
                    )));
                }
                let mut v = [0.0f64; 4];
                for (slot, p) in v.iter_mut().zip(&parts) {
                    *slot = p.trim().parse::<f64>().map_err(|_| {
                        RunError(format!("'{path}' line {}: bad number '{p}'", idx + 1))
                    })?;
                }
                dist.add_point([v[0], v[1], v[2]], v[3])?;
            }
        }
    }
    Ok(())
}

fn occupied_cells(dist: &LatticeMassDistribution) -> usize {
    dist.values().iter().filter(|v| **v != 0.0).count()
}

fn gravity_compare(sc: &Scenario) -> Result<ExperimentRun> {
    let spacing = sc.real("spacing", f64::NAN);
    let extent = sc.real_list("extent").expect("schema guarantees extent");
    let a = sc.real("a", 1e-5);
    let prims1 = sc.primitives("dist1");
    let prims2 = sc.primitives("dist2");

    let mut units = prims1.iter().chain(prims2).map(DistPrimitive::unit);
    let first_unit = units
        .next()
        .ok_or_else(|| RunError("dist1/dist2 are empty".into()))?;
    if units.any(|u| u != first_unit) {
        return Err(RunError(
            "all dist primitives must use the same unit family".into(),
        ));
    }
    let mode = match sc.word("mode", "").as_str() {
        "" => match first_unit {
            MassUnit::Grams => DensityMode::MassGrams,
            MassUnit::Count => DensityMode::ParticleNumber,
        },
        "mass" if first_unit == MassUnit::Grams => DensityMode::MassGrams,
        "number" if first_unit == MassUnit::Count => DensityMode::ParticleNumber,
        other => {
            return Err(RunError(format!(
                "mode '{other}' conflicts with the primitive units (g <-> mass, n <-> number)"
            )))
        }
    };

    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(RunError(format!("spacing must be > 0, got {spacing}")));
    }
    let mut origin = [0.0; 3];
    let mut dims = [0usize; 3];
    for ax in 0..3 {
        let (lo, hi) = (extent[2 * ax], extent[2 * ax + 1]);
        if !(hi > lo) {
            return Err(RunError(format!(
                "extent axis {ax}: need hi > lo, got {lo}..{hi}"
            )));
        }
        origin[ax] = lo;
        dims[ax] = ((hi - lo) / spacing - 1e-9).ceil().max(1.0) as usize;
    }

    let mut d1 = LatticeMassDistribution::new(origin, spacing, dims, mode)?;
    let mut d2 = LatticeMassDistribution::new(origin, spacing, dims, mode)?;
    for p in prims1 {
        apply_primitive(&mut d1, p)?;
    }
    for p in prims2 {
        apply_primitive(&mut d2, p)?;
    }
    let (occ1, occ2) = (occupied_cells(&d1), occupied_cells(&d2));
    const CELL_BUDGET: usize = 20_000;
    if occ1 + occ2 > CELL_BUDGET {
        return Err(RunError(format!(
            "the gravity sum is quadratic in occupied cells: {occ1} + {occ2} exceeds the \
             {CELL_BUDGET} budget; coarsen the lattice or shrink the bodies"
        )));
    }

    let rate_local = gravity_decay_exponent(&d1, &d2, GravityVariant::LocalCurvature, a)?;
    let rate_global = gravity_decay_exponent(&d1, &d2, GravityVariant::GlobalPotential, a)?;
    let scale = rate_local
        .abs()
        .max(rate_global.abs())
        .max(f64::MIN_POSITIVE);

    let results = json!({
        "spacing": spacing,
        "a": a,
        "mode": match mode {
            DensityMode::MassGrams => "mass",
            DensityMode::ParticleNumber => "number",
        },
        "occupied_cells": [occ1, occ2],
        "rate_local_curvature": rate_local,
        "rate_global_potential": rate_global,
        "ratio_local_over_global":
            if rate_global != 0.0 { json!(rate_local / rate_global) } else { json!(null) },
        "decay_time_local_s":
            if rate_local > 0.0 { json!(1.0 / rate_local) } else { json!(null) },
        "decay_time_global_s":
            if rate_global > 0.0 { json!(1.0 / rate_global) } else { json!(null) },
    });
    let report = format!(
        "gravity_compare '{}' (a = {:.3e} cm, spacing = {:.3e} cm)\n\
         occupied cells: {} vs {}\n\
         local-curvature kernel rate:  {:.6e} /s\n\
         global-potential kernel rate: {:.6e} /s\n",
        sc.name, a, spacing, occ1, occ2, rate_local, rate_global,
    );

    let self_dist = gravity_decay_exponent(&d1, &d1, GravityVariant::LocalCurvature, a)?;
    let self_checks = vec![
        Subcheck {
            name: "identical_configurations_do_not_decay".into(),
            measured: self_dist,
            bound: "= 0".into(),
            pass: self_dist == 0.0,
        },
        Subcheck {
            name: "rates_nonnegative".into(),
            measured: rate_local.min(rate_global) / scale,
            bound: ">= -1e-10 relative (positive-definite kernels)".into(),
            pass: rate_local >= -1e-10 * scale && rate_global >= -1e-10 * scale,
        },
    ];

    Ok(ExperimentRun {
        output: ScenarioOutput {
            results,
            series: vec![],
            report,
        },
        self_checks,
    })
}

fn kernel_scan(sc: &Scenario) -> Result<ExperimentRun> {
    let kind = sc.word("kind", "");
    let a = sc.real("a", f64::NAN);
    let from = sc.real("from", f64::NAN);
    let to = sc.real("to", f64::NAN);
    let points = sc.count("points", 200) as usize;
    if !(from > 0.0) || !(to > from) {
        return Err(RunError(format!("need 0 < from < to, got {from}..{to}")));
    }
    if points < 2 {
        return Err(RunError("points must be >= 2".into()));
    }
    let region = match kind.as_str() {
        "spacelike" => Some(KernelRegion::Spacelike),
        "timelike" => Some(KernelRegion::Timelike),
        "nonrel" => None,
        other => {
            return Err(RunError(format!(
                "kind must be spacelike, timelike or nonrel, got '{other}'"
            )))
        }
    };
    let closed = |x: f64| -> Result<f64> {
        Ok(match region {
            Some(r) => tachyon_kernel_exact(x, a, r)?,
            None => tachyon_kernel_nonrel_limit(x, a)?,
        })
    };
    let quadrature = |x: f64| -> Result<f64> {
        Ok(match region {
            Some(r) => tachyon_kernel_spectral_quadrature(x, a, r)?,
            None => tachyon_nonrel_radial_quadrature(x, a)?,
        })
    };

    let mut scan = CsvBuilder::new(&["x", "value"]);
    let mut max_abs = 0.0f64;
    let mut values = Vec::with_capacity(points);
    for i in 0..points {
        let x = from + (to - from) * i as f64 / (points - 1) as f64;
        let v = closed(x)?;
        max_abs = max_abs.max(v.abs());
        values.push((x, v));
        scan.row(&[x, v]);
    }

    // spot-check the closed form against the integral definition at a few
    // interior points; the dense scan itself stays cheap
    let n_check = points.min(5);
    let mut check = CsvBuilder::new(&["x", "closed_form", "quadrature", "rel_err"]);
    let mut max_rel = 0.0f64;
    for j in 0..n_check {
        let idx = (j * (points - 1)) / (n_check - 1).max(1);
        let (x, v) = values[idx];
        let q = quadrature(x)?;
        // near a zero crossing the pointwise ratio is meaningless; measure
        // against the scan's scale instead
        let rel = (q - v).abs() / v.abs().max(1e-3 * max_abs);
        max_rel = max_rel.max(rel);
        check.row(&[x, v, q, rel]);
    }

    let results = json!({
        "kind": kind,
        "a": a,
        "from": from,
        "to": to,
        "points": points,
        "checked_points": n_check,
        "max_rel_err": max_rel,
    });
    let report = format!(
        "kernel_scan '{}': {} kernel, a = {:.3e} cm, {} points on [{:.3e}, {:.3e}]\n\
         closed form vs spectral quadrature at {} points: worst relative error {:.3e}\n",
        sc.name, kind, a, points, from, to, n_check, max_rel,
    );
    let self_checks = vec![Subcheck {
        name: "closed_form_matches_quadrature".into(),
        measured: max_rel,
        bound: "<= 0.03".into(),
        pass: max_rel <= 0.03,
    }];

    Ok(ExperimentRun {
        output: ScenarioOutput {
            results,
            series: vec![
                ("kernel.csv".into(), scan.finish()),
                ("quadrature_check.csv".into(), check.finish()),
            ],
            report,
        },
        self_checks,
    })
}

fn parameter_report(sc: &Scenario) -> Result<ExperimentRun> {
    let rel = parameter_relations();
    let germanium = germanium_bound(0.2)?;
    let results = json!({
        "lambda_a_over_c": rel.lambda_a_over_c,
        "gravity_fine_structure": rel.gravity_fine_structure,
        "lambda_diosi_s": rel.lambda_diosi,
        "lambda_planckon_s": rel.lambda_planckon,
        "a_planckon_cm": rel.a_planckon,
        "germanium_bound_0p2": germanium,
    });
    let report = format!(
        "parameter_report '{}' (reference parameters lambda = 1e-16 /s, a = 1e-5 cm)\n\
         lambda a / c                    = {:.4e}   (dimensionless)\n\
         G m_p^2 / (hbar c)              = {:.4e}   (dimensionless)\n\
         lambda, smeared-potential form  = {:.4e} /s\n\
         lambda, planckon form           = {:.4e} /s\n\
         a, planckon form                = {:.4e} cm\n\
         germanium coupling bound (0.2)  = {:.3} x m_e/m_p\n",
        sc.name,
        rel.lambda_a_over_c,
        rel.gravity_fine_structure,
        rel.lambda_diosi,
        rel.lambda_planckon,
        rel.a_planckon,
        germanium,
    );
    let self_checks = vec![Subcheck {
        name: "planckon_length_near_reference_a".into(),
        measured: rel.a_planckon / 1e-5,
        bound: "within factor 2 of the reference 1e-5 cm".into(),
        pass: (0.5..=2.0).contains(&(rel.a_planckon / 1e-5)),
    }];
    Ok(ExperimentRun {
        output: ScenarioOutput {
            results,
            series: vec![],
            report,
        },
        self_checks,
    })
}
