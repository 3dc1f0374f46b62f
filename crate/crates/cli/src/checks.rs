//! The release check suite. Each criterion measures something the library
//! promises, against a pinned tolerance, and reports the measured value
//! either way; failures are report content, not panics.
//!
//! The same functions back `collapse-lab check` and the acceptance test
//! target, so the gate is identical in both places.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde_json::{json, Value};

use collapse_core::bessel::bessel_k0;
use collapse_core::constants::M_PROTON;
use collapse_core::csl::{
    displaced_cube_rate, energy_gain_rate, excitation_amplitude, germanium_bound,
    offdiag_decay_rate, parameter_relations, CslParameters, DensityMode, FewParticleWavefunction,
    LatticeMassDistribution,
};
use collapse_core::engine::{
    closed_form_simple, evolve_nonmarkovian_closed, sample_linear_ensemble,
    sample_nonlinear_ensemble, EvolveOptions,
};
use collapse_core::ensemble::{
    ensemble_statistics, mc_ensemble_density, offdiag_series, propagate_density_analytic,
    propagate_density_fourier, random_phase_ensemble_density, random_phase_trajectory,
};
use collapse_core::noise::{kernel_sqrt_smear, rate_diffusion, sample_brownian, NoiseKind};
use collapse_core::quadrature::gauss_legendre_integrate;
use collapse_core::rel::{
    fermion_collapse_rate, fermion_rate_asymptote, tachyon_kernel_exact,
    tachyon_kernel_nonrel_limit, tachyon_kernel_spectral_quadrature, KernelRegion, RelParameters,
};
use collapse_core::{
    CollapseOperatorSet, CoreError, DensityMatrix, DetectionParams, HermitianOperator, Kernel,
    NoisePath, StateVector, TimeGrid, TrajectoryRecord, C64,
};

use crate::config::parse_config;
use crate::experiments::{comp_fractions, run_scenario_experiment};
use crate::output::to_json_bytes;

pub const CRITERIA_COUNT: usize = 13;

/// One measured quantity against one stated bound.
#[derive(Clone, Debug)]
pub struct Subcheck {
    pub name: String,
    pub measured: f64,
    pub bound: String,
    pub pass: bool,
}

fn sub(name: &str, measured: f64, bound: impl Into<String>, pass: bool) -> Subcheck {
    Subcheck {
        name: name.into(),
        measured,
        bound: bound.into(),
        pass,
    }
}

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub subchecks: Vec<Subcheck>,
}

impl CriterionReport {
    pub fn summary_line(&self) -> String {
        format!(
            "criterion {:02} {} {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name
        )
    }

    pub fn detail_lines(&self) -> Vec<String> {
        self.subchecks
            .iter()
            .map(|s| {
                format!(
                    "    {} {} = {:.6e}   [{}]",
                    if s.pass { "ok  " } else { "FAIL" },
                    s.name,
                    s.measured,
                    s.bound
                )
            })
            .collect()
    }
}

struct BornEnsemble {
    psi0: StateVector,
    ops: CollapseOperatorSet,
    records: Vec<TrajectoryRecord>,
    elapsed_s: f64,
}

/// Shared state for one suite run: seed, the desk/deep scale factor, and
/// the rate perturbation knob used as a negative control. The Born-rule
/// ensemble is sampled once and shared by the criteria that need it.
pub struct CheckContext {
    pub seed: u64,
    pub scale: usize,
    pub lambda_scale: f64,
    born: OnceLock<Result<BornEnsemble, String>>,
}

impl CheckContext {
    pub fn new(seed: u64, deep: bool, lambda_scale: f64) -> CheckContext {
        CheckContext {
            seed,
            scale: if deep { 10 } else { 1 },
            lambda_scale,
            born: OnceLock::new(),
        }
    }

    fn born(&self) -> Result<&BornEnsemble, String> {
        self.born
            .get_or_init(|| make_born(self.seed, self.scale))
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn core_err(e: CoreError) -> String {
    e.to_string()
}

type CResult = Result<Vec<Subcheck>, String>;

fn make_born(seed: u64, scale: usize) -> Result<BornEnsemble, String> {
    let psi0 = StateVector::from_real(&[0.6, 0.8]).map_err(core_err)?;
    let a = HermitianOperator::from_diagonal(&[1.0, -1.0]).map_err(core_err)?;
    let ops = CollapseOperatorSet::new(vec![a], 1.0, None).map_err(core_err)?;
    // lambda t gap^2 = 40: far past the collapse knee, everything detects
    let grid = TimeGrid::new(2.5e-3, 4000).map_err(core_err)?;
    let options = EvolveOptions {
        record_stride: grid.n_steps(),
        ..Default::default()
    };
    let start = Instant::now();
    let records = sample_nonlinear_ensemble(&psi0, &ops, grid, 10_000 * scale, seed, &options)
        .map_err(core_err)?;
    Ok(BornEnsemble {
        psi0,
        ops,
        records,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

pub fn run_criterion(ctx: &CheckContext, id: usize) -> CriterionReport {
    let (name, result): (&'static str, CResult) = match id {
        1 => ("born_frequencies", born_frequencies(ctx)),
        2 => ("engine_equivalence", engine_equivalence(ctx)),
        3 => ("offdiag_decay", offdiag_decay(ctx)),
        4 => (
            "ensemble_indistinguishability",
            ensemble_indistinguishability(ctx),
        ),
        5 => ("nonmarkovian_closed_form", nonmarkovian_closed_form(ctx)),
        6 => ("clump_scaling", clump_scaling(ctx)),
        7 => ("extended_object", extended_object(ctx)),
        8 => ("energy_gain", energy_gain(ctx)),
        9 => ("mass_proportional_null", mass_proportional_null(ctx)),
        10 => ("germanium_bound", germanium_bound_window(ctx)),
        11 => ("parameter_relations", parameter_relations_windows(ctx)),
        12 => ("relativistic_kernels", relativistic_kernels(ctx)),
        13 => ("determinism", determinism(ctx)),
        _ => panic!("criterion ids run 1..={CRITERIA_COUNT}"),
    };
    let subchecks = match result {
        Ok(s) => s,
        Err(e) => vec![sub(
            "execution_error",
            0.0,
            format!("unexpected failure: {e}"),
            false,
        )],
    };
    let passed = subchecks.iter().all(|s| s.pass);
    CriterionReport {
        id,
        name,
        passed,
        subchecks,
    }
}

pub fn run_all(ctx: &CheckContext) -> Vec<CriterionReport> {
    (1..=CRITERIA_COUNT)
        .map(|id| run_criterion(ctx, id))
        .collect()
}

pub fn report_json(ctx: &CheckContext, reports: &[CriterionReport]) -> Value {
    json!({
        "seed": ctx.seed,
        "scale": ctx.scale,
        "lambda_scale": ctx.lambda_scale,
        "passed": reports.iter().all(|r| r.passed),
        "criteria": reports.iter().map(|r| json!({
            "id": r.id,
            "name": r.name,
            "passed": r.passed,
            "subchecks": r.subchecks.iter().map(|s| json!({
                "name": s.name,
                "measured": if s.measured.is_finite() { json!(s.measured) } else { json!(null) },
                "bound": s.bound,
                "pass": s.pass,
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "versions": crate::output::version_block(),
    })
}

pub fn report_text(reports: &[CriterionReport]) -> String {
    let passed = reports.iter().filter(|r| r.passed).count();
    let mut out = format!("{passed} of {} criteria pass\n", reports.len());
    for r in reports {
        out.push_str(&r.summary_line());
        out.push('\n');
        for line in r.detail_lines() {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

// --- criterion 1 ---------------------------------------------------------

fn born_frequencies(ctx: &CheckContext) -> CResult {
    let b = ctx.born()?;
    let stats = ensemble_statistics(&b.records, &b.ops).map_err(core_err)?;
    let fr = comp_fractions(&stats, &b.ops);
    let n = b.records.len();
    let detected = (n - stats.undetected) as f64 / n as f64;
    Ok(vec![
        sub(
            "fraction_to_basis_0",
            fr[0].0,
            "|fraction - 0.36| <= 0.015",
            (fr[0].0 - 0.36).abs() <= 0.015,
        ),
        sub("detected_fraction", detected, ">= 0.99", detected >= 0.99),
        sub(
            "ensemble_runtime_s",
            b.elapsed_s,
            "target < 10 s (reported, not gating)",
            true,
        ),
    ])
}

// --- criterion 2 ---------------------------------------------------------

fn engine_equivalence(ctx: &CheckContext) -> CResult {
    let psi0 = StateVector::from_real(&[0.6, 0.8]).map_err(core_err)?;
    let a = HermitianOperator::from_diagonal(&[1.0, -1.0]).map_err(core_err)?;
    let ops = CollapseOperatorSet::new(vec![a], 1.0, None).map_err(core_err)?;
    // lambda t gap^2 = 4: short enough that raw-measure importance weights
    // keep a usable effective sample size
    let grid = TimeGrid::new(2.5e-3, 400).map_err(core_err)?;
    let options = EvolveOptions {
        record_stride: grid.n_steps(),
        ..Default::default()
    };
    let n = 10_000 * ctx.scale;
    let nl =
        sample_nonlinear_ensemble(&psi0, &ops, grid, n, ctx.seed, &options).map_err(core_err)?;
    let lin = sample_linear_ensemble(&psi0, &ops, grid, n, ctx.seed, &options).map_err(core_err)?;
    let s_nl = ensemble_statistics(&nl, &ops).map_err(core_err)?;
    let s_lin = ensemble_statistics(&lin, &ops).map_err(core_err)?;

    // joint index 0 on both sides; the CI half-width is 3 sigma
    let (f_nl, lo_nl, hi_nl) = s_nl.outcome_fractions[0];
    let (f_lin, lo_lin, hi_lin) = s_lin.outcome_fractions[0];
    let sig_nl = (hi_nl - lo_nl) / 6.0;
    let sig_lin = (hi_lin - lo_lin) / 6.0;
    let combined = (sig_nl * sig_nl + sig_lin * sig_lin).sqrt();
    let diff = (f_nl - f_lin).abs();
    let w_dev = (s_lin.mean_weight - 1.0).abs();
    Ok(vec![
        sub(
            "outcome_fraction_agreement",
            diff,
            format!(
                "|nonlinear - weighted linear| <= 3 sigma = {:.3e}",
                3.0 * combined
            ),
            diff <= 3.0 * combined,
        ),
        sub(
            "linear_mean_weight",
            s_lin.mean_weight,
            format!("|mean - 1| <= 3 * {:.3e}", s_lin.weight_std_error),
            w_dev <= 3.0 * s_lin.weight_std_error,
        ),
    ])
}

// --- criterion 3 ---------------------------------------------------------

fn offdiag_decay(ctx: &CheckContext) -> CResult {
    // the simulated rate carries the negative-control knob; the analytic
    // reference stays at the nominal rate, so a perturbed fixture must fail
    let lambda_sim = 1.0 * ctx.lambda_scale;
    let lambda_ref = 1.0;
    let psi0 = StateVector::from_real(&[0.6, 0.8]).map_err(core_err)?;
    let a = HermitianOperator::from_diagonal(&[1.0, -1.0]).map_err(core_err)?;
    let ops = CollapseOperatorSet::new(vec![a], lambda_sim, None).map_err(core_err)?;
    let t_final = 2.0;
    let dt = 2.5e-3 / ctx.lambda_scale.max(1.0);
    let n_steps = (t_final / dt).round() as usize;
    let options = EvolveOptions {
        record_stride: (n_steps / 10).max(1),
        ..Default::default()
    };
    let n = 10_000 * ctx.scale;
    let records = sample_nonlinear_ensemble(
        &psi0,
        &ops,
        TimeGrid::new(dt, n_steps).map_err(core_err)?,
        n,
        ctx.seed,
        &options,
    )
    .map_err(core_err)?;
    let series = offdiag_series(&records, &ops, 0, 1).map_err(core_err)?;

    let r0 = 0.6 * 0.8;
    let mut max_z = 0.0f64;
    let mut points = 0;
    for p in &series {
        if p.time <= 0.0 {
            continue;
        }
        points += 1;
        let analytic = r0 * (-0.5 * lambda_ref * 4.0 * p.time).exp();
        let z = (p.value.norm() - analytic).abs() / p.std_error.max(1e-300);
        max_z = max_z.max(z);
    }

    // propagator cross-check at the nominal rate
    let ops_ref = CollapseOperatorSet::new(
        vec![HermitianOperator::from_diagonal(&[1.0, -1.0]).map_err(core_err)?],
        lambda_ref,
        None,
    )
    .map_err(core_err)?;
    let rho0 = DensityMatrix::from_pure(&psi0).map_err(core_err)?;
    let analytic_rho = propagate_density_analytic(&rho0, &ops_ref, t_final).map_err(core_err)?;
    let fourier_rho = propagate_density_fourier(&rho0, &ops_ref, t_final, 96).map_err(core_err)?;
    let dist = analytic_rho.distance(&fourier_rho);

    Ok(vec![
        sub(
            "decay_fit_3sigma",
            max_z,
            format!("max |z| over {points} time points <= 3 vs 0.48 exp(-2t)"),
            max_z <= 3.0,
        ),
        sub(
            "analytic_vs_fourier",
            dist,
            "propagator distance <= 1e-8",
            dist <= 1e-8,
        ),
    ])
}

// --- criterion 4 ---------------------------------------------------------

fn ensemble_indistinguishability(ctx: &CheckContext) -> CResult {
    let b = ctx.born()?;
    let t = 10.0;
    let n_c = b.records.len();
    let last = b.records[0].states.len() - 1;
    let collapse_rho = mc_ensemble_density(&b.records, &b.ops, last).map_err(core_err)?;
    let n_rp = 100_000 * ctx.scale;
    let rp_rho = random_phase_ensemble_density(&b.psi0, &b.ops, t, n_rp, ctx.seed + 101)
        .map_err(core_err)?;

    // diagonal entries: binomial error from the collapse ensemble (the
    // random-phase diagonal is exact); off-diagonal: both are means of
    // bounded complex variables
    let mut max_z = 0.0f64;
    for i in 0..2 {
        for j in i..2 {
            let d = (collapse_rho.entry(i, j) - rp_rho.entry(i, j)).norm();
            let sigma = if i == j {
                let p = collapse_rho.entry(i, i).re.clamp(1e-12, 1.0 - 1e-12);
                (p * (1.0 - p) / n_c as f64).sqrt()
            } else {
                0.5 * (1.0 / (n_c as f64).sqrt() + 1.0 / (n_rp as f64).sqrt())
            };
            max_z = max_z.max(d / sigma);
        }
    }

    let stats = ensemble_statistics(&b.records, &b.ops).map_err(core_err)?;
    let collapse_detected = (n_c - stats.undetected) as f64 / n_c as f64;

    // dephased-only trajectories: probabilities are constants of motion, so
    // detection must never fire; a coarse grid suffices since every step is
    // recorded
    let grid = TimeGrid::new(0.1, 100).map_err(core_err)?;
    let mut rp_detected = 0usize;
    for stream in 0..200 {
        let r = random_phase_trajectory(
            &b.psi0,
            &b.ops,
            grid,
            ctx.seed + 202,
            stream,
            DetectionParams::default(),
        )
        .map_err(core_err)?;
        if r.outcome.is_some() {
            rp_detected += 1;
        }
    }

    Ok(vec![
        sub(
            "density_match_max_z",
            max_z,
            "entrywise <= 3 sigma",
            max_z <= 3.0,
        ),
        sub(
            "collapse_detected_fraction",
            collapse_detected,
            ">= 0.99",
            collapse_detected >= 0.99,
        ),
        sub(
            "random_phase_detected",
            rp_detected as f64,
            "= 0 of 200",
            rp_detected == 0,
        ),
    ])
}

// --- criterion 5 ---------------------------------------------------------

fn nonmarkovian_closed_form(ctx: &CheckContext) -> CResult {
    let psi0 = StateVector::from_real(&[0.6, 0.8]).map_err(core_err)?;
    let a = HermitianOperator::from_diagonal(&[1.0, -1.0]).map_err(core_err)?;

    // (i) the closed form equals the plain collapse formula evaluated at an
    // independently quadratured effective time and noise functional
    let (alpha, lambda) = (2.0, 0.7);
    let grid = TimeGrid::new(1e-3, 1500).map_err(core_err)?;
    let t = grid.duration();
    let noise = sample_brownian(grid, rate_diffusion(lambda), ctx.seed + 5, 0).map_err(core_err)?;
    let got = evolve_nonmarkovian_closed(&psi0, &a, lambda, alpha, &noise).map_err(core_err)?;

    let t_eff = 2.0
        * gauss_legendre_integrate(200, 0.0, t, |tau| {
            (t - tau) * 0.5 * alpha * (-alpha * tau).exp()
        })
        .map_err(core_err)?;
    let increments = noise.increments(0);
    let dt = grid.dt();
    let mut b_prime = 0.0;
    for (k, db) in increments.iter().enumerate() {
        let (t_lo, t_hi) = (k as f64 * dt, (k + 1) as f64 * dt);
        let seg = gauss_legendre_integrate(5, t_lo, t_hi, |s| {
            1.0 - 0.5 * ((-alpha * s).exp() + (-alpha * (t - s)).exp())
        })
        .map_err(core_err)?;
        b_prime += (db / dt) * seg;
    }
    let want = closed_form_simple(&psi0, &a, lambda, t_eff, b_prime).map_err(core_err)?;
    let exactness = got
        .amplitudes()
        .iter()
        .zip(want.amplitudes())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0f64, f64::max);

    // (ii) short-memory limit: a deterministic ramp path makes the
    // comparison noise-free; at alpha t = 100 the two forms agree to ~1%
    let (alpha2, lambda2, b_target) = (100.0, 0.5, 0.5);
    let grid2 = TimeGrid::new(1e-3, 1000).map_err(core_err)?;
    let n2 = grid2.n_steps();
    let ramp: Vec<f64> = (0..=n2).map(|k| b_target * k as f64 / n2 as f64).collect();
    let path =
        NoisePath::new(grid2, NoiseKind::IntegratedBrownian, vec![ramp]).map_err(core_err)?;
    let nm = evolve_nonmarkovian_closed(&psi0, &a, lambda2, alpha2, &path).map_err(core_err)?;
    let markov =
        closed_form_simple(&psi0, &a, lambda2, grid2.duration(), b_target).map_err(core_err)?;
    let num: f64 = nm
        .amplitudes()
        .iter()
        .zip(markov.amplitudes())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    let limit_err = (num / markov.norm_squared()).sqrt();

    // (iii) the square-root kernel of the exponential correlator is
    // (alpha/pi) K0(alpha tau): read it off by smearing a unit impulse
    let alpha3 = 1.0;
    let kernel = Kernel::ornstein_uhlenbeck(alpha3).map_err(core_err)?;
    let dt3 = 0.005;
    let n3 = 4096;
    let grid3 = TimeGrid::new(dt3, n3).map_err(core_err)?;
    let mut vals = vec![0.0; n3];
    let center = n3 / 2;
    vals[center] = 1.0 / dt3;
    let impulse = NoisePath::new(grid3, NoiseKind::Rate, vec![vals]).map_err(core_err)?;
    let smeared = kernel_sqrt_smear(&kernel, &impulse).map_err(core_err)?;
    let mut k0_err = 0.0f64;
    for lag in [20usize, 60, 100, 200, 400, 600] {
        let tau = lag as f64 * dt3;
        if !(0.1..=3.0).contains(&(alpha3 * tau)) {
            continue;
        }
        let want = alpha3 / std::f64::consts::PI * bessel_k0(alpha3 * tau);
        let got = smeared.samples(0)[center + lag];
        k0_err = k0_err.max(((got - want) / want).abs());
    }

    Ok(vec![
        sub(
            "closed_form_exactness",
            exactness,
            "max amplitude difference <= 1e-8 vs independent quadrature",
            exactness <= 1e-8,
        ),
        sub(
            "short_memory_limit",
            limit_err,
            "relative state difference <= 0.02 at alpha t = 100",
            limit_err <= 0.02,
        ),
        sub(
            "ou_sqrt_kernel_k0",
            k0_err,
            "relative error <= 0.02 on 0.1 <= alpha tau <= 3",
            k0_err <= 0.02,
        ),
    ])
}

// --- criterion 6 ---------------------------------------------------------

fn clump_scaling(ctx: &CheckContext) -> CResult {
    let _ = ctx;
    let params = CslParameters::new(1.0, 1e-5).map_err(core_err)?;
    let a = params.a;
    let h = a / 2.0;
    let origin = [-12.0 * a; 3];
    let dims = [48usize; 3];
    let separation = 10.0 * a;
    let formula_factor = 1.0 - (-separation * separation / (4.0 * a * a)).exp();

    let mut subs = Vec::new();
    let mut rates = Vec::new();
    for &n in &[10u64, 100, 1000] {
        let mut d1 = LatticeMassDistribution::new(origin, h, dims, DensityMode::ParticleNumber)
            .map_err(core_err)?;
        let mut d2 = LatticeMassDistribution::new(origin, h, dims, DensityMode::ParticleNumber)
            .map_err(core_err)?;
        d1.add_point([-5.0 * a, 0.0, 0.0], n as f64)
            .map_err(core_err)?;
        d2.add_point([5.0 * a, 0.0, 0.0], n as f64)
            .map_err(core_err)?;
        let rate = offdiag_decay_rate(&d1, &d2, &params).map_err(core_err)?;
        let formula =
            params.lambda * params.nucleon_rate_factor() * (n as f64).powi(2) * formula_factor;
        let ratio = rate / formula;
        subs.push(sub(
            &format!("lattice_vs_formula_n{n}"),
            ratio,
            "|rate / (lambda g^2 n^2) - 1| <= 0.02",
            (ratio - 1.0).abs() <= 0.02,
        ));
        rates.push(rate);
    }
    for (label, pair) in [("10_to_100", (0usize, 1usize)), ("100_to_1000", (1, 2))] {
        let ratio = rates[pair.1] / rates[pair.0] / 100.0;
        subs.push(sub(
            &format!("rate_ratio_{label}"),
            ratio,
            "n^2 scaling: |ratio / 100 - 1| <= 0.01",
            (ratio - 1.0).abs() <= 0.01,
        ));
    }
    Ok(subs)
}

// --- criterion 7 ---------------------------------------------------------

fn extended_object(ctx: &CheckContext) -> CResult {
    let _ = ctx;
    let params = CslParameters::default();
    let (lambda, a) = (params.lambda, params.a);
    let g2 = params.nucleon_rate_factor();
    let l = 1e-4;
    let rho = 1e25;

    let exact = displaced_cube_rate(l, rho, &params);
    let sharp =
        (4.0 * std::f64::consts::PI).powf(1.5) * lambda * g2 * a.powi(3) * rho * rho * l.powi(3);

    // lattice route: two well-separated cubes, spacing a/4, box edges on
    // cell boundaries
    let h = a / 4.0;
    let origin = [-6.0 * a, -6.0 * a, -6.0 * a];
    let dims = [168usize, 88, 88];
    let mut d1 = LatticeMassDistribution::new(origin, h, dims, DensityMode::ParticleNumber)
        .map_err(core_err)?;
    let mut d2 = LatticeMassDistribution::new(origin, h, dims, DensityMode::ParticleNumber)
        .map_err(core_err)?;
    d1.add_box([0.0, 0.0, 0.0], [l, l, l], rho)
        .map_err(core_err)?;
    d2.add_box([2.0 * l, 0.0, 0.0], [3.0 * l, l, l], rho)
        .map_err(core_err)?;
    let lattice = offdiag_decay_rate(&d1, &d2, &params).map_err(core_err)?;

    let vs_exact = lattice / exact;
    let vs_sharp = lattice / sharp;
    let collapse_time = 1.0 / exact;
    Ok(vec![
        sub(
            "lattice_vs_exact_overlap",
            vs_exact,
            "|ratio - 1| <= 0.01 (lattice against the exact axis integrals)",
            (vs_exact - 1.0).abs() <= 0.01,
        ),
        sub(
            "lattice_vs_sharp_formula",
            vs_sharp,
            "|ratio - 1| <= 0.10 against (4 pi)^{3/2} lambda (a^3 rho) (V rho)",
            (vs_sharp - 1.0).abs() <= 0.10,
        ),
        sub(
            "collapse_time_window_s",
            collapse_time,
            "in [1e-9, 1e-8] s",
            (1e-9..=1e-8).contains(&collapse_time),
        ),
    ])
}

// --- criterion 8 ---------------------------------------------------------

fn energy_gain(ctx: &CheckContext) -> CResult {
    let gain = energy_gain_rate(1e24, M_PROTON, &CslParameters::default()).map_err(core_err)?;

    // trajectory-level energy flow: A and H anticommute, so the ensemble
    // mean of <H> decays at exactly twice the collapse rate
    let psi0 = StateVector::from_real(&[0.6, 0.8]).map_err(core_err)?;
    let sz = HermitianOperator::from_diagonal(&[1.0, -1.0]).map_err(core_err)?;
    let h = HermitianOperator::from_row_major(
        2,
        &[
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ],
    )
    .map_err(core_err)?;
    let ops = CollapseOperatorSet::new(vec![sz], 1.0, Some(h.clone())).map_err(core_err)?;
    let grid = TimeGrid::new(2.5e-3, 400).map_err(core_err)?;
    let options = EvolveOptions {
        record_stride: grid.n_steps(),
        ..Default::default()
    };
    let n = 10_000 * ctx.scale;
    let records = sample_nonlinear_ensemble(&psi0, &ops, grid, n, ctx.seed + 8, &options)
        .map_err(core_err)?;
    let mut vals = Vec::with_capacity(n);
    for r in &records {
        let psi = r
            .states
            .last()
            .expect("records hold snapshots")
            .normalized()
            .map_err(core_err)?;
        vals.push(h.expectation(&psi).map_err(core_err)?);
    }
    let mean: f64 = vals.iter().sum::<f64>() / n as f64;
    let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    let predicted = 0.96 * (-2.0f64).exp();
    let z = (mean - predicted).abs() / se;

    Ok(vec![
        sub(
            "formula_vs_reference",
            gain,
            "within 20% of 0.3 eV/s for 1e24 nucleons",
            (gain / 0.3 - 1.0).abs() <= 0.2,
        ),
        sub(
            "trajectory_energy_decay",
            z,
            "|<H> - 0.96 exp(-2 lambda t)| <= 3 standard errors",
            z <= 3.0,
        ),
    ])
}

// --- criterion 9 ---------------------------------------------------------

fn mass_proportional_null(ctx: &CheckContext) -> CResult {
    let params = CslParameters::default();
    let mut rng = ChaCha12Rng::seed_from_u64(ctx.seed.wrapping_add(900));
    let mut worst = 0.0f64;
    let mut trials = 0usize;
    for trial in 0..20 {
        // single-particle configurations must vanish for any coupling;
        // multi-particle ones for couplings proportional to the masses
        let single = trial % 4 == 3;
        let n_p = if single { 1 } else { 2 + trial % 2 };
        let mut axes = Vec::with_capacity(n_p);
        for _ in 0..n_p {
            let len = rng.gen_range(3..=5usize);
            let start: f64 = rng.gen_range(-1.0..1.0);
            let step: f64 = rng.gen_range(0.1..0.5);
            axes.push(
                (0..len)
                    .map(|i| start + step * i as f64)
                    .collect::<Vec<f64>>(),
            );
        }
        let total: usize = axes.iter().map(Vec::len).product();
        let mu: f64 = axes.iter().map(|ax| ax[1] - ax[0]).product();

        let mut psi: Vec<C64> = (0..total)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut phi: Vec<C64> = (0..total)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = |v: &[C64]| (v.iter().map(|c| c.norm_sqr()).sum::<f64>() * mu).sqrt();
        let n_psi = norm(&psi);
        psi.iter_mut().for_each(|c| *c /= n_psi);
        // project out psi, then normalize: the precondition wants
        // orthogonal unit vectors
        let overlap: C64 = psi.iter().zip(&phi).map(|(p, q)| p.conj() * q).sum::<C64>() * mu;
        phi.iter_mut()
            .zip(&psi)
            .for_each(|(q, p)| *q -= overlap * p);
        let n_phi = norm(&phi);
        phi.iter_mut().for_each(|c| *c /= n_phi);

        let bound = FewParticleWavefunction::new(axes.clone(), psi).map_err(core_err)?;
        let excited = FewParticleWavefunction::new(axes, phi).map_err(core_err)?;

        let masses: Vec<f64> = (0..n_p)
            .map(|_| rng.gen_range(1..=4000) as f64 / 16.0)
            .collect();
        let couplings: Vec<f64> = if single {
            vec![rng.gen_range(0.1..5.0)]
        } else {
            // power-of-two proportionality constants commute exactly with
            // every float product and sum
            let c = [0.25, 0.5, 1.0, 2.0, 4.0][trial % 5];
            masses.iter().map(|m| c * m).collect()
        };
        let rate = excitation_amplitude(&bound, &excited, &masses, &couplings, &params)
            .map_err(core_err)?;
        worst = worst.max(rate.abs());
        trials += 1;
    }
    Ok(vec![sub(
        "excitation_rate_bitwise_zero",
        worst,
        format!("= 0 exactly across {trials} randomized states (operator identity)"),
        worst == 0.0,
    )])
}

// --- criterion 10 --------------------------------------------------------

fn germanium_bound_window(ctx: &CheckContext) -> CResult {
    let _ = ctx;
    let bound = germanium_bound(0.2).map_err(core_err)?;
    Ok(vec![sub(
        "coupling_ratio_bound",
        bound,
        "in [12, 13.5] electron/proton mass ratios at the 0.2 count limit",
        (12.0..=13.5).contains(&bound),
    )])
}

// --- criterion 11 --------------------------------------------------------

fn parameter_relations_windows(ctx: &CheckContext) -> CResult {
    let _ = ctx;
    let rel = parameter_relations();
    let r1 = rel.lambda_a_over_c / 1e-32;
    let r2 = rel.gravity_fine_structure / 1e-38;
    let r3 = rel.a_planckon / 1.4e-5;
    Ok(vec![
        sub(
            "lambda_a_over_c_ratio",
            r1,
            "ratio to 1e-32 within factor 3",
            (1.0 / 3.0..=3.0).contains(&r1),
        ),
        sub(
            "gravity_fine_structure_ratio",
            r2,
            "ratio to 1e-38 within factor 3",
            (1.0 / 3.0..=3.0).contains(&r2),
        ),
        sub(
            "planckon_length_ratio",
            r3,
            "ratio to 1.4e-5 cm within 10%",
            (r3 - 1.0).abs() <= 0.1,
        ),
    ])
}

// --- criterion 12 --------------------------------------------------------

fn relativistic_kernels(ctx: &CheckContext) -> CResult {
    let _ = ctx;
    let a = 1.0;
    let mut space_err = 0.0f64;
    for z in [0.8, 1.6, 3.2, 4.5, 6.8] {
        let exact = tachyon_kernel_exact(z * a, a, KernelRegion::Spacelike).map_err(core_err)?;
        let quad = tachyon_kernel_spectral_quadrature(z * a, a, KernelRegion::Spacelike)
            .map_err(core_err)?;
        space_err = space_err.max(((quad - exact) / exact).abs());
    }
    let mut time_err = 0.0f64;
    for z in [0.5, 1.0, 2.0, 3.0, 4.0] {
        let exact = tachyon_kernel_exact(z * a, a, KernelRegion::Timelike).map_err(core_err)?;
        let quad = tachyon_kernel_spectral_quadrature(z * a, a, KernelRegion::Timelike)
            .map_err(core_err)?;
        time_err = time_err.max(((quad - exact) / exact).abs());
    }

    let delta = 1e-6 * a;
    let mut zero_crossings = 0;
    for k in 1..=4 {
        let s = k as f64 * std::f64::consts::PI * a;
        let left = tachyon_kernel_nonrel_limit(s - delta, a).map_err(core_err)?;
        let right = tachyon_kernel_nonrel_limit(s + delta, a).map_err(core_err)?;
        if left * right < 0.0 {
            zero_crossings += 1;
        }
    }

    let rp = RelParameters::new(2.0, 1e4, 0.3, 5.11e5).map_err(core_err)?;
    let a_rel = rp.length_scale();
    let rate = fermion_collapse_rate(40.0 * a_rel, &rp).map_err(core_err)?;
    let asym = fermion_rate_asymptote(&rp);
    let asym_err = ((rate - asym) / asym).abs();

    Ok(vec![
        sub(
            "spacelike_quadrature",
            space_err,
            "relative error <= 0.03 at 5 points",
            space_err <= 0.03,
        ),
        sub(
            "timelike_quadrature",
            time_err,
            "relative error <= 0.03 at 5 points",
            time_err <= 0.03,
        ),
        sub(
            "nonrel_zeros",
            zero_crossings as f64,
            "sign change at k pi a for k = 1..4",
            zero_crossings == 4,
        ),
        sub(
            "fermion_rate_asymptote",
            asym_err,
            "separation >> a reaches gamma g^2 a / 16 pi within 1e-12",
            asym_err <= 1e-12,
        ),
    ])
}

// --- criterion 13 --------------------------------------------------------

const MINI_CONFIG: &str = "[mini]
experiment = gambler_ruin
seed = 11
amp0 = 0.6
amp1 = 0.8
lambda = 1.0 /s
t_final = 1 s
dt = 2.5e-3 s
trajectories = 200
";

fn determinism(ctx: &CheckContext) -> CResult {
    let _ = ctx;
    let scenarios = parse_config(MINI_CONFIG).map_err(|e| e.to_string())?;
    let sc = &scenarios[0];
    let r1 = run_scenario_experiment(sc).map_err(|e| e.to_string())?;
    let r2 = run_scenario_experiment(sc).map_err(|e| e.to_string())?;
    let same_results = to_json_bytes(&r1.output.results) == to_json_bytes(&r2.output.results);
    let same_series = r1.output.series == r2.output.series;
    let same_report = r1.output.report == r2.output.report;
    let identical = same_results && same_series && same_report;
    Ok(vec![sub(
        "rerun_byte_identical",
        if identical { 0.0 } else { 1.0 },
        "results, series and report bytes identical across reruns = 0 differences",
        identical,
    )])
}
