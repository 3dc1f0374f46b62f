//! Ensemble-level observables: density matrices propagated analytically,
//! reconstructed from trajectory samples, or evolved under colored noise;
//! outcome counting with confidence intervals; and the random-phase
//! comparison ensemble whose density matches collapse while its individual
//! trajectories never concentrate.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::{
    CollapseOperatorSet, DetectionParams, Outcome, TrajectoryRecord, WeightConvention,
};
use crate::error::{CoreError, Result};
use crate::gauss_hermite::gauss_hermite;
use crate::noise::{kernel_inverse_finite, Kernel, TimeGrid};
use crate::quadrature::adaptive_simpson;
use crate::quantum::{DensityMatrix, StateVector};
use crate::C64;

/// Two-sided confidence level used for all interval estimates (the 3 sigma
/// convention).
pub const CI_LEVEL: f64 = 0.997;
const Z_CI: f64 = 3.0;

/// Summary of a trajectory ensemble: outcome tally with confidence
/// intervals, the reconstructed final-time density matrix, and the weight
/// diagnostics that validate raw-measure sampling.
#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub n_trajectories: usize,
    /// Detected outcomes per joint-eigenbasis index.
    pub outcome_counts: Vec<usize>,
    pub undetected: usize,
    /// Per-index (fraction, lo, hi) among detected trajectories at
    /// [`CI_LEVEL`]. Raw-measure ensembles weight each trajectory by its
    /// likelihood, so the fractions estimate physical probabilities for
    /// both conventions; exact binomial bounds below 30 unweighted
    /// detections.
    pub outcome_fractions: Vec<(f64, f64, f64)>,
    pub mean_density: DensityMatrix,
    pub mean_weight: f64,
    pub weight_std_error: f64,
    pub ci_level: f64,
}

/// Binomial tail P(X >= k) for n trials at success probability p.
fn binom_upper_tail(n: usize, k: usize, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut log_pmf_terms = Vec::with_capacity(n + 1);
    for x in 0..=n {
        // log C(n, x) accumulated incrementally
        let log_c: f64 = (0..x)
            .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
            .sum();
        log_pmf_terms.push(log_c);
    }
    for (x, log_c) in log_pmf_terms.iter().enumerate().skip(k) {
        let lp = if p > 0.0 {
            (x as f64) * p.ln()
        } else if x == 0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        let lq = if p < 1.0 {
            ((n - x) as f64) * (1.0 - p).ln()
        } else if x == n {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        total += (log_c + lp + lq).exp();
    }
    total.min(1.0)
}

/// Exact (Clopper-Pearson) binomial interval at [`CI_LEVEL`].
fn exact_binomial_ci(k: usize, n: usize) -> (f64, f64) {
    let alpha = 1.0 - CI_LEVEL;
    let half = alpha / 2.0;
    let lo = if k == 0 {
        0.0
    } else {
        // largest p with P(X >= k | p) <= alpha/2
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if binom_upper_tail(n, k, mid) < half {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let hi = if k == n {
        1.0
    } else {
        // smallest p with P(X <= k | p) <= alpha/2
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if 1.0 - binom_upper_tail(n, k + 1, mid) < half {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (lo, hi)
}

fn shared_convention(records: &[TrajectoryRecord]) -> Result<WeightConvention> {
    let first = records
        .first()
        .ok_or_else(|| CoreError::InvalidParameter("empty trajectory ensemble".into()))?
        .weight_convention;
    if records.iter().any(|r| r.weight_convention != first) {
        return Err(CoreError::InvalidParameter(
            "ensemble mixes raw-measure and physical-measure trajectories".into(),
        ));
    }
    Ok(first)
}

fn record_weight(r: &TrajectoryRecord, convention: WeightConvention) -> f64 {
    match convention {
        WeightConvention::RawMeasure => r.weight,
        WeightConvention::Physical => 1.0,
    }
}

/// Weighted mean density over an ensemble at one recorded snapshot.
/// Trajectory states are normalized before averaging, so raw-measure weights
/// convert the average to the physical ensemble.
pub fn mc_ensemble_density(
    records: &[TrajectoryRecord],
    ops: &CollapseOperatorSet,
    snapshot: usize,
) -> Result<DensityMatrix> {
    let convention = shared_convention(records)?;
    let d = ops.dim();
    let mut acc = DMatrix::<C64>::zeros(d, d);
    let mut total_w = 0.0;
    for r in records {
        let s = r.states.get(snapshot).ok_or_else(|| {
            CoreError::InvalidParameter(format!("snapshot {snapshot} out of range"))
        })?;
        let w = record_weight(r, convention);
        let psi = s.normalized()?;
        let v = psi.as_dvector();
        acc += (v * v.adjoint()) * C64::new(w, 0.0);
        total_w += w;
    }
    if total_w <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "ensemble weights sum to zero".into(),
        ));
    }
    DensityMatrix::new(acc / C64::new(total_w, 0.0))
}

/// Outcome tally and final-snapshot density for an ensemble.
pub fn ensemble_statistics(
    records: &[TrajectoryRecord],
    ops: &CollapseOperatorSet,
) -> Result<EnsembleStats> {
    let convention = shared_convention(records)?;
    let d = ops.dim();
    let last = records[0].states.len() - 1;
    let mean_density = mc_ensemble_density(records, ops, last)?;

    let mut outcome_counts = vec![0usize; d];
    let mut undetected = 0usize;
    // physical outcome mass: raw-measure records count with their
    // likelihood weight, physical-measure records with 1
    let mut outcome_mass = vec![0.0f64; d];
    let mut detected_w = 0.0;
    let mut detected_w2 = 0.0;
    for r in records {
        match &r.outcome {
            Some(Outcome { index, .. }) => {
                outcome_counts[*index] += 1;
                let w = record_weight(r, convention);
                outcome_mass[*index] += w;
                detected_w += w;
                detected_w2 += w * w;
            }
            None => undetected += 1,
        }
    }
    let detected: usize = outcome_counts.iter().sum();

    let mut outcome_fractions = Vec::with_capacity(d);
    for (idx, &k) in outcome_counts.iter().enumerate() {
        if detected == 0 {
            outcome_fractions.push((0.0, 0.0, 1.0));
        } else if convention == WeightConvention::Physical && detected < 30 {
            let f = k as f64 / detected as f64;
            let (lo, hi) = exact_binomial_ci(k, detected);
            outcome_fractions.push((f, lo, hi));
        } else {
            let f = outcome_mass[idx] / detected_w;
            // Kish effective sample size; reduces to `detected` at weight 1
            let n_eff = detected_w * detected_w / detected_w2;
            let sigma = (f * (1.0 - f) / n_eff).max(0.0).sqrt();
            outcome_fractions.push((f, (f - Z_CI * sigma).max(0.0), (f + Z_CI * sigma).min(1.0)));
        }
    }

    let n = records.len();
    let weights: Vec<f64> = records
        .iter()
        .map(|r| record_weight(r, convention))
        .collect();
    let mean_weight = weights.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        weights
            .iter()
            .map(|w| (w - mean_weight).powi(2))
            .sum::<f64>()
            / (n as f64 - 1.0)
    } else {
        0.0
    };
    let weight_std_error = (var / n as f64).sqrt();

    Ok(EnsembleStats {
        n_trajectories: n,
        outcome_counts,
        undetected,
        outcome_fractions,
        mean_density,
        mean_weight,
        weight_std_error,
        ci_level: CI_LEVEL,
    })
}

/// One off-diagonal matrix element tracked across an ensemble's snapshots.
#[derive(Clone, Copy, Debug)]
pub struct OffdiagPoint {
    pub time: f64,
    pub value: C64,
    pub std_error: f64,
}

/// Ensemble mean of rho_jk = c_j c_k^* / |c|^2 (joint-eigenbasis indices) at
/// every recorded snapshot, with a Monte Carlo standard error combining both
/// quadratures.
pub fn offdiag_series(
    records: &[TrajectoryRecord],
    ops: &CollapseOperatorSet,
    j: usize,
    k: usize,
) -> Result<Vec<OffdiagPoint>> {
    let convention = shared_convention(records)?;
    let n_snap = records[0].times.len();
    if records.iter().any(|r| r.times.len() != n_snap) {
        return Err(CoreError::InvalidParameter(
            "records disagree on snapshot times".into(),
        ));
    }
    let mut out = Vec::with_capacity(n_snap);
    for snap in 0..n_snap {
        let mut vals = Vec::with_capacity(records.len());
        let mut weights = Vec::with_capacity(records.len());
        for r in records {
            let c = ops.to_eigen(&r.states[snap]);
            let n2: f64 = c.iter().map(|a| a.norm_sqr()).sum();
            vals.push(c[j] * c[k].conj() / n2);
            weights.push(record_weight(r, convention));
        }
        let wsum: f64 = weights.iter().sum();
        let mean: C64 = vals
            .iter()
            .zip(&weights)
            .map(|(v, w)| v * w)
            .fold(C64::new(0.0, 0.0), |a, b| a + b)
            / wsum;
        // delta-method variance of the weighted mean, per quadrature
        let var: f64 = vals
            .iter()
            .zip(&weights)
            .map(|(v, w)| {
                let dev = v - mean;
                w * w * dev.norm_sqr()
            })
            .sum::<f64>()
            / (wsum * wsum);
        out.push(OffdiagPoint {
            time: records[0].times[snap],
            value: mean,
            std_error: var.sqrt(),
        });
    }
    Ok(out)
}

/// Exact decohered density at H = 0: off-diagonal elements damped by
/// exp(-(lambda t / 2) sum_n (a_n(j) - a_n(k))^2) in the joint eigenbasis.
pub fn propagate_density_analytic(
    rho0: &DensityMatrix,
    ops: &CollapseOperatorSet,
    t: f64,
) -> Result<DensityMatrix> {
    if ops.hamiltonian().is_some() {
        return Err(CoreError::InvalidParameter(
            "analytic density propagation requires H = 0; use trajectory sampling instead".into(),
        ));
    }
    if !(t >= 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "t must be >= 0, got {t}"
        )));
    }
    if rho0.dim() != ops.dim() {
        return Err(CoreError::DimensionMismatch {
            context: "density vs operator set",
            expected: ops.dim(),
            got: rho0.dim(),
        });
    }
    let d = ops.dim();
    let basis = basis_matrix(ops);
    let mut rho_e = basis.adjoint() * rho0.matrix() * &basis;
    for j in 0..d {
        for k in 0..d {
            let gap2: f64 = (0..ops.channels())
                .map(|n| (ops.eigenvalue(n, j) - ops.eigenvalue(n, k)).powi(2))
                .sum();
            rho_e[(j, k)] *= (-0.5 * ops.lambda() * t * gap2).exp();
        }
    }
    DensityMatrix::new(&basis * rho_e * basis.adjoint())
}

fn basis_matrix(ops: &CollapseOperatorSet) -> DMatrix<C64> {
    let d = ops.dim();
    let mut m = DMatrix::zeros(d, d);
    for (k, v) in ops.basis().iter().enumerate() {
        m.set_column(k, v.as_dvector());
    }
    m
}

/// Gaussian-unitary mixture form of the decohered density: for each channel,
/// rho -> pi^{-1/2} sum_i w_i U(u_i) rho U(u_i)^dagger with
/// U(u) = exp(-i u sqrt(2 lambda t) A). Converges to the analytic result as
/// the node count grows; a single node returns rho unchanged.
pub fn propagate_density_fourier(
    rho0: &DensityMatrix,
    ops: &CollapseOperatorSet,
    t: f64,
    quadrature_nodes: usize,
) -> Result<DensityMatrix> {
    if ops.hamiltonian().is_some() {
        return Err(CoreError::InvalidParameter(
            "fourier density propagation requires H = 0".into(),
        ));
    }
    if !(t >= 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "t must be >= 0, got {t}"
        )));
    }
    let (nodes, weights) = gauss_hermite(quadrature_nodes)?;
    let d = ops.dim();
    let basis = basis_matrix(ops);
    let mut rho_e = basis.adjoint() * rho0.matrix() * &basis;
    let scale = (2.0 * ops.lambda() * t).sqrt();
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    for n in 0..ops.channels() {
        let mut next = DMatrix::<C64>::zeros(d, d);
        for (&u, &w) in nodes.iter().zip(&weights) {
            // diagonal unitary in the joint eigenbasis
            let phases: Vec<C64> = (0..d)
                .map(|k| C64::from_polar(1.0, -u * scale * ops.eigenvalue(n, k)))
                .collect();
            for j in 0..d {
                for k in 0..d {
                    next[(j, k)] += rho_e[(j, k)] * phases[j] * phases[k].conj() * w;
                }
            }
        }
        rho_e = next * C64::new(inv_sqrt_pi, 0.0);
    }
    DensityMatrix::new(&basis * rho_e * basis.adjoint())
}

/// Ensemble density of states dephased by a shared Gaussian random phase
/// B ~ N(0, lambda t) per channel: psi -> exp(-i sum_n B_n A_n) psi. Its
/// expectation reproduces the collapse decoherence law exactly, although no
/// individual member ever concentrates.
pub fn random_phase_ensemble_density(
    psi0: &StateVector,
    ops: &CollapseOperatorSet,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<DensityMatrix> {
    if !(t >= 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "t must be >= 0, got {t}"
        )));
    }
    if n_samples == 0 {
        return Err(CoreError::InvalidParameter(
            "need at least one sample".into(),
        ));
    }
    let d = ops.dim();
    let c0 = {
        let psi = psi0.normalized()?;
        ops.to_eigen(&psi)
    };
    let sigma = (ops.lambda() * t).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut acc = DMatrix::<C64>::zeros(d, d);
    let mut c = DVector::<C64>::zeros(d);
    for _ in 0..n_samples {
        c.copy_from(&c0);
        for n in 0..ops.channels() {
            let g: f64 = StandardNormal.sample(&mut rng);
            let b = sigma * g;
            for k in 0..d {
                c[k] *= C64::from_polar(1.0, -b * ops.eigenvalue(n, k));
            }
        }
        acc += &c * c.adjoint();
    }
    acc /= C64::new(n_samples as f64, 0.0);
    let basis = basis_matrix(ops);
    DensityMatrix::new(&basis * acc * basis.adjoint())
}

/// One random-phase trajectory on a grid: unitary dephasing by independent
/// Brownian phases, recorded like a collapse run so the same detection and
/// density machinery applies. Basis probabilities are constants of motion,
/// so detection never fires unless the initial state is already collapsed.
pub fn random_phase_trajectory(
    psi0: &StateVector,
    ops: &CollapseOperatorSet,
    grid: TimeGrid,
    seed: u64,
    stream: u64,
    detection: DetectionParams,
) -> Result<TrajectoryRecord> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let d = ops.dim();
    let psi = psi0.normalized()?;
    let mut c = ops.to_eigen(&psi);
    let sigma = (ops.lambda() * grid.dt()).sqrt();
    let basis = basis_matrix(ops);
    let mut times = Vec::with_capacity(grid.n_steps() + 1);
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    // unitary dephasing: basis probabilities never change
    let probs: Vec<f64> = c.iter().map(|a| a.norm_sqr()).collect();
    let mut detector = crate::engine::DetectionTracker::new(detection);
    times.push(grid.time(0));
    states.push(StateVector::from_dvector(&basis * &c));
    detector.check(&probs, grid.time(0));
    for step in 0..grid.n_steps() {
        for n in 0..ops.channels() {
            let g: f64 = StandardNormal.sample(&mut rng);
            let db = sigma * g;
            for k in 0..d {
                c[k] *= C64::from_polar(1.0, -db * ops.eigenvalue(n, k));
            }
        }
        let t = grid.time(step + 1);
        times.push(t);
        states.push(StateVector::from_dvector(&basis * &c));
        detector.check(&probs, t);
    }
    let n_snap = times.len();
    Ok(TrajectoryRecord {
        times,
        states,
        log_norm2: vec![0.0; n_snap],
        weight: 1.0,
        outcome: detector.outcome(),
        weight_convention: WeightConvention::Physical,
    })
}

/// The double time integral of a stationary kernel over [0, t]^2, reduced to
/// 2 int_0^t (t - tau) G(tau) d tau. Closed forms for the white and
/// exponential kernels; adaptive quadrature otherwise.
pub fn kernel_double_time_integral(kernel: &Kernel, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "t must be finite and >= 0, got {t}"
        )));
    }
    match kernel {
        Kernel::Delta => Ok(t),
        Kernel::OrnsteinUhlenbeck { alpha } => Ok(t - (1.0 - (-alpha * t).exp()) / alpha),
        Kernel::Constant { level } => Ok(level * t * t),
        _ => {
            if t == 0.0 {
                return Ok(0.0);
            }
            let g0 = kernel.value(0.0).abs().max(1e-300);
            let tol = 1e-11 * g0 * t * t;
            let integral = adaptive_simpson(|tau: f64| (t - tau) * kernel.value(tau), 0.0, t, tol);
            Ok(2.0 * integral)
        }
    }
}

/// Off-diagonal damping factor for colored-noise collapse at H = 0:
/// exp(-(lambda/2) (a_j - a_k)^2 times the kernel's double time integral).
pub fn nonmarkovian_offdiag_factor(
    kernel: &Kernel,
    lambda: f64,
    eigenvalue_gap: f64,
    t: f64,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let d = kernel_double_time_integral(kernel, t)?;
    Ok((-0.5 * lambda * eigenvalue_gap * eigenvalue_gap * d).exp())
}

/// Colored-noise decohered density at H = 0: every off-diagonal element of
/// the joint eigenbasis damped by [`nonmarkovian_offdiag_factor`] with the
/// channel-summed eigenvalue gap.
pub fn propagate_density_nonmarkovian(
    rho0: &DensityMatrix,
    ops: &CollapseOperatorSet,
    kernel: &Kernel,
    t: f64,
) -> Result<DensityMatrix> {
    if ops.hamiltonian().is_some() {
        return Err(CoreError::InvalidParameter(
            "colored-noise density propagation requires H = 0".into(),
        ));
    }
    let d_int = kernel_double_time_integral(kernel, t)?;
    let d = ops.dim();
    let basis = basis_matrix(ops);
    let mut rho_e = basis.adjoint() * rho0.matrix() * &basis;
    for j in 0..d {
        for k in 0..d {
            let gap2: f64 = (0..ops.channels())
                .map(|n| (ops.eigenvalue(n, j) - ops.eigenvalue(n, k)).powi(2))
                .sum();
            rho_e[(j, k)] *= (-0.5 * ops.lambda() * gap2 * d_int).exp();
        }
    }
    DensityMatrix::new(&basis * rho_e * basis.adjoint())
}

/// Off-diagonal factor when the noise couples through a response function F
/// in addition to its covariance G: the damping kernel is replaced by
/// G' = G + F G^{-1} F (composition of two-time kernels, with the
/// pseudo-inverse of G restricted to its numerical range), and a
/// deterministic phase -lambda (a_j^2 - a_k^2) double-integral of F appears.
/// F = 0 recovers [`nonmarkovian_offdiag_factor`] up to the Riemann
/// discretization of the double integral.
pub fn strunz_offdiag_factor(
    kernel: &Kernel,
    response: &DMatrix<f64>,
    grid: TimeGrid,
    lambda: f64,
    a_j: f64,
    a_k: f64,
) -> Result<C64> {
    let n = grid.n_steps();
    if response.nrows() != n || response.ncols() != n {
        return Err(CoreError::DimensionMismatch {
            context: "response matrix vs grid",
            expected: n,
            got: response.nrows(),
        });
    }
    let dt = grid.dt();
    let g = kernel.gram_matrix(&grid)?;
    let inv = kernel_inverse_finite(kernel, &grid)?;
    // samples of (F o G^{-1} o F)(t_p, t_q); the two composition integrals
    // contribute dt each, and inv.matrix already carries 1/dt^2
    let fgf = response * &inv.matrix * response * (dt * dt);
    let mut dg = 0.0;
    let mut df = 0.0;
    for p in 0..n {
        for q in 0..n {
            dg += (g[(p, q)] + fgf[(p, q)]) * dt * dt;
            df += response[(p, q)] * dt * dt;
        }
    }
    let mag = (-0.5 * lambda * (a_j - a_k) * (a_j - a_k) * dg).exp();
    let phase = -lambda * (a_j * a_j - a_k * a_k) * df;
    Ok(C64::from_polar(mag, phase))
}
