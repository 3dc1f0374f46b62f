//! Relativistic-model formula evaluation: the tachyonic noise kernel in its
//! exact Bessel closed forms, oscillatory-quadrature cross-checks of the
//! spectral definition, the fermion collapse and energy-gain rates, time
//! dilation of the rate, and single-emission kinematics. No dynamics here,
//! formulas and their limit checks only.

use std::f64::consts::PI;

use crate::bessel::{bessel_k1, bessel_y1};
use crate::constants::{C_LIGHT, HBAR_C_EV_CM};
use crate::error::{CoreError, Result};
use crate::quadrature::{adaptive_simpson, gauss_legendre};

/// Couplings and masses of the relativistic model. Energies in eV; the
/// noise correlation length follows from the tachyon mass as hbar/(mu c).
#[derive(Clone, Copy, Debug)]
pub struct RelParameters {
    /// collapse coupling; gamma = lambda / mu reproduces the
    /// nonrelativistic rate scale
    pub gamma: f64,
    /// tachyon mass, eV
    pub mu: f64,
    /// fermion-scalar vertex coupling
    pub g_coupling: f64,
    /// fermion mass, eV
    pub m: f64,
}

impl RelParameters {
    pub fn new(gamma: f64, mu: f64, g_coupling: f64, m: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "gamma must be >= 0, got {gamma}"
            )));
        }
        if !(mu > 0.0) || !(m > 0.0) {
            return Err(CoreError::InvalidParameter(
                "mu and m must be positive".into(),
            ));
        }
        if !g_coupling.is_finite() {
            return Err(CoreError::InvalidParameter(
                "g_coupling must be finite".into(),
            ));
        }
        Ok(Self {
            gamma,
            mu,
            g_coupling,
            m,
        })
    }

    /// Correlation length hbar c / mu in cm; about 2e-5 cm at mu = 1 eV.
    pub fn length_scale(&self) -> f64 {
        HBAR_C_EV_CM / self.mu
    }
}

/// Whether a kernel argument is a spacelike or timelike invariant interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelRegion {
    Spacelike,
    Timelike,
}

/// Exact spacetime noise kernel of the tachyonic field:
/// spacelike interval x: -(8 pi^2 a x)^-1 Y_1(x/a),
/// timelike interval x: -(4 pi^3 a x)^-1 K_1(x/a).
pub fn tachyon_kernel_exact(x: f64, a: f64, region: KernelRegion) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "interval must be > 0, got {x}"
        )));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "a must be > 0, got {a}"
        )));
    }
    let z = x / a;
    Ok(match region {
        KernelRegion::Spacelike => -bessel_y1(z) / (8.0 * PI * PI * a * x),
        KernelRegion::Timelike => -bessel_k1(z) / (4.0 * PI * PI * PI * a * x),
    })
}

/// Equal-time spatial kernel in the nonrelativistic limit:
/// (2 pi)^-2 sin(r/a) / r, with the removable singularity filled at small r.
pub fn tachyon_kernel_nonrel_limit(separation: f64, a: f64) -> Result<f64> {
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "separation must be >= 0, got {separation}"
        )));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "a must be > 0, got {a}"
        )));
    }
    let z = separation / a;
    let pref = 1.0 / (4.0 * PI * PI);
    if z < 1e-8 {
        // sin(z)/(a z) -> (1 - z^2/6)/a
        return Ok(pref * (1.0 - z * z / 6.0) / a);
    }
    Ok(pref * z.sin() / separation)
}

/// Cumulative oscillatory integral accelerated by iterated averaging of the
/// partial sums at integrand zeros: three passes of adjacent means over the
/// tail, then the middle entry. Standard treatment for conditionally
/// convergent oscillatory tails.
fn averaged_tail(mut partials: Vec<f64>) -> f64 {
    let passes = 3.min(partials.len().saturating_sub(1));
    for _ in 0..passes {
        partials = partials.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    partials[partials.len() / 2]
}

/// Direct quadrature of the spectral definition of the spacetime kernel,
/// for cross-checking the closed forms. Momentum cutoff ~45/a; the
/// conditionally convergent tail is summed between integrand zeros with
/// iterated averaging. Good to a few percent.
pub fn tachyon_kernel_spectral_quadrature(x: f64, a: f64, region: KernelRegion) -> Result<f64> {
    if !(x > 0.0) || !(a > 0.0) {
        return Err(CoreError::InvalidParameter("need x > 0 and a > 0".into()));
    }
    let (nodes, weights) = gauss_legendre(32)?;
    let segment = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        nodes
            .iter()
            .zip(&weights)
            .map(|(&u, &w)| w * f(mid + half * u))
            .sum::<f64>()
            * half
    };
    match region {
        KernelRegion::Spacelike => {
            // -(8 pi^2 a x)^-1 Y_1(x/a) equals
            // (4 pi^3 a x)^-1 int_0^inf du cosh(u) sin((x/a) cosh(u)),
            // the integral running over the tachyon mass shell.
            let z = x / a;
            let f = |u: f64| u.cosh() * (z * u.cosh()).sin();
            let n0 = (z / PI).ceil().max(1.0) as usize;
            let u_of = |n: usize| ((n as f64) * PI / z).acosh();
            let n_max = (45.0 * z / PI).floor() as usize;
            let mut partials = Vec::new();
            let mut acc = segment(&f, 0.0, u_of(n0));
            partials.push(acc);
            for n in n0..n_max {
                acc += segment(&f, u_of(n), u_of(n + 1));
                partials.push(acc);
            }
            let keep = partials.len().min(13);
            let tail = partials.split_off(partials.len() - keep);
            Ok(averaged_tail(tail) / (4.0 * PI.powi(3) * a * x))
        }
        KernelRegion::Timelike => {
            // -(4 pi^3 a t)^-1 K_1(t/a) equals (4 pi^3)^-1 times the
            // regularized mass-shell integral
            // int_0^inf ds sqrt(s^2 + mu^2) cos(s t); splitting off the
            // divergent piece s cos(st) (regularized value -1/t^2) leaves
            // mu^2 cos(st) / (sqrt(s^2 + mu^2) + s), summed to ~50/a.
            let t = x;
            let mu = 1.0 / a;
            let g = |s: f64| mu * mu * (s * t).cos() / ((s * s + mu * mu).sqrt() + s);
            let s_of = |n: usize| (n as f64 + 0.5) * PI / t;
            let mut partials = Vec::new();
            let mut acc = segment(&g, 0.0, s_of(0));
            partials.push(acc);
            let mut n = 0;
            while s_of(n + 1) <= 50.0 / a {
                acc += segment(&g, s_of(n), s_of(n + 1));
                partials.push(acc);
                n += 1;
            }
            let keep = partials.len().min(13);
            let tail = partials.split_off(partials.len() - keep);
            let reduced = averaged_tail(tail);
            Ok((reduced - 1.0 / (t * t)) / (4.0 * PI.powi(3)))
        }
    }
}

/// The mass-shell delta reduction behind the nonrelativistic kernel,
/// evaluated as a radial quadrature with a narrow Gaussian standing in for
/// the shell delta. Cross-check for tachyon_kernel_nonrel_limit to ~1e-6.
pub fn tachyon_nonrel_radial_quadrature(separation: f64, a: f64) -> Result<f64> {
    if !(separation > 0.0) || !(a > 0.0) {
        return Err(CoreError::InvalidParameter(
            "need separation > 0 and a > 0".into(),
        ));
    }
    let mu2 = 1.0 / (a * a);
    let sigma = 1e-5 * mu2;
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    // int d^3k sin(kr)/(kr) * k^2 * delta(mu^2 - k^2) / (2 pi)^3 * 4 pi,
    // written over w = k^2
    let f = |w: f64| {
        let k = w.sqrt();
        0.5 * (k * separation).sin() * norm * (-(mu2 - w) * (mu2 - w) / (2.0 * sigma * sigma)).exp()
    };
    let integral = adaptive_simpson(f, mu2 - 8.0 * sigma, mu2 + 8.0 * sigma, 1e-14);
    Ok(integral / (2.0 * PI * PI * separation))
}

/// Collapse rate of a massive fermion pair separated by s:
/// (gamma g^2 a / 16 pi) [1 - exp(-s/a)], a the tachyon correlation length.
pub fn fermion_collapse_rate(separation: f64, params: &RelParameters) -> Result<f64> {
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "separation must be >= 0, got {separation}"
        )));
    }
    let a = params.length_scale();
    Ok(fermion_rate_asymptote(params) * (1.0 - (-separation / a).exp()))
}

/// Large-separation limit gamma g^2 a / 16 pi, the quantity that plays the
/// role of the nonrelativistic collapse rate lambda.
pub fn fermion_rate_asymptote(params: &RelParameters) -> f64 {
    params.gamma * params.g_coupling * params.g_coupling * params.length_scale() / (16.0 * PI)
}

/// Mean energy gain rate of a fermion coupled to the tachyonic noise,
/// independent of the particle's four-momentum:
/// (1 / 2 pi^2) gamma (mu^3 / m) sqrt(1 + (mu/2m)^2).
/// With gamma in 1/(s eV) (gamma = lambda/mu) and masses in eV the result
/// is in eV/s.
pub fn relativistic_energy_rate(params: &RelParameters) -> f64 {
    let ratio = params.mu / (2.0 * params.m);
    params.gamma * params.mu.powi(3) / params.m * (1.0 + ratio * ratio).sqrt() / (2.0 * PI * PI)
}

/// Collapse rate seen for a particle moving at speed v0 (units of c):
/// rest_rate sqrt(1 - v0^2).
pub fn time_dilated_collapse_rate(rest_rate: f64, v0: f64) -> Result<f64> {
    if !(rest_rate > 0.0) || !rest_rate.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "rest_rate must be > 0, got {rest_rate}"
        )));
    }
    if !(v0.abs() < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "|v0| must be < 1, got {v0}"
        )));
    }
    Ok(rest_rate * (1.0 - v0 * v0).sqrt())
}

/// Energy and momentum a fermion of mass m picks up absorbing one quantum
/// of the tachyonic field: (mu^2/2m, mu sqrt(1 + (mu/2m)^2)). The pair is
/// checked on both shells before returning: the fermion stays on its mass
/// shell, (m + dE)^2 - p^2 = m^2, and the transfer lies on the tachyon
/// shell, dE^2 - p^2 = -mu^2.
pub fn single_emission_kinematics(m: f64, mu: f64) -> Result<(f64, f64)> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "m must be > 0, got {m}"
        )));
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "mu must be >= 0, got {mu}"
        )));
    }
    let de = mu * mu / (2.0 * m);
    let half = mu / (2.0 * m);
    let p = mu * (1.0 + half * half).sqrt();
    let fermion_shell = (m + de) * (m + de) - p * p;
    if ((fermion_shell - m * m) / (m * m)).abs() > 1e-10 {
        return Err(CoreError::InvalidParameter(format!(
            "fermion shell violated: {fermion_shell} vs {}",
            m * m
        )));
    }
    if mu > 0.0 {
        let transfer_shell = de * de - p * p;
        if ((transfer_shell + mu * mu) / (mu * mu)).abs() > 1e-10 {
            return Err(CoreError::InvalidParameter(format!(
                "tachyon shell violated: {transfer_shell} vs {}",
                -mu * mu
            )));
        }
    }
    Ok((de, p))
}

/// Classical-ensemble radius the wavefunction spreads over in time t
/// (seconds) from repeated momentum kicks: (mu/m) c t, in cm.
pub fn wavepacket_spread_radius(params: &RelParameters, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "t must be >= 0, got {t}"
        )));
    }
    Ok(params.mu / params.m * C_LIGHT * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> RelParameters {
        RelParameters::new(2.0, 1.0, 0.7, 511_000.0).unwrap()
    }

    #[test]
    fn length_scale_near_grw_length_at_one_ev() {
        let p = RelParameters::new(1.0, 1.0, 1.0, 511_000.0).unwrap();
        let a = p.length_scale();
        assert!(a > 1.0e-5 && a < 4.0e-5, "a = {a}");
    }

    #[test]
    fn exact_kernels_reject_bad_arguments() {
        assert!(tachyon_kernel_exact(0.0, 1.0, KernelRegion::Spacelike).is_err());
        assert!(tachyon_kernel_exact(-1.0, 1.0, KernelRegion::Timelike).is_err());
        assert!(tachyon_kernel_exact(1.0, 0.0, KernelRegion::Spacelike).is_err());
    }

    #[test]
    fn timelike_decay_ratio_tracks_the_exponential_envelope() {
        let a = 2.0e-5;
        let v3 = tachyon_kernel_exact(3.0 * a, a, KernelRegion::Timelike).unwrap();
        let v4 = tachyon_kernel_exact(4.0 * a, a, KernelRegion::Timelike).unwrap();
        let ratio = v3 / v4;
        // asymptotically K_1(z) ~ e^-z sqrt(pi/2z), so the kernel ratio
        // approaches e * sqrt(4/3) * (4/3)
        let envelope = std::f64::consts::E * (4.0f64 / 3.0).sqrt() * (4.0 / 3.0);
        assert!(
            (ratio / envelope - 1.0).abs() < 0.15,
            "{ratio} vs {envelope}"
        );
        // and both values are negative (attractive-sign kernel)
        assert!(v3 < 0.0 && v4 < 0.0);
    }

    #[test]
    fn spacelike_zero_spacing_approaches_pi_in_phase() {
        // locate two consecutive kernel zeros at large argument by bisection
        let a = 1.0;
        let f = |z: f64| tachyon_kernel_exact(z, a, KernelRegion::Spacelike).unwrap();
        let mut zeros = Vec::new();
        let mut prev = f(30.0);
        let mut z = 30.0;
        while zeros.len() < 2 && z < 40.0 {
            let next = f(z + 0.05);
            if prev.signum() != next.signum() {
                let (mut lo, mut hi) = (z, z + 0.05);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid).signum() == f(lo).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                zeros.push(0.5 * (lo + hi));
            }
            prev = next;
            z += 0.05;
        }
        assert_eq!(zeros.len(), 2);
        let spacing = zeros[1] - zeros[0];
        assert!((spacing - PI).abs() < 0.01 * PI, "spacing {spacing}");
    }

    #[test]
    fn spacelike_closed_form_matches_spectral_quadrature() {
        let a = 1.5e-5;
        for z in [0.8, 1.6, 3.2, 4.5, 6.8] {
            let x = z * a;
            let exact = tachyon_kernel_exact(x, a, KernelRegion::Spacelike).unwrap();
            let quad = tachyon_kernel_spectral_quadrature(x, a, KernelRegion::Spacelike).unwrap();
            assert!(
                ((quad - exact) / exact).abs() < 0.03,
                "z = {z}: {quad} vs {exact}"
            );
        }
    }

    #[test]
    fn timelike_closed_form_matches_spectral_quadrature() {
        let a = 1.5e-5;
        for z in [0.5, 1.0, 2.0, 3.0, 4.0] {
            let x = z * a;
            let exact = tachyon_kernel_exact(x, a, KernelRegion::Timelike).unwrap();
            let quad = tachyon_kernel_spectral_quadrature(x, a, KernelRegion::Timelike).unwrap();
            assert!(
                ((quad - exact) / exact).abs() < 0.03,
                "z = {z}: {quad} vs {exact}"
            );
        }
    }

    #[test]
    fn nonrel_limit_values_and_zeros() {
        let a = 1.0e-5;
        let pref = 1.0 / (4.0 * PI * PI);
        // removable singularity fill
        let near = tachyon_kernel_nonrel_limit(1e-12 * a, a).unwrap();
        assert!((near - pref / a).abs() / (pref / a) < 1e-9);
        // zeros at k pi a
        for k in 1..=3 {
            let v = tachyon_kernel_nonrel_limit(k as f64 * PI * a, a).unwrap();
            assert!(v.abs() < 1e-12 * pref / a, "zero {k}: {v}");
        }
        // radial shell quadrature reproduces the closed form
        for z in [0.4, 0.9, 1.7, 2.6, 4.1] {
            let r = z * a;
            let want = tachyon_kernel_nonrel_limit(r, a).unwrap();
            let got = tachyon_nonrel_radial_quadrature(r, a).unwrap();
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "z = {z}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn fermion_rate_limits_and_monotonicity() {
        let p = params();
        let a = p.length_scale();
        assert_eq!(fermion_collapse_rate(0.0, &p).unwrap(), 0.0);
        let asym = fermion_rate_asymptote(&p);
        let far = fermion_collapse_rate(1.0, &p).unwrap(); // 1 cm >> a
        assert!(((far - asym) / asym).abs() < 1e-12);
        let at_a = fermion_collapse_rate(a, &p).unwrap();
        assert!(((at_a - asym * (1.0 - (-1.0f64).exp())) / asym).abs() < 1e-12);
        let mut last = -1.0;
        for i in 0..200 {
            let s = a * i as f64 * 0.1;
            let r = fermion_collapse_rate(s, &p).unwrap();
            assert!(r >= last && r <= asym * (1.0 + 1e-12));
            last = r;
        }
        assert!(fermion_collapse_rate(-1.0, &p).is_err());
    }

    #[test]
    fn energy_rate_anchors() {
        let mut p = params();
        p.gamma = 0.0;
        assert_eq!(relativistic_energy_rate(&p), 0.0);
        // mu = 2m carries the sqrt(2) kinematic factor
        let q = RelParameters::new(1.0, 2.0, 1.0, 1.0).unwrap();
        let base = q.gamma * q.mu.powi(3) / q.m / (2.0 * PI * PI);
        assert!((relativistic_energy_rate(&q) / base - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn energy_rate_ratio_to_nonrelativistic_is_mass_independent() {
        // gamma = lambda / mu; nonrelativistic gain is (3/8) lambda mu^2 / m
        // in the same units, so the ratio must be 4 / (3 pi^2) for mu << m.
        let lambda = 1e-16;
        let mu = 1.0;
        for m in [511_000.0, 9.383e8] {
            let p = RelParameters::new(lambda / mu, mu, 1.0, m).unwrap();
            let rel = relativistic_energy_rate(&p);
            let nonrel = 3.0 / 8.0 * lambda * mu * mu / m;
            let ratio = rel / nonrel;
            assert!(
                (ratio - 4.0 / (3.0 * PI * PI)).abs() < 1e-10 * ratio.abs() + 1e-6,
                "m = {m}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn time_dilation_anchors() {
        assert_eq!(time_dilated_collapse_rate(2.0, 0.0).unwrap(), 2.0);
        let r = time_dilated_collapse_rate(1.0, 0.6).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        let near = time_dilated_collapse_rate(1.0, 1.0 - 1e-12).unwrap();
        assert!(near < 2e-6);
        assert!(time_dilated_collapse_rate(1.0, 1.0).is_err());
        assert!(time_dilated_collapse_rate(1.0, -1.3).is_err());
        assert!(time_dilated_collapse_rate(0.0, 0.5).is_err());
    }

    #[test]
    fn emission_kinematics_anchors() {
        // electron absorbing a 1 eV tachyon gains about 1e-6 eV
        let (de, p) = single_emission_kinematics(511_000.0, 1.0).unwrap();
        assert!((de / 9.785e-7 - 1.0).abs() < 1e-3, "de = {de}");
        assert!((p / 1.0 - 1.0).abs() < 1e-9, "p = {p}");
        // mu = 2m
        let (de2, p2) = single_emission_kinematics(3.0, 6.0).unwrap();
        assert!((de2 - 6.0).abs() < 1e-12);
        assert!((p2 - 6.0 * 2.0f64.sqrt()).abs() < 1e-12);
        // mu -> 0
        let (de0, p0) = single_emission_kinematics(1.0, 0.0).unwrap();
        assert_eq!((de0, p0), (0.0, 0.0));
    }

    #[test]
    fn wavepacket_spread_is_linear_in_time() {
        let p = params();
        let r = wavepacket_spread_radius(&p, 2.0).unwrap();
        assert!((r - p.mu / p.m * C_LIGHT * 2.0).abs() < 1e-12 * r);
        assert_eq!(wavepacket_spread_radius(&p, 0.0).unwrap(), 0.0);
        assert!(wavepacket_spread_radius(&p, -1.0).is_err());
    }
}
