//! Spatial collapse-rate calculators on lattice mass distributions: Gaussian
//! smearing of number densities, off-diagonal decay rates between
//! configurations, clump and extended-object laws, energy gain, bound-state
//! excitation, coupling bounds, and the gravitational-kernel variants.
//!
//! Everything here is CGS. Rates come out in 1/s, energies in eV where
//! stated. All lattice reductions use compensated summation so results do
//! not depend on traversal order at the 1e-12 level.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::BufRead;

use ndarray::Array3;

use crate::constants::{
    planck_mass, C_LIGHT, EV_ERG, GRW_LAMBDA, GRW_LENGTH, G_NEWTON, HBAR, M_ELECTRON, M_PROTON,
};
use crate::error::{CoreError, Result};
use crate::C64;

/// Collapse-model parameters: per-nucleon rate, smearing length, and
/// species coupling factors (a particle of species s collapses at rate
/// lambda g_s^2).
#[derive(Clone, Debug)]
pub struct CslParameters {
    /// s^-1, per nucleon
    pub lambda: f64,
    /// cm
    pub a: f64,
    pub couplings: BTreeMap<String, f64>,
}

impl Default for CslParameters {
    fn default() -> Self {
        let mut couplings = BTreeMap::new();
        couplings.insert("p".to_string(), 1.0);
        couplings.insert("n".to_string(), 1.0);
        Self {
            lambda: GRW_LAMBDA,
            a: GRW_LENGTH,
            couplings,
        }
    }
}

impl CslParameters {
    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "a must be > 0, got {a}"
            )));
        }
        Ok(Self {
            lambda,
            a,
            ..Self::default()
        })
    }

    pub fn coupling(&self, species: &str) -> f64 {
        self.couplings.get(species).copied().unwrap_or(1.0)
    }

    /// g^2 factor applied to every nucleon-density rate.
    pub fn nucleon_rate_factor(&self) -> f64 {
        let g = self.coupling("n");
        g * g
    }
}

/// How the stored density values are to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensityMode {
    /// particles per cm^3
    ParticleNumber,
    /// grams per cm^3
    MassGrams,
}

/// Nonnegative density sampled on a regular 3D grid. Cell (i, j, k) is
/// centered at origin + (i+1/2, j+1/2, k+1/2) * spacing.
#[derive(Clone, Debug)]
pub struct LatticeMassDistribution {
    origin: [f64; 3],
    spacing: f64,
    values: Array3<f64>,
    mode: DensityMode,
}

impl LatticeMassDistribution {
    pub fn new(
        origin: [f64; 3],
        spacing: f64,
        dims: [usize; 3],
        mode: DensityMode,
    ) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "spacing must be > 0, got {spacing}"
            )));
        }
        if dims.contains(&0) {
            return Err(CoreError::InvalidParameter(
                "lattice dims must be nonzero".into(),
            ));
        }
        Ok(Self {
            origin,
            spacing,
            values: Array3::zeros(dims),
            mode,
        })
    }

    pub fn from_values(
        origin: [f64; 3],
        spacing: f64,
        values: Array3<f64>,
        mode: DensityMode,
    ) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoreError::InvalidParameter(
                "density values must be finite and nonnegative".into(),
            ));
        }
        let dims = values.dim();
        let mut out = Self::new(origin, spacing, [dims.0, dims.1, dims.2], mode)?;
        out.values = values;
        Ok(out)
    }

    /// Rows of "x,y,z,value" (cm and density units per mode); '#' comments and
    /// blank lines ignored. The lattice bounds come from the data extent.
    pub fn from_csv<R: BufRead>(reader: R, spacing: f64, mode: DensityMode) -> Result<Self> {
        let mut rows: Vec<([f64; 3], f64)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(CoreError::Parse {
                    line: idx + 1,
                    message: format!("expected 4 comma-separated fields, got {}", parts.len()),
                });
            }
            let mut nums = [0.0; 4];
            for (slot, p) in nums.iter_mut().zip(&parts) {
                *slot = p.parse::<f64>().map_err(|e| CoreError::Parse {
                    line: idx + 1,
                    message: format!("bad number {p:?}: {e}"),
                })?;
            }
            if nums[3] < 0.0 {
                return Err(CoreError::Parse {
                    line: idx + 1,
                    message: "density must be nonnegative".into(),
                });
            }
            rows.push(([nums[0], nums[1], nums[2]], nums[3]));
        }
        if rows.is_empty() {
            return Err(CoreError::InvalidParameter("no density rows in CSV".into()));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for (pos, _) in &rows {
            for ax in 0..3 {
                lo[ax] = lo[ax].min(pos[ax]);
                hi[ax] = hi[ax].max(pos[ax]);
            }
        }
        let mut dims = [0usize; 3];
        let mut origin = [0.0; 3];
        for ax in 0..3 {
            origin[ax] = lo[ax] - spacing / 2.0;
            dims[ax] = (((hi[ax] - lo[ax]) / spacing).round() as usize) + 1;
        }
        let mut out = Self::new(origin, spacing, dims, mode)?;
        for (pos, v) in rows {
            let idx = out.cell_of(pos).ok_or_else(|| {
                CoreError::InvalidParameter("CSV row fell outside the inferred lattice".into())
            })?;
            out.values[idx] += v;
        }
        Ok(out)
    }

    pub fn dims(&self) -> [usize; 3] {
        let d = self.values.dim();
        [d.0, d.1, d.2]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn mode(&self) -> DensityMode {
        self.mode
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn cell_center(&self, idx: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + (idx[0] as f64 + 0.5) * self.spacing,
            self.origin[1] + (idx[1] as f64 + 0.5) * self.spacing,
            self.origin[2] + (idx[2] as f64 + 0.5) * self.spacing,
        ]
    }

    fn cell_of(&self, pos: [f64; 3]) -> Option<[usize; 3]> {
        let mut idx = [0usize; 3];
        let dims = self.dims();
        for ax in 0..3 {
            let rel = (pos[ax] - self.origin[ax]) / self.spacing;
            if rel < 0.0 {
                return None;
            }
            let i = rel.floor() as usize;
            if i >= dims[ax] {
                return None;
            }
            idx[ax] = i;
        }
        Some(idx)
    }

    /// Deposit a total amount (particles or grams per the mode) into the
    /// cell containing the position.
    pub fn add_point(&mut self, pos: [f64; 3], amount: f64) -> Result<()> {
        if !(amount >= 0.0) || !amount.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "amount must be >= 0, got {amount}"
            )));
        }
        let idx = self
            .cell_of(pos)
            .ok_or_else(|| CoreError::InvalidParameter(format!("position {pos:?} off-lattice")))?;
        let h3 = self.spacing.powi(3);
        self.values[idx] += amount / h3;
        Ok(())
    }

    /// Add a uniform density to every cell whose center lies in [lo, hi).
    pub fn add_box(&mut self, lo: [f64; 3], hi: [f64; 3], density: f64) -> Result<()> {
        if !(density >= 0.0) || !density.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "density must be >= 0, got {density}"
            )));
        }
        let dims = self.dims();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let c = self.cell_center([i, j, k]);
                    if (0..3).all(|ax| c[ax] >= lo[ax] && c[ax] < hi[ax]) {
                        self.values[[i, j, k]] += density;
                    }
                }
            }
        }
        Ok(())
    }

    /// Add a uniform density to every cell whose center lies in the ball.
    pub fn add_sphere(&mut self, center: [f64; 3], radius: f64, density: f64) -> Result<()> {
        if !(density >= 0.0) || !density.is_finite() || !(radius > 0.0) {
            return Err(CoreError::InvalidParameter(
                "sphere needs radius > 0, density >= 0".into(),
            ));
        }
        let dims = self.dims();
        let r2 = radius * radius;
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let c = self.cell_center([i, j, k]);
                    let d2: f64 = (0..3).map(|ax| (c[ax] - center[ax]).powi(2)).sum();
                    if d2 <= r2 {
                        self.values[[i, j, k]] += density;
                    }
                }
            }
        }
        Ok(())
    }

    /// Nucleon number density per cm^3 (mass mode divides by the proton mass).
    pub fn number_density(&self) -> Array3<f64> {
        match self.mode {
            DensityMode::ParticleNumber => self.values.clone(),
            DensityMode::MassGrams => self.values.mapv(|v| v / M_PROTON),
        }
    }

    /// Mass per cell in grams (number mode multiplies by the proton mass).
    pub fn cell_masses(&self) -> Array3<f64> {
        let h3 = self.spacing.powi(3);
        match self.mode {
            DensityMode::ParticleNumber => self.values.mapv(|v| v * h3 * M_PROTON),
            DensityMode::MassGrams => self.values.mapv(|v| v * h3),
        }
    }

    pub fn total_particles(&self) -> f64 {
        let h3 = self.spacing.powi(3);
        neumaier(self.number_density().iter().map(|v| v * h3))
    }

    fn same_lattice(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && self.spacing == other.spacing
            && (0..3).all(|ax| (self.origin[ax] - other.origin[ax]).abs() <= 1e-12 * self.spacing)
    }
}

/// Compensated (Neumaier) summation: the result is independent of chunking
/// at the 1e-12 level required of lattice reductions.
pub(crate) fn neumaier<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// 1D smearing kernel samples including the lattice measure, renormalized so
/// the discrete sum equals the continuum integral (4 pi a^2)^{1/4} exactly.
fn smearing_kernel_1d(a: f64, h: f64) -> Vec<f64> {
    let w = (6.0 * a / h).ceil() as i64;
    let raw: Vec<f64> = (-w..=w)
        .map(|i| (-((i as f64) * h).powi(2) / (2.0 * a * a)).exp())
        .collect();
    let total: f64 = raw.iter().sum::<f64>() * h;
    let scale = (4.0 * PI * a * a).powf(0.25) / total;
    raw.into_iter().map(|v| v * scale * h).collect()
}

fn convolve_axis(values: &Array3<f64>, kernel: &[f64], axis: usize) -> Array3<f64> {
    let dims = values.dim();
    let n = [dims.0, dims.1, dims.2];
    let w = (kernel.len() - 1) / 2;
    let mut out = Array3::zeros(dims);
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let center = [i, j, k][axis] as i64;
                let mut acc = 0.0;
                for (t, kv) in kernel.iter().enumerate() {
                    let src = center + t as i64 - w as i64;
                    if src < 0 || src >= n[axis] as i64 {
                        continue;
                    }
                    let mut idx = [i, j, k];
                    idx[axis] = src as usize;
                    acc += values[idx] * kv;
                }
                out[[i, j, k]] += acc;
            }
        }
    }
    out
}

/// Gaussian-smeared nucleon density field
/// a(x) = (pi a^2)^{-3/4} int dz n(z) exp(-(x-z)^2 / 2a^2),
/// evaluated on the distribution's own lattice by separable convolution
/// (kernel truncated at 6a, discretely renormalized). The lattice must
/// resolve the smearing length: spacing <= a/2.
pub fn smeared_density_field(
    dist: &LatticeMassDistribution,
    params: &CslParameters,
) -> Result<Array3<f64>> {
    let a = params.a;
    let h = dist.spacing();
    if h > a / 2.0 * (1.0 + 1e-12) {
        return Err(CoreError::ResolutionViolation {
            spacing: h,
            limit: a / 2.0,
        });
    }
    // the renormalized axis kernel already carries the (pi a^2)^{-1/4}
    // prefactor: its discrete sum is the full continuum integral
    let kernel = smearing_kernel_1d(a, h);
    let mut field = dist.number_density();
    for axis in 0..3 {
        field = convolve_axis(&field, &kernel, axis);
    }
    Ok(field)
}

/// Collapse rate separating two configurations:
/// (lambda g^2 / 2) int dx [a_1(x) - a_2(x)]^2. Off-diagonal density matrix
/// elements between the configurations decay as exp(-rate * T).
pub fn offdiag_decay_rate(
    dist1: &LatticeMassDistribution,
    dist2: &LatticeMassDistribution,
    params: &CslParameters,
) -> Result<f64> {
    if !dist1.same_lattice(dist2) {
        return Err(CoreError::InvalidParameter(
            "distributions must share origin, spacing and dims".into(),
        ));
    }
    let f1 = smeared_density_field(dist1, params)?;
    let f2 = smeared_density_field(dist2, params)?;
    let h3 = dist1.spacing().powi(3);
    let integral = neumaier(
        f1.iter()
            .zip(f2.iter())
            .map(|(x, y)| (x - y) * (x - y) * h3),
    );
    Ok(0.5 * params.lambda * params.nucleon_rate_factor() * integral)
}

/// Small-clump law: two pointlike clumps of n particles separated by d
/// decohere at lambda g^2 n^2 [1 - exp(-d^2 / 4a^2)].
pub fn clump_rate(n: u64, separation: f64, params: &CslParameters) -> Result<f64> {
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "separation must be >= 0, got {separation}"
        )));
    }
    let nn = n as f64;
    let x = separation / (2.0 * params.a);
    Ok(params.lambda * params.nucleon_rate_factor() * nn * nn * (1.0 - (-x * x).exp()))
}

/// Exact double integral over [0, L]^2 of exp(-(u-v)^2 / 4a^2); one axis
/// factor of the smeared self-overlap of a uniform cube.
pub fn cube_axis_double_integral(l: f64, a: f64) -> f64 {
    let x = l / (2.0 * a);
    2.0 * l * a * PI.sqrt() * erf(x) - 4.0 * a * a * (1.0 - (-x * x).exp())
}

/// Exact separation rate for a uniform cube (side l, number density rho)
/// displaced far enough that the configurations do not overlap:
/// lambda g^2 rho^2 I(l)^3 with I the axis double integral above.
pub fn displaced_cube_rate(l: f64, rho: f64, params: &CslParameters) -> f64 {
    let i1 = cube_axis_double_integral(l, params.a);
    params.lambda * params.nucleon_rate_factor() * rho * rho * i1 * i1 * i1
}

/// erf by Abramowitz-Stegun 7.1.26-style series is not accurate enough here;
/// use the complementary-series split accurate to ~1e-15.
fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        // Maclaurin series, converges fast for x < 3
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for k in 1..200 {
            term *= -x2 / k as f64;
            let add = term / (2 * k + 1) as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum * 2.0 / PI.sqrt()
    } else {
        // continued-fraction complement, x >= 3
        1.0 - erfc_large(x)
    }
}

fn erfc_large(x: f64) -> f64 {
    // Laplace continued fraction for erfc, excellent for x >= 3
    let mut f = 0.0;
    for k in (1..=60).rev() {
        f = 0.5 * k as f64 / (x + f);
    }
    (-x * x).exp() / ((x + f) * PI.sqrt())
}

/// Mean kinetic-energy gain per second for n particles of mass m:
/// (3/4) lambda g^2 n hbar^2 / (m a^2), in eV/s.
pub fn energy_gain_rate(n_particles: f64, mass: f64, params: &CslParameters) -> Result<f64> {
    if !(n_particles >= 0.0) || !(mass > 0.0) {
        return Err(CoreError::InvalidParameter(
            "need n_particles >= 0 and mass > 0".into(),
        ));
    }
    let erg_per_s = 0.75 * params.lambda * params.nucleon_rate_factor() * n_particles * HBAR * HBAR
        / (mass * params.a * params.a);
    Ok(erg_per_s / EV_ERG)
}

/// Few-particle wavefunction sampled on a product of uniform 1D grids,
/// one axis per particle.
#[derive(Clone, Debug)]
pub struct FewParticleWavefunction {
    axes: Vec<Vec<f64>>,
    dx: Vec<f64>,
    amps: Vec<C64>,
}

impl FewParticleWavefunction {
    pub fn new(axes: Vec<Vec<f64>>, amps: Vec<C64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(CoreError::InvalidParameter(
                "need at least one particle axis".into(),
            ));
        }
        let mut dx = Vec::with_capacity(axes.len());
        for axis in &axes {
            if axis.len() < 2 {
                return Err(CoreError::InvalidParameter(
                    "each axis needs >= 2 points".into(),
                ));
            }
            let d = axis[1] - axis[0];
            if !(d > 0.0) {
                return Err(CoreError::InvalidParameter(
                    "axis points must increase".into(),
                ));
            }
            for w in axis.windows(2) {
                if ((w[1] - w[0]) - d).abs() > 1e-9 * d {
                    return Err(CoreError::InvalidParameter(
                        "axis spacing must be uniform".into(),
                    ));
                }
            }
            dx.push(d);
        }
        let expect: usize = axes.iter().map(Vec::len).product();
        if amps.len() != expect {
            return Err(CoreError::DimensionMismatch {
                context: "wavefunction amplitudes vs grid",
                expected: expect,
                got: amps.len(),
            });
        }
        Ok(Self { axes, dx, amps })
    }

    pub fn n_particles(&self) -> usize {
        self.axes.len()
    }

    fn measure(&self) -> f64 {
        self.dx.iter().product()
    }

    fn strides(&self) -> Vec<usize> {
        let n = self.axes.len();
        let mut s = vec![1usize; n];
        for j in (0..n.saturating_sub(1)).rev() {
            s[j] = s[j + 1] * self.axes[j + 1].len();
        }
        s
    }

    fn inner(&self, other: &Self) -> C64 {
        let mu = self.measure();
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .fold(C64::new(0.0, 0.0), |acc, v| acc + v)
            * mu
    }

    /// <self| x_j |other> by grid quadrature.
    fn position_element(&self, other: &Self, j: usize) -> C64 {
        let strides = self.strides();
        let nj = self.axes[j].len();
        let mu = self.measure();
        let mut acc = C64::new(0.0, 0.0);
        for (idx, (a, b)) in self.amps.iter().zip(&other.amps).enumerate() {
            let ij = (idx / strides[j]) % nj;
            acc += a.conj() * b * self.axes[j][ij];
        }
        acc * mu
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.axes.len() == other.axes.len()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| a == b)
    }
}

/// Excitation rate of a bound state by collapse noise, leading order in
/// (bound size / a)^2:
/// Gamma = (lambda / 2a^2) |<phi| sum_j g_j (x_j - Q) |psi>|^2,
/// Q the center of mass. The operator is evaluated as
/// sum_j c_j x_j with c_j = (g_j sum m - m_j sum g) / sum m, which vanishes
/// identically (exact zeros, not small numbers) when g is proportional
/// to m, and for a single particle.
pub fn excitation_amplitude(
    psi_bound: &FewParticleWavefunction,
    phi_excited: &FewParticleWavefunction,
    masses: &[f64],
    couplings: &[f64],
    params: &CslParameters,
) -> Result<f64> {
    let n = psi_bound.n_particles();
    if !psi_bound.same_grid(phi_excited) {
        return Err(CoreError::InvalidParameter(
            "wavefunctions live on different grids".into(),
        ));
    }
    if masses.len() != n || couplings.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "masses/couplings vs particles",
            expected: n,
            got: masses.len().min(couplings.len()),
        });
    }
    if masses.iter().any(|&m| !(m > 0.0)) {
        return Err(CoreError::InvalidParameter(
            "masses must be positive".into(),
        ));
    }
    let n_psi = psi_bound.inner(psi_bound).re;
    let n_phi = phi_excited.inner(phi_excited).re;
    if (n_psi - 1.0).abs() > 1e-6 || (n_phi - 1.0).abs() > 1e-6 {
        return Err(CoreError::NonOrthogonal(format!(
            "wavefunctions must be grid-normalized: <psi|psi> = {n_psi}, <phi|phi> = {n_phi}"
        )));
    }
    let overlap = phi_excited.inner(psi_bound);
    if overlap.norm() > 1e-6 {
        return Err(CoreError::NonOrthogonal(format!(
            "states must be orthogonal: |<phi|psi>| = {}",
            overlap.norm()
        )));
    }
    let sum_m: f64 = masses.iter().sum();
    let sum_g: f64 = couplings.iter().sum();
    let mut element = C64::new(0.0, 0.0);
    for j in 0..n {
        let c_j = (couplings[j] * sum_m - masses[j] * sum_g) / sum_m;
        if c_j != 0.0 {
            element += phi_excited.position_element(psi_bound, j) * c_j;
        }
    }
    Ok(params.lambda / (2.0 * params.a * params.a) * element.norm_sqr())
}

/// Bound on the electron/proton coupling ratio from a germanium
/// spontaneous-radiation count limit, expressed as a multiple of m_e/m_p:
/// the experiment bounds 5000 (g_e/g_p - m_e/m_p)^2 counts/keV-kg-day.
pub fn germanium_bound(measured_limit: f64) -> Result<f64> {
    if !(measured_limit >= 0.0) || !measured_limit.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "limit must be >= 0, got {measured_limit}"
        )));
    }
    Ok(1.0 + (measured_limit / 5000.0).sqrt() * (M_PROTON / M_ELECTRON))
}

/// Which gravitational damping kernel to apply between mass differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GravityVariant {
    /// (G/a) exp(-r^2 / 4a^2): curvature-fluctuation form, short ranged.
    LocalCurvature,
    /// G erf(r/2a) / r: smeared Newtonian potential, long ranged; the
    /// r -> 0 limit is G / (a sqrt(pi)).
    GlobalPotential,
}

/// Decay exponent rate between two mass configurations under a
/// gravitational collapse kernel:
/// (1/2 hbar) sum_{cells i,j} dM_i K(r_ij) dM_j, dM = M1 - M2 per cell.
/// Direct double sum over occupied cells; both kernels are positive
/// definite so the result is nonnegative up to roundoff.
pub fn gravity_decay_exponent(
    dist1: &LatticeMassDistribution,
    dist2: &LatticeMassDistribution,
    variant: GravityVariant,
    a: f64,
) -> Result<f64> {
    if !dist1.same_lattice(dist2) {
        return Err(CoreError::InvalidParameter(
            "distributions must share origin, spacing and dims".into(),
        ));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "a must be > 0, got {a}"
        )));
    }
    let m1 = dist1.cell_masses();
    let m2 = dist2.cell_masses();
    let dims = dist1.dims();
    let h = dist1.spacing();
    let mut cells: Vec<([f64; 3], f64)> = Vec::new();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let dm = m1[[i, j, k]] - m2[[i, j, k]];
                if dm != 0.0 {
                    cells.push((dist1.cell_center([i, j, k]), dm));
                }
            }
        }
    }
    let _ = h;
    let self_kernel = match variant {
        GravityVariant::LocalCurvature => G_NEWTON / a,
        GravityVariant::GlobalPotential => G_NEWTON / (a * PI.sqrt()),
    };
    let mut terms: Vec<f64> = Vec::with_capacity(cells.len());
    for (p, (rp, dmp)) in cells.iter().enumerate() {
        let mut row = 0.0;
        for (q, (rq, dmq)) in cells.iter().enumerate() {
            let kernel = if p == q {
                self_kernel
            } else {
                let r2: f64 = (0..3).map(|ax| (rp[ax] - rq[ax]).powi(2)).sum();
                match variant {
                    GravityVariant::LocalCurvature => G_NEWTON / a * (-r2 / (4.0 * a * a)).exp(),
                    GravityVariant::GlobalPotential => {
                        let r = r2.sqrt();
                        G_NEWTON * erf(r / (2.0 * a)) / r
                    }
                }
            };
            row += dmp * dmq * kernel;
        }
        terms.push(row);
    }
    Ok(neumaier(terms) / (2.0 * HBAR))
}

/// The dimensionless and dimensional constants relating the collapse
/// parameters to gravity: the observed ratio lambda a / c, the
/// gravitational fine structure G m_p^2 / hbar c, and the rate/length the
/// two gravitational models predict from first principles.
#[derive(Clone, Copy, Debug)]
pub struct ParameterRelations {
    /// lambda a / c with the default parameters (dimensionless)
    pub lambda_a_over_c: f64,
    /// G m_p^2 / (hbar c) (dimensionless)
    pub gravity_fine_structure: f64,
    /// G m_p^2 / (hbar a), s^-1
    pub lambda_diosi: f64,
    /// (1 / 2 sqrt(3 pi)) G m_p^2 / (hbar a), s^-1
    pub lambda_planckon: f64,
    /// (3/pi^2)^{1/4} (hbar / 4 m_p c) sqrt(m_planck / m_p), cm
    pub a_planckon: f64,
}

pub fn parameter_relations() -> ParameterRelations {
    let p = CslParameters::default();
    let gm2 = G_NEWTON * M_PROTON * M_PROTON;
    ParameterRelations {
        lambda_a_over_c: p.lambda * p.a / C_LIGHT,
        gravity_fine_structure: gm2 / (HBAR * C_LIGHT),
        lambda_diosi: gm2 / (HBAR * p.a),
        lambda_planckon: gm2 / (HBAR * p.a) / (2.0 * (3.0 * PI).sqrt()),
        a_planckon: (3.0 / (PI * PI)).powf(0.25) * HBAR / (4.0 * M_PROTON * C_LIGHT)
            * (planck_mass() / M_PROTON).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grw() -> CslParameters {
        CslParameters::default()
    }

    const A: f64 = GRW_LENGTH;

    fn lattice(extent: [f64; 6], h: f64) -> LatticeMassDistribution {
        let dims = [
            ((extent[1] - extent[0]) / h).round() as usize,
            ((extent[3] - extent[2]) / h).round() as usize,
            ((extent[5] - extent[4]) / h).round() as usize,
        ];
        LatticeMassDistribution::new(
            [extent[0], extent[2], extent[4]],
            h,
            dims,
            DensityMode::ParticleNumber,
        )
        .unwrap()
    }

    #[test]
    #[allow(clippy::excessive_precision)] // reference digits quoted past f64
    fn erf_reference_values() {
        // mpmath, 30 significant digits, truncated to f64
        assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-14);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-14);
        assert!((erf(2.5) - 0.999_593_047_982_555_0).abs() < 1e-14);
        assert!((erf(4.0) - 0.999_999_984_582_742_1).abs() < 1e-14);
        assert!((erf(-1.0) + 0.842_700_792_949_714_9).abs() < 1e-14);
    }

    #[test]
    fn smeared_point_mass_matches_analytic_profile() {
        let mut dist = lattice(
            [-7.0 * A, 7.0 * A, -7.0 * A, 7.0 * A, -7.0 * A, 7.0 * A],
            A / 2.0,
        );
        let n = 10.0;
        dist.add_point([0.01 * A, 0.01 * A, 0.01 * A], n).unwrap();
        let field = smeared_density_field(&dist, &grw()).unwrap();
        let center = dist.cell_of([0.0, 0.0, 0.0]).unwrap();
        let c = dist.cell_center(center);
        let dims = dist.dims();
        let pref = n * (PI * A * A).powf(-0.75);
        for probe in [[0i64, 0, 0], [2, 0, 0], [0, 3, 1], [4, 4, 4], [-3, 2, -5]] {
            let idx = [
                (center[0] as i64 + probe[0]) as usize,
                (center[1] as i64 + probe[1]) as usize,
                (center[2] as i64 + probe[2]) as usize,
            ];
            assert!(idx.iter().zip(&dims).all(|(i, d)| i < d));
            let x = dist.cell_center(idx);
            let r2: f64 = (0..3).map(|ax| (x[ax] - c[ax]).powi(2)).sum();
            let want = pref * (-r2 / (2.0 * A * A)).exp();
            let got = field[idx];
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "probe {probe:?}: {got} vs {want}"
            );
        }
        // total integral preserved
        let h3 = dist.spacing().powi(3);
        let total = neumaier(field.iter().map(|v| v * h3));
        let want = n * (4.0 * PI * A * A).powf(0.75);
        assert!(((total - want) / want).abs() < 1e-3, "{total} vs {want}");
    }

    #[test]
    fn smeared_uniform_region_hits_plateau_value() {
        let h = A / 2.0;
        let mut dist = lattice([0.0, 24.0 * A, 0.0, 24.0 * A, 0.0, 24.0 * A], h);
        let rho = 3.0e20;
        dist.add_box([0.0, 0.0, 0.0], [24.0 * A, 24.0 * A, 24.0 * A], rho)
            .unwrap();
        let field = smeared_density_field(&dist, &grw()).unwrap();
        let mid = [24, 24, 24];
        let want = (4.0 * PI).powf(0.75) * A.powf(1.5) * rho;
        assert!(
            ((field[mid] - want) / want).abs() < 1e-3,
            "{} vs {want}",
            field[mid]
        );
    }

    #[test]
    fn zero_density_smears_to_zero() {
        let dist = lattice([0.0, 5.0 * A, 0.0, 5.0 * A, 0.0, 5.0 * A], A / 2.0);
        let field = smeared_density_field(&dist, &grw()).unwrap();
        assert!(field.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coarse_lattice_is_rejected() {
        let dist = lattice([0.0, 5.0 * A, 0.0, 5.0 * A, 0.0, 5.0 * A], A);
        match smeared_density_field(&dist, &grw()) {
            Err(CoreError::ResolutionViolation { spacing, limit }) => {
                assert!(spacing > limit);
            }
            other => panic!("expected ResolutionViolation, got {other:?}"),
        }
    }

    #[test]
    fn identical_distributions_do_not_decohere() {
        let mut dist = lattice(
            [-6.0 * A, 8.0 * A, -6.0 * A, 6.0 * A, -6.0 * A, 6.0 * A],
            A / 2.0,
        );
        dist.add_point([0.0, 0.0, 0.0], 5.0).unwrap();
        dist.add_point([1.5 * A, 0.0, 0.0], 3.0).unwrap();
        let rate = offdiag_decay_rate(&dist, &dist.clone(), &grw()).unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn separated_point_clumps_follow_the_n_squared_law() {
        let h = A / 2.0;
        let ext = [-7.0 * A, 17.0 * A, -7.0 * A, 7.0 * A, -7.0 * A, 7.0 * A];
        let n = 10.0;
        let mut d1 = lattice(ext, h);
        d1.add_point([0.0, 0.0, 0.0], n).unwrap();
        let mut d2 = lattice(ext, h);
        d2.add_point([10.0 * A, 0.0, 0.0], n).unwrap();
        let rate = offdiag_decay_rate(&d1, &d2, &grw()).unwrap();
        let want = clump_rate(10, 10.0 * A, &grw()).unwrap();
        assert!(((rate - want) / want).abs() < 0.02, "{rate} vs {want}");

        // halving the spacing moves the rate by < 2%
        let ext_fine = ext;
        let mut f1 = lattice(ext_fine, h / 2.0);
        f1.add_point([0.0, 0.0, 0.0], n).unwrap();
        let mut f2 = lattice(ext_fine, h / 2.0);
        f2.add_point([10.0 * A, 0.0, 0.0], n).unwrap();
        let fine = offdiag_decay_rate(&f1, &f2, &grw()).unwrap();
        assert!(((fine - rate) / rate).abs() < 0.02, "{fine} vs {rate}");
    }

    #[test]
    fn overlapping_mass_cancels_out_of_the_rate() {
        let h = A / 2.0;
        let ext = [-7.0 * A, 17.0 * A, -7.0 * A, 7.0 * A, -7.0 * A, 7.0 * A];
        let mut d1 = lattice(ext, h);
        d1.add_point([0.0, 0.0, 0.0], 10.0).unwrap();
        let mut d2 = lattice(ext, h);
        d2.add_point([10.0 * A, 0.0, 0.0], 10.0).unwrap();
        let bare = offdiag_decay_rate(&d1, &d2, &grw()).unwrap();
        // identical blob added to both
        for d in [&mut d1, &mut d2] {
            d.add_box(
                [2.0 * A, -2.0 * A, -2.0 * A],
                [6.0 * A, 2.0 * A, 2.0 * A],
                80.0,
            )
            .unwrap();
        }
        let dressed = offdiag_decay_rate(&d1, &d2, &grw()).unwrap();
        assert!(
            ((dressed - bare) / bare).abs() < 1e-9,
            "{dressed} vs {bare}"
        );
    }

    #[test]
    fn displaced_cube_matches_the_exact_overlap_integral() {
        // h = a/4 keeps the cell-center mass placement error ~0.3%
        let h = A / 4.0;
        let l = 4.0 * A;
        let shift = 12.0 * A;
        let ext = [-6.0 * A, 22.0 * A, -6.0 * A, 10.0 * A, -6.0 * A, 10.0 * A];
        let rho = 1.0e25;
        let mut d1 = lattice(ext, h);
        d1.add_box([0.0, 0.0, 0.0], [l, l, l], rho).unwrap();
        let mut d2 = lattice(ext, h);
        d2.add_box([shift, 0.0, 0.0], [shift + l, l, l], rho)
            .unwrap();
        let rate = offdiag_decay_rate(&d1, &d2, &grw()).unwrap();
        let want = displaced_cube_rate(l, rho, &grw());
        assert!(((rate - want) / want).abs() < 0.01, "{rate} vs {want}");
    }

    #[test]
    fn clump_rate_limits() {
        let p = grw();
        let far = clump_rate(7, 1.0, &p).unwrap(); // 1 cm >> a
        assert!((far - p.lambda * 49.0).abs() < 1e-30);
        assert_eq!(clump_rate(7, 0.0, &p).unwrap(), 0.0);
        let single = clump_rate(1, 1.0, &p).unwrap();
        assert!((single - 1e-16).abs() < 1e-26);
    }

    #[test]
    fn coupling_scale_enters_every_rate_squared() {
        let mut scaled = grw();
        scaled.couplings.insert("n".into(), 3.0);
        let base = grw();
        let r0 = clump_rate(5, 2.0 * A, &base).unwrap();
        let r1 = clump_rate(5, 2.0 * A, &scaled).unwrap();
        assert!((r1 / r0 - 9.0).abs() < 1e-12);
        let e0 = energy_gain_rate(1e24, M_PROTON, &base).unwrap();
        let e1 = energy_gain_rate(1e24, M_PROTON, &scaled).unwrap();
        assert!((e1 / e0 - 9.0).abs() < 1e-12);
    }

    #[test]
    fn energy_gain_rate_reference_values() {
        let rate = energy_gain_rate(1e24, M_PROTON, &grw()).unwrap();
        assert!((rate / 0.311_237 - 1.0).abs() < 1e-3, "rate {rate}");
        // headline: ~0.3 eV/s for a gram-scale object
        assert!((rate - 0.3).abs() / 0.3 < 0.2);
        let mut off = grw();
        off.lambda = 0.0;
        assert_eq!(energy_gain_rate(1e24, M_PROTON, &off).unwrap(), 0.0);
        let mut wide = grw();
        wide.a = 2.0 * GRW_LENGTH;
        let quarter = energy_gain_rate(1e24, M_PROTON, &wide).unwrap();
        assert!((quarter * 4.0 / rate - 1.0).abs() < 1e-12);
    }

    fn gaussian_1d(x: f64, center: f64, width: f64) -> f64 {
        (-(x - center) * (x - center) / (2.0 * width * width)).exp()
    }

    /// Two-particle oscillator states in particle coordinates: CM ground
    /// state times relative ground (psi) or first excited (phi).
    fn oscillator_pair(
        m1: f64,
        m2: f64,
        ell_cm: f64,
        ell_rel: f64,
        n_grid: usize,
        extent: f64,
    ) -> (FewParticleWavefunction, FewParticleWavefunction) {
        let axis: Vec<f64> = (0..n_grid)
            .map(|i| -extent + 2.0 * extent * i as f64 / (n_grid - 1) as f64)
            .collect();
        let mtot = m1 + m2;
        let mut psi = Vec::with_capacity(n_grid * n_grid);
        let mut phi = Vec::with_capacity(n_grid * n_grid);
        for &x1 in &axis {
            for &x2 in &axis {
                let x_cm = (m1 * x1 + m2 * x2) / mtot;
                let x_rel = x1 - x2;
                let ground = gaussian_1d(x_cm, 0.0, ell_cm) * gaussian_1d(x_rel, 0.0, ell_rel);
                psi.push(C64::new(ground, 0.0));
                phi.push(C64::new(ground * x_rel, 0.0));
            }
        }
        let normalize = |amps: &mut Vec<C64>, dx: f64| {
            let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx * dx;
            let s = n2.sqrt();
            for a in amps.iter_mut() {
                *a /= s;
            }
        };
        let dx = axis[1] - axis[0];
        normalize(&mut psi, dx);
        normalize(&mut phi, dx);
        (
            FewParticleWavefunction::new(vec![axis.clone(), axis.clone()], psi).unwrap(),
            FewParticleWavefunction::new(vec![axis.clone(), axis], phi).unwrap(),
        )
    }

    #[test]
    fn excitation_rate_matches_oscillator_oracle() {
        // g = (1, 0): Gamma = (lambda/2a^2) (m2/M)^2 |<1|x_rel|0>|^2 with
        // |<1|x_rel|0>|^2 = ell^2/2 for oscillator length ell.
        let (m1, m2) = (1.0, 3.0);
        let ell = 1.0e-8;
        let (psi, phi) = oscillator_pair(m1, m2, ell, ell, 72, 7.0 * ell);
        let p = grw();
        let got = excitation_amplitude(&psi, &phi, &[m1, m2], &[1.0, 0.0], &p).unwrap();
        let want = p.lambda / (2.0 * p.a * p.a) * (m2 / (m1 + m2)).powi(2) * ell * ell / 2.0;
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        // scaling both couplings by s scales the rate by s^2
        let scaled = excitation_amplitude(&psi, &phi, &[m1, m2], &[2.5, 0.0], &p).unwrap();
        assert!((scaled / got - 6.25).abs() < 1e-9);
    }

    #[test]
    fn mass_proportional_coupling_cannot_excite() {
        // dyadic masses and a dyadic proportionality constant make the
        // operator identity exact in floating point as well
        let (m1, m2) = (0.5, 2.0);
        let ell = 1.0e-8;
        let (psi, phi) = oscillator_pair(m1, m2, 0.8 * ell, 1.3 * ell, 48, 8.0 * ell);
        let got =
            excitation_amplitude(&psi, &phi, &[m1, m2], &[3.0 * m1, 3.0 * m2], &grw()).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn single_particle_cannot_be_excited() {
        let n = 64;
        let ell = 1.0e-8;
        let axis: Vec<f64> = (0..n)
            .map(|i| -6.0 * ell + 12.0 * ell * i as f64 / (n - 1) as f64)
            .collect();
        let dx = axis[1] - axis[0];
        let mut psi: Vec<C64> = axis
            .iter()
            .map(|&x| C64::new(gaussian_1d(x, 0.0, ell), 0.0))
            .collect();
        let mut phi: Vec<C64> = axis
            .iter()
            .map(|&x| C64::new(x * gaussian_1d(x, 0.0, ell), 0.0))
            .collect();
        for v in [&mut psi, &mut phi] {
            let n2: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx;
            let s = n2.sqrt();
            for a in v.iter_mut() {
                *a /= s;
            }
        }
        let psi = FewParticleWavefunction::new(vec![axis.clone()], psi).unwrap();
        let phi = FewParticleWavefunction::new(vec![axis], phi).unwrap();
        let got = excitation_amplitude(&psi, &phi, &[1.7], &[0.9], &grw()).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn non_orthogonal_states_are_rejected() {
        let (m1, m2) = (1.0, 3.0);
        let ell = 1.0e-8;
        let (psi, _) = oscillator_pair(m1, m2, ell, ell, 48, 7.0 * ell);
        match excitation_amplitude(&psi, &psi, &[m1, m2], &[1.0, 0.0], &grw()) {
            Err(CoreError::NonOrthogonal(_)) => {}
            other => panic!("expected NonOrthogonal, got {other:?}"),
        }
    }

    #[test]
    fn germanium_bound_reference_points() {
        assert_eq!(germanium_bound(0.0).unwrap(), 1.0);
        let b = germanium_bound(0.2).unwrap();
        assert!((b / 12.6126 - 1.0).abs() < 1e-3, "bound {b}");
        assert!((12.0..=13.5).contains(&b));
        let full = germanium_bound(5000.0).unwrap();
        assert!((full - (1.0 + M_PROTON / M_ELECTRON)).abs() < 1e-9);
    }

    #[test]
    fn gravity_identical_distributions_give_zero() {
        let mut d = lattice(
            [-2.0 * A, 2.0 * A, -2.0 * A, 2.0 * A, -2.0 * A, 2.0 * A],
            A / 2.0,
        );
        d.add_point([0.0, 0.0, 0.0], 500.0).unwrap();
        for variant in [
            GravityVariant::LocalCurvature,
            GravityVariant::GlobalPotential,
        ] {
            let rate = gravity_decay_exponent(&d, &d.clone(), variant, A).unwrap();
            assert_eq!(rate, 0.0);
        }
    }

    #[test]
    fn gravity_point_pair_reference_values() {
        let h = A / 2.0;
        let r = 10.0 * A;
        let ext = [-A, 11.0 * A, -A, A, -A, A];
        let mass = 1.0e-12; // grams
        let mut d1 = lattice(ext, h);
        let mut d2 = lattice(ext, h);
        d1.values = Array3::zeros((d1.dims()[0], d1.dims()[1], d1.dims()[2]));
        // place masses exactly at two cell centers
        let c1 = d1.cell_of([0.01 * h, 0.01 * h, 0.01 * h]).unwrap();
        let c2 = d1.cell_of([r + 0.01 * h, 0.01 * h, 0.01 * h]).unwrap();
        let h3 = h * h * h;
        d1.values[c1] = mass / M_PROTON / h3;
        d2.values[c2] = mass / M_PROTON / h3;
        let r_actual = {
            let p1 = d1.cell_center(c1);
            let p2 = d1.cell_center(c2);
            ((0..3).map(|ax| (p1[ax] - p2[ax]).powi(2)).sum::<f64>()).sqrt()
        };
        // exact double-sum value for two cells
        let global = gravity_decay_exponent(&d1, &d2, GravityVariant::GlobalPotential, A).unwrap();
        let want = G_NEWTON * mass * mass / HBAR
            * (1.0 / (A * PI.sqrt()) - erf(r_actual / (2.0 * A)) / r_actual);
        assert!(((global - want) / want).abs() < 1e-10, "{global} vs {want}");
        // r >> a limit: erf saturates, kernel is Newtonian
        let far = G_NEWTON * mass * mass / HBAR * (1.0 / (A * PI.sqrt()) - 1.0 / r_actual);
        assert!(((global - far) / far).abs() < 1e-6, "{global} vs {far}");

        let local = gravity_decay_exponent(&d1, &d2, GravityVariant::LocalCurvature, A).unwrap();
        let want_local = G_NEWTON * mass * mass / (HBAR * A)
            * (1.0 - (-r_actual * r_actual / (4.0 * A * A)).exp());
        assert!(((local - want_local) / want_local).abs() < 1e-10);
    }

    #[test]
    fn gravity_local_rate_matches_cell_sum_heuristic() {
        // smooth blob, fine lattice: the full local double sum should sit
        // within 15% of the per-cell heuristic (G/2 hbar a) sum dM_cell^2
        // evaluated on cells of side 2 sqrt(pi) a, whose volume equals the
        // local kernel's integral.
        let h_super = 2.0 * PI.sqrt() * A;
        let h = h_super / 4.0;
        let n = 24;
        let mut d1 = LatticeMassDistribution::new(
            [
                -(n as f64) * h / 2.0,
                -(n as f64) * h / 2.0,
                -(n as f64) * h / 2.0,
            ],
            h,
            [n, n, n],
            DensityMode::MassGrams,
        )
        .unwrap();
        let sigma = 4.0 * A;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let c = d1.cell_center([i, j, k]);
                    let r2: f64 = c.iter().map(|x| x * x).sum();
                    d1.values[[i, j, k]] = 1.0e-10 * (-r2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        let empty = LatticeMassDistribution::new(d1.origin(), h, d1.dims(), DensityMode::MassGrams)
            .unwrap();
        let full = gravity_decay_exponent(&d1, &empty, GravityVariant::LocalCurvature, A).unwrap();
        // aggregate 4x4x4 fine cells into heuristic cells
        let masses = d1.cell_masses();
        let ns = n / 4;
        let mut heuristic = 0.0;
        for si in 0..ns {
            for sj in 0..ns {
                for sk in 0..ns {
                    let mut m = 0.0;
                    for di in 0..4 {
                        for dj in 0..4 {
                            for dk in 0..4 {
                                m += masses[[si * 4 + di, sj * 4 + dj, sk * 4 + dk]];
                            }
                        }
                    }
                    heuristic += m * m;
                }
            }
        }
        heuristic *= G_NEWTON / (2.0 * HBAR * A);
        assert!(
            ((full - heuristic) / heuristic).abs() < 0.15,
            "full {full} vs heuristic {heuristic}"
        );
    }

    #[test]
    fn parameter_relations_reference_values() {
        let r = parameter_relations();
        assert!((r.lambda_a_over_c / 3.335_640_951_981_52e-32 - 1.0).abs() < 1e-12);
        assert!((r.gravity_fine_structure / 5.906_3e-39 - 1.0).abs() < 1e-4);
        assert!((r.lambda_diosi / 1.770_7e-23 - 1.0).abs() < 1e-4);
        assert!((r.lambda_planckon / 2.883_8e-24 - 1.0).abs() < 1e-4);
        assert!((r.a_planckon / 1.408_2e-5 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn csv_import_places_rows_on_cells() {
        let csv = "# comment\n0.0,0.0,0.0,5.0\n\n1.0,0.0,0.0,2.5\n0.0,2.0,0.0,1.0\n";
        let dist = LatticeMassDistribution::from_csv(
            std::io::BufReader::new(csv.as_bytes()),
            0.5,
            DensityMode::ParticleNumber,
        )
        .unwrap();
        assert_eq!(dist.spacing(), 0.5);
        let total: f64 = dist.values().iter().sum();
        assert!((total - 8.5).abs() < 1e-12);
        let bad = LatticeMassDistribution::from_csv(
            std::io::BufReader::new("0,0,0\n".as_bytes()),
            0.5,
            DensityMode::ParticleNumber,
        );
        match bad {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected Parse error, got {other:?}"),
        }
    }
}
