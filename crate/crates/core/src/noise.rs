//! Classical noise realizations driving the collapse engines: Brownian
//! paths for the white-noise (Markovian) models, stationary colored noise
//! for the nonMarkovian ones, and the kernel operations the closed forms
//! need (pointwise values, finite-interval inversion, square-root
//! smearing).
//!
//! Sampling is a pure function of `(grid, kernel, seed, stream)`; identical
//! inputs reproduce identical arrays bit-exactly regardless of thread
//! count. `sample_colored` produces unit-kernel noise, covariance
//! `Cov[w(t_i) w(t_j)] = G(t_i - t_j)`; engines that assume a collapse rate
//! `lambda` expect increments scaled so their variance is `lambda * dt` per
//! unit kernel mass (see [`rate_diffusion`]).

use std::io::{BufRead, Write as IoWrite};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{CoreError, Result};
use crate::C64;

/// The one mapping point between a collapse rate `lambda` and the Brownian
/// sampler's diffusion constant. `sample_brownian` draws increments of
/// variance `2 * diffusion * dt`, so this choice gives `Var[B(t)] =
/// lambda * t`: the width of the single-branch Gaussian the closed-form
/// probability density integrates to one against.
pub fn rate_diffusion(lambda: f64) -> f64 {
    0.5 * lambda
}

/// Uniform time grid: `n_steps` segments of width `dt` starting at `t0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        Self::with_origin(0.0, dt, n_steps)
    }

    pub fn with_origin(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "time grid needs finite t0 and dt > 0, got t0={t0}, dt={dt}"
            )));
        }
        Ok(Self { t0, dt, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
}

/// What the stored samples mean: cumulative `B(t_k)` (one value per grid
/// point, starting at zero) or instantaneous rates `w(t_k)` (one value per
/// segment).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    IntegratedBrownian,
    Rate,
}

/// A discretized noise realization, possibly multi-channel. The engines
/// only ever consume per-step increments, so both kinds drive the same
/// integrators.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    grid: TimeGrid,
    kind: NoiseKind,
    values: Vec<Vec<f64>>,
}

impl NoisePath {
    pub fn new(grid: TimeGrid, kind: NoiseKind, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::BadNoisePath("no channels".into()));
        }
        let want = match kind {
            NoiseKind::IntegratedBrownian => grid.n_steps + 1,
            NoiseKind::Rate => grid.n_steps,
        };
        for (c, ch) in values.iter().enumerate() {
            if ch.len() != want {
                return Err(CoreError::BadNoisePath(format!(
                    "channel {c} has {} samples, grid wants {want}",
                    ch.len()
                )));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::BadNoisePath(format!(
                    "channel {c} has non-finite samples"
                )));
            }
        }
        Ok(Self { grid, kind, values })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.values.len()
    }

    pub fn samples(&self, channel: usize) -> &[f64] {
        &self.values[channel]
    }

    /// Per-step increments `Delta B_k` for one channel: differences of a
    /// Brownian path, or `w_k * dt` for a rate path.
    pub fn increments(&self, channel: usize) -> Vec<f64> {
        let v = &self.values[channel];
        match self.kind {
            NoiseKind::IntegratedBrownian => v.windows(2).map(|w| w[1] - w[0]).collect(),
            NoiseKind::Rate => v.iter().map(|&w| w * self.grid.dt).collect(),
        }
    }

    /// Total integrated noise over the grid for one channel.
    pub fn integral(&self, channel: usize) -> f64 {
        match self.kind {
            NoiseKind::IntegratedBrownian => {
                let v = &self.values[channel];
                v[v.len() - 1] - v[0]
            }
            NoiseKind::Rate => self.values[channel].iter().sum::<f64>() * self.grid.dt,
        }
    }

    /// Combine single-channel paths on the same grid into one multi-channel
    /// path.
    pub fn stack(paths: &[NoisePath]) -> Result<NoisePath> {
        let first = paths
            .first()
            .ok_or_else(|| CoreError::BadNoisePath("empty stack".into()))?;
        let mut values = Vec::new();
        for p in paths {
            if p.grid != first.grid || p.kind != first.kind {
                return Err(CoreError::BadNoisePath(
                    "stacked paths must share grid and kind".into(),
                ));
            }
            values.extend(p.values.iter().cloned());
        }
        NoisePath::new(first.grid, first.kind, values)
    }

    /// Write as CSV: a metadata comment, a `time,<channel columns>` header,
    /// then one row per sample at 17 significant digits (lossless for f64).
    pub fn export_csv<W: IoWrite>(&self, out: &mut W) -> Result<()> {
        let kind = match self.kind {
            NoiseKind::IntegratedBrownian => "brownian",
            NoiseKind::Rate => "rate",
        };
        writeln!(
            out,
            "# noise path v1, kind={kind}, t0={:.16e}, dt={:.16e}, n_steps={}, channels={}",
            self.grid.t0,
            self.grid.dt,
            self.grid.n_steps,
            self.channels()
        )?;
        let prefix = match self.kind {
            NoiseKind::IntegratedBrownian => "B",
            NoiseKind::Rate => "w",
        };
        let header: Vec<String> = (0..self.channels())
            .map(|c| format!("{prefix}_{c}"))
            .collect();
        writeln!(out, "time,{}", header.join(","))?;
        let rows = self.values[0].len();
        for k in 0..rows {
            write!(out, "{:.16e}", self.grid.time(k))?;
            for ch in &self.values {
                write!(out, ",{:.16e}", ch[k])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn import_csv<R: BufRead>(input: R) -> Result<NoisePath> {
        let mut lines = input.lines().enumerate();
        let (_, meta) = lines.next().ok_or_else(|| CoreError::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let meta = meta?;
        let mut kind = None;
        let mut t0 = None;
        let mut dt = None;
        let mut n_steps = None;
        let mut channels = None;
        if !meta.starts_with('#') {
            return Err(CoreError::Parse {
                line: 1,
                message: "expected metadata comment line starting with '#'".into(),
            });
        }
        for field in meta.trim_start_matches('#').split(',') {
            let field = field.trim();
            if let Some((k, v)) = field.split_once('=') {
                match k.trim() {
                    "kind" => {
                        kind = Some(match v.trim() {
                            "brownian" => NoiseKind::IntegratedBrownian,
                            "rate" => NoiseKind::Rate,
                            other => {
                                return Err(CoreError::Parse {
                                    line: 1,
                                    message: format!("unknown noise kind '{other}'"),
                                })
                            }
                        })
                    }
                    "t0" => t0 = v.trim().parse::<f64>().ok(),
                    "dt" => dt = v.trim().parse::<f64>().ok(),
                    "n_steps" => n_steps = v.trim().parse::<usize>().ok(),
                    "channels" => channels = v.trim().parse::<usize>().ok(),
                    _ => {}
                }
            }
        }
        let (kind, t0, dt, n_steps, channels) = match (kind, t0, dt, n_steps, channels) {
            (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
            _ => {
                return Err(CoreError::Parse {
                    line: 1,
                    message: "metadata line missing kind/t0/dt/n_steps/channels".into(),
                })
            }
        };
        let grid = TimeGrid::with_origin(t0, dt, n_steps)?;
        let (hline_no, header) = lines.next().ok_or_else(|| CoreError::Parse {
            line: 2,
            message: "missing header".into(),
        })?;
        let header = header?;
        let cols = header.split(',').count();
        if !header.starts_with("time") || cols != channels + 1 {
            return Err(CoreError::Parse {
                line: hline_no + 1,
                message: format!("bad header '{header}', expected time + {channels} channels"),
            });
        }
        let mut values = vec![Vec::new(); channels];
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != channels + 1 {
                return Err(CoreError::Parse {
                    line: idx + 1,
                    message: format!("expected {} columns, found {}", channels + 1, parts.len()),
                });
            }
            parts[0]
                .trim()
                .parse::<f64>()
                .map_err(|_| CoreError::Parse {
                    line: idx + 1,
                    message: format!("bad time '{}'", parts[0]),
                })?;
            for (c, raw) in parts[1..].iter().enumerate() {
                let v: f64 = raw.trim().parse().map_err(|_| CoreError::Parse {
                    line: idx + 1,
                    message: format!("bad float '{raw}'"),
                })?;
                values[c].push(v);
            }
        }
        NoisePath::new(grid, kind, values)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Single-channel Brownian path: `B(t0) = 0`, independent Gaussian
/// increments of variance `2 * diffusion * dt`.
pub fn sample_brownian(
    grid: TimeGrid,
    diffusion: f64,
    seed: u64,
    stream: u64,
) -> Result<NoisePath> {
    sample_brownian_channels(grid, 1, diffusion, seed, stream)
}

/// Multi-channel variant; channels are drawn interleaved per step from one
/// generator so the channel count changes nothing about channel 0.
pub fn sample_brownian_channels(
    grid: TimeGrid,
    channels: usize,
    diffusion: f64,
    seed: u64,
    stream: u64,
) -> Result<NoisePath> {
    if channels == 0 {
        return Err(CoreError::InvalidParameter("channels must be >= 1".into()));
    }
    if !(diffusion >= 0.0) || !diffusion.is_finite() {
        return Err(CoreError::InvalidParameter(format!(
            "diffusion must be finite and >= 0, got {diffusion}"
        )));
    }
    let mut rng = rng_for(seed, stream);
    let sigma = (2.0 * diffusion * grid.dt).sqrt();
    let mut values = vec![Vec::with_capacity(grid.n_steps + 1); channels];
    for ch in values.iter_mut() {
        ch.push(0.0);
    }
    for _ in 0..grid.n_steps {
        for ch in values.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            let last = *ch.last().unwrap();
            ch.push(last + sigma * g);
        }
    }
    NoisePath::new(grid, NoiseKind::IntegratedBrownian, values)
}

/// Stationary correlation function G with spectral density G-tilde.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// White noise: G(tau) = delta(tau), flat unit spectral density.
    Delta,
    /// G(tau) = (alpha/2) exp(-alpha |tau|), G~(omega) = alpha^2/(omega^2+alpha^2).
    OrnsteinUhlenbeck { alpha: f64 },
    /// Nonrelativistic tachyonic correlator (2 pi)^-2 sin(|tau|/a)/|tau|:
    /// band-limited white noise, flat spectral density 1/(4 pi) up to 1/a.
    TachyonNonrel { a: f64 },
    /// Tabulated even spectral density: values[k] = G~(k * d_omega), linear
    /// interpolation in between, zero beyond the table.
    CustomSpectral { d_omega: f64, values: Vec<f64> },
    /// Constant correlation G(tau) = level: a rank-one, maximally degenerate
    /// kernel. Useful as the pseudo-inverse edge case; it has no integrable
    /// spectral density, so it cannot be sampled or smeared with.
    Constant { level: f64 },
}

impl Kernel {
    pub fn ornstein_uhlenbeck(alpha: f64) -> Result<Kernel> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(CoreError::BadKernel(format!(
                "OU alpha must be > 0, got {alpha}"
            )));
        }
        Ok(Kernel::OrnsteinUhlenbeck { alpha })
    }

    pub fn tachyon_nonrel(a: f64) -> Result<Kernel> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(CoreError::BadKernel(format!(
                "tachyon length must be > 0, got {a}"
            )));
        }
        Ok(Kernel::TachyonNonrel { a })
    }

    pub fn custom_spectral(d_omega: f64, values: Vec<f64>) -> Result<Kernel> {
        if !(d_omega > 0.0) || values.len() < 2 {
            return Err(CoreError::BadKernel(
                "custom spectral table needs d_omega > 0 and >= 2 samples".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoreError::BadKernel(
                "spectral density must be finite and nonnegative".into(),
            ));
        }
        Ok(Kernel::CustomSpectral { d_omega, values })
    }

    pub fn constant(level: f64) -> Result<Kernel> {
        if !(level > 0.0) || !level.is_finite() {
            return Err(CoreError::BadKernel(format!(
                "constant level must be > 0, got {level}"
            )));
        }
        Ok(Kernel::Constant { level })
    }

    /// Pointwise G(tau). Even in tau for every kind. The delta kernel has no
    /// pointwise value at tau = 0 (its discrete weight is 1/dt, handled by
    /// [`Kernel::gram_matrix`]); infinity is returned there.
    pub fn value(&self, tau: f64) -> f64 {
        let t = tau.abs();
        match self {
            Kernel::Delta => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Kernel::OrnsteinUhlenbeck { alpha } => 0.5 * alpha * (-alpha * t).exp(),
            Kernel::TachyonNonrel { a } => {
                let x = t / a;
                let inv_4pi2 = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
                if x < 1e-8 {
                    inv_4pi2 / a
                } else {
                    inv_4pi2 * x.sin() / t
                }
            }
            Kernel::CustomSpectral { d_omega, values } => {
                // G(tau) = (1/pi) int_0^inf G~(omega) cos(omega tau) d omega,
                // trapezoid on the table.
                let mut sum = 0.0;
                for (k, &g) in values.iter().enumerate() {
                    let w = if k == 0 || k == values.len() - 1 {
                        0.5
                    } else {
                        1.0
                    };
                    sum += w * g * (k as f64 * d_omega * t).cos();
                }
                sum * d_omega / std::f64::consts::PI
            }
            Kernel::Constant { level } => *level,
        }
    }

    /// Spectral density G~(omega) = int G(tau) exp(-i omega tau) d tau.
    /// Errors for the constant kernel (a delta spike at omega = 0).
    pub fn spectral_density(&self, omega: f64) -> Result<f64> {
        let w = omega.abs();
        match self {
            Kernel::Delta => Ok(1.0),
            Kernel::OrnsteinUhlenbeck { alpha } => Ok(alpha * alpha / (w * w + alpha * alpha)),
            Kernel::TachyonNonrel { a } => Ok(if w * a <= 1.0 {
                0.25 / std::f64::consts::PI
            } else {
                0.0
            }),
            Kernel::CustomSpectral { d_omega, values } => {
                let x = w / d_omega;
                let i = x.floor() as usize;
                if i + 1 >= values.len() {
                    return Ok(0.0);
                }
                let f = x - i as f64;
                Ok(values[i] * (1.0 - f) + values[i + 1] * f)
            }
            Kernel::Constant { .. } => Err(CoreError::BadKernel(
                "constant kernel has no integrable spectral density".into(),
            )),
        }
    }

    /// Discretized covariance matrix G(t_i - t_j) on the grid's segment
    /// times. The delta kernel discretizes to (1/dt) * identity.
    pub fn gram_matrix(&self, grid: &TimeGrid) -> Result<DMatrix<f64>> {
        let n = grid.n_steps;
        if n == 0 {
            return Err(CoreError::InvalidParameter(
                "gram matrix needs n_steps >= 1".into(),
            ));
        }
        let mut m = DMatrix::zeros(n, n);
        match self {
            Kernel::Delta => {
                for i in 0..n {
                    m[(i, i)] = 1.0 / grid.dt;
                }
            }
            _ => {
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = self.value((i as f64 - j as f64) * grid.dt);
                    }
                }
            }
        }
        Ok(m)
    }
}

/// Discretized finite-interval kernel inverse: `matrix` satisfies
/// `sum_j G(t_i - t_j) * matrix[j][k] * dt = delta_ik / dt` on the retained
/// spectral subspace. Eigenvalues below 1e-10 of the largest are discarded;
/// `discarded_fraction` is their share of the total spectral mass.
#[derive(Clone, Debug)]
pub struct KernelInverse {
    pub matrix: DMatrix<f64>,
    pub discarded_fraction: f64,
}

pub fn kernel_inverse_finite(kernel: &Kernel, grid: &TimeGrid) -> Result<KernelInverse> {
    let gram = kernel.gram_matrix(grid)?;
    let n = gram.nrows();
    let eig = nalgebra::linalg::SymmetricEigen::new(gram);
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max_ev == 0.0 {
        return Err(CoreError::BadKernel(
            "kernel Gram matrix is identically zero".into(),
        ));
    }
    let threshold = 1e-10 * max_ev;
    let mut total_mass = 0.0;
    let mut kept_mass = 0.0;
    let mut inv_ev = vec![0.0; n];
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        total_mass += ev.abs();
        if ev > threshold {
            kept_mass += ev.abs();
            inv_ev[k] = 1.0 / ev;
        }
    }
    let dt2 = grid.dt() * grid.dt();
    let mut matrix = DMatrix::zeros(n, n);
    for (k, &iv) in inv_ev.iter().enumerate() {
        if iv != 0.0 {
            let v = eig.eigenvectors.column(k);
            let scale = iv / dt2;
            for i in 0..n {
                for j in 0..n {
                    matrix[(i, j)] += scale * v[i] * v[j];
                }
            }
        }
    }
    Ok(KernelInverse {
        matrix,
        discarded_fraction: 1.0 - kept_mass / total_mass,
    })
}

fn fft_freq(k: usize, m: usize, dt: f64) -> f64 {
    let signed = if k <= m / 2 {
        k as f64
    } else {
        k as f64 - m as f64
    };
    2.0 * std::f64::consts::PI * signed / (m as f64 * dt)
}

/// Convolve each channel with the kernel's square root: multiply the
/// spectrum by sqrt(G~(omega)) on a 4x zero-padded FFT grid. Applying it
/// twice convolves with G itself. The delta kernel is the identity map.
pub fn kernel_sqrt_smear(kernel: &Kernel, path: &NoisePath) -> Result<NoisePath> {
    smear_with(kernel, path, true)
}

/// Convolve each channel with G itself (same machinery, unsquare-rooted).
pub fn kernel_convolve(kernel: &Kernel, path: &NoisePath) -> Result<NoisePath> {
    smear_with(kernel, path, false)
}

fn smear_with(kernel: &Kernel, path: &NoisePath, take_sqrt: bool) -> Result<NoisePath> {
    if matches!(kernel, Kernel::Delta) {
        return Ok(path.clone());
    }
    let n = path.values[0].len();
    if n == 0 {
        return Ok(path.clone());
    }
    let m = (4 * n).next_power_of_two();
    let dt = path.grid.dt();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut transfer = Vec::with_capacity(m);
    for k in 0..m {
        let g = kernel.spectral_density(fft_freq(k, m, dt))?;
        transfer.push(if take_sqrt { g.sqrt() } else { g });
    }
    let mut values = Vec::with_capacity(path.channels());
    for ch in &path.values {
        let mut buf: Vec<C64> = ch.iter().map(|&v| C64::new(v, 0.0)).collect();
        buf.resize(m, C64::new(0.0, 0.0));
        fwd.process(&mut buf);
        for (b, &t) in buf.iter_mut().zip(&transfer) {
            *b *= t;
        }
        inv.process(&mut buf);
        let scale = 1.0 / m as f64;
        values.push(buf[..n].iter().map(|c| c.re * scale).collect());
    }
    NoisePath::new(path.grid, path.kind, values)
}

/// Stationary Gaussian rate noise with covariance `G(t_i - t_j)` on the
/// segment times, via circulant embedding (exact stationary covariance up
/// to the nonnegative-spectrum clip). Falls back to a Cholesky factor of
/// the Gram matrix when the embedding clips measurably and the grid is
/// small enough. The delta kernel reduces to iid N(0, 1/dt).
pub fn sample_colored(
    grid: TimeGrid,
    kernel: &Kernel,
    seed: u64,
    stream: u64,
) -> Result<NoisePath> {
    let n = grid.n_steps;
    let mut rng = rng_for(seed, stream);
    match kernel {
        Kernel::Delta => {
            let sigma = (1.0 / grid.dt).sqrt();
            let vals: Vec<f64> = (0..n)
                .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            NoisePath::new(grid, NoiseKind::Rate, vec![vals])
        }
        Kernel::Constant { .. } => Err(CoreError::BadKernel(
            "constant kernel cannot be sampled (no integrable spectral density)".into(),
        )),
        _ => {
            if n == 0 {
                return NoisePath::new(grid, NoiseKind::Rate, vec![vec![]]);
            }
            let m = (4 * (n + 1)).next_power_of_two();
            let mut planner = FftPlanner::<f64>::new();
            let fwd = planner.plan_fft_forward(m);
            // wrapped covariance row of the circulant embedding
            let mut c: Vec<C64> = (0..m)
                .map(|j| {
                    let lag = j.min(m - j) as f64 * grid.dt;
                    C64::new(kernel.value(lag), 0.0)
                })
                .collect();
            fwd.process(&mut c);
            let mut clipped = 0.0;
            let mut total = 0.0;
            let lambda: Vec<f64> = c
                .iter()
                .map(|v| {
                    total += v.re.abs();
                    if v.re < 0.0 {
                        clipped += -v.re;
                        0.0
                    } else {
                        v.re
                    }
                })
                .collect();
            if total > 0.0 && clipped / total > 1e-6 && n <= 2048 {
                return sample_colored_cholesky(grid, kernel, &mut rng);
            }
            // Dietrich-Newsam: y = FFT(sqrt(Lambda/M) xi) with xi complex
            // standard normal (unit variance in EACH of re and im; halving
            // that halves the output covariance). Re(y) is the sample.
            let mut buf: Vec<C64> = lambda
                .iter()
                .map(|&l| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re, im) * (l / m as f64).sqrt()
                })
                .collect();
            fwd.process(&mut buf);
            let vals: Vec<f64> = buf[..n].iter().map(|v| v.re).collect();
            NoisePath::new(grid, NoiseKind::Rate, vec![vals])
        }
    }
}

fn sample_colored_cholesky(
    grid: TimeGrid,
    kernel: &Kernel,
    rng: &mut ChaCha12Rng,
) -> Result<NoisePath> {
    let n = grid.n_steps;
    let gram = kernel.gram_matrix(&grid)?;
    let g0 = gram[(0, 0)].max(1e-300);
    let mut jitter = 0.0;
    let chol = loop {
        let mut m = gram.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        match nalgebra::linalg::Cholesky::new(m) {
            Some(c) => break c,
            None => {
                jitter = if jitter == 0.0 {
                    1e-12 * g0
                } else {
                    jitter * 10.0
                };
                if jitter > 1e-6 * g0 {
                    return Err(CoreError::BadKernel(
                        "kernel Gram matrix is not positive semidefinite".into(),
                    ));
                }
            }
        }
    };
    let z =
        nalgebra::DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let w = chol.l() * z;
    NoisePath::new(grid, NoiseKind::Rate, vec![w.iter().copied().collect()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_k0;
    use proptest::prelude::*;

    #[test]
    fn brownian_zero_steps_is_single_zero() {
        let grid = TimeGrid::new(0.01, 0).unwrap();
        let p = sample_brownian(grid, 1.0, 7, 0).unwrap();
        assert_eq!(p.samples(0), &[0.0]);
    }

    #[test]
    fn brownian_is_deterministic_per_seed_and_stream() {
        let grid = TimeGrid::new(0.01, 50).unwrap();
        let a = sample_brownian(grid, 1.0, 42, 3).unwrap();
        let b = sample_brownian(grid, 1.0, 42, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_brownian(grid, 1.0, 42, 4).unwrap();
        assert_ne!(a, c);
        let d = sample_brownian(grid, 1.0, 43, 3).unwrap();
        assert_ne!(a.samples(0), d.samples(0));
    }

    #[test]
    fn brownian_terminal_variance_matches_diffusion() {
        // Var[B(1)] = 2 * diffusion * t = 2.0; 1e5 paths give sd ~ 0.009.
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for s in 0..n {
            let p = sample_brownian(grid, 1.0, 2024, s).unwrap();
            let b = p.samples(0)[100];
            sum += b;
            sum2 += b * b;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((var - 2.0).abs() < 0.03, "Var[B(1)] = {var}");
        assert!(mean.abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn rate_diffusion_gives_lambda_t_variance() {
        // The engines' convention: diffusion = lambda/2 so Var[B(t)] = lambda t.
        let lambda = 3.0;
        let grid = TimeGrid::new(0.005, 200).unwrap();
        let n = 40_000;
        let mut sum2 = 0.0;
        for s in 0..n {
            let p = sample_brownian(grid, rate_diffusion(lambda), 99, s).unwrap();
            let b = p.samples(0)[200];
            sum2 += b * b;
        }
        let var = sum2 / n as f64;
        assert!(
            (var - 3.0).abs() < 0.07,
            "Var[B(1)] = {var} expected lambda t = 3"
        );
    }

    #[test]
    fn multichannel_channels_are_uncorrelated() {
        let grid = TimeGrid::new(0.02, 50).unwrap();
        let n = 20_000;
        let mut cross = 0.0;
        let mut var0 = 0.0;
        for s in 0..n {
            let p = sample_brownian_channels(grid, 2, 0.5, 5, s).unwrap();
            let b0 = p.samples(0)[50];
            let b1 = p.samples(1)[50];
            cross += b0 * b1;
            var0 += b0 * b0;
        }
        assert!((cross / var0).abs() < 0.03);
    }

    #[test]
    fn kernel_values_match_closed_forms() {
        let ou = Kernel::ornstein_uhlenbeck(2.0).unwrap();
        assert!((ou.value(0.0) - 1.0).abs() < 1e-15);
        assert!((ou.value(0.5) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(Kernel::Delta.value(0.3), 0.0);
        let tk = Kernel::tachyon_nonrel(2.0).unwrap();
        let inv_4pi2 = 1.0 / (4.0 * std::f64::consts::PI.powi(2));
        assert!((tk.value(0.0) - inv_4pi2 / 2.0).abs() < 1e-12);
        assert!((tk.value(3.0) - inv_4pi2 * 1.5f64.sin() / 3.0).abs() < 1e-15);
    }

    #[test]
    fn custom_spectral_reproduces_ou_kernel_value() {
        let alpha = 2.0;
        let d_omega = 0.02;
        // table out to 800: the omitted Lorentzian tail integrates to
        // alpha^2 / (pi * 800) ~ 1.6e-3, well under the 1% tolerance
        let n = 40_000;
        let table: Vec<f64> = (0..n)
            .map(|k| {
                let w = k as f64 * d_omega;
                alpha * alpha / (w * w + alpha * alpha)
            })
            .collect();
        let custom = Kernel::custom_spectral(d_omega, table).unwrap();
        let ou = Kernel::ornstein_uhlenbeck(alpha).unwrap();
        for tau in [0.0, 0.3, 1.0, 2.0] {
            let got = custom.value(tau);
            let want = ou.value(tau);
            assert!(
                (got - want).abs() < 0.01 * ou.value(0.0),
                "tau={tau}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn custom_spectral_rejects_negative_values() {
        let err = Kernel::custom_spectral(0.1, vec![1.0, -0.2, 0.5]);
        assert!(matches!(err, Err(CoreError::BadKernel(_))));
    }

    #[test]
    fn colored_delta_is_white() {
        let grid = TimeGrid::new(0.1, 200).unwrap();
        let n_paths = 2000;
        let mut lag0 = 0.0;
        let mut lag1 = 0.0;
        let mut count = 0.0;
        for s in 0..n_paths {
            let p = sample_colored(grid, &Kernel::Delta, 11, s).unwrap();
            let v = p.samples(0);
            for k in 0..v.len() - 1 {
                lag0 += v[k] * v[k];
                lag1 += v[k] * v[k + 1];
                count += 1.0;
            }
        }
        lag0 /= count;
        lag1 /= count;
        // white noise: lag-0 variance 1/dt = 10, lag-1 correlation ~ N(0, 1/sqrt(count))
        assert!((lag0 - 10.0).abs() < 0.15, "lag0 {lag0}");
        let sigma = lag0 / count.sqrt();
        assert!(
            lag1.abs() < 3.0 * sigma,
            "lag1 {lag1} vs 3 sigma {}",
            3.0 * sigma
        );
    }

    #[test]
    fn colored_ou_autocovariance() {
        // OU alpha=2: autocovariance (alpha/2) e^{-alpha tau} within 5% for
        // tau <= 2/alpha.
        let alpha = 2.0;
        let kernel = Kernel::ornstein_uhlenbeck(alpha).unwrap();
        let grid = TimeGrid::new(0.05, 80).unwrap();
        let n_paths = 30_000;
        let max_lag = 20; // tau = 1.0 = 2/alpha
        let mut acc = vec![0.0f64; max_lag + 1];
        let mut cnt = vec![0.0f64; max_lag + 1];
        for s in 0..n_paths {
            let p = sample_colored(grid, &kernel, 314, s).unwrap();
            let v = p.samples(0);
            for lag in 0..=max_lag {
                for k in 0..v.len() - lag {
                    acc[lag] += v[k] * v[k + lag];
                    cnt[lag] += 1.0;
                }
            }
        }
        for lag in 0..=max_lag {
            let tau = lag as f64 * grid.dt();
            let want = 0.5 * alpha * (-alpha * tau).exp();
            let got = acc[lag] / cnt[lag];
            assert!(
                ((got - want) / want).abs() < 0.05,
                "lag {tau}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn colored_ou_large_alpha_decorrelates() {
        // alpha -> infinity at fixed grid: neighboring samples decorrelate.
        let kernel = Kernel::ornstein_uhlenbeck(200.0).unwrap();
        let grid = TimeGrid::new(0.05, 100).unwrap();
        let mut lag0 = 0.0;
        let mut lag1 = 0.0;
        for s in 0..2000 {
            let p = sample_colored(grid, &kernel, 5150, s).unwrap();
            let v = p.samples(0);
            for k in 0..v.len() - 1 {
                lag0 += v[k] * v[k];
                lag1 += v[k] * v[k + 1];
            }
        }
        assert!(
            (lag1 / lag0).abs() < 0.05,
            "lag-1 correlation {}",
            lag1 / lag0
        );
    }

    #[test]
    fn colored_sampling_is_deterministic() {
        let kernel = Kernel::ornstein_uhlenbeck(1.5).unwrap();
        let grid = TimeGrid::new(0.02, 64).unwrap();
        let a = sample_colored(grid, &kernel, 1, 2).unwrap();
        let b = sample_colored(grid, &kernel, 1, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_inverse_delta_is_identity_over_dt() {
        let grid = TimeGrid::new(0.25, 6).unwrap();
        let inv = kernel_inverse_finite(&Kernel::Delta, &grid).unwrap();
        assert!(inv.discarded_fraction.abs() < 1e-12);
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 / 0.25 } else { 0.0 };
                assert!((inv.matrix[(i, j)] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kernel_inverse_ou_satisfies_residual_contract() {
        let kernel = Kernel::ornstein_uhlenbeck(1.0).unwrap();
        let grid = TimeGrid::new(0.1, 40).unwrap();
        let gram = kernel.gram_matrix(&grid).unwrap();
        let inv = kernel_inverse_finite(&kernel, &grid).unwrap();
        let dt2 = grid.dt() * grid.dt();
        // G * (inv * dt^2) * G = G on the retained subspace
        let recon = &gram * (&inv.matrix * dt2) * &gram;
        let num = (&recon - &gram).norm();
        assert!(num / gram.norm() < 1e-6, "residual {}", num / gram.norm());
        assert!(inv.discarded_fraction < 1e-6);
    }

    #[test]
    fn kernel_inverse_constant_is_rank_one() {
        let kernel = Kernel::constant(3.0).unwrap();
        let grid = TimeGrid::new(0.5, 8).unwrap();
        let inv = kernel_inverse_finite(&kernel, &grid).unwrap();
        // one retained direction out of eight: 7/8 of nothing is discarded
        // by MASS (all discarded eigenvalues are zero), so the fraction is 0,
        // but the matrix must be rank one: inv = c * ones.
        let gram = kernel.gram_matrix(&grid).unwrap();
        let recon = &gram * (&inv.matrix * (grid.dt() * grid.dt())) * &gram;
        assert!((&recon - &gram).norm() / gram.norm() < 1e-10);
        // every entry equal (rank-1 flat structure)
        let first = inv.matrix[(0, 0)];
        for v in inv.matrix.iter() {
            assert!((v - first).abs() < 1e-9 * first.abs());
        }
    }

    #[test]
    fn sqrt_smear_delta_is_identity() {
        let grid = TimeGrid::new(0.1, 32).unwrap();
        let p = sample_colored(grid, &Kernel::Delta, 8, 0).unwrap();
        let s = kernel_sqrt_smear(&Kernel::Delta, &p).unwrap();
        assert_eq!(p, s);
    }

    #[test]
    fn sqrt_smear_ou_matches_k0_form() {
        // Discrete G^{1/2} of the OU kernel is (alpha/pi) K0(alpha |tau|):
        // smearing a unit impulse (height 1/dt) reads the kernel off directly.
        let alpha = 1.0;
        let kernel = Kernel::ornstein_uhlenbeck(alpha).unwrap();
        let dt = 0.005;
        let n = 4096;
        let grid = TimeGrid::new(dt, n).unwrap();
        let mut vals = vec![0.0; n];
        let center = n / 2;
        vals[center] = 1.0 / dt;
        let impulse = NoisePath::new(grid, NoiseKind::Rate, vec![vals]).unwrap();
        let smeared = kernel_sqrt_smear(&kernel, &impulse).unwrap();
        for lag_steps in [20usize, 60, 100, 200, 400, 600] {
            let tau = lag_steps as f64 * dt;
            if !(0.1..=3.0).contains(&(alpha * tau)) {
                continue;
            }
            let want = alpha / std::f64::consts::PI * bessel_k0(alpha * tau);
            let got = smeared.samples(0)[center + lag_steps];
            assert!(
                ((got - want) / want).abs() < 0.02,
                "tau {tau}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn smearing_twice_equals_convolving_with_g() {
        let kernel = Kernel::ornstein_uhlenbeck(1.0).unwrap();
        let dt = 0.02;
        let n = 512;
        let grid = TimeGrid::new(dt, n).unwrap();
        // band-limited Gaussian bump in the middle
        let vals: Vec<f64> = (0..n)
            .map(|k| {
                let t = (k as f64 - n as f64 / 2.0) * dt;
                (-t * t / 0.5).exp()
            })
            .collect();
        let signal = NoisePath::new(grid, NoiseKind::Rate, vec![vals.clone()]).unwrap();
        let twice =
            kernel_sqrt_smear(&kernel, &kernel_sqrt_smear(&kernel, &signal).unwrap()).unwrap();
        // direct time-domain convolution oracle
        let mut direct = vec![0.0; n];
        for (i, d) in direct.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, &v) in vals.iter().enumerate() {
                s += kernel.value((i as f64 - j as f64) * dt) * v;
            }
            *d = s * dt;
        }
        let num: f64 = twice
            .samples(0)
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = direct.iter().map(|b| b * b).sum();
        assert!(
            (num / den).sqrt() < 0.02,
            "L2 relative error {}",
            (num / den).sqrt()
        );
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let grid = TimeGrid::with_origin(-0.5, 0.01, 40).unwrap();
        let p = sample_brownian_channels(grid, 3, 0.7, 21, 9).unwrap();
        let mut buf = Vec::new();
        p.export_csv(&mut buf).unwrap();
        let q = NoisePath::import_csv(std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(p, q);
        let r = sample_colored(grid, &Kernel::ornstein_uhlenbeck(2.0).unwrap(), 3, 4).unwrap();
        let mut buf2 = Vec::new();
        r.export_csv(&mut buf2).unwrap();
        let s = NoisePath::import_csv(std::io::BufReader::new(buf2.as_slice())).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn csv_import_reports_bad_line() {
        let grid = TimeGrid::new(0.1, 3).unwrap();
        let p = sample_brownian(grid, 1.0, 1, 1).unwrap();
        let mut buf = Vec::new();
        p.export_csv(&mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text = text.replace("\n0.0", "\nnot_a_number"); // breaks a data row
        let err = NoisePath::import_csv(std::io::BufReader::new(text.as_bytes()));
        match err {
            Err(CoreError::Parse { line, .. }) => assert!(line >= 3, "line {line}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kernel_value_is_even(tau in -20.0f64..20.0, alpha in 0.1f64..10.0, a in 0.1f64..5.0) {
            for kernel in [
                Kernel::Delta,
                Kernel::ornstein_uhlenbeck(alpha).unwrap(),
                Kernel::tachyon_nonrel(a).unwrap(),
                Kernel::constant(1.3).unwrap(),
            ] {
                let plus = kernel.value(tau);
                let minus = kernel.value(-tau);
                prop_assert!(plus == minus || (plus - minus).abs() < 1e-14 * plus.abs());
            }
        }

        #[test]
        fn gram_matrix_is_positive_semidefinite(
            alpha in 0.2f64..8.0,
            dt in 0.01f64..0.5,
            n in 2usize..24,
            which in 0usize..3,
        ) {
            let kernel = match which {
                0 => Kernel::ornstein_uhlenbeck(alpha).unwrap(),
                1 => Kernel::tachyon_nonrel(alpha).unwrap(),
                _ => Kernel::Delta,
            };
            let grid = TimeGrid::new(dt, n).unwrap();
            let gram = kernel.gram_matrix(&grid).unwrap();
            let eig = nalgebra::linalg::SymmetricEigen::new(gram);
            let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
            let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            prop_assert!(min >= -1e-8 * max, "min {min}, max {max}");
        }
    }
}
