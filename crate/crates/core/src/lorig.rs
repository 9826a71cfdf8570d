//! Multi-frame reconstruction with an L0 prior on intensities and gradients.
//!
//! The objective
//!
//! ```text
//! Σ_k ‖g_k − W_k z‖² + β/2 ‖z − u‖² + μ/2 ‖∇z − v‖² + λ (‖u‖₀ + ‖v‖₀)
//! ```
//!
//! is minimized by alternating closed-form hard thresholding for `u` and `v`
//! with a Jacobi-preconditioned conjugate-gradient solve for `z`. After every
//! outer iteration the penalties are multiplied by the schedule factor.

use std::io::Write as _;
use std::path::Path;

use crate::config::KeyValues;
use crate::degradation::{Blur, FrameSequence, Motion, ObservationOperator};
use crate::error::{param, Error, Result};
use crate::imaging::{
    convolve_circular, correlate_circular, gradient_adjoint, gradient_forward, resample_bicubic,
    shift_subpixel, shift_subpixel_adjoint, GradientPair, ImagePlane, Kernel2D,
};
use crate::metrics::psnr;

/// How the gradient auxiliary is thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// Keep or zero `(gx, gy)` together based on the squared magnitude.
    Joint,
    /// Threshold `gx` and `gy` independently.
    PerComponent,
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(ThresholdMode::Joint),
            "per_component" | "per-component" => Ok(ThresholdMode::PerComponent),
            other => Err(Error::Config(format!("unknown threshold mode `{other}`"))),
        }
    }
}

/// Evolution of `β` and `μ` between outer iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltySchedule {
    /// Multiply by a factor in `(0, 1]` after every iteration.
    Decay(f64),
    /// Multiply by a factor `>= 1` after every iteration (classic continuation).
    Increase(f64),
}

impl PenaltySchedule {
    fn factor(self) -> f64 {
        match self {
            PenaltySchedule::Decay(f) | PenaltySchedule::Increase(f) => f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    pub max_iters: usize,
    /// Stop once `‖r‖ / ‖b‖` drops to this value.
    pub tolerance: f64,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self { max_iters: 30, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorigConfig {
    pub lambda: f64,
    pub beta0: f64,
    pub mu0: f64,
    pub schedule: PenaltySchedule,
    pub max_outer: usize,
    pub cg: CgSettings,
    pub threshold_mode: ThresholdMode,
    /// Carry scaled Lagrange multipliers for `u = z` and `v = ∇z` between
    /// iterations. Off by default: the plain objective has none.
    pub multipliers: bool,
}

impl Default for LorigConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            beta0: 1e-3,
            mu0: 1e-3,
            schedule: PenaltySchedule::Decay(0.9),
            max_outer: 30,
            cg: CgSettings::default(),
            threshold_mode: ThresholdMode::Joint,
            multipliers: false,
        }
    }
}

impl LorigConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                param(format!("{name} must be positive, got {v}"))
            }
        };
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return param(format!("lambda must be >= 0, got {}", self.lambda));
        }
        positive(self.beta0, "beta0")?;
        positive(self.mu0, "mu0")?;
        positive(self.cg.tolerance, "cg_tolerance")?;
        match self.schedule {
            PenaltySchedule::Decay(f) if !(f > 0.0 && f <= 1.0) => {
                return param(format!("penalty decay must lie in (0, 1], got {f}"))
            }
            PenaltySchedule::Increase(f) if !(f >= 1.0 && f.is_finite()) => {
                return param(format!("penalty increase factor must be >= 1, got {f}"))
            }
            _ => {}
        }
        if self.max_outer == 0 || self.cg.max_iters == 0 {
            return param("iteration counts must be positive");
        }
        Ok(())
    }

    /// Reads solver keys from a config file; absent keys keep their defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = LorigConfig::default();
        let factor: f64 = kv.get_or("penalty_factor", d.schedule.factor())?;
        let schedule = match kv.get_or("penalty_schedule", "decay".to_string())?.as_str() {
            "decay" => PenaltySchedule::Decay(factor),
            "increase" => PenaltySchedule::Increase(factor),
            other => return Err(Error::Config(format!("unknown penalty schedule `{other}`"))),
        };
        let cfg = Self {
            lambda: kv.get_or("lambda", d.lambda)?,
            beta0: kv.get_or("beta0", d.beta0)?,
            mu0: kv.get_or("mu0", d.mu0)?,
            schedule,
            max_outer: kv.get_or("max_outer", d.max_outer)?,
            cg: CgSettings {
                max_iters: kv.get_or("cg_max_iters", d.cg.max_iters)?,
                tolerance: kv.get_or("cg_tolerance", d.cg.tolerance)?,
            },
            threshold_mode: kv.get_or("threshold_mode", "joint".to_string())?.parse()?,
            multipliers: kv.get_or("multipliers", d.multipliers)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("lambda", self.lambda);
        kv.set("beta0", self.beta0);
        kv.set("mu0", self.mu0);
        let (name, f) = match self.schedule {
            PenaltySchedule::Decay(f) => ("decay", f),
            PenaltySchedule::Increase(f) => ("increase", f),
        };
        kv.set("penalty_schedule", name);
        kv.set("penalty_factor", f);
        kv.set("max_outer", self.max_outer);
        kv.set("cg_max_iters", self.cg.max_iters);
        kv.set("cg_tolerance", self.cg.tolerance);
        kv.set(
            "threshold_mode",
            match self.threshold_mode {
                ThresholdMode::Joint => "joint",
                ThresholdMode::PerComponent => "per_component",
            },
        );
        kv.set("multipliers", self.multipliers);
        kv
    }
}

/// Solver iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct LorigState {
    pub z: ImagePlane,
    pub u: ImagePlane,
    pub v: GradientPair,
    pub beta: f64,
    pub mu: f64,
    pub iteration: usize,
}

/// Hard threshold: per-pixel minimizer of `β/2 (z − u)² + λ·[u ≠ 0]`.
///
/// Keeps `z_i` when `z_i² > 2λ/β`; ties resolve to zero.
pub fn solve_u(z: &ImagePlane, lambda: f64, beta: f64) -> ImagePlane {
    let t = 2.0 * lambda / beta;
    z.map(|v| if v * v > t { v } else { 0.0 })
}

/// Hard threshold of the gradient auxiliary with threshold `2λ/μ`.
pub fn solve_v(g: &GradientPair, lambda: f64, mu: f64, mode: ThresholdMode) -> GradientPair {
    let t = 2.0 * lambda / mu;
    match mode {
        ThresholdMode::Joint => {
            let mut out = g.clone();
            for i in 0..out.gx.len() {
                let (a, b) = (g.gx.data()[i], g.gy.data()[i]);
                if a * a + b * b <= t {
                    out.gx.data_mut()[i] = 0.0;
                    out.gy.data_mut()[i] = 0.0;
                }
            }
            out
        }
        ThresholdMode::PerComponent => {
            let keep = |v: f64| if v * v > t { v } else { 0.0 };
            GradientPair { gx: g.gx.map(keep), gy: g.gy.map(keep) }
        }
    }
}

/// A registered sequence laid out on the grid of the image being solved for.
///
/// When the solve grid is `r` times coarser than the sequence's native HR
/// grid, motions are divided by `r` and a Gaussian blur is narrowed to match.
#[derive(Debug, Clone)]
pub struct LorigProblem {
    frames: Vec<ImagePlane>,
    motions: Vec<Motion>,
    reference_index: usize,
    scale: usize,
    kernel: Kernel2D,
    hr_dims: (usize, usize),
    /// `Σ_k W_kᵀ g_k`
    backprojection: ImagePlane,
    /// Diagonal of `Σ_k W_kᵀ W_k`, periodic with period `scale`.
    data_diag: Vec<f64>,
    /// Diagonal of `∇ᵀ∇` (translation invariant).
    grad_diag: f64,
}

impl LorigProblem {
    /// Sets up reconstruction of `seq` at `scale` times its LR resolution.
    pub fn new(seq: &FrameSequence, scale: usize) -> Result<Self> {
        seq.validate()?;
        if scale == 0 {
            return param("reconstruction scale must be at least 1");
        }
        if seq.spec.scale % scale != 0 {
            return param(format!(
                "reconstruction scale {scale} does not divide the sequence scale {}",
                seq.spec.scale
            ));
        }
        for (k, f) in seq.frames.iter().enumerate() {
            f.ensure_finite(&format!("frame {k}"))?;
        }
        let ratio = seq.spec.scale / scale;
        let blur: Blur = seq.spec.blur.coarsened(ratio)?;
        let kernel = blur.kernel()?;
        let motions: Vec<Motion> =
            seq.motions.iter().map(|m| m.scaled(1.0 / ratio as f64)).collect();
        let (h, w) = seq.lr_dims();
        let hr_dims = (h * scale, w * scale);
        let op = ObservationOperator { scale, kernel: kernel.clone() };

        let mut backprojection = ImagePlane::zeros(hr_dims.0, hr_dims.1);
        for (g, &m) in seq.frames.iter().zip(&motions) {
            backprojection.axpy(1.0, &op.apply_adjoint(g, m)?);
        }

        let mut problem = Self {
            frames: seq.frames.clone(),
            motions,
            reference_index: seq.reference_index,
            scale,
            kernel,
            hr_dims,
            backprojection,
            data_diag: Vec::new(),
            grad_diag: 0.0,
        };
        problem.probe_diagonals()?;
        Ok(problem)
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn hr_dims(&self) -> (usize, usize) {
        self.hr_dims
    }

    pub fn motions(&self) -> &[Motion] {
        &self.motions
    }

    pub fn kernel(&self) -> &Kernel2D {
        &self.kernel
    }

    fn probe_diagonals(&mut self) -> Result<()> {
        let (h, w) = self.hr_dims;
        let s = self.scale;
        let mut diag = vec![0.0; s * s];
        for a in 0..s {
            for b in 0..s {
                let mut e = ImagePlane::zeros(h, w);
                e.set(a, b, 1.0);
                diag[a * s + b] = self.data_normal(&e)?.get(a, b);
            }
        }
        self.data_diag = diag;
        let mut e = ImagePlane::zeros(h, w);
        e.set(0, 0, 1.0);
        self.grad_diag = gradient_adjoint(&gradient_forward(&e)).get(0, 0);
        Ok(())
    }

    /// `Σ_k W_kᵀ W_k x`.
    ///
    /// Blur and bilinear shifts are both circulant and therefore commute, so
    /// the sum is evaluated as `Bᵀ (Σ_k M_kᵀ Dᵀ D M_k) B x` with one blur
    /// pass in each direction regardless of the number of frames.
    pub fn data_normal(&self, x: &ImagePlane) -> Result<ImagePlane> {
        let (h, w) = self.hr_dims;
        let s = self.scale;
        let bx = convolve_circular(x, &self.kernel)?;
        let mut acc = ImagePlane::zeros(h, w);
        for m in &self.motions {
            let mut shifted = shift_subpixel(&bx, m.dx, m.dy);
            // Dᵀ D keeps the decimation lattice and zeroes everything else
            for y in 0..h {
                for xx in 0..w {
                    if y % s != 0 || xx % s != 0 {
                        shifted.set(y, xx, 0.0);
                    }
                }
            }
            acc.axpy(1.0, &shift_subpixel_adjoint(&shifted, m.dx, m.dy));
        }
        correlate_circular(&acc, &self.kernel)
    }

    /// `(2 Σ W_kᵀ W_k + β I + μ ∇ᵀ∇) x`
    pub fn normal_operator(&self, x: &ImagePlane, beta: f64, mu: f64) -> Result<ImagePlane> {
        let mut out = self.data_normal(x)?;
        out.scale_in_place(2.0);
        out.axpy(beta, x);
        if mu != 0.0 {
            out.axpy(mu, &gradient_adjoint(&gradient_forward(x)));
        }
        Ok(out)
    }

    /// `2 Σ W_kᵀ g_k + β u + μ ∇ᵀ v`
    pub fn rhs(&self, u: &ImagePlane, v: &GradientPair, beta: f64, mu: f64) -> ImagePlane {
        let mut b = self.backprojection.clone();
        b.scale_in_place(2.0);
        b.axpy(beta, u);
        if mu != 0.0 {
            b.axpy(mu, &gradient_adjoint(v));
        }
        b
    }

    /// Diagonal of the normal operator, used as the Jacobi preconditioner.
    pub fn diagonal(&self, beta: f64, mu: f64) -> ImagePlane {
        let (h, w) = self.hr_dims;
        let s = self.scale;
        ImagePlane::from_fn(h, w, |y, x| {
            2.0 * self.data_diag[(y % s) * s + x % s] + beta + mu * self.grad_diag
        })
    }

    /// `Σ_k ‖g_k − W_k z‖²`
    pub fn fidelity(&self, z: &ImagePlane) -> Result<f64> {
        let op = ObservationOperator { scale: self.scale, kernel: self.kernel.clone() };
        let mut total = 0.0;
        for (g, &m) in self.frames.iter().zip(&self.motions) {
            let pred = op.apply(z, m)?;
            total += pred.data().iter().zip(g.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total)
    }

    /// Bicubic upsampling of the reference frame, sampled on the solve grid
    /// (compensating the reference frame's own motion).
    pub fn initial_estimate(&self) -> Result<ImagePlane> {
        let m = self.motions[self.reference_index];
        resample_bicubic(
            &self.frames[self.reference_index],
            self.hr_dims.0,
            self.hr_dims.1,
            self.scale as f64,
            m.dy,
            m.dx,
        )
    }
}

/// Result of one conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub z: ImagePlane,
    pub iterations: usize,
    /// `‖b − A z_k‖₂` of the returned (smoothed) iterates, starting with the
    /// warm start.
    pub residual_norms: Vec<f64>,
    /// Residual norms of the underlying conjugate-gradient iterates.
    pub cg_residual_norms: Vec<f64>,
    pub relative_residual: f64,
}

/// Solves the `z` subproblem's normal equations with Jacobi-preconditioned CG.
///
/// The CG iterates are passed through minimal-residual smoothing: the
/// returned sequence `y_k` minimizes `‖b − A y‖₂` on the segment between
/// `y_{k−1}` and the CG iterate `x_k`, so its residual never increases while
/// the CG recurrence itself is untouched.
pub fn solve_z_cg(
    problem: &LorigProblem,
    u: &ImagePlane,
    v: &GradientPair,
    beta: f64,
    mu: f64,
    cg: &CgSettings,
    warm_start: &ImagePlane,
) -> Result<CgOutcome> {
    let dims = problem.hr_dims();
    for (what, d) in [("u", u.dims()), ("v", v.dims()), ("warm start", warm_start.dims())] {
        if d != dims {
            return param(format!("{what} is {}x{}, expected {}x{}", d.0, d.1, dims.0, dims.1));
        }
    }
    u.ensure_finite("u")?;
    v.gx.ensure_finite("v.gx")?;
    v.gy.ensure_finite("v.gy")?;
    warm_start.ensure_finite("warm start")?;
    if !(beta >= 0.0 && mu >= 0.0 && beta.is_finite() && mu.is_finite()) {
        return Err(Error::Numeric(format!("penalties must be finite and >= 0 (β={beta}, μ={mu})")));
    }

    let b = problem.rhs(u, v, beta, mu);
    let b_norm = b.norm_sq().sqrt();
    if b_norm == 0.0 {
        // the unique solution of A x = 0 is zero
        let z = ImagePlane::zeros(dims.0, dims.1);
        return Ok(CgOutcome {
            z,
            iterations: 0,
            residual_norms: vec![0.0],
            cg_residual_norms: vec![0.0],
            relative_residual: 0.0,
        });
    }
    let inv_diag = problem.diagonal(beta, mu).map(|d| if d > 0.0 { 1.0 / d } else { 1.0 });

    let mut x = warm_start.clone();
    let mut r = b.clone();
    r.axpy(-1.0, &problem.normal_operator(&x, beta, mu)?);
    // smoothed iterate and its residual
    let mut y = x.clone();
    let mut s = r.clone();
    let mut s_norm = s.norm_sq().sqrt();
    let mut history = vec![s_norm];
    let mut cg_history = vec![s_norm];
    let mut iterations = 0;
    if s_norm / b_norm > cg.tolerance {
        let mut zr = r.zip_map(&inv_diag, |a, d| a * d);
        let mut p = zr.clone();
        let mut rz = r.dot(&zr);
        while iterations < cg.max_iters {
            let ap = problem.normal_operator(&p, beta, mu)?;
            let curvature = p.dot(&ap);
            if !(curvature > 0.0) || !curvature.is_finite() {
                return Err(Error::Solver(format!(
                    "conjugate gradient breakdown at iteration {iterations}: pᵀAp = {curvature}"
                )));
            }
            let alpha = rz / curvature;
            x.axpy(alpha, &p);
            r.axpy(-alpha, &ap);
            iterations += 1;
            let r_norm = r.norm_sq().sqrt();
            cg_history.push(r_norm);
            if !r_norm.is_finite() {
                return Err(Error::Numeric("conjugate gradient residual diverged".into()));
            }

            let d = r.zip_map(&s, |a, b| a - b);
            let dd = d.norm_sq();
            if dd > 0.0 {
                let eta = (-s.dot(&d) / dd).clamp(0.0, 1.0);
                for (yi, xi) in y.data_mut().iter_mut().zip(x.data()) {
                    *yi += eta * (xi - *yi);
                }
                s.axpy(eta, &d);
            }
            s_norm = s.norm_sq().sqrt();
            history.push(s_norm);
            if s_norm / b_norm <= cg.tolerance {
                break;
            }

            zr = r.zip_map(&inv_diag, |a, d| a * d);
            let rz_next = r.dot(&zr);
            let step = rz_next / rz;
            rz = rz_next;
            for (pi, zi) in p.data_mut().iter_mut().zip(zr.data()) {
                *pi = zi + step * *pi;
            }
        }
    }
    Ok(CgOutcome {
        z: y,
        iterations,
        residual_norms: history,
        cg_residual_norms: cg_history,
        relative_residual: s_norm / b_norm,
    })
}

/// Per outer iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub beta: f64,
    pub mu: f64,
    pub fidelity: f64,
    pub cg_iterations: usize,
    pub cg_relative_residual: f64,
}

#[derive(Debug, Clone)]
pub struct LorigOutput {
    pub image: ImagePlane,
    pub state: LorigState,
    pub reports: Vec<IterationReport>,
}

pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[IterationReport]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,beta,mu,fidelity,cg_iterations,cg_relative_residual")?;
    for r in reports {
        writeln!(
            f,
            "{},{:e},{:e},{:e},{},{:e}",
            r.iteration, r.beta, r.mu, r.fidelity, r.cg_iterations, r.cg_relative_residual
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Full reconstruction, returning the final state and per-iteration reports.
pub fn lorig_reconstruct_detailed(
    seq: &FrameSequence,
    cfg: &LorigConfig,
    scale: usize,
) -> Result<LorigOutput> {
    cfg.validate()?;
    let problem = LorigProblem::new(seq, scale)?;
    let mut z = problem.initial_estimate()?;
    let (h, w) = problem.hr_dims();
    let mut beta = cfg.beta0;
    let mut mu = cfg.mu0;
    let mut u = ImagePlane::zeros(h, w);
    let mut v = GradientPair::zeros(h, w);
    // scaled multipliers, only used when `cfg.multipliers` is set
    let mut xi_u = ImagePlane::zeros(h, w);
    let mut xi_v = GradientPair::zeros(h, w);
    let mut reports = Vec::with_capacity(cfg.max_outer);
    let factor = cfg.schedule.factor();

    for t in 1..=cfg.max_outer {
        let grad = gradient_forward(&z);
        if cfg.multipliers {
            let mut zu = z.clone();
            zu.axpy(1.0, &xi_u);
            u = solve_u(&zu, cfg.lambda, beta);
            let mut gv = grad.clone();
            gv.axpy(1.0, &xi_v);
            v = solve_v(&gv, cfg.lambda, mu, cfg.threshold_mode);
        } else {
            u = solve_u(&z, cfg.lambda, beta);
            v = solve_v(&grad, cfg.lambda, mu, cfg.threshold_mode);
        }

        let outcome = if cfg.multipliers {
            let mut ut = u.clone();
            ut.axpy(-1.0, &xi_u);
            let mut vt = v.clone();
            vt.axpy(-1.0, &xi_v);
            solve_z_cg(&problem, &ut, &vt, beta, mu, &cfg.cg, &z)?
        } else {
            solve_z_cg(&problem, &u, &v, beta, mu, &cfg.cg, &z)?
        };
        z = outcome.z;

        if cfg.multipliers {
            xi_u.axpy(1.0, &z);
            xi_u.axpy(-1.0, &u);
            let gz = gradient_forward(&z);
            xi_v.axpy(1.0, &gz);
            xi_v.axpy(-1.0, &v);
        }

        reports.push(IterationReport {
            iteration: t,
            beta,
            mu,
            fidelity: problem.fidelity(&z)?,
            cg_iterations: outcome.iterations,
            cg_relative_residual: outcome.relative_residual,
        });
        if cfg.multipliers {
            // keep the unscaled multipliers fixed while the penalties change
            xi_u.scale_in_place(1.0 / factor);
            xi_v.gx.scale_in_place(1.0 / factor);
            xi_v.gy.scale_in_place(1.0 / factor);
        }
        beta *= factor;
        mu *= factor;
    }

    let image = z.clipped(0.0, 1.0);
    let state = LorigState { z, u, v, beta, mu, iteration: cfg.max_outer };
    Ok(LorigOutput { image, state, reports })
}

/// Reconstructs the image at `scale` times the LR resolution, clipped to `[0, 1]`.
pub fn lorig_reconstruct(seq: &FrameSequence, cfg: &LorigConfig, scale: usize) -> Result<ImagePlane> {
    Ok(lorig_reconstruct_detailed(seq, cfg, scale)?.image)
}

/// Candidate regularization weights: powers of two inside `[1e-5, 1e-1]`.
pub fn lambda_grid() -> Vec<f64> {
    (-20..=0)
        .map(|e| 2f64.powi(e))
        .filter(|l| (1e-5..=1e-1).contains(l))
        .collect()
}

/// Scores every candidate `λ` by PSNR against a known ground truth.
///
/// Returns `(λ, psnr)` pairs in ascending `λ`, plus the index of the best
/// one (the smallest `λ` wins ties).
pub fn grid_search_lambda(
    seq: &FrameSequence,
    ground_truth: &ImagePlane,
    base: &LorigConfig,
    scale: usize,
) -> Result<(Vec<(f64, f64)>, usize)> {
    let mut rows = Vec::new();
    for lambda in lambda_grid() {
        let cfg = LorigConfig { lambda, ..base.clone() };
        let z = lorig_reconstruct(seq, &cfg, scale)?;
        rows.push((lambda, psnr(ground_truth, &z, 1.0)?));
    }
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.1 > rows[best].1 { i } else { best });
    Ok((rows, best))
}
