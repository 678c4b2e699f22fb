//! Quadratic-Gaussian Wyner-Ziv exponents. All quantities are in nats.
//!
//! The source is `(X, Y) ~ N(0, Σ)` with unit variances and correlation `ζ`.
//! Nature's covariance `K` for `(X, Y, Z)` has `Var Z = 1`; `K̄` is the
//! Markov reference built from `Σ` and the test channel in `K`.

use crate::convex::line::{bisect, increasing_root};
use crate::error::{invalid, Result};
use crate::ext::ExtReal;
use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

const PSD_TOL: f64 = 1e-10;

/// A square covariance matrix usable with [`gauss_kl`].
pub trait Covariance {
    fn matrix(&self) -> DMatrix<f64>;
}

fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            if !m[(i, j)].is_finite() || (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                return invalid("covariance must be finite and symmetric");
            }
        }
    }
    let min = m.clone().symmetric_eigen().eigenvalues.min();
    if min < -PSD_TOL {
        return invalid(format!("covariance is not positive semidefinite (eigenvalue {min:e})"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cov2 {
    pub m: [[f64; 2]; 2],
}

impl Cov2 {
    pub fn new(m: [[f64; 2]; 2]) -> Result<Self> {
        let c = Cov2 { m };
        check_psd(&c.matrix())?;
        Ok(c)
    }

    /// Unit-variance source covariance with correlation `zeta`.
    pub fn source(zeta: f64) -> Result<Self> {
        if !(zeta.abs() < 1.0) {
            return invalid("|zeta| must be below 1");
        }
        Cov2::new([[1.0, zeta], [zeta, 1.0]])
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// `Var(X|Y) = det / Var Y`.
    pub fn var_x_given_y(&self) -> f64 {
        self.det() / self.m[1][1]
    }
}

impl Covariance for Cov2 {
    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(2, 2, |i, j| self.m[i][j])
    }
}

/// Covariance of `(X, Y, Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cov3 {
    pub m: [[f64; 3]; 3],
}

impl Cov3 {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let c = Cov3 { m };
        check_psd(&c.matrix())?;
        Ok(c)
    }

    /// Nature's parameterization with `Var Z = 1`.
    pub fn from_params(sigma_x2: f64, sigma_y2: f64, rho_xy: f64, rho_xz: f64, rho_yz: f64) -> Result<Self> {
        if !(sigma_x2 > 0.0 && sigma_y2 > 0.0) {
            return invalid("variances must be positive");
        }
        let (sx, sy) = (sigma_x2.sqrt(), sigma_y2.sqrt());
        Cov3::new([
            [sigma_x2, sx * sy * rho_xy, sx * rho_xz],
            [sx * sy * rho_xy, sigma_y2, sy * rho_yz],
            [sx * rho_xz, sy * rho_yz, 1.0],
        ])
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.m[i][j] / (self.m[i][i] * self.m[j][j]).sqrt()
    }

}

impl Covariance for Cov3 {
    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, 3, |i, j| self.m[i][j])
    }
}

/// `D(N(0, K) ‖ N(0, K̄))` in nats; `+∞` when `K` is singular.
pub fn gauss_kl<C: Covariance>(k: &C, kbar: &C) -> Result<f64> {
    let (k, kb) = (k.matrix(), kbar.matrix());
    if k.nrows() != kb.nrows() {
        return invalid("covariances must have the same dimension");
    }
    let Some(chol) = kb.clone().cholesky() else {
        return invalid("reference covariance must be nonsingular");
    };
    let d = k.nrows() as f64;
    let det_k = k.determinant();
    if det_k <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let tr = (chol.inverse() * &k).trace();
    Ok((0.5 * (tr - d - det_k.ln() + kb.determinant().ln())).max(0.0))
}

/// The Markov reference: `(X, Y) ~ Σ` and `Z | X` taken from nature's
/// test channel with parameters `(σ_X², ρ_xz)`.
pub fn kbar(sigma_x2: f64, rho_xz: f64, zeta: f64) -> Result<Cov3> {
    if !(sigma_x2 > 0.0 && rho_xz.abs() < 1.0) {
        return invalid("need sigma_x2 > 0 and |rho_xz| < 1");
    }
    let g = rho_xz / sigma_x2.sqrt();
    Cov3::new([[1.0, zeta, g], [zeta, 1.0, zeta * g], [g, zeta * g, g * g + 1.0 - rho_xz * rho_xz]])
}

/// Mutual information between two coordinates of `k`.
pub fn gauss_mi(k: &Cov3, pair: (usize, usize)) -> Result<ExtReal> {
    let (i, j) = pair;
    if i > 2 || j > 2 || i == j {
        return invalid("pair must name two distinct axes of 0..3");
    }
    let rho = k.correlation(i, j);
    if rho.abs() >= 1.0 {
        return Ok(ExtReal::INFINITY);
    }
    Ok(ExtReal::from_f64((-0.5 * (1.0 - rho * rho).ln()).max(0.0)))
}

fn mi_of(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimator {
    pub alpha: f64,
    pub beta: f64,
}

impl LinearEstimator {
    pub fn new(alpha: f64, beta: f64, m_lambda: f64) -> Result<Self> {
        if alpha.abs() > m_lambda || beta.abs() > m_lambda {
            return invalid("estimator coefficients exceed the bound");
        }
        Ok(LinearEstimator { alpha, beta })
    }
}

/// `E_K[(X − αY − βZ)²]`.
pub fn mse(k: &Cov3, lam: &LinearEstimator) -> f64 {
    let m = &k.m;
    let (a, b) = (lam.alpha, lam.beta);
    m[0][0] + a * a * m[1][1] + b * b * m[2][2] - 2.0 * a * m[0][1] - 2.0 * b * m[0][2] + 2.0 * a * b * m[1][2]
}

/// Gradient of [`mse`] in `(α, β)`.
pub fn mse_gradient(k: &Cov3, lam: &LinearEstimator) -> (f64, f64) {
    let m = &k.m;
    let (a, b) = (lam.alpha, lam.beta);
    (2.0 * a * m[1][1] - 2.0 * m[0][1] + 2.0 * b * m[1][2], 2.0 * b * m[2][2] - 2.0 * m[0][2] + 2.0 * a * m[1][2])
}

/// Evenly spaced values `lo, lo + step, ..., <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range1 {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Range1 {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| ((self.lo + i as f64 * self.step) * 1e12).round() / 1e12).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.step > 0.0 && self.lo <= self.hi && self.lo.is_finite() && self.hi.is_finite()) {
            return invalid(format!("{name} range must have lo <= hi and a positive step"));
        }
        Ok(())
    }
}

/// Grids for the nested Gaussian game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussGrid {
    pub sigma_x2: Range1,
    /// Test-channel correlation; only `ρ_xz >= 0` is needed since the game
    /// is invariant under `Z → −Z`.
    pub rho_xz: Range1,
    pub sigma_y2: Range1,
    pub lambda_step: f64,
    pub refine_rounds: usize,
    pub refine_shrink: f64,
}

impl Default for GaussGrid {
    fn default() -> Self {
        GaussGrid {
            sigma_x2: Range1 { lo: 0.1, hi: 4.0, step: 0.05 },
            rho_xz: Range1 { lo: 0.0, hi: 0.98, step: 0.02 },
            sigma_y2: Range1 { lo: 0.1, hi: 4.0, step: 0.05 },
            lambda_step: 0.25,
            refine_rounds: 2,
            refine_shrink: 0.2,
        }
    }
}

impl GaussGrid {
    pub fn validate(&self) -> Result<()> {
        self.sigma_x2.validate("sigma_x2")?;
        self.rho_xz.validate("rho_xz")?;
        self.sigma_y2.validate("sigma_y2")?;
        if self.sigma_x2.lo <= 0.0 || self.sigma_y2.lo <= 0.0 {
            return invalid("variance grids must be positive");
        }
        if self.rho_xz.lo < 0.0 || self.rho_xz.hi >= 1.0 {
            return invalid("rho_xz grid must lie in [0, 1)");
        }
        if !(self.lambda_step > 0.0) {
            return invalid("lambda_step must be positive");
        }
        if !(self.refine_shrink > 0.0 && self.refine_shrink < 1.0) {
            return invalid("refine_shrink must lie in (0, 1)");
        }
        Ok(())
    }
}

fn default_m_lambda() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussProblem {
    pub zeta: f64,
    pub delta: f64,
    pub rate: f64,
    #[serde(default = "default_m_lambda")]
    pub m_lambda: f64,
    #[serde(default)]
    pub grid: GaussGrid,
}

impl GaussProblem {
    pub fn new(zeta: f64, delta: f64, rate: f64) -> Result<Self> {
        let p = GaussProblem { zeta, delta, rate, m_lambda: default_m_lambda(), grid: GaussGrid::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta.abs() < 1.0) {
            return invalid("|zeta| must be below 1");
        }
        if !(self.delta > 0.0 && self.rate > 0.0 && self.m_lambda > 0.0) {
            return invalid("delta, rate and m_lambda must be positive");
        }
        self.grid.validate()
    }

    pub fn sigma(&self) -> Cov2 {
        Cov2 { m: [[1.0, self.zeta], [self.zeta, 1.0]] }
    }
}

/// `G_G` at an explicit covariance, in nats. `K̄` uses `σ_X² = K_xx` and
/// `ρ_xz = K_xz / σ_X`.
pub fn g_g(k: &Cov3, lam: &LinearEstimator, prob: &GaussProblem) -> Result<ExtReal> {
    if (k.m[2][2] - 1.0).abs() > 1e-12 {
        return invalid("nature's covariance must have Var Z = 1");
    }
    let sigma_x2 = k.m[0][0];
    let rho_xz = k.m[0][2] / sigma_x2.sqrt();
    let kb = kbar(sigma_x2, rho_xz, prob.zeta)?;
    let d = gauss_kl(k, &kb)?;
    if mse(k, lam) >= prob.delta {
        return Ok(ExtReal::from_f64(d));
    }
    let i_xz = gauss_mi(k, (0, 2))?;
    if i_xz >= ExtReal::finite(prob.rate) {
        let i_yz = gauss_mi(k, (1, 2))?;
        if i_xz.is_infinite() {
            return Ok(ExtReal::from_f64(d));
        }
        let bracket = (ExtReal::finite(prob.rate) + i_yz).to_f64() - i_xz.to_f64();
        return Ok(ExtReal::from_f64(d + bracket.max(0.0)));
    }
    Ok(ExtReal::INFINITY)
}

/// Point-to-point exponent without side information: `½(t − ln t − 1)` with
/// `t = Δ e^{2R}`, and zero when `t < 1`.
pub fn marton_gauss(rate: f64, delta: f64) -> f64 {
    exponent_of(delta * (2.0 * rate).exp())
}

fn exponent_of(t: f64) -> f64 {
    if t <= 1.0 {
        0.0
    } else {
        0.5 * (t - t.ln() - 1.0)
    }
}

/// Exponent with side information at both ends: `½(u − ln u − 1)` with
/// `u = Δ e^{2R} / (1 − ζ²)`.
pub fn two_sided_gauss(rate: f64, delta: f64, zeta: f64) -> f64 {
    exponent_of(delta * (2.0 * rate).exp() / (1.0 - zeta * zeta))
}

/// `½(u − ln u − 1)` without clamping; equals `D(kstar ‖ Σ)` for every `u > 0`.
pub fn two_sided_closed_form(rate: f64, delta: f64, zeta: f64) -> f64 {
    let u = delta * (2.0 * rate).exp() / (1.0 - zeta * zeta);
    0.5 * (u - u.ln() - 1.0)
}

/// Optimal sphere-packing covariance `[[ζ² + Δe^{2R}, ζ], [ζ, 1]]`.
pub fn kstar(rate: f64, delta: f64, zeta: f64) -> Cov2 {
    Cov2 { m: [[zeta * zeta + delta * (2.0 * rate).exp(), zeta], [zeta, 1.0]] }
}

/// Conditional rate-distortion function `½ log⁺(Var_Π(X|Y) / Δ)`.
pub fn cond_rd(pi: &Cov2, delta: f64) -> f64 {
    (0.5 * (pi.var_x_given_y() / delta).ln()).max(0.0)
}

/// `inf { D(Π ‖ Σ) : cond_rd(Π, Δ) >= R }` over a grid of `Π` with local
/// refinement.
pub fn theta_gauss_upper(prob: &GaussProblem) -> Result<ExtReal> {
    prob.validate()?;
    let sigma = prob.sigma();
    if prob.rate <= cond_rd(&sigma, prob.delta) {
        return invalid("rate must exceed the conditional rate-distortion function of the source");
    }
    let g = &prob.grid;
    let rhos = Range1 { lo: -0.98, hi: 0.98, step: g.rho_xz.step }.points();
    let eval = |sx2: f64, sy2: f64, rho: f64| -> Option<f64> {
        if sx2 <= 0.0 || sy2 <= 0.0 || rho.abs() >= 1.0 {
            return None;
        }
        let c = (sx2 * sy2).sqrt() * rho;
        let pi = Cov2 { m: [[sx2, c], [c, sy2]] };
        if cond_rd(&pi, prob.delta) < prob.rate {
            return None;
        }
        gauss_kl(&pi, &sigma).ok()
    };
    let mut best: Option<(f64, [f64; 3])> = None;
    for &sx2 in &g.sigma_x2.points() {
        for &sy2 in &g.sigma_y2.points() {
            for &rho in &rhos {
                if let Some(v) = eval(sx2, sy2, rho) {
                    if best.map_or(true, |b| v < b.0) {
                        best = Some((v, [sx2, sy2, rho]));
                    }
                }
            }
        }
    }
    let Some((mut value, mut at)) = best else {
        return Ok(ExtReal::INFINITY);
    };
    let steps = [g.sigma_x2.step, g.sigma_y2.step, g.rho_xz.step];
    let reach = (1.0 / g.refine_shrink).ceil() as i32;
    for r in 1..=g.refine_rounds + 2 {
        let scale = g.refine_shrink.powi(r as i32);
        let center = at;
        for i in -reach..=reach {
            for j in -reach..=reach {
                for l in -reach..=reach {
                    let p = [
                        center[0] + i as f64 * steps[0] * scale,
                        center[1] + j as f64 * steps[1] * scale,
                        center[2] + l as f64 * steps[2] * scale,
                    ];
                    if let Some(v) = eval(p[0], p[1], p[2]) {
                        if v < value {
                            (value, at) = (v, p);
                        }
                    }
                }
            }
        }
    }
    Ok(ExtReal::from_f64(value))
}

// ---------------------------------------------------------------------------
// Inner solver: nature's (ρ_xy, ρ_yz) for fixed σ_X, ρ_xz, σ_Y and λ.

type Vec2 = [f64; 2];
type Mat2 = [[f64; 2]; 2];

/// Objective restricted to nature's free correlations `θ = (ρ_xy, ρ_yz)`.
#[derive(Debug, Clone, Copy)]
struct Slice {
    sx: f64,
    sy: f64,
    r: f64,
    /// `D(θ) = c0 + ½(g1 ρ_xy + g2 ρ_yz) − ½ ln det Corr(θ)`.
    c0: f64,
    g1: f64,
    g2: f64,
}

impl Slice {
    fn new(sigma_x2: f64, sigma_y2: f64, rho_xz: f64, zeta: f64) -> Self {
        let (sx, sy, r) = (sigma_x2.sqrt(), sigma_y2.sqrt(), rho_xz);
        let g = r / sx;
        let kb = Matrix3::new(1.0, zeta, g, zeta, 1.0, zeta * g, g, zeta * g, g * g + 1.0 - r * r);
        let inv = kb.try_inverse().expect("reference is nonsingular for |rho_xz| < 1");
        let k0 = Matrix3::new(sigma_x2, 0.0, sx * r, 0.0, sigma_y2, 0.0, sx * r, 0.0, 1.0);
        let t0 = (inv * k0).trace();
        let c0 = 0.5 * (t0 - 3.0 - (sigma_x2 * sigma_y2).ln() + kb.determinant().ln());
        Slice { sx, sy, r, c0, g1: 2.0 * inv[(0, 1)] * sx * sy, g2: 2.0 * inv[(1, 2)] * sy }
    }

    fn corr_det(&self, t: Vec2) -> f64 {
        let (a, b, r) = (t[0], t[1], self.r);
        1.0 - a * a - b * b - r * r + 2.0 * a * r * b
    }

    fn corr_grad(&self, t: Vec2) -> Vec2 {
        [-2.0 * t[0] + 2.0 * self.r * t[1], -2.0 * t[1] + 2.0 * self.r * t[0]]
    }

    fn corr_hess(&self) -> Mat2 {
        [[-2.0, 2.0 * self.r], [2.0 * self.r, -2.0]]
    }

    /// Divergence with an optional smooth penalty `a0 + I(Y;Z)`.
    fn eval(&self, t: Vec2, pen: Option<f64>) -> Option<(f64, Vec2, Mat2)> {
        let c = self.corr_det(t);
        if !(c > 0.0) {
            return None;
        }
        let gc = self.corr_grad(t);
        let hc = self.corr_hess();
        let mut f = self.c0 + 0.5 * (self.g1 * t[0] + self.g2 * t[1]) - 0.5 * c.ln();
        let mut g = [0.5 * self.g1 - 0.5 * gc[0] / c, 0.5 * self.g2 - 0.5 * gc[1] / c];
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = -0.5 * hc[i][j] / c + 0.5 * gc[i] * gc[j] / (c * c);
            }
        }
        if let Some(a0) = pen {
            let b = t[1];
            let s = 1.0 - b * b;
            f += a0 - 0.5 * s.ln();
            g[1] += b / s;
            h[1][1] += (1.0 + b * b) / (s * s);
        }
        Some((f, g, h))
    }

    fn divergence(&self, t: Vec2) -> f64 {
        self.eval(t, None).map_or(f64::INFINITY, |e| e.0.max(0.0))
    }

    /// Unconstrained minimizer by damped Newton from `θ = 0`.
    fn newton(&self, pen: Option<f64>) -> Vec2 {
        let mut t = [0.0, 0.0];
        let Some(mut cur) = self.eval(t, pen) else { return t };
        for _ in 0..100 {
            let (f, g, h) = cur;
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if !(det > 0.0) {
                break;
            }
            let d = [-(h[1][1] * g[0] - h[0][1] * g[1]) / det, -(h[0][0] * g[1] - h[1][0] * g[0]) / det];
            let dec = -(g[0] * d[0] + g[1] * d[1]);
            if dec < 1e-22 {
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-12 {
                let cand = [t[0] + step * d[0], t[1] + step * d[1]];
                if let Some(e) = self.eval(cand, pen) {
                    if e.0 <= f - 0.25 * step * dec {
                        t = cand;
                        cur = e;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        t
    }

    /// Open interval of `s` with `det Corr(p + s·d) > 0`, intersected with
    /// `[lo, hi]`.
    fn line_interval(&self, p: Vec2, d: Vec2, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let hc = self.corr_hess();
        let qa = 0.5 * (d[0] * (hc[0][0] * d[0] + hc[0][1] * d[1]) + d[1] * (hc[1][0] * d[0] + hc[1][1] * d[1]));
        let gc = self.corr_grad(p);
        let qb = gc[0] * d[0] + gc[1] * d[1];
        let qc = self.corr_det(p);
        let disc = qb * qb - 4.0 * qa * qc;
        if !(qa < 0.0) || disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let (r1, r2) = ((-qb + sq) / (2.0 * qa), (-qb - sq) / (2.0 * qa));
        let (a, b) = (r1.min(r2).max(lo), r1.max(r2).min(hi));
        (a < b).then_some((a, b))
    }

    /// Minimizer of the objective on `p + s·d`, `s ∈ (lo, hi)`.
    fn line_min(&self, p: Vec2, d: Vec2, lo: f64, hi: f64, pen: Option<f64>) -> Option<Vec2> {
        let (a, b) = self.line_interval(p, d, lo, hi)?;
        let at = |s: f64| [p[0] + s * d[0], p[1] + s * d[1]];
        let df = |s: f64| {
            self.eval(at(s), pen).map_or(if s < 0.5 * (a + b) { -1e300 } else { 1e300 }, |(_, g, _)| g[0] * d[0] + g[1] * d[1])
        };
        let d2f = |s: f64| {
            self.eval(at(s), pen).map_or(0.0, |(_, _, h)| {
                d[0] * (h[0][0] * d[0] + h[0][1] * d[1]) + d[1] * (h[1][0] * d[0] + h[1][1] * d[1])
            })
        };
        let s = increasing_root(df, d2f, a, b);
        let t = at(s);
        (self.corr_det(t) > 0.0).then_some(t)
    }
}

/// `λ`-independent pieces of the inner problem for one slice.
struct SliceSolver {
    slice: Slice,
    /// Nature's unconstrained minimizer and its divergence.
    free: Vec2,
    free_value: f64,
    /// `a0 = R − I(X;Z)` when binning is active.
    a0: Option<f64>,
    /// Unconstrained minimizer of `D + a0 + I(Y;Z)`.
    free_pen: Option<Vec2>,
    delta: f64,
}

/// Result of the inner infimum.
#[derive(Debug, Clone, Copy)]
struct InnerValue {
    value: f64,
    theta: Vec2,
}

impl SliceSolver {
    fn new(sigma_x2: f64, sigma_y2: f64, rho_xz: f64, prob: &GaussProblem) -> Self {
        let slice = Slice::new(sigma_x2, sigma_y2, rho_xz, prob.zeta);
        let free = slice.newton(None);
        let i_xz = mi_of(rho_xz);
        let a0 = (i_xz >= prob.rate).then_some(prob.rate - i_xz);
        let free_pen = a0.map(|a| slice.newton(Some(a)));
        SliceSolver { slice, free, free_value: slice.divergence(free), a0, free_pen, delta: prob.delta }
    }

    /// `mse(θ) = m0 + m1 ρ_xy + m2 ρ_yz`.
    fn mse_affine(&self, lam: Vec2) -> (f64, f64, f64) {
        let (sx, sy, r) = (self.slice.sx, self.slice.sy, self.slice.r);
        let (al, be) = (lam[0], lam[1]);
        let m0 = sx * sx + al * al * sy * sy + be * be - 2.0 * be * sx * r;
        (m0, -2.0 * al * sx * sy, 2.0 * al * be * sy)
    }

    fn penalty(&self, t: Vec2) -> f64 {
        self.a0.map_or(0.0, |a| (a + mi_of(t[1])).max(0.0))
    }

    fn objective_b(&self, t: Vec2) -> f64 {
        self.slice.divergence(t) + self.penalty(t)
    }

    /// Minimizer over the half-plane `mse <= Δ` (`below`) or `mse >= Δ`.
    fn halfplane_min(&self, m: (f64, f64, f64), below: bool, pen: Option<f64>, free: Vec2) -> Option<Vec2> {
        let mse = |t: Vec2| m.0 + m.1 * t[0] + m.2 * t[1];
        let inside = |t: Vec2| if below { mse(t) <= self.delta } else { mse(t) >= self.delta };
        if inside(free) {
            return Some(free);
        }
        let n2 = m.1 * m.1 + m.2 * m.2;
        if n2 < 1e-300 {
            return None;
        }
        let k = (self.delta - m.0) / n2;
        let p = [k * m.1, k * m.2];
        self.slice.line_min(p, [-m.2, m.1], f64::NEG_INFINITY, f64::INFINITY, pen)
    }

    fn solve(&self, lam: Vec2) -> InnerValue {
        let m = self.mse_affine(lam);
        let mut best = InnerValue { value: f64::INFINITY, theta: self.free };
        if let Some(t) = self.halfplane_min(m, false, None, self.free) {
            best = InnerValue { value: self.slice.divergence(t), theta: t };
        }
        let Some(a0) = self.a0 else { return best };
        if best.value <= self.free_value {
            return best;
        }
        let consider = |t: Vec2, best: &mut InnerValue| {
            let v = self.objective_b(t);
            if v < best.value {
                *best = InnerValue { value: v, theta: t };
            }
        };
        let Some(t1) = self.halfplane_min(m, true, None, self.free) else { return best };
        consider(t1, &mut best);
        if self.penalty(t1) <= 0.0 {
            return best;
        }
        if let Some(t2) = self.halfplane_min(m, true, Some(a0), self.free_pen.expect("binning active")) {
            consider(t2, &mut best);
        }
        // The penalty switches on where I(Y;Z) = −a0.
        let b0 = (1.0 - (2.0 * a0).exp()).max(0.0).sqrt();
        for b in [b0, -b0] {
            // ρ_xy free along ρ_yz = b, subject to mse <= Δ.
            let slack = self.delta - m.0 - m.2 * b;
            let (lo, hi) = if m.1.abs() < 1e-300 {
                if slack < 0.0 {
                    continue;
                }
                (f64::NEG_INFINITY, f64::INFINITY)
            } else if m.1 > 0.0 {
                (f64::NEG_INFINITY, slack / m.1)
            } else {
                (slack / m.1, f64::INFINITY)
            };
            if let Some(t) = self.slice.line_min([0.0, b], [1.0, 0.0], lo, hi, None) {
                if m.0 + m.1 * t[0] + m.2 * t[1] <= self.delta + 1e-12 {
                    consider(t, &mut best);
                }
            }
        }
        best
    }

    /// MMSE coefficients of `X` from `(Y, Z)` under nature's free optimum.
    fn mmse_lambda(&self) -> Vec2 {
        let (sx, sy, r) = (self.slice.sx, self.slice.sy, self.slice.r);
        let [a, b] = self.free;
        let (kyy, kyz, kzz) = (sy * sy, sy * b, 1.0);
        let (kxy, kxz) = (sx * sy * a, sx * r);
        let det = kyy * kzz - kyz * kyz;
        if det <= 1e-300 {
            return [0.0, kxz];
        }
        [(kxy * kzz - kxz * kyz) / det, (kxz * kyy - kxy * kyz) / det]
    }
}

/// Witness of the Gaussian game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussWitness {
    pub sigma_x2: f64,
    pub rho_xz: f64,
    pub sigma_y2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho_xy: f64,
    pub rho_yz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussReport {
    pub value: ExtReal,
    pub witness: Option<GaussWitness>,
    pub refined: bool,
}

#[derive(Debug, Clone, Copy)]
struct LambdaBest {
    value: f64,
    lam: Vec2,
    theta: Vec2,
}

#[derive(Debug, Clone, Copy)]
struct G3Best {
    value: f64,
    sigma_y2: f64,
    lam: LambdaBest,
}

struct Game<'a> {
    prob: &'a GaussProblem,
    lambdas: Vec<Vec2>,
    sigma_y2s: Vec<f64>,
    reach: i32,
}

fn kl_var(v: f64) -> f64 {
    0.5 * (v - 1.0 - v.ln())
}

impl<'a> Game<'a> {
    fn new(prob: &'a GaussProblem) -> Self {
        let g = &prob.grid;
        let axis = Range1 { lo: -prob.m_lambda, hi: prob.m_lambda, step: g.lambda_step }.points();
        let lambdas = axis.iter().flat_map(|&a| axis.iter().map(move |&b| [a, b])).collect();
        let mut sigma_y2s = g.sigma_y2.points();
        sigma_y2s.sort_by(|a, b| kl_var(*a).total_cmp(&kl_var(*b)).then(a.total_cmp(b)));
        Game { prob, lambdas, sigma_y2s, reach: (1.0 / g.refine_shrink).ceil() as i32 }
    }

    fn clamp_lambda(&self, l: Vec2) -> Option<Vec2> {
        let m = self.prob.m_lambda + 1e-12;
        (l[0].abs() <= m && l[1].abs() <= m).then_some(l)
    }

    /// Sup over `λ`; stops once the value reaches `ceiling`.
    fn sup_lambda(&self, s: &SliceSolver, ceiling: f64) -> LambdaBest {
        let mut best = LambdaBest { value: f64::NEG_INFINITY, lam: [0.0, 0.0], theta: s.free };
        let try_lam = |l: Vec2, best: &mut LambdaBest| {
            let v = s.solve(l);
            if v.value > best.value {
                *best = LambdaBest { value: v.value, lam: l, theta: v.theta };
            }
        };
        let seeds = [s.mmse_lambda(), [0.0, s.slice.sx * s.slice.r]];
        for l in seeds.into_iter().filter_map(|l| self.clamp_lambda(l)) {
            try_lam(l, &mut best);
            if best.value >= ceiling {
                return best;
            }
        }
        for &l in &self.lambdas {
            try_lam(l, &mut best);
            if best.value >= ceiling {
                return best;
            }
        }
        // Pattern search around the incumbent.
        let mut step = self.prob.grid.lambda_step;
        for _ in 0..self.prob.grid.refine_rounds + 1 {
            step *= self.prob.grid.refine_shrink;
            for _sweep in 0..20 {
                let center = best.lam;
                let before = best.value;
                for i in -1..=1 {
                    for j in -1..=1 {
                        if i == 0 && j == 0 {
                            continue;
                        }
                        if let Some(l) = self.clamp_lambda([center[0] + i as f64 * step, center[1] + j as f64 * step]) {
                            try_lam(l, &mut best);
                            if best.value >= ceiling {
                                return best;
                            }
                        }
                    }
                }
                if best.value <= before {
                    break;
                }
            }
        }
        best
    }

    /// `G3`: inf over `σ_Y²` of the sup over `λ`. Stops once the value
    /// drops to `floor`.
    fn g3(&self, sigma_x2: f64, rho_xz: f64, floor: f64) -> G3Best {
        let mut best: Option<G3Best> = None;
        let cur = |b: &Option<G3Best>| b.map_or(f64::INFINITY, |b| b.value);
        let visit = |sy2: f64, best: &mut Option<G3Best>| {
            if kl_var(sy2) >= cur(best) {
                return;
            }
            let s = SliceSolver::new(sigma_x2, sy2, rho_xz, self.prob);
            if s.free_value >= cur(best) {
                return;
            }
            let lam = self.sup_lambda(&s, cur(best));
            if lam.value < cur(best) {
                *best = Some(G3Best { value: lam.value, sigma_y2: sy2, lam });
            }
        };
        for &sy2 in &self.sigma_y2s {
            if kl_var(sy2) >= cur(&best) {
                break;
            }
            visit(sy2, &mut best);
            if cur(&best) <= floor {
                return best.expect("set above");
            }
        }
        let g = &self.prob.grid;
        for r in 1..=g.refine_rounds {
            let Some(b) = best else { break };
            let step = g.sigma_y2.step * g.refine_shrink.powi(r as i32);
            for i in (-self.reach..=self.reach).filter(|&i| i != 0) {
                let sy2 = b.sigma_y2 + i as f64 * step;
                if sy2 > 0.0 {
                    visit(sy2, &mut best);
                    if cur(&best) <= floor {
                        return best.expect("set above");
                    }
                }
            }
        }
        best.unwrap_or(G3Best {
            value: f64::INFINITY,
            sigma_y2: 1.0,
            lam: LambdaBest { value: f64::INFINITY, lam: [0.0, 0.0], theta: [0.0, 0.0] },
        })
    }

    /// Designer seeds for `ρ_xz`: MMSE under a Markov nominal hits fractions
    /// of `Δ`, plus the point where `I(X;Z) = R`.
    fn rho_seeds(&self, sigma_x2: f64) -> Vec<f64> {
        let z = self.prob.zeta;
        let mmse = |r: f64| -> f64 {
            let sx = sigma_x2.sqrt();
            let (kxy, kxz, kyz) = (sx * z, sx * r, z * r);
            let det = 1.0 - kyz * kyz;
            sigma_x2 - (kxy * kxy - 2.0 * kxy * kxz * kyz + kxz * kxz) / det
        };
        let mut seeds = Vec::new();
        for f in [0.5, 0.8, 0.9, 0.95, 0.98, 0.995, 0.999] {
            let target = f * self.prob.delta;
            if mmse(0.0) > target && mmse(0.9999) < target {
                seeds.push(bisect(|r| target - mmse(r), 0.0, 0.9999, 1e-13));
            }
        }
        let r_rate = (1.0 - (-2.0 * self.prob.rate).exp()).sqrt();
        seeds.extend([r_rate * (1.0 - 1e-9), r_rate]);
        seeds.retain(|r| *r >= 0.0 && *r < 1.0);
        seeds
    }

    /// Sup over `ρ_xz` at fixed `σ_X²`; `None` once it reaches `ceiling`.
    fn sup_rho(&self, sigma_x2: f64, ceiling: f64) -> Option<(f64, f64, G3Best)> {
        let mut best: Option<(f64, f64, G3Best)> = None;
        let cur = |b: &Option<(f64, f64, G3Best)>| b.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
        let g = &self.prob.grid;
        let mut cands = self.rho_seeds(sigma_x2);
        cands.extend(g.rho_xz.points());
        for r in cands {
            let v = self.g3(sigma_x2, r, cur(&best));
            if v.value > cur(&best) {
                best = Some((v.value, r, v));
            }
            if cur(&best) >= ceiling {
                return None;
            }
        }
        for k in 1..=g.refine_rounds {
            let Some((_, center, _)) = best else { break };
            let step = g.rho_xz.step * g.refine_shrink.powi(k as i32);
            for i in (-self.reach..=self.reach).filter(|&i| i != 0) {
                let r = center + i as f64 * step;
                if !(0.0..1.0).contains(&r) {
                    continue;
                }
                let v = self.g3(sigma_x2, r, cur(&best));
                if v.value > cur(&best) {
                    best = Some((v.value, r, v));
                }
                if cur(&best) >= ceiling {
                    return None;
                }
            }
        }
        best
    }
}

fn witness(sigma_x2: f64, rho_xz: f64, g3: &G3Best) -> GaussWitness {
    GaussWitness {
        sigma_x2,
        rho_xz,
        sigma_y2: g3.sigma_y2,
        alpha: g3.lam.lam[0],
        beta: g3.lam.lam[1],
        rho_xy: g3.lam.theta[0],
        rho_yz: g3.lam.theta[1],
    }
}

fn ext(v: f64) -> ExtReal {
    if v.is_infinite() {
        ExtReal::INFINITY
    } else {
        ExtReal::from_f64(v.max(0.0))
    }
}

/// Achievable exponent: `inf_{σ_X²} sup_{ρ_xz} inf_{σ_Y²} sup_λ inf_{ρ_xy, ρ_yz} G_G`.
pub fn theta_gauss_lower(prob: &GaussProblem) -> Result<GaussReport> {
    prob.validate()?;
    let game = Game::new(prob);
    let g = &prob.grid;
    let mut xs = g.sigma_x2.points();
    xs.sort_by(|a, b| kl_var(*a).total_cmp(&kl_var(*b)).then(a.total_cmp(b)));
    let mut best: Option<(f64, f64, f64, G3Best)> = None;
    let cur = |b: &Option<(f64, f64, f64, G3Best)>| b.as_ref().map_or(f64::INFINITY, |b| b.0);
    for sx2 in xs {
        if kl_var(sx2) >= cur(&best) {
            break;
        }
        if let Some((v, r, g3)) = game.sup_rho(sx2, cur(&best)) {
            best = Some((v, sx2, r, g3));
        }
    }
    let mut refined = false;
    for k in 1..=g.refine_rounds {
        let Some((_, center, _, _)) = best else { break };
        let step = g.sigma_x2.step * g.refine_shrink.powi(k as i32);
        for i in (-game.reach..=game.reach).filter(|&i| i != 0) {
            let sx2 = center + i as f64 * step;
            if sx2 <= 0.0 || kl_var(sx2) >= cur(&best) {
                continue;
            }
            if let Some((v, r, g3)) = game.sup_rho(sx2, cur(&best)) {
                best = Some((v, sx2, r, g3));
                refined = true;
            }
        }
    }
    Ok(match best {
        Some((v, sx2, r, g3)) => GaussReport { value: ext(v), witness: Some(witness(sx2, r, &g3)), refined },
        None => GaussReport { value: ExtReal::INFINITY, witness: None, refined },
    })
}

/// `G3(ρ_xz)` over the `ρ_xz` grid at fixed `σ_X²`.
pub fn g3_profile(prob: &GaussProblem, sigma_x2: f64) -> Result<Vec<(f64, ExtReal)>> {
    prob.validate()?;
    if !(sigma_x2 > 0.0) {
        return invalid("sigma_x2 must be positive");
    }
    let game = Game::new(prob);
    Ok(prob.grid.rho_xz.points().into_iter().map(|r| (r, ext(game.g3(sigma_x2, r, f64::NEG_INFINITY).value))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kl_examples() {
        let one = Cov2::new([[1.0, 0.3], [0.3, 1.0]]).unwrap();
        assert!(gauss_kl(&one, &one).unwrap().abs() < 1e-12);
        struct S(f64);
        impl Covariance for S {
            fn matrix(&self) -> DMatrix<f64> {
                DMatrix::from_element(1, 1, self.0)
            }
        }
        let v = gauss_kl(&S(2.0), &S(1.0)).unwrap();
        assert!((v - 0.5 * (2.0 - 2f64.ln() - 1.0)).abs() < 1e-12);
        assert!((v - 0.153426).abs() < 1e-6);
        let (a, b) = (1.7, 0.4);
        let d = Cov2::new([[a, 0.0], [0.0, b]]).unwrap();
        let id = Cov2::new([[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((gauss_kl(&d, &id).unwrap() - 0.5 * (a + b - (a * b).ln() - 2.0)).abs() < 1e-12);
        let singular = Cov2 { m: [[1.0, 1.0], [1.0, 1.0]] };
        assert!(gauss_kl(&id, &singular).is_err());
    }

    #[test]
    fn kbar_structure() {
        let k = kbar(1.0, 0.6, 0.7).unwrap();
        let expect = [[1.0, 0.7, 0.6], [0.7, 1.0, 0.42], [0.6, 0.42, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.m[i][j] - expect[i][j]).abs() < 1e-12);
            }
        }
        let k = kbar(2.0, 0.0, 0.5).unwrap();
        assert_eq!(k.m[0][2], 0.0);
        assert_eq!(k.m[2][2], 1.0);
        for &(s, r, z) in &[(0.3, 0.5, 0.2), (2.5, -0.9, 0.7), (1.2, 0.1, -0.4)] {
            let k = kbar(s, r, z).unwrap();
            assert!((k.m[1][2] - k.m[1][0] * k.m[0][2] / k.m[0][0]).abs() < 1e-12);
            assert_eq!(k.m[0][1], z);
        }
    }

    #[test]
    fn mutual_information_examples() {
        let k = Cov3::from_params(1.0, 1.0, 0.0, 0.76, 0.0).unwrap();
        assert!((gauss_mi(&k, (0, 2)).unwrap().to_f64() - 0.430901).abs() < 1e-6);
        assert_eq!(gauss_mi(&k, (0, 1)).unwrap(), ExtReal::ZERO);
        let n = Cov3::from_params(1.0, 1.0, 0.0, -0.76, 0.0).unwrap();
        assert_eq!(gauss_mi(&n, (0, 2)).unwrap(), gauss_mi(&k, (2, 0)).unwrap());
    }

    #[test]
    fn mse_examples() {
        let k = Cov3::from_params(1.3, 0.8, 0.2, 0.5, 0.1).unwrap();
        assert_eq!(mse(&k, &LinearEstimator { alpha: 0.0, beta: 0.0 }), 1.3);
        let exact = Cov3 { m: [[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]] };
        assert!(mse(&exact, &LinearEstimator { alpha: 0.0, beta: 1.0 }).abs() < 1e-15);
        // Independent Y, Z: the minimizer is the pair of regression coefficients.
        let ind = Cov3::from_params(1.0, 2.0, 0.3, 0.4, 0.0).unwrap();
        let a = ind.m[0][1] / ind.m[1][1];
        let b = ind.m[0][2];
        let g = mse_gradient(&ind, &LinearEstimator { alpha: a, beta: b });
        assert!(g.0.abs() < 1e-12 && g.1.abs() < 1e-12);
    }

    #[test]
    fn closed_forms() {
        assert_eq!(marton_gauss(0.5 * (1.0f64 / 0.5).ln(), 0.5), 0.0);
        let t = 0.5 * 1f64.exp();
        assert!((marton_gauss(0.5, 0.5) - 0.5 * (t - t.ln() - 1.0)).abs() < 1e-15);
        assert!((marton_gauss(0.5, 0.5) - 0.026144).abs() < 1e-6);
        assert!(marton_gauss(0.6, 0.5) > marton_gauss(0.5, 0.5));
        assert_eq!(two_sided_gauss(0.5, 0.5, 0.0), marton_gauss(0.5, 0.5));
        let u = 0.4 * 0.4f64.exp() / 0.51;
        assert!((u - 1.170059).abs() < 1e-6);
        assert!((two_sided_gauss(0.2, 0.4, 0.7) - 0.5 * (u - u.ln() - 1.0)).abs() < 1e-15);
        assert!((two_sided_gauss(0.2, 0.4, 0.7) - 0.0065024).abs() < 1e-7);
        let sigma = Cov2::source(0.7).unwrap();
        assert!((cond_rd(&sigma, 0.4) - 0.121473).abs() < 1e-6);
        assert_eq!(cond_rd(&sigma, 10.0), 0.0);
    }

    #[test]
    fn kstar_identity() {
        for &(r, d, z) in &[(0.3, 0.4, 0.7), (0.15, 0.6, 0.0), (0.55, 0.2, 0.4), (0.15, 0.2, 0.0)] {
            let k = kstar(r, d, z);
            let v = gauss_kl(&k, &Cov2::source(z).unwrap()).unwrap();
            assert!((v - two_sided_closed_form(r, d, z)).abs() < 1e-9);
        }
        assert_eq!(two_sided_gauss(0.15, 0.2, 0.0), 0.0);
    }

    #[test]
    fn inner_solver_matches_brute_force() {
        let prob = GaussProblem::new(0.7, 0.4, 0.4).unwrap();
        for &(sx2, sy2, r, lam) in
            &[(1.0, 1.0, 0.76, [0.3, 0.5]), (1.2, 0.8, 0.5, [0.6, 0.2]), (0.9, 1.3, 0.85, [0.1, 0.8])]
        {
            let s = SliceSolver::new(sx2, sy2, r, &prob);
            let v = s.solve(lam).value;
            let lest = LinearEstimator { alpha: lam[0], beta: lam[1] };
            let mut brute = f64::INFINITY;
            let n = 800;
            for i in 0..=n {
                for j in 0..=n {
                    let (a, b) = (-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64);
                    if let Ok(k) = Cov3::from_params(sx2, sy2, a, r, b) {
                        if let Ok(g) = g_g(&k, &lest, &prob) {
                            brute = brute.min(g.to_f64());
                        }
                    }
                }
            }
            assert!(v <= brute + 1e-9 && brute - v < 2e-3, "{v} vs {brute}");
        }
    }

    #[test]
    fn g_g_branches() {
        let prob = GaussProblem::new(0.7, 0.4, 0.4).unwrap();
        let kb = kbar(1.0, 0.5, 0.7).unwrap();
        let nominal = LinearEstimator { alpha: 0.0, beta: 0.0 };
        assert!(g_g(&kb, &nominal, &prob).unwrap().to_f64().abs() < 1e-12);
        // mse < Δ without binning.
        let prob_hi = GaussProblem::new(0.0, 0.9, 2.0).unwrap();
        let k = kbar(1.0, 0.5, 0.0).unwrap();
        assert!(g_g(&k, &LinearEstimator { alpha: 0.0, beta: 0.5 }, &prob_hi).unwrap().is_infinite());
    }

    #[test]
    fn upper_bound_matches_two_sided() {
        let prob = GaussProblem::new(0.7, 0.4, 0.3).unwrap();
        let v = theta_gauss_upper(&prob).unwrap().to_f64();
        let t = two_sided_gauss(0.3, 0.4, 0.7);
        assert!(v >= t - 1e-9 && (v - t) / t < 0.02, "{v} vs {t}");
        let below = GaussProblem::new(0.7, 0.4, 0.1).unwrap();
        assert!(theta_gauss_upper(&below).is_err());
    }

    #[test]
    fn lower_reduces_to_marton_without_side_information() {
        for &(r, d) in &[(0.3, 0.4), (0.5, 0.4)] {
            let prob = GaussProblem::new(0.0, d, r).unwrap();
            let v = theta_gauss_lower(&prob).unwrap().value.to_f64();
            let m = marton_gauss(r, d);
            assert!((v - m).abs() <= 0.1 * m + 1e-9, "{v} vs {m}");
        }
    }

    #[test]
    fn lower_witness_reproduces_value() {
        let prob = GaussProblem::new(0.0, 0.4, 0.5).unwrap();
        let rep = theta_gauss_lower(&prob).unwrap();
        let w = rep.witness.unwrap();
        let k = Cov3::from_params(w.sigma_x2, w.sigma_y2, w.rho_xy, w.rho_xz, w.rho_yz).unwrap();
        let lam = LinearEstimator::new(w.alpha, w.beta, prob.m_lambda).unwrap();
        let v = g_g(&k, &lam, &prob).unwrap().to_f64();
        assert!((v - rep.value.to_f64()).abs() < 1e-9, "{v} vs {:?}", rep.value);
    }

    #[test]
    fn profile_peaks_near_operating_point() {
        let prob = GaussProblem::new(0.7, 0.4, 0.4).unwrap();
        let prof = g3_profile(&prob, 1.0).unwrap();
        assert_eq!(prof.len(), 50);
        let (arg, _) = prof.iter().fold((0.0, ExtReal::ZERO), |b, &(r, v)| if v > b.1 { (r, v) } else { b });
        assert!((0.70..=0.82).contains(&arg), "{arg}");
        assert!(prof.iter().all(|(_, v)| v.is_finite()));
    }
}
