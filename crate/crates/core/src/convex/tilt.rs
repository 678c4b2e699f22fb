//! I-projection of a family of rows onto a marginal and one moment constraint.
//!
//! Minimizes `Σ_c w_c D(V_c ‖ P_c)` over rows `V_c` subject to an optional
//! weighted-marginal equality `Σ_c w_c V_c(y) = m(y)` and an optional moment
//! constraint on `Σ_c w_c E_{V_c}[d_c]`. The optimum is the tilted family
//! `V_c(y) ∝ P_c(y) exp(ν_y + μ d_c(y))`; the multipliers are found by Newton
//! ascent on the concave dual.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    None,
    AtLeast(f64),
    AtMost(f64),
}

#[derive(Debug, Clone)]
pub struct TiltCell<'a> {
    pub weight: f64,
    pub reference: &'a [f64],
    /// Per-symbol moment values; may be empty when no moment is used.
    pub moment: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct TiltSolution {
    pub rows: Vec<Vec<f64>>,
    /// `Σ w_c D(V_c ‖ P_c)` in nats.
    pub divergence: f64,
}

const GRAD_TOL: f64 = 1e-12;
const APPROX_TOL: f64 = 1e-7;

struct Dual<'a> {
    cells: &'a [TiltCell<'a>],
    /// Allowed symbols per cell.
    support: Vec<Vec<usize>>,
    /// Symbols carrying a multiplier (all active but the last).
    nu_index: Vec<Option<usize>>,
    marginal: Option<&'a [f64]>,
    n_nu: usize,
    moment_target: Option<f64>,
}

impl Dual<'_> {
    fn dim(&self) -> usize {
        self.n_nu + usize::from(self.moment_target.is_some())
    }

    fn row(&self, c: usize, theta: &DVector<f64>) -> (Vec<f64>, f64) {
        let cell = &self.cells[c];
        let mu = if self.moment_target.is_some() { theta[self.n_nu] } else { 0.0 };
        let mut s: Vec<f64> = self.support[c]
            .iter()
            .map(|&y| {
                let nu = self.nu_index[y].map_or(0.0, |k| theta[k]);
                let d = if mu != 0.0 { mu * cell.moment[y] } else { 0.0 };
                cell.reference[y].ln() + nu + d
            })
            .collect();
        let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in s.iter_mut() {
            *v = (*v - top).exp();
            z += *v;
        }
        s.iter_mut().for_each(|v| *v /= z);
        (s, top + z.ln())
    }

    /// Dual value, gradient and negated Hessian.
    fn eval(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let dim = self.dim();
        let mut g = 0.0;
        let mut grad = DVector::zeros(dim);
        let mut neg_hess = DMatrix::zeros(dim, dim);
        if let Some(m) = self.marginal {
            for (y, k) in self.nu_index.iter().enumerate() {
                if let Some(k) = *k {
                    g += m[y] * theta[k];
                    grad[k] += m[y];
                }
            }
        }
        if let Some(target) = self.moment_target {
            g += target * theta[self.n_nu];
            grad[self.n_nu] += target;
        }
        let mut phi = DVector::zeros(dim);
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.weight <= 0.0 {
                continue;
            }
            let (probs, log_z) = self.row(c, theta);
            g -= cell.weight * log_z;
            let mut mean = DVector::zeros(dim);
            for (&y, &p) in self.support[c].iter().zip(&probs) {
                phi.fill(0.0);
                if let Some(k) = self.nu_index[y] {
                    phi[k] = 1.0;
                }
                if self.moment_target.is_some() {
                    phi[self.n_nu] = cell.moment[y];
                }
                mean.axpy(p, &phi, 1.0);
                neg_hess.ger(cell.weight * p, &phi, &phi, 1.0);
            }
            grad.axpy(-cell.weight, &mean, 1.0);
            neg_hess.ger(-cell.weight, &mean, &mean, 1.0);
        }
        (g, grad, neg_hess)
    }

    /// Newton ascent. Returns the multipliers when the dual is bounded.
    fn maximize(&self, upper: f64) -> Option<DVector<f64>> {
        let dim = self.dim();
        let mut theta = DVector::zeros(dim);
        if dim == 0 {
            return Some(theta);
        }
        let (mut g, mut grad, mut nh) = self.eval(&theta);
        for _ in 0..300 {
            if grad.amax() < GRAD_TOL {
                return Some(theta);
            }
            if g > upper {
                return None;
            }
            let scale = (0..dim).map(|i| nh[(i, i)]).fold(0.0, f64::max).max(1e-300);
            let mut ridge = scale * 1e-14;
            let dir = loop {
                let mut h = nh.clone();
                for i in 0..dim {
                    h[(i, i)] += ridge;
                }
                if let Some(ch) = h.cholesky() {
                    break ch.solve(&grad);
                }
                ridge *= 100.0;
                if ridge > 1e6 * scale {
                    return None;
                }
            };
            let slope = grad.dot(&dir);
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-16 {
                let cand = &theta + &dir * step;
                let (gc, gr, h) = self.eval(&cand);
                if gc.is_finite() && gc >= g + 1e-4 * step * slope {
                    // Boundary optima push a multiplier to infinity; stop once
                    // the dual no longer moves and the gradient is small.
                    if gc - g <= 1e-15 * (1.0 + g.abs()) && gr.amax() < APPROX_TOL {
                        return Some(cand);
                    }
                    theta = cand;
                    g = gc;
                    grad = gr;
                    nh = h;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (grad.amax() < APPROX_TOL).then_some(theta)
    }
}

fn moment_of(cells: &[TiltCell], rows: &[Vec<f64>]) -> f64 {
    cells
        .iter()
        .zip(rows)
        .filter(|(c, _)| c.weight > 0.0)
        .map(|(c, r)| c.weight * r.iter().zip(c.moment).map(|(p, d)| p * d).sum::<f64>())
        .sum()
}

fn divergence_of(cells: &[TiltCell], rows: &[Vec<f64>]) -> f64 {
    cells
        .iter()
        .zip(rows)
        .filter(|(c, _)| c.weight > 0.0)
        .map(|(c, r)| c.weight * crate::info::kl_nats(r, c.reference))
        .sum()
}

/// Solves the I-projection; `None` when the constraints admit no point.
pub fn i_projection(cells: &[TiltCell], marginal: Option<&[f64]>, moment: Moment) -> Option<TiltSolution> {
    let m = cells.first().map_or(0, |c| c.reference.len());
    let active: Vec<bool> = (0..m).map(|y| marginal.map_or(true, |mg| mg[y] > 0.0)).collect();
    let mut support = Vec::with_capacity(cells.len());
    let mut upper = 1.0;
    for cell in cells {
        let s: Vec<usize> = (0..m).filter(|&y| active[y] && cell.reference[y] > 0.0).collect();
        if cell.weight > 0.0 {
            if s.is_empty() {
                return None;
            }
            let pmin = s.iter().map(|&y| cell.reference[y]).fold(1.0, f64::min);
            upper += cell.weight * (-pmin.ln()).max(0.0);
        }
        support.push(s);
    }
    if marginal.is_some() {
        // Every active symbol must be reachable by some weighted cell.
        for y in (0..m).filter(|&y| active[y]) {
            if !cells.iter().zip(&support).any(|(c, s)| c.weight > 0.0 && s.contains(&y)) {
                return None;
            }
        }
    }
    let mut nu_index = vec![None; m];
    let mut n_nu = 0;
    if marginal.is_some() {
        let act: Vec<usize> = (0..m).filter(|&y| active[y]).collect();
        for &y in act.iter().take(act.len().saturating_sub(1)) {
            nu_index[y] = Some(n_nu);
            n_nu += 1;
        }
    }
    let mut dual = Dual { cells, support, nu_index, marginal, n_nu, moment_target: None };
    let build = |dual: &Dual, theta: &DVector<f64>| -> Vec<Vec<f64>> {
        (0..cells.len())
            .map(|c| {
                let mut row = vec![0.0; m];
                if cells[c].weight > 0.0 {
                    let (probs, _) = dual.row(c, theta);
                    for (&y, p) in dual.support[c].iter().zip(probs) {
                        row[y] = p;
                    }
                } else {
                    row.copy_from_slice(cells[c].reference);
                }
                row
            })
            .collect()
    };
    let theta = dual.maximize(upper)?;
    let rows = build(&dual, &theta);
    let target = match moment {
        Moment::None => None,
        Moment::AtLeast(t) if moment_of(cells, &rows) >= t => None,
        Moment::AtMost(t) if moment_of(cells, &rows) <= t => None,
        Moment::AtLeast(t) | Moment::AtMost(t) => Some(t),
    };
    let Some(target) = target else {
        let divergence = divergence_of(cells, &rows);
        return Some(TiltSolution { rows, divergence });
    };
    if marginal.is_none() {
        // Extreme achievable moment decides feasibility directly.
        let want_max = matches!(moment, Moment::AtLeast(_));
        let mut extreme = 0.0;
        let mut restricted: Vec<Vec<usize>> = Vec::with_capacity(cells.len());
        for (c, s) in cells.iter().zip(&dual.support) {
            let vals = s.iter().map(|&y| c.moment[y]);
            let best = if want_max {
                vals.fold(f64::NEG_INFINITY, f64::max)
            } else {
                vals.fold(f64::INFINITY, f64::min)
            };
            if c.weight > 0.0 {
                extreme += c.weight * best;
            }
            restricted.push(s.iter().copied().filter(|&y| c.moment[y] == best).collect());
        }
        let gap = if want_max { extreme - target } else { target - extreme };
        if gap < -1e-12 {
            return None;
        }
        if gap <= 1e-12 {
            let rows: Vec<Vec<f64>> = cells
                .iter()
                .zip(&restricted)
                .map(|(c, s)| {
                    let mut row = vec![0.0; m];
                    if c.weight > 0.0 {
                        let mass: f64 = s.iter().map(|&y| c.reference[y]).sum();
                        for &y in s {
                            row[y] = c.reference[y] / mass;
                        }
                    } else {
                        row.copy_from_slice(c.reference);
                    }
                    row
                })
                .collect();
            let divergence = divergence_of(cells, &rows);
            return Some(TiltSolution { rows, divergence });
        }
    }
    dual.moment_target = Some(target);
    let theta = dual.maximize(upper)?;
    let rows = build(&dual, &theta);
    let divergence = divergence_of(cells, &rows);
    Some(TiltSolution { rows, divergence })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_constraints_is_identity() {
        let p = [0.2, 0.3, 0.5];
        let cells = [TiltCell { weight: 1.0, reference: &p, moment: &[] }];
        let s = i_projection(&cells, None, Moment::None).unwrap();
        assert_eq!(s.divergence, 0.0);
    }

    #[test]
    fn moment_matches_one_dimensional_oracle() {
        // Single binary row, E[d] >= 0.5 with d = (0, 1): the answer is Bern(0.5).
        let p = [0.8, 0.2];
        let d = [0.0, 1.0];
        let cells = [TiltCell { weight: 1.0, reference: &p, moment: &d }];
        let s = i_projection(&cells, None, Moment::AtLeast(0.5)).unwrap();
        assert!((s.rows[0][1] - 0.5).abs() < 1e-10);
        let oracle = crate::info::kl_nats(&[0.5, 0.5], &p);
        assert!((s.divergence - oracle).abs() < 1e-12);
        assert!(i_projection(&cells, None, Moment::AtLeast(1.5)).is_none());
        let edge = i_projection(&cells, None, Moment::AtLeast(1.0)).unwrap();
        assert!((edge.divergence - (1.0f64 / 0.2).ln()).abs() < 1e-12);
    }

    #[test]
    fn marginal_constraint_matches_grid() {
        let p0 = [0.7, 0.3];
        let p1 = [0.4, 0.6];
        let cells = [
            TiltCell { weight: 0.5, reference: &p0, moment: &[] },
            TiltCell { weight: 0.5, reference: &p1, moment: &[] },
        ];
        let m = [0.3, 0.7];
        let s = i_projection(&cells, Some(&m), Moment::None).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..=60000 {
            let a = i as f64 / 100000.0;
            let b = 0.6 - a;
            if !(0.0..=1.0).contains(&b) {
                continue;
            }
            let v = 0.5 * crate::info::kl_nats(&[a, 1.0 - a], &p0) + 0.5 * crate::info::kl_nats(&[b, 1.0 - b], &p1);
            best = best.min(v);
        }
        assert!((s.divergence - best).abs() < 1e-8);
        let got = 0.5 * s.rows[0][0] + 0.5 * s.rows[1][0];
        assert!((got - 0.3).abs() < 1e-10);
    }

    #[test]
    fn infeasible_marginal() {
        // Both rows forbid symbol 1 but the marginal demands it.
        let p = [1.0, 0.0];
        let cells = [TiltCell { weight: 1.0, reference: &p, moment: &[] }];
        assert!(i_projection(&cells, Some(&[0.5, 0.5]), Moment::None).is_none());
    }
}
