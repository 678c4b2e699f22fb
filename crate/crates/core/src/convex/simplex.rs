//! Weighted divergence minimization over a product of simplices.
//!
//! The variable is a stack of rows `V_b`, each a distribution. The objective is
//! `Σ_b w_b D(V_b ‖ P_b) + [a − E(V)]⁺` (nats), where `E` is a signed sum of
//! entropies of linear images of `V`. Extra constraints: linear equalities and
//! inequalities, and lower bounds `E_j(V) >= b_j` with concave `E_j`.
//! Equalities are eliminated through a null-space basis, so the barrier
//! solver works on an unconstrained affine parametrization.

use super::barrier::{self, BarrierOptions, ConvexProgram, Smooth, Status};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// One row of the variable: its weight and reference distribution.
#[derive(Debug, Clone)]
pub struct Block {
    pub weight: f64,
    pub reference: Vec<f64>,
}

/// Sparse linear form `Σ coef · v[index]`.
pub type Terms = Vec<(usize, f64)>;

/// `Σ_g c_g H(M_g v)`; each part lists the output cells of `M_g` as terms.
#[derive(Debug, Clone, Default)]
pub struct EntropyExpr {
    parts: Vec<(f64, Vec<Terms>)>,
}

impl EntropyExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, coef: f64, outputs: Vec<Terms>) -> Self {
        self.parts.push((coef, outputs));
        self
    }

    /// Value in nats.
    pub fn eval(&self, v: &[f64]) -> f64 {
        self.parts
            .iter()
            .map(|(c, outs)| {
                let h: f64 = outs
                    .iter()
                    .map(|t| {
                        let q: f64 = t.iter().map(|&(i, a)| a * v[i]).sum();
                        if q > 0.0 {
                            -q * q.ln()
                        } else {
                            0.0
                        }
                    })
                    .sum();
                c * h
            })
            .sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimplexProgram {
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    flat_reference: Vec<f64>,
    equalities: Vec<(Terms, f64)>,
    inequalities: Vec<(Terms, f64)>,
    lower: Vec<(EntropyExpr, f64)>,
    penalty: Option<(EntropyExpr, f64)>,
}

impl SimplexProgram {
    pub fn new(blocks: Vec<Block>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut acc = 0;
        for b in &blocks {
            offsets.push(acc);
            acc += b.reference.len();
        }
        let flat_reference = blocks.iter().flat_map(|b| b.reference.iter().copied()).collect();
        SimplexProgram { blocks, offsets, flat_reference, ..Default::default() }
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.reference.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn add_equality(&mut self, terms: Terms, rhs: f64) {
        self.equalities.push((terms, rhs));
    }

    /// `Σ terms <= rhs`.
    pub fn add_inequality(&mut self, terms: Terms, rhs: f64) {
        self.inequalities.push((terms, rhs));
    }

    /// `expr(V) >= bound`; `expr` must be concave.
    pub fn add_entropy_lower_bound(&mut self, expr: EntropyExpr, bound: f64) {
        self.lower.push((expr, bound));
    }

    /// Adds `[offset − expr(V)]⁺` to the objective; `expr` must be concave.
    pub fn set_penalty(&mut self, expr: EntropyExpr, offset: f64) {
        self.penalty = Some((expr, offset));
    }

    pub fn divergence(&self, v: &[f64]) -> f64 {
        self.blocks
            .iter()
            .zip(&self.offsets)
            .filter(|(b, _)| b.weight > 0.0)
            .map(|(b, &o)| b.weight * crate::info::kl_nats(&v[o..o + b.reference.len()], &b.reference))
            .sum()
    }

    pub fn penalty_value(&self, v: &[f64]) -> f64 {
        self.penalty.as_ref().map_or(0.0, |(e, a)| (a - e.eval(v)).max(0.0))
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        self.divergence(v) + self.penalty_value(v)
    }

    /// Largest violation of the constraints (equalities in absolute value).
    pub fn violation(&self, v: &[f64]) -> f64 {
        let dot = |t: &Terms| t.iter().map(|&(i, a)| a * v[i]).sum::<f64>();
        let mut worst: f64 = 0.0;
        for (t, r) in &self.equalities {
            worst = worst.max((dot(t) - r).abs());
        }
        for (t, r) in &self.inequalities {
            worst = worst.max(dot(t) - r);
        }
        for (e, b) in &self.lower {
            worst = worst.max(b - e.eval(v));
        }
        worst
    }

    /// Every row set to its reference distribution.
    pub fn reference_point(&self) -> Vec<f64> {
        self.flat_reference.clone()
    }

    /// Every row uniform on the support of its reference.
    pub fn uniform_point(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| {
                let n = b.reference.iter().filter(|&&p| p > 0.0).count() as f64;
                b.reference.iter().map(move |&p| if p > 0.0 { 1.0 / n } else { 0.0 })
            })
            .collect()
    }

    /// Minimizes from `start`, which must satisfy the equalities. Entries that
    /// are zero in `start` stay zero. Returns `None` when no strictly feasible
    /// point exists.
    pub fn solve(&self, start: &[f64]) -> Option<Vec<f64>> {
        let opts = BarrierOptions::default();
        // Find a strictly feasible point without the penalty epigraph, which
        // would let phase one run off along the epigraph variable.
        let start = if self.penalty.is_some() && self.violation(start) >= 0.0 {
            let plain = SimplexProgram { penalty: None, ..self.clone() };
            let reduced = Reduced::build(&plain, start)?;
            let x = barrier::find_feasible(&reduced, reduced.start(), &opts)?;
            reduced.full(&x)
        } else {
            start.to_vec()
        };
        let reduced = Reduced::build(self, &start)?;
        let x0 = reduced.start();
        let res = barrier::solve(&reduced, x0, &opts);
        if res.status == Status::Infeasible {
            return None;
        }
        Some(reduced.finish(&res.x))
    }
}

struct CompiledExpr {
    parts: Vec<(f64, Vec<CompiledOutput>)>,
}

struct CompiledOutput {
    terms: Terms,
    grad: DVector<f64>,
}

struct Reduced<'a> {
    prog: &'a SimplexProgram,
    v0: Vec<f64>,
    free: Vec<usize>,
    weight_of: Vec<f64>,
    basis: DMatrix<f64>,
    r: usize,
    has_u: bool,
    linear: Vec<(DVector<f64>, f64)>,
    lower: Vec<(CompiledExpr, f64)>,
    penalty: Option<(CompiledExpr, f64)>,
}

fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&j| eig.eigenvalues[j].abs() < 1e-10 * top).collect();
    let mut basis = DMatrix::zeros(n, cols.len());
    for (k, &j) in cols.iter().enumerate() {
        basis.set_column(k, &eig.eigenvectors.column(j));
    }
    basis
}

impl<'a> Reduced<'a> {
    fn build(prog: &'a SimplexProgram, start: &[f64]) -> Option<Self> {
        let len = prog.len();
        assert_eq!(start.len(), len, "start has wrong length");
        let mut free = Vec::new();
        let mut local = vec![usize::MAX; len];
        let mut weight_of = Vec::new();
        let mut block_of_free = Vec::new();
        for (bi, (b, &o)) in prog.blocks.iter().zip(&prog.offsets).enumerate() {
            if b.weight <= 0.0 {
                continue;
            }
            for (j, &p) in b.reference.iter().enumerate() {
                if p > 0.0 && start[o + j] > 0.0 {
                    local[o + j] = free.len();
                    free.push(o + j);
                    weight_of.push(b.weight);
                    block_of_free.push(bi);
                }
            }
        }
        let n = free.len();
        // Equality rows restricted to free entries, normalized.
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for bi in 0..prog.blocks.len() {
            let row: Vec<f64> = block_of_free.iter().map(|&b| if b == bi { 1.0 } else { 0.0 }).collect();
            if row.iter().any(|&v| v != 0.0) {
                rows.push(row);
            }
        }
        for (terms, _) in &prog.equalities {
            let mut row = vec![0.0; n];
            for &(i, a) in terms {
                if local[i] != usize::MAX {
                    row[local[i]] += a;
                }
            }
            if row.iter().any(|&v| v != 0.0) {
                rows.push(row);
            }
        }
        let mut a = DMatrix::zeros(rows.len(), n);
        for (k, row) in rows.iter().enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (j, v) in row.iter().enumerate() {
                a[(k, j)] = v / norm;
            }
        }
        let basis = null_space(&a, n);
        let r = basis.ncols();
        let has_u = prog.penalty.is_some();
        let dim = r + usize::from(has_u);

        let mut linear = Vec::new();
        for k in 0..n {
            let mut row = DVector::zeros(dim);
            for j in 0..r {
                row[j] = -basis[(k, j)];
            }
            if row.iter().any(|&v| v != 0.0) {
                linear.push((row, start[free[k]]));
            } else if start[free[k]] <= 0.0 {
                return None;
            }
        }
        for (terms, rhs) in &prog.inequalities {
            let mut row: DVector<f64> = DVector::zeros(dim);
            let mut base = 0.0;
            for &(i, c) in terms {
                base += c * start[i];
                if local[i] != usize::MAX {
                    for j in 0..r {
                        row[j] += c * basis[(local[i], j)];
                    }
                }
            }
            if row.iter().all(|&v| v.abs() < 1e-15) {
                if base > *rhs {
                    return None;
                }
                continue;
            }
            linear.push((row, rhs - base));
        }
        if has_u {
            let mut row = DVector::zeros(dim);
            row[r] = -1.0;
            linear.push((row, 0.0));
        }

        let compile = |e: &EntropyExpr| CompiledExpr {
            parts: e
                .parts
                .iter()
                .map(|(c, outs)| {
                    let outs = outs
                        .iter()
                        .filter_map(|t| {
                            let terms: Terms =
                                t.iter().copied().filter(|&(i, a)| a != 0.0 && (start[i] > 0.0 || local[i] != usize::MAX)).collect();
                            if terms.is_empty() {
                                return None;
                            }
                            let mut grad = DVector::zeros(dim);
                            for &(i, a) in &terms {
                                if local[i] != usize::MAX {
                                    for j in 0..r {
                                        grad[j] += a * basis[(local[i], j)];
                                    }
                                }
                            }
                            Some(CompiledOutput { terms, grad })
                        })
                        .collect();
                    (*c, outs)
                })
                .collect(),
        };
        let lower = prog.lower.iter().map(|(e, b)| (compile(e), *b)).collect();
        let penalty = prog.penalty.as_ref().map(|(e, a)| (compile(e), *a));
        Some(Reduced {
            prog,
            v0: start.to_vec(),
            free,
            weight_of,
            basis,
            r,
            has_u,
            linear,
            lower,
            penalty,
        })
    }

    fn start(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        if let Some((e, a)) = &self.penalty {
            x[self.r] = (a - self.expr_value(e, &self.v0).unwrap_or(0.0)).max(0.0) + 1.0;
        }
        x
    }

    fn full(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut v = self.v0.clone();
        for (k, &i) in self.free.iter().enumerate() {
            let mut d = 0.0;
            for j in 0..self.r {
                d += self.basis[(k, j)] * x[j];
            }
            v[i] += d;
        }
        v
    }

    fn finish(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut v = self.full(x);
        for (b, &o) in self.prog.blocks.iter().zip(&self.prog.offsets) {
            let row = &mut v[o..o + b.reference.len()];
            row.iter_mut().for_each(|p| *p = p.max(0.0));
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|p| *p /= s);
            }
        }
        v
    }

    fn expr_value(&self, e: &CompiledExpr, v: &[f64]) -> Option<f64> {
        let mut acc = 0.0;
        for (c, outs) in &e.parts {
            for o in outs {
                let q: f64 = o.terms.iter().map(|&(i, a)| a * v[i]).sum();
                if !(q > 0.0) {
                    return None;
                }
                acc -= c * q * q.ln();
            }
        }
        Some(acc)
    }

    fn expr_smooth(&self, e: &CompiledExpr, v: &[f64]) -> Option<Smooth> {
        let dim = self.dim();
        let mut value = 0.0;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for (c, outs) in &e.parts {
            for o in outs {
                let q: f64 = o.terms.iter().map(|&(i, a)| a * v[i]).sum();
                if !(q > 0.0) {
                    return None;
                }
                let lq = q.ln();
                value -= c * q * lq;
                grad.axpy(-c * (lq + 1.0), &o.grad, 1.0);
                hess.ger(-c / q, &o.grad, &o.grad, 1.0);
            }
        }
        Some(Smooth { value, grad, hess })
    }
}

impl ConvexProgram for Reduced<'_> {
    fn dim(&self) -> usize {
        self.r + usize::from(self.has_u)
    }

    fn objective(&self, x: &DVector<f64>) -> Option<Smooth> {
        let v = self.full(x);
        let dim = self.dim();
        let mut value = 0.0;
        let mut grad_free = Vec::with_capacity(self.free.len());
        let mut curv = Vec::with_capacity(self.free.len());
        for (k, &i) in self.free.iter().enumerate() {
            let vi = v[i];
            if !(vi > 0.0) {
                return None;
            }
            let w = self.weight_of[k];
            let p = self.prog.flat_reference[i];
            let l = (vi / p).ln();
            value += w * vi * l;
            grad_free.push(w * (l + 1.0));
            curv.push(w / vi);
        }
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        let r = self.r;
        for k in 0..self.free.len() {
            let row = self.basis.row(k);
            for a in 0..r {
                grad[a] += row[a] * grad_free[k];
                let ca = curv[k] * row[a];
                if ca != 0.0 {
                    for b in a..r {
                        hess[(a, b)] += ca * row[b];
                    }
                }
            }
        }
        for a in 0..r {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        if self.has_u {
            value += x[r];
            grad[r] = 1.0;
        }
        Some(Smooth { value, grad, hess })
    }

    fn objective_value(&self, x: &DVector<f64>) -> Option<f64> {
        let v = self.full(x);
        let mut value = 0.0;
        for (k, &i) in self.free.iter().enumerate() {
            let vi = v[i];
            if !(vi > 0.0) {
                return None;
            }
            value += self.weight_of[k] * vi * (vi / self.prog.flat_reference[i]).ln();
        }
        if self.has_u {
            value += x[self.r];
        }
        Some(value)
    }

    fn num_constraints(&self) -> usize {
        self.lower.len() + usize::from(self.penalty.is_some())
    }

    fn constraint(&self, i: usize, x: &DVector<f64>) -> Option<Smooth> {
        let v = self.full(x);
        if i < self.lower.len() {
            let (e, b) = &self.lower[i];
            let s = self.expr_smooth(e, &v)?;
            Some(Smooth { value: b - s.value, grad: -s.grad, hess: -s.hess })
        } else {
            let (e, a) = self.penalty.as_ref().expect("penalty constraint");
            let s = self.expr_smooth(e, &v)?;
            let mut grad = -s.grad;
            grad[self.r] = -1.0;
            Some(Smooth { value: a - s.value - x[self.r], grad, hess: -s.hess })
        }
    }

    fn constraint_value(&self, i: usize, x: &DVector<f64>) -> Option<f64> {
        let v = self.full(x);
        if i < self.lower.len() {
            let (e, b) = &self.lower[i];
            Some(b - self.expr_value(e, &v)?)
        } else {
            let (e, a) = self.penalty.as_ref().expect("penalty constraint");
            Some(a - self.expr_value(e, &v)? - x[self.r])
        }
    }

    fn linear(&self) -> &[(DVector<f64>, f64)] {
        &self.linear
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h2(p: f64) -> f64 {
        crate::info::entropy_nats(&[p, 1.0 - p])
    }

    #[test]
    fn unconstrained_returns_reference() {
        let prog = SimplexProgram::new(vec![
            Block { weight: 0.4, reference: vec![0.2, 0.8] },
            Block { weight: 0.6, reference: vec![0.5, 0.25, 0.25] },
        ]);
        let v = prog.solve(&prog.uniform_point()).unwrap();
        assert!(prog.divergence(&v) < 1e-9);
        assert!((v[0] - 0.2).abs() < 1e-5);
    }

    #[test]
    fn entropy_constraint_matches_bisection() {
        // min D(q ‖ Bern(0.11)) s.t. H(q) >= 0.5 nats.
        let mut prog = SimplexProgram::new(vec![Block { weight: 1.0, reference: vec![0.89, 0.11] }]);
        prog.add_entropy_lower_bound(EntropyExpr::new().with(1.0, vec![vec![(0, 1.0)], vec![(1, 1.0)]]), 0.5);
        let v = prog.solve(&prog.uniform_point()).unwrap();
        let q = crate::convex::line::bisect(|q| h2(q) - 0.5, 0.11, 0.5, 1e-15);
        let oracle = crate::info::kl_nats(&[1.0 - q, q], &[0.89, 0.11]);
        assert!((prog.divergence(&v) - oracle).abs() < 1e-9, "{} vs {oracle}", prog.divergence(&v));
    }

    #[test]
    fn equality_and_penalty() {
        // Two rows with a shared first-coordinate mass constraint and a penalty
        // that pulls toward higher entropy of the average.
        let mut prog = SimplexProgram::new(vec![
            Block { weight: 0.5, reference: vec![0.9, 0.1] },
            Block { weight: 0.5, reference: vec![0.3, 0.7] },
        ]);
        prog.add_equality(vec![(0, 0.5), (2, 0.5)], 0.5);
        let avg = EntropyExpr::new().with(1.0, vec![vec![(0, 0.5), (2, 0.5)], vec![(1, 0.5), (3, 0.5)]]);
        prog.set_penalty(avg, 0.2);
        let start = vec![0.5, 0.5, 0.5, 0.5];
        let v = prog.solve(&start).unwrap();
        assert!(prog.violation(&v) < 1e-9);
        // Average is pinned at (0.5, 0.5) with entropy ln 2 > 0.2: no penalty.
        assert!(prog.penalty_value(&v) == 0.0);
        // Brute force over the one free parameter.
        let mut best = f64::INFINITY;
        for i in 1..100000 {
            let a = i as f64 / 100000.0;
            let cand = vec![a, 1.0 - a, 1.0 - a, a];
            best = best.min(prog.objective(&cand));
        }
        assert!(prog.objective(&v) <= best + 1e-9);
        assert!(best - prog.objective(&v) < 1e-7);
    }

    #[test]
    fn infeasible_entropy_bound() {
        let mut prog = SimplexProgram::new(vec![Block { weight: 1.0, reference: vec![0.5, 0.5] }]);
        prog.add_entropy_lower_bound(EntropyExpr::new().with(1.0, vec![vec![(0, 1.0)], vec![(1, 1.0)]]), 0.8);
        assert!(prog.solve(&prog.uniform_point()).is_none());
    }
}
