//! Log-barrier interior-point method for small smooth convex programs.
//!
//! Minimizes `f(x)` subject to `g_i(x) <= 0` and `a_j·x <= b_j`. A phase-one
//! problem finds a strictly feasible start when the supplied point is not.

use nalgebra::{DMatrix, DVector};

/// Value, gradient and Hessian of a twice-differentiable function.
pub struct Smooth {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub trait ConvexProgram {
    fn dim(&self) -> usize;
    /// `None` outside the domain.
    fn objective(&self, x: &DVector<f64>) -> Option<Smooth>;
    fn objective_value(&self, x: &DVector<f64>) -> Option<f64> {
        self.objective(x).map(|s| s.value)
    }
    fn num_constraints(&self) -> usize;
    /// Constraint `i` in the form `g_i(x) <= 0`; `None` outside the domain.
    fn constraint(&self, i: usize, x: &DVector<f64>) -> Option<Smooth>;
    fn constraint_value(&self, i: usize, x: &DVector<f64>) -> Option<f64> {
        self.constraint(i, x).map(|s| s.value)
    }
    /// Linear constraints `a·x <= b`.
    fn linear(&self) -> &[(DVector<f64>, f64)];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct BarrierResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub status: Status,
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Stop once the duality gap bound `m/t` falls below this.
    pub gap_tol: f64,
    pub t0: f64,
    pub mu: f64,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions { gap_tol: 1e-11, t0: 1.0, mu: 20.0, max_newton: 400 }
    }
}

/// Largest constraint value at `x`, or `None` outside a constraint domain.
fn max_violation<P: ConvexProgram + ?Sized>(p: &P, x: &DVector<f64>) -> Option<f64> {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..p.num_constraints() {
        worst = worst.max(p.constraint_value(i, x)?);
    }
    for (a, b) in p.linear() {
        worst = worst.max(a.dot(x) - b);
    }
    Some(worst)
}

fn barrier_value<P: ConvexProgram + ?Sized>(p: &P, t: f64, x: &DVector<f64>) -> Option<f64> {
    let mut acc = t * p.objective_value(x)?;
    for i in 0..p.num_constraints() {
        let g = p.constraint_value(i, x)?;
        if !(g < 0.0) {
            return None;
        }
        acc -= (-g).ln();
    }
    for (a, b) in p.linear() {
        let slack = b - a.dot(x);
        if !(slack > 0.0) {
            return None;
        }
        acc -= slack.ln();
    }
    acc.is_finite().then_some(acc)
}

fn barrier_derivs<P: ConvexProgram + ?Sized>(
    p: &P,
    t: f64,
    x: &DVector<f64>,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let f = p.objective(x)?;
    let mut grad = f.grad * t;
    let mut hess = f.hess * t;
    for i in 0..p.num_constraints() {
        let g = p.constraint(i, x)?;
        let inv = -1.0 / g.value;
        grad.axpy(inv, &g.grad, 1.0);
        hess.ger(inv * inv, &g.grad, &g.grad, 1.0);
        hess += &g.hess * inv;
    }
    for (a, b) in p.linear() {
        let inv = 1.0 / (b - a.dot(x));
        grad.axpy(inv, a, 1.0);
        hess.ger(inv * inv, a, a, 1.0);
    }
    Some((grad, hess))
}

/// Solves `H d = -g` with a growing ridge if `H` is not numerically positive definite.
fn newton_direction(hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = h.cholesky() {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        ridge = if ridge == 0.0 { scale * 1e-12 } else { ridge * 100.0 };
    }
    None
}

/// Centers `x` for barrier weight `t`. Returns the Newton steps used.
fn center<P: ConvexProgram + ?Sized>(
    p: &P,
    t: f64,
    x: &mut DVector<f64>,
    budget: usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> usize {
    let mut used = 0;
    let Some(mut phi) = barrier_value(p, t, x) else { return 0 };
    while used < budget {
        if stop(x) {
            break;
        }
        let Some((grad, hess)) = barrier_derivs(p, t, x) else { break };
        let Some(dir) = newton_direction(hess, &grad) else { break };
        used += 1;
        let slope = grad.dot(&dir);
        if !(slope < 0.0) || -slope / 2.0 < 1e-10 {
            break;
        }
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-14 {
            let cand = &*x + &dir * step;
            if let Some(v) = barrier_value(p, t, &cand) {
                if v <= phi + 0.25 * step * slope {
                    *x = cand;
                    phi = v;
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
    used
}

fn run_barrier<P: ConvexProgram + ?Sized>(
    p: &P,
    mut x: DVector<f64>,
    opts: &BarrierOptions,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> DVector<f64> {
    let m = (p.num_constraints() + p.linear().len()) as f64;
    let mut t = opts.t0;
    let mut budget = opts.max_newton;
    loop {
        budget -= center(p, t, &mut x, budget.min(60), stop).min(budget);
        if stop(&x) || m == 0.0 || m / t < opts.gap_tol || budget == 0 {
            return x;
        }
        t *= opts.mu;
    }
}

/// Phase-one program: minimize `s` subject to every constraint `<= s`.
struct PhaseOne<'a, P: ?Sized> {
    inner: &'a P,
    linear: Vec<(DVector<f64>, f64)>,
}

impl<'a, P: ConvexProgram + ?Sized> PhaseOne<'a, P> {
    fn new(inner: &'a P) -> Self {
        let n = inner.dim();
        let linear = inner
            .linear()
            .iter()
            .map(|(a, b)| {
                let mut ext = DVector::zeros(n + 1);
                ext.rows_mut(0, n).copy_from(a);
                ext[n] = -1.0;
                (ext, *b)
            })
            .collect();
        PhaseOne { inner, linear }
    }

    fn split(&self, xs: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = self.inner.dim();
        (xs.rows(0, n).into_owned(), xs[n])
    }
}

impl<P: ConvexProgram + ?Sized> ConvexProgram for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn objective(&self, x: &DVector<f64>) -> Option<Smooth> {
        let n = self.dim();
        let mut grad = DVector::zeros(n);
        grad[n - 1] = 1.0;
        Some(Smooth { value: x[n - 1], grad, hess: DMatrix::zeros(n, n) })
    }

    fn objective_value(&self, x: &DVector<f64>) -> Option<f64> {
        Some(x[self.dim() - 1])
    }

    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }

    fn constraint(&self, i: usize, xs: &DVector<f64>) -> Option<Smooth> {
        let (x, s) = self.split(xs);
        let g = self.inner.constraint(i, &x)?;
        let n = self.inner.dim();
        let mut grad = DVector::zeros(n + 1);
        grad.rows_mut(0, n).copy_from(&g.grad);
        grad[n] = -1.0;
        let mut hess = DMatrix::zeros(n + 1, n + 1);
        hess.view_mut((0, 0), (n, n)).copy_from(&g.hess);
        Some(Smooth { value: g.value - s, grad, hess })
    }

    fn constraint_value(&self, i: usize, xs: &DVector<f64>) -> Option<f64> {
        let (x, s) = self.split(xs);
        Some(self.inner.constraint_value(i, &x)? - s)
    }

    fn linear(&self) -> &[(DVector<f64>, f64)] {
        &self.linear
    }
}

/// Finds a strictly feasible point starting from `x0`, which must lie in
/// every constraint's domain.
pub fn find_feasible<P: ConvexProgram + ?Sized>(
    p: &P,
    x0: DVector<f64>,
    opts: &BarrierOptions,
) -> Option<DVector<f64>> {
    let viol = max_violation(p, &x0)?;
    if viol < 0.0 {
        return Some(x0);
    }
    let phase = PhaseOne::new(p);
    let n = p.dim();
    let mut xs = DVector::zeros(n + 1);
    xs.rows_mut(0, n).copy_from(&x0);
    xs[n] = viol + 1.0;
    let target = -1e-3 * (1.0 + viol.abs()).min(1.0);
    let stop = move |z: &DVector<f64>| z[n] < target;
    let xs = run_barrier(&phase, xs, opts, &stop);
    let x = xs.rows(0, n).into_owned();
    match max_violation(p, &x) {
        Some(v) if v < -1e-12 => Some(x),
        _ => None,
    }
}

/// Minimizes the program from `x0` (any point in the constraint domains).
pub fn solve<P: ConvexProgram + ?Sized>(p: &P, x0: DVector<f64>, opts: &BarrierOptions) -> BarrierResult {
    let Some(x) = find_feasible(p, x0.clone(), opts) else {
        return BarrierResult { x: x0, value: f64::INFINITY, status: Status::Infeasible };
    };
    if p.objective_value(&x).is_none() {
        return BarrierResult { x, value: f64::INFINITY, status: Status::Infeasible };
    }
    let x = run_barrier(p, x, opts, &|_| false);
    let value = p.objective_value(&x).unwrap_or(f64::INFINITY);
    BarrierResult { x, value, status: Status::Optimal }
}
