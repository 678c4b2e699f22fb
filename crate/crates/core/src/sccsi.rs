//! Exponent bounds for lossless source coding with a coded helper.
//!
//! The encoder of `X` sends `R1` bits per symbol, a helper observing `Y`
//! sends `R2`. `eta_lower` is the achievable exponent game, `eta_upper` the
//! converse with a Markov auxiliary, `eta_sp` the sphere-packing bound.

use crate::convex::line::bisect;
use crate::convex::simplex::{Block, EntropyExpr, SimplexProgram};
use crate::error::{invalid, Result};
use crate::ext::ExtReal;
use crate::grid::{canonical_channels, enumerate_simplex, GridSpec};
use crate::info::{entropy_nats, kl_nats, CondDist, FiniteDist, JointDist};
use crate::report::{ExponentReport, Witness};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::LN_2;

/// Helper alphabet cap used when `s_size` is not given.
pub const DEFAULT_S_CAP: usize = 4;
/// Slack when comparing a computed information quantity with a rate.
const RATE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SccsiProblem {
    /// Joint source law with axes `(X, Y)`.
    pub p_xy: JointDist,
    pub r1: f64,
    pub r2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_size: Option<usize>,
}

impl SccsiProblem {
    pub fn new(p_xy: JointDist, r1: f64, r2: f64, s_size: Option<usize>) -> Result<Self> {
        let p = SccsiProblem { p_xy, r1, r2, s_size };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_xy.num_axes() != 2 {
            return invalid("p_xy must have two axes");
        }
        if !(self.r1 >= 0.0 && self.r2 >= 0.0) {
            return invalid("rates must be non-negative");
        }
        if self.s_size == Some(0) {
            return invalid("s_size must be at least 1");
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        self.p_xy.axis_sizes()[0]
    }

    pub fn ny(&self) -> usize {
        self.p_xy.axis_sizes()[1]
    }

    /// Explicit `s_size`, else `|X||Y| + |Y| + 2` capped at [`DEFAULT_S_CAP`].
    pub fn s_size(&self) -> usize {
        self.s_size.unwrap_or_else(|| (self.nx() * self.ny() + self.ny() + 2).min(DEFAULT_S_CAP))
    }

    pub fn strictly_positive(&self) -> bool {
        self.p_xy.probs().iter().all(|&p| p > 0.0)
    }
}

/// Source law split as `P_Y` and the rows `P_{X|y}`.
struct Source {
    nx: usize,
    ny: usize,
    p_y: Vec<f64>,
    p_x_given_y: Vec<Vec<f64>>,
}

impl Source {
    fn new(p_xy: &JointDist) -> Self {
        let (p_y, cond) = p_xy.decompose(1).expect("two-axis joint");
        Source {
            nx: p_xy.axis_sizes()[0],
            ny: p_xy.axis_sizes()[1],
            p_y: p_y.probs().to_vec(),
            p_x_given_y: cond.rows().iter().map(|r| r.probs().to_vec()).collect(),
        }
    }
}

/// `(I(Y;S), H(S))` in nats for `Q_Y` and a flat channel.
fn helper_information(q_y: &[f64], ch: &[f64], ns: usize) -> (f64, f64) {
    let mut q_s = vec![0.0; ns];
    let mut h_s_given_y = 0.0;
    for (y, &w) in q_y.iter().enumerate() {
        if w > 0.0 {
            let row = &ch[y * ns..(y + 1) * ns];
            for (a, b) in q_s.iter_mut().zip(row) {
                *a += w * b;
            }
            h_s_given_y += w * entropy_nats(row);
        }
    }
    let h_s = entropy_nats(&q_s);
    ((h_s - h_s_given_y).max(0.0), h_s)
}

/// `H(X|S)` in bits for `Q_XY` (flat `x*ny + y`) passed through `Q_{S|Y}`.
fn markov_h_x_given_s(q_xy: &[f64], ch: &[f64], nx: usize, ny: usize, ns: usize) -> f64 {
    let mut q_xs = vec![0.0; nx * ns];
    let mut q_s = vec![0.0; ns];
    for x in 0..nx {
        for y in 0..ny {
            let w = q_xy[x * ny + y];
            if w > 0.0 {
                for s in 0..ns {
                    let v = w * ch[y * ns + s];
                    q_xs[x * ns + s] += v;
                    q_s[s] += v;
                }
            }
        }
    }
    ((entropy_nats(&q_xs) - entropy_nats(&q_s)) / LN_2).max(0.0)
}

fn channel_dist(ch: &[f64], ns: usize) -> CondDist {
    CondDist::from_rows(ch.chunks(ns).map(<[f64]>::to_vec).collect()).expect("grid channel")
}

/// Admissible canonical channels for the active-row pattern of `q_y`.
struct ChannelCache {
    ns: usize,
    k: usize,
    by_pattern: HashMap<Vec<bool>, Vec<Vec<f64>>>,
}

impl ChannelCache {
    fn new(ns: usize, k: usize) -> Self {
        ChannelCache { ns, k, by_pattern: HashMap::new() }
    }

    fn get(&mut self, q_y: &[f64]) -> &[Vec<f64>] {
        let pattern: Vec<bool> = q_y.iter().map(|&v| v > 0.0).collect();
        let (ns, k) = (self.ns, self.k);
        self.by_pattern.entry(pattern.clone()).or_insert_with(|| canonical_channels(&pattern, ns, k))
    }
}

/// `D(Q_XYS ‖ P_XY·Q_{S|Y}) + penalty` in bits, or `+∞` when `H(Q_X) < r1`.
///
/// The penalty is `[r1 + r2 − H(X|S) − I(Y;S)]⁺` when `I(Y;S) >= r2`, else
/// `[r1 − H(X|S)]⁺`. `q_xys` has axes `(X, Y, S)`.
pub fn lower_objective(p_xy: &JointDist, r1: f64, r2: f64, q_xys: &JointDist) -> Result<ExtReal> {
    if q_xys.num_axes() != 3 || q_xys.axis_sizes()[..2] != *p_xy.axis_sizes() {
        return invalid("q_xys must have axes (X, Y, S) matching p_xy");
    }
    if q_xys.entropy_of(&[0])? < r1 - RATE_SLACK {
        return Ok(ExtReal::INFINITY);
    }
    let (_, s_given_y) = q_xys.marginal(&[1, 2])?.decompose(0)?;
    let reference = p_xy.with_channel(1, &s_given_y)?;
    let d = q_xys.divergence(&reference)?;
    let i_ys = q_xys.mutual_information_between(&[1], &[2])?;
    let h_x_s = q_xys.conditional_entropy(&[0], &[2])?;
    let pen = if i_ys >= r2 { r1 + r2 - h_x_s - i_ys } else { r1 - h_x_s };
    Ok(d + pen.max(0.0))
}

/// `D(Q_XY ‖ P_XY)` in bits for the `(X, Y)` marginal of `q`.
pub fn upper_objective(p_xy: &JointDist, q: &JointDist) -> Result<ExtReal> {
    let q_xy = if q.num_axes() == 2 { q.clone() } else { q.marginal(&[0, 1])? };
    q_xy.divergence(p_xy)
}

/// `inf { D(Q‖P) : H(Q) >= r1 }` in bits.
///
/// The minimizer lies on the tilted family `Q ∝ P^β`, `β ∈ [0, 1]`, whose
/// entropy decreases in `β`; `β` is found by bisection.
pub fn point_to_point_exponent(p_x: &FiniteDist, r1: f64) -> ExtReal {
    let p = p_x.probs();
    if r1 <= p_x.entropy() {
        return ExtReal::ZERO;
    }
    let support = p.iter().filter(|&&v| v > 0.0).count() as f64;
    if r1 > support.log2() + RATE_SLACK {
        return ExtReal::INFINITY;
    }
    let tilt = |beta: f64| -> Vec<f64> {
        let w: Vec<f64> = p.iter().map(|&v| if v > 0.0 { v.powf(beta) } else { 0.0 }).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    };
    let h = |beta: f64| entropy_nats(&tilt(beta)) / LN_2 - r1;
    let beta = if h(0.0) <= 0.0 { 0.0 } else { bisect(h, 0.0, 1.0, 1e-15) };
    // Bisection ends inside a 1e-15 bracket; step to its feasible side.
    let mut b = beta;
    while b > 0.0 && h(b) < 0.0 {
        b = (b - 1e-15).max(0.0);
    }
    ExtReal::from_f64(kl_nats(&tilt(b), p) / LN_2)
}

struct LowerEval {
    value: ExtReal,
    joint: Option<JointDist>,
    refined: bool,
}

/// Innermost step of `eta_lower` for fixed `Q_Y` and channel.
fn lower_inner(src: &Source, prob: &SccsiProblem, q_y: &[f64], ch: &[f64], ns: usize) -> LowerEval {
    let (nx, ny) = (src.nx, src.ny);
    let (i_ys, h_s) = helper_information(q_y, ch, ns);
    let i_bits = i_ys / LN_2;
    let c_bits = if i_bits >= prob.r2 { prob.r1 + prob.r2 - i_bits } else { prob.r1 };

    let mut blocks = Vec::with_capacity(ny * ns);
    for y in 0..ny {
        for s in 0..ns {
            blocks.push(Block { weight: q_y[y] * ch[y * ns + s], reference: src.p_x_given_y[y].clone() });
        }
    }
    let mut program = SimplexProgram::new(blocks);
    let off = |y: usize, s: usize| (y * ns + s) * nx;
    let hx: Vec<Vec<(usize, f64)>> = (0..nx)
        .map(|x| {
            (0..ny)
                .flat_map(|y| (0..ns).map(move |s| (y, s)))
                .map(|(y, s)| (off(y, s) + x, q_y[y] * ch[y * ns + s]))
                .collect()
        })
        .collect();
    let hxs: Vec<Vec<(usize, f64)>> = (0..nx)
        .flat_map(|x| (0..ns).map(move |s| (x, s)))
        .map(|(x, s)| (0..ny).map(|y| (off(y, s) + x, q_y[y] * ch[y * ns + s])).collect())
        .collect();
    program.add_entropy_lower_bound(EntropyExpr::new().with(1.0, hx), prob.r1 * LN_2);
    program.set_penalty(EntropyExpr::new().with(1.0, hxs), c_bits * LN_2 + h_s);

    let build = |v: &[f64]| -> JointDist {
        let mut probs = vec![0.0; nx * ny * ns];
        for x in 0..nx {
            for y in 0..ny {
                for s in 0..ns {
                    probs[(x * ny + y) * ns + s] = q_y[y] * ch[y * ns + s] * v[off(y, s) + x];
                }
            }
        }
        JointDist::new(vec![nx, ny, ns], probs).expect("valid joint")
    };
    let eval = |joint: &JointDist| lower_objective(&JointDist::from_parts(src), prob.r1, prob.r2, joint).expect("shape");

    let start = program.reference_point();
    if program.violation(&start) <= 0.0 && program.penalty_value(&start) == 0.0 {
        let joint = build(&start);
        return LowerEval { value: eval(&joint), joint: Some(joint), refined: false };
    }
    match program.solve(&start) {
        Some(v) => {
            let joint = build(&v);
            LowerEval { value: eval(&joint), joint: Some(joint), refined: true }
        }
        None => LowerEval { value: ExtReal::INFINITY, joint: None, refined: true },
    }
}

impl JointDist {
    fn from_parts(src: &Source) -> JointDist {
        let mut probs = vec![0.0; src.nx * src.ny];
        for y in 0..src.ny {
            for x in 0..src.nx {
                probs[x * src.ny + y] = src.p_y[y] * src.p_x_given_y[y][x];
            }
        }
        JointDist::new(vec![src.nx, src.ny], probs).expect("source law")
    }
}

/// Visiting order for an outer infimum: by a lower bound, then index.
fn order_by(bounds: &[ExtReal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bounds.len()).collect();
    order.sort_by(|&a, &b| bounds[a].cmp(&bounds[b]).then(a.cmp(&b)));
    order
}

/// Whether a candidate `(value, idx)` cannot beat the incumbent under
/// "smallest value, then smallest index" ordering.
fn cannot_beat(value: ExtReal, idx: usize, best: Option<(ExtReal, usize)>) -> bool {
    match best {
        None => false,
        Some((bv, bi)) => value > bv || (value == bv && idx > bi),
    }
}

/// Achievable exponent: inf over `Q_Y`, sup over `Q_{S|Y}`, inf over
/// `Q_{X|YS}` with `H(Q_X) >= r1` of the divergence plus the rate penalty.
pub fn eta_lower(prob: &SccsiProblem, grid: &GridSpec) -> Result<ExponentReport> {
    prob.validate()?;
    grid.validate()?;
    let (nx, ny, ns) = (prob.nx(), prob.ny(), prob.s_size());
    if prob.r1 >= (nx as f64).log2() {
        return Ok(ExponentReport::infinite(grid));
    }
    let src = Source::new(&prob.p_xy);
    let qys = enumerate_simplex(ny, grid.resolution);
    let d_y: Vec<ExtReal> =
        qys.iter().map(|q| ExtReal::from_f64(kl_nats(q.probs(), &src.p_y) / LN_2)).collect();
    let mut cache = ChannelCache::new(ns, grid.channel_resolution);
    let mut best: Option<(ExtReal, usize)> = None;
    let mut best_report = ExponentReport::infinite(grid);
    for idx in order_by(&d_y) {
        // Every channel value is at least D(Q_Y ‖ P_Y).
        if d_y[idx].is_infinite() || cannot_beat(d_y[idx], idx, best) {
            continue;
        }
        let q_y = qys[idx].probs();
        let mut sup: Option<(ExtReal, Witness, bool)> = None;
        let mut pruned = false;
        for ch in cache.get(q_y) {
            let e = lower_inner(&src, prob, q_y, ch, ns);
            if sup.as_ref().map_or(true, |(v, _, _)| e.value > *v) {
                let witness = Witness {
                    q_y: Some(qys[idx].clone()),
                    channel: Some(channel_dist(ch, ns)),
                    joint: e.joint,
                    ..Default::default()
                };
                sup = Some((e.value, witness, e.refined));
            }
            if cannot_beat(e.value, idx, best) {
                pruned = true;
                break;
            }
        }
        if pruned {
            continue;
        }
        if let Some((value, witness, refined)) = sup {
            best = Some((value, idx));
            best_report = ExponentReport { value, witness, grid_used: *grid, refined };
        }
    }
    Ok(best_report)
}

/// Grid points of the joint simplex with their divergence from `P_XY`.
struct JointGrid {
    points: Vec<Vec<f64>>,
    divergence: Vec<ExtReal>,
    marginal_index: Vec<usize>,
}

impl JointGrid {
    fn new(p_xy: &JointDist, k: usize) -> Self {
        let (nx, ny) = (p_xy.axis_sizes()[0], p_xy.axis_sizes()[1]);
        let points: Vec<Vec<f64>> =
            enumerate_simplex(nx * ny, k).into_iter().map(|d| d.probs().to_vec()).collect();
        let divergence = points.iter().map(|q| ExtReal::from_f64(kl_nats(q, p_xy.probs()) / LN_2)).collect();
        let qys = enumerate_simplex(ny, k);
        let marginal_index = points
            .iter()
            .map(|q| {
                let counts: Vec<usize> =
                    (0..ny).map(|y| ((0..nx).map(|x| q[x * ny + y]).sum::<f64>() * k as f64).round() as usize).collect();
                qys.iter()
                    .position(|d| d.probs().iter().zip(&counts).all(|(p, &c)| (p * k as f64).round() as usize == c))
                    .expect("marginal on grid")
            })
            .collect();
        JointGrid { points, divergence, marginal_index }
    }
}

fn markov_joint(q_xy: &[f64], ch: &[f64], nx: usize, ny: usize, ns: usize) -> JointDist {
    let mut probs = vec![0.0; nx * ny * ns];
    for x in 0..nx {
        for y in 0..ny {
            for s in 0..ns {
                probs[(x * ny + y) * ns + s] = q_xy[x * ny + y] * ch[y * ns + s];
            }
        }
    }
    JointDist::new(vec![nx, ny, ns], probs).expect("valid joint")
}

/// Converse exponent: inf over `Q_Y`, sup over `Q_{S|Y}` with
/// `I(Y;S) <= r2`, inf over `Q_{X|Y}` with `H(X|S) >= r1 + strict_eps` of
/// `D(Q_XY ‖ P_XY)`, where `X – Y – S`. The inner infimum is the smaller of
/// the best joint-grid seed and a convex refinement, so on a shared grid the
/// result never exceeds [`eta_sp`].
pub fn eta_upper(prob: &SccsiProblem, grid: &GridSpec) -> Result<ExponentReport> {
    prob.validate()?;
    grid.validate()?;
    if !prob.strictly_positive() {
        return invalid("eta_upper requires P_XY(x,y) > 0 for every pair");
    }
    let (nx, ny, ns) = (prob.nx(), prob.ny(), prob.s_size());
    let thr = prob.r1 + grid.strict_eps;
    if thr > (nx as f64).log2() {
        return Ok(ExponentReport::infinite(grid));
    }
    let src = Source::new(&prob.p_xy);
    let jg = JointGrid::new(&prob.p_xy, grid.resolution);
    let qys = enumerate_simplex(ny, grid.resolution);
    let d_y: Vec<ExtReal> =
        qys.iter().map(|q| ExtReal::from_f64(kl_nats(q.probs(), &src.p_y) / LN_2)).collect();
    let mut cache = ChannelCache::new(ns, grid.channel_resolution);
    let mut best: Option<(ExtReal, usize)> = None;
    let mut best_report = ExponentReport::infinite(grid);
    for idx in order_by(&d_y) {
        if cannot_beat(d_y[idx], idx, best) {
            continue;
        }
        let q_y = qys[idx].probs();
        let mut seeds: Vec<usize> = (0..jg.points.len()).filter(|&i| jg.marginal_index[i] == idx).collect();
        seeds.sort_by(|&a, &b| jg.divergence[a].cmp(&jg.divergence[b]).then(a.cmp(&b)));
        let mut sup: Option<(ExtReal, Witness, bool)> = None;
        let mut pruned = false;
        for ch in cache.get(q_y) {
            let (i_ys, h_s) = helper_information(q_y, ch, ns);
            if i_ys / LN_2 > prob.r2 + RATE_SLACK {
                continue;
            }
            let (value, q_xy, refined) = upper_inner(&src, q_y, ch, ns, thr, h_s, d_y[idx], &jg, &seeds);
            if sup.as_ref().map_or(true, |(v, _, _)| value > *v) {
                let witness = Witness {
                    q_y: Some(qys[idx].clone()),
                    channel: Some(channel_dist(ch, ns)),
                    joint: q_xy.map(|q| markov_joint(&q, ch, nx, ny, ns)),
                    ..Default::default()
                };
                sup = Some((value, witness, refined));
            }
            if cannot_beat(value, idx, best) {
                pruned = true;
                break;
            }
        }
        if pruned {
            continue;
        }
        if let Some((value, witness, refined)) = sup {
            best = Some((value, idx));
            best_report = ExponentReport { value, witness, grid_used: *grid, refined };
        }
    }
    Ok(best_report)
}

#[allow(clippy::too_many_arguments)]
fn upper_inner(
    src: &Source,
    q_y: &[f64],
    ch: &[f64],
    ns: usize,
    thr: f64,
    h_s: f64,
    d_y: ExtReal,
    jg: &JointGrid,
    seeds: &[usize],
) -> (ExtReal, Option<Vec<f64>>, bool) {
    let (nx, ny) = (src.nx, src.ny);
    let feasible = |q: &[f64]| markov_h_x_given_s(q, ch, nx, ny, ns) >= thr;
    let mut best: (ExtReal, Option<Vec<f64>>, bool) = (ExtReal::INFINITY, None, false);
    if let Some(&i) = seeds.iter().find(|&&i| feasible(&jg.points[i])) {
        best = (jg.divergence[i], Some(jg.points[i].clone()), false);
    }
    if best.0 == d_y {
        return best;
    }
    let blocks: Vec<Block> =
        (0..ny).map(|y| Block { weight: q_y[y], reference: src.p_x_given_y[y].clone() }).collect();
    let mut program = SimplexProgram::new(blocks);
    let hxs: Vec<Vec<(usize, f64)>> = (0..nx)
        .flat_map(|x| (0..ns).map(move |s| (x, s)))
        .map(|(x, s)| (0..ny).map(|y| (y * nx + x, q_y[y] * ch[y * ns + s])).collect())
        .collect();
    program.add_entropy_lower_bound(EntropyExpr::new().with(1.0, hxs), thr * LN_2 + h_s);
    let to_joint = |v: &[f64]| -> Vec<f64> {
        let mut q = vec![0.0; nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                q[x * ny + y] = q_y[y] * v[y * nx + x];
            }
        }
        q
    };
    let start = program.reference_point();
    let candidate = if program.violation(&start) <= 0.0 { Some(start) } else { program.solve(&start) };
    if let Some(v) = candidate {
        let q = to_joint(&v);
        if feasible(&q) {
            let value = ExtReal::from_f64(kl_nats(&q, &joint_flat(src)) / LN_2);
            if value < best.0 {
                best = (value, Some(q), true);
            }
        }
    }
    best
}

fn joint_flat(src: &Source) -> Vec<f64> {
    JointDist::from_parts(src).probs().to_vec()
}

/// Sphere-packing bound: the smallest `D(Q_XY ‖ P_XY)` over grid `Q_XY`
/// such that every grid channel with `I(Y;S) <= r2` leaves
/// `H(X|S) >= r1 + strict_eps`.
pub fn eta_sp(prob: &SccsiProblem, grid: &GridSpec) -> Result<ExponentReport> {
    prob.validate()?;
    grid.validate()?;
    let (nx, ny, ns) = (prob.nx(), prob.ny(), prob.s_size());
    let thr = prob.r1 + grid.strict_eps;
    let jg = JointGrid::new(&prob.p_xy, grid.resolution);
    let qys = enumerate_simplex(ny, grid.resolution);
    let mut cache = ChannelCache::new(ns, grid.channel_resolution);
    let mut order: Vec<usize> = (0..jg.points.len()).collect();
    order.sort_by(|&a, &b| jg.divergence[a].cmp(&jg.divergence[b]).then(a.cmp(&b)));
    for i in order {
        if jg.divergence[i].is_infinite() {
            break;
        }
        let q = &jg.points[i];
        let q_y = qys[jg.marginal_index[i]].probs();
        let blocked = cache.get(q_y).iter().any(|ch| {
            let (i_ys, _) = helper_information(q_y, ch, ns);
            i_ys / LN_2 <= prob.r2 + RATE_SLACK && markov_h_x_given_s(q, ch, nx, ny, ns) < thr
        });
        if !blocked {
            let joint = JointDist::new(vec![nx, ny], q.clone())?;
            return Ok(ExponentReport {
                value: jg.divergence[i],
                witness: Witness { joint: Some(joint), ..Default::default() },
                grid_used: *grid,
                refined: false,
            });
        }
    }
    Ok(ExponentReport::infinite(grid))
}
