//! Binary-erasure Wyner-Ziv instance.
//!
//! `X` is uniform on `{−1, +1}`, `Y` is `X` through an erasure channel with
//! probability `p`, and the test channel is an erasure channel with
//! probability `δ`. Symbols are indexed by `value + 1` on the ternary
//! alphabets and `(value + 1) / 2` on the source alphabet.

use crate::convex::simplex::{Block, EntropyExpr, SimplexProgram};
use crate::convex::tilt::{i_projection, Moment, TiltCell};
use crate::error::{invalid, Result};
use crate::ext::ExtReal;
use crate::grid::GridSpec;
use crate::info::{binary_kl, entropy_nats, kl_nats, CondDist, JointDist};
use crate::wz::{DistortionTable, ReproductionFn};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

/// Source symbols in index order.
pub const SOURCE: [i8; 2] = [-1, 1];
/// Side-information, auxiliary and reproduction symbols in index order.
pub const TERNARY: [i8; 3] = [-1, 0, 1];

fn t_index(v: i8) -> usize {
    (v + 1) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeConfig {
    pub p: f64,
    pub delta_target: f64,
    pub kappa: f64,
    pub rate: f64,
    pub dgrid: f64,
    #[serde(default)]
    pub inner_grid: GridSpec,
}

impl Default for BeConfig {
    fn default() -> Self {
        BeConfig { p: 0.5, delta_target: 0.15, kappa: 100.0, rate: 0.425, dgrid: 0.005, inner_grid: GridSpec::default() }
    }
}

impl BeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return invalid("p must lie in (0, 1)");
        }
        if !(self.delta_target > 0.0 && self.delta_target < 1.0) {
            return invalid("delta_target must lie in (0, 1)");
        }
        if !(self.kappa > 1.0 && self.kappa.is_finite()) {
            return invalid("kappa must be finite and greater than 1");
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return invalid("rate must lie in (0, 1]");
        }
        if !(self.dgrid > 0.0 && self.dgrid <= 1.0) {
            return invalid("dgrid must lie in (0, 1]");
        }
        self.inner_grid.validate()
    }

    pub fn with_rate(&self, rate: f64) -> Self {
        BeConfig { rate, ..self.clone() }
    }

    /// Erasure-channel test-channel grid `0, dgrid, 2·dgrid, ..., 1`.
    pub fn deltas(&self) -> Vec<f64> {
        let n = (1.0 / self.dgrid).round() as usize;
        (0..=n).map(|i| ((i as f64 * self.dgrid).min(1.0) * 1e12).round() / 1e12).collect()
    }
}

/// The reproduction rule: `1` if `z = 1` or `y = 1`, `0` if both are
/// erased, `−1` otherwise.
pub fn natural_f() -> ReproductionFn {
    let mut table = vec![0; 9];
    for y in TERNARY {
        for z in TERNARY {
            let out = if z == 1 || y == 1 {
                1
            } else if z == 0 && y == 0 {
                0
            } else {
                -1
            };
            table[t_index(y) * 3 + t_index(z)] = t_index(out);
        }
    }
    ReproductionFn { y_size: 3, z_size: 3, table }
}

/// Erasure distortion with sign errors charged `kappa`.
pub fn erasure_distortion(kappa: f64) -> DistortionTable {
    let table = SOURCE
        .iter()
        .map(|&x| {
            TERNARY
                .iter()
                .map(|&h| {
                    if h == x {
                        0.0
                    } else if h == 0 {
                        1.0
                    } else {
                        kappa
                    }
                })
                .collect()
        })
        .collect();
    DistortionTable { table }
}

/// Erasure channel from `{−1, +1}` to `{−1, 0, +1}`.
pub fn erasure_channel(erasure: f64) -> CondDist {
    let rows = SOURCE
        .iter()
        .map(|&x| {
            let mut r = vec![0.0; 3];
            r[t_index(x)] = 1.0 - erasure;
            r[t_index(0)] += erasure;
            r
        })
        .collect();
    CondDist::from_rows(rows).expect("erasure channel rows are distributions")
}

/// Joint law of `(X, Y)` with uniform `X` and erasure probability `p`.
pub fn source_joint(p: f64) -> JointDist {
    JointDist::product(&[&crate::info::FiniteDist::uniform(2)]).with_channel(0, &erasure_channel(p)).expect("shapes agree")
}

/// Per-cell data for a fixed erasure test channel.
struct Cells {
    weights: Vec<f64>,
    references: Vec<Vec<f64>>,
    moments: Vec<Vec<f64>>,
}

impl Cells {
    fn new(erasure: f64, cfg: &BeConfig) -> Self {
        let ch = erasure_channel(erasure);
        let py = erasure_channel(cfg.p);
        let f = natural_f();
        let d = erasure_distortion(cfg.kappa);
        let mut weights = Vec::with_capacity(6);
        let mut references = Vec::with_capacity(6);
        let mut moments = Vec::with_capacity(6);
        for x in 0..2 {
            for z in 0..3 {
                weights.push(0.5 * ch.prob(x, z));
                references.push(py.row(x).probs().to_vec());
                moments.push((0..3).map(|y| d.get(x, f.apply(y, z))).collect());
            }
        }
        Cells { weights, references, moments }
    }

    fn tilt(&self) -> Vec<TiltCell<'_>> {
        (0..6)
            .map(|c| TiltCell { weight: self.weights[c], reference: &self.references[c], moment: &self.moments[c] })
            .collect()
    }

    fn expected_distortion(&self, rows: &[Vec<f64>]) -> f64 {
        (0..6).map(|c| self.weights[c] * rows[c].iter().zip(&self.moments[c]).map(|(a, b)| a * b).sum::<f64>()).sum()
    }

    fn divergence(&self, rows: &[Vec<f64>]) -> f64 {
        (0..6).filter(|&c| self.weights[c] > 0.0).map(|c| self.weights[c] * kl_nats(&rows[c], &self.references[c])).sum()
    }

    /// `H(Z|Y)` in nats.
    fn h_z_given_y(&self, rows: &[Vec<f64>]) -> f64 {
        let mut q_yz = vec![0.0; 9];
        for c in 0..6 {
            for y in 0..3 {
                q_yz[y * 3 + c % 3] += self.weights[c] * rows[c][y];
            }
        }
        let q_y: Vec<f64> = (0..3).map(|y| q_yz[y * 3..y * 3 + 3].iter().sum()).collect();
        entropy_nats(&q_yz) - entropy_nats(&q_y)
    }

    fn h_z(&self) -> f64 {
        let q_z: Vec<f64> = (0..3).map(|z| (0..2).map(|x| self.weights[x * 3 + z]).sum()).collect();
        entropy_nats(&q_z)
    }
}

fn check_erasure(erasure: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&erasure) {
        return invalid("test-channel erasure probability must lie in [0, 1]");
    }
    Ok(())
}

/// Distortion-error exponent in bits: the cheapest deviation of `Q_{Y|XZ}`
/// that pushes `E d` to at least `Δ`.
pub fn g1(erasure: f64, cfg: &BeConfig) -> Result<ExtReal> {
    check_erasure(erasure)?;
    cfg.validate()?;
    let cells = Cells::new(erasure, cfg);
    Ok(i_projection(&cells.tilt(), None, Moment::AtLeast(cfg.delta_target))
        .map_or(ExtReal::INFINITY, |s| ExtReal::from_f64((s.divergence / LN_2).max(0.0))))
}

/// Binning-error exponent in bits: `min D + [R − I(X;Z) + I(Y;Z)]⁺` over
/// couplings with `E d <= Δ`; `+∞` when `I(X;Z) = 1 − δ < R`.
pub fn g2(erasure: f64, cfg: &BeConfig) -> Result<ExtReal> {
    check_erasure(erasure)?;
    cfg.validate()?;
    let i_xz = 1.0 - erasure;
    if i_xz < cfg.rate {
        return Ok(ExtReal::INFINITY);
    }
    let cells = Cells::new(erasure, cfg);
    // Penalty argument in nats: a − H(Z|Y) with a = (R − I(X;Z)) + H(Z).
    let offset = (cfg.rate - i_xz) * LN_2 + cells.h_z();
    let value = |rows: &[Vec<f64>]| cells.divergence(rows) + (offset - cells.h_z_given_y(rows)).max(0.0);

    let Some(start) = i_projection(&cells.tilt(), None, Moment::AtMost(cfg.delta_target)) else {
        return Ok(ExtReal::INFINITY);
    };
    let mut best = value(&start.rows);
    if best > start.divergence {
        let blocks: Vec<Block> =
            (0..6).map(|c| Block { weight: cells.weights[c], reference: cells.references[c].clone() }).collect();
        let mut prog = SimplexProgram::new(blocks);
        let ed_terms = (0..6).flat_map(|c| (0..3).map(move |y| (c * 3 + y, c))).map(|(i, c)| (i, cells.weights[c] * cells.moments[c][i % 3])).collect();
        prog.add_inequality(ed_terms, cfg.delta_target);
        let yz = (0..9)
            .map(|o| {
                let (y, z) = (o / 3, o % 3);
                (0..2).map(|x| ((x * 3 + z) * 3 + y, cells.weights[x * 3 + z])).collect()
            })
            .collect();
        let y_only = (0..3).map(|y| (0..6).map(|c| (c * 3 + y, cells.weights[c])).collect()).collect();
        prog.set_penalty(EntropyExpr::new().with(1.0, yz).with(-1.0, y_only), offset);
        if let Some(v) = prog.solve(&start.rows.concat()) {
            let rows: Vec<Vec<f64>> = v.chunks(3).map(<[f64]>::to_vec).collect();
            if cells.expected_distortion(&rows) <= cfg.delta_target + 1e-9 {
                best = best.min(value(&rows));
            }
        }
        best = best.min(symmetric_seed(&cells, cfg, &value));
    }
    Ok(ExtReal::from_f64((best / LN_2).max(0.0)))
}

/// Best coupling on the sign-symmetric grid: the erased-`Z` cells share one
/// `Y`-erasure probability and the unerased cells share another.
fn symmetric_seed(cells: &Cells, cfg: &BeConfig, value: &dyn Fn(&[Vec<f64>]) -> f64) -> f64 {
    let k = cfg.inner_grid.resolution;
    let mut best = f64::INFINITY;
    for a in 0..=k {
        for b in 0..=k {
            let (qa, qb) = (a as f64 / k as f64, b as f64 / k as f64);
            let rows: Vec<Vec<f64>> = (0..6)
                .map(|c| {
                    let (x, z) = (SOURCE[c / 3], TERNARY[c % 3]);
                    let e = if z == 0 { qa } else { qb };
                    let mut r = vec![0.0; 3];
                    r[t_index(x)] = 1.0 - e;
                    r[t_index(0)] += e;
                    r
                })
                .collect();
            if cells.expected_distortion(&rows) <= cfg.delta_target {
                best = best.min(value(&rows));
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub g1: ExtReal,
    pub g2: ExtReal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeExponent {
    pub value: ExtReal,
    pub argmax_delta: f64,
    pub curve: Vec<CurvePoint>,
}

/// `sup_δ min(G1, G2)` over the `dgrid` scan; ties go to the smallest `δ`.
pub fn be_exponent(cfg: &BeConfig) -> Result<BeExponent> {
    cfg.validate()?;
    let mut curve = Vec::new();
    let mut best: Option<(ExtReal, f64)> = None;
    for delta in cfg.deltas() {
        let (a, b) = (g1(delta, cfg)?, g2(delta, cfg)?);
        let v = a.min(b);
        if best.map_or(true, |(bv, _)| v > bv) {
            best = Some((v, delta));
        }
        curve.push(CurvePoint { delta, g1: a, g2: b });
    }
    let (value, argmax_delta) = best.expect("scan is non-empty");
    Ok(BeExponent { value, argmax_delta, curve })
}

/// Exponent with side information at both ends, in bits: `D(R + Δ ‖ p)`,
/// and zero at or below the rate-distortion function.
pub fn two_sided_exponent(rate: f64, cfg: &BeConfig) -> Result<ExtReal> {
    let q = rate + cfg.delta_target;
    if !(0.0..=1.0).contains(&q) {
        return invalid("rate + delta must lie in [0, 1]");
    }
    if rate <= cfg.p - cfg.delta_target {
        return Ok(ExtReal::ZERO);
    }
    Ok(binary_kl(q, cfg.p))
}

/// `[p − Δ]⁺` in bits.
pub fn rd_function(delta_target: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta_target) || !(0.0..=1.0).contains(&p) {
        return invalid("inputs must lie in [0, 1]");
    }
    Ok((p - delta_target).max(0.0))
}

/// `be_exponent` value for each penalty `kappa`.
pub fn kappa_sweep(cfg: &BeConfig, kappas: &[f64]) -> Result<Vec<(f64, ExtReal)>> {
    kappas.iter().map(|&k| Ok((k, be_exponent(&BeConfig { kappa: k, ..cfg.clone() })?.value))).collect()
}

/// Default penalties for the sensitivity sweep.
pub const KAPPA_SWEEP: [f64; 3] = [20.0, 100.0, 500.0];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::for_each_index;
    use crate::info::binary_entropy;
    use crate::wz::{g_d, rwz, theta_upper, WzProblem};

    fn default_instance() -> BeConfig {
        BeConfig::default()
    }

    #[test]
    fn natural_f_table() {
        let f = natural_f();
        assert_eq!(f.apply(t_index(0), t_index(1)), t_index(1));
        assert_eq!(f.apply(t_index(0), t_index(0)), t_index(0));
        assert_eq!(f.apply(t_index(-1), t_index(0)), t_index(-1));
        assert_eq!(f.apply(t_index(1), t_index(-1)), t_index(1));
    }

    #[test]
    fn nominal_joint_has_zero_g_d() {
        let cfg = BeConfig { rate: 0.425, ..default_instance() };
        let p = source_joint(cfg.p);
        let ch = erasure_channel(0.5);
        let q = p.with_channel(0, &ch).unwrap();
        let v = g_d(&q, &p, &ch, &natural_f(), &erasure_distortion(cfg.kappa), cfg.delta_target, cfg.rate).unwrap();
        assert_eq!(v, ExtReal::ZERO);
        // Nominal mutual informations used below.
        assert!((q.mutual_information_between(&[1], &[2]).unwrap() - 0.25).abs() < 1e-12);
        assert!((q.mutual_information_between(&[0], &[2]).unwrap() - 0.5).abs() < 1e-12);
    }

    /// `δ·D(Δ/δ ‖ p)` for `Δ <= δ <= Δ/p`.
    fn g1_closed_form(delta: f64, cfg: &BeConfig) -> ExtReal {
        if delta < cfg.delta_target {
            return ExtReal::INFINITY;
        }
        let q = cfg.delta_target / delta;
        if q <= cfg.p {
            return ExtReal::ZERO;
        }
        binary_kl(q, cfg.p).scale(delta)
    }

    /// Exhaustive grid over the four free coupling rows (erasure
    /// probabilities of `Y` per `(x, z)` cell with positive weight).
    fn grid_oracle(delta: f64, cfg: &BeConfig, k: usize, branch_one: bool) -> f64 {
        let cells = Cells::new(delta, cfg);
        let offset = (cfg.rate - (1.0 - delta)) * LN_2 + cells.h_z();
        let mut best = f64::INFINITY;
        for_each_index(&[k + 1; 4], |idx| {
            let mut rows = cells.references.clone();
            let mut slot = 0;
            for c in 0..6 {
                let (x, z) = (SOURCE[c / 3], TERNARY[c % 3]);
                if z == -x {
                    continue;
                }
                let e = idx[slot] as f64 / k as f64;
                slot += 1;
                rows[c] = vec![0.0; 3];
                rows[c][t_index(x)] = 1.0 - e;
                rows[c][t_index(0)] += e;
            }
            let ed = cells.expected_distortion(&rows);
            let d = cells.divergence(&rows);
            let v = if branch_one {
                (ed >= cfg.delta_target).then_some(d)
            } else {
                (ed <= cfg.delta_target).then(|| d + (offset - cells.h_z_given_y(&rows)).max(0.0))
            };
            if let Some(v) = v {
                best = best.min(v);
            }
        });
        best / LN_2
    }

    /// Fine grid over sign-symmetric couplings: one `Y`-erasure probability
    /// for erased-`Z` cells and one for the rest.
    fn symmetric_oracle(delta: f64, cfg: &BeConfig, k: usize) -> f64 {
        let cells = Cells::new(delta, cfg);
        let offset = (cfg.rate - (1.0 - delta)) * LN_2 + cells.h_z();
        let mut best = f64::INFINITY;
        for a in 0..=k {
            for b in 0..=k {
                let rows: Vec<Vec<f64>> = (0..6)
                    .map(|c| {
                        let (x, z) = (SOURCE[c / 3], TERNARY[c % 3]);
                        let e = if z == 0 { a } else { b } as f64 / k as f64;
                        let mut r = vec![0.0; 3];
                        r[t_index(x)] = 1.0 - e;
                        r[t_index(0)] += e;
                        r
                    })
                    .collect();
                if cells.expected_distortion(&rows) <= cfg.delta_target {
                    best = best.min(cells.divergence(&rows) + (offset - cells.h_z_given_y(&rows)).max(0.0));
                }
            }
        }
        best / LN_2
    }

    #[test]
    fn g1_matches_closed_form_and_grid() {
        let cfg = default_instance();
        assert!(g1(0.0, &cfg).unwrap().is_infinite());
        assert_eq!(g1(0.3, &cfg).unwrap(), ExtReal::ZERO);
        assert_eq!(g1(0.9, &cfg).unwrap(), ExtReal::ZERO);
        for i in 0..10 {
            let delta = 0.15 + 0.015 * i as f64;
            let v = g1(delta, &cfg).unwrap();
            let closed = g1_closed_form(delta, &cfg);
            assert!((v.to_f64() - closed.to_f64()).abs() < 1e-9, "{delta}: {v} vs {closed}");
        }
        // Grid oracle at k = 24 on grid-representable optima (Δ/δ on the lattice).
        for delta in [0.18, 0.225] {
            let v = g1(delta, &cfg).unwrap().to_f64();
            let grid = grid_oracle(delta, &cfg, 24, true);
            assert!((v - grid).abs() < 1e-6, "{delta}: {v} vs {grid}");
        }
        let v = g1(0.2, &cfg).unwrap().to_f64();
        assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn g2_examples() {
        let cfg = default_instance();
        assert!(g2(0.5, &cfg.with_rate(0.6)).unwrap().is_infinite());
        let v = g2(0.5, &cfg).unwrap().to_f64();
        assert!(v > 0.0 && v.is_finite());
        let grid = grid_oracle(0.5, &cfg, 24, false);
        assert!(v <= grid + 1e-9 && grid - v < 2e-2, "{v} vs {grid}");
        let fine = symmetric_oracle(0.5, &cfg, 1500);
        assert!(v <= fine + 1e-9 && fine - v < 1e-4, "{v} vs {fine}");
    }

    #[test]
    fn g2_nominal_coupling_when_distortion_met() {
        // Small p makes the nominal law meet the budget: value is the bracket.
        let cfg = BeConfig { p: 0.2, delta_target: 0.15, rate: 0.3, ..default_instance() };
        let delta = 0.6;
        assert!(cfg.p * delta < cfg.delta_target);
        let nominal_iyz = (1.0 - cfg.p) * (1.0 - delta);
        let expected = (cfg.rate - (1.0 - delta) + nominal_iyz).max(0.0);
        let v = g2(delta, &cfg).unwrap().to_f64();
        // The bracket at the nominal law bounds the optimum from above.
        assert!(v <= expected + 1e-9);
        let grid = grid_oracle(delta, &cfg, 24, false);
        assert!(v <= grid + 1e-9 && grid - v < 2e-2, "{v} vs {grid}");
        let fine = symmetric_oracle(delta, &cfg, 1500);
        assert!(v <= fine + 1e-9 && fine - v < 1e-4, "{v} vs {fine}");
    }

    #[test]
    fn kappa_has_no_effect_on_natural_f() {
        let a = BeConfig { kappa: 20.0, ..default_instance() };
        let b = BeConfig { kappa: 500.0, ..default_instance() };
        for delta in [0.2, 0.5, 0.7] {
            assert_eq!(g1(delta, &a).unwrap(), g1(delta, &b).unwrap());
            let (ga, gb) = (g2(delta, &a).unwrap(), g2(delta, &b).unwrap());
            assert!(ga == gb || (ga.to_f64() - gb.to_f64()).abs() < 1e-9, "{ga} vs {gb}");
        }
    }

    #[test]
    fn two_sided_examples() {
        let cfg = default_instance();
        assert_eq!(two_sided_exponent(0.35, &cfg).unwrap(), ExtReal::ZERO);
        let v = two_sided_exponent(0.425, &cfg).unwrap().to_f64();
        let oracle = 0.575 * (0.575f64 / 0.5).log2() + 0.425 * (0.425f64 / 0.5).log2();
        assert!((v - oracle).abs() < 1e-12 && (v - 0.0162917).abs() < 1e-7);
        let full = two_sided_exponent(0.85, &cfg).unwrap().to_f64();
        assert!((full - 1.0).abs() < 1e-12);
        assert!(two_sided_exponent(0.9, &cfg).is_err());
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rd_examples() {
        assert_eq!(rd_function(0.6, 0.5).unwrap(), 0.0);
        assert!((rd_function(0.15, 0.5).unwrap() - 0.35).abs() < 1e-15);
        assert_eq!(rd_function(0.0, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn be_exponent_default_instance() {
        let cfg = default_instance();
        let e = be_exponent(&cfg).unwrap();
        let at = e.curve.iter().find(|c| c.delta == e.argmax_delta).unwrap();
        assert_eq!(e.value, at.g1.min(at.g2));
        assert!(e.value.is_finite() && e.value > ExtReal::ZERO);
        assert!(e.argmax_delta > 0.15 && e.argmax_delta < 0.3, "{}", e.argmax_delta);
        assert!(e.value.to_f64() <= two_sided_exponent(cfg.rate, &cfg).unwrap().to_f64() + 1e-9);
    }

    #[test]
    fn be_exponent_below_rd_is_zero() {
        let cfg = BeConfig { dgrid: 0.01, ..default_instance() }.with_rate(0.3);
        assert!(be_exponent(&cfg).unwrap().value.to_f64() < 1e-9);
    }

    #[test]
    fn rwz_approaches_rd_function() {
        let cfg = default_instance();
        let p = source_joint(cfg.p);
        let r = rwz(&p, cfg.delta_target, &erasure_distortion(1000.0), 3, &GridSpec::new(16, 8)).unwrap();
        assert!((r - 0.35).abs() < 5e-3, "{r}");
    }

    #[test]
    fn theta_upper_be_instance() {
        let cfg = default_instance();
        let prob =
            WzProblem::new(source_joint(cfg.p), cfg.rate, cfg.delta_target, erasure_distortion(cfg.kappa), None).unwrap();
        let v = theta_upper(&prob, &GridSpec::new(16, 4)).unwrap().to_f64();
        let two = two_sided_exponent(cfg.rate, &cfg).unwrap().to_f64();
        assert!(v > 0.0 && v.is_finite());
        assert!((v - two).abs() < 0.01, "{v} vs {two}");
    }
}
