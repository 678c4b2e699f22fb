//! Grid resolutions and deterministic simplex enumeration.

use crate::error::{invalid, Result};
use crate::info::FiniteDist;
use serde::{Deserialize, Serialize};

/// Discretization used by the nested optimizations.
///
/// `resolution` is the denominator for outer marginal grids and
/// `channel_resolution` the denominator for every conditional row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: usize,
    pub channel_resolution: usize,
    pub refine_rounds: usize,
    pub refine_shrink: f64,
    pub strict_eps: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: 16,
            channel_resolution: 8,
            refine_rounds: 2,
            refine_shrink: 0.2,
            strict_eps: 1e-9,
        }
    }
}

impl GridSpec {
    pub fn new(resolution: usize, channel_resolution: usize) -> Self {
        GridSpec { resolution, channel_resolution, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 1 || self.channel_resolution < 1 {
            return invalid("grid resolution must be at least 1");
        }
        if !(self.refine_shrink > 0.0 && self.refine_shrink < 1.0) {
            return invalid("refine_shrink must lie in (0,1)");
        }
        if !(self.strict_eps > 0.0) {
            return invalid("strict_eps must be positive");
        }
        Ok(())
    }
}

/// All compositions of `k` into `size` non-negative parts, lexicographically.
pub fn compositions(size: usize, k: usize) -> Vec<Vec<usize>> {
    assert!(size >= 1);
    fn rec(size: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if size == 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=k {
            prefix.push(first);
            rec(size - 1, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(size, k, &mut Vec::with_capacity(size), &mut out);
    out
}

/// Every distribution on `size` symbols with entries in `{0, 1/k, .., 1}`.
pub fn enumerate_simplex(size: usize, k: usize) -> Vec<FiniteDist> {
    assert!(k >= 1);
    compositions(size, k)
        .into_iter()
        .map(|c| {
            FiniteDist::new(c.iter().map(|&v| v as f64 / k as f64).collect())
                .expect("grid point is a distribution")
        })
        .collect()
}

/// Mixed-radix counter over `radices`, first digit slowest.
pub fn for_each_index(radices: &[usize], mut f: impl FnMut(&[usize])) {
    if radices.contains(&0) {
        return;
    }
    let mut idx = vec![0; radices.len()];
    loop {
        f(&idx);
        let mut pos = radices.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < radices[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Channel grid up to relabeling of outputs.
///
/// Rows with `active[i]` range over the `k`-grid of distributions on
/// `out` symbols; inactive rows are uniform. Only channels whose output
/// columns, restricted to active rows, are in non-increasing lexicographic
/// order are produced, one per orbit of output permutations. Each channel is
/// returned flattened row-major.
pub fn canonical_channels(active: &[bool], out: usize, k: usize) -> Vec<Vec<f64>> {
    let comps = compositions(out, k);
    let rows: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
    let mut result = Vec::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(rows.len());
    fn rec(
        depth: usize,
        rows: &[usize],
        comps: &[Vec<usize>],
        tied: Vec<bool>,
        chosen: &mut Vec<usize>,
        emit: &mut dyn FnMut(&[usize]),
    ) {
        if depth == rows.len() {
            emit(chosen);
            return;
        }
        for (ci, c) in comps.iter().enumerate() {
            if (0..tied.len()).any(|j| tied[j] && c[j] < c[j + 1]) {
                continue;
            }
            let next: Vec<bool> = (0..tied.len()).map(|j| tied[j] && c[j] == c[j + 1]).collect();
            chosen.push(ci);
            rec(depth + 1, rows, comps, next, chosen, emit);
            chosen.pop();
        }
    }
    let n_in = active.len();
    let mut emit = |sel: &[usize]| {
        let mut flat = vec![1.0 / out as f64; n_in * out];
        for (&r, &ci) in rows.iter().zip(sel) {
            for (j, &c) in comps[ci].iter().enumerate() {
                flat[r * out + j] = c as f64 / k as f64;
            }
        }
        result.push(flat);
    };
    rec(0, &rows, &comps, vec![true; out.saturating_sub(1)], &mut chosen, &mut emit);
    result
}

/// Binomial coefficient as f64.
/// Points `center + m·step·(e_i − e_j)` for `m = 1..=reach` that stay in
/// the simplex, in a fixed order. Coordinates where `fixed[i]` is set never
/// move.
pub fn local_lattice(center: &[f64], fixed: &[bool], step: f64, reach: usize) -> Vec<Vec<f64>> {
    let n = center.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || fixed[i] || fixed[j] {
                continue;
            }
            for m in 1..=reach {
                let d = m as f64 * step;
                if center[j] - d < -1e-12 {
                    break;
                }
                let mut p = center.to_vec();
                p[i] += d;
                p[j] = (p[j] - d).max(0.0);
                out.push(p);
            }
        }
    }
    out
}

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k.min(n - k)).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
