//! Finite-alphabet distributions and information measures.
//!
//! Discrete measures are reported in bits. The `*_nats` helpers work on raw
//! slices and are used by the solvers.

use crate::error::{invalid, Error, Result};
use crate::ext::ExtReal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::LN_2;

const MASS_TOL: f64 = 1e-9;

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy_nats(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// `Σ q ln(q/p)`, `+∞` when `q` charges a point `p` does not.
pub fn kl_nats(q: &[f64], p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in q.iter().zip(p) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            acc += a * (a / b).ln();
        }
    }
    acc.max(0.0)
}

/// Binary entropy in bits.
pub fn binary_entropy(q: f64) -> f64 {
    entropy_nats(&[q, 1.0 - q]) / LN_2
}

/// Binary divergence `D(Bern(q) ‖ Bern(p))` in bits.
pub fn binary_kl(q: f64, p: f64) -> ExtReal {
    ExtReal::from_f64(kl_nats(&[q, 1.0 - q], &[p, 1.0 - p]) / LN_2)
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return invalid("empty probability vector");
    }
    if let Some(v) = probs.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return invalid(format!("entry {v} is not a probability"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return invalid(format!("probabilities sum to {total}"));
    }
    Ok(())
}

fn normalized(mut probs: Vec<f64>) -> Vec<f64> {
    let total: f64 = probs.iter().sum();
    if total != 1.0 {
        probs.iter_mut().for_each(|v| *v /= total);
    }
    probs
}

/// A distribution on `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDist {
    probs: Vec<f64>,
}

impl FiniteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_probs(&probs)?;
        Ok(FiniteDist { probs: normalized(probs) })
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size >= 1);
        FiniteDist { probs: vec![1.0 / size as f64; size] }
    }

    pub fn point(size: usize, at: usize) -> Self {
        let mut probs = vec![0.0; size];
        probs[at] = 1.0;
        FiniteDist { probs }
    }

    /// `Bern(p)` as the distribution `(1-p, p)`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::new(vec![1.0 - p, p])
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entropy(&self) -> f64 {
        entropy(self)
    }
}

impl std::ops::Index<usize> for FiniteDist {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

/// Entropy in bits.
pub fn entropy(d: &FiniteDist) -> f64 {
    entropy_nats(&d.probs) / LN_2
}

/// Divergence `D(q ‖ p)` in bits.
pub fn kl_divergence(q: &FiniteDist, p: &FiniteDist) -> Result<ExtReal> {
    if q.alphabet_size() != p.alphabet_size() {
        return invalid(format!(
            "alphabet mismatch: {} vs {}",
            q.alphabet_size(),
            p.alphabet_size()
        ));
    }
    Ok(ExtReal::from_f64(kl_nats(&q.probs, &p.probs) / LN_2))
}

/// A channel: one output distribution per input symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct CondDist {
    rows: Vec<FiniteDist>,
}

impl CondDist {
    pub fn new(rows: Vec<FiniteDist>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return invalid("channel with no rows");
        };
        let m = first.alphabet_size();
        if rows.iter().any(|r| r.alphabet_size() != m) {
            return invalid("channel rows have different output sizes");
        }
        Ok(CondDist { rows })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(FiniteDist::new).collect::<Result<_>>()?)
    }

    pub fn identity(size: usize) -> Self {
        CondDist { rows: (0..size).map(|i| FiniteDist::point(size, i)).collect() }
    }

    /// Every input maps to the same output distribution.
    pub fn constant(input_size: usize, out: FiniteDist) -> Self {
        CondDist { rows: vec![out; input_size] }
    }

    pub fn input_size(&self) -> usize {
        self.rows.len()
    }

    pub fn output_size(&self) -> usize {
        self.rows[0].alphabet_size()
    }

    pub fn rows(&self) -> &[FiniteDist] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &FiniteDist {
        &self.rows[i]
    }

    pub fn prob(&self, input: usize, output: usize) -> f64 {
        self.rows[input].probs[output]
    }

    /// Output marginal under input distribution `p`.
    pub fn output_dist(&self, p: &FiniteDist) -> FiniteDist {
        let mut out = vec![0.0; self.output_size()];
        for (pi, row) in p.probs.iter().zip(&self.rows) {
            for (o, r) in out.iter_mut().zip(&row.probs) {
                *o += pi * r;
            }
        }
        FiniteDist { probs: normalized(out) }
    }
}

/// A joint distribution over 1 to 3 axes stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDist {
    axis_sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl JointDist {
    pub fn new(axis_sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if axis_sizes.is_empty() || axis_sizes.contains(&0) {
            return invalid(format!("bad axis sizes {axis_sizes:?}"));
        }
        let len: usize = axis_sizes.iter().product();
        if len != probs.len() {
            return invalid(format!("table has {} entries, axes need {len}", probs.len()));
        }
        check_probs(&probs)?;
        Ok(JointDist { axis_sizes, probs: normalized(probs) })
    }

    /// A two-axis joint from its rows.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged matrix");
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    /// Product distribution over independent factors.
    pub fn product(factors: &[&FiniteDist]) -> Self {
        let mut probs = vec![1.0];
        for f in factors {
            probs = probs.iter().flat_map(|a| f.probs.iter().map(move |b| a * b)).collect();
        }
        JointDist { axis_sizes: factors.iter().map(|f| f.alphabet_size()).collect(), probs }
    }

    pub fn axis_sizes(&self) -> &[usize] {
        &self.axis_sizes
    }

    pub fn num_axes(&self) -> usize {
        self.axis_sizes.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.axis_sizes.len());
        idx.iter().zip(&self.axis_sizes).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.probs[self.flat_index(idx)]
    }

    fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.axis_sizes.len()).rev() {
            out[a] = flat % self.axis_sizes[a];
            flat /= self.axis_sizes[a];
        }
    }

    fn check_axes(&self, axes: &[usize]) -> Result<()> {
        for (i, &a) in axes.iter().enumerate() {
            if a >= self.num_axes() || axes[..i].contains(&a) {
                return invalid(format!("bad axis list {axes:?}"));
            }
        }
        Ok(())
    }

    /// Marginal over `axes`, with axes in the order given.
    pub fn marginal(&self, axes: &[usize]) -> Result<JointDist> {
        self.check_axes(axes)?;
        if axes.is_empty() {
            return invalid("empty axis list");
        }
        let sizes: Vec<usize> = axes.iter().map(|&a| self.axis_sizes[a]).collect();
        let mut probs = vec![0.0; sizes.iter().product()];
        let mut idx = vec![0; self.num_axes()];
        for (flat, &p) in self.probs.iter().enumerate() {
            self.unflatten(flat, &mut idx);
            let target = axes.iter().zip(&sizes).fold(0, |acc, (&a, &n)| acc * n + idx[a]);
            probs[target] += p;
        }
        Ok(JointDist { axis_sizes: sizes, probs })
    }

    /// Single-axis marginal.
    pub fn marginal_dist(&self, axis: usize) -> FiniteDist {
        let m = self.marginal(&[axis]).expect("axis in range");
        FiniteDist { probs: m.probs }
    }

    /// Joint entropy of the given axes in bits; the empty set has entropy 0.
    pub fn entropy_of(&self, axes: &[usize]) -> Result<f64> {
        if axes.is_empty() {
            self.check_axes(axes)?;
            return Ok(0.0);
        }
        Ok(entropy_nats(&self.marginal(axes)?.probs) / LN_2)
    }

    /// `H(target | given)` in bits.
    pub fn conditional_entropy(&self, target: &[usize], given: &[usize]) -> Result<f64> {
        if target.iter().any(|t| given.contains(t)) {
            return invalid("target and conditioning axes overlap");
        }
        let union: Vec<usize> = target.iter().chain(given).copied().collect();
        Ok((self.entropy_of(&union)? - self.entropy_of(given)?).max(0.0))
    }

    /// `I(a; b)` in bits between two disjoint axis sets.
    pub fn mutual_information_between(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        if a.iter().any(|t| b.contains(t)) {
            return invalid("axis sets overlap");
        }
        let union: Vec<usize> = a.iter().chain(b).copied().collect();
        let i = self.entropy_of(a)? + self.entropy_of(b)? - self.entropy_of(&union)?;
        Ok(i.max(0.0))
    }

    /// `I(axis0; axis1)` for a two-axis joint.
    pub fn mutual_information(&self) -> Result<f64> {
        if self.num_axes() != 2 {
            return invalid("mutual_information needs exactly two axes");
        }
        self.mutual_information_between(&[0], &[1])
    }

    /// Splits into the marginal of `axis` and the conditional of the
    /// remaining axes (flattened row-major) given `axis`. Rows with zero
    /// conditioning mass are uniform.
    pub fn decompose(&self, axis: usize) -> Result<(FiniteDist, CondDist)> {
        self.check_axes(&[axis])?;
        let rest: Vec<usize> = (0..self.num_axes()).filter(|&a| a != axis).collect();
        let order: Vec<usize> = std::iter::once(axis).chain(rest.iter().copied()).collect();
        let permuted = self.permute(&order)?;
        let n = self.axis_sizes[axis];
        let m = permuted.probs.len() / n;
        let mut marg = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for chunk in permuted.probs.chunks(m) {
            let mass: f64 = chunk.iter().sum();
            marg.push(mass);
            let row = if mass > 0.0 {
                chunk.iter().map(|v| v / mass).collect()
            } else {
                vec![1.0 / m as f64; m]
            };
            rows.push(FiniteDist { probs: normalized(row) });
        }
        Ok((FiniteDist { probs: marg }, CondDist { rows }))
    }

    /// Reorders axes: axis `i` of the result is axis `order[i]` of `self`.
    pub fn permute(&self, order: &[usize]) -> Result<JointDist> {
        if order.len() != self.num_axes() {
            return invalid("permutation length mismatch");
        }
        self.marginal(order)
    }

    /// Appends a new last axis drawn through `ch` from axis `from`.
    pub fn with_channel(&self, from: usize, ch: &CondDist) -> Result<JointDist> {
        self.check_axes(&[from])?;
        if ch.input_size() != self.axis_sizes[from] {
            return invalid("channel input size does not match axis");
        }
        let m = ch.output_size();
        let mut probs = Vec::with_capacity(self.probs.len() * m);
        let mut idx = vec![0; self.num_axes()];
        for (flat, &p) in self.probs.iter().enumerate() {
            self.unflatten(flat, &mut idx);
            probs.extend(ch.rows[idx[from]].probs.iter().map(|w| p * w));
        }
        let mut sizes = self.axis_sizes.clone();
        sizes.push(m);
        Ok(JointDist { axis_sizes: sizes, probs })
    }

    /// `D(self ‖ other)` in bits.
    pub fn divergence(&self, other: &JointDist) -> Result<ExtReal> {
        if self.axis_sizes != other.axis_sizes {
            return invalid("joint divergence over different shapes");
        }
        Ok(ExtReal::from_f64(kl_nats(&self.probs, &other.probs) / LN_2))
    }

    /// Sup-norm distance between equal-shape tables.
    pub fn max_abs_diff(&self, other: &JointDist) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn to_nested(&self) -> serde_json::Value {
        fn build(sizes: &[usize], probs: &[f64]) -> serde_json::Value {
            if sizes.len() == 1 {
                return serde_json::json!(probs);
            }
            let stride = probs.len() / sizes[0];
            serde_json::Value::Array(probs.chunks(stride).map(|c| build(&sizes[1..], c)).collect())
        }
        build(&self.axis_sizes, &self.probs)
    }

    fn flatten_nested(v: &serde_json::Value, sizes: &[usize], out: &mut Vec<f64>) -> Result<()> {
        let bad = || Error::InvalidArgument("probs do not match axis_sizes".into());
        let arr = v.as_array().ok_or_else(bad)?;
        if arr.len() != sizes[0] {
            return Err(bad());
        }
        for item in arr {
            if sizes.len() == 1 {
                out.push(item.as_f64().ok_or_else(bad)?);
            } else {
                Self::flatten_nested(item, &sizes[1..], out)?;
            }
        }
        Ok(())
    }
}

/// `P × V`: the pair distribution `p(x) v(y|x)`.
pub fn compose(p: &FiniteDist, v: &CondDist) -> Result<JointDist> {
    if p.alphabet_size() != v.input_size() {
        return invalid("compose: input alphabet mismatch");
    }
    JointDist { axis_sizes: vec![p.alphabet_size()], probs: p.probs.clone() }.with_channel(0, v)
}

/// `decompose` as a free function.
pub fn decompose(j: &JointDist, axis: usize) -> Result<(FiniteDist, CondDist)> {
    j.decompose(axis)
}

/// `I(axis0; axis1)` in bits.
pub fn mutual_information(j: &JointDist) -> Result<f64> {
    j.mutual_information()
}

/// Type (empirical distribution) of one sequence.
pub fn empirical_type(seq: &[usize], size: usize) -> Result<FiniteDist> {
    let j = empirical_joint_type(&[seq], &[size])?;
    Ok(FiniteDist { probs: j.probs })
}

/// Joint type of aligned sequences.
pub fn empirical_joint_type(seqs: &[&[usize]], sizes: &[usize]) -> Result<JointDist> {
    let n = seqs.first().map_or(0, |s| s.len());
    if n == 0 || seqs.len() != sizes.len() {
        return invalid("need one or more non-empty sequences with matching alphabet sizes");
    }
    if seqs.iter().any(|s| s.len() != n) {
        return invalid("sequence length mismatch");
    }
    let mut counts = vec![0usize; sizes.iter().product()];
    for i in 0..n {
        let mut flat = 0;
        for (s, &m) in seqs.iter().zip(sizes) {
            if s[i] >= m {
                return invalid(format!("symbol {} outside alphabet of size {m}", s[i]));
            }
            flat = flat * m + s[i];
        }
        counts[flat] += 1;
    }
    let probs = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(JointDist { axis_sizes: sizes.to_vec(), probs })
}

impl Serialize for FiniteDist {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.probs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FiniteDist {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        FiniteDist::new(Vec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl Serialize for CondDist {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CondDist {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        CondDist::new(Vec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct JointRepr {
    axis_sizes: Vec<usize>,
    probs: serde_json::Value,
}

impl Serialize for JointDist {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        JointRepr { axis_sizes: self.axis_sizes.clone(), probs: self.to_nested() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for JointDist {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = JointRepr::deserialize(d)?;
        if repr.axis_sizes.is_empty() || repr.axis_sizes.contains(&0) {
            return Err(serde::de::Error::custom("bad axis_sizes"));
        }
        let mut flat = Vec::new();
        JointDist::flatten_nested(&repr.probs, &repr.axis_sizes, &mut flat)
            .map_err(serde::de::Error::custom)?;
        JointDist::new(repr.axis_sizes, flat).map_err(serde::de::Error::custom)
    }
}
