//! The Wyner-Ziv scheme: per-type covering codebooks, binning, minimum
//! conditional-empirical-entropy decoding and symbolwise reproduction.

use super::seq::{check_shape, conditional_entropy_bits, counts, joint_counts, unpack};
use super::{argmin_random, bins_if, count_parallel, Book, BookSpec, ChannelPicker, SimSource, TrialStats};
use crate::error::{invalid, Result};
use crate::grid::compositions;
use crate::wz::{DistortionTable, ReproductionFn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A sampled Wyner-Ziv code at one blocklength. The same reproduction map
/// serves every pair of types.
#[derive(Debug, Clone)]
pub struct WzCode {
    n: usize,
    rate: f64,
    delta: f64,
    dist: DistortionTable,
    f: ReproductionFn,
    nx: usize,
    ny: usize,
    nz: usize,
    books: BTreeMap<Vec<usize>, Book>,
}

/// Result of one Wyner-Ziv block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WzOutcome {
    pub xhat: Vec<usize>,
    pub distortion: f64,
    pub violation: bool,
}

impl WzCode {
    pub fn build(
        src: &SimSource,
        rate: f64,
        delta: f64,
        dist: &DistortionTable,
        picker: &ChannelPicker,
        f: &ReproductionFn,
    ) -> Result<Self> {
        src.validate()?;
        dist.validate()?;
        if !(rate >= 0.0 && rate.is_finite() && delta.is_finite()) {
            return invalid("rate must be finite and non-negative, delta finite");
        }
        let (n, nx, ny, nz) = (src.n, src.nx(), src.ny(), f.z_size);
        check_shape(n, &[nx, ny, nz])?;
        if f.y_size != ny || dist.source_size() != nx {
            return invalid("reproduction map or distortion table does not match the source alphabets");
        }
        if f.table.iter().any(|&h| h >= dist.reproduction_size()) {
            return invalid("reproduction map leaves the distortion table's alphabet");
        }
        let channel = picker.channel(nx, nz)?;
        let mut books = BTreeMap::new();
        for (k, c) in compositions(nx, n).into_iter().enumerate() {
            let spec = BookSpec {
                n,
                in_counts: &c,
                in_size: nx,
                out_size: nz,
                channel: &channel,
                master: src.master_seed,
                label: "wz",
                index: k as u64,
            };
            let book = Book::build(&spec, |m| bins_if((m as f64).log2() >= n as f64 * rate, n, rate))?;
            books.insert(c, book);
        }
        Ok(WzCode { n, rate, delta, dist: dist.clone(), f: f.clone(), nx, ny, nz, books })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Whether every codebook is indexed one-to-one.
    pub fn injective(&self) -> bool {
        self.books.values().all(|b| b.bins.is_none())
    }

    /// `(X type, codebook size, I(Q_X; Q*_{Z|X}) in bits)` per type.
    pub fn book_sizes(&self) -> Vec<(Vec<usize>, usize, f64)> {
        self.books.iter().map(|(c, b)| (c.clone(), b.words.len(), b.i_bits)).collect()
    }

    /// Codebook brackets and the indexing rule, per type.
    pub fn invariants_hold(&self) -> bool {
        self.books.values().all(|b| {
            let m = b.words.len() as f64;
            b.in_bracket(self.n, self.nx, self.nz) && (m.log2() < self.n as f64 * self.rate) == b.bins.is_none()
        })
    }

    fn round(&self, x: &[usize], y: &[usize], rng: &mut ChaCha8Rng) -> WzOutcome {
        let book = &self.books[&counts(x, self.nx)];
        let z = book.quantize(x, self.nx, self.nz, rng);
        let i = book.index_of(z);
        let cands: Vec<Vec<usize>> = book.candidates(i).into_iter().map(|w| unpack(w, self.nz, self.n)).collect();
        let idx: Vec<usize> = (0..cands.len()).collect();
        let score = |k: usize| conditional_entropy_bits(&joint_counts(&cands[k], y, self.nz, self.ny), self.nz, self.ny, self.n);
        let zhat = &cands[argmin_random(&idx, score, rng).expect("received bin holds the sent codeword")];
        let xhat: Vec<usize> = y.iter().zip(zhat).map(|(&b, &c)| self.f.apply(b, c)).collect();
        let distortion = x.iter().zip(&xhat).map(|(&a, &h)| self.dist.get(a, h)).sum::<f64>() / self.n as f64;
        WzOutcome { xhat, distortion, violation: distortion > self.delta }
    }

    fn check_input(&self, x: &[usize], y: &[usize]) -> Result<()> {
        if x.len() != self.n || y.len() != self.n {
            return invalid(format!("sequences must have length {}", self.n));
        }
        if x.iter().any(|&s| s >= self.nx) || y.iter().any(|&s| s >= self.ny) {
            return invalid("sequence symbol outside its alphabet");
        }
        Ok(())
    }
}

/// One encode/decode pass. Quantizer draws and tie-breaks use `seed`.
pub fn wz_round(code: &WzCode, x: &[usize], y: &[usize], seed: u64) -> Result<WzOutcome> {
    code.check_input(x, y)?;
    Ok(code.round(x, y, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Frequency of distortion violations over `trials` i.i.d. blocks.
pub fn run_wz_trials(src: &SimSource, code: &WzCode, trials: u64) -> Result<TrialStats> {
    if trials == 0 {
        return invalid("trials must be at least 1");
    }
    if src.n != code.n || src.nx() != code.nx || src.ny() != code.ny {
        return invalid("source and code disagree on blocklength or alphabets");
    }
    let errors = count_parallel(trials, |t| {
        let mut rng = src.trial_rng("wz-trial", t);
        let (x, y) = src.sample(&mut rng);
        code.round(&x, &y, &mut rng).violation
    });
    TrialStats::new(src.n, trials, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erasure::{erasure_channel, erasure_distortion, natural_f, source_joint};
    use crate::info::JointDist;
    use crate::sim::seq::{codebook_bracket, conditional_entropy_set, pack};

    fn be_source(n: usize, seed: u64) -> SimSource {
        SimSource::new(source_joint(0.5), n, seed).unwrap()
    }

    fn be_code(src: &SimSource, rate: f64, delta: f64, erasure: f64) -> WzCode {
        let picker = ChannelPicker::Fixed(erasure_channel(erasure));
        WzCode::build(src, rate, delta, &erasure_distortion(100.0), &picker, &natural_f()).unwrap()
    }

    #[test]
    fn full_rate_is_injective() {
        let src = be_source(8, 1);
        let code = be_code(&src, 3.0, 0.15, 0.25);
        assert!(code.injective());
        assert!(code.invariants_hold());
    }

    #[test]
    fn brackets_hold_for_every_type() {
        let src = be_source(8, 4);
        let code = be_code(&src, 0.425, 0.15, 0.25);
        assert!(code.invariants_hold());
        for (_, m, i) in code.book_sizes() {
            let (lo, hi) = codebook_bracket(8, i, 2, 3);
            assert!(lo <= m as f64 && m as f64 <= hi);
        }
    }

    #[test]
    fn same_seed_same_code_and_trials() {
        let src = be_source(6, 8);
        let a = be_code(&src, 0.425, 0.15, 0.25);
        let b = be_code(&src, 0.425, 0.15, 0.25);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(run_wz_trials(&src, &a, 300).unwrap(), run_wz_trials(&src, &b, 300).unwrap());
    }

    #[test]
    fn typical_erasure_block_meets_distortion() {
        // p = 0.5, δ = 0.25 and a jointly nominal (x, y, z): both sides are
        // erased on n/8 positions, so the distortion is pδ = 0.125 < Δ.
        let src = be_source(8, 2);
        let mut code = be_code(&src, 3.0, 0.15, 0.25);
        // X = ±1 as indices 0/1; Y and Z ternary with 1 = erasure.
        let x = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let y = vec![0, 0, 1, 1, 2, 2, 1, 1];
        let z = vec![1, 0, 0, 0, 2, 2, 1, 2];
        let book = code.books.get_mut(&vec![4, 4]).unwrap();
        book.set_words(vec![pack(&z, 3)], 3, 8);
        for seed in 0..20 {
            let out = wz_round(&code, &x, &y, seed).unwrap();
            assert!(!out.violation, "distortion {}", out.distortion);
            assert!((out.distortion - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn loose_distortion_never_violates() {
        let src = be_source(6, 3);
        let code = be_code(&src, 0.2, 100.0, 0.5);
        assert_eq!(run_wz_trials(&src, &code, 300).unwrap().errors, 0);
    }

    #[test]
    fn lower_conditional_entropy_impostor_wins() {
        let p = JointDist::from_matrix(&[vec![0.45, 0.05], vec![0.05, 0.45]]).unwrap();
        let src = SimSource::new(p, 4, 0).unwrap();
        let ident = ChannelPicker::Fixed(crate::info::CondDist::identity(2));
        let f = ReproductionFn::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        let mut code = WzCode::build(&src, 0.0, 0.0, &DistortionTable::hamming(2), &ident, &f).unwrap();
        let x = vec![1, 1, 0, 0];
        let y = vec![1, 0, 1, 0];
        let impostor = vec![1, 0, 1, 0];
        let book = code.books.get_mut(&vec![2, 2]).unwrap();
        book.set_words(vec![pack(&x, 2), pack(&impostor, 2)], 2, 4);
        book.bins = Some(vec![0; 2]);
        book.by_bin = BTreeMap::from([(0, vec![pack(&x, 2), pack(&impostor, 2)])]);
        let out = wz_round(&code, &x, &y, 1).unwrap();
        assert_eq!(out.xhat, impostor);
        assert!(out.violation);
    }

    #[test]
    fn conditional_entropy_set_bound_on_sampled_pairs() {
        let src = be_source(8, 6);
        for t in 0..50 {
            let (x, y) = src.sample(&mut src.trial_rng("entropy-set", t));
            let (count, bound) = conditional_entropy_set(&x, &y, 2, 3);
            assert!(count <= bound);
        }
    }
}
