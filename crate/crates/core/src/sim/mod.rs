//! Type-class codes for the helper and Wyner-Ziv problems, with Monte Carlo
//! error estimation.
//!
//! Codes operate type by type. Codebooks are drawn uniformly from marginal
//! type classes and indexed (or randomly binned) per type; decoders search
//! the received bins for the minimum empirical-entropy candidate. All
//! randomness comes from seeds derived from one master seed.

mod sccsi;
mod seq;
mod stats;
mod wz;

pub use sccsi::{run_sccsi_trials, sccsi_round, SccsiCode};
pub use seq::{
    child_seed, codebook_bracket, codebook_size, conditional_entropy_set, joint_entropy_set, multinomial,
    round_conditional, MAX_ALPHABET, MAX_BLOCKLENGTH, MAX_CODEBOOK, MAX_TYPE_CLASS,
};
pub use stats::{empirical_exponent, wilson, EmpiricalExponent, TrialStats};
pub use wz::{run_wz_trials, wz_round, WzCode, WzOutcome};

use crate::error::{invalid, Result};
use crate::info::{CondDist, FiniteDist, JointDist};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use seq::{bin_count, flatten, mutual_information_bits, pack, rng_for, sample_type_member, unpack};
use std::collections::BTreeMap;

/// A memoryless pair source at a fixed blocklength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSource {
    pub p_xy: JointDist,
    pub n: usize,
    pub master_seed: u64,
}

impl SimSource {
    pub fn new(p_xy: JointDist, n: usize, master_seed: u64) -> Result<Self> {
        let s = SimSource { p_xy, n, master_seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_xy.num_axes() != 2 {
            return invalid("source must be a joint over (X, Y)");
        }
        seq::check_shape(self.n, self.p_xy.axis_sizes())
    }

    pub fn nx(&self) -> usize {
        self.p_xy.axis_sizes()[0]
    }

    pub fn ny(&self) -> usize {
        self.p_xy.axis_sizes()[1]
    }

    /// Draws `(xⁿ, yⁿ)` i.i.d. from the source.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
        let w = WeightedIndex::new(self.p_xy.probs()).expect("joint has positive mass");
        let ny = self.ny();
        (0..self.n).map(|_| w.sample(rng)).map(|k| (k / ny, k % ny)).unzip()
    }

    pub(crate) fn trial_rng(&self, label: &str, t: u64) -> ChaCha8Rng {
        rng_for(self.master_seed, label, t)
    }
}

/// How a code picks its test channel for each type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "channel", rename_all = "snake_case")]
pub enum ChannelPicker {
    /// Every row uniform over the codeword alphabet.
    Uniform,
    /// The same channel for every type, such as an exponent report's witness.
    Fixed(CondDist),
}

impl ChannelPicker {
    pub(crate) fn channel(&self, input: usize, output: usize) -> Result<CondDist> {
        match self {
            ChannelPicker::Uniform => Ok(CondDist::constant(input, FiniteDist::uniform(output))),
            ChannelPicker::Fixed(c) => {
                if c.input_size() != input || c.output_size() != output {
                    return invalid(format!(
                        "test channel is {}x{}, expected {input}x{output}",
                        c.input_size(),
                        c.output_size()
                    ));
                }
                Ok(c.clone())
            }
        }
    }

    /// Channel from an exponent witness when present, else uniform.
    pub fn from_witness(channel: Option<&CondDist>) -> Self {
        channel.map_or(ChannelPicker::Uniform, |c| ChannelPicker::Fixed(c.clone()))
    }
}

/// Random codebook for one input type, with its quantizer and index map.
#[derive(Debug, Clone)]
pub(crate) struct Book {
    /// Conditional type `n(v, w)` of codeword given input.
    pub cond: Vec<Vec<usize>>,
    pub i_bits: f64,
    /// Codewords as drawn, with repeats.
    pub words: Vec<u32>,
    /// Distinct codewords, sorted.
    pub unique: Vec<u32>,
    /// `unique`, unpacked.
    pub seqs: Vec<Vec<usize>>,
    /// Each drawn codeword as a position in `unique`.
    pub word_ids: Vec<usize>,
    /// Bin of each distinct codeword; `None` when indexing is one-to-one.
    pub bins: Option<Vec<u64>>,
    pub by_bin: BTreeMap<u64, Vec<u32>>,
}

pub(crate) struct BookSpec<'a> {
    pub n: usize,
    pub in_counts: &'a [usize],
    pub in_size: usize,
    pub out_size: usize,
    pub channel: &'a CondDist,
    pub master: u64,
    pub label: &'a str,
    pub index: u64,
}

impl Book {
    /// Draws the codebook; `binning(m)` returns the bin count when a book of
    /// `m` words must be binned.
    pub fn build(spec: &BookSpec, binning: impl Fn(usize) -> Option<u64>) -> Result<Book> {
        let cond = round_conditional(spec.in_counts, spec.channel);
        let i_bits = mutual_information_bits(&flatten(&cond), spec.in_size, spec.out_size, spec.n);
        let m = codebook_size(spec.n, i_bits, spec.in_size, spec.out_size)?;
        let mut out_counts = vec![0; spec.out_size];
        for row in &cond {
            for (w, &c) in row.iter().enumerate() {
                out_counts[w] += c;
            }
        }
        let mut rng = rng_for(spec.master, &format!("{}-book", spec.label), spec.index);
        let words: Vec<u32> =
            (0..m).map(|_| pack(&sample_type_member(&out_counts, &mut rng), spec.out_size)).collect();
        let mut unique = words.clone();
        unique.sort_unstable();
        unique.dedup();
        let seqs = unique.iter().map(|&w| unpack(w, spec.out_size, spec.n)).collect();
        let word_ids = words.iter().map(|w| unique.binary_search(w).expect("drawn word is listed")).collect();
        let mut by_bin = BTreeMap::new();
        let bins = binning(m).map(|count| {
            let mut rng = rng_for(spec.master, &format!("{}-bins", spec.label), spec.index);
            let bins: Vec<u64> = unique.iter().map(|_| rng.gen_range(0..count)).collect();
            for (&w, &b) in unique.iter().zip(&bins) {
                by_bin.entry(b).or_insert_with(Vec::new).push(w);
            }
            bins
        });
        Ok(Book { cond, i_bits, words, unique, seqs, word_ids, bins, by_bin })
    }

    /// Picks a codeword in the conditional type class of `v` if the book has
    /// one (repeats weigh proportionally), else any codeword.
    pub fn quantize(&self, v: &[usize], in_size: usize, out_size: usize, rng: &mut ChaCha8Rng) -> u32 {
        let target = flatten(&self.cond);
        let matches: Vec<bool> = self.seqs.iter().map(|s| joint_type_is(v, s, in_size, out_size, &target)).collect();
        let good: Vec<usize> = self.word_ids.iter().copied().filter(|&k| matches[k]).collect();
        let k = if good.is_empty() { self.word_ids[rng.gen_range(0..self.word_ids.len())] } else { good[rng.gen_range(0..good.len())] };
        self.unique[k]
    }

    /// Replaces the codewords and drops any binning.
    #[cfg(test)]
    pub fn set_words(&mut self, words: Vec<u32>, out_size: usize, n: usize) {
        let mut unique = words.clone();
        unique.sort_unstable();
        unique.dedup();
        self.seqs = unique.iter().map(|&w| unpack(w, out_size, n)).collect();
        self.word_ids = words.iter().map(|w| unique.binary_search(w).expect("listed")).collect();
        self.words = words;
        self.unique = unique;
        self.bins = None;
        self.by_bin.clear();
    }

    pub fn index_of(&self, w: u32) -> u64 {
        let pos = self.unique.binary_search(&w).expect("codeword belongs to the book");
        self.bins.as_ref().map_or(pos as u64, |b| b[pos])
    }

    /// Distinct codewords carrying index `i`.
    pub fn candidates(&self, i: u64) -> Vec<u32> {
        match &self.bins {
            None => self.unique.get(i as usize).map(|&w| vec![w]).unwrap_or_default(),
            Some(_) => self.by_bin.get(&i).cloned().unwrap_or_default(),
        }
    }

    pub fn in_bracket(&self, n: usize, in_size: usize, out_size: usize) -> bool {
        let (lo, hi) = codebook_bracket(n, self.i_bits, in_size, out_size);
        let m = self.words.len() as f64;
        lo <= m && m <= hi
    }
}

fn joint_type_is(a: &[usize], b: &[usize], sa: usize, sb: usize, target: &[usize]) -> bool {
    let mut c = [0usize; MAX_ALPHABET * MAX_ALPHABET];
    for (&u, &w) in a.iter().zip(b) {
        c[u * sb + w] += 1;
    }
    c[..sa * sb] == *target
}

/// Uniform choice among the minimizers of `score` (ties within tolerance).
pub(crate) fn argmin_random<T: Copy>(items: &[T], score: impl Fn(T) -> f64, rng: &mut ChaCha8Rng) -> Option<T> {
    let scores: Vec<f64> = items.iter().map(|&t| score(t)).collect();
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let ties: Vec<T> = items.iter().zip(&scores).filter(|(_, &s)| s <= best + seq::TIE_TOL).map(|(&t, _)| t).collect();
    (!ties.is_empty()).then(|| ties[rng.gen_range(0..ties.len())])
}

pub(crate) fn bins_if(binned: bool, n: usize, rate: f64) -> Option<u64> {
    binned.then(|| bin_count(n, rate))
}

/// Runs `trials` independent trials across threads; each trial's outcome
/// depends only on its index.
pub(crate) fn count_parallel(trials: u64, trial: impl Fn(u64) -> bool + Sync) -> u64 {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(trials.max(1) as usize) as u64;
    let chunk = trials.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| {
                let trial = &trial;
                s.spawn(move || (k * chunk..((k + 1) * chunk).min(trials)).filter(|&t| trial(t)).count() as u64)
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("trial thread panicked")).sum()
    })
}
