//! The helper scheme: type-indexed binning of `X`, quantize-and-bin of `Y`,
//! minimum joint-empirical-entropy decoding.

use super::seq::{budget, check_shape, entropy_bits, joint_counts, multinomial, pack, rng_for, unpack, MAX_TYPE_CLASS};
use super::{argmin_random, bins_if, count_parallel, Book, BookSpec, ChannelPicker, SimSource, TrialStats};
use crate::error::{invalid, Result};
use crate::grid::compositions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
struct XClass {
    /// Members of the type class, packed and sorted.
    members: Vec<u32>,
    bins: Option<Vec<u64>>,
    by_bin: BTreeMap<u64, Vec<u32>>,
}

impl XClass {
    fn index_of(&self, x: u32) -> u64 {
        let pos = self.members.binary_search(&x).expect("sequence belongs to its type class");
        self.bins.as_ref().map_or(pos as u64, |b| b[pos])
    }

    fn candidates(&self, i: u64) -> Vec<u32> {
        match &self.bins {
            None => self.members.get(i as usize).map(|&x| vec![x]).unwrap_or_default(),
            Some(_) => self.by_bin.get(&i).cloned().unwrap_or_default(),
        }
    }
}

/// A sampled code for the helper problem at one blocklength.
#[derive(Debug, Clone)]
pub struct SccsiCode {
    n: usize,
    r1: f64,
    r2: f64,
    nx: usize,
    ny: usize,
    ns: usize,
    x_classes: BTreeMap<Vec<usize>, XClass>,
    books: BTreeMap<Vec<usize>, Book>,
}

impl SccsiCode {
    /// Draws every per-type codebook and bin map from `src.master_seed`.
    pub fn build(src: &SimSource, r1: f64, r2: f64, s_size: usize, picker: &ChannelPicker) -> Result<Self> {
        src.validate()?;
        if !(r1 >= 0.0 && r2 >= 0.0 && r1.is_finite() && r2.is_finite()) {
            return invalid("rates must be finite and non-negative");
        }
        if s_size == 0 {
            return invalid("helper alphabet must be non-empty");
        }
        let (n, nx, ny) = (src.n, src.nx(), src.ny());
        check_shape(n, &[nx, ny, s_size])?;
        let channel = picker.channel(ny, s_size)?;
        let master = src.master_seed;

        let x_types = compositions(nx, n);
        if let Some(c) = x_types.iter().find(|c| multinomial(c) > MAX_TYPE_CLASS) {
            return budget(format!("type class {c:?} has more than {MAX_TYPE_CLASS} members"));
        }
        let mut grouped: BTreeMap<Vec<usize>, Vec<u32>> = x_types.iter().map(|c| (c.clone(), Vec::new())).collect();
        for code in 0..(nx as u32).pow(n as u32) {
            let x = unpack(code, nx, n);
            grouped.get_mut(&super::seq::counts(&x, nx)).expect("every type listed").push(code);
        }
        let m1 = super::seq::bin_count(n, r1);
        let mut x_classes = BTreeMap::new();
        for (k, c) in x_types.iter().enumerate() {
            let members = grouped.remove(c).expect("grouped above");
            let binned = (members.len() as f64).log2() > n as f64 * r1;
            let mut by_bin = BTreeMap::new();
            let bins = binned.then(|| {
                let mut rng = rng_for(master, "x-bins", k as u64);
                let bins: Vec<u64> = members.iter().map(|_| rng.gen_range(0..m1)).collect();
                for (&x, &b) in members.iter().zip(&bins) {
                    by_bin.entry(b).or_insert_with(Vec::new).push(x);
                }
                bins
            });
            x_classes.insert(c.clone(), XClass { members, bins, by_bin });
        }

        let helper_bins = (n as f64 * r2).exp2();
        let mut books = BTreeMap::new();
        for (k, c) in compositions(ny, n).into_iter().enumerate() {
            let spec = BookSpec {
                n,
                in_counts: &c,
                in_size: ny,
                out_size: s_size,
                channel: &channel,
                master,
                label: "helper",
                index: k as u64,
            };
            let book = Book::build(&spec, |m| bins_if(m as f64 > helper_bins, n, r2))?;
            books.insert(c, book);
        }
        Ok(SccsiCode { n, r1, r2, nx, ny, ns: s_size, x_classes, books })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rates(&self) -> (f64, f64) {
        (self.r1, self.r2)
    }

    /// Whether every `X` type class is indexed one-to-one.
    pub fn x_injective(&self) -> bool {
        self.x_classes.values().all(|c| c.bins.is_none())
    }

    /// Whether every helper codebook is indexed one-to-one.
    pub fn helper_injective(&self) -> bool {
        self.books.values().all(|b| b.bins.is_none())
    }

    /// `(Y type, codebook size, I(Q_Y; Q*_{S|Y}) in bits)` per type.
    pub fn book_sizes(&self) -> Vec<(Vec<usize>, usize, f64)> {
        self.books.iter().map(|(c, b)| (c.clone(), b.words.len(), b.i_bits)).collect()
    }

    /// Codebook brackets, injectivity rules and codeword types, per type.
    pub fn invariants_hold(&self) -> bool {
        let n = self.n as f64;
        let x_ok = self.x_classes.values().all(|c| {
            let small = (c.members.len() as f64).log2() <= n * self.r1;
            small == c.bins.is_none()
        });
        let books_ok = self.books.values().all(|b| {
            let mut out = vec![0; self.ns];
            for row in &b.cond {
                for (s, &k) in row.iter().enumerate() {
                    out[s] += k;
                }
            }
            b.in_bracket(self.n, self.ny, self.ns)
                && b.words.iter().all(|&w| super::seq::counts(&unpack(w, self.ns, self.n), self.ns) == out)
                && ((b.words.len() as f64) > (n * self.r2).exp2()) == b.bins.is_some()
        });
        x_ok && books_ok
    }

    fn encode_x(&self, x: &[usize]) -> (Vec<usize>, u64) {
        let c = super::seq::counts(x, self.nx);
        let i = self.x_classes[&c].index_of(pack(x, self.nx));
        (c, i)
    }

    /// Quantizes `y`; returns its type, the helper index and the codeword.
    fn encode_y(&self, y: &[usize], rng: &mut ChaCha8Rng) -> (Vec<usize>, u64, u32) {
        let c = super::seq::counts(y, self.ny);
        let book = &self.books[&c];
        let s = book.quantize(y, self.ny, self.ns, rng);
        (c, book.index_of(s), s)
    }

    fn decode(&self, x_type: &[usize], i: u64, y_type: &[usize], j: u64, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let xs: Vec<Vec<usize>> =
            self.x_classes[x_type].candidates(i).into_iter().map(|x| unpack(x, self.nx, self.n)).collect();
        let ss: Vec<Vec<usize>> =
            self.books[y_type].candidates(j).into_iter().map(|s| unpack(s, self.ns, self.n)).collect();
        let pairs: Vec<(usize, usize)> = (0..xs.len()).flat_map(|a| (0..ss.len()).map(move |b| (a, b))).collect();
        let score = |(a, b): (usize, usize)| entropy_bits(&joint_counts(&xs[a], &ss[b], self.nx, self.ns), self.n);
        let (a, _) = argmin_random(&pairs, score, rng).expect("received bins contain the transmitted pair");
        xs[a].clone()
    }

    fn round(&self, x: &[usize], y: &[usize], rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let (xt, i) = self.encode_x(x);
        let (yt, j, _) = self.encode_y(y, rng);
        let xhat = self.decode(&xt, i, &yt, j, rng);
        let error = xhat != x;
        (xhat, error)
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

/// One encode/decode pass. Quantizer draws and decoder tie-breaks use `seed`.
pub fn sccsi_round(code: &SccsiCode, x: &[usize], y: &[usize], seed: u64) -> Result<(Vec<usize>, bool)> {
    code.check_input(x, y)?;
    Ok(code.round(x, y, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Error frequency over `trials` i.i.d. blocks; trial `t` is seeded from
/// `(master_seed, t)` alone.
pub fn run_sccsi_trials(src: &SimSource, code: &SccsiCode, trials: u64) -> Result<TrialStats> {
    if trials == 0 {
        return invalid("trials must be at least 1");
    }
    if src.n != code.n || src.nx() != code.nx || src.ny() != code.ny {
        return invalid("source and code disagree on blocklength or alphabets");
    }
    let errors = count_parallel(trials, |t| {
        let mut rng = src.trial_rng("sccsi-trial", t);
        let (x, y) = src.sample(&mut rng);
        code.round(&x, &y, &mut rng).1
    });
    TrialStats::new(src.n, trials, errors)
}
