//! Sequences, type classes, seeds and codebook sizing.

use crate::error::{Error, Result};
use crate::info::CondDist;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Largest type class the simulator will enumerate.
pub const MAX_TYPE_CLASS: u64 = 1_000_000;
/// Largest codebook the simulator will draw.
pub const MAX_CODEBOOK: usize = 1_000_000;
pub const MAX_BLOCKLENGTH: usize = 16;
pub const MAX_ALPHABET: usize = 3;

/// Entropy differences below this are treated as ties.
pub(crate) const TIE_TOL: f64 = 1e-9;

/// `hash(master, label, index)` truncated to 64 bits.
pub fn child_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}

pub(crate) fn rng_for(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master, label, index))
}

pub(crate) fn budget<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Budget(msg.into()))
}

pub fn counts(seq: &[usize], size: usize) -> Vec<usize> {
    let mut c = vec![0; size];
    for &s in seq {
        c[s] += 1;
    }
    c
}

/// Joint counts of `(a_i, b_i)`, row-major in `a`.
pub fn joint_counts(a: &[usize], b: &[usize], sa: usize, sb: usize) -> Vec<usize> {
    let mut c = vec![0; sa * sb];
    for (&u, &v) in a.iter().zip(b) {
        c[u * sb + v] += 1;
    }
    c
}

/// Empirical entropy in bits of a count vector summing to `n`.
pub fn entropy_bits(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts.iter().filter(|&&c| c > 0).map(|&c| -(c as f64 / n) * (c as f64 / n).log2()).sum()
}

/// `H(A|B)` in bits from joint counts row-major in `a`.
pub fn conditional_entropy_bits(joint: &[usize], sa: usize, sb: usize, n: usize) -> f64 {
    let mut marg = vec![0; sb];
    for u in 0..sa {
        for v in 0..sb {
            marg[v] += joint[u * sb + v];
        }
    }
    entropy_bits(joint, n) - entropy_bits(&marg, n)
}

/// `I(A;B)` in bits from joint counts row-major in `a`.
pub fn mutual_information_bits(joint: &[usize], sa: usize, sb: usize, n: usize) -> f64 {
    let mut ma = vec![0; sa];
    let mut mb = vec![0; sb];
    for u in 0..sa {
        for v in 0..sb {
            ma[u] += joint[u * sb + v];
            mb[v] += joint[u * sb + v];
        }
    }
    (entropy_bits(&ma, n) + entropy_bits(&mb, n) - entropy_bits(joint, n)).max(0.0)
}

/// Size of the type class with the given counts.
pub fn multinomial(counts: &[usize]) -> u64 {
    let mut out: u128 = 1;
    let mut total = 0u128;
    for &c in counts {
        for k in 1..=c as u128 {
            total += 1;
            out = out * total / k;
        }
    }
    out.min(u64::MAX as u128) as u64
}

pub(crate) fn pack(seq: &[usize], base: usize) -> u32 {
    seq.iter().rev().fold(0u32, |acc, &s| acc * base as u32 + s as u32)
}

pub(crate) fn unpack(mut code: u32, base: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let s = (code % base as u32) as usize;
            code /= base as u32;
            s
        })
        .collect()
}

/// A uniformly random member of the type class with the given counts.
pub(crate) fn sample_type_member(counts: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut seq: Vec<usize> = counts.iter().enumerate().flat_map(|(s, &c)| std::iter::repeat(s).take(c)).collect();
    seq.shuffle(rng);
    seq
}

/// Rounds `channel` to a conditional type: row `y` gets counts summing to
/// `row_counts[y]`, by largest remainder.
pub fn round_conditional(row_counts: &[usize], channel: &CondDist) -> Vec<Vec<usize>> {
    row_counts
        .iter()
        .enumerate()
        .map(|(y, &ny)| {
            let probs = channel.row(y).probs();
            let exact: Vec<f64> = probs.iter().map(|p| p * ny as f64).collect();
            let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
            let mut left = ny - out.iter().sum::<usize>().min(ny);
            let mut order: Vec<usize> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
            for &s in order.iter().cycle() {
                if left == 0 {
                    break;
                }
                out[s] += 1;
                left -= 1;
            }
            out
        })
        .collect()
}

/// Flattens a conditional type into joint counts row-major in the input.
pub(crate) fn flatten(cond: &[Vec<usize>]) -> Vec<usize> {
    cond.iter().flatten().copied().collect()
}

/// The codebook-size bracket
/// `[2^{nI} + (ab + 2) log₂(n+1), 2^{nI} + (ab + 4) log₂(n+1)]`.
pub fn codebook_bracket(n: usize, i_bits: f64, a: usize, b: usize) -> (f64, f64) {
    let base = (n as f64 * i_bits).exp2();
    let l = ((n + 1) as f64).log2();
    (base + (a * b + 2) as f64 * l, base + (a * b + 4) as f64 * l)
}

/// `⌈2^{nI} + (ab + 3) log₂(n+1)⌉`, inside [`codebook_bracket`] for `n >= 1`.
pub fn codebook_size(n: usize, i_bits: f64, a: usize, b: usize) -> Result<usize> {
    let size = ((n as f64 * i_bits).exp2() + (a * b + 3) as f64 * ((n + 1) as f64).log2()).ceil();
    if size > MAX_CODEBOOK as f64 {
        return budget(format!("codebook of {size} words exceeds {MAX_CODEBOOK}"));
    }
    Ok(size as usize)
}

/// `⌈2^{nR}⌉` bins.
pub(crate) fn bin_count(n: usize, rate: f64) -> u64 {
    (n as f64 * rate).exp2().ceil().min(u64::MAX as f64) as u64
}

pub(crate) fn check_shape(n: usize, sizes: &[usize]) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("blocklength must be at least 1".into()));
    }
    if n > MAX_BLOCKLENGTH {
        return budget(format!("blocklength {n} exceeds {MAX_BLOCKLENGTH}"));
    }
    if sizes.iter().any(|&s| s > MAX_ALPHABET) {
        return budget(format!("alphabet sizes {sizes:?} exceed the simulated maximum {MAX_ALPHABET}"));
    }
    Ok(())
}

/// `(|S(x, y)|, (n+1)^{|X||Y|} 2^{nH(x,y)})`: the number of pairs with joint
/// empirical entropy at most that of `(x, y)`, and its upper bound.
pub fn joint_entropy_set(x: &[usize], y: &[usize], sx: usize, sy: usize) -> (f64, f64) {
    let n = x.len();
    let h = entropy_bits(&joint_counts(x, y, sx, sy), n);
    let count: f64 = crate::grid::compositions(sx * sy, n)
        .iter()
        .filter(|c| entropy_bits(c, n) <= h + TIE_TOL)
        .map(|c| multinomial(c) as f64)
        .sum();
    (count, ((n + 1) as f64).powi((sx * sy) as i32) * (n as f64 * h).exp2())
}

/// `(|S(x|y)|, (n+1)^{|X||Y|} 2^{nH(x|y)})` for fixed `y`.
pub fn conditional_entropy_set(x: &[usize], y: &[usize], sx: usize, sy: usize) -> (f64, f64) {
    let n = x.len();
    let h = conditional_entropy_bits(&joint_counts(x, y, sx, sy), sx, sy, n);
    let ny = counts(y, sy);
    // Conditional types: one x-composition per y symbol.
    let rows: Vec<Vec<Vec<usize>>> = ny.iter().map(|&c| crate::grid::compositions(sx, c)).collect();
    let radices: Vec<usize> = rows.iter().map(|r| r.len()).collect();
    let mut count = 0.0;
    crate::grid::for_each_index(&radices, |idx| {
        let mut joint = vec![0; sx * sy];
        let mut size = 1.0;
        for (b, &k) in idx.iter().enumerate() {
            let comp = &rows[b][k];
            size *= multinomial(comp) as f64;
            for a in 0..sx {
                joint[a * sy + b] = comp[a];
            }
        }
        if conditional_entropy_bits(&joint, sx, sy, n) <= h + TIE_TOL {
            count += size;
        }
    });
    (count, ((n + 1) as f64).powi((sx * sy) as i32) * (n as f64 * h).exp2())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_part() {
        let a = child_seed(1, "book", 0);
        assert_eq!(a, child_seed(1, "book", 0));
        assert_ne!(a, child_seed(2, "book", 0));
        assert_ne!(a, child_seed(1, "bins", 0));
        assert_ne!(a, child_seed(1, "book", 1));
    }

    #[test]
    fn multinomial_small() {
        assert_eq!(multinomial(&[2, 2]), 6);
        assert_eq!(multinomial(&[5, 5, 6]), 2_018_016);
        assert_eq!(multinomial(&[0, 4]), 1);
    }

    #[test]
    fn pack_round_trips() {
        let s = vec![2, 0, 1, 1, 2];
        assert_eq!(unpack(pack(&s, 3), 3, 5), s);
    }

    #[test]
    fn bracket_contains_size() {
        for n in 1..=16 {
            for &i in &[0.0, 0.3, 0.77, 1.0] {
                let m = codebook_size(n, i, 2, 3).unwrap() as f64;
                let (lo, hi) = codebook_bracket(n, i, 2, 3);
                assert!(lo <= m && m <= hi, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn rounding_preserves_rows() {
        let ch = CondDist::from_rows(vec![vec![0.3, 0.7], vec![0.55, 0.45], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        let r = round_conditional(&[5, 7, 0], &ch);
        // Remainder ties go to the lower index.
        assert_eq!(r, vec![vec![2, 3], vec![4, 3], vec![0, 0]]);
    }

    #[test]
    fn entropy_sets_match_brute_force() {
        let x = [0, 1, 1, 0, 1, 1];
        let y = [0, 0, 1, 1, 1, 0];
        let n = x.len();
        let hj = entropy_bits(&joint_counts(&x, &y, 2, 2), n);
        let hc = conditional_entropy_bits(&joint_counts(&x, &y, 2, 2), 2, 2, n);
        let (mut joint, mut cond) = (0.0, 0.0);
        for cx in 0..1u32 << n {
            let xt: Vec<usize> = (0..n).map(|i| (cx >> i & 1) as usize).collect();
            if conditional_entropy_bits(&joint_counts(&xt, &y, 2, 2), 2, 2, n) <= hc + TIE_TOL {
                cond += 1.0;
            }
            for cy in 0..1u32 << n {
                let yt: Vec<usize> = (0..n).map(|i| (cy >> i & 1) as usize).collect();
                if entropy_bits(&joint_counts(&xt, &yt, 2, 2), n) <= hj + TIE_TOL {
                    joint += 1.0;
                }
            }
        }
        let (j, jb) = joint_entropy_set(&x, &y, 2, 2);
        let (c, cb) = conditional_entropy_set(&x, &y, 2, 2);
        assert_eq!(j, joint);
        assert_eq!(c, cond);
        assert!(j <= jb && c <= cb);
    }
}
