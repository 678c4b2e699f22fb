//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line (written straight to stderr so it survives output capture), then
//! asserts. Two literal targets are known to be unreachable; they print FAIL
//! and are checked against their corrected form instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sideinfo::erasure::{be_exponent, two_sided_exponent, BeConfig};
use sideinfo::gaussian::{
    cond_rd, g3_profile, gauss_kl, kstar, marton_gauss, mse, mse_gradient, theta_gauss_lower, two_sided_closed_form,
    Cov2, Cov3, GaussProblem, LinearEstimator,
};
use sideinfo::info::{binary_entropy, binary_kl, kl_divergence};
use sideinfo::sccsi::{eta_lower, eta_sp, eta_upper, point_to_point_exponent, SccsiProblem};
use sideinfo::sim::{
    codebook_bracket, conditional_entropy_set, empirical_exponent, joint_entropy_set, run_sccsi_trials,
    ChannelPicker, EmpiricalExponent, SccsiCode, SimSource,
};
use sideinfo::wz::{rwz, theta_lower, DistortionTable, WzProblem};
use sideinfo::{ExtReal, FiniteDist, GridSpec, JointDist};
use std::io::Write;
use std::time::{Duration, Instant};

fn report(id: &str, pass: bool, detail: &str, elapsed: Duration) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id}: {verdict} ({detail}) [{:.2}s]\n", elapsed.as_secs_f64());
    std::io::stderr().lock().write_all(line.as_bytes()).unwrap();
}

fn within(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Random joint with integer weights in `lo..=hi`, normalized.
fn rational_joint(rng: &mut ChaCha8Rng, sizes: &[usize], lo: u32, hi: u32) -> JointDist {
    loop {
        let w: Vec<f64> = (0..sizes.iter().product::<usize>()).map(|_| rng.gen_range(lo..=hi) as f64).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return JointDist::new(sizes.to_vec(), w.iter().map(|v| v / total).collect()).unwrap();
        }
    }
}

fn bern_y_indep(p1: f64) -> JointDist {
    JointDist::product(&[&FiniteDist::bernoulli(p1).unwrap(), &FiniteDist::uniform(2)])
}

/// Binary point-to-point oracle: bisection for h(q) = r between p and 1/2.
fn p2p_bisection(p1: f64, r: f64) -> f64 {
    if binary_entropy(p1) >= r {
        return 0.0;
    }
    let (mut lo, mut hi) = (p1.min(1.0 - p1), 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    binary_kl(0.5 * (lo + hi), p1.min(1.0 - p1)).to_f64()
}

#[test]
fn criterion_01_conditional_rd_anchor() {
    let t = Instant::now();
    let v = cond_rd(&Cov2::source(0.7).unwrap(), 0.4);
    let el = t.elapsed();
    let pass = within(v, 0.1215, 5e-4) && el < Duration::from_secs(1);
    report("1", pass, &format!("cond_rd = {v:.6} nats, target 0.1215 +/- 5e-4"), el);
    assert!(pass);
}

#[test]
fn criterion_02_kkt_identity() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            for k in 0..5 {
                let (r, d, z) = (0.15 + 0.1 * i as f64, 0.2 + 0.1 * j as f64, 0.2 * k as f64);
                let kl = gauss_kl(&kstar(r, d, z), &Cov2::source(z).unwrap()).unwrap();
                worst = worst.max((kl - two_sided_closed_form(r, d, z)).abs());
            }
        }
    }
    let el = t.elapsed();
    let pass = worst <= 1e-9 && el < Duration::from_secs(1);
    report("2", pass, &format!("max |D(K*||S) - closed form| = {worst:.2e} over 125 points, tol 1e-9"), el);
    assert!(pass);
}

#[test]
fn criterion_03_zeta_zero_reduction() {
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (r, d) in [(0.3, 0.4), (0.5, 0.4)] {
        let lower = theta_gauss_lower(&GaussProblem::new(0.0, d, r).unwrap()).unwrap().value.to_f64();
        let m = marton_gauss(r, d);
        pass &= (lower - m).abs() <= 0.1 * m.abs() + 1e-12;
        parts.push(format!("R={r}: lower {lower:.6} vs Marton {m:.6}"));
    }
    let el = t.elapsed();
    pass &= el < Duration::from_secs(600);
    report("3", pass, &format!("{}; 10% relative", parts.join(", ")), el);
    assert!(pass);
}

#[test]
fn criterion_04_profile_optimum() {
    let t = Instant::now();
    let prof = g3_profile(&GaussProblem::new(0.7, 0.4, 0.4).unwrap(), 1.0).unwrap();
    let (arg, best) = prof.iter().fold((f64::NAN, ExtReal::finite(-1.0)), |acc, &(r, v)| if v > acc.1 { (r, v) } else { acc });
    let el = t.elapsed();
    let pass = (0.70..=0.82).contains(&arg) && best.is_finite() && el < Duration::from_secs(600);
    report("4", pass, &format!("argmax rho_xz = {arg:.2} (G3 = {best}), window [0.70, 0.82]"), el);
    assert!(pass);
}

/// Monotonicity over the points with `lo <= delta <= hi`, and the
/// interpolated first crossing of g1 and g2 there.
fn tension(curve: &[sideinfo::erasure::CurvePoint], lo: f64, hi: f64) -> (bool, Option<f64>) {
    let pts: Vec<_> = curve.iter().filter(|c| c.delta >= lo - 1e-12 && c.delta <= hi + 1e-12).collect();
    let slack = ExtReal::finite(1e-9);
    let mono = pts.windows(2).all(|w| w[1].g1 <= w[0].g1 + slack && w[0].g2 <= w[1].g2 + slack);
    let crossing = pts.windows(2).find_map(|w| {
        let (a, b) = (w[0].g1.to_f64() - w[0].g2.to_f64(), w[1].g1.to_f64() - w[1].g2.to_f64());
        (a.is_finite() && b.is_finite() && a > 0.0 && b <= 0.0)
            .then(|| w[0].delta + (w[1].delta - w[0].delta) * a / (a - b))
    });
    (mono, crossing)
}

#[test]
fn criterion_05_erasure_tension() {
    let t = Instant::now();
    let cfg = BeConfig::default();
    let res = be_exponent(&cfg).unwrap();
    let el = t.elapsed();
    // As written the interval runs from 1 - R = 0.575 down to Delta/p = 0.3.
    let (lo, hi) = (1.0 - cfg.rate, cfg.delta_target / cfg.p);
    let (mono, crossing) = tension(&res.curve, lo, hi);
    let literal = lo <= hi && mono && crossing.is_some_and(|c| (res.argmax_delta - c).abs() <= cfg.dgrid);
    report(
        "5",
        literal,
        &format!(
            "literal interval [1-R, Delta/p] = [{lo:.3}, {hi:.3}] is empty; no crossing can lie in it \
             (argmax delta = {:.3})",
            res.argmax_delta
        ),
        el,
    );
    // Where both curves are finite, [Delta, 1 - R), the tension and the
    // argmax-at-crossing property do hold.
    let (mono, crossing) = tension(&res.curve, cfg.delta_target, 1.0 - cfg.rate - cfg.dgrid);
    let c = crossing.unwrap_or(f64::NAN);
    let supp = mono && (res.argmax_delta - c).abs() <= cfg.dgrid && el < Duration::from_secs(120);
    report(
        "5 (supplementary)",
        supp,
        &format!(
            "on [Delta, 1-R): g1 non-increasing, g2 non-decreasing = {mono}; crossing {c:.4}, argmax {:.3}",
            res.argmax_delta
        ),
        el,
    );
    assert!(!literal, "the literal interval is empty; a PASS here means the check is broken");
    assert!(supp);
}

#[test]
fn criterion_06_two_sided_curve() {
    let t = Instant::now();
    let cfg = BeConfig::default();
    let at_rd = two_sided_exponent(cfg.p - cfg.delta_target, &cfg).unwrap();
    let v = two_sided_exponent(0.425, &cfg).unwrap().to_f64();
    let oracle = binary_kl(0.425 + cfg.delta_target, cfg.p).to_f64();
    let mut ordered = true;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..=12 {
        let r = 0.36 + 0.01 * i as f64;
        let c = cfg.with_rate(r);
        let gap = be_exponent(&c).unwrap().value.to_f64() - two_sided_exponent(r, &c).unwrap().to_f64();
        worst = worst.max(gap);
        ordered &= gap <= 1e-6;
    }
    let el = t.elapsed();
    let zero = at_rd == ExtReal::ZERO;
    let literal = within(v, 0.016326, 1e-6);
    report(
        "6",
        zero && literal && ordered,
        &format!("value at R=0.425 is {v:.7} bits, literal target 0.016326 (tol 1e-6)"),
        el,
    );
    let oracle_ok = within(v, oracle, 1e-12) && within(oracle, 0.0162917, 1e-7);
    let supp = zero && oracle_ok && ordered && el < Duration::from_secs(600);
    report(
        "6 (oracle)",
        supp,
        &format!(
            "zero at R=p-Delta: {zero}; D(0.575||0.5) = {oracle:.7} matches; max(be - two-sided) = {worst:.2e} over R in [0.36, 0.48]"
        ),
        el,
    );
    assert!(!literal, "the literal target is an arithmetic slip; a PASS here means the check is broken");
    assert!(supp);
}

#[test]
fn criterion_07_sccsi_reductions() {
    let t = Instant::now();
    let g = GridSpec::default();
    let mut worst: f64 = 0.0;
    for p1 in [0.11, 0.3] {
        for r1 in [0.6, 0.75, 0.9] {
            let prob = SccsiProblem::new(bern_y_indep(p1), r1, 0.0, Some(1)).unwrap();
            let v = eta_lower(&prob, &g).unwrap().value.to_f64();
            let p2p = point_to_point_exponent(&FiniteDist::bernoulli(p1).unwrap(), r1).to_f64();
            let oracle = p2p_bisection(p1, r1);
            worst = worst.max((v - oracle).abs()).max((p2p - oracle).abs());
        }
    }
    let full_binary = SccsiProblem::new(bern_y_indep(0.3), 1.0, 0.2, Some(2)).unwrap();
    let ternary = JointDist::product(&[&FiniteDist::new(vec![0.5, 0.3, 0.2]).unwrap(), &FiniteDist::uniform(2)]);
    let full_ternary = SccsiProblem::new(ternary, 3f64.log2(), 0.2, Some(2)).unwrap();
    let infinite = eta_lower(&full_binary, &g).unwrap().value.is_infinite()
        && eta_lower(&full_ternary, &GridSpec::new(8, 4)).unwrap().value.is_infinite();
    let el = t.elapsed();
    let pass = worst <= 1e-6 && infinite && el < Duration::from_secs(300);
    report(
        "7",
        pass,
        &format!("max |eta_L - bisection oracle| = {worst:.2e} (tol 1e-6); +inf at r1 = log2|X|: {infinite}"),
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_08_bound_ordering() {
    let t = Instant::now();
    let g = GridSpec::new(8, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for _ in 0..20 {
        let p = rational_joint(&mut rng, &[2, 2], 1, 20);
        for r1 in [0.5, 0.8] {
            for r2 in [0.2, 0.6] {
                let prob = SccsiProblem::new(p.clone(), r1, r2, Some(3)).unwrap();
                let up = eta_upper(&prob, &g).unwrap().value;
                let sp = eta_sp(&prob, &g).unwrap().value;
                let gap = if up.is_infinite() && sp.is_infinite() { 0.0 } else { up.to_f64() - sp.to_f64() };
                worst = worst.max(gap);
                count += 1;
            }
        }
    }
    let el = t.elapsed();
    let pass = worst <= 1e-9 && el < Duration::from_secs(1200);
    report("8", pass, &format!("max(eta_U - eta_SP) = {worst:.2e} over {count} cases, tol 1e-9"), el);
    assert!(pass);
}

fn direct_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.log2()).sum::<f64>()
}

#[test]
fn criterion_09_identity_suite() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut decomp, mut chain, mut mi_min, mut kl_min, mut grad): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let sizes: Vec<usize> = (0..3).map(|_| rng.gen_range(2..=3)).collect();
        let q = rational_joint(&mut rng, &sizes, 0, 10);
        let p_xy = rational_joint(&mut rng, &sizes[..2], 1, 10);

        // D(Q_XYS || P_XY Q_{S|Y}) = D(Q_XY || P_XY) + H(S|Y) - H(S|X,Y).
        let (_, s_given_y) = q.marginal(&[1, 2]).unwrap().decompose(0).unwrap();
        let lhs = q.divergence(&p_xy.with_channel(1, &s_given_y).unwrap()).unwrap().to_f64();
        let q_xy = q.marginal(&[0, 1]).unwrap();
        let rhs = q_xy.divergence(&p_xy).unwrap().to_f64() + q.conditional_entropy(&[2], &[1]).unwrap()
            - q.conditional_entropy(&[2], &[0, 1]).unwrap();
        decomp = decomp.max((lhs - rhs).abs());

        // H(X,S) = H(S) + H(X|S), the conditional summed cell by cell.
        let xs = q.marginal(&[0, 2]).unwrap();
        let s = q.marginal(&[2]).unwrap();
        let ns = sizes[2];
        let h_x_given_s: f64 = xs
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| v * (s.probs()[i % ns] / v).log2())
            .sum();
        chain = chain
            .max((q.entropy_of(&[0, 2]).unwrap() - direct_entropy(xs.probs())).abs())
            .max((direct_entropy(xs.probs()) - direct_entropy(s.probs()) - h_x_given_s).abs())
            .max((q.conditional_entropy(&[0], &[2]).unwrap() - h_x_given_s).abs());

        // I >= 0 and KL >= 0, on the raw sums as well as the library values.
        let x = q_xy.marginal_dist(0);
        let y = q_xy.marginal_dist(1);
        let ny = sizes[1];
        let raw_mi: f64 = q_xy
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| v * (v / (x.probs()[i / ny] * y.probs()[i % ny])).log2())
            .sum();
        mi_min = mi_min.min(raw_mi).min(q_xy.mutual_information().unwrap());
        let pm = p_xy.marginal_dist(0);
        let raw_kl: f64 = x.probs().iter().zip(pm.probs()).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).log2()).sum();
        kl_min = kl_min.min(raw_kl).min(kl_divergence(&x, &pm).unwrap().to_f64());

        // mse gradient against central differences.
        let k = loop {
            let c = Cov3::from_params(
                rng.gen_range(1..=40) as f64 / 10.0,
                rng.gen_range(1..=40) as f64 / 10.0,
                rng.gen_range(-9..=9) as f64 / 10.0,
                rng.gen_range(-9..=9) as f64 / 10.0,
                rng.gen_range(-9..=9) as f64 / 10.0,
            );
            if let Ok(c) = c {
                break c;
            }
        };
        let (a, b) = (rng.gen_range(-40..=40) as f64 / 10.0, rng.gen_range(-40..=40) as f64 / 10.0);
        let h = 1e-5;
        let at = |a: f64, b: f64| mse(&k, &LinearEstimator::new(a, b, 10.0).unwrap());
        let fd = ((at(a + h, b) - at(a - h, b)) / (2.0 * h), (at(a, b + h) - at(a, b - h)) / (2.0 * h));
        let an = mse_gradient(&k, &LinearEstimator::new(a, b, 10.0).unwrap());
        grad = grad.max((an.0 - fd.0).abs() / (1.0 + an.0.abs())).max((an.1 - fd.1).abs() / (1.0 + an.1.abs()));
    }
    let el = t.elapsed();
    let pass = decomp <= 1e-10
        && chain <= 1e-10
        && mi_min >= -1e-12
        && kl_min >= -1e-12
        && grad <= 1e-6
        && el < Duration::from_secs(60);
    report(
        "9",
        pass,
        &format!(
            "1000 instances: decomposition {decomp:.1e}, chain rule {chain:.1e} (tol 1e-10); \
             min I {mi_min:.1e}, min KL {kl_min:.1e}; mse gradient rel err {grad:.1e} (tol 1e-6)"
        ),
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_10_monotonicity() {
    let t = Instant::now();
    let slack = ExtReal::finite(1e-9);
    let up = |v: &[ExtReal]| v.windows(2).all(|w| w[0] <= w[1] + slack);
    let fixed = GridSpec { refine_rounds: 0, ..GridSpec::new(8, 4) };

    let p = JointDist::from_matrix(&[vec![0.4, 0.1], vec![0.15, 0.35]]).unwrap();
    let eta = |r1: f64, r2: f64| eta_lower(&SccsiProblem::new(p.clone(), r1, r2, Some(2)).unwrap(), &fixed).unwrap().value;
    let in_r1: Vec<ExtReal> = [0.6, 0.7, 0.8, 0.9].iter().map(|&r| eta(r, 0.3)).collect();
    let in_r2: Vec<ExtReal> = [0.1, 0.3, 0.5, 0.7].iter().map(|&r| eta(0.7, r)).collect();

    let bsc = JointDist::from_matrix(&[vec![0.56, 0.14], vec![0.06, 0.24]]).unwrap();
    let hamming = DistortionTable::hamming(2);
    let theta = |r: f64, d: f64| {
        theta_lower(&WzProblem::new(bsc.clone(), r, d, hamming.clone(), None).unwrap(), &fixed).unwrap().value
    };
    let in_delta: Vec<ExtReal> = [0.05, 0.1, 0.15, 0.2].iter().map(|&d| theta(0.3, d)).collect();
    let in_rate: Vec<ExtReal> = [0.2, 0.3, 0.4, 0.5].iter().map(|&r| theta(r, 0.1)).collect();

    let rw: Vec<ExtReal> =
        [0.02, 0.06, 0.1, 0.14].iter().map(|&d| ExtReal::finite(-rwz(&bsc, d, &hamming, 3, &fixed).unwrap())).collect();
    let el = t.elapsed();
    let checks = [up(&in_r1), up(&in_r2), up(&in_delta), up(&in_rate), up(&rw)];
    let pass = checks.iter().all(|&c| c) && el < Duration::from_secs(1800);
    report(
        "10",
        pass,
        &format!("eta_L in r1, r2; theta_L in Delta, R; rwz in Delta (4 points each, fixed 8/4 grid): {checks:?}"),
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_11_simulator() {
    let t = Instant::now();
    let dsbs = JointDist::from_matrix(&[vec![0.49, 0.01], vec![0.01, 0.49]]).unwrap();
    let mut bracket_ok = true;
    let mut sets_ok = true;
    let mut check_code = |src: &SimSource, code: &SccsiCode| {
        bracket_ok &= code.invariants_hold();
        for (_, m, i) in code.book_sizes() {
            let (lo, hi) = codebook_bracket(src.n, i, 2, 2);
            bracket_ok &= lo <= m as f64 && m as f64 <= hi;
        }
        for k in 0..20 {
            let (x, y) = src.sample(&mut ChaCha8Rng::seed_from_u64(k));
            let (c3, b3) = joint_entropy_set(&x, &y, 2, 2);
            let (c4, b4) = conditional_entropy_set(&x, &y, 2, 2);
            sets_ok &= c3 <= b3 && c4 <= b4;
        }
    };

    // (a) Both encoders one-to-one.
    let src = SimSource::new(dsbs.clone(), 8, 1).unwrap();
    let code = SccsiCode::build(&src, 1.0, 3.0, 2, &ChannelPicker::Uniform).unwrap();
    check_code(&src, &code);
    let injective = code.x_injective() && code.helper_injective();
    let a = run_sccsi_trials(&src, &code, 10_000).unwrap();
    let a_ok = injective && a.errors == 0;

    // (b) Binned instance with a positive lower exponent.
    let prob = SccsiProblem::new(dsbs.clone(), 0.5, 0.9, Some(2)).unwrap();
    let lower = eta_lower(&prob, &GridSpec::default()).unwrap();
    let picker = ChannelPicker::from_witness(lower.witness.channel.as_ref());
    let mut stats = Vec::new();
    for n in [6, 8, 10, 12] {
        let src = SimSource::new(dsbs.clone(), n, 42).unwrap();
        let code = SccsiCode::build(&src, 0.5, 0.9, 2, &picker).unwrap();
        check_code(&src, &code);
        stats.push(run_sccsi_trials(&src, &code, 100_000).unwrap());
    }
    let trend = stats.windows(2).all(|w| w[1].p_hat() <= w[0].p_hat() || w[0].overlaps(&w[1]));
    let slope = match empirical_exponent(&stats).unwrap() {
        EmpiricalExponent::Slope(s) => s,
        EmpiricalExponent::AtLeast(s) => s,
    };
    let b_ok = lower.value.to_f64() > 0.0 && trend && slope > 0.0;
    let el = t.elapsed();
    let pass = a_ok && b_ok && bracket_ok && sets_ok && el < Duration::from_secs(1800);
    let p_hats: Vec<String> = stats.iter().map(|s| format!("{:.4}", s.p_hat())).collect();
    report(
        "11",
        pass,
        &format!(
            "(a) injective errors {}/10000; (b) eta_L {:.4}, P_e [{}] non-increasing {trend}, slope {slope:.4}; \
             (c) brackets {bracket_ok}, entropy-set counts {sets_ok}",
            a.errors,
            lower.value.to_f64(),
            p_hats.join(", ")
        ),
        el,
    );
    assert!(pass);
}

#[test]
fn criterion_12_determinism() {
    let t = Instant::now();
    let json = |v: &dyn erased::Json| v.text();
    let p = JointDist::from_matrix(&[vec![0.4, 0.1], vec![0.15, 0.35]]).unwrap();
    let prob = SccsiProblem::new(p.clone(), 0.7, 0.3, Some(2)).unwrap();
    let g = GridSpec::new(8, 4);
    let sccsi = || json(&eta_lower(&prob, &g).unwrap());
    let wz = || {
        let w = WzProblem::new(p.clone(), 0.3, 0.1, DistortionTable::hamming(2), None).unwrap();
        json(&theta_lower(&w, &GridSpec { refine_rounds: 0, ..g }).unwrap())
    };
    let be = || json(&be_exponent(&BeConfig { dgrid: 0.05, ..BeConfig::default() }).unwrap());
    let gauss = || json(&g3_profile(&GaussProblem::new(0.7, 0.4, 0.4).unwrap(), 1.0).unwrap());
    let sim = || {
        let src = SimSource::new(p.clone(), 8, 3).unwrap();
        let code = SccsiCode::build(&src, 0.6, 0.4, 2, &ChannelPicker::Uniform).unwrap();
        json(&run_sccsi_trials(&src, &code, 2000).unwrap())
    };
    let runs: [&dyn Fn() -> String; 5] = [&sccsi, &wz, &be, &gauss, &sim];
    let same = runs.iter().all(|f| f() == f());
    let el = t.elapsed();
    report(
        "12",
        same,
        "serialized results of every module rerun identically; CLI byte identity is checked in the cli crate tests",
        el,
    );
    assert!(same);
}

mod erased {
    pub trait Json {
        fn text(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn text(&self) -> String {
            serde_json::to_string(self).unwrap()
        }
    }
}
