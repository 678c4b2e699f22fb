//! `sideinfo`: exponent bounds, figure data and code simulations from JSON
//! problem files.

mod output;
mod validate;

use clap::{Args, Parser, Subcommand};
use output::{csv, emit, json, num, Unit};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sideinfo::erasure::{be_exponent, two_sided_exponent, BeConfig};
use sideinfo::gaussian::{g3_profile, marton_gauss, theta_gauss_lower, theta_gauss_upper, GaussProblem};
use sideinfo::sccsi::{eta_lower, eta_sp, eta_upper, SccsiProblem};
use sideinfo::sim::{
    empirical_exponent, run_sccsi_trials, run_wz_trials, ChannelPicker, SccsiCode, SimSource, TrialStats, WzCode,
};
use sideinfo::wz::{theta_lower, theta_upper, xi_exponents, FunctionalProblem, WzProblem};
use sideinfo::{Error, ExtReal, GridSpec};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_BUDGET: u8 = 4;

#[derive(Parser)]
#[command(name = "sideinfo", version, about = "Error exponents for source coding with side information")]
struct Cli {
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Expected unit; rejected if the subcommand reports in the other one.
    #[arg(long, global = true, value_enum)]
    unit: Option<Unit>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy, Serialize)]
struct GridArgs {
    /// Denominator of the distribution grids.
    #[arg(long, default_value_t = GridSpec::default().resolution)]
    resolution: usize,
    /// Denominator of the test-channel grids.
    #[arg(long, default_value_t = GridSpec::default().channel_resolution)]
    channel_resolution: usize,
    /// Local refinement rounds after the grid pass.
    #[arg(long, default_value_t = GridSpec::default().refine_rounds)]
    refine_rounds: usize,
}

impl GridArgs {
    fn spec(&self) -> GridSpec {
        GridSpec { refine_rounds: self.refine_rounds, ..GridSpec::new(self.resolution, self.channel_resolution) }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Helper-problem bounds (JSON report).
    Sccsi {
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Wyner-Ziv bounds (JSON report).
    Wz {
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Binary-erasure G1/G2 curves over the test-channel erasure level.
    BeFig2 {
        #[command(flatten)]
        be: BeArgs,
    },
    /// Binary-erasure exponent against rate, with the two-sided exponent.
    BeFig3 {
        #[command(flatten)]
        be: BeArgs,
        #[command(flatten)]
        rates: RateArgs,
    },
    /// Gaussian G3 profile over the test-channel correlation.
    GaussFig4 {
        #[command(flatten)]
        gauss: GaussArgs,
        #[arg(long, default_value_t = 1.0)]
        sigma_x2: f64,
    },
    /// Gaussian lower and upper exponents against rate.
    GaussFig5 {
        #[command(flatten)]
        gauss: GaussArgs,
        #[command(flatten)]
        rates: RateArgs,
    },
    /// Functional source coding exponents (JSON report).
    Functional {
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Monte Carlo runs of the type-class codes.
    Simulate {
        #[arg(value_enum)]
        scheme: Scheme,
        #[arg(long)]
        problem: PathBuf,
        /// Blocklengths: `a..b`, `a..b:step` or a comma list.
        #[arg(long, default_value = "6..12:2")]
        n: String,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Test channel source.
        #[arg(long, value_enum, default_value_t = PickerArg::Witness)]
        picker: PickerArg,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Checks a problem file without optimizing.
    Validate {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum)]
        kind: validate::Kind,
        #[arg(long, value_enum)]
        request: Option<validate::Request>,
    },
}

#[derive(Args, Clone, Serialize)]
struct BeArgs {
    /// JSON base config; flags below override it.
    #[arg(long)]
    #[serde(skip)]
    problem: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    dgrid: Option<f64>,
}

impl BeArgs {
    fn config(&self) -> Result<BeConfig, Failure> {
        let mut c: BeConfig = match &self.problem {
            Some(p) => read_json(p)?,
            None => BeConfig::default(),
        };
        c.p = self.p.unwrap_or(c.p);
        c.delta_target = self.delta.unwrap_or(c.delta_target);
        c.rate = self.rate.unwrap_or(c.rate);
        c.kappa = self.kappa.unwrap_or(c.kappa);
        c.dgrid = self.dgrid.unwrap_or(c.dgrid);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Clone, Serialize)]
struct GaussArgs {
    /// JSON base problem (may carry a `grid`); flags below override it.
    #[arg(long)]
    #[serde(skip)]
    problem: Option<PathBuf>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
}

impl GaussArgs {
    fn problem(&self) -> Result<GaussProblem, Failure> {
        let mut g: GaussProblem = match &self.problem {
            Some(p) => read_problem(p, validate::Kind::Gauss)?,
            None => GaussProblem::new(0.7, 0.4, 0.4)?,
        };
        g.zeta = self.zeta.unwrap_or(g.zeta);
        g.delta = self.delta.unwrap_or(g.delta);
        g.rate = self.rate.unwrap_or(g.rate);
        g.validate()?;
        Ok(g)
    }
}

#[derive(Args, Clone, Copy, Serialize)]
struct RateArgs {
    #[arg(long)]
    rate_lo: Option<f64>,
    #[arg(long)]
    rate_hi: Option<f64>,
    #[arg(long)]
    rate_step: Option<f64>,
}

impl RateArgs {
    fn points(&self, lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, Failure> {
        let (lo, hi, step) = (self.rate_lo.unwrap_or(lo), self.rate_hi.unwrap_or(hi), self.rate_step.unwrap_or(step));
        if !(step > 0.0 && lo <= hi) {
            return Err(Failure::usage("rate range needs lo <= hi and a positive step"));
        }
        let k = ((hi - lo) / step + 1e-9).floor() as usize;
        Ok((0..=k).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Scheme {
    Sccsi,
    Wz,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PickerArg {
    /// Argmax test channel of the matching lower bound.
    Witness,
    /// Uniform rows (helper scheme only).
    Uniform,
}

/// Failure carrying its exit code and a machine-readable record.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, kind: "usage", message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) => Failure { code: EXIT_VALIDATION, kind: "invalid_argument", message: m },
            Error::Config(m) => Failure { code: EXIT_USAGE, kind: "config", message: m },
            Error::Budget(m) => Failure { code: EXIT_BUDGET, kind: "budget", message: m },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_USAGE, kind: "io", message: e.to_string() }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Reads a problem file; when it does not parse, the validator explains why.
fn read_problem<T: DeserializeOwned>(path: &Path, kind: validate::Kind) -> Result<T, Failure> {
    let v: serde_json::Value = read_json(path)?;
    serde_json::from_value(v.clone()).map_err(|e| {
        let d = validate::diagnose(&v, kind, None);
        if d.ok {
            return Failure::usage(format!("{}: {e}", path.display()));
        }
        let list: Vec<String> = d.violations.iter().map(|x| format!("{}: {}", x.field, x.message)).collect();
        Failure { code: EXIT_VALIDATION, kind: "validation", message: list.join("; ") }
    })
}

fn check_unit(requested: Option<Unit>, native: Unit) -> Result<Unit, Failure> {
    match requested {
        Some(u) if u != native => {
            Err(Failure::usage(format!("this subcommand reports in {}, not {}", native.name(), u.name())))
        }
        _ => Ok(native),
    }
}

/// Parses `a..b`, `a..b:step` or `a,b,c`.
fn parse_blocklengths(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::usage(format!("cannot parse blocklengths {s:?}"));
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = rest.split_once(':').unwrap_or((rest, "1"));
        let (lo, hi, step): (usize, usize, usize) =
            (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?, step.trim().parse().map_err(|_| bad())?);
        if step == 0 || lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).step_by(step).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

#[derive(Serialize)]
struct SccsiOut {
    eta_lower: sideinfo::report::ExponentReport,
    eta_upper: Option<sideinfo::report::ExponentReport>,
    eta_upper_note: Option<String>,
    eta_sp: sideinfo::report::ExponentReport,
}

#[derive(Serialize)]
struct WzOut {
    theta_lower: sideinfo::report::ExponentReport,
    theta_upper: ExtReal,
}

#[derive(Serialize)]
struct ProblemConfig<'a, P: Serialize> {
    problem: &'a P,
    grid: GridArgs,
}

#[derive(Serialize)]
struct SimConfig<'a, P: Serialize> {
    scheme: Scheme,
    problem: &'a P,
    n: &'a [usize],
    trials: u64,
    seed: u64,
    picker: PickerArg,
    grid: GridArgs,
}

fn stats_rows(stats: &[TrialStats]) -> Vec<Vec<String>> {
    stats
        .iter()
        .map(|s| {
            vec![s.n.to_string(), s.trials.to_string(), s.errors.to_string(), num(s.p_hat()), num(s.ci_lo), num(s.ci_hi)]
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    let out = cli.out.as_deref();
    let text = match cli.command {
        Command::Sccsi { problem, grid } => {
            let unit = check_unit(cli.unit, Unit::Bits)?;
            let prob: SccsiProblem = read_problem(&problem, validate::Kind::Sccsi)?;
            prob.validate()?;
            let g = grid.spec();
            let (eta_upper, eta_upper_note) = match eta_upper(&prob, &g) {
                Ok(r) => (Some(r), None),
                Err(Error::InvalidArgument(m)) => (None, Some(m)),
                Err(e) => return Err(e.into()),
            };
            let body = SccsiOut { eta_lower: eta_lower(&prob, &g)?, eta_upper, eta_upper_note, eta_sp: eta_sp(&prob, &g)? };
            json(&ProblemConfig { problem: &prob, grid }, unit, &body)
        }
        Command::Wz { problem, grid } => {
            let unit = check_unit(cli.unit, Unit::Bits)?;
            let prob: WzProblem = read_problem(&problem, validate::Kind::Wz)?;
            prob.validate()?;
            let g = grid.spec();
            let body = WzOut { theta_lower: theta_lower(&prob, &g)?, theta_upper: theta_upper(&prob, &g)? };
            json(&ProblemConfig { problem: &prob, grid }, unit, &body)
        }
        Command::Functional { problem, grid } => {
            let unit = check_unit(cli.unit, Unit::Bits)?;
            let prob: FunctionalProblem = read_problem(&problem, validate::Kind::Functional)?;
            prob.validate()?;
            json(&ProblemConfig { problem: &prob, grid }, unit, &xi_exponents(&prob, &grid.spec())?)
        }
        Command::BeFig2 { be } => {
            let unit = check_unit(cli.unit, Unit::Bits)?;
            let cfg = be.config()?;
            let res = be_exponent(&cfg)?;
            let rows: Vec<Vec<String>> =
                res.curve.iter().map(|c| vec![num(c.delta), c.g1.to_string(), c.g2.to_string()]).collect();
            csv(&cfg, unit, &["delta", "g1_bits", "g2_bits"], &rows)
        }
        Command::BeFig3 { be, rates } => {
            let unit = check_unit(cli.unit, Unit::Bits)?;
            let cfg = be.config()?;
            let mut rows = Vec::new();
            for r in rates.points(0.36, 0.48, 0.01)? {
                let c = cfg.with_rate(r);
                c.validate()?;
                rows.push(vec![num(r), be_exponent(&c)?.value.to_string(), two_sided_exponent(r, &c)?.to_string()]);
            }
            #[derive(Serialize)]
            struct Fig3<'a> {
                base: &'a BeConfig,
                rates: RateArgs,
            }
            csv(&Fig3 { base: &cfg, rates }, unit, &["rate", "exponent_bits", "two_sided_bits"], &rows)
        }
        Command::GaussFig4 { gauss, sigma_x2 } => {
            let unit = check_unit(cli.unit, Unit::Nats)?;
            let prob = gauss.problem()?;
            let rows: Vec<Vec<String>> =
                g3_profile(&prob, sigma_x2)?.into_iter().map(|(r, v)| vec![num(r), v.to_string()]).collect();
            #[derive(Serialize)]
            struct Fig4<'a> {
                problem: &'a GaussProblem,
                sigma_x2: f64,
            }
            csv(&Fig4 { problem: &prob, sigma_x2 }, unit, &["rho_xz", "g3_nats"], &rows)
        }
        Command::GaussFig5 { gauss, rates } => {
            let unit = check_unit(cli.unit, Unit::Nats)?;
            let prob = gauss.problem()?;
            let mut rows = Vec::new();
            for r in rates.points(0.15, 0.6, 0.05)? {
                let p = GaussProblem { rate: r, ..prob };
                let lower = theta_gauss_lower(&p)?.value;
                let upper = theta_gauss_upper(&p)?;
                rows.push(vec![num(r), lower.to_string(), upper.to_string(), num(marton_gauss(r, p.delta))]);
            }
            #[derive(Serialize)]
            struct Fig5<'a> {
                base: &'a GaussProblem,
                rates: RateArgs,
            }
            csv(&Fig5 { base: &prob, rates }, unit, &["rate_nats", "lower_nats", "upper_nats", "no_si_nats"], &rows)
        }
        Command::Simulate { scheme, problem, n, trials, seed, picker, grid } => {
            let unit = check_unit(cli.unit, Unit::Bits)?;
            let ns = parse_blocklengths(&n)?;
            if trials == 0 {
                return Err(Failure::usage("trials must be at least 1"));
            }
            let g = grid.spec();
            let mut stats = Vec::new();
            let text_for = |prob: &dyn erased::Echo, stats: &[TrialStats]| -> Result<String, Failure> {
                let slope = if stats.len() >= 3 { Some(empirical_exponent(stats)?) } else { None };
                let mut rows = stats_rows(stats);
                if let Some(s) = slope {
                    rows.push(vec![format!("# empirical_exponent={}", serde_json::to_string(&s).expect("serializes"))]);
                }
                let cfg = SimConfig { scheme, problem: &prob.value(), n: &ns, trials, seed, picker, grid };
                Ok(csv(&cfg, unit, &["n", "trials", "errors", "p_hat", "ci_lo", "ci_hi"], &rows))
            };
            match scheme {
                Scheme::Sccsi => {
                    let prob: SccsiProblem = read_problem(&problem, validate::Kind::Sccsi)?;
                    prob.validate()?;
                    let s_size = prob.s_size();
                    let chooser = match picker {
                        PickerArg::Uniform => ChannelPicker::Uniform,
                        PickerArg::Witness => ChannelPicker::from_witness(eta_lower(&prob, &g)?.witness.channel.as_ref()),
                    };
                    for &k in &ns {
                        let src = SimSource::new(prob.p_xy.clone(), k, seed)?;
                        let code = SccsiCode::build(&src, prob.r1, prob.r2, s_size, &chooser)?;
                        stats.push(run_sccsi_trials(&src, &code, trials)?);
                    }
                    text_for(&prob, &stats)?
                }
                Scheme::Wz => {
                    let prob: WzProblem = read_problem(&problem, validate::Kind::Wz)?;
                    prob.validate()?;
                    if picker == PickerArg::Uniform {
                        return Err(Failure::usage("the Wyner-Ziv simulation takes its channel and map from the witness"));
                    }
                    let report = theta_lower(&prob, &g)?;
                    let (Some(ch), Some(table)) = (report.witness.channel.as_ref(), report.witness.f.clone()) else {
                        return Err(Failure {
                            code: EXIT_VALIDATION,
                            kind: "invalid_argument",
                            message: "lower bound has no witness (infinite exponent); nothing to simulate".into(),
                        });
                    };
                    let f = sideinfo::wz::ReproductionFn::new(prob.ny(), prob.z_size(), table)?;
                    let chooser = ChannelPicker::Fixed(ch.clone());
                    for &k in &ns {
                        let src = SimSource::new(prob.p_xy.clone(), k, seed)?;
                        let code = WzCode::build(&src, prob.rate, prob.delta, &prob.dist, &chooser, &f)?;
                        stats.push(run_wz_trials(&src, &code, trials)?);
                    }
                    text_for(&prob, &stats)?
                }
            }
        }
        Command::Validate { problem, kind, request } => {
            let v: serde_json::Value = read_json(&problem)?;
            let d = validate::diagnose(&v, kind, request);
            let unit = match kind {
                validate::Kind::Gauss => Unit::Nats,
                _ => Unit::Bits,
            };
            #[derive(Serialize)]
            struct ValidateConfig<'a> {
                problem: &'a serde_json::Value,
                kind: validate::Kind,
                request: Option<validate::Request>,
            }
            let text = json(&ValidateConfig { problem: &v, kind, request }, unit, &d);
            emit(out, &text)?;
            if !d.ok {
                return Err(Failure {
                    code: EXIT_VALIDATION,
                    kind: "validation",
                    message: format!("{} violation(s)", d.violations.len()),
                });
            }
            return Ok(());
        }
    };
    emit(out, &text)?;
    Ok(())
}

/// Lets the simulate arm echo either problem type.
mod erased {
    pub trait Echo {
        fn value(&self) -> serde_json::Value;
    }

    impl<T: serde::Serialize> Echo for T {
        fn value(&self) -> serde_json::Value {
            serde_json::to_value(self).expect("problems serialize")
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let record = serde_json::json!({ "error": f.kind, "message": f.message });
            eprintln!("{record}");
            ExitCode::from(f.code)
        }
    }
}
