//! `matkummer` command-line tool.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid input,
//! 3 internal numeric error.

mod params;

use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use matkummer::dist::{beta_logkernel, kummer_logkernel, lognorm, wishart_logkernel, DistParams, NormOptions};
use matkummer::fecheck::{fit_samples, parse_fit_jsonl, verify_feq, FitOptions};
use matkummer::report::{to_json, Envelope};
use matkummer::rng::SeedSpec;
use matkummer::sampler::{sample_beta_many, sample_kummer_many, sample_pair_batch, sample_wishart_many, XLaw};
use matkummer::stats::DEFAULT_PERMUTATIONS;
use matkummer::statverify::{property_report, PropertyConfig};
use matkummer::symcone::{ConePoint, DomainPoint};
use matkummer::transform::verify_transform;
use matkummer::{Error, Result};

#[derive(Parser)]
#[command(name = "matkummer", version, about = "Matrix Kummer, Wishart and Beta laws on the positive definite cone")]
struct Cli {
    /// Worker threads (affects run time only, never output)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the report here instead of standard output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DistKind {
    Wishart,
    Beta,
    Kummer,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples as JSON lines
    Sample {
        #[arg(long, value_enum)]
        dist: DistKind,
        /// JSON object: wishart {p, sigma}, beta {p, q, r}, kummer {a, b, sigma}
        #[arg(long)]
        params: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream_id: u64,
        /// Emit (X, Y, U, V) quadruples with X ~ K(a, b, sigma), Y ~ Wishart(b - a, sigma)
        #[arg(long)]
        quadruple: bool,
    },
    /// Log density (or unnormalized log kernel) at a point
    Logpdf {
        #[arg(long, value_enum)]
        dist: DistKind,
        #[arg(long)]
        params: String,
        /// Matrix as [[...], ...] or {"r": .., "upper": [...]}
        #[arg(long)]
        x: String,
        /// Add the log normalizing constant
        #[arg(long)]
        normalized: bool,
        /// Seed of the importance sampler used for the r = 2 Kummer constant
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Round trip and Jacobian checks of the change of variables
    VerifyTransform {
        #[arg(long)]
        r: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Residuals of the functional equation and its lemmas
    VerifyFeq {
        #[arg(long)]
        r: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Monte Carlo check of the independence property
    VerifyProperty {
        #[arg(long)]
        r: usize,
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        /// Rate matrix; defaults to the identity
        #[arg(long)]
        sigma: Option<String>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream_id: u64,
        /// Use a Wishart X instead of a Kummer X; passes when independence is rejected
        #[arg(long)]
        negative_control: bool,
        #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
        n_perm: usize,
    },
    /// Fit the solution family to sampled f and g values (JSON lines, "-" for stdin)
    FitParams {
        #[arg(long)]
        input: PathBuf,
    },
}

enum Outcome {
    Pass,
    Fail,
}

struct Output {
    text: String,
    outcome: Outcome,
}

fn report<T: Serialize>(command: &str, value: &T, pass: bool) -> Result<Output> {
    Ok(Output {
        text: to_json(&Envelope::new(command, value))? + "\n",
        outcome: if pass { Outcome::Pass } else { Outcome::Fail },
    })
}

#[derive(Serialize)]
struct Draw<'a, T: Serialize> {
    index: usize,
    x: &'a T,
}

#[derive(Serialize)]
struct Quadruple<'a> {
    index: usize,
    x: &'a ConePoint,
    y: &'a ConePoint,
    u: &'a DomainPoint,
    v: &'a ConePoint,
}

fn draws_to_lines<T: Serialize>(xs: &[T]) -> Result<String> {
    let mut out = String::new();
    for (index, x) in xs.iter().enumerate() {
        out += &to_json(&Draw { index, x })?;
        out.push('\n');
    }
    Ok(out)
}

fn sample(kind: DistKind, params: &str, n: usize, s: SeedSpec, quadruple: bool) -> Result<Output> {
    let p = params::dist_params(kind, params)?;
    let text = match (p, quadruple) {
        (DistParams::Kummer(k), true) => {
            let batch = sample_pair_batch(&k, XLaw::Kummer, n, s)?;
            eprintln!("kummer acceptance rate {:.6}", batch.acceptance.rate());
            let mut out = String::new();
            for i in 0..batch.n {
                out +=
                    &to_json(&Quadruple { index: i, x: &batch.x[i], y: &batch.y[i], u: &batch.u[i], v: &batch.v[i] })?;
                out.push('\n');
            }
            out
        }
        (_, true) => return Err(Error::InvalidInput("--quadruple needs --dist kummer".into())),
        (DistParams::Wishart(w), false) => draws_to_lines(&sample_wishart_many(&w, n, s)?)?,
        (DistParams::Beta(b), false) => draws_to_lines(&sample_beta_many(&b, n, s)?)?,
        (DistParams::Kummer(k), false) => {
            let (xs, stats) = sample_kummer_many(&k, n, s)?;
            eprintln!("kummer acceptance rate {:.6}", stats.rate());
            draws_to_lines(&xs)?
        }
    };
    Ok(Output { text, outcome: Outcome::Pass })
}

#[derive(Serialize)]
struct LogpdfReport {
    params: DistParams,
    x: ConePoint,
    logkernel: f64,
    lognorm: Option<f64>,
    lognorm_stderr: Option<f64>,
    logpdf: Option<f64>,
}

fn logpdf(kind: DistKind, params: &str, x: &str, normalized: bool, seed: u64) -> Result<Output> {
    let p = params::dist_params(kind, params)?;
    let x = params::cone_point_str(x, "x")?;
    let logkernel = match &p {
        DistParams::Wishart(w) => wishart_logkernel(&x, w)?,
        DistParams::Beta(b) => beta_logkernel(&DomainPoint::new(x.clone())?, b)?,
        DistParams::Kummer(k) => kummer_logkernel(&x, k)?,
    };
    let norm = if normalized {
        let opts = NormOptions { seed: SeedSpec::new(seed, 0), ..NormOptions::default() };
        Some(lognorm(&p, &opts)?)
    } else {
        None
    };
    let rep = LogpdfReport {
        params: p,
        x,
        logkernel,
        lognorm: norm.map(|n| n.value),
        lognorm_stderr: norm.and_then(|n| n.stderr),
        logpdf: norm.map(|n| logkernel + n.value),
    };
    report("logpdf", &rep, true)
}

fn read_input(path: &PathBuf) -> Result<String> {
    let mut text = String::new();
    if path.as_os_str() == "-" {
        io::stdin().read_to_string(&mut text)
    } else {
        fs::File::open(path).and_then(|mut f| f.read_to_string(&mut text))
    }
    .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok(text)
}

fn run(command: Command) -> Result<Output> {
    match command {
        Command::Sample { dist, params, n, seed, stream_id, quadruple } => {
            sample(dist, &params, n, SeedSpec::new(seed, stream_id), quadruple)
        }
        Command::Logpdf { dist, params, x, normalized, seed } => logpdf(dist, &params, &x, normalized, seed),
        Command::VerifyTransform { r, n, seed } => {
            let rep = verify_transform(r, n, seed)?;
            report("verify-transform", &rep, rep.n_failures == 0)
        }
        Command::VerifyFeq { r, n, seed } => {
            let rep = verify_feq(r, n, seed)?;
            report("verify-feq", &rep, rep.pass)
        }
        Command::VerifyProperty { r, a, b, sigma, n, seed, stream_id, negative_control, n_perm } => {
            let sigma = match sigma {
                Some(text) => params::cone_point_str(&text, "sigma")?,
                None => ConePoint::identity(r),
            };
            if sigma.order() != r {
                return Err(Error::InvalidInput(format!("sigma has order {}, --r is {r}", sigma.order())));
            }
            let cfg = PropertyConfig::new(a, b, sigma, n, SeedSpec::new(seed, stream_id))
                .negative_control(negative_control)
                .permutations(n_perm);
            let rep = property_report(&cfg)?;
            if rep.underpowered {
                eprintln!("{}", rep.interpretation);
            }
            for c in rep.failed_criteria() {
                eprintln!("failed: {c}");
            }
            report("verify-property", &rep, rep.pass == Some(true))
        }
        Command::FitParams { input } => {
            let samples = parse_fit_jsonl(&read_input(&input)?)?;
            let rep = fit_samples(&samples, &FitOptions::default())?;
            for m in &rep.mismatch_reasons {
                eprintln!("model mismatch: {m}");
            }
            report("fit-params", &rep, !rep.model_mismatch)
        }
    }
}

fn write_output(out: &Option<PathBuf>, text: &str) -> io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    let result = pool.install(|| run(cli.command));
    match result {
        Ok(output) => {
            if let Err(e) = write_output(&cli.out, &output.text) {
                eprintln!("error: cannot write report: {e}");
                return ExitCode::from(2);
            }
            match output.outcome {
                Outcome::Pass => ExitCode::SUCCESS,
                Outcome::Fail => ExitCode::from(1),
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
