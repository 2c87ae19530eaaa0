use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use localsample::analyze::{classify, ClassifyParams};
use localsample::decompose::{check_convexity, moment_profile, nearest_mixture, vandermonde_decompose, FitLevel};
use localsample::dist::{
    kolmogorov, make_named, output_distribution_with_cap, tv, ExactDistribution, Named, NamedDistribution,
    WeightDistribution, DEFAULT_ENUM_CAP_BITS,
};
use localsample::exact::{format_rational, parse_rational, to_f64};
use localsample::experiments::{sweep, sweep_csv, verify_and_example, SweepConfig};
use localsample::learner::{learn, LearnSource, SampleBatch, DEFAULT_SAMPLE_CONSTANT};
use localsample::localfn::{parse_bits, LocalFunction};
use localsample::mixture::MixtureSpec;
use localsample::samplers::{build_and_example, build_biased, build_evens, build_mixture, build_odds, SamplerBlueprint};
use localsample::{Error, Result};

#[derive(Parser)]
#[command(name = "localsample", version, about = "Exact tools for locally sampleable distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuildKind {
    Evens,
    Odds,
    Biased,
    Mixture,
    AndExample,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum NamedKind {
    Evens,
    Odds,
    Uniform,
    Biased,
    Binomial,
    FixedWeight,
    Point,
    Signed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    String,
    Weight,
}

impl From<Level> for FitLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::String => FitLevel::String,
            Level::Weight => FitLevel::Weight,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a local function file.
    Build {
        kind: BuildKind,
        #[arg(long)]
        n: Option<usize>,
        /// Bias numerator for `biased`.
        #[arg(long)]
        a: Option<u64>,
        #[arg(long)]
        d: Option<usize>,
        /// Input count for `random`.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Blueprint JSON for `mixture`.
        #[arg(long)]
        blueprint: Option<PathBuf>,
        /// MixtureSpec JSON for `mixture` (needs a granularity and --n).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write a named distribution file.
    Named {
        kind: NamedKind,
        #[arg(long)]
        n: usize,
        /// Bias for `biased` / `binomial`, e.g. 1/4.
        #[arg(long)]
        gamma: Option<String>,
        /// Weight for `fixed-weight`.
        #[arg(long)]
        k: Option<usize>,
        /// Bit string for `point`.
        #[arg(long)]
        point: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Exact output distribution of a local function file.
    Dist {
        function: PathBuf,
        /// Emit the weight distribution instead of the dense one.
        #[arg(long)]
        weights: bool,
        #[arg(long, default_value_t = DEFAULT_ENUM_CAP_BITS)]
        max_enum_bits: u32,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Total variation distance between two distribution files.
    Tv { p: PathBuf, q: PathBuf },
    /// Kolmogorov distance between the weight laws of two distribution files.
    Kolmogorov { p: PathBuf, q: PathBuf },
    /// Exact decomposition of a symmetric distribution into the canonical family.
    Decompose {
        dist: PathBuf,
        #[arg(long)]
        d: u32,
        /// Also report the nearest convex mixture at this level.
        #[arg(long)]
        nearest: Option<Level>,
        /// Write the moment profile as CSV.
        #[arg(long)]
        moments_csv: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Condition on high-degree inputs and rebuild a mixture.
    Classify {
        function: PathBuf,
        #[arg(long)]
        d: u32,
        #[arg(long = "A", default_value_t = 2.0)]
        a: f64,
        /// Concentration radius; defaults to 0.1 * 2^-d.
        #[arg(long)]
        radius: Option<String>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_ENUM_CAP_BITS)]
        max_enum_bits: u32,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Learn a mixture from a function or a sample file.
    Learn {
        #[arg(long, conflicts_with_all = ["samples", "weights_file"])]
        function: Option<PathBuf>,
        /// Text samples, one bit string per line.
        #[arg(long, conflicts_with = "weights_file")]
        samples: Option<PathBuf>,
        /// Binary weight list (u16 little endian, n first).
        #[arg(long)]
        weights_file: Option<PathBuf>,
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Constant in the sample count ceil(K / eps^2).
        #[arg(long = "K", default_value_t = DEFAULT_SAMPLE_CONSTANT)]
        k: f64,
        #[arg(long)]
        deviations_csv: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Check the 3-local AND construction against its signed formula.
    VerifyExample {
        #[arg(long)]
        n: usize,
    },
    /// Classify a seeded batch of random local functions.
    Sweep {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Locality of the random functions.
        #[arg(long)]
        d: usize,
        /// Family parameter used for classification and fitting.
        #[arg(long)]
        fit_d: u32,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "A", default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_ENUM_CAP_BITS)]
        max_enum_bits: u32,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_function(path: &Path) -> Result<LocalFunction> {
    let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let f = LocalFunction::from_json(&text)?;
    let report = f.validate();
    if let Some(v) = report.violations.first() {
        return Err(Error::Input(format!("invalid local function: {} (gate {:?})", v.rule, v.gate)));
    }
    Ok(f)
}

/// Dense or weight distribution file.
fn read_distribution(path: &Path) -> Result<Named> {
    let v = read_json(path)?;
    if v.get("weights").is_some() {
        Ok(Named::Weights(WeightDistribution::from_json(&v)?))
    } else {
        Ok(Named::Strings(ExactDistribution::from_json(&v)?))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Input(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Parameter(format!("missing --{flag}")))
}

fn rational_json(r: &localsample::exact::Rational) -> Value {
    json!({"exact": format_rational(r), "value": to_f64(r)})
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Build {
            kind,
            n,
            a,
            d,
            m,
            seed,
            blueprint,
            spec,
            out,
        } => {
            let f = match kind {
                BuildKind::Evens => build_evens(need(n, "n")?)?,
                BuildKind::Odds => build_odds(need(n, "n")?)?,
                BuildKind::Biased => build_biased(need(n, "n")?, need(a, "a")?, need(d, "d")? as u32)?,
                BuildKind::AndExample => build_and_example(need(n, "n")?)?,
                BuildKind::Random => LocalFunction::random(need(n, "n")?, need(m, "m")?, need(d, "d")?, seed)?,
                BuildKind::Mixture => {
                    let bp = match (blueprint, spec) {
                        (Some(b), None) => SamplerBlueprint::from_json(&read_json(&b)?)?,
                        (None, Some(s)) => SamplerBlueprint::from_spec(need(n, "n")?, &MixtureSpec::from_json(&read_json(&s)?)?)?,
                        _ => return Err(Error::Parameter("mixture needs exactly one of --blueprint, --spec".into())),
                    };
                    build_mixture(&bp)?
                }
            };
            emit(out.as_deref(), &f.to_json())?;
        }
        Command::Named {
            kind,
            n,
            gamma,
            k,
            point,
            out,
        } => {
            let gamma = gamma.as_deref().map(parse_rational).transpose()?;
            let named = match kind {
                NamedKind::Signed => Named::Strings(localsample::samplers::signed_example(n)?),
                other => {
                    let tag = match other {
                        NamedKind::Evens => NamedDistribution::Evens,
                        NamedKind::Odds => NamedDistribution::Odds,
                        NamedKind::Uniform => NamedDistribution::Uniform,
                        NamedKind::Biased => NamedDistribution::BiasedProduct(need(gamma, "gamma")?),
                        NamedKind::Binomial => NamedDistribution::Binomial(need(gamma, "gamma")?),
                        NamedKind::FixedWeight => NamedDistribution::FixedWeight(need(k, "k")?),
                        NamedKind::Point => NamedDistribution::Point(parse_bits(&need(point, "point")?)?),
                        NamedKind::Signed => unreachable!("handled above"),
                    };
                    make_named(&tag, n)?
                }
            };
            let v = match named {
                Named::Strings(p) => p.to_json(),
                Named::Weights(w) => w.to_json(),
            };
            emit(out.as_deref(), &pretty(&v))?;
        }
        Command::Dist {
            function,
            weights,
            max_enum_bits,
            out,
        } => {
            let f = read_function(&function)?;
            let p = output_distribution_with_cap(&f, max_enum_bits)?;
            let v = if weights { p.weight_distribution().to_json() } else { p.to_json() };
            emit(out.as_deref(), &pretty(&v))?;
        }
        Command::Tv { p, q } => {
            let d = match (read_distribution(&p)?, read_distribution(&q)?) {
                (Named::Strings(a), Named::Strings(b)) => tv(&a, &b)?,
                (a, b) => a.weights().tv(&b.weights())?,
            };
            emit(None, &json!({"tv": rational_json(&d)}).to_string())?;
        }
        Command::Kolmogorov { p, q } => {
            let d = kolmogorov(&read_distribution(&p)?.weights(), &read_distribution(&q)?.weights())?;
            emit(None, &json!({"kolmogorov": rational_json(&d)}).to_string())?;
        }
        Command::Decompose {
            dist,
            d,
            nearest,
            moments_csv,
            out,
        } => {
            let named = read_distribution(&dist)?;
            let profile = match &named {
                Named::Strings(p) => {
                    if !p.is_symmetric() {
                        return Err(Error::Precondition("decomposition needs a symmetric distribution".into()));
                    }
                    moment_profile(p)?
                }
                Named::Weights(w) => localsample::decompose::weight_moment_profile(w)?,
            };
            if let Some(path) = moments_csv {
                emit(Some(&path), &profile.to_csv())?;
            }
            let spec = vandermonde_decompose(&profile, d)?;
            let conv = check_convexity(&spec, &localsample::exact::rat(0, 1));
            let mut v = json!({
                "spec": spec.to_json(None),
                "representable": conv.representable,
                "witness": conv.witness.to_string(),
                "witness_value": format_rational(&conv.witness_value),
            });
            if let Some(level) = nearest {
                let p = match named {
                    Named::Strings(p) => p,
                    Named::Weights(w) => w.to_symmetric()?,
                };
                v["nearest"] = nearest_mixture(&p, d, level.into())?.to_json();
            }
            emit(out.as_deref(), &pretty(&v))?;
        }
        Command::Classify {
            function,
            d,
            a,
            radius,
            k,
            max_enum_bits,
            format,
            out,
        } => {
            let f = read_function(&function)?;
            let mut params = ClassifyParams::new(d);
            params.a = a;
            params.k = k;
            params.cap_bits = max_enum_bits;
            if let Some(r) = radius {
                params.radius = parse_rational(&r)?;
            }
            let r = classify(&f, &params)?;
            let text = match format {
                Format::Json => pretty(&r.to_json()),
                Format::Csv => r.to_csv(),
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Learn {
            function,
            samples,
            weights_file,
            d,
            eps,
            seed,
            k,
            deviations_csv,
            out,
        } => {
            let outcome = if let Some(path) = function {
                let f = read_function(&path)?;
                learn(LearnSource::Function(&f), d, eps, seed, k)?
            } else {
                let batch = if let Some(path) = samples {
                    let file = fs::File::open(&path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
                    SampleBatch::read_text(io::BufReader::new(file))?
                } else if let Some(path) = weights_file {
                    let file = fs::File::open(&path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
                    SampleBatch::read_weights(file)?
                } else {
                    return Err(Error::Parameter("learn needs --function, --samples or --weights-file".into()));
                };
                learn(LearnSource::Samples(&batch), d, eps, seed, k)?
            };
            if let Some(path) = deviations_csv {
                emit(Some(&path), &outcome.deviations_csv())?;
            }
            emit(out.as_deref(), &pretty(&outcome.to_json()))?;
        }
        Command::VerifyExample { n } => {
            let check = verify_and_example(n)?;
            let mut text = check.lines().join("\n");
            text.push_str(&format!("\nn={n} overall: {}\n", if check.pass() { "pass" } else { "FAIL" }));
            emit(None, &text)?;
            if !check.pass() {
                return Ok(1);
            }
        }
        Command::Sweep {
            n,
            m,
            d,
            fit_d,
            count,
            seed,
            a,
            k,
            max_enum_bits,
            out,
        } => {
            let mut params = ClassifyParams::new(fit_d);
            params.a = a;
            params.k = k;
            params.cap_bits = max_enum_bits;
            let cfg = SweepConfig {
                n,
                m,
                d,
                count,
                seed,
                params,
            };
            let rows = sweep(&cfg)?;
            emit(out.as_deref(), &sweep_csv(&cfg, &rows))?;
        }
    }
    Ok(0)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format(_) => 2,
        Error::Input(_) | Error::Parameter(_) | Error::Precondition(_) => 3,
        Error::Resource(_) => 4,
    }
}

fn error_record(kind: &str, message: &str, code: u8) {
    let rec = json!({"error": kind, "message": message, "exit_code": code});
    eprintln!("{rec}");
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("THREADS") {
        let threads: usize = v
            .parse()
            .map_err(|_| Error::Parameter(format!("THREADS = {v:?} is not a number")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Parameter(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            error_record("parse", e.to_string().trim(), 2);
            return ExitCode::from(2);
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = exit_code(&e);
            error_record(e.kind(), &e.to_string(), code);
            ExitCode::from(code)
        }
    }
}
