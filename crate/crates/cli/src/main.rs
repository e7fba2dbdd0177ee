//! Command line front end over the library: curve censuses, the constants
//! behind their predictions, matrix densities, convergence tables, and the
//! cross-check suites, all with machine-readable output.
//!
//! Exit codes: 0 success, 1 verification failure (a suite found a
//! counterexample or an internal invariant broke), 2 usage error, 3 resource,
//! cache, or I/O failure. Every command is deterministic: identical arguments
//! produce byte-identical standard output regardless of thread count.
//! Warnings and run summaries go to standard error, so redirected output
//! stays clean CSV or JSON.

use clap::{Args, Parser, Subcommand};
use frobdisc::census::{
    box_average_demo, cache_metadata, census_range, write_report, CensusConfig, CensusRun,
};
use frobdisc::constants::{main_constant, main_constant_alt, EulerProductValue, DEFAULT_PRIME_CUT};
use frobdisc::gl2::{count_order_squarefree_factor, count_p1, count_p2, csf_generic, Gl2Count};
use frobdisc::sums::s_of_t_convergence;
use frobdisc::verify::{
    standard_targets, verify_census_equivalence, verify_constant_identity, verify_ct,
    verify_deuring, verify_gl2, verify_st,
};
use frobdisc::{fmt_sig, CongruenceTarget, Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "frobdisc",
    version,
    about = "Counts curves over F_p whose trace discriminant a_p^2 - 4p is \
             squarefree in a congruence class, and verifies the constants \
             and densities behind the predicted averages"
)]
struct Cli {
    /// Worker threads (overrides FROBDISC_THREADS; default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Census over all primes 5 <= p <= x, written as a CSV report.
    Census(CensusArgs),
    /// Truncated Euler product for the class constant.
    Constant(ConstantArgs),
    /// Rebuild the CSV report from an existing census cache.
    Report(ReportArgs),
    /// Run a cross-check suite; exits 1 if a counterexample is found.
    Verify {
        #[command(subcommand)]
        suite: VerifySuite,
    },
    /// Matrix counts over Z/l^beta behind the local densities.
    Gl2 {
        #[command(subcommand)]
        count: Gl2Command,
    },
    /// Convergence table of S(T)/T toward (3/2) times the constant, as CSV.
    SumSt(SumStArgs),
    /// Average class count over a small box of integral curves.
    BoxDemo(BoxDemoArgs),
}

/// The congruence class Delta(r, h), shared by every command that takes one.
#[derive(Args, Clone)]
struct TargetArgs {
    /// Residue r of the class.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    r: i64,
    /// Modulus h of the class (odd).
    #[arg(long, default_value_t = 1)]
    h: u64,
}

impl TargetArgs {
    fn target(&self) -> Result<CongruenceTarget> {
        let target = CongruenceTarget::new(self.r, self.h)?;
        warn_if_empty(&target);
        Ok(target)
    }
}

fn warn_if_empty(target: &CongruenceTarget) {
    if !target.gcd_rh_squarefree {
        eprintln!(
            "warning: (r, h) not square-free: gcd({}, {}) has a square factor, \
             so {target} contains no squarefree value and every count is 0",
            target.r, target.h
        );
    }
}

#[derive(Args)]
struct CensusArgs {
    /// Census bound: all primes 5 <= p <= x.
    #[arg(long)]
    x: u64,
    #[command(flatten)]
    target: TargetArgs,
    /// Primes up to this bound also run the direct O(p^3) enumeration and
    /// must agree with the class-number count.
    #[arg(long, default_value_t = 499)]
    direct_max: u64,
    /// Euler-product truncation behind the predicted values.
    #[arg(long, default_value_t = DEFAULT_PRIME_CUT)]
    prime_cut: u64,
    /// Resumable newline-delimited JSON cache of per-prime counts.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Write the CSV report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ConstantArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Euler-product truncation.
    #[arg(long, default_value_t = DEFAULT_PRIME_CUT)]
    prime_cut: u64,
    /// Evaluate by the character-sum route instead of the matrix route.
    #[arg(long)]
    alt: bool,
    /// Emit one JSON object with every local factor instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Census cache to rebuild from; x, r, h are read from its header.
    #[arg(long)]
    cache: PathBuf,
    /// Write the CSV report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Primes up to this bound also run the direct enumeration (pass the
    /// value the cache was built with to keep reports byte-identical).
    #[arg(long, default_value_t = 499)]
    direct_max: u64,
    /// Euler-product truncation behind the predicted values.
    #[arg(long, default_value_t = DEFAULT_PRIME_CUT)]
    prime_cut: u64,
}

#[derive(Subcommand)]
enum VerifySuite {
    /// Direct trace counts against (p - 1) H(t^2 - 4p) for all p <= pmax.
    Deuring {
        #[arg(long, default_value_t = 499)]
        pmax: u64,
    },
    /// Direct census against the class-number census on the standard classes.
    Census {
        #[arg(long, default_value_t = 499)]
        pmax: u64,
    },
    /// Character-sum closed form against the defining sum, plus
    /// multiplicativity over coprime pairs.
    Ct {
        /// Check odd prime powers up to this bound.
        #[arg(long, default_value_t = 2000)]
        nmax: u64,
        /// Check odd traces up to this bound.
        #[arg(long, default_value_t = 50)]
        tmax: u64,
    },
    /// The two Euler-product routes to the constant, factor by factor.
    ConstantIdentity {
        #[arg(long, default_value_t = 10_000)]
        prime_cut: u64,
    },
    /// Matrix densities against their closed forms.
    Gl2 {
        /// Odd primes to enumerate.
        #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
        ell: Vec<u64>,
    },
    /// S(T)/T convergence toward (3/2) times the constant.
    St {
        /// Trace bound T of the truncated sum.
        #[arg(long = "T", default_value_t = 2000)]
        t_max: u64,
        /// d-sum truncations R; the deviation must shrink along the list.
        #[arg(long = "R", value_delimiter = ',', default_value = "10,30,100")]
        r_list: Vec<u64>,
        /// Euler-product truncation for the predicted limit.
        #[arg(long, default_value_t = DEFAULT_PRIME_CUT)]
        prime_cut: u64,
    },
}

#[derive(Subcommand)]
enum Gl2Command {
    /// Matrices mod l whose discriminant tr^2 - 4 det is a nonzero square
    /// residue pattern counted by the squarefree density P1(l).
    P1 {
        /// Odd prime l.
        #[arg(long)]
        ell: u64,
    },
    /// Matrices mod l^max(alpha, 2) with tr^2 - 4 det nonzero mod l^2 and
    /// congruent to r mod l^alpha.
    P2 {
        /// Odd prime l.
        #[arg(long)]
        ell: u64,
        /// Congruence exponent alpha >= 0.
        #[arg(long, default_value_t = 1)]
        alpha: u32,
        /// Required residue of the discriminant mod l^alpha.
        #[arg(long, allow_hyphen_values = true)]
        r: i64,
    },
    /// Matrices mod l^2 whose group order det - tr + 1 is not divisible
    /// by l^2.
    Order {
        /// Odd prime l.
        #[arg(long)]
        ell: u64,
    },
    /// Generic-image constant: joint enumeration at the primes dividing m,
    /// closed local factors at every other odd prime up to the cut.
    Csf {
        #[command(flatten)]
        target: TargetArgs,
        /// Even modulus for the joint enumeration.
        #[arg(long, default_value_t = 2)]
        m: u64,
        /// Euler-product truncation.
        #[arg(long, default_value_t = DEFAULT_PRIME_CUT)]
        prime_cut: u64,
    },
}

#[derive(Args)]
struct SumStArgs {
    /// Trace bound T of the truncated sum.
    #[arg(long = "T")]
    t_max: u64,
    #[command(flatten)]
    target: TargetArgs,
    /// d-sum truncations R, each run with U = floor(sqrt(T)) R^2.
    #[arg(long = "R", value_delimiter = ',', default_value = "10,30,100")]
    r_list: Vec<u64>,
    /// Euler-product truncation for the predicted limit.
    #[arg(long, default_value_t = DEFAULT_PRIME_CUT)]
    prime_cut: u64,
}

#[derive(Args)]
struct BoxDemoArgs {
    /// Coefficient bound: |a| <= this.
    #[arg(long, default_value_t = 5)]
    a: u64,
    /// Coefficient bound: |b| <= this.
    #[arg(long, default_value_t = 5)]
    b: u64,
    /// Count primes of good reduction up to this bound.
    #[arg(long, default_value_t = 50)]
    x: u64,
    #[command(flatten)]
    target: TargetArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        // A closed pipe means the consumer has all it wants.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::from(0),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidArgument(_) => 2,
                Error::Invariant(_) => 1,
                Error::Resource(_) | Error::CacheCorrupt(_) | Error::Io(_) => 3,
            })
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("FROBDISC_THREADS") {
            Ok(s) => Some(s.parse::<usize>().map_err(|_| {
                Error::invalid(format!(
                    "FROBDISC_THREADS must be a positive integer, got {s:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    match requested {
        Some(n) => frobdisc::set_thread_count(n),
        None => Ok(()),
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Census(args) => cmd_census(args),
        Command::Constant(args) => cmd_constant(args),
        Command::Report(args) => cmd_report(args),
        Command::Verify { suite } => cmd_verify(suite),
        Command::Gl2 { count } => cmd_gl2(count),
        Command::SumSt(args) => cmd_sum_st(args),
        Command::BoxDemo(args) => cmd_box_demo(args),
    }
}

fn cmd_census(args: CensusArgs) -> Result<u8> {
    let target = args.target.target()?;
    let config = CensusConfig {
        direct_max: args.direct_max,
        prime_cut: args.prime_cut,
        cache: args.cache.clone(),
    };
    let run = census_range(args.x, &target, &config)?;
    write_report_to(&run, args.report.as_deref())?;
    eprintln!("{}", census_summary(&run));
    Ok(0)
}

fn cmd_constant(args: ConstantArgs) -> Result<u8> {
    let target = args.target.target()?;
    let value = if args.alt {
        main_constant_alt(&target, args.prime_cut)?
    } else {
        main_constant(&target, args.prime_cut)?
    };
    if args.json {
        println!("{}", euler_product_json(&value));
    } else {
        println!("constant = {}", fmt_sig(value.value));
        println!("tail bound <= {}", fmt_sig(value.tail_bound));
        println!("prime cut = {}", value.prime_cut);
        if value.vanishes {
            println!("the class is empty, the constant is exactly 0");
        }
    }
    Ok(0)
}

fn cmd_report(args: ReportArgs) -> Result<u8> {
    let (x, target) = cache_metadata(&args.cache)?;
    warn_if_empty(&target);
    let config = CensusConfig {
        direct_max: args.direct_max,
        prime_cut: args.prime_cut,
        cache: Some(args.cache.clone()),
    };
    let run = census_range(x, &target, &config)?;
    write_report_to(&run, args.out.as_deref())?;
    eprintln!("{}", census_summary(&run));
    Ok(0)
}

fn cmd_verify(suite: VerifySuite) -> Result<u8> {
    let report = match suite {
        VerifySuite::Deuring { pmax } => verify_deuring(pmax)?,
        VerifySuite::Census { pmax } => verify_census_equivalence(pmax, &standard_targets())?,
        VerifySuite::Ct { nmax, tmax } => verify_ct(nmax, tmax, &standard_targets())?,
        VerifySuite::ConstantIdentity { prime_cut } => {
            verify_constant_identity(prime_cut, &standard_targets())?
        }
        VerifySuite::Gl2 { ell } => verify_gl2(&ell)?,
        VerifySuite::St {
            t_max,
            r_list,
            prime_cut,
        } => verify_st(t_max, &r_list, prime_cut)?,
    };
    for line in &report.detail {
        println!("{line}");
    }
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    println!("{}: {} ({} checks)", report.suite, verdict, report.checks);
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_gl2(count: Gl2Command) -> Result<u8> {
    match count {
        Gl2Command::P1 { ell } => println!("{}", gl2_count_json(&count_p1(ell)?)),
        Gl2Command::P2 { ell, alpha, r } => {
            println!("{}", gl2_count_json(&count_p2(ell, alpha, r)?))
        }
        Gl2Command::Order { ell } => {
            println!("{}", gl2_count_json(&count_order_squarefree_factor(ell)?))
        }
        Gl2Command::Csf {
            target,
            m,
            prime_cut,
        } => {
            let target = target.target()?;
            let value = csf_generic(&target, prime_cut, m)?;
            println!("{}", euler_product_json(&value));
        }
    }
    Ok(0)
}

fn cmd_sum_st(args: SumStArgs) -> Result<u8> {
    let target = args.target.target()?;
    let rows = s_of_t_convergence(args.t_max, &target, &args.r_list, args.prime_cut)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(
        out,
        "# S(T)/T for T = {} in the class {} against the limit (3/2) c",
        args.t_max, target
    )?;
    writeln!(out, "R,U,S_over_T,limit,deviation")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.r_max,
            row.u_max,
            fmt_sig(row.s_over_t),
            fmt_sig(row.predicted),
            fmt_sig((row.s_over_t - row.predicted).abs())
        )?;
    }
    out.flush()?;
    Ok(0)
}

fn cmd_box_demo(args: BoxDemoArgs) -> Result<u8> {
    let target = args.target.target()?;
    let avg = box_average_demo(args.a, args.b, args.x, &target)?;
    println!(
        "{{\"curve_count\":{},\"total\":{},\"average\":{}}}",
        avg.curve_count,
        avg.total,
        fmt_sig(avg.average)
    );
    Ok(0)
}

fn write_report_to(run: &CensusRun, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p)?;
            let mut out = std::io::BufWriter::new(file);
            write_report(run, &mut out)?;
            out.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            write_report(run, &mut out)?;
        }
    }
    Ok(())
}

fn census_summary(run: &CensusRun) -> String {
    let agg = &run.aggregates;
    if run.target.gcd_rh_squarefree {
        format!(
            "A1 = {} (predicted {}, ratio {}); A2 = {} (predicted {}, ratio {}); {} primes, {} from cache",
            fmt_sig(agg.a1),
            fmt_sig(agg.predicted_a1),
            fmt_sig(agg.a1 / agg.predicted_a1),
            agg.a2,
            fmt_sig(agg.predicted_a2),
            fmt_sig(agg.a2 as f64 / agg.predicted_a2),
            run.records.len(),
            run.from_cache
        )
    } else {
        format!(
            "A1 = 0; A2 = 0; {} primes, {} from cache (empty class)",
            run.records.len(),
            run.from_cache
        )
    }
}

fn gl2_count_json(count: &Gl2Count) -> String {
    format!(
        "{{\"matching\":{},\"order\":{}}}",
        count.matching, count.group_order
    )
}

/// One JSON object for a truncated Euler product. Floats carry 12
/// significant digits; numerators and denominators are decimal strings so
/// factors never lose precision to a reader's number type.
fn euler_product_json(value: &EulerProductValue) -> String {
    let mut s = format!(
        "{{\"value\":{},\"tail_bound\":{},\"prime_cut\":{},\"vanishes\":{},\"prefactor\":\"{}/{}\",\"factors\":[",
        fmt_sig(value.value),
        fmt_sig(value.tail_bound),
        value.prime_cut,
        value.vanishes,
        value.prefactor.numer(),
        value.prefactor.denom(),
    );
    for (i, (ell, factor)) in value.factors.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!(
            "{{\"ell\":{},\"num\":\"{}\",\"den\":\"{}\"}}",
            ell,
            factor.numer(),
            factor.denom()
        ));
    }
    s.push_str("]}");
    s
}
