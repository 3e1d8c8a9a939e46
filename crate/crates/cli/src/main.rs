use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use robsens_core::analysis::{analyze, corpus_entry, reproduce, AnalysisOptions, CORPUS, GROUPS};
use robsens_core::bqp::{build, Sense};
use robsens_core::conic::{backend_from_env, write_dump};
use robsens_core::heuristics::{oracle_vertices, sample_bounds};
use robsens_core::instance::{AssumptionPolicy, Instance};
use robsens_core::relaxation::{build_relaxation, RelaxOptions};
use robsens_core::SolveContext;
use std::fs::File;
use std::io::{stdout, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "robsens", version, about = "Best- and worst-case optimal values of LPs under joint cost/rhs uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound q- and q+ for one instance file or corpus entry.
    Analyze {
        instance: String,
        #[command(flatten)]
        flags: Flags,
        /// Also evaluate the vertex oracle (polytopal sets only).
        #[arg(long)]
        oracle: bool,
        /// Solve the relaxation even when a convex shortcut applies.
        #[arg(long)]
        force_relaxation: bool,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Leave timings out of the key=value output.
        #[arg(long)]
        no_timings: bool,
    },
    /// Run a corpus entry or group and compare with the stored values.
    Reproduce {
        /// Entry name or one of: example, wendell, inventory, network, sysrisk, all.
        name: String,
        #[command(flatten)]
        flags: Flags,
        /// Corpus entries analysed in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Best and worst `p` over the vertices of a polytopal set.
    Oracle { instance: String },
    /// Extreme-point sampling only; optional CSV trial log.
    Sample {
        instance: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<String>,
    },
    /// Write the conic program of one relaxation in text form.
    DumpConic {
        instance: String,
        #[arg(long, value_enum, default_value_t = SenseArg::Best)]
        sense: SenseArg,
        #[command(flatten)]
        relax: RelaxFlags,
        #[arg(long)]
        out: Option<String>,
    },
    /// List corpus entries and groups.
    List,
}

#[derive(Args, Clone, Copy)]
struct RelaxFlags {
    /// Drop the complementarity rows H_i . Z = 0.
    #[arg(long)]
    no_complementarity: bool,
    #[arg(long)]
    no_rlt: bool,
    #[arg(long)]
    no_soc_rlt: bool,
}

impl RelaxFlags {
    fn options(self) -> RelaxOptions {
        RelaxOptions {
            complementarity: !self.no_complementarity,
            rlt: !self.no_rlt,
            soc_rlt: !self.no_soc_rlt,
            ..RelaxOptions::default()
        }
    }
}

#[derive(Args, Clone, Copy)]
struct Flags {
    #[command(flatten)]
    relax: RelaxFlags,
    /// Sampling trials (default: instance setting, else 10000).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip alternating improvement of the witnesses.
    #[arg(long)]
    no_improve: bool,
    /// Continue when neither P(0) nor D(0) is bounded.
    #[arg(long)]
    warn_assumptions: bool,
}

impl Flags {
    fn options(self) -> AnalysisOptions {
        AnalysisOptions {
            relax: self.relax.options(),
            samples: self.samples,
            seed: self.seed,
            improve: !self.no_improve,
            assumptions: self.warn_assumptions.then_some(AssumptionPolicy::Warn),
            ..AnalysisOptions::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Kv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SenseArg {
    Best,
    Worst,
}

/// A path when one exists, else a corpus entry.
fn load(spec: &str) -> Result<Instance> {
    if Path::new(spec).exists() {
        return Instance::load(spec).with_context(|| format!("reading {spec}"));
    }
    corpus_entry(spec).with_context(|| format!("`{spec}` is neither a file nor a corpus entry"))
}

fn context() -> Result<SolveContext> {
    Ok(SolveContext::new(backend_from_env()?))
}

fn run(cli: Cli) -> Result<bool> {
    let ctx = context()?;
    let mut out = stdout().lock();
    match cli.command {
        Command::Analyze {
            instance,
            flags,
            oracle,
            force_relaxation,
            format,
            no_timings,
        } => {
            let inst = load(&instance)?;
            let opts = AnalysisOptions {
                oracle: oracle.then_some(true),
                force_relaxation,
                ..flags.options()
            };
            let report = analyze(&ctx, &inst, &opts)?;
            match format {
                Format::Table => write!(out, "{}", report.table())?,
                Format::Kv => write!(out, "{}", report.key_values(!no_timings))?,
            }
            let mut ok = report.sandwich_holds();
            for e in &inst.expect {
                let actual = report.value(&e.key);
                if !actual.is_some_and(|v| e.check.holds(v)) {
                    eprintln!("expectation {} {} not met (actual {:?})", e.key, e.check, actual);
                    ok = false;
                }
            }
            Ok(ok)
        }
        Command::Reproduce { name, flags, jobs, format } => {
            let outcome = reproduce(&ctx, &name, flags.seed, &flags.options(), jobs)?;
            match format {
                Format::Table => write!(out, "{}", outcome.table())?,
                Format::Kv => write!(out, "{}", outcome.key_values())?,
            }
            Ok(outcome.passed())
        }
        Command::Oracle { instance } => {
            let inst = load(&instance)?;
            let (lp, mut set) = inst.model()?;
            set.check(&ctx)?;
            let r = oracle_vertices(&ctx, &lp, &set)?;
            writeln!(out, "instance={}", inst.name)?;
            writeln!(out, "oracle_minus={:.9e}", r.q_minus)?;
            writeln!(out, "oracle_plus={:.9e}", r.q_plus)?;
            writeln!(out, "vertices={}", r.vertices)?;
            writeln!(out, "skipped={}", r.skipped)?;
            writeln!(out, "exact_minus={}", r.exact_minus)?;
            writeln!(out, "exact_plus={}", r.exact_plus)?;
            Ok(true)
        }
        Command::Sample { instance, samples, seed, csv } => {
            let inst = load(&instance)?;
            let (lp, mut set) = inst.model()?;
            set.check(&ctx)?;
            let system = set.build_restricted(&ctx, &lp)?;
            let s = sample_bounds(&ctx, &lp, &system, samples, seed)?;
            writeln!(out, "instance={}", inst.name)?;
            writeln!(out, "v_minus={:.9e}", s.v_minus)?;
            writeln!(out, "v_plus={:.9e}", s.v_plus)?;
            writeln!(out, "samples={samples}")?;
            writeln!(out, "failed={}", s.failed)?;
            if let Some(path) = csv {
                s.write_csv(BufWriter::new(File::create(&path).with_context(|| format!("creating {path}"))?))?;
            }
            Ok(true)
        }
        Command::DumpConic { instance, sense, relax, out: path } => {
            let inst = load(&instance)?;
            let (lp, mut set) = inst.model()?;
            set.check(&ctx)?;
            let sense = match sense {
                SenseArg::Best => Sense::BestCase,
                SenseArg::Worst => Sense::WorstCase,
            };
            let qp = build(&lp, &set, sense)?;
            let relaxation = build_relaxation(&qp, relax.options())?;
            match path {
                Some(p) => write_dump(&relaxation.program, BufWriter::new(File::create(&p)?))?,
                None => write_dump(&relaxation.program, &mut out)?,
            }
            Ok(true)
        }
        Command::List => {
            for (name, _) in CORPUS {
                writeln!(out, "{name}")?;
            }
            writeln!(out, "groups: {}", GROUPS.join(", "))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
