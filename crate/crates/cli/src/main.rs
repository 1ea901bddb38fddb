use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use privelet::bench::{run_benchmark, run_timing, write_timing_csv, BenchConfig, DataSource};
use privelet::budget::suggested_split;
use privelet::query::{default_sanity_bound, format_queries, measure, parse_queries, write_results, PrefixSums};
use privelet::verify::{run_verification, VerifyLevel};
use privelet::{generate_synthetic, generate_workload, Dataset, FrequencyMatrix, MatrixFile, MechanismRegistry, Publisher, Schema};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "privelet", version, about = "Differentially private frequency-matrix publication")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PRIVELET_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its schema.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving schema.json and data.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the frequency matrix of a CSV dataset.
    Ingest {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
        #[arg(long)]
        out: PathBuf,
    },
    /// Publish a noisy frequency matrix.
    Publish {
        #[arg(long)]
        schema: PathBuf,
        /// Exact frequency matrix written by `ingest`.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        epsilon: f64,
        /// Comma-separated attributes kept out of the wavelet transform, or `auto`.
        #[arg(long, value_delimiter = ',')]
        split: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a random query workload.
    Workload {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer range-count queries on a matrix.
    Query {
        #[arg(long)]
        schema: PathBuf,
        /// Matrix to answer on (usually a published one).
        #[arg(long)]
        matrix: PathBuf,
        /// Exact matrix for error metrics.
        #[arg(long)]
        exact: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        /// Sanity bound for relative error (default 0.1% of the tuple count).
        #[arg(long)]
        sanity: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the workload benchmark and write one CSV per (method, epsilon).
    Bench {
        #[arg(long, required_unless_present = "schema")]
        n: Option<usize>,
        #[arg(long, required_unless_present = "schema")]
        m: Option<usize>,
        #[arg(long, requires = "data")]
        schema: Option<PathBuf>,
        #[arg(long, requires = "schema")]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "basic,privelet+")]
        methods: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.75,1,1.25")]
        epsilons: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        split: Vec<String>,
        #[arg(long, default_value_t = 40_000)]
        queries: usize,
        #[arg(long, default_value_t = 5)]
        buckets: usize,
        #[arg(long, default_value_t = 0.001)]
        sanity_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Time each publication phase over a grid of sizes.
    Time {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check sensitivity, linearity, round trips and noise variance against oracles.
    Verify {
        #[arg(long, value_enum, default_value_t = Level::Quick)]
        level: Level,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Quick,
    Full,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_schema(path: &Path) -> anyhow::Result<Schema> {
    Schema::load(path).with_context(|| format!("reading schema {}", path.display()))
}

fn load_matrix(schema: &Schema, path: &Path) -> anyhow::Result<FrequencyMatrix> {
    let file = MatrixFile::load(path).with_context(|| format!("reading matrix {}", path.display()))?;
    FrequencyMatrix::from_file(schema.clone(), file).with_context(|| format!("loading matrix {}", path.display()))
}

fn load_dataset(schema: Schema, path: &Path, delimiter: char) -> anyhow::Result<Dataset> {
    if !delimiter.is_ascii() {
        bail!("delimiter must be an ASCII character");
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Dataset::read_csv(schema, file, delimiter as u8).with_context(|| format!("reading {}", path.display()))
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Synth { n, m, seed, out_dir } => {
            let synth = generate_synthetic(n, m, seed)?;
            fs::create_dir_all(&out_dir)?;
            synth.dataset.schema().save(out_dir.join("schema.json"))?;
            synth
                .dataset
                .write_csv(BufWriter::new(File::create(out_dir.join("data.csv"))?), b',')?;
            for note in &synth.notes {
                eprintln!("note: {note}");
            }
        }
        Command::Ingest {
            schema,
            data,
            delimiter,
            out,
        } => {
            let schema = load_schema(&schema)?;
            let dataset = load_dataset(schema, &data, delimiter)?;
            FrequencyMatrix::build(&dataset).to_file(&[]).save(&out)?;
        }
        Command::Publish {
            schema,
            matrix,
            method,
            epsilon,
            split,
            seed,
            out,
        } => {
            let schema = load_schema(&schema)?;
            let exact = load_matrix(&schema, &matrix)?;
            let split: Vec<String> = split.into_iter().filter(|s| !s.is_empty()).collect();
            let split = if split.len() == 1 && split[0] == "auto" {
                suggested_split(&schema)
            } else {
                schema.resolve(&split)?
            };
            let mechanism = MechanismRegistry::builtin().get(&method)?;
            let published = Publisher::new(mechanism, &schema, epsilon, &split)?.publish(&exact, seed);
            published.to_file().save(&out)?;
        }
        Command::Workload {
            schema,
            count,
            seed,
            out,
        } => {
            let schema = load_schema(&schema)?;
            let text = format_queries(&generate_workload(&schema, count, seed), &schema);
            output(out.as_deref())?.write_all(text.as_bytes())?;
        }
        Command::Query {
            schema,
            matrix,
            exact,
            queries,
            sanity,
            out,
        } => {
            let schema = load_schema(&schema)?;
            let answered = load_matrix(&schema, &matrix)?;
            let text = fs::read_to_string(&queries).with_context(|| format!("reading {}", queries.display()))?;
            let queries = parse_queries(&text, &schema)?;
            let mut w = output(out.as_deref())?;
            match exact {
                Some(path) => {
                    let exact = load_matrix(&schema, &path)?;
                    let sanity = sanity.unwrap_or_else(|| default_sanity_bound(exact.tuple_count()));
                    if !(sanity > 0.0) {
                        bail!("sanity bound must be positive (is the exact matrix empty?)");
                    }
                    write_results(&mut w, &measure(&queries, &exact, &answered, sanity))?;
                }
                None => {
                    let sums = PrefixSums::new(&answered);
                    writeln!(w, "query,answer")?;
                    for (i, q) in queries.iter().enumerate() {
                        writeln!(w, "{i},{}", sums.sum(&q.ranges(&schema)))?;
                    }
                }
            }
            w.flush()?;
        }
        Command::Bench {
            n,
            m,
            schema,
            data,
            methods,
            epsilons,
            split,
            queries,
            buckets,
            sanity_fraction,
            seed,
            out_dir,
        } => {
            let source = match (schema, data) {
                (Some(schema), Some(data)) => DataSource::Dataset(load_dataset(load_schema(&schema)?, &data, ',')?),
                _ => DataSource::Synthetic {
                    n: n.expect("required by clap"),
                    m: m.expect("required by clap"),
                },
            };
            let cfg = BenchConfig {
                source,
                methods,
                epsilons,
                split: split.into_iter().filter(|s| !s.is_empty()).collect(),
                queries,
                seed,
                sanity_fraction,
                buckets,
            };
            let report = run_benchmark(&cfg, &MechanismRegistry::builtin())?;
            fs::create_dir_all(&out_dir)?;
            for table in &report.tables {
                let path = out_dir.join(table.file_name());
                table.write_csv(BufWriter::new(File::create(&path)?))?;
                println!("{}", path.display());
            }
            let mut notes = String::new();
            for note in &report.notes {
                notes.push_str(note);
                notes.push('\n');
            }
            fs::write(out_dir.join("notes.txt"), notes)?;
        }
        Command::Time {
            n,
            m,
            repeats,
            seed,
            out,
        } => {
            let rows = run_timing(&n, &m, seed, repeats)?;
            let mut w = output(out.as_deref())?;
            write_timing_csv(&mut w, &rows)?;
            w.flush()?;
        }
        Command::Verify { level, seed } => {
            let level = match level {
                Level::Quick => VerifyLevel::Quick,
                Level::Full => VerifyLevel::Full,
            };
            let checks = run_verification(level, seed);
            let mut failed = 0;
            for c in &checks {
                println!("{c}");
                failed += usize::from(!c.passed);
            }
            println!("{} checks, {failed} failed", checks.len());
            if failed > 0 {
                return Ok(ExitCode::from(EXIT_VERIFY));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
