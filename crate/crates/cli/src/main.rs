use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use arclift_core::coalescent::{rate_integral, CoalescentSimulator};
use arclift_core::crp_gem::{block_one_jump_log, sample_gem_sticks, write_jump_log_csv, write_sticks_csv};
use arclift_core::lifting::{simulate_lift_chain, LiftChain, StateRecord};
use arclift_core::port_trees::{for_each_port, sample_lpat_n, DEFAULT_ENUMERATION_CAP};
use arclift_core::stats_verify::{fraction_string, write_reports_csv, write_reports_json};
use arclift_core::{Error, Experiment, ExperimentConfig, LambdaMeasure, Partition, PartitionPath, RateTable, RngSpec};

const VERSION: &str = env!("CARGO_PKG_VERSION");

const STATE_COLUMNS: &str = "t,partition,k,rep";

/// Replicates simulated in parallel before their output is written in order.
const BATCH: u64 = 4096;

#[derive(Parser)]
#[command(name = "arclift", version, about = "Lifting chains on preferential attachment trees and Λ-coalescents")]
struct Cli {
    /// Worker threads; output never depends on it.
    #[arg(long, global = true, env = "ARCLIFT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Emit {
    States,
    Events,
}

#[derive(Args)]
struct Sampling {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// List every plane-oriented recursive tree on a label set.
    Enumerate {
        /// Trees on {1}, .., {n}.
        #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
        size: Option<u32>,
        /// Trees on the blocks of a partition, e.g. `{1,3}|{2}|{4}`.
        #[arg(long)]
        labels: Option<Partition>,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: usize,
    },
    /// Simulate the lifting chain started from a random LPAT.
    LiftChain {
        #[arg(long)]
        size: u32,
        #[command(flatten)]
        sampling: Sampling,
        /// `states` prints partition changes, `events` every clock ring.
        #[arg(long, value_enum, default_value_t = Emit::States)]
        emit: Emit,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Simulate a Λ n-coalescent from singletons.
    Coalescent {
        #[arg(long)]
        n: usize,
        /// `arcsine`, `kingman`, `uniform` or `beta:a,b`.
        #[arg(long, default_value = "arcsine")]
        lambda: LambdaMeasure,
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Run a named check against its exact oracle or closed form.
    Verify {
        experiment: Experiment,
        /// Size parameter; defaults depend on the experiment.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "arcsine")]
        lambda: LambdaMeasure,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Tabulate merger rates λ_{b,k} for 2 <= k <= b <= b-max.
    Rates {
        #[arg(long, default_value = "arcsine")]
        lambda: LambdaMeasure,
        #[arg(long, default_value_t = 10)]
        b_max: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Draw GEM(α, θ) stick-breaking frequencies.
    Gem {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Log the growth of the block containing 1 along lifting chains.
    BlockOne {
        #[arg(long)]
        size: u32,
        #[command(flatten)]
        sampling: Sampling,
    },
}

fn header(command: &str, rng: Option<&RngSpec>, params: Value) -> Value {
    let mut h = json!({ "arclift": VERSION, "command": command, "params": params });
    if let Some(rng) = rng {
        h["rng"] = serde_json::to_value(rng).expect("plain struct");
    }
    h
}

fn write_header(out: &mut impl Write, format: Format, header: &Value) -> io::Result<()> {
    match format {
        Format::Json => writeln!(out, "{}", json!({ "header": header })),
        Format::Csv => writeln!(out, "# {header}"),
    }
}

/// Runs replicates `0..reps` in parallel batches; `render` turns one
/// replicate into its output bytes, which are written in replicate order.
fn stream_reps(out: &mut impl Write, reps: u64, render: impl Fn(u64) -> Vec<u8> + Sync) -> io::Result<()> {
    let mut start = 0;
    while start < reps {
        let end = (start + BATCH).min(reps);
        let chunks: Vec<Vec<u8>> = (start..end).into_par_iter().map(&render).collect();
        for c in chunks {
            out.write_all(&c)?;
        }
        start = end;
    }
    Ok(())
}

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        write(&mut w).expect("writing to memory");
        w.flush().expect("writing to memory");
    }
    buf
}

fn path_records(path: &PartitionPath, rep: u64, format: Format) -> Vec<u8> {
    let states: Vec<(f64, String, usize)> = path.states().map(|(t, p, k)| (t, p.to_string(), k)).collect();
    let records = states.iter().map(|(t, p, k)| StateRecord {
        t: *t,
        partition: p,
        k: *k,
        rep,
    });
    match format {
        Format::Json => {
            let mut buf = Vec::new();
            for r in records {
                serde_json::to_writer(&mut buf, &r).expect("writing to memory");
                buf.push(b'\n');
            }
            buf
        }
        Format::Csv => csv_bytes(|w| records.into_iter().try_for_each(|r| w.serialize(r))),
    }
}

#[derive(serde::Serialize)]
struct EventRecord {
    rep: u64,
    t: f64,
    /// Least label of the node whose clock rang.
    picked: u32,
    /// Least label of the lifted successor; absent when a leaf rang.
    successor: Option<u32>,
    k: usize,
    partition: String,
}

fn event_records(size: u32, spec: &RngSpec, rep: u64, horizon: Option<f64>, format: Format) -> Vec<u8> {
    let mut rng = spec.rng(0, rep);
    let tree = sample_lpat_n(size, &mut rng).expect("size >= 1");
    let mut chain = LiftChain::new(tree);
    let mut records = Vec::new();
    while let Some((event, outcome)) = chain.step(&mut rng, horizon) {
        records.push(EventRecord {
            rep,
            t: event.time,
            picked: chain.tree().min_label(event.picked),
            successor: outcome.as_ref().map(|o| o.merged_minima[1]),
            k: event.merged_block_count,
            partition: chain.tree().label_set().to_string(),
        });
    }
    match format {
        Format::Json => {
            let mut buf = Vec::new();
            for r in &records {
                serde_json::to_writer(&mut buf, r).expect("writing to memory");
                buf.push(b'\n');
            }
            buf
        }
        Format::Csv => csv_bytes(|w| records.iter().try_for_each(|r| w.serialize(r))),
    }
}

fn check_reps(reps: u64) -> anyhow::Result<()> {
    if reps == 0 || reps >= 1 << 48 {
        bail!("--reps must be between 1 and 2^48 - 1");
    }
    Ok(())
}

fn rate_header(table: &RateTable, measure: &LambdaMeasure) -> anyhow::Result<Value> {
    let mut rows = Vec::new();
    for b in 2..=table.b_max() {
        for (i, v) in table.row(b)?.iter().enumerate() {
            let k = i + 2;
            rows.push(json!({
                "b": b,
                "k": k,
                "exact": v.exact().map(fraction_string),
                "value": v.to_f64(),
                "quadrature": rate_integral(b, k, measure)?,
            }));
        }
    }
    Ok(Value::Array(rows))
}

enum Outcome {
    Ok,
    VerificationFailed,
}

fn run(cli: Cli, out: &mut impl Write) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Enumerate { size, labels, cap } => {
            let pi = match (size, labels) {
                (_, Some(pi)) => pi,
                (Some(n), None) => Partition::discrete(n)?,
                (None, None) => bail!("give --size or --labels"),
            };
            let mut count = 0u64;
            let mut failed = None;
            for_each_port(&pi, cap, |t| {
                if failed.is_none() {
                    count += 1;
                    failed = writeln!(out, "{}", t.encode()).err();
                }
            })?;
            if let Some(e) = failed {
                return Err(e.into());
            }
            writeln!(out, "count={count}")?;
        }
        Command::LiftChain {
            size,
            sampling,
            emit,
            horizon,
        } => {
            check_reps(sampling.reps)?;
            if size == 0 {
                return Err(Error::ZeroSize.into());
            }
            let spec = RngSpec::new(sampling.seed);
            let params = json!({ "size": size, "reps": sampling.reps, "emit": format!("{emit:?}").to_lowercase(), "horizon": horizon });
            write_header(out, sampling.format, &header("lift-chain", Some(&spec), params))?;
            if sampling.format == Format::Csv {
                let columns = match emit {
                    Emit::States => STATE_COLUMNS,
                    Emit::Events => "rep,t,picked,successor,k,partition",
                };
                writeln!(out, "{columns}")?;
            }
            stream_reps(out, sampling.reps, |rep| match emit {
                Emit::Events => event_records(size, &spec, rep, horizon, sampling.format),
                Emit::States => {
                    let mut rng = spec.rng(0, rep);
                    let tree = sample_lpat_n(size, &mut rng).expect("size >= 1");
                    let traj = simulate_lift_chain(&tree, &mut rng, horizon, false);
                    path_records(&traj.path, rep, sampling.format)
                }
            })?;
        }
        Command::Coalescent {
            n,
            lambda,
            sampling,
            horizon,
        } => {
            check_reps(sampling.reps)?;
            let table = RateTable::build(&lambda, n.max(2))?;
            let sim = CoalescentSimulator::from_table(&table, n)?;
            let spec = RngSpec::new(sampling.seed);
            let params = json!({ "n": n, "lambda": lambda.to_string(), "reps": sampling.reps, "horizon": horizon });
            let mut h = header("coalescent", Some(&spec), params);
            h["rates"] = rate_header(&table, &lambda)?;
            write_header(out, sampling.format, &h)?;
            if sampling.format == Format::Csv {
                writeln!(out, "{STATE_COLUMNS}")?;
            }
            stream_reps(out, sampling.reps, |rep| {
                let path = sim.simulate(&mut spec.rng(0, rep), horizon);
                path_records(&path, rep, sampling.format)
            })?;
        }
        Command::Verify {
            experiment,
            size,
            reps,
            seed,
            lambda,
            horizon,
            format,
        } => {
            let mut cfg = ExperimentConfig::new(experiment);
            cfg.n = size.unwrap_or(cfg.n);
            cfg.reps = reps.unwrap_or(cfg.reps);
            cfg.seed = seed;
            cfg.lambda = lambda;
            cfg.horizon = horizon;
            cfg.threads = cli.threads;
            let reports = arclift_core::stats_verify::verify_suite(&cfg)?;
            let mut h = header("verify", experiment.is_monte_carlo().then(|| cfg.rng_spec()).as_ref(), json!({}));
            h["params"] = serde_json::to_value(&cfg)?;
            write_header(out, format, &h)?;
            match format {
                Format::Json => write_reports_json(out, &reports)?,
                Format::Csv => write_reports_csv(&mut *out, &reports)?,
            }
            if reports.iter().any(|r| !r.pass) {
                return Ok(Outcome::VerificationFailed);
            }
        }
        Command::Rates { lambda, b_max, format } => {
            let table = RateTable::build(&lambda, b_max)?;
            let params = json!({ "lambda": lambda.to_string(), "b_max": b_max, "exact": table.is_exact() });
            match format {
                Format::Csv => {
                    write_header(out, format, &header("rates", None, params))?;
                    table.write_csv(&mut *out)?;
                }
                Format::Json => {
                    write_header(out, format, &header("rates", None, params))?;
                    if let Value::Array(rows) = rate_header(&table, &lambda)? {
                        for r in rows {
                            writeln!(out, "{r}")?;
                        }
                    }
                }
            }
        }
        Command::Gem {
            count,
            alpha,
            theta,
            sampling,
        } => {
            check_reps(sampling.reps)?;
            let spec = RngSpec::new(sampling.seed);
            // surface parameter errors before any output
            sample_gem_sticks(count, alpha, theta, &mut spec.rng(0, 0))?;
            let params = json!({ "count": count, "alpha": alpha, "theta": theta, "reps": sampling.reps });
            write_header(out, sampling.format, &header("gem", Some(&spec), params))?;
            if sampling.format == Format::Csv {
                writeln!(out, "replicate,index,time,value")?;
            }
            stream_reps(out, sampling.reps, |rep| {
                let sticks = sample_gem_sticks(count, alpha, theta, &mut spec.rng(0, rep)).expect("checked");
                let mut buf = Vec::new();
                match sampling.format {
                    Format::Csv => write_sticks_csv(&mut buf, rep, &sticks).expect("writing to memory"),
                    Format::Json => {
                        serde_json::to_writer(&mut buf, &json!({ "rep": rep, "frequencies": sticks.frequencies }))
                            .expect("writing to memory");
                        buf.push(b'\n');
                    }
                }
                buf
            })?;
        }
        Command::BlockOne { size, sampling } => {
            check_reps(sampling.reps)?;
            if size == 0 {
                return Err(Error::ZeroSize.into());
            }
            let spec = RngSpec::new(sampling.seed);
            let params = json!({ "size": size, "reps": sampling.reps });
            write_header(out, sampling.format, &header("block-one", Some(&spec), params))?;
            if sampling.format == Format::Csv {
                writeln!(out, "replicate,index,time,value")?;
            }
            stream_reps(out, sampling.reps, |rep| {
                let mut rng = spec.rng(0, rep);
                let tree = sample_lpat_n(size, &mut rng).expect("size >= 1");
                let traj = simulate_lift_chain(&tree, &mut rng, None, false);
                let log = block_one_jump_log(&traj, size as usize);
                let mut buf = Vec::new();
                match sampling.format {
                    Format::Csv => write_jump_log_csv(&mut buf, rep, &log).expect("writing to memory"),
                    Format::Json => {
                        for (i, (t, g)) in log.iter().enumerate() {
                            serde_json::to_writer(&mut buf, &json!({ "rep": rep, "index": i + 1, "t": t, "growth": g }))
                                .expect("writing to memory");
                            buf.push(b'\n');
                        }
                    }
                }
                buf
            })?;
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("arclift: {e}");
            return ExitCode::from(2);
        }
    }
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = run(cli, &mut out).and_then(|o| {
        out.flush().context("writing output")?;
        Ok(o)
    });
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(1),
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("arclift: {e:#}");
            ExitCode::from(2)
        }
    }
}
