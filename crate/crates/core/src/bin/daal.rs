use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use daal::datasets::DatasetSplit;
use daal::harness::emit::{self, HeatmapKind};
use daal::harness::run::{self, build_initial_set, train_classifier, Prepared, RunOptions};
use daal::harness::ALConfig;
use daal::par::Execution;
use daal::Error;

#[derive(Parser)]
#[command(
    name = "daal",
    version,
    about = "Distribution-aware active learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (`key = value` lines); the toy benchmark when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; overrides `base_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the toy dataset and write its split manifest and points.
    GenToy(Common),
    /// Train and calibrate the teacher, then write its checkpoint.
    TrainTeacher(Common),
    /// Repeated active-learning runs with per-run and aggregate CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seeded runs; `num_runs` from the config when omitted.
        #[arg(long)]
        runs: Option<usize>,
        /// Also write every cycle's score table.
        #[arg(long)]
        score_dump: bool,
        /// Record wall-clock time per cycle instead of writing 0.
        #[arg(long)]
        timing: bool,
    },
    /// Two configs on shared seeds; the second is given with `--against`.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        against: PathBuf,
        /// Seeded runs; `num_runs` from the config when omitted.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        timing: bool,
    },
    /// PGM heatmaps of q^β, φ_b and Φ over the toy bounding box.
    Heatmap {
        #[command(flatten)]
        common: Common,
        /// Grid cells per side.
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        /// Attention exponent; `beta.beta0` from the config when omitted.
        #[arg(long)]
        beta: Option<f64>,
        /// `q_beta`, `phi_b`, `phi` or `all`.
        #[arg(long, default_value = "all")]
        kind: String,
    },
    /// Latent coordinates of every queried sample with predictions before and after.
    LatentDump(Common),
}

fn load_config(common: &Common) -> daal::Result<ALConfig> {
    let mut config = match &common.config {
        Some(path) => ALConfig::load(path)?,
        None => ALConfig::toy(),
    };
    if let Some(seed) = common.seed {
        config.base_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn exec(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn out_dir(common: &Common) -> daal::Result<&Path> {
    fs::create_dir_all(&common.out).map_err(|e| Error::Io {
        path: common.out.display().to_string(),
        source: e,
    })?;
    Ok(&common.out)
}

fn write(path: PathBuf, text: String) -> daal::Result<()> {
    fs::write(&path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn points_csv(split: &DatasetSplit) -> String {
    let mut out = String::from("id,split,x1,x2,label\n");
    let pool = &split.pool;
    for i in 0..pool.len() {
        let f = pool.features().row(i);
        out += &format!(
            "{},pool,{},{},{}\n",
            pool.ids()[i],
            f[0],
            f[1],
            pool.labels()[i]
        );
    }
    for i in 0..split.teacher_ids.len() {
        let f = split.teacher_train.row(i);
        out += &format!(
            "{},teacher,{},{},{}\n",
            split.teacher_ids[i], f[0], f[1], split.teacher_labels[i]
        );
    }
    for i in 0..split.test_ids.len() {
        let f = split.test_x.row(i);
        out += &format!(
            "{},test,{},{},{}\n",
            split.test_ids[i], f[0], f[1], split.test_y[i]
        );
    }
    out
}

fn gen_toy(common: &Common) -> daal::Result<()> {
    let config = load_config(common)?;
    let split = run::build_split(&config, config.base_seed)?;
    let out = out_dir(common)?;
    split.write_manifest(out.join("manifest.csv"))?;
    if split.pool.dim() == 2 {
        write(out.join("points.csv"), points_csv(&split))?;
    }
    println!(
        "pool {} ({} outliers), teacher {}, test {}",
        split.pool.len(),
        split.pool.outlier_count(),
        split.teacher_ids.len(),
        split.test_ids.len()
    );
    Ok(())
}

fn train_teacher(common: &Common) -> daal::Result<()> {
    let config = load_config(common)?;
    let seed = config.base_seed;
    let prep = run::prepare(&config, seed, exec(common))?;
    let out = out_dir(common)?;
    prep.teacher
        .save(&prep.calibration, out.join("teacher.bin"))?;
    let mut log = String::from("epoch,mean_elbo\n");
    for (e, v) in prep.teacher_log.epoch_elbo.iter().enumerate() {
        log += &format!("{e},{v}\n");
    }
    write(out.join("teacher_log.csv"), log)?;
    println!(
        "calibration over {}: mean {:.4}, std {:.4}",
        prep.calibration.computed_over, prep.calibration.elbo_mean, prep.calibration.elbo_std
    );
    Ok(())
}

fn run_cmd(
    common: &Common,
    runs: Option<usize>,
    score_dump: bool,
    timing: bool,
) -> daal::Result<()> {
    let config = load_config(common)?;
    let runs = runs.unwrap_or(config.num_runs);
    let opts = RunOptions {
        execution: exec(common),
        score_dump,
        latent_trace: false,
    };
    let result = run::run_repeated(&config, runs, &opts)?;
    let out = out_dir(common)?;
    emit::emit_csv(&result.runs, timing, out.join("runs.csv"))?;
    emit::emit_aggregate_csv(&result.aggregate, out.join("aggregate.csv"))?;
    if score_dump {
        let rows: Vec<_> = result
            .runs
            .iter()
            .flat_map(|r| r.score_dump.iter().copied())
            .collect();
        emit::emit_score_dump(&rows, out.join("scores.csv"))?;
    }
    for r in &result.runs {
        if r.truncated {
            eprintln!(
                "warning: run with seed {} stopped early, pool exhausted",
                r.seed
            );
        }
    }
    if let Some(last) = result.aggregate.last() {
        println!(
            "cycle {}: accuracy {:.4} ± {:.4}, outlier queries {:.2} ± {:.2}",
            last.cycle, last.mean_acc, last.std_acc, last.mean_outliers, last.std_outliers
        );
    }
    Ok(())
}

fn compare_cmd(
    common: &Common,
    against: &Path,
    runs: Option<usize>,
    timing: bool,
) -> daal::Result<()> {
    let a = load_config(common)?;
    let mut b = ALConfig::load(against)?;
    b.base_seed = a.base_seed;
    let runs = runs.unwrap_or(a.num_runs);
    let opts = RunOptions {
        execution: exec(common),
        ..RunOptions::default()
    };
    let (ra, rb) = run::compare(&a, &b, runs, &opts)?;
    let out = out_dir(common)?;
    for (tag, r) in [("a", &ra), ("b", &rb)] {
        emit::emit_csv(&r.runs, timing, out.join(format!("runs_{tag}.csv")))?;
        emit::emit_aggregate_csv(&r.aggregate, out.join(format!("aggregate_{tag}.csv")))?;
    }
    for (x, y) in ra.runs.iter().zip(&rb.runs) {
        println!(
            "seed {}: accuracy {:.4} vs {:.4}, outlier queries {} vs {}",
            x.seed,
            x.final_accuracy(),
            y.final_accuracy(),
            x.total_outlier_queries(),
            y.total_outlier_queries()
        );
    }
    Ok(())
}

fn heatmap_cmd(
    common: &Common,
    resolution: usize,
    beta: Option<f64>,
    kind: &str,
) -> daal::Result<()> {
    let config = load_config(common)?;
    if config.teacher_arch.input_dim != 2 {
        return Err(Error::UnsupportedDimension(config.teacher_arch.input_dim));
    }
    let kinds = match kind {
        "all" => vec![
            HeatmapKind::Density,
            HeatmapKind::Base,
            HeatmapKind::Combined,
        ],
        k => vec![k.parse::<HeatmapKind>()?],
    };
    let beta = beta.unwrap_or(config.beta.beta0);
    let seed = config.base_seed;
    let prep: Prepared = run::prepare(&config, seed, exec(common))?;
    let bbox = prep
        .split
        .bbox
        .ok_or(Error::UnsupportedDimension(prep.split.pool.dim()))?;
    let classifier = if kinds.iter().any(|k| *k != HeatmapKind::Density) {
        let mut pool = prep.split.pool.clone();
        let init = build_initial_set(&config, &prep, &mut pool, seed)?;
        Some(train_classifier(&config, &init.labeled, seed, 0)?)
    } else {
        None
    };
    let out = out_dir(common)?;
    for k in kinds {
        let grid = emit::heatmap_grid(
            &prep.teacher,
            &prep.calibration,
            classifier.as_ref(),
            &bbox,
            resolution,
            beta,
            k,
        )?;
        emit::emit_heatmap(&grid, out.join(format!("heatmap_{}.pgm", k.name())))?;
    }
    Ok(())
}

fn latent_dump(common: &Common) -> daal::Result<()> {
    let config = load_config(common)?;
    let seed = config.base_seed;
    let prep = run::prepare(&config, seed, exec(common))?;
    let opts = RunOptions {
        execution: exec(common),
        score_dump: false,
        latent_trace: true,
    };
    let result = run::run_prepared(&config, &prep, seed, &opts)?;
    let out = out_dir(common)?;
    emit::emit_latent_dump(
        &prep.teacher,
        &prep.split.pool,
        &result.latent,
        out.join("latent.csv"),
    )
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Io { .. }
        | Error::Format { .. }
        | Error::Domain(_)
        | Error::DegeneratePool(_)
        | Error::UnsupportedDimension(_)
        | Error::BudgetExhausted { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenToy(c) => gen_toy(c),
        Command::TrainTeacher(c) => train_teacher(c),
        Command::Run {
            common,
            runs,
            score_dump,
            timing,
        } => run_cmd(common, *runs, *score_dump, *timing),
        Command::Compare {
            common,
            against,
            runs,
            timing,
        } => compare_cmd(common, against, *runs, *timing),
        Command::Heatmap {
            common,
            resolution,
            beta,
            kind,
        } => heatmap_cmd(common, *resolution, *beta, kind),
        Command::LatentDump(c) => latent_dump(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
