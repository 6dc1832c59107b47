//! Subcommand implementations. Each command is deterministic given its
//! inputs and flags, writes its outputs (plus the resolved configuration)
//! under --out, and reports errors as a single line on stderr.

use std::fs;

use anyhow::{anyhow, bail, Context, Result};
use nextpoi::checkpoint::Checkpoint;
use nextpoi::dataset::{build_splits, parse_checkin_tsv, parse_gps_csv, Dataset, Normalizers};
use nextpoi::evaluation::{
    evaluate_model, evaluate_userpop, input_length_experiment, write_input_length_csv,
    EvalOptions, MetricsReport,
};
use nextpoi::model::PreparedSample;
use nextpoi::pipeline::{preprocess_checkins, preprocess_gps};
use nextpoi::training::{self, write_training_log};

use crate::config::{
    echo_config, resolve_preprocess, resolve_train, FileConfig, PreprocessEcho,
    PreprocessOverrides, TrainOverrides,
};
use crate::{EvaluateArgs, InputFormat, InputLengthArgs, PredictArgs, PreprocessArgs, SplitName, TrainArgs};

pub fn preprocess(args: PreprocessArgs, file_config: &FileConfig) -> Result<()> {
    let overrides = PreprocessOverrides {
        dist_threshold: args.dist_threshold,
        time_threshold: args.time_threshold,
        eps: args.eps,
        min_pts: args.min_pts,
        session_window: args.session_window,
    };
    let config = resolve_preprocess(&file_config.preprocess, &overrides);

    let input = fs::File::open(&args.input)
        .with_context(|| format!("opening input {}", args.input.display()))?;
    let reader = std::io::BufReader::new(input);
    let (dataset, stats) = match args.format {
        InputFormat::Gps => {
            let points = parse_gps_csv(reader).context("parsing GPS csv")?;
            preprocess_gps(points, &config)?
        }
        InputFormat::Checkin => {
            let rows = parse_checkin_tsv(reader).context("parsing check-in tsv")?;
            preprocess_checkins(rows, &config)?
        }
    };

    dataset
        .save(&args.out)
        .with_context(|| format!("writing dataset {}", args.out.display()))?;
    let stats_path = args.out.with_extension("stats.txt");
    fs::write(&stats_path, format!("{stats}\n"))
        .with_context(|| format!("writing stats {}", stats_path.display()))?;
    if let Some(dir) = args.out.parent() {
        echo_config(dir, "preprocess", &PreprocessEcho::from(&config))?;
    }
    println!("{stats}");
    println!("dataset written to {}", args.out.display());
    Ok(())
}

pub fn train(args: TrainArgs, file_config: &FileConfig) -> Result<()> {
    let overrides = TrainOverrides {
        dim: args.dim,
        learning_rate: args.learning_rate,
        dropout: args.dropout,
        epochs: args.epochs,
        max_len: args.max_len,
        num_negatives: args.negatives,
        batch_size: args.batch_size,
        seed: args.seed,
        no_duration: args.no_duration,
        no_long_short: args.no_longshort,
    };
    let config = resolve_train(&file_config.train, &overrides);

    let dataset = Dataset::load(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    log::info!(
        "training: dim={} lr={} dropout={} epochs={} max_len={}",
        config.dim,
        config.learning_rate,
        config.dropout,
        config.epochs,
        config.max_len
    );
    let outcome = training::train(&dataset, &config)?;

    outcome.best.save(&args.out.join("checkpoint_best.json"))?;
    outcome.last.save(&args.out.join("checkpoint_final.json"))?;
    let mut log_file = fs::File::create(args.out.join("training_log.csv"))?;
    write_training_log(&outcome.log, &mut log_file)?;
    echo_config(&args.out, "train", &config)?;

    if let Some(last) = outcome.log.last() {
        println!(
            "trained {} epochs: final loss {:.6}, val recall@5 {:.4} (best epoch {})",
            outcome.log.len(),
            last.train_loss,
            last.val_recall5,
            outcome.best.epoch
        );
    }
    println!("checkpoints written to {}", args.out.display());
    Ok(())
}

pub fn evaluate(args: EvaluateArgs, file_config: &FileConfig) -> Result<()> {
    let dataset = Dataset::load(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    let splits = build_splits(&dataset);
    let split = match args.split {
        SplitName::Val => &splits.val,
        SplitName::Test => &splits.test,
    };
    let ks = args
        .k
        .or_else(|| file_config.evaluate.ks.clone())
        .unwrap_or_else(|| vec![5, 10]);
    if ks.contains(&0) {
        bail!("K cutoffs must be positive");
    }

    let report: MetricsReport = match (&args.model, &args.baseline) {
        (Some(path), None) => {
            let checkpoint = Checkpoint::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            let fingerprint = dataset.fingerprint()?;
            if checkpoint.dataset_fingerprint != fingerprint {
                log::warn!(
                    "checkpoint was trained on a different dataset (fingerprint mismatch)"
                );
            }
            let (params, _) = checkpoint.restore()?;
            let norm = Normalizers::from_dataset(&dataset);
            let opts = EvalOptions {
                max_len: checkpoint.config.max_len,
                session_window: checkpoint.config.session_window,
                flags: checkpoint.config.flags(),
                ks: ks.clone(),
            };
            evaluate_model(&params, &dataset, split, &norm, &opts)?
        }
        (None, Some(name)) if name == "userpop" => evaluate_userpop(&dataset, split, &ks),
        (None, Some(name)) => bail!("unknown baseline '{name}' (supported: userpop)"),
        _ => bail!("exactly one of --model or --baseline is required"),
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let mut metrics = fs::File::create(args.out.join("metrics.csv"))?;
    report.write_metrics_csv(&mut metrics)?;
    let mut per_sample = fs::File::create(args.out.join("per_sample.csv"))?;
    report.write_per_sample_csv(&mut per_sample)?;
    echo_config(&args.out, "evaluate", &ks)?;

    for (k, v) in &report.recall_at {
        println!("recall@{k} = {v:.4}");
    }
    for (k, v) in &report.ndcg_at {
        println!("ndcg@{k} = {v:.4}");
    }
    println!("{} samples scored; reports in {}", report.sample_count, args.out.display());
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let dataset = Dataset::load(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    let checkpoint = Checkpoint::load(&args.model)
        .with_context(|| format!("loading checkpoint {}", args.model.display()))?;
    let (params, _) = checkpoint.restore()?;
    let config = &checkpoint.config;

    let user = dataset
        .user_ids
        .iter()
        .position(|id| *id == args.user)
        .ok_or_else(|| anyhow!("unknown user '{}'", args.user))?;
    let history = &dataset.checkins[user];
    if history.is_empty() {
        bail!("user '{}' has no check-ins", args.user);
    }
    let query_time = args.at.unwrap_or_else(|| history.last().unwrap().time + 1800);

    let sample = nextpoi::dataset::SampleRef {
        user: user as u32,
        input_len: history.len(),
        label: 0,
        query_time,
        kind: nextpoi::dataset::SplitKind::Test,
    };
    let catalog: Vec<u32> = (0..dataset.location_count as u32).collect();
    let norm = Normalizers::from_dataset(&dataset);
    let prepared = PreparedSample::build(
        &dataset,
        &sample,
        &catalog,
        &norm,
        config.max_len,
        config.session_window,
        config.flags(),
    );
    let scores = training::score_input(&params, &prepared.input(&catalog), config.flags())?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite").then(a.cmp(&b)));
    println!("rank,location_id,score");
    for (rank, &loc) in order.iter().take(args.topk).enumerate() {
        println!("{},{},{}", rank + 1, loc, scores[loc]);
    }
    Ok(())
}

pub fn input_length(args: InputLengthArgs, file_config: &FileConfig) -> Result<()> {
    let dataset = Dataset::load(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    let overrides = TrainOverrides {
        epochs: args.epochs,
        seed: args.seed,
        ..TrainOverrides::default()
    };
    let config = resolve_train(&file_config.train, &overrides);
    let m_values = args
        .m
        .unwrap_or_else(|| (1..=10).map(|i| i * 20).collect());

    let rows = input_length_experiment(&dataset, &m_values, &config)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let mut csv = fs::File::create(args.out.join("input_length.csv"))?;
    write_input_length_csv(&rows, &mut csv)?;
    echo_config(&args.out, "experiment.input-length", &config)?;

    for row in &rows {
        println!("m={} ndcg@5={:.4} recall@5={:.4}", row.m, row.ndcg5, row.recall5);
    }
    println!("table written to {}", args.out.join("input_length.csv").display());
    Ok(())
}
