use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use phenowarp::classify::{
    confusion, metrics, run_experiment, write_confusion_csv, ClassifierMode, ExperimentConfig, MetricsReport,
};
use phenowarp::distance::{cost_matrices, sam, Matrix, Measure, WarpConfig};
use phenowarp::ingest::{
    build_field_samples, parse_labels, parse_observations, samples_to_labels, samples_to_rows, write_labels,
    write_observations, BuildSummary, LabelTable, ObservationRow,
};
use phenowarp::preprocess::{preprocess_dataset, PreprocessReport};
use phenowarp::simulate::{generate_dataset, DatasetSpec, ScenarioSpec};
use phenowarp::vegindex::IndexParams;
use phenowarp::window::{median_profile, multiclass_window, write_score_curve, MultiClassPolicy, WindowPolicy};
use phenowarp::{FieldSample, Series, TimeGrid};

use crate::{
    ClassifierArg, ClassifyArgs, Cli, Command, DistanceArgs, EvaluateArgs, InputArgs, PolicyArg, PresetArg,
    PreprocessArgs, SelectWindowArgs, SimulateArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Preprocess(a) => preprocess(cli, a),
        Command::Classify(a) => classify(cli, a),
        Command::SelectWindow(a) => select_window(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Distance(a) => distance(a),
        Command::Evaluate(a) => evaluate(cli, a),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a Command,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Preprocess(_) => "preprocess",
        Command::Classify(_) => "classify",
        Command::SelectWindow(_) => "select-window",
        Command::Simulate(_) => "simulate",
        Command::Distance(_) => "distance",
        Command::Evaluate(_) => "evaluate",
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_manifest(cli: &Cli, out: &Path) -> Result<()> {
    let manifest = Manifest {
        command: command_name(&cli.command),
        version: env!("CARGO_PKG_VERSION"),
        seed: cli.seed,
        config: &cli.command,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

fn out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn read_observations(paths: &[impl AsRef<Path>]) -> Result<Vec<ObservationRow>> {
    let mut rows = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        rows.extend(parse_observations(file).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(rows)
}

fn load_samples(input: &InputArgs) -> Result<(Vec<FieldSample>, BuildSummary)> {
    let rows = read_observations(&input.observations)?;
    let file = File::open(&input.labels).with_context(|| format!("opening {}", input.labels.display()))?;
    let labels = parse_labels(file).with_context(|| format!("reading {}", input.labels.display()))?;
    let (samples, summary) = build_field_samples(&rows, &labels, input.index, &IndexParams::default());
    if summary.skipped_fields > 0 || summary.dropped_rows > 0 || summary.unlabeled > 0 {
        eprintln!(
            "warning: {} fields skipped, {} rows dropped, {} samples unlabeled",
            summary.skipped_fields, summary.dropped_rows, summary.unlabeled
        );
    }
    Ok((samples, summary))
}

fn load_clean(input: &InputArgs, pipeline: &crate::PipelineArgs) -> Result<(Vec<FieldSample>, PreprocessReport)> {
    let (samples, _) = load_samples(input)?;
    let (clean, report) = preprocess_dataset(&samples, &pipeline.config())?;
    for d in &report.dropped {
        eprintln!("warning: dropped {}@{}: {}", d.field_id, d.year, d.reason);
    }
    Ok((clean, report))
}

#[derive(Serialize)]
struct PreprocessOutput<'a> {
    ingest: &'a BuildSummary,
    #[serde(flatten)]
    report: &'a PreprocessReport,
}

fn preprocess(cli: &Cli, a: &PreprocessArgs) -> Result<()> {
    let (samples, summary) = load_samples(&a.input)?;
    let (clean, report) = preprocess_dataset(&samples, &a.pipeline.config())?;
    for d in &report.dropped {
        eprintln!("warning: dropped {}@{}: {}", d.field_id, d.year, d.reason);
    }
    out_dir(&a.out)?;
    write_observations(create(&a.out.join("dataset.csv"))?, &samples_to_rows(&clean))?;
    write_labels(create(&a.out.join("labels.csv"))?, &samples_to_labels(&clean))?;
    write_json(
        &a.out.join("preprocess_report.json"),
        &PreprocessOutput {
            ingest: &summary,
            report: &report,
        },
    )?;
    write_manifest(cli, &a.out)?;
    println!(
        "{} of {} fields on grid [{}, {}] step {}; {} gaps filled",
        report.fields_out, report.fields_in, report.grid.t_l, report.grid.t_u, report.grid.step, report.filled_gaps
    );
    Ok(())
}

#[derive(Deserialize)]
struct WindowFile {
    window: (i32, i32),
}

fn classify(cli: &Cli, a: &ClassifyArgs) -> Result<()> {
    let window = match (&a.window, &a.window_file) {
        (Some(w), _) => Some(*w),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let parsed: WindowFile =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            Some(parsed.window)
        }
        (None, None) => None,
    };
    let (clean, _) = load_clean(&a.input, &a.pipeline)?;
    let cfg = ExperimentConfig {
        samples_per_class: a.samples_per_class,
        replications: a.replications,
        seed: cli.seed,
        mode: match a.classifier {
            ClassifierArg::NearestNeighbor => ClassifierMode::NearestNeighbor,
            ClassifierArg::MedianTemplate => ClassifierMode::MedianTemplate,
        },
        window,
        ..ExperimentConfig::new(a.warp.config(), a.train_year, a.test_year.unwrap_or(a.train_year))
    };
    let report = run_experiment(&cfg, &clean)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    out_dir(&a.out)?;
    write_json(&a.out.join("metrics.json"), &report.metrics)?;
    write_confusion_csv(create(&a.out.join("confusion.csv"))?, &report.classes, &report.mean_confusion)?;
    write_manifest(cli, &a.out)?;
    println!(
        "{} {}->{}: OA {:.4} kappa {:.4} over {} replications ({} samples per series)",
        cfg.warp.measure,
        cfg.train_year,
        cfg.test_year,
        report.metrics.overall_accuracy,
        report.metrics.kappa,
        cfg.replications,
        report.series_length
    );
    Ok(())
}

#[derive(Serialize)]
struct PairSummary<'a> {
    classes: (&'a str, &'a str),
    pivot: i32,
    o1: i32,
    o2: i32,
    no_plateau: bool,
    scores: String,
}

#[derive(Serialize)]
struct WindowOutput<'a> {
    year: i32,
    pivot: i32,
    window: (i32, i32),
    policy: MultiClassPolicy,
    eps1: f64,
    eps2: f64,
    smoothing_width: usize,
    stability_run: usize,
    pairs: Vec<PairSummary<'a>>,
}

fn select_window(cli: &Cli, a: &SelectWindowArgs) -> Result<()> {
    let policy = WindowPolicy {
        multiclass: match a.policy {
            PolicyArg::MinLength => MultiClassPolicy::MinLength,
            PolicyArg::Union => MultiClassPolicy::Union,
        },
        eps1: a.eps1,
        eps2: a.eps2,
        smoothing_width: a.smoothing_width,
        stability_run: a.stability_run,
    };
    policy.validate()?;
    let (clean, _) = load_clean(&a.input, &a.pipeline)?;
    let mut groups: BTreeMap<&str, Vec<&Series>> = BTreeMap::new();
    for s in clean.iter().filter(|s| s.year == a.year) {
        if let Some(label) = &s.label {
            groups.entry(label).or_default().push(&s.series);
        }
    }
    if groups.len() < 2 {
        bail!("year {} has {} labeled classes; at least 2 are needed", a.year, groups.len());
    }
    let profiles: BTreeMap<String, Series> = groups
        .into_iter()
        .map(|(k, v)| Ok((k.to_string(), median_profile(&v)?)))
        .collect::<phenowarp::Result<_>>()?;
    let warp = WarpConfig {
        measure: Measure::Dtw,
        band_days: a.band_days,
        ..WarpConfig::default()
    };
    let result = multiclass_window(&profiles, &warp, &policy)?;

    out_dir(&a.out)?;
    let mut pairs = Vec::new();
    for p in &result.per_pair {
        let name = format!("scores_{}_{}.csv", p.classes.0, p.classes.1);
        write_score_curve(create(&a.out.join(&name))?, &p.scores)?;
        if p.selection.no_plateau {
            eprintln!(
                "warning: {} vs {}: a score curve never settled; that boundary is the grid edge",
                p.classes.0, p.classes.1
            );
        }
        pairs.push(PairSummary {
            classes: (&p.classes.0, &p.classes.1),
            pivot: p.pivot,
            o1: p.selection.o1,
            o2: p.selection.o2,
            no_plateau: p.selection.no_plateau,
            scores: name,
        });
    }
    write_json(
        &a.out.join("window.json"),
        &WindowOutput {
            year: a.year,
            pivot: result.pivot,
            window: result.window,
            policy: result.policy,
            eps1: a.eps1,
            eps2: a.eps2,
            smoothing_width: a.smoothing_width,
            stability_run: a.stability_run,
            pairs,
        },
    )?;
    write_manifest(cli, &a.out)?;
    if result.window.0 == result.window.1 {
        eprintln!("warning: the window is a single day; loosen --eps1/--eps2 or use a coarser --step");
    }
    println!("pivot {} window [{}, {}]", result.pivot, result.window.0, result.window.1);
    Ok(())
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let mut spec = match a.preset {
        PresetArg::TwoClass => DatasetSpec::two_class(a.n_per_class, TimeGrid::new(110, 334, 8)?),
        PresetArg::S4Benchmark => DatasetSpec::s4_benchmark(a.n_per_class),
    };
    spec.n_per_class = a.n_per_class;
    if let Some(name) = &a.scenario_a {
        spec.scenario_a = ScenarioSpec::named(name)?;
    }
    if let Some(name) = &a.scenario_b {
        spec.scenario_b = ScenarioSpec::named(name)?;
    }
    if a.grid_start.is_some() || a.grid_end.is_some() || a.grid_step.is_some() {
        spec.grid = TimeGrid::new(
            a.grid_start.unwrap_or(spec.grid.t_l),
            a.grid_end.unwrap_or(spec.grid.t_u),
            a.grid_step.unwrap_or(spec.grid.step),
        )?;
    }
    if a.year_a == a.year_b {
        bail!("--year-a and --year-b must differ");
    }
    spec.year_a = a.year_a;
    spec.year_b = a.year_b;
    if let Some(f) = a.cloud_fraction {
        spec.scenario_a.cloud_fraction = f;
        spec.scenario_b.cloud_fraction = f;
    }
    let (year_a, year_b) = generate_dataset(&spec, cli.seed)?;

    out_dir(&a.out)?;
    for (year, samples) in [(spec.year_a, &year_a), (spec.year_b, &year_b)] {
        write_observations(
            create(&a.out.join(format!("observations_{year}.csv")))?,
            &samples_to_rows(samples),
        )?;
    }
    let labels: LabelTable = samples_to_labels(&year_a)
        .into_iter()
        .chain(samples_to_labels(&year_b))
        .collect();
    write_labels(create(&a.out.join("labels.csv"))?, &labels)?;
    write_manifest(cli, &a.out)?;
    println!(
        "{} fields per year in {} classes, years {} and {}",
        year_a.len(),
        spec.classes.len(),
        spec.year_a,
        spec.year_b
    );
    Ok(())
}

fn find_field<'a>(samples: &'a [FieldSample], key: &str) -> Result<&'a FieldSample> {
    let (id, year) = match key.rsplit_once('@') {
        Some((id, y)) => (id, Some(y.parse::<i32>().with_context(|| format!("bad year in `{key}`"))?)),
        None => (key, None),
    };
    let hits: Vec<_> = samples
        .iter()
        .filter(|s| s.field_id == id && year.is_none_or(|y| s.year == y))
        .collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => Err(anyhow!("no field `{key}` in the observations")),
        _ => Err(anyhow!("field `{id}` appears in several years; use {id}@YEAR")),
    }
}

fn print_matrix(out: &mut impl Write, title: &str, m: &Matrix) -> std::io::Result<()> {
    writeln!(out, "{title}")?;
    for i in 0..m.rows() {
        let cells: Vec<String> = m
            .row(i)
            .iter()
            .map(|v| if v.is_finite() { format!("{v:.6}") } else { "inf".into() })
            .collect();
        writeln!(out, "  {}", cells.join(" "))?;
    }
    Ok(())
}

fn distance(a: &DistanceArgs) -> Result<()> {
    let rows = read_observations(&a.observations)?;
    let (samples, _) = build_field_samples(&rows, &LabelTable::new(), a.index, &IndexParams::default());
    let x = find_field(&samples, &a.a)?;
    let y = find_field(&samples, &a.b)?;
    let cfg = a.warp.config();
    cfg.validate()?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "x = {}@{} ({} samples)", x.field_id, x.year, x.series.len())?;
    writeln!(out, "y = {}@{} ({} samples)", y.field_id, y.year, y.series.len())?;
    if cfg.measure == Measure::Sam {
        writeln!(out, "distance ({}): {:.12}", cfg.measure, sam(&x.series, &y.series)?)?;
        return Ok(());
    }
    let m = cost_matrices(&x.series, &y.series, &cfg)?;
    print_matrix(&mut out, "psi", &m.psi)?;
    print_matrix(&mut out, "D", &m.acc)?;
    match m.distance {
        Some(d) => {
            writeln!(out, "distance ({}): {d:.12}", cfg.measure)?;
            Ok(())
        }
        None => {
            out.flush()?;
            bail!("no warping path: the ±{} day band blocks every path", cfg.band_days)
        }
    }
}

#[derive(Deserialize)]
struct PredictionRow {
    predicted: String,
    observed: String,
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let file = File::open(&a.predictions).with_context(|| format!("opening {}", a.predictions.display()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let (mut predicted, mut observed) = (Vec::new(), Vec::new());
    for (i, row) in reader.deserialize::<PredictionRow>().enumerate() {
        let row = row.with_context(|| format!("predictions row {}", i + 2))?;
        predicted.push(row.predicted);
        observed.push(row.observed);
    }
    if predicted.is_empty() {
        bail!("{} has no predictions", a.predictions.display());
    }
    let cm = confusion(&predicted, &observed)?;
    let m = metrics(&cm)?;
    let counts: Vec<Vec<f64>> = cm
        .counts
        .iter()
        .map(|r| r.iter().map(|&c| c as f64).collect())
        .collect();
    out_dir(&a.out)?;
    write_json(&a.out.join("metrics.json"), &MetricsReport::from_replications(vec![m.clone()])?)?;
    write_confusion_csv(create(&a.out.join("confusion.csv"))?, &cm.classes, &counts)?;
    write_manifest(cli, &a.out)?;
    println!("OA {:.4} kappa {:.4} over {} predictions", m.overall_accuracy, m.kappa, cm.total());
    Ok(())
}
