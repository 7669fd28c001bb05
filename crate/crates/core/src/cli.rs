//! Command-line front end.
//!
//! Configuration is a flat `key=value` file with dotted sections
//! (`gan.epochs=300`); `--set key=value` and the `--seed` / `--out` flags
//! override it. A run directory holds:
//!
//! ```text
//! config.snapshot          resolved configuration, reloadable with --config
//! report.json              experiment reports and (for `both`) the comparison
//! losses_<arm>.csv         per-epoch losses and FLOPs
//! samples_<arm>.csv        generated samples in data space
//! samples_<arm>.pgm        image grid of the first samples (pixel data)
//! latent_samples_<arm>.csv GAN samples before decoding (dual arm)
//! models/                  parameter files and frozen latent statistics
//! FAILED                   written when a phase aborts
//! ```
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{write_pgm_grid, Dataset, HoldoutRule, RingParams, ShapeKind, ShapeRanges};
use crate::error::{Error, Result};
use crate::nn::{save_params, Activation, AdamConfig, LEAKY_SLOPE};
use crate::pipeline::{
    compare, prepare_dataset, run_arm, write_arm_artifacts, Arm, ArmOutput, ComparisonSummary, DataSpec,
    ExperimentReport, PipelineConfig, GRID_COLS, GRID_SAMPLES,
};
use crate::tensor::Tensor;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const DEFAULT_OUT: &str = "dualspace-run";

#[derive(Debug, Parser)]
#[command(name = "dualspace", version, about = "Dual-space GAN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run the two arms of `run --arm both` on separate threads.
    #[arg(long, global = true)]
    parallel: bool,
    /// Override a config key, e.g. `--set gan.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate (or load) the dataset and write it with its metadata.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train one or both arms.
    Run {
        #[arg(long, value_enum, default_value = "both")]
        arm: ArmChoice,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a finished run directory.
    Report {
        run_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArmChoice {
    Dual,
    Direct,
    Both,
}

impl ArmChoice {
    fn arms(self) -> Vec<Arm> {
        match self {
            ArmChoice::Dual => vec![Arm::DualSpace],
            ArmChoice::Direct => vec![Arm::Direct],
            ArmChoice::Both => vec![Arm::DualSpace, Arm::Direct],
        }
    }
}

/// Error with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

/// Run the CLI on `args` (including the program name); returns the exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => EXIT_CONFIG,
            };
        }
    };
    let result = match cli.command {
        Command::GenData { common } => cmd_gen_data(&common, stdout),
        Command::Run { arm, common } => cmd_run(arm, &common, stdout),
        Command::Report { run_dir, common } => {
            let dir = run_dir.or(common.out).unwrap_or_else(|| DEFAULT_OUT.into());
            cmd_report(&dir, stdout).map_err(CliError::runtime)
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn load_config(common: &Common) -> std::result::Result<(PipelineConfig, PathBuf), CliError> {
    let mut kv = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::config(Error::io(p, e)))?;
            parse_kv(&text).map_err(CliError::config)?
        }
        None => Vec::new(),
    };
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--set `{s}` must look like key=value")))?;
        kv.push((k.trim().to_string(), v.trim().to_string()));
    }
    let (mut cfg, out) = config_from_kv(&kv).map_err(CliError::config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(CliError::config)?;
    let out = common.out.clone().or(out).unwrap_or_else(|| DEFAULT_OUT.into());
    Ok((cfg, out))
}

fn create_dir(dir: &Path) -> std::result::Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(Error::io(dir, e)))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::format("json", e.to_string()))
}

/// Metadata written next to a generated dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub meta: crate::data::DatasetMeta,
    pub spec: DataSpec,
    pub data_seed: u64,
    pub holdout: HoldoutRule,
    pub n: usize,
    pub n_heldout: usize,
}

fn cmd_gen_data(common: &Common, stdout: &mut dyn Write) -> std::result::Result<(), CliError> {
    let (cfg, out) = load_config(common)?;
    let d = prepare_dataset(&cfg).map_err(CliError::runtime)?;
    create_dir(&out)?;
    write_dataset(&out, &cfg, &d).map_err(CliError::runtime)?;
    let _ = writeln!(
        stdout,
        "wrote {} samples ({} held out) of dimension {} to {}",
        d.len(),
        d.heldout_indices().len(),
        d.dim(),
        out.display()
    );
    Ok(())
}

fn write_dataset(out: &Path, cfg: &PipelineConfig, d: &Dataset) -> Result<()> {
    let mut header: Vec<String> = (0..d.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    header.push("heldout".into());
    let path = out.join("dataset.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::format("csv", e.to_string()))?;
    let csv_err = |e: csv::Error| Error::format("csv", e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    let mask = d.heldout_mask();
    for (i, row) in d.samples.rows().take(d.len()).enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&v| crate::data::format_f64(v)).collect();
        rec.push(d.labels.as_ref().map_or(String::new(), |l| l[i].to_string()));
        rec.push(u8::from(mask[i]).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let info = DatasetInfo {
        meta: d.meta.clone(),
        spec: cfg.data.clone(),
        data_seed: cfg.data_seed(),
        holdout: cfg.holdout.clone(),
        n: d.len(),
        n_heldout: d.heldout_indices().len(),
    };
    write_file(&out.join("dataset.json"), to_json(&info)?)?;
    if let (true, Some(dims)) = (d.meta.pixel, d.meta.image_dims) {
        let k = d.len().min(GRID_SAMPLES);
        let shown = d.samples.select_rows(&(0..k).collect::<Vec<_>>());
        write_pgm_grid(out.join("dataset.pgm"), &shown, dims, GRID_COLS)?;
    }
    Ok(())
}

/// Contents of `report.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub reports: Vec<ExperimentReport>,
    pub summary: Option<ComparisonSummary>,
}

fn cmd_run(choice: ArmChoice, common: &Common, stdout: &mut dyn Write) -> std::result::Result<(), CliError> {
    let (cfg, out) = load_config(common)?;
    create_dir(&out)?;
    let failed = out.join("FAILED");
    if failed.exists() {
        fs::remove_file(&failed).map_err(|e| CliError::runtime(Error::io(&failed, e)))?;
    }
    let snapshot = out.join("config.snapshot");
    write_file(&snapshot, config_to_text(&cfg.resolved())).map_err(CliError::runtime)?;

    let fail = |e: Error| {
        let _ = fs::write(&failed, format!("{e}\n"));
        CliError::runtime(e)
    };

    let d = prepare_dataset(&cfg).map_err(fail)?;
    let arms = choice.arms();
    let outputs: Vec<Result<ArmOutput>> = if common.parallel && arms.len() > 1 {
        std::thread::scope(|s| {
            let (cfg, d) = (&cfg, &d);
            let handles: Vec<_> = arms.iter().map(|&a| s.spawn(move || run_arm(a, cfg, d))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidArgument("arm thread panicked".into()))))
                .collect()
        })
    } else {
        arms.iter().map(|&a| run_arm(a, &cfg, &d)).collect()
    };

    let mut reports = Vec::new();
    let mut first_err = None;
    for (arm, o) in arms.iter().zip(outputs) {
        match o {
            Ok(o) => {
                write_arm_artifacts(&out, &o, &d).map_err(fail)?;
                let _ = writeln!(
                    stdout,
                    "{arm}: gan {:.2}s, {} flops/step, mmd {:.4}",
                    o.report.gan_wall_clock(),
                    o.report.gan_flops_per_step,
                    o.report.metrics.mmd
                );
                reports.push(o.report);
            }
            Err(e) => {
                save_last_good(&out, *arm, &e);
                let _ = writeln!(stdout, "{arm}: failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }

    let summary = match reports.as_slice() {
        [dual, direct] => Some(compare(dual, direct).map_err(fail)?),
        _ => None,
    };
    let run = RunReport { reports, summary };
    write_file(&out.join("report.json"), to_json(&run).map_err(fail)?).map_err(fail)?;
    if let Some(s) = &run.summary {
        let _ = writeln!(
            stdout,
            "speedup (direct / dual): gan-phase flops {:.2}, wall-clock {:.2}; total flops {:.2}, wall-clock {:.2}",
            s.gan_flops_ratio, s.gan_wall_clock_ratio, s.total_flops_ratio, s.total_wall_clock_ratio
        );
    }
    match first_err {
        Some(e) => Err(fail(e)),
        None => Ok(()),
    }
}

/// Keep the last-good GAN of a diverged run.
fn save_last_good(out: &Path, arm: Arm, e: &Error) {
    let mut e = e;
    while let Error::Phase { source, .. } = e {
        e = source;
    }
    if let Error::GanDiverged { last_good, .. } = e {
        let models = out.join("models");
        if fs::create_dir_all(&models).is_ok() {
            let _ = save_params(&last_good.generator, models.join(format!("{arm}_generator.last_good.params")));
            let _ = save_params(
                &last_good.discriminator,
                models.join(format!("{arm}_discriminator.last_good.params")),
            );
        }
    }
}

fn load_run(dir: &Path) -> Result<(RunReport, PipelineConfig)> {
    if dir.join("FAILED").exists() {
        return Err(Error::InvalidArgument(format!(
            "run in {} did not complete (FAILED marker present)",
            dir.display()
        )));
    }
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let run: RunReport = serde_json::from_str(&text).map_err(|e| Error::format("report.json", e.to_string()))?;
    let snap = dir.join("config.snapshot");
    let text = fs::read_to_string(&snap).map_err(|e| Error::io(&snap, e))?;
    let (cfg, _) = config_from_kv(&parse_kv(&text)?)?;
    if run.reports.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds no reports", path.display())));
    }
    Ok((run, cfg))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn cmd_report(dir: &Path, stdout: &mut dyn Write) -> Result<()> {
    let (run, cfg) = load_run(dir)?;
    let mut text = String::new();
    let _ = writeln!(text, "run: {}  seed {}", dir.display(), cfg.seed);
    for r in &run.reports {
        let _ = writeln!(
            text,
            "{:<10} gan space {:>4}  gan flops/step {:>12}  gan {:>8.2}s  total {:>8.2}s",
            r.arm.name(),
            r.gan_space_dim,
            r.gan_flops_per_step,
            r.gan_wall_clock(),
            r.total_wall_clock()
        );
    }
    if let Some(s) = &run.summary {
        let _ = writeln!(text, "speedup (direct / dual_space)");
        let _ = writeln!(text, "  gan-phase  flops/step {:.2}", s.gan_flops_per_step_ratio);
        let _ = writeln!(text, "  gan-phase  flops      {:.2}", s.gan_flops_ratio);
        let _ = writeln!(text, "  gan-phase  wall-clock {:.2}", s.gan_wall_clock_ratio);
        let _ = writeln!(text, "  total      flops      {:.2}", s.total_flops_ratio);
        let _ = writeln!(text, "  total      wall-clock {:.2}", s.total_wall_clock_ratio);
    }
    let _ = write!(text, "{:<18}", "metric");
    for r in &run.reports {
        let _ = write!(text, "{:>12}", r.arm.name());
    }
    if run.summary.is_some() {
        let _ = write!(text, "{:>12}", "delta");
    }
    text.push('\n');
    let names: Vec<&str> = run.reports[0].metrics.entries().iter().map(|e| e.0).collect();
    for (i, name) in names.iter().enumerate() {
        let _ = write!(text, "{name:<18}");
        for r in &run.reports {
            let _ = write!(text, "{:>12}", fmt_opt(r.metrics.entries()[i].1));
        }
        if let Some(s) = &run.summary {
            let _ = write!(text, "{:>12}", fmt_opt(s.metrics[i].delta));
        }
        text.push('\n');
    }
    stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;

    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    for r in &run.reports {
        let mut series = Vec::new();
        if !r.ae_losses.is_empty() {
            series.push(("ae reconstruction", r.ae_losses.iter().map(|e| e.loss).collect::<Vec<_>>()));
        }
        series.push(("discriminator", r.gan_losses.iter().map(|e| e.d_loss).collect()));
        series.push(("generator", r.gan_losses.iter().map(|e| e.g_loss).collect()));
        let svg = line_plot_svg(&format!("{} losses", r.arm.name()), "epoch", &series);
        write_file(&plots.join(format!("losses_{}.svg", r.arm.name())), svg)?;
    }

    let d = prepare_dataset(&cfg)?;
    if let (true, Some(dims)) = (d.meta.pixel, d.meta.image_dims) {
        let per = GRID_COLS * 2;
        let mut rows = take_rows(&d.training_samples(), per);
        for r in &run.reports {
            let s = crate::data::read_csv_matrix(dir.join(format!("samples_{}.csv", r.arm.name())))?.1;
            rows.extend(take_rows(&s, per));
        }
        let grid = Tensor::from_rows(&rows)?;
        write_pgm_grid(plots.join("real_vs_generated.pgm"), &grid, dims, GRID_COLS)?;
    } else if d.dim() == 2 {
        let mut sets = vec![("real", d.training_samples())];
        for r in &run.reports {
            let s = crate::data::read_csv_matrix(dir.join(format!("samples_{}.csv", r.arm.name())))?.1;
            sets.push((r.arm.name(), s));
        }
        write_file(&plots.join("real_vs_generated.svg"), scatter_svg(&sets))?;
    }
    let _ = writeln!(stdout, "plots written to {}", plots.display());
    Ok(())
}

fn take_rows(m: &Tensor, k: usize) -> Vec<Vec<f64>> {
    m.rows().take(k.min(m.nrows())).map(<[f64]>::to_vec).collect()
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line plot of several series against their index.
pub fn line_plot_svg(title: &str, xlabel: &str, series: &[(&str, Vec<f64>)]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let finite = series.iter().flat_map(|s| s.1.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, if hi > lo { hi } else { lo + 1.0 }) } else { (0.0, 1.0) };
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(0).max(2);
    let x = |i: usize| m + (w - 2.0 * m) * i as f64 / (n - 1) as f64;
    let y = |v: f64| h - m - (h - 2.0 * m) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="25" text-anchor="middle" font-size="16">{}</text>"#,
        w / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<polyline points="{m},{m} {m},{b} {r},{b}" fill="none" stroke="black"/>"#,
        b = h - m,
        r = w - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        w / 2.0,
        h - 15.0,
        xml_escape(xlabel)
    );
    let _ = writeln!(s, r#"<text x="5" y="{m}" font-size="11">{hi:.3}</text>"#);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-size="11">{lo:.3}</text>"#, h - m);
    for (k, (name, vals)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            w - m - 140.0,
            m + 15.0 * (k + 1) as f64,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter plot of 2-D point sets, each in its own colour.
pub fn scatter_svg(sets: &[(&str, Tensor)]) -> String {
    let (w, m) = (500.0, 30.0);
    let all = sets.iter().flat_map(|(_, t)| t.values().iter().copied()).filter(|v| v.is_finite());
    let r = all.fold(1e-9f64, |a, v| a.max(v.abs())) * 1.05;
    let p = |v: f64| m + (w - 2.0 * m) * (v + r) / (2.0 * r);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{w}" fill="white"/>"#);
    for (k, (name, t)) in sets.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.5">"#);
        for row in t.rows().take(t.nrows().min(2000)) {
            if row.iter().all(|v| v.is_finite()) {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#, p(row[0]), w - p(row[1]));
            }
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(
            s,
            r#"<text x="10" y="{}" font-size="12" fill="{color}">{}</text>"#,
            20 + 15 * k,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Parse `key=value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn field_err(key: &str, expected: &str, value: &str) -> Error {
    Error::Config(format!("{key}: expected {expected}, got `{value}`"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str, expected: &str) -> Result<T> {
    v.parse().map_err(|_| field_err(key, expected, v))
}

fn uint(key: &str, v: &str) -> Result<usize> {
    num(key, v, "an unsigned integer")
}

fn float(key: &str, v: &str) -> Result<f64> {
    let x: f64 = num(key, v, "a number")?;
    if !x.is_finite() {
        return Err(field_err(key, "a finite number", v));
    }
    Ok(x)
}

fn widths(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|t| uint(key, t.trim())).collect()
}

fn range(key: &str, v: &str) -> Result<(f64, f64)> {
    let (a, b) = v.split_once("..").ok_or_else(|| field_err(key, "a range `min..max`", v))?;
    let r = (float(key, a.trim())?, float(key, b.trim())?);
    if r.0 > r.1 {
        return Err(field_err(key, "min <= max", v));
    }
    Ok(r)
}

fn activation(key: &str, v: &str) -> Result<Activation> {
    if let Some(slope) = v.strip_prefix("leaky_relu:") {
        return Ok(Activation::LeakyRelu(float(key, slope)?));
    }
    Activation::parse(v).map_err(|_| field_err(key, "leaky_relu[:slope], sigmoid, tanh or identity", v))
}

fn activation_text(a: Activation) -> String {
    match a {
        Activation::LeakyRelu(s) if s != LEAKY_SLOPE => format!("leaky_relu:{s}"),
        other => other.name().into(),
    }
}

fn adam_key(adam: &mut AdamConfig, key: &str, field: &str, v: &str) -> Result<bool> {
    match field {
        "lr" => adam.lr = float(key, v)?,
        "beta1" => adam.beta1 = float(key, v)?,
        "beta2" => adam.beta2 = float(key, v)?,
        "eps" => adam.eps = float(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn preset(kind: &str) -> Result<PipelineConfig> {
    let mut c = match kind {
        "ring" => PipelineConfig::ring_default(),
        "shapes" => PipelineConfig::shapes_default(),
        "plane" => {
            let mut c = PipelineConfig::ring_default();
            c.data = DataSpec::Plane { n: 2048, rank: 2, dim: 8 };
            c.ae.latent_dim = 2;
            c
        }
        "idx" => {
            let mut c = PipelineConfig::shapes_default();
            c.data = DataSpec::Idx {
                images: PathBuf::new(),
                labels: None,
            };
            c
        }
        "csv" => {
            let mut c = PipelineConfig::ring_default();
            c.data = DataSpec::Csv { path: PathBuf::new() };
            c
        }
        other => return Err(field_err("data.kind", "ring, shapes, plane, idx or csv", other)),
    };
    c.seed = 0;
    Ok(c)
}

/// Build a config from `key=value` pairs; later keys win. Returns the
/// optional `out` directory alongside.
pub fn config_from_kv(kv: &[(String, String)]) -> Result<(PipelineConfig, Option<PathBuf>)> {
    let last = |key: &str| kv.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let mut cfg = preset(last("data.kind").unwrap_or("ring"))?;
    if let (Some(side), DataSpec::Shapes { ranges, .. }) = (last("data.side"), &mut cfg.data) {
        *ranges = ShapeRanges::default_for_side(uint("data.side", side)?);
    }
    let mut out = None;

    for (key, v) in kv {
        let (key, v) = (key.as_str(), v.as_str());
        let (section, field) = key.split_once('.').unwrap_or(("", key));
        let handled = match (section, &mut cfg.data) {
            ("", _) => match field {
                "seed" => {
                    cfg.seed = num(key, v, "an unsigned 64-bit integer")?;
                    true
                }
                "out" => {
                    out = Some(PathBuf::from(v));
                    true
                }
                "holdout" => {
                    cfg.holdout = HoldoutRule::parse(v).map_err(|e| Error::Config(format!("holdout: {e}")))?;
                    true
                }
                _ => false,
            },
            ("data", data) => match (field, data) {
                ("kind" | "side", _) => true,
                ("n", DataSpec::Ring { n, .. } | DataSpec::Shapes { n, .. } | DataSpec::Plane { n, .. }) => {
                    *n = uint(key, v)?;
                    true
                }
                ("modes", DataSpec::Ring { params, .. }) => {
                    params.n_modes = uint(key, v)?;
                    true
                }
                ("radius", DataSpec::Ring { params, .. }) => {
                    params.radius = float(key, v)?;
                    true
                }
                ("sigma", DataSpec::Ring { params, .. }) => {
                    params.sigma = float(key, v)?;
                    true
                }
                ("kinds", DataSpec::Shapes { ranges, .. }) => {
                    ranges.kinds = v
                        .split(',')
                        .map(|t| match t.trim() {
                            "ellipse" => Ok(ShapeKind::Ellipse),
                            "rectangle" => Ok(ShapeKind::Rectangle),
                            other => Err(field_err(key, "ellipse or rectangle", other)),
                        })
                        .collect::<Result<_>>()?;
                    true
                }
                ("cx", DataSpec::Shapes { ranges, .. }) => {
                    ranges.cx = range(key, v)?;
                    true
                }
                ("cy", DataSpec::Shapes { ranges, .. }) => {
                    ranges.cy = range(key, v)?;
                    true
                }
                ("rx", DataSpec::Shapes { ranges, .. }) => {
                    ranges.rx = range(key, v)?;
                    true
                }
                ("ry", DataSpec::Shapes { ranges, .. }) => {
                    ranges.ry = range(key, v)?;
                    true
                }
                ("rotation", DataSpec::Shapes { ranges, .. }) => {
                    ranges.rotation_deg = range(key, v)?;
                    true
                }
                ("intensity", DataSpec::Shapes { ranges, .. }) => {
                    ranges.intensity = range(key, v)?;
                    true
                }
                ("rank", DataSpec::Plane { rank, .. }) => {
                    *rank = uint(key, v)?;
                    true
                }
                ("dim", DataSpec::Plane { dim, .. }) => {
                    *dim = uint(key, v)?;
                    true
                }
                ("images", DataSpec::Idx { images, .. }) => {
                    *images = v.into();
                    true
                }
                ("labels", DataSpec::Idx { labels, .. }) => {
                    *labels = (!v.is_empty()).then(|| v.into());
                    true
                }
                ("path", DataSpec::Csv { path }) => {
                    *path = v.into();
                    true
                }
                _ => false,
            },
            ("ae", _) => {
                let ae = &mut cfg.ae;
                match field {
                    "latent_dim" => ae.latent_dim = uint(key, v)?,
                    "hidden" => ae.hidden = widths(key, v)?,
                    "activation" => ae.activation = activation(key, v)?,
                    "output" => ae.output = activation(key, v)?,
                    "epochs" => ae.epochs = uint(key, v)?,
                    "batch_size" => ae.batch_size = uint(key, v)?,
                    f => {
                        if !adam_key(&mut ae.adam, key, f, v)? {
                            return Err(unknown(key));
                        }
                    }
                }
                true
            }
            ("gan", _) => {
                let g = &mut cfg.gan;
                match field {
                    "epochs" => g.epochs = uint(key, v)?,
                    "batch_size" => g.batch_size = uint(key, v)?,
                    "noise_dim" => g.noise_dim = uint(key, v)?,
                    "d_steps_per_g_step" => g.d_steps_per_g_step = uint(key, v)?,
                    "g_hidden" => g.g_hidden = widths(key, v)?,
                    "d_hidden" => g.d_hidden = widths(key, v)?,
                    "output" => g.output = activation(key, v)?,
                    f => {
                        if !adam_key(&mut g.adam, key, f, v)? {
                            return Err(unknown(key));
                        }
                    }
                }
                true
            }
            ("eval", _) => {
                let e = &mut cfg.eval;
                match field {
                    "n_samples" => e.n_samples = uint(key, v)?,
                    "min_count" => e.min_count = uint(key, v)?,
                    "tau" => e.tau = if v == "auto" { None } else { Some(float(key, v)?) },
                    "tau_quantile" => e.tau_quantile = float(key, v)?,
                    "heldout_refs" => e.heldout_refs = uint(key, v)?,
                    "max_points" => e.max_points = uint(key, v)?,
                    _ => return Err(unknown(key)),
                }
                true
            }
            _ => false,
        };
        if !handled {
            return Err(unknown(key));
        }
    }
    Ok((cfg, out))
}

fn unknown(key: &str) -> Error {
    Error::Config(format!("unknown or inapplicable config key `{key}`"))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn range_text(r: (f64, f64)) -> String {
    format!("{}..{}", r.0, r.1)
}

/// Render a config as a reloadable `key=value` file.
pub fn config_to_text(c: &PipelineConfig) -> String {
    let mut kv: Vec<(String, String)> = vec![("seed".into(), c.seed.to_string())];
    let mut push = |k: &str, v: String| kv.push((k.into(), v));
    match &c.data {
        DataSpec::Ring {
            n,
            params: RingParams { n_modes, radius, sigma },
        } => {
            push("data.kind", "ring".into());
            push("data.n", n.to_string());
            push("data.modes", n_modes.to_string());
            push("data.radius", radius.to_string());
            push("data.sigma", sigma.to_string());
        }
        DataSpec::Shapes { n, ranges } => {
            push("data.kind", "shapes".into());
            push("data.n", n.to_string());
            push("data.side", ranges.side.to_string());
            let kinds: Vec<&str> = ranges
                .kinds
                .iter()
                .map(|k| match k {
                    ShapeKind::Ellipse => "ellipse",
                    ShapeKind::Rectangle => "rectangle",
                })
                .collect();
            push("data.kinds", kinds.join(","));
            push("data.cx", range_text(ranges.cx));
            push("data.cy", range_text(ranges.cy));
            push("data.rx", range_text(ranges.rx));
            push("data.ry", range_text(ranges.ry));
            push("data.rotation", range_text(ranges.rotation_deg));
            push("data.intensity", range_text(ranges.intensity));
        }
        DataSpec::Plane { n, rank, dim } => {
            push("data.kind", "plane".into());
            push("data.n", n.to_string());
            push("data.rank", rank.to_string());
            push("data.dim", dim.to_string());
        }
        DataSpec::Idx { images, labels } => {
            push("data.kind", "idx".into());
            push("data.images", images.display().to_string());
            push(
                "data.labels",
                labels.as_ref().map_or(String::new(), |l| l.display().to_string()),
            );
        }
        DataSpec::Csv { path } => {
            push("data.kind", "csv".into());
            push("data.path", path.display().to_string());
        }
    }
    push("holdout", c.holdout.to_string());
    push("ae.latent_dim", c.ae.latent_dim.to_string());
    push("ae.hidden", join(&c.ae.hidden));
    push("ae.activation", activation_text(c.ae.activation));
    push("ae.output", activation_text(c.ae.output));
    push("ae.epochs", c.ae.epochs.to_string());
    push("ae.batch_size", c.ae.batch_size.to_string());
    for (sec, a) in [("ae", &c.ae.adam), ("gan", &c.gan.adam)] {
        push(&format!("{sec}.lr"), a.lr.to_string());
        push(&format!("{sec}.beta1"), a.beta1.to_string());
        push(&format!("{sec}.beta2"), a.beta2.to_string());
        push(&format!("{sec}.eps"), a.eps.to_string());
    }
    push("gan.epochs", c.gan.epochs.to_string());
    push("gan.batch_size", c.gan.batch_size.to_string());
    push("gan.noise_dim", c.gan.noise_dim.to_string());
    push("gan.d_steps_per_g_step", c.gan.d_steps_per_g_step.to_string());
    push("gan.g_hidden", join(&c.gan.g_hidden));
    push("gan.d_hidden", join(&c.gan.d_hidden));
    push("gan.output", activation_text(c.gan.output));
    push("eval.n_samples", c.eval.n_samples.to_string());
    push("eval.min_count", c.eval.min_count.to_string());
    push("eval.tau", c.eval.tau.map_or("auto".into(), |t| t.to_string()));
    push("eval.tau_quantile", c.eval.tau_quantile.to_string());
    push("eval.heldout_refs", c.eval.heldout_refs.to_string());
    push("eval.max_points", c.eval.max_points.to_string());

    let mut s = String::new();
    for (k, v) in kv {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}
