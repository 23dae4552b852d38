use std::net::IpAddr;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lvdisc::cardiac::{PipelineConfig, Seed};
use lvdisc::imaging::{Phase, StudyOptions};

#[derive(Debug, Parser)]
#[command(
    name = "lvdisc",
    version,
    about = "Left-ventricle segmentation of short-axis cine MR"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment the ED and ES phases of a study and write a report.
    Segment(SegmentArgs),
    /// Serve studies over HTTP for interactive seeding.
    Serve(ServeArgs),
    /// Write a synthetic ellipsoid phantom as a study directory.
    Phantom(PhantomArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Auto,
    Seeded,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Label map NIfTI matching the image (overrides study.toml).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Label value of the LV blood pool.
    #[arg(long)]
    pub lv_label: Option<i32>,
    /// Frame index of end diastole.
    #[arg(long)]
    pub ed_phase: Option<usize>,
    /// Frame index of end systole (default: last frame).
    #[arg(long)]
    pub es_phase: Option<usize>,
}

impl StudyArgs {
    pub fn options(&self) -> StudyOptions {
        let d = StudyOptions::default();
        StudyOptions {
            id: None,
            ed_phase: self.ed_phase.unwrap_or(d.ed_phase),
            es_phase: self.es_phase,
            labels: self.labels.clone(),
            lv_label: self.lv_label.unwrap_or(d.lv_label),
        }
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// NIfTI cine stack or study directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Localization template image (PGM, PNG or NIfTI).
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub mode: ModeArg,
    /// Output directory for report.json and overlays.
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline settings (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed click `x,y` in image pixels (seeded mode).
    #[arg(long, value_parser = parse_xy)]
    pub seed: Option<(f64, f64)>,
    /// Restrict the seed to one slice index.
    #[arg(long)]
    pub z: Option<usize>,
    /// Restrict the seed to one phase.
    #[arg(long, value_parser = parse_phase)]
    pub phase: Option<Phase>,
    /// Skip writing overlay PNGs.
    #[arg(long)]
    pub no_overlays: bool,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Studies to load (NIfTI files or study directories).
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Localization template (default: built-in synthetic disc).
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Pipeline settings (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for saved sessions.
    #[arg(long, default_value = "lvdisc-out")]
    pub out: PathBuf,
    /// Reload sessions previously saved in `--out`.
    #[arg(long)]
    pub resume: bool,
    /// Serve a static front end from this directory at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Study directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace slice `z,phase` (e.g. `2,es`) with noise; repeatable.
    #[arg(long = "noise-slice", value_parser = parse_noise_slice)]
    pub noise_slices: Vec<(usize, usize)>,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
}

fn parse_xy(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let (x, y) = (p(x)?, p(y)?);
    if !(x.is_finite() && y.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    Ok((x, y))
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    s.parse().map_err(|e: lvdisc::Error| e.to_string())
}

fn parse_noise_slice(s: &str) -> Result<(usize, usize), String> {
    let (z, p) = s.split_once(',').ok_or("expected z,phase")?;
    let z = z.trim().parse().map_err(|e| format!("{z:?}: {e}"))?;
    Ok((z, parse_phase(p.trim())? as usize))
}

pub fn load_config(path: Option<&PathBuf>) -> anyhow::Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("--config {}", p.display()))?;
            PipelineConfig::from_toml(&text).with_context(|| format!("--config {}", p.display()))
        }
    }
}

/// Validated settings of one `segment` run.
#[derive(Debug)]
pub struct RunConfig {
    pub input: PathBuf,
    pub template: PathBuf,
    pub out: PathBuf,
    pub pipeline: PipelineConfig,
    pub seeds: Vec<Seed>,
    pub study: StudyOptions,
    pub overlays: bool,
}

impl RunConfig {
    pub fn from_args(a: &SegmentArgs) -> anyhow::Result<Self> {
        let Some(template) = a.template.clone() else {
            bail!("--template is required");
        };
        if !template.is_file() {
            bail!("--template {}: no such file", template.display());
        }
        if !a.input.exists() {
            bail!("--input {}: no such file or directory", a.input.display());
        }
        if let Some(l) = &a.study.labels {
            if !l.is_file() {
                bail!("--labels {}: no such file", l.display());
            }
        }
        let seeds = match (a.mode, a.seed) {
            (ModeArg::Seeded, Some((x, y))) => vec![Seed {
                x,
                y,
                z: a.z,
                phase: a.phase,
            }],
            (ModeArg::Seeded, None) => bail!("--mode seeded needs --seed x,y"),
            (ModeArg::Auto, Some(_)) => bail!("--seed is only valid with --mode seeded"),
            (ModeArg::Auto, None) => {
                if a.z.is_some() || a.phase.is_some() {
                    bail!("--z/--phase only restrict a --seed");
                }
                Vec::new()
            }
        };
        Ok(Self {
            input: a.input.clone(),
            template,
            out: a.out.clone(),
            pipeline: load_config(a.config.as_ref())?,
            seeds,
            study: a.study.options(),
            overlays: !a.no_overlays,
        })
    }
}
