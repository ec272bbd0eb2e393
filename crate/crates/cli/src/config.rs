//! Command-line arguments and the TOML config file they can be read from.
//!
//! Every subcommand option is optional on the command line; a missing value is
//! taken from the matching `[section]` of `--config`, then from the default.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "thermocorr", version, about = "Intensity correlations of thermal radiation from random media")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML file with defaults for any option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo samples per point.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Acceptance tolerance for commands that check their results.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Waveguide correlators over a range of L/ξ₀, with the cross ratio.
    WaveguideSweep(WaveguideArgs),
    /// Build a cavity moment table by Monte Carlo.
    CavityTable(CavityTableArgs),
    /// Cavity correlators over a range of γ₀, with the strong-absorption limits.
    CavitySweep(CavitySweepArgs),
    /// Statistical checks of the random-matrix approximations.
    RmtValidate(RmtArgs),
    /// Photodetection simulation for a flat-band QQ†.
    Photosim(PhotosimArgs),
    /// Waveguide curves in reduced units.
    Fig2(WaveguideArgs),
    /// Cavity curves in reduced units with both normalized ratios.
    Fig3(CavitySweepArgs),
    /// Coherence length, mode count and crossover distance of a source.
    Geometry(GeometryArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::WaveguideSweep(_) => "waveguide-sweep",
            Self::CavityTable(_) => "cavity-table",
            Self::CavitySweep(_) => "cavity-sweep",
            Self::RmtValidate(_) => "rmt-validate",
            Self::Photosim(_) => "photosim",
            Self::Fig2(_) => "fig2",
            Self::Fig3(_) => "fig3",
            Self::Geometry(_) => "geometry",
        }
    }
}

pub trait Merge {
    /// Fill every unset field of `self` from `base`.
    fn merge(self, base: Self) -> Self;
}

macro_rules! mergeable {
    ($t:ty { $($f:ident),* $(,)? }) => {
        impl Merge for $t {
            fn merge(self, base: Self) -> Self {
                Self { $($f: self.$f.or(base.$f)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct WaveguideArgs {
    /// L/ξ₀ grid.
    #[arg(long)]
    pub s0: Option<String>,
    /// Open channels N.
    #[arg(long)]
    pub modes: Option<usize>,
    /// l/ξ₀.
    #[arg(long)]
    pub mean_free_path: Option<f64>,
    #[arg(long)]
    pub alpha_k: Option<f64>,
    #[arg(long)]
    pub alpha_l: Option<f64>,
    /// Bose–Einstein occupation f.
    #[arg(long)]
    pub occupation: Option<f64>,
}
mergeable!(WaveguideArgs { s0, modes, mean_free_path, alpha_k, alpha_l, occupation });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CavityTableArgs {
    /// Absorption-rate grid.
    #[arg(long)]
    pub gamma: Option<String>,
    /// One or two mode counts; two give a 1/N extrapolation.
    #[arg(long)]
    pub modes: Option<String>,
    /// Smallest number of internal levels per open channel.
    #[arg(long)]
    pub resonance_factor: Option<usize>,
    /// `orthogonal` or `unitary`.
    #[arg(long)]
    pub ensemble: Option<String>,
    /// Sample up to this γ, continue with a fitted tail above it.
    #[arg(long)]
    pub max_sampled_gamma: Option<f64>,
}
mergeable!(CavityTableArgs { gamma, modes, resonance_factor, ensemble, max_sampled_gamma });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CavitySweepArgs {
    /// Line-center absorption grid.
    #[arg(long)]
    pub gamma0: Option<String>,
    /// Moment table written by `cavity-table`; built on the fly when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Open channels N, entering the cross ratio.
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub alpha_k: Option<f64>,
    #[arg(long)]
    pub alpha_l: Option<f64>,
    #[arg(long)]
    pub occupation: Option<f64>,
    /// Mode counts for a table built on the fly.
    #[arg(long)]
    pub table_modes: Option<String>,
    /// Absorption grid for a table built on the fly.
    #[arg(long)]
    pub table_gamma: Option<String>,
    #[arg(long)]
    pub resonance_factor: Option<usize>,
}
mergeable!(CavitySweepArgs {
    gamma0,
    table,
    modes,
    alpha_k,
    alpha_l,
    occupation,
    table_modes,
    table_gamma,
    resonance_factor,
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RmtArgs {
    /// Mode counts; the first is used for the single-N checks.
    #[arg(long)]
    pub modes: Option<String>,
    /// Absorption rate of the sampled cavities.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// `all`, `equivalent-channel`, `factorization` or `covariance-identity`.
    #[arg(long)]
    pub check: Option<String>,
    #[arg(long)]
    pub ensemble: Option<String>,
}
mergeable!(RmtArgs { modes, gamma, check, ensemble });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PhotosimArgs {
    /// QQ† rows separated by `;`, entries by `,` (real entries).
    #[arg(long)]
    pub qq: Option<String>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Total bandwidth in rad/s.
    #[arg(long)]
    pub band_width: Option<f64>,
    #[arg(long)]
    pub occupation: Option<f64>,
    /// Detector efficiencies `α_k,α_l`.
    #[arg(long)]
    pub efficiency: Option<String>,
    /// Detected modes `k,l`.
    #[arg(long)]
    pub detector_modes: Option<String>,
    #[arg(long)]
    pub windows: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Summary JSON path; defaults to the output path with `.json` appended.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}
mergeable!(PhotosimArgs {
    qq,
    bins,
    band_width,
    occupation,
    efficiency,
    detector_modes,
    windows,
    replicates,
    summary,
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GeometryArgs {
    /// Metres.
    #[arg(long)]
    pub wavelength: Option<f64>,
    #[arg(long)]
    pub source_diameter: Option<f64>,
    #[arg(long)]
    pub distance: Option<f64>,
    /// Waveguide cross-section in m².
    #[arg(long)]
    pub area: Option<f64>,
}
mergeable!(GeometryArgs { wavelength, source_diameter, distance, area });

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub waveguide_sweep: WaveguideArgs,
    #[serde(default)]
    pub cavity_table: CavityTableArgs,
    #[serde(default)]
    pub cavity_sweep: CavitySweepArgs,
    #[serde(default)]
    pub rmt_validate: RmtArgs,
    #[serde(default)]
    pub photosim: PhotosimArgs,
    #[serde(default)]
    pub fig2: WaveguideArgs,
    #[serde(default)]
    pub fig3: CavitySweepArgs,
    #[serde(default)]
    pub geometry: GeometryArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

/// Apply the config file under the command line.
pub fn resolve(cli: Cli) -> Result<(GlobalArgs, Command), CliError> {
    let file = match &cli.global.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let g = cli.global;
    let global = GlobalArgs {
        config: g.config,
        seed: g.seed.or(file.seed),
        samples: g.samples.or(file.samples),
        out: g.out.or(file.out),
        tolerance: g.tolerance.or(file.tolerance),
    };
    let command = match cli.command {
        Command::WaveguideSweep(a) => Command::WaveguideSweep(a.merge(file.waveguide_sweep)),
        Command::CavityTable(a) => Command::CavityTable(a.merge(file.cavity_table)),
        Command::CavitySweep(a) => Command::CavitySweep(a.merge(file.cavity_sweep)),
        Command::RmtValidate(a) => Command::RmtValidate(a.merge(file.rmt_validate)),
        Command::Photosim(a) => Command::Photosim(a.merge(file.photosim)),
        Command::Fig2(a) => Command::Fig2(a.merge(file.fig2)),
        Command::Fig3(a) => Command::Fig3(a.merge(file.fig3)),
        Command::Geometry(a) => Command::Geometry(a.merge(file.geometry)),
    };
    Ok((global, command))
}
