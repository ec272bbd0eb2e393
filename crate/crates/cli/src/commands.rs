//! One function per subcommand. Each resolves its defaults, records them in
//! the output header and writes CSV or JSON.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;
use thermocorr::cavity::{
    build_moment_table, cavity_correlators, cavity_strong_limits, CavityModel, CavityParams, CavitySampler,
    Ensemble, MomentTable,
};
use thermocorr::linalg::C64;
use thermocorr::photosim::{estimate_correlators, simulate_photocounts, EmissionSpectrum, Photodetectors};
use thermocorr::rmt::{covariance_identity_check, equivalent_channel_check, factorization_check, CheckReport, Verdict};
use thermocorr::rng::StreamKey;
use thermocorr::waveguide::{thick_sample_limits, waveguide_correlators, WaveguideParams};
use thermocorr::{coherence_geometry, DetectorPair, QuadratureConfig};

use crate::config::{CavitySweepArgs, CavityTableArgs, GeometryArgs, GlobalArgs, PhotosimArgs, RmtArgs, WaveguideArgs};
use crate::error::CliError;
use crate::grid::{parse_counts, parse_grid, require_ascending};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_CAVITY_SAMPLES: usize = 2000;
pub const DEFAULT_RMT_SAMPLES: usize = 10_000;
pub const DEFAULT_TABLE_GAMMA: &str = "1e-3:1e4:29:log";
pub const DEFAULT_TABLE_MODES: &str = "30,60";

/// 12 significant digits.
pub fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Input(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn header(config: &serde_json::Value, seed: u64) -> Vec<String> {
    vec![format!("# config: {config}"), format!("# seed: {seed}")]
}

fn write_csv(
    path: Option<&Path>,
    meta: &[String],
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut out = open_out(path)?;
    for line in meta {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "{}", columns.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn detectors(alpha_k: Option<f64>, alpha_l: Option<f64>, occupation: Option<f64>) -> Result<DetectorPair, CliError> {
    Ok(DetectorPair::new(
        alpha_k.unwrap_or(1.0),
        alpha_l.unwrap_or(1.0),
        occupation.unwrap_or(1.0),
    )?)
}

fn ensemble(name: Option<&str>) -> Result<Ensemble, CliError> {
    match name.unwrap_or("orthogonal") {
        "orthogonal" => Ok(Ensemble::Orthogonal),
        "unitary" => Ok(Ensemble::Unitary),
        other => Err(CliError::Input(format!("unknown ensemble `{other}`"))),
    }
}

fn tolerance(global: &GlobalArgs, default: f64) -> Result<f64, CliError> {
    let t = global.tolerance.unwrap_or(default);
    if !(t > 0.0 && t.is_finite()) {
        return Err(CliError::Input(format!("tolerance must be positive, got {t}")));
    }
    Ok(t)
}

struct WaveguideRun {
    config: serde_json::Value,
    seed: u64,
    rows: Vec<(f64, thermocorr::waveguide::WaveguideCorrelators)>,
    limits: thermocorr::waveguide::ThickSampleLimits,
}

fn run_waveguide(global: &GlobalArgs, args: &WaveguideArgs) -> Result<WaveguideRun, CliError> {
    let s0_text = args.s0.clone().unwrap_or_else(|| "1e-2:1e4:61:log".into());
    let grid = parse_grid(&s0_text)?;
    require_ascending("s0", &grid, true)?;
    let modes = args.modes.unwrap_or(100);
    let lr = args.mean_free_path.unwrap_or(0.05);
    let det = detectors(args.alpha_k, args.alpha_l, args.occupation)?;
    let seed = global.seed.unwrap_or(DEFAULT_SEED);
    let config = json!({
        "s0": s0_text, "modes": modes, "mean-free-path": lr,
        "alpha-k": det.alpha_k, "alpha-l": det.alpha_l, "occupation": det.occupation,
    });
    let cfg = QuadratureConfig::default();
    let rows = grid
        .iter()
        .map(|&s0| {
            let p = WaveguideParams::new(modes, s0, lr)?;
            Ok((s0, waveguide_correlators(&p, &det, &cfg)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(WaveguideRun {
        config,
        seed,
        rows,
        limits: thick_sample_limits(&det, modes)?,
    })
}

pub fn waveguide_sweep(global: &GlobalArgs, args: &WaveguideArgs) -> Result<(), CliError> {
    let run = run_waveguide(global, args)?;
    let rows: Vec<Vec<String>> = run
        .rows
        .iter()
        .map(|(s0, c)| {
            vec![
                sig12(*s0),
                sig12(c.reduced.cross),
                sig12(c.reduced.excess_auto),
                sig12(c.reduced.mean_current),
                sig12(c.cross_ratio),
                sig12(run.limits.cross_ratio_limit),
                u8::from(c.reduced.flags.extrapolated).to_string(),
            ]
        })
        .collect();
    write_csv(
        global.out.as_deref(),
        &header(&run.config, run.seed),
        &[
            "s0",
            "C_kl_reduced",
            "C_kk_minus_I_reduced",
            "I_k_reduced",
            "cross_ratio",
            "cross_ratio_limit",
            "outside_diffusive_regime",
        ],
        &rows,
    )
}

pub fn fig2(global: &GlobalArgs, args: &WaveguideArgs) -> Result<(), CliError> {
    let run = run_waveguide(global, args)?;
    let rows: Vec<Vec<String>> = run
        .rows
        .iter()
        .map(|(s0, c)| {
            vec![
                sig12(*s0),
                sig12(c.reduced.cross),
                sig12(c.reduced.excess_auto),
                sig12(c.reduced.mean_current),
            ]
        })
        .collect();
    write_csv(
        global.out.as_deref(),
        &header(&run.config, run.seed),
        &["s0", "C_kl_reduced", "C_kk_minus_I_reduced", "I_k_reduced"],
        &rows,
    )
}

struct TableSetup {
    gamma: String,
    modes: String,
    model: CavityModel,
}

impl TableSetup {
    fn config(&self) -> serde_json::Value {
        json!({
            "gamma": self.gamma,
            "modes": self.modes,
            "resonance-factor": self.model.resonance_factor,
            "ensemble": match self.model.ensemble { Ensemble::Orthogonal => "orthogonal", Ensemble::Unitary => "unitary" },
            "max-sampled-gamma": self.model.max_sampled_gamma,
        })
    }

    fn build(&self, samples: usize, seed: u64) -> Result<MomentTable, CliError> {
        let grid = parse_grid(&self.gamma)?;
        require_ascending("gamma", &grid, true)?;
        let modes = parse_counts(&self.modes)?;
        Ok(build_moment_table(&modes, &grid, samples, StreamKey::new(seed), &self.model)?)
    }
}

fn model(resonance_factor: Option<usize>, ens: Option<&str>, max_sampled_gamma: Option<f64>) -> Result<CavityModel, CliError> {
    let d = CavityModel::default();
    Ok(CavityModel {
        resonance_factor: resonance_factor.unwrap_or(d.resonance_factor),
        ensemble: ensemble(ens)?,
        max_sampled_gamma: max_sampled_gamma.unwrap_or(d.max_sampled_gamma),
        ..d
    })
}

pub fn cavity_table(global: &GlobalArgs, args: &CavityTableArgs) -> Result<(), CliError> {
    let setup = TableSetup {
        gamma: args.gamma.clone().unwrap_or_else(|| DEFAULT_TABLE_GAMMA.into()),
        modes: args.modes.clone().unwrap_or_else(|| DEFAULT_TABLE_MODES.into()),
        model: model(args.resonance_factor, args.ensemble.as_deref(), args.max_sampled_gamma)?,
    };
    let seed = global.seed.unwrap_or(DEFAULT_SEED);
    let samples = global.samples.unwrap_or(DEFAULT_CAVITY_SAMPLES);
    let mut config = setup.config();
    config["samples"] = json!(samples);
    let table = setup.build(samples, seed)?;
    let d = table.diagnostics();
    if !d.non_monotone.is_empty() || !d.negative_variance.is_empty() {
        eprintln!("warning: table diagnostics {d:?}");
    }
    let out = open_out(global.out.as_deref())?;
    table.write_csv(out, &header(&config, seed))?;
    Ok(())
}

struct CavityRun {
    config: serde_json::Value,
    seed: u64,
    rows: Vec<(f64, thermocorr::cavity::CavityCorrelators)>,
    limits: thermocorr::cavity::StrongAbsorptionLimits,
}

fn run_cavity(global: &GlobalArgs, args: &CavitySweepArgs) -> Result<CavityRun, CliError> {
    let g0_text = args.gamma0.clone().unwrap_or_else(|| "1e-2:1e4:25:log".into());
    let grid = parse_grid(&g0_text)?;
    require_ascending("gamma0", &grid, true)?;
    let n = args.modes.unwrap_or(1);
    let det = detectors(args.alpha_k, args.alpha_l, args.occupation)?;
    let seed = global.seed.unwrap_or(DEFAULT_SEED);
    let samples = global.samples.unwrap_or(DEFAULT_CAVITY_SAMPLES);
    let mut config = json!({
        "gamma0": g0_text, "modes": n,
        "alpha-k": det.alpha_k, "alpha-l": det.alpha_l, "occupation": det.occupation,
    });
    let table = match &args.table {
        Some(path) => {
            config["table"] = json!(path.display().to_string());
            read_table(path)?
        }
        None => {
            let setup = TableSetup {
                gamma: args.table_gamma.clone().unwrap_or_else(|| DEFAULT_TABLE_GAMMA.into()),
                modes: args.table_modes.clone().unwrap_or_else(|| DEFAULT_TABLE_MODES.into()),
                model: model(args.resonance_factor, None, None)?,
            };
            config["table"] = setup.config();
            config["samples"] = json!(samples);
            setup.build(samples, seed)?
        }
    };
    let rf = args.resonance_factor.unwrap_or(CavityModel::default().resonance_factor);
    let cfg = QuadratureConfig::default();
    let rows = grid
        .iter()
        .map(|&g0| {
            let p = CavityParams::new(n, g0, rf)?;
            Ok((g0, cavity_correlators(&p, &det, &table, &cfg)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(CavityRun {
        config,
        seed,
        rows,
        limits: cavity_strong_limits(&det, n)?,
    })
}

fn read_table(path: &PathBuf) -> Result<MomentTable, CliError> {
    let f = File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok(MomentTable::read_csv(BufReader::new(f))?)
}

fn cavity_row(g0: f64, c: &thermocorr::cavity::CavityCorrelators) -> Vec<String> {
    vec![
        sig12(g0),
        sig12(c.reduced.cross),
        sig12(c.reduced.excess_auto),
        sig12(c.reduced.mean_current),
        sig12(c.cross_ratio),
        sig12(c.short_ratio),
    ]
}

const FIG3_COLUMNS: [&str; 6] = [
    "gamma0",
    "C_kl_reduced",
    "C_kk_minus_I_reduced",
    "I_k_reduced",
    "cross_ratio",
    "short_ratio",
];

pub fn fig3(global: &GlobalArgs, args: &CavitySweepArgs) -> Result<(), CliError> {
    let run = run_cavity(global, args)?;
    let rows: Vec<Vec<String>> = run.rows.iter().map(|(g, c)| cavity_row(*g, c)).collect();
    write_csv(global.out.as_deref(), &header(&run.config, run.seed), &FIG3_COLUMNS, &rows)
}

pub fn cavity_sweep(global: &GlobalArgs, args: &CavitySweepArgs) -> Result<(), CliError> {
    let run = run_cavity(global, args)?;
    let rows: Vec<Vec<String>> = run
        .rows
        .iter()
        .map(|(g, c)| {
            let mut r = cavity_row(*g, c);
            r.push(sig12(run.limits.cross_ratio_limit));
            r.push(sig12(run.limits.short_range_ratio_limit));
            r
        })
        .collect();
    let mut columns = FIG3_COLUMNS.to_vec();
    columns.extend(["cross_ratio_limit", "short_ratio_limit"]);
    write_csv(global.out.as_deref(), &header(&run.config, run.seed), &columns, &rows)
}

#[derive(Serialize)]
struct RmtOutput<'a> {
    config: &'a serde_json::Value,
    seed: u64,
    reports: &'a [CheckReport],
}

pub fn rmt_validate(global: &GlobalArgs, args: &RmtArgs) -> Result<(), CliError> {
    let modes_text = args.modes.clone().unwrap_or_else(|| "8,16,32".into());
    let modes = parse_counts(&modes_text)?;
    let first = *modes.first().ok_or_else(|| CliError::Input("no mode counts".into()))?;
    let gamma = args.gamma.unwrap_or(1.0);
    let check = args.check.clone().unwrap_or_else(|| "all".into());
    let seed = global.seed.unwrap_or(DEFAULT_SEED);
    let samples = global.samples.unwrap_or(DEFAULT_RMT_SAMPLES);
    let remainder = tolerance(global, 1.0)?;
    let sampler = CavitySampler {
        gamma,
        model: model(None, args.ensemble.as_deref(), None)?,
    };
    let config = json!({
        "modes": modes_text, "gamma": gamma, "check": check, "samples": samples,
        "remainder-scale": remainder,
        "ensemble": args.ensemble.clone().unwrap_or_else(|| "orthogonal".into()),
    });
    let key = StreamKey::new(seed);
    let wanted = |name: &str| check == "all" || check == name;
    if !["all", "equivalent-channel", "factorization", "covariance-identity"].contains(&check.as_str()) {
        return Err(CliError::Input(format!("unknown check `{check}`")));
    }
    let mut reports = Vec::new();
    if wanted("equivalent-channel") {
        reports.push(equivalent_channel_check(&sampler, first, samples, key.child(1))?);
    }
    if wanted("factorization") {
        reports.push(factorization_check(&sampler, &modes, samples, key.child(2))?);
    }
    if wanted("covariance-identity") {
        reports.push(covariance_identity_check(&sampler, first, samples, remainder, key.child(3))?);
    }
    let mut out = open_out(global.out.as_deref())?;
    serde_json::to_writer_pretty(
        &mut out,
        &RmtOutput {
            config: &config,
            seed,
            reports: &reports,
        },
    )?;
    writeln!(out)?;
    out.flush()?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .map(|r| r.check.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}

fn parse_matrix(text: &str) -> Result<DMatrix<C64>, CliError> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(parse_grid)
        .collect::<Result<_, _>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Input(format!("QQ† must be square, got `{text}`")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0)))
}

fn pair<T: Copy>(values: Vec<T>, what: &str) -> Result<[T; 2], CliError> {
    match values.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(CliError::Input(format!("{what} needs exactly two values"))),
    }
}

pub fn photosim(global: &GlobalArgs, args: &PhotosimArgs) -> Result<(), CliError> {
    let qq_text = args.qq.clone().unwrap_or_else(|| "0.5,0.45;0.45,0.5".into());
    let bins = args.bins.unwrap_or(64);
    let band = args.band_width.unwrap_or(1.0);
    let f = args.occupation.unwrap_or(10.0);
    let eff_text = args.efficiency.clone().unwrap_or_else(|| "1,1".into());
    let modes_text = args.detector_modes.clone().unwrap_or_else(|| "0,1".into());
    let windows = args.windows.unwrap_or(10_000);
    let replicates = args.replicates.unwrap_or(200);
    let seed = global.seed.unwrap_or(DEFAULT_SEED);
    let tol = tolerance(global, 0.05)?;

    let spectrum = EmissionSpectrum::flat(parse_matrix(&qq_text)?, bins, band, f)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let det = Photodetectors::new(
        pair(parse_counts(&modes_text)?, "detector-modes")?,
        pair(parse_grid(&eff_text)?, "efficiency")?,
    )?;
    let config = json!({
        "qq": qq_text, "bins": bins, "band-width": band, "occupation": f,
        "efficiency": eff_text, "detector-modes": modes_text, "windows": windows,
        "replicates": replicates, "tolerance": tol,
    });
    let key = StreamKey::new(seed);
    let record = simulate_photocounts(&spectrum, &det, windows, key)?;
    let estimate = estimate_correlators(&record, replicates, &mut key.child(7).rng(0))?;
    let expected = spectrum.expected(&det)?;

    let out = open_out(global.out.as_deref())?;
    record.write_csv(out, &header(&config, seed))?;

    let relative = |got: f64, want: f64| if want == 0.0 { got.abs() } else { (got - want).abs() / want.abs() };
    let deviations = json!({
        "cross": relative(estimate.result.cross, expected.cross),
        "auto": relative(estimate.auto, expected.excess_auto + expected.mean_current),
        "mean_current": relative(estimate.result.mean_current, expected.mean_current),
    });
    let within = ["cross", "auto", "mean_current"]
        .iter()
        .all(|k| deviations[k].as_f64().is_some_and(|d| d <= tol));
    let summary = json!({
        "config": config,
        "seed": seed,
        "estimate": estimate,
        "expected": expected,
        "relative_deviation": deviations,
        "verdict": if within { "pass" } else { "fail" },
    });
    let summary_path = args.summary.clone().or_else(|| {
        global.out.as_ref().map(|p| {
            let mut s = p.as_os_str().to_owned();
            s.push(".json");
            PathBuf::from(s)
        })
    });
    match summary_path {
        Some(p) => {
            let mut w = open_out(Some(&p))?;
            serde_json::to_writer_pretty(&mut w, &summary)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => eprintln!("{}", serde_json::to_string_pretty(&summary)?),
    }
    if within {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "empirical correlators deviate from the line sums by more than {tol}: {deviations}"
        )))
    }
}

pub fn geometry(global: &GlobalArgs, args: &GeometryArgs) -> Result<(), CliError> {
    let g = coherence_geometry(
        args.wavelength.unwrap_or(500e-9),
        args.source_diameter.unwrap_or(1e-3),
        args.distance.unwrap_or(1.0),
        args.area.unwrap_or(1e-6),
    )?;
    let mut out = open_out(global.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &g)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}
