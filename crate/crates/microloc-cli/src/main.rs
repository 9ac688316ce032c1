//! Batch experiment runner: deterministic orchestration of the library
//! over line-oriented config files, emitting CSV/MFLD1 artifacts and a
//! run manifest with content hashes.

mod config;
mod symbols;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use config::{Config, ConfigError};
use microloc::cones::DirectionCap;
use microloc::compcomp::{compcomp_run, div_curl_preset, div_curl_violator, ConditionMode};
use microloc::defect::{
    defect_estimate, estimate_to_csv, hermitian_check, DefectBins, SequenceKind, SequenceSpec,
};
use microloc::grid::{
    bracket, forward_transform, inverse_transform, load_mfld, save_mfld, sobolev_norm, GridField,
    GridSpec, SpectralField,
};
use microloc::psido::{quantize, Multiplier, Symbol};
use microloc::pullback::{admissible, appendix_family, Admissibility, MapClass};
use microloc::seminorm::{masked_seminorm, BumpCutoff};
use microloc::wavefront::{wf_scan, wfc_scan, ScanLattice};

#[derive(Parser)]
#[command(name = "microloc", version, about = "numerical microlocal analysis toolkit")]
struct Cli {
    /// experiment configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory for artifacts and the run manifest
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// rayon worker threads (results are identical for any count)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// scan fields for singular (cell, direction) patches
    WfScan { fields: Vec<PathBuf> },
    /// scan a sequence of fields for noncompact patches
    WfcScan { fields: Vec<PathBuf> },
    /// apply the configured symbol to a field
    PsidoApply {
        field: PathBuf,
        #[arg(long, default_value = "psido_out.mfld")]
        output: String,
    },
    /// print one admissibility table row
    PullbackVerify {
        #[arg(long)]
        case: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        r1: f64,
        #[arg(long)]
        r2: f64,
    },
    /// compare the kernel-family quadrature against the lattice route
    AppendixCheck {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 1024)]
        samples: usize,
        #[arg(long, default_value_t = 40.0)]
        extent: f64,
    },
    /// estimate the microlocal defect measure of the configured sequence
    DefectEstimate {
        /// config file holding the [sequence] section (defaults to --config)
        #[arg(long)]
        seq: Option<PathBuf>,
        /// bin geometry `window,cells,transition,angular`
        #[arg(long)]
        bins: Option<String>,
        #[arg(long)]
        tail: Option<usize>,
    },
    /// run the compensated-compactness experiment
    CompcompRun {
        #[arg(long, default_value = "div-curl")]
        preset: String,
        #[arg(long, default_value = "8,16,32,64")]
        freqs: String,
        /// `pass` for the tangential projector, `fail` for the violator
        #[arg(long, default_value = "pass")]
        b: String,
    },
    /// run the built-in invariant suite
    Selftest,
}

enum CliError {
    Config(String),
    Numerical(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<microloc::Error> for CliError {
    fn from(e: microloc::Error) -> Self {
        CliError::Numerical(format!("{e:?}: {e}"))
    }
}

struct Runner {
    out_dir: PathBuf,
    artifacts: Vec<(String, String)>, // (name, sha256)
    config_hash: String,
    started: Instant,
}

impl Runner {
    fn new(out_dir: &Path, config_text: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
        Ok(Runner {
            out_dir: out_dir.to_path_buf(),
            artifacts: Vec::new(),
            config_hash: hex_digest(config_text.as_bytes()),
            started: Instant::now(),
        })
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, text)
            .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push((name.to_string(), hex_digest(text.as_bytes())));
        Ok(())
    }

    fn write_field(&mut self, name: &str, field: &GridField) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        save_mfld(&path, field)?;
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::Numerical(format!("cannot hash {}: {e}", path.display())))?;
        self.artifacts.push((name.to_string(), hex_digest(&bytes)));
        Ok(())
    }

    fn finish(&self) -> Result<(), CliError> {
        let mut manifest = String::new();
        manifest.push_str(&format!("tool = microloc-cli {}\n", env!("CARGO_PKG_VERSION")));
        manifest.push_str(&format!("config_sha256 = {}\n", self.config_hash));
        manifest.push_str(&format!(
            "wall_time_s = {:.3}\n",
            self.started.elapsed().as_secs_f64()
        ));
        for (name, hash) in &self.artifacts {
            manifest.push_str(&format!("artifact {name} sha256={hash}\n"));
        }
        let path = self.out_dir.join("manifest.txt");
        std::fs::write(&path, manifest)
            .map_err(|e| CliError::Numerical(format!("cannot write manifest: {e}")))?;
        Ok(())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn load_config(path: &Option<PathBuf>) -> Result<(Config, String), CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            Ok((Config::parse(&text)?, text))
        }
        None => Ok((Config::default(), String::new())),
    }
}

fn grid_from_config(cfg: &Config) -> Result<GridSpec, CliError> {
    let grid = cfg.section("grid", &["dim", "samples", "extent"])?;
    Ok(GridSpec::new(
        grid.parse::<usize>("dim")?,
        grid.parse::<usize>("samples")?,
        grid.parse::<f64>("extent")?,
    )?)
}

fn lattice_from_config(cfg: &Config, dim: usize) -> Result<ScanLattice, CliError> {
    let sec = cfg.section(
        "lattice",
        &["window", "stride", "r_inner", "r_outer", "angular", "half_angle", "radial_floor"],
    )?;
    let mut lattice = ScanLattice::regular(
        dim,
        sec.parse::<f64>("window")?,
        sec.parse::<f64>("stride")?,
        sec.parse::<f64>("r_inner")?,
        sec.parse::<f64>("r_outer")?,
        sec.parse_or::<usize>("angular", 8)?,
        sec.parse::<f64>("half_angle")?,
        sec.parse_or::<f64>("radial_floor", 1.0)?,
    )?;
    if cfg.has_section("scan") {
        let scan = cfg.section(
            "scan",
            &["order", "singular_margin", "compact_ratio", "noncompact_ratio", "energy_floor", "r_grid"],
        )?;
        lattice.thresholds.singular_margin =
            scan.parse_or("singular_margin", lattice.thresholds.singular_margin)?;
        lattice.thresholds.compact_ratio =
            scan.parse_or("compact_ratio", lattice.thresholds.compact_ratio)?;
        lattice.thresholds.noncompact_ratio =
            scan.parse_or("noncompact_ratio", lattice.thresholds.noncompact_ratio)?;
        lattice.thresholds.energy_floor =
            scan.parse_or("energy_floor", lattice.thresholds.energy_floor)?;
    }
    Ok(lattice)
}

fn scan_order(cfg: &Config) -> Result<f64, CliError> {
    let scan = cfg.section(
        "scan",
        &["order", "singular_margin", "compact_ratio", "noncompact_ratio", "energy_floor", "r_grid"],
    )?;
    Ok(scan.parse_or("order", 0.0)?)
}

fn scan_r_grid(cfg: &Config) -> Result<Vec<f64>, CliError> {
    let scan = cfg.section(
        "scan",
        &["order", "singular_margin", "compact_ratio", "noncompact_ratio", "energy_floor", "r_grid"],
    )?;
    match scan.get("r_grid") {
        Some(_) => Ok(scan.parse_list("r_grid")?),
        None => Ok(vec![2.0, 4.0, 8.0, 16.0, 30.0]),
    }
}

/// `bump(center..., r_inner, r_outer)` literal.
fn parse_bump(text: &str) -> Result<BumpCutoff, CliError> {
    let body = text
        .trim()
        .strip_prefix("bump(")
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or_else(|| CliError::Config(format!("expected bump(...), got {text:?}")))?;
    let vals: Vec<f64> = config::parse_list(body).map_err(CliError::Config)?;
    if vals.len() < 3 {
        return Err(CliError::Config("bump needs center..., r_inner, r_outer".into()));
    }
    let (radii, center) = vals.split_at(vals.len() - 2);
    Ok(BumpCutoff::new(radii.to_vec(), center[0], center[1])?)
}

fn sequence_from_config(cfg: &Config, spec: GridSpec) -> Result<SequenceSpec, CliError> {
    let sec = cfg.section(
        "sequence",
        &["kind", "profile", "omega0", "freqs", "x0", "scales", "member", "limit"],
    )?;
    let limit = match sec.get("limit") {
        None | Some("zero") => GridField::zero(spec, 1),
        Some(path) => load_mfld(Path::new(path))?,
    };
    let profile = |sec: &config::Section| -> Result<GridField, CliError> {
        let text = sec.require("profile")?;
        if text.starts_with("bump(") {
            Ok(parse_bump(text)?.sample(&spec))
        } else {
            Ok(load_mfld(Path::new(text))?)
        }
    };
    let kind = match sec.require("kind")? {
        "oscillation" => SequenceKind::Oscillation {
            profile: profile(&sec)?,
            omega0: sec.parse_list("omega0")?,
            freqs: sec.parse_list("freqs")?,
        },
        "concentration" => SequenceKind::Concentration {
            profile: profile(&sec)?,
            x0: sec.parse_list("x0")?,
            scales: sec.parse_list("scales")?,
        },
        "explicit" => {
            let members = sec
                .get_all("member")
                .into_iter()
                .map(|p| load_mfld(Path::new(p)).map_err(CliError::from))
                .collect::<Result<Vec<_>, _>>()?;
            SequenceKind::Explicit(members)
        }
        other => return Err(CliError::Config(format!("unknown sequence kind {other:?}"))),
    };
    Ok(SequenceSpec { kind, limit })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "field".into())
}

fn cmd_wf_scan(cfg: &Config, runner: &mut Runner, fields: &[PathBuf]) -> Result<(), CliError> {
    if fields.is_empty() {
        return Err(CliError::Config("wf-scan needs at least one field file".into()));
    }
    let order = scan_order(cfg)?;
    for path in fields {
        let field = load_mfld(path)?;
        let lattice = lattice_from_config(cfg, field.spec().dim())?;
        let report = wf_scan(&field, order, &lattice)?;
        runner.write_text(&format!("wf_{}.csv", stem(path)), &report.to_csv())?;
    }
    Ok(())
}

fn cmd_wfc_scan(cfg: &Config, runner: &mut Runner, fields: &[PathBuf]) -> Result<(), CliError> {
    if fields.is_empty() {
        return Err(CliError::Config("wfc-scan needs member field files".into()));
    }
    let members: Vec<GridField> = fields
        .iter()
        .map(|p| load_mfld(p).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = *members[0].spec();
    let sec = cfg.section(
        "sequence",
        &["kind", "profile", "omega0", "freqs", "x0", "scales", "member", "limit"],
    )?;
    let limit = match sec.get("limit") {
        None | Some("zero") => GridField::zero(spec, members[0].channels()),
        Some(path) => load_mfld(Path::new(path))?,
    };
    let lattice = lattice_from_config(cfg, spec.dim())?;
    let order = scan_order(cfg)?;
    let r_grid = scan_r_grid(cfg)?;
    let report = wfc_scan(&members, &limit, order, &lattice, &r_grid)?;
    runner.write_text("wfc_scan.csv", &report.to_csv())?;
    Ok(())
}

fn cmd_psido_apply(
    cfg: &Config,
    runner: &mut Runner,
    field: &Path,
    output: &str,
) -> Result<(), CliError> {
    let sec = cfg.section("symbol", &["symbol"])?;
    let symbol = symbols::parse_symbol(sec.require("symbol")?)?;
    let u = load_mfld(field)?;
    let v = quantize(&symbol, &u)?;
    runner.write_field(output, &v)?;
    Ok(())
}

fn cmd_pullback_verify(case: &str, n: usize, k: Option<usize>, r1: f64, r2: f64) -> Result<(), CliError> {
    let class = match case {
        "general" => MapClass::General,
        "constant-rank" | "constant_rank" => MapClass::ConstantRank(
            k.ok_or_else(|| CliError::Config("constant-rank needs --k".into()))?,
        ),
        "submersion" => MapClass::Submersion,
        "diffeo" => MapClass::Diffeo,
        other => return Err(CliError::Config(format!("unknown case {other:?}"))),
    };
    let verdict = admissible(class, n, r1, r2)?;
    let word = match verdict {
        Admissibility::Admissible => "admissible",
        Admissibility::NotAdmissible => "not_admissible",
        Admissibility::OpenInPaper => "open_in_paper",
    };
    println!("case={case} n={n} k={} r1={r1} r2={r2} verdict={word}", k.map(|v| v.to_string()).unwrap_or_else(|| "-".into()));
    Ok(())
}

fn cmd_appendix_check(
    runner: &mut Runner,
    q: usize,
    s: f64,
    samples: usize,
    extent: f64,
) -> Result<(), CliError> {
    let spec = GridSpec::new(q, samples, extent)?;
    let integral = appendix_family(q, s, &spec)?;
    let lattice = inverse_transform(&SpectralField::from_fn(spec, |xi| {
        Complex64::new(bracket(xi).powf(-s), 0.0)
    }));
    // rel_err is |difference| over the sup of the integral route on the
    // comparison window (|y| in [0.5, 5])
    let mut sup_ref = 0.0f64;
    for i in 0..spec.len() {
        let y = spec.point(i);
        let r: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (0.5..=5.0).contains(&r) {
            sup_ref = sup_ref.max(integral.channel(0)[i].re.abs());
        }
    }
    let mut csv = String::new();
    for d in 0..q {
        csv.push_str(&format!("y{d},"));
    }
    csv.push_str("route_integral,route_fft,rel_err\n");
    let mut max_rel: f64 = 0.0;
    for i in 0..spec.len() {
        let y = spec.point(i);
        let r: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(0.5..=5.0).contains(&r) {
            continue;
        }
        let a = integral.channel(0)[i].re;
        let b = lattice.channel(0)[i].re;
        let rel = (a - b).abs() / sup_ref;
        max_rel = max_rel.max(rel);
        for v in &y {
            csv.push_str(&format!("{v},"));
        }
        csv.push_str(&format!("{a},{b},{rel}\n"));
    }
    runner.write_text(&format!("appendix_q{q}_s{s}.csv"), &csv)?;
    println!("appendix-check q={q} s={s}: max rel_err {max_rel:e}");
    Ok(())
}

fn cmd_defect_estimate(
    cli_cfg: &Config,
    runner: &mut Runner,
    seq_path: &Option<PathBuf>,
    bins_arg: &Option<String>,
    tail_arg: Option<usize>,
) -> Result<(), CliError> {
    let seq_cfg;
    let cfg = match seq_path {
        Some(p) => {
            seq_cfg = Config::load(p)?;
            &seq_cfg
        }
        None => cli_cfg,
    };
    let spec = grid_from_config(cfg)?;
    let seq = sequence_from_config(cfg, spec)?;
    let sec = cli_cfg.section(
        "defect",
        &["window", "cells", "transition", "angular", "tail", "mass_floor"],
    )?;
    let (window, cells, transition, angular) = match bins_arg {
        Some(text) => {
            let vals: Vec<f64> = config::parse_list(text).map_err(CliError::Config)?;
            if vals.len() != 4 {
                return Err(CliError::Config(
                    "--bins expects `window,cells,transition,angular`".into(),
                ));
            }
            (vals[0], vals[1] as usize, vals[2], vals[3] as usize)
        }
        None => (
            sec.parse::<f64>("window")?,
            sec.parse::<usize>("cells")?,
            sec.parse::<f64>("transition")?,
            sec.parse_or::<usize>("angular", 8)?,
        ),
    };
    let tail = match tail_arg {
        Some(t) => t,
        None => sec.parse_or::<usize>("tail", 2)?,
    };
    let dirs: Vec<Vec<f64>> = match spec.dim() {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..angular)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / angular as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            return Err(CliError::Config(
                "defect-estimate directions are built for dim <= 2; use the library for 3-D".into(),
            ))
        }
    };
    let bins = DefectBins::build(&spec, window, cells, transition, dirs)?;
    let est = defect_estimate(&seq, &bins, tail)?;
    runner.write_text("defect_estimate.csv", &estimate_to_csv(&est))?;
    println!(
        "defect-estimate: total mass {:.6e}, hermitian deviation {:.3e}",
        est.total_mass,
        hermitian_check(&est)
    );
    Ok(())
}

fn cmd_compcomp_run(
    cfg: &Config,
    runner: &mut Runner,
    preset: &str,
    freqs: &str,
    b_choice: &str,
) -> Result<(), CliError> {
    if preset != "div-curl" {
        return Err(CliError::Config(format!("unknown preset {preset:?}")));
    }
    let spec = if cfg.has_section("grid") {
        grid_from_config(cfg)?
    } else {
        GridSpec::new(2, 512, 8.0)?
    };
    let seed = cfg.section("", &["seed"])?.parse_or::<u64>("seed", 0)?;
    let freqs: Vec<i64> = config::parse_list(freqs).map_err(CliError::Config)?;
    let (seq, a, b_pass) = div_curl_preset(&spec, &freqs)?;
    let b = match b_choice {
        "pass" => b_pass,
        "fail" => div_curl_violator()?,
        other => return Err(CliError::Config(format!("--b must be pass|fail, got {other:?}"))),
    };
    let chi = BumpCutoff::new(vec![0.0, 0.0], 2.0, 3.0)?;
    let lattice = ScanLattice::regular(2, 0.1, 1.0, 1.0, 2.0, 8, 0.5, 1.0)?;
    let report = compcomp_run(
        &seq,
        &a,
        &b,
        &chi,
        1.0,
        &lattice,
        &[2.0, 4.0, 8.0, 16.0, 30.0],
        ConditionMode::Zero,
        seed,
    )?;
    let mut csv = String::from("n,density_re,density_im,gap\n");
    for (i, d) in report.curve.iter().enumerate() {
        let gap = (d - report.limit_density).norm();
        csv.push_str(&format!("{},{},{},{}\n", freqs[i], d.re, d.im, gap));
    }
    runner.write_text("compcomp_run.csv", &csv)?;
    println!(
        "compcomp-run: condition {} (worst residual {:.3e}), constraint compact {}, gap {:.3e} (scale {:.3e})",
        if report.condition.pass { "pass" } else { "fail" },
        report.condition.worst_residual,
        report.constraint_compact,
        report.gap,
        report.scale
    );
    Ok(())
}

fn cmd_selftest() -> Result<(), CliError> {
    // Parseval and round trip
    let spec = GridSpec::new(2, 64, 9.0)?;
    let u = GridField::from_fn(spec, |x| {
        Complex64::new((1.3 * x[0]).sin() * (-x[1] * x[1]).exp(), (x[0] - x[1]).cos())
    })?;
    let us = forward_transform(&u);
    let lhs: f64 = us.coeff().iter().map(|z| z.norm_sqr()).sum::<f64>() * spec.freq_cell_volume();
    let rhs: f64 = u.data().iter().map(|z| z.norm_sqr()).sum::<f64>()
        * spec.cell_volume()
        * (2.0 * std::f64::consts::PI).powi(2);
    if (lhs - rhs).abs() > 1e-10 * rhs {
        return Err(CliError::Numerical(format!("Parseval defect {:e}", (lhs - rhs).abs() / rhs)));
    }
    println!("selftest: Parseval ok");
    let back = inverse_transform(&us);
    let rt = u
        .data()
        .iter()
        .zip(back.data())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if rt > 1e-12 * u.max_abs() {
        return Err(CliError::Numerical(format!("round trip error {rt:e}")));
    }
    println!("selftest: round trip ok");
    if (sobolev_norm(&u, 0.0) - u.l2_norm()).abs() > 1e-10 * u.l2_norm() {
        return Err(CliError::Numerical("Plancherel L2 identity failed".into()));
    }
    println!("selftest: Plancherel ok");

    // cone additivity
    let phi = BumpCutoff::new(vec![0.0, 0.0], 1.5, 3.0)?;
    let ws = forward_transform(&phi.apply(&u));
    let m1 = microloc::cones::freq_mask(&spec, &DirectionCap::new(vec![1.0, 0.0], 0.5)?, 1.0);
    let m2 = microloc::cones::freq_mask(&spec, &DirectionCap::new(vec![0.0, 1.0], 0.5)?, 1.0);
    let union: Vec<bool> = m1.iter().zip(&m2).map(|(&a, &b)| a || b).collect();
    let w = |xi: &[f64]| bracket(xi).powf(1.0);
    let defect = (masked_seminorm(&ws, &m1, w).powi(2) + masked_seminorm(&ws, &m2, w).powi(2)
        - masked_seminorm(&ws, &union, w).powi(2))
    .abs();
    if defect > 1e-10 * masked_seminorm(&ws, &union, w).powi(2).max(1e-300) {
        return Err(CliError::Numerical(format!("cone additivity defect {defect:e}")));
    }
    println!("selftest: cone additivity ok");

    // multiplier composition exactness
    let spec1 = GridSpec::new(1, 128, 12.0)?;
    let v = GridField::from_fn(spec1, |x| Complex64::new((-x[0] * x[0]).exp(), 0.1))?;
    let one = quantize(
        &Symbol::multiplier(
            0.0,
            Multiplier::Product(vec![
                Multiplier::BracketPower(-1.5),
                Multiplier::BracketPower(1.5),
            ]),
        ),
        &v,
    )?;
    let two = quantize(
        &Symbol::multiplier(-1.5, Multiplier::BracketPower(-1.5)),
        &quantize(&Symbol::multiplier(1.5, Multiplier::BracketPower(1.5)), &v)?,
    )?;
    let comp = one
        .data()
        .iter()
        .zip(two.data())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if comp > 1e-11 * one.max_abs() {
        return Err(CliError::Numerical(format!("multiplier composition error {comp:e}")));
    }
    println!("selftest: multiplier composition ok");

    // admissibility spot rows
    for (class, n, r1, r2, expect) in [
        (MapClass::General, 2, 0.4, 1.5, Admissibility::Admissible),
        (MapClass::ConstantRank(1), 2, 0.0, 0.4, Admissibility::NotAdmissible),
        (MapClass::ConstantRank(1), 2, 0.0, 0.5, Admissibility::OpenInPaper),
        (MapClass::Submersion, 2, 0.0, 0.0, Admissibility::Admissible),
    ] {
        if admissible(class, n, r1, r2)? != expect {
            return Err(CliError::Numerical(format!("admissibility row {class:?} {n} {r1} {r2}")));
        }
    }
    println!("selftest: admissibility table ok");
    println!("selftest: all checks passed");
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        // ignore failure: the pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (cfg, cfg_text) = load_config(&cli.config)?;
    match &cli.command {
        Command::PullbackVerify { case, n, k, r1, r2 } => {
            return cmd_pullback_verify(case, *n, *k, *r1, *r2)
        }
        Command::Selftest => return cmd_selftest(),
        _ => {}
    }
    let mut runner = Runner::new(&cli.out, &cfg_text)?;
    match &cli.command {
        Command::WfScan { fields } => cmd_wf_scan(&cfg, &mut runner, fields)?,
        Command::WfcScan { fields } => cmd_wfc_scan(&cfg, &mut runner, fields)?,
        Command::PsidoApply { field, output } => cmd_psido_apply(&cfg, &mut runner, field, output)?,
        Command::AppendixCheck { q, s, samples, extent } => {
            cmd_appendix_check(&mut runner, *q, *s, *samples, *extent)?
        }
        Command::DefectEstimate { seq, bins, tail } => {
            cmd_defect_estimate(&cfg, &mut runner, seq, bins, *tail)?
        }
        Command::CompcompRun { preset, freqs, b } => {
            cmd_compcomp_run(&cfg, &mut runner, preset, freqs, b)?
        }
        Command::PullbackVerify { .. } | Command::Selftest => unreachable!(),
    }
    runner.finish()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
