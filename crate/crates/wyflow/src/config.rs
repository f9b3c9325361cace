//! Scenario configuration: INI-style files, shipped presets, CLI overrides,
//! and the resolved-config echo.
//!
//! The file format is deliberately plain: `[section]` headers and
//! `key = value` lines, `#`/`;` comments. Unknown sections or keys are hard
//! errors — config typos must not silently fall back to defaults. Every
//! command echoes the fully resolved configuration into its output
//! directory, and that echo parses back to the identical configuration.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use wyflow_core::background::{BackgroundSpec, Family, Phi0Spec};
use wyflow_core::flow::{DtPolicy, FlowConfig, Stepper};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `w ≡ 1`.
    Constant,
    /// `w = 1 + amplitude·cos(frequency·π·x/Lx)` (times the matching cosine
    /// in y on rectangles), projected onto the discrete Neumann condition.
    Trig { amplitude: f64, frequency: u32 },
    /// Nodal values from a CSV file (last column; header row optional).
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Settings for the `verify` subcommand: grid sizes for the refinement
/// studies, number of seeded random fields, and the order threshold the
/// fitted convergence rates must clear.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub sizes: Vec<usize>,
    pub seeds: u32,
    pub min_order: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { sizes: vec![128, 256, 512], seeds: 5, min_order: 1.5 }
    }
}

/// Everything a subcommand needs, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub background: BackgroundSpec,
    pub initial: InitialData,
    pub flow: FlowConfig,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub seed: u64,
    pub spectrum_k: usize,
    pub verify: VerifyConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "custom".to_string(),
            background: BackgroundSpec {
                family: Family::FlatInterval { length: 1.0 },
                n: 3,
                m: 1.0,
                nodes: 256,
                nodes_y: 16,
                phi0: Phi0Spec::ZERO,
            },
            initial: InitialData::Constant,
            flow: FlowConfig::default(),
            out_dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
            seed: 42,
            spectrum_k: 6,
            verify: VerifyConfig::default(),
        }
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "positive_cap",
    "positive_cap_perturbed",
    "zero_flat_constant",
    "zero_flat_perturbed",
    "negative_weighted",
    "hyperbolic_weighted",
];

/// The six shipped scenarios: one per sign case of the conformal class,
/// plus a perturbed variant of each exercised case and a hyperbolic
/// background for boundary-weight coverage.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig { name: name.to_string(), ..ScenarioConfig::default() };
    cfg.out_dir = PathBuf::from("out").join(name);
    match name {
        // Round hemispherical cap, lightly perturbed: converges back to the
        // round state with r_∞ = its constant curvature average.
        "positive_cap" => {
            cfg.background.family = Family::SphericalCap { theta0 : PI / 2.0 };
            cfg.background.nodes = 512;
            cfg.initial = InitialData::Trig { amplitude: 0.01, frequency: 1 };
            cfg.flow.stepper = Stepper::SemiImplicit;
            cfg.flow.dt = DtPolicy::Fixed(1e-4);
        }
        // Same background, a 10× larger kick, and the tolerance tightened
        // so the headline sup|R − r| < 1e-6 bound is reached before the
        // run is declared converged (r ≈ 19 at the round limit).
        "positive_cap_perturbed" => {
            cfg.background.family = Family::SphericalCap { theta0: PI / 2.0 };
            cfg.background.nodes = 512;
            cfg.initial = InitialData::Trig { amplitude: 0.1, frequency: 1 };
            cfg.flow.stepper = Stepper::SemiImplicit;
            cfg.flow.dt = DtPolicy::Fixed(1e-4);
            cfg.flow.tol_conv = 4e-8;
            // Dense sampling: the decay fit needs ≥ 50 usable rows and the
            // gap collapses within t ≈ 0.15.
            cfg.flow.monitor_stride = 10;
        }
        // Flat interval, fixed-point data: the flow does nothing, step 0.
        "zero_flat_constant" => {
            cfg.background.family = Family::FlatInterval { length: 1.0 };
            cfg.background.nodes = 256;
            cfg.initial = InitialData::Constant;
        }
        // Flat interval, genuine dynamics decaying to a constant factor.
        "zero_flat_perturbed" => {
            cfg.background.family = Family::FlatInterval { length: 1.0 };
            cfg.background.nodes = 256;
            cfg.initial = InitialData::Trig { amplitude: 0.2, frequency: 2 };
            cfg.flow.tol_conv = 1e-7;
            cfg.flow.monitor_stride = 25;
        }
        // Flat metric with a strong oscillating weight: the conformal class
        // is negative, r(t) crosses zero in finite time.
        "negative_weighted" => {
            cfg.background.family = Family::FlatInterval { length: 1.0 };
            cfg.background.m = 2.0;
            cfg.background.nodes = 256;
            cfg.background.phi0 = Phi0Spec { amplitude: 2.5, mode: 2, offset: 0.0 };
            cfg.initial = InitialData::Constant;
            cfg.flow.stepper = Stepper::SemiImplicit;
            cfg.flow.dt = DtPolicy::Fixed(5e-5);
        }
        // Hyperbolic ball with a weight: negative background curvature and
        // a nonzero boundary term in the same run.
        "hyperbolic_weighted" => {
            cfg.background.family = Family::HyperbolicBall { rho0: 1.0 };
            cfg.background.m = 2.0;
            cfg.background.nodes = 256;
            cfg.background.phi0 = Phi0Spec { amplitude: 0.3, mode: 1, offset: 0.0 };
            cfg.initial = InitialData::Trig { amplitude: 0.1, frequency: 1 };
            cfg.flow.stepper = Stepper::SemiImplicit;
            cfg.flow.dt = DtPolicy::Fixed(1e-4);
        }
        other => {
            return Err(CliError::config(format!(
                "unknown scenario '{other}' (available: {})",
                PRESET_NAMES.join(", ")
            )));
        }
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// INI parsing
// ---------------------------------------------------------------------------

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| {
        CliError::at_line(line, format!("key '{key}': cannot parse '{v}'"))
    })
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::at_line(line, format!("key '{key}': expected a boolean, got '{v}'"))),
    }
}

/// Applies `[section] key = value` lines from `text` on top of `cfg`.
/// Geometry keys (`length`, `lx`/`ly`, `theta0`, `rho0`) must match the
/// effective family; the family line may appear before or after them in the
/// same file, so coherence is checked at the end.
pub fn apply_ini(cfg: &mut ScenarioConfig, text: &str) -> Result<()> {
    let mut section = String::new();
    // Geometry values are staged and reconciled against the family once the
    // whole file is read.
    let mut geom: Vec<(usize, String, f64)> = Vec::new();
    let mut s_cfl_seen: Option<f64> = None;
    let mut dt_adaptive = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find(['#', ';']) {
            Some(p) => &raw[..p],
            None => raw,
        };
        let t = stripped.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(name) = t.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| CliError::at_line(line, "unterminated [section] header"))?;
            section = name.trim().to_string();
            match section.as_str() {
                "scenario" | "background" | "initial" | "flow" | "output" | "run"
                | "spectrum" | "verify" => {}
                other => {
                    return Err(CliError::at_line(line, format!("unknown section [{other}]")));
                }
            }
            continue;
        }
        let (key, value) = t
            .split_once('=')
            .ok_or_else(|| CliError::at_line(line, format!("expected 'key = value', got '{t}'")))?;
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            return Err(CliError::at_line(line, "key before any [section] header"));
        }

        match (section.as_str(), key) {
            ("scenario", "name") => cfg.name = value.to_string(),

            ("background", "family") => {
                cfg.background.family = match value {
                    "flat_interval" => Family::FlatInterval { length: 1.0 },
                    "flat_rectangle" => Family::FlatRectangle { lx: 1.0, ly: 1.0 },
                    "spherical_cap" => Family::SphericalCap { theta0: PI / 2.0 },
                    "hyperbolic_ball" => Family::HyperbolicBall { rho0: 1.0 },
                    other => {
                        return Err(CliError::at_line(
                            line,
                            format!("unknown family '{other}'"),
                        ));
                    }
                };
            }
            ("background", "n") => cfg.background.n = parse_num(line, key, value)?,
            ("background", "m") => cfg.background.m = parse_num(line, key, value)?,
            ("background", "nodes") => cfg.background.nodes = parse_num(line, key, value)?,
            ("background", "nodes_y") => cfg.background.nodes_y = parse_num(line, key, value)?,
            ("background", "length" | "lx" | "ly" | "theta0" | "rho0") => {
                geom.push((line, key.to_string(), parse_num(line, key, value)?));
            }
            ("background", "phi0_amplitude") => {
                cfg.background.phi0.amplitude = parse_num(line, key, value)?;
            }
            ("background", "phi0_mode") => {
                cfg.background.phi0.mode = parse_num(line, key, value)?;
            }
            ("background", "phi0_offset") => {
                cfg.background.phi0.offset = parse_num(line, key, value)?;
            }

            ("initial", "kind") => {
                cfg.initial = match value {
                    "constant" => InitialData::Constant,
                    "trig" => match cfg.initial {
                        InitialData::Trig { .. } => cfg.initial.clone(),
                        _ => InitialData::Trig { amplitude: 0.1, frequency: 1 },
                    },
                    "file" => match cfg.initial {
                        InitialData::File { .. } => cfg.initial.clone(),
                        _ => InitialData::File { path: PathBuf::new() },
                    },
                    other => {
                        return Err(CliError::at_line(
                            line,
                            format!("unknown initial-data kind '{other}'"),
                        ));
                    }
                };
            }
            ("initial", "amplitude") => {
                let a = parse_num(line, key, value)?;
                match &mut cfg.initial {
                    InitialData::Trig { amplitude, .. } => *amplitude = a,
                    _ => cfg.initial = InitialData::Trig { amplitude: a, frequency: 1 },
                }
            }
            ("initial", "frequency") => {
                let f = parse_num(line, key, value)?;
                match &mut cfg.initial {
                    InitialData::Trig { frequency, .. } => *frequency = f,
                    _ => cfg.initial = InitialData::Trig { amplitude: 0.1, frequency: f },
                }
            }
            ("initial", "path") => {
                cfg.initial = InitialData::File { path: PathBuf::from(value) };
            }

            ("flow", "stepper") => {
                cfg.flow.stepper = match value {
                    "explicit" => Stepper::ExplicitEuler,
                    "semi_implicit" => Stepper::SemiImplicit,
                    other => {
                        return Err(CliError::at_line(
                            line,
                            format!("unknown stepper '{other}' (explicit | semi_implicit)"),
                        ));
                    }
                };
            }
            ("flow", "dt") => {
                if value == "adaptive" {
                    dt_adaptive = true;
                } else {
                    dt_adaptive = false;
                    cfg.flow.dt = DtPolicy::Fixed(parse_num(line, key, value)?);
                }
            }
            ("flow", "s_cfl") => s_cfl_seen = Some(parse_num(line, key, value)?),
            ("flow", "tol_conv") => cfg.flow.tol_conv = parse_num(line, key, value)?,
            ("flow", "max_steps") => cfg.flow.max_steps = parse_num(line, key, value)?,
            ("flow", "renormalize") => {
                cfg.flow.renormalize_each_step = parse_bool(line, key, value)?;
            }
            ("flow", "monitor_stride") => {
                cfg.flow.monitor_stride = parse_num(line, key, value)?;
            }
            ("flow", "p_lyapunov") => {
                cfg.flow.p_lyapunov = Some(parse_num(line, key, value)?);
            }
            ("flow", "sigma") => cfg.flow.sigma = Some(parse_num(line, key, value)?),

            ("output", "dir") => cfg.out_dir = PathBuf::from(value),
            ("output", "format") => {
                cfg.format = match value {
                    "csv" => OutputFormat::Csv,
                    "json" => OutputFormat::Json,
                    other => {
                        return Err(CliError::at_line(
                            line,
                            format!("unknown format '{other}' (csv | json)"),
                        ));
                    }
                };
            }

            ("run", "seed") => cfg.seed = parse_num(line, key, value)?,

            ("spectrum", "k") => cfg.spectrum_k = parse_num(line, key, value)?,

            ("verify", "sizes") => {
                let mut sizes = Vec::new();
                for part in value.split(',') {
                    sizes.push(parse_num(line, key, part.trim())?);
                }
                if sizes.is_empty() {
                    return Err(CliError::at_line(line, "verify sizes list is empty"));
                }
                cfg.verify.sizes = sizes;
            }
            ("verify", "seeds") => cfg.verify.seeds = parse_num(line, key, value)?,
            ("verify", "min_order") => cfg.verify.min_order = parse_num(line, key, value)?,

            (sec, k) => {
                return Err(CliError::at_line(line, format!("unknown key '{k}' in [{sec}]")));
            }
        }
    }

    for (line, key, v) in geom {
        match (&mut cfg.background.family, key.as_str()) {
            (Family::FlatInterval { length }, "length") => *length = v,
            (Family::FlatRectangle { lx, .. }, "lx") => *lx = v,
            (Family::FlatRectangle { ly, .. }, "ly") => *ly = v,
            (Family::SphericalCap { theta0 }, "theta0") => *theta0 = v,
            (Family::HyperbolicBall { rho0 }, "rho0") => *rho0 = v,
            (family, k) => {
                return Err(CliError::at_line(
                    line,
                    format!("geometry key '{k}' does not apply to family '{}'", family.id()),
                ));
            }
        }
    }
    if dt_adaptive || s_cfl_seen.is_some() {
        let s = match (dt_adaptive, s_cfl_seen, cfg.flow.dt) {
            (_, Some(s), _) => s,
            (true, None, DtPolicy::Adaptive { s_cfl }) => s_cfl,
            (true, None, DtPolicy::Fixed(_)) => 0.2,
            _ => unreachable!(),
        };
        cfg.flow.dt = DtPolicy::Adaptive { s_cfl: s };
    }
    Ok(())
}

/// Serializes the fully resolved configuration back to the INI dialect
/// [`apply_ini`] reads. Floats are written with 17 significant digits so the
/// echo round-trips bitwise.
pub fn to_ini(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# resolved configuration (parseable)");
    let _ = writeln!(s, "[scenario]");
    let _ = writeln!(s, "name = {}", cfg.name);
    let _ = writeln!(s);
    let _ = writeln!(s, "[background]");
    let _ = writeln!(s, "family = {}", cfg.background.family.id());
    let _ = writeln!(s, "n = {}", cfg.background.n);
    let _ = writeln!(s, "m = {:.16e}", cfg.background.m);
    let _ = writeln!(s, "nodes = {}", cfg.background.nodes);
    match cfg.background.family {
        Family::FlatInterval { length } => {
            let _ = writeln!(s, "length = {length:.16e}");
        }
        Family::FlatRectangle { lx, ly } => {
            let _ = writeln!(s, "nodes_y = {}", cfg.background.nodes_y);
            let _ = writeln!(s, "lx = {lx:.16e}");
            let _ = writeln!(s, "ly = {ly:.16e}");
        }
        Family::SphericalCap { theta0 } => {
            let _ = writeln!(s, "theta0 = {theta0:.16e}");
        }
        Family::HyperbolicBall { rho0 } => {
            let _ = writeln!(s, "rho0 = {rho0:.16e}");
        }
    }
    let _ = writeln!(s, "phi0_amplitude = {:.16e}", cfg.background.phi0.amplitude);
    let _ = writeln!(s, "phi0_mode = {}", cfg.background.phi0.mode);
    let _ = writeln!(s, "phi0_offset = {:.16e}", cfg.background.phi0.offset);
    let _ = writeln!(s);
    let _ = writeln!(s, "[initial]");
    match &cfg.initial {
        InitialData::Constant => {
            let _ = writeln!(s, "kind = constant");
        }
        InitialData::Trig { amplitude, frequency } => {
            let _ = writeln!(s, "kind = trig");
            let _ = writeln!(s, "amplitude = {amplitude:.16e}");
            let _ = writeln!(s, "frequency = {frequency}");
        }
        InitialData::File { path } => {
            let _ = writeln!(s, "kind = file");
            let _ = writeln!(s, "path = {}", path.display());
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "[flow]");
    let _ = writeln!(
        s,
        "stepper = {}",
        match cfg.flow.stepper {
            Stepper::ExplicitEuler => "explicit",
            Stepper::SemiImplicit => "semi_implicit",
        }
    );
    match cfg.flow.dt {
        DtPolicy::Fixed(dt) => {
            let _ = writeln!(s, "dt = {dt:.16e}");
        }
        DtPolicy::Adaptive { s_cfl } => {
            let _ = writeln!(s, "dt = adaptive");
            let _ = writeln!(s, "s_cfl = {s_cfl:.16e}");
        }
    }
    let _ = writeln!(s, "tol_conv = {:.16e}", cfg.flow.tol_conv);
    let _ = writeln!(s, "max_steps = {}", cfg.flow.max_steps);
    let _ = writeln!(s, "renormalize = {}", cfg.flow.renormalize_each_step);
    let _ = writeln!(s, "monitor_stride = {}", cfg.flow.monitor_stride);
    if let Some(p) = cfg.flow.p_lyapunov {
        let _ = writeln!(s, "p_lyapunov = {p:.16e}");
    }
    if let Some(v) = cfg.flow.sigma {
        let _ = writeln!(s, "sigma = {v:.16e}");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "[output]");
    let _ = writeln!(s, "dir = {}", cfg.out_dir.display());
    let _ = writeln!(s, "format = {}", cfg.format.as_str());
    let _ = writeln!(s);
    let _ = writeln!(s, "[run]");
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s);
    let _ = writeln!(s, "[spectrum]");
    let _ = writeln!(s, "k = {}", cfg.spectrum_k);
    let _ = writeln!(s);
    let _ = writeln!(s, "[verify]");
    let _ = writeln!(
        s,
        "sizes = {}",
        cfg.verify.sizes.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    );
    let _ = writeln!(s, "seeds = {}", cfg.verify.seeds);
    let _ = writeln!(s, "min_order = {:.16e}", cfg.verify.min_order);
    s
}

/// Flag-level overrides (applied last, over preset and file values).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub dt: Option<f64>,
    pub tol: Option<f64>,
    pub max_steps: Option<u64>,
    pub mesh: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<OutputFormat>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(dt) = self.dt {
            cfg.flow.dt = DtPolicy::Fixed(dt);
        }
        if let Some(tol) = self.tol {
            cfg.flow.tol_conv = tol;
        }
        if let Some(ms) = self.max_steps {
            cfg.flow.max_steps = ms;
        }
        if let Some(mesh) = self.mesh {
            cfg.background.nodes = mesh;
            if matches!(cfg.background.family, Family::FlatRectangle { .. }) {
                cfg.background.nodes_y = mesh;
            }
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(fmt) = self.format {
            cfg.format = fmt;
        }
    }
}

/// Builds the effective configuration: defaults, then the named preset (if
/// any), then the config file (if any), then flags.
pub fn resolve(
    scenario: Option<&str>,
    config_text: Option<&str>,
    overrides: &Overrides,
) -> Result<ScenarioConfig> {
    let mut cfg = match scenario {
        Some(name) => preset(name)?,
        None => ScenarioConfig::default(),
    };
    if let Some(text) = config_text {
        apply_ini(&mut cfg, text)?;
    }
    overrides.apply(&mut cfg);
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_roundtrip() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let echo = to_ini(&cfg);
            let mut re = ScenarioConfig::default();
            apply_ini(&mut re, &echo).unwrap();
            assert_eq!(re, cfg, "echo of '{name}' did not round-trip");
        }
        assert!(preset("no_such_preset").is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let mut cfg = ScenarioConfig::default();
        let err = apply_ini(&mut cfg, "[background]\nnodez = 100\n").unwrap_err();
        assert!(err.to_string().contains("unknown key 'nodez'"), "{err}");
        let err = apply_ini(&mut cfg, "[backgroundz]\nnodes = 100\n").unwrap_err();
        assert!(err.to_string().contains("unknown section"), "{err}");
        let err = apply_ini(&mut cfg, "nodes = 100\n").unwrap_err();
        assert!(err.to_string().contains("before any"), "{err}");
        let err = apply_ini(&mut cfg, "[flow]\ndt\n").unwrap_err();
        assert!(err.to_string().contains("key = value"), "{err}");
    }

    #[test]
    fn geometry_keys_must_match_family() {
        let mut cfg = ScenarioConfig::default();
        let err =
            apply_ini(&mut cfg, "[background]\nfamily = flat_interval\ntheta0 = 1.0\n")
                .unwrap_err();
        assert!(err.to_string().contains("does not apply"), "{err}");
        // Order independence: geometry before the family line is fine.
        let mut cfg = ScenarioConfig::default();
        apply_ini(&mut cfg, "[background]\ntheta0 = 0.7\nfamily = spherical_cap\n").unwrap();
        assert_eq!(cfg.background.family, Family::SphericalCap { theta0: 0.7 });
    }

    #[test]
    fn comments_blank_lines_and_booleans() {
        let mut cfg = ScenarioConfig::default();
        apply_ini(
            &mut cfg,
            "# header comment\n\n[flow]\nrenormalize = off ; trailing\nmax_steps = 7\n",
        )
        .unwrap();
        assert!(!cfg.flow.renormalize_each_step);
        assert_eq!(cfg.flow.max_steps, 7);
        assert!(apply_ini(&mut cfg, "[flow]\nrenormalize = maybe\n").is_err());
    }

    #[test]
    fn adaptive_dt_and_overrides() {
        let mut cfg = ScenarioConfig::default();
        apply_ini(&mut cfg, "[flow]\ndt = adaptive\ns_cfl = 0.1\n").unwrap();
        assert_eq!(cfg.flow.dt, DtPolicy::Adaptive { s_cfl: 0.1 });
        apply_ini(&mut cfg, "[flow]\ndt = 1e-3\n").unwrap();
        assert_eq!(cfg.flow.dt, DtPolicy::Fixed(1e-3));

        let ov = Overrides {
            dt: Some(5e-5),
            mesh: Some(96),
            format: Some(OutputFormat::Json),
            ..Overrides::default()
        };
        let got = resolve(Some("positive_cap"), None, &ov).unwrap();
        assert_eq!(got.flow.dt, DtPolicy::Fixed(5e-5));
        assert_eq!(got.background.nodes, 96);
        assert_eq!(got.format, OutputFormat::Json);
    }

    #[test]
    fn file_beats_preset_flags_beat_file() {
        let text = "[flow]\nmax_steps = 11\n[run]\nseed = 9\n";
        let got = resolve(
            Some("zero_flat_constant"),
            Some(text),
            &Overrides { seed: Some(1), ..Overrides::default() },
        )
        .unwrap();
        assert_eq!(got.flow.max_steps, 11);
        assert_eq!(got.seed, 1);
        assert_eq!(got.background.nodes, 256);
    }

    #[test]
    fn initial_data_keys() {
        let mut cfg = ScenarioConfig::default();
        apply_ini(&mut cfg, "[initial]\nkind = trig\namplitude = 0.05\nfrequency = 3\n")
            .unwrap();
        assert_eq!(cfg.initial, InitialData::Trig { amplitude: 0.05, frequency: 3 });
        apply_ini(&mut cfg, "[initial]\nkind = file\npath = w0.csv\n").unwrap();
        assert_eq!(cfg.initial, InitialData::File { path: PathBuf::from("w0.csv") });
        assert!(apply_ini(&mut cfg, "[initial]\nkind = sine\n").is_err());
    }
}
