//! Library half of the `cgcat` command-line tool: figure commands as pure
//! functions from a serializable run configuration to CSV text plus a
//! machine-readable manifest. The binary is a thin argument-parsing shell,
//! so every command stays testable bit-for-bit.

use std::fmt::Write as _;

use cgcat_core::bell::{bell_reference, bell_resolution, bell_series};
use cgcat_core::coarse::{
    cat_reference_coefficients, GaussianExponent, ResolutionWeights, DEFAULT_WEIGHT_TAIL,
};
use cgcat_core::fockspace::{
    CutObservable, FockVector, IndexConvention, OddEvenIndexMap, SubspaceRotation,
};
use cgcat_core::negativity::{
    negativity_resolution, negativity_two_mode, FactorizedTwoMode, QuadratureGrid, QuadratureRule,
    ResolutionNegativityEngine,
};
use cgcat_core::phasespace::{
    assemble_two_mode, coeff_matrix_from_real, wigner_basis_cat, wigner_basis_noon,
    wigner_basis_pasv, WignerBasis,
};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNRELIABLE: i32 = 3;

/// Errors surfaced to the binary with their exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Unreliable(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Unreliable(m) => write!(f, "reliability failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Unreliable(_) => EXIT_UNRELIABLE,
        }
    }
}

impl From<cgcat_core::Error> for CliError {
    fn from(e: cgcat_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses an angle given as radians or as a rational multiple of π:
/// "0.41", "pi", "pi/4", "3pi/4", "13/100pi", "-pi/2".
pub fn parse_angle(input: &str) -> Result<f64, String> {
    let s = input.trim();
    let (sign, s) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s),
    };
    let parse_num = |t: &str| -> Result<f64, String> {
        if let Some((a, b)) = t.split_once('/') {
            let num: f64 = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
            let den: f64 = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
            if den == 0.0 {
                return Err("zero denominator".into());
            }
            Ok(num / den)
        } else {
            t.trim().parse().map_err(|_| format!("bad number '{t}'"))
        }
    };
    let value = if let Some(idx) = s.find("pi") {
        let (pre, post) = (&s[..idx], &s[idx + 2..]);
        let factor = if pre.is_empty() {
            1.0
        } else {
            parse_num(pre.trim_end_matches('*'))?
        };
        let divisor = if post.is_empty() {
            1.0
        } else if let Some(d) = post.strip_prefix('/') {
            let v: f64 = d.trim().parse().map_err(|_| format!("bad divisor '{d}'"))?;
            if v == 0.0 {
                return Err("zero denominator".into());
            }
            v
        } else {
            return Err(format!("unexpected trailing '{post}' after pi"));
        };
        factor * std::f64::consts::PI / divisor
    } else {
        parse_num(s)?
    };
    Ok(sign * value)
}

/// 17-significant-digit float formatting used in every CSV cell.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// An inclusive sweep range.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SweepRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl SweepRange {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        if self.steps == 0 || self.max < self.min {
            return Err(format!(
                "invalid sweep range: min {}, max {}, steps {}",
                self.min, self.max, self.steps
            ));
        }
        if self.steps == 1 {
            return Ok(vec![self.min]);
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        Ok((0..self.steps).map(|i| self.min + i as f64 * h).collect())
    }
}

/// Discrete-Gaussian exponent switch exposed on the command line.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExponentConvention {
    #[default]
    Printed,
    Variance,
}

impl From<ExponentConvention> for GaussianExponent {
    fn from(c: ExponentConvention) -> Self {
        match c {
            ExponentConvention::Printed => GaussianExponent::Printed,
            ExponentConvention::Variance => GaussianExponent::Variance,
        }
    }
}

/// Quadrature settings shared by the negativity commands.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GridSettings {
    pub points: usize,
    /// Half-width of the phase-space box; `None` picks max(4, |α|+4).
    pub extent: Option<f64>,
    pub inner_factor: usize,
    pub refine_factor: usize,
}

impl GridSettings {
    pub fn figure_default() -> Self {
        Self {
            points: 81,
            extent: None,
            inner_factor: 3,
            refine_factor: 4,
        }
    }

    /// Lighter oversampling for the (k, m) map commands.
    pub fn map_default() -> Self {
        Self {
            points: 81,
            extent: None,
            inner_factor: 2,
            refine_factor: 2,
        }
    }

    pub fn build(&self, alpha_mag: f64) -> CliResult<QuadratureGrid> {
        let extent = self.extent.unwrap_or((alpha_mag.abs() + 4.0).max(4.0));
        Ok(
            QuadratureGrid::new(extent, self.points, QuadratureRule::Trapezoid)
                .map_err(|e| CliError::Config(e.to_string()))?
                .with_oversampling(self.inner_factor, self.refine_factor),
        )
    }
}

/// One figure command with all of its numeric parameters; serializes into
/// the manifest verbatim.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    BellRes {
        alpha: f64,
        delta: SweepRange,
        convention: ExponentConvention,
    },
    BellRef {
        delta_big: SweepRange,
    },
    NegRefCat {
        alphas: Vec<f64>,
        theta_a: f64,
        theta_b: f64,
        delta_big: SweepRange,
        grid: GridSettings,
        workers: usize,
    },
    WignerSlice {
        state: SliceState,
        alpha: f64,
        theta_a: f64,
        theta_b: f64,
        k: i64,
        m: i64,
        gamma_re: f64,
        gamma_im: f64,
        n_max: usize,
        points: usize,
        extent: Option<f64>,
    },
    NegResCat {
        alpha: f64,
        theta_a: f64,
        theta_b: f64,
        delta: SweepRange,
        n_maxes: Vec<usize>,
        convention: ExponentConvention,
        grid: GridSettings,
        workers: usize,
    },
    NegMap {
        alpha: f64,
        theta_a: f64,
        theta_b: f64,
        k_min: i64,
        k_max: i64,
        m_min: i64,
        m_max: i64,
        n_max: usize,
        grid: GridSettings,
        workers: usize,
    },
    NegRefNoon {
        ns: Vec<usize>,
        theta_a: f64,
        theta_b: f64,
        delta_big: SweepRange,
        grid: GridSettings,
        workers: usize,
    },
    NegRefPasv {
        rs: Vec<f64>,
        theta_a: f64,
        theta_b: f64,
        delta_big: SweepRange,
        grid: GridSettings,
        workers: usize,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SliceState {
    /// The entangled pair before any measurement.
    Initial,
    /// After the sharp non-selective measurement O^k(θ_a) ⊗ O^m(θ_b).
    Measured,
}

impl RunConfig {
    pub fn command_name(&self) -> &'static str {
        match self {
            RunConfig::BellRes { .. } => "bell-res",
            RunConfig::BellRef { .. } => "bell-ref",
            RunConfig::NegRefCat { .. } => "neg-ref-cat",
            RunConfig::WignerSlice { .. } => "wigner-slice",
            RunConfig::NegResCat { .. } => "neg-res-cat",
            RunConfig::NegMap { .. } => "neg-map",
            RunConfig::NegRefNoon { .. } => "neg-ref-noon",
            RunConfig::NegRefPasv { .. } => "neg-ref-pasv",
        }
    }
}

/// Everything a command produces: CSV text, manifest text, and the
/// reliability events that strict mode turns into exit code 3.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub csv: String,
    pub manifest: String,
    pub warnings: Vec<String>,
}

fn manifest_text(config: &RunConfig, warnings: &[String], notes: &[(String, String)]) -> String {
    let mut m = serde_json::Map::new();
    m.insert(
        "config".into(),
        serde_json::to_value(config).expect("config serializes"),
    );
    m.insert(
        "conventions".into(),
        serde_json::json!({
            "index_map": "even-up-odd-down (|o_n> = |2n>, |o_-n> = |2n-1>)",
            "wigner_normalization": "integral of W = 1; basis prefactor 2/pi; assembly constant 1",
            "bell_a_series": "derived form (outer sum from k = 1)",
            "e_ab_constant_term": "(A-B)^2/4 per correlator",
        }),
    );
    m.insert(
        "library_version".into(),
        serde_json::Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    m.insert(
        "warnings".into(),
        serde_json::Value::Array(
            warnings
                .iter()
                .map(|w| serde_json::Value::String(w.clone()))
                .collect(),
        ),
    );
    for (k, v) in notes {
        m.insert(k.clone(), serde_json::Value::String(v.clone()));
    }
    serde_json::to_string_pretty(&serde_json::Value::Object(m)).expect("manifest serializes")
}

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn check_reliability(
    res: &cgcat_core::negativity::NegativityResult,
    label: &str,
    warnings: &mut Vec<String>,
) {
    if !res.reliable {
        warnings.push(format!(
            "{label}: grid integral of W strayed to {:.6} (flagged unreliable)",
            res.integral_of_w
        ));
    }
}

/// Runs one figure command to CSV + manifest.
pub fn run(config: &RunConfig) -> CliResult<RunOutput> {
    match config {
        RunConfig::BellRes {
            alpha,
            delta,
            convention,
        } => bell_res(config, *alpha, delta, *convention),
        RunConfig::BellRef { delta_big } => bell_ref(config, delta_big),
        RunConfig::NegRefCat {
            alphas,
            theta_a,
            theta_b,
            delta_big,
            grid,
            workers,
        } => {
            if alphas.is_empty() {
                return config_err("need at least one alpha");
            }
            let bases = alphas
                .iter()
                .map(|a| wigner_basis_cat(C64::new(*a, 0.0)).map_err(CliError::from))
                .collect::<CliResult<Vec<_>>>()?;
            let labels: Vec<String> = alphas.iter().map(|a| format!("alpha={a}")).collect();
            let max_alpha = alphas.iter().cloned().fold(0.0, f64::max);
            neg_ref_sweep(
                config,
                &bases,
                &labels,
                *theta_a,
                *theta_b,
                delta_big,
                grid,
                max_alpha,
                *workers,
                &[],
            )
        }
        RunConfig::WignerSlice { .. } => wigner_slice(config),
        RunConfig::NegResCat { .. } => neg_res_cat(config),
        RunConfig::NegMap { .. } => neg_map(config),
        RunConfig::NegRefNoon {
            ns,
            theta_a,
            theta_b,
            delta_big,
            grid,
            workers,
        } => {
            if ns.is_empty() {
                return config_err("need at least one N");
            }
            let bases = ns
                .iter()
                .map(|n| wigner_basis_noon(*n).map_err(CliError::from))
                .collect::<CliResult<Vec<_>>>()?;
            let labels: Vec<String> = ns.iter().map(|n| format!("N={n}")).collect();
            let max_n = *ns.iter().max().unwrap() as f64;
            neg_ref_sweep(
                config,
                &bases,
                &labels,
                *theta_a,
                *theta_b,
                delta_big,
                grid,
                max_n.sqrt(),
                *workers,
                &[],
            )
        }
        RunConfig::NegRefPasv {
            rs,
            theta_a,
            theta_b,
            delta_big,
            grid,
            workers,
        } => {
            if rs.is_empty() {
                return config_err("need at least one r");
            }
            let mut bases = Vec::new();
            let mut notes = Vec::new();
            for r in rs {
                let (basis, validation) = wigner_basis_pasv(*r)?;
                if validation.substituted_numeric {
                    notes.push((
                        format!("pasv_fallback_r_{r}"),
                        format!(
                            "closed form diverged from oracle by {:.2e}; numeric basis substituted",
                            validation.max_diff
                        ),
                    ));
                }
                bases.push(basis);
            }
            let labels: Vec<String> = rs.iter().map(|r| format!("r={r}")).collect();
            neg_ref_sweep(
                config, &bases, &labels, *theta_a, *theta_b, delta_big, grid, 2.0, *workers, &notes,
            )
        }
    }
}

fn bell_res(
    config: &RunConfig,
    alpha: f64,
    delta: &SweepRange,
    convention: ExponentConvention,
) -> CliResult<RunOutput> {
    let deltas = delta.values().map_err(CliError::Config)?;
    let mut csv = String::from("delta,B_delta\n");
    for d in &deltas {
        let weights = ResolutionWeights::new(d.max(1e-12), DEFAULT_WEIGHT_TAIL, convention.into())?;
        let b = bell_resolution(&bell_series(alpha, &weights)?);
        let _ = writeln!(csv, "{},{}", fmt_float(*d), fmt_float(b));
    }
    Ok(RunOutput {
        csv,
        manifest: manifest_text(config, &[], &[]),
        warnings: vec![],
    })
}

fn bell_ref(config: &RunConfig, delta_big: &SweepRange) -> CliResult<RunOutput> {
    let values = delta_big.values().map_err(CliError::Config)?;
    let mut csv = String::from("Delta,B_Delta\n");
    for d in &values {
        let _ = writeln!(csv, "{},{}", fmt_float(*d), fmt_float(bell_reference(*d)));
    }
    Ok(RunOutput {
        csv,
        manifest: manifest_text(config, &[], &[]),
        warnings: vec![],
    })
}

#[allow(clippy::too_many_arguments)]
fn neg_ref_sweep(
    config: &RunConfig,
    bases: &[WignerBasis],
    labels: &[String],
    theta_a: f64,
    theta_b: f64,
    delta_big: &SweepRange,
    grid: &GridSettings,
    alpha_scale: f64,
    workers: usize,
    notes: &[(String, String)],
) -> CliResult<RunOutput> {
    let deltas = delta_big.values().map_err(CliError::Config)?;
    let qgrid = grid.build(alpha_scale)?;
    let mut header = String::from("Delta");
    if bases.len() == 1 {
        header.push_str(",negativity");
    } else {
        for label in labels {
            let _ = write!(header, ",negativity[{label}]");
        }
    }
    let mut csv = header + "\n";
    let mut warnings = Vec::new();
    for d in &deltas {
        let coeffs = cat_reference_coefficients(theta_a, theta_b, *d)?;
        let matrix = coeff_matrix_from_real(&coeffs.matrix());
        let mut row = fmt_float(*d);
        for (basis, label) in bases.iter().zip(labels) {
            let w = assemble_two_mode(&matrix, basis.clone(), basis.clone())?;
            let res = negativity_two_mode(&w, &qgrid, workers)?;
            check_reliability(&res, &format!("Delta={d}, {label}"), &mut warnings);
            let _ = write!(row, ",{}", fmt_float(res.value));
        }
        csv.push_str(&row);
        csv.push('\n');
    }
    Ok(RunOutput {
        manifest: manifest_text(config, &warnings, notes),
        csv,
        warnings,
    })
}

fn wigner_slice(config: &RunConfig) -> CliResult<RunOutput> {
    let RunConfig::WignerSlice {
        state,
        alpha,
        theta_a,
        theta_b,
        k,
        m,
        gamma_re,
        gamma_im,
        n_max,
        points,
        extent,
    } = config
    else {
        unreachable!()
    };
    if *n_max < 2 {
        return config_err("n_max must be at least 2");
    }
    let alpha_c = C64::new(*alpha, 0.0);
    let even = FockVector::even_cat(alpha_c, *n_max)?;
    let odd = FockVector::odd_cat(alpha_c, *n_max)?;
    let operator = match state {
        SliceState::Initial => FactorizedTwoMode::symmetric_pair(&even, &odd),
        SliceState::Measured => {
            let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, *n_max)?;
            let cut_a = CutObservable::new(*k, &map)?;
            let cut_b = CutObservable::new(*m, &map)?;
            let rot_a = SubspaceRotation::new(*theta_a, even.clone(), odd.clone())?;
            let rot_b = SubspaceRotation::new(*theta_b, even.clone(), odd.clone())?;
            FactorizedTwoMode::sharp_post_state(&even, &odd, &cut_a, &cut_b, &rot_a, &rot_b)
        }
    };
    let half = extent.unwrap_or((alpha.abs() + 4.0).max(4.0));
    if *points < 2 {
        return config_err("need at least 2 slice points per axis");
    }
    let gamma = C64::new(*gamma_re, *gamma_im);
    let h = 2.0 * half / (*points as f64 - 1.0);
    let mut csv = String::from("re_beta,im_beta,W\n");
    for i in 0..*points {
        let x = -half + i as f64 * h;
        for j in 0..*points {
            let y = -half + j as f64 * h;
            let w = operator.wigner(C64::new(x, y), gamma);
            let _ = writeln!(csv, "{},{},{}", fmt_float(x), fmt_float(y), fmt_float(w));
        }
    }
    Ok(RunOutput {
        csv,
        manifest: manifest_text(config, &[], &[]),
        warnings: vec![],
    })
}

fn neg_res_cat(config: &RunConfig) -> CliResult<RunOutput> {
    let RunConfig::NegResCat {
        alpha,
        theta_a,
        theta_b,
        delta,
        n_maxes,
        convention,
        grid,
        workers,
    } = config
    else {
        unreachable!()
    };
    if n_maxes.is_empty() {
        return config_err("need at least one n_max");
    }
    let deltas = delta.values().map_err(CliError::Config)?;
    let qgrid = grid.build(*alpha)?;
    let mut warnings = Vec::new();
    // One engine + full saturated-range map per truncation, reused across δ.
    let mut engines = Vec::new();
    for n_max in n_maxes {
        let even = FockVector::even_cat(C64::new(*alpha, 0.0), *n_max)?;
        let odd = FockVector::odd_cat(C64::new(*alpha, 0.0), *n_max)?;
        let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, *n_max)?;
        let engine = ResolutionNegativityEngine::new(
            even,
            odd,
            *theta_a,
            *theta_b,
            map.clone(),
            qgrid.clone(),
            *workers,
        )?;
        let (lo, hi) = map.index_range();
        let nmap = engine.negativity_map((lo, hi + 1), (lo, hi + 1))?;
        for (ki, krow) in nmap.values.iter().enumerate() {
            for (mi, cell) in krow.iter().enumerate() {
                if !cell.reliable {
                    warnings.push(format!(
                        "n_max={n_max}: N_km cell ({},{}) unreliable (integral {:.6})",
                        nmap.ks[ki], nmap.ms[mi], cell.integral_of_w
                    ));
                }
            }
        }
        engines.push((n_max, engine, nmap));
    }
    let mut header = String::from("delta");
    for n_max in n_maxes {
        if n_maxes.len() == 1 {
            header.push_str(",weighted_sum_negativity,direct_mixture_negativity");
        } else {
            let _ = write!(
                header,
                ",weighted_sum_negativity[nmax={n_max}],direct_mixture_negativity[nmax={n_max}]"
            );
        }
    }
    let mut csv = header + "\n";
    for d in &deltas {
        let weights =
            ResolutionWeights::new(d.max(1e-12), DEFAULT_WEIGHT_TAIL, (*convention).into())?;
        let mut row = fmt_float(*d);
        for (label, engine, nmap) in &engines {
            let weighted = negativity_resolution(&weights, nmap)?;
            let direct = engine.direct_mixture_negativity(&weights)?;
            check_reliability(&direct, &format!("delta={d}, nmax={label}"), &mut warnings);
            let _ = write!(row, ",{},{}", fmt_float(weighted), fmt_float(direct.value));
        }
        csv.push_str(&row);
        csv.push('\n');
    }
    Ok(RunOutput {
        manifest: manifest_text(config, &warnings, &[]),
        csv,
        warnings,
    })
}

fn neg_map(config: &RunConfig) -> CliResult<RunOutput> {
    let RunConfig::NegMap {
        alpha,
        theta_a,
        theta_b,
        k_min,
        k_max,
        m_min,
        m_max,
        n_max,
        grid,
        workers,
    } = config
    else {
        unreachable!()
    };
    let mut csv = String::from("k,m,N_km\n");
    if k_min > k_max || m_min > m_max {
        // Empty range: header-only CSV.
        return Ok(RunOutput {
            csv,
            manifest: manifest_text(config, &[], &[]),
            warnings: vec![],
        });
    }
    let even = FockVector::even_cat(C64::new(*alpha, 0.0), *n_max)?;
    let odd = FockVector::odd_cat(C64::new(*alpha, 0.0), *n_max)?;
    let map = OddEvenIndexMap::new(IndexConvention::EvenUpOddDown, *n_max)?;
    let qgrid = grid.build(*alpha)?;
    let engine =
        ResolutionNegativityEngine::new(even, odd, *theta_a, *theta_b, map, qgrid, *workers)?;
    let nmap = engine.negativity_map((*k_min, *k_max), (*m_min, *m_max))?;
    let mut warnings = Vec::new();
    for (ki, k) in nmap.ks.iter().enumerate() {
        for (mi, m) in nmap.ms.iter().enumerate() {
            let cell = &nmap.values[ki][mi];
            if !cell.reliable {
                warnings.push(format!(
                    "cell ({k},{m}) unreliable (integral {:.6})",
                    cell.integral_of_w
                ));
            }
            let _ = writeln!(csv, "{k},{m},{}", fmt_float(cell.value));
        }
    }
    Ok(RunOutput {
        manifest: manifest_text(config, &warnings, &[]),
        csv,
        warnings,
    })
}

/// Writes the CSV and its manifest sidecar; returns the manifest path.
pub fn write_outputs(
    out_path: &std::path::Path,
    output: &RunOutput,
) -> std::io::Result<std::path::PathBuf> {
    std::fs::write(out_path, &output.csv)?;
    let manifest_path = out_path.with_extension("manifest.json");
    std::fs::write(&manifest_path, &output.manifest)?;
    Ok(manifest_path)
}
