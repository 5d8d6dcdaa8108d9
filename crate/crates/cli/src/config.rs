//! Strict JSON run configuration: unknown keys are rejected so a typo in
//! a tolerance name cannot silently fall back to a default.

use serde::Deserialize;

use sgph::paramodel::{AffineMatrixFamily, ParametricSecondOrderSystem, MSD_PARAMS};
use sgph::pcbasis::ParameterDomain;
use sgph::simulate::InputSignal;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub mor: MorConfig,
    #[serde(default)]
    pub freq: FreqConfig,
    /// Output directory; overridable with --out.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Also dump assembled / reduced matrices as CSV.
    #[serde(default)]
    pub export_matrices: bool,
}

/// Exactly one of `msd` / `general` must be present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub msd: Option<MsdConfig>,
    #[serde(default)]
    pub general: Option<GeneralConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdConfig {
    /// Mean values of (m1..m4, d1..d4, k1..k6).
    pub means: Vec<f64>,
    /// Relative halfwidth of the uniform variation around each mean.
    pub halfwidth: f64,
    /// Indices of the parameters kept random; the rest are frozen at
    /// their means. Omitted means all 14 vary.
    #[serde(default)]
    pub free: Option<Vec<usize>>,
}

/// General affine model; matrices are dense row-major arrays.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub n_in: usize,
    #[serde(default = "one")]
    pub n_out: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub m: FamilyConfig,
    pub d: FamilyConfig,
    pub k: FamilyConfig,
    pub bprime: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub a0: Vec<f64>,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub param: usize,
    pub matrix: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub degree: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { degree: 2 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub t_end: f64,
    pub eps_rel: f64,
    pub eps_abs: f64,
    /// "chirp" or "zero".
    pub signal: String,
    pub grid_points: usize,
    /// Also run the quadrature-ensemble reference simulation.
    #[serde(default)]
    pub ensemble: bool,
    /// Use a tensor Gauss rule with this many points per axis for the
    /// ensemble instead of the default degree-5 cubature.
    #[serde(default)]
    pub ensemble_gauss_points: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            eps_rel: 1e-4,
            eps_abs: 1e-6,
            signal: "chirp".into(),
            grid_points: 1001,
            ensemble: false,
            ensemble_gauss_points: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorConfig {
    /// Largest basis size to build.
    pub r_max: usize,
    /// Reduced dimensions for the H2 error sweep; empty means 5..=r_max.
    #[serde(default)]
    pub r_list: Vec<usize>,
    /// Reduced dimension used for the ROM trajectory and ROM Bode data.
    pub r_trajectory: usize,
    pub defl_tol: f64,
}

impl Default for MorConfig {
    fn default() -> Self {
        Self {
            r_max: 30,
            r_list: Vec::new(),
            r_trajectory: 10,
            defl_tol: 1e-12,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl Default for FreqConfig {
    fn default() -> Self {
        Self {
            omega_min: 1e-2,
            omega_max: 1e2,
            points: 200,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        match (&self.model.msd, &self.model.general) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(CliError::Config(
                    "model must define exactly one of \"msd\" / \"general\"".into(),
                ))
            }
            _ => {}
        }
        if let Some(msd) = &self.model.msd {
            if msd.means.len() != MSD_PARAMS {
                return Err(CliError::Config(format!(
                    "msd.means must have {} entries, got {}",
                    MSD_PARAMS,
                    msd.means.len()
                )));
            }
            for (i, &v) in msd.means.iter().enumerate() {
                if !(v > 0.0) {
                    return Err(CliError::Config(format!(
                        "msd.means[{i}] ({}) must be positive",
                        sgph::paramodel::msd_parameter_name(i)
                    )));
                }
            }
            if !(msd.halfwidth >= 0.0 && msd.halfwidth < 1.0) {
                return Err(CliError::Config("msd.halfwidth must be in [0, 1)".into()));
            }
        }
        let sim = &self.simulation;
        if !(sim.t_end > 0.0 && sim.eps_rel > 0.0 && sim.eps_abs > 0.0) {
            return Err(CliError::Config(
                "simulation horizon and tolerances must be positive".into(),
            ));
        }
        if sim.grid_points < 2 {
            return Err(CliError::Config("simulation.grid_points must be >= 2".into()));
        }
        if sim.signal != "chirp" && sim.signal != "zero" {
            return Err(CliError::Config(format!(
                "unknown signal \"{}\" (expected \"chirp\" or \"zero\")",
                sim.signal
            )));
        }
        if self.mor.r_max == 0 || self.mor.r_trajectory == 0 {
            return Err(CliError::Config("mor dimensions must be positive".into()));
        }
        let f = &self.freq;
        if !(0.0 < f.omega_min && f.omega_min < f.omega_max) || f.points < 2 {
            return Err(CliError::Config(
                "freq requires 0 < omega_min < omega_max and points >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn input_signal(&self) -> InputSignal {
        match self.simulation.signal.as_str() {
            "zero" => InputSignal::Zero,
            _ => InputSignal::Chirp,
        }
    }

    pub fn build_model(&self) -> Result<ParametricSecondOrderSystem, CliError> {
        if let Some(msd) = &self.model.msd {
            let full =
                sgph::paramodel::build_msd(&msd.means, msd.halfwidth).map_err(CliError::Core)?;
            return match &msd.free {
                Some(free) => {
                    sgph::paramodel::freeze_parameters(&full, free).map_err(CliError::Core)
                }
                None => Ok(full),
            };
        }
        let g = self.model.general.as_ref().unwrap();
        let n = g.n;
        let family = |fc: &FamilyConfig, name: &str| -> Result<AffineMatrixFamily, CliError> {
            let a0 = matrix_from_row_major(&fc.a0, n, n, name)?;
            let mut terms = Vec::new();
            for t in &fc.terms {
                terms.push((t.param, matrix_from_row_major(&t.matrix, n, n, name)?));
            }
            AffineMatrixFamily::new(a0, terms).map_err(CliError::Core)
        };
        let domain = ParameterDomain::new(g.lower.clone(), g.upper.clone())
            .map_err(CliError::Core)?;
        Ok(ParametricSecondOrderSystem {
            m: family(&g.m, "m")?,
            d: family(&g.d, "d")?,
            k: family(&g.k, "k")?,
            bprime: AffineMatrixFamily::constant(matrix_from_row_major(
                &g.bprime, n, g.n_in, "bprime",
            )?),
            f: AffineMatrixFamily::constant(matrix_from_row_major(&g.f, g.n_out, n, "f")?),
            g: AffineMatrixFamily::constant(matrix_from_row_major(&g.g, g.n_out, n, "g")?),
            domain,
        })
    }
}

fn matrix_from_row_major(
    data: &[f64],
    rows: usize,
    cols: usize,
    name: &str,
) -> Result<nalgebra::DMatrix<f64>, CliError> {
    if data.len() != rows * cols {
        return Err(CliError::Config(format!(
            "matrix \"{name}\" must have {rows}x{cols} = {} entries, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(nalgebra::DMatrix::from_row_slice(rows, cols, data))
}
