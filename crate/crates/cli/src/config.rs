use anyhow::{Context, Result};
use cardiofem::cardio::{CycleParams, DeformationReference};
use cardiofem::fem::{DirichletMode, SolverKind};
use cardiofem::material::{ConstitutiveMode, Material};
use cardiofem::synth::{SynthKind, SynthParams};
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Constitutive matrix: as-printed or plane-strain
    #[arg(long, global = true)]
    pub mode: Option<ConstitutiveMode>,
    /// Number of angular sectors [default: 16]
    #[arg(long, global = true)]
    pub sectors: Option<usize>,
    /// Localization threshold [default: 0.5]
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Contour resampling count / angular mesh resolution [default: 64]
    #[arg(long = "n-points", global = true)]
    pub n_points: Option<usize>,
    /// Clockwise rotation over the cycle in degrees [default: 0]
    #[arg(long = "rotation-deg", global = true, allow_negative_numbers = true)]
    pub rotation_deg: Option<f64>,
    /// Seed for synthetic generation [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Radial mesh layers [default: 8]
    #[arg(long = "n-radial", global = true)]
    pub n_radial: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    /// `None` keeps the input's own mode (phantom specs default to plane strain).
    pub mode: Option<ConstitutiveMode>,
    pub sectors: usize,
    pub tau: f64,
    pub n_points: usize,
    pub rotation_deg: f64,
    pub seed: u64,
    pub n_radial: usize,
    pub material: Material,
    pub reference_mode: DeformationReference,
    pub solver: SolverKind,
    pub dirichlet: DirichletMode,
    /// Study manifest.
    pub study: Option<PathBuf>,
    /// Manifests of normal reference subjects.
    pub reference: Vec<PathBuf>,
    /// Phantom ring spec.
    pub phantom: Option<PathBuf>,
    pub pressure: Option<f64>,
    pub synth_kind: SynthKind,
    pub synth: SynthParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            mode: None,
            sectors: 16,
            tau: 0.5,
            n_points: 64,
            rotation_deg: 0.0,
            seed: 42,
            n_radial: 8,
            material: Material::new(1e4, 0.3).expect("valid default material"),
            reference_mode: DeformationReference::Cumulative,
            solver: SolverKind::Direct,
            dirichlet: DirichletMode::Nodal,
            study: None,
            reference: Vec::new(),
            phantom: None,
            pressure: None,
            synth_kind: SynthKind::Healthy,
            synth: SynthParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(common: &CommonArgs) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &common.out {
            cfg.out = v.clone();
        }
        if common.mode.is_some() {
            cfg.mode = common.mode;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = common.$f { cfg.$f = v; } )* };
        }
        take!(sectors, tau, n_points, rotation_deg, seed, n_radial);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        anyhow::ensure!(self.sectors >= 1, "--sectors must be at least 1");
        anyhow::ensure!(self.n_points >= 3, "--n-points must be at least 3");
        anyhow::ensure!(self.n_radial >= 1, "--n-radial must be at least 1");
        anyhow::ensure!(
            self.tau.is_finite() && self.tau >= 0.0,
            "--tau must be a non-negative number"
        );
        anyhow::ensure!(
            self.rotation_deg.is_finite(),
            "--rotation-deg must be finite"
        );
        Ok(())
    }

    pub fn cycle_params(&self) -> CycleParams {
        CycleParams {
            n_points: self.n_points,
            rotation_deg_total: self.rotation_deg,
            n_radial: self.n_radial,
            material: self.material,
            mode: self.mode.unwrap_or_default(),
            n_sectors: self.sectors,
            reference: self.reference_mode,
            dirichlet: self.dirichlet,
            solver: self.solver,
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create output directory {}", self.out.display()))?;
        Ok(&self.out)
    }
}
