use std::path::PathBuf;
use std::str::FromStr;

use canndyn_core::dynamics::Mode;
use canndyn_core::Spacing;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "canndyn", version, about = "Stability analysis and simulation of size-structured cannibalism models")]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Subcommand, Debug)]
pub enum Verb {
    /// Check sign and bound assumptions of a model config.
    Validate(ValidateArgs),
    /// Solve for a stationary state.
    Steady(SteadyArgs),
    /// Dissipativity margin and positivity checks at a stationary state.
    Stability(StabilityArgs),
    /// Real-axis scan of the characteristic functions.
    Spectrum(SpectrumArgs),
    /// Time-march the nonlinear or linearized equation.
    Simulate(SimulateArgs),
    /// Run steady, stability, spectrum and a short simulation over a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Model config (JSON).
    #[arg(short = 'm', long = "model")]
    pub model: PathBuf,
    /// Output directory, created if missing.
    #[arg(short = 'o', long = "out", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub grid_cells: usize,
    /// Overrides `s_max` from the model file.
    #[arg(long)]
    pub s_max: Option<f64>,
    /// `uniform` or `graded:R`.
    #[arg(long, default_value = "uniform", value_parser = parse_spacing)]
    pub spacing: Spacing,
}

#[derive(Args, Debug, Clone)]
pub struct SteadyOpts {
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.0, 1000.0])]
    pub n0_bracket: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub fp_tol: f64,
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
}

#[derive(Args, Debug, Clone)]
pub struct StateOpt {
    /// `steady` solves for an equilibrium, `trivial` uses n* = 0, anything
    /// else is read as a state JSON written by `canndyn steady`.
    #[arg(long, default_value = "steady")]
    pub state: StateSource,
}

#[derive(Args, Debug, Clone)]
pub struct SpectrumOpts {
    /// Defaults to just above -mu0 up to 10 max(rho*)/min(gamma*).
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub lambda_range: Option<Vec<f64>>,
    #[arg(long, default_value_t = 400)]
    pub scan: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub root_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct SimOpts {
    #[arg(long, default_value_t = 20.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.9)]
    pub cfl: f64,
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Upper end of the sampled environment range [0, E_MAX].
    #[arg(long, default_value_t = 10.0)]
    pub e_max: f64,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub steady: SteadyOpts,
}

#[derive(Args, Debug)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub steady: SteadyOpts,
    #[command(flatten)]
    pub state: StateOpt,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub steady: SteadyOpts,
    #[command(flatten)]
    pub state: StateOpt,
    #[command(flatten)]
    pub spectrum: SpectrumOpts,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub steady: SteadyOpts,
    #[command(flatten)]
    pub state: StateOpt,
    #[command(flatten)]
    pub sim: SimOpts,
    #[arg(long, default_value = "nonlinear", value_parser = Mode::from_str)]
    pub mode: Mode,
    /// `steady`, `bump:CENTER,WIDTH,AMP` or `file:PATH` (two-column s,n CSV).
    #[arg(long, default_value = "steady")]
    pub initial: Initial,
    /// Write the profile at this time to snapshot_<k>.csv (repeatable).
    #[arg(long = "snapshot")]
    pub snapshots: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub steady: SteadyOpts,
    #[command(flatten)]
    pub spectrum: SpectrumOpts,
    #[command(flatten)]
    pub sim: SimOpts,
    /// `PATH=LO:HI:N`, where PATH is a dotted key into the model JSON.
    #[arg(long)]
    pub vary: Vary,
    #[arg(long)]
    pub vary2: Option<Vary>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateSource {
    Steady,
    Trivial,
    File(PathBuf),
}

impl FromStr for StateSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "steady" => StateSource::Steady,
            "trivial" => StateSource::Trivial,
            "" => return Err("empty state".into()),
            path => StateSource::File(PathBuf::from(path)),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Initial {
    Steady,
    Bump { center: f64, width: f64, amp: f64 },
    File(PathBuf),
}

impl FromStr for Initial {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "steady" {
            return Ok(Initial::Steady);
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(Initial::File(PathBuf::from(path)));
        }
        let spec = s
            .strip_prefix("bump:")
            .ok_or_else(|| format!("expected steady, bump:C,W,A or file:PATH, got `{s}`"))?;
        let parts: Vec<f64> = spec
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad bump value `{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [center, width, amp] if width > 0.0 && amp >= 0.0 => Ok(Initial::Bump { center, width, amp }),
            [_, _, _] => Err("bump needs WIDTH > 0 and AMP >= 0".into()),
            _ => Err(format!("bump needs three values, got {}", parts.len())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vary {
    pub path: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Vary {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        (0..self.n)
            .map(|i| {
                let t = i as f64 / (self.n - 1) as f64;
                self.lo * (1.0 - t) + self.hi * t
            })
            .collect()
    }
}

impl FromStr for Vary {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (path, range) = s.split_once('=').ok_or_else(|| format!("expected PATH=LO:HI:N, got `{s}`"))?;
        let parts: Vec<&str> = range.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(format!("expected LO:HI:N, got `{range}`"));
        };
        let lo: f64 = lo.parse().map_err(|e| format!("bad LO `{lo}`: {e}"))?;
        let hi: f64 = hi.parse().map_err(|e| format!("bad HI `{hi}`: {e}"))?;
        let n: usize = n.parse().map_err(|e| format!("bad N `{n}`: {e}"))?;
        if path.is_empty() || n == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(format!("invalid sweep `{s}`"));
        }
        Ok(Vary {
            path: path.to_string(),
            lo,
            hi,
            n,
        })
    }
}

pub fn parse_spacing(s: &str) -> Result<Spacing, String> {
    if s == "uniform" {
        return Ok(Spacing::Uniform);
    }
    let r = s
        .strip_prefix("graded:")
        .ok_or_else(|| format!("expected uniform or graded:R, got `{s}`"))?;
    r.parse::<f64>()
        .map(Spacing::Graded)
        .map_err(|e| format!("bad grading ratio `{r}`: {e}"))
}
