//! Run configuration: one JSON document per run.
//!
//! Every key is optional except `subcommand`; unknown keys are rejected. After
//! [`parse_config`] all defaults are filled in, so serialising the result
//! echoes the full configuration the run used.

use std::path::PathBuf;

use nehari4_core::bubble::{BubbleParams, DEFAULT_VOLUME_FLOOR};
use nehari4_core::nehari::ThresholdConfig;
use nehari4_core::solvers::{PathOptions, SolveOptions};
use nehari4_core::spectral::DEFAULT_NODE_CAP;
use nehari4_core::{GridSpec, Sign};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Thresholds,
    Bubble,
    Solve,
    SolveSigned,
    Mpass,
    VerifyAll,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Thresholds => "thresholds",
            Subcommand::Bubble => "bubble",
            Subcommand::Solve => "solve",
            Subcommand::SolveSigned => "solve-signed",
            Subcommand::Mpass => "mpass",
            Subcommand::VerifyAll => "verify-all",
        }
    }
}

/// `λ` as a number or `"auto"` (`0.9·min(λ₀, λ₁)`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaSpec {
    Auto,
    Value(f64),
}

impl Serialize for LambdaSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LambdaSpec::Auto => s.serialize_str("auto"),
            LambdaSpec::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(LambdaSpec::Value(v)),
            Raw::Word(w) if w == "auto" => Ok(LambdaSpec::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "lambda must be a number or \"auto\" (got \"{w}\")"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    /// Integer wave vector, one entry per axis.
    pub k: Vec<i64>,
    pub amplitude: f64,
}

/// `f(x) = mean + Σ amplitude·cos(2π k·x / L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineSeries {
    pub mean: f64,
    #[serde(default)]
    pub terms: Vec<CosineTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FSpec {
    Constant(f64),
    Cosine(CosineSeries),
}

/// Snapshot files holding `a` and `b` on the run grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientFiles {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleSeed {
    pub eps: f64,
    /// Defaults to the origin.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialGuess {
    /// Seeded band-limited noise (made one-signed for signed solves).
    Noise,
    Bubble(BubbleSeed),
    Snapshot(PathBuf),
}

/// The radial bubble model; `n` comes from the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleSection {
    /// Strictly decreasing values of `ε`.
    pub sweep: Vec<f64>,
    pub delta: f64,
    pub f0: f64,
    pub laplacian_f0: f64,
    #[serde(rename = "S_g0")]
    pub scalar_curvature: f64,
    pub a0: f64,
    pub b0: f64,
    pub volume_floor: f64,
    /// `λ` entering `J_λ(u_ε)` in the threshold-gap table.
    pub gap_lambda: f64,
}

impl Default for BubbleSection {
    fn default() -> Self {
        Self {
            sweep: vec![0.04, 0.03, 0.02, 0.015, 0.01],
            delta: 0.5,
            f0: 1.0,
            laplacian_f0: 0.0,
            scalar_curvature: 0.0,
            a0: 0.0,
            b0: 0.0,
            volume_floor: DEFAULT_VOLUME_FLOOR,
            gap_lambda: 0.0,
        }
    }
}

impl BubbleSection {
    pub fn params(&self, n: usize) -> BubbleParams {
        BubbleParams {
            n,
            bubble_eps: self.sweep.first().copied().unwrap_or(0.01),
            delta: self.delta,
            f0: self.f0,
            laplacian_f0: self.laplacian_f0,
            scalar_curvature: self.scalar_curvature,
            a0: self.a0,
            b0: self.b0,
            volume_floor: self.volume_floor,
        }
    }
}

fn default_n() -> usize {
    5
}
fn default_length() -> f64 {
    std::f64::consts::TAU
}
fn default_alpha() -> f64 {
    2.0
}
fn default_beta() -> f64 {
    1.0
}
fn default_f() -> FSpec {
    FSpec::Constant(1.0)
}
fn default_lambda() -> LambdaSpec {
    LambdaSpec::Auto
}
fn default_q() -> f64 {
    1.5
}
fn default_sign() -> Sign {
    Sign::Plus
}
fn default_initial() -> InitialGuess {
    InitialGuess::Noise
}
fn default_audit_samples() -> usize {
    20
}
fn default_audit_radius() -> f64 {
    1e-2
}
fn default_max_nodes() -> usize {
    DEFAULT_NODE_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Nodes per axis; filled from the dimension when absent.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(rename = "L", default = "default_length")]
    pub length: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Variable `a`, `b`; overrides `alpha`/`beta` when present.
    #[serde(default)]
    pub coefficients: Option<CoefficientFiles>,
    #[serde(default = "default_f")]
    pub f: FSpec,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaSpec,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    /// `seed` and `thresholds` above take precedence over the copies here.
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub path: PathOptions,
    /// Sign for `solve-signed`.
    #[serde(default = "default_sign")]
    pub sign: Sign,
    #[serde(default = "default_initial")]
    pub initial: InitialGuess,
    /// Random perturbations per local-minimum audit in `mpass`.
    #[serde(default = "default_audit_samples")]
    pub audit_samples: usize,
    #[serde(default = "default_audit_radius")]
    pub audit_radius: f64,
    #[serde(default)]
    pub bubble: BubbleSection,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    /// Output directory; `--out` wins. Not echoed, so reports do not depend
    /// on where they are written.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn modes(&self) -> usize {
        self.m.expect("filled by parse_config")
    }

    /// The grid, subject to the node cap.
    pub fn grid(&self) -> nehari4_core::Result<GridSpec> {
        GridSpec::with_cap(self.n, self.modes(), self.length, self.max_nodes)
    }

    fn fill_and_validate(&mut self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n < 5 {
            return bad(format!("n must be at least 5 (got {})", self.n));
        }
        if self.m.is_none() {
            let g = GridSpec::default_for(self.n).map_err(|e| CliError::Config(e.to_string()))?;
            self.m = Some(g.modes());
        }
        // Shape only; the node cap is checked when the grid is built.
        GridSpec::with_cap(self.n, self.modes(), self.length, usize::MAX).map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.q > 1.0 && self.q < 2.0) {
            return bad(format!("q must lie in (1,2) (got {})", self.q));
        }
        if let LambdaSpec::Value(v) = self.lambda {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("lambda must be finite and non-negative (got {v})"));
            }
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return bad("alpha and beta must be finite".into());
        }
        match &self.f {
            FSpec::Constant(c) if !(*c > 0.0 && c.is_finite()) => {
                return bad(format!("f must be positive (got constant {c})"));
            }
            FSpec::Cosine(s) => {
                if s.terms.iter().any(|t| t.k.len() != self.n) {
                    return bad(format!("every cosine wave vector needs {} entries", self.n));
                }
                let swing: f64 = s.terms.iter().map(|t| t.amplitude.abs()).sum();
                if !(s.mean > swing) {
                    return bad(format!(
                        "f must be positive: mean {} must exceed the sum of |amplitudes| {swing}",
                        s.mean
                    ));
                }
            }
            _ => {}
        }
        if !(self.thresholds.sobolev_slack > 0.0) {
            return bad("thresholds.sobolev_slack must be positive".into());
        }
        self.solver.seed = self.seed;
        self.solver.thresholds = self.thresholds;
        self.solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.path.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let InitialGuess::Bubble(b) = &self.initial {
            if !(b.eps > 0.0) {
                return bad("initial.bubble.eps must be positive".into());
            }
            if b.center.as_ref().is_some_and(|c| c.len() != self.n) {
                return bad(format!("initial.bubble.center needs {} entries", self.n));
            }
        }
        if self.audit_samples == 0 || !(self.audit_radius > 0.0) {
            return bad("audit_samples and audit_radius must be positive".into());
        }
        let b = &self.bubble;
        if b.sweep.len() < 4 {
            return bad(format!("bubble.sweep needs at least 4 values (got {})", b.sweep.len()));
        }
        if b.sweep.iter().any(|e| !(*e > 0.0)) || b.sweep.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("bubble.sweep must be positive and strictly decreasing".into());
        }
        if !(b.gap_lambda >= 0.0) {
            return bad("bubble.gap_lambda must be non-negative".into());
        }
        b.params(self.n).validate().map_err(|e| CliError::Config(format!("bubble: {e}")))?;
        if self.max_nodes == 0 {
            return bad("max_nodes must be positive".into());
        }
        Ok(())
    }
}

/// Parse, fill defaults, and validate.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.fill_and_validate()?;
    Ok(cfg)
}
