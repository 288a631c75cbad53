//! Experiment configuration: TOML text with one section per concern.
//! Defaults reproduce the reference experiment end to end.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{KvError, Result};
use crate::galerkin::{BeamParameters, Profile};
use crate::signals::{TriangleWave, TrigSignal};
use crate::synthesis::SynthesisOptions;

/// Spatial profile spec: a named builtin or monomial coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(String),
    Poly(Vec<f64>),
}

impl ProfileSpec {
    pub fn to_profile(&self) -> Result<Profile> {
        match self {
            ProfileSpec::Named(name) => match name.as_str() {
                "paper-b1" => Ok(Profile::paper_b1()),
                "paper-b2" => Ok(Profile::paper_b2()),
                "paper-bd" => Ok(Profile::paper_bd()),
                "zero" => Ok(Profile::Poly(vec![0.0])),
                other => Err(KvError::invalid(format!(
                    "unknown profile name {other:?} (expected paper-b1, paper-b2, paper-bd or zero)"
                ))),
            },
            ProfileSpec::Poly(coeffs) => {
                if coeffs.is_empty() {
                    return Err(KvError::invalid("profile coefficient list must be nonempty"));
                }
                Ok(Profile::Poly(coeffs.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamSection {
    pub e_modulus: f64,
    pub i_mom: f64,
    pub d_kv: f64,
    pub d_v: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub b1: ProfileSpec,
    pub b2: ProfileSpec,
    pub b_dist: Vec<ProfileSpec>,
}

impl Default for BeamSection {
    fn default() -> Self {
        BeamSection {
            e_modulus: 10.0,
            i_mom: 1.0,
            d_kv: 0.01,
            d_v: 0.4,
            xi1: -0.6,
            xi2: 0.3,
            b1: ProfileSpec::Named("paper-b1".into()),
            b2: ProfileSpec::Named("paper-b2".into()),
            b_dist: vec![ProfileSpec::Named("paper-bd".into())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscretizationSection {
    pub n_design: usize,
    pub n_sim: usize,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        DiscretizationSection {
            n_design: 39,
            n_sim: 69,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrequencySection {
    /// Fundamental frequency; the tracked set is k * base for k = 0..=count.
    pub base: f64,
    pub count: usize,
}

impl Default for FrequencySection {
    fn default() -> Self {
        FrequencySection {
            base: std::f64::consts::PI,
            count: 10,
        }
    }
}

impl FrequencySection {
    pub fn freqs(&self) -> Vec<f64> {
        (0..=self.count).map(|k| k as f64 * self.base).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisSection {
    pub alpha1: f64,
    pub alpha2: f64,
    pub r1: Vec<Vec<f64>>,
    pub r2: Vec<Vec<f64>>,
    pub reduction_order: usize,
    pub zero_tol: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        SynthesisSection {
            alpha1: 2.0,
            alpha2: 0.8,
            r1: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            r2: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            reduction_order: 4,
            zero_tol: 1e-8,
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(KvError::invalid(format!("{name}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(KvError::invalid(format!("{name}: ragged rows")));
    }
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowGainSection {
    /// Number of oscillatory harmonics in the low-gain internal model.
    pub count: usize,
    pub eps: f64,
    pub tune: bool,
    pub eps_min: f64,
    pub eps_max: f64,
    pub grid: usize,
}

impl Default for LowGainSection {
    fn default() -> Self {
        LowGainSection {
            count: 5,
            eps: 0.076,
            tune: false,
            eps_min: 1e-3,
            eps_max: 0.5,
            grid: 400,
        }
    }
}

/// Trigonometric coefficient table: row k holds the coefficients of
/// harmonic k+1 (frequencies are (k+1) * base).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrigSpec {
    pub a0: Vec<f64>,
    pub a_cos: Vec<Vec<f64>>,
    pub b_sin: Vec<Vec<f64>>,
}

impl Default for TrigSpec {
    fn default() -> Self {
        TrigSpec {
            a0: vec![],
            a_cos: vec![],
            b_sin: vec![],
        }
    }
}

impl TrigSpec {
    pub fn to_signal(&self, base: f64, dim: usize, name: &str) -> Result<TrigSignal> {
        let a0 = if self.a0.is_empty() {
            DVector::zeros(dim)
        } else {
            if self.a0.len() != dim {
                return Err(KvError::dims(format!(
                    "{name}: a0 has {} components, expected {dim}",
                    self.a0.len()
                )));
            }
            DVector::from_vec(self.a0.clone())
        };
        let rows = self.a_cos.len().max(self.b_sin.len());
        let mut freqs = Vec::new();
        let mut a_cos = Vec::new();
        let mut b_sin = Vec::new();
        let fetch = |table: &Vec<Vec<f64>>, k: usize| -> Result<DVector<f64>> {
            match table.get(k) {
                None => Ok(DVector::zeros(dim)),
                Some(row) => {
                    if row.len() != dim {
                        return Err(KvError::dims(format!(
                            "{name}: harmonic {} row has {} components, expected {dim}",
                            k + 1,
                            row.len()
                        )));
                    }
                    Ok(DVector::from_vec(row.clone()))
                }
            }
        };
        for k in 0..rows {
            freqs.push((k + 1) as f64 * base);
            a_cos.push(fetch(&self.a_cos, k)?);
            b_sin.push(fetch(&self.b_sin, k)?);
        }
        TrigSignal::new(a0, freqs, a_cos, b_sin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceSection {
    /// "triangle" or "trig".
    pub kind: String,
    pub amplitude: f64,
    #[serde(flatten)]
    pub trig: TrigSpec,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection {
            kind: "triangle".into(),
            amplitude: 1.0,
            trig: TrigSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceSection {
    #[serde(flatten)]
    pub trig: TrigSpec,
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        // sin(pi t) + 0.4 cos(3 pi t) on the single disturbance channel
        DisturbanceSection {
            trig: TrigSpec {
                a0: vec![0.0],
                a_cos: vec![vec![0.0], vec![0.0], vec![0.4]],
                b_sin: vec![vec![1.0], vec![0.0], vec![0.0]],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSection {
    pub horizon: f64,
    pub step: f64,
    /// Relative terminal-error tolerance behind the `regulated` flag.
    pub reg_tol: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            horizon: 16.0,
            step: 1e-3,
            reg_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSection {
    pub horizon: f64,
    pub step: f64,
    /// Common in-class reference of the comparison run.
    #[serde(flatten)]
    pub reference: TrigSpec,
    /// Early window length for the control-action ratio.
    pub early_window: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            horizon: 260.0,
            step: 2e-3,
            reference: TrigSpec {
                a0: vec![0.0, 0.1],
                a_cos: vec![vec![0.0, 0.25], vec![0.0, 0.0]],
                b_sin: vec![vec![1.0, 0.0], vec![0.0, 0.3]],
            },
            early_window: 2.0,
        }
    }
}

/// Complete experiment description; every field has a default reproducing
/// the reference experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub beam: BeamSection,
    pub discretization: DiscretizationSection,
    pub frequencies: FrequencySection,
    pub synthesis: SynthesisSection,
    pub low_gain: LowGainSection,
    pub reference: ReferenceSection,
    pub disturbance: DisturbanceSection,
    pub simulation: SimulationSection,
    pub compare: CompareSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| KvError::Parse(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Check every module precondition that can be checked without running
    /// the numerics.
    pub fn validate(&self) -> Result<()> {
        self.beam_parameters()?;
        if self.discretization.n_design < 5 || self.discretization.n_sim < 5 {
            return Err(KvError::invalid("basis sizes must be at least 5"));
        }
        if !(self.frequencies.base > 0.0) {
            return Err(KvError::invalid("frequency base must be positive"));
        }
        self.synthesis_options()?.validate()?;
        if !(self.simulation.step > 0.0) || self.simulation.horizon < self.simulation.step {
            return Err(KvError::invalid("need 0 < step <= horizon"));
        }
        if !(self.compare.step > 0.0) || self.compare.horizon < self.compare.step {
            return Err(KvError::invalid("need 0 < compare step <= compare horizon"));
        }
        if self.low_gain.count > self.frequencies.count {
            return Err(KvError::invalid(
                "low-gain harmonic count cannot exceed the tracked harmonic count",
            ));
        }
        if !(self.low_gain.eps > 0.0) {
            return Err(KvError::invalid("low-gain eps must be positive"));
        }
        if !(self.low_gain.eps_min > 0.0 && self.low_gain.eps_max > self.low_gain.eps_min) {
            return Err(KvError::invalid("need 0 < eps_min < eps_max"));
        }
        match self.reference.kind.as_str() {
            "triangle" | "trig" => {}
            other => {
                return Err(KvError::invalid(format!(
                    "reference kind {other:?} (expected \"triangle\" or \"trig\")"
                )))
            }
        }
        // coefficient tables must be rectangular with the right width
        let n_d = self.beam.b_dist.len();
        self.disturbance
            .trig
            .to_signal(self.frequencies.base, n_d, "disturbance")?;
        self.reference
            .trig
            .to_signal(self.frequencies.base, 2, "reference")?;
        self.compare
            .reference
            .to_signal(self.frequencies.base, 2, "compare reference")?;
        Ok(())
    }

    pub fn beam_parameters(&self) -> Result<BeamParameters> {
        let b_dist: Result<Vec<Profile>> =
            self.beam.b_dist.iter().map(|p| p.to_profile()).collect();
        BeamParameters::new(
            self.beam.e_modulus,
            self.beam.i_mom,
            self.beam.d_kv,
            self.beam.d_v,
            self.beam.xi1,
            self.beam.xi2,
            self.beam.b1.to_profile()?,
            self.beam.b2.to_profile()?,
            b_dist?,
        )
    }

    pub fn synthesis_options(&self) -> Result<SynthesisOptions> {
        Ok(SynthesisOptions {
            alpha1: self.synthesis.alpha1,
            alpha2: self.synthesis.alpha2,
            r1: rows_to_matrix(&self.synthesis.r1, "r1")?,
            r2: rows_to_matrix(&self.synthesis.r2, "r2")?,
            q0: None,
            q1: None,
            q2: None,
            reduction_order: self.synthesis.reduction_order,
            n_design: self.discretization.n_design,
            freqs: self.frequencies.freqs(),
            zero_tol: self.synthesis.zero_tol,
        })
    }

    pub fn low_gain_freqs(&self) -> Vec<f64> {
        (0..=self.low_gain.count)
            .map(|k| k as f64 * self.frequencies.base)
            .collect()
    }

    pub fn disturbance_signal(&self) -> Result<TrigSignal> {
        self.disturbance
            .trig
            .to_signal(self.frequencies.base, self.beam.b_dist.len(), "disturbance")
    }

    pub fn reference_signal(&self) -> Result<crate::closed_loop::ReferenceSignal> {
        match self.reference.kind.as_str() {
            "triangle" => Ok(crate::closed_loop::ReferenceSignal::Triangle(
                TriangleWave::new(self.reference.amplitude),
            )),
            "trig" => Ok(crate::closed_loop::ReferenceSignal::Trig(
                self.reference
                    .trig
                    .to_signal(self.frequencies.base, 2, "reference")?,
            )),
            other => Err(KvError::invalid(format!("reference kind {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let config = ExperimentConfig::default();
        assert!(config.validate().is_ok());
        assert_eq!(config.discretization.n_design, 39);
        assert_eq!(config.frequencies.count, 10);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let config = ExperimentConfig::default();
        let text = config.to_toml();
        let parsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(config, parsed);
        // and a second cycle gives byte-identical text
        assert_eq!(text, parsed.to_toml());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let text = r#"
            [discretization]
            n_design = 25
            n_sim = 41
        "#;
        let config = ExperimentConfig::parse(text).unwrap();
        assert_eq!(config.discretization.n_design, 25);
        assert_eq!(config.beam.e_modulus, 10.0);
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(ExperimentConfig::parse("[beam]\ne_modulus = -1.0").is_err());
        assert!(ExperimentConfig::parse("[simulation]\nstep = 0.0").is_err());
        assert!(ExperimentConfig::parse("[reference]\nkind = \"sawtooth\"").is_err());
        assert!(ExperimentConfig::parse("[low_gain]\ncount = 20").is_err());
    }

    #[test]
    fn profile_specs() {
        assert!(ProfileSpec::Named("paper-b1".into()).to_profile().is_ok());
        assert!(ProfileSpec::Named("nope".into()).to_profile().is_err());
        let p = ProfileSpec::Poly(vec![0.0, 1.0]).to_profile().unwrap();
        assert_eq!(p.eval(0.5), 0.5);
    }

    #[test]
    fn disturbance_default_matches_paper() {
        let config = ExperimentConfig::default();
        let w = config.disturbance_signal().unwrap();
        let pi = std::f64::consts::PI;
        // sin(pi t) + 0.4 cos(3 pi t)
        assert!((w.eval(0.0)[0] - 0.4).abs() < 1e-14);
        assert!((w.eval(0.5)[0] - 1.0).abs() < 1e-13);
        assert!((w.eval(1.0 / 3.0)[0] - ((pi / 3.0).sin() - 0.4)).abs() < 1e-12);
    }
}
