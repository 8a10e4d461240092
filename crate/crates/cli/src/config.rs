//! Run configuration: a TOML document with system, data, dictionary,
//! training, and evaluation sections. Unknown keys are rejected before any
//! compute happens.

use koopman_core::bench::{BenchOptions, GlycolysisOptions, PolsOptions, SwingOptions};
use koopman_core::dictionary::{PolyDictSpec, PolyFamily};
use koopman_core::edmd::EdmdConfig;
use koopman_core::error::{Error, Result};
use koopman_core::neural::{Activation, MlpSpec};
use koopman_core::systems::GlycolysisParams;
use koopman_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub dictionary: Option<DictionarySection>,
    #[serde(default)]
    pub training: Option<TrainingSection>,
    #[serde(default)]
    pub evaluation: Option<EvaluationSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSection {
    Pols {
        n: usize,
        #[serde(default)]
        oscillatory: Option<bool>,
        #[serde(default)]
        observed_fraction: Option<f64>,
        #[serde(default)]
        orbits: Option<usize>,
        #[serde(default)]
        segment_len: Option<usize>,
    },
    Glycolysis {
        #[serde(default)]
        observed: Option<usize>,
        #[serde(default)]
        params: Option<GlycolysisParams>,
    },
    Swing {
        #[serde(default)]
        params_file: Option<String>,
        #[serde(default)]
        delta_scale: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub trajectories: Option<usize>,
    /// Recorded samples per trajectory.
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub substeps: Option<usize>,
    /// Integration time discarded before recording (ODE systems).
    pub burn_in: Option<f64>,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            trajectories: None,
            steps: None,
            dt: None,
            substeps: None,
            burn_in: None,
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DictionarySection {
    Poly {
        #[serde(default = "default_family")]
        family: PolyFamily,
        max_total_degree: usize,
    },
    Mlp {
        #[serde(default)]
        hidden_widths: Option<Vec<usize>>,
        #[serde(default)]
        output_width: Option<usize>,
        #[serde(default)]
        activation: Option<Activation>,
        #[serde(default)]
        dropout_rate: Option<f64>,
        /// The named 20-layer preset for the power benchmark.
        #[serde(default)]
        preset: Option<String>,
    },
}

fn default_family() -> PolyFamily {
    PolyFamily::Legendre
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// deep | edmd | fixed-dict
    pub method: String,
    #[serde(flatten)]
    pub deep: TrainConfig,
    /// Extended-DMD sweep values when method = "edmd".
    pub lambdas: Option<Vec<f64>>,
    pub degrees: Option<Vec<usize>>,
    pub edmd_max_iter: usize,
    pub edmd_tol: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            method: "deep".into(),
            deep: TrainConfig::default(),
            lambdas: None,
            degrees: None,
            edmd_max_iter: EdmdConfig::default().max_iter,
            edmd_tol: EdmdConfig::default().tol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub forecast_steps: usize,
    /// lifted | relift
    pub mode: String,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            forecast_steps: 100,
            mode: "lifted".into(),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.data.train_fraction) || self.data.train_fraction == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "train_fraction {} outside (0, 1)",
                self.data.train_fraction
            )));
        }
        match &self.system {
            SystemSection::Pols { n, .. } if *n < 2 => {
                return Err(Error::InvalidArgument("pols needs n >= 2".into()))
            }
            SystemSection::Glycolysis {
                observed: Some(obs),
                ..
            } if !(1..=7).contains(obs) => {
                return Err(Error::InvalidArgument(format!(
                    "glycolysis observed species {obs} outside 1..=7"
                )))
            }
            _ => {}
        }
        if let Some(t) = &self.training {
            match t.method.as_str() {
                "deep" | "edmd" | "fixed-dict" => {}
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown training method {other:?}"
                    )))
                }
            }
        }
        if let Some(e) = &self.evaluation {
            match e.mode.as_str() {
                "lifted" | "relift" => {}
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown forecast mode {other:?}"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Assemble the data-generation options for the configured system.
    pub fn pols_options(&self) -> PolsOptions {
        let mut options = match &self.system {
            SystemSection::Pols {
                n,
                oscillatory,
                observed_fraction,
                orbits,
                segment_len,
            } => {
                let mut o = koopman_core::bench::pols_desk_options(*n);
                if let Some(f) = oscillatory {
                    o.oscillatory = *f;
                }
                if let Some(f) = observed_fraction {
                    o.observed_fraction = *f;
                }
                if let Some(v) = orbits {
                    o.orbits = *v;
                }
                if let Some(v) = segment_len {
                    o.segment_len = *v;
                }
                o
            }
            _ => koopman_core::bench::pols_desk_options(8),
        };
        options.bench = self.bench_options(options.bench);
        options
    }

    pub fn glycolysis_options(&self) -> GlycolysisOptions {
        let mut o = GlycolysisOptions::default();
        if let SystemSection::Glycolysis {
            params: Some(p), ..
        } = &self.system
        {
            o.params = p.clone();
        }
        if let Some(v) = self.data.trajectories {
            o.trajectories = v;
        }
        if let Some(v) = self.data.steps {
            o.samples = v;
        }
        if let Some(v) = self.data.dt {
            o.dt = v;
        }
        if let Some(v) = self.data.substeps {
            o.substeps = v;
        }
        if let Some(v) = self.data.burn_in {
            o.burn_in = v;
        }
        o.bench = self.bench_options(o.bench);
        o
    }

    pub fn swing_options(&self) -> SwingOptions {
        let mut o = SwingOptions::default();
        if let SystemSection::Swing {
            delta_scale: Some(d),
            ..
        } = &self.system
        {
            o.delta_scale = *d;
        }
        if let Some(v) = self.data.trajectories {
            o.trajectories = v;
        }
        if let Some(v) = self.data.steps {
            o.samples = v;
        }
        if let Some(v) = self.data.dt {
            o.dt = v;
        }
        if let Some(v) = self.data.substeps {
            o.substeps = v;
        }
        o.bench = self.bench_options(o.bench);
        o
    }

    fn bench_options(&self, mut bench: BenchOptions) -> BenchOptions {
        bench.train_fraction = self.data.train_fraction;
        if let Some(t) = &self.training {
            bench.deep = t.deep.clone();
            if let Some(l) = &t.lambdas {
                bench.edmd_lambdas = l.clone();
            }
            if let Some(d) = &t.degrees {
                bench.edmd_degrees = d.clone();
            }
        }
        if let Some(e) = &self.evaluation {
            bench.forecast_steps = e.forecast_steps;
        }
        bench
    }

    /// Build the dictionary spec for the configured observable dimension.
    pub fn mlp_spec(&self, p: usize) -> MlpSpec {
        match &self.dictionary {
            Some(DictionarySection::Mlp {
                hidden_widths,
                output_width,
                activation,
                dropout_rate,
                preset,
            }) => {
                let mut spec = if preset.as_deref() == Some("power") {
                    MlpSpec::power_preset(p)
                } else {
                    MlpSpec::default_for(p)
                };
                if let Some(h) = hidden_widths {
                    spec.hidden_widths = h.clone();
                }
                if let Some(w) = output_width {
                    spec.output_width = *w;
                }
                if let Some(a) = activation {
                    spec.activation = *a;
                }
                if let Some(d) = dropout_rate {
                    spec.dropout_rate = *d;
                }
                spec
            }
            _ => MlpSpec::default_for(p),
        }
    }

    /// Build the polynomial spec when the dictionary section asks for one.
    pub fn poly_spec(&self, p: usize, domain_box: Vec<(f64, f64)>) -> Option<PolyDictSpec> {
        match &self.dictionary {
            Some(DictionarySection::Poly {
                family,
                max_total_degree,
            }) => Some(PolyDictSpec {
                family: *family,
                input_dim: p,
                max_total_degree: *max_total_degree,
                domain_box: Some(domain_box),
                cap: koopman_core::dictionary::DEFAULT_DICT_CAP,
            }),
            _ => None,
        }
    }
}
