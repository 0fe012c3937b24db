use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::AugmentParams;
use super::classifier::{tta_predict, ClassifierConfig, ClassifierRegistry, DEFAULT_CLASSIFIER};
use super::dataset::{assemble_training_set, standard_specs, DatasetSpec, Pools};
use super::stats::{auc, mean_std, paired_t_test};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::proggan::LabeledImage;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const RUNS_JSON: &str = "runs.json";
pub const DEFAULT_REFERENCE: &str = "Real+Instance+PGAN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub specs: Vec<DatasetSpec>,
    pub runs: usize,
    /// Run `r` uses seed `seed + r` for drawing, initialization and
    /// augmentation.
    pub seed: u64,
    /// Row the p-values compare against; `None` disables them.
    pub reference: Option<String>,
    pub classifier: String,
    pub classifier_config: ClassifierConfig,
    pub augment: AugmentParams,
    pub tta_replicas: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            specs: standard_specs(2346),
            runs: 10,
            seed: 0,
            reference: Some(DEFAULT_REFERENCE.to_string()),
            classifier: DEFAULT_CLASSIFIER.to_string(),
            classifier_config: ClassifierConfig::default(),
            augment: AugmentParams::default(),
            tta_replicas: 50,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::invalid("experiment needs at least one dataset spec"));
        }
        for (i, s) in self.specs.iter().enumerate() {
            s.validate()?;
            if self.specs[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::invalid(format!("spec `{}` listed twice", s.name)));
            }
        }
        if self.runs == 0 {
            return Err(Error::invalid("runs must be positive"));
        }
        if self.tta_replicas == 0 {
            return Err(Error::invalid("tta_replicas must be positive"));
        }
        if let Some(r) = &self.reference {
            if !self.specs.iter().any(|s| &s.name == r) {
                return Err(Error::invalid(format!(
                    "reference row `{r}` is not among the specs"
                )));
            }
        }
        self.classifier_config.validate()?;
        self.augment.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub auc: f64,
}

/// All runs of one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRuns {
    pub spec: DatasetSpec,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "Training Data")]
    pub name: String,
    #[serde(rename = "AUC (%)")]
    pub mean_auc_percent: f64,
    #[serde(rename = "AUC std (%)")]
    pub std_auc_percent: f64,
    #[serde(rename = "Training Data Size")]
    pub size: usize,
    /// Paired t-test against the reference row; absent for the reference
    /// itself, for single runs and for zero-variance differences.
    #[serde(rename = "p-value")]
    pub p_value: Option<f64>,
    pub significant: Option<bool>,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub reference: Option<String>,
    pub rows: Vec<ReportRow>,
}

/// Trains and evaluates the classifier `cfg.runs` times per spec, then
/// summarizes. Runs are independent and executed on the rayon pool.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    pools: &Pools,
    test: &[LabeledImage],
    registry: &ClassifierRegistry,
) -> Result<ExperimentReport> {
    let runs = run_all(cfg, pools, test, registry)?;
    build_report(&runs, cfg.reference.as_deref())
}

/// The training/evaluation cycles without the summary.
pub fn run_all(
    cfg: &ExperimentConfig,
    pools: &Pools,
    test: &[LabeledImage],
    registry: &ClassifierRegistry,
) -> Result<Vec<SpecRuns>> {
    cfg.validate()?;
    let labels: Vec<bool> = test.iter().map(|t| t.label.is_melanoma()).collect();
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::InsufficientData(
            "test set must contain both benign and melanoma images".into(),
        ));
    }
    // Fail fast on pool underflow before any training starts.
    for spec in &cfg.specs {
        assemble_training_set(spec, pools, cfg.seed)?;
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.specs.len())
        .flat_map(|s| (0..cfg.runs).map(move |r| (s, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(s, r)| {
            let spec = &cfg.specs[s];
            let seed = cfg.seed.wrapping_add(r as u64);
            let auc = single_run(cfg, spec, seed, pools, test, &labels, registry)?;
            log::info!("{} run {r} (seed {seed}): AUC {:.4}", spec.name, auc);
            Ok(RunResult { run: r, seed, auc })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(cfg
        .specs
        .iter()
        .enumerate()
        .map(|(s, spec)| SpecRuns {
            spec: spec.clone(),
            runs: results[s * cfg.runs..(s + 1) * cfg.runs].to_vec(),
        })
        .collect())
}

fn single_run(
    cfg: &ExperimentConfig,
    spec: &DatasetSpec,
    seed: u64,
    pools: &Pools,
    test: &[LabeledImage],
    labels: &[bool],
    registry: &ClassifierRegistry,
) -> Result<f64> {
    let train = assemble_training_set(spec, pools, seed)?;
    let mut model = registry.build(&cfg.classifier, &cfg.classifier_config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(100);
    model.fit(&train, &cfg.augment, &mut rng)?;
    rng.set_stream(101);
    rng.set_word_pos(0);
    let scores = test
        .iter()
        .map(|t| {
            tta_predict(
                model.as_ref(),
                &t.image,
                cfg.tta_replicas,
                &cfg.augment,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    auc(&scores, labels)
}

/// Aggregates run results into report rows, keeping the spec order.
pub fn build_report(runs: &[SpecRuns], reference: Option<&str>) -> Result<ExperimentReport> {
    let reference_aucs: Option<Vec<f64>> = match reference {
        Some(name) => Some(
            runs.iter()
                .find(|r| r.spec.name == name)
                .ok_or_else(|| Error::invalid(format!("reference row `{name}` has no runs")))?
                .runs
                .iter()
                .map(|r| r.auc)
                .collect(),
        ),
        None => None,
    };
    let rows = runs
        .iter()
        .map(|sr| {
            let aucs: Vec<f64> = sr.runs.iter().map(|r| r.auc).collect();
            let (mean, std) = mean_std(&aucs);
            let test = match &reference_aucs {
                Some(ref_aucs) if Some(sr.spec.name.as_str()) != reference => {
                    match paired_t_test(&aucs, ref_aucs) {
                        Ok(t) => Some(t),
                        Err(Error::DegenerateInput(_)) | Err(Error::InvalidArgument(_)) => {
                            log::warn!("{}: no p-value (degenerate or too few runs)", sr.spec.name);
                            None
                        }
                        Err(e) => return Err(e),
                    }
                }
                _ => None,
            };
            Ok(ReportRow {
                name: sr.spec.name.clone(),
                mean_auc_percent: 100.0 * mean,
                std_auc_percent: 100.0 * std,
                size: sr.spec.total(),
                p_value: test.map(|t| t.p_value),
                significant: test.map(|t| t.significant),
                runs: sr.runs.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        reference: reference.map(str::to_string),
        rows,
    })
}

impl ExperimentReport {
    /// Comma-separated table with the columns
    /// `Training Data, AUC (%), Training Data Size, p-value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Training Data,AUC (%),Training Data Size,p-value\n");
        for r in &self.rows {
            let p = match r.p_value {
                Some(p) => format!("{p:.1e}"),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "{},{:.1} ± {:.1},{},{}\n",
                r.name, r.mean_auc_percent, r.std_auc_percent, r.size, p
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the CSV and JSON forms into `dir`, returning their paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let csv = dir.join(REPORT_CSV);
        let json = dir.join(REPORT_JSON);
        atomic_write(&csv, self.to_csv().as_bytes())?;
        atomic_write(&json, self.to_json()?.as_bytes())?;
        Ok((csv, json))
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::Source;

    fn runs(name: &str, aucs: &[f64]) -> SpecRuns {
        SpecRuns {
            spec: DatasetSpec::new(name, &[(Source::Real, 5)]).unwrap(),
            runs: aucs
                .iter()
                .enumerate()
                .map(|(i, &auc)| RunResult {
                    run: i,
                    seed: i as u64,
                    auc,
                })
                .collect(),
        }
    }

    #[test]
    fn report_rows_and_p_values() {
        let all = [
            runs("A", &[0.80, 0.82, 0.81]),
            runs("B", &[0.85, 0.88, 0.86]),
        ];
        let rep = build_report(&all, Some("B")).unwrap();
        assert_eq!(rep.rows.len(), 2);
        let a = rep.row("A").unwrap();
        assert!((a.mean_auc_percent - 81.0).abs() < 1e-9);
        assert!((a.std_auc_percent - 1.0).abs() < 1e-9);
        assert!(a.p_value.unwrap() > 0.0 && a.p_value.unwrap() <= 1.0);
        assert_eq!(rep.row("B").unwrap().p_value, None);
        let csv = rep.to_csv();
        assert!(csv.starts_with("Training Data,AUC (%),Training Data Size,p-value\n"));
        assert!(csv.contains("B,86.3 ± 1.5,5,-\n"), "{csv}");
        let back: ExperimentReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn single_run_has_zero_std_and_no_p() {
        let rep = build_report(&[runs("A", &[0.7]), runs("B", &[0.8])], Some("A")).unwrap();
        assert_eq!(rep.rows[1].std_auc_percent, 0.0);
        assert_eq!(rep.rows[1].p_value, None);
    }

    #[test]
    fn unknown_reference_rejected() {
        let cfg = ExperimentConfig {
            reference: Some("nope".into()),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
