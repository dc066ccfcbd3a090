//! Attack-suite runner, hyperparameter sweeps, transfer evaluation, and
//! the CSV/JSON report writers.
//!
//! Per-example attacks run in parallel; every example gets an RNG stream
//! derived from (seed, example index) and results are aggregated in index
//! order, so reports are identical under any scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::attacks::{bim, di_aa, fgsm, pgd, AttackConfig, AttackOutcome};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forward::logits;
use crate::metrics::SummaryStats;
use crate::network::{fold_batchnorm, Network};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AttackKind {
    DiAa,
    Fgsm,
    Bim,
    Pgd,
}

impl AttackKind {
    pub fn parse(name: &str) -> Result<AttackKind> {
        match name {
            "diaa" => Ok(AttackKind::DiAa),
            "fgsm" => Ok(AttackKind::Fgsm),
            "bim" => Ok(AttackKind::Bim),
            "pgd" => Ok(AttackKind::Pgd),
            other => Err(Error::Config(format!(
                "unknown attack {other:?}; expected diaa|fgsm|bim|pgd"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::DiAa => "diaa",
            AttackKind::Fgsm => "fgsm",
            AttackKind::Bim => "bim",
            AttackKind::Pgd => "pgd",
        }
    }
}

/// Aggregate row for one attack over one dataset slice. The L_p statistics
/// cover successful examples only; failures count toward `n` and the
/// success rate but contribute no norms.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub attack: String,
    pub n: usize,
    pub sr: f64,
    pub l0: SummaryStats,
    pub l1: SummaryStats,
    pub l2: SummaryStats,
    pub wall_ms: u128,
}

/// One attack's aggregate plus the per-example outcome log it was
/// computed from.
#[derive(Debug)]
pub struct SuiteRun {
    pub report: SuiteReport,
    pub outcomes: Vec<AttackOutcome>,
}

/// Everything a report consumer needs to reproduce the numbers.
#[derive(Debug, Clone, Serialize)]
pub struct ReportHeader {
    pub dataset: String,
    pub examples: usize,
    pub seed: u64,
    pub model_hash: String,
    pub config: AttackConfig,
    /// Success rate counts every attacked example, not only those the
    /// model classifies correctly.
    pub sr_denominator: &'static str,
}

impl ReportHeader {
    pub fn new(
        dataset: &Dataset,
        model_hash: impl Into<String>,
        cfg: &AttackConfig,
    ) -> ReportHeader {
        ReportHeader {
            dataset: dataset.name.clone(),
            examples: dataset.len(),
            seed: cfg.seed,
            model_hash: model_hash.into(),
            config: cfg.clone(),
            sr_denominator: "all-examples",
        }
    }

    fn comment_lines(&self) -> String {
        let config = serde_json::to_string(&self.config).unwrap_or_default();
        format!(
            "# dataset={} examples={} seed={} model={} sr_denominator={}\n# config={}\n",
            self.dataset, self.examples, self.seed, self.model_hash, self.sr_denominator, config
        )
    }
}

fn run_one(
    kind: AttackKind,
    network: &Network,
    x: &crate::tensor::Tensor,
    label: usize,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    match kind {
        AttackKind::DiAa => di_aa(x, label, network, cfg),
        AttackKind::Fgsm => fgsm(x, label, network, cfg),
        AttackKind::Bim => bim(x, label, network, cfg),
        AttackKind::Pgd => pgd(x, label, network, cfg),
    }
}

/// Runs each attack over the whole dataset and aggregates. The network is
/// batchnorm-folded once up front.
pub fn run_attack_suite(
    network: &Network,
    dataset: &Dataset,
    attacks: &[AttackKind],
    cfg: &AttackConfig,
) -> Result<Vec<SuiteRun>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for &label in &dataset.labels {
        if label >= network.classes {
            return Err(Error::ClassIndex {
                index: label,
                classes: network.classes,
            });
        }
    }
    let folded = fold_batchnorm(network)?;

    let mut runs = Vec::with_capacity(attacks.len());
    for &kind in attacks {
        let started = Instant::now();
        let mut outcomes: Vec<(usize, AttackOutcome)> = (0..dataset.len())
            .into_par_iter()
            .map(|i| {
                let mut per_example = cfg.clone();
                per_example.seed = derive_seed(cfg.seed, i as u64);
                run_one(
                    kind,
                    &folded,
                    &dataset.examples[i],
                    dataset.labels[i],
                    &per_example,
                )
                .map(|out| (i, out))
            })
            .collect::<Result<Vec<_>>>()?;
        outcomes.sort_by_key(|(i, _)| *i);
        let outcomes: Vec<AttackOutcome> = outcomes.into_iter().map(|(_, o)| o).collect();
        let report = aggregate(kind.name(), &outcomes, started.elapsed().as_millis());
        runs.push(SuiteRun { report, outcomes });
    }
    Ok(runs)
}

/// Builds a `SuiteReport` from an outcome log.
pub fn aggregate(attack: &str, outcomes: &[AttackOutcome], wall_ms: u128) -> SuiteReport {
    let n = outcomes.len();
    let successes: Vec<&AttackOutcome> = outcomes.iter().filter(|o| o.success).collect();
    let sr = successes.len() as f64 / n as f64;
    let collect =
        |f: fn(&AttackOutcome) -> f64| -> Vec<f64> { successes.iter().map(|o| f(o)).collect() };
    SuiteReport {
        attack: attack.to_string(),
        n,
        sr,
        l0: SummaryStats::of(&collect(|o| o.l0)),
        l1: SummaryStats::of(&collect(|o| o.l1)),
        l2: SummaryStats::of(&collect(|o| o.l2)),
        wall_ms,
    }
}

const REPORT_COLUMNS: &str = "attack,n,sr,l0_mean,l0_std,l0_min,l0_max,l1_mean,l1_std,l1_min,l1_max,l2_mean,l2_std,l2_min,l2_max,wall_ms";

fn stats_fields(s: &SummaryStats) -> String {
    format!("{},{},{},{}", s.mean, s.std, s.min, s.max)
}

pub fn write_suite_csv(
    path: impl AsRef<Path>,
    header: &ReportHeader,
    reports: &[SuiteReport],
) -> Result<()> {
    let mut out = header.comment_lines();
    out.push_str(REPORT_COLUMNS);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.attack,
            r.n,
            r.sr,
            stats_fields(&r.l0),
            stats_fields(&r.l1),
            stats_fields(&r.l2),
            r.wall_ms
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_suite_json(
    path: impl AsRef<Path>,
    header: &ReportHeader,
    reports: &[SuiteReport],
) -> Result<()> {
    #[derive(Serialize)]
    struct Document<'a> {
        header: &'a ReportHeader,
        reports: &'a [SuiteReport],
    }
    let doc = Document { header, reports };
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

/// One grid point of a hyperparameter sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub t: usize,
    pub eps: f64,
    pub c: f64,
    #[serde(flatten)]
    pub report: SuiteReport,
}

/// Runs the sparse attack at every (T, eps, c) grid point over the first
/// `slice_fraction` of the dataset, one row per point.
pub fn hyperparameter_sweep(
    network: &Network,
    dataset: &Dataset,
    t_grid: &[usize],
    eps_grid: &[f64],
    c_grid: &[f64],
    slice_fraction: f64,
    base: &AttackConfig,
) -> Result<Vec<SweepRow>> {
    if t_grid.is_empty() || eps_grid.is_empty() || c_grid.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    if !(slice_fraction > 0.0 && slice_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "slice fraction must lie in (0,1], got {slice_fraction}"
        )));
    }
    let slice = dataset.fraction_prefix(slice_fraction);
    let mut rows = Vec::new();
    for &t in t_grid {
        for &eps in eps_grid {
            for &c in c_grid {
                let mut cfg = base.clone();
                cfg.inner_iters = t;
                cfg.step = eps;
                cfg.c = c;
                let runs = run_attack_suite(network, &slice, &[AttackKind::DiAa], &cfg)?;
                let report = runs.into_iter().next().expect("one attack").report;
                rows.push(SweepRow { t, eps, c, report });
            }
        }
    }
    Ok(rows)
}

const SWEEP_COLUMNS: &str = "t,eps,c,n,sr,l0_mean,l0_std,l0_min,l0_max,l1_mean,l1_std,l1_min,l1_max,l2_mean,l2_std,l2_min,l2_max,wall_ms";

pub fn write_sweep_csv(
    path: impl AsRef<Path>,
    header: &ReportHeader,
    rows: &[SweepRow],
) -> Result<()> {
    let mut out = header.comment_lines();
    out.push_str(SWEEP_COLUMNS);
    out.push('\n');
    for row in rows {
        let r = &row.report;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.t,
            row.eps,
            row.c,
            r.n,
            r.sr,
            stats_fields(&r.l0),
            stats_fields(&r.l1),
            stats_fields(&r.l2),
            r.wall_ms
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Accuracy drop on a target model caused by examples crafted against a
/// source model.
#[derive(Debug, Clone, Serialize)]
pub struct TransferReport {
    pub source: String,
    pub target: String,
    pub attack: String,
    /// Examples evaluated: the slice the source model classifies correctly.
    pub n: usize,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
    /// `(clean_accuracy - adversarial_accuracy) * 100`.
    pub drop_pp: f64,
}

/// Crafts adversarial examples on `source` (over the examples it classifies
/// correctly) and measures `target` accuracy on the clean and adversarial
/// versions. Self-transfer therefore has clean accuracy exactly 1, making
/// the drop equal `1 - adversarial accuracy`.
pub fn transfer_evaluate(
    source: &Network,
    target: &Network,
    source_name: &str,
    target_name: &str,
    dataset: &Dataset,
    attack: AttackKind,
    cfg: &AttackConfig,
) -> Result<TransferReport> {
    cfg.validate()?;
    if source.input_shape != target.input_shape || source.classes != target.classes {
        return Err(Error::Config(format!(
            "source ({:?}, {} classes) and target ({:?}, {} classes) are incompatible",
            source.input_shape, source.classes, target.input_shape, target.classes
        )));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let source = fold_batchnorm(source)?;
    let target = fold_batchnorm(target)?;

    // keep only examples the source model gets right, with their original
    // indices so per-example seeds stay stable
    let mut kept: Vec<usize> = Vec::new();
    for (i, (x, &label)) in dataset.examples.iter().zip(&dataset.labels).enumerate() {
        if logits(&source, x)?.argmax() == label {
            kept.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::Config(
            "source model classifies no example correctly; nothing to transfer".into(),
        ));
    }

    let adversarials: Vec<(usize, AttackOutcome)> = kept
        .par_iter()
        .map(|&i| {
            let mut per_example = cfg.clone();
            per_example.seed = derive_seed(cfg.seed, i as u64);
            run_one(
                attack,
                &source,
                &dataset.examples[i],
                dataset.labels[i],
                &per_example,
            )
            .map(|o| (i, o))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut clean_correct = 0usize;
    let mut adv_correct = 0usize;
    for (i, outcome) in &adversarials {
        let label = dataset.labels[*i];
        if logits(&target, &dataset.examples[*i])?.argmax() == label {
            clean_correct += 1;
        }
        if logits(&target, &outcome.adversarial)?.argmax() == label {
            adv_correct += 1;
        }
    }
    let n = kept.len();
    let clean_accuracy = clean_correct as f64 / n as f64;
    let adversarial_accuracy = adv_correct as f64 / n as f64;
    Ok(TransferReport {
        source: source_name.to_string(),
        target: target_name.to_string(),
        attack: attack.name().to_string(),
        n,
        clean_accuracy,
        adversarial_accuracy,
        drop_pp: (clean_accuracy - adversarial_accuracy) * 100.0,
    })
}

pub fn write_transfer_csv(path: impl AsRef<Path>, reports: &[TransferReport]) -> Result<()> {
    let mut out = String::from("source,target,attack,n,clean_acc,adv_acc,drop_pp\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.source, r.target, r.attack, r.n, r.clean_accuracy, r.adversarial_accuracy, r.drop_pp
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_blobs;
    use crate::network::{dense_arch, Layer};
    use crate::tensor::Tensor;
    use crate::train::{train, TrainConfig};

    fn trained_blob_model(seed: u64) -> (Network, Dataset) {
        let data = synthetic_blobs(80, 3);
        let net = dense_arch(&[2], 8, 2, seed).unwrap();
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.05,
            seed,
            ..TrainConfig::default()
        };
        (train(&net, &data, &cfg).unwrap(), data)
    }

    #[test]
    fn unknown_attack_name_is_config_error() {
        assert!(matches!(AttackKind::parse("cw"), Err(Error::Config(_))));
        assert_eq!(AttackKind::parse("diaa").unwrap(), AttackKind::DiAa);
    }

    #[test]
    fn degenerate_already_misclassified_dataset_reports_full_sr_and_zero_norms() {
        // identity logits, label deliberately wrong for the single example
        let net = Network::new(
            vec![2],
            2,
            vec![Layer::Dense {
                in_dim: 2,
                out_dim: 2,
                weights: vec![1.0, 0.0, 0.0, 1.0],
                bias: vec![0.0, 0.0],
            }],
        )
        .unwrap();
        let data = Dataset::new(
            "degenerate",
            vec![2],
            2,
            vec![Tensor::from_vec(vec![0.9, 0.1]).unwrap()],
            vec![1],
        )
        .unwrap();
        let cfg = AttackConfig::default();
        let runs = run_attack_suite(
            &net,
            &data,
            &[
                AttackKind::DiAa,
                AttackKind::Fgsm,
                AttackKind::Bim,
                AttackKind::Pgd,
            ],
            &cfg,
        )
        .unwrap();
        for run in &runs {
            assert_eq!(run.report.sr, 1.0, "attack {}", run.report.attack);
        }
        // the sparse attack returns the clean input untouched
        let diaa = &runs[0];
        assert_eq!(diaa.report.l0.mean, 0.0);
        assert_eq!(diaa.report.l2.max, 0.0);
    }

    #[test]
    fn aggregation_matches_hand_computation() {
        let success = AttackOutcome {
            adversarial: Tensor::from_vec(vec![0.0]).unwrap(),
            success: true,
            outer_iterations: 1,
            inner_iterations: 2,
            l0: 1.0,
            l1: 0.5,
            l2: 0.5,
            predicted_class: 1,
        };
        let failure = AttackOutcome {
            adversarial: Tensor::from_vec(vec![0.0]).unwrap(),
            success: false,
            outer_iterations: 3,
            inner_iterations: 9,
            l0: 3.0,
            l1: 2.0,
            l2: 1.5,
            predicted_class: 0,
        };
        let report = aggregate("diaa", &[success, failure], 0);
        assert_eq!(report.sr, 0.5);
        assert_eq!(report.l2.mean, 0.5);
        assert_eq!(report.l2.std, 0.0);
        assert_eq!(report.l2.min, 0.5);
        assert_eq!(report.l2.max, 0.5);
    }

    #[test]
    fn report_statistics_match_independent_recomputation() {
        let (net, data) = trained_blob_model(5);
        let cfg = AttackConfig {
            step: 0.05,
            inner_iters: 10,
            ..AttackConfig::default()
        };
        let runs = run_attack_suite(
            &net,
            &data.prefix(30),
            &[AttackKind::DiAa, AttackKind::Pgd],
            &cfg,
        )
        .unwrap();
        for run in runs {
            let successes: Vec<f64> = run
                .outcomes
                .iter()
                .filter(|o| o.success)
                .map(|o| o.l2)
                .collect();
            let expected = SummaryStats::of(&successes);
            assert!((run.report.l2.mean - expected.mean).abs() <= 1e-10);
            assert!((run.report.l2.std - expected.std).abs() <= 1e-10);
            assert_eq!(run.report.l2.min, expected.min);
            assert_eq!(run.report.l2.max, expected.max);
            let sr = successes.len() as f64 / run.outcomes.len() as f64;
            assert!((run.report.sr - sr).abs() <= 1e-10);
        }
    }

    #[test]
    fn suite_is_deterministic_across_runs() {
        let (net, data) = trained_blob_model(6);
        let cfg = AttackConfig {
            step: 0.05,
            inner_iters: 5,
            seed: 9,
            ..AttackConfig::default()
        };
        let kinds = [AttackKind::DiAa, AttackKind::Pgd];
        let a = run_attack_suite(&net, &data.prefix(20), &kinds, &cfg).unwrap();
        let b = run_attack_suite(&net, &data.prefix(20), &kinds, &cfg).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.report.sr, rb.report.sr);
            assert_eq!(ra.report.l2.mean, rb.report.l2.mean);
            for (oa, ob) in ra.outcomes.iter().zip(&rb.outcomes) {
                assert_eq!(oa.adversarial.data(), ob.adversarial.data());
            }
        }
    }

    #[test]
    fn singleton_sweep_grid_equals_suite_run() {
        let (net, data) = trained_blob_model(7);
        let cfg = AttackConfig {
            step: 0.05,
            inner_iters: 8,
            ..AttackConfig::default()
        };
        let rows = hyperparameter_sweep(&net, &data, &[8], &[0.05], &[1.0], 0.25, &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let slice = data.fraction_prefix(0.25);
        let suite = run_attack_suite(&net, &slice, &[AttackKind::DiAa], &cfg).unwrap();
        assert_eq!(rows[0].report.sr, suite[0].report.sr);
        assert_eq!(rows[0].report.l0.mean, suite[0].report.l0.mean);
        assert_eq!(rows[0].report.n, slice.len());
    }

    #[test]
    fn self_transfer_drop_is_one_minus_attacked_accuracy() {
        let (net, data) = trained_blob_model(8);
        let cfg = AttackConfig {
            step: 0.05,
            inner_iters: 10,
            ..AttackConfig::default()
        };
        let slice = data.prefix(30);
        let report =
            transfer_evaluate(&net, &net, "m", "m", &slice, AttackKind::DiAa, &cfg).unwrap();
        assert_eq!(report.clean_accuracy, 1.0);
        assert!((report.drop_pp - (1.0 - report.adversarial_accuracy) * 100.0).abs() <= 1e-10);
    }

    #[test]
    fn zero_radius_attack_transfers_no_drop() {
        let (net, data) = trained_blob_model(9);
        let cfg = AttackConfig {
            epsilon_ball: 0.0,
            ..AttackConfig::default()
        };
        let report = transfer_evaluate(
            &net,
            &net,
            "m",
            "m",
            &data.prefix(20),
            AttackKind::Fgsm,
            &cfg,
        )
        .unwrap();
        assert_eq!(report.drop_pp, 0.0);
    }

    #[test]
    fn incompatible_networks_are_rejected() {
        let a = dense_arch(&[2], 4, 2, 0).unwrap();
        let b = dense_arch(&[3], 4, 2, 0).unwrap();
        let data = synthetic_blobs(4, 0);
        let cfg = AttackConfig::default();
        assert!(matches!(
            transfer_evaluate(&a, &b, "a", "b", &data, AttackKind::Fgsm, &cfg),
            Err(Error::Config(_))
        ));
    }
}
