//! Seeded H0/H1 detection experiment.
//!
//! Each `(trial, hypothesis)` pair draws its samples from its own stream, so
//! results do not depend on scheduling and rows come out ordered by trial.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::vartheta;
use crate::detect::{baseline_stats, make_plan, run_test, DetectionPlan, RhoMode, Statistic, StatisticRecord};
use crate::io::format_float;
use crate::model::{sample_covariance, sample_model_with, Hypothesis, ModelConfig};
use crate::relax::{solve_psi_covariance, SolveOptions};
use crate::rng::{domain, stream_id, stream_rng, GENERATOR_ID};
use crate::{Error, Result};

/// Built-in statistics, in output order.
pub const BUILTIN_STATISTICS: [&str; 3] = ["psi", "lambda_max", "diag_max"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub trials: usize,
    pub rho_mode: RhoMode,
    /// Certified-gap target of each relaxation solve.
    pub tol: f64,
    pub max_iter: usize,
    /// Smoothing level; default derived from `tol`.
    pub epsilon: Option<f64>,
}

impl ExperimentConfig {
    /// Defaults sized for `n` around 100: relaxation values there are near
    /// 5, so the smoothing level is set below the `tol/4` default to keep
    /// the smoothing bias inside the gap.
    pub fn new(model: ModelConfig, trials: usize, rho_mode: RhoMode) -> Self {
        Self {
            model,
            trials,
            rho_mode,
            tol: 0.1,
            max_iter: 3000,
            epsilon: Some(0.01),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.trials > u32::MAX as usize {
            return Err(Error::invalid("too many trials"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("tol and max_iter must be positive"));
        }
        Ok(())
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            epsilon: self.epsilon,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    /// One-line description used as provenance in every output file.
    pub fn provenance(&self) -> String {
        let m = &self.model;
        format!(
            "n={} m={} k={} theta={:?} delta={:?} seed={} trials={} rho_mode={} tol={:?} max_iter={} epsilon={} generator={}",
            m.n,
            m.m,
            m.k_star,
            m.theta,
            m.delta,
            m.seed,
            self.trials,
            self.rho_mode,
            self.tol,
            self.max_iter,
            self.solve_options().epsilon(),
            GENERATOR_ID
        )
    }
}

/// Per-statistic comparison of the H0 and H1 samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSummary {
    pub name: String,
    pub mean_h0: f64,
    pub std_h0: f64,
    pub mean_h1: f64,
    pub std_h1: f64,
    /// Probability that an H1 value exceeds an H0 value (ties count half).
    pub auc: f64,
    /// Mean gap in pooled standard errors.
    pub separation: f64,
    /// Empirical `(1 - delta)` quantile of the H0 values.
    pub h0_quantile: f64,
    /// Fraction of H1 values above `h0_quantile`.
    pub power_at_quantile: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionRates {
    pub tau: f64,
    pub rate_h0: f64,
    pub rate_h1: f64,
}

/// Deterministic solver statistics over all rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: usize,
    pub converged: usize,
    pub total_iterations: usize,
    pub mean_iterations: f64,
    pub max_width: f64,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub statistics: Vec<StatisticSummary>,
    /// Rates of the `psi` test at the plan's `tau_psi`, when defined.
    pub psi_rejection: Option<RejectionRates>,
    /// Mean over H0 rows of `theta(c)/c` at `c = psi_lower/(n rho)`.
    pub runtime_beta_h0: f64,
    pub solver: SolverStats,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub plan: DetectionPlan,
    /// H0 and H1 row of trial 0, then trial 1, and so on.
    pub records: Vec<StatisticRecord>,
    pub plugin_names: Vec<String>,
    pub summary: Summary,
    /// Wall-clock time; not written to any output file.
    pub wall_seconds: f64,
}

fn hypothesis_index(h: Hypothesis) -> u16 {
    match h {
        Hypothesis::H0 => 0,
        Hypothesis::H1 => 1,
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    rho: f64,
    trial: usize,
    hypothesis: Hypothesis,
    plugins: &[Box<dyn Statistic>],
) -> Result<StatisticRecord> {
    let stream = stream_id(domain::EXPERIMENT, trial as u32, hypothesis_index(hypothesis));
    let mut rng = stream_rng(cfg.model.seed, stream);
    let samples = sample_model_with(&cfg.model, hypothesis, &mut rng)?;
    let sigma = sample_covariance(&samples);
    let (psi_lower, psi_upper, converged, iterations) = match solve_psi_covariance(&sigma, rho, &cfg.solve_options()) {
        Ok(out) => {
            let r = out.result;
            (r.psi_lower, r.psi_upper, r.converged, r.iterations)
        }
        // Every variance below rho: the relaxation value is zero.
        Err(Error::EmptyProblem { .. }) => (0.0, 0.0, true, 0),
        Err(e) => return Err(e),
    };
    let base = baseline_stats(&sigma)?;
    let plugins = plugins
        .iter()
        .map(|p| Ok((p.name().to_string(), p.evaluate(&sigma)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StatisticRecord {
        trial,
        hypothesis,
        seed: stream,
        psi: 0.5 * (psi_lower + psi_upper),
        psi_lower,
        psi_upper,
        converged,
        iterations,
        lambda_max: base.lambda_max,
        diag_max: base.diag_max,
        plugins,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, plugins: &[Box<dyn Statistic>]) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut names: Vec<String> = plugins.iter().map(|p| p.name().to_string()).collect();
    names.sort();
    names.dedup();
    if names.len() != plugins.len() || names.iter().any(|n| BUILTIN_STATISTICS.contains(&n.as_str())) {
        return Err(Error::invalid(
            "plugin names must be unique and distinct from built-in statistics",
        ));
    }
    let plugin_names: Vec<String> = plugins.iter().map(|p| p.name().to_string()).collect();

    let start = std::time::Instant::now();
    let plan = make_plan(&cfg.model, cfg.rho_mode)?;
    let records = (0..2 * cfg.trials)
        .into_par_iter()
        .map(|idx| {
            let h = if idx % 2 == 0 { Hypothesis::H0 } else { Hypothesis::H1 };
            run_trial(cfg, plan.rho, idx / 2, h, plugins)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&records, &plugin_names, &plan)?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        plan,
        records,
        plugin_names,
        summary,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mann-Whitney estimate of `P(H1 value > H0 value)`.
pub fn auc(h0: &[f64], h1: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &b in h1 {
        for &a in h0 {
            if b > a {
                wins += 1.0;
            } else if b == a {
                wins += 0.5;
            }
        }
    }
    wins / (h0.len() * h1.len()) as f64
}

/// Empirical quantile by the nearest-rank rule.
fn quantile(v: &[f64], q: f64) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn summarize_statistic(name: &str, h0: &[f64], h1: &[f64], delta: f64) -> StatisticSummary {
    let (mean_h0, std_h0) = mean_std(h0);
    let (mean_h1, std_h1) = mean_std(h1);
    let pooled = (std_h0.powi(2) / h0.len() as f64 + std_h1.powi(2) / h1.len() as f64).sqrt();
    let gap = mean_h1 - mean_h0;
    let separation = if pooled > 0.0 {
        gap / pooled
    } else if gap == 0.0 {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    };
    let h0_quantile = quantile(h0, 1.0 - delta);
    let power = h1.iter().filter(|&&v| run_test(v, h0_quantile)).count() as f64 / h1.len() as f64;
    StatisticSummary {
        name: name.to_string(),
        mean_h0,
        std_h0,
        mean_h1,
        std_h1,
        auc: auc(h0, h1),
        separation,
        h0_quantile,
        power_at_quantile: power,
    }
}

/// Recomputes the summary from rows; the report's summary is built the
/// same way, so results agree exactly.
pub fn summarize(records: &[StatisticRecord], plugin_names: &[String], plan: &DetectionPlan) -> Result<Summary> {
    let split = |name: &str| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut h0 = Vec::new();
        let mut h1 = Vec::new();
        for r in records {
            let v = r
                .get(name)
                .ok_or_else(|| Error::invalid(format!("row {} lacks statistic {name}", r.trial)))?;
            match r.hypothesis {
                Hypothesis::H0 => h0.push(v),
                Hypothesis::H1 => h1.push(v),
            }
        }
        if h0.is_empty() || h1.is_empty() {
            return Err(Error::invalid("need rows under both hypotheses"));
        }
        Ok((h0, h1))
    };

    let names = BUILTIN_STATISTICS
        .iter()
        .map(|s| s.to_string())
        .chain(plugin_names.iter().cloned());
    let mut statistics = Vec::new();
    for name in names {
        let (h0, h1) = split(&name)?;
        statistics.push(summarize_statistic(&name, &h0, &h1, plan.config.delta));
    }

    let (psi_h0, psi_h1) = split("psi")?;
    let psi_rejection = plan.tau_psi.map(|tau| RejectionRates {
        tau,
        rate_h0: psi_h0.iter().filter(|&&v| run_test(v, tau)).count() as f64 / psi_h0.len() as f64,
        rate_h1: psi_h1.iter().filter(|&&v| run_test(v, tau)).count() as f64 / psi_h1.len() as f64,
    });

    let scale = plan.config.n as f64 * plan.rho;
    let mut ratios = Vec::new();
    for r in records.iter().filter(|r| r.hypothesis == Hypothesis::H0) {
        let c = r.psi_lower.max(0.0) / scale;
        ratios.push(if c > 0.0 { vartheta(c)? / c } else { 0.0 });
    }
    let runtime_beta_h0 = ratios.iter().sum::<f64>() / ratios.len() as f64;

    let widths: Vec<f64> = records.iter().map(|r| r.psi_width()).collect();
    let total_iterations: usize = records.iter().map(|r| r.iterations).sum();
    let solver = SolverStats {
        solves: records.len(),
        converged: records.iter().filter(|r| r.converged).count(),
        total_iterations,
        mean_iterations: total_iterations as f64 / records.len() as f64,
        max_width: widths.iter().copied().fold(0.0, f64::max),
        mean_width: widths.iter().sum::<f64>() / widths.len() as f64,
    };
    Ok(Summary {
        statistics,
        psi_rejection,
        runtime_beta_h0,
        solver,
    })
}

/// Document written to `summary.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub generator: String,
    pub config: ExperimentConfig,
    pub plan: DetectionPlan,
    pub summary: Summary,
}

fn provenance_lines<W: Write>(w: &mut W, cfg: &ExperimentConfig, what: &str) -> Result<()> {
    writeln!(w, "# spca experiment: {what}")?;
    writeln!(w, "# {}", cfg.provenance())?;
    Ok(())
}

impl ExperimentReport {
    /// Statistic names in output order.
    pub fn statistic_names(&self) -> Vec<String> {
        BUILTIN_STATISTICS
            .iter()
            .map(|s| s.to_string())
            .chain(self.plugin_names.iter().cloned())
            .collect()
    }

    /// One file per statistic with rows `trial,hypothesis,value`.
    pub fn write_statistic_csv<W: Write>(&self, mut w: W, name: &str) -> Result<()> {
        provenance_lines(&mut w, &self.config, &format!("statistic {name}"))?;
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["trial", "hypothesis", "value"])?;
        for r in &self.records {
            let v = r
                .get(name)
                .ok_or_else(|| Error::invalid(format!("unknown statistic {name}")))?;
            wtr.write_record([r.trial.to_string(), r.hypothesis.label().to_string(), format_float(v)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_records_csv<W: Write>(&self, mut w: W) -> Result<()> {
        provenance_lines(&mut w, &self.config, "per-trial records")?;
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = [
            "trial",
            "hypothesis",
            "seed",
            "psi",
            "psi_lower",
            "psi_upper",
            "converged",
            "iterations",
            "lambda_max",
            "diag_max",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.plugin_names.iter().cloned());
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.trial.to_string(),
                r.hypothesis.label().to_string(),
                r.seed.to_string(),
                format_float(r.psi),
                format_float(r.psi_lower),
                format_float(r.psi_upper),
                r.converged.to_string(),
                r.iterations.to_string(),
                format_float(r.lambda_max),
                format_float(r.diag_max),
            ];
            row.extend(r.plugins.iter().map(|(_, v)| format_float(*v)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn summary_document(&self) -> SummaryDocument {
        SummaryDocument {
            generator: GENERATOR_ID.to_string(),
            config: self.config.clone(),
            plan: self.plan.clone(),
            summary: self.summary.clone(),
        }
    }

    pub fn summary_toml(&self) -> Result<String> {
        let body = toml::to_string(&self.summary_document()).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(format!(
            "# spca experiment summary\n# {}\n{body}",
            self.config.provenance()
        ))
    }

    /// Writes `<statistic>.csv` for every statistic, `records.csv` and
    /// `summary.toml` into `dir`, creating it if needed.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for name in self.statistic_names() {
            let path = dir.join(format!("{name}.csv"));
            self.write_statistic_csv(BufWriter::new(File::create(&path)?), &name)?;
            written.push(path);
        }
        let path = dir.join("records.csv");
        self.write_records_csv(BufWriter::new(File::create(&path)?))?;
        written.push(path);
        let path = dir.join("summary.toml");
        std::fs::write(&path, self.summary_toml()?)?;
        written.push(path);
        Ok(written)
    }
}

/// Parses `records.csv` back into rows.
pub fn read_records_csv<R: Read>(reader: R) -> Result<(Vec<StatisticRecord>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header = rdr.headers()?.clone();
    const FIXED: usize = 10;
    if header.len() < FIXED {
        return Err(Error::Parse("records header is too short".into()));
    }
    let plugin_names: Vec<String> = header.iter().skip(FIXED).map(|s| s.to_string()).collect();
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|e| Error::Parse(format!("{s:?}: {e}"))) };
    let int = |s: &str| -> Result<u64> { s.parse().map_err(|e| Error::Parse(format!("{s:?}: {e}"))) };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let hypothesis = match &rec[1] {
            "h0" => Hypothesis::H0,
            "h1" => Hypothesis::H1,
            other => return Err(Error::Parse(format!("unknown hypothesis {other:?}"))),
        };
        let plugins = plugin_names
            .iter()
            .enumerate()
            .map(|(i, name)| Ok((name.clone(), num(&rec[FIXED + i])?)))
            .collect::<Result<Vec<_>>>()?;
        out.push(StatisticRecord {
            trial: int(&rec[0])? as usize,
            hypothesis,
            seed: int(&rec[2])?,
            psi: num(&rec[3])?,
            psi_lower: num(&rec[4])?,
            psi_upper: num(&rec[5])?,
            converged: rec[6]
                .parse()
                .map_err(|e| Error::Parse(format!("{:?}: {e}", &rec[6])))?,
            iterations: int(&rec[7])? as usize,
            lambda_max: num(&rec[8])?,
            diag_max: num(&rec[9])?,
            plugins,
        });
    }
    Ok((out, plugin_names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CovarianceMatrix;

    struct Trace;

    impl Statistic for Trace {
        fn name(&self) -> &str {
            "trace"
        }

        fn evaluate(&self, sigma: &CovarianceMatrix) -> Result<f64> {
            Ok(sigma.trace())
        }
    }

    fn small_config(theta: f64, trials: usize) -> ExperimentConfig {
        let model = ModelConfig::new(12, 20, 3, theta, 0.1, 99).unwrap();
        let mut cfg = ExperimentConfig::new(model, trials, RhoMode::Small);
        cfg.tol = 0.05;
        cfg
    }

    #[test]
    fn auc_and_quantile() {
        assert_eq!(auc(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert_eq!(auc(&[1.0], &[1.0]), 0.5);
        assert_eq!(auc(&[3.0, 4.0], &[1.0, 2.0]), 0.0);
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.99), 4.0);
    }

    #[test]
    fn rows_ordered_and_reproducible() {
        let cfg = small_config(2.0, 3);
        let plugins: Vec<Box<dyn Statistic>> = vec![Box::new(Trace)];
        let a = run_experiment(&cfg, &plugins).unwrap();
        assert_eq!(a.records.len(), 6);
        for (i, r) in a.records.iter().enumerate() {
            assert_eq!(r.trial, i / 2);
            assert_eq!(r.hypothesis, if i % 2 == 0 { Hypothesis::H0 } else { Hypothesis::H1 });
            assert!(r.psi_lower <= r.psi_upper + 1e-8);
            assert_eq!(r.plugins[0].0, "trace");
        }
        let b = run_experiment(&cfg, &plugins).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.summary_toml().unwrap(), b.summary_toml().unwrap());
    }

    #[test]
    fn zero_spike_gives_indistinguishable_hypotheses() {
        let cfg = small_config(0.0, 20);
        let report = run_experiment(&cfg, &[]).unwrap();
        for s in &report.summary.statistics {
            assert!(s.separation.abs() <= 3.0, "{s:?}");
        }
    }

    #[test]
    fn records_round_trip_and_summary_recomputes() {
        let cfg = small_config(3.0, 3);
        let plugins: Vec<Box<dyn Statistic>> = vec![Box::new(Trace)];
        let report = run_experiment(&cfg, &plugins).unwrap();
        let mut buf = Vec::new();
        report.write_records_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# spca experiment"));
        assert!(text.contains("seed=99"));
        let (rows, names) = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, report.records);
        assert_eq!(names, vec!["trace".to_string()]);
        let again = summarize(&rows, &names, &report.plan).unwrap();
        assert_eq!(again, report.summary);
    }

    #[test]
    fn summary_document_parses() {
        let report = run_experiment(&small_config(1.0, 2), &[]).unwrap();
        let text = report.summary_toml().unwrap();
        let doc: SummaryDocument = toml::from_str(&text).unwrap();
        assert_eq!(doc.config, report.config);
        assert_eq!(doc.plan, report.plan);
    }

    #[test]
    fn rejects_bad_plugins_and_config() {
        struct Named(&'static str);
        impl Statistic for Named {
            fn name(&self) -> &str {
                self.0
            }
            fn evaluate(&self, _: &CovarianceMatrix) -> Result<f64> {
                Ok(0.0)
            }
        }
        let cfg = small_config(1.0, 1);
        let clash: Vec<Box<dyn Statistic>> = vec![Box::new(Named("psi"))];
        assert!(run_experiment(&cfg, &clash).is_err());
        let dup: Vec<Box<dyn Statistic>> = vec![Box::new(Named("a")), Box::new(Named("a"))];
        assert!(run_experiment(&cfg, &dup).is_err());
        let mut zero = cfg.clone();
        zero.trials = 0;
        assert!(run_experiment(&zero, &[]).is_err());
    }
}
