use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::anova::{rm_anova, AnovaEffect, ScoreMatrix};
use super::metrics::{metrics, pr_auc, Confusion, Metrics};
use super::paired::{holm, paired_tests, PairedTestResult};
use super::StatsError;

/// One per-seed score of a (model, encoding) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub model: String,
    pub encoding: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// One scored sample from a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub score: f64,
    pub label: u8,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = if x.len() < 2 {
        0.0
    } else {
        (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (m, sd)
}

fn first_seen<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in it {
        if seen.insert(s) {
            out.push(s.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: String,
    pub encoding: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub metric: String,
    pub cells: Vec<CellSummary>,
    pub anova: Vec<AnovaEffect>,
}

/// Mean and spread per (model, encoding) plus the two-way repeated-measures
/// ANOVA over seeds, for one metric. Models and encodings keep the order in
/// which they first appear.
pub fn stage1_report(records: &[ScoreRecord], metric: &str, greenhouse_geisser: bool) -> Result<Stage1Report, StatsError> {
    let rows: Vec<&ScoreRecord> = records.iter().filter(|r| r.metric == metric).collect();
    if rows.is_empty() {
        return Err(StatsError::NoScores(metric.to_string()));
    }
    let models = first_seen(rows.iter().map(|r| r.model.as_str()));
    let encodings = first_seen(rows.iter().map(|r| r.encoding.as_str()));
    let seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect::<BTreeSet<_>>().into_iter().collect();
    let mut matrix = ScoreMatrix::new(seeds.len(), models.len(), encodings.len());
    for r in &rows {
        let s = seeds.binary_search(&r.seed).expect("collected above");
        let m = models.iter().position(|x| *x == r.model).expect("collected above");
        let e = encodings.iter().position(|x| *x == r.encoding).expect("collected above");
        if matrix.get(s, m, e).is_some() {
            return Err(StatsError::DuplicateScore {
                model: r.model.clone(),
                encoding: r.encoding.clone(),
                seed: r.seed,
            });
        }
        matrix.set(s, m, e, r.value);
    }
    let mut cells = Vec::new();
    for (m, model) in models.iter().enumerate() {
        for (e, encoding) in encodings.iter().enumerate() {
            let vals: Vec<f64> = (0..seeds.len()).filter_map(|s| matrix.get(s, m, e)).collect();
            if vals.len() != seeds.len() {
                let s = (0..seeds.len()).find(|s| matrix.get(*s, m, e).is_none()).expect("some missing");
                return Err(StatsError::MissingScore {
                    model: model.clone(),
                    encoding: encoding.clone(),
                    seed: seeds[s],
                });
            }
            let (mean, sd) = mean_sd(&vals);
            cells.push(CellSummary {
                model: model.clone(),
                encoding: encoding.clone(),
                n: vals.len(),
                mean,
                sd,
            });
        }
    }
    let anova = rm_anova(&matrix, greenhouse_geisser)?;
    Ok(Stage1Report {
        metric: metric.to_string(),
        cells,
        anova,
    })
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<.001".to_string()
    } else {
        format!("{p:.4}")
    }
}

impl Stage1Report {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let models = first_seen(self.cells.iter().map(|c| c.model.as_str()));
        let encodings = first_seen(self.cells.iter().map(|c| c.encoding.as_str()));
        let enc_w = encodings.iter().map(|e| e.len()).max().unwrap_or(0).max(8);
        let _ = writeln!(out, "{} (mean ± sd over seeds)", self.metric);
        let _ = write!(out, "{:<enc_w$}", "encoding");
        for m in &models {
            let _ = write!(out, "  {m:>17}");
        }
        out.push('\n');
        for e in &encodings {
            let _ = write!(out, "{e:<enc_w$}");
            for m in &models {
                let c = self
                    .cells
                    .iter()
                    .find(|c| &c.model == m && &c.encoding == e)
                    .expect("complete table");
                let _ = write!(out, "  {:>17}", format!("{:.4} ± {:.4}", c.mean, c.sd));
            }
            out.push('\n');
        }
        out.push('\n');
        let gg = self.anova.iter().any(|a| a.gg_epsilon.is_some());
        let _ = write!(
            out,
            "{:<16}{:>9}{:>7}{:>7}{:>9}{:>8}{:>7}",
            "effect", "F", "df1", "df2", "p", "eta2_p", "f"
        );
        if gg {
            let _ = write!(out, "{:>8}{:>9}", "eps_GG", "p_GG");
        }
        out.push('\n');
        for a in &self.anova {
            let _ = write!(
                out,
                "{:<16}{:>9.2}{:>7}{:>7}{:>9}{:>8.2}{:>7.2}",
                a.name,
                a.f,
                a.df_num,
                a.df_den,
                fmt_p(a.p),
                a.partial_eta_sq,
                a.cohens_f
            );
            if let (Some(e), Some(p)) = (a.gg_epsilon, a.p_gg) {
                let _ = write!(out, "{:>8.3}{:>9}", e, fmt_p(p));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Row {
    pub name: String,
    pub orig_mean: f64,
    pub orig_sd: f64,
    pub pert_mean: f64,
    pub pert_sd: f64,
    /// 100 · (pert − orig) / orig; absent when the original mean is zero.
    pub percent_change: Option<f64>,
    pub test: PairedTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    pub rows: Vec<Stage2Row>,
}

pub fn percent_change(orig: f64, pert: f64) -> Option<f64> {
    (orig != 0.0).then(|| 100.0 * (pert - orig) / orig)
}

/// Paired tests for each (name, original, perturbed) series, with Holm
/// adjustment across the whole family.
pub fn stage2_report(
    pairs: &[(String, Vec<f64>, Vec<f64>)],
    resamples: usize,
    seed: u64,
) -> Result<Stage2Report, StatsError> {
    if let Some(first) = pairs.first() {
        if let Some((_, o, p)) = pairs.iter().find(|(_, o, p)| o.len() != first.1.len() || p.len() != o.len()) {
            return Err(StatsError::LengthMismatch(o.len(), p.len().min(first.1.len())));
        }
    }
    let mut rows = Vec::with_capacity(pairs.len());
    for (name, orig, pert) in pairs {
        let test = paired_tests(orig, pert, resamples, seed)?;
        let (om, osd) = mean_sd(orig);
        let (pm, psd) = mean_sd(pert);
        rows.push(Stage2Row {
            name: name.clone(),
            orig_mean: om,
            orig_sd: osd,
            pert_mean: pm,
            pert_sd: psd,
            percent_change: percent_change(om, pm),
            test,
        });
    }
    let t_adj = holm(&rows.iter().map(|r| r.test.p_one_sided).collect::<Vec<_>>())?;
    let w_adj = holm(&rows.iter().map(|r| r.test.wilcoxon_p).collect::<Vec<_>>())?;
    for ((row, t), w) in rows.iter_mut().zip(t_adj).zip(w_adj) {
        row.test.p_holm = Some(t);
        row.test.wilcoxon_p_holm = Some(w);
    }
    Ok(Stage2Report { rows })
}

/// Collects per-seed series for `orig:pert` encoding pairs of one model.
pub fn stage2_pairs(
    records: &[ScoreRecord],
    model: Option<&str>,
    metric: &str,
    pairs: &[(String, String)],
) -> Result<Vec<(String, Vec<f64>, Vec<f64>)>, StatsError> {
    let series = |enc: &str| -> BTreeMap<u64, f64> {
        records
            .iter()
            .filter(|r| r.metric == metric && r.encoding == enc && model.is_none_or(|m| r.model == m))
            .map(|r| (r.seed, r.value))
            .collect()
    };
    pairs
        .iter()
        .map(|(o, p)| {
            let (so, sp) = (series(o), series(p));
            if so.is_empty() {
                return Err(StatsError::NoScores(format!("{metric} for {o}")));
            }
            if so.keys().ne(sp.keys()) {
                return Err(StatsError::SeedMismatch {
                    orig: o.clone(),
                    pert: p.clone(),
                });
            }
            Ok((p.clone(), so.into_values().collect(), sp.into_values().collect()))
        })
        .collect()
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

impl Stage2Report {
    pub fn render(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(9);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>17}  {:>17}  {:>8}  {:>8}  {:>7}  {:>7}  {:>7}  {:>6}  {:>7}  {:>7}  {:>6}  {:>19}",
            "condition", "orig", "pert", "change", "delta", "t", "p", "p_holm", "W+", "p_W", "p_Wholm", "d_z", "CI95(delta)"
        );
        for r in &self.rows {
            let t = &r.test;
            let change = r.percent_change.map_or_else(|| "n/a".to_string(), |c| format!("{c:+.2}%"));
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>17}  {:>17}  {:>8}  {:>8.4}  {:>7.3}  {:>7}  {:>7}  {:>6.1}  {:>7}  {:>7}  {:>6}  {:>19}",
                r.name,
                format!("{:.4} ± {:.4}", r.orig_mean, r.orig_sd),
                format!("{:.4} ± {:.4}", r.pert_mean, r.pert_sd),
                change,
                t.mean_delta,
                t.t,
                fmt_p(t.p_one_sided),
                fmt_p(t.p_holm.unwrap_or(f64::NAN)),
                t.wilcoxon_stat,
                fmt_p(t.wilcoxon_p),
                fmt_p(t.wilcoxon_p_holm.unwrap_or(f64::NAN)),
                fmt_opt(t.cohens_dz, 2),
                format!("[{:.4}, {:.4}]", t.ci95.0, t.ci95.1),
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub n: usize,
    pub threshold: f64,
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub pr_auc: f64,
}

pub fn prediction_report(preds: &[PredictionRecord], threshold: f64) -> Result<PredictionReport, StatsError> {
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
    let confusion = Confusion::from_scores(&scores, &labels, threshold)?;
    Ok(PredictionReport {
        n: preds.len(),
        threshold,
        confusion,
        metrics: metrics(&confusion),
        pr_auc: pr_auc(&scores, &labels)?,
    })
}

impl PredictionReport {
    pub fn render(&self) -> String {
        let m = &self.metrics;
        let flag = |d: bool| if d { " (undefined, reported as 0)" } else { "" };
        format!(
            "n          {}\nthreshold  {}\nTP {}  TN {}  FP {}  FN {}\naccuracy   {:.4}{}\nprecision  {:.4}{}\nrecall     {:.4}{}\nf1         {:.4}{}\npr_auc     {:.4}\n",
            self.n,
            self.threshold,
            self.confusion.tp,
            self.confusion.tn,
            self.confusion.fp,
            self.confusion.fn_,
            m.accuracy.value,
            flag(m.accuracy.degenerate),
            m.precision.value,
            flag(m.precision.degenerate),
            m.recall.value,
            flag(m.recall.degenerate),
            m.f1.value,
            flag(m.f1.degenerate),
            self.pr_auc
        )
    }
}
