use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::StatsError;

/// Scores indexed by (subject, model, encoding); subjects are seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub subjects: usize,
    pub models: usize,
    pub encodings: usize,
    /// Row-major over (subject, model, encoding); `None` marks a missing cell.
    pub values: Vec<Option<f64>>,
}

impl ScoreMatrix {
    pub fn new(subjects: usize, models: usize, encodings: usize) -> Self {
        Self {
            subjects,
            models,
            encodings,
            values: vec![None; subjects * models * encodings],
        }
    }

    pub fn from_fn(s: usize, m: usize, e: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut out = Self::new(s, m, e);
        for i in 0..s {
            for j in 0..m {
                for k in 0..e {
                    out.set(i, j, k, f(i, j, k));
                }
            }
        }
        out
    }

    fn index(&self, s: usize, m: usize, e: usize) -> usize {
        (s * self.models + m) * self.encodings + e
    }

    pub fn set(&mut self, s: usize, m: usize, e: usize, v: f64) {
        let i = self.index(s, m, e);
        self.values[i] = Some(v);
    }

    pub fn get(&self, s: usize, m: usize, e: usize) -> Option<f64> {
        self.values[self.index(s, m, e)]
    }

    fn complete(&self) -> Result<Vec<f64>, StatsError> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Some(x) if x.is_finite() => Ok(*x),
                Some(_) => Err(StatsError::NonFinite),
                None => {
                    let e = i % self.encodings;
                    let m = (i / self.encodings) % self.models;
                    let s = i / (self.encodings * self.models);
                    Err(StatsError::MissingCell { subject: s, model: m, encoding: e })
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaEffect {
    pub name: String,
    pub f: f64,
    pub df_num: f64,
    pub df_den: f64,
    pub p: f64,
    pub partial_eta_sq: f64,
    pub cohens_f: f64,
    pub ss_effect: f64,
    pub ss_error: f64,
    /// Greenhouse-Geisser epsilon and corrected p, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gg_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_gg: Option<f64>,
}

/// Partial eta squared from an F statistic and its degrees of freedom.
pub fn partial_eta_sq(f: f64, df_num: f64, df_den: f64) -> f64 {
    if f == 0.0 {
        return 0.0;
    }
    if f.is_infinite() {
        return 1.0;
    }
    f * df_num / (f * df_num + df_den)
}

pub fn cohens_f(partial_eta_sq: f64) -> f64 {
    (partial_eta_sq / (1.0 - partial_eta_sq)).sqrt()
}

/// Upper tail of F(df_num, df_den) at `f`.
pub fn f_sf(f: f64, df_num: f64, df_den: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    FisherSnedecor::new(df_num, df_den)
        .expect("positive degrees of freedom")
        .sf(f)
}

struct Cells {
    m: usize,
    e: usize,
    x: Vec<f64>,
}

impl Cells {
    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.x[(i * self.m + j) * self.e + k]
    }
}

/// Orthonormal Helmert contrasts for `k` levels, as `k - 1` columns of
/// length `k`.
fn helmert(k: usize) -> Vec<Vec<f64>> {
    (1..k)
        .map(|j| {
            let norm = ((j * (j + 1)) as f64).sqrt();
            (0..k)
                .map(|i| match i.cmp(&j) {
                    std::cmp::Ordering::Less => 1.0 / norm,
                    std::cmp::Ordering::Equal => -(j as f64) / norm,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Greenhouse-Geisser epsilon from per-subject contrast scores.
fn gg_epsilon(scores: &[Vec<f64>]) -> f64 {
    let n = scores.len();
    let d = scores[0].len();
    if d <= 1 {
        return 1.0;
    }
    let mean: Vec<f64> = (0..d)
        .map(|c| scores.iter().map(|r| r[c]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in scores {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n as f64 - 1.0);
            }
        }
    }
    let trace: f64 = (0..d).map(|a| cov[a][a]).sum();
    let trace_sq: f64 = (0..d)
        .flat_map(|a| (0..d).map(move |b| (a, b)))
        .map(|(a, b)| cov[a][b] * cov[b][a])
        .sum();
    if trace_sq == 0.0 {
        return 1.0;
    }
    (trace * trace / (d as f64 * trace_sq)).clamp(1.0 / d as f64, 1.0)
}

/// Two-way repeated-measures ANOVA with subjects as blocks. Each effect is
/// tested against its own subject-by-effect error term. Returns the model,
/// encoding and interaction effects in that order.
pub fn rm_anova(matrix: &ScoreMatrix, greenhouse_geisser: bool) -> Result<Vec<AnovaEffect>, StatsError> {
    let (s, m, e) = (matrix.subjects, matrix.models, matrix.encodings);
    if s < 2 {
        return Err(StatsError::TooFewSubjects(s));
    }
    if m < 2 || e < 2 {
        return Err(StatsError::TooFewLevels);
    }
    let c = Cells { m, e, x: matrix.complete()? };
    let (sf, mf, ef) = (s as f64, m as f64, e as f64);
    let grand = c.x.iter().sum::<f64>() / c.x.len() as f64;

    let mean_s: Vec<f64> = (0..s)
        .map(|i| (0..m).flat_map(|j| (0..e).map(move |k| (j, k))).map(|(j, k)| c.at(i, j, k)).sum::<f64>() / (mf * ef))
        .collect();
    let mean_m: Vec<f64> = (0..m)
        .map(|j| (0..s).flat_map(|i| (0..e).map(move |k| (i, k))).map(|(i, k)| c.at(i, j, k)).sum::<f64>() / (sf * ef))
        .collect();
    let mean_e: Vec<f64> = (0..e)
        .map(|k| (0..s).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| c.at(i, j, k)).sum::<f64>() / (sf * mf))
        .collect();
    let mean_sm: Vec<Vec<f64>> = (0..s)
        .map(|i| (0..m).map(|j| (0..e).map(|k| c.at(i, j, k)).sum::<f64>() / ef).collect())
        .collect();
    let mean_se: Vec<Vec<f64>> = (0..s)
        .map(|i| (0..e).map(|k| (0..m).map(|j| c.at(i, j, k)).sum::<f64>() / mf).collect())
        .collect();
    let mean_me: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..e).map(|k| (0..s).map(|i| c.at(i, j, k)).sum::<f64>() / sf).collect())
        .collect();

    let sq = |x: f64| x * x;
    let ss_total: f64 = c.x.iter().map(|v| sq(v - grand)).sum();
    let ss_m = sf * ef * mean_m.iter().map(|v| sq(v - grand)).sum::<f64>();
    let ss_e = sf * mf * mean_e.iter().map(|v| sq(v - grand)).sum::<f64>();
    let mut ss_ms = 0.0;
    let mut ss_es = 0.0;
    let mut ss_me = 0.0;
    let mut ss_mes = 0.0;
    for i in 0..s {
        for j in 0..m {
            ss_ms += ef * sq(mean_sm[i][j] - mean_m[j] - mean_s[i] + grand);
        }
        for k in 0..e {
            ss_es += mf * sq(mean_se[i][k] - mean_e[k] - mean_s[i] + grand);
        }
    }
    for j in 0..m {
        for k in 0..e {
            ss_me += sf * sq(mean_me[j][k] - mean_m[j] - mean_e[k] + grand);
            for i in 0..s {
                ss_mes += sq(c.at(i, j, k) - mean_sm[i][j] - mean_se[i][k] - mean_me[j][k]
                    + mean_m[j]
                    + mean_e[k]
                    + mean_s[i]
                    - grand);
            }
        }
    }

    // round-off residue on exactly additive or constant data
    let raw: f64 = c.x.iter().map(|v| v * v).sum();
    let floor = 1e-12 * ss_total + 1e-20 * raw;
    let clean = |x: f64| if x <= floor { 0.0 } else { x };

    let eps = greenhouse_geisser.then(|| {
        let cm = helmert(m);
        let ce = helmert(e);
        let scores_m: Vec<Vec<f64>> = (0..s)
            .map(|i| cm.iter().map(|col| (0..m).map(|j| col[j] * mean_sm[i][j]).sum()).collect())
            .collect();
        let scores_e: Vec<Vec<f64>> = (0..s)
            .map(|i| ce.iter().map(|col| (0..e).map(|k| col[k] * mean_se[i][k]).sum()).collect())
            .collect();
        let scores_me: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                cm.iter()
                    .flat_map(|a| ce.iter().map(move |b| (a, b)))
                    .map(|(a, b)| {
                        (0..m)
                            .flat_map(|j| (0..e).map(move |k| (j, k)))
                            .map(|(j, k)| a[j] * b[k] * c.at(i, j, k))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        [gg_epsilon(&scores_m), gg_epsilon(&scores_e), gg_epsilon(&scores_me)]
    });

    let effect = |idx: usize, name: &str, ss_eff: f64, ss_err: f64, df1: f64, df2: f64| {
        let (ss_eff, ss_err) = (clean(ss_eff), clean(ss_err));
        let f = if ss_eff == 0.0 {
            0.0
        } else if ss_err == 0.0 {
            f64::INFINITY
        } else {
            (ss_eff / df1) / (ss_err / df2)
        };
        let pes = partial_eta_sq(f, df1, df2);
        let (gg, p_gg) = match eps {
            Some(ep) => (Some(ep[idx]), Some(f_sf(f, df1 * ep[idx], df2 * ep[idx]))),
            None => (None, None),
        };
        AnovaEffect {
            name: name.to_string(),
            f,
            df_num: df1,
            df_den: df2,
            p: f_sf(f, df1, df2),
            partial_eta_sq: pes,
            cohens_f: cohens_f(pes),
            ss_effect: ss_eff,
            ss_error: ss_err,
            gg_epsilon: gg,
            p_gg,
        }
    };
    let (dm, de, ds) = (mf - 1.0, ef - 1.0, sf - 1.0);
    Ok(vec![
        effect(0, "model", ss_m, ss_ms, dm, dm * ds),
        effect(1, "encoding", ss_e, ss_es, de, de * ds),
        effect(2, "model:encoding", ss_me, ss_mes, dm * de, dm * de * ds),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn df_shape() {
        let m = ScoreMatrix::from_fn(10, 4, 5, |i, j, k| ((i * 31 + j * 7 + k * 3) % 11) as f64);
        let r = rm_anova(&m, false).unwrap();
        let dfs: Vec<_> = r.iter().map(|e| (e.df_num, e.df_den)).collect();
        assert_eq!(dfs, [(3.0, 27.0), (4.0, 36.0), (12.0, 108.0)]);
    }

    #[test]
    fn constant_matrix_has_no_effects() {
        let m = ScoreMatrix::from_fn(5, 3, 4, |_, _, _| 0.42);
        for e in rm_anova(&m, true).unwrap() {
            assert_eq!(e.f, 0.0);
            assert_eq!(e.ss_effect, 0.0);
            assert_eq!(e.p, 1.0);
        }
    }

    #[test]
    fn additive_data_has_zero_interaction() {
        let m = ScoreMatrix::from_fn(10, 4, 5, |i, j, k| 0.3 + 0.01 * i as f64 + 0.02 * j as f64 + 0.05 * k as f64);
        let r = rm_anova(&m, false).unwrap();
        assert_eq!(r[2].f, 0.0);
    }

    #[test]
    fn missing_and_small_inputs() {
        let mut m = ScoreMatrix::from_fn(3, 2, 2, |_, _, _| 1.0);
        m.values[5] = None;
        assert!(matches!(
            rm_anova(&m, false),
            Err(StatsError::MissingCell { subject: 1, model: 0, encoding: 1 })
        ));
        let m = ScoreMatrix::from_fn(1, 2, 2, |_, _, _| 1.0);
        assert!(matches!(rm_anova(&m, false), Err(StatsError::TooFewSubjects(1))));
    }

    #[test]
    fn helmert_is_orthonormal() {
        let h = helmert(5);
        for a in &h {
            assert!((a.iter().sum::<f64>()).abs() < 1e-12);
            for b in &h {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gg_epsilon_bounds_and_correction() {
        let m = ScoreMatrix::from_fn(8, 3, 4, |i, j, k| {
            ((i * 17 + j * 5 + k * 13 + i * j * k) % 23) as f64 / 23.0
        });
        let r = rm_anova(&m, true).unwrap();
        for (e, d) in r.iter().zip([2.0, 3.0, 6.0]) {
            let eps = e.gg_epsilon.unwrap();
            assert!(eps >= 1.0 / d - 1e-12 && eps <= 1.0);
            let want = f_sf(e.f, e.df_num * eps, e.df_den * eps);
            assert_eq!(e.p_gg.unwrap(), want);
        }
    }

    #[test]
    fn effect_size_identities() {
        let pes = partial_eta_sq(9.96, 3.0, 27.0);
        assert!((pes - 0.525).abs() < 0.001);
        assert!((cohens_f(pes) - 1.05).abs() < 0.01);
    }
}
