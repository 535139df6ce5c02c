//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Optional inputs:
//! - `JITCORPUS_FULL_CORPUS`: a full corpus file, to check the share of
//!   functions above 512 tokens and the released class weight.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use jitcorpus::dataset::{self, class_weight, ClassWeight, DatasetSample, SplitRatios};
use jitcorpus::encoder::{
    self, Encoder, Encoding, Tokenizer, ADD, ADDED_HEADER, AFTER, BEFORE, CHG, DEL, DELETED_HEADER, HUNK,
};
use jitcorpus::extract::diff_lines;
use jitcorpus::miner::{defective_from_scan, Miner, MinerConfig, MiningTally, Rejection};
use jitcorpus::perturber::{self, PerturbationConfig, PerturbationKind, Phase};
use jitcorpus::screen::{history_screen, sample_clean_pool, ScreenConfig, ScreenReason};
use jitcorpus::stats::{
    bootstrap_mean_ci, cohens_f, f_sf, holm, partial_eta_sq, pr_auc, rm_anova, stage2_report, wilcoxon_signed_rank,
    ScoreMatrix,
};
use jitcorpus::triage::{triage_all, Decision, StubVoter, Transition, TriageConfig};
use jitcorpus::types::{Candidate, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    // (F, df_num, df_den, eta_p^2, f) from the repeated-measures table
    let rows = [
        ("model", 9.96, 3.0, 27.0, 0.53, 1.05),
        ("encoding", 13.80, 4.0, 36.0, 0.61, 1.24),
        ("model x encoding", 0.82, 12.0, 108.0, 0.08, 0.30),
    ];
    let mut detail = String::new();
    for (name, f, d1, d2, eta_ref, f_ref) in rows {
        let eta = partial_eta_sq(f, d1, d2);
        let cf = cohens_f(eta);
        check!((eta - eta_ref).abs() <= 0.01, "{name}: eta_p^2 {eta:.4} vs {eta_ref}");
        check!((cf - f_ref).abs() <= 0.02, "{name}: f {cf:.4} vs {f_ref}");
        let _ = write!(detail, "{name} eta={eta:.3} f={cf:.3}; ");
    }
    Ok(detail.trim_end_matches("; ").to_string())
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let pairs = [
        ("Spurious CHG markers", 0.3524, 0.3532, "+0.23%"),
        ("Swapped snapshots", 0.3521, 0.3538, "+0.48%"),
        ("Reversed diff tags", 0.3953, 0.3919, "-0.86%"),
        ("Swapped added/deleted blocks", 0.3971, 0.3953, "-0.45%"),
    ];
    // ten seeds per condition whose means are the tabled values
    let spread = [-0.02, 0.01, 0.015, -0.005, 0.0, 0.02, -0.01, -0.015, 0.005, 0.0];
    let series: Vec<(String, Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|(name, o, p, _)| {
            let orig = spread.iter().map(|d| o + d).collect();
            let pert = spread.iter().rev().map(|d| p + d).collect();
            (name.to_string(), orig, pert)
        })
        .collect();
    let report = stage2_report(&series, 2000, 1).map_err(|e| e.to_string())?;
    let text = report.render();
    let mut detail = Vec::new();
    for ((name, o, p, expected), row) in pairs.iter().zip(&report.rows) {
        let line = text
            .lines()
            .find(|l| l.starts_with(name))
            .ok_or_else(|| format!("no rendered row for {name}"))?;
        let shown = line
            .split_whitespace()
            .find(|t| t.ends_with('%'))
            .ok_or_else(|| format!("no percent in `{line}`"))?;
        let value: f64 = shown.trim_end_matches('%').parse().map_err(|_| format!("bad percent `{shown}`"))?;
        let wanted: f64 = expected.trim_end_matches('%').parse().unwrap();
        check!((value - wanted).abs() <= 0.01, "{name}: printed {shown}, expected {expected}");
        let exact = 100.0 * (p - o) / o;
        check!((row.percent_change.unwrap() - exact).abs() < 1e-9, "{name}: change {:?}", row.percent_change);
        detail.push(shown.to_string());
    }
    Ok(format!("printed {}", detail.join(" ")))
}

// ---------------------------------------------------------------- 3

fn sample(id: &str, project: &str, label: Label, time: i64) -> DatasetSample {
    DatasetSample {
        id: id.into(),
        project: project.into(),
        commit_hash: format!("{:0>40}", id),
        label,
        transition: if label == Label::Defective { Transition::DtoD } else { Transition::CtoC },
        function_before: "int f() {\n  return 1;\n}\n".into(),
        function_after: "int f() {\n  return 2;\n}\n".into(),
        deleted_lines_local: vec![2],
        added_lines_local: vec![2],
        commit_message: "m".into(),
        revert_commit_message: None,
        commit_time: time,
        split: None,
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..300 {
        let n = rng.random_range(1..200);
        let mut samples: Vec<_> = (0..n)
            .map(|i| {
                let label = if rng.random_bool(0.3) { Label::Defective } else { Label::Clean };
                sample(&format!("s{case}_{i}"), ["p", "q", "r"][i % 3], label, rng.random_range(0..1000))
            })
            .collect();
        samples[0].label = Label::Defective;
        samples[0].transition = Transition::DtoD;
        let (split, summary) = dataset::temporal_split(samples, SplitRatios::default()).map_err(|e| e.to_string())?;
        let pos = split.iter().filter(|s| s.label == Label::Defective).count() as u64;
        let neg = split.len() as u64 - pos;
        let w = class_weight(&split).map_err(|e| e.to_string())?;
        check!(w.negatives == neg && w.positives == pos, "case {case}: weight {w:?} for {neg}/{pos}");
        let (rn, rp) = w.reduced();
        check!(rn * pos == rp * neg, "case {case}: reduced {rn}/{rp} times {pos} is not {neg}");
        check!(summary.class_weight == Some(w), "case {case}: summary weight differs");
    }
    let released = ClassWeight::new(10_268, 3_164).map_err(|e| e.to_string())?;
    check!(released.render() == "3.245259", "10268/3164 rendered {}", released.render());
    let mut detail = "300 random corpora exact; 10268/3164 -> 3.245259".to_string();
    if let Some(path) = std::env::var_os("JITCORPUS_FULL_CORPUS") {
        let (_, samples) = dataset::load(path.as_ref()).map_err(|e| e.to_string())?;
        let w = class_weight(&samples).map_err(|e| e.to_string())?;
        check!(w.render() == "3.245259", "full corpus weight {} ({}/{})", w.render(), w.negatives, w.positives);
        detail.push_str("; full corpus weight 3.245259");
    }
    Ok(detail)
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = common::build(dir.path());
    let miner = Miner::open(dir.path(), MinerConfig::default()).map_err(|e| e.to_string())?;
    let scan = miner.scan_commits(None).map_err(|e| e.to_string())?;
    check!(scan.commits.len() == 12, "scanned {} commits", scan.commits.len());

    // single-function filter over every commit
    let mut tally = MiningTally::default();
    let mut singles = Vec::new();
    let mut rejected: BTreeMap<&str, Rejection> = BTreeMap::new();
    for c in &scan.commits {
        let r = miner.filter_single_function(c);
        tally.record(&r);
        match r {
            Ok(_) => singles.push(fx.name(&c.hash)),
            Err(e) => {
                rejected.insert(fx.name(&c.hash), e);
            }
        }
    }
    check!(singles == ["K3", "C2", "Y", "C3", "R1", "R2", "K1"], "single-function commits {singles:?}");
    let expected_rejections = BTreeMap::from([
        ("C1", Rejection::RootCommit),
        ("C4", Rejection::FileCount),
        ("K1f", Rejection::FileCount),
        ("R3", Rejection::ExtensionGate),
        ("R4", Rejection::ExtensionGate),
    ]);
    check!(rejected == expected_rejections, "rejections {rejected:?}");
    check!(tally.candidates + tally.rejected() == tally.scanned, "tally {tally:?}");

    // revert links and defective candidates
    let report = defective_from_scan(&miner, &scan);
    let links: Vec<_> = report
        .reverts
        .links
        .iter()
        .map(|l| (fx.name(&l.revert_hash), fx.name(&l.target_hash)))
        .collect();
    check!(links == [("R1", "C2"), ("R2", "C3"), ("R3", "C4")], "links {links:?}");
    check!(report.reverts.ambiguous == 1, "ambiguous {}", report.reverts.ambiguous);
    check!(
        report.target_rejections == BTreeMap::from([(Rejection::FileCount, 1)]),
        "target rejections {:?}",
        report.target_rejections
    );
    let defective: Vec<Candidate> = report.candidates.iter().cloned().map(|c| c.into_candidate("fx")).collect();
    let names: Vec<_> = defective.iter().map(|c| fx.name(&c.modification.commit_hash)).collect();
    check!(names == ["C2", "C3"], "defective candidates {names:?}");
    let fnames: Vec<_> = defective.iter().map(|c| c.modification.function_name.as_str()).collect();
    check!(fnames == ["alpha", "beta"], "defective functions {fnames:?}");

    // clean pool and look-ahead screen
    let cfg = ScreenConfig::default();
    let times: Vec<i64> = defective.iter().map(|c| c.commit_time).collect();
    let pool = sample_clean_pool(&miner, &scan, &times, &cfg);
    let pool_names: Vec<_> = pool.iter().map(|c| fx.name(&c.modification.commit_hash)).collect();
    check!(pool_names == ["K3", "Y", "K1"], "clean pool {pool_names:?}");
    let mut ledger = Vec::new();
    for c in &pool {
        let v = history_screen(&miner, &scan, &c.modification, &cfg);
        let inspected: Vec<_> = v.inspected.iter().map(|h| fx.name(h)).collect();
        ledger.push((fx.name(&v.commit_hash), v.passed, v.reason, v.keyword.clone(), inspected));
    }
    let expected = vec![
        ("K3", true, None, None, vec!["C4"]),
        ("Y", false, Some(ScreenReason::NeverModified), None, vec![]),
        ("K1", false, Some(ScreenReason::KeywordHit), Some("regression".to_string()), vec!["K1f"]),
    ];
    check!(ledger == expected, "screen ledger {ledger:?}");

    // offline triage of the survivors
    let passed: Vec<Candidate> = pool.iter().filter(|c| fx.name(&c.modification.commit_hash) == "K3").cloned().collect();
    let tcfg = TriageConfig::default();
    let d = triage_all(&defective, &StubVoter, None, &tcfg).map_err(|e| e.to_string())?;
    let c = triage_all(&passed, &StubVoter, None, &tcfg).map_err(|e| e.to_string())?;
    let verdicts: Vec<_> = d
        .verdicts
        .iter()
        .chain(&c.verdicts)
        .map(|(cand, v)| (fx.name(&cand.modification.commit_hash), v.decision, v.transition))
        .collect();
    let expected = vec![
        ("C2", Decision::Discard, None),
        ("C3", Decision::Keep, Some(Transition::DtoD)),
        ("K3", Decision::Keep, Some(Transition::CtoC)),
    ];
    check!(verdicts == expected, "triage {verdicts:?}");
    Ok(format!(
        "12 commits, 7 single-function, 3 links + 1 ambiguous ({}), defective C2 C3, clean K3 pass / Y never-modified / K1 keyword",
        fx.ambiguous_prefix
    ))
}

// ---------------------------------------------------------------- 5

const WORDS: &[&str] = &[
    "int", "x", "y", "=", "+", ";", "return", "if", "(", ")", "{", "}", "foo", "bar->baz", "0", "42", "i++", "<", ">=",
    "\"s\"", "&&", "[", "]", "ptr", "/*", "*/", "node.next", "len",
];

fn random_line(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..9);
    let mut parts = vec!["    ".to_string()];
    for _ in 0..n {
        parts.push(WORDS[rng.random_range(0..WORDS.len())].to_string());
    }
    parts.join(" ")
}

/// A random function and an edited version, with local line lists taken
/// from a line diff of the two.
fn random_sample(rng: &mut ChaCha8Rng, id: usize) -> DatasetSample {
    loop {
        let n = rng.random_range(1..40);
        let before: Vec<String> = (0..n).map(|_| random_line(rng)).collect();
        let mut after = Vec::new();
        for line in &before {
            match rng.random_range(0..10) {
                0 => {}
                1 => {
                    after.push(random_line(rng));
                }
                2 => {
                    after.push(line.clone());
                    after.push(random_line(rng));
                }
                _ => after.push(line.clone()),
            }
        }
        if rng.random_bool(0.2) {
            after.push(random_line(rng));
        }
        let (b, a) = (before.join("\n") + "\n", after.join("\n") + "\n");
        let diff = diff_lines(&b, &a);
        if diff.is_empty() {
            continue;
        }
        let mut s = sample(&format!("r{id}"), "p", Label::Clean, id as i64);
        s.function_before = b;
        s.function_after = a;
        s.deleted_lines_local = diff.deleted_lines.clone();
        s.added_lines_local = diff.added_lines.clone();
        return s;
    }
}

fn count(tokens: &[String], t: &str) -> usize {
    tokens.iter().filter(|x| *x == t).count()
}

fn digest(tokens: &[String]) -> Vec<u8> {
    let mut h = Sha256::new();
    for t in tokens {
        h.update(t.as_bytes());
        h.update([0]);
    }
    h.finalize().to_vec()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let wide = Encoder::new(Tokenizer::whitespace_punct(), usize::MAX / 4);
    let mut truncated = 0;
    for i in 0..1000 {
        let s = random_sample(&mut rng, i);
        let budget = rng.random_range(4..400);
        let enc = Encoder::new(Tokenizer::whitespace_punct(), budget);
        let again = Encoder::new(Tokenizer::whitespace_punct(), budget);
        for encoding in Encoding::ALL {
            let out = enc.encode(&s, encoding).map_err(|e| e.to_string())?;
            let full = wide.encode(&s, encoding).map_err(|e| e.to_string())?;
            check!(out.tokens.len() <= budget, "sample {i} {encoding}: {} tokens over budget {budget}", out.tokens.len());
            check!(out.budget_used == out.tokens.len(), "sample {i} {encoding}: budget_used");
            if encoding != Encoding::BeforeAfter {
                check!(
                    out.truncated == (full.tokens.len() > budget),
                    "sample {i} {encoding}: truncated={} but untruncated length {} vs {budget}",
                    out.truncated,
                    full.tokens.len()
                );
                check!(full.tokens.starts_with(&out.tokens), "sample {i} {encoding}: not a head truncation");
            } else if full.tokens.len() > budget {
                check!(out.truncated, "sample {i}: before-after over budget but not flagged");
            }
            truncated += out.truncated as usize;
            let rerun = again.encode(&s, encoding).map_err(|e| e.to_string())?;
            check!(digest(&rerun.tokens) == digest(&out.tokens), "sample {i} {encoding}: rerun differs");
        }
        let (added, deleted) = (s.added_lines_local.len(), s.deleted_lines_local.len());
        let am = wide.encode(&s, Encoding::AfterMarkers).unwrap();
        check!(count(&am.tokens, CHG) == added, "sample {i}: {} CHG for {added} added lines", count(&am.tokens, CHG));
        let dt = wide.encode(&s, Encoding::DiffTags).unwrap();
        check!(
            count(&dt.tokens, ADD) == added && count(&dt.tokens, DEL) == deleted,
            "sample {i}: diff tags ADD {} DEL {} for {added}/{deleted}",
            count(&dt.tokens, ADD),
            count(&dt.tokens, DEL)
        );
        let ba = enc.encode(&s, Encoding::BeforeAfter).unwrap();
        let before_side = match (ba.tokens.iter().position(|t| t == BEFORE), ba.tokens.iter().position(|t| t == AFTER)) {
            (Some(b), Some(a)) => a - b - 1,
            (Some(b), None) => ba.tokens.len() - b - 1,
            _ => 0,
        };
        let cap = budget.saturating_sub(2) / 2;
        check!(before_side <= cap, "sample {i}: before side {before_side} over cap {cap} at budget {budget}");
        check!(enc.before_cap() == cap, "before_cap {} vs {cap}", enc.before_cap());
    }
    Ok(format!("1000 samples x 5 encodings, {truncated} truncated outputs"))
}

// ---------------------------------------------------------------- 6

fn multiset(tokens: &[String]) -> BTreeMap<&str, usize> {
    let headers: HashSet<&str> = [BEFORE, AFTER, ADDED_HEADER, DELETED_HEADER].into();
    let mut m = BTreeMap::new();
    for t in tokens.iter().filter(|t| !headers.contains(t.as_str())) {
        *m.entry(t.as_str()).or_default() += 1;
    }
    m
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let wide = Encoder::new(Tokenizer::whitespace_punct(), usize::MAX / 4);
    let (mut fired_snap, mut fired_blocks) = (0, 0);
    for i in 0..500 {
        let s = random_sample(&mut rng, i);
        let seed = rng.random::<u64>();
        let budget = rng.random_range(8..300);
        let enc = Encoder::new(Tokenizer::whitespace_punct(), budget);

        let dt = enc.encode(&s, Encoding::DiffTags).unwrap();
        let rev = perturber::reverse_diff_tags(&dt).map_err(|e| e.to_string())?;
        check!(perturber::reverse_diff_tags(&rev).unwrap().tokens == dt.tokens, "sample {i}: reversal not an involution");
        check!(count(&rev.tokens, ADD) == count(&dt.tokens, DEL), "sample {i}: reversal counts");
        check!(count(&rev.tokens, HUNK) == count(&dt.tokens, HUNK), "sample {i}: hunk count");

        let twice = perturber::swapped_sample(&perturber::swapped_sample(&s));
        check!(twice == s, "sample {i}: double swap is not the identity");

        let always = |k| PerturbationConfig::new(k, seed).with_probability(1.0);
        let (snap, applied) = perturber::swap_snapshots(&wide, &s, &always(PerturbationKind::SwappedSnapshots));
        check!(applied, "sample {i}: p=1 swap did not fire");
        let base = wide.encode(&s, Encoding::BeforeAfter).unwrap();
        check!(multiset(&snap.tokens) == multiset(&base.tokens), "sample {i}: snapshot swap changed the token multiset");
        let (blocks, _) = perturber::swap_blocks(&wide, &s, &always(PerturbationKind::SwappedBlocks));
        let base = wide.encode(&s, Encoding::AddedDeleted).unwrap();
        check!(multiset(&blocks.tokens) == multiset(&base.tokens), "sample {i}: block swap changed the token multiset");

        let spur = perturber::spurious_markers(&wide, &s, seed);
        check!(
            count(&spur.tokens, CHG) == s.added_lines_local.len(),
            "sample {i}: {} spurious markers for {} added lines",
            count(&spur.tokens, CHG),
            s.added_lines_local.len()
        );

        for kind in PerturbationKind::ALL {
            let cfg = PerturbationConfig::new(kind, seed);
            for phase in [Phase::Train, Phase::Test] {
                let a = perturber::perturb(&enc, &s, &cfg, phase).map_err(|e| e.to_string())?;
                let b = perturber::perturb(&enc, &s, &cfg, phase).unwrap();
                check!(a == b, "sample {i} {kind} {phase}: seed replay differs");
                check!(a.tokens.len() <= budget, "sample {i} {kind} {phase}: over budget");
                let stamp = a.perturbation.as_ref().ok_or("missing stamp")?;
                check!(stamp.seed == seed && stamp.kind == kind.name(), "sample {i}: stamp {stamp:?}");
                let test_only = matches!(kind, PerturbationKind::SwappedSnapshots | PerturbationKind::ReversedDiffTags);
                if phase == Phase::Train && test_only {
                    check!(!stamp.applied, "sample {i}: {kind} applied in training");
                    let base = enc.encode(&s, kind.base_encoding()).unwrap();
                    check!(a.tokens == base.tokens, "sample {i}: {kind} altered training tokens");
                }
                if phase == Phase::Test {
                    match kind {
                        PerturbationKind::SwappedSnapshots => fired_snap += stamp.applied as usize,
                        PerturbationKind::SwappedBlocks => fired_blocks += stamp.applied as usize,
                        _ => check!(stamp.applied, "sample {i}: {kind} not applied at test time"),
                    }
                }
            }
        }
    }
    // the two swaps fire with probability one half
    for (name, fired) in [("snapshots", fired_snap), ("blocks", fired_blocks)] {
        check!((200..=300).contains(&fired), "{name} swap fired {fired}/500");
    }
    Ok(format!("500 samples; swaps fired {fired_snap}/500 and {fired_blocks}/500"))
}

// ---------------------------------------------------------------- 7

/// Average precision by walking every distinct score as a threshold.
fn brute_ap(scores: &[f64], labels: &[u8]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = labels.iter().filter(|l| **l == 1).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l == 1).count() as f64;
        let predicted = scores.iter().filter(|s| **s >= t).count() as f64;
        let recall = tp / pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

/// Exact one-sided signed-rank p by enumerating all 2^n sign patterns.
fn brute_wilcoxon(deltas: &[f64]) -> f64 {
    let nz: Vec<f64> = deltas.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return 1.0;
    }
    // doubled midranks: 2 * (average of positions)
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let doubled: Vec<u64> = abs
        .iter()
        .map(|a| {
            let below = abs.iter().filter(|b| *b < a).count() as u64;
            let equal = abs.iter().filter(|b| *b == a).count() as u64;
            2 * below + equal + 1
        })
        .collect();
    let observed: u64 = nz.iter().zip(&doubled).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        let w: u64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| doubled[i]).sum();
        hits += (w >= observed) as u64;
    }
    hits as f64 / (1u64 << n) as f64
}

/// Holm by the definition: the adjusted p of H_i is the smallest level at
/// which the step-down procedure rejects H_i.
fn brute_holm(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut levels: Vec<f64> = (0..m).map(|k| ((m - k) as f64 * p[order[k]]).min(1.0)).collect();
    levels.push(1.0);
    levels.sort_by(f64::total_cmp);
    let rejected_at = |alpha: f64| -> Vec<bool> {
        let mut rej = vec![false; m];
        for (k, &i) in order.iter().enumerate() {
            if (m - k) as f64 * p[i] <= alpha {
                rej[i] = true;
            } else {
                break;
            }
        }
        rej
    };
    (0..m)
        .map(|i| levels.iter().copied().find(|&a| rejected_at(a)[i]).unwrap_or(1.0))
        .collect()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..500 {
        let n = rng.random_range(1..=12);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.4) as u8).collect();
        labels[rng.random_range(0..n)] = 1;
        // coarse scores force ties
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 / 5.0).collect();
        let ours = pr_auc(&scores, &labels).map_err(|e| e.to_string())?;
        let oracle = brute_ap(&scores, &labels);
        check!((ours - oracle).abs() < 1e-12, "pr_auc case {case}: {ours} vs {oracle} for {scores:?} {labels:?}");
    }
    for case in 0..200 {
        let n = rng.random_range(1..=10);
        let deltas: Vec<f64> = (0..n).map(|_| rng.random_range(-4..=4) as f64 * 0.01).collect();
        let ours = wilcoxon_signed_rank(&deltas);
        let oracle = brute_wilcoxon(&deltas);
        check!(ours.exact, "case {case}: not exact");
        check!((ours.p - oracle).abs() < 1e-12, "wilcoxon case {case}: {} vs {oracle} for {deltas:?}", ours.p);
    }
    for case in 0..300 {
        let m = rng.random_range(1..=8);
        let p: Vec<f64> = (0..m).map(|_| rng.random_range(0..20) as f64 / 100.0).collect();
        let ours = holm(&p).map_err(|e| e.to_string())?;
        let oracle = brute_holm(&p);
        for (a, b) in ours.iter().zip(&oracle) {
            check!((a - b).abs() < 1e-12, "holm case {case}: {ours:?} vs {oracle:?} for {p:?}");
        }
    }
    let normal = Normal::new(0.3, 1.0).unwrap();
    let covered: usize = (0..1000u64)
        .map(|trial| {
            let mut r = ChaCha8Rng::seed_from_u64(10_000 + trial);
            let d: Vec<f64> = (0..30).map(|_| normal.sample(&mut r)).collect();
            let (lo, hi) = bootstrap_mean_ci(&d, 2000, trial, 0.95);
            (lo <= 0.3 && 0.3 <= hi) as usize
        })
        .sum();
    let coverage = covered as f64 / 1000.0;
    check!((0.92..=0.975).contains(&coverage), "bootstrap coverage {coverage}");
    Ok(format!("pr_auc 500/500, wilcoxon 200/200, holm 300/300, bootstrap coverage {coverage:.3}"))
}

// ---------------------------------------------------------------- 8

struct Recomputed {
    ss: [f64; 3],
    err: [f64; 3],
}

/// Sums of squares from cell, marginal and grand totals.
fn recompute(x: &ScoreMatrix, s: usize, m: usize, e: usize) -> Recomputed {
    let v = |i, j, k| x.get(i, j, k).unwrap();
    let n = (s * m * e) as f64;
    let grand: f64 = (0..s).flat_map(|i| (0..m).flat_map(move |j| (0..e).map(move |k| (i, j, k)))).map(|(i, j, k)| v(i, j, k)).sum();
    let cf = grand * grand / n;
    let sum_sq = |totals: Vec<f64>, per: usize| totals.iter().map(|t| t * t).sum::<f64>() / per as f64;
    let t_s = sum_sq((0..s).map(|i| (0..m).flat_map(|j| (0..e).map(move |k| (j, k))).map(|(j, k)| v(i, j, k)).sum()).collect(), m * e);
    let t_m = sum_sq((0..m).map(|j| (0..s).flat_map(|i| (0..e).map(move |k| (i, k))).map(|(i, k)| v(i, j, k)).sum()).collect(), s * e);
    let t_e = sum_sq((0..e).map(|k| (0..s).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| v(i, j, k)).sum()).collect(), s * m);
    let t_me = sum_sq((0..m).flat_map(|j| (0..e).map(move |k| (j, k))).map(|(j, k)| (0..s).map(|i| v(i, j, k)).sum()).collect(), s);
    let t_ms = sum_sq((0..m).flat_map(|j| (0..s).map(move |i| (j, i))).map(|(j, i)| (0..e).map(|k| v(i, j, k)).sum()).collect(), e);
    let t_es = sum_sq((0..e).flat_map(|k| (0..s).map(move |i| (k, i))).map(|(k, i)| (0..m).map(|j| v(i, j, k)).sum()).collect(), m);
    let raw: f64 = (0..s).flat_map(|i| (0..m).flat_map(move |j| (0..e).map(move |k| (i, j, k)))).map(|(i, j, k)| v(i, j, k).powi(2)).sum();
    let ss_s = t_s - cf;
    let ss_m = t_m - cf;
    let ss_e = t_e - cf;
    let ss_me = t_me - cf - ss_m - ss_e;
    let ss_ms = t_ms - cf - ss_m - ss_s;
    let ss_es = t_es - cf - ss_e - ss_s;
    let ss_mes = raw - cf - ss_s - ss_m - ss_e - ss_me - ss_ms - ss_es;
    Recomputed {
        ss: [ss_m, ss_e, ss_me],
        err: [ss_ms, ss_es, ss_mes],
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn criterion_8() -> Outcome {
    let (s, m, e) = (10, 4, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let x = ScoreMatrix::from_fn(s, m, e, |_, _, _| 0.0);
        let mut x = x;
        for i in 0..s {
            for j in 0..m {
                for k in 0..e {
                    x.set(i, j, k, rng.random_range(0.2..0.6));
                }
            }
        }
        let effects = rm_anova(&x, false).map_err(|e| e.to_string())?;
        let dfs: Vec<_> = effects.iter().map(|a| (a.df_num, a.df_den)).collect();
        check!(dfs == [(3.0, 27.0), (4.0, 36.0), (12.0, 108.0)], "case {case}: df {dfs:?}");
        let r = recompute(&x, s, m, e);
        for (idx, eff) in effects.iter().enumerate() {
            let f = (r.ss[idx] / eff.df_num) / (r.err[idx] / eff.df_den);
            let p = f_sf(f, eff.df_num, eff.df_den);
            let eta = r.ss[idx] / (r.ss[idx] + r.err[idx]);
            for (what, ours, oracle) in [
                ("SS", eff.ss_effect, r.ss[idx]),
                ("SS error", eff.ss_error, r.err[idx]),
                ("F", eff.f, f),
                ("p", eff.p, p),
                ("eta_p^2", eff.partial_eta_sq, eta),
            ] {
                let d = rel(ours, oracle);
                worst = worst.max(d);
                check!(d <= 1e-10, "case {case} {}: {what} {ours} vs {oracle}", eff.name);
            }
        }
    }
    // additive, noise-free scores have no interaction
    let a: Vec<f64> = (0..s).map(|i| 0.01 * i as f64).collect();
    let b = [0.30, 0.35, 0.33, 0.40];
    let c = [0.0, 0.02, 0.05, 0.01, 0.03];
    let x = ScoreMatrix::from_fn(s, m, e, |i, j, k| a[i] + b[j] + c[k]);
    let effects = rm_anova(&x, false).map_err(|e| e.to_string())?;
    check!(effects[2].f == 0.0, "additive interaction F = {}", effects[2].f);
    Ok(format!("df exact on 50 matrices, worst relative error {worst:.1e}, additive interaction F = 0"))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let statement = "absolute F1/PR-AUC of the stage 1 and stage 2 tables, the 3,164 / 10,268 corpus counts, \
                     the 92% audit precision and the length CDF of the full corpus need the 22 source repositories, \
                     a paid model service and GPU fine-tuning; they are not reproduced here";
    match std::env::var_os("JITCORPUS_FULL_CORPUS") {
        None => Ok(format!("{statement}. 55-65% over 512 tokens: not checked (no full corpus supplied)")),
        Some(path) => {
            let (_, samples) = dataset::load(path.as_ref()).map_err(|e| e.to_string())?;
            let cdf = encoder::length_cdf(&samples, &Tokenizer::whitespace_punct()).map_err(|e| e.to_string())?;
            let share = encoder::fraction_exceeding(&cdf, 512);
            check!((0.55..=0.65).contains(&share), "{share:.3} of functions exceed 512 tokens");
            Ok(format!("{statement}. Full corpus: {share:.3} of functions exceed 512 tokens"))
        }
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("effect sizes from F and df", criterion_1, Duration::from_secs(1)),
        ("stage 2 percent change", criterion_2, Duration::from_secs(1)),
        ("class weight law", criterion_3, Duration::from_secs(10)),
        ("mining fixture ledger", criterion_4, Duration::from_secs(10)),
        ("encoding properties", criterion_5, Duration::from_secs(30)),
        ("perturbation properties", criterion_6, Duration::from_secs(30)),
        ("statistics against oracles", criterion_7, Duration::from_secs(120)),
        ("repeated-measures ANOVA structure", criterion_8, Duration::from_secs(10)),
        ("non-reproducibility statement", criterion_9, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > *limit => Err(format!("took {took:.2?}, limit {limit:?}; {d}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({took:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({took:.2?}): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
