use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use jitcorpus::dataset::{self, DatasetSample, Split, CORPUS_FORMAT};
use jitcorpus::encoder::{length_cdf, fraction_exceeding, EncodedInput, Encoder, Encoding, TokenizerSpec, ENCODED_FORMAT};
use jitcorpus::extract::{decode_source, diff_lines, localize};
use jitcorpus::miner::{defective_from_scan, Miner, MinerConfig, ScanOutput};
use jitcorpus::perturber::{self, PerturbationConfig, PerturbationKind};
use jitcorpus::records::{check_config_hash, peek_format, read_records, read_rows, write_atomic, write_records, Provenance};
use jitcorpus::screen::{sample_clean_pool, screen_all, ScreenVerdict};
use jitcorpus::stats::{self, PredictionRecord, ScoreRecord};
use jitcorpus::triage::{prompt_version, triage_all, HttpVoter, Parked, StubVoter, TriageVerdict, VoteCache, Voter};
use jitcorpus::types::{Candidate, Label};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::{AnalyzeCommand, Cli, Command};

pub const CANDIDATES_FORMAT: &str = "candidates";
pub const LEDGER_FORMAT: &str = "screen-ledger";
pub const VERDICTS_FORMAT: &str = "verdicts";
pub const PARKED_FORMAT: &str = "parked";
pub const LENCDF_FORMAT: &str = "length-cdf";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    pub candidate: Candidate,
    pub verdict: ScreenVerdict,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictEntry {
    pub candidate: Candidate,
    pub verdict: TriageVerdict,
}

#[derive(Debug, Serialize)]
struct CdfRow {
    tokens: usize,
    fraction: f64,
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    hash: String,
    force: bool,
}

impl Ctx<'_> {
    fn prov(&self, format: &str, stage: &str) -> Provenance {
        Provenance::new(format, stage).with_config_hash(Some(self.hash.clone()))
    }

    fn out(&self, path: &Path) -> PathBuf {
        self.cfg.resolve(path)
    }

    fn read<T: serde::de::DeserializeOwned>(&self, path: &Path, format: &str) -> Result<(Option<Provenance>, Vec<T>), CliError> {
        let (header, rows) = read_records(path, format)?;
        check_config_hash(header.as_ref(), &self.hash, self.force)?;
        Ok((header, rows))
    }

    fn write<T: Serialize>(&self, path: &Path, prov: &Provenance, rows: &[T]) -> Result<(), CliError> {
        write_records(&self.out(path), prov, rows)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        write_atomic(&self.out(path), text.as_bytes())?;
        Ok(())
    }
}

pub fn run(cli: &Cli, cfg: &PipelineConfig) -> Result<(), CliError> {
    let ctx = Ctx {
        cfg,
        hash: cfg.hash(),
        force: cli.force,
    };
    match &cli.command {
        Command::Mine(a) => mine(&ctx, a),
        Command::Screen(a) => screen(&ctx, a),
        Command::Triage(a) => triage_cmd(&ctx, a),
        Command::Build(a) => build(&ctx, a),
        Command::Encode(a) => encode(&ctx, a),
        Command::Perturb(a) => perturb(&ctx, a),
        Command::Lencdf(a) => lencdf(&ctx, a),
        Command::Analyze(AnalyzeCommand::Stage1(a)) => stage1(&ctx, a),
        Command::Analyze(AnalyzeCommand::Stage2(a)) => stage2(&ctx, a),
        Command::Analyze(AnalyzeCommand::Predictions(a)) => predictions(&ctx, a),
        Command::Extract(a) => extract(a),
    }
}

/// Repositories from the command line, else from the config, with ids.
fn repo_list(ctx: &Ctx, cli_repos: &[PathBuf]) -> Result<Vec<(PathBuf, Option<String>)>, CliError> {
    let repos: Vec<_> = if cli_repos.is_empty() {
        ctx.cfg.repos.iter().map(|r| (r.path.clone(), r.id.clone())).collect()
    } else {
        cli_repos.iter().map(|p| (p.clone(), None)).collect()
    };
    if repos.is_empty() {
        return Err(CliError::Config("no repositories given (use --repo or [[repos]])".into()));
    }
    Ok(repos)
}

fn open_miner(path: &Path, id: Option<&str>, mcfg: &MinerConfig) -> Result<Miner, CliError> {
    let miner = Miner::open(path, mcfg.clone())?;
    Ok(match id {
        Some(id) => miner.with_repo_id(id),
        None => miner,
    })
}

fn scan(miner: &Miner, since: Option<i64>) -> Result<ScanOutput, CliError> {
    let scan = miner.scan_commits(since)?;
    if !scan.corrupt.is_empty() {
        log::warn!("{}: skipped {} unreadable commit(s)", miner.repo_id(), scan.corrupt.len());
    }
    Ok(scan)
}

fn mine(ctx: &Ctx, a: &crate::MineArgs) -> Result<(), CliError> {
    let mut section = ctx.cfg.miner.clone();
    if let Some(ext) = &a.ext {
        section.extensions = ext.clone();
    }
    let since = a.since.or(section.since);
    let mcfg = section.miner_config();
    let mut candidates = Vec::new();
    let mut reports = BTreeMap::new();
    for (path, id) in repo_list(ctx, &a.repos)? {
        let miner = open_miner(&path, id.as_deref(), &mcfg)?;
        let scan = scan(&miner, since)?;
        let mut report = defective_from_scan(&miner, &scan);
        log::info!(
            "{}: {} commits, {} revert links, {} defective candidates",
            miner.repo_id(),
            scan.commits.len(),
            report.reverts.links.len(),
            report.candidates.len()
        );
        candidates.extend(report.candidates.drain(..).map(|c| c.into_candidate(miner.repo_id())));
        reports.insert(miner.repo_id().to_string(), report);
    }
    let mut prov = ctx.prov(CANDIDATES_FORMAT, "mine");
    if let Some(s) = since {
        prov = prov.note("since", s.to_string());
    }
    ctx.write(&a.out, &prov, &candidates)?;
    if let Some(r) = &a.report {
        ctx.write_json(r, &reports)?;
    }
    Ok(())
}

fn screen(ctx: &Ctx, a: &crate::ScreenArgs) -> Result<(), CliError> {
    let (_, defective): (_, Vec<Candidate>) = ctx.read(&a.defective, CANDIDATES_FORMAT)?;
    let mcfg = ctx.cfg.miner.miner_config();
    let mut entries = Vec::new();
    for (path, id) in repo_list(ctx, &a.repos)? {
        let miner = open_miner(&path, id.as_deref(), &mcfg)?;
        let times: Vec<i64> = defective
            .iter()
            .filter(|c| c.kind == Label::Defective && c.project == miner.repo_id())
            .map(|c| c.commit_time)
            .collect();
        if times.is_empty() {
            log::warn!("{}: no defective candidates in {}", miner.repo_id(), a.defective.display());
            continue;
        }
        let scan = scan(&miner, ctx.cfg.miner.since)?;
        let pool = sample_clean_pool(&miner, &scan, &times, &ctx.cfg.screen);
        let verdicts = screen_all(&path, &mcfg, &scan, &pool, &ctx.cfg.screen)?;
        log::info!(
            "{}: {} clean candidates, {} passed",
            miner.repo_id(),
            pool.len(),
            verdicts.iter().filter(|v| v.passed).count()
        );
        entries.extend(pool.into_iter().zip(verdicts).map(|(candidate, verdict)| LedgerEntry { candidate, verdict }));
    }
    ctx.write(&a.out, &ctx.prov(LEDGER_FORMAT, "screen"), &entries)
}

fn triage_cmd(ctx: &Ctx, a: &crate::TriageArgs) -> Result<(), CliError> {
    let format = peek_format(&a.bundles)?;
    let candidates: Vec<Candidate> = match format.as_deref() {
        Some(CANDIDATES_FORMAT) => {
            let (_, rows): (_, Vec<Candidate>) = ctx.read(&a.bundles, CANDIDATES_FORMAT)?;
            rows.into_iter().filter(|c| c.kind == a.kind).collect()
        }
        Some(LEDGER_FORMAT) => {
            let (_, rows): (_, Vec<LedgerEntry>) = ctx.read(&a.bundles, LEDGER_FORMAT)?;
            rows.into_iter()
                .filter(|e| e.verdict.passed && e.candidate.kind == a.kind)
                .map(|e| e.candidate)
                .collect()
        }
        other => {
            return Err(CliError::Data(format!(
                "{}: expected a `{CANDIDATES_FORMAT}` or `{LEDGER_FORMAT}` file, found {}",
                a.bundles.display(),
                other.unwrap_or("no header")
            )))
        }
    };
    let tcfg = &ctx.cfg.triage;
    let voter: Box<dyn Voter> = if a.offline_stub {
        Box::new(StubVoter)
    } else {
        let key = std::env::var(&tcfg.api_key_env).ok().filter(|k| !k.is_empty());
        if key.is_none() {
            log::warn!("{} is not set; calling {} without a key", tcfg.api_key_env, tcfg.endpoint);
        }
        Box::new(HttpVoter::new(
            tcfg.endpoint.clone(),
            tcfg.model.clone(),
            key,
            tcfg.temperature,
            Duration::from_secs(tcfg.timeout_secs),
        ))
    };
    let cache = match a.cache.as_ref().or(tcfg.cache_dir.as_ref()) {
        Some(dir) => {
            let dir = ctx.out(dir);
            Some(VoteCache::new(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?)
        }
        None => None,
    };
    let outcome = triage_all(&candidates, voter.as_ref(), cache.as_ref(), &tcfg.limits)?;
    let entries: Vec<VerdictEntry> = outcome
        .verdicts
        .into_iter()
        .map(|(candidate, verdict)| VerdictEntry { candidate, verdict })
        .collect();
    let mut prov = ctx.prov(VERDICTS_FORMAT, "triage").note("model", voter.model_id());
    prov.prompt_version = Some(prompt_version(a.kind));
    ctx.write(&a.out, &prov, &entries)?;
    let parked_path = parked_path(&a.out);
    if outcome.parked.is_empty() {
        let _ = fs::remove_file(ctx.out(&parked_path));
        return Ok(());
    }
    ctx.write::<Parked>(&parked_path, &ctx.prov(PARKED_FORMAT, "triage"), &outcome.parked)?;
    Err(CliError::External(format!(
        "{} candidate(s) parked after exhausting retries; see {}",
        outcome.parked.len(),
        parked_path.display()
    )))
}

fn parked_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".parked.jsonl");
    out.with_file_name(name)
}

fn build(ctx: &Ctx, a: &crate::BuildArgs) -> Result<(), CliError> {
    let mut verdicts = Vec::new();
    let mut candidates = Vec::new();
    let mut prompts = Vec::new();
    for (path, kind) in [(&a.defective, Label::Defective), (&a.clean, Label::Clean)] {
        let (header, rows): (_, Vec<VerdictEntry>) = ctx.read(path, VERDICTS_FORMAT)?;
        if let Some(pv) = header.and_then(|h| h.prompt_version) {
            prompts.push(pv);
        }
        for e in rows {
            if e.verdict.kind != kind {
                return Err(CliError::Data(format!(
                    "{}: verdict {} is {}, expected {kind}",
                    path.display(),
                    e.verdict.candidate_id,
                    e.verdict.kind
                )));
            }
            verdicts.push(e.verdict);
            candidates.push(e.candidate);
        }
    }
    let samples = dataset::assemble(&verdicts, &candidates)?;
    let (samples, summary) = dataset::temporal_split(samples, ctx.cfg.split)?;
    let mut prov = ctx.prov(CORPUS_FORMAT, "build");
    if !prompts.is_empty() {
        prov.prompt_version = Some(prompts.join(","));
    }
    if let Some(w) = &summary.class_weight {
        prov = prov.note("class_weight", w.render());
    }
    dataset::serialize(&samples, &ctx.out(&a.out), &prov)?;
    ctx.write_json(&a.summary, &summary)
}

fn load_corpus(ctx: &Ctx, path: &Path) -> Result<(Option<Provenance>, Vec<DatasetSample>), CliError> {
    let (header, samples) = dataset::load(path)?;
    check_config_hash(header.as_ref(), &ctx.hash, ctx.force)?;
    Ok((header, samples))
}

fn tokenizer_spec(ctx: &Ctx, spec: Option<&TokenizerSpec>, budget: Option<usize>) -> TokenizerSpec {
    let mut spec = spec.cloned().unwrap_or_else(|| ctx.cfg.tokenizer.clone());
    spec.budget = budget.unwrap_or(ctx.cfg.tokenizer.budget);
    spec
}

fn encode(ctx: &Ctx, a: &crate::EncodeArgs) -> Result<(), CliError> {
    let split = a
        .split
        .as_deref()
        .map(|s| {
            Split::ALL
                .into_iter()
                .find(|x| x.as_str() == s)
                .ok_or_else(|| CliError::Config(format!("unknown split `{s}`")))
        })
        .transpose()?;
    let (_, samples) = load_corpus(ctx, &a.corpus)?;
    let spec = tokenizer_spec(ctx, a.tokenizer.as_ref(), a.budget);
    let enc = Encoder::from_spec(&spec)?.with_context(a.context);
    let out = samples
        .iter()
        .filter(|s| split.is_none_or(|sp| s.split == Some(sp)))
        .map(|s| enc.encode(s, a.encoding))
        .collect::<Result<Vec<_>, _>>()?;
    log::info!("{} samples encoded, {} truncated", out.len(), out.iter().filter(|e| e.truncated).count());
    let prov = ctx
        .prov(ENCODED_FORMAT, "encode")
        .note("encoding", a.encoding.name())
        .note("tokenizer", spec.to_string())
        .note("budget", spec.budget.to_string())
        .note("context", a.context.to_string());
    ctx.write(&a.out, &prov, &out)
}

fn perturb(ctx: &Ctx, a: &crate::PerturbArgs) -> Result<(), CliError> {
    let seed = a.seed.unwrap_or(ctx.cfg.seeds.perturbation);
    let mut pcfg = PerturbationConfig::new(a.kind, seed);
    if let Some(p) = a.probability {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Config(format!("probability {p} is outside [0, 1]")));
        }
        pcfg = pcfg.with_probability(p);
    }
    let mut prov = ctx
        .prov(ENCODED_FORMAT, "perturb")
        .note("kind", a.kind.name())
        .note("phase", a.phase.to_string())
        .note("probability", pcfg.probability.to_string());
    prov.seeds = vec![seed];
    let out: Vec<EncodedInput> = match peek_format(&a.input)?.as_deref() {
        Some(CORPUS_FORMAT) => {
            let (_, samples) = load_corpus(ctx, &a.input)?;
            let spec = tokenizer_spec(ctx, a.tokenizer.as_ref(), a.budget);
            let enc = Encoder::from_spec(&spec)?;
            prov = prov.note("tokenizer", spec.to_string()).note("budget", spec.budget.to_string());
            samples
                .iter()
                .map(|s| perturber::perturb(&enc, s, &pcfg, a.phase))
                .collect::<Result<_, _>>()?
        }
        Some(ENCODED_FORMAT) => {
            if a.kind != PerturbationKind::ReversedDiffTags {
                return Err(CliError::Config(format!(
                    "{} needs corpus input; only reversed-diff-tags applies to encoded records",
                    a.kind
                )));
            }
            let (_, inputs): (_, Vec<EncodedInput>) = ctx.read(&a.input, ENCODED_FORMAT)?;
            let active = pcfg.active_in(a.phase);
            inputs
                .iter()
                .map(|e| {
                    if e.encoding != Encoding::DiffTags {
                        return Err(CliError::Data(format!("{}: record {} is {}, not diff-tags", a.input.display(), e.sample_id, e.encoding)));
                    }
                    let mut out = if active { perturber::reverse_diff_tags(e)? } else { e.clone() };
                    out.perturbation = Some(jitcorpus::encoder::PerturbationStamp {
                        kind: a.kind.name().to_string(),
                        phase: a.phase.to_string(),
                        seed,
                        applied: active,
                    });
                    Ok(out)
                })
                .collect::<Result<_, _>>()?
        }
        other => {
            return Err(CliError::Data(format!(
                "{}: expected a `{CORPUS_FORMAT}` or `{ENCODED_FORMAT}` file, found {}",
                a.input.display(),
                other.unwrap_or("no header")
            )))
        }
    };
    ctx.write(&a.out, &prov, &out)
}

fn lencdf(ctx: &Ctx, a: &crate::LencdfArgs) -> Result<(), CliError> {
    let (_, samples) = load_corpus(ctx, &a.corpus)?;
    let spec = tokenizer_spec(ctx, a.tokenizer.as_ref(), a.budget);
    let tok = spec.build()?;
    let cdf = length_cdf(&samples, &tok)?;
    let exceeding = fraction_exceeding(&cdf, spec.budget);
    eprintln!("{:.4} of {} functions exceed {} tokens", exceeding, samples.len(), spec.budget);
    let rows: Vec<CdfRow> = cdf.iter().map(|&(tokens, fraction)| CdfRow { tokens, fraction }).collect();
    match &a.out {
        Some(path) => {
            let prov = ctx
                .prov(LENCDF_FORMAT, "lencdf")
                .note("tokenizer", spec.to_string())
                .note("exceeding", format!("{exceeding}"))
                .note("budget", spec.budget.to_string());
            ctx.write(path, &prov, &rows)
        }
        None => {
            let mut text = String::from("tokens\tfraction\n");
            for r in &rows {
                let _ = writeln!(text, "{}\t{}", r.tokens, r.fraction);
            }
            print!("{text}");
            Ok(())
        }
    }
}

fn read_score_rows<T: serde::de::DeserializeOwned>(ctx: &Ctx, path: &Path) -> Result<Vec<T>, CliError> {
    let (header, rows) = read_rows(path)?;
    check_config_hash(header.as_ref(), &ctx.hash, ctx.force)?;
    Ok(rows)
}

fn stage1(ctx: &Ctx, a: &crate::Stage1Args) -> Result<(), CliError> {
    let rows: Vec<ScoreRecord> = read_score_rows(ctx, &a.scores)?;
    let metric = a.metric.as_deref().unwrap_or(&ctx.cfg.stats.metric);
    let report = stats::stage1_report(&rows, metric, a.greenhouse_geisser || ctx.cfg.stats.greenhouse_geisser)?;
    print!("{}", report.render());
    if let Some(path) = &a.json {
        let prov = ctx.prov("stage1-report", "analyze").note("metric", metric);
        ctx.write(path, &prov, &[report])?;
    }
    Ok(())
}

pub fn parse_pairs(spec: &str) -> Result<Vec<(String, String)>, CliError> {
    let pairs = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| match p.split_once(':') {
            Some((o, q)) if !o.trim().is_empty() && !q.trim().is_empty() => Ok((o.trim().to_string(), q.trim().to_string())),
            _ => Err(CliError::Config(format!("bad pair `{p}`; expected original:perturbed"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if pairs.is_empty() {
        return Err(CliError::Config("--pairs is empty".into()));
    }
    Ok(pairs)
}

fn stage2(ctx: &Ctx, a: &crate::Stage2Args) -> Result<(), CliError> {
    let pairs = parse_pairs(&a.pairs)?;
    let rows: Vec<ScoreRecord> = read_score_rows(ctx, &a.scores)?;
    let metric = a.metric.as_deref().unwrap_or(&ctx.cfg.stats.metric);
    let resamples = a.resamples.unwrap_or(ctx.cfg.stats.resamples);
    if resamples == 0 {
        return Err(CliError::Config("--resamples must be positive".into()));
    }
    let seed = a.seed.unwrap_or(ctx.cfg.seeds.bootstrap);
    let series = stats::stage2_pairs(&rows, a.model.as_deref(), metric, &pairs)?;
    let report = stats::stage2_report(&series, resamples, seed)?;
    print!("{}", report.render());
    if let Some(path) = &a.json {
        let mut prov = ctx.prov("stage2-report", "analyze").note("metric", metric).note("resamples", resamples.to_string());
        prov.seeds = vec![seed];
        ctx.write(path, &prov, &report.rows)?;
    }
    Ok(())
}

fn predictions(ctx: &Ctx, a: &crate::PredictionsArgs) -> Result<(), CliError> {
    let rows: Vec<PredictionRecord> = read_score_rows(ctx, &a.preds)?;
    let report = stats::prediction_report(&rows, a.threshold)?;
    print!("{}", report.render());
    if let Some(path) = &a.json {
        ctx.write(path, &ctx.prov("prediction-report", "analyze"), &[report])?;
    }
    Ok(())
}

fn extract(a: &crate::ExtractArgs) -> Result<(), CliError> {
    let read = |p: &Path| fs::read(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())));
    let before_bytes = read(&a.before)?;
    let after_bytes = read(&a.after)?;
    let (before, _) = decode_source(&before_bytes);
    let (after, _) = decode_source(&after_bytes);
    let diff = diff_lines(&before, &after);
    let change = localize(&before, &after, &diff).map_err(|e| CliError::Data(e.to_string()))?;
    let file = a.after.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let m = change.into_modification("working-tree", &file, "");
    println!("{}", serde_json::to_string_pretty(&m).expect("record serializes"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_spec() {
        let p = parse_pairs("diff-tags:reversed, after-markers:spurious").unwrap();
        assert_eq!(p[0], ("diff-tags".into(), "reversed".into()));
        assert_eq!(p.len(), 2);
        assert!(parse_pairs("a").is_err());
        assert!(parse_pairs(":b").is_err());
        assert!(parse_pairs(" , ").is_err());
    }

    #[test]
    fn parked_file_sits_next_to_output() {
        assert_eq!(parked_path(Path::new("out/v.jsonl")), Path::new("out/v.jsonl.parked.jsonl"));
    }
}
