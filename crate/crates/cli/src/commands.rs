use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clsd_core::analysis::{
    normalization_factor, shift_analysis, success_distribution, NormalizationFactor, ShiftTable,
    SuccessDistributionTable,
};
use clsd_core::datamodel::{
    load_annotations, load_clsd_dataset, load_corpus, load_dataset, validate_file,
    write_annotations, write_clsd_dataset, write_pivot_dataset, Dataset, DiffAnnotation,
};
use clsd_core::embedding::{Embedder, LexicalEmbedder};
use clsd_core::evaluator::{
    disagreement, evaluate, load_report, pivot_dataset, write_report, EvalReport,
};
use clsd_core::generator::{dataset_stats, generate_dataset};
use clsd_core::textmetrics::{single_token_diff, BinSpec};
use clsd_core::Error;
use clsd_providers::{chat_from_config, embedder_from_config, translator_from_config};
use tracing::info;

use crate::config::{LoadedConfig, RunConfig};
use crate::output::{sibling, write_atomic, Manifest};
use crate::render::ReportTable;
use crate::{Backend, Command, EmbedArgs, ReportFormat};

pub(crate) fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate {
            corpus,
            config,
            seed,
            out,
        } => generate(&corpus, &config, seed, &out),
        Command::Validate { dataset } => validate(&dataset),
        Command::Stats { dataset, out } => stats(&dataset, &out),
        Command::Eval {
            dataset,
            embed,
            dataset_id,
            out,
        } => eval(&dataset, &embed, dataset_id, &out),
        Command::Pivot {
            dataset,
            config,
            pivot_lang,
            out,
        } => pivot(&dataset, &config, &pivot_lang, &out),
        Command::Compare {
            report_a,
            report_b,
            out,
        } => compare(&report_a, &report_b, &out),
        Command::Norm {
            corpus,
            embed,
            seed,
            out,
        } => norm(&corpus, &embed, seed, &out),
        Command::DiffAnnotate { dataset, out } => diff_annotate(&dataset, &out),
        Command::Shift {
            dataset,
            annotations,
            norm,
            mono_norm,
            embed,
            out,
        } => shift(
            &dataset,
            &annotations,
            &norm,
            mono_norm.as_deref(),
            &embed,
            &out,
        ),
        Command::Bins {
            report,
            dataset,
            config,
            out,
        } => bins(&report, &dataset, config.as_deref(), &out),
        Command::Report {
            inputs,
            format,
            out,
        } => report(&inputs, format, &out),
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidInput(msg.into()).into()
}

fn load_config(path: Option<&Path>, outs: &[&Path]) -> Result<Option<LoadedConfig>> {
    let Some(path) = path else { return Ok(None) };
    let loaded = RunConfig::load(path)?;
    for out in outs {
        loaded.config.check_output(out)?;
    }
    Ok(Some(loaded))
}

fn json_bytes(value: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Resolves the embedder and, when one was read, the config behind it.
fn embedder(args: &EmbedArgs, outs: &[&Path]) -> Result<(Box<dyn Embedder>, Option<LoadedConfig>)> {
    let loaded = load_config(args.config.as_deref(), outs)?;
    if args.backend == Some(Backend::Lexical) {
        return Ok((Box::new(LexicalEmbedder::new(args.lexical_dim)?), loaded));
    }
    let Some(loaded) = loaded else {
        return Err(invalid(
            "choose an embedder with --backend lexical or --config",
        ));
    };
    let cfg = RunConfig::require(&loaded.config.embedding, "embedding", &loaded.path)?;
    let cache = loaded.config.cache_dir();
    let emb = embedder_from_config(cfg, cache.as_deref())?;
    Ok((emb, Some(loaded)))
}

fn seed_from(flag: Option<u64>, config: Option<&LoadedConfig>) -> Result<u64> {
    flag.or_else(|| config.and_then(|c| c.config.analysis.seed))
        .ok_or_else(|| invalid("no seed: pass --seed or set analysis.seed in the config"))
}

fn manifest_with_config(command: &str, config: Option<&LoadedConfig>) -> Manifest {
    let mut m = Manifest::new(command);
    if let Some(c) = config {
        m.config(&c.bytes);
    }
    m
}

fn generate(corpus_path: &Path, config_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let log_path = sibling(out, "log.jsonl");
    let loaded = load_config(Some(config_path), &[out])?.expect("config given");
    let seed = seed_from(seed, Some(&loaded))?;
    let corpus = load_corpus(corpus_path)?;
    let chat_cfg = RunConfig::require(&loaded.config.chat, "chat", &loaded.path)?;
    let client = chat_from_config(chat_cfg)?;
    let run = generate_dataset(&corpus, client.as_ref(), &loaded.config.generation, seed)?;
    for skip in &run.skipped {
        eprintln!("warning: {skip}");
    }
    if run.instances.is_empty() && !corpus.is_empty() {
        return Err(Error::Provider(format!(
            "no instance generated for any of {} pairs",
            corpus.len()
        ))
        .into());
    }

    let mut bytes = Vec::new();
    write_clsd_dataset(&mut bytes, &run.instances)?;
    write_atomic(out, &bytes)?;
    let mut log = Vec::new();
    for entry in &run.log {
        serde_json::to_writer(&mut log, entry)?;
        log.push(b'\n');
    }
    write_atomic(&log_path, &log)?;

    manifest_with_config("generate", Some(&loaded))
        .input(corpus_path)?
        .output(out)
        .output(&log_path)
        .detail("seed", seed)
        .detail("model_id", client.model_id())
        .detail("instances", run.instances.len())
        .detail("skipped", &run.skipped)
        .write()?;
    eprintln!(
        "generated {} instances ({} skipped)",
        run.instances.len(),
        run.skipped.len()
    );
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let report = validate_file(path)?;
    for w in &report.warnings {
        eprintln!("warning: {}: {}", w.id, w.message);
    }
    for e in &report.errors {
        eprintln!("error: {}: {}", e.id, e.message);
    }
    if !report.is_ok() {
        return Err(invalid(format!(
            "{}: {} error(s) in {} record(s)",
            path.display(),
            report.errors.len(),
            report.n_records
        )));
    }
    println!(
        "{}: {} records ok, {} warning(s)",
        path.display(),
        report.n_records,
        report.warnings.len()
    );
    Ok(())
}

fn stats(dataset: &Path, out: &Path) -> Result<()> {
    let instances = load_clsd_dataset(dataset)?;
    let stats = dataset_stats(&instances)?;
    write_atomic(out, &json_bytes(&stats)?)?;
    Manifest::new("stats").input(dataset)?.output(out).write()
}

fn dataset_id_for(path: &Path, explicit: Option<String>) -> String {
    explicit.unwrap_or_else(|| {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        name.strip_suffix(".jsonl").unwrap_or(&name).to_string()
    })
}

fn eval(dataset: &Path, args: &EmbedArgs, dataset_id: Option<String>, out: &Path) -> Result<()> {
    let (emb, loaded) = embedder(args, &[out])?;
    let id = dataset_id_for(dataset, dataset_id);
    let report = match load_dataset(dataset)? {
        Dataset::Direct(d) => evaluate(emb.as_ref(), &id, &d)?,
        Dataset::Pivot(d) => evaluate(emb.as_ref(), &id, &d)?,
    };
    let mut bytes = Vec::new();
    write_report(&mut bytes, &report)?;
    write_atomic(out, &bytes)?;
    info!(p_at_1 = report.p_at_1, n = report.n, "evaluated");
    eprintln!("P@1 = {:.4} over {} instances", report.p_at_1, report.n);
    manifest_with_config("eval", loaded.as_ref())
        .input(dataset)?
        .output(out)
        .detail("model_id", emb.model_id())
        .write()
}

fn pivot(dataset: &Path, config: &Path, pivot_lang: &str, out: &Path) -> Result<()> {
    let loaded = load_config(Some(config), &[out])?.expect("config given");
    let instances = load_clsd_dataset(dataset)?;
    let mt_cfg = RunConfig::require(&loaded.config.translation, "translation", &loaded.path)?;
    let translator = translator_from_config(mt_cfg)?;
    let run = pivot_dataset(&instances, translator.as_ref(), pivot_lang)?;
    for skip in &run.skipped {
        eprintln!(
            "warning: instance {} skipped: {}",
            skip.original_id, skip.reason
        );
    }
    if run.instances.is_empty() {
        return Err(Error::Provider("every instance failed to translate".into()).into());
    }
    let mut bytes = Vec::new();
    write_pivot_dataset(&mut bytes, &run.instances)?;
    write_atomic(out, &bytes)?;
    manifest_with_config("pivot", Some(&loaded))
        .input(dataset)?
        .output(out)
        .detail("pivot_lang", pivot_lang)
        .detail("translator", translator.model_id())
        .detail("skipped", &run.skipped)
        .write()
}

fn load_checked_report(path: &Path) -> Result<EvalReport> {
    let report = load_report(path)?;
    report
        .check()
        .with_context(|| format!("checking {}", path.display()))?;
    Ok(report)
}

fn compare(a: &Path, b: &Path, out: &Path) -> Result<()> {
    let diff = disagreement(&load_checked_report(a)?, &load_checked_report(b)?)?;
    write_atomic(out, &json_bytes(&diff)?)?;
    eprintln!(
        "{} succeed only in A, {} only in B",
        diff.success_a_only.len(),
        diff.success_b_only.len()
    );
    Manifest::new("compare")
        .input(a)?
        .input(b)?
        .output(out)
        .write()
}

fn norm(corpus: &Path, args: &EmbedArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let (emb, loaded) = embedder(args, &[out])?;
    let seed = seed_from(seed, loaded.as_ref())?;
    let pairs = load_corpus(corpus)?;
    let factor = normalization_factor(emb.as_ref(), &pairs, seed)?;
    write_atomic(out, &json_bytes(&factor)?)?;
    eprintln!(
        "normalization factor {:.6} ({})",
        factor.value, factor.model_id
    );
    manifest_with_config("norm", loaded.as_ref())
        .input(corpus)?
        .output(out)
        .detail("seed", seed)
        .write()
}

fn diff_annotate(dataset: &Path, out: &Path) -> Result<()> {
    let instances = load_clsd_dataset(dataset)?;
    let mut candidates = Vec::new();
    for inst in &instances {
        for (i, d) in inst.distractors.iter().enumerate() {
            if let Some(diff) = single_token_diff(&inst.target.text, &d.text) {
                candidates.push(DiffAnnotation {
                    instance_id: inst.id.clone(),
                    distractor_index: i,
                    position: diff.position,
                    target_token: diff.target_token,
                    distractor_token: diff.distractor_token,
                    pos: String::new(),
                });
            }
        }
    }
    let mut bytes = Vec::new();
    write_annotations(&mut bytes, &candidates)?;
    write_atomic(out, &bytes)?;
    eprintln!("{} single-token candidates", candidates.len());
    Manifest::new("diff-annotate")
        .input(dataset)?
        .output(out)
        .detail("candidates", candidates.len())
        .write()
}

fn load_factor(path: &Path) -> Result<NormalizationFactor> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let factor: NormalizationFactor = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    factor.check()?;
    Ok(factor)
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn shift_csv(table: &ShiftTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "group",
        "n",
        "mean_cross_shift",
        "mean_mono_shift",
        "corr_mono_cross",
    ])?;
    for g in &table.groups {
        w.write_record([
            g.group.clone(),
            g.n.to_string(),
            fmt6(g.mean_cross_shift),
            fmt6(g.mean_mono_shift),
            g.corr_mono_cross.map(fmt6).unwrap_or_default(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn shift(
    dataset: &Path,
    annotations: &Path,
    norm: &Path,
    mono_norm: Option<&Path>,
    args: &EmbedArgs,
    out: &Path,
) -> Result<()> {
    let (emb, loaded) = embedder(args, &[out])?;
    let factor = load_factor(norm)?;
    let mono = mono_norm.map(load_factor).transpose()?;
    for f in std::iter::once(&factor).chain(mono.as_ref()) {
        if f.model_id != emb.model_id() {
            return Err(invalid(format!(
                "normalization factor was computed with {}, not {}",
                f.model_id,
                emb.model_id()
            )));
        }
    }
    let instances = load_clsd_dataset(dataset)?;
    let anns = load_annotations(annotations)?;
    let table = shift_analysis(emb.as_ref(), &instances, &anns, &factor, mono.as_ref())?;
    write_atomic(out, &shift_csv(&table)?)?;

    let mut m = manifest_with_config("shift", loaded.as_ref());
    m.input(dataset)?.input(annotations)?.input(norm)?;
    if let Some(p) = mono_norm {
        m.input(p)?;
    }
    m.output(out).detail("model_id", emb.model_id()).write()
}

fn bins_csv(table: &SuccessDistributionTable, spec: &BinSpec) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "bin_lo",
        "bin_hi",
        "d_bin_total",
        "success_count",
        "success_pct",
    ])?;
    let mut rows: Vec<_> = table.bins.iter().collect();
    rows.push(&table.underflow);
    if spec.highest() < 1.0 {
        rows.push(&table.overflow);
    }
    for b in rows {
        w.write_record([
            b.lo.to_string(),
            b.hi.to_string(),
            b.d_bin_total.to_string(),
            b.success_count.to_string(),
            fmt6(b.success_pct),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn bins(report_path: &Path, dataset: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let loaded = load_config(config, &[out])?;
    let spec = loaded
        .as_ref()
        .and_then(|c| c.config.analysis.bins.clone())
        .unwrap_or_default();
    let report = load_checked_report(report_path)?;
    let table = match load_dataset(dataset)? {
        Dataset::Direct(d) => success_distribution(&report, &d, &spec)?,
        Dataset::Pivot(d) => success_distribution(&report, &d, &spec)?,
    };
    if table.empty {
        eprintln!("warning: no successful distractors; all percentages are 0");
    }
    write_atomic(out, &bins_csv(&table, &spec)?)?;
    manifest_with_config("bins", loaded.as_ref())
        .input(report_path)?
        .input(dataset)?
        .output(out)
        .write()
}

fn report(inputs: &[PathBuf], format: ReportFormat, out: &Path) -> Result<()> {
    let reports = inputs
        .iter()
        .map(|p| load_checked_report(p))
        .collect::<Result<Vec<_>>>()?;
    let table = ReportTable::build(&reports)?;
    let bytes = match format {
        ReportFormat::Markdown => table.to_markdown().into_bytes(),
        ReportFormat::Csv => table.to_csv()?,
    };
    write_atomic(out, &bytes)?;
    let mut m = Manifest::new("report");
    for p in inputs {
        m.input(p)?;
    }
    m.output(out).write()
}
