use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use log::info;
use relprof_core::augmentation::{
    default_topics, enrich_dataset, generate_pool, generate_synthetic_corpus, ArtificialPool,
};
use relprof_core::baselines::{baseline_outcomes, train_post_level, RidgeBaseline};
use relprof_core::cnet::{Cnet, LlmClient, LlmEndpoint, TraitContext};
use relprof_core::corpus::{corpus_stats, load_corpus, save_corpus, stratified_split, Level, Split, Trait};
use relprof_core::evaluation::{run_experiment, AggregateReport, ProfileOutcome, RunReport};
use relprof_core::npmi::{annotate_top_m, NpmiTable};
use relprof_core::optim::Optimizer;
use relprof_core::policy::{pretrain, LinearPolicy, PolicyCheckpoint};
use relprof_core::selectors::{predict_profile, selection_records, write_selection_records, SelectorConfig, Strategy};
use relprof_core::trainer::{train, RunManifest};
use serde::Serialize;

use crate::config::FileConfig;
use crate::{
    BaselineArgs, BaselineKind, Cli, Command, EndpointArgs, EnrichArgs, EvaluateArgs, PredictArgs, SelectArgs,
    SelectorArgs, StatsArgs, SynthArgs, TrainArgs, UsageError,
};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(|e| UsageError(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Train(a) => cmd_train(a, cfg),
        Command::Select(a) => cmd_select(a, cfg),
        Command::Predict(a) => cmd_predict(a, cfg),
        Command::Evaluate(a) => cmd_evaluate(a, cfg),
        Command::Baseline(a) => cmd_baseline(a, cfg),
        Command::Enrich(a) => cmd_enrich(a, cfg),
        Command::Synth(a) => cmd_synth(a, cfg),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn endpoint(args: &EndpointArgs, cfg: &FileConfig) -> LlmEndpoint {
    let mut e = cfg.endpoint.clone();
    if let Some(url) = &args.endpoint {
        e.url = url.clone();
    }
    if let Some(m) = &args.model {
        e.model = m.clone();
    }
    if let Some(v) = &args.auth_env {
        e.auth_env = Some(v.clone());
    }
    if let Some(p) = args.parallelism {
        e.parallelism = p;
    }
    e
}

fn cnet(args: &EndpointArgs, cfg: &FileConfig, target: Trait) -> Result<Cnet> {
    let client = LlmClient::connect(endpoint(args, cfg))?;
    let mut cnet = Cnet::new(client, target);
    cnet.spec = cfg.prompt.clone();
    if let Some(path) = &cfg.trait_items {
        let mut all = TraitContext::load_all(path).with_context(|| format!("loading {}", path.display()))?;
        cnet.context = all
            .remove(&target)
            .ok_or_else(|| anyhow::anyhow!("{} has no items for {target}", path.display()))?;
    }
    Ok(cnet)
}

fn selector(args: &SelectorArgs) -> Result<SelectorConfig> {
    let need = |p: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        p.clone()
            .ok_or_else(|| UsageError(format!("--strategy {} requires --{flag}", args.strategy)).into())
    };
    Ok(match args.strategy {
        Strategy::All => SelectorConfig::all(),
        Strategy::Rnd => SelectorConfig::rnd(args.top_n, args.seed),
        Strategy::Pmi => {
            let path = need(&args.npmi, "npmi")?;
            let table = NpmiTable::load(&path).with_context(|| format!("loading {}", path.display()))?;
            SelectorConfig::pmi(args.top_n, Arc::new(table))
        }
        Strategy::Pt | Strategy::Rl => {
            let path = need(&args.checkpoint, "checkpoint")?;
            let policy = PolicyCheckpoint::load(&path)
                .and_then(|c| c.policy())
                .with_context(|| format!("loading {}", path.display()))?;
            SelectorConfig::policy(args.strategy, args.top_n, Arc::new(policy))
        }
    })
}

fn system_name(strategy: Strategy) -> String {
    format!("{strategy}+CNet")
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let ds = load_corpus(&a.corpus.corpus, a.corpus.target, Split::Test)?;
    let stats = corpus_stats(&ds);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!("{stats}");
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs, cfg: FileConfig) -> Result<()> {
    let mut spec = cfg.synth;
    if let Some(t) = a.target {
        spec.target = t;
    }
    if let Some(s) = a.split {
        spec.split = s;
        spec.id_prefix = format!("{s:?}").to_lowercase();
    }
    if let Some(v) = a.profiles_per_class {
        spec.profiles_per_class = v;
    }
    if let Some(v) = a.posts {
        spec.posts_per_profile = v;
    }
    if let Some(v) = a.needles {
        spec.needles = v;
    }
    if let Some(v) = a.distractors {
        spec.distractors = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let ds = generate_synthetic_corpus(&spec)?;
    save_corpus(&a.out, &ds.profiles).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("{}", corpus_stats(&ds));
    Ok(())
}

fn cmd_train(a: TrainArgs, cfg: FileConfig) -> Result<()> {
    let mut train_cfg = cfg.train.clone();
    if let Some(v) = a.epochs {
        train_cfg.max_epochs = v;
    }
    if let Some(v) = &a.top_ns {
        train_cfg.top_ns = v.clone();
    }
    if let Some(v) = a.lambda {
        train_cfg.reward.lambda = v;
    }
    if let Some(v) = a.lr {
        train_cfg.optimizer.learning_rate = v;
    }
    if let Some(v) = a.patience {
        train_cfg.patience = Some(v);
    }
    if let Some(v) = a.seed {
        train_cfg.seed = v;
    }
    train_cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut pre_opt = cfg.pretrain_optimizer.clone();
    if let Some(v) = a.pretrain_lr {
        pre_opt.learning_rate = v;
    }
    let mut pre_cfg = cfg.pretrain.clone();
    pre_cfg.seed = train_cfg.seed;
    if let Some(v) = a.pretrain_epochs {
        pre_cfg.epochs = v;
    }
    let mut featurizer = cfg.featurizer.clone();
    if let Some(v) = a.dims {
        featurizer.dims = v;
    }
    if featurizer.dims == 0 {
        return Err(UsageError("--dims must be positive".into()).into());
    }

    let full = load_corpus(&a.train, a.target, Split::Train)?;
    let (train_set, valid_set) = match &a.valid {
        Some(p) => (full, load_corpus(p, a.target, Split::Valid)?),
        None => stratified_split(&full, cfg.valid_fraction, train_cfg.seed)?,
    };
    info!("training on {} profiles, validating on {}", train_set.len(), valid_set.len());
    let cnet = cnet(&a.endpoint, &cfg, a.target)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let table = NpmiTable::build(&train_set, cfg.npmi.clone())?;
    table.save(a.out.join("npmi.json"))?;
    let annotations = annotate_top_m(&train_set, &table, cfg.top_m);
    let mut policy = LinearPolicy::new(featurizer);
    let mut opt = Optimizer::new(pre_opt);
    let pre_report = pretrain(&mut policy, &annotations, &train_set, &pre_cfg, &mut opt)?;
    PolicyCheckpoint::new(&policy).save(a.out.join("pt.json"))?;

    let outcome = train(policy, &train_set, &valid_set, &cnet, &train_cfg)?;
    let mut manifest = RunManifest::new(a.target, &train_cfg, &outcome);
    manifest.pretrain_losses = std::iter::once(pre_report.initial_loss).chain(pre_report.epoch_losses).collect();
    for (n, best) in &outcome.best {
        let name = format!("rl_top{n}.json");
        let mut ckpt = PolicyCheckpoint::new(&best.policy);
        ckpt.top_n = Some(*n);
        ckpt.epoch = Some(best.epoch);
        ckpt.valid_macro_f1 = Some(best.macro_f1);
        ckpt.save(a.out.join(&name))?;
        if let Some(m) = manifest.checkpoints.get_mut(n) {
            m.path = Some(name);
        }
        eprintln!("top-{n}: best validation macro-F1 {:.4} at epoch {}", best.macro_f1, best.epoch);
    }
    fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn cmd_select(a: SelectArgs, _cfg: FileConfig) -> Result<()> {
    let ds = load_corpus(&a.corpus.corpus, a.corpus.target, Split::Test)?;
    let sel = selector(&a.selector)?;
    let records = selection_records(&sel, &ds)?;
    let mut out = output_writer(a.output.as_deref())?;
    write_selection_records(&mut out, &records)?;
    Ok(())
}

/// One profile-level prediction, shared by selectors and baselines.
#[derive(Serialize)]
struct PredictionRecord<'a> {
    profile_id: &'a str,
    system: &'a str,
    top_n: Option<usize>,
    predicted: Level,
    gold: Level,
    parse_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_response: Option<&'a str>,
}

fn write_jsonl<T: Serialize>(out: &mut dyn Write, item: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, item)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn cmd_predict(a: PredictArgs, cfg: FileConfig) -> Result<()> {
    let mut ds = load_corpus(&a.corpus.corpus, a.corpus.target, Split::Test)?;
    if let Some(id) = &a.profile {
        ds.profiles.retain(|p| &p.id == id);
        if ds.is_empty() {
            anyhow::bail!("no profile `{id}` in {}", a.corpus.corpus.display());
        }
    }
    let sel = selector(&a.selector)?;
    let cnet = cnet(&a.endpoint, &cfg, a.corpus.target)?;
    let system = system_name(sel.strategy);
    let mut out = output_writer(a.output.as_deref())?;
    for (i, profile) in ds.profiles.iter().enumerate() {
        let p = predict_profile(&sel, profile, &cnet)?;
        let mut selected = p.selected.clone();
        selected.sort_unstable();
        write_jsonl(
            &mut out,
            &PredictionRecord {
                profile_id: &profile.id,
                system: &system,
                top_n: sel.reported_top_n(),
                predicted: p.prediction.level,
                gold: ds.gold(i),
                parse_ok: p.prediction.parse_ok,
                selected: Some(selected),
                raw_response: Some(&p.prediction.raw_response),
            },
        )?;
    }
    out.flush()?;
    Ok(())
}

fn write_report(report: &AggregateReport, output: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let mut out = output_writer(output)?;
    out.write_all(report.to_json().as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    if let Some(path) = csv {
        let fresh = !path.exists();
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        if fresh {
            writeln!(f, "{}", AggregateReport::csv_header())?;
        }
        writeln!(f, "{}", report.csv_row())?;
    }
    eprintln!("{report}");
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, cfg: FileConfig) -> Result<()> {
    let runs = a.runs.unwrap_or(cfg.runs);
    if runs == 0 {
        return Err(UsageError("--runs must be at least 1".into()).into());
    }
    let ds = load_corpus(&a.corpus.corpus, a.corpus.target, Split::Test)?;
    let base = selector(&a.selector)?;
    base.validate()?;
    let cnet = cnet(&a.endpoint, &cfg, a.corpus.target)?;
    let system = system_name(base.strategy);
    let result = run_experiment(&system, base.reported_top_n(), runs, a.selector.seed, a.timing, |seed| {
        let sel = SelectorConfig { seed, ..base.clone() };
        relprof_core::selectors::predict_dataset(&sel, &ds, &cnet)
    });
    match result {
        Ok(report) => write_report(&report, a.output.as_deref(), a.csv.as_deref()),
        Err(e) => {
            // keep what finished
            if let Some(path) = &a.output {
                let partial = AggregateReport::from_runs(&system, base.reported_top_n(), a.selector.seed, e.completed.clone());
                let p = path.with_extension("partial.json");
                fs::write(&p, partial.to_json())?;
                eprintln!("{} completed runs written to {}", e.completed.len(), p.display());
            }
            Err(e.into())
        }
    }
}

fn cmd_baseline(a: BaselineArgs, cfg: FileConfig) -> Result<()> {
    let train_set = load_corpus(&a.train, a.target, Split::Train)?;
    let test_set = load_corpus(&a.test, a.target, Split::Test)?;
    let runs = a.runs.unwrap_or(cfg.runs);
    if runs == 0 {
        return Err(UsageError("--runs must be at least 1".into()).into());
    }
    let (system, ridge) = match a.kind {
        BaselineKind::Ridge => {
            let mut r = cfg.ridge.clone();
            if let Some(alpha) = a.alpha {
                r.alpha = alpha;
            }
            ("Baseline-R", Some(RidgeBaseline::fit(&train_set, &cfg.tfidf, &r)?))
        }
        BaselineKind::Post => ("Baseline-B", None),
    };
    let mut first: Option<Vec<ProfileOutcome>> = None;
    let mut per_run = Vec::with_capacity(runs);
    for run in 0..runs {
        let seed = a.seed.wrapping_add(run as u64);
        let outcomes = match &ridge {
            Some(model) => baseline_outcomes(&test_set, |p| model.predict(p)),
            None => {
                let mut pc = cfg.post_level.clone();
                pc.seed = seed;
                let model = train_post_level(&train_set, &pc)?;
                baseline_outcomes(&test_set, |p| model.predict_majority(p))
            }
        };
        per_run.push(RunReport::from_outcomes(run, seed, &outcomes, a.timing));
        first.get_or_insert(outcomes);
    }
    if let (Some(path), Some(outcomes)) = (&a.predictions, &first) {
        let mut out = output_writer(Some(path))?;
        for o in outcomes {
            write_jsonl(
                &mut out,
                &PredictionRecord {
                    profile_id: &o.profile_id,
                    system,
                    top_n: None,
                    predicted: o.predicted,
                    gold: o.gold,
                    parse_ok: true,
                    selected: None,
                    raw_response: None,
                },
            )?;
        }
        out.flush()?;
    }
    let report = AggregateReport::from_runs(system, None, a.seed, per_run);
    write_report(&report, a.output.as_deref(), None)
}

fn cmd_enrich(a: EnrichArgs, cfg: FileConfig) -> Result<()> {
    let ds = load_corpus(&a.corpus.corpus, a.corpus.target, Split::Valid)?;
    let mut ec = cfg.enrich.clone();
    if let Some(v) = a.cap {
        ec.per_class_cap = v;
    }
    if let Some(v) = a.per_profile {
        ec.per_profile = v;
    }
    if let Some(v) = a.seed {
        ec.seed = v;
    }
    let mut pool = match &a.pool {
        Some(path) => ArtificialPool::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let c = cnet(&a.endpoint, &cfg, a.corpus.target)?;
            generate_pool(&c.client, &c.context, &default_topics(), a.rounds, 10, 512)?
        }
    };
    let enriched = enrich_dataset(&ds, &mut pool, &ec)?;
    save_corpus(&a.out, &enriched.profiles).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = a.pool_out.as_ref().or(a.pool.as_ref()) {
        pool.save(path)?;
    }
    eprintln!("{}", corpus_stats(&enriched));
    Ok(())
}
