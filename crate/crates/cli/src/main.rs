mod args;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{
    AblateArgs, Cli, Command, EvalArgs, GradcheckArgs, ModelFlags, PredictArgs, ReportFormat, ScheduleFlags, SynthArgs,
    TrainArgs,
};
use depsrl::ablation::{format_ablation_table, run_ablation};
use depsrl::autodiff::Fault;
use depsrl::config::parse_key_values;
use depsrl::conll::{read_conll2009, write_conll2009};
use depsrl::gradcheck::{check_model, fixture, max_error};
use depsrl::synthetic::SyntheticKind;
use depsrl::train::{predict_corpus, train_with_progress};
use depsrl::{
    Checkpoint, ClassifierVariant, Error, EvalOptions, Lang, ModelConfig, PretrainedTable, Sentence, TrainSchedule,
};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_USAGE,
            Error::Shape { .. } | Error::Graph(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("depsrl: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

fn read_corpus(path: &Path) -> Result<Vec<Sentence>, Failure> {
    let sentences = if path.as_os_str() == "-" {
        read_conll2009(io::stdin().lock())
    } else {
        read_conll2009(open(path)?)
    };
    sentences.map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Failure {
            code: EXIT_DATA,
            message: format!("{}: {e}", p.display()),
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn resolve(model: &ModelFlags, schedule: &ScheduleFlags) -> Result<(ModelConfig, TrainSchedule), Failure> {
    resolve_onto(None, model, schedule)
}

/// Starts from `base` (or the language defaults), then applies the config
/// file, then explicit flags. A language given on top of `base` resets the
/// embedding widths only.
fn resolve_onto(
    base: Option<&ModelConfig>,
    model: &ModelFlags,
    schedule: &ScheduleFlags,
) -> Result<(ModelConfig, TrainSchedule), Failure> {
    let mut pairs = match &model.config {
        Some(path) => parse_key_values(&std::fs::read_to_string(path).map_err(|e| Failure {
            code: EXIT_DATA,
            message: format!("{}: {e}", path.display()),
        })?)?,
        None => Default::default(),
    };
    for item in &model.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        pairs.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    let lang: Option<Lang> = match model.lang.clone().or_else(|| pairs.remove("lang")) {
        Some(name) => Some(name.parse()?),
        None => None,
    };
    let mut cfg = match (base, lang) {
        (Some(b), Some(l)) => ModelConfig {
            d_word: l.word_dim(),
            d_pretrained: l.word_dim(),
            ..b.clone()
        },
        (Some(b), None) => b.clone(),
        (None, l) => ModelConfig::for_lang(l.unwrap_or(Lang::English)),
    };
    let mut sched = TrainSchedule::default();
    let model_keys: Vec<&str> = cfg.to_pairs().iter().map(|(k, _)| *k).collect();
    let schedule_keys: Vec<&str> = sched.to_pairs().iter().map(|(k, _)| *k).collect();
    for (k, v) in &pairs {
        if model_keys.contains(&k.as_str()) {
            cfg.set(k, v)?;
        } else if schedule_keys.contains(&k.as_str()) {
            sched.set(k, v)?;
        } else {
            return Err(usage(format!("unknown setting {k:?}")));
        }
    }
    if let Some(v) = &model.variant {
        cfg.variant = v.parse()?;
    }
    if model.no_pos {
        cfg.use_pos = false;
    }
    if model.no_pred_flag {
        cfg.use_predicate_flag = false;
    }
    if let Some(v) = model.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = model.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = model.layers {
        cfg.layers = v;
    }
    if let Some(v) = model.hidden {
        cfg.d_hidden = v;
    }
    if let Some(v) = model.seed {
        cfg.seed = v;
    }
    if let Some(v) = schedule.max_epochs {
        sched.max_epochs = v;
    }
    if let Some(v) = schedule.patience {
        sched.patience = v;
    }
    if let Some(v) = schedule.batch_size {
        sched.batch_size = v;
    }
    if let Some(v) = schedule.threads {
        sched.threads = v;
    }
    if let Some(v) = schedule.clip_norm {
        sched.clip_norm = Some(v);
    }
    sched.seed = cfg.seed;
    cfg.validate()?;
    sched.validate()?;
    Ok((cfg, sched))
}

fn echo_config(command: &str, paths: &[(&str, Option<&Path>)], cfg: &ModelConfig, sched: Option<&TrainSchedule>) {
    let mut text = format!("# depsrl {command}\n");
    for (name, path) in paths {
        if let Some(p) = path {
            text.push_str(&format!("# {name} = {}\n", p.display()));
        }
    }
    for (k, v) in cfg.to_pairs() {
        text.push_str(&format!("{k} = {v}\n"));
    }
    if let Some(s) = sched {
        for (k, v) in s.to_pairs() {
            text.push_str(&format!("{k} = {v}\n"));
        }
    }
    eprint!("{text}");
}

fn load_embeddings(path: Option<&Path>, dim: usize) -> Result<PretrainedTable, Failure> {
    match path {
        Some(p) => PretrainedTable::load(open(p)?, dim).map_err(|e| Failure {
            code: EXIT_DATA,
            message: format!("{}: {e}", p.display()),
        }),
        None => Ok(PretrainedTable::empty(dim)),
    }
}

fn cmd_train(a: TrainArgs) -> Outcome {
    let (cfg, sched) = resolve(&a.model, &a.schedule)?;
    echo_config(
        "train",
        &[
            ("train", Some(&a.train)),
            ("dev", Some(&a.dev)),
            ("embeddings", a.embeddings.as_deref()),
            ("model_out", Some(&a.model_out)),
        ],
        &cfg,
        Some(&sched),
    );
    let train_set = read_corpus(&a.train)?;
    let dev_set = read_corpus(&a.dev)?;
    let pretrained = load_embeddings(a.embeddings.as_deref(), cfg.d_pretrained)?;
    let mut log = match &a.log {
        Some(p) => Some(output(Some(p))?),
        None => None,
    };
    let mut log_error = None;
    let outcome = train_with_progress(&train_set, &dev_set, &cfg, pretrained, &sched, |record| {
        println!("{record}");
        if let Some(w) = log.as_mut() {
            if let Err(e) = writeln!(w, "{record}") {
                log_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e.into());
    }
    if let Some(mut w) = log {
        w.flush()?;
    }
    let mut out = output(Some(&a.model_out))?;
    outcome.checkpoint.save(&mut out)?;
    eprintln!(
        "best dev F1 {:.4} at epoch {}; model written to {}",
        outcome.checkpoint.best_f1,
        outcome.checkpoint.best_epoch,
        a.model_out.display()
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Outcome {
    let checkpoint = Checkpoint::load(open(&a.model_in)?)?;
    let stored = &checkpoint.model.config;
    let (requested, _) = resolve_onto(Some(stored), &a.model, &ScheduleFlags::default())?;
    let mismatched: Vec<String> = requested
        .to_pairs()
        .into_iter()
        .zip(stored.to_pairs())
        .filter(|((_, want), (_, have))| want != have)
        .map(|((k, want), (_, have))| format!("{k}: requested {want}, checkpoint has {have}"))
        .collect();
    if !mismatched.is_empty() {
        return Err(usage(format!(
            "settings disagree with the checkpoint: {}",
            mismatched.join("; ")
        )));
    }
    echo_config(
        "predict",
        &[("model_in", Some(&a.model_in)), ("test", Some(&a.test))],
        stored,
        None,
    );
    let input = read_corpus(&a.test)?;
    let predicted = predict_corpus(&checkpoint.model, &input)?;
    let mut out = output(a.output.as_deref())?;
    write_conll2009(&mut out, &predicted)?;
    out.flush()?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Outcome {
    let options = EvalOptions {
        include_senses: a.include_senses,
        buckets: match &a.buckets {
            Some(b) => b.parse()?,
            None => Default::default(),
        },
        split: !a.no_split,
        syntactic: a.syntactic,
    };
    let gold = read_corpus(&a.gold)?;
    let pred = read_corpus(&a.pred)?;
    let report = depsrl::eval::evaluate(&gold, &pred, &options)?;
    let text = match a.format {
        ReportFormat::Table => report.to_table(),
        ReportFormat::Kv => report.to_key_values(),
    };
    let mut out = output(None)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Outcome {
    let (cfg, sched) = resolve(&a.model, &a.schedule)?;
    echo_config(
        "ablate",
        &[
            ("train", Some(&a.train)),
            ("dev", Some(&a.dev)),
            ("embeddings", a.embeddings.as_deref()),
        ],
        &cfg,
        Some(&sched),
    );
    let train_set = read_corpus(&a.train)?;
    let dev_set = read_corpus(&a.dev)?;
    let pretrained = load_embeddings(a.embeddings.as_deref(), cfg.d_pretrained)?;
    let results = run_ablation(&train_set, &dev_set, &cfg, &pretrained, &sched, |preset, line| {
        eprintln!("[{}] {line}", preset.label());
    })?;
    let mut out = output(None)?;
    out.write_all(format_ablation_table(&results).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Outcome {
    let variants: Vec<ClassifierVariant> = match &a.variant {
        Some(v) => vec![v.parse()?],
        None => vec![
            ClassifierVariant::Basic,
            ClassifierVariant::PredicateState,
            ClassifierVariant::Compositional,
        ],
    };
    eprintln!(
        "# depsrl gradcheck\nseed = {}\nstep = {:?}\ntolerance = {:?}",
        a.seed, a.step, a.tolerance
    );
    let fault = a.inject_fault.then_some(Fault::SigmoidBackward);
    let mut worst: f64 = 0.0;
    let mut out = output(None)?;
    writeln!(
        out,
        "{:<16} {:<24} {:>8} {:>14}",
        "variant", "parameter", "scalars", "max_rel_error"
    )?;
    for variant in variants {
        let (model, feats) = fixture(variant, a.seed)?;
        let report = check_model(&model, &feats, a.step, fault)?;
        for g in &report {
            writeln!(
                out,
                "{:<16} {:<24} {:>8} {:>14.3e}",
                variant.to_string(),
                g.name,
                g.scalars,
                g.max_relative_error
            )?;
        }
        worst = worst.max(max_error(&report));
    }
    let pass = worst < a.tolerance;
    writeln!(
        out,
        "max_rel_error = {worst:.3e} ({})",
        if pass { "pass" } else { "FAIL" }
    )?;
    out.flush()?;
    if pass {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_NUMERIC,
            message: format!("gradient check failed: {worst:.3e} > {:.1e}", a.tolerance),
        })
    }
}

fn cmd_synth(a: SynthArgs) -> Outcome {
    let kind: SyntheticKind = a.kind.parse()?;
    let sentences = kind.generate(a.sentences, a.seed);
    let mut out = output(a.output.as_deref())?;
    write_conll2009(&mut out, &sentences)?;
    out.flush()?;
    Ok(())
}
