use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use marginflat::data::{corpus_to_string, generate_toy_corpus, load_corpus, Corpus};
use marginflat::eval::UnlearningReport;
use marginflat::losses::{retain_loss, ForgetLossKind};
use marginflat::model::{
    load_checkpoint, logits, pretrain_observed, write_checkpoint, Checkpoint, ParamSet, Policy,
    TinyLm,
};
use marginflat::solver::{
    format_significant, resolve_epsilon, run_pdu, run_scalarized, RunOutcome, SolverMode,
};

use crate::config::RunConfig;
use crate::failure::Failure;

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| Failure::Config(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// `<file>.config.toml` next to a file output.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".config.toml");
    path.with_file_name(name)
}

fn materialize(config: &RunConfig, path: &Path) -> Result<(), Failure> {
    write_output(path, config.to_toml().as_bytes())
}

fn corpus_for(config: &RunConfig, path: &Path) -> Result<Corpus, Failure> {
    let corpus = load_corpus(path)?;
    if corpus.vocab_size() != config.model.vocab_size {
        return Err(Failure::Config(format!(
            "{}: corpus vocabulary {} differs from model vocabulary {}",
            path.display(),
            corpus.vocab_size(),
            config.model.vocab_size
        )));
    }
    Ok(corpus)
}

fn load_params(
    config: &RunConfig,
    model: &TinyLm,
    path: &Path,
) -> Result<Checkpoint<f64>, Failure> {
    let ckpt: Checkpoint<f64> =
        load_checkpoint(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let stored = ckpt
        .model_config()
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if stored != config.model {
        return Err(Failure::Config(format!(
            "{}: checkpoint model {stored:?} differs from configured model {:?}",
            path.display(),
            config.model
        )));
    }
    if !ckpt.params.same_layout(&Policy::<f64>::zero_params(model)) {
        return Err(Failure::Config(format!(
            "{}: parameter layout does not match the model",
            path.display()
        )));
    }
    if !ckpt.params.all_finite() {
        return Err(Failure::Numerical(format!(
            "{}: checkpoint holds non-finite parameters",
            path.display()
        )));
    }
    Ok(ckpt)
}

pub fn init_config(out: Option<&Path>) -> Result<(), Failure> {
    let text = RunConfig::desk_default().to_toml();
    match out {
        Some(path) => write_output(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn gen_data(config_path: &Path, out: &Path) -> Result<(), Failure> {
    let config = RunConfig::load(config_path)?;
    let corpus = generate_toy_corpus(&config.data, config.seeds().data)?;
    let out = config.resolve_output(out);
    write_output(&out, corpus_to_string(&corpus).as_bytes())?;
    materialize(&config, &sidecar(&out))?;
    println!(
        "wrote {}: {} forget / {} retain examples",
        out.display(),
        corpus.forget().len(),
        corpus.retain().len()
    );
    Ok(())
}

pub fn pretrain(
    config_path: &Path,
    corpus_path: &Path,
    out: &Path,
    retain_only: bool,
) -> Result<(), Failure> {
    let config = RunConfig::load(config_path)?;
    let corpus = corpus_for(&config, corpus_path)?;
    let model = TinyLm::new(config.model.clone())?;
    let (dataset, seed, kind) = if retain_only {
        (corpus.retain().to_vec(), config.seeds().oracle, "oracle")
    } else {
        (corpus.all(), config.seeds().pretrain, "reference")
    };
    let out = config.resolve_output(out);
    let mut trace_path = out.clone().into_os_string();
    trace_path.push(".trace.csv");
    let trace_path = PathBuf::from(trace_path);
    materialize(&config, &sidecar(&out))?;

    let mut trace = String::from("step,loss\n");
    let result =
        pretrain_observed::<f64, _>(&model, &dataset, &config.pretrain, seed, |step, loss| {
            let _ = writeln!(trace, "{},{}", step + 1, format_significant(loss, 12));
        });
    write_output(&trace_path, trace.as_bytes())?;
    let outcome = result?;

    let ckpt = Checkpoint::new(outcome.params)
        .with_model(&config.model)
        .with_meta("kind", kind)
        .with_meta("seed", seed)
        .with_meta("steps", config.pretrain.steps)
        .with_meta("final_loss", outcome.final_loss);
    write_output(&out, &write_checkpoint(&ckpt)?)?;
    let retain_ce = retain_loss(&model, &ckpt.params, corpus.retain())?;
    let forget_ce = retain_loss(&model, &ckpt.params, corpus.forget())?;
    println!("wrote {} ({kind})", out.display());
    println!("retain_ce = {retain_ce}");
    println!("forget_ce = {forget_ce}");
    Ok(())
}

pub fn unlearn(
    config_path: &Path,
    corpus_path: &Path,
    reference_path: &Path,
    out_dir: &Path,
    forget_loss: Option<ForgetLossKind>,
) -> Result<(), Failure> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(kind) = forget_loss {
        config.solver.forget_loss = kind;
    }
    let corpus = corpus_for(&config, corpus_path)?;
    let model = TinyLm::new(config.model.clone())?;
    let reference = load_params(&config, &model, reference_path)?.params;
    let solver = config.solver();
    let out_dir = config.resolve_output(out_dir);
    materialize(&config, &out_dir.join("config.toml"))?;

    let run = match solver.mode {
        SolverMode::ConstrainedPdu => run_pdu(&model, &reference, &corpus, &solver),
        SolverMode::Scalarized => run_scalarized(&model, &reference, &corpus, &solver),
    };
    let mut summary = format!(
        "mode = {}\nforget_loss = {}\nalpha = {}\n",
        match solver.mode {
            SolverMode::ConstrainedPdu => "constrained-pdu",
            SolverMode::Scalarized => "scalarized",
        },
        solver.forget_loss.as_str(),
        solver.alpha
    );
    match run {
        Ok(outcome) => {
            let RunOutcome {
                params,
                lambda,
                epsilon,
                trace,
                ..
            } = outcome;
            write_output(&out_dir.join("trace.csv"), trace.to_csv().as_bytes())?;
            let retain_ce = retain_loss(&model, &params, corpus.retain())?;
            let _ = write!(
                summary,
                "status = completed\nsteps = {}\nepsilon = {epsilon}\nlambda = {lambda}\nretain_ce = {retain_ce}\n",
                trace.len()
            );
            write_output(&out_dir.join("summary.txt"), summary.as_bytes())?;
            let ckpt = Checkpoint::new(params)
                .with_model(&config.model)
                .with_meta("kind", "unlearned")
                .with_meta("lambda", lambda)
                .with_meta("epsilon", epsilon)
                .with_meta("alpha", solver.alpha);
            write_output(&out_dir.join("params.ckpt"), &write_checkpoint(&ckpt)?)?;
            println!("alpha = {}", solver.alpha);
            println!("epsilon = {epsilon}");
            println!("lambda = {lambda}");
            println!("retain_ce = {retain_ce}");
            println!("wrote {}", out_dir.display());
            Ok(())
        }
        Err(failure) => {
            write_output(
                &out_dir.join("trace.csv"),
                failure.trace.to_csv().as_bytes(),
            )?;
            let _ = write!(
                summary,
                "status = failed\nsteps = {}\nerror = {}\n",
                failure.trace.len(),
                failure.error
            );
            write_output(&out_dir.join("summary.txt"), summary.as_bytes())?;
            Err(failure.error.into())
        }
    }
}

pub fn eval(
    config_path: &Path,
    corpus_path: &Path,
    checkpoint: &Path,
    reference_path: &Path,
    oracle_path: Option<&Path>,
    out: &Path,
) -> Result<(), Failure> {
    let config = RunConfig::load(config_path)?;
    let corpus = corpus_for(&config, corpus_path)?;
    let model = TinyLm::new(config.model.clone())?;
    let params = load_params(&config, &model, checkpoint)?.params;
    let reference = load_params(&config, &model, reference_path)?.params;
    let oracle: Option<ParamSet<f64>> = match oracle_path {
        Some(p) => Some(load_params(&config, &model, p)?.params),
        None => None,
    };
    let epsilon = resolve_epsilon(&model, &reference, &corpus, &config.solver())?;
    let report = UnlearningReport::evaluate(
        &model,
        &params,
        &reference,
        oracle.as_ref(),
        &corpus,
        epsilon,
    )?;
    let out = config.resolve_output(out);
    write_output(&out, report.to_kv_string().as_bytes())?;
    materialize(&config, &sidecar(&out))?;
    println!("wrote {}", out.display());
    println!(
        "retain_ce = {} (epsilon {})",
        report.retain_ce, report.epsilon
    );
    println!("forget_success_proxy = {}", report.forget_success_proxy);
    if report.retain_satisfied {
        Ok(())
    } else {
        Err(Failure::Gate(format!(
            "retain CE {} exceeds epsilon {}",
            report.retain_ce, report.epsilon
        )))
    }
}

/// Logits file: `#` header lines, then one line per response position:
/// `<split> <example> <position> <logit_0> ... <logit_{V-1}>`, values in
/// shortest round-trip decimal form.
pub fn export_logits(
    config_path: &Path,
    corpus_path: &Path,
    checkpoint: &Path,
    out: &Path,
) -> Result<(), Failure> {
    let config = RunConfig::load(config_path)?;
    let corpus = corpus_for(&config, corpus_path)?;
    let model = TinyLm::new(config.model.clone())?;
    let params = load_params(&config, &model, checkpoint)?.params;
    let retain_ce = retain_loss(&model, &params, corpus.retain())?;
    let mut text = format!(
        "# vocab_size = {}\n# retain_ce = {retain_ce}\n",
        config.model.vocab_size
    );
    for (tag, split) in [("forget", corpus.forget()), ("retain", corpus.retain())] {
        for (i, ex) in split.iter().enumerate() {
            let z = logits(&model, &params, ex)?;
            for t in 0..z.rows() {
                let _ = write!(text, "{tag} {i} {t}");
                for v in z.row(t) {
                    let _ = write!(text, " {v}");
                }
                text.push('\n');
            }
        }
    }
    let out = config.resolve_output(out);
    write_output(&out, text.as_bytes())?;
    materialize(&config, &sidecar(&out))?;
    println!("wrote {}", out.display());
    println!("retain_ce = {retain_ce}");
    Ok(())
}
