use dg_core::eval::{evaluate, index_scenes, join_samples, Prediction, SceneObjects, ViewLexicon};
use dg_core::jsonl::{read_jsonl, to_jsonl};
use dg_core::lse::{
    augment_batch, build_sidb, Annotation, AnnotationBoxes, AugmentOptions, HttpLlm, LlmClient,
    LlmConfig, MockLlm, PromptTemplate, SceneInfoDB, API_KEY_ENV,
};

use super::{read_text, say, write_output};
use crate::error::{require_file, CliError, CliResult};
use crate::{AugmentArgs, Backend, EvalArgs, RunConfig, SidbBuildArgs};

pub fn sidb_build(cfg: &RunConfig, args: &SidbBuildArgs) -> CliResult<()> {
    require_file(&args.annotations)?;
    let annotations: Vec<Annotation> = read_jsonl(&args.annotations)?;
    let db = build_sidb(&annotations, &AnnotationBoxes)?;
    write_output(&args.out, db.to_json().as_bytes())?;
    let entries: usize = db.scenes.values().map(Vec::len).sum();
    say(
        cfg,
        format!("sidb: {} scenes, {entries} descriptions", db.scenes.len()),
    );
    Ok(())
}

pub fn augment(cfg: &RunConfig, args: &AugmentArgs) -> CliResult<()> {
    require_file(&args.sidb)?;
    require_file(&args.annotations)?;
    if let Some(t) = &args.template {
        require_file(t)?;
    }
    if args.k == 0 || args.max_in_flight == 0 {
        return Err(CliError::Config(
            "--k and --max-in-flight must be positive".into(),
        ));
    }
    let template = match &args.template {
        Some(p) => PromptTemplate::parse(&read_text(p)?)?,
        None => PromptTemplate::default_template(),
    };
    let client: Box<dyn LlmClient> = match args.backend {
        Backend::Mock => Box::new(MockLlm),
        Backend::Http => Box::new(HttpLlm::from_env(LlmConfig {
            endpoint: args.endpoint.clone(),
            model: args.model.clone(),
            api_key_env: API_KEY_ENV.into(),
            timeout_secs: 60,
            max_in_flight: args.max_in_flight,
            retries: 3,
            temperature: 0.0,
        })?),
    };
    let db = SceneInfoDB::from_json(&read_text(&args.sidb)?)?;
    let annotations: Vec<Annotation> = read_jsonl(&args.annotations)?;
    let opts = AugmentOptions {
        k: args.k,
        seed: cfg.seed,
        max_in_flight: args.max_in_flight,
    };
    let records = augment_batch(client.as_ref(), &db, &annotations, &template, &opts)?;
    write_output(&args.out, to_jsonl(&records).as_bytes())?;
    let augmented = records.iter().filter(|r| r.augmented).count();
    say(
        cfg,
        format!(
            "augment: {} records, {augmented} rewritten, {} kept",
            records.len(),
            records.len() - augmented
        ),
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> CliResult<()> {
    for p in [&args.preds, &args.gt, &args.scenes] {
        require_file(p)?;
    }
    if let Some(l) = &args.lexicon {
        require_file(l)?;
    }
    if !(0.0..1.0).contains(&args.threshold) {
        return Err(CliError::Config(format!(
            "--threshold {} outside [0, 1)",
            args.threshold
        )));
    }
    let lexicon = match &args.lexicon {
        Some(p) => ViewLexicon::parse(&read_text(p)?),
        None => ViewLexicon::default(),
    };
    let predictions: Vec<Prediction> = read_jsonl(&args.preds)?;
    let annotations: Vec<Annotation> = read_jsonl(&args.gt)?;
    let scenes = index_scenes(read_jsonl::<SceneObjects>(&args.scenes)?)?;
    let samples = join_samples(&annotations, &predictions)?;
    let report = evaluate(&samples, &scenes, args.threshold, &lexicon)?;
    write_output(&args.out, report.to_json().as_bytes())?;
    say(cfg, report.summary());
    Ok(())
}
