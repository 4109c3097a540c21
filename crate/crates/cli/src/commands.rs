use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::Serialize;

use assetpop_core::content_embed::{embed_documents, load_word_vectors, parse_content};
use assetpop_core::eval::{abs_error_kde, compare_reports, cross_validate, spearman_rho, CvConfig, EvalReport, DEFAULT_GRID_POINTS};
use assetpop_core::event_log::{
    build_sequences, compute_popularity, filter_asset_events, parse_creators, parse_events, read_labels,
    read_sequences, remove_ghost_assets, write_labels, write_sequences, AssetSequence, EventRecord, PopularityLabel,
};
use assetpop_core::features::{analysis_subset, assemble, parse_instructor, InstructorFeatures, Representation, Sources};
use assetpop_core::models::TrainConfig;
use assetpop_core::skipgram::{nearest_neighbors, partner_query, train_skipgram, Neighbor, Objective, SkipGramConfig};
use assetpop_core::synth::{self, SynthConfig};
use assetpop_core::tsne::{emit_scatter, run_tsne, GradientMethod, TsneConfig};
use assetpop_core::AssetVectors;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

pub const SEQUENCES_FILE: &str = "sequences.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const ASSET2VEC_FILE: &str = "asset2vec.csv";
pub const CONTENT_VECTORS_FILE: &str = "avg_content.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PARTNERS_FILE: &str = "partners.json";
pub const TSNE_STEM: &str = "tsne";

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::TrainEmbed(a) => train_embed(&a),
        Command::EmbedContent(a) => embed_content(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Tsne(a) => tsne(&a),
        Command::Synth(a) => synth(&a),
        Command::Partner(a) => partner(&a),
    }
}

/// Reads and parses one input file, recording its digest.
fn load<T>(
    rec: &mut Recorder,
    what: &'static str,
    path: &Path,
    parse: fn(&[u8]) -> assetpop_core::Result<T>,
) -> CliResult<T> {
    let fail = |e: assetpop_core::Error| CliError::Input {
        what,
        path: path.to_path_buf(),
        source: Box::new(e),
    };
    let bytes = fs::read(path).map_err(|e| fail(e.into()))?;
    rec.input(path, &bytes);
    parse(&bytes).map_err(fail)
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

fn bytes(f: impl FnOnce(&mut Vec<u8>) -> assetpop_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json(value: &impl Serialize) -> CliResult<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value).map_err(assetpop_core::Error::from)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn cleaned_events(events: &[EventRecord], min_events: usize, start: Option<i64>, end: Option<i64>) -> CliResult<Vec<EventRecord>> {
    let windowed = filter_asset_events(events, start.unwrap_or(i64::MIN), end.unwrap_or(i64::MAX));
    let kept = remove_ghost_assets(&windowed, min_events)?;
    if kept.is_empty() {
        return Err(CliError::Core(assetpop_core::Error::InvalidInput(format!(
            "no asset has at least {min_events} events in the course window"
        ))));
    }
    Ok(kept)
}

fn skipgram_config(flags: &EmbedFlags, seed: u64) -> SkipGramConfig {
    SkipGramConfig {
        dim: flags.dim,
        window: flags.window,
        epochs: flags.epochs,
        learning_rate: flags.embed_learning_rate,
        objective: match flags.negatives {
            0 => Objective::FullSoftmax,
            negatives => Objective::NegativeSampling { negatives },
        },
        seed,
        track_loss: false,
    }
}

fn train_vectors(sequences: &[AssetSequence], flags: &EmbedFlags, seed: u64) -> CliResult<AssetVectors> {
    Ok(train_skipgram(sequences, &skipgram_config(flags, seed))?.asset_vectors()?)
}

fn ingest(a: &IngestArgs) -> CliResult<()> {
    let mut rec = Recorder::new("ingest", a);
    let events = load(&mut rec, "events file", &a.events, |b| parse_events(b))?;
    let creators = load(&mut rec, "creators file", &a.creators, |b| parse_creators(b))?;
    let kept = cleaned_events(&events, a.min_events, a.course_start, a.course_end)?;
    let sequences = build_sequences(&kept);
    let labels = compute_popularity(&kept, &creators)?;

    create_out(&a.out)?;
    rec.write(&a.out, SEQUENCES_FILE, &bytes(|w| write_sequences(&sequences, w))?)?;
    rec.write(&a.out, LABELS_FILE, &bytes(|w| write_labels(&labels, w))?)?;
    rec.finish(&a.out)?;
    println!(
        "ingest: {} of {} events kept, {} sequences, {} labelled assets",
        kept.len(),
        events.len(),
        sequences.len(),
        labels.len()
    );
    Ok(())
}

fn train_embed(a: &TrainEmbedArgs) -> CliResult<()> {
    let mut rec = Recorder::new("train-embed", a);
    rec.seed("skipgram", a.seed);
    let sequences = match (&a.sequences, &a.events) {
        (Some(path), _) => load(&mut rec, "sequences file", path, |b| read_sequences(b))?,
        (None, Some(path)) => {
            let events = load(&mut rec, "events file", path, |b| parse_events(b))?;
            build_sequences(&cleaned_events(&events, a.min_events, None, None)?)
        }
        (None, None) => return Err(CliError::Usage("train-embed needs --sequences or --events".into())),
    };
    let vectors = train_vectors(&sequences, &a.embed, a.seed)?;

    create_out(&a.out)?;
    rec.write(&a.out, ASSET2VEC_FILE, &bytes(|w| vectors.write_csv(w))?)?;
    rec.finish(&a.out)?;
    println!("train-embed: {} assets, dim {}", vectors.len(), vectors.dim());
    Ok(())
}

fn embed_content(a: &EmbedContentArgs) -> CliResult<()> {
    let mut rec = Recorder::new("embed-content", a);
    let docs = load(&mut rec, "content file", &a.content, |b| parse_content(b))?;
    let table = load(&mut rec, "word vector file", &a.word_vectors, |b| load_word_vectors(b))?;
    let vectors = embed_documents(&docs, &table)?;

    create_out(&a.out)?;
    rec.write(&a.out, CONTENT_VECTORS_FILE, &bytes(|w| vectors.write_csv(w))?)?;
    rec.finish(&a.out)?;
    println!("embed-content: {} assets, dim {}", vectors.len(), vectors.dim());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ResultRow {
    representation: Representation,
    model: String,
    overall_rmse: f64,
    fold_rmse: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Comparison {
    a: String,
    b: String,
    rmse_difference: f64,
    t: Option<f64>,
    p: Option<f64>,
    df: Option<f64>,
    note: Option<String>,
}

#[derive(Debug, Serialize)]
struct Summary {
    assets: usize,
    subset: Subset,
    label_mean: f64,
    label_std: f64,
    results: Vec<ResultRow>,
    comparisons: Vec<Comparison>,
    /// Spearman correlation of each instructor feature with popularity over
    /// the evaluated assets that carry instructor features.
    instructor_spearman: BTreeMap<String, Option<f64>>,
}

fn report_name(r: &EvalReport) -> String {
    format!("{}_{}", r.representation, r.model)
}

fn instructor_spearman(labels: &[PopularityLabel], instructor: &[InstructorFeatures]) -> BTreeMap<String, Option<f64>> {
    let by_id: HashMap<&str, &InstructorFeatures> = instructor.iter().map(|f| (f.asset_id.as_str(), f)).collect();
    let rows: Vec<(&InstructorFeatures, f64)> = labels
        .iter()
        .filter_map(|l| by_id.get(l.asset_id.as_str()).map(|f| (*f, l.popularity as f64)))
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let columns: [(&str, fn(&InstructorFeatures) -> f64); 5] = [
        ("acad", |f| f64::from(f.acad)),
        ("creativity", |f| f64::from(f.creativity)),
        ("day_asgmt", |f| f.day_asgmt as f64),
        ("title_len", |f| f64::from(f.title_len)),
        ("desc_len", |f| f64::from(f.desc_len)),
    ];
    columns
        .iter()
        .map(|(name, get)| {
            let x: Vec<f64> = rows.iter().map(|r| get(r.0)).collect();
            (name.to_string(), spearman_rho(&x, &y).ok())
        })
        .collect()
}

fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let mut rec = Recorder::new("evaluate", a);
    rec.seed("cv", a.seed);
    let reps = RepArg::expand(&a.rep);
    let models = ModelArg::expand(&a.model);
    let wants = |r: Representation| reps.contains(&r);
    let need_a2v = wants(Representation::Asset2vec) || wants(Representation::Ensemble);
    let need_content = wants(Representation::AvgContent) || wants(Representation::Ensemble);
    let coded_only = match a.subset {
        Subset::Auto => wants(Representation::Instructor),
        Subset::Coded => true,
        Subset::Labeled => false,
    };

    if a.labels.is_none() && (a.events.is_none() || a.creators.is_none()) {
        return Err(CliError::Usage("evaluate needs --labels, or --events with --creators".into()));
    }
    if need_a2v && a.asset2vec.is_none() && a.events.is_none() {
        return Err(CliError::Usage("asset2vec needs --asset2vec or --events".into()));
    }
    if need_content && a.content_vectors.is_none() && (a.content.is_none() || a.word_vectors.is_none()) {
        return Err(CliError::Usage(
            "avg_content needs --content-vectors, or --content with --word-vectors".into(),
        ));
    }
    if coded_only && a.instructor.is_none() {
        return Err(CliError::Usage("the instructor subset needs --instructor".into()));
    }

    let events = match &a.events {
        Some(path) if a.labels.is_none() || (need_a2v && a.asset2vec.is_none()) => {
            let events = load(&mut rec, "events file", path, |b| parse_events(b))?;
            Some(cleaned_events(&events, a.min_events, None, None)?)
        }
        _ => None,
    };
    let labels = match (&a.labels, &a.creators, &events) {
        (Some(path), _, _) => load(&mut rec, "labels file", path, |b| read_labels(b))?,
        (None, Some(path), Some(events)) => {
            let creators = load(&mut rec, "creators file", path, |b| parse_creators(b))?;
            compute_popularity(events, &creators)?
        }
        _ => unreachable!("checked above"),
    };
    let instructor = match &a.instructor {
        Some(path) => Some(load(&mut rec, "instructor file", path, |b| parse_instructor(b))?),
        None => None,
    };
    let content = match (&a.content_vectors, &a.content, &a.word_vectors) {
        (Some(path), _, _) if need_content => Some(load(&mut rec, "content vectors file", path, |b| AssetVectors::read_csv(b))?),
        (None, Some(c), Some(w)) if need_content => {
            let docs = load(&mut rec, "content file", c, |b| parse_content(b))?;
            let table = load(&mut rec, "word vector file", w, |b| load_word_vectors(b))?;
            Some(embed_documents(&docs, &table)?)
        }
        _ => None,
    };
    let asset2vec = match (&a.asset2vec, &events) {
        (Some(path), _) if need_a2v => Some(load(&mut rec, "asset2vec file", path, |b| AssetVectors::read_csv(b))?),
        (None, Some(events)) if need_a2v => {
            rec.seed("skipgram", a.seed);
            Some(train_vectors(&build_sequences(events), &a.embed, a.seed)?)
        }
        _ => None,
    };

    let labels = match (&instructor, coded_only) {
        (Some(instr), true) => analysis_subset(&labels, instr),
        _ => labels,
    };
    let sources = Sources {
        asset2vec: asset2vec.as_ref(),
        content: content.as_ref(),
        instructor: instructor.as_deref(),
    };
    let cv = CvConfig {
        folds: a.folds,
        seed: a.seed,
        hidden: a.hidden,
        train: TrainConfig {
            learning_rate: a.learning_rate,
            max_epochs: a.max_epochs,
            patience: a.patience,
            seed: a.seed,
            ..TrainConfig::default()
        },
    };
    let mut reports = Vec::new();
    for &rep in &reps {
        let set = assemble(rep, &sources, &labels)?;
        for &model in &models {
            reports.push(cross_validate(&set, model, &cv)?);
        }
    }
    let kdes = reports
        .iter()
        .map(|r| abs_error_kde(&r.abs_errors, DEFAULT_GRID_POINTS))
        .collect::<assetpop_core::Result<Vec<_>>>()?;

    let mut comparisons = Vec::new();
    for (i, ra) in reports.iter().enumerate() {
        for rb in &reports[i + 1..] {
            if ra.representation != rb.representation && ra.model != rb.model {
                continue;
            }
            let test = compare_reports(ra, rb);
            comparisons.push(Comparison {
                a: report_name(ra),
                b: report_name(rb),
                rmse_difference: ra.overall_rmse - rb.overall_rmse,
                t: test.as_ref().ok().map(|t| t.t),
                p: test.as_ref().ok().map(|t| t.p),
                df: test.as_ref().ok().map(|t| t.df),
                note: test.err().map(|e| e.to_string()),
            });
        }
    }
    let y: Vec<f64> = labels.iter().map(|l| l.popularity as f64).collect();
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len().max(1) as f64).sqrt();
    let summary = Summary {
        assets: labels.len(),
        subset: if coded_only { Subset::Coded } else { Subset::Labeled },
        label_mean: mean,
        label_std: std,
        results: reports
            .iter()
            .map(|r| ResultRow {
                representation: r.representation,
                model: r.model.to_string(),
                overall_rmse: r.overall_rmse,
                fold_rmse: r.fold_rmse.clone(),
            })
            .collect(),
        comparisons,
        instructor_spearman: instructor
            .as_deref()
            .map(|instr| instructor_spearman(&labels, instr))
            .unwrap_or_default(),
    };

    create_out(&a.out)?;
    for (r, kde) in reports.iter().zip(&kdes) {
        let name = report_name(r);
        rec.write(&a.out, &format!("report_{name}.json"), &json(r)?)?;
        rec.write(&a.out, &format!("kde_{name}.csv"), &bytes(|w| kde.write_csv(w))?)?;
    }
    rec.write(&a.out, SUMMARY_FILE, &json(&summary)?)?;
    rec.finish(&a.out)?;
    println!("evaluate: {} assets, {} folds", labels.len(), a.folds);
    for r in &reports {
        println!("  {:<12} {:<9} rmse {:.4}", r.representation.as_str(), r.model.as_str(), r.overall_rmse);
    }
    Ok(())
}

fn tsne(a: &TsneArgs) -> CliResult<()> {
    let mut rec = Recorder::new("tsne", a);
    rec.seed("tsne", a.seed);
    let vectors = load(&mut rec, "vectors file", &a.vectors, |b| AssetVectors::read_csv(b))?;
    let labels = match &a.labels {
        Some(path) => load(&mut rec, "labels file", path, |b| read_labels(b))?,
        None => Vec::new(),
    };
    let config = TsneConfig {
        perplexity: a.perplexity,
        theta: a.theta,
        iterations: a.iterations,
        learning_rate: a.learning_rate,
        method: if a.exact { GradientMethod::Exact } else { GradientMethod::BarnesHut },
        seed: a.seed,
        ..TsneConfig::default()
    };
    let embedding = run_tsne(&vectors, &config)?;
    let by_id: HashMap<&str, u64> = labels.iter().map(|l| (l.asset_id.as_str(), l.popularity)).collect();
    let popularity: Vec<u64> = embedding
        .asset_ids
        .iter()
        .map(|id| by_id.get(id.as_str()).copied().unwrap_or(0))
        .collect();

    create_out(&a.out)?;
    let stem = a.out.join(TSNE_STEM);
    emit_scatter(&embedding, &popularity, &stem)?;
    rec.written(stem.with_extension("svg"));
    rec.written(stem.with_extension("csv"));
    rec.finish(&a.out)?;
    println!("tsne: {} points, KL {:.4}", embedding.asset_ids.len(), embedding.kl_divergence);
    Ok(())
}

fn synth(a: &SynthArgs) -> CliResult<()> {
    let mut rec = Recorder::new("synth", a);
    rec.seed("synth", a.seed);
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        n_students: a.n_students,
        n_assets: a.n_assets,
        n_blocks: a.n_blocks,
        affinity: a.affinity,
        weights: a.weights.clone().unwrap_or(defaults.weights.clone()),
        bias: a.bias.unwrap_or(defaults.bias),
        topic_word_prob: a.topic_word_prob,
        instructor_fraction: a.instructor_fraction,
        seed: a.seed,
        ..defaults
    };
    let course = synth::generate(&config)?;

    create_out(&a.out)?;
    course.write_dir(&a.out)?;
    for name in [
        synth::EVENTS_FILE,
        synth::CREATORS_FILE,
        synth::CONTENT_FILE,
        synth::INSTRUCTOR_FILE,
        synth::WORD_VECTORS_FILE,
        synth::GROUND_TRUTH_FILE,
    ] {
        rec.written(a.out.join(name));
    }
    rec.finish(&a.out)?;
    println!(
        "synth: {} events, {} assets, {} students",
        course.events.len(),
        config.n_assets,
        config.n_students
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct PartnerOutput<'a> {
    asset: &'a str,
    beacon: Option<&'a str>,
    results: Vec<Neighbor>,
}

fn partner(a: &PartnerArgs) -> CliResult<()> {
    let mut rec = Recorder::new("partner", a);
    let vectors = load(&mut rec, "vectors file", &a.vectors, |b| AssetVectors::read_csv(b))?;
    let results = match &a.beacon {
        Some(beacon) => partner_query(&a.asset, beacon, &vectors, a.k)?,
        None => nearest_neighbors(&a.asset, &vectors, a.k)?,
    };
    let output = PartnerOutput {
        asset: &a.asset,
        beacon: a.beacon.as_deref(),
        results,
    };

    create_out(&a.out)?;
    rec.write(&a.out, PARTNERS_FILE, &json(&output)?)?;
    rec.finish(&a.out)?;
    for n in &output.results {
        println!("{}\t{:.6}", n.asset_id, n.similarity);
    }
    Ok(())
}
