use std::fs;
use std::path::Path;

use charnet_collector::Collector;
use charnet_core::climax::{computer_climax, human_climax, ClimaxCurve};
use charnet_core::corpus::{segment, CharacterRegistry, TextUnit};
use charnet_core::extraction::{events_to_tsv, extract_network, Extraction};
use charnet_core::netops::{
    graph_metrics, pearson_correlation_with, permutation_significance, sigma_correct,
    threshold_binarize, CorrelationOptions,
};
use charnet_core::stats::{
    design_from_respondents, logistic_fit, OutcomeThreshold, RegressionDesign, RespondentSummary,
};
use charnet_core::survey::{
    average_network, democracy_normalize, respondent_network, scale_to_pattern, Response,
    ResponseSet,
};
use charnet_core::WeightedNetwork;

use crate::report::Report;
use crate::{
    ClimaxArgs, CliError, CompareArgs, ExtractArgs, MetricsArgs, Preprocess, RegressArgs,
    ServeArgs, StoryArgs, SurveyArgs,
};

fn shown(path: &Path) -> String {
    path.display().to_string()
}

/// File name only, so reports do not depend on where inputs live.
fn base(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| shown(path), |n| n.to_string_lossy().into_owned())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: shown(path),
        source,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io {
        path: shown(&path),
        source,
    })?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: shown(dir),
        source,
    })
}

fn emit(report: &Report, out: Option<&Path>) -> Result<(), CliError> {
    print!("{}", report.as_str());
    if let Some(path) = out {
        fs::write(path, report.as_str()).map_err(|source| CliError::Io {
            path: shown(path),
            source,
        })?;
    }
    Ok(())
}

fn load_registry(path: &Path) -> Result<CharacterRegistry, CliError> {
    CharacterRegistry::from_toml_str(&read(path)?).map_err(|e| CliError::Registry {
        path: shown(path),
        message: e.to_string(),
    })
}

pub fn load_network(path: &Path) -> Result<WeightedNetwork, CliError> {
    let text = read(path)?;
    let parsed = if text.starts_with("#charnet-matrix") {
        WeightedNetwork::from_matrix(&text)
    } else {
        WeightedNetwork::from_edge_list(&text)
    };
    parsed.map_err(|e| CliError::Format {
        path: shown(path),
        message: e.to_string(),
    })
}

fn load_responses(path: &Path, registry: &CharacterRegistry) -> Result<ResponseSet, CliError> {
    let text = read(path)?;
    let parsed = if text.trim_start().starts_with('{') {
        ResponseSet::from_json(&text, Some(registry))
    } else {
        ResponseSet::from_lines(&text, Some(registry))
    };
    parsed.map_err(|e| CliError::Format {
        path: shown(path),
        message: e.to_string(),
    })
}

fn analysis(e: impl std::fmt::Display) -> CliError {
    CliError::Analysis(e.to_string())
}

fn run_extraction(args: &StoryArgs) -> Result<(CharacterRegistry, Vec<TextUnit>, Extraction), CliError> {
    let registry = load_registry(&args.registry)?;
    let text = read(&args.story)?;
    let units = segment(&text, args.unit);
    let x = extract_network(&units, &registry, !args.no_plus_one).map_err(analysis)?;
    Ok((registry, units, x))
}

pub fn extract(args: ExtractArgs) -> Result<(), CliError> {
    let (registry, units, x) = run_extraction(&args.story)?;
    ensure_dir(&args.out)?;
    write(&args.out, "computer.edges", &x.network.to_edge_list())?;
    write(&args.out, "computer.matrix", &x.network.to_matrix())?;
    write(&args.out, "events.tsv", &events_to_tsv(&x.events))?;
    let mut r = Report::default();
    r.text("story", &base(&args.story.story))
        .text("story_id", registry.story_id())
        .text("unit", &args.story.unit.to_string())
        .flag("plus_one", !args.story.no_plus_one)
        .count("units", units.len())
        .count("events", x.events.len())
        .count("nodes", x.network.n_nodes())
        .count("edges", x.network.n_edges())
        .real("total_weight", x.network.total_weight(), 6)
        .real("max_weight", x.network.max_weight(), 6);
    if let Some(p) = args.pattern_max {
        let scaled = scale_to_pattern(&x.network, p).map_err(analysis)?;
        write(&args.out, "computer.scaled.edges", &scaled.to_edge_list())?;
        r.real("pattern_max", p, 6);
    }
    write(&args.out, "extract.toml", r.as_str())?;
    emit(&r, None)
}

pub fn survey_aggregate(args: SurveyArgs) -> Result<(), CliError> {
    let registry = load_registry(&args.registry)?;
    let set = load_responses(&args.responses, &registry)?;
    ensure_dir(&args.out)?;
    let mut r = Report::default();
    r.text("responses", &base(&args.responses))
        .text("story_id", &set.story_id)
        .count("respondents", set.respondents.len())
        .real("pattern_max", args.pattern_max, 6);
    let task1: Vec<_> = set.task1_responses().map(Response::Task1).collect();
    let task2: Vec<_> = set.task2_responses().map(Response::Task2).collect();
    for (name, responses) in [("task1", task1), ("task2", task2)] {
        if responses.is_empty() {
            continue;
        }
        let nets = responses
            .iter()
            .map(|resp| respondent_network(*resp, &registry))
            .collect::<Result<Vec<_>, _>>()
            .map_err(analysis)?;
        let democracy = democracy_normalize(&nets).map_err(analysis)?;
        let mean = average_network(&democracy.networks)
            .map_err(analysis)?
            .with_provenance(format!("{name}/democracy-mean"));
        let out = if mean.max_weight() > 0.0 {
            scale_to_pattern(&mean, args.pattern_max)
                .map_err(analysis)?
                .with_provenance(format!("{name}/democracy-mean/pattern"))
        } else {
            mean
        };
        write(&args.out, &format!("{name}.edges"), &out.to_edge_list())?;
        let warnings: Vec<String> = democracy.warnings.iter().map(|w| w.to_string()).collect();
        r.section(name)
            .count("networks", nets.len())
            .real("target_total", democracy.target_total, 6)
            .count("edges", out.n_edges())
            .real("max_weight", out.max_weight(), 6)
            .list("warnings", &warnings);
    }
    write(&args.out, "survey.toml", r.as_str())?;
    emit(&r, None)
}

/// Applies the optional correction; returns the network and a note for the report.
fn preprocess(net: WeightedNetwork, pre: &Preprocess) -> Result<(WeightedNetwork, Option<String>), CliError> {
    if let Some(k) = pre.sigma {
        let c = sigma_correct(&net, k).map_err(analysis)?;
        let note = format!("sigma k={k}: {} link(s) deleted", c.deleted.len());
        for w in &c.warnings {
            log::warn!("{w}");
        }
        return Ok((c.network, Some(note)));
    }
    if let Some(t) = pre.threshold {
        let b = threshold_binarize(&net, t).map_err(analysis)?;
        let note = format!("threshold t={t}: {} edge(s) kept", b.n_edges());
        return Ok((b.to_weighted(net.provenance()), Some(note)));
    }
    Ok((net, None))
}

pub fn compare(args: CompareArgs) -> Result<(), CliError> {
    let (a, note_a) = preprocess(load_network(&args.a)?, &args.pre)?;
    let (b, note_b) = preprocess(load_network(&args.b)?, &args.pre)?;
    let opts = CorrelationOptions {
        include_zero_pairs: !args.exclude_zero_pairs,
    };
    let r_value = pearson_correlation_with(&a, &b, opts).map_err(analysis)?;
    let sig = permutation_significance(&a, &b, args.permutations, args.seed, opts).map_err(analysis)?;
    let mut r = Report::default();
    r.text("a", &base(&args.a))
        .text("b", &base(&args.b))
        .flag("include_zero_pairs", opts.include_zero_pairs)
        .real("r", r_value, 6)
        .real("p_value", sig.p_value, 6)
        .count("permutations", sig.permutations)
        .int("seed", i64::try_from(sig.seed).unwrap_or(i64::MAX));
    let notes: Vec<String> = [note_a, note_b].into_iter().flatten().collect();
    if !notes.is_empty() {
        r.list("preprocessing", &notes);
    }
    emit(&r, args.out.as_deref())
}

fn write_curve(dir: &Path, name: &str, curve: &ClimaxCurve, chart: bool) -> Result<(), CliError> {
    write(dir, &format!("{name}.climax.tsv"), &curve.to_tsv())?;
    if chart {
        write(dir, &format!("{name}.climax.svg"), &curve.to_svg(&format!("{name} climax")))?;
    }
    Ok(())
}

fn curve_section(r: &mut Report, name: &str, curve: &ClimaxCurve, tol: f64) {
    r.section(name)
        .text("shape", &curve.shape(tol).to_string())
        .reals("normalized", &curve.normalized, 6);
}

pub fn climax(args: ClimaxArgs) -> Result<(), CliError> {
    let (registry, units, x) = run_extraction(&args.story)?;
    let parts = args.parts as usize;
    let computer = computer_climax(&units, &x.events, parts).map_err(analysis)?;
    ensure_dir(&args.out)?;
    write_curve(&args.out, "computer", &computer, !args.no_chart)?;
    let mut r = Report::default();
    r.text("story", &base(&args.story.story))
        .text("unit", &args.story.unit.to_string())
        .count("parts", parts)
        .real("tolerance", args.tolerance, 6);
    curve_section(&mut r, "computer", &computer, args.tolerance);
    if let Some(path) = &args.responses {
        let set = load_responses(path, &registry)?;
        let responses: Vec<_> = set.task1_responses().cloned().collect();
        let human = human_climax(&responses, parts).map_err(analysis)?;
        for w in &human.warnings {
            log::warn!("{w}");
        }
        write_curve(&args.out, "human", &human.curve, !args.no_chart)?;
        curve_section(&mut r, "human", &human.curve, args.tolerance);
        r.count("respondents", human.respondents);
    }
    write(&args.out, "climax.toml", r.as_str())?;
    emit(&r, None)
}

pub fn metrics(args: MetricsArgs) -> Result<(), CliError> {
    let (net, note) = preprocess(load_network(&args.network)?, &args.pre)?;
    let m = graph_metrics(&net).map_err(analysis)?;
    let mut r = Report::default();
    r.text("network", &base(&args.network))
        .count("nodes", m.n_nodes)
        .count("edges", m.n_edges)
        .real("density", m.density, 7)
        .real("average_degree", m.average_degree, 7);
    if args.undirected_density {
        r.real("undirected_density", m.undirected_density(), 7);
    }
    if let Some(n) = note {
        r.text("preprocessing", &n);
    }
    emit(&r, args.out.as_deref())
}

fn summaries(set: &ResponseSet, registry: &CharacterRegistry) -> Result<Vec<RespondentSummary>, CliError> {
    let mut out = Vec::new();
    for resp in &set.respondents {
        let (Some(t1), Some(t2), Some(profile)) = (&resp.task1, &resp.task2, &resp.profile) else {
            log::warn!("respondent {} is incomplete; left out", resp.id);
            continue;
        };
        let n1 = respondent_network(Response::Task1(t1), registry).map_err(analysis)?;
        let n2 = respondent_network(Response::Task2(t2), registry).map_err(analysis)?;
        let agreement = match pearson_correlation_with(&n1, &n2, CorrelationOptions::default()) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("respondent {}: {e}; left out", resp.id);
                continue;
            }
        };
        out.push(RespondentSummary {
            profile: profile.clone(),
            agreement,
            task1_entry_sum: t1.entries.iter().map(|e| e.importance).sum(),
            task2_weight_sum: t2.cells.values().sum(),
        });
    }
    Ok(out)
}

pub fn regress(args: RegressArgs) -> Result<(), CliError> {
    let design = match (&args.design, &args.responses, &args.registry) {
        (Some(path), _, _) => RegressionDesign::from_delimited(&read(path)?).map_err(|e| CliError::Format {
            path: shown(path),
            message: e.to_string(),
        })?,
        (None, Some(responses), Some(registry)) => {
            let registry = load_registry(registry)?;
            let set = load_responses(responses, &registry)?;
            let threshold = args.cutoff.map_or(OutcomeThreshold::Median, OutcomeThreshold::Fixed);
            design_from_respondents(&summaries(&set, &registry)?, threshold).map_err(analysis)?
        }
        _ => return Err(CliError::Analysis("give --design, or --responses with --registry".into())),
    };
    let fit = logistic_fit(&design).map_err(analysis)?;
    if !fit.converged {
        log::warn!("fit did not converge; coefficients may diverge (separated data?)");
    }
    let table = fit.report_table();
    print!("{table}");
    if let Some(path) = &args.out {
        fs::write(path, &table).map_err(|source| CliError::Io {
            path: shown(path),
            source,
        })?;
    }
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let registries = args
        .registry
        .iter()
        .map(|p| load_registry(p))
        .collect::<Result<Vec<_>, _>>()?;
    let collector = Collector::open(&args.data_dir, registries).map_err(|e| CliError::Server(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.bind)
            .await
            .map_err(|e| CliError::Server(format!("bind {}: {e}", args.bind)))?;
        eprintln!("charnet: serving {} on http://{}/v1", collector.story_ids().collect::<Vec<_>>().join(", "), args.bind);
        charnet_collector::serve(listener, collector)
            .await
            .map_err(|e| CliError::Server(e.to_string()))
    })
}
