//! Config-driven experiment pipeline: parse, preprocess, split, analyze,
//! fit, recommend, evaluate and sweep, writing every artifact to one
//! output directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    dataset_stats, parse_dataset, preprocess_filter, temporal_split, write_file, Dataset, ParseOptions, SplitDataset,
    SplitFractions, UserId,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_run, group_metrics, per_user_metrics, test_relevance, validation_relevance, write_table_csv, EvalReport,
};
use crate::fusion::{rule_weights, simplex_grid, weight_sweep, FusionRule, FusionWeights, SweepObjective, SweepResult};
use crate::recommender::{
    recommend_all, recommendations_tsv, top_pois, FitConfig, FittedComponents, ModelKind, RankedList,
};
use crate::temporal::{
    assign_groups, build_profiles, correlation_analysis, group_stats, poi_popularity, temporal_histogram,
    GroupAssignment, UserTemporalProfile, WorkingHours,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub enabled: bool,
    pub step: f64,
    pub objective: SweepObjective,
    /// Cutoff at which validation nDCG is measured.
    pub cutoff: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            enabled: false,
            step: 0.1,
            objective: SweepObjective::MinDeltaNdcg,
            cutoff: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub checkins: PathBuf,
    pub pois: PathBuf,
    pub social: Option<PathBuf>,
    pub min_user_checkins: usize,
    pub min_poi_checkins: usize,
    pub max_malformed_fraction: f64,
    pub split: SplitFractions,
    pub working_hours: WorkingHours,
    pub group_quantile: f64,
    pub models: Vec<ModelKind>,
    pub fusion_rules: Vec<FusionRule>,
    pub fit: FitConfig,
    pub sweep: SweepConfig,
    pub cutoffs: Vec<usize>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    pub write_recommendations: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            checkins: PathBuf::from("checkins.tsv"),
            pois: PathBuf::from("pois.tsv"),
            social: None,
            min_user_checkins: 15,
            min_poi_checkins: 10,
            max_malformed_fraction: ParseOptions::default().max_malformed_fraction,
            split: SplitFractions::default(),
            working_hours: WorkingHours::default(),
            group_quantile: 0.2,
            models: vec![ModelKind::GeoSoCa, ModelKind::Lore],
            fusion_rules: vec![FusionRule::Product, FusionRule::Sum],
            fit: FitConfig::default(),
            sweep: SweepConfig::default(),
            cutoffs: vec![10, 20],
            out_dir: PathBuf::from("out"),
            seed: 42,
            threads: None,
            write_recommendations: true,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config. Relative paths inside it are resolved against the
    /// directory holding the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.checkins);
        resolve(&mut cfg.pois);
        if let Some(s) = cfg.social.as_mut() {
            resolve(s);
        }
        resolve(&mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        self.split.validate()?;
        self.working_hours.validate()?;
        self.fit.amc.validate()?;
        if !(0.0..=0.5).contains(&self.group_quantile) {
            return bad(format!(
                "group_quantile must lie in [0, 0.5], got {}",
                self.group_quantile
            ));
        }
        if self.models.is_empty() || self.fusion_rules.is_empty() {
            return bad("at least one model and one fusion rule are required".into());
        }
        for r in &self.fusion_rules {
            rule_weights(r)?;
        }
        if self.cutoffs.is_empty() || self.cutoffs.contains(&0) {
            return bad(format!(
                "cutoffs must be a nonempty list of positive values, got {:?}",
                self.cutoffs
            ));
        }
        if self.sweep.cutoff == 0 {
            return bad("sweep cutoff must be positive".into());
        }
        simplex_grid(self.sweep.step)?;
        if !(0.0..1.0).contains(&self.max_malformed_fraction) {
            return bad(format!(
                "max_malformed_fraction must lie in [0, 1), got {}",
                self.max_malformed_fraction
            ));
        }
        if self.fit.session_gap_hours <= 0.0 {
            return bad("session_gap_hours must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the serialized config, recorded in the manifest.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    fn max_cutoff(&self, with_sweep: bool) -> usize {
        let m = self.cutoffs.iter().copied().max().unwrap_or(1);
        if with_sweep {
            m.max(self.sweep.cutoff)
        } else {
            m
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Parse,
    Preprocess,
    Split,
    Analyze,
    Fit,
    Recommend,
    Evaluate,
    Sweep,
    Emit,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Parse => "parse",
            Stage::Preprocess => "preprocess",
            Stage::Split => "split",
            Stage::Analyze => "analyze",
            Stage::Fit => "fit",
            Stage::Recommend => "recommend",
            Stage::Evaluate => "evaluate",
            Stage::Sweep => "sweep",
            Stage::Emit => "emit",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn new(stage: Stage, source: Error) -> Self {
        StageError { stage, source }
    }

    /// 2 for configuration problems, 3 for unusable input data, 4 for any
    /// later stage failure.
    pub fn exit_code(&self) -> i32 {
        match self.stage {
            Stage::Config => 2,
            Stage::Parse | Stage::Preprocess | Stage::Split => 3,
            _ => 4,
        }
    }
}

/// How far a pipeline invocation goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    Preprocess,
    Analyze,
    Recommend,
    Evaluate,
    /// Everything up to evaluation plus the weight sweep, whatever the config
    /// says about it.
    Sweep,
    /// Every stage; the sweep runs when the config enables it.
    Run,
}

impl Goal {
    pub fn as_str(self) -> &'static str {
        match self {
            Goal::Preprocess => "preprocess",
            Goal::Analyze => "analyze",
            Goal::Recommend => "recommend",
            Goal::Evaluate => "evaluate",
            Goal::Sweep => "sweep",
            Goal::Run => "run",
        }
    }

    fn sweeps(self, cfg: &ExperimentConfig) -> bool {
        match self {
            Goal::Sweep => true,
            Goal::Run => cfg.sweep.enabled,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub goal: Goal,
    pub status: String,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub timings: Vec<StageTiming>,
    /// Artifact paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub model: ModelKind,
    pub result: SweepResult,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub reports: Vec<EvalReport>,
    pub sweeps: Vec<SweepOutcome>,
    pub artifacts: Vec<PathBuf>,
    pub manifest: Manifest,
}

struct Sink {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Sink {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_file(&path, bytes)?;
        if !self.written.contains(&path) {
            self.written.push(path);
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    fn csv<T: Serialize>(&mut self, rel: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
        self.write(rel, &bytes)
    }

    fn relative(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .written
            .iter()
            .map(|p| {
                p.strip_prefix(&self.root)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .replace('\\', "/")
            })
            .collect();
        v.sort();
        v
    }

    /// Renames everything written so far to `<name>.partial`.
    fn mark_partial(&self) {
        for p in &self.written {
            let mut target = p.clone().into_os_string();
            target.push(".partial");
            if let Err(e) = fs::rename(p, &target) {
                log::warn!("cannot mark {} as partial: {e}", p.display());
            }
        }
    }
}

#[derive(Serialize)]
struct HistogramRow {
    hour: usize,
    count: u64,
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    user_id: &'a str,
    n_checkins: usize,
    n_working: usize,
    n_leisure: usize,
    leisure_ratio: f64,
    working_ratio: f64,
    avg_popularity_consumption: f64,
    group: &'static str,
}

#[derive(Serialize)]
struct GroupRow<'a> {
    user_id: &'a str,
    group: &'static str,
    leisure_ratio: f64,
}

#[derive(Serialize)]
struct GroupStatsRow {
    group: &'static str,
    n_users: usize,
    n_checkins: usize,
    avg_popularity_consumption: f64,
    avg_activity_level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    #[serde(rename = "nDCG")]
    pub ndcg: f64,
    #[serde(rename = "nDCG_L")]
    pub ndcg_leisure: f64,
    #[serde(rename = "nDCG_W")]
    pub ndcg_working: f64,
    #[serde(rename = "dnDCG")]
    pub delta_ndcg: f64,
    pub acc_unf: Option<f64>,
}

pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

struct Clock {
    timings: Vec<StageTiming>,
}

impl Clock {
    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T>) -> std::result::Result<T, StageError> {
        let start = Instant::now();
        log::info!("stage {stage}");
        let out = f().map_err(|e| StageError::new(stage, e));
        self.timings.push(StageTiming {
            stage,
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn file_tag(kind: ModelKind, rule: &FusionRule) -> String {
    format!("{}_{}", kind.name().to_ascii_lowercase(), rule.name())
}

struct Analysis {
    profiles: Vec<UserTemporalProfile>,
    groups: GroupAssignment,
}

fn analyze(dataset: &Dataset, split: &SplitDataset, cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Analysis> {
    let histogram = temporal_histogram(dataset.checkins());
    sink.csv(
        "histogram.csv",
        histogram
            .iter()
            .enumerate()
            .map(|(hour, &count)| HistogramRow { hour, count }),
    )?;
    let popularity = poi_popularity(split, dataset.n_pois());
    let profiles = build_profiles(split, &popularity, &cfg.working_hours);
    let groups = assign_groups(&profiles, cfg.group_quantile)?;
    sink.csv(
        "profiles.csv",
        profiles.iter().map(|p| ProfileRow {
            user_id: dataset.user_name(p.user),
            n_checkins: p.n_checkins,
            n_working: p.n_working,
            n_leisure: p.n_leisure,
            leisure_ratio: p.leisure_ratio,
            working_ratio: p.working_ratio(),
            avg_popularity_consumption: p.avg_popularity_consumption,
            group: groups.group_of(p.user).as_str(),
        }),
    )?;
    sink.csv(
        "groups.csv",
        profiles.iter().map(|p| GroupRow {
            user_id: dataset.user_name(p.user),
            group: groups.group_of(p.user).as_str(),
            leisure_ratio: p.leisure_ratio,
        }),
    )?;
    let stats = group_stats(&groups, &profiles)?;
    sink.csv(
        "group_stats.csv",
        stats.iter().map(|s| GroupStatsRow {
            group: s.group.as_str(),
            n_users: s.n_users,
            n_checkins: s.n_checkins,
            avg_popularity_consumption: s.avg_popularity_consumption,
            avg_activity_level: s.avg_activity_level,
        }),
    )?;
    sink.json("correlations.json", &correlation_analysis(&profiles)?)?;
    Ok(Analysis { profiles, groups })
}

/// Ranked lists for one model: one map per configured rule, then one per
/// sweep grid point.
struct ModelLists {
    kind: ModelKind,
    by_rule: Vec<BTreeMap<UserId, RankedList>>,
    by_grid: Vec<BTreeMap<UserId, RankedList>>,
}

fn recommend(
    components: &FittedComponents<'_>,
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    with_sweep: bool,
    sink: &mut Sink,
) -> Result<Vec<ModelLists>> {
    let grid = if with_sweep {
        simplex_grid(cfg.sweep.step)?
    } else {
        Vec::new()
    };
    let mut weights: Vec<FusionWeights> = cfg.fusion_rules.iter().map(rule_weights).collect::<Result<_>>()?;
    let n_rules = weights.len();
    for l in &grid {
        weights.push(rule_weights(&FusionRule::WeightedSum(*l))?);
    }
    let n = cfg.max_cutoff(with_sweep);
    let mut out = Vec::new();
    for &kind in &cfg.models {
        let mut lists = recommend_all(components, kind, &weights, n)?;
        let by_grid = lists.split_off(n_rules);
        if cfg.write_recommendations {
            for (rule, l) in cfg.fusion_rules.iter().zip(&lists) {
                let name = format!("recommendations/{}.tsv", file_tag(kind, rule));
                sink.write(&name, recommendations_tsv(dataset, l).as_bytes())?;
            }
        }
        out.push(ModelLists {
            kind,
            by_rule: lists,
            by_grid,
        });
    }
    Ok(out)
}

fn evaluate(
    lists: &[ModelLists],
    split: &SplitDataset,
    groups: &GroupAssignment,
    cfg: &ExperimentConfig,
) -> Result<Vec<EvalReport>> {
    let relevant = test_relevance(split);
    let mut reports = Vec::new();
    for m in lists {
        let baseline = match cfg.fusion_rules.iter().position(|r| *r == FusionRule::Product) {
            Some(i) => Some(evaluate_run(
                m.kind.name(),
                &FusionRule::Product.to_string(),
                &top_pois(&m.by_rule[i], cfg.max_cutoff(false)),
                &relevant,
                groups,
                &cfg.cutoffs,
                None,
            )?),
            None => None,
        };
        for (rule, l) in cfg.fusion_rules.iter().zip(&m.by_rule) {
            let report = match (rule, &baseline) {
                (FusionRule::Product, Some(b)) => b.clone(),
                _ => evaluate_run(
                    m.kind.name(),
                    &rule.to_string(),
                    &top_pois(l, cfg.max_cutoff(false)),
                    &relevant,
                    groups,
                    &cfg.cutoffs,
                    baseline.as_ref(),
                )?,
            };
            reports.push(report);
        }
    }
    Ok(reports)
}

fn sweep(
    lists: &[ModelLists],
    split: &SplitDataset,
    groups: &GroupAssignment,
    cfg: &ExperimentConfig,
    reports: &mut Vec<EvalReport>,
) -> Result<Vec<SweepOutcome>> {
    let grid = simplex_grid(cfg.sweep.step)?;
    let validation = validation_relevance(split);
    let relevant = test_relevance(split);
    let mut outcomes = Vec::new();
    for m in lists {
        let result = weight_sweep(cfg.sweep.step, cfg.sweep.objective, |l| {
            let i = grid.iter().position(|g| *g == l).expect("same grid");
            let recs = top_pois(&m.by_grid[i], cfg.sweep.cutoff);
            let per_user = per_user_metrics(&recs, &validation, cfg.sweep.cutoff);
            group_metrics(&per_user.metrics, groups, None)
        })?;
        let best = result.best.lambdas;
        let i = grid.iter().position(|g| *g == best).expect("same grid");
        let baseline = reports
            .iter()
            .find(|r| r.model == m.kind.name() && r.fusion == FusionRule::Product.to_string())
            .cloned();
        let report = evaluate_run(
            m.kind.name(),
            &FusionRule::WeightedSum(best).to_string(),
            &top_pois(&m.by_grid[i], cfg.max_cutoff(false)),
            &relevant,
            groups,
            &cfg.cutoffs,
            baseline.as_ref(),
        )?;
        let at = reports
            .iter()
            .rposition(|r| r.model == m.kind.name())
            .map_or(reports.len(), |p| p + 1);
        reports.insert(at, report);
        outcomes.push(SweepOutcome { model: m.kind, result });
    }
    Ok(outcomes)
}

fn write_tables(reports: &[EvalReport], sink: &mut Sink) -> Result<()> {
    let mut bytes = Vec::new();
    write_table_csv(reports, &mut bytes)?;
    sink.write("table3.csv", &bytes)?;
    sink.json("table3.json", &reports)
}

fn write_sweep(outcomes: &[SweepOutcome], sink: &mut Sink) -> Result<()> {
    let rows = outcomes.iter().flat_map(|o| {
        o.result.table.iter().map(move |p| SweepRow {
            model: o.model.name().to_owned(),
            lambda1: p.lambdas[0],
            lambda2: p.lambdas[1],
            lambda3: p.lambdas[2],
            ndcg: p.metrics.ndcg_all,
            ndcg_leisure: p.metrics.ndcg_leisure,
            ndcg_working: p.metrics.ndcg_working,
            delta_ndcg: p.metrics.delta_ndcg,
            acc_unf: p.metrics.acc_unf,
        })
    });
    sink.csv("sweep.csv", rows)?;
    let best: BTreeMap<&str, _> = outcomes.iter().map(|o| (o.model.name(), &o.result.best)).collect();
    sink.json("sweep_best.json", &best)
}

fn execute(
    cfg: &ExperimentConfig,
    goal: Goal,
    sink: &mut Sink,
    clock: &mut Clock,
) -> std::result::Result<(Vec<EvalReport>, Vec<SweepOutcome>), StageError> {
    let opts = ParseOptions {
        max_malformed_fraction: cfg.max_malformed_fraction,
    };
    let (raw, load_report) = clock.time(Stage::Parse, || {
        let out = parse_dataset(&cfg.checkins, &cfg.pois, cfg.social.as_deref(), &opts)?;
        sink.json("load_report.json", &out.1)?;
        Ok(out)
    })?;
    log::info!(
        "loaded {} users, {} POIs, {} check-ins ({} malformed lines)",
        raw.n_users(),
        raw.n_pois(),
        raw.checkins().len(),
        load_report.checkins_malformed
    );
    let dataset = clock.time(Stage::Preprocess, || {
        let (d, report) = preprocess_filter(&raw, cfg.min_user_checkins, cfg.min_poi_checkins)?;
        sink.json("filter_report.json", &report)?;
        sink.json(
            "stats.json",
            &serde_json::json!({
                "raw": dataset_stats(&raw).to_report_json(),
                "filtered": dataset_stats(&d).to_report_json(),
            }),
        )?;
        let dir = sink.root.join("filtered");
        d.write_tsv(&dir)?;
        for f in ["checkins.tsv", "pois.tsv", "social.tsv"] {
            sink.written.push(dir.join(f));
        }
        Ok(d)
    })?;
    drop(raw);
    if goal == Goal::Preprocess {
        return Ok((Vec::new(), Vec::new()));
    }

    let split = clock.time(Stage::Split, || {
        let s = temporal_split(&dataset, &cfg.split)?;
        sink.json("split_report.json", &s.report)?;
        Ok(s)
    })?;
    let analysis = clock.time(Stage::Analyze, || analyze(&dataset, &split, cfg, sink))?;
    log::info!(
        "{} profiles, {} leisure-focused, {} working-focused",
        analysis.profiles.len(),
        analysis.groups.leisure_focused.len(),
        analysis.groups.working_focused.len()
    );
    if goal == Goal::Analyze {
        return Ok((Vec::new(), Vec::new()));
    }

    let components = clock.time(Stage::Fit, || {
        let c = FittedComponents::fit(&dataset, &split, cfg.fit)?;
        sink.json("models.json", &c.summary())?;
        sink.write("l2tg.tsv", c.graph().to_tsv(|p| dataset.poi(p).name.clone()).as_bytes())?;
        Ok(c)
    })?;
    let with_sweep = goal.sweeps(cfg);
    let lists = clock.time(Stage::Recommend, || {
        recommend(&components, &dataset, cfg, with_sweep, sink)
    })?;
    if goal == Goal::Recommend {
        return Ok((Vec::new(), Vec::new()));
    }

    let mut reports = clock.time(Stage::Evaluate, || {
        let r = evaluate(&lists, &split, &analysis.groups, cfg)?;
        write_tables(&r, sink)?;
        Ok(r)
    })?;
    let mut outcomes = Vec::new();
    if with_sweep {
        outcomes = clock.time(Stage::Sweep, || {
            let o = sweep(&lists, &split, &analysis.groups, cfg, &mut reports)?;
            write_sweep(&o, sink)?;
            write_tables(&reports, sink)?;
            Ok(o)
        })?;
    }
    Ok((reports, outcomes))
}

/// Runs the pipeline up to `goal`. On failure every artifact written by this
/// invocation is renamed with a `.partial` suffix and the error names the
/// failing stage.
pub fn run_pipeline(cfg: &ExperimentConfig, goal: Goal) -> std::result::Result<RunSummary, StageError> {
    cfg.validate().map_err(|e| StageError::new(Stage::Config, e))?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| StageError::new(Stage::Config, Error::io(&cfg.out_dir, e)))?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.threads {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| StageError::new(Stage::Config, Error::InvalidParameter(e.to_string())))?
    };
    let mut sink = Sink {
        root: cfg.out_dir.clone(),
        written: Vec::new(),
    };
    let mut clock = Clock { timings: Vec::new() };
    let result = pool.install(|| execute(cfg, goal, &mut sink, &mut clock));
    let mut manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        goal,
        status: "ok".to_owned(),
        failed_stage: None,
        error: None,
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        threads: pool.current_num_threads(),
        timings: clock.timings,
        artifacts: sink.relative(),
        config: cfg.clone(),
    };
    match result {
        Ok((reports, sweeps)) => {
            sink.json("manifest.json", &manifest)
                .map_err(|e| StageError::new(Stage::Emit, e))?;
            Ok(RunSummary {
                out_dir: cfg.out_dir.clone(),
                reports,
                sweeps,
                artifacts: sink.written,
                manifest,
            })
        }
        Err(err) => {
            manifest.status = "failed".to_owned();
            manifest.failed_stage = Some(err.stage);
            manifest.error = Some(err.source.to_string());
            if let Err(e) = sink.json("manifest.json", &manifest) {
                log::warn!("cannot write manifest: {e}");
            }
            sink.mark_partial();
            Err(err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_constants() {
        let c = ExperimentConfig::default();
        assert_eq!((c.min_user_checkins, c.min_poi_checkins), (15, 10));
        assert_eq!(
            c.working_hours,
            WorkingHours {
                start_hour: 8,
                end_hour: 18
            }
        );
        assert_eq!(c.group_quantile, 0.2);
        assert_eq!(c.cutoffs, vec![10, 20]);
        assert_eq!(c.seed, 42);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_uses_defaults_and_rejects_unknown_keys() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"group_quantile": 0.1, "sweep": {"enabled": true}}"#).unwrap();
        assert_eq!(c.group_quantile, 0.1);
        assert!(c.sweep.enabled);
        assert_eq!(c.sweep.step, 0.1);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"quantile": 0.1}"#).is_err());
        let rules: ExperimentConfig =
            serde_json::from_str(r#"{"fusion_rules": ["product", {"weighted_sum": [0.2, 0.3, 0.5]}]}"#).unwrap();
        assert_eq!(rules.fusion_rules[1], FusionRule::WeightedSum([0.2, 0.3, 0.5]));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = ExperimentConfig {
            group_quantile: 0.7,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
        c.group_quantile = 0.2;
        c.cutoffs = vec![0];
        assert!(c.validate().is_err());
        c.cutoffs = vec![10];
        c.sweep.step = 0.3;
        assert!(c.validate().is_err());
        let err = run_pipeline(&c, Goal::Run).unwrap_err();
        assert_eq!(err.stage, Stage::Config);
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
