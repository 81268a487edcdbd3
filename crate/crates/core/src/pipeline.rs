//! Batch commands behind the command-line tool.
//!
//! Every command builds its complete output bundle in memory before anything
//! touches the disk, so a failing run never leaves a half-written directory.
//! All maps are ordered and floats print through the shortest round-trip
//! formatter, which makes bundles byte-identical across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dependence::{
    estimate_joint, extract_average_clusters, extract_clusters, label_samples, rank_recovery_speed, BinSpec,
    CategoryLabel, CategoryThresholds, ClusterConfig, ClusterHint, ClusterRegion, JointGrid, LabeledSample,
    RankedSample,
};
use crate::error::{Error, Result};
use crate::event::{category_pending_series, FailureEvent, SeverityClass, SeverityThresholds, DEFAULT_STEP};
use crate::impact::{cumulative_downtime_growth, impact_report, ImpactReport};
use crate::ingest::{group_into_events, parse_outage_csv, write_outage_csv, FailureRecord, ValidationReport, DEFAULT_QUIET_GAP};
use crate::scaling::{failure_scaling, recovery_scaling, rule_summary, top_customer_share, RuleSummary};
use crate::synth::{generate_event, SynthConfig};
use crate::triage::{aggregate_tipping, baseline_curve, tipping_point, TippingStats, DEFAULT_EPSILON};

pub const TOOL_NAME: &str = "restoration";

pub const EVENTS_FILE: &str = "events.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const TIPPING_FILE: &str = "tipping.json";

/// Output files of one command, held in memory until written.
#[derive(Debug, Default)]
pub struct Bundle {
    files: Vec<(String, Vec<u8>)>,
    pub warnings: Vec<String>,
}

impl Bundle {
    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn csv(&mut self, name: impl Into<String>, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
        self.add(name, bytes);
        Ok(())
    }

    fn absorb(&mut self, other: Bundle) {
        self.files.extend(other.files);
        self.warnings.extend(other.warnings);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
}

/// Provenance of one command run. It lists every other file the run wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<String>,
    pub config: serde_json::Value,
    pub output_dir: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }
}

/// Write `bundle` and its manifest into `out_dir`.
pub fn write_bundle<C: Serialize>(
    out_dir: &Path,
    command: &str,
    inputs: &[&Path],
    config: &C,
    seeds: Vec<u64>,
    bundle: &Bundle,
) -> Result<RunManifest> {
    let manifest = RunManifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config: serde_json::to_value(config)?,
        output_dir: out_dir.display().to_string(),
        seeds,
        outputs: bundle
            .files
            .iter()
            .map(|(path, bytes)| ManifestEntry {
                path: path.clone(),
                bytes: bytes.len(),
            })
            .collect(),
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    manifest_bytes.push(b'\n');

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest_name = RunManifest::file_name(command);
    for (name, bytes) in bundle.files.iter().chain(std::iter::once(&(manifest_name, manifest_bytes))) {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(manifest)
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn class_file(prefix: &str, class: SeverityClass, ext: &str) -> String {
    format!("{prefix}_{}.{ext}", class.as_str().to_lowercase())
}

// ---------------------------------------------------------------- synth

pub fn cmd_synth(config: &SynthConfig) -> Result<Bundle> {
    let trace = generate_event(config)?;
    let mut csv_bytes = Vec::new();
    write_outage_csv(&trace.records, &mut csv_bytes)?;
    let mut bundle = Bundle::default();
    bundle.add("outages.csv", csv_bytes);
    bundle.json("truth.json", &trace.truth)?;
    Ok(bundle)
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub quiet_gap: i64,
    pub step: i64,
    pub severity: SeverityThresholds,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            quiet_gap: DEFAULT_QUIET_GAP,
            step: DEFAULT_STEP,
            severity: SeverityThresholds::default(),
        }
    }
}

/// Parse outage rows and group them into classified events.
pub fn ingest_bytes(bytes: &[u8], opts: &IngestOptions) -> Result<(Vec<FailureEvent>, ValidationReport)> {
    if opts.quiet_gap < 0 {
        return Err(Error::InvalidConfig(format!("quiet gap cannot be negative, got {}", opts.quiet_gap)));
    }
    let (records, report) = parse_outage_csv(bytes)?;
    let events = group_into_events(&records, opts.quiet_gap)
        .into_iter()
        .enumerate()
        .map(|(i, recs)| FailureEvent::new(format!("event-{:04}", i + 1), recs, opts.step, &opts.severity))
        .collect::<Result<Vec<_>>>()?;
    Ok((events, report))
}

pub fn cmd_ingest(csv_path: &Path, opts: &IngestOptions) -> Result<Bundle> {
    let (events, report) = ingest_bytes(&read_input(csv_path)?, opts)?;
    let mut bundle = Bundle::default();
    if report.rejected > 0 {
        bundle
            .warnings
            .push(format!("{} of {} rows rejected; see validation.json", report.rejected, report.total()));
    }
    bundle.json(EVENTS_FILE, &events)?;
    bundle.json("validation.json", &report)?;
    Ok(bundle)
}

/// Events from an ingest run. A blank file means no events.
pub fn load_events(path: &Path) -> Result<Vec<FailureEvent>> {
    let bytes = read_input(path)?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    Ok(serde_json::from_slice(&bytes)?)
}

// ------------------------------------------------------- shared analysis

/// Tunables shared by the analysis commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub bins: BinSpec,
    pub threshold_frac: f64,
    pub folds: usize,
    pub null_rounds: usize,
    pub seed: u64,
    pub categories: CategoryThresholds,
    pub epsilon: f64,
    pub step: i64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        let c = ClusterConfig::default();
        Self {
            bins: c.bins,
            threshold_frac: c.threshold_frac,
            folds: c.folds,
            null_rounds: c.null_rounds,
            seed: c.seed,
            categories: CategoryThresholds::default(),
            epsilon: DEFAULT_EPSILON,
            step: DEFAULT_STEP,
        }
    }
}

impl AnalysisOptions {
    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            threshold_frac: self.threshold_frac,
            folds: self.folds,
            null_rounds: self.null_rounds,
            seed: self.seed,
            bins: self.bins,
            large_threshold: self.categories.large_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bins.validate()?;
        let c = &self.categories;
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(c.fast_quantile) || !in_unit(c.prolonged_quantile) {
            return Err(Error::InvalidConfig("category quantiles must lie in [0, 1]".into()));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidConfig(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.step < 1 {
            return Err(Error::InvalidConfig(format!("step must be >= 1, got {}", self.step)));
        }
        if self.folds < 2 || !(0.0..1.0).contains(&self.threshold_frac) {
            return Err(Error::InvalidConfig("need folds >= 2 and threshold fraction in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One analyzed event: its Stage-1 records with speed ranks and labels.
#[derive(Debug, Clone)]
pub struct PreparedEvent {
    pub event: FailureEvent,
    pub stage1: Vec<FailureRecord>,
    pub samples: Vec<LabeledSample>,
}

impl PreparedEvent {
    pub fn ranked(&self) -> Vec<RankedSample> {
        self.samples.iter().map(|s| s.sample.clone()).collect()
    }

    pub fn labels(&self) -> BTreeMap<String, CategoryLabel> {
        self.samples
            .iter()
            .map(|s| (s.sample.record_id.clone(), s.category))
            .collect()
    }
}

/// Rank and label the Stage-1 records of every non-sporadic event.
pub fn prepare_events(events: Vec<FailureEvent>, thresholds: &CategoryThresholds) -> (Vec<PreparedEvent>, usize) {
    let total = events.len();
    let prepared: Vec<PreparedEvent> = events
        .into_iter()
        .filter(|e| e.severity != SeverityClass::Sporadic)
        .map(|event| {
            let stage1 = event.stage1();
            let samples = label_samples(&rank_recovery_speed(&stage1), thresholds);
            PreparedEvent { event, stage1, samples }
        })
        .collect();
    let skipped = total - prepared.len();
    (prepared, skipped)
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    event_id: String,
    record_id: String,
    size_x: u64,
    speed_y: f64,
    duration: i64,
    device: String,
    category: String,
}

/// Reattach labels written by `analyze` to the events they came from.
pub fn prepare_with_labels(events: Vec<FailureEvent>, labels_csv: &[u8]) -> Result<(Vec<PreparedEvent>, usize)> {
    let mut by_event: BTreeMap<String, BTreeMap<String, LabeledSample>> = BTreeMap::new();
    for row in csv::Reader::from_reader(labels_csv).deserialize() {
        let row: LabelRow = row?;
        let category = row
            .category
            .parse()
            .map_err(|e: String| Error::InvalidConfig(format!("{LABELS_FILE}: {e}")))?;
        let sample = RankedSample {
            record_id: row.record_id.clone(),
            size_x: row.size_x,
            speed_y: row.speed_y,
            duration: row.duration,
            device: crate::ingest::DeviceType::from_label(&row.device),
        };
        by_event
            .entry(row.event_id)
            .or_default()
            .insert(row.record_id, LabeledSample { sample, category });
    }
    let total = events.len();
    let mut prepared = Vec::new();
    for event in events.into_iter().filter(|e| e.severity != SeverityClass::Sporadic) {
        let stage1 = event.stage1();
        let mut labeled = by_event.remove(&event.event_id).unwrap_or_default();
        let samples = stage1
            .iter()
            .map(|r| {
                labeled.remove(&r.record_id).ok_or_else(|| Error::MissingLabel {
                    record_id: r.record_id.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        prepared.push(PreparedEvent { event, stage1, samples });
    }
    let skipped = total - prepared.len();
    Ok((prepared, skipped))
}

/// A per-event failure that does not abort the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventIssue {
    pub code: String,
    pub message: String,
}

impl From<&Error> for EventIssue {
    fn from(e: &Error) -> Self {
        Self {
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

fn by_class(prepared: &[PreparedEvent]) -> BTreeMap<SeverityClass, Vec<&PreparedEvent>> {
    let mut map: BTreeMap<SeverityClass, Vec<&PreparedEvent>> = BTreeMap::new();
    for p in prepared {
        map.entry(p.event.severity).or_default().push(p);
    }
    map
}

// --------------------------------------------------------------- analyze

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventClusters {
    pub event_id: String,
    pub severity: SeverityClass,
    pub samples: usize,
    pub clusters: Vec<ClusterRegion>,
    pub issue: Option<EventIssue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassClusters {
    pub events: usize,
    pub clusters: Vec<ClusterRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersFile {
    pub skipped_sporadic: usize,
    pub events: Vec<EventClusters>,
    pub classes: BTreeMap<SeverityClass, ClassClusters>,
}

fn labels_rows(prepared: &[PreparedEvent]) -> Vec<Vec<String>> {
    prepared
        .iter()
        .flat_map(|p| {
            p.samples.iter().map(move |s| {
                vec![
                    p.event.event_id.clone(),
                    s.sample.record_id.clone(),
                    s.sample.size_x.to_string(),
                    s.sample.speed_y.to_string(),
                    s.sample.duration.to_string(),
                    s.sample.device.as_str().to_string(),
                    s.category.as_str().to_string(),
                ]
            })
        })
        .collect()
}

pub fn analyze(prepared: &[PreparedEvent], skipped: usize, opts: &AnalysisOptions) -> Result<Bundle> {
    opts.validate()?;
    let cfg = opts.cluster_config();
    let mut bundle = Bundle::default();

    let mut events = Vec::new();
    let mut grids: BTreeMap<SeverityClass, Vec<JointGrid>> = BTreeMap::new();
    for p in prepared {
        let ranked = p.ranked();
        grids
            .entry(p.event.severity)
            .or_default()
            .push(estimate_joint(&ranked, &opts.bins)?);
        let (clusters, issue) = match extract_clusters(&ranked, &cfg) {
            Ok(c) => (c, None),
            Err(e @ Error::TooFewSamples { .. }) => {
                bundle.warnings.push(format!("{}: {e}", p.event.event_id));
                (Vec::new(), Some(EventIssue::from(&e)))
            }
            Err(e) => return Err(e),
        };
        events.push(EventClusters {
            event_id: p.event.event_id.clone(),
            severity: p.event.severity,
            samples: ranked.len(),
            clusters,
            issue,
        });
    }

    let mut classes = BTreeMap::new();
    for (class, class_grids) in &grids {
        let (avg, mut clusters) = extract_average_clusters(class_grids, &cfg)?;
        if class_grids.len() == 1 {
            // one event has no spread across events; reuse its own
            // cross-validated and null-checked regions
            clusters = events
                .iter()
                .find(|e| e.severity == *class)
                .map(|e| e.clusters.clone())
                .unwrap_or_default();
        }
        classes.insert(
            *class,
            ClassClusters {
                events: class_grids.len(),
                clusters,
            },
        );
        let mut heat = Vec::new();
        avg.write_heatmap_csv(&mut heat)?;
        bundle.add(class_file("heatmap", *class, "csv"), heat);
        bundle.json(class_file("grid", *class, "json"), &avg)?;
    }

    bundle.csv(
        LABELS_FILE,
        &["event_id", "record_id", "size_x", "speed_y", "duration", "device", "category"],
        labels_rows(prepared),
    )?;
    bundle.json(
        CLUSTERS_FILE,
        &ClustersFile {
            skipped_sporadic: skipped,
            events,
            classes,
        },
    )?;
    Ok(bundle)
}

// --------------------------------------------------------------- scaling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRules {
    pub event_id: String,
    pub severity: SeverityClass,
    pub failures: usize,
    pub rules: RuleSummary,
    /// Customer share of the largest quarter of failures.
    pub top_quarter_customer_share: f64,
    pub issue: Option<EventIssue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulesFile {
    pub events: Vec<EventRules>,
    /// Shares pooled over all failures of each class.
    pub classes: BTreeMap<SeverityClass, RuleSummary>,
}

pub fn scaling(prepared: &[PreparedEvent]) -> Result<Bundle> {
    let mut bundle = Bundle::default();
    let mut rows = Vec::new();
    let mut events = Vec::new();
    for p in prepared {
        let issue = match recovery_scaling(&p.samples) {
            Ok(curve) => {
                rows.extend(curve.points.iter().map(|pt| {
                    vec![
                        p.event.event_id.clone(),
                        pt.d.to_string(),
                        pt.p_c.to_string(),
                        pt.p_r.to_string(),
                        pt.category.as_str().to_string(),
                    ]
                }));
                None
            }
            Err(e @ (Error::DegenerateDurations | Error::EmptyEvent)) => {
                bundle.warnings.push(format!("{}: {e}", p.event.event_id));
                Some(EventIssue::from(&e))
            }
            Err(e) => return Err(e),
        };
        let sizes: Vec<u64> = p.stage1.iter().map(|r| r.customers).collect();
        events.push(EventRules {
            event_id: p.event.event_id.clone(),
            severity: p.event.severity,
            failures: p.samples.len(),
            rules: rule_summary(&p.samples),
            top_quarter_customer_share: top_customer_share(&sizes, 0.25),
            issue,
        });
    }
    bundle.csv("recovery_scaling.csv", &["event_id", "d", "p_c", "p_r", "category"], rows)?;

    let mut classes = BTreeMap::new();
    for (class, members) in by_class(prepared) {
        let sizes: Vec<Vec<u64>> = members
            .iter()
            .map(|p| p.stage1.iter().map(|r| r.customers).collect())
            .collect();
        let curve = failure_scaling(&sizes)?;
        let mut bytes = Vec::new();
        curve.write_csv(&mut bytes)?;
        bundle.add(class_file("failure_scaling", class, "csv"), bytes);
        let pooled: Vec<LabeledSample> = members.iter().flat_map(|p| p.samples.iter().cloned()).collect();
        classes.insert(class, rule_summary(&pooled));
    }
    bundle.json("rules.json", &RulesFile { events, classes })?;
    Ok(bundle)
}

// --------------------------------------------------------------- tipping

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTipping {
    pub event_id: String,
    pub severity: SeverityClass,
    pub large_failures: usize,
    pub value: Option<f64>,
    pub deviation_index: Option<usize>,
    pub issue: Option<EventIssue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TippingFile {
    pub epsilon: f64,
    pub large_threshold: u64,
    pub events: Vec<EventTipping>,
    pub classes: BTreeMap<SeverityClass, TippingStats>,
}

pub fn tipping(prepared: &[PreparedEvent], opts: &AnalysisOptions) -> Result<Bundle> {
    opts.validate()?;
    let large = opts.categories.large_threshold;
    let mut bundle = Bundle::default();
    let mut rows = Vec::new();
    let mut events = Vec::new();
    let mut values = Vec::new();
    for p in prepared {
        let entry = match baseline_curve(&p.ranked(), large) {
            Ok(curve) => {
                let t = tipping_point(&curve, opts.epsilon);
                values.push((p.event.severity, t.value));
                rows.extend(curve.points.iter().map(|pt| {
                    vec![p.event.event_id.clone(), pt.k.to_string(), pt.a.to_string(), pt.b.to_string()]
                }));
                EventTipping {
                    event_id: p.event.event_id.clone(),
                    severity: p.event.severity,
                    large_failures: curve.large_total,
                    value: Some(t.value),
                    deviation_index: t.deviation_index,
                    issue: None,
                }
            }
            Err(e @ Error::NoLargeFailures) => {
                bundle.warnings.push(format!("{}: {e}", p.event.event_id));
                EventTipping {
                    event_id: p.event.event_id.clone(),
                    severity: p.event.severity,
                    large_failures: 0,
                    value: None,
                    deviation_index: None,
                    issue: Some(EventIssue::from(&e)),
                }
            }
            Err(e) => return Err(e),
        };
        events.push(entry);
    }
    bundle.csv("baseline.csv", &["event_id", "k", "a", "b"], rows)?;
    bundle.json(
        TIPPING_FILE,
        &TippingFile {
            epsilon: opts.epsilon,
            large_threshold: large,
            events,
            classes: aggregate_tipping(&values),
        },
    )?;
    Ok(bundle)
}

// ---------------------------------------------------------------- evolve

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStages {
    pub event_id: String,
    pub severity: SeverityClass,
    pub split_time: i64,
    pub peak_value: u64,
    pub stage1_ids: Vec<String>,
    pub stage2_ids: Vec<String>,
}

/// Pending-repairs series per event, and per category over Stage 1.
pub fn evolve(prepared: &[PreparedEvent], step: i64) -> Result<Bundle> {
    let mut bundle = Bundle::default();
    let mut total_rows = Vec::new();
    let mut cat_rows = Vec::new();
    let mut stages = Vec::new();
    for p in prepared {
        let id = &p.event.event_id;
        let pending = &p.event.pending;
        total_rows.extend(
            pending
                .time_grid()
                .zip(&pending.counts)
                .map(|(t, c)| vec![id.clone(), t.to_string(), c.to_string()]),
        );
        let per_cat = category_pending_series(&p.stage1, &p.labels(), step)?;
        let grid_len = per_cat.values().next().map_or(0, |s| s.counts.len());
        for i in 0..grid_len {
            for (cat, series) in &per_cat {
                let t = series.start + i as i64 * series.step;
                cat_rows.push(vec![
                    id.clone(),
                    t.to_string(),
                    cat.as_str().to_string(),
                    series.counts[i].to_string(),
                ]);
            }
        }
        stages.push(EventStages {
            event_id: id.clone(),
            severity: p.event.severity,
            split_time: p.event.partition.split_time,
            peak_value: pending.peak_value,
            stage1_ids: p.event.partition.stage1_ids.clone(),
            stage2_ids: p.event.partition.stage2_ids.clone(),
        });
    }
    bundle.csv("pending.csv", &["event_id", "t_minutes", "count"], total_rows)?;
    bundle.csv(
        "pending_by_category.csv",
        &["event_id", "t_minutes", "category", "count"],
        cat_rows,
    )?;
    bundle.json("stages.json", &stages)?;
    Ok(bundle)
}

// ---------------------------------------------------------------- impact

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventImpact {
    pub event_id: String,
    pub severity: SeverityClass,
    pub report: ImpactReport,
    /// Slope ratios between categories, keyed `numerator/denominator`.
    pub growth_ratios: BTreeMap<String, f64>,
    pub growth_notes: BTreeMap<CategoryLabel, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryCmi {
    pub failures: usize,
    pub cmi: u64,
    /// Category CMI divided by the number of events in the class.
    pub cmi_per_event: f64,
    /// Category CMI divided by the category's failure count.
    pub cmi_per_failure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassImpact {
    pub events: usize,
    pub total_cmi: u64,
    pub categories: BTreeMap<CategoryLabel, CategoryCmi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactFile {
    pub events: Vec<EventImpact>,
    pub classes: BTreeMap<SeverityClass, ClassImpact>,
}

fn impact_data(prepared: &[PreparedEvent], step: i64) -> Result<(ImpactFile, Vec<Vec<String>>)> {
    let mut rows = Vec::new();
    let mut events = Vec::new();
    for p in prepared {
        let labels = p.labels();
        let growth = cumulative_downtime_growth(&p.stage1, &labels, step)?;
        rows.extend(growth.curves.iter().map(|(t, c, v)| {
            vec![p.event.event_id.clone(), t.to_string(), c.as_str().to_string(), v.to_string()]
        }));
        events.push(EventImpact {
            event_id: p.event.event_id.clone(),
            severity: p.event.severity,
            report: impact_report(&p.stage1, &p.samples, step)?,
            growth_ratios: growth.ratios,
            growth_notes: growth
                .categories
                .into_iter()
                .filter_map(|(c, g)| g.note.map(|n| (c, n)))
                .collect(),
        });
    }

    let mut classes: BTreeMap<SeverityClass, ClassImpact> = BTreeMap::new();
    for e in &events {
        let entry = classes.entry(e.severity).or_insert_with(|| ClassImpact {
            events: 0,
            total_cmi: 0,
            categories: BTreeMap::new(),
        });
        entry.events += 1;
        entry.total_cmi += e.report.total_cmi;
        for (cat, ci) in &e.report.categories {
            let c = entry.categories.entry(*cat).or_default();
            c.failures += ci.failures;
            c.cmi += ci.cmi;
        }
    }
    for class in classes.values_mut() {
        for c in class.categories.values_mut() {
            c.cmi_per_event = c.cmi as f64 / class.events as f64;
            c.cmi_per_failure = c.cmi as f64 / c.failures as f64;
        }
    }
    Ok((ImpactFile { events, classes }, rows))
}

pub fn impact(prepared: &[PreparedEvent], step: i64) -> Result<Bundle> {
    let (file, rows) = impact_data(prepared, step)?;
    let mut bundle = Bundle::default();
    bundle.csv("downtime.csv", &["event_id", "t", "category", "customer_minutes"], rows)?;
    bundle.json("impact.json", &file)?;
    Ok(bundle)
}

// ---------------------------------------------------------------- report

fn geo(prepared: &[PreparedEvent]) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    prepared
        .iter()
        .flat_map(|p| {
            let labels = p.labels();
            p.stage1.iter().map(move |r| {
                vec![
                    p.event.event_id.clone(),
                    r.record_id.clone(),
                    opt(r.latitude),
                    opt(r.longitude),
                    r.customers.to_string(),
                    labels[&r.record_id].as_str().to_string(),
                ]
            })
        })
        .collect()
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn summary_text(
    prepared: &[PreparedEvent],
    skipped: usize,
    clusters: &ClustersFile,
    tipping: Option<&TippingFile>,
    impact: &ImpactFile,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Restoration analytics summary");
    let _ = writeln!(s, "=============================");
    let _ = writeln!(s);
    let _ = writeln!(s, "Events analyzed: {} ({} sporadic skipped)", prepared.len(), skipped);
    for (class, members) in by_class(prepared) {
        let failures: usize = members.iter().map(|p| p.samples.len()).sum();
        let _ = writeln!(
            s,
            "  {:<9} {} events, {} stage-1 failures",
            class.as_str(),
            members.len(),
            failures
        );
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "Category shares (all analyzed failures)");
    let pooled: Vec<LabeledSample> = prepared.iter().flat_map(|p| p.samples.iter().cloned()).collect();
    let rules = rule_summary(&pooled);
    let _ = writeln!(s, "  {:<20} {:>10} {:>10} {:>10}", "category", "customers", "downtime", "failures");
    let mut sums = (0.0, 0.0, 0.0);
    for (cat, sh) in &rules.shares {
        sums.0 += sh.customer_share;
        sums.1 += sh.downtime_share;
        sums.2 += sh.failure_share;
        let _ = writeln!(
            s,
            "  {:<20} {:>10} {:>10} {:>10}",
            cat.as_str(),
            pct(sh.customer_share),
            pct(sh.downtime_share),
            pct(sh.failure_share)
        );
    }
    let _ = writeln!(s, "  {:<20} {:>10} {:>10} {:>10}", "total", pct(sums.0), pct(sums.1), pct(sums.2));
    let large = rules.large();
    let _ = writeln!(
        s,
        "  Large failures: {} of customers with {} of total duration.",
        pct(large.customer_share),
        pct(large.downtime_share)
    );

    let _ = writeln!(s);
    let _ = writeln!(s, "Dependence clusters (class-averaged grids)");
    if clusters.classes.is_empty() {
        let _ = writeln!(s, "  none");
    }
    for (class, cc) in &clusters.classes {
        let count = |h: ClusterHint| cc.clusters.iter().filter(|c| c.hint == h).count();
        let _ = writeln!(
            s,
            "  {:<9} {} regions ({} upper-left, {} lower-right)",
            class.as_str(),
            cc.clusters.len(),
            count(ClusterHint::UpperLeft),
            count(ClusterHint::LowerRight)
        );
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "Tipping point");
    match tipping {
        None => {
            let _ = writeln!(s, "  absent");
        }
        Some(t) => {
            let _ = writeln!(s, "  epsilon {}", t.epsilon);
            for (class, st) in &t.classes {
                let _ = writeln!(
                    s,
                    "  {:<9} mean {} (std {}) over {} events",
                    class.as_str(),
                    pct(st.mean),
                    pct(st.std),
                    st.events
                );
            }
        }
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "Customer interruption (customer-hours)");
    for (class, ci) in &impact.classes {
        let _ = writeln!(s, "  {:<9} total {:.1}", class.as_str(), ci.total_cmi as f64 / 60.0);
        for (cat, c) in &ci.categories {
            let _ = writeln!(
                s,
                "    {:<20} {:.1} per event, {:.1} per failure",
                cat.as_str(),
                c.cmi_per_event / 60.0,
                c.cmi_per_failure / 60.0
            );
        }
    }
    s
}

/// Summarize the artifacts of an ingest and analyze run found in `input_dir`.
///
/// The tipping summary is optional; without it that section reads "absent".
pub fn report(input_dir: &Path, step: i64) -> Result<(Bundle, Vec<std::path::PathBuf>)> {
    let require = |name: &str| -> Result<std::path::PathBuf> {
        let path = input_dir.join(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact { path })
        }
    };
    let events_path = require(EVENTS_FILE)?;
    let labels_path = require(LABELS_FILE)?;
    let clusters_path = require(CLUSTERS_FILE)?;
    let tipping_path = input_dir.join(TIPPING_FILE);
    let mut inputs = vec![events_path.clone(), labels_path.clone(), clusters_path.clone()];

    let events = load_events(&events_path)?;
    let (prepared, skipped) = prepare_with_labels(events, &read_input(&labels_path)?)?;
    let clusters: ClustersFile = serde_json::from_slice(&read_input(&clusters_path)?)?;
    let tipping: Option<TippingFile> = if tipping_path.is_file() {
        inputs.push(tipping_path.clone());
        Some(serde_json::from_slice(&read_input(&tipping_path)?)?)
    } else {
        None
    };

    let mut bundle = Bundle::default();
    bundle.absorb(scaling(&prepared)?);
    bundle.absorb(evolve(&prepared, step)?);
    let (impact_file, downtime_rows) = impact_data(&prepared, step)?;
    bundle.csv("downtime.csv", &["event_id", "t", "category", "customer_minutes"], downtime_rows)?;
    bundle.json("impact.json", &impact_file)?;
    match &tipping {
        Some(t) => bundle.json(TIPPING_FILE, t)?,
        None => bundle.json(TIPPING_FILE, &serde_json::json!({ "status": "absent" }))?,
    }
    bundle.csv(
        "geo.csv",
        &["event_id", "record_id", "lat", "lon", "customers", "category"],
        geo(&prepared),
    )?;
    let summary = summary_text(&prepared, skipped, &clusters, tipping.as_ref(), &impact_file);
    bundle.add("summary.txt", summary.into_bytes());
    if prepared.is_empty() {
        bundle.warnings.push("no analyzable events; report is empty".into());
    }
    Ok((bundle, inputs))
}
