//! End-to-end orchestration: series -> features -> events -> graph ->
//! models, shared by the CLI and the test harness.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anomaly::{
    gae_train, normalize_adjacency, pca_fit, pr_curve, vae_train, best_f1, f1_at_recall, Frame,
    GaeModel, ModelError, PcaModel, PrPoint, ScoredFrame, TrainOptions, TrainReport, VaeModel,
};
use crate::events::{
    compute_features, detect_events, EventError, EventTuple, FeatureConfig, FeatureVector,
};
use crate::eventstore::{EventStore, StoreError};
use crate::graph::{
    average_group_recovery, build_adjacency, correlation_matrix, CorrelationMethod, GraphError,
    GroupRecoveryMetrics,
};
use crate::series::{
    interpolate_missing, stl_decompose, SensorSeries, SeriesError, StlConfig, SAMPLES_PER_DAY,
};
use crate::synth::{GroupKind, LabeledDataset};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("dataset too short: need {need} samples, have {have}")]
    TooShort { need: usize, have: usize },
    #[error("series are not aligned on one timestamp grid")]
    Misaligned,
}

/// Event-window and lag settings for graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub window_days: f64,
    pub delta_min: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            window_days: 30.0,
            delta_min: 15.0,
        }
    }
}

impl GraphConfig {
    pub fn window_s(&self) -> i64 {
        (self.window_days * 86_400.0) as i64
    }

    pub fn delta_s(&self) -> i64 {
        (self.delta_min * 60.0) as i64
    }
}

/// Train/validation/test split and frame sampling stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_weeks: f64,
    pub val_weeks: f64,
    pub test_weeks: f64,
    /// Keep every k-th frame for training/validation (test uses every frame).
    pub frame_stride: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_weeks: 4.0,
            val_weeks: 1.0,
            test_weeks: 1.0,
            frame_stride: 12,
        }
    }
}

/// Anomaly injection settings for the two evaluation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Per-timestep injection probability.
    pub p: f64,
    pub feature_mean: f64,
    pub feature_std: f64,
    /// Series offsets, in sensor units (degrees for hot aisles).
    pub series_mean: f64,
    pub series_std: f64,
    /// Injection length in samples (one hour at 5-minute cadence).
    pub duration_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            p: 0.2,
            feature_mean: 3.0,
            feature_std: 1.0,
            series_mean: 6.0,
            series_std: 1.0,
            duration_samples: 12,
        }
    }
}

/// Per-sensor feature vectors on a shared timestamp grid.
pub struct FleetFeatures {
    pub sensors: Vec<String>,
    pub timestamps: Vec<i64>,
    pub features: Vec<FeatureVector>,
    pub warm_up: usize,
}

/// Interpolate, decompose where configured, and compute all four z-score
/// features for every sensor. Series must share one timestamp grid.
pub fn prepare_features(
    series: &[SensorSeries],
    cfg: &FeatureConfig,
    stl: &StlConfig,
) -> Result<FleetFeatures, PipelineError> {
    let first = series.first().ok_or(PipelineError::TooShort { need: 1, have: 0 })?;
    let timestamps = first.timestamps.clone();
    let mut features = Vec::with_capacity(series.len());
    let mut sensors = Vec::with_capacity(series.len());
    for s in series {
        if s.timestamps != timestamps {
            return Err(PipelineError::Misaligned);
        }
        let complete = if s.has_missing() {
            interpolate_missing(s)?
        } else {
            s.clone()
        };
        let decomposition = if cfg.use_stl && complete.period.is_some() {
            Some(stl_decompose(&complete, stl)?)
        } else {
            None
        };
        features.push(compute_features(&complete, decomposition.as_ref(), cfg)?);
        sensors.push(s.sensor_id.clone());
    }
    Ok(FleetFeatures {
        sensors,
        timestamps,
        features,
        warm_up: cfg.warm_up(),
    })
}

/// Run the hybrid-threshold detector on every (sensor, event type) pair.
pub fn detect_all_events(fleet: &FleetFeatures, cfg: &FeatureConfig) -> Vec<EventTuple> {
    let mut events = Vec::new();
    for (sensor, feature) in fleet.sensors.iter().zip(&fleet.features) {
        for (code, z) in feature.z.iter().enumerate() {
            let ty = crate::events::EventType::from_code(code as u8).unwrap();
            events.extend(detect_events(z, cfg, ty, sensor, &fleet.timestamps));
        }
    }
    events
}

/// Sample indices of each split region.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    /// Every sample of the test window.
    pub test: Vec<usize>,
    pub train_range: (usize, usize),
    pub val_range: (usize, usize),
    pub test_range: (usize, usize),
}

pub fn compute_splits(
    split: &SplitConfig,
    warm_up: usize,
    n: usize,
) -> Result<Splits, PipelineError> {
    let week = 7 * SAMPLES_PER_DAY;
    let train_end = (split.train_weeks * week as f64) as usize;
    let val_end = train_end + (split.val_weeks * week as f64) as usize;
    let test_end = val_end + (split.test_weeks * week as f64) as usize;
    if test_end > n || warm_up + 1 >= train_end {
        return Err(PipelineError::TooShort {
            need: test_end.max(warm_up + 2),
            have: n,
        });
    }
    let stride = split.frame_stride.max(1);
    Ok(Splits {
        train: ((warm_up + 1)..train_end).step_by(stride).collect(),
        val: (train_end..val_end).step_by(stride).collect(),
        test: (val_end..test_end).collect(),
        train_range: (warm_up + 1, train_end),
        val_range: (train_end, val_end),
        test_range: (val_end, test_end),
    })
}

/// Feature matrices at the given sample indices.
pub fn frames_at(fleet: &FleetFeatures, indices: &[usize]) -> Result<Vec<Frame>, PipelineError> {
    indices
        .iter()
        .map(|&i| {
            crate::graph::build_feature_matrix(&fleet.features, &fleet.sensors, i)
                .map_err(PipelineError::from)
        })
        .collect()
}

/// Per-frame per-sensor labels at the given sample indices.
pub fn labels_at(labels: &[Vec<bool>], indices: &[usize]) -> Vec<Vec<bool>> {
    indices
        .iter()
        .map(|&i| labels.iter().map(|per_sensor| per_sensor[i]).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gae,
    Vae,
    Pca,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Gae, ModelKind::Vae, ModelKind::Pca];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gae => "gae",
            ModelKind::Vae => "vae",
            ModelKind::Pca => "pca",
        }
    }
}

/// A trained model of any kind, sharing the scoring path.
pub enum AnyModel {
    Gae(GaeModel),
    Vae(VaeModel),
    Pca(PcaModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Gae(_) => ModelKind::Gae,
            AnyModel::Vae(_) => ModelKind::Vae,
            AnyModel::Pca(_) => ModelKind::Pca,
        }
    }

    pub fn score_frames(
        &self,
        frames: &[Frame],
        times: &[i64],
        labels: &[Vec<bool>],
    ) -> Result<Vec<ScoredFrame>, ModelError> {
        match self {
            AnyModel::Gae(m) => m.score_frames(frames, times, labels),
            AnyModel::Vae(m) => m.score_frames(frames, times, labels),
            AnyModel::Pca(m) => m.score_frames(frames, times, labels),
        }
    }
}

/// Train one model on clean frames. The adjacency matrix is only used by the
/// graph auto-encoder; `seed` fixes parameter initialization.
pub fn train_model(
    kind: ModelKind,
    adjacency: &Array2<f64>,
    train_frames: &[Frame],
    val_frames: &[Frame],
    opts: &TrainOptions,
    seed: u64,
) -> Result<(AnyModel, Option<TrainReport>), PipelineError> {
    let val = if val_frames.is_empty() {
        None
    } else {
        Some(val_frames)
    };
    match kind {
        ModelKind::Gae => {
            let mut model = GaeModel::new(adjacency, seed);
            let report = gae_train(&mut model, train_frames, val, opts)?;
            Ok((AnyModel::Gae(model), Some(report)))
        }
        ModelKind::Vae => {
            let n = train_frames
                .first()
                .map(|f| f.nrows())
                .ok_or(ModelError::NoFrames)?;
            let mut model = VaeModel::new(n, seed);
            let report = vae_train(&mut model, train_frames, val, opts)?;
            Ok((AnyModel::Vae(model), Some(report)))
        }
        ModelKind::Pca => {
            let model = pca_fit(train_frames)?;
            Ok((AnyModel::Pca(model), None))
        }
    }
}

/// Everything a training/evaluation run needs from the clean dataset.
pub struct Benchmark {
    pub sensors: Vec<String>,
    pub adjacency: Array2<f64>,
    pub a_hat: Array2<f64>,
    pub splits: Splits,
    pub train_frames: Vec<Frame>,
    pub val_frames: Vec<Frame>,
    pub test_times: Vec<i64>,
}

/// Build the adjacency matrix from clean train-window events and slice the
/// clean frames. The adjacency stays frozen for evaluation so injected
/// anomalies cannot rewrite the topology.
pub fn prepare_benchmark(
    fleet: &FleetFeatures,
    store: &EventStore,
    graph_cfg: &GraphConfig,
    split: &SplitConfig,
) -> Result<Benchmark, PipelineError> {
    let splits = compute_splits(split, fleet.warm_up, fleet.timestamps.len())?;
    let train_window = (
        fleet.timestamps[0],
        fleet.timestamps[splits.train_range.1 - 1],
    );
    let adjacency = build_adjacency(store, &fleet.sensors, train_window, graph_cfg.delta_s());
    let a_hat = normalize_adjacency(&adjacency);
    let train_frames = frames_at(fleet, &splits.train)?;
    let val_frames = frames_at(fleet, &splits.val)?;
    let test_times = splits.test.iter().map(|&i| fleet.timestamps[i]).collect();
    Ok(Benchmark {
        sensors: fleet.sensors.clone(),
        adjacency,
        a_hat,
        splits,
        train_frames,
        val_frames,
        test_times,
    })
}

/// PR curve plus the summary numbers reported per model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub best_f1: f64,
    /// (recall target, best F1 at or above that recall).
    pub f1_at_recall: Vec<(f64, f64)>,
    #[serde(skip)]
    pub curve: Vec<PrPoint>,
}

pub fn evaluate_scores(
    model: &str,
    scored: &[ScoredFrame],
) -> Result<ModelEvaluation, ModelError> {
    let curve = pr_curve(scored)?;
    let grid: Vec<(f64, f64)> = (1..=4)
        .map(|k| {
            let target = 0.2 * k as f64;
            (target, f1_at_recall(&curve, target))
        })
        .collect();
    Ok(ModelEvaluation {
        model: model.to_string(),
        best_f1: best_f1(&curve),
        f1_at_recall: grid,
        curve,
    })
}

/// Group-recovery comparison of the adjacency matrix against the three
/// correlation baselines, per group kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationTable {
    /// Group size (the k of the top-k ranking).
    pub k: usize,
    /// (matrix name, averaged metrics), adjacency first.
    pub rows: Vec<(String, GroupRecoveryMetrics)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pairs: ValidationTable,
    pub rooms: ValidationTable,
    /// Fraction of off-diagonal entries below 0.01: (matrix name, fraction).
    pub sparsity: Vec<(String, f64)>,
}

/// Run the group-recovery experiment on the window `[window_start_idx, end)`.
pub fn validation_experiment(
    dataset: &LabeledDataset,
    fleet: &FleetFeatures,
    store: &EventStore,
    graph_cfg: &GraphConfig,
) -> Result<ValidationReport, PipelineError> {
    let n_samples = fleet.timestamps.len();
    let end_t = fleet.timestamps[n_samples - 1];
    let start_t = (end_t - graph_cfg.window_s()).max(fleet.timestamps[0]);
    let adjacency = build_adjacency(store, &fleet.sensors, (start_t, end_t), graph_cfg.delta_s());

    // Correlation baselines over the same window of the interpolated series.
    let start_idx = fleet
        .timestamps
        .iter()
        .position(|&t| t >= start_t)
        .unwrap_or(0);
    let sliced: Vec<SensorSeries> = dataset
        .series
        .iter()
        .map(|s| {
            let complete = if s.has_missing() {
                interpolate_missing(s)?
            } else {
                s.clone()
            };
            SensorSeries::new(
                complete.sensor_id.clone(),
                complete.kind,
                complete.timestamps[start_idx..].to_vec(),
                complete.values[start_idx..].to_vec(),
                None,
            )
            .map_err(PipelineError::from)
        })
        .collect::<Result<_, _>>()?;

    let mut matrices: Vec<(String, Array2<f64>)> = vec![("adjacency".to_string(), adjacency)];
    for method in CorrelationMethod::ALL {
        let (m, _) = correlation_matrix(&sliced, method)?;
        matrices.push((method.name().to_string(), m));
    }

    let pairs = dataset.group_indices(GroupKind::RedundantPair);
    let rooms = dataset.group_indices(GroupKind::Room);
    let table = |groups: &[Vec<usize>]| ValidationTable {
        k: groups.first().map_or(0, |g| g.len()),
        rows: matrices
            .iter()
            .map(|(name, m)| (name.clone(), average_group_recovery(m, groups)))
            .collect(),
    };

    let sparsity = matrices
        .iter()
        .map(|(name, m)| (name.clone(), crate::graph::offdiagonal_fraction_below(m, 0.01)))
        .collect();

    Ok(ValidationReport {
        pairs: table(&pairs),
        rooms: table(&rooms),
        sparsity,
    })
}
