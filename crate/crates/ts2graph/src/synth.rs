//! Synthetic data-center fleet generation and anomaly injection.
//!
//! Every sensor group shares one latent driver: a daily cycle plus slow
//! drift plus occasional behavior events (spikes, level shifts, noise
//! bursts, slope ramps) that all group members experience at the same
//! instant. Redundant pairs ride the same latent with only a little private
//! noise; groups couple weakly through a global ambient signal, which gives
//! raw-value correlation across groups without concurrent events.
//!
//! Everything is deterministic given the seed: each group and sensor draws
//! from its own fixed RNG stream.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anomaly::Frame;
use crate::series::{SensorKind, SensorSeries, SAMPLES_PER_DAY};

/// Shape and texture of the generated fleet. Defaults give 159 sensors:
/// 7 rooms x (8 hot-aisle + 10 CRAC fans) + 25 water + 3 redundant
/// environment pairs + IT load + PUE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetConfig {
    pub rooms: usize,
    pub hot_aisle_per_room: usize,
    pub crac_per_room: usize,
    pub water_sensors: usize,
    /// Redundant environment sensor pairs (temperature, humidity, wet-bulb).
    pub redundant_env_pairs: usize,
    pub weeks: usize,
    pub step_s: i64,
    pub start_epoch_s: i64,
    pub seed: u64,
    /// Daily cycle amplitude, in hot-aisle degrees.
    pub daily_amplitude: f64,
    /// Per-sensor noise inside a room group.
    pub noise_sigma: f64,
    /// Per-sensor noise of a redundant pair (kept small so the pair stays
    /// nearly identical).
    pub pair_noise_sigma: f64,
    /// Mean latent behavior events per group per day.
    pub events_per_day: f64,
    /// Stationary amplitude of each sensor's private slow drift.
    pub private_drift: f64,
    /// Private drift of redundant pair members (kept small).
    pub pair_private_drift: f64,
    /// Probability that any single reading is missing.
    pub missing_rate: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            rooms: 7,
            hot_aisle_per_room: 8,
            crac_per_room: 10,
            water_sensors: 25,
            redundant_env_pairs: 3,
            weeks: 6,
            step_s: 300,
            start_epoch_s: 1_526_083_200,
            seed: 0,
            daily_amplitude: 1.5,
            noise_sigma: 0.3,
            pair_noise_sigma: 0.08,
            events_per_day: 2.0,
            private_drift: 0.25,
            pair_private_drift: 0.03,
            missing_rate: 0.0005,
        }
    }
}

impl FleetConfig {
    pub fn samples(&self) -> usize {
        self.weeks * 7 * SAMPLES_PER_DAY
    }

    pub fn sensor_count(&self) -> usize {
        self.rooms * (self.hot_aisle_per_room + self.crac_per_room)
            + self.water_sensors
            + 2 * self.redundant_env_pairs
            + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    /// Hot-aisle sensors of one computer room.
    Room,
    /// A redundant sensor pair driven by the same physical quantity.
    RedundantPair,
    /// Other co-driven clusters (CRAC fans of a room, the water loop).
    Cluster,
}

/// A planted related-sensor group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorGroup {
    pub name: String,
    pub kind: GroupKind,
    pub sensor_ids: Vec<String>,
}

/// Generated series plus per-(sensor, t) anomaly labels and the planted
/// group structure.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub series: Vec<SensorSeries>,
    /// labels[sensor][t], aligned with `series`.
    pub labels: Vec<Vec<bool>>,
    pub group_truth: Vec<SensorGroup>,
}

impl LabeledDataset {
    pub fn sensor_ids(&self) -> Vec<String> {
        self.series.iter().map(|s| s.sensor_id.clone()).collect()
    }

    pub fn index_of(&self, sensor_id: &str) -> Option<usize> {
        self.series.iter().position(|s| s.sensor_id == sensor_id)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.series[0].timestamps
    }

    /// Sensor indices for each group of the requested kind.
    pub fn group_indices(&self, kind: GroupKind) -> Vec<Vec<usize>> {
        self.group_truth
            .iter()
            .filter(|g| g.kind == kind)
            .map(|g| {
                g.sensor_ids
                    .iter()
                    .map(|id| self.index_of(id).expect("group member exists"))
                    .collect()
            })
            .collect()
    }
}

/// Distinct RNG streams so sensors and groups stay decoupled and stable
/// under config changes.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_AMBIENT: u64 = 1;
const STREAM_GROUP_BASE: u64 = 1_000;
const STREAM_SENSOR_BASE: u64 = 1_000_000;

/// Latent behavior events planted in a group driver.
#[derive(Debug, Clone, Copy)]
enum LatentEvent {
    Spike { at: usize, width: usize, amplitude: f64 },
    Shift { at: usize, duration: usize, amplitude: f64 },
    NoiseBurst { at: usize, duration: usize, factor: f64 },
    Ramp { at: usize, half: usize, peak: f64 },
}

/// One group's shared driver: additive dynamic plus a noise multiplier.
struct GroupDriver {
    dynamic: Vec<f64>,
    noise_mult: Vec<f64>,
}

fn sample_events(rng: &mut ChaCha8Rng, n: usize, cfg: &FleetConfig) -> Vec<LatentEvent> {
    let mean_gap = SAMPLES_PER_DAY as f64 / cfg.events_per_day;
    let min_gap = SAMPLES_PER_DAY / 6; // 4 hours of quiet between events
    let sigma = cfg.noise_sigma;
    let mut events = Vec::new();
    // First event soon after the detector warm-up region.
    let mut t = 320 + rng.random_range(0..min_gap);
    while t < n {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let event = match rng.random_range(0..4u8) {
            0 => LatentEvent::Spike {
                at: t,
                width: rng.random_range(1..=2),
                amplitude: sign * sigma * rng.random_range(6.0..10.0),
            },
            1 => LatentEvent::Shift {
                at: t,
                duration: rng.random_range(24..96),
                amplitude: sign * sigma * rng.random_range(5.0..9.0),
            },
            2 => LatentEvent::NoiseBurst {
                at: t,
                duration: rng.random_range(12..36),
                factor: rng.random_range(3.5..6.0),
            },
            _ => LatentEvent::Ramp {
                at: t,
                half: rng.random_range(24..72),
                peak: sign * sigma * rng.random_range(7.0..12.0),
            },
        };
        events.push(event);
        let gap = (-rng.random_range(1e-12..1.0f64).ln() * mean_gap) as usize;
        t += min_gap + gap.max(1);
    }
    events
}

fn group_driver(
    rng: &mut ChaCha8Rng,
    n: usize,
    cfg: &FleetConfig,
    ambient: &[f64],
) -> GroupDriver {
    let amplitude = cfg.daily_amplitude * rng.random_range(0.8..1.2);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let ambient_coupling = rng.random_range(0.3..0.6);
    let drift_noise = Normal::new(0.0, 0.02).unwrap();

    let mut dynamic = vec![0.0; n];
    let mut noise_mult = vec![1.0; n];
    let mut drift = 0.0;
    for (t, value) in dynamic.iter_mut().enumerate() {
        drift = 0.999 * drift + drift_noise.sample(rng);
        let daily =
            amplitude * (std::f64::consts::TAU * t as f64 / SAMPLES_PER_DAY as f64 + phase).sin();
        *value = daily + ambient_coupling * ambient[t] + drift;
    }

    for event in sample_events(rng, n, cfg) {
        apply_event(&mut dynamic, &mut noise_mult, event);
    }
    GroupDriver {
        dynamic,
        noise_mult,
    }
}

fn apply_event(dynamic: &mut [f64], noise_mult: &mut [f64], event: LatentEvent) {
    let n = dynamic.len();
    match event {
        LatentEvent::Spike { at, width, amplitude } => {
            for t in at..(at + width).min(n) {
                dynamic[t] += amplitude;
            }
        }
        LatentEvent::Shift { at, duration, amplitude } => {
            for t in at..(at + duration).min(n) {
                dynamic[t] += amplitude;
            }
        }
        LatentEvent::NoiseBurst { at, duration, factor } => {
            for t in at..(at + duration).min(n) {
                noise_mult[t] *= factor;
            }
        }
        LatentEvent::Ramp { at, half, peak } => {
            // Triangular slope change: up over `half` samples, back down.
            for k in 0..(2 * half) {
                let t = at + k;
                if t >= n {
                    break;
                }
                let frac = if k < half {
                    k as f64 / half as f64
                } else {
                    (2 * half - k) as f64 / half as f64
                };
                dynamic[t] += peak * frac;
            }
        }
    }
}

struct SensorSpec {
    id: String,
    kind: SensorKind,
    group: usize,
    /// Multiplies the group dynamic (individual response strength).
    gain: f64,
    level: f64,
    /// Scales dynamic and noise into the sensor's natural units.
    unit_scale: f64,
    noise_sigma: f64,
    /// Stationary amplitude of this sensor's private slow drift.
    drift_sigma: f64,
}

/// Generate the clean fleet (labels all false).
pub fn generate_fleet(config: &FleetConfig) -> LabeledDataset {
    let n = config.samples();
    let seed = config.seed;

    // Shared ambient: slow mean-reverting walk, common to every group.
    let mut ambient = vec![0.0; n];
    {
        let mut rng = stream_rng(seed, STREAM_AMBIENT);
        let step = Normal::new(0.0, 0.03).unwrap();
        let mut level = 0.0f64;
        for value in ambient.iter_mut() {
            level = 0.9995 * level + step.sample(&mut rng);
            *value = level;
        }
    }

    let mut groups: Vec<SensorGroup> = Vec::new();
    let mut drivers: Vec<GroupDriver> = Vec::new();
    let mut specs: Vec<SensorSpec> = Vec::new();
    // Some clusters additionally see another group's events, damped.
    let mut coupling: Vec<Option<(usize, f64)>> = Vec::new();

    let new_group = |groups: &mut Vec<SensorGroup>,
                         drivers: &mut Vec<GroupDriver>,
                         coupling: &mut Vec<Option<(usize, f64)>>,
                         name: String,
                         kind: GroupKind,
                         driver: GroupDriver,
                         coupled: Option<(usize, f64)>|
     -> usize {
        groups.push(SensorGroup {
            name,
            kind,
            sensor_ids: Vec::new(),
        });
        drivers.push(driver);
        coupling.push(coupled);
        groups.len() - 1
    };

    let pair_kinds = [SensorKind::Temperature, SensorKind::Humidity, SensorKind::Wbt];
    let pair_names = ["temperature", "humidity", "wbt"];

    // Redundant environment pairs.
    for p in 0..config.redundant_env_pairs {
        let mut rng = stream_rng(seed, STREAM_GROUP_BASE + p as u64);
        let driver = group_driver(&mut rng, n, config, &ambient);
        let kind = pair_kinds[p % 3];
        let base = pair_names[p % 3];
        let name = if p < 3 {
            format!("env_pair_{base}")
        } else {
            format!("env_pair_{base}{}", p / 3)
        };
        let g = new_group(
            &mut groups,
            &mut drivers,
            &mut coupling,
            name.clone(),
            GroupKind::RedundantPair,
            driver,
            None,
        );
        let level = rng.random_range(10.0..25.0);
        for member in ["a", "b"] {
            let id = format!("{name}_{member}");
            groups[g].sensor_ids.push(id.clone());
            specs.push(SensorSpec {
                id,
                kind,
                group: g,
                gain: 1.0,
                level,
                unit_scale: 1.0,
                noise_sigma: config.pair_noise_sigma,
                drift_sigma: config.pair_private_drift,
            });
        }
    }

    // Rooms: a hot-aisle group plus a CRAC cluster that also sees the
    // room's events at half strength.
    for r in 0..config.rooms {
        let stream = STREAM_GROUP_BASE + 100 + r as u64;
        let mut rng = stream_rng(seed, stream);
        let driver = group_driver(&mut rng, n, config, &ambient);
        let name = format!("room{:02}", r + 1);
        let g = new_group(
            &mut groups,
            &mut drivers,
            &mut coupling,
            format!("{name}_hot_aisle"),
            GroupKind::Room,
            driver,
            None,
        );
        let level = rng.random_range(28.0..34.0);
        for s in 0..config.hot_aisle_per_room {
            let id = format!("{name}_hotaisle_{:02}", s + 1);
            groups[g].sensor_ids.push(id.clone());
            specs.push(SensorSpec {
                id,
                kind: SensorKind::Temperature,
                group: g,
                gain: rng.random_range(0.95..1.05),
                level: level + rng.random_range(-0.5..0.5),
                unit_scale: 1.0,
                noise_sigma: config.noise_sigma,
                drift_sigma: config.private_drift,
            });
        }

        let mut crac_rng = stream_rng(seed, stream + 50);
        let crac_driver = group_driver(&mut crac_rng, n, config, &ambient);
        let cg = new_group(
            &mut groups,
            &mut drivers,
            &mut coupling,
            format!("{name}_crac"),
            GroupKind::Cluster,
            crac_driver,
            Some((g, 0.5)),
        );
        let crac_level = crac_rng.random_range(45.0..65.0);
        for c in 0..config.crac_per_room {
            let id = format!("{name}_crac_{:02}", c + 1);
            groups[cg].sensor_ids.push(id.clone());
            specs.push(SensorSpec {
                id,
                kind: SensorKind::FanSpeed,
                group: cg,
                gain: crac_rng.random_range(0.95..1.05),
                level: crac_level + crac_rng.random_range(-2.0..2.0),
                unit_scale: 2.0,
                noise_sigma: config.noise_sigma,
                drift_sigma: config.private_drift,
            });
        }
    }

    // Water loop cluster.
    {
        let mut rng = stream_rng(seed, STREAM_GROUP_BASE + 500);
        let driver = group_driver(&mut rng, n, config, &ambient);
        let g = new_group(
            &mut groups,
            &mut drivers,
            &mut coupling,
            "water_loop".to_string(),
            GroupKind::Cluster,
            driver,
            None,
        );
        let level = rng.random_range(12.0..18.0);
        for w in 0..config.water_sensors {
            let id = format!("water_{:02}", w + 1);
            groups[g].sensor_ids.push(id.clone());
            specs.push(SensorSpec {
                id,
                kind: SensorKind::Water,
                group: g,
                gain: rng.random_range(0.95..1.05),
                level: level + rng.random_range(-1.0..1.0),
                unit_scale: 0.6,
                noise_sigma: config.noise_sigma,
                drift_sigma: config.private_drift,
            });
        }
    }

    // Fleet-level singletons.
    for (idx, (id, kind, scale, lo, hi)) in [
        ("it_load", SensorKind::ItLoad, 25.0, 400.0, 800.0),
        ("pue", SensorKind::Pue, 0.01, 1.25, 1.55),
    ]
    .into_iter()
    .enumerate()
    {
        let mut rng = stream_rng(seed, STREAM_GROUP_BASE + 600 + idx as u64);
        let driver = group_driver(&mut rng, n, config, &ambient);
        let g = new_group(
            &mut groups,
            &mut drivers,
            &mut coupling,
            id.to_string(),
            GroupKind::Cluster,
            driver,
            None,
        );
        groups[g].sensor_ids.push(id.to_string());
        specs.push(SensorSpec {
            id: id.to_string(),
            kind,
            group: g,
            gain: 1.0,
            level: rng.random_range(lo..hi),
            unit_scale: scale,
            noise_sigma: config.noise_sigma,
            drift_sigma: config.private_drift,
        });
    }

    let timestamps: Vec<i64> = (0..n as i64)
        .map(|i| config.start_epoch_s + i * config.step_s)
        .collect();
    let series: Vec<SensorSeries> = specs
        .iter()
        .enumerate()
        .map(|(si, spec)| {
            let mut rng = stream_rng(seed, STREAM_SENSOR_BASE + si as u64);
            let noise = Normal::new(0.0, 1.0).unwrap();
            let driver = &drivers[spec.group];
            let coupled = coupling[spec.group].map(|(g, w)| (&drivers[g], w));
            // Mean-reverting private drift with the configured stationary
            // amplitude (decay 0.998 per step).
            let drift_step = Normal::new(0.0, spec.drift_sigma * (1.0f64 - 0.998 * 0.998).sqrt())
                .unwrap();
            let mut drift = 0.0f64;
            let values: Vec<f64> = (0..n)
                .map(|t| {
                    let mut dynamic = driver.dynamic[t];
                    if let Some((other, weight)) = coupled {
                        dynamic += weight * other.dynamic[t];
                    }
                    drift = 0.998 * drift + drift_step.sample(&mut rng);
                    let eps: f64 = noise.sample(&mut rng);
                    let value = spec.level
                        + spec.unit_scale
                            * (spec.gain * dynamic
                                + drift
                                + driver.noise_mult[t] * spec.noise_sigma * eps);
                    if config.missing_rate > 0.0 && rng.random_bool(config.missing_rate) {
                        f64::NAN
                    } else {
                        value
                    }
                })
                .collect();
            SensorSeries::new(
                spec.id.clone(),
                spec.kind,
                timestamps.clone(),
                values,
                Some(SAMPLES_PER_DAY),
            )
            .expect("generated series is well-formed")
        })
        .collect();

    let labels = vec![vec![false; n]; series.len()];
    // Only rooms and redundant pairs are advertised as ground truth.
    let group_truth = groups
        .into_iter()
        .filter(|g| g.kind != GroupKind::Cluster)
        .collect();

    LabeledDataset {
        series,
        labels,
        group_truth,
    }
}

/// Feature-matrix anomaly protocol: at each frame, with probability `p`,
/// pick one room, pick add-or-subtract, and perturb every (sensor, feature)
/// entry of that room by its own draw from `N(mean, std)`.
pub fn inject_feature_anomaly(
    frames: &[Frame],
    rooms: &[Vec<usize>],
    p: f64,
    mean: f64,
    std: f64,
    seed: u64,
) -> (Vec<Frame>, Vec<Vec<bool>>) {
    let mut rng = stream_rng(seed, 7001);
    let magnitude = Normal::new(mean, std).unwrap();
    let mut out = frames.to_vec();
    let mut labels: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.nrows()]).collect();
    if rooms.is_empty() || p <= 0.0 {
        return (out, labels);
    }
    for (frame, label) in out.iter_mut().zip(labels.iter_mut()) {
        if !rng.random_bool(p.min(1.0)) {
            continue;
        }
        let room = &rooms[rng.random_range(0..rooms.len())];
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for &sensor in room {
            for f in 0..frame.ncols() {
                frame[(sensor, f)] += sign * magnitude.sample(&mut rng);
            }
            label[sensor] = true;
        }
    }
    (out, labels)
}

/// Time-series anomaly protocol: at each step in `range`, with probability
/// `p`, pick one room and add a per-sensor offset drawn from `N(mean, std)`
/// to the next `duration` samples. Overlapping injections add up; labels
/// cover every touched (sensor, t).
#[allow(clippy::too_many_arguments)]
pub fn inject_series_anomaly(
    dataset: &LabeledDataset,
    rooms: &[Vec<usize>],
    p: f64,
    mean: f64,
    std: f64,
    duration: usize,
    range: (usize, usize),
    seed: u64,
) -> LabeledDataset {
    let mut rng = stream_rng(seed, 7002);
    let magnitude = Normal::new(mean, std).unwrap();
    let mut out = dataset.clone();
    let n = dataset.timestamps().len();
    let (lo, hi) = (range.0.min(n), range.1.min(n));
    if rooms.is_empty() || p <= 0.0 {
        return out;
    }
    for t in lo..hi {
        if !rng.random_bool(p.min(1.0)) {
            continue;
        }
        let room = &rooms[rng.random_range(0..rooms.len())];
        for &sensor in room {
            let offset = magnitude.sample(&mut rng);
            for step in t..(t + duration).min(n) {
                out.series[sensor].values[step] += offset;
                out.labels[sensor][step] = true;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::pearson;
    use ndarray::Array2;

    fn small_config() -> FleetConfig {
        FleetConfig {
            rooms: 2,
            hot_aisle_per_room: 3,
            crac_per_room: 2,
            water_sensors: 2,
            redundant_env_pairs: 1,
            weeks: 1,
            missing_rate: 0.0,
            ..FleetConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let a = generate_fleet(&cfg);
        let b = generate_fleet(&cfg);
        assert_eq!(a.sensor_ids(), b.sensor_ids());
        for (x, y) in a.series.iter().zip(&b.series) {
            assert_eq!(x.values, y.values);
        }
        let c = generate_fleet(&FleetConfig {
            seed: 1,
            ..cfg.clone()
        });
        assert!(a.series[0].values != c.series[0].values);
    }

    #[test]
    fn sensor_count_matches_config() {
        assert_eq!(FleetConfig::default().sensor_count(), 159);
        let cfg = small_config();
        let fleet = generate_fleet(&cfg);
        assert_eq!(fleet.series.len(), cfg.sensor_count());
        assert_eq!(fleet.labels.len(), fleet.series.len());
        assert!(fleet.labels.iter().all(|l| l.iter().all(|&b| !b)));
    }

    #[test]
    fn group_truth_covers_rooms_and_pairs() {
        let cfg = small_config();
        let fleet = generate_fleet(&cfg);
        let rooms = fleet.group_indices(GroupKind::Room);
        let pairs = fleet.group_indices(GroupKind::RedundantPair);
        assert_eq!(rooms.len(), cfg.rooms);
        assert_eq!(pairs.len(), cfg.redundant_env_pairs);
        assert!(rooms.iter().all(|g| g.len() == cfg.hot_aisle_per_room));
        assert!(pairs.iter().all(|g| g.len() == 2));
    }

    #[test]
    fn redundant_pair_is_tightly_correlated() {
        let fleet = generate_fleet(&small_config());
        let pair = &fleet.group_indices(GroupKind::RedundantPair)[0];
        let r = pearson(
            &fleet.series[pair[0]].values,
            &fleet.series[pair[1]].values,
        );
        assert!(r > 0.95, "pair correlation {r}");
    }

    #[test]
    fn within_room_correlation_beats_cross_room() {
        let fleet = generate_fleet(&small_config());
        let rooms = fleet.group_indices(GroupKind::Room);
        let within = pearson(
            &fleet.series[rooms[0][0]].values,
            &fleet.series[rooms[0][1]].values,
        );
        let cross = pearson(
            &fleet.series[rooms[0][0]].values,
            &fleet.series[rooms[1][0]].values,
        );
        assert!(within > cross.abs(), "within {within} vs cross {cross}");
    }

    #[test]
    fn missing_rate_produces_missing_values() {
        let cfg = FleetConfig {
            missing_rate: 0.01,
            ..small_config()
        };
        let fleet = generate_fleet(&cfg);
        let missing: usize = fleet
            .series
            .iter()
            .map(|s| s.values.iter().filter(|v| v.is_nan()).count())
            .sum();
        let total: usize = fleet.series.iter().map(|s| s.len()).sum();
        let rate = missing as f64 / total as f64;
        assert!(rate > 0.005 && rate < 0.02, "rate {rate}");
    }

    #[test]
    fn feature_injection_honours_p_zero_and_one() {
        let frames: Vec<Frame> = (0..10).map(|_| Array2::zeros((6, 4))).collect();
        let rooms = vec![vec![0usize, 1, 2], vec![3, 4, 5]];

        let (same, labels) = inject_feature_anomaly(&frames, &rooms, 0.0, 3.0, 1.0, 9);
        assert!(labels.iter().all(|l| l.iter().all(|&b| !b)));
        for (a, b) in frames.iter().zip(&same) {
            assert_eq!(a, b);
        }

        let (_, labels) = inject_feature_anomaly(&frames, &rooms, 1.0, 3.0, 1.0, 9);
        for l in &labels {
            assert_eq!(l.iter().filter(|&&b| b).count(), 3);
        }
    }

    #[test]
    fn feature_injection_rate_matches_binomial() {
        let n_sensors = 14usize;
        let frames: Vec<Frame> = (0..4000).map(|_| Array2::zeros((n_sensors, 4))).collect();
        let rooms = vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]];
        let p = 0.2;
        let (_, labels) = inject_feature_anomaly(&frames, &rooms, p, 3.0, 1.0, 3);
        let labelled: usize = labels
            .iter()
            .map(|l| l.iter().filter(|&&b| b).count())
            .sum();
        let rate = labelled as f64 / (labels.len() * n_sensors) as f64;
        let expect = p * 2.0 / n_sensors as f64;
        // 3 sigma of the binomial over the number of frames.
        let sigma = (p * (1.0 - p) / labels.len() as f64).sqrt() * 2.0 / n_sensors as f64;
        assert!(
            (rate - expect).abs() < 3.0 * sigma + 1e-9,
            "rate {rate}, expect {expect}"
        );
    }

    #[test]
    fn series_injection_marks_exactly_the_touched_window() {
        let cfg = small_config();
        let clean = generate_fleet(&cfg);
        let rooms = clean.group_indices(GroupKind::Room);
        let n = clean.timestamps().len();

        // Force a single injection: a one-step window with p = 1.
        let injected = inject_series_anomaly(&clean, &rooms, 1.0, 6.0, 1.0, 12, (500, 501), 42);
        let mut touched = Vec::new();
        for (si, labels) in injected.labels.iter().enumerate() {
            let marked: Vec<usize> = (0..n).filter(|&t| labels[t]).collect();
            if marked.is_empty() {
                continue;
            }
            touched.push(si);
            assert_eq!(marked, (500..512).collect::<Vec<_>>());
        }
        assert_eq!(touched.len(), cfg.hot_aisle_per_room);

        // Injected minus clean is one constant offset over the hour.
        for &si in &touched {
            let diffs: Vec<f64> = (500..512)
                .map(|t| injected.series[si].values[t] - clean.series[si].values[t])
                .collect();
            for d in &diffs {
                assert!((d - diffs[0]).abs() < 1e-12, "offset not constant");
            }
            assert!((diffs[0] - 6.0).abs() < 4.0, "offset {} too far from 6", diffs[0]);
        }

        // Untouched samples are identical.
        for (si, s) in injected.series.iter().enumerate() {
            for t in 0..n {
                if !injected.labels[si][t] {
                    assert_eq!(s.values[t], clean.series[si].values[t]);
                }
            }
        }
    }

    #[test]
    fn series_injection_p_zero_is_identity() {
        let clean = generate_fleet(&small_config());
        let rooms = clean.group_indices(GroupKind::Room);
        let same = inject_series_anomaly(&clean, &rooms, 0.0, 6.0, 1.0, 12, (0, 100), 1);
        for (a, b) in clean.series.iter().zip(&same.series) {
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn overlapping_series_injections_compose_additively() {
        let cfg = small_config();
        let clean = generate_fleet(&cfg);
        let rooms: Vec<Vec<usize>> = vec![clean.group_indices(GroupKind::Room)[0].clone()];
        // p = 1 over three consecutive steps on a single room: offsets stack.
        let injected = inject_series_anomaly(&clean, &rooms, 1.0, 6.0, 0.5, 12, (600, 603), 5);
        let sensor = rooms[0][0];
        let diff_at =
            |t: usize| injected.series[sensor].values[t] - clean.series[sensor].values[t];
        // Sample 602 is covered by all three injections, sample 600 by one.
        assert!(diff_at(602) > diff_at(600) + 1.0);
        // Labels are the union of the three windows.
        for t in 600..614 {
            assert!(injected.labels[sensor][t]);
        }
    }

    #[test]
    fn mean_offset_of_injected_samples_is_near_six() {
        let cfg = small_config();
        let clean = generate_fleet(&cfg);
        let rooms = clean.group_indices(GroupKind::Room);
        let n = clean.timestamps().len();
        let injected = inject_series_anomaly(&clean, &rooms, 0.05, 6.0, 1.0, 12, (400, n), 11);

        let mut total = 0.0;
        let mut count = 0usize;
        for (si, labels) in injected.labels.iter().enumerate() {
            for t in 0..n {
                if labels[t] {
                    total += injected.series[si].values[t] - clean.series[si].values[t];
                    count += 1;
                }
            }
        }
        assert!(count > 0);
        // Overlaps push the mean above 6, so the tolerance is one-sided wide.
        let mean = total / count as f64;
        assert!(mean > 5.0 && mean < 9.0, "mean offset {mean}");
    }
}
