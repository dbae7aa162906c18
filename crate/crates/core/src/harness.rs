//! Experiment runner: density and budget sweeps comparing the dynamic and
//! fixed partitioners, with CSV and JSON output.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::{
    duplicate_link_traversals, dynamic_partition, fixed_partition, region_of, Algorithm, PartitionConfig,
    PartitionError, PartitionResult, RegionKey, STANDARD_BUDGETS,
};
use crate::rbs::RbsCodec;
use crate::topology::{all_pairs_hops, generate_topology, DistanceMatrix, NodeId, NodeRole, Topology, TopologyConfig, TopologyError};
use crate::tree::{build_multicast_tree, TreeError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("cannot place {requested} members: only {available} devices available")]
    InfeasibleCount { requested: usize, available: usize },
    #[error("trial seed {seed}: {source}")]
    Topology { seed: u64, source: TopologyError },
    #[error("trial seed {seed}, density {density}: {source}")]
    Tree { seed: u64, density: f64, source: TreeError },
    #[error("trial seed {seed}, density {density}, budget {budget}, {algorithm}: {source}")]
    Partition { seed: u64, density: f64, budget: u64, algorithm: &'static str, source: PartitionError },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A participant count, or an inclusive range to draw uniformly from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CourseSize {
    Exactly(usize),
    Between(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CourseCategory {
    pub name: &'static str,
    pub size: CourseSize,
    pub probability: f64,
}

/// Mix of campus course sizes.
#[derive(Debug, Clone)]
pub struct CourseSizeDistribution {
    categories: Vec<CourseCategory>,
    index: WeightedIndex<f64>,
}

impl Default for CourseSizeDistribution {
    fn default() -> Self {
        use CourseSize::*;
        Self::new(vec![
            CourseCategory { name: "Small Class", size: Exactly(30), probability: 0.50 },
            CourseCategory { name: "Professional Course", size: Between(30, 90), probability: 0.20 },
            CourseCategory { name: "Public Course", size: Between(60, 150), probability: 0.20 },
            CourseCategory { name: "Mini-lecture", size: Exactly(200), probability: 0.05 },
            CourseCategory { name: "Large Lecture", size: Exactly(1000), probability: 0.04 },
            CourseCategory { name: "Mega-lecture", size: Exactly(10000), probability: 0.01 },
        ])
        .expect("built-in distribution is valid")
    }
}

impl CourseSizeDistribution {
    /// Probabilities must be non-negative and sum to 1 within 1e-9.
    pub fn new(categories: Vec<CourseCategory>) -> Result<Self, HarnessError> {
        let total: f64 = categories.iter().map(|c| c.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(HarnessError::InvalidConfig(format!("course probabilities sum to {total}")));
        }
        for c in &categories {
            if let CourseSize::Between(lo, hi) = c.size {
                if lo > hi {
                    return Err(HarnessError::InvalidConfig(format!("{}: empty range {lo}..={hi}", c.name)));
                }
            }
        }
        let index = WeightedIndex::new(categories.iter().map(|c| c.probability))
            .map_err(|e| HarnessError::InvalidConfig(format!("course probabilities: {e}")))?;
        Ok(Self { categories, index })
    }

    pub fn categories(&self) -> &[CourseCategory] {
        &self.categories
    }

    pub fn sample_category<R: Rng + ?Sized>(&self, rng: &mut R) -> &CourseCategory {
        &self.categories[self.index.sample(rng)]
    }

    /// A participant count, capped at `cap`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, cap: usize) -> usize {
        let size = match self.sample_category(rng).size {
            CourseSize::Exactly(n) => n,
            CourseSize::Between(lo, hi) => rng.random_range(lo..=hi),
        };
        size.min(cap)
    }
}

/// Device ids grouped by access region, in ascending region id.
pub fn devices_by_region(topology: &Topology, key: RegionKey) -> BTreeMap<NodeId, Vec<NodeId>> {
    let mut regions: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for d in topology.nodes_with_role(NodeRole::UserDevice) {
        if let Some(r) = region_of(topology, d, key) {
            regions.entry(r).or_default().push(d);
        }
    }
    regions
}

/// Members concentrated according to `density`.
///
/// Regions are visited in a random order and the smallest prefix whose
/// device total reaches `count / density` becomes the pool (all regions if
/// none does); `count` devices are drawn from it uniformly.
pub fn select_members<R: Rng + ?Sized>(
    topology: &Topology,
    count: usize,
    density: f64,
    key: RegionKey,
    rng: &mut R,
) -> Result<BTreeSet<NodeId>, HarnessError> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(HarnessError::InvalidConfig(format!("density {density} not in (0, 1]")));
    }
    let regions = devices_by_region(topology, key);
    let available: usize = regions.values().map(Vec::len).sum();
    if count > available {
        return Err(HarnessError::InfeasibleCount { requested: count, available });
    }
    let mut order: Vec<&Vec<NodeId>> = regions.values().collect();
    order.shuffle(rng);
    let target = count as f64 / density;
    let mut pool = Vec::new();
    for devices in order {
        if pool.len() as f64 >= target {
            break;
        }
        pool.extend_from_slice(devices);
    }
    Ok(index::sample(rng, pool.len(), count).into_iter().map(|i| pool[i]).collect())
}

/// A uniformly random device outside `members`.
pub fn pick_source<R: Rng + ?Sized>(topology: &Topology, members: &BTreeSet<NodeId>, rng: &mut R) -> Option<NodeId> {
    let candidates: Vec<NodeId> =
        topology.nodes_with_role(NodeRole::UserDevice).filter(|d| !members.contains(d)).collect();
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.random_range(0..candidates.len())])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberCount {
    Exactly(usize),
    CourseSample,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub topology: TopologyConfig,
    /// Used for every trial instead of generating one per trial seed.
    pub fixed_topology: Option<Topology>,
    pub densities: Vec<f64>,
    pub budgets: Vec<u64>,
    pub members: MemberCount,
    pub trials: usize,
    pub seed: u64,
    pub region_key: RegionKey,
}

/// Ten density levels, 0.1 through 1.0.
pub fn default_densities() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: TopologyConfig::default(),
            fixed_topology: None,
            densities: default_densities(),
            budgets: STANDARD_BUDGETS.to_vec(),
            members: MemberCount::CourseSample,
            trials: 30,
            seed: 0,
            region_key: RegionKey::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::InvalidConfig("trials must be at least 1".into()));
        }
        if self.densities.is_empty() || self.budgets.is_empty() {
            return Err(HarnessError::InvalidConfig("need at least one density and one budget".into()));
        }
        if let Some(d) = self.densities.iter().find(|&&d| !(d > 0.0 && d <= 1.0)) {
            return Err(HarnessError::InvalidConfig(format!("density {d} not in (0, 1]")));
        }
        if self.budgets.contains(&0) {
            return Err(HarnessError::InvalidConfig("budgets must be positive".into()));
        }
        if self.members == MemberCount::Exactly(0) {
            return Err(HarnessError::InvalidConfig("member count must be at least 1".into()));
        }
        if self.fixed_topology.is_none() {
            self.topology.validate().map_err(|source| HarnessError::Topology { seed: self.seed, source })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub density: f64,
    pub budget: u64,
    pub algorithm: String,
    pub members: usize,
    pub j: usize,
    pub total_bits: u64,
    pub utilization: f64,
    pub flow_entries: usize,
    pub dup_link_traversals: usize,
}

impl MetricsRow {
    fn new(seed: u64, density: f64, budget: u64, result: &PartitionResult, tree_members: usize, dup: usize) -> Self {
        Self {
            seed,
            density,
            budget,
            algorithm: result.algorithm.as_str().to_string(),
            members: tree_members,
            j: result.j(),
            total_bits: result.total_encoded_bits,
            utilization: result.utilization(budget),
            flow_entries: result.flow_entries,
            dup_link_traversals: dup,
        }
    }
}

/// Seed of trial `t`.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

/// ChaCha stream for member selection; topology generation uses streams
/// counting up from 0.
const SELECTION_STREAM: u64 = u64::MAX;

struct Prepared<'a> {
    topology: &'a Topology,
    distances: &'a DistanceMatrix,
    codec: &'a RbsCodec,
}

fn run_trial(config: &ExperimentConfig, seed: u64, prepared: &Prepared<'_>) -> Result<Vec<MetricsRow>, HarnessError> {
    let Prepared { topology, distances, codec } = *prepared;
    let devices = topology.nodes_with_role(NodeRole::UserDevice).count();
    // One device is held back as the source.
    let cap = devices.saturating_sub(1);
    let courses = CourseSizeDistribution::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SELECTION_STREAM);

    let mut rows = Vec::with_capacity(config.densities.len() * config.budgets.len() * 2);
    for &density in &config.densities {
        let count = match config.members {
            MemberCount::Exactly(n) => n,
            MemberCount::CourseSample => courses.sample(&mut rng, cap),
        };
        if count > cap {
            return Err(HarnessError::InfeasibleCount { requested: count, available: cap });
        }
        let members = select_members(topology, count, density, config.region_key, &mut rng)?;
        let source = pick_source(topology, &members, &mut rng)
            .ok_or(HarnessError::InfeasibleCount { requested: count, available: cap })?;
        let tree = build_multicast_tree(topology, distances, source, &members)
            .map_err(|source| HarnessError::Tree { seed, density, source })?;

        for &budget in &config.budgets {
            let pc = PartitionConfig::new(budget);
            let wrap = |algorithm: Algorithm| {
                move |source| HarnessError::Partition { seed, density, budget, algorithm: algorithm.as_str(), source }
            };
            let dynamic = dynamic_partition(topology, &tree, distances, codec, &pc).map_err(wrap(Algorithm::Dynamic))?;
            dynamic.verify_forwarding(topology, codec).map_err(wrap(Algorithm::Dynamic))?;
            let fixed =
                fixed_partition(topology, &tree, codec, &pc, config.region_key).map_err(wrap(Algorithm::Fixed))?;
            fixed.verify_forwarding(topology, codec).map_err(wrap(Algorithm::Fixed))?;
            for result in [&dynamic, &fixed] {
                let dup = duplicate_link_traversals(result, &tree);
                rows.push(MetricsRow::new(seed, density, budget, result, members.len(), dup));
            }
        }
    }
    Ok(rows)
}

/// Runs every trial; rows come back ordered by
/// `(seed, density, budget, algorithm)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>, HarnessError> {
    config.validate()?;
    let shared = match &config.fixed_topology {
        Some(t) => {
            let distances = all_pairs_hops(t).map_err(|source| HarnessError::Topology { seed: t.seed(), source })?;
            Some((distances, RbsCodec::new(t)))
        }
        None => None,
    };

    let per_trial: Vec<Vec<MetricsRow>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.seed, t);
            match (&config.fixed_topology, &shared) {
                (Some(topology), Some((distances, codec))) => {
                    run_trial(config, seed, &Prepared { topology, distances, codec })
                }
                _ => {
                    let topo_err = |source| HarnessError::Topology { seed, source };
                    let topology = generate_topology(&config.topology.clone().seed(seed)).map_err(topo_err)?;
                    let distances = all_pairs_hops(&topology).map_err(topo_err)?;
                    let codec = RbsCodec::new(&topology);
                    run_trial(config, seed, &Prepared { topology: &topology, distances: &distances, codec: &codec })
                }
            }
        })
        .collect::<Result<_, _>>()?;

    let mut rows: Vec<MetricsRow> = per_trial.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.seed
            .cmp(&b.seed)
            .then(a.density.total_cmp(&b.density))
            .then(a.budget.cmp(&b.budget))
            .then(a.algorithm.cmp(&b.algorithm))
    });
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

pub const CSV_HEADER: [&str; 10] = [
    "seed",
    "density",
    "budget",
    "algorithm",
    "members",
    "j",
    "total_bits",
    "utilization",
    "flow_entries",
    "dup_link_traversals",
];

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(HarnessError::InvalidConfig(format!("unexpected CSV header {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

pub fn write_json<W: Write>(rows: &[MetricsRow], writer: W) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(writer, rows)?;
    Ok(())
}

/// Dynamic-versus-fixed comparison for one `(density, budget)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub density: f64,
    pub budget: u64,
    pub trials: usize,
    pub mean_j_dynamic: f64,
    pub mean_j_fixed: f64,
    /// Mean over trials of `(j_fixed - j_dynamic) / j_fixed`, in percent.
    pub mean_reduction_pct: f64,
    /// Mean over trials of `|j_dynamic - j_fixed| / j_fixed`.
    pub mean_abs_gap: f64,
    pub mean_util_dynamic: f64,
    pub mean_util_fixed: f64,
}

/// Pairs dynamic and fixed rows by `(seed, density, budget)` and averages
/// per cell. Unpaired rows are ignored.
pub fn summarize(rows: &[MetricsRow]) -> Vec<CellSummary> {
    type Key = (u64, u64, u64);
    let key = |r: &MetricsRow| (r.density.to_bits(), r.budget, r.seed);
    let mut dynamic: BTreeMap<Key, &MetricsRow> = BTreeMap::new();
    let mut fixed: BTreeMap<Key, &MetricsRow> = BTreeMap::new();
    for r in rows {
        match r.algorithm.as_str() {
            "dynamic" => {
                dynamic.insert(key(r), r);
            }
            "fixed" => {
                fixed.insert(key(r), r);
            }
            _ => {}
        }
    }

    let mut cells: BTreeMap<(u64, u64), Vec<(&MetricsRow, &MetricsRow)>> = BTreeMap::new();
    for (k, d) in &dynamic {
        if let Some(f) = fixed.get(k) {
            cells.entry((k.0, k.1)).or_default().push((d, f));
        }
    }

    let mut out: Vec<CellSummary> = cells
        .into_iter()
        .map(|((density, budget), pairs)| {
            let n = pairs.len() as f64;
            let mean = |f: &dyn Fn(&(&MetricsRow, &MetricsRow)) -> f64| pairs.iter().map(f).sum::<f64>() / n;
            CellSummary {
                density: f64::from_bits(density),
                budget,
                trials: pairs.len(),
                mean_j_dynamic: mean(&|(d, _)| d.j as f64),
                mean_j_fixed: mean(&|(_, f)| f.j as f64),
                mean_reduction_pct: mean(&|(d, f)| 100.0 * (f.j as f64 - d.j as f64) / f.j as f64),
                mean_abs_gap: mean(&|(d, f)| (d.j as f64 - f.j as f64).abs() / f.j as f64),
                mean_util_dynamic: mean(&|(d, _)| d.utilization),
                mean_util_fixed: mean(&|(_, f)| f.utilization),
            }
        })
        .collect();
    out.sort_by(|a, b| a.density.total_cmp(&b.density).then(a.budget.cmp(&b.budget)));
    out
}
