//! Ranking (energy, accuracy, privacy) outcomes: Pareto dominance and
//! weighted scenario scores.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::harness::report::{mean, rep_totals};
use crate::harness::{HarnessError, Phase, RunRecord, Treatment};
use crate::learners::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub dataset: String,
    pub treatment: Treatment,
    pub model: ModelKind,
    pub joules: f64,
    pub accuracy: f64,
    pub privacy: u32,
}

impl TradeoffPoint {
    /// True when `self` is at least as good everywhere and strictly better
    /// somewhere.
    pub fn dominates(&self, other: &TradeoffPoint) -> bool {
        let no_worse = self.joules <= other.joules && self.accuracy >= other.accuracy && self.privacy >= other.privacy;
        let better = self.joules < other.joules || self.accuracy > other.accuracy || self.privacy > other.privacy;
        no_worse && better
    }
}

/// Ordinal privacy rank per treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrivacyScale {
    pub benchmark: u32,
    /// Rank per anonymity k. A k that is not listed gets the rank of the
    /// largest listed k below it, or the smallest listed rank.
    pub k_anonymity: BTreeMap<usize, u32>,
    pub synthetic: u32,
}

impl Default for PrivacyScale {
    fn default() -> Self {
        Self { benchmark: 0, k_anonymity: BTreeMap::from([(3, 1), (10, 2), (27, 3)]), synthetic: 3 }
    }
}

impl PrivacyScale {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("privacy scale: {e}")))?;
        let min_other = s.k_anonymity.values().copied().chain([s.synthetic]).min().unwrap_or(s.synthetic);
        if s.benchmark > min_other {
            return Err(HarnessError::Config("privacy scale: benchmark must have the lowest rank".into()));
        }
        Ok(s)
    }

    pub fn rank(&self, t: Treatment) -> u32 {
        match t {
            Treatment::Benchmark => self.benchmark,
            Treatment::Synthetic(_) => self.synthetic,
            Treatment::KAnon(k) => self
                .k_anonymity
                .range(..=k)
                .next_back()
                .or_else(|| self.k_anonymity.iter().next())
                .map_or(self.benchmark + 1, |(_, &r)| r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioWeights {
    pub accuracy: f64,
    pub energy: f64,
    pub privacy: f64,
}

impl ScenarioWeights {
    /// Weights scaled to sum to 1.
    pub fn new(accuracy: f64, energy: f64, privacy: f64) -> Result<Self, HarnessError> {
        let all = [accuracy, energy, privacy];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) || all.iter().sum::<f64>() <= 0.0 {
            return Err(HarnessError::Config("scenario weights must be >= 0 and not all zero".into()));
        }
        let s: f64 = all.iter().sum();
        Ok(Self { accuracy: accuracy / s, energy: energy / s, privacy: privacy / s })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u8,
    pub name: &'static str,
    #[serde(skip)]
    weights: (u8, u8, u8),
}

impl Scenario {
    pub fn weights(&self) -> ScenarioWeights {
        let (a, e, p) = self.weights;
        ScenarioWeights::new(a.into(), e.into(), p.into()).expect("preset weights are valid")
    }
}

/// Scenario 0 weighs everything equally, 1 is accuracy only, 2 energy only.
pub fn scenario_presets() -> [Scenario; 3] {
    [
        Scenario { id: 0, name: "optimise all dimensions", weights: (1, 1, 1) },
        Scenario { id: 1, name: "optimise for accuracy", weights: (1, 0, 0) },
        Scenario { id: 2, name: "optimise for energy", weights: (0, 1, 0) },
    ]
}

pub fn scenario(id: u8) -> Option<Scenario> {
    scenario_presets().into_iter().find(|s| s.id == id)
}

/// One point per (dataset, treatment, model): mean train + evaluate joules
/// over complete repetitions and mean accuracy.
pub fn collect_points(records: &[RunRecord], scale: &PrivacyScale) -> Result<Vec<TradeoffPoint>, HarnessError> {
    let mut acc: BTreeMap<(String, ModelKind, Treatment), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok() && r.phase == Phase::Evaluate) {
        if let (Some(m), Some(a)) = (r.model, r.accuracy) {
            acc.entry((r.dataset.clone(), m, r.treatment)).or_default().push(a);
        }
    }
    let energy = rep_totals(records);
    let points: Vec<TradeoffPoint> = acc
        .into_iter()
        .filter_map(|(key, accs)| {
            let reps = energy.get(&key)?;
            let (dataset, model, treatment) = key;
            Some(TradeoffPoint {
                joules: mean(reps.values().map(|t| t.joules)),
                accuracy: mean(accs),
                privacy: scale.rank(treatment),
                dataset,
                treatment,
                model,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    Ok(points)
}

/// Indices of the non-dominated points, in input order.
pub fn pareto_front(points: &[TradeoffPoint]) -> Vec<usize> {
    // Sort by joules so only earlier (cheaper or equal) points can dominate.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].joules.total_cmp(&points[b].joules));
    let mut front = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let p = &points[i];
        let tied_end = order[pos..].iter().take_while(|&&j| points[j].joules == p.joules).count() + pos;
        if !order[..tied_end].iter().any(|&j| points[j].dominates(p)) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPoint {
    #[serde(flatten)]
    pub point: TradeoffPoint,
    pub score: f64,
    /// 1 is best.
    pub rank: usize,
    pub on_front: bool,
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

fn tie_break(a: &TradeoffPoint, b: &TradeoffPoint) -> Ordering {
    b.accuracy
        .total_cmp(&a.accuracy)
        .then(a.joules.total_cmp(&b.joules))
        .then_with(|| a.treatment.to_string().cmp(&b.treatment.to_string()))
        .then(a.model.cmp(&b.model))
        .then_with(|| a.dataset.cmp(&b.dataset))
}

/// Score every point on its dimensions, each min-max scaled over `points`
/// (energy inverted), best first.
pub fn scenario_rank(points: &[TradeoffPoint], w: &ScenarioWeights) -> Vec<RankedPoint> {
    let acc = normalized(&points.iter().map(|p| p.accuracy).collect::<Vec<_>>());
    let energy = normalized(&points.iter().map(|p| -p.joules).collect::<Vec<_>>());
    let privacy = normalized(&points.iter().map(|p| f64::from(p.privacy)).collect::<Vec<_>>());
    let front = pareto_front(points);
    let mut ranked: Vec<RankedPoint> = points
        .iter()
        .enumerate()
        .map(|(i, p)| RankedPoint {
            point: p.clone(),
            score: w.accuracy * acc[i] + w.energy * energy[i] + w.privacy * privacy[i],
            rank: 0,
            on_front: front.binary_search(&i).is_ok(),
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| tie_break(&a.point, &b.point)));
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    ranked
}

/// `scenario_rank` run separately for each dataset in `points`.
pub fn rank_by_dataset(points: &[TradeoffPoint], w: &ScenarioWeights) -> Vec<RankedPoint> {
    let mut by_ds: BTreeMap<&str, Vec<TradeoffPoint>> = BTreeMap::new();
    for p in points {
        by_ds.entry(&p.dataset).or_default().push(p.clone());
    }
    by_ds.values().flat_map(|ps| scenario_rank(ps, w)).collect()
}
