//! Problem definitions, seeded generators and JSON files.
//!
//! File layout (all numbers are `"num/den"` strings):
//!
//! ```json
//! { "kind": "knapsack", "n": 3, "m": 2,
//!   "capacities": ["5/1", "5/1"], "weights": [...], "profits": [...],
//!   "meta": { "seed": "7" } }
//!
//! { "kind": "scheduling", "model": "uniform", "n": 2, "m": 2,
//!   "processing": [["4/1", "2/1"], ...], "overheads": ["0/1", "0/1"],
//!   "base_times": [...], "speeds": [...], "meta": {} }
//! ```
//!
//! `base_times` and `speeds` are required for the uniform and identical
//! models and must reproduce `processing` exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rational::Rational;

/// Name of the pseudo-random generator recorded in instance metadata.
pub const GENERATOR_NAME: &str = "chacha8-seed_from_u64";

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("invalid counts: n = {n}, m = {m} (both must be at least 1)")]
    InvalidCounts { n: usize, m: usize },
    #[error("{field} has length {found}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{field}[{index}] = {value} violates its sign constraint")]
    BadSign {
        field: &'static str,
        index: usize,
        value: Rational,
    },
    #[error("uniform/identical instance: processing[{job}][{machine}] != base_times[{job}] / speeds[{machine}]")]
    InconsistentSpeeds { job: usize, machine: usize },
    #[error("identical instance with non-unit speed at machine {0}")]
    NonUnitSpeed(usize),
    #[error("{0} model requires base_times and speeds")]
    MissingSpeedData(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed instance file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MachineModel {
    Unrelated,
    Uniform,
    Identical,
}

impl MachineModel {
    pub fn name(self) -> &'static str {
        match self {
            MachineModel::Unrelated => "unrelated",
            MachineModel::Uniform => "uniform",
            MachineModel::Identical => "identical",
        }
    }
}

/// Multiple knapsack problem `(C, w, p)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    pub n: usize,
    pub m: usize,
    pub capacities: Vec<Rational>,
    pub weights: Vec<Rational>,
    pub profits: Vec<Rational>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl KnapsackInstance {
    pub fn new(
        capacities: Vec<Rational>,
        weights: Vec<Rational>,
        profits: Vec<Rational>,
    ) -> Result<Self, InstanceError> {
        let inst = KnapsackInstance {
            n: weights.len(),
            m: capacities.len(),
            capacities,
            weights,
            profits,
            meta: BTreeMap::new(),
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Convenience constructor from integer data.
    pub fn from_integers(capacities: &[i64], weights: &[i64], profits: &[i64]) -> Result<Self, InstanceError> {
        let conv = |v: &[i64]| v.iter().map(|&x| Rational::from_integer(x)).collect::<Vec<_>>();
        Self::new(conv(capacities), conv(weights), conv(profits))
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.m == 0 {
            return Err(InstanceError::InvalidCounts { n: self.n, m: self.m });
        }
        check_len("weights", self.n, self.weights.len())?;
        check_len("profits", self.n, self.profits.len())?;
        check_len("capacities", self.m, self.capacities.len())?;
        check_sign("weights", &self.weights, false)?;
        check_sign("profits", &self.profits, false)?;
        check_sign("capacities", &self.capacities, false)?;
        Ok(())
    }

    pub fn is_integral(&self) -> bool {
        self.capacities
            .iter()
            .chain(&self.weights)
            .chain(&self.profits)
            .all(Rational::is_integer)
    }
}

/// Parallel machine scheduling with machine overheads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulingInstance {
    pub model: MachineModel,
    pub n: usize,
    pub m: usize,
    /// `processing[j][i]`: time of job `j` on machine `i`.
    pub processing: Vec<Vec<Rational>>,
    pub overheads: Vec<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_times: Option<Vec<Rational>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speeds: Option<Vec<Rational>>,
    /// Granularity of makespan guesses. When absent, the reciprocal of the
    /// least common denominator of all processing times and overheads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_unit: Option<Rational>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl SchedulingInstance {
    pub fn unrelated(processing: Vec<Vec<Rational>>) -> Result<Self, InstanceError> {
        let m = processing.first().map_or(0, Vec::len);
        let inst = SchedulingInstance {
            model: MachineModel::Unrelated,
            n: processing.len(),
            m,
            processing,
            overheads: vec![Rational::zero(); m],
            base_times: None,
            speeds: None,
            time_unit: None,
            meta: BTreeMap::new(),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn uniform(base_times: Vec<Rational>, speeds: Vec<Rational>) -> Result<Self, InstanceError> {
        let processing = base_times
            .iter()
            .map(|p| speeds.iter().map(|s| p / s).collect())
            .collect();
        let inst = SchedulingInstance {
            model: MachineModel::Uniform,
            n: base_times.len(),
            m: speeds.len(),
            processing,
            overheads: vec![Rational::zero(); speeds.len()],
            base_times: Some(base_times),
            speeds: Some(speeds),
            time_unit: None,
            meta: BTreeMap::new(),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn identical(base_times: Vec<Rational>, m: usize) -> Result<Self, InstanceError> {
        let mut inst = Self::uniform(base_times, vec![Rational::one(); m])?;
        inst.model = MachineModel::Identical;
        inst.validate()?;
        Ok(inst)
    }

    pub fn unrelated_from_integers(rows: &[Vec<i64>]) -> Result<Self, InstanceError> {
        Self::unrelated(
            rows.iter()
                .map(|r| r.iter().map(|&x| Rational::from_integer(x)).collect())
                .collect(),
        )
    }

    pub fn identical_from_integers(times: &[i64], m: usize) -> Result<Self, InstanceError> {
        Self::identical(times.iter().map(|&x| Rational::from_integer(x)).collect(), m)
    }

    pub fn uniform_from_integers(times: &[i64], speeds: &[i64]) -> Result<Self, InstanceError> {
        Self::uniform(
            times.iter().map(|&x| Rational::from_integer(x)).collect(),
            speeds.iter().map(|&x| Rational::from_integer(x)).collect(),
        )
    }

    pub fn with_overheads(mut self, overheads: Vec<Rational>) -> Result<Self, InstanceError> {
        self.overheads = overheads;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.m == 0 {
            return Err(InstanceError::InvalidCounts { n: self.n, m: self.m });
        }
        check_len("processing", self.n, self.processing.len())?;
        for row in &self.processing {
            check_len("processing row", self.m, row.len())?;
            check_sign("processing", row, true)?;
        }
        check_len("overheads", self.m, self.overheads.len())?;
        check_sign("overheads", &self.overheads, false)?;
        if let Some(unit) = &self.time_unit {
            if !unit.is_positive() {
                return Err(InstanceError::BadSign {
                    field: "time_unit",
                    index: 0,
                    value: unit.clone(),
                });
            }
        }
        match self.model {
            MachineModel::Unrelated => {}
            MachineModel::Uniform | MachineModel::Identical => {
                let (Some(base), Some(speeds)) = (&self.base_times, &self.speeds) else {
                    return Err(InstanceError::MissingSpeedData(self.model.name()));
                };
                check_len("base_times", self.n, base.len())?;
                check_len("speeds", self.m, speeds.len())?;
                check_sign("base_times", base, true)?;
                check_sign("speeds", speeds, true)?;
                for (j, row) in self.processing.iter().enumerate() {
                    for (i, p) in row.iter().enumerate() {
                        if *p != &base[j] / &speeds[i] {
                            return Err(InstanceError::InconsistentSpeeds { job: j, machine: i });
                        }
                    }
                }
                if self.model == MachineModel::Identical {
                    if let Some(i) = speeds.iter().position(|s| *s != Rational::one()) {
                        return Err(InstanceError::NonUnitSpeed(i));
                    }
                }
            }
        }
        Ok(())
    }

    /// Shortest processing time of job `j` over all machines.
    pub fn min_time(&self, j: usize) -> Rational {
        self.processing[j].iter().min().cloned().unwrap_or_default()
    }
}

fn check_len(field: &'static str, expected: usize, found: usize) -> Result<(), InstanceError> {
    if expected != found {
        return Err(InstanceError::LengthMismatch { field, expected, found });
    }
    Ok(())
}

fn check_sign(field: &'static str, values: &[Rational], strict: bool) -> Result<(), InstanceError> {
    for (index, v) in values.iter().enumerate() {
        let bad = if strict { !v.is_positive() } else { v.is_negative() };
        if bad {
            return Err(InstanceError::BadSign {
                field,
                index,
                value: v.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Instance {
    Knapsack(KnapsackInstance),
    Scheduling(SchedulingInstance),
}

impl Instance {
    pub fn validate(&self) -> Result<(), InstanceError> {
        match self {
            Instance::Knapsack(k) => k.validate(),
            Instance::Scheduling(s) => s.validate(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Instance::Knapsack(k) => k.n,
            Instance::Scheduling(s) => s.n,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Instance::Knapsack(k) => k.m,
            Instance::Scheduling(s) => s.m,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let inst: Instance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), InstanceError> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self, InstanceError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Knapsack,
    SchedulingUnrelated,
    SchedulingUniform,
    SchedulingIdentical,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Knapsack => "knapsack",
            ProblemKind::SchedulingUnrelated => "scheduling-unrelated",
            ProblemKind::SchedulingUniform => "scheduling-uniform",
            ProblemKind::SchedulingIdentical => "scheduling-identical",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ProblemKind::Knapsack,
            ProblemKind::SchedulingUnrelated,
            ProblemKind::SchedulingUniform,
            ProblemKind::SchedulingIdentical,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

const VALUE_RANGE: (i64, i64) = (1, 100);
const SPEED_RANGE: (i64, i64) = (1, 5);
const CAPACITY_RETRIES: usize = 100;

/// Capacity sampling range `[c_min, c_max]` for the given weights, with
/// `c_min = min w` and `c_max = ceil(sum w / n) - c_min`, widened to
/// `c_max = c_min` when it would be empty.
pub fn capacity_range(weights: &[i64]) -> (i64, i64) {
    let n = weights.len() as i64;
    let c_min = weights.iter().copied().min().unwrap_or(0);
    let total: i64 = weights.iter().sum();
    let c_max = (total + n - 1) / n - c_min;
    (c_min, c_max.max(c_min))
}

/// Deterministic instance generator; the same `(kind, n, m, seed)` always
/// produces the same instance.
pub fn generate(kind: ProblemKind, n: usize, m: usize, seed: u64) -> Result<Instance, InstanceError> {
    if n == 0 || m == 0 {
        return Err(InstanceError::InvalidCounts { n, m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: i64, hi: i64| rng.random_range(lo..=hi);
    let mut meta = BTreeMap::new();
    meta.insert("generator".to_string(), GENERATOR_NAME.to_string());
    meta.insert("seed".to_string(), seed.to_string());
    let ints = |v: &[i64]| v.iter().map(|&x| Rational::from_integer(x)).collect::<Vec<_>>();
    let inst = match kind {
        ProblemKind::Knapsack => {
            let weights: Vec<i64> = (0..n).map(|_| draw(VALUE_RANGE.0, VALUE_RANGE.1)).collect();
            let profits: Vec<i64> = (0..n).map(|_| draw(VALUE_RANGE.0, VALUE_RANGE.1)).collect();
            let (c_min, c_max) = capacity_range(&weights);
            let w_max = *weights.iter().max().expect("n >= 1");
            let mut capacities = Vec::new();
            let mut clamped = true;
            for _ in 0..CAPACITY_RETRIES {
                capacities = (0..m).map(|_| draw(c_min, c_max)).collect();
                if capacities.iter().copied().max().unwrap_or(0) >= w_max {
                    clamped = false;
                    break;
                }
            }
            if clamped {
                let (idx, _) = capacities
                    .iter()
                    .enumerate()
                    .max_by_key(|&(i, c)| (*c, std::cmp::Reverse(i)))
                    .expect("m >= 1");
                capacities[idx] = w_max;
            }
            meta.insert("capacity_range".to_string(), format!("[{c_min}, {c_max}]"));
            meta.insert("capacity_clamped".to_string(), clamped.to_string());
            let mut k = KnapsackInstance::new(ints(&capacities), ints(&weights), ints(&profits))?;
            k.meta = meta;
            Instance::Knapsack(k)
        }
        ProblemKind::SchedulingUnrelated => {
            let rows: Vec<Vec<Rational>> = (0..n)
                .map(|_| (0..m).map(|_| Rational::from_integer(draw(VALUE_RANGE.0, VALUE_RANGE.1))).collect())
                .collect();
            let mut s = SchedulingInstance::unrelated(rows)?;
            s.meta = meta;
            Instance::Scheduling(s)
        }
        ProblemKind::SchedulingUniform => {
            let times: Vec<i64> = (0..n).map(|_| draw(VALUE_RANGE.0, VALUE_RANGE.1)).collect();
            let speeds: Vec<i64> = (0..m).map(|_| draw(SPEED_RANGE.0, SPEED_RANGE.1)).collect();
            meta.insert(
                "speed_distribution".to_string(),
                format!("uniform integers in [{}, {}]", SPEED_RANGE.0, SPEED_RANGE.1),
            );
            let mut s = SchedulingInstance::uniform(ints(&times), ints(&speeds))?;
            s.meta = meta;
            Instance::Scheduling(s)
        }
        ProblemKind::SchedulingIdentical => {
            let times: Vec<i64> = (0..n).map(|_| draw(VALUE_RANGE.0, VALUE_RANGE.1)).collect();
            let mut s = SchedulingInstance::identical(ints(&times), m)?;
            s.meta = meta;
            Instance::Scheduling(s)
        }
    };
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn capacity_range_from_weights() {
        // c_min = 2, c_max = ceil(20/5) - 2 = 2
        assert_eq!(capacity_range(&[2, 3, 4, 5, 6]), (2, 2));
        assert_eq!(capacity_range(&[10, 90]), (10, 40));
        // empty range widens to a single value
        assert_eq!(capacity_range(&[50, 50]), (50, 50));
    }

    #[test]
    fn single_job_in_range() {
        for seed in 0..50 {
            let Instance::Scheduling(s) = generate(ProblemKind::SchedulingUnrelated, 1, 1, seed).unwrap() else {
                panic!("wrong kind");
            };
            let p = &s.processing[0][0];
            assert!(*p >= Rational::from_integer(1) && *p <= Rational::from_integer(100));
        }
    }

    #[test]
    fn deterministic_json() {
        for kind in [
            ProblemKind::Knapsack,
            ProblemKind::SchedulingUnrelated,
            ProblemKind::SchedulingUniform,
            ProblemKind::SchedulingIdentical,
        ] {
            let a = generate(kind, 7, 3, 42).unwrap().to_json();
            let b = generate(kind, 7, 3, 42).unwrap().to_json();
            assert_eq!(a, b);
            let c = generate(kind, 7, 3, 43).unwrap().to_json();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(matches!(
            generate(ProblemKind::Knapsack, 0, 2, 1),
            Err(InstanceError::InvalidCounts { .. })
        ));
        assert!(generate(ProblemKind::SchedulingIdentical, 3, 0, 1).is_err());
    }

    #[test]
    fn length_mismatch_is_a_parse_error() {
        let text = r#"{"kind":"knapsack","n":3,"m":1,"capacities":["5/1"],
            "weights":["1/1","2/1"],"profits":["1/1","2/1","3/1"]}"#;
        match Instance::from_json(text) {
            Err(InstanceError::LengthMismatch { field, expected, found }) => {
                assert_eq!((field, expected, found), ("weights", 3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_uniform_rejected() {
        let mut s = SchedulingInstance::uniform_from_integers(&[4, 6], &[1, 2]).unwrap();
        s.processing[1][1] = Rational::from_integer(4);
        let text = Instance::Scheduling(s).to_json();
        assert!(matches!(
            Instance::from_json(&text),
            Err(InstanceError::InconsistentSpeeds { job: 1, machine: 1 })
        ));
    }

    #[test]
    fn malformed_rational_rejected() {
        let text = r#"{"kind":"knapsack","n":1,"m":1,"capacities":["5/0"],
            "weights":["1"],"profits":["1"]}"#;
        assert!(matches!(Instance::from_json(text), Err(InstanceError::Json(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = std::env::temp_dir().join(format!("approxbnb-inst-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("k.json");
        let inst = generate(ProblemKind::Knapsack, 9, 3, 5).unwrap();
        inst.write_file(&path).unwrap();
        assert_eq!(Instance::read_file(&path).unwrap(), inst);
        fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn generated_instances_are_valid(seed in any::<u64>(), n in 1usize..20, m in 1usize..6, k in 0usize..4) {
            let kind = [
                ProblemKind::Knapsack,
                ProblemKind::SchedulingUnrelated,
                ProblemKind::SchedulingUniform,
                ProblemKind::SchedulingIdentical,
            ][k];
            let inst = generate(kind, n, m, seed).unwrap();
            prop_assert!(inst.validate().is_ok());
            prop_assert_eq!(inst.n(), n);
            prop_assert_eq!(inst.m(), m);
            match &inst {
                Instance::Knapsack(kn) => {
                    let cmax = kn.capacities.iter().max().unwrap();
                    prop_assert!(kn.weights.iter().all(|w| w <= cmax));
                    let in_range = kn.weights.iter().chain(&kn.profits).all(|x| {
                        *x >= Rational::from_integer(1) && *x <= Rational::from_integer(100)
                    });
                    prop_assert!(in_range);
                }
                Instance::Scheduling(s) => {
                    if let Some(speeds) = &s.speeds {
                        let in_range = speeds.iter().all(|x| {
                            *x >= Rational::from_integer(1) && *x <= Rational::from_integer(5)
                        });
                        prop_assert!(in_range);
                    }
                }
            }
            let back = Instance::from_json(&inst.to_json()).unwrap();
            prop_assert_eq!(back, inst);
        }
    }
}
