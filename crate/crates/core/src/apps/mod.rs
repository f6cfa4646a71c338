//! Benchmark workloads built from framework calls, each paired with a
//! sequential host oracle.
//!
//! ```
//! use pimlite_core::apps::{self, BenchmarkKind, BenchmarkSpec};
//! use pimlite_core::{DeviceConfig, PimContext};
//!
//! let spec = BenchmarkSpec::new(BenchmarkKind::Histogram, 5000);
//! let data = apps::generate(&spec).unwrap();
//! let mut pim = PimContext::new(DeviceConfig::with_cores(4)).unwrap();
//! let got = apps::run(&mut pim, &spec, &data).unwrap();
//! assert_eq!(got, apps::oracle(&spec, &data).unwrap());
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::PimContext;

pub mod data;
pub mod histogram;
pub mod kmeans;
pub mod reduction;
pub mod regression;
pub mod vecadd;

pub use data::DataGen;
pub use histogram::{histogram_oracle, run_histogram};
pub use kmeans::{kmeans_oracle, run_kmeans};
pub use reduction::{reduction_oracle, run_reduction};
pub use regression::{regression_oracle, run_regression, sigmoid_fixed, Model, RegressionParams};
pub use vecadd::{run_vecadd, run_vecadd_with, vecadd_oracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchmarkKind {
    Reduction,
    Vecadd,
    Histogram,
    Linreg,
    Logreg,
    Kmeans,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 6] = [
        BenchmarkKind::Reduction,
        BenchmarkKind::Vecadd,
        BenchmarkKind::Histogram,
        BenchmarkKind::Linreg,
        BenchmarkKind::Logreg,
        BenchmarkKind::Kmeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Reduction => "reduction",
            BenchmarkKind::Vecadd => "vecadd",
            BenchmarkKind::Histogram => "histogram",
            BenchmarkKind::Linreg => "linreg",
            BenchmarkKind::Logreg => "logreg",
            BenchmarkKind::Kmeans => "kmeans",
        }
    }

    /// Whether the benchmark runs a reduction, and so has a variant.
    pub fn reduces(self) -> bool {
        self != BenchmarkKind::Vecadd
    }

    /// Iterative model fitting over rows of `dims` values.
    pub fn is_model(self) -> bool {
        matches!(
            self,
            BenchmarkKind::Linreg | BenchmarkKind::Logreg | BenchmarkKind::Kmeans
        )
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown benchmark {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub total_elems: usize,
    /// Features per row (regression) or coordinates per point (k-means).
    pub dims: usize,
    pub bins: usize,
    pub clusters: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Fixed-point fraction bits.
    pub scale_shift: u32,
    pub learning_shift: u32,
    pub learning_rate: i64,
}

impl BenchmarkSpec {
    pub fn new(kind: BenchmarkKind, total_elems: usize) -> Self {
        BenchmarkSpec {
            kind,
            total_elems,
            dims: 10,
            bins: 256,
            clusters: 10,
            iterations: 5,
            seed: 0,
            scale_shift: 12,
            learning_shift: 24,
            learning_rate: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if self.dims == 0 {
            return fail("dims must be at least 1");
        }
        if self.bins < 2 {
            return fail("bins must be at least 2");
        }
        if self.clusters == 0 {
            return fail("clusters must be at least 1");
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1");
        }
        if !(1..=30).contains(&self.scale_shift) {
            return fail("scale shift must be in 1..=30");
        }
        if self.learning_shift > 62 {
            return fail("learning shift must be at most 62");
        }
        Ok(())
    }

    fn regression_params(&self) -> RegressionParams {
        RegressionParams {
            dims: self.dims,
            iterations: self.iterations,
            scale_shift: self.scale_shift,
            learning_shift: self.learning_shift,
            learning_rate: self.learning_rate,
        }
    }
}

/// Generated inputs of one benchmark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dataset {
    Values(Vec<u32>),
    Pair(Vec<u32>, Vec<u32>),
    /// Row-major features, labels and initial weights.
    Labeled {
        x: Vec<i32>,
        y: Vec<i32>,
        init: Vec<i32>,
    },
    /// Row-major points and initial centroids.
    Points {
        points: Vec<i32>,
        init: Vec<i32>,
    },
}

/// Builds the inputs for `spec` from its seed.
///
/// Reduction and vecadd draw full-range `u32`s, histogram draws values
/// below 4096. Regression features are in `[-2048, 2048)`; linear labels are
/// `(x·w*) >> s` plus noise in `[-32, 32)` for hidden weights `w*` in
/// `[-4096, 4096)`, logistic labels are `1 << s` where `x·w* >= 0` and 0
/// elsewhere. Initial weights are zero. K-means points are in `[0, 4096)`
/// per coordinate.
pub fn generate(spec: &BenchmarkSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.total_elems;
    let seed = spec.seed;
    Ok(match spec.kind {
        BenchmarkKind::Reduction => Dataset::Values(DataGen::new(seed, 0).u32s(n)),
        BenchmarkKind::Vecadd => {
            Dataset::Pair(DataGen::new(seed, 0).u32s(n), DataGen::new(seed, 1).u32s(n))
        }
        BenchmarkKind::Histogram => Dataset::Values(DataGen::new(seed, 0).u32s_below(n, 4096)),
        BenchmarkKind::Linreg | BenchmarkKind::Logreg => {
            let d = spec.dims;
            let x = DataGen::new(seed, 0).i32s_in(n * d, -2048, 2048);
            let hidden = DataGen::new(seed, 2).i32s_in(d, -4096, 4096);
            let mut noise = DataGen::new(seed, 1);
            let y = x
                .chunks_exact(d)
                .map(|row| {
                    let z = regression::dot(row.iter().copied(), hidden.iter().copied());
                    if spec.kind == BenchmarkKind::Linreg {
                        ((z >> spec.scale_shift) + noise.in_range(-32, 32) as i64) as i32
                    } else if z >= 0 {
                        1 << spec.scale_shift
                    } else {
                        0
                    }
                })
                .collect();
            Dataset::Labeled {
                x,
                y,
                init: vec![0; d],
            }
        }
        BenchmarkKind::Kmeans => {
            let points = DataGen::new(seed, 0).i32s_in(n * spec.dims, 0, 4096);
            let init = kmeans::initial_centroids(&points, spec.dims, spec.clusters);
            Dataset::Points { points, init }
        }
    })
}

/// Result of one benchmark run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppOutput {
    Scalar(u64),
    Values(Vec<u32>),
    /// Model state after every iteration.
    Trajectory(Vec<Vec<i32>>),
}

impl AppOutput {
    /// Describes the first place where `self` and `other` differ.
    pub fn first_difference(&self, other: &AppOutput) -> Option<String> {
        fn index<T: PartialEq + fmt::Debug>(a: &[T], b: &[T]) -> Option<String> {
            if a.len() != b.len() {
                return Some(format!("length {} vs {}", a.len(), b.len()));
            }
            let i = a.iter().zip(b).position(|(x, y)| x != y)?;
            Some(format!("index {i}: {:?} vs {:?}", a[i], b[i]))
        }
        match (self, other) {
            (AppOutput::Scalar(a), AppOutput::Scalar(b)) => (a != b).then(|| format!("{a} vs {b}")),
            (AppOutput::Values(a), AppOutput::Values(b)) => index(a, b),
            (AppOutput::Trajectory(a), AppOutput::Trajectory(b)) => index(a, b),
            _ => Some("different output kinds".to_owned()),
        }
    }
}

fn dataset_mismatch(spec: &BenchmarkSpec) -> Error {
    Error::InvalidConfig(format!("dataset does not fit benchmark {}", spec.kind))
}

/// Runs the benchmark on the device.
pub fn run(pim: &mut PimContext, spec: &BenchmarkSpec, data: &Dataset) -> Result<AppOutput> {
    spec.validate()?;
    Ok(match (spec.kind, data) {
        (BenchmarkKind::Reduction, Dataset::Values(v)) => AppOutput::Scalar(run_reduction(pim, v)?),
        (BenchmarkKind::Vecadd, Dataset::Pair(a, b)) => AppOutput::Values(run_vecadd(pim, a, b)?),
        (BenchmarkKind::Histogram, Dataset::Values(v)) => {
            AppOutput::Values(run_histogram(pim, v, spec.bins)?)
        }
        (BenchmarkKind::Linreg, Dataset::Labeled { x, y, init }) => AppOutput::Trajectory(
            run_regression(pim, Model::Linear, x, y, init, &spec.regression_params())?,
        ),
        (BenchmarkKind::Logreg, Dataset::Labeled { x, y, init }) => AppOutput::Trajectory(
            run_regression(pim, Model::Logistic, x, y, init, &spec.regression_params())?,
        ),
        (BenchmarkKind::Kmeans, Dataset::Points { points, init }) => {
            AppOutput::Trajectory(run_kmeans(pim, points, spec.dims, init, spec.iterations)?)
        }
        _ => return Err(dataset_mismatch(spec)),
    })
}

/// Computes the expected output on the host.
pub fn oracle(spec: &BenchmarkSpec, data: &Dataset) -> Result<AppOutput> {
    spec.validate()?;
    Ok(match (spec.kind, data) {
        (BenchmarkKind::Reduction, Dataset::Values(v)) => AppOutput::Scalar(reduction_oracle(v)),
        (BenchmarkKind::Vecadd, Dataset::Pair(a, b)) => AppOutput::Values(vecadd_oracle(a, b)),
        (BenchmarkKind::Histogram, Dataset::Values(v)) => {
            AppOutput::Values(histogram_oracle(v, spec.bins))
        }
        (BenchmarkKind::Linreg, Dataset::Labeled { x, y, init }) => AppOutput::Trajectory(
            regression_oracle(Model::Linear, x, y, init, &spec.regression_params())?,
        ),
        (BenchmarkKind::Logreg, Dataset::Labeled { x, y, init }) => AppOutput::Trajectory(
            regression_oracle(Model::Logistic, x, y, init, &spec.regression_params())?,
        ),
        (BenchmarkKind::Kmeans, Dataset::Points { points, init }) => {
            AppOutput::Trajectory(kmeans_oracle(points, spec.dims, init, spec.iterations)?)
        }
        _ => return Err(dataset_mismatch(spec)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DeviceConfig;

    #[test]
    fn names_round_trip() {
        for k in BenchmarkKind::ALL {
            assert_eq!(k.name().parse::<BenchmarkKind>().unwrap(), k);
        }
        assert!("sort".parse::<BenchmarkKind>().is_err());
    }

    #[test]
    fn spec_validation() {
        let ok = BenchmarkSpec::new(BenchmarkKind::Histogram, 10);
        assert!(ok.validate().is_ok());
        for bad in [
            BenchmarkSpec {
                bins: 1,
                ..ok.clone()
            },
            BenchmarkSpec {
                dims: 0,
                ..ok.clone()
            },
            BenchmarkSpec {
                clusters: 0,
                ..ok.clone()
            },
            BenchmarkSpec {
                iterations: 0,
                ..ok.clone()
            },
            BenchmarkSpec {
                scale_shift: 31,
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn generation_is_seeded() {
        for kind in BenchmarkKind::ALL {
            let spec = BenchmarkSpec::new(kind, 50);
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
            let other = BenchmarkSpec {
                seed: 1,
                ..spec.clone()
            };
            assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
        }
    }

    #[test]
    fn every_benchmark_matches_its_oracle() {
        for kind in BenchmarkKind::ALL {
            let spec = BenchmarkSpec {
                seed: 42,
                ..BenchmarkSpec::new(kind, 3001)
            };
            let data = generate(&spec).unwrap();
            let mut pim = PimContext::new(DeviceConfig::with_cores(6)).unwrap();
            let got = run(&mut pim, &spec, &data).unwrap();
            let want = oracle(&spec, &data).unwrap();
            assert_eq!(got.first_difference(&want), None, "{kind}");
        }
    }

    #[test]
    fn wrong_dataset_is_rejected() {
        let spec = BenchmarkSpec::new(BenchmarkKind::Vecadd, 4);
        let mut pim = PimContext::new(DeviceConfig::with_cores(1)).unwrap();
        assert!(run(&mut pim, &spec, &Dataset::Values(vec![1])).is_err());
    }

    #[test]
    fn differences_are_reported() {
        let a = AppOutput::Values(vec![1, 2, 3]);
        assert_eq!(a.first_difference(&a), None);
        assert_eq!(
            a.first_difference(&AppOutput::Values(vec![1, 5, 3]))
                .unwrap(),
            "index 1: 2 vs 5"
        );
        assert!(a.first_difference(&AppOutput::Scalar(1)).is_some());
    }
}
