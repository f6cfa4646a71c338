//! Lloyd's k-means on integer points.
//!
//! Each pass assigns every point to its nearest centroid (squared euclidean
//! distance in `i64`, ties to the lower index) and replaces each centroid by
//! the truncated mean of its points. A centroid with no points stays put.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::processing::{HandleFunctions, HandleKind};
use crate::PimContext;

/// Index of the centroid closest to `point`.
pub fn nearest_centroid(point: &[i32], centroids: &[i32]) -> usize {
    let dims = point.len();
    let mut best = (0, i64::MAX);
    for (k, c) in centroids.chunks_exact(dims).enumerate() {
        let d = point
            .iter()
            .zip(c)
            .map(|(&a, &b)| {
                let diff = a as i64 - b as i64;
                diff * diff
            })
            .fold(0i64, i64::wrapping_add);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Seeds centroid `k` with point `k * n / clusters`.
pub fn initial_centroids(points: &[i32], dims: usize, clusters: usize) -> Vec<i32> {
    let n = points.len() / dims;
    let mut out = vec![0; clusters * dims];
    if n == 0 {
        return out;
    }
    for k in 0..clusters {
        let p = k * n / clusters;
        out[k * dims..(k + 1) * dims].copy_from_slice(&points[p * dims..(p + 1) * dims]);
    }
    out
}

/// New centroids from per-cluster rows of `dims` coordinate sums followed
/// by a point count.
pub fn centroids_from_sums(sums: &[i64], previous: &[i32], dims: usize) -> Vec<i32> {
    let mut next = previous.to_vec();
    for (k, row) in sums.chunks_exact(dims + 1).enumerate() {
        let count = row[dims];
        if count > 0 {
            for j in 0..dims {
                next[k * dims + j] = (row[j] / count) as i32;
            }
        }
    }
    next
}

fn check_shapes(points: &[i32], dims: usize, init: &[i32]) -> Result<()> {
    if dims == 0
        || !points.len().is_multiple_of(dims)
        || init.is_empty()
        || !init.len().is_multiple_of(dims)
    {
        return Err(Error::InvalidConfig(format!(
            "k-means shapes: {} coordinates, {} centroid coordinates, dims {dims}",
            points.len(),
            init.len()
        )));
    }
    Ok(())
}

/// Runs `iterations` passes on the device. Returns the centroids after every
/// pass, flattened row-major.
pub fn run_kmeans(
    pim: &mut PimContext,
    points: &[i32],
    dims: usize,
    init: &[i32],
    iterations: usize,
) -> Result<Vec<Vec<i32>>> {
    check_shapes(points, dims, init)?;
    let clusters = init.len() / dims;
    pim.scatter(
        "kmeans.points",
        bytemuck::cast_slice(points),
        points.len() / dims,
        4 * dims,
    )?;

    let functions = HandleFunctions::new()
        .with_init(|entry| entry.fill(0))
        .with_map_to_val(move |raw, value, centroids| {
            let point: Vec<i32> = raw
                .chunks_exact(4)
                .map(|c| i32::from_ne_bytes(c.try_into().unwrap()))
                .collect();
            let cents: Cow<[i32]> = match bytemuck::try_cast_slice(centroids) {
                Ok(c) => Cow::Borrowed(c),
                Err(_) => Cow::Owned(bytemuck::pod_collect_to_vec(centroids)),
            };
            let key = nearest_centroid(&point, &cents);
            let (coords, count) = value.split_at_mut(8 * dims);
            for (out, &p) in coords.chunks_exact_mut(8).zip(point.iter()) {
                out.copy_from_slice(&(p as i64).to_ne_bytes());
            }
            count.copy_from_slice(&1i64.to_ne_bytes());
            key
        })
        .with_acc(|dest, src| {
            for (d, s) in dest.chunks_exact_mut(8).zip(src.chunks_exact(8)) {
                let sum = i64::from_ne_bytes(d.try_into().unwrap())
                    .wrapping_add(i64::from_ne_bytes(s.try_into().unwrap()));
                d.copy_from_slice(&sum.to_ne_bytes());
            }
        });
    let handle = pim.create_handle(functions, HandleKind::Reduce, bytemuck::cast_slice(init))?;

    let mut centroids = init.to_vec();
    let mut trajectory = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        pim.set_handle_context(handle, bytemuck::cast_slice(&centroids))?;
        pim.array_red(
            "kmeans.points",
            "kmeans.sums",
            8 * (dims + 1),
            clusters,
            handle,
        )?;
        let sums: Vec<i64> = pim.gather_vec("kmeans.sums")?;
        pim.free("kmeans.sums")?;
        centroids = centroids_from_sums(&sums, &centroids, dims);
        trajectory.push(centroids.clone());
    }
    Ok(trajectory)
}

/// Sequential host version of [`run_kmeans`].
pub fn kmeans_oracle(
    points: &[i32],
    dims: usize,
    init: &[i32],
    iterations: usize,
) -> Result<Vec<Vec<i32>>> {
    check_shapes(points, dims, init)?;
    let clusters = init.len() / dims;
    let mut centroids = init.to_vec();
    let mut trajectory = Vec::new();
    for _ in 0..iterations {
        let mut sums = vec![0i64; clusters * (dims + 1)];
        for p in points.chunks_exact(dims) {
            let mut best = 0;
            let mut best_d = i64::MAX;
            for k in 0..clusters {
                let mut d = 0i64;
                for j in 0..dims {
                    let diff = p[j] as i64 - centroids[k * dims + j] as i64;
                    d = d.wrapping_add(diff * diff);
                }
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            let row = &mut sums[best * (dims + 1)..(best + 1) * (dims + 1)];
            for j in 0..dims {
                row[j] = row[j].wrapping_add(p[j] as i64);
            }
            row[dims] += 1;
        }
        centroids = centroids_from_sums(&sums, &centroids, dims);
        trajectory.push(centroids.clone());
    }
    Ok(trajectory)
}
