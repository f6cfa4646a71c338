//! Linear and logistic regression by full-batch gradient descent in fixed
//! point.
//!
//! Features, labels and weights are `i32` holding values scaled by
//! `1 << scale_shift`. For a row `x` with label `y` the prediction is
//! `p = (x·w) >> s` (linear) or `sigmoid_fixed((x·w) >> s)` (logistic), and
//! the row contributes `x_j * (p - y)` to gradient entry `j`. Sums are `i64`
//! and wrap. After each pass `w_j -= (lr * g_j) >> learning_shift`.

use crate::error::{Error, Result};
use crate::processing::{HandleFunctions, HandleKind};
use crate::PimContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Linear,
    Logistic,
}

impl Model {
    fn prefix(self) -> &'static str {
        match self {
            Model::Linear => "linreg",
            Model::Logistic => "logreg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegressionParams {
    pub dims: usize,
    pub iterations: usize,
    pub scale_shift: u32,
    pub learning_shift: u32,
    pub learning_rate: i64,
}

/// Third-order Taylor expansion of the logistic function around zero,
/// `1/2 + z/4 - z^3/48`, on values scaled by `1 << shift`.
///
/// The input is clamped to `[-2, 2]`, the range where the cubic is
/// monotone, so the result stays within about `[1/6, 5/6]`.
pub fn sigmoid_fixed(z: i64, shift: u32) -> i64 {
    let one = 1i64 << shift;
    let z = z.clamp(-2 * one, 2 * one);
    let z3 = (((z * z) >> shift) * z) >> shift;
    let y = (one >> 1) + (z >> 2) - z3 / 48;
    y.clamp(0, one)
}

pub(crate) fn dot(x: impl Iterator<Item = i32>, w: impl Iterator<Item = i32>) -> i64 {
    x.zip(w).fold(0i64, |acc, (a, b)| {
        acc.wrapping_add((a as i64).wrapping_mul(b as i64))
    })
}

/// `prediction - label` for one row.
pub fn residual(model: Model, z_raw: i64, y: i32, shift: u32) -> i64 {
    let z = z_raw >> shift;
    let p = match model {
        Model::Linear => z,
        Model::Logistic => sigmoid_fixed(z, shift),
    };
    p.wrapping_sub(y as i64)
}

/// One descent step.
pub fn update_weights(w: &mut [i32], gradient: &[i64], params: &RegressionParams) {
    for (wj, &g) in w.iter_mut().zip(gradient) {
        let step = params.learning_rate.wrapping_mul(g) >> params.learning_shift;
        *wj = (*wj as i64).wrapping_sub(step) as i32;
    }
}

fn le_i32s(bytes: &[u8]) -> impl Iterator<Item = i32> + '_ {
    bytes
        .chunks_exact(4)
        .map(|c| i32::from_ne_bytes(c.try_into().unwrap()))
}

fn check_shapes(x: &[i32], y: &[i32], init: &[i32], params: &RegressionParams) -> Result<()> {
    if params.dims == 0 || init.len() != params.dims || x.len() != y.len() * params.dims {
        return Err(Error::InvalidConfig(format!(
            "regression shapes: {} features, {} labels, {} weights, dims {}",
            x.len(),
            y.len(),
            init.len(),
            params.dims
        )));
    }
    Ok(())
}

/// Runs `params.iterations` descent steps on the device. Returns the weights
/// after every step.
pub fn run_regression(
    pim: &mut PimContext,
    model: Model,
    x: &[i32],
    y: &[i32],
    init: &[i32],
    params: &RegressionParams,
) -> Result<Vec<Vec<i32>>> {
    check_shapes(x, y, init, params)?;
    let p = *params;
    let dims = p.dims;
    let name = model.prefix();
    let (xs, ys, xy, grad) = (
        format!("{name}.x"),
        format!("{name}.y"),
        format!("{name}.xy"),
        format!("{name}.grad"),
    );
    pim.scatter(&xs, bytemuck::cast_slice(x), y.len(), 4 * dims)?;
    pim.scatter_like_slice(&ys, y, &xs)?;
    pim.array_zip(&xs, &ys, &xy)?;

    let functions = HandleFunctions::new()
        .with_init(|entry| entry.fill(0))
        .with_map_to_val(move |row, value, weights| {
            let (feats, label) = row.split_at(4 * dims);
            let label = i32::from_ne_bytes(label.try_into().unwrap());
            let err = residual(
                model,
                dot(le_i32s(feats), le_i32s(weights)),
                label,
                p.scale_shift,
            );
            for (out, xj) in value.chunks_exact_mut(8).zip(le_i32s(feats)) {
                out.copy_from_slice(&(xj as i64).wrapping_mul(err).to_ne_bytes());
            }
            0
        })
        .with_acc(|dest, src| {
            for (d, s) in dest.chunks_exact_mut(8).zip(src.chunks_exact(8)) {
                let sum = i64::from_ne_bytes(d.try_into().unwrap())
                    .wrapping_add(i64::from_ne_bytes(s.try_into().unwrap()));
                d.copy_from_slice(&sum.to_ne_bytes());
            }
        });
    let handle = pim.create_handle(functions, HandleKind::Reduce, bytemuck::cast_slice(init))?;

    let mut w = init.to_vec();
    let mut trajectory = Vec::with_capacity(p.iterations);
    for _ in 0..p.iterations {
        pim.set_handle_context(handle, bytemuck::cast_slice(&w))?;
        pim.array_red(&xy, &grad, 8 * dims, 1, handle)?;
        let g: Vec<i64> = pim.gather_vec(&grad)?;
        pim.free(&grad)?;
        update_weights(&mut w, &g, &p);
        trajectory.push(w.clone());
    }
    Ok(trajectory)
}

/// Sequential host version of [`run_regression`].
pub fn regression_oracle(
    model: Model,
    x: &[i32],
    y: &[i32],
    init: &[i32],
    params: &RegressionParams,
) -> Result<Vec<Vec<i32>>> {
    check_shapes(x, y, init, params)?;
    let dims = params.dims;
    let mut w = init.to_vec();
    let mut trajectory = Vec::new();
    for _ in 0..params.iterations {
        let mut g = vec![0i64; dims];
        for (row, &label) in x.chunks_exact(dims).zip(y) {
            let mut z = 0i64;
            for j in 0..dims {
                z = z.wrapping_add((row[j] as i64).wrapping_mul(w[j] as i64));
            }
            let err = residual(model, z, label, params.scale_shift);
            for j in 0..dims {
                g[j] = g[j].wrapping_add((row[j] as i64).wrapping_mul(err));
            }
        }
        update_weights(&mut w, &g, params);
        trajectory.push(w.clone());
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DeviceConfig;

    fn params(dims: usize, iterations: usize) -> RegressionParams {
        RegressionParams {
            dims,
            iterations,
            scale_shift: 12,
            learning_shift: 24,
            learning_rate: 1,
        }
    }

    fn pim(cores: usize) -> PimContext {
        PimContext::new(DeviceConfig {
            dram_bank_bytes: 1 << 20,
            ..DeviceConfig::with_cores(cores)
        })
        .unwrap()
    }

    #[test]
    fn sigmoid_points() {
        assert_eq!(sigmoid_fixed(0, 12), 2048);
        // z = 1: 0.5 + 0.25 - 1/48 = 0.72917 -> 2048 + 1024 - 85
        assert_eq!(sigmoid_fixed(4096, 12), 2987);
        assert_eq!(sigmoid_fixed(-4096, 12), 2048 - 1024 + 85);
        assert_eq!(sigmoid_fixed(1 << 30, 12), sigmoid_fixed(8192, 12));
        let mut last = i64::MIN;
        for z in (-6000..6000).step_by(64) {
            let s = sigmoid_fixed(z, 12);
            assert!(s > last);
            last = s;
        }
        for z in (-20_000..20_000).step_by(7) {
            assert!((680..=3416).contains(&sigmoid_fixed(z, 12)));
        }
    }

    #[test]
    fn one_point_linear_step() {
        // (8192 * 4096) >> 12 = 8192; residual 4096; gradient 8192 * 4096;
        // step = 2^25 >> 24 = 2
        let p = params(1, 1);
        let t = regression_oracle(Model::Linear, &[8192], &[4096], &[4096], &p).unwrap();
        assert_eq!(t, vec![vec![4094]]);
        let t = run_regression(&mut pim(2), Model::Linear, &[8192], &[4096], &[4096], &p).unwrap();
        assert_eq!(t, vec![vec![4094]]);
    }

    #[test]
    fn zero_features_leave_weights() {
        let p = params(3, 2);
        let x = vec![0; 30];
        let y: Vec<i32> = (0..10).collect();
        let init = [5, -6, 7];
        for model in [Model::Linear, Model::Logistic] {
            let t = run_regression(&mut pim(3), model, &x, &y, &init, &p).unwrap();
            assert_eq!(t, vec![init.to_vec(); 2]);
        }
    }

    #[test]
    fn zero_weights_predict_one_half() {
        // every row has residual 2048 - y
        let p = params(2, 1);
        let x = [4096, 0, 0, 4096, 4096, 4096];
        let y = [0, 4096, 4096];
        let g = [4096 * 2048 + 4096 * -2048, 4096 * -2048 + 4096 * -2048];
        let mut want = vec![0, 0];
        update_weights(&mut want, &g, &p);
        let t = regression_oracle(Model::Logistic, &x, &y, &[0, 0], &p).unwrap();
        assert_eq!(t, vec![want.clone()]);
        let t = run_regression(&mut pim(2), Model::Logistic, &x, &y, &[0, 0], &p).unwrap();
        assert_eq!(t, vec![want]);
    }

    #[test]
    fn device_matches_oracle_odd_dims() {
        let p = params(3, 4);
        let n = 501;
        let x: Vec<i32> = (0..3 * n).map(|i| (i * 37 % 4096) - 2048).collect();
        let y: Vec<i32> = (0..n).map(|i| (i * 91 % 4096) - 2048).collect();
        let init = [100, -200, 300];
        for model in [Model::Linear, Model::Logistic] {
            let want = regression_oracle(model, &x, &y, &init, &p).unwrap();
            for cores in [1, 4, 7] {
                let got = run_regression(&mut pim(cores), model, &x, &y, &init, &p).unwrap();
                assert_eq!(got, want, "{model:?} cores={cores}");
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = params(2, 1);
        assert!(matches!(
            regression_oracle(Model::Linear, &[1, 2, 3], &[1, 2], &[0, 0], &p),
            Err(Error::InvalidConfig(_))
        ));
    }
}
