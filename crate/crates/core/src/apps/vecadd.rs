//! Elementwise `u32` addition of two arrays, wrapping.

use crate::error::Result;
use crate::processing::{HandleFunctions, HandleKind};
use crate::PimContext;

/// Zips `a` and `b` and maps the pairs to their sums. With `lazy` unset the
/// zipped array is materialized first.
pub fn run_vecadd_with(pim: &mut PimContext, a: &[u32], b: &[u32], lazy: bool) -> Result<Vec<u32>> {
    pim.scatter_slice("vecadd.a", a)?;
    pim.scatter_slice("vecadd.b", b)?;
    if lazy {
        pim.array_zip("vecadd.a", "vecadd.b", "vecadd.ab")?;
    } else {
        pim.array_zip_eager("vecadd.a", "vecadd.b", "vecadd.ab")?;
    }
    let add = HandleFunctions::typed_map::<[u32; 2], u32>(|[x, y], _| x.wrapping_add(y));
    let h = pim.create_handle(add, HandleKind::Map, &[])?;
    pim.array_map("vecadd.ab", "vecadd.out", 4, h)?;
    pim.gather_vec("vecadd.out")
}

pub fn run_vecadd(pim: &mut PimContext, a: &[u32], b: &[u32]) -> Result<Vec<u32>> {
    run_vecadd_with(pim, a, b, true)
}

pub fn vecadd_oracle(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        out.push(a[i].wrapping_add(b[i]));
    }
    out
}
