//! Sum of a `u32` array into a single `u64`, wrapping.

use crate::error::Result;
use crate::processing::{HandleFunctions, HandleKind};
use crate::PimContext;

pub fn run_reduction(pim: &mut PimContext, data: &[u32]) -> Result<u64> {
    pim.scatter_slice("reduction.in", data)?;
    let sum =
        HandleFunctions::typed_reduce::<u32, u64>(|| 0, |x, _| (x as u64, 0), u64::wrapping_add);
    let h = pim.create_handle(sum, HandleKind::Reduce, &[])?;
    pim.array_red("reduction.in", "reduction.out", 8, 1, h)?;
    Ok(pim.gather_vec::<u64>("reduction.out")?[0])
}

pub fn reduction_oracle(data: &[u32]) -> u64 {
    let mut sum = 0u64;
    for &x in data {
        sum = sum.wrapping_add(x as u64);
    }
    sum
}
