//! Histogram of 12-bit values. Value `d` falls in bin `d * bins >> 12`.

use crate::error::Result;
use crate::processing::{HandleFunctions, HandleKind};
use crate::PimContext;

pub fn bin_of(d: u32, bins: usize) -> usize {
    ((d as u64 * bins as u64) >> 12) as usize
}

pub fn run_histogram(pim: &mut PimContext, data: &[u32], bins: usize) -> Result<Vec<u32>> {
    pim.scatter_slice("histogram.in", data)?;
    let count = HandleFunctions::typed_reduce::<u32, u32>(
        || 0,
        move |d, _| (1, bin_of(d, bins)),
        u32::wrapping_add,
    );
    let h = pim.create_handle(count, HandleKind::Reduce, &[])?;
    pim.array_red("histogram.in", "histogram.out", 4, bins, h)?;
    pim.gather_vec("histogram.out")
}

pub fn histogram_oracle(data: &[u32], bins: usize) -> Vec<u32> {
    let mut out = vec![0u32; bins];
    for &d in data {
        out[bin_of(d, bins)] += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{DeviceConfig, Error};

    fn pim(cores: usize) -> PimContext {
        PimContext::new(DeviceConfig::with_cores(cores)).unwrap()
    }

    #[test]
    fn key_formula() {
        assert_eq!(bin_of(4095, 256), 255);
        assert_eq!(bin_of(0, 256), 0);
        assert_eq!(bin_of(16, 256), 1);
        assert_eq!(bin_of(4095, 4096), 4095);
    }

    #[test]
    fn all_zero_input() {
        let h = run_histogram(&mut pim(4), &[0; 1000], 256).unwrap();
        assert_eq!(h[0], 1000);
        assert!(h[1..].iter().all(|&c| c == 0));
    }

    #[test]
    fn uniform_input_counts() {
        let data: Vec<u32> = (0..4096 * 3).map(|i| i % 4096).collect();
        let h = run_histogram(&mut pim(5), &data, 256).unwrap();
        assert_eq!(h, vec![48; 256]);
    }

    #[test]
    fn value_outside_domain_is_rejected() {
        assert!(matches!(
            run_histogram(&mut pim(2), &[4096], 256),
            Err(Error::KeyOutOfRange { key: 256, len: 256 })
        ));
    }
}
