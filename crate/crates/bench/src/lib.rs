//! Shared fixtures for the criterion benches.

use pimlite_core::apps::DataGen;
use pimlite_core::{DeviceConfig, PimContext, ReductionPolicy};

pub fn context(cores: usize) -> PimContext {
    PimContext::new(DeviceConfig::with_cores(cores)).expect("default device config is valid")
}

pub fn context_with(cores: usize, policy: ReductionPolicy) -> PimContext {
    let mut pim = context(cores);
    pim.set_reduction_policy(policy);
    pim
}

pub fn random_bytes(len: usize, seed: u64) -> Vec<u8> {
    let mut g = DataGen::new(seed, 0);
    (0..len).map(|_| g.next_u32() as u8).collect()
}

pub fn random_words(len: usize, seed: u64) -> Vec<u32> {
    DataGen::new(seed, 0).u32s(len)
}

/// Values in the 12-bit histogram domain.
pub fn histogram_input(len: usize, seed: u64) -> Vec<u32> {
    DataGen::new(seed, 0).u32s_below(len, 4096)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_seeded() {
        assert_eq!(random_bytes(32, 1), random_bytes(32, 1));
        assert_eq!(random_words(8, 2).len(), 8);
        assert!(histogram_input(100, 3).iter().all(|&v| v < 4096));
        assert_eq!(
            context_with(3, ReductionPolicy::Shared).reduction_policy(),
            ReductionPolicy::Shared
        );
    }
}
