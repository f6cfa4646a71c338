use proptest::prelude::*;

use super::*;
use crate::device::{DeviceConfig, TransferKind};

fn ctx(cores: usize) -> PimContext {
    PimContext::new(DeviceConfig {
        dram_bank_bytes: 4 << 20,
        ..DeviceConfig::with_cores(cores)
    })
    .unwrap()
}

fn map_u32(c: &mut PimContext, f: fn(u32) -> u32) -> HandleId {
    c.create_handle(
        HandleFunctions::typed_map::<u32, u32>(move |x, _| f(x)),
        HandleKind::Map,
        &[],
    )
    .unwrap()
}

fn sum_handle(c: &mut PimContext) -> HandleId {
    let f = HandleFunctions::typed_reduce::<u32, u64>(
        || 0,
        |x, _| (x as u64, 0),
        |a, b| a.wrapping_add(b),
    );
    c.create_handle(f, HandleKind::Reduce, &[]).unwrap()
}

fn histogram_handle(c: &mut PimContext, bins: u32) -> HandleId {
    let f = HandleFunctions::typed_reduce::<u32, u32>(
        || 0,
        move |d, _| (1, ((d * bins) >> 12) as usize),
        |a, b| a + b,
    );
    c.create_handle(f, HandleKind::Reduce, &[]).unwrap()
}

fn host_histogram(data: &[u32], bins: u32) -> Vec<u32> {
    let mut out = vec![0; bins as usize];
    for &d in data {
        out[((d * bins) >> 12) as usize] += 1;
    }
    out
}

#[test]
fn create_handle_validates_callbacks() {
    let mut c = ctx(1);
    let no_acc = HandleFunctions::new()
        .with_init(|e| e.fill(0))
        .with_map_to_val(|_, _, _| 0);
    assert_eq!(
        c.create_handle(no_acc, HandleKind::Reduce, &[]),
        Err(Error::MissingCallback {
            kind: "reduce",
            callback: "acc"
        })
    );
    assert!(matches!(
        c.create_handle(HandleFunctions::new(), HandleKind::Map, &[]),
        Err(Error::MissingCallback {
            callback: "map",
            ..
        })
    ));
    let f = HandleFunctions::typed_map::<u32, u32>(|x, _| x);
    assert_eq!(
        c.create_handle(f, HandleKind::Zip, &[]),
        Err(Error::InvalidHandleKind("zip"))
    );
}

#[test]
fn handle_kind_checked_at_call_site() {
    let mut c = ctx(2);
    c.scatter_slice("t1", &[1u32, 2, 3]).unwrap();
    let m = map_u32(&mut c, |x| x);
    assert_eq!(
        c.array_red("t1", "t2", 4, 1, m),
        Err(Error::HandleKindMismatch {
            expected: "reduce",
            found: "map"
        })
    );
    let r = sum_handle(&mut c);
    assert!(matches!(
        c.array_map("t1", "t2", 4, r),
        Err(Error::HandleKindMismatch { .. })
    ));
    assert!(c.lookup("t2").is_err());
}

#[test]
fn context_visible_on_every_core() {
    let mut c = ctx(4);
    let weights: Vec<u8> = (1..=40).collect();
    let expected_sum: u32 = weights.iter().map(|&b| b as u32).sum();
    let f = HandleFunctions::typed_map::<u32, [u32; 2]>(|x, ctx| {
        [
            ctx.len() as u32,
            x + ctx.iter().map(|&b| b as u32).sum::<u32>(),
        ]
    });
    let h = c.create_handle(f, HandleKind::Map, &weights).unwrap();
    c.scatter_slice("x", &(0..40u32).collect::<Vec<_>>())
        .unwrap();
    c.array_map("x", "y", 8, h).unwrap();
    let y: Vec<[u32; 2]> = c.gather_vec("y").unwrap();
    for (i, pair) in y.iter().enumerate() {
        assert_eq!(*pair, [40, i as u32 + expected_sum]);
    }
}

#[test]
fn updated_context_reaches_cores() {
    let mut c = ctx(3);
    let f = HandleFunctions::typed_map::<u32, u32>(|x, ctx| {
        x * bytemuck::pod_read_unaligned::<u32>(ctx)
    });
    let h = c
        .create_handle(f, HandleKind::Map, &2u32.to_ne_bytes())
        .unwrap();
    c.scatter_slice("x", &[1u32, 2, 3, 4, 5]).unwrap();
    c.array_map("x", "y2", 4, h).unwrap();
    c.set_handle_context(h, &7u32.to_ne_bytes()).unwrap();
    c.array_map("x", "y7", 4, h).unwrap();
    assert_eq!(c.gather_vec::<u32>("y2").unwrap(), vec![2, 4, 6, 8, 10]);
    assert_eq!(c.gather_vec::<u32>("y7").unwrap(), vec![7, 14, 21, 28, 35]);
    assert_eq!(
        c.set_handle_context(h, &[0; 3]),
        Err(Error::ContextSizeMismatch {
            expected: 4,
            got: 3
        })
    );
}

#[test]
fn map_square_keeps_distribution() {
    let mut c = ctx(2);
    c.scatter_slice("t1", &[1u32, 2, 3, 4]).unwrap();
    let h = map_u32(&mut c, |x| x * x);
    c.array_map("t1", "t2", 4, h).unwrap();
    assert_eq!(c.gather_vec::<u32>("t2").unwrap(), vec![1, 4, 9, 16]);
    let (a, b) = (c.lookup("t1").unwrap(), c.lookup("t2").unwrap());
    assert_eq!(a.per_core_elems, b.per_core_elems);
    assert_eq!(b.layout, LayoutKind::Scattered);
}

#[test]
fn map_identity_and_errors() {
    let mut c = ctx(3);
    let data: Vec<u32> = (0..1001).map(|i| i * 7919).collect();
    c.scatter_slice("a", &data).unwrap();
    let h = map_u32(&mut c, |x| x);
    c.array_map("a", "b", 4, h).unwrap();
    assert_eq!(c.gather_vec::<u32>("b").unwrap(), data);
    assert_eq!(
        c.array_map("a", "b", 4, h),
        Err(Error::DuplicateArrayId("b".into()))
    );
    assert_eq!(
        c.array_map("zz", "q", 4, h),
        Err(Error::UnknownArrayId("zz".into()))
    );
    c.broadcast_slice("r", &[1u32]).unwrap();
    assert!(matches!(
        c.array_map("r", "q", 4, h),
        Err(Error::WrongLayout { .. })
    ));
}

#[test]
fn map_changes_element_size() {
    let mut c = ctx(4);
    let data: Vec<u8> = (0..=200).collect();
    c.scatter_slice("a", &data).unwrap();
    let f =
        HandleFunctions::typed_map::<u8, [u32; 3]>(|x, _| [x as u32, 2 * x as u32, 3 * x as u32]);
    let h = c.create_handle(f, HandleKind::Map, &[]).unwrap();
    c.array_map("a", "b", 12, h).unwrap();
    let out: Vec<[u32; 3]> = c.gather_vec("b").unwrap();
    assert_eq!(out.len(), data.len());
    for (x, o) in data.iter().zip(&out) {
        assert_eq!(*o, [*x as u32, 2 * *x as u32, 3 * *x as u32]);
    }
}

#[test]
fn sum_reduction() {
    let mut c = ctx(4);
    c.scatter_slice("t1", &(1..=100u32).collect::<Vec<_>>())
        .unwrap();
    let h = sum_handle(&mut c);
    c.array_red("t1", "t2", 8, 1, h).unwrap();
    assert_eq!(c.gather_vec::<u64>("t2").unwrap(), vec![5050]);
    let m = c.lookup("t2").unwrap();
    assert_eq!(m.per_core_elems, vec![1, 0, 0, 0]);
    let plan = c.reports().last().unwrap().reduction.unwrap();
    assert_eq!(
        (plan.variant, plan.num_tasklets),
        (ReductionVariant::ThreadPrivate, 12)
    );
}

#[test]
fn reduction_over_empty_input_is_identity() {
    let mut c = ctx(2);
    c.scatter("e", &[], 0, 4).unwrap();
    let h = sum_handle(&mut c);
    c.array_red("e", "s", 8, 1, h).unwrap();
    assert_eq!(c.gather_vec::<u64>("s").unwrap(), vec![0]);
}

#[test]
fn histogram_key_formula() {
    let mut c = ctx(2);
    c.scatter_slice("d", &[4095u32, 0, 0]).unwrap();
    let h = histogram_handle(&mut c, 256);
    c.array_red("d", "h", 4, 256, h).unwrap();
    let bins: Vec<u32> = c.gather_vec("h").unwrap();
    assert_eq!(bins[255], 1);
    assert_eq!(bins[0], 2);
    assert_eq!(bins.iter().sum::<u32>(), 3);
}

#[test]
fn key_out_of_range_is_an_error() {
    let mut c = ctx(2);
    c.scatter_slice("d", &[1u32, 2, 3]).unwrap();
    let f = HandleFunctions::typed_reduce::<u32, u32>(|| 0, |x, _| (1, x as usize), |a, b| a + b);
    let h = c.create_handle(f, HandleKind::Reduce, &[]).unwrap();
    let before = c.device().cursor();
    assert_eq!(
        c.array_red("d", "h", 4, 2, h),
        Err(Error::KeyOutOfRange { key: 2, len: 2 })
    );
    assert_eq!(c.device().cursor(), before);
    assert!(c.lookup("h").is_err());
}

#[test]
fn variants_agree_on_histograms() {
    let data: Vec<u32> = (0..20_000u32)
        .map(|i| i.wrapping_mul(2_654_435_761) >> 20)
        .collect();
    for bins in [256u32, 512, 1024, 2048, 4096] {
        let mut outs = Vec::new();
        for policy in [ReductionPolicy::Shared, ReductionPolicy::Private] {
            let mut c = ctx(3);
            c.set_reduction_policy(policy);
            c.scatter_slice("d", &data).unwrap();
            let h = histogram_handle(&mut c, bins);
            c.array_red("d", "h", 4, bins as usize, h).unwrap();
            outs.push(c.gather_vec::<u32>("h").unwrap());
        }
        assert_eq!(outs[0], outs[1], "bins={bins}");
        assert_eq!(outs[0], host_histogram(&data, bins));
    }
}

#[test]
fn auto_policy_throttles_tasklets() {
    let data: Vec<u32> = (0..5000).map(|i| i % 4096).collect();
    let mut counts = Vec::new();
    for bins in [256u32, 512, 1024, 2048, 4096] {
        let mut c = ctx(2);
        c.scatter_slice("d", &data).unwrap();
        let h = histogram_handle(&mut c, bins);
        c.array_red("d", "h", 4, bins as usize, h).unwrap();
        counts.push(c.reports().last().unwrap().num_tasklets);
    }
    assert_eq!(counts, vec![12, 12, 8, 4, 2]);
}

#[test]
fn ring_merge_with_few_entries() {
    // fewer output entries than tasklets leaves some merge segments empty
    let data: Vec<u32> = (0..3000).collect();
    let mut c = ctx(2);
    c.scatter_slice("d", &data).unwrap();
    let f = HandleFunctions::typed_reduce::<u32, u64>(
        || 0,
        |x, _| (x as u64, (x % 5) as usize),
        |a, b| a + b,
    );
    let h = c.create_handle(f, HandleKind::Reduce, &[]).unwrap();
    c.array_red("d", "r", 8, 5, h).unwrap();
    let got: Vec<u64> = c.gather_vec("r").unwrap();
    let mut want = vec![0u64; 5];
    for x in data {
        want[(x % 5) as usize] += x as u64;
    }
    assert_eq!(got, want);
}

#[test]
fn zip_is_lazy() {
    let mut c = ctx(2);
    c.scatter_slice("a", &[1u32, 2, 3, 4]).unwrap();
    c.scatter_slice("b", &[10u32, 20, 30, 40]).unwrap();
    let before = c.stats();
    c.array_zip("a", "b", "ab").unwrap();
    assert_eq!(c.stats(), before);
    let m = c.lookup("ab").unwrap();
    assert_eq!(
        m.layout,
        LayoutKind::LazyZip {
            first: "a".into(),
            second: "b".into()
        }
    );
    assert_eq!(m.type_size, 8);

    let f = HandleFunctions::typed_map::<[u32; 2], u32>(|[x, y], _| x + y);
    let h = c.create_handle(f, HandleKind::Map, &[]).unwrap();
    c.array_map("ab", "sum", 4, h).unwrap();
    assert_eq!(c.gather_vec::<u32>("sum").unwrap(), vec![11, 22, 33, 44]);
}

#[test]
fn zip_input_errors() {
    let mut c = ctx(4);
    c.scatter_slice("five", &[0u32; 5]).unwrap();
    c.scatter_slice("six", &[0u32; 6]).unwrap();
    assert_eq!(
        c.array_zip("five", "six", "z"),
        Err(Error::LengthMismatch {
            first: 5,
            second: 6
        })
    );
    c.scatter_slice("w4", &[0u32; 10]).unwrap();
    c.scatter_slice("w8", &[0u64; 10]).unwrap();
    assert!(matches!(
        c.array_zip("w4", "w8", "z"),
        Err(Error::DistributionMismatch { .. })
    ));
    c.array_zip("five", "five", "z").unwrap();
    assert_eq!(
        c.array_zip("five", "five", "z"),
        Err(Error::DuplicateArrayId("z".into()))
    );
}

#[test]
fn nested_zip_materializes() {
    let mut c = ctx(2);
    let a: Vec<u32> = (0..100).collect();
    let b: Vec<u32> = (100..200).collect();
    let cc: Vec<u32> = (200..300).collect();
    c.scatter_slice("a", &a).unwrap();
    c.scatter_slice("b", &b).unwrap();
    c.scatter_slice("c", &cc).unwrap();
    c.array_zip("a", "b", "ab").unwrap();
    let before = c.stats();
    c.array_zip("ab", "c", "abc").unwrap();
    let delta = c.stats().since(&before);
    let m = c.lookup("abc").unwrap();
    assert_eq!(m.layout, LayoutKind::Scattered);
    assert_eq!(m.type_size, 12);
    assert_eq!(delta.dram_to_scratch_bytes, 3 * 400);
    assert_eq!(delta.scratch_to_dram_bytes, 1200);
    let rows: Vec<[u32; 3]> = c.gather_vec("abc").unwrap();
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(*r, [a[i], b[i], cc[i]]);
    }
    assert_eq!(c.reports().last().unwrap().op, IteratorOp::Zip);
}

fn vecadd_traffic(lazy: bool, per_core: usize, cores: usize) -> (u64, Vec<u32>) {
    let mut c = ctx(cores);
    let n = per_core * cores;
    let a: Vec<u32> = (0..n as u32).collect();
    let b: Vec<u32> = (0..n as u32).map(|x| x * 3).collect();
    c.scatter_slice("a", &a).unwrap();
    c.scatter_slice("b", &b).unwrap();
    let before = c.stats();
    if lazy {
        c.array_zip("a", "b", "ab").unwrap();
    } else {
        c.array_zip_eager("a", "b", "ab").unwrap();
    }
    let f = HandleFunctions::typed_map::<[u32; 2], u32>(|[x, y], _| x.wrapping_add(y));
    let h = c.create_handle(f, HandleKind::Map, &[]).unwrap();
    c.array_map("ab", "sum", 4, h).unwrap();
    let traffic = c.stats().since(&before).dram_scratch_bytes();
    (traffic, c.gather_vec("sum").unwrap())
}

#[test]
fn lazy_zip_traffic() {
    let (lazy, out_lazy) = vecadd_traffic(true, 1000, 4);
    let (eager, out_eager) = vecadd_traffic(false, 1000, 4);
    assert_eq!(out_lazy, out_eager);
    // lazy: read a, b, write sum; eager adds write + read of the pair array
    assert_eq!(lazy, 4 * 1000 * 12);
    assert_eq!(eager, 4 * 1000 * 28);
}

#[test]
fn streaming_dma_sizes() {
    let mut c = ctx(3);
    c.set_transfer_log(true);
    let data: Vec<[u32; 3]> = (0..2000u32).map(|i| [i, i + 1, i + 2]).collect();
    c.scatter_slice("x", &data).unwrap();
    let f = HandleFunctions::typed_map::<[u32; 3], [u32; 3]>(|v, _| v);
    let h = c.create_handle(f, HandleKind::Map, &[]).unwrap();
    c.take_transfer_log();
    c.array_map("x", "y", 12, h).unwrap();
    let batch = compute_batch_elems(12, 2048, 8).unwrap();
    let rep = c.reports().last().unwrap();
    assert_eq!(rep.batch_elems, batch);
    let per_core = c.lookup("x").unwrap().per_core_elems;
    let log = c.take_transfer_log();
    for (core, &n) in per_core.iter().enumerate() {
        let reads: Vec<usize> = log
            .iter()
            .filter(|r| r.core == core && r.kind == TransferKind::DramToScratch)
            .map(|r| r.size)
            .collect();
        let full = n / batch;
        let tail = n % batch;
        assert_eq!(reads.iter().filter(|&&s| s == batch * 12).count(), full);
        assert_eq!(reads.len(), full + usize::from(tail > 0));
        if tail > 0 {
            assert!(reads.contains(&round_up(tail * 12, 8)));
        }
    }
    assert_eq!(c.gather_vec::<[u32; 3]>("y").unwrap(), data);
}

#[test]
fn huge_output_has_no_plan() {
    let mut c = ctx(1);
    c.scatter_slice("d", &[1u32]).unwrap();
    let f = HandleFunctions::typed_reduce::<u32, u32>(|| 0, |_, _| (1, 0), |a, b| a + b);
    let h = c.create_handle(f, HandleKind::Reduce, &[]).unwrap();
    assert!(matches!(
        c.array_red("d", "h", 4, 20_000, h),
        Err(Error::NoFeasiblePlan { .. })
    ));
}

/// Pure functions the map property draws from.
fn pool(i: usize) -> fn(u32) -> u32 {
    const POOL: [fn(u32) -> u32; 5] = [
        |x| x,
        |x| x.wrapping_mul(x),
        |x| x ^ 0xdead_beef,
        |x| x.rotate_left(7).wrapping_add(3),
        |x| x / 3,
    ];
    POOL[i % POOL.len()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn map_matches_host(data in prop::collection::vec(any::<u32>(), 0..3000), cores in 1usize..12, f in 0usize..5) {
        let mut c = ctx(cores);
        c.scatter_slice("x", &data).unwrap();
        let h = map_u32(&mut c, pool(f));
        c.array_map("x", "y", 4, h).unwrap();
        let want: Vec<u32> = data.iter().map(|&x| pool(f)(x)).collect();
        prop_assert_eq!(c.gather_vec::<u32>("y").unwrap(), want);
    }

    #[test]
    fn reduction_matches_host_loop(
        data in prop::collection::vec(0u32..4096, 0..4000),
        cores in 1usize..10,
        bins in 2u32..600,
        shared in any::<bool>(),
    ) {
        let mut c = ctx(cores);
        if shared {
            c.set_reduction_policy(ReductionPolicy::Shared);
        }
        c.scatter_slice("d", &data).unwrap();
        let h = histogram_handle(&mut c, bins);
        c.array_red("d", "h", 4, bins as usize, h).unwrap();
        prop_assert_eq!(c.gather_vec::<u32>("h").unwrap(), host_histogram(&data, bins));
    }
}
