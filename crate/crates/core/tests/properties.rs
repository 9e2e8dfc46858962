use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;

use stencil_roofline::hwdb::{builtin, ProfileFile};
use stencil_roofline::kernel::{self, alpha_exact, fuse, Kernel, Offset, Shape};
use stencil_roofline::roofline::{
    attain, classify, metrics_cuda_fused, metrics_tc_fused, Bound, DataType, Scenario,
};
use stencil_roofline::simulator::{run_fused, run_iterated, Grid};
use stencil_roofline::transform::{
    build_kernel_operands, check_2to4, compress_2to4, decompress_2to4, MmaShape, SchemeKind,
    TransformScheme,
};
use stencil_roofline::{HardwareProfile, UnitPeaks};

fn shape() -> impl Strategy<Value = Shape> {
    prop_oneof![Just(Shape::Box), Just(Shape::Star)]
}

fn dtype() -> impl Strategy<Value = DataType> {
    prop_oneof![Just(DataType::Half), Just(DataType::Float), Just(DataType::Double)]
}

/// Reference Minkowski power by hash-set iteration.
fn naive_support(kernel: &Kernel, t: u32) -> usize {
    let base: Vec<Vec<i32>> = kernel.entries().keys().map(|o| o.coords().to_vec()).collect();
    let mut acc: HashSet<Vec<i32>> = HashSet::from([vec![0; kernel.dim()]]);
    for _ in 0..t {
        acc = acc
            .iter()
            .flat_map(|p| base.iter().map(move |b| p.iter().zip(b).map(|(x, y)| x + y).collect()))
            .collect();
    }
    acc.len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fused_support_matches_naive_minkowski(shape in shape(), d in 1usize..=3, r in 1u32..=2, t in 1u32..=3) {
        let k = Kernel::new(shape, d, r, None).unwrap();
        prop_assert_eq!(fuse(&k, t).unwrap().point_count(), naive_support(&k, t));
    }

    #[test]
    fn alpha_counts_fused_support(shape in shape(), d in 1usize..=3, r in 1u32..=3, t in 1u32..=5) {
        let k = Kernel::new(shape, d, r, None).unwrap();
        let a = alpha_exact(&k, t).unwrap();
        let kt = fuse(&k, t).unwrap().point_count() as u64;
        let kb = k.point_count() as u64;
        prop_assert_eq!(a * num_rational::Ratio::from_integer(t as u64 * kb), num_rational::Ratio::from_integer(kt));
        prop_assert!(kt <= kb.saturating_pow(t));
        prop_assert!(kt <= ((2 * r * t + 1) as u64).pow(d as u32));
        prop_assert_eq!(alpha_exact(&k, 1).unwrap(), num_rational::Ratio::from_integer(1));
    }

    #[test]
    fn fused_weights_sum_to_power(shape in shape(), d in 1usize..=2, r in 1u32..=2, t in 1u32..=4) {
        let k = Kernel::new(shape, d, r, None).unwrap();
        let fused = fuse(&k, t).unwrap();
        let expected = k.weight_sum().powi(t as i32);
        let got: f64 = fused.entries().values().sum();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        prop_assert_eq!(fused.radius(), r * t);
    }

    #[test]
    fn custom_kernel_fusion_matches_naive(
        offsets in prop::collection::btree_set((-2i32..=2, -2i32..=2), 1..6)
    ) {
        let entries: BTreeMap<Offset, f64> = offsets
            .into_iter()
            .map(|(a, b)| (Offset::new(vec![a, b]), 1.0))
            .collect();
        let k = Kernel::custom(2, entries).unwrap();
        for t in 1..=3 {
            prop_assert_eq!(fuse(&k, t).unwrap().point_count(), naive_support(&k, t));
        }
    }

    #[test]
    fn operand_sparsity_in_unit_interval(shape in shape(), d in 1usize..=3, r in 1u32..=3,
                                        decomp in any::<bool>(), double in any::<bool>()) {
        prop_assume!(!(decomp && d == 1));
        let k = Kernel::new(shape, d, r, None).unwrap();
        let kind = if decomp { SchemeKind::Decomposition } else { SchemeKind::Flattening };
        let mma = if double { MmaShape::M8N8K4 } else { MmaShape::M16N8K16 };
        let ops = build_kernel_operands(&k, &TransformScheme::new(kind, mma)).unwrap();
        prop_assert!(ops.sparsity > 0.0 && ops.sparsity <= 1.0);
        prop_assert_eq!(ops.rows % mma.m, 0);
        prop_assert_eq!(ops.cols % mma.k, 0);
        prop_assert!(ops.nonzeros >= k.point_count());
    }

    #[test]
    fn two_four_round_trip(groups in (1usize..6, 1usize..6).prop_flat_map(|(rows, width)| prop::collection::vec(
        prop::collection::vec(prop::array::uniform4(prop_oneof![Just(0.0), -5.0f64..5.0]), width), rows))) {
        // Zero all but the first two nonzeros of each group so the input is valid.
        let rows: Vec<Vec<f64>> = groups.iter().map(|row| row.iter().flat_map(|g| {
            let mut g = *g;
            let mut seen = 0;
            for v in g.iter_mut() {
                if *v != 0.0 { seen += 1; if seen > 2 { *v = 0.0; } }
            }
            g
        }).collect()).collect();
        prop_assert!(check_2to4(&rows).satisfies_2to4);
        let c = compress_2to4(&rows).unwrap();
        prop_assert_eq!(c.kept_values(), rows.len() * rows[0].len() / 2);
        prop_assert_eq!(decompress_2to4(&c).unwrap(), rows);
    }

    #[test]
    fn roofline_invariants(k in 1u64..400, dt in dtype(), t in 1u32..10, alpha in 1.0f64..20.0,
                           s in 0.05f64..=1.0, cu in 1e11f64..1e14, mult in 1.0f64..32.0, bw in 1e10f64..1e13,
                           scale in 0.1f64..10.0) {
        let mc = metrics_cuda_fused(k, dt, t).unwrap();
        let mt = metrics_tc_fused(k, dt, t, alpha, s).unwrap();
        let cup = attain(&mc, cu, bw).unwrap();
        let tcp = attain(&mt, cu * mult, bw).unwrap();
        for p in [&cup, &tcp] {
            prop_assert!(p.p_raw <= p.peak);
            prop_assert!(p.p_actual <= p.p_raw * (1.0 + 1e-12));
            prop_assert_eq!(p.bound == Bound::Compute, p.intensity >= p.ridge);
        }
        let scenario = classify(&cup, &tcp);
        let ratio = tcp.p_actual / cup.p_actual;
        if scenario == Scenario::MemoryMemory {
            prop_assert!((ratio - 1.0).abs() < 1e-12);
        }
        // Scaling both ceilings together leaves bounds unchanged away from ties.
        let scaled = attain(&mc, cu * scale, bw * scale).unwrap();
        if (cup.intensity / cup.ridge - 1.0).abs() > 1e-9 {
            prop_assert_eq!(scaled.bound, cup.bound);
        }
        // Adding bandwidth never lowers throughput.
        let faster = attain(&mt, cu * mult, bw * 2.0).unwrap();
        prop_assert!(faster.p_actual >= tcp.p_actual * (1.0 - 1e-12));
    }

    #[test]
    fn tc_intensity_scales_with_alpha_over_s(k in 1u64..400, dt in dtype(), t in 1u32..10,
                                              alpha in 1.0f64..20.0, s in 0.05f64..=1.0) {
        let mc = metrics_cuda_fused(k, dt, t).unwrap();
        let mt = metrics_tc_fused(k, dt, t, alpha, s).unwrap();
        prop_assert!((mt.intensity / mc.intensity - alpha / s).abs() < 1e-9 * alpha / s);
        prop_assert_eq!(mt.bytes, mc.bytes);
        prop_assert_eq!(mt.useful_flops, mc.flops);
    }

    #[test]
    fn simulator_conserves_mass_with_normalized_weights(shape in shape(), d in 1usize..=2, r in 1u32..=2,
                                                        t in 1u32..=3, seed in any::<u64>()) {
        let base = Kernel::new(shape, d, r, None).unwrap();
        let n = base.point_count() as f64;
        let entries = base.entries().keys().map(|o| (o.clone(), 1.0 / n)).collect();
        let k = Kernel::custom(d, entries).unwrap();
        let extent = 2 * (r * t) as usize + 3;
        let mut state = seed;
        let grid = Grid::from_fn(vec![extent; d], DataType::Double, |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        }).unwrap();
        let (iterated, it) = run_iterated(&grid, &k, t).unwrap();
        let (fused_out, ft) = run_fused(&grid, &fuse(&k, t).unwrap()).unwrap();
        prop_assert!((iterated.mean() - grid.mean()).abs() < 1e-12);
        prop_assert!((fused_out.mean() - grid.mean()).abs() < 1e-12);
        let bytes = DataType::Double.bytes() as f64;
        prop_assert_eq!(it.bytes_per_point(), 2.0 * bytes);
        prop_assert_eq!(ft.bytes_per_point(), 2.0 * bytes);
        prop_assert_eq!(it.flops, 2 * base.point_count() as u64 * grid.len() as u64 * t as u64);
        let alpha = kernel::alpha(&k, t).unwrap();
        prop_assert!((ft.flops as f64 / it.flops as f64 - alpha).abs() < 1e-12);
    }

    #[test]
    fn grid_binary_and_csv_round_trip(extents in prop::collection::vec(1usize..5, 1..=3),
                                      double in any::<bool>(), seed in 0u32..1000) {
        let dt = if double { DataType::Double } else { DataType::Float };
        let grid = Grid::from_fn(extents, dt, |i| {
            (i as f64 + seed as f64) * 0.25
        }).unwrap();
        let mut buf = Vec::new();
        grid.write_binary(&mut buf).unwrap();
        prop_assert_eq!(&Grid::read_binary(buf.as_slice()).unwrap(), &grid);
        let mut csv = Vec::new();
        grid.write_csv(&mut csv).unwrap();
        prop_assert_eq!(&Grid::read_csv(csv.as_slice(), dt).unwrap(), &grid);
    }

    #[test]
    fn profile_round_trip(bw in 1e9f64..1e14, cu in 1e10f64..1e15, tc in 1e10f64..1e16, sparse in any::<bool>()) {
        let mut dtypes = BTreeMap::new();
        dtypes.insert(DataType::Float, UnitPeaks { cuda: cu, tc_dense: tc, tc_sparse: sparse.then_some(2.0 * tc) });
        let file = ProfileFile {
            schema_version: 1,
            profiles: vec![HardwareProfile { name: "gen".into(), bandwidth: bw, dtypes }],
        };
        let text = file.to_toml();
        prop_assert_eq!(ProfileFile::parse(&text).unwrap(), file);
    }
}

#[test]
fn builtin_profiles_round_trip() {
    let file = builtin();
    assert_eq!(ProfileFile::parse(&file.to_toml()).unwrap(), file);
}
