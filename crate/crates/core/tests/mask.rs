use std::collections::HashSet;

use proptest::prelude::*;
use segcrowd_core::mask::*;

fn arb_layer(w: u32, h: u32) -> impl Strategy<Value = MaskLayer> {
    // mix sparse, dense and blocky rasters so long runs appear too
    (prop::collection::vec(any::<bool>(), (w * h) as usize), 0u8..3).prop_map(move |(bits, mode)| {
        let bits = match mode {
            0 => bits,
            1 => bits.iter().enumerate().map(|(i, &b)| b && i % 7 == 0).collect(),
            _ => (0..w * h).map(|i| (i / w) % 5 < 2 || bits[i as usize] && i % 11 == 0).collect(),
        };
        MaskLayer::from_bits(w, h, bits).unwrap()
    })
}

fn arb_mask() -> impl Strategy<Value = SegmentationMask> {
    (1u32..=64, 1u32..=64).prop_flat_map(|(w, h)| {
        let names = prop::sample::subsequence(vec!["arteriole", "venule", "vessel", "optic_disc"], 0..=3);
        (names, prop::collection::vec((arb_layer(w, h), 0u16..4), 3)).prop_map(move |(names, layers)| {
            let mut m = SegmentationMask::new(w, h).unwrap();
            for (name, (layer, order)) in names.into_iter().zip(layers) {
                m.insert_named(name, order, layer).unwrap();
            }
            m
        })
    })
}

fn set_of(layer: &MaskLayer) -> HashSet<(u32, u32)> {
    let mut s = HashSet::new();
    for y in 0..layer.height() {
        for x in 0..layer.width() {
            if layer.get(x, y) {
                s.insert((x, y));
            }
        }
    }
    s
}

fn oracle(a: &MaskLayer, b: &MaskLayer) -> (f64, f64) {
    let (sa, sb) = (set_of(a), set_of(b));
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    if union == 0 {
        return (1.0, 1.0);
    }
    (2.0 * inter as f64 / (sa.len() + sb.len()) as f64, inter as f64 / union as f64)
}

fn layer_with(w: u32, h: u32, on: &[(u32, u32)]) -> MaskLayer {
    let mut l = MaskLayer::empty(w, h);
    for &(x, y) in on {
        l.set(x, y, true);
    }
    l
}

#[test]
fn rle_bytes_for_small_layers() {
    let l = layer_with(2, 2, &[(1, 0), (0, 1)]);
    assert_eq!(encode_rle(&l), [1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
    assert_eq!(encode_rle(&MaskLayer::empty(2, 2)), [4, 0, 0, 0]);
    let full = MaskLayer::from_bits(2, 2, vec![true; 4]).unwrap();
    assert_eq!(encode_rle(&full), [0, 0, 0, 0, 4, 0, 0, 0]);
    assert_eq!(decode_rle(&[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0], 2, 2).unwrap(), l);
    assert!(matches!(decode_rle(&[3, 0, 0, 0], 2, 2), Err(MaskError::MalformedRle(_))));
    assert!(matches!(decode_rle(&[4, 0, 0], 2, 2), Err(MaskError::MalformedRle(_))));
    assert!(matches!(
        decode_rle(&[0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff], 2, 2),
        Err(MaskError::MalformedRle(_))
    ));
}

#[test]
fn metric_examples() {
    let a = layer_with(4, 4, &[(0, 0), (1, 0), (2, 0)]);
    let b = layer_with(4, 4, &[(1, 0), (2, 0), (0, 3), (1, 3), (2, 3)]);
    assert_eq!(dice(&a, &b).unwrap(), 0.5);
    assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(dice(&a, &a).unwrap(), 1.0);
    let p = layer_with(4, 4, &[(0, 0)]);
    let q = layer_with(4, 4, &[(0, 1)]);
    assert_eq!((dice(&p, &q).unwrap(), iou(&p, &q).unwrap()), (0.0, 0.0));
    let e = MaskLayer::empty(4, 4);
    assert_eq!((dice(&e, &e).unwrap(), iou(&e, &e).unwrap()), (1.0, 1.0));
    assert!(matches!(dice(&e, &MaskLayer::empty(4, 3)), Err(MaskError::DimensionMismatch(_))));
}

#[test]
fn macro_dice_averages_classes() {
    let mut a = SegmentationMask::new(3, 3).unwrap();
    let mut b = SegmentationMask::new(3, 3).unwrap();
    let one = layer_with(3, 3, &[(1, 1)]);
    let other = layer_with(3, 3, &[(0, 0)]);
    a.insert_named("arteriole", 0, one.clone()).unwrap();
    b.insert_named("arteriole", 0, one.clone()).unwrap();
    a.insert_named("venule", 1, one).unwrap();
    b.insert_named("venule", 1, other).unwrap();
    let r = compare_masks(&a, &b).unwrap();
    assert_eq!(r.per_class["arteriole"].dice, 1.0);
    assert_eq!(r.per_class["venule"].dice, 0.0);
    assert_eq!(r.macro_dice, 0.5);
    let mut c = SegmentationMask::new(3, 3).unwrap();
    c.insert_named("arteriole", 0, MaskLayer::empty(3, 3)).unwrap();
    assert!(matches!(compare_masks(&a, &c), Err(MaskError::LayerSetMismatch(_))));
}

#[test]
fn container_rejects_bad_input() {
    let mut m = SegmentationMask::new(5, 4).unwrap();
    m.insert_named("vessel", 0, layer_with(5, 4, &[(2, 2)])).unwrap();
    let bytes = serialize_mask(&m);
    assert_eq!(&bytes[..4], b"LSEG");
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(deserialize_mask(&bad), Err(MaskError::MalformedContainer(_))));
    let mut bad = bytes.clone();
    bad[4] = 2;
    assert!(matches!(deserialize_mask(&bad), Err(MaskError::MalformedContainer(_))));
    for cut in [3, 10, 16, bytes.len() - 1] {
        assert!(deserialize_mask(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    assert!(matches!(deserialize_mask(&bytes[..bytes.len() - 4]), Err(MaskError::MalformedContainer(_))));
}

#[test]
fn rasterize_examples() {
    let l = rasterize_stroke(&[(5.0, 5.0)], 0.0, 10, 10).unwrap();
    assert_eq!(set_of(&l), HashSet::from([(5, 5)]));
    let l = rasterize_stroke(&[(5.0, 5.0)], 1.0, 10, 10).unwrap();
    assert_eq!(set_of(&l), HashSet::from([(5, 5), (4, 5), (6, 5), (5, 4), (5, 6)]));
    let l = rasterize_stroke(&[(0.0, 0.0), (3.0, 0.0)], 0.0, 10, 10).unwrap();
    assert_eq!(set_of(&l), HashSet::from([(0, 0), (1, 0), (2, 0), (3, 0)]));
    assert!(matches!(rasterize_stroke(&[], 1.0, 4, 4), Err(MaskError::EmptyPolyline)));
    assert!(rasterize_stroke(&[(0.0, 0.0)], -1.0, 4, 4).is_err());
}

/// Squared distance from integer point `p` to segment `a`-`b`, compared with
/// `r2` without any rounding: everything is scaled by the squared length.
fn within(p: (i64, i64), a: (i64, i64), b: (i64, i64), r2: i64) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (px, py) = (p.0 - a.0, p.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = px * dx + py * dy;
    if len2 == 0 || t <= 0 {
        return px * px + py * py <= r2;
    }
    if t >= len2 {
        let (qx, qy) = (p.0 - b.0, p.1 - b.1);
        return qx * qx + qy * qy <= r2;
    }
    let cross = px * dy - py * dx;
    cross * cross <= r2 * len2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn containers_round_trip(m in arb_mask()) {
        let bytes = serialize_mask(&m);
        prop_assert_eq!(&serialize_mask(&m), &bytes);
        let back = deserialize_mask(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(serialize_mask(&back), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_equal_the_pixel_set_oracle(a in arb_layer(8, 8), b in arb_layer(8, 8)) {
        let (d, j) = oracle(&a, &b);
        prop_assert_eq!(dice(&a, &b).unwrap(), d);
        prop_assert_eq!(iou(&a, &b).unwrap(), j);
        prop_assert_eq!(dice(&b, &a).unwrap(), d);
        prop_assert!(j <= d + 1e-15 && d <= 1.0);
        let wrap = |l: &MaskLayer| {
            let mut m = SegmentationMask::new(8, 8).unwrap();
            m.insert_named("vessel", 0, l.clone()).unwrap();
            m
        };
        let report = compare_masks(&wrap(&a), &wrap(&b)).unwrap();
        let ca = &report.per_class["vessel"];
        prop_assert_eq!((ca.dice, ca.iou), (d, j));
        prop_assert_eq!((ca.area_a, ca.area_b), (set_of(&a).len() as u64, set_of(&b).len() as u64));
        prop_assert_eq!(report.macro_dice, d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn strokes_equal_the_integer_distance_oracle(
        pts in prop::collection::vec((-4i64..36, -4i64..36), 1..5),
        r in 0i64..5,
        w in 1u32..=32,
        h in 1u32..=32,
    ) {
        let fpts: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
        let layer = rasterize_stroke(&fpts, r as f64, w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                let p = (x as i64, y as i64);
                let expected = if pts.len() == 1 {
                    within(p, pts[0], pts[0], r * r)
                } else {
                    pts.windows(2).any(|s| within(p, s[0], s[1], r * r))
                };
                prop_assert_eq!(layer.get(x, y), expected, "pixel ({}, {})", x, y);
            }
        }
    }
}
