//! Alternating run-length encoding: u32 little-endian runs, zero-run first.

use super::{MaskError, MaskLayer};

/// Run lengths of `layer`, starting with a (possibly empty) run of zeros.
pub fn runs(layer: &MaskLayer) -> Vec<u32> {
    let mut out = Vec::new();
    let mut current = false;
    let mut count = 0u32;
    for &bit in layer.bits() {
        if bit != current {
            out.push(count);
            current = bit;
            count = 0;
        }
        count += 1;
    }
    if count > 0 || out.is_empty() {
        out.push(count);
    }
    out
}

pub fn encode_rle(layer: &MaskLayer) -> Vec<u8> {
    runs(layer).iter().flat_map(|r| r.to_le_bytes()).collect()
}

pub fn decode_rle(bytes: &[u8], width: u32, height: u32) -> Result<MaskLayer, MaskError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(MaskError::MalformedRle(format!(
            "payload length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    let expected = u64::from(width) * u64::from(height);
    let runs: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    // checked before allocating so a hostile header cannot request a huge raster
    let total: u64 = runs.iter().map(|&r| u64::from(r)).sum();
    if total != expected {
        return Err(MaskError::MalformedRle(format!(
            "runs sum to {total}, expected {width}x{height} = {expected}"
        )));
    }
    let mut bits = Vec::with_capacity(expected as usize);
    let mut value = false;
    for run in runs {
        bits.extend(std::iter::repeat_n(value, run as usize));
        value = !value;
    }
    MaskLayer::from_bits(width, height, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layer(w: u32, h: u32, bits: &[u8]) -> MaskLayer {
        MaskLayer::from_bits(w, h, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn encodes_alternating_runs() {
        assert_eq!(
            encode_rle(&layer(2, 2, &[0, 1, 1, 0])),
            [1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]
        );
        assert_eq!(encode_rle(&layer(2, 2, &[0, 0, 0, 0])), [4, 0, 0, 0]);
        assert_eq!(encode_rle(&layer(2, 2, &[1, 1, 1, 1])), [0, 0, 0, 0, 4, 0, 0, 0]);
    }

    #[test]
    fn decodes_known_payloads() {
        assert_eq!(decode_rle(&[4, 0, 0, 0], 2, 2).unwrap(), layer(2, 2, &[0, 0, 0, 0]));
        assert_eq!(
            decode_rle(&[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0], 2, 2).unwrap(),
            layer(2, 2, &[0, 1, 1, 0])
        );
    }

    #[test]
    fn rejects_bad_sums_and_lengths() {
        assert!(matches!(decode_rle(&[3, 0, 0, 0], 2, 2), Err(MaskError::MalformedRle(_))));
        assert!(matches!(decode_rle(&[4, 0, 0], 2, 2), Err(MaskError::MalformedRle(_))));
        assert!(matches!(decode_rle(&[], 2, 2), Err(MaskError::MalformedRle(_))));
        // two maximal runs overflow u32 but not the u64 accumulator
        let huge = [0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff];
        assert!(matches!(decode_rle(&huge, 2, 2), Err(MaskError::MalformedRle(_))));
    }

    fn arb_layer() -> impl Strategy<Value = MaskLayer> {
        (1u32..=64, 1u32..=64).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), (w * h) as usize)
                .prop_map(move |bits| MaskLayer::from_bits(w, h, bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trips(l in arb_layer()) {
            let bytes = encode_rle(&l);
            prop_assert_eq!(decode_rle(&bytes, l.width(), l.height()).unwrap(), l);
        }

        #[test]
        fn runs_are_canonical(l in arb_layer()) {
            let r = runs(&l);
            prop_assert_eq!(r.iter().map(|&x| u64::from(x)).sum::<u64>(), u64::from(l.width() * l.height()));
            prop_assert!(r[1..].iter().all(|&x| x > 0));
        }
    }
}
