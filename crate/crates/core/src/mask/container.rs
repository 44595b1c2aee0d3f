//! The `.lseg` container.
//!
//! ```text
//! "LSEG" | version u16 | width u32 | height u32 | layer count u16 |
//!   per layer: name len u16 | name (UTF-8) | payload len u32 | RLE payload
//! ```
//! All integers little-endian. Layers appear in canonical order.

use super::layer::is_valid_class_name;
use super::{decode_rle, encode_rle, MaskError, SegmentationMask};

pub const MAGIC: &[u8; 4] = b"LSEG";
pub const FORMAT_VERSION: u16 = 1;
/// Upper bound on width x height accepted when decoding.
pub const MAX_MASK_PIXELS: u64 = 1 << 28;

pub fn serialize_mask(mask: &SegmentationMask) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&mask.width().to_le_bytes());
    out.extend_from_slice(&mask.height().to_le_bytes());
    out.extend_from_slice(&(mask.layer_count() as u16).to_le_bytes());
    for (name, layer) in mask.layers() {
        let payload = encode_rle(layer);
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MaskError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            MaskError::MalformedContainer(format!("truncated while reading {what}"))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, MaskError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, MaskError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn deserialize_mask(bytes: &[u8]) -> Result<SegmentationMask, MaskError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(MaskError::MalformedContainer("bad magic".into()));
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(MaskError::MalformedContainer(format!("unsupported version {version}")));
    }
    let width = r.u32("width")?;
    let height = r.u32("height")?;
    if width == 0 || height == 0 || u64::from(width) * u64::from(height) > MAX_MASK_PIXELS {
        return Err(MaskError::MalformedContainer(format!(
            "unsupported dimensions {width}x{height}"
        )));
    }
    let count = r.u16("layer count")?;
    let mut mask = SegmentationMask::new(width, height)?;
    for index in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "layer name")?)
            .map_err(|_| MaskError::MalformedContainer("layer name is not UTF-8".into()))?;
        if !is_valid_class_name(name) {
            return Err(MaskError::MalformedContainer(format!("invalid layer name {name:?}")));
        }
        if mask.layer(name).is_some() {
            return Err(MaskError::MalformedContainer(format!("duplicate layer {name:?}")));
        }
        let payload_len = r.u32("payload length")? as usize;
        let payload = r.take(payload_len, "layer payload")?;
        let layer = decode_rle(payload, width, height)?;
        // stream position becomes the display order so re-serializing keeps the byte order
        mask.insert_named(name, index, layer)?;
    }
    if r.pos != bytes.len() {
        return Err(MaskError::MalformedContainer(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(mask)
}
