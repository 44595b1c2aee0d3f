use serde::{Deserialize, Serialize};

use super::MaskError;

/// A segmentation class as configured for a project.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelClass {
    pub name: String,
    pub display_order: u16,
    pub default_opacity: f64,
}

impl LabelClass {
    pub fn new(name: &str, display_order: u16, default_opacity: f64) -> Result<Self, MaskError> {
        if !is_valid_class_name(name) {
            return Err(MaskError::InvalidClassName(name.to_owned()));
        }
        Ok(Self {
            name: name.to_owned(),
            display_order,
            default_opacity: default_opacity.clamp(0.0, 1.0),
        })
    }
}

/// `[a-z][a-z0-9_]*`
pub(crate) fn is_valid_class_name(name: &str) -> bool {
    let mut bytes = name.bytes();
    match bytes.next() {
        Some(b'a'..=b'z') => bytes.all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_')),
        _ => false,
    }
}

/// Row-major binary raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskLayer {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl MaskLayer {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, MaskError> {
        if bits.len() != width as usize * height as usize {
            return Err(MaskError::DimensionMismatch(format!(
                "{} bits for a {width}x{height} layer",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits[i] = value;
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn same_shape(&self, other: &MaskLayer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Sets every pixel that is set in `other`.
    pub fn union_with(&mut self, other: &MaskLayer) -> Result<(), MaskError> {
        if !self.same_shape(other) {
            return Err(MaskError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "pixel ({x},{y}) out of range");
        y as usize * self.width as usize + x as usize
    }
}

#[derive(Clone, Debug)]
struct NamedLayer {
    name: String,
    order: u16,
    layer: MaskLayer,
}

/// Named binary layers over one raster. Layers may overlap.
///
/// Layers are kept in canonical order: ascending display order, ties broken
/// by name. Equality compares dimensions, names and bits in that order; the
/// display order itself is not part of the logical content.
#[derive(Clone, Debug)]
pub struct SegmentationMask {
    width: u32,
    height: u32,
    layers: Vec<NamedLayer>,
}

impl PartialEq for SegmentationMask {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.name == b.name && a.layer == b.layer)
    }
}

impl Eq for SegmentationMask {}

impl SegmentationMask {
    pub fn new(width: u32, height: u32) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::DimensionMismatch(format!(
                "mask dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            layers: Vec::new(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Inserts or replaces the layer for `class`.
    pub fn insert(&mut self, class: &LabelClass, layer: MaskLayer) -> Result<(), MaskError> {
        self.insert_named(&class.name, class.display_order, layer)
    }

    pub fn insert_named(&mut self, name: &str, order: u16, layer: MaskLayer) -> Result<(), MaskError> {
        if !is_valid_class_name(name) {
            return Err(MaskError::InvalidClassName(name.to_owned()));
        }
        if layer.width != self.width || layer.height != self.height {
            return Err(MaskError::DimensionMismatch(format!(
                "layer {name} is {}x{}, mask is {}x{}",
                layer.width, layer.height, self.width, self.height
            )));
        }
        self.layers.retain(|l| l.name != name);
        let pos = self
            .layers
            .iter()
            .position(|l| (l.order, l.name.as_str()) > (order, name))
            .unwrap_or(self.layers.len());
        self.layers.insert(
            pos,
            NamedLayer {
                name: name.to_owned(),
                order,
                layer,
            },
        );
        Ok(())
    }

    pub fn layer(&self, name: &str) -> Option<&MaskLayer> {
        self.layers.iter().find(|l| l.name == name).map(|l| &l.layer)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut MaskLayer> {
        self.layers.iter_mut().find(|l| l.name == name).map(|l| &mut l.layer)
    }

    /// Layers in canonical order.
    pub fn layers(&self) -> impl Iterator<Item = (&str, &MaskLayer)> {
        self.layers.iter().map(|l| (l.name.as_str(), &l.layer))
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }
}
