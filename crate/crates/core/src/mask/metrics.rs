//! Inter-annotator agreement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MaskError, MaskLayer, SegmentationMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAgreement {
    pub dice: f64,
    pub iou: f64,
    pub area_a: u64,
    pub area_b: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_class: BTreeMap<String, ClassAgreement>,
    /// Unweighted mean of the per-class dice values.
    pub macro_dice: f64,
}

struct Overlap {
    area_a: u64,
    area_b: u64,
    intersection: u64,
}

fn overlap(a: &MaskLayer, b: &MaskLayer) -> Result<Overlap, MaskError> {
    if !a.same_shape(b) {
        return Err(MaskError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut o = Overlap {
        area_a: 0,
        area_b: 0,
        intersection: 0,
    };
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        o.area_a += u64::from(x);
        o.area_b += u64::from(y);
        o.intersection += u64::from(x && y);
    }
    Ok(o)
}

impl Overlap {
    fn dice(&self) -> f64 {
        let denom = self.area_a + self.area_b;
        if denom == 0 {
            return 1.0;
        }
        (2 * self.intersection) as f64 / denom as f64
    }

    fn iou(&self) -> f64 {
        let union = self.area_a + self.area_b - self.intersection;
        if union == 0 {
            return 1.0;
        }
        self.intersection as f64 / union as f64
    }
}

/// `2|A∩B| / (|A|+|B|)`, and 1.0 when both layers are empty.
pub fn dice(a: &MaskLayer, b: &MaskLayer) -> Result<f64, MaskError> {
    Ok(overlap(a, b)?.dice())
}

/// `|A∩B| / |A∪B|`, and 1.0 when both layers are empty.
pub fn iou(a: &MaskLayer, b: &MaskLayer) -> Result<f64, MaskError> {
    Ok(overlap(a, b)?.iou())
}

/// Per-class agreement between two masks with the same layer names.
///
/// Two masks without any layers agree trivially (macro dice 1.0).
pub fn compare_masks(a: &SegmentationMask, b: &SegmentationMask) -> Result<AgreementReport, MaskError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MaskError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut names_a = a.layer_names();
    let mut names_b = b.layer_names();
    names_a.sort_unstable();
    names_b.sort_unstable();
    if names_a != names_b {
        return Err(MaskError::LayerSetMismatch(format!("{names_a:?} vs {names_b:?}")));
    }
    let mut per_class = BTreeMap::new();
    for (name, la) in a.layers() {
        let lb = b.layer(name).expect("layer sets compared above");
        let o = overlap(la, lb)?;
        per_class.insert(
            name.to_owned(),
            ClassAgreement {
                dice: o.dice(),
                iou: o.iou(),
                area_a: o.area_a,
                area_b: o.area_b,
            },
        );
    }
    let macro_dice = if per_class.is_empty() {
        1.0
    } else {
        per_class.values().map(|c| c.dice).sum::<f64>() / per_class.len() as f64
    };
    Ok(AgreementReport { per_class, macro_dice })
}
