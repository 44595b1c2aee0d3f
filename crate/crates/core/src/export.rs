//! Dataset export: a tar archive with the images, the chosen mask version of
//! each image, binary class renders, and a manifest carrying the full
//! version history of every exported image.
//!
//! ```text
//! images/<image_id>.png
//! segmentations/<image_id>/v<NNN>_<annotator_id>.lseg
//! renders/<image_id>/<class>.png
//! manifest.json
//! ```
//!
//! Archives are deterministic: identical store state yields identical bytes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::mask::{deserialize_mask, ImageRecord};
use crate::store::{ReviewStatus, Store, StoreError, VersionEntry, VersionKind};
use crate::vision::encode_png;
use crate::workflow::{Annotator, Role};

pub const MANIFEST_FORMAT: &str = "segcrowd-export/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    /// Every image; the head version of each.
    All,
    /// Only images with a reviewed result: the latest approved or
    /// correction version.
    ReviewedOnly,
}

impl std::str::FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Selector::All),
            "reviewed-only" => Ok(Selector::ReviewedOnly),
            other => Err(format!("unknown selector {other:?} (expected all or reviewed-only)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestVersion {
    #[serde(flatten)]
    pub entry: VersionEntry,
    pub annotator_name: Option<String>,
    pub reviewer_name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestImage {
    pub image: ImageRecord,
    pub image_file: String,
    pub chosen_version: Option<u32>,
    pub chosen_file: Option<String>,
    pub renders: Vec<String>,
    pub history: Vec<ManifestVersion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub selector: Selector,
    /// Journal position the export reflects.
    pub journal_seq: u64,
    pub images: Vec<ManifestImage>,
}

fn chosen(history: &[VersionEntry], selector: Selector) -> Option<&VersionEntry> {
    match selector {
        Selector::All => history.last(),
        Selector::ReviewedOnly => history
            .iter()
            .rev()
            .find(|v| v.kind == VersionKind::Correction || v.review == ReviewStatus::Approved),
    }
}

pub fn segmentation_path(entry: &VersionEntry) -> String {
    format!(
        "segmentations/{}/v{:03}_{}.lseg",
        entry.image_id, entry.version_no, entry.annotator_id
    )
}

fn append(builder: &mut tar::Builder<impl Write>, path: &str, data: &[u8]) -> Result<(), StoreError> {
    let mut header = tar::Header::new_gnu();
    header.set_size(data.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_uid(0);
    header.set_gid(0);
    header.set_entry_type(tar::EntryType::Regular);
    builder.append_data(&mut header, path, data)?;
    Ok(())
}

/// Writes the archive for `selector` to `out` and returns its manifest.
pub fn export_dataset(
    store: &Store,
    actor: &Annotator,
    selector: Selector,
    out: impl Write,
) -> Result<Manifest, StoreError> {
    if actor.role < Role::Researcher {
        return Err(StoreError::Unauthorized("export requires the Researcher role".into()));
    }
    let (state, journal_seq) = store.snapshot_with_seq();
    let name_of = |id: &str| state.annotators.get(id).map(|a| a.display_name.clone());
    let mut builder = tar::Builder::new(out);
    let mut manifest = Manifest {
        format: MANIFEST_FORMAT.to_owned(),
        selector,
        journal_seq,
        images: Vec::new(),
    };
    for (image_id, record) in &state.images {
        let history = state.history(image_id);
        let pick = chosen(history, selector);
        if selector == Selector::ReviewedOnly && pick.is_none() {
            continue;
        }
        let image_file = format!("images/{image_id}.png");
        append(&mut builder, &image_file, &store.blobs().get_digest(image_id)?)?;
        let mut item = ManifestImage {
            image: record.clone(),
            image_file,
            chosen_version: pick.map(|v| v.version_no),
            chosen_file: None,
            renders: Vec::new(),
            history: history
                .iter()
                .map(|v| ManifestVersion {
                    entry: v.clone(),
                    annotator_name: name_of(&v.annotator_id),
                    reviewer_name: v.reviewer_id.as_deref().and_then(name_of),
                })
                .collect(),
        };
        if let Some(v) = pick {
            let bytes = store.get_blob(&v.blob)?;
            let path = segmentation_path(v);
            append(&mut builder, &path, &bytes)?;
            item.chosen_file = Some(path);
            let mask = deserialize_mask(&bytes)?;
            for (class, layer) in mask.layers() {
                let samples: Vec<u8> = layer.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
                let png = encode_png(layer.width(), layer.height(), 1, &samples)
                    .map_err(|e| StoreError::Io(e.to_string()))?;
                let path = format!("renders/{image_id}/{class}.png");
                append(&mut builder, &path, &png)?;
                item.renders.push(path);
            }
        }
        manifest.images.push(item);
    }
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| StoreError::Io(e.to_string()))?;
    append(&mut builder, "manifest.json", &json)?;
    builder.into_inner()?.flush()?;
    Ok(manifest)
}
