//! Human-in-the-loop stage: representative images, expert verdicts, and
//! species-specific MaxN.

mod annotate;
mod export;
mod maxn;

pub use annotate::{
    collect_filesystem_annotations, parse_image_name, reconcile, Annotation, FsAnnotations, ImageName, Reconciled,
    Verdict,
};
pub use export::{draw_box, export_track_images, track_image_path, DirFrameStore, ExportReport, FrameStore};
pub use maxn::{compute_ssmaxn, species_of, MaxNReport, MaxNRow, MAXN_HEADER};
