//! Hamming-space primitives: the clamp and refinement transforms, sign
//! binarization, bit packing, popcount similarity and top-k scanning.

mod codes;
mod export;
mod topk;
mod transforms;

pub use codes::{
    binarize, hamming_similarity, similarity_unchecked, words_for, CodeMatrix, PackedCodes,
    PackedView,
};
pub use export::{CodeFile, MAGIC, VERSION};
pub use topk::{top_k_scan, TopK};
pub(crate) use topk::scan_into;
pub use transforms::{clamp, clamp_all, clamp_slope, refine, refine_all, refine_slope};
