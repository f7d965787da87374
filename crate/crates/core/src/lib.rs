pub mod eval;
pub mod formats;
pub mod geometry;
pub mod hsse;
pub mod jsonl;
pub mod lse;
pub mod nncore;
pub mod pointcloud;
