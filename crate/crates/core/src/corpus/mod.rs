//! Loading, validating and writing the toolkit's on-disk data.
//!
//! | File | Layout |
//! |------|--------|
//! | run | `<query> Q0 <video> <rank> <score> <tag>` |
//! | qrels | `<query> 0 <video> <relevance>` |
//! | features | JSON lines `{"id", "kind", "vector"}` |
//! | teacher | JSON lines `{"query_id", "video_id", "label", "margin", "p_yes"}` |
//! | captions | JSON lines `{"video_id", "token_logprobs"}` |
//! | scores | `<query> <video> <score>` (run lines also accepted) |
//!
//! Run scores are treated as higher-is-better.

mod caption;
mod features;
pub(crate) mod jsonl;
mod qrels;
mod run;
mod scores;
mod teacher;

pub use caption::{load_captions, parse_captions, CaptionSample};
pub use features::{load_features, parse_features, write_features, FeatureKind, FeatureRecord, FeatureStore};
pub use qrels::{format_qrels, load_qrels, parse_qrels, write_qrels, Qrels, QrelsWarning};
pub use run::{format_run, load_run, parse_run, write_run, RankedRun, RunEntry};
pub use scores::{format_scores, load_scores, parse_scores, run_scores, write_scores, PairScore};
pub use teacher::{load_teacher, parse_teacher, write_teacher, TeacherIndex, TeacherJudgment};
