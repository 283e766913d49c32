use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl;
use crate::error::{Error, Result};

/// Per-token log-probabilities of a teacher caption under the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionSample {
    pub video_id: String,
    pub token_logprobs: Vec<f64>,
}

impl CaptionSample {
    pub fn validate(&self) -> Result<()> {
        if self.token_logprobs.is_empty() {
            return Err(Error::Validation(format!("caption for `{}` has no tokens", self.video_id)));
        }
        for (t, &lp) in self.token_logprobs.iter().enumerate() {
            if lp.is_nan() || lp > 0.0 {
                return Err(Error::Validation(format!(
                    "caption for `{}`: token {} has log-probability {lp} > 0",
                    self.video_id,
                    t + 1
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_captions(text: &str, source_name: &str) -> Result<Vec<CaptionSample>> {
    check(jsonl::parse_lines(text, source_name)?, source_name)
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionSample>> {
    let path = path.as_ref();
    check(jsonl::read_lines(path)?, &path.display().to_string())
}

fn check(records: Vec<(usize, CaptionSample)>, source_name: &str) -> Result<Vec<CaptionSample>> {
    records
        .into_iter()
        .map(|(line, c)| {
            c.validate().map_err(|e| Error::parse(source_name, line, e.to_string()))?;
            Ok(c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_positive_logprob() {
        let err = parse_captions(r#"{"video_id":"v","token_logprobs":[-0.1,0.2]}"#, "c").unwrap_err();
        assert!(err.to_string().contains("token 2"), "{err}");
    }

    #[test]
    fn rejects_empty() {
        assert!(parse_captions(r#"{"video_id":"v","token_logprobs":[]}"#, "c").is_err());
    }

    #[test]
    fn accepts_valid() {
        let c = parse_captions(r#"{"video_id":"v","token_logprobs":[0.0,-1.5]}"#, "c").unwrap();
        assert_eq!(c[0].token_logprobs.len(), 2);
    }
}
