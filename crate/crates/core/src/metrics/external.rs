//! Readers for interleaved corpora in other layouts.
//!
//! `matched-list`: `{"id"?, "text_list": [..], "image_info": [{"image_name", "matched_text_index"}]}`;
//! each image goes right before the text it is matched to.
//!
//! `parallel-list`: `{"id"?, "texts": [..|null], "images": [..|null]}`; position
//! `i` holds either a text or an image.
//!
//! External text becomes `asr_text` elements.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::corpus::{sample_text_tokens, InterleavedElement, InterleavedSample, Tokenizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalFormat {
    MatchedList,
    ParallelList,
}

impl FromStr for ExternalFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched-list" | "matched_list" => Ok(ExternalFormat::MatchedList),
            "parallel-list" | "parallel_list" => Ok(ExternalFormat::ParallelList),
            other => Err(Error::InvalidArgument(format!(
                "unknown external format `{other}` (expected matched-list or parallel-list)"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct ImageInfo {
    image_name: String,
    matched_text_index: usize,
}

#[derive(Deserialize)]
struct MatchedRecord {
    id: Option<String>,
    text_list: Vec<String>,
    image_info: Vec<ImageInfo>,
}

#[derive(Deserialize)]
struct ParallelRecord {
    id: Option<String>,
    texts: Vec<Option<String>>,
    images: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adapted {
    pub samples: Vec<InterleavedSample>,
    pub errors: Vec<RecordError>,
}

fn matched(rec: MatchedRecord) -> std::result::Result<Vec<InterleavedElement>, String> {
    let mut before: Vec<Vec<String>> = vec![Vec::new(); rec.text_list.len()];
    for img in rec.image_info {
        before
            .get_mut(img.matched_text_index)
            .ok_or_else(|| {
                format!(
                    "image `{}` matched to text {} of {}",
                    img.image_name,
                    img.matched_text_index,
                    rec.text_list.len()
                )
            })?
            .push(img.image_name);
    }
    let mut out = Vec::new();
    for (text, images) in rec.text_list.into_iter().zip(before) {
        out.extend(images.into_iter().map(|image_ref| InterleavedElement::Image {
            image_ref,
            timestamp_s: None,
        }));
        if !text.trim().is_empty() {
            out.push(InterleavedElement::asr(text));
        }
    }
    Ok(out)
}

fn parallel(rec: ParallelRecord) -> std::result::Result<Vec<InterleavedElement>, String> {
    if rec.texts.len() != rec.images.len() {
        return Err(format!("{} texts but {} images", rec.texts.len(), rec.images.len()));
    }
    let mut out = Vec::new();
    for (i, (text, image)) in rec.texts.into_iter().zip(rec.images).enumerate() {
        match (text, image) {
            (Some(_), Some(_)) => return Err(format!("position {i} holds both a text and an image")),
            (Some(t), None) if !t.trim().is_empty() => out.push(InterleavedElement::asr(t)),
            (None, Some(image_ref)) => out.push(InterleavedElement::Image {
                image_ref,
                timestamp_s: None,
            }),
            _ => {}
        }
    }
    Ok(out)
}

/// Normalizes every line of `path`; bad records are reported by line number
/// and skipped.
pub fn adapt_external(path: &Path, format: ExternalFormat, tokenizer: &dyn Tokenizer) -> Result<Adapted> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Adapted::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match format {
            ExternalFormat::MatchedList => serde_json::from_str::<MatchedRecord>(&line)
                .map_err(|e| e.to_string())
                .and_then(|r| Ok((r.id.clone(), matched(r)?))),
            ExternalFormat::ParallelList => serde_json::from_str::<ParallelRecord>(&line)
                .map_err(|e| e.to_string())
                .and_then(|r| Ok((r.id.clone(), parallel(r)?))),
        };
        match parsed {
            Ok((id, elements)) => {
                let sample_id = id.unwrap_or_else(|| format!("line{line_no:06}"));
                out.samples.push(InterleavedSample {
                    source_video_ids: vec![sample_id.clone()],
                    sample_id,
                    n_images: elements.iter().filter(|e| e.is_image()).count(),
                    n_text_tokens: sample_text_tokens(&elements, tokenizer),
                    elements,
                    oversized: false,
                });
            }
            Err(message) => out.errors.push(RecordError { line: line_no, message }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WhitespaceTokenizer;

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn matched_list_places_images_before_their_text() {
        let f = write(&[
            r#"{"id":"d1","text_list":["first para","second para"],"image_info":[{"image_name":"b.jpg","matched_text_index":1},{"image_name":"a.jpg","matched_text_index":0}]}"#,
        ]);
        let a = adapt_external(f.path(), ExternalFormat::MatchedList, &WhitespaceTokenizer).unwrap();
        assert!(a.errors.is_empty());
        let s = &a.samples[0];
        assert_eq!(s.image_refs(), ["a.jpg", "b.jpg"]);
        assert!(s.elements[0].is_image());
        assert_eq!(s.elements[1].text(), Some("first para"));
        assert_eq!((s.n_images, s.n_text_tokens), (2, 4));
    }

    #[test]
    fn parallel_list_with_nulls() {
        let f = write(&[r#"{"texts":["intro",null,"outro"],"images":[null,"x.png",null]}"#]);
        let a = adapt_external(f.path(), ExternalFormat::ParallelList, &WhitespaceTokenizer).unwrap();
        let s = &a.samples[0];
        assert_eq!(s.sample_id, "line000001");
        assert_eq!(s.elements.len(), 3);
        assert!(s.elements[1].is_image());
    }

    #[test]
    fn malformed_records_report_line_numbers() {
        let f = write(&[
            r#"{"texts":["a"],"images":[null]}"#,
            "not json",
            r#"{"texts":["a","b"],"images":[null]}"#,
        ]);
        let a = adapt_external(f.path(), ExternalFormat::ParallelList, &WhitespaceTokenizer).unwrap();
        assert_eq!(a.samples.len(), 1);
        let lines: Vec<_> = a.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, [2, 3]);
    }

    #[test]
    fn unknown_format_is_argument_error() {
        assert!(matches!("jsonl".parse::<ExternalFormat>(), Err(Error::InvalidArgument(_))));
    }
}
