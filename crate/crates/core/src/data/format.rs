//! Line-oriented clip annotation format.
//!
//! ```text
//! HEADER d A C
//! CLIP clip_id frame_width frame_height T activity_label
//! ACTOR frame_index x_min y_min x_max y_max action_label f_1 ... f_d
//! ```
//!
//! Labels may be `-` for unlabeled. Blank lines and lines starting with `#`
//! are ignored.

use std::fmt::Write as _;
use std::str::FromStr;

use super::types::{ActorInstance, BoundingBox, ClipSample, Dataset};
use super::validate::validate_dataset;
use crate::error::{Error, Result};

struct Line<'a> {
    number: usize,
    tokens: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn malformed(&self, msg: impl Into<String>) -> Error {
        Error::Malformed { line: self.number, msg: msg.into() }
    }

    fn expect_len(&self, min: usize, what: &str) -> Result<()> {
        if self.tokens.len() < min {
            return Err(self.malformed(format!(
                "{what} needs at least {} fields, found {}",
                min - 1,
                self.tokens.len() - 1
            )));
        }
        Ok(())
    }

    fn int<T: FromStr>(&self, idx: usize, what: &str) -> Result<T> {
        self.tokens[idx]
            .parse()
            .map_err(|_| self.malformed(format!("{what}: expected an integer, found `{}`", self.tokens[idx])))
    }

    fn real(&self, idx: usize, what: &str) -> Result<f64> {
        let token = self.tokens[idx];
        let v: f64 = token
            .parse()
            .map_err(|_| self.malformed(format!("{what}: expected a number, found `{token}`")))?;
        if !v.is_finite() {
            return Err(Error::NonFinite { line: self.number, token: token.to_owned() });
        }
        Ok(v)
    }

    fn label(&self, idx: usize, what: &'static str, count: usize) -> Result<Option<usize>> {
        if self.tokens[idx] == "-" {
            return Ok(None);
        }
        let label: usize = self.int(idx, what)?;
        if label >= count {
            return Err(Error::LabelOutOfRange { line: self.number, what, label, count });
        }
        Ok(Some(label))
    }
}

/// Parses a clip file. The result passes [`validate_dataset`].
pub fn parse_clip_file(bytes: &[u8]) -> Result<Dataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::Malformed { line, msg: "invalid UTF-8".into() }
    })?;

    let mut dataset: Option<Dataset> = None;
    let mut clip_lines: Vec<usize> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let line = Line { number: idx + 1, tokens: trimmed.split_whitespace().collect() };
        match line.tokens[0] {
            "HEADER" => {
                if dataset.is_some() {
                    return Err(line.malformed("duplicate HEADER"));
                }
                if line.tokens.len() != 4 {
                    return Err(line.malformed("HEADER takes exactly d A C"));
                }
                let d: usize = line.int(1, "d")?;
                let a: usize = line.int(2, "A")?;
                let c: usize = line.int(3, "C")?;
                if d == 0 || a == 0 || c == 0 {
                    return Err(line.malformed("d, A and C must be positive"));
                }
                dataset = Some(Dataset::new(d, a, c));
            }
            "CLIP" => {
                let ds = dataset.as_mut().ok_or_else(|| line.malformed("CLIP before HEADER"))?;
                if line.tokens.len() != 6 {
                    return Err(line.malformed("CLIP takes clip_id frame_width frame_height T activity_label"));
                }
                let frame_width: u32 = line.int(2, "frame_width")?;
                let frame_height: u32 = line.int(3, "frame_height")?;
                let frame_count: usize = line.int(4, "T")?;
                if frame_width == 0 || frame_height == 0 || frame_count == 0 {
                    return Err(line.malformed("frame size and T must be positive"));
                }
                let activity_label = line.label(5, "activity", ds.num_activities())?;
                ds.clips.push(ClipSample {
                    clip_id: line.tokens[1].to_owned(),
                    frame_width,
                    frame_height,
                    frame_count,
                    actors: Vec::new(),
                    activity_label,
                });
                clip_lines.push(line.number);
            }
            "ACTOR" => {
                let ds = dataset.as_mut().ok_or_else(|| line.malformed("ACTOR before HEADER"))?;
                let (d, num_actions) = (ds.feature_dim, ds.num_actions());
                let clip = ds.clips.last_mut().ok_or_else(|| line.malformed("ACTOR before any CLIP"))?;
                line.expect_len(8, "ACTOR")?;
                let found = line.tokens.len() - 7;
                if found != d {
                    return Err(Error::FeatureLength { line: line.number, expected: d, found });
                }
                let frame_index: usize = line.int(1, "frame_index")?;
                if frame_index >= clip.frame_count {
                    return Err(line.malformed(format!(
                        "frame_index {frame_index} not below T={}",
                        clip.frame_count
                    )));
                }
                let (x_min, y_min, x_max, y_max) = (
                    line.real(2, "x_min")?,
                    line.real(3, "y_min")?,
                    line.real(4, "x_max")?,
                    line.real(5, "y_max")?,
                );
                let bbox = BoundingBox::new(x_min, y_min, x_max, y_max).map_err(|_| Error::InvalidBox {
                    line: line.number,
                    x_min,
                    y_min,
                    x_max,
                    y_max,
                })?;
                let action_label = line.label(6, "action", num_actions)?;
                let feature = (7..line.tokens.len())
                    .map(|i| line.real(i, "feature"))
                    .collect::<Result<Vec<_>>>()?;
                clip.actors.push(ActorInstance { frame_index, bbox, feature, action_label });
            }
            other => return Err(line.malformed(format!("unknown record `{other}`"))),
        }
    }

    let ds = dataset.ok_or(Error::Malformed { line: 1, msg: "missing HEADER".into() })?;
    for (clip, &line) in ds.clips.iter().zip(&clip_lines) {
        if clip.actors.is_empty() {
            return Err(Error::Malformed { line, msg: format!("clip {} has no actors", clip.clip_id) });
        }
    }
    let report = validate_dataset(&ds);
    if let Some(v) = report.violations.first() {
        return Err(Error::Invalid(v.to_string()));
    }
    Ok(ds)
}

fn label_token(label: Option<usize>) -> String {
    label.map_or_else(|| "-".to_owned(), |l| l.to_string())
}

/// Writes a dataset in the clip file format. Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn serialize_dataset(ds: &Dataset) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "HEADER {} {} {}", ds.feature_dim, ds.num_actions(), ds.num_activities()).unwrap();
    for clip in &ds.clips {
        if clip.clip_id.is_empty() || clip.clip_id.chars().any(char::is_whitespace) || clip.clip_id.starts_with('#') {
            return Err(Error::Invalid(format!("clip id `{}` cannot be written", clip.clip_id)));
        }
        writeln!(
            out,
            "CLIP {} {} {} {} {}",
            clip.clip_id,
            clip.frame_width,
            clip.frame_height,
            clip.frame_count,
            label_token(clip.activity_label)
        )
        .unwrap();
        for a in &clip.actors {
            write!(
                out,
                "ACTOR {} {} {} {} {} {}",
                a.frame_index,
                a.bbox.x_min,
                a.bbox.y_min,
                a.bbox.x_max,
                a.bbox.y_max,
                label_token(a.action_label)
            )
            .unwrap();
            for v in &a.feature {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
    }
    Ok(out)
}
