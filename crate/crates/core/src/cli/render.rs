use std::fmt::Write as _;

use crate::data::ClipSample;
use crate::error::{Error, Result};
use crate::model::Prediction;

/// Box stroke colors, indexed by predicted action class modulo the length.
pub const PALETTE: &[&str] = &[
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#bfef45", "#9a6324", "#800000",
];

pub fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn class_name(names: &[String], k: usize) -> String {
    names.get(k).cloned().unwrap_or_else(|| k.to_string())
}

/// Standalone SVG of a clip's boxes, one `<rect>` per actor in clip order,
/// each labeled at its top-left corner with the predicted action, and the
/// predicted activity as a caption at the top of the canvas.
pub fn render_svg(clip: &ClipSample, pred: &Prediction, action_names: &[String], activity_names: &[String]) -> Result<String> {
    if pred.action_classes.len() != clip.actors.len() {
        return Err(Error::Dimension(format!(
            "clip {}: {} action predictions for {} actors",
            clip.clip_id,
            pred.action_classes.len(),
            clip.actors.len()
        )));
    }
    let (w, h) = (clip.frame_width, clip.frame_height);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, xml_escape(&clip.clip_id));
    let _ = writeln!(
        s,
        r#"<text class="activity" x="{}" y="16" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        f64::from(w) / 2.0,
        xml_escape(&class_name(activity_names, pred.activity_class))
    );
    for (a, &k) in clip.actors.iter().zip(&pred.action_classes) {
        let b = &a.bbox;
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            b.x_min,
            b.y_min,
            b.width(),
            b.height()
        );
        let _ = writeln!(
            s,
            r#"<text class="action" x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            b.x_min,
            b.y_min,
            xml_escape(&class_name(action_names, k))
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActorInstance, BoundingBox};

    fn clip(boxes: &[(f64, f64, f64, f64)]) -> ClipSample {
        ClipSample {
            clip_id: "c<1>".into(),
            frame_width: 100,
            frame_height: 80,
            frame_count: 1,
            actors: boxes
                .iter()
                .map(|&(a, b, c, d)| ActorInstance {
                    frame_index: 0,
                    bbox: BoundingBox::new(a, b, c, d).unwrap(),
                    feature: vec![0.0],
                    action_label: None,
                })
                .collect(),
            activity_label: None,
        }
    }

    fn pred(n: usize) -> Prediction {
        Prediction {
            action_classes: vec![1; n],
            action_probs: vec![vec![0.0, 1.0]; n],
            activity_class: 0,
            activity_probs: vec![1.0],
        }
    }

    #[test]
    fn single_box_coordinates() {
        let svg = render_svg(&clip(&[(0.0, 0.0, 10.0, 20.0)]), &pred(1), &[], &["a & b".into()]).unwrap();
        assert_eq!(svg.matches("<rect").count(), 1);
        assert!(svg.contains(r#"<rect x="0" y="0" width="10" height="20""#));
        assert!(svg.contains("a &amp; b"));
        assert!(svg.contains("c&lt;1&gt;"));
        assert!(svg.contains(r#"width="100" height="80""#));
    }

    #[test]
    fn prediction_size_must_match() {
        assert!(render_svg(&clip(&[(0.0, 0.0, 1.0, 1.0)]), &pred(2), &[], &[]).is_err());
    }
}
