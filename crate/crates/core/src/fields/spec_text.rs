//! Text format for phantom and sound-speed bump lists.
//!
//! A spec is a sequence of `[bump]` sections, each holding `key = value`
//! lines. `#` starts a comment, blank lines are ignored, and every key
//! must be recognized — typos fail loudly instead of silently producing
//! a different phantom.
//!
//! ```text
//! [bump]
//! kind = gaussian       # gaussian | smooth_bump | disk
//! center = 0.43, 0.57   # one value per axis
//! width = 0.07          # gaussian only; smooth_bump/disk take radius
//! amp = 1.0
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{PhantomSpec, Primitive};

fn bad(line_no: usize, msg: impl AsRef<str>) -> Error {
    Error::InvalidSpec(format!("line {}: {}", line_no, msg.as_ref()))
}

fn parse_center(raw: &str, dim: usize, line_no: usize) -> Result<[f64; 2]> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != dim {
        return Err(bad(
            line_no,
            format!("center needs {dim} component(s), got {}", parts.len()),
        ));
    }
    let mut center = [0.0f64; 2];
    for (a, part) in parts.iter().enumerate() {
        center[a] = part
            .parse::<f64>()
            .map_err(|_| bad(line_no, format!("bad center component '{part}'")))?;
    }
    Ok(center)
}

fn parse_number(raw: &str, key: &str, line_no: usize) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| bad(line_no, format!("bad {key} value '{raw}'")))
}

#[derive(Default)]
struct Section {
    start_line: usize,
    kind: Option<(String, usize)>,
    center: Option<([f64; 2], usize)>,
    width: Option<(f64, usize)>,
    radius: Option<(f64, usize)>,
    amp: Option<(f64, usize)>,
}

impl Section {
    fn finish(self, dim: usize) -> Result<Primitive> {
        let at = self.start_line;
        let require = |name: &str| bad(at, format!("[bump] section missing '{name}'"));
        let (kind, _) = self.kind.ok_or_else(|| require("kind"))?;
        let (center, _) = self.center.ok_or_else(|| require("center"))?;
        let (amp, _) = self.amp.ok_or_else(|| require("amp"))?;
        let forbid = |field: &Option<(f64, usize)>, name: &str| -> Result<()> {
            if let Some((_, line)) = field {
                return Err(bad(*line, format!("'{name}' is not valid for kind {kind}")));
            }
            Ok(())
        };
        let prim = match kind.as_str() {
            "gaussian" => {
                forbid(&self.radius, "radius")?;
                let (width, _) = self.width.ok_or_else(|| require("width"))?;
                Primitive::Gaussian { center, width, amp }
            }
            "smooth_bump" => {
                forbid(&self.width, "width")?;
                let (radius, _) = self.radius.ok_or_else(|| require("radius"))?;
                Primitive::SmoothBump { center, radius, amp }
            }
            "disk" => {
                forbid(&self.width, "width")?;
                let (radius, _) = self.radius.ok_or_else(|| require("radius"))?;
                Primitive::Disk { center, radius, amp }
            }
            other => return Err(bad(at, format!("unknown kind '{other}'"))),
        };
        prim.validate(dim).map_err(|e| bad(at, e.to_string()))?;
        Ok(prim)
    }
}

/// Parses a bump-list spec for fields over a `dim`-dimensional domain.
pub fn parse_bump_spec(text: &str, dim: usize) -> Result<PhantomSpec> {
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidSpec(format!("unsupported dimension {dim}")));
    }
    let mut primitives = Vec::new();
    let mut current: Option<Section> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(bad(line_no, "unterminated section header"));
            }
            let name = &line[1..line.len() - 1];
            if name != "bump" {
                return Err(bad(line_no, format!("unknown section [{name}]")));
            }
            if let Some(done) = current.take() {
                primitives.push(done.finish(dim)?);
            }
            current = Some(Section { start_line: line_no, ..Section::default() });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| bad(line_no, "expected 'key = value'"))?;
        if value.is_empty() {
            return Err(bad(line_no, format!("empty value for '{key}'")));
        }
        let section = current
            .as_mut()
            .ok_or_else(|| bad(line_no, "key outside any [bump] section"))?;
        let dup = |line: usize| bad(line_no, format!("duplicate '{key}' (first on line {line})"));
        match key {
            "kind" => match &section.kind {
                Some((_, line)) => return Err(dup(*line)),
                None => section.kind = Some((value.to_string(), line_no)),
            },
            "center" => match &section.center {
                Some((_, line)) => return Err(dup(*line)),
                None => section.center = Some((parse_center(value, dim, line_no)?, line_no)),
            },
            "width" => match &section.width {
                Some((_, line)) => return Err(dup(*line)),
                None => section.width = Some((parse_number(value, key, line_no)?, line_no)),
            },
            "radius" => match &section.radius {
                Some((_, line)) => return Err(dup(*line)),
                None => section.radius = Some((parse_number(value, key, line_no)?, line_no)),
            },
            "amp" => match &section.amp {
                Some((_, line)) => return Err(dup(*line)),
                None => section.amp = Some((parse_number(value, key, line_no)?, line_no)),
            },
            other => return Err(bad(line_no, format!("unknown key '{other}'"))),
        }
    }
    if let Some(done) = current.take() {
        primitives.push(done.finish(dim)?);
    }
    Ok(PhantomSpec::new(primitives))
}

pub fn parse_bump_spec_file(path: impl AsRef<Path>, dim: usize) -> Result<PhantomSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_bump_spec(&text, dim).map_err(|e| match e {
        Error::InvalidSpec(msg) => Error::InvalidSpec(format!("{}: {}", path.display(), msg)),
        other => other,
    })
}
