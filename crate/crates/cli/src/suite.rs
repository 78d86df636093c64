//! Line-oriented prompt-suite format.
//!
//! One record per line: `id|category|objects|relation`, where `objects`
//! is a comma-separated list of `kind:color:count` triplets (`-` for an
//! unspecified color) and `relation` is a relation name or `none`.
//!
//! ```text
//! 17|color_attr|cat:red:1,dog:blue:1|none
//! 42|position|tree:-:1,ball:-:1|left_of
//! ```

use shortcot_core::env::{Category, Color, ObjectKind, ObjectSpec, PromptSpec, Relation};

use crate::error::{CliError, Result};

pub fn suite_to_string(suite: &[PromptSpec]) -> String {
    let mut out = String::new();
    for spec in suite {
        let objects = spec
            .objects
            .iter()
            .map(|o| {
                format!(
                    "{}:{}:{}",
                    o.kind.name(),
                    o.color.map(|c| c.name()).unwrap_or("-"),
                    o.count
                )
            })
            .collect::<Vec<_>>()
            .join(",");
        let relation = spec.relation.map(|r| r.name()).unwrap_or("none");
        out.push_str(&format!(
            "{}|{}|{}|{}\n",
            spec.id,
            spec.category.name(),
            objects,
            relation
        ));
    }
    out
}

pub fn parse_suite(text: &str) -> Result<Vec<PromptSpec>> {
    let mut suite = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| CliError::Data(format!("suite line {}: {msg}", lineno + 1));
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", fields.len())));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad id {:?}", fields[0])))?;
        let category = Category::from_name(fields[1]).map_err(|e| err(e.to_string()))?;
        let mut objects = Vec::new();
        for triplet in fields[2].split(',') {
            let parts: Vec<&str> = triplet.split(':').collect();
            if parts.len() != 3 {
                return Err(err(format!("bad object triplet {triplet:?}")));
            }
            let kind = ObjectKind::from_name(parts[0]).map_err(|e| err(e.to_string()))?;
            let color = if parts[1] == "-" {
                None
            } else {
                Some(Color::from_name(parts[1]).map_err(|e| err(e.to_string()))?)
            };
            let count: u8 = parts[2]
                .parse()
                .map_err(|_| err(format!("bad count {:?}", parts[2])))?;
            objects.push(ObjectSpec { kind, color, count });
        }
        let relation = if fields[3] == "none" {
            None
        } else {
            Some(Relation::from_name(fields[3]).map_err(|e| err(e.to_string()))?)
        };
        let spec = PromptSpec {
            id,
            category,
            objects,
            relation,
        };
        spec.validate().map_err(|e| err(e.to_string()))?;
        suite.push(spec);
    }
    Ok(suite)
}
