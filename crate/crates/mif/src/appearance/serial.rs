//! Line-delimited primitive records.
//!
//! One JSON object per line with fixed field order
//! (id, position, alpha, g, c, feature, object_id) so that identical stores
//! serialize byte-identically.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{AppearanceError, GaussianPrimitive};

#[derive(Serialize, Deserialize)]
struct Record {
    id: u64,
    position: [f64; 3],
    alpha: f64,
    g: f64,
    c: f64,
    feature: Vec<f64>,
    object_id: Option<u64>,
}

pub fn save_primitives<W: Write>(
    out: &mut W,
    primitives: &[GaussianPrimitive],
) -> Result<(), AppearanceError> {
    for p in primitives {
        let rec = Record {
            id: p.id,
            position: [p.position.x, p.position.y, p.position.z],
            alpha: p.opacity,
            g: p.instability,
            c: p.confidence,
            feature: p.feature.clone(),
            object_id: p.object_id,
        };
        serde_json::to_writer(&mut *out, &rec)
            .map_err(|e| AppearanceError::Parse { line: 0, msg: e.to_string() })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_primitives<R: Read>(input: R) -> Result<Vec<GaussianPrimitive>, AppearanceError> {
    let reader = BufReader::new(input);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| AppearanceError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(GaussianPrimitive {
            id: rec.id,
            position: Vector3::new(rec.position[0], rec.position[1], rec.position[2]),
            opacity: rec.alpha,
            feature: rec.feature,
            instability: rec.g,
            confidence: rec.c,
            object_id: rec.object_id,
        });
    }
    Ok(out)
}
