//! Event files: a `#` preamble, the header `plane,u1,u2,weight`, then one
//! record per line with 17 significant digits.

use std::io::{BufRead, Write};

use epr_young::sampler::{Coordinates, EventBatch, EventRecord, FarFieldGeometry, Plane};

use crate::error::CliError;

pub const HEADER: &str = "plane,u1,u2,weight";

/// Provenance written above every CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Preamble {
    pub seed: u64,
    pub config_sha: String,
    pub units: String,
}

impl Preamble {
    pub fn line(&self) -> String {
        format!("# seed={}, config_sha={}, units={}", self.seed, self.config_sha, self.units)
    }
}

pub fn write_events(out: &mut impl Write, pre: &Preamble, batch: &EventBatch) -> std::io::Result<()> {
    writeln!(out, "{}", pre.line())?;
    if let Coordinates::Screen(geo) = batch.coordinates {
        match geo {
            Some(g) => writeln!(out, "# far_coordinates=screen, mass={:e}, t2={:e}", g.mass, g.t2)?,
            None => writeln!(out, "# far_coordinates=screen")?,
        }
    }
    writeln!(out, "{HEADER}")?;
    for e in &batch.events {
        writeln!(out, "{},{:.16e},{:.16e},{:.16e}", e.plane.as_str(), e.u1, e.u2, e.weight)?;
    }
    Ok(())
}

fn parse_plane(s: &str) -> Option<Plane> {
    match s {
        "near" => Some(Plane::Near),
        "far" => Some(Plane::Far),
        _ => None,
    }
}

fn comment_fields(line: &str) -> impl Iterator<Item = (&str, &str)> {
    line.trim_start_matches('#')
        .split(',')
        .filter_map(|kv| kv.trim().split_once('='))
}

/// Reads an event file. Returns the batch and the seed from the preamble.
pub fn read_events(input: impl BufRead) -> Result<(EventBatch, Option<u64>), CliError> {
    let fmt = |line: usize, msg: &str| CliError::Usage(format!("event file line {line}: {msg}"));
    let mut seed = None;
    let mut screen = false;
    let (mut mass, mut t2) = (None, None);
    let mut header = false;
    let mut events = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        if line.starts_with('#') {
            for (key, value) in comment_fields(&line) {
                let num = || value.parse::<f64>().map_err(|_| fmt(lineno, &format!("bad {key}")));
                match key {
                    "seed" => seed = value.parse().ok(),
                    "far_coordinates" => screen = value == "screen",
                    "mass" => mass = Some(num()?),
                    "t2" => t2 = Some(num()?),
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !header {
            if line.trim() != HEADER {
                return Err(fmt(lineno, &format!("expected header `{HEADER}`")));
            }
            header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(fmt(lineno, "expected 4 fields"));
        }
        let plane = parse_plane(fields[0]).ok_or_else(|| fmt(lineno, "plane must be near or far"))?;
        let mut nums = [0.0; 3];
        for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
            *slot = f
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| fmt(lineno, "non-finite or malformed number"))?;
        }
        events.push(EventRecord {
            plane,
            u1: nums[0],
            u2: nums[1],
            weight: nums[2],
        });
    }
    if !header {
        return Err(CliError::Usage("event file has no header".into()));
    }
    let coordinates = if screen {
        Coordinates::Screen(match (mass, t2) {
            (Some(mass), Some(t2)) => Some(FarFieldGeometry { mass, t2 }),
            _ => None,
        })
    } else {
        Coordinates::Native
    };
    Ok((EventBatch { events, coordinates }, seed))
}
