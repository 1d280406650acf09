use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Dataset, Gender, RawInteraction};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Yields `(1-based line number, line)` for every non-blank line.
fn lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>>> {
    let reader = BufReader::new(File::open(path)?);
    Ok(reader.split(b'\n').enumerate().filter_map(|(idx, bytes)| match bytes {
        Err(e) => Some(Err(Error::Io(e))),
        Ok(bytes) => {
            // ML1M ships latin-1 in some files; decode leniently.
            let text = String::from_utf8_lossy(&bytes).trim_end_matches('\r').to_string();
            if text.trim().is_empty() {
                None
            } else {
                Some(Ok((idx + 1, text)))
            }
        }
    }))
}

fn parse_timestamp(path: &Path, line: usize, field: &str) -> Result<f64> {
    let ts: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid timestamp {field:?}")))?;
    if !ts.is_finite() || ts < 0.0 {
        return Err(parse_err(
            path,
            line,
            format!("timestamp {field:?} must be finite and non-negative"),
        ));
    }
    Ok(ts)
}

/// Read MovieLens-1M `ratings.dat` and `users.dat`.
///
/// Every rating becomes one implicit interaction regardless of its value.
pub fn ingest_ml1m(ratings_path: &Path, users_path: &Path) -> Result<Dataset> {
    let mut records = Vec::new();
    for entry in lines(ratings_path)? {
        let (line, text) = entry?;
        let fields: Vec<&str> = text.split("::").collect();
        if fields.len() != 4 {
            return Err(parse_err(
                ratings_path,
                line,
                format!("expected UserID::MovieID::Rating::Timestamp, got {} fields", fields.len()),
            ));
        }
        if fields[2].trim().parse::<f64>().is_err() {
            return Err(parse_err(ratings_path, line, format!("invalid rating {:?}", fields[2])));
        }
        records.push(RawInteraction {
            user: fields[0].trim().to_string(),
            item: fields[1].trim().to_string(),
            timestamp: parse_timestamp(ratings_path, line, fields[3])?,
        });
    }
    if records.is_empty() {
        return Dataset::from_records(records, &HashMap::new());
    }

    let mut genders = HashMap::new();
    for entry in lines(users_path)? {
        let (line, text) = entry?;
        let fields: Vec<&str> = text.split("::").collect();
        if fields.len() != 5 {
            return Err(parse_err(
                users_path,
                line,
                format!("expected UserID::Gender::Age::Occupation::Zip, got {} fields", fields.len()),
            ));
        }
        let user = fields[0].trim().to_string();
        let gender = Gender::parse(fields[1]).ok_or_else(|| Error::InvalidGender {
            user: user.clone(),
            value: fields[1].to_string(),
        })?;
        genders.insert(user, gender);
    }
    Dataset::from_records(records, &genders)
}

/// Read the canonical TSV pair: `user \t item \t timestamp` and `user \t gender`.
pub fn ingest_canonical(interactions_path: &Path, users_path: &Path) -> Result<Dataset> {
    let mut records = Vec::new();
    for entry in lines(interactions_path)? {
        let (line, text) = entry?;
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                interactions_path,
                line,
                format!("expected user_id<TAB>item_id<TAB>timestamp, got {} fields", fields.len()),
            ));
        }
        records.push(RawInteraction {
            user: fields[0].trim().to_string(),
            item: fields[1].trim().to_string(),
            timestamp: parse_timestamp(interactions_path, line, fields[2])?,
        });
    }
    if records.is_empty() {
        return Dataset::from_records(records, &HashMap::new());
    }

    let mut genders = HashMap::new();
    for entry in lines(users_path)? {
        let (line, text) = entry?;
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(
                users_path,
                line,
                format!("expected user_id<TAB>gender, got {} fields", fields.len()),
            ));
        }
        let user = fields[0].trim().to_string();
        let gender = Gender::parse(fields[1]).ok_or_else(|| Error::InvalidGender {
            user: user.clone(),
            value: fields[1].to_string(),
        })?;
        genders.insert(user, gender);
    }
    Dataset::from_records(records, &genders)
}

/// Write a dataset as the canonical TSV pair read by [`ingest_canonical`].
pub fn write_canonical(d: &Dataset, interactions_path: &Path, users_path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(interactions_path)?);
    for it in &d.interactions {
        writeln!(
            out,
            "{}\t{}\t{}",
            d.users[it.user as usize], d.items[it.item as usize], it.timestamp
        )?;
    }
    out.flush()?;
    let mut out = BufWriter::new(File::create(users_path)?);
    for (user, gender) in d.users.iter().zip(&d.gender) {
        writeln!(out, "{user}\t{gender}")?;
    }
    out.flush()?;
    Ok(())
}
