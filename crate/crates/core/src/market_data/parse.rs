//! Delimited quote-file I/O and the Deribit instrument-name parser.
//!
//! Quote files are comma separated with the header
//! `timestamp,instrument,expiry,strike,kind,underlying_price,implied_vol`;
//! timestamps are ISO-8601 UTC. Lines starting with `#` are comments. An
//! empty expiry field is recovered from a Deribit-style instrument name
//! (e.g. `BTC-25MAR22-40000-C`, expiring 08:00 UTC).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};

use super::{OptionKind, OptionQuote};
use crate::error::{Error, Result};
use crate::stats::fmt_g12;

pub const QUOTE_HEADER: &str = "timestamp,instrument,expiry,strike,kind,underlying_price,implied_vol";

/// Expiry, strike and kind decoded from a Deribit instrument name.
#[derive(Debug, Clone, PartialEq)]
pub struct DeribitInstrument {
    pub underlying: String,
    pub expiry: DateTime<Utc>,
    pub strike: f64,
    pub kind: OptionKind,
}

/// Parse names like `BTC-25MAR22-40000-C`. Deribit options expire at
/// 08:00 UTC on the named day.
pub fn parse_deribit_instrument(name: &str) -> Result<DeribitInstrument> {
    let parts: Vec<&str> = name.split('-').collect();
    let err = |msg: &str| Error::InvalidArgument(format!("instrument `{name}`: {msg}"));
    if parts.len() != 4 {
        return Err(err("expected UNDERLYING-DDMMMYY-STRIKE-K"));
    }
    let date_part = parts[1];
    if date_part.len() < 6 || date_part.len() > 7 {
        return Err(err("bad expiry field"));
    }
    let (day_str, rest) = date_part.split_at(date_part.len() - 5);
    let (mon_str, year_str) = rest.split_at(3);
    let day: u32 = day_str.parse().map_err(|_| err("bad expiry day"))?;
    let month = match mon_str.to_ascii_uppercase().as_str() {
        "JAN" => 1,
        "FEB" => 2,
        "MAR" => 3,
        "APR" => 4,
        "MAY" => 5,
        "JUN" => 6,
        "JUL" => 7,
        "AUG" => 8,
        "SEP" => 9,
        "OCT" => 10,
        "NOV" => 11,
        "DEC" => 12,
        _ => return Err(err("bad expiry month")),
    };
    let year: i32 = 2000 + year_str.parse::<i32>().map_err(|_| err("bad expiry year"))?;
    let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(|| err("invalid date"))?;
    let expiry = Utc.from_utc_datetime(&date.and_hms_opt(8, 0, 0).expect("valid time"));
    let strike: f64 = parts[2].parse().map_err(|_| err("bad strike"))?;
    let kind = OptionKind::parse(parts[3]).ok_or_else(|| err("bad option kind"))?;
    Ok(DeribitInstrument {
        underlying: parts[0].to_string(),
        expiry,
        strike,
        kind,
    })
}

pub fn write_quote_file(path: &Path, quotes: &[OptionQuote], header_comment: Option<&str>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(h) = header_comment {
        writeln!(f, "# {h}")?;
    }
    writeln!(f, "{QUOTE_HEADER}")?;
    for q in quotes {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            q.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            q.instrument_id,
            q.expiry.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            fmt_g12(q.strike),
            q.option_kind.as_str(),
            fmt_g12(q.underlying_price),
            fmt_g12(q.implied_vol),
        )?;
    }
    Ok(())
}

pub fn read_quote_file(path: &Path) -> Result<Vec<OptionQuote>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut quotes = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed == QUOTE_HEADER {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let parse_ts = |s: &str, what: &str| -> Result<DateTime<Utc>> {
            DateTime::parse_from_rfc3339(s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("{what}: {e}"),
                })
        };
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("{what}: {e}"),
            })
        };
        let timestamp = parse_ts(fields[0], "timestamp")?;
        let instrument_id = fields[1].to_string();
        let derived = if fields[2].trim().is_empty() {
            Some(parse_deribit_instrument(&instrument_id).map_err(|e| Error::Parse {
                line: line_no,
                message: format!("expiry empty and {e}"),
            })?)
        } else {
            None
        };
        let expiry = match &derived {
            Some(d) => d.expiry,
            None => parse_ts(fields[2], "expiry")?,
        };
        let strike = if fields[3].trim().is_empty() {
            derived
                .as_ref()
                .map(|d| d.strike)
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: "strike empty without parsable instrument".into(),
                })?
        } else {
            parse_f(fields[3], "strike")?
        };
        let option_kind = if fields[4].trim().is_empty() {
            derived.as_ref().map(|d| d.kind).ok_or_else(|| Error::Parse {
                line: line_no,
                message: "kind empty without parsable instrument".into(),
            })?
        } else {
            OptionKind::parse(fields[4]).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("unknown option kind `{}`", fields[4]),
            })?
        };
        quotes.push(OptionQuote {
            timestamp,
            instrument_id,
            expiry,
            strike,
            option_kind,
            underlying_price: parse_f(fields[5], "underlying_price")?,
            implied_vol: parse_f(fields[6], "implied_vol")?,
        });
    }
    Ok(quotes)
}
