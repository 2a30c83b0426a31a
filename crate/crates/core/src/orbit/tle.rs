//! Two-line element sets in the fixed-column NORAD format.
//!
//! Parsing decodes every field, including the implied-decimal ones
//! (eccentricity, second derivative of mean motion, B*). [`TwoLineElement::to_lines`]
//! re-emits the canonical column layout, so a canonical input survives a
//! parse/serialize cycle byte for byte.

use std::fmt;

use chrono::{DateTime, Datelike, Duration, Utc};
use thiserror::Error;

use super::time::year_start;

pub const LINE_LENGTH: usize = 69;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TleError {
    #[error("line {line}: expected {LINE_LENGTH} characters, found {len}")]
    WrongLineLength { line: u8, len: usize },
    #[error("line {line}: checksum mismatch, expected digit {expected}, found '{found}'")]
    ChecksumMismatch { line: u8, expected: u8, found: char },
    #[error("line {line}: malformed field in columns {start}-{end}: {text:?}")]
    MalformedField {
        line: u8,
        start: usize,
        end: usize,
        text: String,
    },
    #[error("satellite numbers differ between lines ({first} vs {second})")]
    SatelliteMismatch { first: u32, second: u32 },
    #[error("invalid element: {0}")]
    InvalidElement(&'static str),
    #[error("incomplete element set: {0}")]
    Incomplete(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLineElement {
    pub name: Option<String>,
    pub satellite_number: u32,
    pub classification: char,
    /// Launch year, number and piece, columns 10–17 with trailing blanks removed.
    pub international_designator: String,
    pub epoch: DateTime<Utc>,
    /// First derivative of mean motion divided by two, rev/day².
    pub mean_motion_dot: f64,
    /// Second derivative of mean motion divided by six, rev/day³.
    pub mean_motion_ddot: f64,
    /// Drag term, 1/earth radii.
    pub bstar: f64,
    pub ephemeris_type: u8,
    pub element_set_number: u32,
    /// Degrees.
    pub inclination: f64,
    /// Right ascension of the ascending node, degrees.
    pub raan: f64,
    pub eccentricity: f64,
    /// Argument of perigee, degrees.
    pub arg_perigee: f64,
    /// Degrees.
    pub mean_anomaly: f64,
    /// Revolutions per day.
    pub mean_motion: f64,
    pub revolution_number: u32,
    pub line_checksums: [u8; 2],
}

/// Modulo-10 checksum over the first 68 columns: digits count their value, '-' counts one.
pub fn checksum(line: &str) -> u8 {
    let sum: u32 = line
        .bytes()
        .take(LINE_LENGTH - 1)
        .map(|b| match b {
            b'0'..=b'9' => u32::from(b - b'0'),
            b'-' => 1,
            _ => 0,
        })
        .sum();
    (sum % 10) as u8
}

struct Line<'a> {
    number: u8,
    text: &'a str,
}

impl<'a> Line<'a> {
    fn new(number: u8, raw: &'a str) -> Result<Self, TleError> {
        let text = raw.trim();
        if text.len() != LINE_LENGTH || !text.is_ascii() {
            return Err(TleError::WrongLineLength {
                line: number,
                len: text.chars().count(),
            });
        }
        let found = text.as_bytes()[LINE_LENGTH - 1] as char;
        let expected = checksum(text);
        if found.to_digit(10) != Some(u32::from(expected)) {
            return Err(TleError::ChecksumMismatch {
                line: number,
                expected,
                found,
            });
        }
        Ok(Self { number, text })
    }

    /// Columns are 1-based and inclusive, as in the format description.
    fn field(&self, start: usize, end: usize) -> &'a str {
        &self.text[start - 1..end]
    }

    fn malformed(&self, start: usize, end: usize) -> TleError {
        TleError::MalformedField {
            line: self.number,
            start,
            end,
            text: self.field(start, end).to_owned(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, start: usize, end: usize) -> Result<T, TleError> {
        self.field(start, end)
            .trim()
            .parse()
            .map_err(|_| self.malformed(start, end))
    }

    fn char_at(&self, col: usize) -> char {
        self.text.as_bytes()[col - 1] as char
    }

    /// Fields such as `" 28098-4"`: sign, five mantissa digits with an implied
    /// leading decimal point, and a signed single-digit exponent.
    fn implied_decimal(&self, start: usize, end: usize) -> Result<f64, TleError> {
        let raw = self.field(start, end);
        let bytes = raw.as_bytes();
        let err = || self.malformed(start, end);
        if bytes.len() != 8 {
            return Err(err());
        }
        let sign = match bytes[0] {
            b' ' | b'+' => "",
            b'-' => "-",
            _ => return Err(err()),
        };
        let mantissa = &raw[1..6];
        let exp_sign = match bytes[6] {
            b'-' => "-",
            b'+' | b' ' => "",
            _ => return Err(err()),
        };
        let exp = &raw[7..8];
        let mantissa = mantissa.replace(' ', "0");
        if !mantissa.bytes().all(|b| b.is_ascii_digit()) || !exp.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(err());
        }
        format!("{sign}0.{mantissa}e{exp_sign}{exp}")
            .parse()
            .map_err(|_| err())
    }
}

impl TwoLineElement {
    /// Parses two element lines, optionally preceded by a name line.
    pub fn parse(text: &str) -> Result<Self, TleError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        match lines.as_slice() {
            [l1, l2] => Self::from_lines(None, l1, l2),
            [name, l1, l2] => Self::from_lines(Some(name), l1, l2),
            _ => Err(TleError::Incomplete(format!(
                "expected 2 or 3 non-empty lines, found {}",
                lines.len()
            ))),
        }
    }

    pub fn from_lines(name: Option<&str>, line1: &str, line2: &str) -> Result<Self, TleError> {
        let l1 = Line::new(1, line1)?;
        let l2 = Line::new(2, line2)?;
        if l1.char_at(1) != '1' {
            return Err(l1.malformed(1, 1));
        }
        if l2.char_at(1) != '2' {
            return Err(l2.malformed(1, 1));
        }

        let satellite_number: u32 = l1.parse(3, 7)?;
        let second_number: u32 = l2.parse(3, 7)?;
        if satellite_number != second_number {
            return Err(TleError::SatelliteMismatch {
                first: satellite_number,
                second: second_number,
            });
        }

        let epoch = parse_epoch(&l1)?;
        let mean_motion_dot: f64 = l1.parse(34, 43)?;
        let mean_motion_ddot = l1.implied_decimal(45, 52)?;
        let bstar = l1.implied_decimal(54, 61)?;
        let ephemeris_type = match l1.char_at(63) {
            ' ' => 0,
            c => c.to_digit(10).ok_or_else(|| l1.malformed(63, 63))? as u8,
        };
        let element_set_number: u32 = l1.parse(65, 68)?;

        let inclination: f64 = l2.parse(9, 16)?;
        let raan: f64 = l2.parse(18, 25)?;
        let ecc_digits = l2.field(27, 33);
        if !ecc_digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(l2.malformed(27, 33));
        }
        let eccentricity: f64 = format!("0.{ecc_digits}")
            .parse()
            .map_err(|_| l2.malformed(27, 33))?;
        let arg_perigee: f64 = l2.parse(35, 42)?;
        let mean_anomaly: f64 = l2.parse(44, 51)?;
        let mean_motion: f64 = l2.parse(53, 63)?;
        let revolution_number: u32 = l2.parse(64, 68)?;

        if mean_motion <= 0.0 {
            return Err(TleError::InvalidElement("mean motion must be positive"));
        }
        if !(0.0..=180.0).contains(&inclination) {
            return Err(TleError::InvalidElement("inclination outside [0, 180] degrees"));
        }

        let name = name
            .map(|n| n.trim())
            .map(|n| n.strip_prefix("0 ").unwrap_or(n).trim().to_owned())
            .filter(|n| !n.is_empty());

        Ok(Self {
            name,
            satellite_number,
            classification: l1.char_at(8),
            international_designator: l1.field(10, 17).trim_end().to_owned(),
            epoch,
            mean_motion_dot,
            mean_motion_ddot,
            bstar,
            ephemeris_type,
            element_set_number,
            inclination,
            raan,
            eccentricity,
            arg_perigee,
            mean_anomaly,
            mean_motion,
            revolution_number,
            line_checksums: [checksum(l1.text), checksum(l2.text)],
        })
    }

    /// Canonical fixed-column rendering with freshly computed checksums.
    pub fn to_lines(&self) -> [String; 2] {
        let (year, day) = epoch_fields(self.epoch);
        let mut l1 = format!(
            "1 {:05}{} {:<8} {:02}{} {} {} {} {} {:>4}",
            self.satellite_number,
            self.classification,
            self.international_designator,
            year,
            day,
            format_first_derivative(self.mean_motion_dot),
            format_implied_decimal(self.mean_motion_ddot),
            format_implied_decimal(self.bstar),
            self.ephemeris_type,
            self.element_set_number % 10_000,
        );
        l1.push(char::from(b'0' + checksum(&l1)));

        let mut l2 = format!(
            "2 {:05} {:>8.4} {:>8.4} {:07} {:>8.4} {:>8.4} {:>11.8}{:>5}",
            self.satellite_number,
            self.inclination,
            self.raan,
            (self.eccentricity * 1e7).round() as u64,
            self.arg_perigee,
            self.mean_anomaly,
            self.mean_motion,
            self.revolution_number % 100_000,
        );
        l2.push(char::from(b'0' + checksum(&l2)));
        [l1, l2]
    }

    /// Orbital period from the mean motion, minutes.
    pub fn period_minutes(&self) -> f64 {
        1440.0 / self.mean_motion
    }
}

impl fmt::Display for TwoLineElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(name) = &self.name {
            writeln!(f, "{name}")?;
        }
        let [l1, l2] = self.to_lines();
        writeln!(f, "{l1}")?;
        write!(f, "{l2}")
    }
}

/// Parses a TLE file holding any number of 2-line or 3-line element sets.
pub fn parse_tle_file(text: &str) -> Result<Vec<TwoLineElement>, TleError> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let is_line = |s: &str, n: char| {
            let t = s.trim_start();
            t.starts_with(n) && t.chars().nth(1) == Some(' ')
        };
        if is_line(lines[i], '1') {
            let l2 = lines
                .get(i + 1)
                .ok_or_else(|| TleError::Incomplete("line 1 without line 2".into()))?;
            out.push(TwoLineElement::from_lines(None, lines[i], l2)?);
            i += 2;
        } else {
            let (l1, l2) = match (lines.get(i + 1), lines.get(i + 2)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(TleError::Incomplete(format!(
                        "name line {:?} without two element lines",
                        lines[i].trim()
                    )))
                }
            };
            out.push(TwoLineElement::from_lines(Some(lines[i]), l1, l2)?);
            i += 3;
        }
    }
    if out.is_empty() {
        return Err(TleError::Incomplete("no element sets found".into()));
    }
    Ok(out)
}

const NANOS_PER_DAY_UNIT: i64 = 864_000; // 1e-8 day

fn parse_epoch(l1: &Line<'_>) -> Result<DateTime<Utc>, TleError> {
    let yy: i32 = l1.parse(19, 20)?;
    let year = if yy < 57 { 2000 + yy } else { 1900 + yy };
    let day_field = l1.field(21, 32).trim();
    let (whole, frac) = day_field
        .split_once('.')
        .unwrap_or((day_field, ""));
    let day: i64 = whole.trim().parse().map_err(|_| l1.malformed(21, 32))?;
    if !(1..=366).contains(&day) || frac.len() > 8 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(l1.malformed(21, 32));
    }
    // Exact decimal → nanoseconds: the fraction has at most 8 digits of a day.
    let mut units: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| l1.malformed(21, 32))? };
    for _ in frac.len()..8 {
        units *= 10;
    }
    Ok(year_start(year)
        + Duration::days(day - 1)
        + Duration::nanoseconds(units * NANOS_PER_DAY_UNIT))
}

fn epoch_fields(epoch: DateTime<Utc>) -> (i32, String) {
    let year = epoch.year();
    let since = epoch - year_start(year);
    let nanos = since.num_nanoseconds().unwrap_or(0);
    let total_units = (nanos as f64 / NANOS_PER_DAY_UNIT as f64).round() as i64;
    let day = total_units / 100_000_000 + 1;
    let frac = total_units % 100_000_000;
    (year.rem_euclid(100), format!("{day:03}.{frac:08}"))
}

fn format_first_derivative(v: f64) -> String {
    let sign = if v < 0.0 { '-' } else { ' ' };
    let digits = format!("{:.8}", v.abs().min(0.999_999_99));
    format!("{sign}{}", digits.trim_start_matches('0'))
}

fn format_implied_decimal(v: f64) -> String {
    if v == 0.0 {
        return " 00000-0".to_owned();
    }
    let sign = if v < 0.0 { '-' } else { ' ' };
    let a = v.abs();
    let mut exp = a.log10().floor() as i32 + 1;
    let mut mantissa = (a / 10f64.powi(exp) * 1e5).round() as i64;
    if mantissa >= 100_000 {
        mantissa /= 10;
        exp += 1;
    }
    let exp_sign = if exp > 0 { '+' } else { '-' };
    format!("{sign}{mantissa:05}{exp_sign}{}", exp.abs())
}
