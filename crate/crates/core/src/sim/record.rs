use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::sim::config::Mode;

/// Column order of the results CSV.
pub const CSV_HEADER: [&str; 10] = [
    "mode",
    "velocity_kmh",
    "ebn0_db",
    "iteration",
    "frames",
    "bits_total",
    "bit_errors",
    "ber",
    "frame_errors",
    "fer",
];

/// Aggregated error counts for one curve point and iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct BerRecord {
    pub mode: Mode,
    pub velocity_kmh: f64,
    pub ebn0_db: f64,
    pub iteration: usize,
    pub frames: u64,
    pub bits_total: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
}

impl BerRecord {
    pub fn ber(&self) -> f64 {
        if self.bits_total == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits_total as f64
        }
    }

    pub fn fer(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.frame_errors as f64 / self.frames as f64
        }
    }

    fn fields(&self) -> [String; 10] {
        [
            self.mode.to_string(),
            format_sig6(self.velocity_kmh),
            format_sig6(self.ebn0_db),
            self.iteration.to_string(),
            self.frames.to_string(),
            self.bits_total.to_string(),
            self.bit_errors.to_string(),
            format_sig6(self.ber()),
            self.frame_errors.to_string(),
            format_sig6(self.fer()),
        ]
    }
}

/// Formats with six significant digits, `%g` style: plain notation for
/// decimal exponents in `[-4, 6)`, scientific otherwise, trailing zeros
/// removed.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Writes records with a header row.
pub fn write_csv<W: Write>(writer: W, records: &[BerRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()
}

pub fn to_csv_string(records: &[BerRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Reads a results CSV. Rates are recomputed from the counts.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<BerRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r
        .headers()
        .map_err(|e| Error::InvalidArgument(format!("results CSV: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::InvalidArgument(format!(
            "results CSV header mismatch: expected {}",
            CSV_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| Error::InvalidArgument(format!("results CSV: {e}")))?;
        let bad = |col: &str| Error::InvalidArgument(format!("results CSV row {}: bad {col}", i + 1));
        let num = |idx: usize, col: &str| -> Result<u64> { row[idx].parse().map_err(|_| bad(col)) };
        let float = |idx: usize, col: &str| -> Result<f64> { row[idx].parse().map_err(|_| bad(col)) };
        out.push(BerRecord {
            mode: row[0].parse()?,
            velocity_kmh: float(1, "velocity_kmh")?,
            ebn0_db: float(2, "ebn0_db")?,
            iteration: num(3, "iteration")? as usize,
            frames: num(4, "frames")?,
            bits_total: num(5, "bits_total")?,
            bit_errors: num(6, "bit_errors")?,
            frame_errors: num(8, "frame_errors")?,
        });
    }
    Ok(out)
}

/// Gnuplot data blocks: one block per (mode, velocity, iteration) holding
/// `ebn0_db ber fer` rows, blocks separated by two blank lines.
pub fn write_gnuplot<W: Write>(mut w: W, records: &[BerRecord]) -> std::io::Result<()> {
    let mut keys: Vec<(Mode, String, usize)> = Vec::new();
    for r in records {
        let key = (r.mode, format_sig6(r.velocity_kmh), r.iteration);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (b, (mode, velocity, iteration)) in keys.iter().enumerate() {
        if b > 0 {
            writeln!(w, "\n")?;
        }
        writeln!(w, "# {mode} v={velocity} km/h iteration={iteration}")?;
        writeln!(w, "# ebn0_db ber fer")?;
        for r in records.iter().filter(|r| {
            r.mode == *mode && format_sig6(r.velocity_kmh) == *velocity && r.iteration == *iteration
        }) {
            writeln!(w, "{} {} {}", format_sig6(r.ebn0_db), format_sig6(r.ber()), format_sig6(r.fer()))?;
        }
    }
    Ok(())
}
