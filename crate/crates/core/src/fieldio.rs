//! Plain-text field files.
//!
//! ```text
//! m k n_1 ... n_m L_1 ... L_m
//! re im re im ...        <- one row per grid point, C(m, k) pairs
//! ```
//!
//! Rows follow row-major grid order (last axis fastest). Numbers are written
//! with Rust's shortest round-trip formatting, so a write/read cycle
//! reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exterior::binomial;
use crate::grid::{GridSpec, Representation, ScalarField, VectorField};
use crate::operator::FormField;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} {tok:?}")))
}

pub fn read_field<R: BufRead>(reader: R) -> Result<FormField> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = loop {
        match lines.next() {
            Some((n, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break (n, l);
                }
            }
            None => return Err(parse_err(1, "missing header")),
        }
    };
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() < 2 {
        return Err(parse_err(hline, "header needs m and k"));
    }
    let m: usize = parse_num(toks[0], hline, "dimension m")?;
    let k: usize = parse_num(toks[1], hline, "degree k")?;
    if m == 0 || k > m {
        return Err(parse_err(hline, format!("invalid (m, k) = ({m}, {k})")));
    }
    if toks.len() != 2 + 2 * m {
        return Err(parse_err(
            hline,
            format!("header for m = {m} needs {} fields, found {}", 2 + 2 * m, toks.len()),
        ));
    }
    let sizes = toks[2..2 + m]
        .iter()
        .map(|t| parse_num(t, hline, "grid size"))
        .collect::<Result<Vec<usize>>>()?;
    let lengths = toks[2 + m..]
        .iter()
        .map(|t| parse_num(t, hline, "box length"))
        .collect::<Result<Vec<f64>>>()?;
    let spec = GridSpec::new(sizes, lengths).map_err(|e| parse_err(hline, e.to_string()))?;

    let dim = binomial(m, k);
    let mut channels = vec![Vec::with_capacity(spec.len()); dim];
    let mut last = hline;
    for (n, l) in lines {
        let l = l?;
        last = n;
        if l.trim().is_empty() {
            continue;
        }
        if channels[0].len() == spec.len() {
            return Err(parse_err(n, format!("more than {} data rows", spec.len())));
        }
        let nums = l
            .split_whitespace()
            .map(|t| parse_num::<f64>(t, n, "number"))
            .collect::<Result<Vec<f64>>>()?;
        if nums.len() != 2 * dim {
            return Err(parse_err(
                n,
                format!("expected {} numbers (re/im for {dim} components), found {}", 2 * dim, nums.len()),
            ));
        }
        for (c, pair) in channels.iter_mut().zip(nums.chunks(2)) {
            c.push(Complex64::new(pair[0], pair[1]));
        }
    }
    if channels[0].len() != spec.len() {
        return Err(parse_err(
            last + 1,
            format!("expected {} data rows, found {}", spec.len(), channels[0].len()),
        ));
    }
    let fields = channels
        .into_iter()
        .map(|v| ScalarField::from_values(&spec, v, Representation::Spatial))
        .collect::<Result<Vec<_>>>()?;
    FormField::new(k, VectorField::new(fields)?)
}

pub fn write_field<W: Write>(mut writer: W, field: &FormField) -> Result<()> {
    let spec = field.spec();
    let mut header = format!("{} {}", field.m(), field.k());
    for n in spec.sizes() {
        write!(header, " {n}").unwrap();
    }
    for l in spec.box_length() {
        write!(header, " {l}").unwrap();
    }
    writeln!(writer, "{header}")?;
    let spatial = field.field().to_spatial();
    let mut row = String::new();
    for x in 0..spec.len() {
        row.clear();
        for (i, c) in spatial.channels().iter().enumerate() {
            let v = c.values()[x];
            if i > 0 {
                row.push(' ');
            }
            write!(row, "{} {}", v.re, v.im).unwrap();
        }
        writeln!(writer, "{row}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_field_file(path: &Path) -> Result<FormField> {
    read_field(BufReader::new(fs::File::open(path)?))
}

pub fn write_field_file(path: &Path, field: &FormField) -> Result<()> {
    write_field(std::io::BufWriter::new(fs::File::create(path)?), field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::random_band_limited_vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> FormField {
        let g = GridSpec::new(vec![4, 8], vec![1.5, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        FormField::new(1, random_band_limited_vector(&g, 2, &mut rng)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let back = read_field(&buf[..]).unwrap();
        assert_eq!(back.k(), 1);
        assert_eq!(back.spec(), f.spec());
        for (a, b) in back.field().channels().iter().zip(f.field().channels()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        let mut again = Vec::new();
        write_field(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    fn line_of(text: &str) -> usize {
        match read_field(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_line() {
        let mut rows = String::from("1 0 4 6.283185307179586\n");
        for _ in 0..4 {
            rows.push_str("0 0\n");
        }
        assert!(read_field(rows.as_bytes()).is_ok());
        assert_eq!(line_of(&rows.replacen("0 0\n0 0\n", "0 0\n0 x\n", 1)), 3);
        assert_eq!(line_of(&rows.replacen("0 0\n", "0 0 0\n", 1)), 2);
        assert_eq!(line_of("1 0 4\n"), 1);
        assert_eq!(line_of("1 2 4 1.0\n"), 1);
        assert_eq!(line_of("1 0 3 1.0\n0 0\n0 0\n0 0\n"), 1);
        assert_eq!(line_of("1 0 4 1.0\n0 0\n0 0\n"), 4);
        let extra = format!("{rows}0 0\n");
        assert_eq!(line_of(&extra), 6);
        assert_eq!(line_of(""), 1);
    }
}
