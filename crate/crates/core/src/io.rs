//! On-disk formats.
//!
//! * Field record: `b"MNPL1"`, `N` as `u32` LE, then `N²` `f64` LE row-major
//!   (`i` outer, `j` inner).
//! * Path file: `b"MNPL-PATH1"`, `N` and `M` as `u32` LE, `ε` as `f64` LE,
//!   then `M + 1` field records in `t` order.
//! * CSV exports for plotting: one grid row per line, and flow trajectories
//!   with columns `s,k_energy,calabi_energy,min_rho`.

use std::io::{self, Read, Write};

use crate::error::FormatError;
use crate::flow::FlowTrajectory;
use crate::geodesic::PathGrid;
use crate::grid::{Field, Grid};

pub const FIELD_MAGIC: &[u8; 5] = b"MNPL1";
pub const PATH_MAGIC: &[u8; 10] = b"MNPL-PATH1";

pub fn write_field<W: Write>(mut w: W, f: &Field) -> io::Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(f.grid().n() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_field<R: Read>(mut r: R) -> Result<Field, FormatError> {
    expect_magic(&mut r, FIELD_MAGIC, "MNPL1")?;
    let n = read_u32(&mut r)? as usize;
    let grid = Grid::new(n)?;
    let mut bytes = vec![0u8; 8 * grid.len()];
    read_exact(&mut r, &mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Field::from_values(grid, values)?)
}

pub fn field_to_bytes(f: &Field) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 8 * f.values().len());
    write_field(&mut out, f).expect("writing to a Vec cannot fail");
    out
}

/// Parses exactly one field record; trailing bytes are an error.
pub fn field_from_bytes(bytes: &[u8]) -> Result<Field, FormatError> {
    let mut r = bytes;
    let f = read_field(&mut r)?;
    if !r.is_empty() {
        return Err(FormatError::Invalid(format!("{} trailing bytes", r.len())));
    }
    Ok(f)
}

/// One line per `i`, values for `j = 0..N` separated by commas.
pub fn write_field_csv<W: Write>(mut w: W, f: &Field) -> io::Result<()> {
    let n = f.grid().n();
    for row in f.values().chunks(n) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_field_csv<R: Read>(mut r: R) -> Result<Field, FormatError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut values = Vec::new();
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        rows += 1;
        for cell in line.split(',') {
            let v = cell
                .trim()
                .parse::<f64>()
                .map_err(|e| FormatError::Invalid(format!("row {rows}: {e}")))?;
            values.push(v);
        }
    }
    if values.len() != rows * rows {
        return Err(FormatError::Invalid(format!("{} values in {rows} rows", values.len())));
    }
    Ok(Field::from_values(Grid::new(rows)?, values)?)
}

pub fn write_path<W: Write>(mut w: W, p: &PathGrid) -> io::Result<()> {
    w.write_all(PATH_MAGIC)?;
    w.write_all(&(p.grid().n() as u32).to_le_bytes())?;
    w.write_all(&(p.steps() as u32).to_le_bytes())?;
    w.write_all(&p.eps().to_le_bytes())?;
    for s in p.slices() {
        write_field(&mut w, s)?;
    }
    Ok(())
}

pub fn read_path<R: Read>(mut r: R) -> Result<PathGrid, FormatError> {
    expect_magic(&mut r, PATH_MAGIC, "MNPL-PATH1")?;
    let n = read_u32(&mut r)? as usize;
    let m = read_u32(&mut r)? as usize;
    let mut eps = [0u8; 8];
    read_exact(&mut r, &mut eps)?;
    let eps = f64::from_le_bytes(eps);
    let mut slices = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let f = read_field(&mut r)?;
        if f.grid().n() != n {
            return Err(FormatError::Invalid(format!(
                "slice {k} has N = {}, header says {n}",
                f.grid().n()
            )));
        }
        slices.push(f);
    }
    PathGrid::new(slices, eps).map_err(|e| FormatError::Invalid(e.to_string()))
}

/// Header plus one row per recorded step, every `sample_every`-th step
/// (the last step is always included).
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &FlowTrajectory, sample_every: usize) -> io::Result<()> {
    writeln!(w, "s,k_energy,calabi_energy,min_rho")?;
    for k in sampled_steps(traj.times.len(), sample_every) {
        writeln!(
            w,
            "{},{},{},{}",
            traj.times[k], traj.k_energy[k], traj.calabi_energy[k], traj.min_rho[k]
        )?;
    }
    Ok(())
}

/// Indices `0, every, 2·every, …` plus the final index.
pub fn sampled_steps(len: usize, every: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..len).step_by(every.max(1)).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    idx
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8], name: &'static str) -> Result<(), FormatError> {
    let mut buf = vec![0u8; magic.len()];
    read_exact(r, &mut buf)?;
    if buf != magic {
        return Err(FormatError::Magic { expected: name });
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, FormatError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), FormatError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::Truncated,
        _ => FormatError::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_layout_is_byte_exact() {
        let g = Grid::new(8).unwrap();
        let f = Field::from_fn(g, |x, y| x + 10.0 * y);
        let bytes = field_to_bytes(&f);
        assert_eq!(bytes.len(), 5 + 4 + 8 * 64);
        assert_eq!(&bytes[..5], b"MNPL1");
        assert_eq!(&bytes[5..9], &[8, 0, 0, 0]);
        // (i, j) = (0, 1) is the second value: x = 0, y = 1/8
        assert_eq!(f64::from_le_bytes(bytes[17..25].try_into().unwrap()), 1.25);
        assert_eq!(field_from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn malformed_records_are_rejected() {
        let f = Field::zeros(Grid::new(8).unwrap());
        let bytes = field_to_bytes(&f);
        assert!(matches!(field_from_bytes(&bytes[..20]), Err(FormatError::Truncated)));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(field_from_bytes(&bad), Err(FormatError::Magic { .. })));
        let mut odd = bytes.clone();
        odd[5] = 7;
        assert!(matches!(field_from_bytes(&odd), Err(FormatError::Grid(_))));
        let mut long = bytes;
        long.push(0);
        assert!(field_from_bytes(&long).is_err());
    }

    #[test]
    fn sampling_keeps_the_last_step() {
        assert_eq!(sampled_steps(11, 5), vec![0, 5, 10]);
        assert_eq!(sampled_steps(12, 5), vec![0, 5, 10, 11]);
        assert_eq!(sampled_steps(1, 3), vec![0]);
    }
}
